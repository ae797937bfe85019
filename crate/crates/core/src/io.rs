//! File formats: logit CSV, binary PGM (P5) masks and PPM (P6) images.
//!
//! Logit CSV layout: header `id,split,label,logit_0,...,logit_{C-1}`, one
//! sample per row, empty `label` for unlabeled or OOD rows. Feature files for
//! the tiny classifier use the same layout with an `x_` column prefix.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::data_model::{BinaryMask, LogitRecord, RgbImage, Split};
use crate::error::{Error, Result};

pub const LOGIT_PREFIX: &str = "logit_";
pub const FEATURE_PREFIX: &str = "x_";

pub fn read_logit_csv(path: impl AsRef<Path>) -> Result<Vec<LogitRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_vector_csv(file, LOGIT_PREFIX)
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<LogitRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_vector_csv(file, FEATURE_PREFIX)
}

pub fn write_logit_csv(path: impl AsRef<Path>, records: &[LogitRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_vector_csv(&mut file, records, LOGIT_PREFIX).map_err(|e| Error::io(path, e))
}

pub fn write_feature_csv(path: impl AsRef<Path>, records: &[LogitRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_vector_csv(&mut file, records, FEATURE_PREFIX).map_err(|e| Error::io(path, e))
}

/// Parses the `id,split,label,<prefix>0,...` layout. The vector width is taken
/// from the header. For logits the width is the class count and labels are
/// checked against it; feature labels only need to be non-negative.
pub fn parse_vector_csv<R: Read>(reader: R, prefix: &str) -> Result<Vec<LogitRecord>> {
    parse_rows(reader, prefix, prefix == LOGIT_PREFIX)
}

fn parse_rows<R: Read>(reader: R, prefix: &str, labels_index_columns: bool) -> Result<Vec<LogitRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(Error::MalformedHeader(e.to_string())),
        None => return Err(Error::EmptyInput),
    };
    let width = check_header(&header, prefix)?;
    let mut out = Vec::new();
    for (i, row) in rows.enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::MalformedRow {
            row: row_no,
            message: e.to_string(),
        })?;
        if row.len() != width + 3 {
            return Err(Error::InconsistentWidth {
                row: row_no,
                expected: width + 3,
                found: row.len(),
            });
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(Error::MalformedRow { row: row_no, message: "empty id".into() });
        }
        let split: Split = row[1].parse().map_err(|_| Error::MalformedRow {
            row: row_no,
            message: format!("unknown split {:?}", &row[1]),
        })?;
        let label = match &row[2] {
            "" => None,
            s => {
                let v: i64 = s.parse().map_err(|_| Error::MalformedRow {
                    row: row_no,
                    message: format!("label {s:?} is not an integer"),
                })?;
                if v < 0 || (labels_index_columns && v as usize >= width) {
                    return Err(Error::BadLabelIndex { row: row_no, label: v, classes: width });
                }
                Some(v as usize)
            }
        };
        if split == Split::Ood && label.is_some() {
            return Err(Error::MalformedRow {
                row: row_no,
                message: "ood rows must not carry a label".into(),
            });
        }
        let mut values = Vec::with_capacity(width);
        for field in row.iter().skip(3) {
            let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
                row: row_no,
                message: format!("value {field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteLogit { row: row_no });
            }
            values.push(v);
        }
        out.push(LogitRecord { id, split, label, logits: values });
    }
    Ok(out)
}

fn check_header(header: &csv::StringRecord, prefix: &str) -> Result<usize> {
    if header.len() < 4 || &header[0] != "id" || &header[1] != "split" || &header[2] != "label" {
        return Err(Error::MalformedHeader(format!(
            "expected `id,split,label,{prefix}0,...`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    for (k, name) in header.iter().skip(3).enumerate() {
        if name != format!("{prefix}{k}") {
            return Err(Error::MalformedHeader(format!("column {} should be {prefix}{k}, found {name:?}", k + 3)));
        }
    }
    Ok(header.len() - 3)
}

pub fn write_vector_csv<W: Write>(w: &mut W, records: &[LogitRecord], prefix: &str) -> std::io::Result<()> {
    let width = records.first().map_or(0, |r| r.logits.len());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "split".into(), "label".into()];
    header.extend((0..width).map(|k| format!("{prefix}{k}")));
    wtr.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.split.to_string(),
            r.label.map(|l| l.to_string()).unwrap_or_default(),
        ];
        row.extend(r.logits.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

struct Netpbm<'a> {
    width: usize,
    height: usize,
    payload: &'a [u8],
}

fn parse_netpbm<'a>(bytes: &'a [u8], magic: &str) -> Result<Netpbm<'a>> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::BadMagic(found));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader("expected a decimal header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader("header field out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedHeader("missing whitespace before payload".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval.min(u32::MAX as u64) as u32));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero image dimension".into()));
    }
    Ok(Netpbm {
        width: width as usize,
        height: height as usize,
        payload: &bytes[pos..],
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Pixels >= 128 are foreground.
pub fn decode_pgm(bytes: &[u8]) -> Result<BinaryMask> {
    let pbm = parse_netpbm(bytes, "P5")?;
    let n = pbm.width * pbm.height;
    if pbm.payload.len() < n {
        return Err(Error::TruncatedPayload { expected: n, found: pbm.payload.len() });
    }
    BinaryMask::new(pbm.width, pbm.height, pbm.payload[..n].iter().map(|&v| v >= 128).collect())
}

/// Grey levels copied to all three channels, for hashing.
pub fn decode_pgm_gray(bytes: &[u8]) -> Result<RgbImage> {
    let pbm = parse_netpbm(bytes, "P5")?;
    let n = pbm.width * pbm.height;
    if pbm.payload.len() < n {
        return Err(Error::TruncatedPayload { expected: n, found: pbm.payload.len() });
    }
    RgbImage::new(pbm.width, pbm.height, pbm.payload[..n].iter().flat_map(|&v| [v, v, v]).collect())
}

/// Reads a P6 colour image or a P5 grey image.
pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let bytes = read_bytes(path.as_ref())?;
    if bytes.starts_with(b"P5") {
        decode_pgm_gray(&bytes)
    } else {
        decode_ppm(&bytes)
    }
}

pub fn encode_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let pbm = parse_netpbm(bytes, "P6")?;
    let n = 3 * pbm.width * pbm.height;
    if pbm.payload.len() < n {
        return Err(Error::TruncatedPayload { expected: n, found: pbm.payload.len() });
    }
    RgbImage::new(pbm.width, pbm.height, pbm.payload[..n].to_vec())
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<BinaryMask> {
    decode_pgm(&read_bytes(path.as_ref())?)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    decode_ppm(&read_bytes(path.as_ref())?)
}

pub fn write_pgm(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}
