use std::f64::consts::PI;

use crate::data_model::RgbImage;

const SIDE: usize = 32;
const BLOCK: usize = 8;

/// Luma in thousandths: 299·R + 587·G + 114·B, exact in integers.
fn luma_milli(p: [u8; 3]) -> i64 {
    299 * p[0] as i64 + 587 * p[1] as i64 + 114 * p[2] as i64
}

/// Overlap weights of source samples with each of `dst` output cells when a
/// length-`src` axis is mapped onto `dst` cells. Units are chosen so that
/// every weight is an integer and each output cell's weights sum to `src`.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, i64)>> {
    (0..dst)
        .map(|j| {
            let (lo, hi) = (src * j, src * (j + 1));
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .filter_map(|i| {
                    let (a, b) = (dst * i, dst * (i + 1));
                    let overlap = hi.min(b) as i64 - lo.max(a) as i64;
                    (overlap > 0).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

/// Area-average resample of a single-channel integer plane. Output values are
/// scaled by `src_w · src_h` so the computation stays exact.
fn resize_plane_scaled(plane: &[i64], w: usize, h: usize, dw: usize, dh: usize) -> Vec<i64> {
    let wx = axis_weights(w, dw);
    let wy = axis_weights(h, dh);
    let mut rows = vec![0i64; h * dw];
    for y in 0..h {
        for (j, ws) in wx.iter().enumerate() {
            rows[y * dw + j] = ws.iter().map(|&(i, o)| o * plane[y * w + i]).sum();
        }
    }
    let mut out = vec![0i64; dh * dw];
    for (k, ws) in wy.iter().enumerate() {
        for j in 0..dw {
            out[k * dw + j] = ws.iter().map(|&(l, o)| o * rows[l * dw + j]).sum();
        }
    }
    out
}

/// Area-average resize to `dw × dh`, rounding each channel to the nearest
/// 8-bit value.
pub fn resize_area(img: &RgbImage, dw: usize, dh: usize) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let area = (w * h) as i64;
    let mut out = vec![0u8; 3 * dw * dh];
    for ch in 0..3 {
        let plane: Vec<i64> = img.pixels().iter().skip(ch).step_by(3).map(|&v| v as i64).collect();
        let scaled = resize_plane_scaled(&plane, w, h, dw, dh);
        for (i, v) in scaled.into_iter().enumerate() {
            out[3 * i + ch] = ((2 * v + area) / (2 * area)) as u8;
        }
    }
    RgbImage::new(dw, dh, out).expect("dimensions are consistent")
}

fn dct_rows() -> Vec<[f64; SIDE]> {
    (0..BLOCK)
        .map(|k| {
            let alpha = if k == 0 { (1.0 / SIDE as f64).sqrt() } else { (2.0 / SIDE as f64).sqrt() };
            let mut row = [0.0; SIDE];
            for (n, r) in row.iter_mut().enumerate() {
                *r = alpha * (PI * (2 * n + 1) as f64 * k as f64 / (2 * SIDE) as f64).cos();
            }
            row
        })
        .collect()
}

/// 64-bit DCT perceptual hash.
///
/// Pipeline: luma (0.299, 0.587, 0.114) → 32×32 area average → orthonormal
/// 2-D DCT-II → top-left 8×8 block without the DC term → bit per AC
/// coefficient, set when strictly greater than the median of the 63. Bits are
/// packed MSB-first in row-major block order; the lowest bit is always 0.
///
/// Luma and resampling run in exact integer arithmetic and the plane is
/// shifted by its first value before the transform, so a uniform brightness
/// offset yields a bit-identical DCT input and therefore the same hash.
pub fn phash64(img: &RgbImage) -> u64 {
    let (w, h) = (img.width(), img.height());
    let plane: Vec<i64> = img.iter().map(luma_milli).collect();
    let scaled = resize_plane_scaled(&plane, w, h, SIDE, SIDE);
    let origin = scaled[0];
    let centered: Vec<f64> = scaled.iter().map(|&v| (v - origin) as f64).collect();

    let c = dct_rows();
    // tmp = C · X  (8 × 32)
    let mut tmp = vec![[0.0f64; SIDE]; BLOCK];
    for (k, ck) in c.iter().enumerate() {
        for (y, &cy) in ck.iter().enumerate() {
            if cy == 0.0 {
                continue;
            }
            let row = &centered[y * SIDE..(y + 1) * SIDE];
            for (t, v) in tmp[k].iter_mut().zip(row) {
                *t += cy * v;
            }
        }
    }
    // coeff = tmp · Cᵀ  (8 × 8)
    let mut ac = Vec::with_capacity(BLOCK * BLOCK - 1);
    for trow in &tmp {
        for cl in &c {
            ac.push(trow.iter().zip(cl).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    ac.remove(0);
    let mut sorted = ac.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    ac.iter()
        .enumerate()
        .filter(|(_, &v)| v > median)
        .fold(0u64, |hash, (k, _)| hash | 1u64 << (63 - k))
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn noise_image(w: usize, h: usize, seed: u64, lo: u8, hi: u8) -> RgbImage {
        let mut r = rng::seeded(seed);
        RgbImage::from_fn(w, h, |_, _| [r.random_range(lo..=hi), r.random_range(lo..=hi), r.random_range(lo..=hi)])
    }

    #[test]
    fn axis_weights_sum_to_source_length() {
        for (src, dst) in [(32, 32), (100, 32), (7, 32), (33, 32), (64, 32)] {
            for ws in axis_weights(src, dst) {
                assert_eq!(ws.iter().map(|w| w.1).sum::<i64>(), src as i64);
            }
        }
    }

    #[test]
    fn identical_images_hash_equal() {
        let a = noise_image(50, 40, 1, 0, 255);
        assert_eq!(hamming(phash64(&a), phash64(&a.clone())), 0);
    }

    #[test]
    fn constant_image_hashes_to_zero() {
        assert_eq!(phash64(&RgbImage::filled(17, 9, [90, 20, 200])), 0);
    }

    #[test]
    fn brightness_offset_invariance() {
        let base = noise_image(45, 37, 3, 30, 200);
        for off in [-20i16, -5, 7, 20] {
            let shifted = RgbImage::from_fn(45, 37, |x, y| base.get(x, y).map(|v| (v as i16 + off) as u8));
            assert_eq!(phash64(&base), phash64(&shifted), "offset {off}");
        }
    }

    #[test]
    fn resize_to_same_size_is_identity() {
        let a = noise_image(32, 32, 4, 0, 255);
        assert_eq!(resize_area(&a, 32, 32), a);
    }

    #[test]
    fn hash_survives_exact_downscale() {
        // 2×2 constant blocks: the 32×32 area average is exact
        let small = noise_image(32, 32, 5, 0, 255);
        let big = RgbImage::from_fn(64, 64, |x, y| small.get(x / 2, y / 2));
        assert_eq!(resize_area(&big, 32, 32), small);
        assert_eq!(hamming(phash64(&big), phash64(&small)), 0);
    }

    #[test]
    fn hamming_basics() {
        assert_eq!(hamming(0xdead_beef, 0xdead_beef), 0);
        assert_eq!(hamming(0x0f0f_0f0f_0f0f_0f0f, 0xf0f0_f0f0_f0f0_f0f0), 64);
        assert_eq!(hamming(3, 12), hamming(12, 3));
    }

    #[test]
    fn different_content_differs() {
        let a = noise_image(32, 32, 6, 0, 255);
        let b = noise_image(32, 32, 7, 0, 255);
        assert!(hamming(phash64(&a), phash64(&b)) > 10);
        assert_eq!(phash64(&a) & 1, 0);
    }
}
