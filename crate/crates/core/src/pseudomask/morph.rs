//! Binary morphology with a `(2r+1)²` square element.
//!
//! Windows are clipped to the image: pixels outside the frame take no part in
//! either erosion or dilation. That keeps erosion and dilation adjoint, so
//! opening shrinks, closing grows, and both are idempotent up to the border.

use crate::data_model::BinaryMask;

/// One separable pass; `all` selects erosion (every neighbour set) over
/// dilation (any neighbour set).
fn pass(mask: &BinaryMask, radius: usize, all: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let reduce = |line: &[bool]| -> Vec<bool> {
        let n = line.len();
        let mut prefix = vec![0usize; n + 1];
        for (i, &b) in line.iter().enumerate() {
            prefix[i + 1] = prefix[i] + b as usize;
        }
        (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(radius), (i + radius + 1).min(n));
                let set = prefix[hi] - prefix[lo];
                if all {
                    set == hi - lo
                } else {
                    set > 0
                }
            })
            .collect()
    };
    let mut rows = vec![false; w * h];
    for y in 0..h {
        rows[y * w..(y + 1) * w].copy_from_slice(&reduce(&bits[y * w..(y + 1) * w]));
    }
    let mut out = vec![false; w * h];
    for x in 0..w {
        let column: Vec<bool> = (0..h).map(|y| rows[y * w + x]).collect();
        for (y, b) in reduce(&column).into_iter().enumerate() {
            out[y * w + x] = b;
        }
    }
    BinaryMask::new(w, h, out).expect("same shape")
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    pass(mask, radius, true)
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    pass(mask, radius, false)
}

/// Erosion followed by dilation.
pub fn morph_open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

/// Dilation followed by erosion.
pub fn morph_close(mask: &BinaryMask, radius: usize) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}
