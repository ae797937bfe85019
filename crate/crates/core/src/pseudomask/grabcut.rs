use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data_model::{BinaryMask, RgbImage};
use crate::error::{Error, Result};
use crate::rng;

use super::color::LabImage;
use super::cut::CutGraph;
use super::gmm::{fit_gmm, GmmModel};
use super::morph::{morph_close, morph_open};

const MIN_SIDE: usize = 8;
const BOX_FRACTION: std::ops::RangeInclusive<f64> = 0.81..=0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x..self.x + self.w).contains(&x) && (self.y..self.y + self.h).contains(&y)
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn mask(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| self.contains(x, y))
    }
}

/// Centred box whose side fractions are drawn independently from
/// `[0.81, 0.99]`.
pub fn init_box(width: usize, height: usize, seed: u64) -> Result<Rect> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::ImageTooSmall { width, height });
    }
    let mut r = rng::seeded(seed);
    let fx = r.random_range(BOX_FRACTION);
    let fy = r.random_range(BOX_FRACTION);
    let side = |f: f64, n: usize| ((f * n as f64).floor() as usize).clamp(2, n);
    let (w, h) = (side(fx, width), side(fy, height));
    Ok(Rect { x: (width - w) / 2, y: (height - h) / 2, w, h })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MorphOrder {
    OpenThenClose,
    CloseThenOpen,
}

impl FromStr for MorphOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open-close" | "open-then-close" => Ok(Self::OpenThenClose),
            "close-open" | "close-then-open" => Ok(Self::CloseThenOpen),
            other => Err(Error::InvalidArgument(format!("unknown morphology order {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrabCutParams {
    pub iterations: usize,
    pub components: usize,
    pub lambda: f64,
    pub em_iterations: usize,
    /// Radius 0 skips the operation.
    pub open_radius: usize,
    pub close_radius: usize,
    pub order: MorphOrder,
}

impl Default for GrabCutParams {
    fn default() -> Self {
        Self {
            iterations: 5,
            components: 5,
            lambda: 50.0,
            em_iterations: 10,
            open_radius: 1,
            close_radius: 1,
            order: MorphOrder::OpenThenClose,
        }
    }
}

impl GrabCutParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.components == 0 {
            return Err(Error::InvalidArgument("iterations and components must be positive".into()));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrabCutResult {
    pub mask: BinaryMask,
    pub rect: Rect,
    pub degenerate: bool,
    /// Graph-cut energy after each completed iteration.
    pub energy: Vec<f64>,
}

impl GrabCutResult {
    /// Opening and closing in the configured order, clipped back to the box.
    pub fn cleaned(&self, params: &GrabCutParams) -> BinaryMask {
        let open = |m: BinaryMask| if params.open_radius > 0 { morph_open(&m, params.open_radius) } else { m };
        let close = |m: BinaryMask| if params.close_radius > 0 { morph_close(&m, params.close_radius) } else { m };
        let m = match params.order {
            MorphOrder::OpenThenClose => close(open(self.mask.clone())),
            MorphOrder::CloseThenOpen => open(close(self.mask.clone())),
        };
        BinaryMask::from_fn(m.width(), m.height(), |x, y| m.get(x, y) && self.rect.contains(x, y))
    }
}

fn gather(lab: &LabImage, mask: &BinaryMask, want: bool) -> Vec<[f64; 3]> {
    lab.data.iter().zip(mask.bits()).filter(|(_, &b)| b == want).map(|(z, _)| *z).collect()
}

fn update(prev: Option<GmmModel>, pixels: &[[f64; 3]], params: &GrabCutParams, seed: u64) -> Result<GmmModel> {
    let fit = match prev {
        Some(model) => model.refine(pixels, params.em_iterations)?,
        None => fit_gmm(pixels, params.components, params.em_iterations, seed)?,
    };
    Ok(fit.model)
}

/// Box-initialised GrabCut. Colour models are fitted fresh on the box split
/// and then re-estimated by EM from their previous state, so each round
/// can only lower the energy.
pub fn grabcut(image: &RgbImage, seed: u64, params: &GrabCutParams) -> Result<GrabCutResult> {
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    let rect = init_box(w, h, seed)?;
    let inside = rect.mask(w, h);
    let locked = BinaryMask::from_fn(w, h, |x, y| !rect.contains(x, y));
    let lab = LabImage::from_rgb(image);
    let fallback = |energy| GrabCutResult { mask: inside.clone(), rect, degenerate: true, energy };

    let mut mask = inside.clone();
    let (mut fg, mut bg): (Option<GmmModel>, Option<GmmModel>) = (None, None);
    let mut energy = Vec::with_capacity(params.iterations);
    for round in 0..params.iterations {
        let fg_px = gather(&lab, &mask, true);
        if fg_px.len() < params.components {
            return Ok(fallback(energy));
        }
        let bg_px = gather(&lab, &mask, false);
        let fg_model = update(fg.take(), &fg_px, params, rng::derive(seed, 2 * round as u64 + 1))?;
        let bg_model = update(bg.take(), &bg_px, params, rng::derive(seed, 2 * round as u64 + 2))?;
        let graph = CutGraph::new(&lab, &fg_model, &bg_model, params.lambda, &locked)?;
        mask = match graph.segment() {
            Ok(m) => m,
            Err(Error::DegenerateGraph) => return Ok(fallback(energy)),
            Err(e) => return Err(e),
        };
        energy.push(graph.energy(&mask));
        if mask.count() == 0 {
            return Ok(fallback(energy));
        }
        fg = Some(fg_model);
        bg = Some(bg_model);
    }
    Ok(GrabCutResult { mask, rect, degenerate: false, energy })
}

/// Blanks every background pixel.
pub fn apply_mask(image: &RgbImage, mask: &BinaryMask) -> Result<RgbImage> {
    if (image.width(), image.height()) != (mask.width(), mask.height()) {
        return Err(Error::DimensionMismatch {
            expected: image.width() * image.height(),
            got: mask.width() * mask.height(),
        });
    }
    Ok(RgbImage::from_fn(image.width(), image.height(), |x, y| {
        if mask.get(x, y) {
            image.get(x, y)
        } else {
            [0, 0, 0]
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seg_eval::mask_metrics;

    fn ellipse(w: usize, h: usize) -> (RgbImage, BinaryMask) {
        let (cx, cy, ax, ay) = (w as f64 / 2.0, h as f64 / 2.0, w as f64 * 0.3, h as f64 * 0.28);
        let truth = BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / ax, (y as f64 + 0.5 - cy) / ay);
            dx * dx + dy * dy <= 1.0
        });
        let img = RgbImage::from_fn(w, h, |x, y| if truth.get(x, y) { [200, 30, 40] } else { [40, 90, 210] });
        (img, truth)
    }

    #[test]
    fn box_is_deterministic_and_bounded() {
        assert_eq!(init_box(100, 80, 5).unwrap(), init_box(100, 80, 5).unwrap());
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for seed in 0..1000 {
            let r = init_box(120, 90, seed).unwrap();
            assert!(r.x + r.w <= 120 && r.y + r.h <= 90);
            let frac = r.area() as f64 / (120.0 * 90.0);
            lo = lo.min(frac);
            hi = hi.max(frac);
        }
        assert!(lo >= 0.81 * 0.81 * 0.97 && hi <= 0.99 * 0.99, "{lo} {hi}");
        assert!(hi - lo > 0.2);
    }

    #[test]
    fn small_images() {
        let r = init_box(8, 8, 3).unwrap();
        assert!(r.w >= 2 && r.h >= 2 && r.x + r.w <= 8 && r.y + r.h <= 8);
        assert!(matches!(init_box(7, 20, 1), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn recovers_ellipse() {
        let (img, truth) = ellipse(64, 48);
        let res = grabcut(&img, 42, &GrabCutParams::default()).unwrap();
        assert!(!res.degenerate);
        assert_eq!(res.energy.len(), 5);
        let iou = mask_metrics(&res.mask, &truth).unwrap().iou;
        assert!(iou >= 0.95, "iou {iou}");
        assert!(res.mask.bits().iter().enumerate().all(|(i, &b)| !b || res.rect.contains(i % 64, i / 64)));
        assert!(res.energy.windows(2).all(|e| e[1] <= e[0] + 1e-9 * e[0].abs().max(1.0)), "{:?}", res.energy);
    }

    #[test]
    fn noisy_energy_does_not_increase() {
        let mut r = rng::seeded(6);
        let (base, truth) = ellipse(40, 32);
        let img = RgbImage::from_fn(40, 32, |x, y| {
            base.get(x, y).map(|c| (c as i32 + r.random_range(-40..=40)).clamp(0, 255) as u8)
        });
        let res = grabcut(&img, 7, &GrabCutParams::default()).unwrap();
        assert!(res.energy.windows(2).all(|e| e[1] <= e[0] + 1e-9 * e[0].abs().max(1.0)), "{:?}", res.energy);
        assert!(mask_metrics(&res.mask, &truth).unwrap().iou > 0.8);
    }

    #[test]
    fn uniform_image_is_degenerate() {
        let img = RgbImage::filled(32, 32, [120, 120, 120]);
        let res = grabcut(&img, 1, &GrabCutParams::default()).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.mask, res.rect.mask(32, 32));
    }

    #[test]
    fn cleaned_stays_in_box() {
        let (img, _) = ellipse(40, 32);
        let res = grabcut(&img, 2, &GrabCutParams::default()).unwrap();
        let clean = res.cleaned(&GrabCutParams::default());
        assert!(clean.is_subset_of(&res.rect.mask(40, 32)));
    }

    #[test]
    fn masking() {
        let (img, truth) = ellipse(16, 12);
        assert_eq!(apply_mask(&img, &BinaryMask::filled(16, 12, true)).unwrap(), img);
        assert!(apply_mask(&img, &BinaryMask::filled(16, 12, false)).unwrap().pixels().iter().all(|&v| v == 0));
        let once = apply_mask(&img, &truth).unwrap();
        assert_eq!(apply_mask(&once, &truth).unwrap(), once);
        assert!(apply_mask(&img, &BinaryMask::filled(3, 3, true)).is_err());
    }

    #[test]
    fn order_parses() {
        assert_eq!("open-close".parse::<MorphOrder>().unwrap(), MorphOrder::OpenThenClose);
        assert!("sideways".parse::<MorphOrder>().is_err());
    }
}
