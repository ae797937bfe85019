use crate::data_model::{BinaryMask, RgbImage};
use crate::error::{Error, Result};

use super::color::LabImage;
use super::gmm::GmmModel;
use super::maxflow::FlowGraph;

/// Submodular binary energy
/// `E(L) = Σ_i (L_i ? fg_i : bg_i) + Σ_(i,j,w) w·[L_i ≠ L_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryEnergy {
    pub unary_fg: Vec<f64>,
    pub unary_bg: Vec<f64>,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl BinaryEnergy {
    pub fn len(&self) -> usize {
        self.unary_fg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary_fg.is_empty()
    }

    pub fn energy(&self, labels: &[bool]) -> f64 {
        let unary: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &fg)| if fg { self.unary_fg[i] } else { self.unary_bg[i] })
            .sum();
        let pairwise: f64 = self
            .pairs
            .iter()
            .filter(|&&(i, j, _)| labels[i] != labels[j])
            .map(|&(_, _, w)| w)
            .sum();
        unary + pairwise
    }

    /// Exact global minimiser via s-t min-cut. The source side is
    /// foreground; among optimal labelings the one with the fewest
    /// foreground pixels is returned.
    pub fn minimize(&self) -> Result<Vec<bool>> {
        let n = self.len();
        let (s, t) = (n, n + 1);
        let mut g = FlowGraph::new(n + 2);
        let mut any = false;
        for i in 0..n {
            let (fg, bg) = (self.unary_fg[i], self.unary_bg[i]);
            if !fg.is_finite() || !bg.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite unary term at node {i}")));
            }
            let base = fg.min(bg);
            let (to_sink, from_source) = (fg - base, bg - base);
            if from_source > 0.0 {
                g.add_edge(s, i, from_source, 0.0);
                any = true;
            }
            if to_sink > 0.0 {
                g.add_edge(i, t, to_sink, 0.0);
                any = true;
            }
        }
        for &(i, j, w) in &self.pairs {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("bad pair weight {w}")));
            }
            if w > 0.0 {
                g.add_edge(i, j, w, w);
                any = true;
            }
        }
        if !any {
            return Err(Error::DegenerateGraph);
        }
        g.max_flow(s, t);
        let side = g.source_side(s);
        Ok(side[..n].to_vec())
    }
}

/// GrabCut energy on a 4-connected pixel grid with some pixels locked to
/// background.
#[derive(Debug, Clone)]
pub struct CutGraph {
    pub width: usize,
    pub height: usize,
    pub beta: f64,
    pub lambda: f64,
    /// `−log p_fg(z)` per pixel.
    pub cost_fg: Vec<f64>,
    /// `−log p_bg(z)` per pixel.
    pub cost_bg: Vec<f64>,
    /// `(i, j, λ·exp(−β‖z_i − z_j‖²))` for every horizontal and vertical pair.
    pub links: Vec<(usize, usize, f64)>,
    pub locked_bg: Vec<bool>,
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn grid_pairs(width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..height).flat_map(move |y| {
        (0..width).flat_map(move |x| {
            let i = y * width + x;
            let right = (x + 1 < width).then_some((i, i + 1));
            let down = (y + 1 < height).then_some((i, i + width));
            right.into_iter().chain(down)
        })
    })
}

impl CutGraph {
    pub fn new(lab: &LabImage, fg: &GmmModel, bg: &GmmModel, lambda: f64, locked_bg: &BinaryMask) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
        }
        if (locked_bg.width(), locked_bg.height()) != (lab.width, lab.height) {
            return Err(Error::DimensionMismatch {
                expected: lab.width * lab.height,
                got: locked_bg.width() * locked_bg.height(),
            });
        }
        let pairs: Vec<(usize, usize)> = grid_pairs(lab.width, lab.height).collect();
        let mean_sq = if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().map(|&(i, j)| sq_dist(&lab.data[i], &lab.data[j])).sum::<f64>() / pairs.len() as f64
        };
        let beta = if mean_sq > 0.0 { 1.0 / (2.0 * mean_sq) } else { 0.0 };
        let links = pairs
            .iter()
            .map(|&(i, j)| (i, j, lambda * (-beta * sq_dist(&lab.data[i], &lab.data[j])).exp()))
            .collect();
        let cost_fg = lab.data.iter().map(|z| -fg.log_likelihood(z)).collect::<Vec<_>>();
        let cost_bg = lab.data.iter().map(|z| -bg.log_likelihood(z)).collect::<Vec<_>>();
        if cost_fg.iter().chain(&cost_bg).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("colour model gives zero likelihood".into()));
        }
        Ok(Self {
            width: lab.width,
            height: lab.height,
            beta,
            lambda,
            cost_fg,
            cost_bg,
            links,
            locked_bg: locked_bg.bits().to_vec(),
        })
    }

    /// Energy of a full-image labeling; infinite if a locked pixel is
    /// foreground.
    pub fn energy(&self, mask: &BinaryMask) -> f64 {
        let labels = mask.bits();
        if labels.iter().zip(&self.locked_bg).any(|(&fg, &locked)| fg && locked) {
            return f64::INFINITY;
        }
        let unary: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &fg)| if fg { self.cost_fg[i] } else { self.cost_bg[i] })
            .sum();
        let pairwise: f64 = self.links.iter().filter(|&&(i, j, _)| labels[i] != labels[j]).map(|l| l.2).sum();
        unary + pairwise
    }

    /// Restriction to the free pixels. A link to a locked pixel becomes a
    /// foreground penalty on its free end; this is the same hard constraint
    /// an infinite t-link would impose. Returns the free pixel indices
    /// alongside the reduced energy.
    pub fn free_energy(&self) -> (Vec<usize>, BinaryEnergy) {
        let free: Vec<usize> = (0..self.locked_bg.len()).filter(|&i| !self.locked_bg[i]).collect();
        let mut slot = vec![usize::MAX; self.locked_bg.len()];
        for (k, &i) in free.iter().enumerate() {
            slot[i] = k;
        }
        let mut unary_fg: Vec<f64> = free.iter().map(|&i| self.cost_fg[i]).collect();
        let unary_bg: Vec<f64> = free.iter().map(|&i| self.cost_bg[i]).collect();
        let mut pairs = Vec::new();
        for &(i, j, w) in &self.links {
            match (self.locked_bg[i], self.locked_bg[j]) {
                (false, false) => pairs.push((slot[i], slot[j], w)),
                (false, true) => unary_fg[slot[i]] += w,
                (true, false) => unary_fg[slot[j]] += w,
                (true, true) => {}
            }
        }
        (free, BinaryEnergy { unary_fg, unary_bg, pairs })
    }

    pub fn segment(&self) -> Result<BinaryMask> {
        let mut bits = vec![false; self.locked_bg.len()];
        let (free, energy) = self.free_energy();
        if !free.is_empty() {
            for (k, fg) in energy.minimize()?.into_iter().enumerate() {
                bits[free[k]] = fg;
            }
        }
        BinaryMask::new(self.width, self.height, bits)
    }
}

/// One graph-cut step: label every unlocked pixel foreground or background
/// by the exact minimum of the GrabCut energy.
pub fn min_cut_segment(
    image: &RgbImage,
    fg: &GmmModel,
    bg: &GmmModel,
    lambda: f64,
    locked_bg: &BinaryMask,
) -> Result<BinaryMask> {
    let lab = LabImage::from_rgb(image);
    CutGraph::new(&lab, fg, bg, lambda, locked_bg)?.segment()
}
