//! GrabCut-style pseudo-mask generation.
//!
//! A centred, randomly perturbed box seeds the foreground; Lab-space Gaussian
//! mixtures model foreground and background colour; an exact s-t min-cut
//! labels the pixels; the two steps alternate for a fixed number of rounds.
//! Morphological opening/closing clean up the result and [`apply_mask`]
//! blanks the background of the source image.

mod color;
mod cut;
mod gmm;
mod grabcut;
pub mod maxflow;
mod morph;

pub use color::{rgb_to_lab, LabImage};
pub use cut::{min_cut_segment, BinaryEnergy, CutGraph};
pub use gmm::{fit_gmm, Gaussian, GmmFit, GmmModel, COVARIANCE_FLOOR};
pub use grabcut::{apply_mask, grabcut, init_box, GrabCutParams, GrabCutResult, MorphOrder, Rect};
pub use morph::{dilate, erode, morph_close, morph_open};
