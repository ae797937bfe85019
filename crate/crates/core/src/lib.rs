//! Evaluation and selective-prediction tooling for image classifiers.
//!
//! The crate covers the parts of a classification pipeline that do not need a
//! GPU: confidence scoring with abstention ([`scoring`], [`ood_eval`]),
//! closed-set and segmentation metrics ([`cls_eval`], [`seg_eval`]), paired
//! model comparison ([`stats`]), dataset hygiene and nested cross-validation
//! ([`hygiene`]), and GrabCut-style pseudo-mask generation ([`pseudomask`]).
//!
//! A small differentiable classifier ([`tiny_model`]) stands in for a deep
//! backbone wherever input gradients or training are needed.

pub mod cls_eval;
pub mod data_model;
pub mod demo;
pub mod error;
pub mod hygiene;
pub mod io;
pub mod ood_eval;
pub mod pseudomask;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod seg_eval;
pub mod stats;
pub mod tiny_model;

pub use error::{Error, ErrorKind, Result};
