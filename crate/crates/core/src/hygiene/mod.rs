//! Dataset hygiene and partitioning: perceptual hashing and near-duplicate
//! clustering, stratified splits, nested fold plans, class weights, and the
//! two-stage inner-loop hyperparameter search.

mod cluster;
mod nested_cv;
mod phash;
mod split;

pub use cluster::{cluster_near_duplicates, Cluster, DedupReport, HashEntry, DEFAULT_MAX_DIST};
pub use nested_cv::{
    inner_select, nested_cv_run, CandidateKey, CandidateScore, HyperGrid, InnerSelection, NestedCvReport, OuterResult,
    SearchSetup,
};
pub use phash::{hamming, phash64, resize_area};
pub use split::{class_weights, nested_fold_plan, stratified_split, SplitAssignment, DEFAULT_RATIOS};
