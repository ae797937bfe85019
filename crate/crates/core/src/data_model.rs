//! Core domain types shared by every module.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, unique class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpace {
    names: Vec<String>,
}

impl ClassSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidArgument("class space must not be empty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::InvalidArgument("class names must be non-empty".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate class name {n:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Generic names `class_0 .. class_{n-1}`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("class_{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl Default for ClassSpace {
    fn default() -> Self {
        Self {
            names: ["PackagedFresh", "PackagedSpoiled", "UnpackagedFresh", "UnpackagedSpoiled"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Ood,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Ood => "ood",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "ood" => Ok(Split::Ood),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// One sample's raw classifier output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub id: String,
    pub split: Split,
    pub label: Option<usize>,
    pub logits: Vec<f64>,
}

impl LogitRecord {
    pub fn is_ood(&self) -> bool {
        self.split == Split::Ood
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::DimensionMismatch {
                expected: 3 * width * height,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            pixels: rgb.repeat(width * height),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0);
        let mut pixels = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Iterates pixels in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

/// Foreground/background raster; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
        }
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0);
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// `true` when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Paired correctness counts of two classifiers on one test set:
/// `n10` = A right and B wrong, `n01` = A wrong and B right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl PairedOutcome {
    pub fn new(n11: u64, n10: u64, n01: u64, n00: u64) -> Result<Self> {
        let po = Self { n11, n10, n01, n00 };
        if po.total() == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(po)
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    /// Same table with the roles of A and B exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            n11: self.n11,
            n10: self.n01,
            n01: self.n10,
            n00: self.n00,
        }
    }
}

/// Coverage/rejection at one abstention threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub coverage: f64,
    pub rejection: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub auroc: f64,
    pub aupr_in: f64,
    pub fpr_at_95tpr: f64,
}

/// One outer fold of a nested cross-validation plan. Ids are sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterFold {
    pub test: Vec<usize>,
    /// Inner validation sets; together they partition this fold's training ids.
    pub inner: Vec<Vec<usize>>,
}

impl OuterFold {
    /// All training ids of this outer fold (sorted).
    pub fn train(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.inner.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// Training ids of inner split `k`: every inner id not in validation set `k`.
    pub fn inner_train(&self, k: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .inner
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        ids.sort_unstable();
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub outer: Vec<OuterFold>,
}

impl FoldPlan {
    /// Checks the partition and no-leakage invariants. Returns a description of
    /// the first violation found.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let mut seen = vec![0usize; self.n];
        for (f, fold) in self.outer.iter().enumerate() {
            for &id in &fold.test {
                if id >= self.n {
                    return Err(format!("outer fold {f}: id {id} out of range"));
                }
                seen[id] += 1;
            }
            let test: HashSet<usize> = fold.test.iter().copied().collect();
            let mut inner_seen = HashSet::new();
            for (k, part) in fold.inner.iter().enumerate() {
                for &id in part {
                    if test.contains(&id) {
                        return Err(format!("outer fold {f}: id {id} in both test and inner part {k}"));
                    }
                    if !inner_seen.insert(id) {
                        return Err(format!("outer fold {f}: id {id} in two inner parts"));
                    }
                }
            }
            if inner_seen.len() + test.len() != self.n {
                return Err(format!(
                    "outer fold {f}: inner parts cover {} of {} training ids",
                    inner_seen.len(),
                    self.n - test.len()
                ));
            }
        }
        if let Some(id) = seen.iter().position(|&c| c != 1) {
            return Err(format!("id {id} appears in {} outer test sets", seen[id]));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_class_space() {
        let cs = ClassSpace::default();
        assert_eq!(cs.len(), 4);
        assert_eq!(cs.index_of("UnpackagedFresh"), Some(2));
    }

    #[test]
    fn class_space_rejects_duplicates_and_empty() {
        assert!(ClassSpace::new(["a", "a"]).is_err());
        assert!(ClassSpace::new(["a", ""]).is_err());
        assert!(ClassSpace::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn image_and_mask_shape_checks() {
        assert!(RgbImage::new(2, 2, vec![0; 11]).is_err());
        assert!(BinaryMask::new(2, 2, vec![true; 3]).is_err());
        let m = BinaryMask::from_fn(3, 2, |x, y| x == y);
        assert_eq!(m.count(), 2);
        assert!(m.get(1, 1));
    }

    #[test]
    fn paired_outcome_requires_samples() {
        assert!(PairedOutcome::new(0, 0, 0, 0).is_err());
        let po = PairedOutcome::new(1, 2, 3, 4).unwrap();
        assert_eq!(po.swapped().n10, 3);
        assert_eq!(po.total(), 10);
    }

    #[test]
    fn audit_detects_leak() {
        let plan = FoldPlan {
            n: 4,
            outer: vec![
                OuterFold { test: vec![0, 1], inner: vec![vec![2], vec![3]] },
                OuterFold { test: vec![2, 3], inner: vec![vec![0], vec![1, 2]] },
            ],
        };
        assert!(plan.audit().is_err());
    }
}
