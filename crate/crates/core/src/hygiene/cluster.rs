use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::phash::hamming;

/// Default near-duplicate radius, in bits out of 64.
pub const DEFAULT_MAX_DIST: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashEntry {
    pub id: String,
    pub hash: u64,
}

impl HashEntry {
    pub fn new(id: impl Into<String>, hash: u64) -> Self {
        Self { id: id.into(), hash }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Lexicographically smallest member id.
    pub representative: String,
    /// Sorted member ids, representative included.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub max_dist: u32,
    pub total: usize,
    /// Sorted by representative.
    pub clusters: Vec<Cluster>,
    /// Representatives, sorted.
    pub keep: Vec<String>,
    pub removed: usize,
    pub removed_pct: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Groups entries into connected components of the graph whose edges join
/// hashes within `max_dist` bits. Clustering is transitive: a chain of close
/// pairs forms one cluster even when its ends are far apart.
pub fn cluster_near_duplicates(entries: &[HashEntry], max_dist: u32) -> DedupReport {
    let n = entries.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if hamming(entries[i].hash, entries[j].hash) <= max_dist {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(e.id.clone());
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|mut members| {
            members.sort();
            Cluster { representative: members[0].clone(), members }
        })
        .collect();
    clusters.sort_by(|a, b| a.representative.cmp(&b.representative));
    let keep: Vec<String> = clusters.iter().map(|c| c.representative.clone()).collect();
    let removed = n - keep.len();
    DedupReport {
        max_dist,
        total: n,
        removed,
        removed_pct: if n == 0 { 0.0 } else { 100.0 * removed as f64 / n as f64 },
        clusters,
        keep,
    }
}
