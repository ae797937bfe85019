//! Dinic's maximum-flow algorithm on real capacities.
//!
//! Residual capacities at or below a relative tolerance are treated as
//! saturated. With integer-valued capacities every operation is exact.

use std::collections::VecDeque;

#[derive(Debug, Clone, Default)]
pub struct FlowGraph {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    max_cap: f64,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self { head: vec![Vec::new(); nodes], ..Default::default() }
    }

    pub fn nodes(&self) -> usize {
        self.head.len()
    }

    /// Adds `u → v` with capacity `forward` and `v → u` with `backward`.
    pub fn add_edge(&mut self, u: usize, v: usize, forward: f64, backward: f64) {
        debug_assert!(forward >= 0.0 && backward >= 0.0);
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(forward);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(backward);
        self.max_cap = self.max_cap.max(forward).max(backward);
    }

    fn eps(&self) -> f64 {
        self.max_cap * 1e-13
    }

    fn levels(&self, s: usize, t: usize) -> Option<Vec<i32>> {
        let eps = self.eps();
        let mut level = vec![-1; self.nodes()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if level[v] < 0 && self.cap[e] > eps {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        (level[t] >= 0).then_some(level)
    }

    /// Pushes a blocking flow along the level graph; iterative DFS.
    fn blocking_flow(&mut self, s: usize, t: usize, level: &mut [i32]) -> f64 {
        let eps = self.eps();
        let mut it = vec![0usize; self.nodes()];
        let mut path: Vec<usize> = Vec::new();
        let mut total = 0.0;
        let mut u = s;
        loop {
            if u == t {
                let push = path.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
                let mut first_sat = None;
                for (i, &e) in path.iter().enumerate() {
                    self.cap[e] -= push;
                    self.cap[e ^ 1] += push;
                    if first_sat.is_none() && self.cap[e] <= eps {
                        first_sat = Some(i);
                    }
                }
                total += push;
                let cut = first_sat.unwrap_or(0);
                path.truncate(cut);
                u = path.last().map_or(s, |&e| self.to[e]);
                continue;
            }
            let mut advanced = false;
            while it[u] < self.head[u].len() {
                let e = self.head[u][it[u]];
                let v = self.to[e];
                if self.cap[e] > eps && level[v] == level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                it[u] += 1;
            }
            if !advanced {
                if u == s {
                    return total;
                }
                level[u] = -1;
                let e = path.pop().unwrap();
                u = self.to[e ^ 1];
                it[u] += 1;
            }
        }
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while let Some(mut level) = self.levels(s, t) {
            flow += self.blocking_flow(s, t, &mut level);
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph; after
    /// [`max_flow`](Self::max_flow) this is the source side of a minimum cut.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let eps = self.eps();
        let mut seen = vec![false; self.nodes()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if !seen[v] && self.cap[e] > eps {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_network() {
        // CLRS figure 26.1: max flow 23
        let mut g = FlowGraph::new(6);
        for (u, v, c) in [(0, 1, 16.0), (0, 2, 13.0), (1, 3, 12.0), (2, 1, 4.0), (2, 4, 14.0), (3, 2, 9.0), (3, 5, 20.0), (4, 3, 7.0), (4, 5, 4.0)] {
            g.add_edge(u, v, c, 0.0);
        }
        assert_eq!(g.max_flow(0, 5), 23.0);
        let side = g.source_side(0);
        assert!(side[0] && !side[5]);
    }

    #[test]
    fn disconnected_has_zero_flow() {
        let mut g = FlowGraph::new(3);
        g.add_edge(0, 1, 5.0, 0.0);
        assert_eq!(g.max_flow(0, 2), 0.0);
        assert_eq!(g.source_side(0), vec![true, true, false]);
    }

    #[test]
    fn long_chain_does_not_recurse() {
        let n = 200_000;
        let mut g = FlowGraph::new(n);
        for i in 0..n - 1 {
            g.add_edge(i, i + 1, 1.0 + (i % 3) as f64, 0.0);
        }
        assert_eq!(g.max_flow(0, n - 1), 1.0);
    }
}
