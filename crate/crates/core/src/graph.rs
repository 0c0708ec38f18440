//! Tanner graphs of binary parity-check codes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{self, Gf2Matrix};

/// Bipartite graph between `n` variable nodes and `m` check nodes.
///
/// Adjacency lists are sorted and free of repeats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TannerGraph {
    n: usize,
    check_to_vars: Vec<Vec<usize>>,
    var_to_checks: Vec<Vec<usize>>,
    dl_max: usize,
    dr_max: usize,
}

/// Graph distance between two variable nodes, counted in edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Distance {
    Finite(usize),
    Unreachable,
}

impl Distance {
    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Unreachable => None,
        }
    }
}

impl TannerGraph {
    /// Builds a graph from the check supports. Repeated variables in one
    /// check are rejected.
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        let mut check_to_vars = checks;
        let mut var_to_checks = vec![Vec::new(); n];
        for (c, vars) in check_to_vars.iter_mut().enumerate() {
            vars.sort_unstable();
            for w in vars.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::DuplicateEdge { var: w[0], check: c });
                }
            }
            for &v in vars.iter() {
                if v >= n {
                    return Err(Error::invalid(format!(
                        "check {c} references variable {v} but n = {n}"
                    )));
                }
                var_to_checks[v].push(c);
            }
        }
        let dl_max = var_to_checks.iter().map(Vec::len).max().unwrap_or(0);
        let dr_max = check_to_vars.iter().map(Vec::len).max().unwrap_or(0);
        Ok(TannerGraph {
            n,
            check_to_vars,
            var_to_checks,
            dl_max,
            dr_max,
        })
    }

    /// Builds a graph from a dense `m x n` matrix with entries in `{0, 1}`.
    pub fn from_dense(h: &[Vec<u8>]) -> Result<Self> {
        let n = h.first().map_or(0, Vec::len);
        let mut checks = Vec::with_capacity(h.len());
        for (c, row) in h.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("row {c} has length {} != {n}", row.len())));
            }
            let mut vars = Vec::new();
            for (v, &e) in row.iter().enumerate() {
                match e {
                    0 => {}
                    1 => vars.push(v),
                    _ => return Err(Error::DuplicateEdge { var: v, check: c }),
                }
            }
            checks.push(vars);
        }
        Self::from_checks(n, checks)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.check_to_vars.len()
    }

    pub fn dl_max(&self) -> usize {
        self.dl_max
    }

    pub fn dr_max(&self) -> usize {
        self.dr_max
    }

    /// `(dl_max * dr_max)^(1/2)`, the degree scale in the decay bound.
    pub fn degree_scale(&self) -> f64 {
        ((self.dl_max * self.dr_max) as f64).sqrt()
    }

    pub fn check_vars(&self, c: usize) -> &[usize] {
        &self.check_to_vars[c]
    }

    pub fn var_checks(&self, v: usize) -> &[usize] {
        &self.var_to_checks[v]
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.check_to_vars
    }

    pub fn edge_count(&self) -> usize {
        self.check_to_vars.iter().map(Vec::len).sum()
    }

    pub fn parity_matrix(&self) -> Gf2Matrix {
        Gf2Matrix::from_supports(self.n, &self.check_to_vars)
    }

    pub fn rank(&self) -> usize {
        self.parity_matrix().rank()
    }

    /// Basis of the code (null space of the parity-check matrix).
    pub fn codeword_basis(&self) -> Vec<Vec<u64>> {
        self.parity_matrix().null_space_basis()
    }

    /// `true` when the packed word satisfies every check.
    pub fn is_codeword(&self, x: &[u64]) -> bool {
        self.check_to_vars
            .iter()
            .all(|vars| vars.iter().filter(|&&v| gf2::get_bit(x, v)).count() % 2 == 0)
    }

    /// Bipartite BFS from variable `src`; entry `v` of the first vector is
    /// the distance to variable `v`, the second holds check distances.
    pub fn bfs_from_var(&self, src: usize) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let mut dv = vec![None; self.n];
        let mut dc = vec![None; self.m()];
        let mut queue = VecDeque::new();
        dv[src] = Some(0);
        queue.push_back((true, src));
        while let Some((is_var, x)) = queue.pop_front() {
            if is_var {
                let d = dv[x].unwrap();
                for &c in &self.var_to_checks[x] {
                    if dc[c].is_none() {
                        dc[c] = Some(d + 1);
                        queue.push_back((false, c));
                    }
                }
            } else {
                let d = dc[x].unwrap();
                for &v in &self.check_to_vars[x] {
                    if dv[v].is_none() {
                        dv[v] = Some(d + 1);
                        queue.push_back((true, v));
                    }
                }
            }
        }
        (dv, dc)
    }

    pub fn distance(&self, i: usize, j: usize) -> Distance {
        match self.bfs_from_var(i).0[j] {
            Some(d) => Distance::Finite(d),
            None => Distance::Unreachable,
        }
    }

    /// Connected-component label of every variable node.
    pub fn var_components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            let (dv, _) = self.bfs_from_var(s);
            for (v, d) in dv.iter().enumerate() {
                if d.is_some() {
                    label[v] = next;
                }
            }
            next += 1;
        }
        label
    }

    /// Depth-`depth` neighborhood of variable `root`.
    pub fn neighborhood(&self, root: usize, depth: usize) -> Result<Neighborhood> {
        if !depth.is_multiple_of(2) {
            return Err(Error::invalid(format!("neighborhood depth must be even, got {depth}")));
        }
        if root >= self.n {
            return Err(Error::invalid(format!("root {root} out of range")));
        }
        let (dv, dc) = self.bfs_from_var(root);
        let vars: Vec<usize> = (0..self.n)
            .filter(|&v| dv[v].is_some_and(|d| d <= depth))
            .collect();
        // A check at distance <= depth - 1 has all of its variables within depth.
        let checks: Vec<usize> = (0..self.m())
            .filter(|&c| dc[c].is_some_and(|d| d < depth))
            .collect();
        let boundary: Vec<usize> = vars
            .iter()
            .copied()
            .filter(|&v| dv[v] == Some(depth))
            .collect();
        let edges: usize = checks.iter().map(|&c| self.check_to_vars[c].len()).sum();
        let is_tree = edges + 1 == vars.len() + checks.len();
        Ok(Neighborhood {
            root,
            depth,
            vars,
            checks,
            boundary,
            is_tree,
        })
    }

    /// Subgraph on the given checks and variables. Check supports are
    /// intersected with `vars`; variables are renumbered in the order given.
    pub fn subgraph(&self, vars: &[usize], checks: &[usize]) -> TannerGraph {
        let mut local = vec![usize::MAX; self.n];
        for (k, &v) in vars.iter().enumerate() {
            local[v] = k;
        }
        let sub_checks = checks
            .iter()
            .map(|&c| {
                self.check_to_vars[c]
                    .iter()
                    .filter(|&&v| local[v] != usize::MAX)
                    .map(|&v| local[v])
                    .collect()
            })
            .collect();
        TannerGraph::from_checks(vars.len(), sub_checks).expect("subgraph of a simple graph is simple")
    }
}

/// Variables and checks within a given distance of a root variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub root: usize,
    pub depth: usize,
    /// Sorted variable nodes at distance `<= depth`.
    pub vars: Vec<usize>,
    /// Sorted check nodes at distance `<= depth - 1`.
    pub checks: Vec<usize>,
    /// Variables at distance exactly `depth`.
    pub boundary: Vec<usize>,
    pub is_tree: bool,
}

impl Neighborhood {
    /// Restriction of `g` to this neighborhood, plus the local index of the root.
    pub fn subgraph(&self, g: &TannerGraph) -> (TannerGraph, usize) {
        let sub = g.subgraph(&self.vars, &self.checks);
        let root = self.vars.binary_search(&self.root).expect("root is contained");
        (sub, root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use proptest::prelude::*;

    #[test]
    fn single_parity_check_degrees() {
        let g = TannerGraph::from_dense(&[vec![1, 1, 1]]).unwrap();
        assert_eq!((g.n(), g.m(), g.dr_max(), g.dl_max()), (3, 1, 3, 1));
    }

    #[test]
    fn repetition_chain_degrees() {
        let g = TannerGraph::from_dense(&[vec![1, 1, 0], vec![0, 1, 1]]).unwrap();
        assert_eq!(g.dl_max(), 2);
        assert_eq!(g.dr_max(), 2);
        assert_eq!(g.var_checks(1), &[0, 1]);
    }

    #[test]
    fn rejects_entries_above_one() {
        let err = TannerGraph::from_dense(&[vec![1, 2, 0]]).unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge { var: 1, check: 0 }));
        let err = TannerGraph::from_checks(3, vec![vec![0, 1, 1]]).unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge { .. }));
    }

    #[test]
    fn distances() {
        let g = TannerGraph::from_checks(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(g.distance(0, 1), Distance::Finite(2));
        assert_eq!(g.distance(0, 2), Distance::Unreachable);
        let ring = builtin::ring(10);
        assert_eq!(ring.distance(0, 5), Distance::Finite(10));
        assert_eq!(ring.distance(0, 9), Distance::Finite(2));
    }

    #[test]
    fn neighborhood_of_tree_and_ring() {
        let ring = builtin::ring(10);
        let nb = ring.neighborhood(0, 8).unwrap();
        assert!(nb.is_tree);
        assert_eq!(nb.vars.len(), 9);
        assert_eq!(nb.boundary.len(), 2);
        let nb = ring.neighborhood(0, 10).unwrap();
        assert!(!nb.is_tree);
        assert_eq!(nb.vars.len(), 10);

        let path = builtin::path_toy();
        let nb = path.neighborhood(0, 4).unwrap();
        assert_eq!(nb.vars, vec![0, 1, 2]);
        assert_eq!(nb.checks, vec![0, 1]);
        assert!(nb.is_tree);
        assert_eq!(nb.boundary, vec![2]);
        let nb = path.neighborhood(0, 6).unwrap();
        assert!(nb.boundary.is_empty());
        assert!(ring.neighborhood(0, 3).is_err());
    }

    #[test]
    fn component_labels() {
        let g = TannerGraph::from_checks(5, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let c = g.var_components();
        assert_eq!(c[0], c[1]);
        assert_ne!(c[0], c[2]);
        assert_ne!(c[4], c[0]);
        assert_ne!(c[4], c[2]);
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let checks: Vec<Vec<usize>> = (0..7)
                .map(|_| (0..n).filter(|_| rng.random_bool(0.25)).collect())
                .collect();
            let g = TannerGraph::from_checks(n, checks).unwrap();
            for _ in 0..20 {
                let (i, j, k) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
                prop_assert_eq!(g.distance(i, j), g.distance(j, i));
                if let (Some(a), Some(b)) = (g.distance(i, j).finite(), g.distance(j, k).finite()) {
                    let c = g.distance(i, k).finite().unwrap();
                    prop_assert!(c <= a + b);
                    prop_assert_eq!(a % 2, 0);
                }
            }
        }

        #[test]
        fn adjacency_is_consistent(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let checks: Vec<Vec<usize>> = (0..6)
                .map(|_| (0..10).filter(|_| rng.random_bool(0.3)).collect())
                .collect();
            let g = TannerGraph::from_checks(10, checks).unwrap();
            for c in 0..g.m() {
                for &v in g.check_vars(c) {
                    prop_assert!(g.var_checks(v).contains(&c));
                }
            }
            for v in 0..g.n() {
                prop_assert!(g.var_checks(v).len() <= g.dl_max());
                for &c in g.var_checks(v) {
                    prop_assert!(g.check_vars(c).contains(&v));
                }
            }
        }
    }
}
