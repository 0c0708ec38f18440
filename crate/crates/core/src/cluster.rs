//! Cluster expansion of the dual covariance.
//!
//! The dual covariance of two bits is written as a sum over check clusters
//! `X` (check sets of the form `N(S)` for a connected variable set `S`,
//! containing the checks of both bits) of a two-replica kernel times the
//! squared ratio `Z_G(X^c) / Z_G`. The kernel sums over replica assignments
//! of the checks in `X` and over "compatible" variable sets `Gamma`.
//!
//! Two rules for compatibility are provided. [`GammaRule::Literal`] is the
//! textbook statement: `N(Gamma) + N(i) + N(j) = X`, `N(Gamma)` meets both
//! `N(i)` and `N(j)`, and a walk through `Gamma` joins `N(i)` to `N(j)`.
//! [`GammaRule::Linked`] keeps the first condition, drops the other two and
//! instead asks every variable of `Gamma` to be reachable from
//! `N(i) + N(j)` through `Gamma`. The second rule is the one produced by
//! resumming the product `prod_k (1 + E_k)` term by term; the two coincide
//! on graphs where `Gamma` cannot have detached pieces and the bits share no
//! check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{draw_llr, LlrVector};
use crate::error::{Error, Result};
use crate::exact::{dual_exact_with, restricted_partitions_with, EnumOptions};
use crate::graph::TannerGraph;
use crate::rng::{tag, Streams};
use crate::stats::{Estimate, MeanStats};

/// Largest cluster for which the replica sum (`4^|X|` terms) is evaluated.
pub const MAX_KERNEL_CHECKS: usize = 16;
/// Largest candidate pool for the `Gamma` subset search.
pub const MAX_POOL: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GammaRule {
    #[default]
    Literal,
    Linked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionOptions {
    pub rule: GammaRule,
    /// Whether the two end bits may themselves belong to `Gamma`.
    pub endpoints_in_gamma: bool,
    /// Upper bound on the number of connected variable sets visited.
    pub max_connected_sets: usize,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self {
            rule: GammaRule::Literal,
            endpoints_in_gamma: true,
            max_connected_sets: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Sorted check nodes.
    pub checks: Vec<usize>,
    /// A connected variable set whose check neighborhood is `checks`.
    pub witness: Vec<usize>,
    pub covers_i: bool,
    pub covers_j: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterList {
    pub clusters: Vec<Cluster>,
    pub truncated: bool,
}

/// Variables sharing at least one check with `v`, sorted.
fn var_neighbors(g: &TannerGraph, v: usize) -> Vec<usize> {
    let mut out: Vec<usize> = g
        .var_checks(v)
        .iter()
        .flat_map(|&c| g.check_vars(c).iter().copied())
        .filter(|&w| w != v)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn check_set(g: &TannerGraph, vars: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = vars.iter().flat_map(|&v| g.var_checks(v).iter().copied()).collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    small.iter().all(|x| big.binary_search(x).is_ok())
}

/// All clusters for the pair `(i, j)`, deduplicated by check set and sorted
/// by size, then lexicographically.
///
/// Connected variable sets are listed once each with the ESU extension
/// scheme (a set is grown only by vertices larger than its seed that are not
/// already adjacent to it).
pub fn enumerate_clusters(g: &TannerGraph, i: usize, j: usize, opts: &ExpansionOptions) -> Result<ClusterList> {
    if i >= g.n() || j >= g.n() {
        return Err(Error::invalid(format!("pair ({i}, {j}) out of range")));
    }
    let need = check_set(g, &[i, j]);
    let adj: Vec<Vec<usize>> = (0..g.n()).map(|v| var_neighbors(g, v)).collect();
    let mut found: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut visited = 0usize;
    let mut truncated = false;

    struct Search<'a> {
        g: &'a TannerGraph,
        adj: &'a [Vec<usize>],
        need: &'a [usize],
        found: &'a mut BTreeMap<Vec<usize>, Vec<usize>>,
        visited: &'a mut usize,
        cap: usize,
        truncated: &'a mut bool,
    }

    impl Search<'_> {
        fn record(&mut self, sub: &[usize]) {
            let checks = check_set(self.g, sub);
            if is_subset(self.need, &checks) {
                self.found.entry(checks).or_insert_with(|| {
                    let mut w = sub.to_vec();
                    w.sort_unstable();
                    w
                });
            }
        }

        fn extend(&mut self, sub: &mut Vec<usize>, ext: Vec<usize>, seed: usize) {
            if *self.visited >= self.cap {
                *self.truncated = true;
                return;
            }
            *self.visited += 1;
            self.record(sub);
            let mut ext = ext;
            while let Some(w) = ext.pop() {
                let mut next = ext.clone();
                for &u in &self.adj[w] {
                    if u > seed
                        && !sub.contains(&u)
                        && u != w
                        && !next.contains(&u)
                        && !sub.iter().any(|s| self.adj[*s].binary_search(&u).is_ok())
                    {
                        next.push(u);
                    }
                }
                sub.push(w);
                self.extend(sub, next, seed);
                sub.pop();
                if *self.truncated {
                    return;
                }
            }
        }
    }

    if !need.is_empty() {
        let mut s = Search {
            g,
            adj: &adj,
            need: &need,
            found: &mut found,
            visited: &mut visited,
            cap: opts.max_connected_sets,
            truncated: &mut truncated,
        };
        for seed in (0..g.n()).filter(|&v| !g.var_checks(v).is_empty()) {
            let ext: Vec<usize> = adj[seed].iter().copied().filter(|&u| u > seed).collect();
            s.extend(&mut vec![seed], ext, seed);
            if *s.truncated {
                break;
            }
        }
    }
    let ci = check_set(g, &[i]);
    let cj = check_set(g, &[j]);
    let mut clusters: Vec<Cluster> = found
        .into_iter()
        .map(|(checks, witness)| Cluster {
            covers_i: is_subset(&ci, &checks),
            covers_j: is_subset(&cj, &checks),
            checks,
            witness,
        })
        .collect();
    clusters.sort_by(|a, b| a.checks.len().cmp(&b.checks.len()).then_with(|| a.checks.cmp(&b.checks)));
    Ok(ClusterList { clusters, truncated })
}

/// Independent test of the cluster definition: `checks` must contain the
/// checks of `i` and `j`, and some connected component of the variables
/// whose checks all lie in `checks` must have exactly `checks` as neighbors.
pub fn is_valid_cluster(g: &TannerGraph, checks: &[usize], i: usize, j: usize) -> bool {
    let mut sorted = checks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if !is_subset(&check_set(g, &[i, j]), &sorted) {
        return false;
    }
    let inside: Vec<usize> = (0..g.n())
        .filter(|&v| !g.var_checks(v).is_empty() && is_subset(g.var_checks(v), &sorted))
        .collect();
    let mut seen = vec![false; g.n()];
    for &start in &inside {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < comp.len() {
            let v = comp[k];
            k += 1;
            for &c in g.var_checks(v) {
                for &w in g.check_vars(c) {
                    if !seen[w] && inside.binary_search(&w).is_ok() {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
        }
        if check_set(g, &comp) == sorted {
            return true;
        }
    }
    false
}

/// A compatible variable set, as sorted variable indices.
pub type CompatibleSet = Vec<usize>;

/// Tests the compatibility conditions of `gamma` with the cluster `checks`.
pub fn is_compatible(g: &TannerGraph, checks: &[usize], i: usize, j: usize, gamma: &[usize], rule: GammaRule) -> bool {
    let mut sorted = checks.to_vec();
    sorted.sort_unstable();
    let dg = check_set(g, gamma);
    let mut cover = dg.clone();
    cover.extend(check_set(g, &[i, j]));
    cover.sort_unstable();
    cover.dedup();
    if cover != sorted {
        return false;
    }
    let ci = check_set(g, &[i]);
    let cj = check_set(g, &[j]);
    match rule {
        GammaRule::Literal => {
            let meets = |side: &[usize]| side.iter().any(|c| dg.binary_search(c).is_ok());
            meets(&ci) && meets(&cj) && walk_joins(g, gamma, &ci, &cj)
        }
        GammaRule::Linked => {
            let mut start = ci.clone();
            start.extend(&cj);
            reachable_vars(g, gamma, &start).len() == gamma.len()
        }
    }
}

/// Variables of `gamma` reachable from the checks `start` by walks whose
/// variables lie in `gamma`.
fn reachable_vars(g: &TannerGraph, gamma: &[usize], start: &[usize]) -> Vec<usize> {
    let mut check_seen = vec![false; g.m()];
    let mut var_seen = vec![false; g.n()];
    let mut queue: Vec<usize> = start.to_vec();
    for &c in start {
        check_seen[c] = true;
    }
    let mut out = Vec::new();
    while let Some(c) = queue.pop() {
        for &v in g.check_vars(c) {
            if !var_seen[v] && gamma.contains(&v) {
                var_seen[v] = true;
                out.push(v);
                for &d in g.var_checks(v) {
                    if !check_seen[d] {
                        check_seen[d] = true;
                        queue.push(d);
                    }
                }
            }
        }
    }
    out
}

/// Whether a check-variable walk with all variables in `gamma` joins a check
/// of `from` to a check of `to`. A shared check is a walk of length zero.
fn walk_joins(g: &TannerGraph, gamma: &[usize], from: &[usize], to: &[usize]) -> bool {
    if from.iter().any(|c| to.contains(c)) {
        return true;
    }
    let reached = reachable_vars(g, gamma, from);
    reached
        .iter()
        .any(|&v| g.var_checks(v).iter().any(|c| to.contains(c)))
}

/// Candidate pool for `Gamma`: variables with at least one check, all of
/// them inside the cluster.
fn gamma_pool(g: &TannerGraph, checks: &[usize], i: usize, j: usize, endpoints: bool) -> Vec<usize> {
    let mut sorted = checks.to_vec();
    sorted.sort_unstable();
    (0..g.n())
        .filter(|&v| endpoints || (v != i && v != j))
        .filter(|&v| !g.var_checks(v).is_empty() && is_subset(g.var_checks(v), &sorted))
        .collect()
}

/// Every `Gamma` compatible with the cluster, by exhaustive subset search.
pub fn enumerate_compatible(
    g: &TannerGraph,
    checks: &[usize],
    i: usize,
    j: usize,
    opts: &ExpansionOptions,
) -> Result<Vec<CompatibleSet>> {
    let pool = gamma_pool(g, checks, i, j, opts.endpoints_in_gamma);
    if pool.len() > MAX_POOL {
        return Err(Error::Capacity {
            needed_log2: pool.len() as u32,
            budget_log2: MAX_POOL as u32,
        });
    }
    let mut out = Vec::new();
    for mask in 0u64..1 << pool.len() {
        let gamma: Vec<usize> = (0..pool.len()).filter(|b| mask >> b & 1 == 1).map(|b| pool[b]).collect();
        if is_compatible(g, checks, i, j, &gamma, opts.rule) {
            out.push(gamma);
        }
    }
    Ok(out)
}

/// Bit mask, over the positions of `checks`, of the checks of `v`.
fn local_mask(g: &TannerGraph, checks: &[usize], v: usize) -> u32 {
    g.var_checks(v)
        .iter()
        .map(|c| 1u32 << checks.binary_search(c).expect("checks of a pool variable lie in the cluster"))
        .fold(0, |a, b| a | b)
}

fn tau(mask: u32, u: u32) -> f64 {
    if (mask & u).count_ones() % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `e^{-2 l}`, zero for a clamped bit.
fn damping(l: &LlrVector, v: usize) -> f64 {
    if l.is_clamped(v) {
        0.0
    } else {
        (-2.0 * l.value(v)).exp()
    }
}

struct KernelPlan {
    gamma_masks: Vec<Vec<u32>>,
    gamma_vars: Vec<Vec<usize>>,
    mask_i: u32,
    mask_j: u32,
    width: usize,
}

impl KernelPlan {
    fn new(g: &TannerGraph, checks: &[usize], i: usize, j: usize, gammas: &[CompatibleSet]) -> Result<Self> {
        if checks.len() > MAX_KERNEL_CHECKS {
            return Err(Error::Capacity {
                needed_log2: 2 * checks.len() as u32,
                budget_log2: 2 * MAX_KERNEL_CHECKS as u32,
            });
        }
        Ok(Self {
            gamma_masks: gammas
                .iter()
                .map(|gm| gm.iter().map(|&v| local_mask(g, checks, v)).collect())
                .collect(),
            gamma_vars: gammas.to_vec(),
            mask_i: local_mask(g, checks, i),
            mask_j: local_mask(g, checks, j),
            width: checks.len(),
        })
    }

    /// Contribution of one replica pair `(u1, u2)`, summed over `Gamma`.
    fn config(&self, a: &[f64], u1: u32, u2: u32) -> f64 {
        let pre = (tau(self.mask_i, u1) - tau(self.mask_i, u2)) * (tau(self.mask_j, u1) - tau(self.mask_j, u2));
        if pre == 0.0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for (masks, vars) in self.gamma_masks.iter().zip(&self.gamma_vars) {
            let mut prod = 1.0;
            for (&mk, &v) in masks.iter().zip(vars) {
                let (t1, t2) = (tau(mk, u1), tau(mk, u2));
                let ak = a[v];
                prod *= ak * (t1 + t2) + ak * ak * t1 * t2;
            }
            sum += prod;
        }
        pre * sum
    }

    fn total(&self, a: &[f64]) -> f64 {
        let size = 1u32 << self.width;
        let mut acc = 0.0;
        for u1 in 0..size {
            for u2 in 0..size {
                acc += self.config(a, u1, u2);
            }
        }
        acc
    }
}

/// Two-replica kernel of a cluster.
pub fn kernel(
    g: &TannerGraph,
    checks: &[usize],
    l: &LlrVector,
    i: usize,
    j: usize,
    opts: &ExpansionOptions,
) -> Result<f64> {
    let mut sorted = checks.to_vec();
    sorted.sort_unstable();
    let gammas = enumerate_compatible(g, &sorted, i, j, opts)?;
    let plan = KernelPlan::new(g, &sorted, i, j, &gammas)?;
    let a: Vec<f64> = (0..g.n()).map(|v| damping(l, v)).collect();
    Ok(plan.total(&a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTerm {
    pub checks: Vec<usize>,
    pub witness: Vec<usize>,
    pub compatible_sets: usize,
    pub kernel: f64,
    /// `Z_G(X^c) / Z_G`
    pub ratio: f64,
    /// `kernel * ratio^2 / 2`
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// Dual covariance computed directly.
    pub lhs: f64,
    /// Sum of the cluster contributions.
    pub rhs: f64,
    /// `|lhs - rhs| / max(1, |lhs|)`
    pub residual: f64,
    pub truncated: bool,
    pub terms: Vec<ClusterTerm>,
}

pub fn identity_check(g: &TannerGraph, l: &LlrVector, i: usize, j: usize, opts: &ExpansionOptions) -> Result<IdentityCheck> {
    let enum_opts = EnumOptions::default();
    let full = dual_exact_with(g, l, &[i, j], &[(i, j)], &enum_opts)?;
    let lhs = full.pairs[0].covariance;
    let list = enumerate_clusters(g, i, j, opts)?;
    let a: Vec<f64> = (0..g.n()).map(|v| damping(l, v)).collect();
    let mut terms = Vec::with_capacity(list.clusters.len());
    for cl in &list.clusters {
        let gammas = enumerate_compatible(g, &cl.checks, i, j, opts)?;
        let plan = KernelPlan::new(g, &cl.checks, i, j, &gammas)?;
        let k = plan.total(&a);
        let rest = restricted_partitions_with(g, &cl.checks, l, &enum_opts)?;
        let ratio = rest.z_g_sign * (rest.log_z_g - full.log_abs_z).exp() * full.sign;
        terms.push(ClusterTerm {
            checks: cl.checks.clone(),
            witness: cl.witness.clone(),
            compatible_sets: gammas.len(),
            kernel: k,
            ratio,
            contribution: 0.5 * k * ratio * ratio,
        });
    }
    let rhs: f64 = terms.iter().map(|t| t.contribution).sum();
    Ok(IdentityCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / lhs.abs().max(1.0),
        truncated: list.truncated,
        terms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    /// Estimate of `E |K|^{4s}`.
    pub t1_sq: Estimate,
    /// Estimate of `E (Z_G(X^c) / Z_G)^{8s}`.
    pub t2_sq: Estimate,
    pub samples: u64,
}

/// Monte Carlo estimates of the kernel and partition-ratio moments of one
/// cluster at uniform noise level `eps`.
#[allow(clippy::too_many_arguments)]
pub fn t1_t2_diagnostics(
    g: &TannerGraph,
    checks: &[usize],
    i: usize,
    j: usize,
    eps: f64,
    s: f64,
    samples: u64,
    seed: u64,
    opts: &ExpansionOptions,
) -> Result<ClusterDiagnostics> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("noise level must be finite and > 0"));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let mut sorted = checks.to_vec();
    sorted.sort_unstable();
    let gammas = enumerate_compatible(g, &sorted, i, j, opts)?;
    let plan = KernelPlan::new(g, &sorted, i, j, &gammas)?;
    let streams = Streams::new(seed);
    let enum_opts = EnumOptions::default();
    let mut t1 = MeanStats::new();
    let mut t2 = MeanStats::new();
    for k in 0..samples {
        let mut rng = streams.rng(&[tag::NOISE, k]);
        let values: Vec<f64> = (0..g.n()).map(|_| draw_llr(eps, &mut rng)).collect();
        let l = LlrVector::from_values(values);
        let a: Vec<f64> = (0..g.n()).map(|v| damping(&l, v)).collect();
        t1.push(plan.total(&a).abs().powf(4.0 * s));
        let full = dual_exact_with(g, &l, &[], &[], &enum_opts)?;
        let rest = restricted_partitions_with(g, &sorted, &l, &enum_opts)?;
        let ratio = (rest.log_z_g - full.log_abs_z).exp();
        t2.push(ratio.powf(8.0 * s));
    }
    Ok(ClusterDiagnostics {
        t1_sq: Estimate::from(&t1),
        t2_sq: Estimate::from(&t2),
        samples,
    })
}
