//! Cluster-expansion identity checks with a full per-cluster dump under both
//! readings of the compatibility rule.

use serde::{Deserialize, Serialize};

use crate::channel::{sample_llr, NoiseSpec};
use crate::cluster::{
    enumerate_clusters, enumerate_compatible, identity_check, kernel, t1_t2_diagnostics, ExpansionOptions, GammaRule,
};
use crate::error::{Error, Result};
use crate::graph::TannerGraph;
use crate::rng::{tag, Streams};
use crate::stats::Estimate;

/// A compatible set and the rules that accept it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaDump {
    pub gamma: Vec<usize>,
    pub literal: bool,
    pub linked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDump {
    pub checks: Vec<usize>,
    pub witness: Vec<usize>,
    pub gammas: Vec<GammaDump>,
    /// Values at the worst noise draw of the pair.
    pub literal_kernel: f64,
    pub linked_kernel: f64,
    pub ratio: f64,
    pub literal_contribution: f64,
    pub linked_contribution: f64,
    pub t1_sq: Option<Estimate>,
    pub t2_sq: Option<Estimate>,
}

impl ClusterDump {
    /// `T2^2 <= 1` within three standard errors (vacuous without diagnostics).
    pub fn t2_within_bound(&self) -> bool {
        self.t2_sq.is_none_or(|t| t.value <= 1.0 + 3.0 * t.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    pub literal_max_residual: f64,
    pub linked_max_residual: f64,
    /// Draw with the largest literal residual; the dump refers to it.
    pub worst_draw: u64,
    pub lhs: f64,
    pub literal_rhs: f64,
    pub linked_rhs: f64,
    pub truncated: bool,
    pub clusters: Vec<ClusterDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCheckReport {
    pub code: String,
    pub eps: f64,
    pub seed: u64,
    pub draws: u64,
    pub tolerance: f64,
    pub endpoints_in_gamma: bool,
    pub pairs: Vec<PairCheck>,
    pub literal_holds: bool,
    pub linked_holds: bool,
    pub t2_within_bound: bool,
    pub verdict: String,
}

/// Runs the identity under both compatibility rules on `draws` noise
/// realizations for each pair and dumps every cluster and compatible set.
/// With `diagnostic_samples > 0` the kernel and ratio moments of each
/// cluster are estimated at exponent `s`.
#[allow(clippy::too_many_arguments)]
pub fn cluster_check(
    g: &TannerGraph,
    code: &str,
    pairs: &[(usize, usize)],
    eps: f64,
    draws: u64,
    tolerance: f64,
    s: f64,
    diagnostic_samples: u64,
    seed: u64,
    opts: &ExpansionOptions,
) -> Result<ClusterCheckReport> {
    if draws == 0 {
        return Err(Error::invalid("need at least one noise draw"));
    }
    let noise = NoiseSpec::uniform(g.n(), eps)?;
    let streams = Streams::new(seed);
    let literal = ExpansionOptions {
        rule: GammaRule::Literal,
        ..*opts
    };
    let linked = ExpansionOptions {
        rule: GammaRule::Linked,
        ..*opts
    };
    let mut out = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i == j || i >= g.n() || j >= g.n() {
            return Err(Error::invalid(format!("pair ({i}, {j}) is not two distinct bits of the code")));
        }
        let mut lit_max = 0.0f64;
        let mut lin_max = 0.0f64;
        let mut worst = (0u64, f64::NEG_INFINITY);
        for k in 0..draws {
            let l = sample_llr(&noise, &streams, &[tag::NOISE, k]);
            let a = identity_check(g, &l, i, j, &literal)?;
            let b = identity_check(g, &l, i, j, &linked)?;
            lin_max = lin_max.max(b.residual);
            lit_max = lit_max.max(a.residual);
            if a.residual > worst.1 {
                worst = (k, a.residual);
            }
        }
        let l = sample_llr(&noise, &streams, &[tag::NOISE, worst.0]);
        let a = identity_check(g, &l, i, j, &literal)?;
        let b = identity_check(g, &l, i, j, &linked)?;
        let list = enumerate_clusters(g, i, j, opts)?;
        let mut clusters = Vec::with_capacity(list.clusters.len());
        for (t, cl) in list.clusters.iter().enumerate() {
            let lit = enumerate_compatible(g, &cl.checks, i, j, &literal)?;
            let lin = enumerate_compatible(g, &cl.checks, i, j, &linked)?;
            let mut gammas: Vec<GammaDump> = lit
                .iter()
                .chain(&lin)
                .map(|gamma| GammaDump {
                    gamma: gamma.clone(),
                    literal: lit.contains(gamma),
                    linked: lin.contains(gamma),
                })
                .collect();
            gammas.sort_by(|x, y| x.gamma.len().cmp(&y.gamma.len()).then_with(|| x.gamma.cmp(&y.gamma)));
            gammas.dedup_by(|x, y| x.gamma == y.gamma);
            let ratio = a.terms[t].ratio;
            let (k_lit, k_lin) = (
                kernel(g, &cl.checks, &l, i, j, &literal)?,
                kernel(g, &cl.checks, &l, i, j, &linked)?,
            );
            let (t1, t2) = if diagnostic_samples > 1 {
                let d = t1_t2_diagnostics(g, &cl.checks, i, j, eps, s, diagnostic_samples, seed, opts)?;
                (Some(d.t1_sq), Some(d.t2_sq))
            } else {
                (None, None)
            };
            clusters.push(ClusterDump {
                checks: cl.checks.clone(),
                witness: cl.witness.clone(),
                gammas,
                literal_kernel: k_lit,
                linked_kernel: k_lin,
                ratio,
                literal_contribution: 0.5 * k_lit * ratio * ratio,
                linked_contribution: 0.5 * k_lin * ratio * ratio,
                t1_sq: t1,
                t2_sq: t2,
            });
        }
        out.push(PairCheck {
            i,
            j,
            literal_max_residual: lit_max,
            linked_max_residual: lin_max,
            worst_draw: worst.0,
            lhs: a.lhs,
            literal_rhs: a.rhs,
            linked_rhs: b.rhs,
            truncated: list.truncated,
            clusters,
        });
    }
    let literal_holds = out.iter().all(|p| p.literal_max_residual < tolerance);
    let linked_holds = out.iter().all(|p| p.linked_max_residual < tolerance);
    let t2_within_bound = out.iter().flat_map(|p| &p.clusters).all(ClusterDump::t2_within_bound);
    let failing: Vec<String> = out
        .iter()
        .filter(|p| p.literal_max_residual >= tolerance)
        .map(|p| format!("({}, {})", p.i, p.j))
        .collect();
    let verdict = match (literal_holds, linked_holds) {
        (true, _) => format!("literal rule holds on all {} pairs", out.len()),
        (false, true) => format!(
            "literal rule fails on pairs {}; linked rule holds on all pairs",
            failing.join(" ")
        ),
        (false, false) => format!("literal rule fails on pairs {}; linked rule also fails", failing.join(" ")),
    };
    Ok(ClusterCheckReport {
        code: code.to_string(),
        eps,
        seed,
        draws,
        tolerance,
        endpoints_in_gamma: opts.endpoints_in_gamma,
        pairs: out,
        literal_holds,
        linked_holds,
        t2_within_bound,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn path_endpoints_hold_literally() {
        let g = builtin::path_toy();
        let r = cluster_check(&g, "path2", &[(0, 2)], 0.5f64.sqrt(), 20, 1e-8, 0.25, 200, 1, &ExpansionOptions::default()).unwrap();
        assert!(r.literal_holds && r.linked_holds, "{r:?}");
        assert!(r.t2_within_bound);
        assert_eq!(r.pairs[0].clusters.len(), 1);
        assert!(r.verdict.starts_with("literal rule holds"));
    }

    #[test]
    fn shared_check_reports_the_failing_convention() {
        let g = builtin::spc3();
        let r = cluster_check(&g, "spc3", &[(0, 1)], 1.0, 5, 1e-8, 0.25, 0, 2, &ExpansionOptions::default()).unwrap();
        assert!(!r.literal_holds && r.linked_holds, "{r:?}");
        let empty = r.pairs[0].clusters[0].gammas.iter().find(|x| x.gamma.is_empty()).unwrap();
        assert!(empty.linked && !empty.literal);
        assert!(r.verdict.contains("linked rule holds"));
    }

    #[test]
    fn rejects_degenerate_pairs() {
        let g = builtin::spc3();
        assert!(cluster_check(&g, "spc3", &[(1, 1)], 1.0, 1, 1e-8, 0.25, 0, 2, &ExpansionOptions::default()).is_err());
    }
}
