//! Density evolution by population dynamics, the resulting GEXIT value, and
//! a check of DE against exact marginals on sampled tree neighborhoods.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{boxplus, clamp_msg, MSG_CLAMP};
use crate::channel::{draw_llr, sample_llr, NoiseSpec};
use crate::ensemble::CodeEnsembleSpec;
use crate::error::{Error, Result};
use crate::exact::{neighborhood_marginal, Boundary, EnumOptions};
use crate::rng::{tag, Streams};
use crate::stats::{Estimate, MeanStats};

/// Samples per RNG stream. Fixed so results do not depend on thread count.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DePopulation {
    /// Check-to-variable messages after the last iteration.
    pub messages: Vec<f64>,
    /// Graph depth reached (twice the number of iterations).
    pub depth: usize,
    /// `tanh(l + Delta)` for each final node sample.
    pub soft: Vec<f64>,
    /// Mean of `soft` with its standard error.
    pub mean_soft: Estimate,
    pub ensemble: CodeEnsembleSpec,
    pub eps: f64,
    pub seed: u64,
}

impl DePopulation {
    pub fn population(&self) -> usize {
        self.messages.len()
    }
}

fn chunked<T: Send>(p: usize, f: impl Fn(usize, std::ops::Range<usize>) -> Vec<T> + Sync) -> Vec<T> {
    let chunks = p.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|k| f(k, k * CHUNK..((k + 1) * CHUNK).min(p)))
        .collect();
    parts.into_iter().flatten().collect()
}

/// Population dynamics for `depth / 2` iterations starting from all-zero
/// check messages (channel values as the only information at the leaves).
pub fn density_evolution(
    spec: &CodeEnsembleSpec,
    eps: f64,
    depth: usize,
    population: usize,
    seed: u64,
) -> Result<DePopulation> {
    spec.validate()?;
    if !depth.is_multiple_of(2) {
        return Err(Error::invalid(format!("depth must be even, got {depth}")));
    }
    if population < 2 {
        return Err(Error::invalid("population needs at least two samples"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("noise level must be finite and > 0"));
    }
    let lambda = spec
        .var_degrees
        .edge_perspective()
        .ok_or_else(|| Error::InconsistentEnsemble("variable side has no edges".into()))?
        .sampler();
    let rho = spec
        .check_degrees
        .edge_perspective()
        .ok_or_else(|| Error::InconsistentEnsemble("check side has no edges".into()))?
        .sampler();
    let node = spec.var_degrees.sampler();
    let streams = Streams::new(seed);
    let mut checks = vec![0.0; population];

    for gen in 0..(depth / 2) as u64 {
        let vars: Vec<f64> = chunked(population, |k, range| {
            let mut rng = streams.rng(&[tag::DE, gen, 0, k as u64]);
            range
                .map(|_| {
                    let deg = lambda.sample(&mut rng);
                    let mut v = draw_llr(eps, &mut rng);
                    for _ in 1..deg {
                        v += checks[rng.random_range(0..population)];
                    }
                    clamp_msg(v)
                })
                .collect()
        });
        checks = chunked(population, |k, range| {
            let mut rng = streams.rng(&[tag::DE, gen, 1, k as u64]);
            range
                .map(|_| {
                    let deg = rho.sample(&mut rng);
                    let mut acc: Option<f64> = None;
                    for _ in 1..deg {
                        let v = vars[rng.random_range(0..population)];
                        acc = Some(acc.map_or(v, |a| boxplus(a, v)));
                    }
                    clamp_msg(acc.unwrap_or(MSG_CLAMP))
                })
                .collect()
        });
    }

    let soft: Vec<f64> = chunked(population, |k, range| {
        let mut rng = streams.rng(&[tag::DE, u64::MAX, 2, k as u64]);
        range
            .map(|_| {
                let deg = node.sample(&mut rng);
                let mut total = draw_llr(eps, &mut rng);
                for _ in 0..deg {
                    total += checks[rng.random_range(0..population)];
                }
                total.tanh()
            })
            .collect()
    });
    let stats: MeanStats = soft.iter().copied().collect();
    Ok(DePopulation {
        messages: checks,
        depth,
        soft,
        mean_soft: Estimate::from(&stats),
        ensemble: spec.clone(),
        eps,
        seed,
    })
}

/// `(E tanh(l + Delta) - 1) / 2` at the given depth.
pub fn de_gexit(spec: &CodeEnsembleSpec, eps: f64, depth: usize, population: usize, seed: u64) -> Result<Estimate> {
    Ok(gexit_from(&density_evolution(spec, eps, depth, population, seed)?))
}

pub fn gexit_from(pop: &DePopulation) -> Estimate {
    Estimate::new(0.5 * (pop.mean_soft.value - 1.0), 0.5 * pop.mean_soft.stderr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEquivalence {
    /// Mean exact root marginal over sampled tree neighborhoods.
    pub tree_mean: Estimate,
    pub de_mean: Estimate,
    /// `tree_mean - de_mean` with the combined standard error.
    pub difference: Estimate,
    pub accepted: usize,
    pub attempts: usize,
    /// Fraction of sampled neighborhoods that were not trees.
    pub rejection_rate: f64,
}

/// Rejection rate above which tree sampling is abandoned.
const MAX_REJECTION: f64 = 0.99;

/// Compares the free-boundary root marginal on sampled tree neighborhoods
/// with density evolution at the same depth.
#[allow(clippy::too_many_arguments)]
pub fn tree_equivalence_check(
    spec: &CodeEnsembleSpec,
    n: usize,
    root: usize,
    depth: usize,
    eps: f64,
    trials: usize,
    population: usize,
    seed: u64,
) -> Result<TreeEquivalence> {
    if root >= n {
        return Err(Error::invalid(format!("root {root} out of range for n = {n}")));
    }
    let de = density_evolution(spec, eps, depth, population, seed)?;
    let streams = Streams::new(seed);
    let noise = NoiseSpec::uniform(n, eps)?;
    let opts = EnumOptions::default();
    let mut stats = MeanStats::new();
    let mut attempts = 0usize;
    let max_attempts = ((trials as f64) / (1.0 - MAX_REJECTION)).ceil() as usize;
    while stats.count() < trials as u64 {
        if attempts >= max_attempts {
            return Err(Error::TreesTooRare {
                accepted: stats.count() as usize,
                attempts,
            });
        }
        let attempt = attempts as u64;
        attempts += 1;
        let g = spec.sample(n, &mut streams.rng(&[tag::GRAPH, attempt]))?;
        let nb = g.neighborhood(root, depth)?;
        if !nb.is_tree {
            continue;
        }
        let l = sample_llr(&noise, &streams, &[tag::NOISE, attempt]);
        let value = match neighborhood_marginal(&g, &nb, &l, Boundary::Free, &opts) {
            Ok(v) => v,
            // Too many codewords to enumerate: BP is exact on a tree.
            Err(e) if e.is_capacity() => {
                let (sub, local_root) = nb.subgraph(&g);
                let local = crate::exact::restrict_llr(&l, &nb.vars);
                crate::bp::bp_decode(&sub, &local, depth / 2)?.estimates[local_root]
            }
            Err(e) => return Err(e),
        };
        stats.push(value);
    }
    let tree_mean = Estimate::from(&stats);
    Ok(TreeEquivalence {
        difference: tree_mean.minus(&de.mean_soft),
        tree_mean,
        de_mean: de.mean_soft,
        accepted: trials,
        attempts,
        rejection_rate: 1.0 - trials as f64 / attempts as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gaussian_expectation;
    use crate::ensemble::DegreeDistribution;

    /// `E tanh L` for `L ~ N(k/eps^2, k/eps^2)`.
    fn tanh_oracle(eps: f64, k: f64) -> f64 {
        let mean = k / (eps * eps);
        gaussian_expectation(mean, mean.sqrt(), &[], f64::tanh).value
    }

    #[test]
    fn depth_zero_is_channel_only() {
        let eps = 0.8f64;
        let pop = density_evolution(&CodeEnsembleSpec::regular(3, 6), eps, 0, 200_000, 1).unwrap();
        let want = tanh_oracle(eps, 1.0);
        assert!((pop.mean_soft.value - want).abs() < 4.0 * pop.mean_soft.stderr);
        assert!(pop.messages.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn rejects_edgeless_ensembles() {
        let spec = CodeEnsembleSpec::new(DegreeDistribution::regular(0), DegreeDistribution::regular(6));
        assert!(matches!(
            density_evolution(&spec, 0.5, 2, 100, 1),
            Err(Error::InconsistentEnsemble(_))
        ));
    }

    #[test]
    fn repetition_chain_matches_quadrature() {
        // Degree-2 variables and checks: Delta is a sum of `depth` channel values.
        let eps = 1.0f64;
        for depth in [2, 4] {
            let pop = density_evolution(&CodeEnsembleSpec::regular(2, 2), eps, depth, 1_000_000, 2).unwrap();
            let want = tanh_oracle(eps, (depth + 1) as f64);
            assert!((pop.mean_soft.value - want).abs() < 1e-3, "depth {depth}");
        }
    }

    #[test]
    fn regular_ensemble_converges() {
        let spec = CodeEnsembleSpec::regular(3, 6);
        let eps = 0.3f64.sqrt();
        let a = density_evolution(&spec, eps, 18, 100_000, 3).unwrap().mean_soft;
        let b = density_evolution(&spec, eps, 20, 100_000, 3).unwrap().mean_soft;
        assert!((a.value - b.value).abs() < 3.0 * a.minus(&b).stderr.max(1e-12));
    }

    #[test]
    fn gexit_is_consistent_with_population() {
        let spec = CodeEnsembleSpec::regular(3, 6);
        let pop = density_evolution(&spec, 0.3f64.sqrt(), 6, 20_000, 4).unwrap();
        let g = gexit_from(&pop);
        let direct = 0.5 * (pop.soft.iter().sum::<f64>() / pop.soft.len() as f64 - 1.0);
        assert!((g.value - direct).abs() < 1e-12);
        assert_eq!(g, de_gexit(&spec, 0.3f64.sqrt(), 6, 20_000, 4).unwrap());
    }

    #[test]
    fn gexit_limits() {
        let reg = de_gexit(&CodeEnsembleSpec::regular(3, 6), 0.2, 10, 20_000, 5).unwrap();
        assert!(reg.value.abs() < 1e-9, "{reg:?}");
        let poi = de_gexit(&CodeEnsembleSpec::poisson(2.0, 4).unwrap(), 0.45, 10, 100_000, 5).unwrap();
        assert!(poi.value < -5.0 * poi.stderr, "{poi:?}");
    }

    #[test]
    fn soft_estimate_grows_with_snr() {
        let spec = CodeEnsembleSpec::regular(3, 6);
        let mut prev: Option<Estimate> = None;
        for eps2 in [1.0, 0.7, 0.5, 0.35] {
            let m = density_evolution(&spec, f64::sqrt(eps2), 8, 50_000, 6).unwrap().mean_soft;
            assert!((-1.0..=1.0).contains(&m.value));
            if let Some(p) = prev {
                assert!(m.value - p.value > -3.0 * m.minus(&p).stderr);
            }
            prev = Some(m);
        }
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let spec = CodeEnsembleSpec::poisson(2.0, 4).unwrap();
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| density_evolution(&spec, 0.7, 4, 10_000, 7).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn tree_check_at_depth_two() {
        let r = tree_equivalence_check(&CodeEnsembleSpec::regular(3, 6), 200, 0, 2, 0.5f64.sqrt(), 1000, 100_000, 8).unwrap();
        assert!(r.difference.value.abs() < 3.0 * r.difference.stderr, "{r:?}");
        assert!(r.rejection_rate > 0.0 && r.rejection_rate < 0.5, "{r:?}");
    }

    #[test]
    fn tree_check_at_depth_zero() {
        let r = tree_equivalence_check(&CodeEnsembleSpec::regular(3, 6), 60, 0, 0, 0.7, 400, 50_000, 9).unwrap();
        assert_eq!(r.attempts, 400);
        let want = tanh_oracle(0.7, 1.0);
        assert!((r.tree_mean.value - want).abs() < 4.0 * r.tree_mean.stderr);
        assert!((r.de_mean.value - want).abs() < 4.0 * r.de_mean.stderr);
    }

    #[test]
    fn trees_too_rare_is_reported() {
        // Depth 6 neighborhoods in a 12-bit (3,6) code always contain cycles.
        let err = tree_equivalence_check(&CodeEnsembleSpec::regular(3, 6), 12, 0, 6, 0.7, 5, 1000, 10).unwrap_err();
        assert!(matches!(err, Error::TreesTooRare { .. }));
    }
}
