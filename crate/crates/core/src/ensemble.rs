//! Degree-distribution ensembles and configuration-model sampling.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TannerGraph;

const PROB_TOLERANCE: f64 = 1e-12;
const POISSON_TAIL: f64 = 1e-12;
const MAX_SAMPLING_ATTEMPTS: usize = 10_000;

/// Node-perspective degree distribution: `(degree, probability)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    entries: Vec<(usize, f64)>,
}

impl DegreeDistribution {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.retain(|&(_, p)| p > 0.0);
        entries.sort_by_key(|&(d, _)| d);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("degree {} listed twice", w[0].0)));
            }
        }
        if entries.iter().any(|&(_, p)| !p.is_finite() || p < 0.0) {
            return Err(Error::invalid("degree probabilities must be finite and non-negative"));
        }
        let total: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::invalid(format!(
                "degree probabilities sum to {total}, expected 1"
            )));
        }
        Ok(DegreeDistribution { entries })
    }

    pub fn regular(d: usize) -> Self {
        DegreeDistribution {
            entries: vec![(d, 1.0)],
        }
    }

    /// Poisson(mean) truncated where the CDF exceeds `1 - 1e-12`, renormalized.
    pub fn poisson(mean: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::invalid(format!("Poisson mean must be positive, got {mean}")));
        }
        let mut entries = Vec::new();
        let mut p = (-mean).exp();
        let mut cdf = 0.0;
        let mut k = 0usize;
        loop {
            entries.push((k, p));
            cdf += p;
            if cdf > 1.0 - POISSON_TAIL {
                break;
            }
            k += 1;
            p *= mean / k as f64;
        }
        let total: f64 = entries.iter().map(|&(_, p)| p).sum();
        for e in &mut entries {
            e.1 /= total;
        }
        Ok(DegreeDistribution { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn max_degree(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0)
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&(d, p)| d as f64 * p).sum()
    }

    /// Edge-perspective distribution `d * P(d) / mean`, degree 0 dropped.
    pub fn edge_perspective(&self) -> Option<DegreeDistribution> {
        let mean = self.mean();
        if mean <= 0.0 {
            return None;
        }
        Some(DegreeDistribution {
            entries: self
                .entries
                .iter()
                .filter(|&&(d, _)| d > 0)
                .map(|&(d, p)| (d, d as f64 * p / mean))
                .collect(),
        })
    }

    pub fn sampler(&self) -> DegreeSampler {
        let mut cdf = Vec::with_capacity(self.entries.len());
        let mut acc = 0.0;
        for &(_, p) in &self.entries {
            acc += p;
            cdf.push(acc);
        }
        DegreeSampler {
            degrees: self.entries.iter().map(|e| e.0).collect(),
            cdf,
        }
    }
}

/// Inverse-CDF sampler over a degree table.
#[derive(Debug, Clone)]
pub struct DegreeSampler {
    degrees: Vec<usize>,
    cdf: Vec<f64>,
}

impl DegreeSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let u: f64 = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u);
        self.degrees[k.min(self.degrees.len() - 1)]
    }
}

/// What to do with repeated (variable, check) pairs produced by the matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MultiEdgePolicy {
    /// Remove repeated edges in pairs (entries of H taken mod 2).
    #[default]
    Collapse,
    /// Redraw the matching until the graph is simple.
    Reject,
}

/// A standard irregular LDPC ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeEnsembleSpec {
    pub var_degrees: DegreeDistribution,
    pub check_degrees: DegreeDistribution,
    /// Set when the variable side is a (truncated) Poisson profile.
    pub poisson_mean: Option<f64>,
}

impl CodeEnsembleSpec {
    pub fn new(var_degrees: DegreeDistribution, check_degrees: DegreeDistribution) -> Self {
        CodeEnsembleSpec {
            var_degrees,
            check_degrees,
            poisson_mean: None,
        }
    }

    pub fn regular(dv: usize, dc: usize) -> Self {
        Self::new(DegreeDistribution::regular(dv), DegreeDistribution::regular(dc))
    }

    /// Poisson(`mean`) variable degrees with regular checks of degree `dc`.
    pub fn poisson(mean: f64, dc: usize) -> Result<Self> {
        Ok(CodeEnsembleSpec {
            var_degrees: DegreeDistribution::poisson(mean)?,
            check_degrees: DegreeDistribution::regular(dc),
            poisson_mean: Some(mean),
        })
    }

    /// Rejects ensembles without edges on either side.
    pub fn validate(&self) -> Result<()> {
        if self.var_degrees.mean() <= 0.0 {
            return Err(Error::InconsistentEnsemble("variable side has no edges".into()));
        }
        if self.check_degrees.mean() <= 0.0 {
            return Err(Error::InconsistentEnsemble("check side has no edges".into()));
        }
        Ok(())
    }

    /// Design rate `1 - mean_var_degree / mean_check_degree`.
    pub fn design_rate(&self) -> f64 {
        1.0 - self.var_degrees.mean() / self.check_degrees.mean()
    }

    /// Samples a Tanner graph on `n` variables from the configuration model.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TannerGraph> {
        self.sample_with(n, MultiEdgePolicy::Collapse, rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        n: usize,
        policy: MultiEdgePolicy,
        rng: &mut R,
    ) -> Result<TannerGraph> {
        self.validate()?;
        if n == 0 {
            return Err(Error::invalid("ensemble sample needs n > 0"));
        }
        if let ([(dv, _)], [(dc, _)]) = (self.var_degrees.entries(), self.check_degrees.entries()) {
            if !(n * dv).is_multiple_of(*dc) {
                return Err(Error::InconsistentEnsemble(format!(
                    "{n} variables of degree {dv} cannot be matched to checks of degree {dc}"
                )));
            }
        }
        let (var_deg, check_deg) = self.sample_degree_sequences(n, rng)?;
        let mut var_sockets: Vec<usize> = var_deg
            .iter()
            .enumerate()
            .flat_map(|(v, &d)| std::iter::repeat_n(v, d))
            .collect();
        let check_sockets: Vec<usize> = check_deg
            .iter()
            .enumerate()
            .flat_map(|(c, &d)| std::iter::repeat_n(c, d))
            .collect();
        for _ in 0..MAX_SAMPLING_ATTEMPTS {
            var_sockets.shuffle(rng);
            let mut mult: HashMap<(usize, usize), usize> = HashMap::new();
            for (&v, &c) in var_sockets.iter().zip(&check_sockets) {
                *mult.entry((v, c)).or_insert(0) += 1;
            }
            let simple = mult.values().all(|&k| k == 1);
            if !simple && policy == MultiEdgePolicy::Reject {
                continue;
            }
            let mut checks = vec![Vec::new(); check_deg.len()];
            for ((v, c), k) in mult {
                if k % 2 == 1 {
                    checks[c].push(v);
                }
            }
            return TannerGraph::from_checks(n, checks);
        }
        Err(Error::InconsistentEnsemble(
            "no simple matching found within the attempt budget".into(),
        ))
    }

    /// Draws i.i.d. variable degrees, then check degrees until their total
    /// reaches the variable edge count; both are redrawn on overshoot.
    fn sample_degree_sequences<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let vs = self.var_degrees.sampler();
        let cs = self.check_degrees.sampler();
        for _ in 0..MAX_SAMPLING_ATTEMPTS {
            let var_deg: Vec<usize> = (0..n).map(|_| vs.sample(rng)).collect();
            let edges: usize = var_deg.iter().sum();
            if edges == 0 {
                continue;
            }
            let mut check_deg = Vec::new();
            let mut total = 0;
            while total < edges {
                let d = cs.sample(rng);
                if d == 0 {
                    continue;
                }
                check_deg.push(d);
                total += d;
            }
            if total == edges {
                return Ok((var_deg, check_deg));
            }
        }
        Err(Error::InconsistentEnsemble(
            "edge counts of the two sides never matched".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities_must_sum_to_one() {
        assert!(DegreeDistribution::new(vec![(2, 0.5), (3, 0.4)]).is_err());
        assert!(DegreeDistribution::new(vec![(2, 0.5), (3, 0.5)]).is_ok());
    }

    #[test]
    fn poisson_table_is_normalized_and_truncated() {
        let d = DegreeDistribution::poisson(2.0).unwrap();
        let total: f64 = d.entries().iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((d.mean() - 2.0).abs() < 1e-9);
        assert!(d.max_degree() < 25);
        assert!((d.entries()[0].1 - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn edge_perspective_of_poisson_is_shifted_poisson() {
        let d = DegreeDistribution::poisson(2.0).unwrap();
        let e = d.edge_perspective().unwrap();
        for &(k, p) in e.entries().iter().take(6) {
            let expected = (-2.0f64).exp() * 2f64.powi(k as i32 - 1)
                / (1..k).map(|x| x as f64).product::<f64>();
            assert!((p - expected).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn regular_36_gives_fifteen_checks() {
        let spec = CodeEnsembleSpec::regular(3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = spec.sample(30, &mut rng).unwrap();
        assert_eq!(g.m(), 15);
        assert!(g.dl_max() <= 3 && g.dr_max() <= 6);
    }

    #[test]
    fn regular_36_simple_sample_has_exact_degrees() {
        let spec = CodeEnsembleSpec::regular(3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = spec.sample_with(30, MultiEdgePolicy::Reject, &mut rng).unwrap();
        let rebuilt = TannerGraph::from_checks(30, g.checks().to_vec()).unwrap();
        assert!((0..30).all(|v| rebuilt.var_checks(v).len() == 3));
        assert!((0..15).all(|c| rebuilt.check_vars(c).len() == 6));
    }

    #[test]
    fn degree_one_variables_degree_two_checks() {
        let spec = CodeEnsembleSpec::regular(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = spec.sample(4, &mut rng).unwrap();
        assert_eq!(g.m(), 2);
        assert!((0..4).all(|v| g.var_checks(v).len() == 1));
        assert!((0..2).all(|c| g.check_vars(c).len() == 2));
    }

    #[test]
    fn inconsistent_regular_spec_rejected() {
        let spec = CodeEnsembleSpec::regular(3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            spec.sample(5, &mut rng),
            Err(Error::InconsistentEnsemble(_))
        ));
        let empty = CodeEnsembleSpec::new(DegreeDistribution::regular(0), DegreeDistribution::regular(2));
        assert!(empty.validate().is_err());
    }

    #[test]
    fn poisson_mean_degree_statistical() {
        let spec = CodeEnsembleSpec::poisson(2.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Degrees before collapse are i.i.d. Poisson(2) conditioned on a
        // multiple-of-4 total; check the sampled sequences directly.
        let mut total = 0usize;
        let reps = 20;
        for _ in 0..reps {
            let (vd, cd) = spec.sample_degree_sequences(100, &mut rng).unwrap();
            assert_eq!(vd.iter().sum::<usize>(), cd.iter().sum::<usize>());
            total += vd.iter().sum::<usize>();
        }
        let samples = (100 * reps) as f64;
        let mean = total as f64 / samples;
        let sd = (2.0 / samples).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sd, "mean {mean}");
        let g = spec.sample(100, &mut rng).unwrap();
        assert_eq!(g.n(), 100);
    }
}
