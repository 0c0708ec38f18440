//! Sweeps of the duality and derivative identities over random small codes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_llr, NoiseSpec};
use crate::error::{Error, Result};
use crate::exact::{check_derivative_identities_with, check_duality_with, EnumOptions, DEFAULT_POLE_GUARD};
use crate::graph::TannerGraph;
use crate::rng::{tag, Streams};

/// Redraws allowed when looking for LLRs away from the pole guard.
const MAX_REDRAWS: u64 = 1000;

/// A random parity-check code with `3..=max_n` bits, `1..=n` checks and
/// each entry of `H` set with probability 0.35 (empty rows are redrawn).
pub fn random_code<R: Rng + ?Sized>(max_n: usize, rng: &mut R) -> Result<TannerGraph> {
    if max_n < 3 {
        return Err(Error::invalid("random codes need at least three bits"));
    }
    let n = rng.random_range(3..=max_n);
    let m = rng.random_range(1..=n);
    let checks = (0..m)
        .map(|_| loop {
            let row: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.35)).collect();
            if !row.is_empty() {
                break row;
            }
        })
        .collect();
    TannerGraph::from_checks(n, checks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub trial: u64,
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    pub eps2: f64,
    pub log_z_p: f64,
    pub residual: f64,
    /// `residual / max(1, |ln Z_P|)`
    pub relative_residual: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualitySweep {
    pub seed: u64,
    pub rows: Vec<DualityRow>,
    pub max_relative_residual: f64,
}

/// Duality residuals for `trials` random codes, each at every noise level.
/// With `code` set, that code is used for every trial instead.
pub fn duality_sweep(
    code: Option<&TannerGraph>,
    trials: u64,
    max_n: usize,
    eps2: &[f64],
    seed: u64,
    opts: &EnumOptions,
) -> Result<DualitySweep> {
    let streams = Streams::new(seed);
    let mut rows = Vec::new();
    for t in 0..trials {
        let g = match code {
            Some(g) => g.clone(),
            None => random_code(max_n, &mut streams.rng(&[tag::GRAPH, t]))?,
        };
        for (e, &v) in eps2.iter().enumerate() {
            let l = sample_llr(&NoiseSpec::from_variance(g.n(), v)?, &streams, &[tag::NOISE, t, e as u64]);
            let c = check_duality_with(&g, &l, opts)?;
            rows.push(DualityRow {
                trial: t,
                n: g.n(),
                m: g.m(),
                rank: c.rank,
                eps2: v,
                log_z_p: c.log_z_p,
                residual: c.residual,
                relative_residual: c.residual / c.log_z_p.abs().max(1.0),
                condition: c.condition,
            });
        }
    }
    let max_relative_residual = rows.iter().map(|r| r.relative_residual).fold(0.0, f64::max);
    Ok(DualitySweep {
        seed,
        rows,
        max_relative_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRow {
    pub trial: u64,
    pub n: usize,
    pub m: usize,
    pub i: usize,
    pub j: usize,
    pub eps2: f64,
    pub first: f64,
    pub second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSweep {
    pub seed: u64,
    pub rows: Vec<DerivativeRow>,
    pub max_residual: f64,
}

/// First- and second-derivative residuals on random codes and bit pairs.
/// Noise levels cycle through `eps2`; LLRs at the two bits are redrawn until
/// both clear the pole guard.
pub fn derivative_sweep(
    code: Option<&TannerGraph>,
    trials: u64,
    max_n: usize,
    eps2: &[f64],
    seed: u64,
    opts: &EnumOptions,
) -> Result<DerivativeSweep> {
    if eps2.is_empty() {
        return Err(Error::invalid("need at least one noise level"));
    }
    let streams = Streams::new(seed);
    let mut rows = Vec::new();
    for t in 0..trials {
        let g = match code {
            Some(g) => g.clone(),
            None => random_code(max_n, &mut streams.rng(&[tag::GRAPH, t]))?,
        };
        let mut pick = streams.rng(&[tag::ROOT, t]);
        let i = pick.random_range(0..g.n());
        let j = (i + pick.random_range(1..g.n())) % g.n();
        let v = eps2[t as usize % eps2.len()];
        let noise = NoiseSpec::from_variance(g.n(), v)?;
        let l = (0..MAX_REDRAWS)
            .map(|a| sample_llr(&noise, &streams, &[tag::NOISE, t, a]))
            .find(|l| l.value(i).abs() >= DEFAULT_POLE_GUARD && l.value(j).abs() >= DEFAULT_POLE_GUARD)
            .ok_or_else(|| Error::invalid("could not draw LLRs away from the pole guard"))?;
        let c = check_derivative_identities_with(&g, &l, i, j, DEFAULT_POLE_GUARD, opts)?;
        rows.push(DerivativeRow {
            trial: t,
            n: g.n(),
            m: g.m(),
            i,
            j,
            eps2: v,
            first: c.first.expect("guard cleared"),
            second: c.second.expect("guard cleared"),
        });
    }
    let max_residual = rows.iter().map(|r| r.first.max(r.second)).fold(0.0, f64::max);
    Ok(DerivativeSweep {
        seed,
        rows,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn random_codes_respect_the_size_limit() {
        let s = Streams::new(1);
        for t in 0..50 {
            let g = random_code(9, &mut s.rng(&[t])).unwrap();
            assert!((3..=9).contains(&g.n()));
            assert!(g.m() >= 1 && g.m() <= g.n());
        }
    }

    #[test]
    fn small_duality_sweep() {
        let r = duality_sweep(None, 10, 10, &[0.5, 1.0], 2, &EnumOptions::default()).unwrap();
        assert_eq!(r.rows.len(), 20);
        assert!(r.max_relative_residual < 1e-10, "{r:?}");
    }

    #[test]
    fn small_derivative_sweep() {
        let r = derivative_sweep(None, 10, 10, &[0.5, 1.0], 3, &EnumOptions::default()).unwrap();
        assert!(r.rows.iter().all(|row| row.i != row.j));
        assert!(r.max_residual < 1e-8, "{r:?}");
    }

    #[test]
    fn fixed_code_sweep() {
        let g = builtin::spc3();
        let r = duality_sweep(Some(&g), 5, 0, &[0.5], 4, &EnumOptions::default()).unwrap();
        assert!(r.rows.iter().all(|row| row.n == 3));
    }
}
