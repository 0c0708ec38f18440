//! GEXIT values from exact marginals, from finite differences of the exact
//! conditional entropy, and from density evolution.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::LlrVector;
use crate::de::de_gexit;
use crate::ensemble::CodeEnsembleSpec;
use crate::error::{Error, Result};
use crate::exact::{gibbs_exact_with, EnumOptions};
use crate::graph::TannerGraph;
use crate::rng::{tag, Streams};
use crate::stats::{Estimate, MeanStats};

use super::{sample_stats, sample_stats_filtered};

/// Default relative step in `eps^-2` for finite differences.
pub const DEFAULT_FD_STEP: f64 = 0.01;

fn check_eps(eps: f64) -> Result<f64> {
    if eps.is_finite() && eps > 0.0 {
        Ok(1.0 / (eps * eps))
    } else {
        Err(Error::invalid(format!("noise level must be finite and > 0, got {eps}")))
    }
}

fn standard_normals(streams: &Streams, parts: &[u64], n: usize) -> Vec<f64> {
    let mut rng = streams.rng(parts);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Half-LLRs `snr + sqrt(snr) z` for a fixed standard normal vector `z`.
fn llr_at(snr: f64, z: &[f64]) -> LlrVector {
    LlrVector::from_values(z.iter().map(|&z| snr + snr.sqrt() * z).collect())
}

/// Per-realization quantities: `(E<sigma_o> - 1) / 2` averaged over `o`
/// and, with a step, the central difference of the per-bit entropy.
fn realization(g: &TannerGraph, snr: f64, z: &[f64], step: Option<f64>, opts: &EnumOptions) -> Result<(f64, f64)> {
    let n = g.n() as f64;
    let r = gibbs_exact_with(g, &llr_at(snr, z), &[], opts)?;
    let gexit = 0.5 * (r.marginals.iter().sum::<f64>() / n - 1.0);
    let fd = match step {
        Some(h) => {
            let (lo, hi) = (snr * (1.0 - h), snr * (1.0 + h));
            let e_hi = gibbs_exact_with(g, &llr_at(hi, z), &[], opts)?.entropy;
            let e_lo = gibbs_exact_with(g, &llr_at(lo, z), &[], opts)?.entropy;
            (e_hi - e_lo) / (n * (hi - lo))
        }
        None => f64::NAN,
    };
    Ok((gexit, fd))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdCheck {
    pub eps: f64,
    /// Absolute step in `eps^-2` on either side.
    pub step: f64,
    /// Central difference of the mean per-bit entropy in `eps^-2`.
    pub fd: Estimate,
    /// `(E<sigma_o> - 1) / 2` averaged over `o`.
    pub formula: Estimate,
    /// `fd - formula`, with the standard error of the paired differences.
    pub difference: Estimate,
    pub samples: u64,
}

/// Compares the finite-difference entropy derivative of a fixed code with
/// the marginal formula, using the same noise vectors at every SNR.
pub fn gexit_fd_check(
    g: &TannerGraph,
    eps: f64,
    rel_step: f64,
    samples: u64,
    seed: u64,
    opts: &EnumOptions,
) -> Result<FdCheck> {
    let snr = check_eps(eps)?;
    if !(rel_step > 0.0 && rel_step < 1.0) {
        return Err(Error::invalid(format!("relative step must lie in (0, 1), got {rel_step}")));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let streams = Streams::new(seed);
    let stats = sample_stats(samples, 3, |k, out| {
        let z = standard_normals(&streams, &[tag::NOISE, k], g.n());
        let (gexit, fd) = realization(g, snr, &z, Some(rel_step), opts)?;
        out[0] = fd;
        out[1] = gexit;
        out[2] = fd - gexit;
        Ok(())
    })?;
    Ok(FdCheck {
        eps,
        step: rel_step * snr,
        fd: Estimate::from(&stats[0]),
        formula: Estimate::from(&stats[1]),
        difference: Estimate::from(&stats[2]),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGexitOptions {
    pub graphs: u64,
    pub noise_samples: u64,
    /// Relative step for the finite-difference side; `None` skips it.
    pub fd_step: Option<f64>,
    pub enumeration: EnumOptions,
}

impl Default for MapGexitOptions {
    fn default() -> Self {
        Self {
            graphs: 200,
            noise_samples: 50,
            fd_step: None,
            enumeration: EnumOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGexit {
    pub eps: f64,
    pub n: usize,
    /// `(E<sigma_o> - 1) / 2` over graphs, noise and a uniform bit `o`.
    pub gexit: Estimate,
    pub fd: Option<Estimate>,
    pub graphs_used: u64,
    /// Graphs whose codebook exceeded the enumeration budget.
    pub graphs_skipped: u64,
    pub noise_samples: u64,
}

/// Two-level Monte Carlo of the exact GEXIT over sampled graphs and noise.
///
/// The uniformly random bit is averaged out exactly, since one enumeration
/// yields every marginal. Standard errors come from the spread of the
/// per-graph means, or from the noise samples when a single graph is used.
pub fn map_gexit_mc(
    spec: &CodeEnsembleSpec,
    n: usize,
    eps: f64,
    opts: &MapGexitOptions,
    seed: u64,
) -> Result<MapGexit> {
    let snr = check_eps(eps)?;
    spec.validate()?;
    if opts.graphs == 0 || opts.noise_samples == 0 {
        return Err(Error::invalid("need at least one graph and one noise sample"));
    }
    if opts.graphs == 1 && opts.noise_samples < 2 {
        return Err(Error::invalid("a single graph needs at least two noise samples"));
    }
    let streams = Streams::new(seed);
    let with_fd = opts.fd_step.is_some();
    let per_graph = |gi: u64| -> Result<Option<[MeanStats; 2]>> {
        let g = spec.sample(n, &mut streams.rng(&[tag::GRAPH, gi]))?;
        let mut acc = [MeanStats::new(), MeanStats::new()];
        for k in 0..opts.noise_samples {
            let z = standard_normals(&streams, &[tag::NOISE, gi, k], n);
            match realization(&g, snr, &z, opts.fd_step, &opts.enumeration) {
                Ok((gexit, fd)) => {
                    acc[0].push(gexit);
                    acc[1].push(fd);
                }
                Err(e) if e.is_capacity() => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(acc))
    };

    let (gexit, fd, used) = if opts.graphs == 1 {
        match per_graph(0)? {
            Some(acc) => (Estimate::from(&acc[0]), Estimate::from(&acc[1]), 1),
            None => (Estimate::new(f64::NAN, f64::NAN), Estimate::new(f64::NAN, f64::NAN), 0),
        }
    } else {
        let stats = sample_stats_filtered(opts.graphs, 2, |gi, out| {
            Ok(match per_graph(gi)? {
                Some(acc) => {
                    out[0] = acc[0].mean();
                    out[1] = acc[1].mean();
                    true
                }
                None => false,
            })
        })?;
        (Estimate::from(&stats[0]), Estimate::from(&stats[1]), stats[0].count())
    };
    if used == 0 {
        return Err(Error::Capacity {
            needed_log2: opts.enumeration.budget_log2 + 1,
            budget_log2: opts.enumeration.budget_log2,
        });
    }
    Ok(MapGexit {
        eps,
        n,
        gexit,
        fd: with_fd.then_some(fd),
        graphs_used: used,
        graphs_skipped: opts.graphs - used,
        noise_samples: opts.noise_samples,
    })
}

/// One grid point of a GEXIT report. Absent sides are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GexitRow {
    pub eps2: f64,
    pub map_gexit: Option<f64>,
    pub map_err: Option<f64>,
    pub de_gexit: Option<f64>,
    pub de_err: Option<f64>,
    pub fd_value: Option<f64>,
    pub fd_err: Option<f64>,
}

impl GexitRow {
    fn empty(eps2: f64) -> Self {
        GexitRow {
            eps2,
            map_gexit: None,
            map_err: None,
            de_gexit: None,
            de_err: None,
            fd_value: None,
            fd_err: None,
        }
    }

    /// `map - de` with the combined standard error, when both are present.
    pub fn map_minus_de(&self) -> Option<Estimate> {
        Some(Estimate::new(self.map_gexit?, self.map_err?).minus(&Estimate::new(self.de_gexit?, self.de_err?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GexitReport {
    pub ensemble: Option<String>,
    pub code: Option<String>,
    pub n: Option<usize>,
    pub depth: Option<usize>,
    pub population: Option<usize>,
    pub seed: u64,
    pub rows: Vec<GexitRow>,
    /// Graphs skipped for capacity, summed over the grid.
    pub graphs_skipped: u64,
}

/// Density-evolution GEXIT over a grid of noise variances.
pub fn de_curve(
    spec: &CodeEnsembleSpec,
    label: &str,
    eps2: &[f64],
    depth: usize,
    population: usize,
    seed: u64,
) -> Result<GexitReport> {
    let mut rows = Vec::with_capacity(eps2.len());
    for &e2 in eps2 {
        let d = de_gexit(spec, e2.sqrt(), depth, population, seed)?;
        rows.push(GexitRow {
            de_gexit: Some(d.value),
            de_err: Some(d.stderr),
            ..GexitRow::empty(e2)
        });
    }
    Ok(GexitReport {
        ensemble: Some(label.to_string()),
        code: None,
        n: None,
        depth: Some(depth),
        population: Some(population),
        seed,
        rows,
        graphs_skipped: 0,
    })
}

impl GexitReport {
    /// MAP and DE sides (and optionally the finite difference) for an
    /// ensemble over a grid of noise variances.
    #[allow(clippy::too_many_arguments)]
    pub fn compare(
        spec: &CodeEnsembleSpec,
        label: &str,
        n: usize,
        eps2: &[f64],
        map: &MapGexitOptions,
        depth: usize,
        population: usize,
        seed: u64,
    ) -> Result<GexitReport> {
        let mut report = de_curve(spec, label, eps2, depth, population, seed)?;
        report.n = Some(n);
        for row in &mut report.rows {
            let m = map_gexit_mc(spec, n, row.eps2.sqrt(), map, seed)?;
            row.map_gexit = Some(m.gexit.value);
            row.map_err = Some(m.gexit.stderr);
            if let Some(fd) = m.fd {
                row.fd_value = Some(fd.value);
                row.fd_err = Some(fd.stderr);
            }
            report.graphs_skipped += m.graphs_skipped;
        }
        Ok(report)
    }

    /// Finite-difference and marginal-formula sides for a fixed code.
    pub fn fd_grid(
        g: &TannerGraph,
        label: &str,
        eps2: &[f64],
        rel_step: f64,
        samples: u64,
        seed: u64,
        opts: &EnumOptions,
    ) -> Result<GexitReport> {
        let mut rows = Vec::with_capacity(eps2.len());
        for &e2 in eps2 {
            let c = gexit_fd_check(g, e2.sqrt(), rel_step, samples, seed, opts)?;
            rows.push(GexitRow {
                map_gexit: Some(c.formula.value),
                map_err: Some(c.formula.stderr),
                fd_value: Some(c.fd.value),
                fd_err: Some(c.fd.stderr),
                ..GexitRow::empty(e2)
            });
        }
        Ok(GexitReport {
            ensemble: None,
            code: Some(label.to_string()),
            n: Some(g.n()),
            depth: None,
            population: None,
            seed,
            rows,
            graphs_skipped: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::channel::gaussian_expectation;

    /// `(E tanh L - 1) / 2` with `L ~ N(3 snr, 3 snr)`: the exact GEXIT of the
    /// length-3 repetition code.
    fn repetition_gexit(snr: f64) -> f64 {
        let m = 3.0 * snr;
        0.5 * (gaussian_expectation(m, m.sqrt(), &[], f64::tanh).value - 1.0)
    }

    #[test]
    fn repetition_code_matches_quadrature() {
        let eps = 0.5f64.sqrt();
        let c = gexit_fd_check(&builtin::rep3(), eps, DEFAULT_FD_STEP, 100_000, 1, &EnumOptions::default()).unwrap();
        let want = repetition_gexit(2.0);
        assert!((c.formula.value - want).abs() < 4.0 * c.formula.stderr, "{c:?} vs {want}");
        assert!((c.fd.value - want).abs() < 1e-3, "{c:?} vs {want}");
        assert!(c.difference.z_score() < 3.0, "{c:?}");
    }

    #[test]
    fn values_are_gexit_like() {
        let c = gexit_fd_check(&builtin::spc3(), 1.0, DEFAULT_FD_STEP, 20_000, 2, &EnumOptions::default()).unwrap();
        assert!((-1.0..=0.0).contains(&c.formula.value));
        assert!(c.difference.z_score() < 3.0, "{c:?}");
    }

    #[test]
    fn low_noise_limit() {
        let c = gexit_fd_check(&builtin::ring(6), 0.1, DEFAULT_FD_STEP, 200, 3, &EnumOptions::default()).unwrap();
        assert!(c.formula.value.abs() < 1e-12 && c.fd.value.abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn high_noise_limit_is_minus_half() {
        // All-ones is a codeword of every ensemble with even check degrees.
        let spec = CodeEnsembleSpec::regular(2, 4);
        let opts = MapGexitOptions {
            graphs: 8,
            noise_samples: 20,
            ..MapGexitOptions::default()
        };
        let m = map_gexit_mc(&spec, 12, 1000f64.sqrt(), &opts, 4).unwrap();
        assert!((m.gexit.value + 0.5).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn map_low_noise_limit() {
        let m = map_gexit_mc(&CodeEnsembleSpec::regular(3, 6), 18, 0.15, &MapGexitOptions::default(), 5).unwrap();
        assert!(m.gexit.value.abs() < 1e-9, "{m:?}");
        assert_eq!(m.graphs_used + m.graphs_skipped, 200);
    }

    #[test]
    fn capacity_skips_are_counted() {
        let opts = MapGexitOptions {
            graphs: 4,
            noise_samples: 2,
            fd_step: None,
            enumeration: EnumOptions { budget_log2: 2 },
        };
        let r = map_gexit_mc(&CodeEnsembleSpec::regular(3, 6), 30, 0.7, &opts, 6);
        assert!(matches!(r, Err(Error::Capacity { .. })));
    }

    #[test]
    fn map_fd_side_agrees_with_formula() {
        let opts = MapGexitOptions {
            graphs: 20,
            noise_samples: 40,
            fd_step: Some(DEFAULT_FD_STEP),
            ..MapGexitOptions::default()
        };
        let m = map_gexit_mc(&CodeEnsembleSpec::poisson(2.0, 4).unwrap(), 12, 0.8, &opts, 7).unwrap();
        let fd = m.fd.unwrap();
        assert!((-1.0..=0.0).contains(&m.gexit.value));
        assert!(fd.minus(&m.gexit).z_score() < 3.0, "{m:?}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| map_gexit_mc(&CodeEnsembleSpec::poisson(2.0, 4).unwrap(), 12, 0.8, &MapGexitOptions::default(), 8).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
