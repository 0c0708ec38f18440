//! Average absolute correlation between code bits as a function of their
//! graph distance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{sample_llr, NoiseSpec};
use crate::error::{Error, Result};
use crate::exact::{gibbs_exact_with, EnumOptions};
use crate::graph::TannerGraph;
use crate::rng::{tag, Streams};
use crate::stats::{weighted_line_fit, LineFit};

use super::sample_stats;

/// Averages below this are treated as numerically zero: covariances are
/// differences of probabilities and lose all relative accuracy long before
/// they underflow.
pub const NOISE_FLOOR: f64 = 1e-14;
/// Distances whose average has a larger relative standard error are left
/// out of the slope fit.
const MAX_REL_STDERR: f64 = 0.3;
/// Distances represented by fewer pairs are left out of the slope fit.
const MIN_PAIRS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairPolicy {
    /// Every unordered pair of distinct bits.
    All,
    /// The given bit against every other bit.
    FromBit(usize),
    Explicit(Vec<(usize, usize)>),
}

impl PairPolicy {
    fn pairs(&self, n: usize) -> Result<Vec<(usize, usize)>> {
        let pairs = match self {
            PairPolicy::All => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
            PairPolicy::FromBit(i) => {
                if *i >= n {
                    return Err(Error::invalid(format!("bit {i} out of range for n = {n}")));
                }
                (0..n).filter(|j| j != i).map(|j| (*i, j)).collect()
            }
            PairPolicy::Explicit(p) => p.clone(),
        };
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i == j || i >= n || j >= n) {
            return Err(Error::invalid(format!("pair ({i}, {j}) is not two distinct bits of the code")));
        }
        if pairs.is_empty() {
            return Err(Error::invalid("no pairs selected"));
        }
        Ok(pairs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub i: usize,
    pub j: usize,
    /// `None` when the bits lie in different components.
    pub dist: Option<usize>,
    pub c_p: f64,
    pub stderr: f64,
    pub n_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub dist: usize,
    pub pairs: usize,
    /// Mean over pairs at this distance, averaged over noise.
    pub c_p: f64,
    pub stderr: f64,
    pub in_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fit of `ln c_p = intercept + slope * dist`.
    pub line: LineFit,
    /// 95% interval for the slope.
    pub slope_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub code: String,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub samples: u64,
    pub pairs: Vec<PairRow>,
    pub distances: Vec<DistanceRow>,
    pub fit: Option<DecayFit>,
    /// Why there is no fit.
    pub fit_note: Option<String>,
    /// Every pair average is below [`NOISE_FLOOR`].
    pub fully_decayed: bool,
}

/// Noise-averaged `|cov(sigma_i, sigma_j)|` for the selected pairs, one
/// exact enumeration per noise draw, with a weighted fit of the log of the
/// per-distance averages against distance.
pub fn correlation_decay(
    g: &TannerGraph,
    code: &str,
    noise: &NoiseSpec,
    policy: &PairPolicy,
    samples: u64,
    seed: u64,
    opts: &EnumOptions,
) -> Result<DecayReport> {
    if noise.len() != g.n() {
        return Err(Error::invalid(format!(
            "noise spec has {} bits but the code has {}",
            noise.len(),
            g.n()
        )));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two noise samples"));
    }
    let pairs = policy.pairs(g.n())?;
    let dists: Vec<Option<usize>> = pairs.iter().map(|&(i, j)| g.distance(i, j).finite()).collect();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, d) in dists.iter().enumerate() {
        if let Some(d) = d {
            groups.entry(*d).or_default().push(k);
        }
    }
    let groups: Vec<(usize, Vec<usize>)> = groups.into_iter().collect();
    // Fail on capacity before spawning the sweep.
    gibbs_exact_with(g, &sample_llr(noise, &Streams::new(seed), &[tag::NOISE, 0]), &[], opts)?;

    let streams = Streams::new(seed);
    let width = pairs.len() + groups.len();
    let stats = sample_stats(samples, width, |k, out| {
        let l = sample_llr(noise, &streams, &[tag::NOISE, k]);
        let r = gibbs_exact_with(g, &l, &pairs, opts)?;
        for (o, p) in out.iter_mut().zip(&r.pairs) {
            *o = p.covariance.abs();
        }
        for (q, (_, members)) in groups.iter().enumerate() {
            let s: f64 = members.iter().map(|&m| out[m]).sum();
            out[pairs.len() + q] = s / members.len() as f64;
        }
        Ok(())
    })?;

    let pair_rows: Vec<PairRow> = pairs
        .iter()
        .zip(&dists)
        .zip(&stats)
        .map(|((&(i, j), &dist), s)| PairRow {
            i,
            j,
            dist,
            c_p: s.mean(),
            stderr: s.stderr(),
            n_samples: s.count(),
        })
        .collect();
    let mut distances: Vec<DistanceRow> = groups
        .iter()
        .zip(&stats[pairs.len()..])
        .map(|((d, members), s)| {
            let (c_p, stderr) = (s.mean(), s.stderr());
            DistanceRow {
                dist: *d,
                pairs: members.len(),
                c_p,
                stderr,
                in_fit: members.len() >= MIN_PAIRS && c_p > NOISE_FLOOR && stderr < MAX_REL_STDERR * c_p,
            }
        })
        .collect();

    let fully_decayed = pair_rows.iter().all(|r| r.c_p < NOISE_FLOOR);
    let (fit, fit_note) = if fully_decayed {
        for d in &mut distances {
            d.in_fit = false;
        }
        (None, Some(format!("fully decayed: every average is below {NOISE_FLOOR:e}")))
    } else {
        fit_distances(&distances)
    };
    Ok(DecayReport {
        code: code.to_string(),
        noise: noise.clone(),
        seed,
        samples,
        pairs: pair_rows,
        distances,
        fit,
        fit_note,
        fully_decayed,
    })
}

fn fit_distances(rows: &[DistanceRow]) -> (Option<DecayFit>, Option<String>) {
    let used: Vec<&DistanceRow> = rows.iter().filter(|r| r.in_fit).collect();
    if used.len() < 2 {
        let note = format!(
            "{} of {} distances qualify for the fit (need 2; a distance qualifies with at least {MIN_PAIRS} pairs, \
             an average above {NOISE_FLOOR:e} and relative standard error below {MAX_REL_STDERR})",
            used.len(),
            rows.len()
        );
        return (None, Some(note));
    }
    let xs: Vec<f64> = used.iter().map(|r| r.dist as f64).collect();
    let ys: Vec<f64> = used.iter().map(|r| r.c_p.ln()).collect();
    // Delta method: sd(ln x) = sd(x) / x.
    let sig: Vec<f64> = used.iter().map(|r| r.stderr / r.c_p).collect();
    match weighted_line_fit(&xs, &ys, &sig) {
        Some(line) => (
            Some(DecayFit {
                slope_ci: line.slope_interval(1.96),
                line,
            }),
            None,
        ),
        None => (None, Some("degenerate fit".into())),
    }
}
