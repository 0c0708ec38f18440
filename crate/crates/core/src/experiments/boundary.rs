//! Effect of cutting the graph at depth `d` around a bit, with free and
//! all-plus conditions on the cut.

use serde::{Deserialize, Serialize};

use crate::channel::{sample_llr, NoiseSpec};
use crate::error::{Error, Result};
use crate::exact::{gibbs_exact_with, neighborhood_marginal, Boundary, EnumOptions};
use crate::graph::TannerGraph;
use crate::rng::{tag, Streams};
use crate::stats::Estimate;

use super::sample_stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub depth: usize,
    pub vars: usize,
    pub boundary_size: usize,
    /// The neighborhood is the whole graph and nothing is clamped.
    pub covers_graph: bool,
    /// Neighborhood exceeded the enumeration budget and was skipped.
    pub infeasible: bool,
    pub free: Option<Estimate>,
    pub plus: Option<Estimate>,
    /// `<sigma_o>_P - <sigma_o>^+_N`, averaged over the same noise draws.
    pub full_minus_plus: Option<Estimate>,
    /// `<sigma_o>_N - <sigma_o>^+_N`.
    pub free_minus_plus: Option<Estimate>,
}

impl BoundaryRow {
    /// `|E<sigma_o>_P - E<sigma_o>^+_N|`
    pub fn cut_gap(&self) -> Option<f64> {
        self.full_minus_plus.map(|e| e.value.abs())
    }

    /// `|E<sigma_o>_N - E<sigma_o>^+_N|`
    pub fn boundary_gap(&self) -> Option<f64> {
        self.free_minus_plus.map(|e| e.value.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub code: String,
    pub root: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub samples: u64,
    /// `E<sigma_o>_P` on the whole graph.
    pub full: Estimate,
    pub rows: Vec<BoundaryRow>,
}

/// Monte Carlo gaps between the root marginal of the whole code and the
/// marginals of its depth-`d` neighborhood under free and all-plus boundary
/// conditions. All quantities share the same noise draws.
#[allow(clippy::too_many_arguments)]
pub fn boundary_checks(
    g: &TannerGraph,
    code: &str,
    root: usize,
    depths: &[usize],
    noise: &NoiseSpec,
    samples: u64,
    seed: u64,
    skip_infeasible: bool,
    opts: &EnumOptions,
) -> Result<BoundaryReport> {
    if root >= g.n() {
        return Err(Error::invalid(format!("root {root} out of range for n = {}", g.n())));
    }
    if noise.len() != g.n() {
        return Err(Error::invalid("noise spec length does not match the code"));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let streams = Streams::new(seed);
    let probe = sample_llr(noise, &streams, &[tag::NOISE, 0]);
    gibbs_exact_with(g, &probe, &[], opts)?;

    let mut hoods = Vec::with_capacity(depths.len());
    let mut rows = Vec::with_capacity(depths.len());
    for &d in depths {
        let nb = g.neighborhood(root, d)?;
        let covers_graph = nb.vars.len() == g.n() && nb.checks.len() == g.m() && nb.boundary.is_empty();
        let feasible = match neighborhood_marginal(g, &nb, &probe, Boundary::Free, opts) {
            Ok(_) => true,
            Err(e) if e.is_capacity() && skip_infeasible => false,
            Err(e) => return Err(e),
        };
        rows.push(BoundaryRow {
            depth: d,
            vars: nb.vars.len(),
            boundary_size: nb.boundary.len(),
            covers_graph,
            infeasible: !feasible,
            free: None,
            plus: None,
            full_minus_plus: None,
            free_minus_plus: None,
        });
        if feasible {
            hoods.push((rows.len() - 1, nb));
        }
    }

    let width = 1 + 4 * hoods.len();
    let stats = sample_stats(samples, width, |k, out| {
        let l = sample_llr(noise, &streams, &[tag::NOISE, k]);
        let full = gibbs_exact_with(g, &l, &[], opts)?.marginals[root];
        out[0] = full;
        for (q, (_, nb)) in hoods.iter().enumerate() {
            let free = neighborhood_marginal(g, nb, &l, Boundary::Free, opts)?;
            let plus = neighborhood_marginal(g, nb, &l, Boundary::PlusOne, opts)?;
            let o = &mut out[1 + 4 * q..5 + 4 * q];
            o[0] = free;
            o[1] = plus;
            o[2] = full - plus;
            o[3] = free - plus;
        }
        Ok(())
    })?;
    for (q, (r, _)) in hoods.iter().enumerate() {
        let s = &stats[1 + 4 * q..5 + 4 * q];
        let row = &mut rows[*r];
        row.free = Some(Estimate::from(&s[0]));
        row.plus = Some(Estimate::from(&s[1]));
        row.full_minus_plus = Some(Estimate::from(&s[2]));
        row.free_minus_plus = Some(Estimate::from(&s[3]));
    }
    Ok(BoundaryReport {
        code: code.to_string(),
        root,
        noise: noise.clone(),
        seed,
        samples,
        full: Estimate::from(&stats[0]),
        rows,
    })
}
