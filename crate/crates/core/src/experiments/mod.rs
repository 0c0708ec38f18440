//! Monte Carlo drivers that combine the exact, message-passing and cluster
//! tools into reproducible measurements, plus report and manifest output.
//!
//! Work is split into fixed-size chunks of sample indices. Each chunk runs
//! sequentially into its own statistics and the chunks are merged in index
//! order, so results are bitwise identical for any thread count.

use rayon::prelude::*;

use crate::error::Result;
use crate::stats::MeanStats;

mod boundary;
mod cluster_check;
mod decay;
mod gexit;
mod manifest;
mod report;
mod verify;

pub use boundary::{boundary_checks, BoundaryReport, BoundaryRow};
pub use cluster_check::{cluster_check, ClusterCheckReport, ClusterDump, GammaDump, PairCheck};
pub use decay::{correlation_decay, DecayFit, DecayReport, DistanceRow, PairPolicy, PairRow, NOISE_FLOOR};
pub use gexit::{
    de_curve, gexit_fd_check, DEFAULT_FD_STEP, map_gexit_mc, FdCheck, GexitReport, GexitRow, MapGexit, MapGexitOptions,
};
pub use manifest::{config_hash, RunManifest, SCHEMA_VERSION};
pub use report::{write_csv, write_json, CsvRows};
pub use verify::{
    derivative_sweep, duality_sweep, random_code, DerivativeRow, DerivativeSweep, DualityRow, DualitySweep,
};

/// Samples per chunk.
const SAMPLE_CHUNK: u64 = 64;

/// Runs `f(k, out)` for every sample `k < samples`; `f` writes `width`
/// values into `out` and each column is averaged.
pub(crate) fn sample_stats<F>(samples: u64, width: usize, f: F) -> Result<Vec<MeanStats>>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync,
{
    sample_stats_filtered(samples, width, |k, out| f(k, out).map(|()| true))
}

/// Like [`sample_stats`], but samples for which `f` returns `false` are
/// left out of every column.
pub(crate) fn sample_stats_filtered<F>(samples: u64, width: usize, f: F) -> Result<Vec<MeanStats>>
where
    F: Fn(u64, &mut [f64]) -> Result<bool> + Sync,
{
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let parts: Vec<Result<Vec<MeanStats>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stats = vec![MeanStats::new(); width];
            let mut buf = vec![0.0; width];
            for k in c * SAMPLE_CHUNK..((c + 1) * SAMPLE_CHUNK).min(samples) {
                if !f(k, &mut buf)? {
                    continue;
                }
                for (s, &x) in stats.iter_mut().zip(&buf) {
                    s.push(x);
                }
            }
            Ok(stats)
        })
        .collect();
    let mut total = vec![MeanStats::new(); width];
    for part in parts {
        for (t, p) in total.iter_mut().zip(&part?) {
            t.merge(p);
        }
    }
    Ok(total)
}
