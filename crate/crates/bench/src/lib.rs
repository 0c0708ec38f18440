//! Fixtures shared by the benchmarks.

use ldpclab::channel::sample_llr;
use ldpclab::{builtin, LlrVector, NoiseSpec, Streams, TannerGraph};

/// A named code with one fixed noise realization.
pub fn fixture(name: &str, eps2: f64, seed: u64) -> (TannerGraph, LlrVector) {
    let g = builtin::by_name(name).expect("builtin code");
    let noise = NoiseSpec::from_variance(g.n(), eps2).expect("valid noise");
    let l = sample_llr(&noise, &Streams::new(seed), &[0]);
    (g, l)
}
