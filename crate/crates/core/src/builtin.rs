//! Small benchmark codes.

use crate::ensemble::CodeEnsembleSpec;
use crate::error::{Error, Result};
use crate::graph::TannerGraph;
use crate::rng::{tag, Streams};

/// Seed used to draw the fixed ensemble instances below.
const INSTANCE_SEED: u64 = 20_080_101;

/// Single parity check on three bits.
pub fn spc3() -> TannerGraph {
    TannerGraph::from_checks(3, vec![vec![0, 1, 2]]).unwrap()
}

/// Length-3 repetition code as the chain `x0 + x1`, `x1 + x2`.
pub fn rep3() -> TannerGraph {
    TannerGraph::from_checks(3, vec![vec![0, 1], vec![1, 2]]).unwrap()
}

/// Cycle code of an `n`-cycle: variable `e` is the edge between checks
/// `e` and `e + 1 (mod n)`. The code is the length-`n` repetition code.
pub fn ring(n: usize) -> TannerGraph {
    assert!(n >= 3, "ring needs at least three edges");
    let checks = (0..n).map(|c| vec![(c + n - 1) % n, c]).collect();
    TannerGraph::from_checks(n, checks).unwrap()
}

/// Cycle code of the ring lattice on `vertices` vertices where every vertex
/// is joined to its nearest and next-nearest neighbors. Variables
/// `0..vertices` are the short edges `(v, v+1)`, the rest the long edges
/// `(v, v+2)`; checks are the vertices.
pub fn ring_lattice(vertices: usize) -> TannerGraph {
    assert!(vertices >= 5, "ring lattice needs at least five vertices");
    let n = 2 * vertices;
    let mut checks = vec![Vec::new(); vertices];
    for v in 0..vertices {
        checks[v].push(v);
        checks[(v + 1) % vertices].push(v);
        checks[v].push(vertices + v);
        checks[(v + 2) % vertices].push(vertices + v);
    }
    TannerGraph::from_checks(n, checks).unwrap()
}

/// The 30-bit ring cycle benchmark: 15-vertex ring lattice, 2^16 codewords.
pub fn ring30() -> TannerGraph {
    ring_lattice(15)
}

/// Two-check path `0 - c0 - 1 - c1 - 2`.
pub fn path_toy() -> TannerGraph {
    TannerGraph::from_checks(3, vec![vec![0, 1], vec![1, 2]]).unwrap()
}

/// Fixed draw from the (3,6)-regular ensemble with 30 variables.
pub fn regular36_30() -> TannerGraph {
    let mut rng = Streams::new(INSTANCE_SEED).rng(&[tag::INSTANCE, 36]);
    CodeEnsembleSpec::regular(3, 6).sample(30, &mut rng).unwrap()
}

/// Fixed draw from the Poisson(2) / degree-4 check ensemble with 24 variables.
pub fn poisson2_24() -> TannerGraph {
    let mut rng = Streams::new(INSTANCE_SEED).rng(&[tag::INSTANCE, 2]);
    CodeEnsembleSpec::poisson(2.0, 4)
        .unwrap()
        .sample(24, &mut rng)
        .unwrap()
}

pub const NAMES: &[&str] = &[
    "spc3", "rep3", "ring30", "ring:<n>", "lattice:<v>", "path2", "reg36", "poisson2",
];

/// Looks up a builtin by name.
pub fn by_name(name: &str) -> Result<TannerGraph> {
    let parse = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::invalid(format!("bad size in builtin code `{name}`")))
    };
    match name {
        "spc3" => Ok(spc3()),
        "rep3" => Ok(rep3()),
        "ring30" => Ok(ring30()),
        "path2" => Ok(path_toy()),
        "reg36" => Ok(regular36_30()),
        "poisson2" => Ok(poisson2_24()),
        _ => {
            if let Some(n) = name.strip_prefix("ring:") {
                let n = parse(n)?;
                if n < 3 {
                    return Err(Error::invalid("ring needs at least 3 edges"));
                }
                Ok(ring(n))
            } else if let Some(v) = name.strip_prefix("lattice:") {
                let v = parse(v)?;
                if v < 5 {
                    return Err(Error::invalid("lattice needs at least 5 vertices"));
                }
                Ok(ring_lattice(v))
            } else {
                Err(Error::invalid(format!(
                    "unknown builtin code `{name}` (known: {})",
                    NAMES.join(", ")
                )))
            }
        }
    }
}
