//! Exact and message-passing tools for LDPC codes on the binary-input AWGN
//! channel: posterior enumeration, the dual (Fourier) representation of the
//! partition function, cluster expansion of correlations, belief propagation,
//! density evolution and the experiment drivers built on them.

pub mod bp;
pub mod builtin;
pub mod channel;
pub mod cluster;
pub mod de;
pub mod ensemble;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod gf2;
pub mod graph;
pub mod io;
pub mod rng;
pub mod stats;

pub use channel::{LlrVector, NoiseSpec};
pub use ensemble::{CodeEnsembleSpec, DegreeDistribution, MultiEdgePolicy};
pub use error::{Error, Result};
pub use exact::{Boundary, DualResult, EnumOptions, GibbsResult};
pub use graph::{Distance, Neighborhood, TannerGraph};
pub use rng::Streams;
pub use stats::{Estimate, LineFit, MeanStats};
