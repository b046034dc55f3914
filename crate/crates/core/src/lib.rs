//! Block directed Markov random fields over mixed exponential-family
//! variables.
//!
//! The crate covers the whole workflow: univariate families
//! ([`family`]), model specification and normalizability checks
//! ([`graph`], [`normalize`]), Gibbs simulation with an exact enumeration
//! oracle ([`sampler`]), node-wise l1-penalized structure learning
//! ([`estimator`]), recovery metrics ([`evaluation`]) and file formats
//! ([`io`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod experiment;
pub mod family;
pub mod graph;
pub mod io;
pub mod normalize;
pub mod prepare;
pub mod presets;
pub mod rng;
pub mod sampler;

pub use data::Dataset;
pub use error::{Error, Result};
pub use estimator::{FitConfig, GraphEstimate, NodeFit, SymmetrizationRule};
pub use evaluation::RocCurve;
pub use family::{FamilyKind, NaturalParam};
pub use graph::{ModelSpec, Node, Skeleton};
pub use normalize::{check_normalizability, NormalizabilityReport, Verdict};
pub use sampler::{enumerate_exact, sample_bdmrf, SamplerConfig};
