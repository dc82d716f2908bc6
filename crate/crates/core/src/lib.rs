//! Latent semantic entity models for entity and product search.
//!
//! The crate covers the full experimental pipeline: text processing and
//! vocabulary construction ([`text`]), negative-sampling instance generation
//! ([`sampling`]), the model with its analytic gradients and Adam updates
//! ([`model`], [`train`]), cosine retrieval ([`retrieval`]), a Jelinek-Mercer
//! query-likelihood baseline ([`qlm`]), evaluation measures and statistics
//! ([`eval`]) and pairwise learning to rank ([`ltr`]).

pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod ltr;
pub mod model;
pub mod persist;
pub mod qlm;
pub mod retrieval;
pub mod synth;
pub mod sampling;
pub mod text;
pub mod train;

pub use error::{Error, Result};
