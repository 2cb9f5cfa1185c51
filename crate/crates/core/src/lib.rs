//! Spectra of the conjugate kernel `M = (1/m) Y Yᵀ`, `Y = f(W X / √n₀)`, of a
//! single random layer: sampling, eigenvalues, and the asymptotic
//! predictions for the bulk, its edge and the outliers.
//!
//! The guide in `book/` walks through the modules; its snippets are compiled
//! as doctests of this crate.

pub mod activations;
pub mod combinatorics;
pub mod config;
pub mod distributions;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod linalg;
mod parse;
pub mod quadrature;
pub mod rng;
pub mod spectra;
pub mod theory;
pub mod trials;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/activations.md")]
    mod activations {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    mod spectra {}
    #[doc = include_str!("../../../book/src/outliers.md")]
    mod outliers {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
