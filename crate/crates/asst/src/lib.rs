//! Attentive sequence-to-sequence translation for localizing temporal clips
//! in feature sequences by token-sequence queries.
//!
//! The crate is fully self-contained: it ships its own reverse-mode autodiff
//! engine ([`autograd`]), the neural building blocks ([`nn`]), the language /
//! video subnets fused by cross-modal attention ([`lang`], [`video`],
//! [`attention`]), both clip-sampling regimes ([`clip`]), training machinery
//! ([`train`]), the detection-style evaluation stack ([`eval`]) and file
//! formats plus a synthetic planted-signal dataset generator ([`data`]).
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `asst` binary for the batch command-line front end.

pub mod attention;
pub mod autograd;
pub mod cli;
pub mod clip;
pub mod data;
pub mod error;
pub mod eval;
pub mod lang;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod video;

pub use error::{Error, Result};
pub use tensor::Tensor;
