//! Projection-based model reduction on nonlinear trial manifolds.
//!
//! The crate builds reduced-order models for parameterized dynamical systems
//! by projecting them onto trial manifolds parameterized by a convolutional
//! autoencoder decoder. It contains:
//!
//! - [`tensor`]: dense `f64` tensors with reverse- and forward-mode
//!   differentiation for the layer types the autoencoder needs;
//! - [`net`]: the autoencoder itself (assembly, encode/decode, decoder
//!   Jacobian, restriction/prolongation/scaling, initialization, flop model,
//!   checkpoint format);
//! - [`fom`]: full-order models (1D Burgers finite volumes, 2D chemically
//!   reacting flow finite differences, a linear validation model) and their
//!   implicit linear-multistep discretization with Newton solves;
//! - [`offline`]: snapshot collection, POD via the method of snapshots,
//!   and Adam-based autoencoder training with early stopping;
//! - [`rom`]: manifold Galerkin and manifold LSPG projection with
//!   quasi-Newton / Gauss-Newton solvers and strong-Wolfe line search,
//!   plus the affine (POD) special case and the encoder-Galerkin baseline;
//! - [`analysis`]: error metrics and the a-posteriori error-bound
//!   instrumentation;
//! - [`io`]: binary artifact formats with checksummed manifests;
//! - [`config`] / [`pipeline`]: the batch experiment driver behind the CLI.

pub mod analysis;
pub mod config;
pub mod error;
pub mod fom;
pub mod io;
pub mod linalg;
pub mod net;
pub mod offline;
pub mod pipeline;
pub mod rom;
pub mod tensor;

pub use error::{Error, Result};
