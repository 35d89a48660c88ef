//! Solver core for parametric time-dependent PDEs built around a
//! latent-conditioned neural ansatz.
//!
//! The pipeline has three stages:
//!
//! 1. [`train`]: pretrain shared network weights together with one latent
//!    code per initial-condition sample (auto-decoder style), then adapt to
//!    an unseen instance by optimizing its latent code alone.
//! 2. [`galerkin`]: advance the network parameters in time by projecting
//!    the PDE residual onto the parameter tangent space, solving a
//!    least-squares problem per step (full or randomized-sparse updates).
//! 3. [`spectral`]: Fourier pseudospectral reference solvers and the MSE
//!    metric used to validate the network predictions.
//!
//! [`net`] holds the ansatz itself (exact parameter Jacobians and spatial
//! derivatives up to third order), [`models`] the benchmark PDE catalog,
//! and [`io`] the persistence formats.

// validation uses `!(x > 0.0)` so NaN is rejected alongside out-of-range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod galerkin;
pub mod io;
pub mod models;
pub mod net;
pub mod spectral;
pub mod train;
