//! Reaction-coordinate discovery for metastable stochastic systems.
//!
//! A metastable diffusion `dX_t = -∇V(X_t) dt + sqrt(2/β) dW_t` relaxes on a
//! few slow time scales, visible as transfer-operator eigenvalues close to 1.
//! For every state `x`, the lag-`t` transition density `p^t(x,·)` is embedded
//! into a low-dimensional Euclidean space through Monte Carlo averages of
//! linear observables over short trajectory bursts. The embedded point cloud
//! concentrates near a low-dimensional manifold; parametrizing that manifold
//! with diffusion maps yields a reaction coordinate whose coordinate
//! projection preserves the dominant spectrum. Ulam discretizations of the
//! full and the projected transfer operator quantify how well it does.
//!
//! The crate is organized along the pipeline:
//!
//! - [`dynamics`] — potential registry and the Euler–Maruyama integrator with
//!   per-stream reproducible noise.
//! - [`sampling`] — evaluation point sets, burst ensembles, equilibrium
//!   trajectories.
//! - [`embedding`] — observable sets and the Monte Carlo transition-density
//!   embedding.
//! - [`manifold`] — diffusion maps, nearest-neighbor reaction-coordinate
//!   evaluation, intrinsic-dimension diagnostics.
//! - [`spectrum`] — Ulam box discretization, transition counting, eigenvalue
//!   and implied-time-scale reports.
//! - [`validation`] — coordinate-projection properties, eigenvalue
//!   perturbation oracle, parametrization scores, Monte Carlo committors.
//! - [`io`] — flat binary and CSV serialization of the artifacts above.

pub mod dynamics;
pub mod embedding;
pub mod error;
pub mod io;
pub mod manifold;
pub mod mat;
pub mod sampling;
pub mod spectrum;
pub mod validation;

mod linalg;
mod parallel;

pub use error::{Error, Result};
