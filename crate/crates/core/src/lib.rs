//! Exact and simulated asymptotic-variance analysis for reversible MCMC.
//!
//! The crate is organised in layers:
//!
//! * [`finite`]: dense kernel algebra on finite state spaces, covering stationary
//!   distributions, Dirichlet forms, exact asymptotic variances, MH/DA kernel
//!   construction, augmentation, jump chains and Peskun-type comparisons.
//! * [`latent`]: the auxiliary-variable framework behind pseudomarginal and
//!   importance-sampling schemes, with exact enumeration for finite models and
//!   the product-space kernels of the PM, PM-parent and DA chains.
//! * [`samplers`]: seeded simulation of the base, PM-parent, DA and IS chains
//!   (IS0, ISJ) and their output estimators.
//! * [`variance`]: empirical asymptotic-variance estimators and the IS
//!   variance decomposition, both plug-in and exact.
//! * [`experiments`]: toy sweeps, randomized ordering checks and algorithm
//!   comparisons used by the `asvar-lab` CLI.

pub mod error;
pub mod experiments;
pub mod finite;
pub mod latent;
pub mod samplers;
pub mod variance;

pub use error::{Error, Result};
