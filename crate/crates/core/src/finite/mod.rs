//! Dense kernel algebra on finite state spaces.

mod asvar;
mod kernel;
mod peskun;
mod spectral;
mod types;

pub use asvar::{exact_asvar, poisson_asvar, variational_asvar, variational_objective};
pub use kernel::{
    augment, augment_with, build_da, build_mh, check_reversible, dirichlet_form, dirichlet_inner,
    flux_gap, jump_transform, radon_nikodym, recurrent_classes, stationary_dist, REVERSIBILITY_TOL,
};
pub use peskun::{
    holds_leq, peskun_check, Constants, MarginalSplit, OrderingReport, PeskunOptions, Verdicts,
    VERDICT_TOL,
};
pub use spectral::{spectral_info, SpectralInfo, POSITIVITY_TOL, SYMMETRY_TOL};
pub use types::{FiniteDist, FiniteKernel, RealFunction, RefreshTable, StateDoc, STOCHASTIC_TOL};

pub(crate) use kernel::da_acceptance;
