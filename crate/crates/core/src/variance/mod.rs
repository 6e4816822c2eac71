//! Asymptotic-variance estimation: empirical estimators for a single output
//! sequence and the IS variance decomposition, simulated and exact.

mod empirical;
mod importance;

use serde::{Deserialize, Serialize};

pub use empirical::{
    autocovariance, batch_means_asvar, default_batch_count, initial_sequence_asvar,
};
pub use importance::{is_asvar_exact, is_asvar_plugin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AsvarMethod {
    BatchMeans,
    InitialSequence,
    /// Components estimated from refresh replicates at visited states.
    IsPlugin,
    /// Batch means of the linearised weighted output.
    IsLinearized,
    IsExact,
}

/// Parts of the IS variance: `value = mu_a·(var_k_mf + mu_a_vfbar)/c_xi²`.
///
/// `mu_a_vfbar` is `μ(a·ṽ)` with `ṽ` the holding-count weighted conditional
/// variance of the mode; for IS0 it is `μ(v_f̄)`. `d_tilde` is the excess of
/// `value` over `mu_a` times the IS0 value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsComponents {
    pub var_k_mf: f64,
    pub mu_a: f64,
    pub mu_a_vfbar: f64,
    pub c_xi: f64,
    pub d_tilde: f64,
}

impl IsComponents {
    pub fn recombine(&self) -> f64 {
        self.mu_a * (self.var_k_mf + self.mu_a_vfbar) / (self.c_xi * self.c_xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsvarEstimate {
    /// Nonnegative or `+∞`. For jump paths this is per jump-chain step.
    pub value: f64,
    pub method: AsvarMethod,
    pub standard_error: Option<f64>,
    pub components: Option<IsComponents>,
    /// `value / mu_a`: the variance per base-chain iteration, comparable
    /// across IS0 and both ISJ modes.
    pub per_base_step: Option<f64>,
    /// Exact IS0 variance computed on the product space `T × U × V`.
    pub cross_check: Option<f64>,
}
