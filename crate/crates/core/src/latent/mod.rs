//! Auxiliary-variable models: an approximate level `(Q^(U), η)` and an
//! exact-in-expectation level `(Q^(V), ζ)` over a finite parameter grid.

mod kernels;
mod measures;
mod model;

pub use kernels::{
    base_kernel, da_kernel, is_kernel, pm_kernel, pm_parent_kernel, zeta_hat_table, DaVariant,
    PmKernel,
};
pub use measures::{
    enumerate_measures, eval_weights, support_check, ModelMeasures, SupportReport, SupportWitness,
    Weights,
};
pub use model::{
    preset, two_coin, EnumerableModel, LatentModel, ModelDoc, NoisyModel, QvDoc, TableModel,
    TestFn, VRecord,
};

pub(crate) use measures::weights_with_eta;
