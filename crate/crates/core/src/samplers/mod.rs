//! Seeded simulation of the base, PM-parent, DA and IS chains.

mod estimators;
mod path;
mod runners;

pub use estimators::{estimate, is_ratio, snis, weighted_terms, EstimatorKind, EstimatorResult};
pub use path::{
    path_rows, stream_rng, streams, Algorithm, ChainPath, ChainStep, PathMeta, PathRow,
};
pub use runners::{run, run_base_chain, run_da, run_is, run_pm_parent, IsMode};
