//! Toy sweeps, randomized ordering checks and algorithm comparisons.

mod comparison;
mod toy;
mod verify;

pub use comparison::{
    compare_run, comparison_bounds, exact_truths, path_estimate, snis_on_base, AlgoSummary,
    BoundRow, CompareReport, ComparisonReport, Competitor, ExactTruths, ProductCheck,
};
pub use toy::{
    default_grid, flipped_rw_form, ordering_report, reference_closed_form, resolve_sign, sweep_row,
    toy_instance, toy_sweep, SignResolution, SweepRow, ToyCase, ToyInstance, ToyProposal,
};
pub use verify::{
    check_instance, random_instance, random_symmetric_proposal, verify_suite, CheckResult,
    CheckSummary, RandomInstance, VerifyReport, MAX_STATES,
};
