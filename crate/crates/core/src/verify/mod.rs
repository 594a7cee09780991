//! Verification oracles, enabled with the `oracle` feature.
//!
//! Everything here is an independent route to a quantity the library
//! computes another way: the weight problem is re-solved as a generic linear
//! program, gradients are re-derived by finite differences. [`suites`] bundles
//! them into the randomized checks run by the acceptance tests and the
//! `verify` command.

pub mod gradcheck;
pub mod lp;
pub mod suites;

pub use gradcheck::{check_case, random_small_case, relative_error, GradCheck, SmallCase, FD_STEP};
pub use lp::{oracle_lp, oracle_lp_relaxed, solve_standard, LpOutcome, StandardLp, ORACLE_MAX_N};
pub use suites::{
    autotune_suite, closed_form_identities, fgsm_suite, gradient_suite, oracle_equivalence,
    random_instances, relaxation_ordering, run_all, ReweightInstance, SuiteReport, SuiteSizes,
    VerifyReport,
};
