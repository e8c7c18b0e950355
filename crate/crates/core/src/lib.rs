//! Multi-stage scenario approach for chance-constrained linear programs.
//!
//! Each chance constraint (stage) is replaced by a finite number of sampled
//! constraints. The crate plans how many samples each stage needs from its
//! support rank, solves the sampled program with a unique (lexicographic)
//! optimizer, identifies support and essential constraints, removes
//! samples after the fact, and validates violation probabilities.

pub mod bounds;
pub mod cuboid_bench;
pub mod discard;
pub mod error;
pub mod lp;
pub mod model;
pub mod probkernel;
pub mod rng;
pub mod scenario_core;
pub mod validate;

pub use bounds::{
    chernoff_sample_size, discard_posterior_confidence, explicit_sample_size_with_discarding,
    implicit_sample_size, implicit_sample_size_with_discarding, max_discardable, plan_multistage,
    refined_sample_size, split_confidence, Method, Policy, SampleSizePlan, StagePlan,
};
pub use discard::{
    check_discard_assumption, monotonicity_empirical_check, remove, remove_greedy, remove_marginal,
    remove_optimal, AssumptionStatus, MonotonicityReport, RemovalAlgorithm, RemovalResult,
};
pub use error::{Error, Result};
pub use model::{
    AffineRow, BoxBounds, Generator, LinearRow, MultiSample, Provenance, Sampler, ScalarDist,
    ScenarioProgram, StageSpec,
};
pub use probkernel::{binomial_cdf, log_binomial_coefficient, regularized_incomplete_beta, LogProb};
pub use scenario_core::{
    draw_multisample, draw_replication, essential_sets_bruteforce, sampling_lemma_check, solve,
    support_rank_linear, support_rank_quadratic, support_set, EssentialSets, Member, SampleMask,
    ScenarioLp, Solution, SolveStatus,
};
pub use validate::{
    clopper_pearson, estimate_violation, violation_survey, Survey, SurveyOptions, ViolationEstimate,
    ViolationMethod,
};
