//! Simulation harness, statistics and the exact small-instance oracle.

pub mod harness;
pub mod oracle;
pub mod stats;

pub use harness::{
    brute_force_comparison, convergence_study, derive_seed, goodness_experiment, oracle_comparison,
    run_search_experiment, subtree_size_study, trial_rng, ExperimentConfig, StartMode, TargetMode, TrialSummary,
    TrieSource,
};
pub use oracle::brute_force_expected_t;
