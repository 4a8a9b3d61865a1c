//! Counterexample-guided synthesis of classifiers and ranking functions.

mod engine;
pub mod condition;

pub use engine::{
    initial_template, learn, run, run_from, verify, CegisConfig, CegisError, CegisStats,
    Counterexample, FailureKind, FailureReport, LearnOutcome, LearnedBisimulation, SampleSet,
    SmtCells, TraceEvent, VerifyOutcome,
};
pub use condition::{condition_holds, sample_satisfied};
