//! Experiment drivers behind the subcommands.

mod convergence;
mod lemma;
mod rei;
mod simulate;
mod uniqueness;

pub use convergence::{convergence_study, ConvergenceReport, LevelRow};
pub use lemma::{verify_lemma, LemmaArgs};
pub use rei::{rei_check, ReiReport};
pub use simulate::{simulate, SimulateSummary};
pub use uniqueness::uniqueness_study;

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub message: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            crate::error::EXIT_OK
        } else {
            crate::error::EXIT_VERIFICATION
        }
    }
}

fn elapsed(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64()
}
