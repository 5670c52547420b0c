//! Trial loops. Results always come back in trial order, so any runner gives
//! identical downstream numbers.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::{Error, Result};

pub trait TrialRunner {
    /// Evaluates `f(0..n_trials)` and returns the outputs indexed by trial.
    /// The first failing trial (lowest id) aborts the run.
    fn run<T, F>(&self, n_trials: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl TrialRunner for Sequential {
    fn run<T, F>(&self, n_trials: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
    {
        (0..n_trials)
            .map(|t| f(t).map_err(|e| wrap_trial_error(t, e)))
            .collect()
    }
}

pub fn wrap_trial_error(trial: u64, e: Error) -> Error {
    match e {
        Error::TrialFailed { .. } => e,
        other => Error::TrialFailed {
            trial,
            source: Box::new(other),
        },
    }
}
