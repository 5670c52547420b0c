//! Thread-pool trial runner.

use canopy_core::runner::{wrap_trial_error, TrialRunner};
use rayon::prelude::*;

use crate::error::LabError;

/// Runs trials on a dedicated rayon pool. Outputs are collected by trial
/// index, so results match the sequential runner bit for bit.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `workers == 0` uses every available core.
    pub fn new(workers: usize) -> Result<Self, LabError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| LabError::Pool(e.to_string()))?;
        Ok(Pool { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl TrialRunner for Pool {
    fn run<T, F>(&self, n_trials: u64, f: F) -> canopy_core::Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> canopy_core::Result<T> + Sync,
    {
        let results: Vec<canopy_core::Result<T>> =
            self.pool.install(|| (0..n_trials).into_par_iter().map(&f).collect());
        // report the lowest failing trial, whatever order the workers hit them
        let mut out = Vec::with_capacity(results.len());
        for (t, r) in results.into_iter().enumerate() {
            out.push(r.map_err(|e| wrap_trial_error(t as u64, e))?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use canopy_core::runner::Sequential;
    use canopy_core::Error;

    #[test]
    fn matches_sequential_order() {
        let f = |t: u64| Ok(t * t + 1);
        let a = Pool::new(3).unwrap().run(1000, f).unwrap();
        let b = Sequential.run(1000, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reports_lowest_failing_trial() {
        let f = |t: u64| {
            if t == 17 || t == 400 {
                Err(Error::InvalidArgument("boom".into()))
            } else {
                Ok(t)
            }
        };
        match Pool::new(4).unwrap().run(500, f) {
            Err(Error::TrialFailed { trial, .. }) => assert_eq!(trial, 17),
            other => panic!("{other:?}"),
        }
    }
}
