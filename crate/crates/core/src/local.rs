//! Per-resource failure prediction from per-KPI anomaly flags.
//!
//! Each resource gets a one-class SVM trained only on failure-free
//! executions; a tick whose flag vector falls outside the learned boundary
//! is a symptom. The symptom must persist for `n` consecutive ticks before
//! the resource-level verdict turns positive, which suppresses isolated
//! blips.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::svm::OneClassSvm;

/// Consecutive-confirmation counter: the verdict is positive only after
/// `n` outlier ticks in a row, and any inlier tick resets it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ConfirmationStreak {
    n: u32,
    streak: u32,
}

impl ConfirmationStreak {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("confirmation threshold n must be >= 1"));
        }
        Ok(ConfirmationStreak { n, streak: 0 })
    }

    /// Feeds one tick; returns the confirmed verdict. The counter
    /// saturates at `n`, so the verdict stays positive for as long as the
    /// outlier run continues.
    pub fn update(&mut self, outlier: bool) -> bool {
        if outlier {
            if self.streak < self.n {
                self.streak += 1;
            }
        } else {
            self.streak = 0;
        }
        self.streak >= self.n
    }

    pub fn reset(&mut self) {
        self.streak = 0;
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn streak(&self) -> u32 {
        self.streak
    }
}

/// Collects flag vectors from failure-free traces for one resource and
/// trains its novelty model. Traces marked faulty are rejected: the model
/// must only ever see normal behavior.
#[derive(Debug, Clone, Default)]
pub struct LocalTrainer<F: Real> {
    dim: Option<usize>,
    vectors: Vec<Vec<F>>,
}

impl<F: Real> LocalTrainer<F> {
    pub fn new() -> Self {
        LocalTrainer {
            dim: None,
            vectors: Vec::new(),
        }
    }

    /// Adds every per-tick flag vector of one trace.
    pub fn add_trace(&mut self, flags: &[Vec<F>], trace_faulty: bool) -> Result<()> {
        if trace_faulty {
            return Err(Error::Train(
                "training traces must be failure-free".into(),
            ));
        }
        for v in flags {
            match self.dim {
                None => self.dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Train(format!(
                        "feature dimension changed from {d} to {}",
                        v.len()
                    )))
                }
                _ => {}
            }
            self.vectors.push(v.clone());
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Trains the one-class SVM on everything collected so far.
    pub fn train(&self, nu: F, gamma: F) -> Result<OneClassSvm<F>> {
        OneClassSvm::train(&self.vectors, nu, gamma)
    }
}

/// Default fraction of training points allowed outside the boundary.
pub const DEFAULT_NU: f64 = 0.05;

/// Default RBF width for `dim`-dimensional flag vectors.
pub fn default_gamma<F: Real>(dim: usize) -> F {
    F::one() / F::of_usize(dim.max(1))
}

/// A trained model plus its confirmation streak: the runtime state of one
/// resource's failure predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct LocalPredictor<F: Real> {
    model: OneClassSvm<F>,
    streak: ConfirmationStreak,
}

impl<F: Real> LocalPredictor<F> {
    pub fn new(model: OneClassSvm<F>, n: u32) -> Result<Self> {
        Ok(LocalPredictor {
            model,
            streak: ConfirmationStreak::new(n)?,
        })
    }

    /// Feeds one tick of per-KPI flags; returns the confirmed verdict.
    pub fn step(&mut self, features: &[F]) -> Result<bool> {
        let outlier = self.model.is_outlier(features)?;
        Ok(self.streak.update(outlier))
    }

    /// Clears the streak (e.g. between runs) without touching the model.
    pub fn reset(&mut self) {
        self.streak.reset();
    }

    pub fn model(&self) -> &OneClassSvm<F> {
        &self.model
    }

    pub fn n(&self) -> u32 {
        self.streak.n()
    }

    /// Replaces the confirmation threshold, clearing the streak.
    pub fn set_n(&mut self, n: u32) -> Result<()> {
        self.streak = ConfirmationStreak::new(n)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(n: u32, outliers: &[bool]) -> Vec<bool> {
        let mut s = ConfirmationStreak::new(n).unwrap();
        outliers.iter().map(|&o| s.update(o)).collect()
    }

    #[test]
    fn two_in_a_row_confirms() {
        assert_eq!(run(2, &[true, true]), vec![false, true]);
    }

    #[test]
    fn inlier_resets_the_streak() {
        assert_eq!(run(2, &[true, false, true]), vec![false, false, false]);
    }

    #[test]
    fn n_one_fires_immediately() {
        assert_eq!(run(1, &[true]), vec![true]);
    }

    #[test]
    fn verdict_holds_through_a_long_run() {
        assert_eq!(
            run(2, &[true, true, true, true, false, true]),
            vec![false, true, true, true, false, false]
        );
    }

    #[test]
    fn zero_n_is_rejected() {
        assert!(ConfirmationStreak::new(0).is_err());
    }

    #[test]
    fn trainer_rejects_faulty_traces() {
        let mut t = LocalTrainer::<f64>::new();
        let flags = vec![vec![0.0; 5]; 20];
        assert!(t.add_trace(&flags, true).is_err());
        assert!(t.add_trace(&flags, false).is_ok());
        assert_eq!(t.len(), 20);
    }

    #[test]
    fn trainer_rejects_dimension_changes() {
        let mut t = LocalTrainer::<f64>::new();
        t.add_trace(&[vec![0.0; 5]], false).unwrap();
        assert!(t.add_trace(&[vec![0.0; 4]], false).is_err());
    }

    #[test]
    fn predictor_confirms_over_n_ticks() {
        // A spread-out cluster keeps its center strictly inside the
        // boundary (only hull points become support vectors).
        let mut trainer = LocalTrainer::new();
        let normal: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                (0..5)
                    .map(|k| {
                        0.3 * crate::hashmix::unit_noise(crate::hashmix::mix3(11, i, k))
                    })
                    .collect()
            })
            .collect();
        trainer.add_trace(&normal, false).unwrap();
        let model = trainer.train(0.05, default_gamma(5)).unwrap();
        let mut p = LocalPredictor::new(model, 2).unwrap();

        let quiet = vec![0.0f64; 5]; // cluster center
        let loud = vec![3.0f64; 5]; // far outside
        assert!(!p.step(&quiet).unwrap());
        assert!(!p.step(&loud).unwrap()); // first outlier: streak 1
        assert!(p.step(&loud).unwrap()); // confirmed
        assert!(!p.step(&quiet).unwrap()); // reset
    }

    #[test]
    fn predictor_serde_round_trip() {
        let mut trainer = LocalTrainer::new();
        trainer.add_trace(&vec![vec![0.0f64; 3]; 15], false).unwrap();
        let model = trainer.train(0.1, default_gamma(3)).unwrap();
        let mut p = LocalPredictor::new(model, 2).unwrap();
        p.step(&[1.0, 1.0, 1.0]).unwrap();
        let bytes = bincode::serialize(&p).unwrap();
        let mut q: LocalPredictor<f64> = bincode::deserialize(&bytes).unwrap();
        // Both resume mid-streak and confirm on the next outlier.
        assert!(p.step(&[1.0, 1.0, 1.0]).unwrap());
        assert!(q.step(&[1.0, 1.0, 1.0]).unwrap());
    }
}
