//! Validation-driven learning-rate schedule and early stopping.

use serde::{Deserialize, Serialize};

/// Multiplies the learning rate by `factor` once validation QWK has failed
/// to exceed its best value for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: u32,
    pub lr: f64,
    pub best: Option<f64>,
    pub bad_epochs: u32,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: u32) -> Self {
        PlateauScheduler {
            factor,
            patience,
            lr,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Record one epoch's validation QWK and return the learning rate for
    /// the next epoch.
    pub fn step(&mut self, val_qwk: f64) -> f64 {
        if self.best.is_none_or(|b| val_qwk > b) {
            self.best = Some(val_qwk);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Tracks the best validation QWK (first occurrence wins ties) and signals a
/// stop after `patience` epochs without a strict improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: u32,
    pub best: Option<f64>,
    pub best_epoch: u32,
    pub since_best: u32,
}

impl EarlyStopping {
    pub fn new(patience: u32) -> Self {
        EarlyStopping {
            patience,
            best: None,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns `true` when `epoch` is a new best.
    pub fn observe(&mut self, epoch: u32, val_qwk: f64) -> bool {
        if self.best.is_none_or(|b| val_qwk > b) {
            self.best = Some(val_qwk);
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seq: &[f64]) -> Vec<f64> {
        let mut s = PlateauScheduler::new(1.0, 0.5, 2);
        seq.iter().map(|q| s.step(*q)).collect()
    }

    #[test]
    fn improving_sequence_keeps_lr() {
        assert_eq!(run(&[0.5, 0.6, 0.7]), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn halves_after_second_bad_epoch() {
        assert_eq!(run(&[0.7, 0.6, 0.6]), [1.0, 1.0, 0.5]);
    }

    #[test]
    fn step_through_mixed_sequence() {
        // Epoch 3 improves and resets the counter; epochs 4 and 5 are bad.
        assert_eq!(run(&[0.7, 0.6, 0.71, 0.6, 0.6]), [1.0, 1.0, 1.0, 1.0, 0.5]);
        // Equal is not an improvement.
        assert_eq!(run(&[0.7, 0.7, 0.7, 0.7, 0.7]), [1.0, 1.0, 0.5, 0.5, 0.25]);
    }

    #[test]
    fn early_stopping_counts_non_improving_epochs() {
        let mut e = EarlyStopping::new(3);
        assert!(e.observe(0, 0.5));
        assert!(!e.observe(1, 0.5));
        assert!(e.observe(2, 0.6));
        for epoch in 3..6 {
            assert!(!e.should_stop());
            e.observe(epoch, 0.1);
        }
        assert!(e.should_stop());
        assert_eq!(e.best_epoch, 2);
    }
}
