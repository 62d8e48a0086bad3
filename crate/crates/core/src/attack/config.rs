use crate::error::{Error, Result};

/// Attack parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// Local steps per trace `S`.
    pub steps: usize,
    pub hidden: usize,
    /// Learning rate of the evaluation attacker.
    pub lr: f64,
    /// Maximum full-batch epochs of the evaluation attacker.
    pub epochs: usize,
    /// Fraction of maps used to train the evaluation attacker.
    pub split: f64,
    /// Fraction of the training maps held out for early stopping.
    pub holdout: f64,
    /// Probe samples traced per selected client and round.
    pub probes_per_client: usize,
    /// Fewest traces for which a privacy RMSE is reported.
    pub min_traces: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            steps: 4,
            hidden: 64,
            lr: 0.05,
            epochs: 300,
            split: 0.7,
            holdout: 0.25,
            probes_per_client: 2,
            min_traces: 20,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("attack: {m}")));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad("split must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return bad("holdout must lie in [0, 1)");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be non-negative");
        }
        if self.min_traces < 2 {
            return bad("min_traces must be at least 2");
        }
        Ok(())
    }
}
