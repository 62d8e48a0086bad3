use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Compared training/defense schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    None,
    ClipOnly,
    FedSgd,
    Uniform,
    DirectedUniform,
    Adaptive,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::None,
        Scheme::ClipOnly,
        Scheme::FedSgd,
        Scheme::Uniform,
        Scheme::DirectedUniform,
        Scheme::Adaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::ClipOnly => "clip_only",
            Scheme::FedSgd => "fedsgd",
            Scheme::Uniform => "uniform",
            Scheme::DirectedUniform => "directed_uniform",
            Scheme::Adaptive => "adaptive",
        }
    }

    pub fn clips(self) -> bool {
        matches!(
            self,
            Scheme::ClipOnly | Scheme::Uniform | Scheme::DirectedUniform | Scheme::Adaptive
        )
    }

    pub fn adds_noise(self) -> bool {
        matches!(self, Scheme::Uniform | Scheme::DirectedUniform | Scheme::Adaptive)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

/// Defense parameters. `sigma0` and the budget are always derived from
/// `clip` and `noise_multiplier`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseConfig {
    pub scheme: Scheme,
    /// l2 clipping threshold `C`.
    pub clip: f64,
    /// Noise multiplier `nu`.
    pub noise_multiplier: f64,
    pub lambda_p: f64,
    pub lambda_h: f64,
    pub allocator_lr: f64,
    /// Upper bound on the l2 norm of an allocator gradient step.
    pub allocator_grad_clip: f64,
    pub proxy_lr: f64,
    pub proxy_steps_per_round: usize,
    pub allocator_steps_per_round: usize,
    /// Local samples used for the task term of the allocator objective.
    pub allocator_eval_batch: usize,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::None,
            clip: 1.0,
            noise_multiplier: 3.0,
            lambda_p: 1.0,
            lambda_h: 0.1,
            allocator_lr: 1e-3,
            allocator_grad_clip: 1.0,
            proxy_lr: 0.05,
            proxy_steps_per_round: 4,
            allocator_steps_per_round: 1,
            allocator_eval_batch: 4,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("defense: {m}")));
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad("clip must be positive");
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return bad("noise_multiplier must be non-negative");
        }
        if !(self.lambda_p >= 0.0) || !(self.lambda_h >= 0.0) {
            return bad("lambda_p and lambda_h must be non-negative");
        }
        if !(self.allocator_lr >= 0.0) || !(self.proxy_lr >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if !(self.allocator_grad_clip > 0.0) {
            return bad("allocator_grad_clip must be positive");
        }
        if self.allocator_eval_batch == 0 {
            return bad("allocator_eval_batch must be positive");
        }
        Ok(())
    }

    /// `sigma0 = C * nu`
    pub fn sigma0(&self) -> f64 {
        self.clip * self.noise_multiplier
    }

    /// `B = d * sigma0^2`
    pub fn budget(&self, d: usize) -> f64 {
        let s = self.sigma0();
        d as f64 * s * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("bogus".parse::<Scheme>().is_err());
    }

    #[test]
    fn budget_is_derived() {
        let c = DefenseConfig {
            clip: 2.0,
            noise_multiplier: 1.5,
            ..DefenseConfig::default()
        };
        assert_eq!(c.sigma0(), 3.0);
        assert_eq!(c.budget(10), 90.0);
        assert_eq!(DefenseConfig::default().budget(1690), 1690.0 * 9.0);
    }

    #[test]
    fn validation() {
        assert!(DefenseConfig::default().validate().is_ok());
        assert!(DefenseConfig {
            clip: 0.0,
            ..DefenseConfig::default()
        }
        .validate()
        .is_err());
        assert!(DefenseConfig {
            lambda_h: -1.0,
            ..DefenseConfig::default()
        }
        .validate()
        .is_err());
        assert!(DefenseConfig {
            noise_multiplier: -1.0,
            ..DefenseConfig::default()
        }
        .validate()
        .is_err());
    }
}
