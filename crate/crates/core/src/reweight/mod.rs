//! The inner weight problem.
//!
//! For a fixed model with per-sample losses `c`, the weights `p_i = 1/N + u_i`
//! solve
//!
//! ```text
//! minimize    sum_i (1/N + u_i) c_i + (gamma / 2) ||u||_1
//! subject to  sum_i u_i = 0,  1/N + u_i >= 0
//! ```
//!
//! The optimal face is described entirely by where each loss sits relative to
//! the breakpoints `c_min` and `c_min + gamma` ([`partition_losses`]). The
//! particular solution built by [`solve_reweight`] zeroes every sample above
//! `c_min + gamma` and spreads the freed mass evenly over the minimum-loss
//! samples.

mod autotune;
mod partition;
mod shift;
mod solve;

pub use autotune::{auto_tune_gamma, gamma_floor};
pub use partition::{partition_losses, LossPartition, PARTITION_TOL};
pub use shift::{WeightShift, FEASIBILITY_TOL};
pub use solve::{blend_weights, check_kkt, reweight_objective, solve_reweight, tv_distance};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one re-weighting step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReweightConfig {
    /// Price per unit of total variation. Must be positive.
    pub gamma: f64,
    /// Blend step toward the fresh solution, in `(0, 1]`.
    pub mu: f64,
    /// Estimated contamination fraction. When present, `gamma` is re-derived
    /// from the losses on every step and `mu` is forced to 1.
    pub contamination_estimate: Option<f64>,
}

impl ReweightConfig {
    pub fn new(gamma: f64, mu: f64) -> Result<Self> {
        let cfg = ReweightConfig {
            gamma,
            mu,
            contamination_estimate: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_estimate(mut self, estimate: f64) -> Result<Self> {
        self.contamination_estimate = Some(estimate);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::invalid(format!("mu must be in (0, 1], got {}", self.mu)));
        }
        if let Some(c) = self.contamination_estimate {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid(format!(
                    "contamination estimate must be in [0, 1], got {c}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_losses(c: &[f64]) -> Result<()> {
    if c.is_empty() {
        return Err(Error::invalid("loss vector is empty"));
    }
    if let Some(i) = c.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("loss {i} is not finite ({})", c[i])));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ReweightConfig::new(0.4, 0.5).is_ok());
        assert!(ReweightConfig::new(0.0, 0.5).is_err());
        assert!(ReweightConfig::new(1.0, 0.0).is_err());
        assert!(ReweightConfig::new(1.0, 1.5).is_err());
        assert!(ReweightConfig::new(1.0, 1.0).unwrap().with_estimate(1.2).is_err());
        assert!(ReweightConfig::new(1.0, 1.0).unwrap().with_estimate(0.2).is_ok());
    }

    #[test]
    fn loss_checks() {
        assert!(check_losses(&[]).is_err());
        assert!(check_losses(&[1.0, f64::NAN]).is_err());
        assert!(check_losses(&[1.0, f64::INFINITY]).is_err());
        assert!(check_losses(&[0.0]).is_ok());
    }
}
