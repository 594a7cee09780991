use serde::{Deserialize, Serialize};

use super::check_losses;
use crate::error::{Error, Result};

/// Absolute tolerance on loss values for landing exactly on a breakpoint.
///
/// Boundary assignment is free on the optimal face, so near-ties are folded
/// into `i_min` (first) or `i_big` (second) deterministically.
pub const PARTITION_TOL: f64 = 1e-9;

/// Position of each loss relative to the breakpoints `c_min` and `c_min + gamma`.
///
/// Index sets are 0-based and sorted ascending; together they partition `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPartition {
    pub n: usize,
    pub c_min: f64,
    pub gamma: f64,
    /// `c_i == c_min`
    pub i_min: Vec<usize>,
    /// `c_min < c_i < c_min + gamma`
    pub i_mid: Vec<usize>,
    /// `c_i == c_min + gamma`
    pub i_big: Vec<usize>,
    /// `c_i > c_min + gamma`; these samples are pruned.
    pub chi: Vec<usize>,
}

impl LossPartition {
    pub fn pruned_fraction(&self) -> f64 {
        self.chi.len() as f64 / self.n as f64
    }
}

pub fn partition_losses(c: &[f64], gamma: f64) -> Result<LossPartition> {
    check_losses(c)?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
    }
    let c_min = c.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = c_min + gamma;

    let mut part = LossPartition {
        n: c.len(),
        c_min,
        gamma,
        i_min: Vec::new(),
        i_mid: Vec::new(),
        i_big: Vec::new(),
        chi: Vec::new(),
    };
    for (i, &ci) in c.iter().enumerate() {
        if ci - c_min <= PARTITION_TOL {
            part.i_min.push(i);
        } else if (ci - upper).abs() <= PARTITION_TOL {
            part.i_big.push(i);
        } else if ci > upper {
            part.chi.push(i);
        } else {
            part.i_mid.push(i);
        }
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spread_losses() {
        let p = partition_losses(&[1.0, 2.0, 5.0, 9.0], 3.0).unwrap();
        assert_eq!(p.c_min, 1.0);
        assert_eq!(p.i_min, vec![0]);
        assert_eq!(p.i_mid, vec![1]);
        assert!(p.i_big.is_empty());
        assert_eq!(p.chi, vec![2, 3]);
    }

    #[test]
    fn constant_losses() {
        let p = partition_losses(&[7.0, 7.0, 7.0], 0.5).unwrap();
        assert_eq!(p.i_min, vec![0, 1, 2]);
        assert!(p.i_mid.is_empty() && p.i_big.is_empty() && p.chi.is_empty());
    }

    #[test]
    fn upper_breakpoint_is_big() {
        let p = partition_losses(&[0.0, 2.0], 2.0).unwrap();
        assert_eq!(p.i_min, vec![0]);
        assert_eq!(p.i_big, vec![1]);
        assert!(p.chi.is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(partition_losses(&[], 1.0), Err(Error::InvalidInput(_))));
        assert!(partition_losses(&[1.0, f64::NAN], 1.0).is_err());
        assert!(partition_losses(&[1.0], 0.0).is_err());
        assert!(partition_losses(&[1.0], -1.0).is_err());
    }

    proptest! {
        #[test]
        fn sets_partition_indices(c in prop::collection::vec(0.0f64..10.0, 1..40), gamma in 0.01f64..5.0) {
            let p = partition_losses(&c, gamma).unwrap();
            let mut all: Vec<usize> = p.i_min.iter().chain(&p.i_mid).chain(&p.i_big).chain(&p.chi).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..c.len()).collect::<Vec<_>>());
        }

        #[test]
        fn affine_equivariance(
            c in prop::collection::vec(0.0f64..10.0, 1..30),
            gamma in 0.05f64..5.0,
            alpha in 0.1f64..10.0,
            beta in -5.0f64..5.0,
        ) {
            let base = partition_losses(&c, gamma).unwrap();
            let scaled: Vec<f64> = c.iter().map(|v| alpha * v + beta).collect();
            let moved = partition_losses(&scaled, alpha * gamma).unwrap();
            // Points within rounding distance of a breakpoint may legitimately move.
            let near = |v: f64| (v - base.c_min).abs() < 1e-6 && v != base.c_min
                || (v - base.c_min - gamma).abs() < 1e-6;
            prop_assume!(!c.iter().any(|&v| near(v)));
            prop_assert_eq!(base.i_min, moved.i_min);
            prop_assert_eq!(base.i_mid, moved.i_mid);
            prop_assert_eq!(base.i_big, moved.i_big);
            prop_assert_eq!(base.chi, moved.chi);
        }
    }
}
