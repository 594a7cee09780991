use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when checking membership in the feasible set.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Per-sample probability shifts `u` relative to the uniform weights `1/N`.
///
/// Feasible shifts sum to zero and keep every `1/N + u_i` non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightShift {
    shifts: Vec<f64>,
}

impl WeightShift {
    pub fn zeros(n: usize) -> Self {
        WeightShift {
            shifts: vec![0.0; n],
        }
    }

    /// Validates feasibility to within [`FEASIBILITY_TOL`].
    pub fn new(shifts: Vec<f64>) -> Result<Self> {
        let ws = WeightShift { shifts };
        ws.check_feasible(FEASIBILITY_TOL)?;
        Ok(ws)
    }

    /// Skips validation. Callers must guarantee feasibility.
    pub(crate) fn from_vec_unchecked(shifts: Vec<f64>) -> Self {
        WeightShift { shifts }
    }

    pub fn check_feasible(&self, tol: f64) -> Result<()> {
        let n = self.shifts.len();
        if n == 0 {
            return Err(Error::invalid("weight shift has no entries"));
        }
        let floor = -1.0 / n as f64;
        if let Some(i) = self
            .shifts
            .iter()
            .position(|u| !u.is_finite() || *u < floor - tol)
        {
            return Err(Error::invalid(format!(
                "shift {i} = {} is below -1/N = {floor}",
                self.shifts[i]
            )));
        }
        let sum: f64 = self.shifts.iter().sum();
        if sum.abs() > tol {
            return Err(Error::invalid(format!("shifts sum to {sum}, expected 0")));
        }
        Ok(())
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.check_feasible(tol).is_ok()
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.shifts
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.shifts
    }

    /// The weight `1/N + u_i` of sample `i`.
    pub fn probability(&self, i: usize) -> f64 {
        1.0 / self.shifts.len() as f64 + self.shifts[i]
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let base = 1.0 / self.shifts.len() as f64;
        self.shifts.iter().map(|u| base + u).collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.shifts.iter().map(|u| u.abs()).sum()
    }
}
