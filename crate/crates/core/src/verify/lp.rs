//! Independent linear-programming oracles for the inner weight problem.
//!
//! The weight problem is rewritten in standard form by splitting
//! `u = a - b` with `a, b >= 0` and adding a slack per lower bound, then solved
//! with a dense two-phase simplex. Nothing here looks at the breakpoint
//! structure of the losses.

use crate::error::{Error, Result};
use crate::reweight::{check_losses, WeightShift};

/// Largest instance the oracles accept.
pub const ORACLE_MAX_N: usize = 10;

const PIVOT_TOL: f64 = 1e-11;

/// `minimize c'x  subject to  A x = b,  x >= 0`
#[derive(Debug, Clone)]
pub struct StandardLp {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = col;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut red = cost.to_vec();
        for (row, &bj) in self.rows.iter().zip(&self.basis) {
            let cb = cost[bj];
            if cb != 0.0 {
                for (j, r) in red.iter_mut().enumerate() {
                    *r -= cb * row[j];
                }
            }
        }
        red
    }

    /// Bland's rule; columns `>= allowed` never enter.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        let rhs = self.width;
        loop {
            let red = self.reduced_costs(cost);
            let Some(col) = (0..allowed).find(|&j| red[j] < -PIVOT_TOL) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col] > PIVOT_TOL {
                    let ratio = row[rhs] / row[col];
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - PIVOT_TOL
                                || (ratio <= br + PIVOT_TOL && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, col),
                None => return false,
            }
        }
    }
}

pub fn solve_standard(lp: &StandardLp) -> LpOutcome {
    let m = lp.b.len();
    let n = lp.c.len();
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for (ai, &bi) in lp.a.iter().zip(&lp.b) {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width + 1];
        for j in 0..n {
            row[j] = sign * ai[j];
        }
        row[width] = sign * bi;
        rows.push(row);
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row[n + i] = 1.0;
    }
    let mut t = Tableau {
        rows,
        basis: (n..n + m).collect(),
        width,
    };

    // phase 1: drive the artificials to zero
    let mut phase1 = vec![0.0; width];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    t.optimize(&phase1, width);
    let infeasibility: f64 = t
        .rows
        .iter()
        .zip(&t.basis)
        .filter(|(_, &bj)| bj >= n)
        .map(|(row, _)| row[width])
        .sum();
    if infeasibility > 1e-9 {
        return LpOutcome::Infeasible;
    }
    // pivot remaining artificials out, dropping redundant rows
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            match (0..n).find(|&j| t.rows[r][j].abs() > PIVOT_TOL) {
                Some(col) => {
                    t.pivot(r, col);
                    r += 1;
                }
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    let mut cost = lp.c.clone();
    cost.resize(width, 0.0);
    if !t.optimize(&cost, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (row, &bj) in t.rows.iter().zip(&t.basis) {
        if bj < n {
            x[bj] = row[width];
        }
    }
    let value = x.iter().zip(&lp.c).map(|(xi, ci)| xi * ci).sum();
    LpOutcome::Optimal { x, value }
}

fn check_scale(c: &[f64], penalty: f64) -> Result<()> {
    check_losses(c)?;
    if c.len() > ORACLE_MAX_N {
        return Err(Error::UnsupportedScale {
            n: c.len(),
            max: ORACLE_MAX_N,
        });
    }
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(Error::InvalidInput(format!(
            "penalty must be > 0, got {penalty}"
        )));
    }
    Ok(())
}

/// Standard form over `x = (a, b, s)`: `u_i = a_i - b_i`, `s_i` slack of `1/N + u_i >= 0`.
fn weight_lp(c: &[f64], penalty: f64, sum_to_zero: bool) -> StandardLp {
    let n = c.len();
    let inv = 1.0 / n as f64;
    let mut a = Vec::with_capacity(n + 1);
    let mut b = Vec::with_capacity(n + 1);
    if sum_to_zero {
        let mut row = vec![0.0; 3 * n];
        for i in 0..n {
            row[i] = 1.0;
            row[n + i] = -1.0;
        }
        a.push(row);
        b.push(0.0);
    }
    for i in 0..n {
        let mut row = vec![0.0; 3 * n];
        row[i] = -1.0;
        row[n + i] = 1.0;
        row[2 * n + i] = 1.0;
        a.push(row);
        b.push(inv);
    }
    let mut cost = vec![0.0; 3 * n];
    for i in 0..n {
        cost[i] = c[i] + penalty;
        cost[n + i] = -c[i] + penalty;
    }
    StandardLp { a, b, c: cost }
}

/// Exact optimizer and optimal value of the inner weight problem with price `gamma`.
pub fn oracle_lp(c: &[f64], gamma: f64) -> Result<(WeightShift, f64)> {
    check_scale(c, gamma)?;
    let n = c.len();
    let mean = c.iter().sum::<f64>() / n as f64;
    match solve_standard(&weight_lp(c, 0.5 * gamma, true)) {
        LpOutcome::Optimal { x, value } => {
            let u = (0..n).map(|i| x[i] - x[n + i]).collect();
            Ok((WeightShift::from_vec_unchecked(u), value + mean))
        }
        other => Err(Error::Numeric(format!(
            "weight LP did not reach an optimum: {other:?}"
        ))),
    }
}

/// Optimal value with the sum-to-zero constraint dropped and `penalty * ||u||_1`.
///
/// Pass `gamma / 2` to compare against [`oracle_lp`] on equal terms.
pub fn oracle_lp_relaxed(c: &[f64], penalty: f64) -> Result<f64> {
    check_scale(c, penalty)?;
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    match solve_standard(&weight_lp(c, penalty, false)) {
        LpOutcome::Optimal { value, .. } => Ok(value + mean),
        LpOutcome::Unbounded => Err(Error::Numeric(format!(
            "relaxed weight LP is unbounded (some loss is below -{penalty})"
        ))),
        LpOutcome::Infeasible => Err(Error::Numeric("relaxed weight LP is infeasible".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute force over every basis of a tiny standard-form LP.
    fn enumerate_bases(lp: &StandardLp) -> Option<f64> {
        let m = lp.b.len();
        let n = lp.c.len();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..m).collect();
        loop {
            // Gaussian elimination on the m x m submatrix
            let mut mat: Vec<Vec<f64>> = (0..m)
                .map(|r| {
                    let mut row: Vec<f64> = idx.iter().map(|&j| lp.a[r][j]).collect();
                    row.push(lp.b[r]);
                    row
                })
                .collect();
            let mut singular = false;
            for col in 0..m {
                let piv = (col..m).max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs())).unwrap();
                if mat[piv][col].abs() < 1e-12 {
                    singular = true;
                    break;
                }
                mat.swap(col, piv);
                for r in 0..m {
                    if r != col {
                        let f = mat[r][col] / mat[col][col];
                        for k in col..=m {
                            mat[r][k] -= f * mat[col][k];
                        }
                    }
                }
            }
            if !singular {
                let xb: Vec<f64> = (0..m).map(|r| mat[r][m] / mat[r][r]).collect();
                if xb.iter().all(|&v| v >= -1e-12) {
                    let val: f64 = idx.iter().zip(&xb).map(|(&j, v)| lp.c[j] * v).sum();
                    best = Some(best.map_or(val, |b: f64| b.min(val)));
                }
            }
            // next combination
            let mut k = m;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if idx[k] < n - m + k {
                    idx[k] += 1;
                    for j in k + 1..m {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn known_instance() {
        let (u, v) = oracle_lp(&[1.0, 2.0, 5.0, 9.0], 3.0).unwrap();
        assert!((v - 2.75).abs() < 1e-12);
        assert!(u.is_feasible(1e-12));
    }

    #[test]
    fn constant_losses() {
        let (u, v) = oracle_lp(&[3.0, 3.0, 3.0], 1.0).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        assert!(u.as_slice().iter().all(|x| x.abs() < 1e-12));
        let r = oracle_lp_relaxed(&[3.0, 3.0, 3.0], 4.0).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn relaxed_not_above_constrained() {
        let c = [1.0, 2.0, 5.0, 9.0];
        let (_, v) = oracle_lp(&c, 3.0).unwrap();
        let r = oracle_lp_relaxed(&c, 1.5).unwrap();
        assert!(r <= v + 1e-12);
    }

    #[test]
    fn scale_limit() {
        let c = vec![1.0; ORACLE_MAX_N + 1];
        assert!(matches!(oracle_lp(&c, 1.0), Err(Error::UnsupportedScale { .. })));
        assert!(oracle_lp(&vec![1.0; ORACLE_MAX_N], 1.0).is_ok());
    }

    #[test]
    fn simplex_matches_basis_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(2..=4);
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..6.0)).collect();
            let gamma = rng.random_range(0.05..8.0);
            let lp = weight_lp(&c, 0.5 * gamma, true);
            let brute = enumerate_bases(&lp).unwrap();
            match solve_standard(&lp) {
                LpOutcome::Optimal { value, .. } => assert!((value - brute).abs() < 1e-9),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        // x1 + x2 = -1 with x >= 0
        let lp = StandardLp {
            a: vec![vec![1.0, 1.0]],
            b: vec![-1.0],
            c: vec![1.0, 1.0],
        };
        assert_eq!(solve_standard(&lp), LpOutcome::Infeasible);
        // minimize -x1 with x1 - x2 = 0
        let lp = StandardLp {
            a: vec![vec![1.0, -1.0]],
            b: vec![0.0],
            c: vec![-1.0, 0.0],
        };
        assert_eq!(solve_standard(&lp), LpOutcome::Unbounded);
    }
}
