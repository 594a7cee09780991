use super::{check_losses, partition_losses, WeightShift, FEASIBILITY_TOL};
use crate::error::{Error, Result};

/// Closed-form minimizer of the inner weight problem.
///
/// Pruned samples (`c_i > c_min + gamma`) get `u_i = -1/N`, samples in the
/// middle band and on the upper breakpoint keep `u_i = 0`, and the freed mass
/// `|chi| / N` is split evenly over the minimum-loss samples.
pub fn solve_reweight(c: &[f64], gamma: f64) -> Result<WeightShift> {
    let part = partition_losses(c, gamma)?;
    let n = c.len() as f64;
    let mut u = vec![0.0; c.len()];
    if part.chi.is_empty() {
        return Ok(WeightShift::from_vec_unchecked(u));
    }
    let drop = -1.0 / n;
    for &i in &part.chi {
        u[i] = drop;
    }
    let gain = part.chi.len() as f64 / (n * part.i_min.len() as f64);
    for &i in &part.i_min {
        u[i] = gain;
    }
    Ok(WeightShift::from_vec_unchecked(u))
}

/// `mu * u_star + (1 - mu) * u_prev`. Convex combinations stay feasible.
pub fn blend_weights(u_prev: &WeightShift, u_star: &WeightShift, mu: f64) -> Result<WeightShift> {
    if u_prev.len() != u_star.len() {
        return Err(Error::invalid(format!(
            "length mismatch: previous shift has {}, new shift has {}",
            u_prev.len(),
            u_star.len()
        )));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::invalid(format!("mu must be in (0, 1], got {mu}")));
    }
    if mu == 1.0 {
        return Ok(u_star.clone());
    }
    let keep = 1.0 - mu;
    let out = u_prev
        .as_slice()
        .iter()
        .zip(u_star.as_slice())
        .map(|(p, s)| mu * s + keep * p)
        .collect();
    Ok(WeightShift::from_vec_unchecked(out))
}

/// `sum_i (1/N + u_i) c_i + (gamma / 2) ||u||_1`
pub fn reweight_objective(c: &[f64], u: &WeightShift, gamma: f64) -> Result<f64> {
    if c.len() != u.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} losses, {} shifts",
            c.len(),
            u.len()
        )));
    }
    let base = 1.0 / c.len() as f64;
    let expected: f64 = c
        .iter()
        .zip(u.as_slice())
        .map(|(ci, ui)| (base + ui) * ci)
        .sum();
    Ok(expected + 0.5 * gamma * u.l1_norm())
}

/// Total-variation distance between the uniform weights and `1/N + u`.
pub fn tv_distance(u: &WeightShift) -> f64 {
    0.5 * u.l1_norm()
}

/// Optimality certificate for the inner problem.
///
/// With multiplier `lambda = c_min + gamma/2` on the sum constraint, each
/// index must satisfy:
///
/// - `u_i > 0`: `lambda == c_i + gamma/2`
/// - `u_i == 0`: `c_i - gamma/2 <= lambda <= c_i + gamma/2`
/// - `-1/N < u_i < 0`: `lambda == c_i - gamma/2`
/// - `u_i == -1/N`: `lambda <= c_i - gamma/2`
///
/// `u` itself must be feasible. All comparisons use `tol`.
pub fn check_kkt(c: &[f64], u: &WeightShift, gamma: f64, tol: f64) -> Result<bool> {
    Ok(kkt_first_violation(c, u, gamma, tol)?.is_none())
}

/// Index of the first sample failing its case test, or `None` if `u` is certified.
pub fn kkt_first_violation(
    c: &[f64],
    u: &WeightShift,
    gamma: f64,
    tol: f64,
) -> Result<Option<usize>> {
    check_losses(c)?;
    if c.len() != u.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} losses, {} shifts",
            c.len(),
            u.len()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
    }
    if !u.is_feasible(tol.max(FEASIBILITY_TOL)) {
        return Ok(Some(0));
    }
    let n = c.len() as f64;
    let floor = -1.0 / n;
    let c_min = c.iter().copied().fold(f64::INFINITY, f64::min);
    let half = 0.5 * gamma;
    let lambda = c_min + half;

    for (i, (&ci, &ui)) in c.iter().zip(u.as_slice()).enumerate() {
        let ok = if ui.abs() <= tol {
            lambda >= ci - half - tol && lambda <= ci + half + tol
        } else if (ui - floor).abs() <= tol {
            lambda <= ci - half + tol
        } else if ui > 0.0 {
            (lambda - (ci + half)).abs() <= tol
        } else {
            (lambda - (ci - half)).abs() <= tol
        };
        if !ok {
            return Ok(Some(i));
        }
    }
    Ok(None)
}
