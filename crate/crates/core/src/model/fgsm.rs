use ndarray::{Array2, ArrayView2, Zip};

use super::{LossKind, ModelState, Scalar};
use crate::error::{Error, Result};

/// Sign with `sign(0) = 0`.
pub fn sign<S: Scalar>(v: S) -> S {
    if v > S::zero() {
        S::one()
    } else if v < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    Ok(())
}

/// `x + epsilon * sign(grad_x J(theta; x, y))`, without clipping.
pub fn fgsm_perturb<S: Scalar>(
    model: &ModelState<S>,
    x: &[S],
    y: usize,
    epsilon: f64,
    kind: LossKind,
) -> Result<Vec<S>> {
    check_epsilon(epsilon)?;
    let grad = model.grad_input(x, y, kind)?;
    let eps = S::lit(epsilon);
    Ok(x.iter()
        .zip(&grad)
        .map(|(&xi, &gi)| xi + eps * sign(gi))
        .collect())
}

/// Row-wise [`fgsm_perturb`] over a batch.
pub fn fgsm_batch<S: Scalar>(
    model: &ModelState<S>,
    x: ArrayView2<'_, S>,
    labels: &[usize],
    epsilon: f64,
    kind: LossKind,
) -> Result<Array2<S>> {
    check_epsilon(epsilon)?;
    let mut grad = model.input_gradients(x, labels, kind)?;
    let eps = S::lit(epsilon);
    Zip::from(&mut grad)
        .and(&x)
        .for_each(|g, &xi| *g = xi + eps * sign(*g));
    Ok(grad)
}
