//! Central finite-difference checks for the hand-written backpropagation.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Activation, Architecture, LossKind, ModelState};

/// Step used by the acceptance gradient checks.
pub const FD_STEP: f64 = 1e-5;

/// `||a - b|| / max(||a||, ||b||, 1e-8)`
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-8)
}

fn weighted_loss(
    model: &ModelState<f64>,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    weights: &[f64],
    kind: LossKind,
) -> Result<f64> {
    let losses = model.losses(x, labels, kind)?;
    Ok(losses.iter().zip(weights).map(|(l, w)| l * w).sum())
}

/// Central differences of `sum_i w_i J(theta; x_i, y_i)` in each parameter.
pub fn fd_param_grad(
    model: &ModelState<f64>,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    weights: &[f64],
    kind: LossKind,
    step: f64,
) -> Result<Vec<f64>> {
    let mut theta = model.theta().to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let orig = theta[j];
        theta[j] = orig + step;
        let up = ModelState::from_theta(model.arch().clone(), theta.clone())?;
        theta[j] = orig - step;
        let down = ModelState::from_theta(model.arch().clone(), theta.clone())?;
        theta[j] = orig;
        let f_up = weighted_loss(&up, x, labels, weights, kind)?;
        let f_down = weighted_loss(&down, x, labels, weights, kind)?;
        out.push((f_up - f_down) / (2.0 * step));
    }
    Ok(out)
}

/// Central differences of `J(theta; x, y)` in each input coordinate.
pub fn fd_input_grad(
    model: &ModelState<f64>,
    x: &[f64],
    y: usize,
    kind: LossKind,
    step: f64,
) -> Result<Vec<f64>> {
    let mut xs = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = xs[j];
        xs[j] = orig + step;
        let up = model.losses(ArrayView2::from_shape((1, xs.len()), &xs).unwrap(), &[y], kind)?[0];
        xs[j] = orig - step;
        let down = model.losses(ArrayView2::from_shape((1, xs.len()), &xs).unwrap(), &[y], kind)?[0];
        xs[j] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// A random classifier with at most 50 parameters and a few labelled rows.
#[derive(Debug, Clone)]
pub struct SmallCase {
    pub model: ModelState<f64>,
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn random_small_case(rng: &mut ChaCha8Rng) -> Result<SmallCase> {
    let arch = loop {
        let input_dim = rng.random_range(2..=5);
        let num_classes = rng.random_range(2..=4);
        let hidden = match rng.random_range(0..3) {
            0 => vec![],
            1 => vec![rng.random_range(2..=5)],
            _ => vec![rng.random_range(2..=4), rng.random_range(2..=3)],
        };
        let activation = if rng.random_bool(0.5) {
            Activation::Relu
        } else {
            Activation::Tanh
        };
        let arch = Architecture {
            input_dim,
            hidden,
            num_classes,
            activation,
            bias: rng.random_bool(0.7),
        };
        if arch.param_count() <= 50 {
            break arch;
        }
    };
    let theta: Vec<f64> = (0..arch.param_count())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let model = ModelState::from_theta(arch, theta)?;
    let rows = rng.random_range(1..=4);
    let dim = model.arch().input_dim;
    // Keep every ReLU pre-activation well clear of its kink.
    let x = loop {
        let x = Array2::from_shape_fn((rows, dim), |_| rng.random_range(0.0..1.0));
        if model
            .min_hidden_margin(x.view())?
            .is_none_or(|m| m > 1e-3)
        {
            break x;
        }
    };
    let classes = model.arch().num_classes;
    let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    let weights = (0..rows).map(|_| rng.random_range(0.0..1.0)).collect();
    Ok(SmallCase {
        model,
        x,
        labels,
        weights,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub param_rel_err: f64,
    pub input_rel_err: f64,
}

/// Compares analytic parameter and input gradients with central differences.
pub fn check_case(case: &SmallCase, kind: LossKind, step: f64) -> Result<GradCheck> {
    let analytic = case.model.grad_params_rows(case.x.view(), &case.labels, &case.weights, kind)?;
    let numeric = fd_param_grad(&case.model, case.x.view(), &case.labels, &case.weights, kind, step)?;
    let param_rel_err = relative_error(&analytic, &numeric);

    let mut input_rel_err: f64 = 0.0;
    for (row, &y) in case.x.outer_iter().zip(&case.labels) {
        let xr = row.to_vec();
        let a = case.model.grad_input(&xr, y, kind)?;
        let n = fd_input_grad(&case.model, &xr, y, kind, step)?;
        input_rel_err = input_rel_err.max(relative_error(&a, &n));
    }
    Ok(GradCheck {
        param_rel_err,
        input_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn random_cases_respect_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let c = random_small_case(&mut rng).unwrap();
            assert!(c.model.num_params() <= 50);
        }
    }

    #[test]
    fn small_models_pass_for_every_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let case = random_small_case(&mut rng).unwrap();
            for kind in LossKind::ALL {
                let r = check_case(&case, kind, FD_STEP).unwrap();
                assert!(r.param_rel_err <= 1e-4, "{kind}: {r:?}");
                assert!(r.input_rel_err <= 1e-4, "{kind}: {r:?}");
            }
        }
    }
}
