use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{TrainConfig, WeightScaling};
use crate::error::{Error, Result};
use crate::model::{fgsm_batch, ModelState, Scalar};
use crate::reweight::{
    auto_tune_gamma, blend_weights, partition_losses, solve_reweight, LossPartition, WeightShift,
};

/// Per-sample probabilities `max(0, 1/N + u_i)`.
pub fn sample_weights(u: &WeightShift) -> Vec<f64> {
    let inv = 1.0 / u.len() as f64;
    u.as_slice().iter().map(|&ui| (inv + ui).max(0.0)).collect()
}

/// `epochs_per_iteration` epochs of weighted mini-batch SGD.
///
/// Each epoch visits the samples in a fresh order drawn from `rng`. A batch
/// `B` moves the parameters by
/// `-eta * sum_{i in B} (1/N + u_i) * grad J(theta; x_i, y_i)`, times
/// `N / |B|` under [`WeightScaling::BatchMean`]. When `epsilon_train > 0`
/// the batch inputs are replaced by their FGSM images under the current
/// parameters before the gradient is taken.
pub fn gradient_step<S: Scalar>(
    model: &mut ModelState<S>,
    features: ArrayView2<'_, S>,
    labels: &[usize],
    u: &WeightShift,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n = labels.len();
    if features.nrows() != n || u.len() != n {
        return Err(Error::invalid(format!(
            "{} rows, {} labels and {} weights do not line up",
            features.nrows(),
            n,
            u.len()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    let probs = sample_weights(u);
    let mut order: Vec<usize> = (0..n).collect();
    let step = S::lit(config.learning_rate);
    for epoch in 0..config.epochs_per_iteration {
        order.shuffle(rng);
        for (b, ids) in order.chunks(config.batch_size).enumerate() {
            let scale = match config.weight_scaling {
                WeightScaling::Literal => 1.0,
                WeightScaling::BatchMean => n as f64 / ids.len() as f64,
            };
            let weights: Vec<S> = ids.iter().map(|&i| S::lit(probs[i] * scale)).collect();
            if weights.iter().all(|w| *w == S::zero()) {
                continue;
            }
            let ys: Vec<usize> = ids.iter().map(|&i| labels[i]).collect();
            let mut xb = features.select(Axis(0), ids);
            if config.epsilon_train > 0.0 {
                xb = fgsm_batch(model, xb.view(), &ys, config.epsilon_train, config.loss_kind)?;
            }
            let grad = model
                .grad_params_rows(xb.view(), &ys, &weights, config.loss_kind)
                .map_err(|e| with_context(e, epoch, b))?;
            model.apply_update(&grad, step)?;
        }
    }
    Ok(())
}

fn with_context(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {batch}: {m}")),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReweightOutcome {
    pub weights: WeightShift,
    /// Partition of the fresh solution before blending.
    pub partition: LossPartition,
    pub gamma: f64,
    pub mu: f64,
}

/// Re-solves the weights from full-training-set losses `c` and blends.
///
/// With a contamination estimate, `gamma` is re-derived from `c` and the
/// blend step is 1.
pub fn reweight_step(
    losses: &[f64],
    u_prev: &WeightShift,
    config: &TrainConfig,
) -> Result<ReweightOutcome> {
    let rw = &config.reweight;
    let (gamma, mu) = match rw.contamination_estimate {
        Some(est) => (auto_tune_gamma(losses, est)?, 1.0),
        None => (rw.gamma, rw.mu),
    };
    let partition = partition_losses(losses, gamma)?;
    let u_star = solve_reweight(losses, gamma)?;
    let weights = blend_weights(u_prev, &u_star, mu)?;
    Ok(ReweightOutcome {
        weights,
        partition,
        gamma,
        mu,
    })
}

/// Full-set per-sample losses in `f64`, computed on unperturbed inputs.
pub(crate) fn losses_f64<S: Scalar>(
    model: &ModelState<S>,
    features: ArrayView2<'_, S>,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    Ok(model
        .losses(features, labels, config.loss_kind)?
        .into_iter()
        .map(|v| v.to_f64().unwrap_or(f64::NAN))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::trainer::Mode;
    use ndarray::Array2;
    use rand::SeedableRng;

    fn toy() -> (ModelState<f64>, Array2<f64>, Vec<usize>) {
        let arch = Architecture::mlp(2, vec![4], 2);
        let model = ModelState::init(arch, 3).unwrap();
        let x = Array2::from_shape_fn((10, 2), |(i, j)| ((i * 3 + j * 7) % 5) as f64 - 2.0);
        let y = (0..10).map(|i| i % 2).collect();
        (model, x, y)
    }

    fn config() -> TrainConfig {
        let mut c = TrainConfig::new(Mode::Rrm, 0);
        c.epochs_per_iteration = 2;
        c.batch_size = 3;
        c
    }

    #[test]
    fn fully_dropped_sample_has_no_influence() {
        let (model, x, y) = toy();
        let mut shifts = vec![0.0; 10];
        shifts[4] = -0.1;
        shifts[0] = 0.1;
        let u = WeightShift::new(shifts).unwrap();
        let mut y_alt = y.clone();
        y_alt[4] = 1 - y_alt[4];
        let mut x_alt = x.clone();
        x_alt.row_mut(4).fill(9.0);
        let mut a = model.clone();
        let mut b = model;
        gradient_step(&mut a, x.view(), &y, &u, &config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        gradient_step(&mut b, x_alt.view(), &y_alt, &u, &config(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.theta(), b.theta());
    }

    #[test]
    fn deterministic_given_rng() {
        let (model, x, y) = toy();
        let u = WeightShift::zeros(10);
        let mut a = model.clone();
        let mut b = model.clone();
        gradient_step(&mut a, x.view(), &y, &u, &config(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        gradient_step(&mut b, x.view(), &y, &u, &config(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.theta(), model.theta());
    }

    #[test]
    fn adversarial_steps_differ() {
        let (model, x, y) = toy();
        let u = WeightShift::zeros(10);
        let mut cfg = config();
        let mut a = model.clone();
        gradient_step(&mut a, x.view(), &y, &u, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        cfg.mode = Mode::Arrm;
        cfg.epsilon_train = 0.3;
        let mut b = model;
        gradient_step(&mut b, x.view(), &y, &u, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_ne!(a.theta(), b.theta());
    }

    #[test]
    fn equal_losses_only_decay_previous() {
        let prev = WeightShift::new(vec![0.1, -0.1, 0.0, 0.0]).unwrap();
        let out = reweight_step(&[0.7; 4], &prev, &config()).unwrap();
        assert_eq!(out.weights.as_slice(), &[0.05, -0.05, 0.0, 0.0]);
        assert!(out.partition.chi.is_empty());
    }

    #[test]
    fn half_step_from_zero() {
        let c = [0.1, 0.2, 2.0, 0.3];
        let out = reweight_step(&c, &WeightShift::zeros(4), &config()).unwrap();
        let star = solve_reweight(&c, 0.4).unwrap();
        for (a, b) in out.weights.as_slice().iter().zip(star.as_slice()) {
            assert_eq!(*a, b / 2.0);
        }
        assert_eq!(out.partition.chi, vec![2]);
    }

    #[test]
    fn auto_tune_prunes_at_least_estimate() {
        let mut cfg = config();
        cfg.reweight.contamination_estimate = Some(0.2);
        let c: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 * 0.013 + 0.01).collect();
        let out = reweight_step(&c, &WeightShift::zeros(100), &cfg).unwrap();
        assert_eq!(out.mu, 1.0);
        assert!(out.partition.chi.len() >= 20);
        let dropped = out.weights.as_slice().iter().filter(|&&u| u == -0.01).count();
        assert!(dropped >= 20);
    }
}
