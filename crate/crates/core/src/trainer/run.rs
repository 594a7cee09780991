use std::fmt;

use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::histogram::weight_histogram;
use super::record::{IterationRecord, RunRecord};
use super::step::{gradient_step, losses_f64, reweight_step};
use super::TrainConfig;
use crate::data::ContaminatedDataset;
use crate::error::{Error, Result};
use crate::model::{fgsm_batch, ModelState, Scalar};
use crate::reweight::{tv_distance, WeightShift};

/// Stream of the run seed reserved for batch shuffling.
const SHUFFLE_STREAM: u64 = 1;
const EVAL_CHUNK: usize = 1024;

/// Data for one run. Validation accuracy uses the observed labels, test
/// accuracy the clean ones.
#[derive(Debug, Clone, Copy)]
pub struct EvalSets<'a> {
    pub train: &'a ContaminatedDataset,
    pub validation: Option<&'a ContaminatedDataset>,
    pub test: &'a ContaminatedDataset,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<S> {
    pub model: ModelState<S>,
    pub weights: WeightShift,
    pub record: RunRecord,
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub record: RunRecord,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "run failed after {} iterations: {}",
            self.record.iterations.len(),
            self.error
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub(crate) fn to_scalar<S: Scalar>(x: &Array2<f32>) -> Array2<S> {
    x.mapv(|v| S::lit(v as f64))
}

fn argmax<S: Scalar>(row: ndarray::ArrayView1<'_, S>) -> usize {
    let mut best = (0, S::neg_infinity());
    for (k, &p) in row.iter().enumerate() {
        if p > best.1 {
            best = (k, p);
        }
    }
    best.0
}

fn accuracy_of(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

fn predictions<S: Scalar>(model: &ModelState<S>, x: ArrayView2<'_, S>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(x.nrows());
    for start in (0..x.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        let p = model.forward(x.slice(s![start..end, ..]))?;
        out.extend(p.outer_iter().map(argmax));
    }
    Ok(out)
}

/// Fraction of rows whose predicted class equals the label.
pub fn evaluate<S: Scalar>(
    model: &ModelState<S>,
    x: ArrayView2<'_, S>,
    labels: &[usize],
) -> Result<f64> {
    Ok(accuracy_of(&predictions(model, x)?, labels))
}

/// Accuracy after replacing every input by its FGSM image at radius
/// `epsilon` under `model`, using `labels` for the attack.
pub fn attack_accuracy<S: Scalar>(
    model: &ModelState<S>,
    x: ArrayView2<'_, S>,
    labels: &[usize],
    epsilon: f64,
    kind: crate::model::LossKind,
) -> Result<f64> {
    if epsilon == 0.0 {
        return evaluate(model, x, labels);
    }
    let mut pred = Vec::with_capacity(labels.len());
    for start in (0..x.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        let adv = fgsm_batch(
            model,
            x.slice(s![start..end, ..]),
            &labels[start..end],
            epsilon,
            kind,
        )?;
        pred.extend(predictions(model, adv.view())?);
    }
    Ok(accuracy_of(&pred, labels))
}

struct Prepared<S> {
    train: Array2<S>,
    validation: Option<Array2<S>>,
    test: Array2<S>,
    mask: Vec<bool>,
}

/// Alternates gradient steps and re-weight steps for up to
/// `max_iterations`, stopping early once validation accuracy has not
/// improved for `patience` iterations.
///
/// The weights start uniform. The re-weight step sees losses of the model
/// on the unperturbed training set. The returned model is the one after
/// the last executed iteration.
pub fn run<S: Scalar>(
    model: ModelState<S>,
    sets: EvalSets<'_>,
    config: &TrainConfig,
) -> std::result::Result<RunOutcome<S>, RunFailure> {
    let mut record = RunRecord::default();
    let fail = |error: Error, mut record: RunRecord| {
        record.summarize(false);
        RunFailure { error, record }
    };
    if let Err(e) = config.validate().and_then(|_| check_sets(&model, &sets)) {
        return Err(fail(e, record));
    }
    let data = Prepared {
        train: to_scalar::<S>(sets.train.features()),
        validation: sets.validation.map(|v| to_scalar::<S>(v.features())),
        test: to_scalar::<S>(sets.test.features()),
        mask: sets.train.contamination_mask(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut model = model;
    let mut u = WeightShift::zeros(sets.train.len());
    let mut best_val = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    for iteration in 1..=config.max_iterations {
        let row = iterate(&mut model, &mut u, &mut rng, &data, &sets, config, iteration);
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let e = match e {
                    Error::Numeric(m) => Error::Numeric(format!("iteration {iteration}, {m}")),
                    other => other,
                };
                return Err(fail(e, record));
            }
        };
        let val = row.validation_accuracy;
        record.iterations.push(row);
        if let (Some(v), Some(patience)) = (val, config.patience) {
            if v > best_val {
                best_val = v;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    stopped_early = iteration < config.max_iterations;
                    break;
                }
            }
        }
    }
    record.summarize(stopped_early);
    Ok(RunOutcome {
        model,
        weights: u,
        record,
    })
}

fn check_sets<S: Scalar>(model: &ModelState<S>, sets: &EvalSets<'_>) -> Result<()> {
    let arch = model.arch();
    let all = [Some(sets.train), sets.validation, Some(sets.test)];
    for d in all.into_iter().flatten() {
        if d.dim() != arch.input_dim || d.num_classes() != arch.num_classes {
            return Err(Error::invalid(format!(
                "dataset has {} features and {} classes, model expects {} and {}",
                d.dim(),
                d.num_classes(),
                arch.input_dim,
                arch.num_classes
            )));
        }
    }
    if sets.train.is_empty() || sets.test.is_empty() {
        return Err(Error::invalid("train and test sets must be non-empty"));
    }
    Ok(())
}

fn iterate<S: Scalar>(
    model: &mut ModelState<S>,
    u: &mut WeightShift,
    rng: &mut ChaCha8Rng,
    data: &Prepared<S>,
    sets: &EvalSets<'_>,
    config: &TrainConfig,
    iteration: usize,
) -> Result<IterationRecord> {
    let train = sets.train;
    let observed = train.observed_labels();
    gradient_step(model, data.train.view(), observed, u, config, rng)?;

    let losses = losses_f64(model, data.train.view(), observed, config)?;
    if let Some(i) = losses.iter().position(|c| !c.is_finite()) {
        return Err(Error::Numeric(format!("loss of training sample {i} is not finite")));
    }
    let pred = predictions(model, data.train.view())?;
    let (mut gamma, mut mu) = (None, None);
    let (mut pruned, mut precision, mut recall) = (0, None, None);
    if config.mode.reweights() {
        let out = reweight_step(&losses, u, config)?;
        let chi = &out.partition.chi;
        let hits = chi.iter().filter(|&&i| data.mask[i]).count();
        pruned = chi.len();
        precision = (!chi.is_empty()).then(|| hits as f64 / chi.len() as f64);
        let bad = train.contaminated_set().len();
        recall = (bad > 0).then(|| hits as f64 / bad as f64);
        gamma = Some(out.gamma);
        mu = Some(out.mu);
        *u = out.weights;
    }

    let validation_accuracy = match (sets.validation, &data.validation) {
        (Some(v), Some(x)) if !v.is_empty() => Some(evaluate(model, x.view(), v.observed_labels())?),
        _ => None,
    };
    let test_accuracy = evaluate(model, data.test.view(), sets.test.clean_labels())?;
    let n = losses.len() as f64;
    Ok(IterationRecord {
        iteration,
        gamma,
        mu,
        loss_min: losses.iter().copied().fold(f64::INFINITY, f64::min),
        loss_mean: losses.iter().sum::<f64>() / n,
        loss_max: losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        train_accuracy: accuracy_of(&pred, observed),
        train_clean_accuracy: accuracy_of(&pred, train.clean_labels()),
        validation_accuracy,
        test_accuracy,
        tv_distance: tv_distance(u),
        pruned,
        pruned_precision: precision,
        pruned_recall: recall,
        histogram: weight_histogram(u, &data.mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{inject_ncar, make_synthetic_blobs, split, Provenance};
    use crate::model::Architecture;
    use crate::trainer::Mode;

    fn noisy_blobs(rate: f64, seed: u64) -> crate::data::Splits {
        let d = make_synthetic_blobs(3, 80, 4, 4.0, seed).unwrap();
        let (obs, _) = inject_ncar(d.clean_labels(), rate, 3, seed).unwrap();
        let d = d.with_observed(obs, Provenance { seed, rate }).unwrap();
        split(&d, [0.6, 0.2, 0.2], seed).unwrap()
    }

    fn small_config(mode: Mode) -> TrainConfig {
        let mut c = TrainConfig::new(mode, 9);
        c.epochs_per_iteration = 2;
        c.max_iterations = 4;
        c.learning_rate = 0.05;
        c.batch_size = 16;
        c
    }

    fn sets(s: &crate::data::Splits) -> EvalSets<'_> {
        EvalSets {
            train: &s.train,
            validation: Some(&s.validation),
            test: &s.test,
        }
    }

    #[test]
    fn erm_never_reweights() {
        let s = noisy_blobs(0.2, 1);
        let model = ModelState::<f64>::init(Architecture::mlp(4, vec![8], 3), 2).unwrap();
        let out = run(model, sets(&s), &small_config(Mode::Erm)).unwrap();
        assert_eq!(out.weights, WeightShift::zeros(s.train.len()));
        for r in &out.record.iterations {
            assert_eq!(r.gamma, None);
            assert_eq!(r.tv_distance, 0.0);
            assert_eq!(r.histogram.contaminated_total() + r.histogram.clean_total(), s.train.len());
            assert_eq!(r.histogram.contaminated[1] + r.histogram.clean[1], s.train.len());
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let s = noisy_blobs(0.3, 4);
        let model = ModelState::<f32>::init(Architecture::mlp(4, vec![8], 3), 2).unwrap();
        let a = run(model.clone(), sets(&s), &small_config(Mode::Rrm)).unwrap();
        let b = run(model, sets(&s), &small_config(Mode::Rrm)).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.model, b.model);
        assert!(a.weights.is_feasible(1e-9));
        assert_eq!(a.record.iterations.len(), 4);
    }

    #[test]
    fn separable_blobs_fit() {
        let d = make_synthetic_blobs(2, 100, 2, 6.0, 0).unwrap();
        let s = split(&d, [0.8, 0.0, 0.2], 0).unwrap();
        let model = ModelState::<f64>::init(Architecture::softmax_linear(2, 2), 0).unwrap();
        let mut c = small_config(Mode::Erm);
        c.epochs_per_iteration = 20;
        c.max_iterations = 1;
        let out = run(model, EvalSets { train: &s.train, validation: None, test: &s.test }, &c)
            .unwrap();
        assert!(out.record.iterations[0].train_accuracy >= 0.99);
    }

    #[test]
    fn early_stopping_on_plateau() {
        let s = noisy_blobs(0.0, 2);
        let model = ModelState::<f32>::init(Architecture::mlp(4, vec![8], 3), 2).unwrap();
        let mut c = small_config(Mode::Erm);
        c.max_iterations = 50;
        c.patience = Some(2);
        let out = run(model, sets(&s), &c).unwrap();
        assert!(out.record.summary.stopped_early);
        assert!(out.record.iterations.len() < 50);
        let peak = out.record.summary.peak_iteration;
        assert_eq!(out.record.iterations.len(), peak + 2);
    }

    #[test]
    fn mismatched_model_is_reported_with_empty_record() {
        let s = noisy_blobs(0.2, 1);
        let model = ModelState::<f64>::init(Architecture::mlp(5, vec![8], 3), 2).unwrap();
        let err = run(model, sets(&s), &small_config(Mode::Rrm)).unwrap_err();
        assert!(err.record.iterations.is_empty());
        assert!(matches!(err.error, Error::InvalidInput(_)));
    }

    #[test]
    fn diverging_run_keeps_partial_record() {
        let s = noisy_blobs(0.2, 1);
        let model = ModelState::<f32>::init(Architecture::mlp(4, vec![64, 64], 3), 2).unwrap();
        let mut c = small_config(Mode::Rrm);
        c.learning_rate = 1e30;
        c.loss_kind = crate::model::LossKind::Mse;
        let err = run(model, sets(&s), &c).unwrap_err();
        assert!(matches!(err.error, Error::Numeric(_)), "{}", err.error);
        assert!(err.to_string().contains("iteration"));
    }

    #[test]
    fn zero_radius_attack_is_plain_accuracy() {
        let s = noisy_blobs(0.0, 3);
        let model = ModelState::<f64>::init(Architecture::mlp(4, vec![8], 3), 2).unwrap();
        let x = to_scalar::<f64>(s.test.features());
        let labels = s.test.clean_labels();
        let kind = crate::model::LossKind::Cce;
        assert_eq!(
            attack_accuracy(&model, x.view(), labels, 0.0, kind).unwrap(),
            evaluate(&model, x.view(), labels).unwrap()
        );
        assert!(attack_accuracy(&model, x.view(), labels, 1.0, kind).unwrap() <= 1.0);
    }
}
