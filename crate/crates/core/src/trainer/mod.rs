//! The outer block-coordinate loop: weighted SGD epochs alternate with
//! closed-form re-weighting of the training samples.

mod histogram;
mod record;
mod run;
mod step;

pub use histogram::{bucket_of, weight_histogram, WeightHistogram, BUCKETS, BUCKET_LABELS};
pub use record::{csv_header, IterationRecord, RunRecord, RunSummary};
pub use run::{attack_accuracy, evaluate, run, EvalSets, RunFailure, RunOutcome};
pub use step::{gradient_step, reweight_step, sample_weights, ReweightOutcome};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LossKind;
use crate::reweight::ReweightConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Uniform weights throughout; never re-weights.
    Erm,
    /// Re-weighting on clean gradient steps.
    Rrm,
    /// Re-weighting on FGSM-perturbed gradient steps.
    Arrm,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Erm => "erm",
            Mode::Rrm => "rrm",
            Mode::Arrm => "arrm",
        }
    }

    pub fn reweights(self) -> bool {
        self != Mode::Erm
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "erm" => Ok(Mode::Erm),
            "rrm" => Ok(Mode::Rrm),
            "arrm" | "a-rrm" => Ok(Mode::Arrm),
            _ => Err(Error::invalid(format!(
                "unknown mode {s:?}, expected erm, rrm or arrm"
            ))),
        }
    }
}

/// How sample probabilities turn into per-batch gradient weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScaling {
    /// `theta -= eta * sum_{i in B} (1/N + u_i) * grad J_i`: every epoch moves
    /// the parameters by about `eta` times the full weighted gradient.
    Literal,
    /// The literal step multiplied by `N / |B|`, so uniform weights give
    /// ordinary mean-loss mini-batch SGD.
    BatchMean,
}

impl WeightScaling {
    pub fn name(self) -> &'static str {
        match self {
            WeightScaling::Literal => "literal",
            WeightScaling::BatchMean => "batch-mean",
        }
    }
}

impl FromStr for WeightScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(WeightScaling::Literal),
            "batch-mean" => Ok(WeightScaling::BatchMean),
            _ => Err(Error::invalid(format!(
                "unknown weight scaling {s:?}, expected literal or batch-mean"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// FGSM radius used inside gradient steps.
    pub epsilon_train: f64,
    pub epochs_per_iteration: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_scaling: WeightScaling,
    pub reweight: ReweightConfig,
    pub max_iterations: usize,
    /// Iterations without a new best validation accuracy before stopping.
    /// `None` disables early stopping.
    pub patience: Option<usize>,
    pub seed: u64,
    pub loss_kind: LossKind,
}

impl TrainConfig {
    /// MNIST-3 defaults: 10 iterations of 10 epochs, `eta = 0.1`,
    /// `gamma = 0.4`, `mu = 0.5`.
    pub fn new(mode: Mode, seed: u64) -> Self {
        TrainConfig {
            mode,
            epsilon_train: 0.0,
            epochs_per_iteration: 10,
            batch_size: 32,
            learning_rate: 0.1,
            weight_scaling: WeightScaling::Literal,
            reweight: ReweightConfig {
                gamma: 0.4,
                mu: 0.5,
                contamination_estimate: None,
            },
            max_iterations: 10,
            patience: Some(10),
            seed,
            loss_kind: LossKind::Cce,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon_train) {
            return Err(Error::invalid(format!(
                "epsilon_train must be in [0, 1], got {}",
                self.epsilon_train
            )));
        }
        match self.mode {
            Mode::Rrm if self.epsilon_train > 0.0 => {
                return Err(Error::invalid(
                    "mode rrm requires epsilon_train = 0; use arrm for adversarial steps",
                ))
            }
            Mode::Arrm if self.epsilon_train == 0.0 => {
                return Err(Error::invalid("mode arrm requires epsilon_train > 0"))
            }
            _ => {}
        }
        if self.epochs_per_iteration == 0 {
            return Err(Error::invalid("epochs_per_iteration must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if self.patience == Some(0) {
            return Err(Error::invalid("patience must be >= 1 when set"));
        }
        self.reweight.validate()
    }
}
