//! Experiment configuration: one TOML document per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use rrm_core::model::{Activation, Architecture, LossKind};
use rrm_core::reweight::ReweightConfig;
use rrm_core::trainer::{Mode, TrainConfig, WeightScaling};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that, when set, is prepended to relative output
/// directories.
pub const OUTPUT_ROOT_ENV: &str = "RRM_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    pub source: SourceConfig,
    #[serde(default)]
    pub contamination: ContaminationConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    /// IDX image/label files; the optional test pair is kept clean.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        /// Keep only these classes, renumbered in ascending order.
        classes: Option<Vec<usize>>,
    },
    Blobs {
        num_classes: usize,
        samples_per_class: usize,
        input_dim: usize,
        separation: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContaminationMode {
    Ncar,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContaminationConfig {
    pub mode: ContaminationMode,
    pub rate: f64,
    /// Kernel file for `mode = "kernel"`; the built-in MNIST kernel when absent.
    pub kernel: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ContaminationConfig {
    fn default() -> Self {
        ContaminationConfig {
            mode: ContaminationMode::Ncar,
            rate: 0.0,
            kernel: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Train, validation and test shares of the contaminated pool.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fractions: [1.0, 0.0, 0.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub bias: bool,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![320, 320, 200],
            activation: Activation::Relu,
            bias: false,
            precision: Precision::F32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: Mode,
    pub loss: LossKind,
    pub epsilon_train: f64,
    pub epochs_per_iteration: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_scaling: WeightScaling,
    pub max_iterations: usize,
    pub patience: Option<usize>,
    pub gamma: f64,
    pub mu: f64,
    pub contamination_estimate: Option<f64>,
    pub seeds: Vec<u64>,
    /// Seeds trained concurrently.
    pub workers: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::new(Mode::Rrm, 0);
        TrainSection {
            mode: t.mode,
            loss: t.loss_kind,
            epsilon_train: t.epsilon_train,
            epochs_per_iteration: t.epochs_per_iteration,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_scaling: t.weight_scaling,
            max_iterations: t.max_iterations,
            patience: t.patience,
            gamma: t.reweight.gamma,
            mu: t.reweight.mu,
            contamination_estimate: None,
            seeds: vec![0],
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// FGSM radii applied to the test set after training.
    pub epsilon_test: Vec<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::schema(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let SourceConfig::Blobs {
            num_classes,
            samples_per_class,
            input_dim,
            separation,
            ..
        } = &self.source
        {
            if *num_classes < 2 || *samples_per_class == 0 || *input_dim == 0 || !(*separation > 0.0)
            {
                return Err(CliError::schema(
                    "source: blobs need num_classes >= 2, samples_per_class >= 1, input_dim >= 1, separation > 0",
                ));
            }
        }
        if let SourceConfig::Idx {
            test_images,
            test_labels,
            ..
        } = &self.source
        {
            if test_images.is_some() != test_labels.is_some() {
                return Err(CliError::schema(
                    "source: test_images and test_labels must be given together",
                ));
            }
        }
        let c = &self.contamination;
        if !(0.0..=1.0).contains(&c.rate) {
            return Err(CliError::schema(format!(
                "contamination.rate must be in [0, 1], got {}",
                c.rate
            )));
        }
        if c.mode == ContaminationMode::Ncar && c.kernel.is_some() {
            return Err(CliError::schema(
                "contamination.kernel is only meaningful with mode = \"kernel\"",
            ));
        }
        let f = self.split.fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(CliError::schema(format!(
                "split.fractions {f:?} must be non-negative and sum to 1"
            )));
        }
        if f[0] == 0.0 {
            return Err(CliError::schema("split.fractions: the train share must be positive"));
        }
        let separate_test = self.has_separate_test();
        if separate_test && f[2] > 0.0 {
            return Err(CliError::schema(
                "split.fractions: the test share must be 0 when the source has its own test set",
            ));
        }
        if !separate_test && f[2] == 0.0 {
            return Err(CliError::schema(
                "split.fractions: the test share must be positive when the source has no test set",
            ));
        }
        if self.model.hidden.contains(&0) {
            return Err(CliError::schema("model.hidden widths must be positive"));
        }
        if self.train.seeds.is_empty() {
            return Err(CliError::schema("train.seeds must not be empty"));
        }
        if self.train.workers == 0 {
            return Err(CliError::schema("train.workers must be >= 1"));
        }
        if let Some(e) = self.evaluation.epsilon_test.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(CliError::schema(format!(
                "evaluation.epsilon_test values must be in [0, 1], got {e}"
            )));
        }
        self.train_config(self.train.seeds[0])
            .validate()
            .map_err(|e| CliError::schema(format!("train: {e}")))?;
        Ok(())
    }

    pub fn has_separate_test(&self) -> bool {
        matches!(&self.source, SourceConfig::Idx { test_images: Some(_), .. })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            mode: t.mode,
            epsilon_train: t.epsilon_train,
            epochs_per_iteration: t.epochs_per_iteration,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_scaling: t.weight_scaling,
            reweight: ReweightConfig {
                gamma: t.gamma,
                mu: t.mu,
                contamination_estimate: t.contamination_estimate,
            },
            max_iterations: t.max_iterations,
            patience: t.patience,
            seed,
            loss_kind: t.loss,
        }
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Architecture {
        Architecture::mlp(input_dim, self.model.hidden.clone(), num_classes)
            .with_activation(self.model.activation)
            .with_bias(self.model.bias)
    }

    /// `output_dir`, resolved against [`OUTPUT_ROOT_ENV`] when relative.
    pub fn output_root(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_root().join("data")
    }

    pub fn mode_dir(&self) -> PathBuf {
        self.output_root().join(self.train.mode.name())
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOBS: &str = r#"
schema_version = 1
output_dir = "out"

[source]
kind = "blobs"
num_classes = 3
samples_per_class = 20
input_dim = 4
separation = 3.0
seed = 1

[split]
fractions = [0.6, 0.2, 0.2]
seed = 0
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::parse(BLOBS).unwrap();
        assert_eq!(c.train.gamma, 0.4);
        assert_eq!(c.train.mode, Mode::Rrm);
        assert_eq!(c.contamination.mode, ContaminationMode::Ncar);
        assert_eq!(c.train_config(3).seed, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = BLOBS.replace("seed = 0", "seed = 0\nsed = 1");
        assert!(matches!(ExperimentConfig::parse(&typo), Err(CliError::Schema(_))));
        let typo = format!("{BLOBS}\n[train]\nlearning_rat = 0.1\n");
        let err = ExperimentConfig::parse(&typo).unwrap_err();
        assert!(err.to_string().contains("learning_rat"), "{err}");
    }

    #[test]
    fn schema_version_checked() {
        let bad = BLOBS.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(ExperimentConfig::parse(&bad), Err(CliError::Schema(_))));
    }

    #[test]
    fn split_must_leave_a_test_set() {
        let bad = BLOBS.replace("[0.6, 0.2, 0.2]", "[0.8, 0.2, 0.0]");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }

    #[test]
    fn train_section_validated_through_core() {
        let bad = format!("{BLOBS}\n[train]\nmode = \"rrm\"\nepsilon_train = 0.5\n");
        let err = ExperimentConfig::parse(&bad).unwrap_err();
        assert!(err.to_string().contains("arrm"), "{err}");
    }

    #[test]
    fn shipped_configs_parse() {
        for text in [
            include_str!("../../../configs/mnist3.toml"),
            include_str!("../../../configs/blobs.toml"),
            include_str!("../../../configs/mnist10-kernel.toml"),
        ] {
            let cfg = ExperimentConfig::parse(text).unwrap();
            cfg.train_config(0).validate().unwrap();
        }
    }
}
