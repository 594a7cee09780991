use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rrm_core::data::{load_cache, split, ContaminatedDataset};
use rrm_core::model::{save_checkpoint, LossKind, ModelState, Scalar};
use rrm_core::trainer::{attack_accuracy, run, EvalSets, Mode, RunRecord, RunSummary};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Precision};
use crate::error::{io_err, CliError, CliResult};
use crate::inject::{TEST_CACHE, TRAIN_CACHE};
use crate::output::{mean_std, write_json, AGGREGATE, CHECKPOINT, RECORD, SUMMARY, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackPoint {
    pub epsilon: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub contaminated: usize,
}

/// Contents of a per-seed `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub version: String,
    pub mode: Mode,
    pub loss: LossKind,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub contamination_rate: f64,
    pub contamination_seed: u64,
    pub data: DataCounts,
    pub result: RunSummary,
    pub attack: Vec<AttackPoint>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Stat> {
        mean_std(values).map(|(mean, std)| Stat { mean, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackStat {
    pub epsilon: f64,
    pub accuracy: Stat,
}

/// Contents of `aggregate.json`: statistics over the successful seeds,
/// with population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub version: String,
    pub mode: Mode,
    pub loss: LossKind,
    pub contamination_rate: f64,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub test_at_peak_validation: Option<Stat>,
    pub max_test: Option<Stat>,
    pub attack: Vec<AttackStat>,
    pub config: ExperimentConfig,
}

pub struct TrainData {
    pub train: ContaminatedDataset,
    pub validation: Option<ContaminatedDataset>,
    pub test: ContaminatedDataset,
}

pub fn load_train_data(cfg: &ExperimentConfig) -> CliResult<TrainData> {
    let dir = cfg.data_dir();
    let train_path = dir.join(TRAIN_CACHE);
    let test_path = dir.join(TEST_CACHE);
    let mut missing = Vec::new();
    if !train_path.is_file() {
        missing.push(train_path.clone());
    }
    if cfg.has_separate_test() && !test_path.is_file() {
        missing.push(test_path.clone());
    }
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }
    let pool = load_cache(&train_path)?;
    let parts = split(&pool, cfg.split.fractions, cfg.split.seed)?;
    let test = if cfg.has_separate_test() {
        load_cache(&test_path)?
    } else {
        parts.test
    };
    let validation = (!parts.validation.is_empty()).then_some(parts.validation);
    Ok(TrainData {
        train: parts.train,
        validation,
        test,
    })
}

pub fn seed_dir(mode_dir: &Path, seed: u64) -> PathBuf {
    mode_dir.join(format!("seed-{seed}"))
}

fn train_seed<S: Scalar>(cfg: &ExperimentConfig, data: &TrainData, seed: u64, dir: &Path) -> CliResult<SeedSummary> {
    let config = cfg.train_config(seed);
    let arch = cfg.architecture(data.train.dim(), data.train.num_classes());
    let model = ModelState::<S>::init(arch, seed)?;
    let sets = EvalSets {
        train: &data.train,
        validation: data.validation.as_ref(),
        test: &data.test,
    };
    let counts = DataCounts {
        train: data.train.len(),
        validation: data.validation.as_ref().map_or(0, |v| v.len()),
        test: data.test.len(),
        contaminated: data.train.contaminated_set().len(),
    };
    let mut summary = SeedSummary {
        version: VERSION.to_string(),
        mode: config.mode,
        loss: config.loss_kind,
        seed,
        status: RunStatus::Ok,
        error: None,
        contamination_rate: cfg.contamination.rate,
        contamination_seed: cfg.contamination.seed,
        data: counts,
        result: RunSummary::default(),
        attack: Vec::new(),
        config: cfg.clone(),
    };
    let (record, outcome): (RunRecord, CliResult<()>) = match run(model, sets, &config) {
        Ok(out) => {
            save_checkpoint(&out.model, &dir.join(CHECKPOINT))?;
            let x = data.test.features().mapv(|v| S::lit(f64::from(v)));
            let mut attack = Vec::new();
            for &eps in &cfg.evaluation.epsilon_test {
                let accuracy =
                    attack_accuracy(&out.model, x.view(), data.test.clean_labels(), eps, config.loss_kind)?;
                attack.push(AttackPoint { epsilon: eps, accuracy });
            }
            summary.attack = attack;
            (out.record, Ok(()))
        }
        Err(failure) => {
            summary.status = RunStatus::Failed;
            summary.error = Some(failure.error.to_string());
            (failure.record, Err(CliError::Core(failure.error)))
        }
    };
    let record_path = dir.join(RECORD);
    let file = fs::File::create(&record_path).map_err(|e| io_err(&record_path, e))?;
    record.write_csv(std::io::BufWriter::new(file))?;
    summary.result = record.summary.clone();
    write_json(&dir.join(SUMMARY), &summary)?;
    outcome.map(|_| summary)
}

pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub result: CliResult<SeedSummary>,
}

pub struct TrainReport {
    pub outcomes: Vec<SeedOutcome>,
    pub aggregate: Aggregate,
    pub aggregate_path: PathBuf,
}

impl TrainReport {
    pub fn first_error(&self) -> Option<&CliError> {
        self.outcomes.iter().find_map(|o| o.result.as_ref().err())
    }
}

/// Trains one model per seed and writes per-seed artifacts plus an aggregate.
/// A failing seed does not stop the others.
pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<TrainReport> {
    let data = load_train_data(cfg)?;
    let mode_dir = cfg.mode_dir();
    for &seed in &cfg.train.seeds {
        let dir = seed_dir(&mode_dir, seed);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.train.workers)
        .build()
        .map_err(|e| CliError::Other(format!("worker pool: {e}")))?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| {
        cfg.train
            .seeds
            .par_iter()
            .map(|&seed| {
                let dir = seed_dir(&mode_dir, seed);
                let result = match cfg.model.precision {
                    Precision::F32 => train_seed::<f32>(cfg, &data, seed, &dir),
                    Precision::F64 => train_seed::<f64>(cfg, &data, seed, &dir),
                };
                SeedOutcome { seed, dir, result }
            })
            .collect()
    });
    let ok: Vec<&SeedSummary> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let peak: Vec<f64> = ok.iter().map(|s| s.result.test_at_peak_validation).collect();
    let max: Vec<f64> = ok.iter().map(|s| s.result.max_test).collect();
    let attack = cfg
        .evaluation
        .epsilon_test
        .iter()
        .enumerate()
        .filter_map(|(k, &epsilon)| {
            let v: Vec<f64> = ok.iter().map(|s| s.attack[k].accuracy).collect();
            Stat::of(&v).map(|accuracy| AttackStat { epsilon, accuracy })
        })
        .collect();
    let aggregate = Aggregate {
        version: VERSION.to_string(),
        mode: cfg.train.mode,
        loss: cfg.train.loss,
        contamination_rate: cfg.contamination.rate,
        seeds: ok.iter().map(|s| s.seed).collect(),
        failed_seeds: outcomes
            .iter()
            .filter(|o| o.result.is_err())
            .map(|o| o.seed)
            .collect(),
        test_at_peak_validation: Stat::of(&peak),
        max_test: Stat::of(&max),
        attack,
        config: cfg.clone(),
    };
    let aggregate_path = mode_dir.join(AGGREGATE);
    write_json(&aggregate_path, &aggregate)?;
    Ok(TrainReport {
        outcomes,
        aggregate,
        aggregate_path,
    })
}
