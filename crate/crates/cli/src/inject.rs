use std::fs;
use std::path::PathBuf;

use rrm_core::data::{
    inject_kernel, inject_ncar, load_idx_dataset, make_synthetic_blobs, save_cache,
    ContaminatedDataset, ContaminationKernel, Provenance,
};
use serde_json::json;

use crate::config::{ContaminationMode, ExperimentConfig, SourceConfig};
use crate::error::{io_err, CliError, CliResult};
use crate::output::{write_json, VERSION};

pub const TRAIN_CACHE: &str = "train.rrmdata";
pub const TEST_CACHE: &str = "test.rrmdata";
pub const INJECT_SUMMARY: &str = "inject.json";

pub struct InjectReport {
    pub train_path: PathBuf,
    pub test_path: Option<PathBuf>,
    pub samples: usize,
    pub contaminated: usize,
}

fn load_source(cfg: &ExperimentConfig) -> CliResult<(ContaminatedDataset, Option<ContaminatedDataset>)> {
    match &cfg.source {
        SourceConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            classes,
        } => {
            let subset = |d: ContaminatedDataset| -> CliResult<ContaminatedDataset> {
                match classes {
                    Some(keep) => Ok(d.subset_classes(keep)?),
                    None => Ok(d),
                }
            };
            let train = subset(load_idx_dataset(train_images, train_labels)?)?;
            let test = match (test_images, test_labels) {
                (Some(i), Some(l)) => Some(subset(load_idx_dataset(i, l)?)?),
                _ => None,
            };
            if let Some(t) = &test {
                if t.dim() != train.dim() || t.num_classes() != train.num_classes() {
                    return Err(CliError::schema(format!(
                        "test files have {} features / {} classes, train files {} / {}",
                        t.dim(),
                        t.num_classes(),
                        train.dim(),
                        train.num_classes()
                    )));
                }
            }
            Ok((train, test))
        }
        SourceConfig::Blobs {
            num_classes,
            samples_per_class,
            input_dim,
            separation,
            seed,
        } => Ok((
            make_synthetic_blobs(*num_classes, *samples_per_class, *input_dim, *separation, *seed)?,
            None,
        )),
    }
}

fn contaminate(cfg: &ExperimentConfig, d: ContaminatedDataset) -> CliResult<ContaminatedDataset> {
    let c = &cfg.contamination;
    let k = d.num_classes();
    let (observed, _) = match c.mode {
        ContaminationMode::Ncar => inject_ncar(d.clean_labels(), c.rate, k, c.seed)?,
        ContaminationMode::Kernel => {
            let kernel = match &c.kernel {
                Some(path) => ContaminationKernel::load(path)?,
                None => ContaminationKernel::mnist(),
            };
            if kernel.num_classes() != k {
                return Err(CliError::schema(format!(
                    "contamination kernel covers {} classes, dataset has {k}",
                    kernel.num_classes()
                )));
            }
            inject_kernel(d.clean_labels(), c.rate, &kernel, c.seed)?
        }
    };
    Ok(d.with_observed(
        observed,
        Provenance {
            seed: c.seed,
            rate: c.rate,
        },
    )?)
}

/// Loads the source, contaminates the training pool and writes the caches.
pub fn cmd_inject(cfg: &ExperimentConfig) -> CliResult<InjectReport> {
    let (pool, test) = load_source(cfg)?;
    let pool = contaminate(cfg, pool)?;
    let dir = cfg.data_dir();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let train_path = dir.join(TRAIN_CACHE);
    save_cache(&pool, &train_path)?;
    let test_path = match &test {
        Some(t) => {
            let p = dir.join(TEST_CACHE);
            save_cache(t, &p)?;
            Some(p)
        }
        None => None,
    };
    let contaminated = pool.contaminated_set().len();
    write_json(
        &dir.join(INJECT_SUMMARY),
        &json!({
            "version": VERSION,
            "config": cfg,
            "samples": pool.len(),
            "features": pool.dim(),
            "classes": pool.num_classes(),
            "class_counts": pool.class_counts(),
            "contaminated": contaminated,
            "rate": cfg.contamination.rate,
            "seed": cfg.contamination.seed,
            "test_samples": test.as_ref().map(|t| t.len()),
        }),
    )?;
    Ok(InjectReport {
        train_path,
        test_path,
        samples: pool.len(),
        contaminated,
    })
}
