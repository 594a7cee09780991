use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rrm_core::model::LossKind;
use rrm_core::trainer::{Mode, RunRecord, BUCKETS, BUCKET_LABELS};

use crate::error::{io_err, CliError, CliResult};
use crate::output::{read_json, AGGREGATE, RECORD, SUMMARY};
use crate::train::{seed_dir, Aggregate, RunStatus, SeedSummary};

pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const ATTACK_CSV: &str = "attack.csv";
pub const WEIGHTS_CSV: &str = "weights.csv";
pub const TABLES_TXT: &str = "tables.txt";

/// One run directory: a mode directory with an aggregate, or a single seed.
#[derive(Debug, Clone)]
pub struct RunEntry {
    pub label: String,
    pub mode: Mode,
    pub loss: LossKind,
    pub rate: f64,
    pub seeds: usize,
    pub test: Option<(f64, f64)>,
    pub max_test: Option<(f64, f64)>,
    pub attack: Vec<(f64, f64, f64)>,
    pub records: Vec<(u64, RunRecord)>,
}

fn read_record(path: &Path) -> CliResult<RunRecord> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(RunRecord::read_csv(file)?)
}

fn label_of(dir: &Path) -> String {
    let parts: Vec<String> = dir
        .components()
        .rev()
        .take(2)
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    parts.into_iter().rev().collect::<Vec<_>>().join("/")
}

pub fn load_entry(dir: &Path) -> CliResult<RunEntry> {
    let aggregate = dir.join(AGGREGATE);
    let summary = dir.join(SUMMARY);
    if aggregate.is_file() {
        let agg: Aggregate = read_json(&aggregate)?;
        let mut missing = Vec::new();
        let mut records = Vec::new();
        for &seed in &agg.seeds {
            let p = seed_dir(dir, seed).join(RECORD);
            if p.is_file() {
                records.push((seed, read_record(&p)?));
            } else {
                missing.push(p);
            }
        }
        if !missing.is_empty() {
            return Err(CliError::Missing(missing));
        }
        let pair = |s: Option<crate::train::Stat>| s.map(|s| (s.mean, s.std));
        Ok(RunEntry {
            label: label_of(dir),
            mode: agg.mode,
            loss: agg.loss,
            rate: agg.contamination_rate,
            seeds: agg.seeds.len(),
            test: pair(agg.test_at_peak_validation),
            max_test: pair(agg.max_test),
            attack: agg
                .attack
                .iter()
                .map(|a| (a.epsilon, a.accuracy.mean, a.accuracy.std))
                .collect(),
            records,
        })
    } else if summary.is_file() {
        let s: SeedSummary = read_json(&summary)?;
        let record_path = dir.join(RECORD);
        if !record_path.is_file() {
            return Err(CliError::Missing(vec![record_path]));
        }
        let ok = s.status == RunStatus::Ok;
        let one = |v: f64| ok.then_some((v, 0.0));
        Ok(RunEntry {
            label: label_of(dir),
            mode: s.mode,
            loss: s.loss,
            rate: s.contamination_rate,
            seeds: usize::from(ok),
            test: one(s.result.test_at_peak_validation),
            max_test: one(s.result.max_test),
            attack: s.attack.iter().map(|a| (a.epsilon, a.accuracy, 0.0)).collect(),
            records: vec![(s.seed, read_record(&record_path)?)],
        })
    } else {
        Err(CliError::Missing(vec![aggregate, summary]))
    }
}

fn pct(v: Option<(f64, f64)>) -> String {
    v.map(|(m, _)| format!("{:.1}", 100.0 * m)).unwrap_or_else(|| "-".into())
}

fn rate_key(rate: f64) -> u64 {
    (rate * 1e6).round() as u64
}

/// Baseline-versus-reweighted table: one row per loss, one column per
/// contamination rate, cells `ERM (RRM)` in percent.
pub fn accuracy_table(entries: &[RunEntry]) -> String {
    let rates: BTreeSet<u64> = entries.iter().map(|e| rate_key(e.rate)).collect();
    let losses: BTreeSet<&str> = entries.iter().map(|e| e.loss.name()).collect();
    let find = |loss: &str, rate: u64, reweighted: bool| {
        entries
            .iter()
            .find(|e| e.loss.name() == loss && rate_key(e.rate) == rate && e.mode.reweights() == reweighted)
            .and_then(|e| e.test)
    };
    let mut out = String::from("test accuracy at peak validation (%), ERM (RRM)\n");
    let _ = write!(out, "{:<6}", "loss");
    for r in &rates {
        let _ = write!(out, " {:>14}", format!("{}%", *r as f64 / 1e4));
    }
    out.push('\n');
    for loss in &losses {
        let _ = write!(out, "{loss:<6}");
        for &r in &rates {
            let cell = format!("{} ({})", pct(find(loss, r, false)), pct(find(loss, r, true)));
            let _ = write!(out, " {cell:>14}");
        }
        out.push('\n');
    }
    out
}

/// FGSM sweep: one row per test radius, one column per run.
pub fn attack_table(entries: &[RunEntry]) -> Option<String> {
    let eps: BTreeSet<u64> = entries
        .iter()
        .flat_map(|e| e.attack.iter().map(|a| rate_key(a.0)))
        .collect();
    if eps.is_empty() {
        return None;
    }
    let mut out = String::from("test accuracy under FGSM (%)\n");
    let _ = write!(out, "{:<10}", "eps_test");
    for e in entries {
        let _ = write!(out, " {:>16}", e.label);
    }
    out.push('\n');
    for &k in &eps {
        let _ = write!(out, "{:<10.2}", k as f64 / 1e6);
        for e in entries {
            let cell = e
                .attack
                .iter()
                .find(|a| rate_key(a.0) == k)
                .map(|a| format!("{:.1}", 100.0 * a.1))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell:>16}");
        }
        out.push('\n');
    }
    Some(out)
}

fn opt_csv(v: Option<(f64, f64)>) -> [String; 2] {
    match v {
        Some((m, s)) => [m.to_string(), s.to_string()],
        None => [String::new(), String::new()],
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub struct ReportOutput {
    pub text: String,
    pub files: Vec<PathBuf>,
}

pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> CliResult<ReportOutput> {
    if run_dirs.is_empty() {
        return Err(CliError::schema("report needs at least one run directory"));
    }
    let mut entries = Vec::new();
    let mut missing = Vec::new();
    for d in run_dirs {
        match load_entry(d) {
            Ok(e) => entries.push(e),
            Err(CliError::Missing(m)) => missing.extend(m),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let mut text = accuracy_table(&entries);
    if let Some(t) = attack_table(&entries) {
        text.push('\n');
        text.push_str(&t);
    }

    let accuracy_rows = entries
        .iter()
        .map(|e| {
            let [tm, ts] = opt_csv(e.test);
            let [mm, ms] = opt_csv(e.max_test);
            vec![
                e.label.clone(),
                e.mode.name().into(),
                e.loss.name().into(),
                e.rate.to_string(),
                e.seeds.to_string(),
                tm,
                ts,
                mm,
                ms,
            ]
        })
        .collect();
    let attack_rows = entries
        .iter()
        .flat_map(|e| {
            e.attack.iter().map(move |a| {
                vec![e.label.clone(), e.mode.name().into(), a.0.to_string(), a.1.to_string(), a.2.to_string()]
            })
        })
        .collect();
    let mut weight_rows = Vec::new();
    for e in &entries {
        for (seed, record) in &e.records {
            for it in &record.iterations {
                for (population, counts) in [("contaminated", &it.histogram.contaminated), ("clean", &it.histogram.clean)] {
                    for b in 0..BUCKETS {
                        weight_rows.push(vec![
                            e.label.clone(),
                            seed.to_string(),
                            it.iteration.to_string(),
                            population.to_string(),
                            BUCKET_LABELS[b].to_string(),
                            counts[b].to_string(),
                        ]);
                    }
                }
            }
        }
    }
    let files = vec![
        out_dir.join(ACCURACY_CSV),
        out_dir.join(ATTACK_CSV),
        out_dir.join(WEIGHTS_CSV),
        out_dir.join(TABLES_TXT),
    ];
    write_csv(
        &files[0],
        &["run", "mode", "loss", "rate", "seeds", "test_mean", "test_std", "max_test_mean", "max_test_std"],
        accuracy_rows,
    )?;
    write_csv(&files[1], &["run", "mode", "epsilon", "accuracy_mean", "accuracy_std"], attack_rows)?;
    write_csv(
        &files[2],
        &["run", "seed", "iteration", "population", "bucket", "count"],
        weight_rows,
    )?;
    fs::write(&files[3], &text).map_err(|e| io_err(&files[3], e))?;
    Ok(ReportOutput { text, files })
}
