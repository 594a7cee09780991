use std::io::Write;

use serde::{Deserialize, Serialize};

use super::histogram::{WeightHistogram, BUCKETS};
use crate::error::{Error, Result};

/// Metrics captured after one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// `gamma` used by the re-weight step; `None` when no re-weighting ran.
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub loss_min: f64,
    pub loss_mean: f64,
    pub loss_max: f64,
    /// Against the labels the model was trained on.
    pub train_accuracy: f64,
    /// Against the uncontaminated training labels.
    pub train_clean_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: f64,
    /// Total variation between the current weights and uniform.
    pub tv_distance: f64,
    /// Size of the pruned set in the fresh re-weight solution.
    pub pruned: usize,
    /// Share of pruned samples that are contaminated.
    pub pruned_precision: Option<f64>,
    /// Share of contaminated samples that were pruned.
    pub pruned_recall: Option<f64>,
    pub histogram: WeightHistogram,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations_run: usize,
    pub stopped_early: bool,
    /// Iteration with the highest validation accuracy (earliest on ties),
    /// or the last iteration without a validation set.
    pub peak_iteration: usize,
    pub validation_at_peak: Option<f64>,
    pub test_at_peak_validation: f64,
    pub max_test: f64,
    pub final_test: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
    pub summary: RunSummary,
}

/// Column names of [`RunRecord::write_csv`].
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "iteration",
        "gamma",
        "mu",
        "loss_min",
        "loss_mean",
        "loss_max",
        "train_accuracy",
        "train_clean_accuracy",
        "validation_accuracy",
        "test_accuracy",
        "tv_distance",
        "pruned",
        "pruned_precision",
        "pruned_recall",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..BUCKETS).map(|b| format!("contaminated_b{b}")));
    h.extend((0..BUCKETS).map(|b| format!("clean_b{b}")));
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serialize(e.to_string())
}

impl RunRecord {
    /// Recomputes the summary from the iteration rows.
    pub fn summarize(&mut self, stopped_early: bool) {
        let Some(last) = self.iterations.last() else {
            self.summary = RunSummary::default();
            return;
        };
        let mut peak = last;
        let mut best = f64::NEG_INFINITY;
        for r in &self.iterations {
            if let Some(v) = r.validation_accuracy {
                if v > best {
                    best = v;
                    peak = r;
                }
            }
        }
        self.summary = RunSummary {
            iterations_run: self.iterations.len(),
            stopped_early,
            peak_iteration: peak.iteration,
            validation_at_peak: peak.validation_accuracy,
            test_at_peak_validation: peak.test_accuracy,
            max_test: self
                .iterations
                .iter()
                .map(|r| r.test_accuracy)
                .fold(f64::NEG_INFINITY, f64::max),
            final_test: last.test_accuracy,
        };
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(csv_header()).map_err(csv_err)?;
        for r in &self.iterations {
            let mut row = vec![
                r.iteration.to_string(),
                opt(r.gamma),
                opt(r.mu),
                r.loss_min.to_string(),
                r.loss_mean.to_string(),
                r.loss_max.to_string(),
                r.train_accuracy.to_string(),
                r.train_clean_accuracy.to_string(),
                opt(r.validation_accuracy),
                r.test_accuracy.to_string(),
                r.tv_distance.to_string(),
                r.pruned.to_string(),
                opt(r.pruned_precision),
                opt(r.pruned_recall),
            ];
            row.extend(r.histogram.contaminated.iter().map(|c| c.to_string()));
            row.extend(r.histogram.clean.iter().map(|c| c.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Inverse of [`RunRecord::write_csv`]; the summary is recomputed with
    /// `stopped_early = false`.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        let expected = csv_header();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Serialize("record CSV header does not match".into()));
        }
        let mut iterations = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let bad = |col: usize| {
                Error::Serialize(format!("row {}: bad value in column {}", line + 1, expected[col]))
            };
            let f = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
            let o = |col: usize| -> Result<Option<f64>> {
                if rec[col].is_empty() {
                    Ok(None)
                } else {
                    f(col).map(Some)
                }
            };
            let u = |col: usize| rec[col].parse::<usize>().map_err(|_| bad(col));
            let mut histogram = WeightHistogram::default();
            for b in 0..BUCKETS {
                histogram.contaminated[b] = u(14 + b)?;
                histogram.clean[b] = u(14 + BUCKETS + b)?;
            }
            iterations.push(IterationRecord {
                iteration: u(0)?,
                gamma: o(1)?,
                mu: o(2)?,
                loss_min: f(3)?,
                loss_mean: f(4)?,
                loss_max: f(5)?,
                train_accuracy: f(6)?,
                train_clean_accuracy: f(7)?,
                validation_accuracy: o(8)?,
                test_accuracy: f(9)?,
                tv_distance: f(10)?,
                pruned: u(11)?,
                pruned_precision: o(12)?,
                pruned_recall: o(13)?,
                histogram,
            });
        }
        let mut record = RunRecord {
            iterations,
            summary: RunSummary::default(),
        };
        record.summarize(false);
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iteration: usize, val: Option<f64>, test: f64) -> IterationRecord {
        IterationRecord {
            iteration,
            gamma: Some(0.4),
            mu: None,
            loss_min: 0.0,
            loss_mean: 0.5,
            loss_max: 3.25,
            train_accuracy: 0.9,
            train_clean_accuracy: 0.8,
            validation_accuracy: val,
            test_accuracy: test,
            tv_distance: 0.125,
            pruned: 3,
            pruned_precision: Some(2.0 / 3.0),
            pruned_recall: None,
            histogram: WeightHistogram {
                contaminated: [0, 1, 0, 0, 0, 2],
                clean: [4, 3, 0, 0, 0, 0],
            },
        }
    }

    #[test]
    fn peak_uses_validation_not_test() {
        let mut r = RunRecord {
            iterations: vec![
                row(1, Some(0.5), 0.6),
                row(2, Some(0.9), 0.7),
                row(3, Some(0.9), 0.95),
                row(4, Some(0.8), 0.5),
            ],
            summary: RunSummary::default(),
        };
        r.summarize(true);
        assert_eq!(r.summary.peak_iteration, 2);
        assert_eq!(r.summary.test_at_peak_validation, 0.7);
        assert_eq!(r.summary.max_test, 0.95);
        assert_eq!(r.summary.final_test, 0.5);
        assert!(r.summary.stopped_early);
    }

    #[test]
    fn without_validation_peak_is_last() {
        let mut r = RunRecord {
            iterations: vec![row(1, None, 0.6), row(2, None, 0.4)],
            summary: RunSummary::default(),
        };
        r.summarize(false);
        assert_eq!(r.summary.peak_iteration, 2);
        assert_eq!(r.summary.test_at_peak_validation, 0.4);
        assert_eq!(r.summary.max_test, 0.6);
    }

    #[test]
    fn csv_round_trip() {
        let mut r = RunRecord {
            iterations: vec![row(1, Some(0.5), 0.6), row(2, None, 0.7)],
            summary: RunSummary::default(),
        };
        r.summarize(false);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,gamma,mu,"));
        assert_eq!(RunRecord::read_csv(buf.as_slice()).unwrap(), r);
    }
}
