use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};

/// Rows may miss 1 by at most this much before they are renormalized.
pub const KERNEL_ROW_TOL: f64 = 1e-3;

const MNIST_KERNEL: &str = include_str!("../../fixtures/mnist_kernel.txt");

/// `round(rate * n)`, halves rounded up.
pub fn contamination_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64) + 0.5).floor() as usize
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("rate must be in [0, 1], got {rate}")));
    }
    Ok(())
}

fn pick(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen = sample(rng, n, contamination_count(rate, n)).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Uniform label noise: `round(rate * N)` samples chosen without replacement,
/// each relabelled uniformly among the other `num_classes - 1` classes.
///
/// Returns the observed labels and the sorted contaminated set.
pub fn inject_ncar(
    labels: &[usize],
    rate: f64,
    num_classes: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_rate(rate)?;
    if num_classes < 2 && contamination_count(rate, labels.len()) > 0 {
        return Err(Error::invalid(format!(
            "cannot relabel with {num_classes} class(es)"
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::invalid(format!("label {y} out of range for {num_classes} classes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = pick(labels.len(), rate, &mut rng);
    let mut observed = labels.to_vec();
    for &i in &chosen {
        let r = rng.random_range(0..num_classes - 1);
        observed[i] = if r < labels[i] { r } else { r + 1 };
    }
    Ok((observed, chosen))
}

/// Row-stochastic matrix of corrupted-label probabilities with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationKernel {
    rows: Vec<Vec<f64>>,
}

impl ContaminationKernel {
    /// Validates and renormalizes rows.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::invalid(format!("kernel needs at least 2 classes, got {k}")));
        }
        let mut out = Vec::with_capacity(k);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::invalid(format!(
                    "kernel row {r} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if let Some(c) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!(
                    "kernel entry ({r}, {c}) = {} is not a probability",
                    row[c]
                )));
            }
            if row[r] != 0.0 {
                return Err(Error::invalid(format!("kernel diagonal entry {r} is not zero")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > KERNEL_ROW_TOL {
                return Err(Error::invalid(format!(
                    "kernel row {r} sums to {sum}, outside 1 +/- {KERNEL_ROW_TOL}"
                )));
            }
            out.push(row.iter().map(|v| v / sum).collect());
        }
        Ok(ContaminationKernel { rows: out })
    }

    /// Whitespace- or comma-separated rows; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>().map_err(|_| {
                        Error::invalid(format!("line {}: '{s}' is not a number", lineno + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            field: "kernel",
            message: e.to_string(),
        })
    }

    /// The 10-class MNIST confusion kernel shipped with the crate.
    pub fn mnist() -> Self {
        Self::parse(MNIST_KERNEL).expect("bundled kernel is valid")
    }

    pub fn num_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from]
    }
}

/// Like [`inject_ncar`], but the corrupted label is drawn from the kernel row of the true label.
pub fn inject_kernel(
    labels: &[usize],
    rate: f64,
    kernel: &ContaminationKernel,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    check_rate(rate)?;
    let k = kernel.num_classes();
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!("label {y} out of range for a {k}-class kernel")));
    }
    let dists: Vec<WeightedIndex<f64>> = kernel
        .rows
        .iter()
        .map(|r| WeightedIndex::new(r).expect("validated row"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = pick(labels.len(), rate, &mut rng);
    let mut observed = labels.to_vec();
    for &i in &chosen {
        observed[i] = dists[labels[i]].sample(&mut rng);
    }
    Ok((observed, chosen))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_rounding() {
        assert_eq!(contamination_count(0.2, 48_000), 9_600);
        assert_eq!(contamination_count(0.5, 3), 2);
        assert_eq!(contamination_count(0.0, 10), 0);
        assert_eq!(contamination_count(1.0, 10), 10);
        assert_eq!(contamination_count(0.6, 18_623), 11_174);
    }

    #[test]
    fn ncar_edges() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let (obs, c) = inject_ncar(&labels, 0.0, 3, 1).unwrap();
        assert_eq!(obs, labels);
        assert!(c.is_empty());
        let (obs, c) = inject_ncar(&labels, 1.0, 3, 1).unwrap();
        assert_eq!(c.len(), 100);
        assert!(obs.iter().zip(&labels).all(|(a, b)| a != b));
        assert!(inject_ncar(&labels, 1.5, 3, 1).is_err());
        assert!(inject_ncar(&[0, 0], 0.5, 1, 1).is_err());
        assert!(inject_ncar(&[0, 0], 0.0, 1, 1).is_ok());
    }

    #[test]
    fn ncar_is_seeded() {
        let labels: Vec<usize> = (0..500).map(|i| i % 4).collect();
        let a = inject_ncar(&labels, 0.3, 4, 9).unwrap();
        assert_eq!(a, inject_ncar(&labels, 0.3, 4, 9).unwrap());
        assert_ne!(a, inject_ncar(&labels, 0.3, 4, 10).unwrap());
        assert_eq!(a.1.len(), 150);
    }

    #[test]
    fn bundled_kernel_entries() {
        let k = ContaminationKernel::mnist();
        assert_eq!(k.num_classes(), 10);
        assert!((k.prob(3, 8) - 0.6250).abs() < 1e-12);
        assert!((k.prob(5, 3) - 0.6271).abs() < 1e-3);
        for r in 0..10 {
            assert_eq!(k.prob(r, r), 0.0);
            assert!((k.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_validation() {
        assert!(ContaminationKernel::parse("0 1\n1 0").is_ok());
        assert!(ContaminationKernel::parse("0, 1\n1, 0\n").is_ok());
        // row sum off by more than the tolerance
        assert!(ContaminationKernel::parse("0 0.9\n1 0").is_err());
        // nonzero diagonal
        assert!(ContaminationKernel::parse("0.5 0.5\n1 0").is_err());
        // not square
        assert!(ContaminationKernel::parse("0 1 0\n1 0 0").is_err());
        assert!(ContaminationKernel::parse("0 x\n1 0").is_err());
        assert!(ContaminationKernel::parse("").is_err());
    }

    #[test]
    fn kernel_never_keeps_true_label() {
        let k = ContaminationKernel::mnist();
        let labels: Vec<usize> = (0..2000).map(|i| i % 10).collect();
        let (obs, c) = inject_kernel(&labels, 1.0, &k, 4).unwrap();
        assert_eq!(c.len(), 2000);
        assert!(obs.iter().zip(&labels).all(|(a, b)| a != b));
        // zero-probability transitions never happen
        for (&o, &y) in obs.iter().zip(&labels) {
            assert!(k.prob(y, o) > 0.0);
        }
    }
}
