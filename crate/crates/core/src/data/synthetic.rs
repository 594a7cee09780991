use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::ContaminatedDataset;
use crate::error::{Error, Result};

/// Isotropic unit-variance Gaussian clusters, one per class.
///
/// Class `k` is centred at `separation * e_k` when `input_dim >= num_classes`,
/// otherwise at `separation` times a random unit vector. Rows are grouped by
/// class.
pub fn make_synthetic_blobs(
    num_classes: usize,
    samples_per_class: usize,
    input_dim: usize,
    separation: f64,
    seed: u64,
) -> Result<ContaminatedDataset> {
    if num_classes == 0 || samples_per_class == 0 || input_dim == 0 {
        return Err(Error::invalid("blob counts must be positive"));
    }
    if !(separation > 0.0) {
        return Err(Error::invalid(format!("separation must be > 0, got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|k| {
            if input_dim >= num_classes {
                (0..input_dim)
                    .map(|j| if j == k { separation } else { 0.0 })
                    .collect()
            } else {
                let v: Vec<f64> = (0..input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| separation * x / norm).collect()
            }
        })
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit variance");
    let n = num_classes * samples_per_class;
    let mut features = Array2::<f32>::zeros((n, input_dim));
    let mut labels = Vec::with_capacity(n);
    for (row, mut out) in features.outer_iter_mut().enumerate() {
        let k = row / samples_per_class;
        for (v, m) in out.iter_mut().zip(&means[k]) {
            *v = (m + noise.sample(&mut rng)) as f32;
        }
        labels.push(k);
    }
    ContaminatedDataset::clean(features, labels, num_classes)
}
