use serde::{Deserialize, Serialize};

use crate::reweight::WeightShift;

pub const BUCKETS: usize = 6;

/// Bucket names, highest shift first. `N` is the training-set size.
pub const BUCKET_LABELS: [&str; BUCKETS] = [
    "gt_0",
    "approx_0",
    "0_to_-0.25/N",
    "-0.25/N_to_-0.5/N",
    "-0.5/N_to_-0.75/N",
    "-0.75/N_to_-1/N",
];

/// Half-width of the "about zero" bucket, as a fraction of `1/N`.
const ZERO_BAND: f64 = 0.01;

/// Bucket index for shift `u` on a training set of size `n`.
///
/// 0: `u > 0.01/N`; 1: `|u| <= 0.01/N`; 2: `-0.25/N < u < -0.01/N`;
/// 3: `(-0.5/N, -0.25/N]`; 4: `(-0.75/N, -0.5/N]`; 5: `u <= -0.75/N`.
pub fn bucket_of(u: f64, n: usize) -> usize {
    let scaled = u * n as f64;
    if scaled > ZERO_BAND {
        0
    } else if scaled >= -ZERO_BAND {
        1
    } else if scaled > -0.25 {
        2
    } else if scaled > -0.5 {
        3
    } else if scaled > -0.75 {
        4
    } else {
        5
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightHistogram {
    pub contaminated: [usize; BUCKETS],
    pub clean: [usize; BUCKETS],
}

impl WeightHistogram {
    pub fn contaminated_total(&self) -> usize {
        self.contaminated.iter().sum()
    }

    pub fn clean_total(&self) -> usize {
        self.clean.iter().sum()
    }

    /// Share of each population that sits in the bottom bucket, as
    /// `(contaminated, clean)`. Empty populations give 0.
    pub fn bottom_fractions(&self) -> (f64, f64) {
        let frac = |b: &[usize; BUCKETS]| {
            let total: usize = b.iter().sum();
            if total == 0 {
                0.0
            } else {
                b[BUCKETS - 1] as f64 / total as f64
            }
        };
        (frac(&self.contaminated), frac(&self.clean))
    }
}

/// Counts shifts per bucket, separately for contaminated and clean samples.
///
/// `contaminated` is a per-sample mask of the same length as `u`.
pub fn weight_histogram(u: &WeightShift, contaminated: &[bool]) -> WeightHistogram {
    assert_eq!(u.len(), contaminated.len(), "mask length must match shifts");
    let n = u.len();
    let mut h = WeightHistogram::default();
    for (&ui, &bad) in u.as_slice().iter().zip(contaminated) {
        let b = bucket_of(ui, n);
        if bad {
            h.contaminated[b] += 1;
        } else {
            h.clean[b] += 1;
        }
    }
    h
}
