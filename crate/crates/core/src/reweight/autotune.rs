use super::check_losses;
use crate::error::{Error, Result};

/// Smallest `gamma` returned when the quantile collapses onto `c_min`.
pub fn gamma_floor(c_min: f64) -> f64 {
    1e-9 * c_min.abs().max(1.0)
}

/// Picks `gamma` so that at least a `contamination` fraction of samples is pruned.
///
/// `gamma = l - c_min`, where `l` is the largest loss value with at least
/// `contamination * N` samples strictly above it. Candidate levels are the
/// distinct loss values scanned from the top, so ties at a level are never
/// split. If no level qualifies, or the qualifying level is `c_min` itself,
/// [`gamma_floor`] is returned.
pub fn auto_tune_gamma(c: &[f64], contamination: f64) -> Result<f64> {
    check_losses(c)?;
    if !(0.0..=1.0).contains(&contamination) {
        return Err(Error::invalid(format!(
            "contamination estimate must be in [0, 1], got {contamination}"
        )));
    }
    let n = c.len();
    let mut sorted = c.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let c_min = sorted[n - 1];

    // `sorted` is descending; the count strictly above sorted[k] is the index
    // of the first occurrence of that value.
    let mut level = None;
    let mut k = 0;
    while k < n {
        let v = sorted[k];
        if k as f64 / n as f64 >= contamination {
            level = Some(v);
            break;
        }
        while k < n && sorted[k] == v {
            k += 1;
        }
    }
    let gamma = match level {
        Some(l) => l - c_min,
        None => 0.0,
    };
    if gamma > 0.0 {
        Ok(gamma)
    } else {
        Ok(gamma_floor(c_min))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reweight::partition_losses;
    use proptest::prelude::*;

    #[test]
    fn quarter_of_eight() {
        let c: Vec<f64> = (1..=8).map(f64::from).collect();
        let gamma = auto_tune_gamma(&c, 0.25).unwrap();
        assert_eq!(gamma, 5.0);
        let part = partition_losses(&c, gamma).unwrap();
        assert_eq!(part.chi, vec![6, 7]);
        assert_eq!(part.pruned_fraction(), 0.25);
    }

    #[test]
    fn zero_estimate_spans_range() {
        let c = [3.0, 0.5, 2.0, 7.5];
        assert_eq!(auto_tune_gamma(&c, 0.0).unwrap(), 7.0);
        let part = partition_losses(&c, 7.0).unwrap();
        assert!(part.chi.is_empty());
    }

    #[test]
    fn degenerate_constant_losses() {
        let c = [5.0; 4];
        let gamma = auto_tune_gamma(&c, 0.5).unwrap();
        assert_eq!(gamma, gamma_floor(5.0));
        assert!(gamma > 0.0);
        let part = partition_losses(&c, gamma).unwrap();
        assert_eq!(part.pruned_fraction(), 0.0);
    }

    #[test]
    fn full_estimate_is_degenerate() {
        let c = [1.0, 2.0, 3.0];
        assert_eq!(auto_tune_gamma(&c, 1.0).unwrap(), gamma_floor(1.0));
    }

    #[test]
    fn ties_at_level_are_kept_together() {
        // 2 of 6 strictly above 4; next level down (4) has 2 above it too.
        let c = [1.0, 2.0, 4.0, 4.0, 8.0, 9.0];
        let gamma = auto_tune_gamma(&c, 0.3).unwrap();
        assert_eq!(gamma, 3.0);
        let part = partition_losses(&c, gamma).unwrap();
        assert_eq!(part.chi, vec![4, 5]);
    }

    #[test]
    fn rejects_out_of_range_estimate() {
        assert!(auto_tune_gamma(&[1.0, 2.0], -0.1).is_err());
        assert!(auto_tune_gamma(&[1.0, 2.0], 1.1).is_err());
        assert!(auto_tune_gamma(&[], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn prunes_at_least_estimate(
            c in prop::collection::hash_set(0u32..1_000_000, 2..200),
            estimate in 0.0f64..0.95,
        ) {
            let c: Vec<f64> = c.into_iter().map(|v| f64::from(v) * 1e-4).collect();
            let gamma = auto_tune_gamma(&c, estimate).unwrap();
            let c_min = c.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assume!(gamma > gamma_floor(c_min));
            let part = partition_losses(&c, gamma).unwrap();
            prop_assert!(part.pruned_fraction() >= estimate);
        }
    }
}
