//! Randomized verification suites shared by the acceptance tests and `rrm verify`.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::gradcheck::{check_case, random_small_case, FD_STEP};
use super::lp::{oracle_lp, oracle_lp_relaxed};
use crate::error::Result;
use crate::model::{fgsm_batch, LossKind};
use crate::reweight::{
    auto_tune_gamma, check_kkt, partition_losses, reweight_objective, solve_reweight, tv_distance,
    WeightShift,
};

/// Closed-form solver under test; swapped out for mutants in tests.
pub type Solver = fn(&[f64], f64) -> Result<WeightShift>;

pub const OBJECTIVE_TOL: f64 = 1e-9;
pub const KKT_TOL: f64 = 1e-9;
pub const GRADIENT_TOL: f64 = 1e-4;
pub const GAMMAS: [f64; 3] = [0.1, 1.0, 10.0];
pub const ESTIMATES: [f64; 3] = [0.1, 0.25, 0.5];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub total: usize,
    pub failed: usize,
    /// First failing instance, serialized for replay.
    pub first_failure: Option<serde_json::Value>,
    pub elapsed_secs: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failed == 0 && self.total > 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }
}

struct Tally {
    name: &'static str,
    total: usize,
    failed: usize,
    first_failure: Option<serde_json::Value>,
    start: Instant,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            total: 0,
            failed: 0,
            first_failure: None,
            start: Instant::now(),
        }
    }

    fn record(&mut self, ok: bool, instance: impl FnOnce() -> serde_json::Value) {
        self.total += 1;
        if !ok {
            self.failed += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(instance());
            }
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            name: self.name.to_string(),
            total: self.total,
            failed: self.failed,
            first_failure: self.first_failure,
            elapsed_secs: self.start.elapsed().as_secs_f64(),
        }
    }
}

/// One random inner problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightInstance {
    pub losses: Vec<f64>,
    pub gamma: f64,
}

/// `N` uniform in `2..=6`, distinct losses uniform on `[0, 5)`, `gamma` cycling through [`GAMMAS`].
pub fn random_instances(seed: u64, count: usize) -> Vec<ReweightInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let n = rng.random_range(2..=6);
            let mut seen = BTreeSet::new();
            let mut losses = Vec::with_capacity(n);
            while losses.len() < n {
                let v: f64 = rng.random_range(0.0..5.0);
                if seen.insert(v.to_bits()) {
                    losses.push(v);
                }
            }
            ReweightInstance {
                losses,
                gamma: GAMMAS[k % GAMMAS.len()],
            }
        })
        .collect()
}

/// Closed-form objective equals the LP optimum and passes the KKT certificate.
pub fn oracle_equivalence(instances: &[ReweightInstance], solver: Solver) -> SuiteReport {
    let mut t = Tally::new("oracle-equivalence");
    for inst in instances {
        let outcome = (|| -> Result<(f64, f64, bool)> {
            let u = solver(&inst.losses, inst.gamma)?;
            let closed = reweight_objective(&inst.losses, &u, inst.gamma)?;
            let (_, lp) = oracle_lp(&inst.losses, inst.gamma)?;
            let kkt = check_kkt(&inst.losses, &u, inst.gamma, KKT_TOL)?;
            Ok((closed, lp, kkt))
        })();
        let ok = matches!(outcome, Ok((c, l, k)) if (c - l).abs() <= OBJECTIVE_TOL && k);
        t.record(ok, || json!({ "instance": inst, "outcome": format!("{outcome:?}") }));
    }
    t.finish()
}

/// Total variation equals `|chi| / N`; pruned entries are `-1/N` and middle entries `0`, bit for bit.
pub fn closed_form_identities(instances: &[ReweightInstance], solver: Solver) -> SuiteReport {
    let mut t = Tally::new("closed-form-identities");
    for inst in instances {
        let ok = (|| -> Result<bool> {
            let u = solver(&inst.losses, inst.gamma)?;
            let part = partition_losses(&inst.losses, inst.gamma)?;
            let n = inst.losses.len() as f64;
            let tv_ok = (tv_distance(&u) - part.chi.len() as f64 / n).abs() <= 1e-12;
            let pruned_ok = part.chi.iter().all(|&i| u.as_slice()[i] == -1.0 / n);
            let mid_ok = part.i_mid.iter().all(|&i| u.as_slice()[i] == 0.0);
            Ok(tv_ok && pruned_ok && mid_ok && u.is_feasible(1e-12))
        })()
        .unwrap_or(false);
        t.record(ok, || json!({ "instance": inst }));
    }
    t.finish()
}

/// Dropping the sum-to-zero constraint can only lower the optimum.
pub fn relaxation_ordering(instances: &[ReweightInstance]) -> SuiteReport {
    let mut t = Tally::new("relaxation-ordering");
    for inst in instances {
        let values = (|| -> Result<(f64, f64)> {
            let (_, constrained) = oracle_lp(&inst.losses, inst.gamma)?;
            let relaxed = oracle_lp_relaxed(&inst.losses, 0.5 * inst.gamma)?;
            Ok((relaxed, constrained))
        })();
        let ok = matches!(values, Ok((r, c)) if r <= c + 1e-12);
        t.record(ok, || json!({ "instance": inst, "values": format!("{values:?}") }));
    }
    t.finish()
}

/// Analytic parameter and input gradients against central differences, every loss kind.
pub fn gradient_suite(seed: u64, models: usize) -> SuiteReport {
    let mut t = Tally::new("gradient-finite-difference");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in 0..models {
        let case = match random_small_case(&mut rng) {
            Ok(c) => c,
            Err(e) => {
                t.record(false, || json!({ "model": m, "error": e.to_string() }));
                continue;
            }
        };
        for kind in LossKind::ALL {
            let r = check_case(&case, kind, FD_STEP);
            let ok = matches!(&r, Ok(g) if g.param_rel_err <= GRADIENT_TOL && g.input_rel_err <= GRADIENT_TOL);
            t.record(ok, || {
                json!({
                    "model": m,
                    "loss": kind,
                    "arch": case.model.arch(),
                    "theta": case.model.theta(),
                    "x": case.x.as_slice(),
                    "labels": case.labels,
                    "weights": case.weights,
                    "result": format!("{r:?}"),
                })
            });
        }
    }
    t.finish()
}

/// Every perturbed coordinate is exactly `x - eps`, `x` or `x + eps`; `eps = 0` is the identity.
pub fn fgsm_suite(seed: u64, inputs: usize) -> SuiteReport {
    let mut t = Tally::new("fgsm-contract");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut case = random_small_case(&mut rng).expect("random model");
    for k in 0..inputs {
        if k % 50 == 0 {
            case = random_small_case(&mut rng).expect("random model");
        }
        let dim = case.model.arch().input_dim;
        let classes = case.model.arch().num_classes;
        let x = Array2::from_shape_fn((1, dim), |_| rng.random_range(0.0..1.0));
        let y = rng.random_range(0..classes);
        let eps = if k % 10 == 0 { 0.0 } else { rng.random_range(0.0..=1.0) };
        let kind = LossKind::ALL[k % 3];
        let adv = fgsm_batch(&case.model, x.view(), &[y], eps, kind);
        let ok = match &adv {
            Ok(a) => x.iter().zip(a.iter()).all(|(&xi, &ai)| {
                if eps == 0.0 {
                    ai == xi
                } else {
                    ai == xi + eps || ai == xi - eps || ai == xi
                }
            }),
            Err(_) => false,
        };
        t.record(ok, || json!({ "x": x.as_slice(), "y": y, "epsilon": eps, "loss": kind }));
    }
    t.finish()
}

/// With automatically chosen `gamma`, at least the estimated fraction is pruned.
pub fn autotune_suite(seed: u64, trials: usize) -> SuiteReport {
    let mut t = Tally::new("auto-tune-pruning");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..trials {
        let n = rng.random_range(10..=200);
        let mut seen = BTreeSet::new();
        let mut losses = Vec::with_capacity(n);
        while losses.len() < n {
            let v: f64 = rng.random_range(0.0..5.0);
            if seen.insert(v.to_bits()) {
                losses.push(v);
            }
        }
        let estimate = ESTIMATES[k % ESTIMATES.len()];
        let fraction = auto_tune_gamma(&losses, estimate)
            .and_then(|g| partition_losses(&losses, g))
            .map(|p| p.pruned_fraction());
        let ok = matches!(fraction, Ok(f) if f >= estimate);
        t.record(ok, || json!({ "losses": losses, "estimate": estimate, "fraction": format!("{fraction:?}") }));
    }
    t.finish()
}

/// Sizes used by `rrm verify` and the acceptance gate.
#[derive(Debug, Clone, Copy)]
pub struct SuiteSizes {
    pub reweight_instances: usize,
    pub gradient_models: usize,
    pub fgsm_inputs: usize,
    pub autotune_trials: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        SuiteSizes {
            reweight_instances: 1000,
            gradient_models: 100,
            fgsm_inputs: 1000,
            autotune_trials: 100,
        }
    }
}

pub fn run_all(seed: u64, sizes: SuiteSizes) -> VerifyReport {
    let instances = random_instances(seed, sizes.reweight_instances);
    VerifyReport {
        seed,
        suites: vec![
            oracle_equivalence(&instances, solve_reweight),
            closed_form_identities(&instances, solve_reweight),
            relaxation_ordering(&instances),
            gradient_suite(seed.wrapping_add(1), sizes.gradient_models),
            fgsm_suite(seed.wrapping_add(2), sizes.fgsm_inputs),
            autotune_suite(seed.wrapping_add(3), sizes.autotune_trials),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reweight::partition_losses;

    /// Prunes one sample too few: the highest-loss member of chi keeps its weight.
    fn off_by_one(c: &[f64], gamma: f64) -> Result<WeightShift> {
        let part = partition_losses(c, gamma)?;
        let n = c.len() as f64;
        let mut u = vec![0.0; c.len()];
        let keep = part.chi.len().saturating_sub(1);
        let mut chi = part.chi.clone();
        chi.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
        for &i in &chi[..keep] {
            u[i] = -1.0 / n;
        }
        for &i in &part.i_min {
            u[i] = keep as f64 / (n * part.i_min.len() as f64);
        }
        Ok(WeightShift::new(u).unwrap())
    }

    #[test]
    fn mutant_solver_is_caught() {
        let instances = random_instances(3, 200);
        let report = oracle_equivalence(&instances, off_by_one);
        assert!(!report.passed());
        assert!(report.first_failure.is_some());
        assert!(oracle_equivalence(&instances, solve_reweight).passed());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let sizes = SuiteSizes {
            reweight_instances: 50,
            gradient_models: 3,
            fgsm_inputs: 20,
            autotune_trials: 9,
        };
        let a = run_all(7, sizes);
        let b = run_all(7, sizes);
        let strip = |r: &VerifyReport| {
            r.suites
                .iter()
                .map(|s| (s.name.clone(), s.total, s.failed))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.passed());
    }

    #[test]
    fn instances_have_distinct_losses() {
        for inst in random_instances(1, 100) {
            let set: BTreeSet<u64> = inst.losses.iter().map(|v| v.to_bits()).collect();
            assert_eq!(set.len(), inst.losses.len());
            assert!((2..=6).contains(&inst.losses.len()));
        }
    }
}
