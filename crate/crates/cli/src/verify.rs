use std::path::Path;

use rrm_core::verify::{run_all, SuiteSizes, VerifyReport};

use crate::error::{CliError, CliResult};
use crate::output::write_json;

pub const DEFAULT_SEED: u64 = 20240;

/// Runs every randomized verification suite. Returns the report, or a
/// verification error carrying the first failing instance.
pub fn cmd_verify(seed: u64, sizes: SuiteSizes, report_path: Option<&Path>) -> CliResult<VerifyReport> {
    let report = run_all(seed, sizes);
    if let Some(p) = report_path {
        write_json(p, &report)?;
    }
    for s in &report.suites {
        println!(
            "{:<28} {:>5}/{:<5} passed  {:.2}s",
            s.name,
            s.total - s.failed,
            s.total,
            s.elapsed_secs
        );
    }
    match report.suites.iter().find(|s| !s.passed()) {
        None => Ok(report),
        Some(s) => {
            let replay = s
                .first_failure
                .as_ref()
                .map(|v| v.to_string())
                .unwrap_or_else(|| "no instances ran".into());
            Err(CliError::Verification(format!(
                "suite {} failed {}/{} (seed {seed}); first failure: {replay}",
                s.name, s.failed, s.total
            )))
        }
    }
}
