use std::time::Instant;

use serde::Serialize;
use sgm::gradcheck::{run_gradcheck, GradcheckReport};

use super::RunInfo;
use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{CliError, Common};

#[derive(Serialize)]
struct Report<'a> {
    run: RunInfo<'a>,
    #[serde(flatten)]
    result: &'a GradcheckReport,
}

/// Writes the report either way; exits with the numerical-failure code when
/// any suite breaches the tolerance.
pub fn run(common: &Common, corrupt: bool, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let mut check = cfg.gradcheck_config();
    check.corrupt = corrupt;
    let report = run_gradcheck(&check, cfg.seed)?;
    for s in &report.suites {
        println!(
            "{:<16} max relative error {:.3e} over {} instances ({} redrawn)  {}",
            s.name,
            s.max_relative_error,
            s.instances,
            s.redrawn,
            if s.passed { "PASS" } else { "FAIL" }
        );
    }
    let mut out = Outputs::new(&common.out);
    out.add_report(
        "gradcheck.json",
        &Report {
            run: RunInfo::new("gradcheck", common, cfg),
            result: &report,
        },
    )?;
    out.commit("gradcheck", start.elapsed().as_secs_f64())?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check failed: tolerance {:.1e}",
            check.tolerance
        )))
    }
}
