//! Configuration, scenario runner and report tooling for `infravac-core`.

pub mod config;
pub mod report;
pub mod scenarios;

use std::io;
use std::path::{Path, PathBuf};

use config::Validated;
use report::{DiagnosticReport, Environment, SCHEMA_VERSION};
use scenarios::Scenario;

/// Run a scenario and assemble its report; nothing is written.
pub fn execute(scenario: Scenario, v: &Validated, seed: u64, negative_control: bool) -> (DiagnosticReport, Vec<report::Series>) {
    let outcome = scenarios::run(scenario, v, seed, negative_control);
    let stem = file_stem(scenario, negative_control);
    let artifacts = if v.raw.outputs.csv {
        outcome.series.iter().map(|s| format!("{stem}_{}.csv", s.name)).collect()
    } else {
        vec![]
    };
    let mut report = DiagnosticReport {
        schema_version: SCHEMA_VERSION.into(),
        scenario: scenario.id().into(),
        seed,
        negative_control,
        environment: Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            nodes_per_shell: v.grid.nodes_per_shell(),
            n_shells: v.grid.n_shells(),
            grid_points: v.grid.len(),
            l_max: v.trunc.l_max,
            uv_cutoff: v.grid.uv_cutoff(),
        },
        checks: outcome.checks,
        metrics: outcome.metrics,
        artifacts,
        passed: false,
    };
    report.settle();
    (report, outcome.series)
}

pub fn file_stem(scenario: Scenario, negative_control: bool) -> String {
    if negative_control {
        format!("{}-control", scenario.id())
    } else {
        scenario.id().to_string()
    }
}

/// Write the JSON report and its CSV series into `dir`; returns the report path.
pub fn write_outputs(dir: &Path, report: &DiagnosticReport, series: &[report::Series]) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    for (s, name) in series.iter().zip(&report.artifacts) {
        s.write(&dir.join(name))?;
    }
    let stem = file_stem(report.scenario.parse().map_err(io::Error::other)?, report.negative_control);
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, report::to_json(report))?;
    Ok(path)
}
