//! Writes `samples.csv`, `report.json`, `cdf.csv` and `ecf.csv`.
//!
//! Floats in CSV files use `{:.16e}` (17 significant digits), enough to
//! reproduce every double exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sdlevy::stats::{StatReport, Verdict};

use crate::config::ExperimentConfig;
use crate::experiments::Outcome;
use crate::CliError;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct RunReport<'a> {
    experiment: &'a str,
    seed: u64,
    fingerprint: &'a str,
    verdict: Verdict,
    config: &'a ExperimentConfig,
    reports: &'a [StatReport],
}

pub fn report_json(outcome: &Outcome) -> String {
    let run = RunReport {
        experiment: outcome.config.experiment.name(),
        seed: outcome.config.seed,
        fingerprint: &outcome.fingerprint,
        verdict: if outcome.passed() { Verdict::Pass } else { Verdict::Fail },
        config: &outcome.config,
        reports: &outcome.reports,
    };
    let mut s = serde_json::to_string_pretty(&run).expect("report serializes");
    s.push('\n');
    s
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))
}

/// Wide table: one column per named series, padded with empty cells.
pub fn samples_csv(outcome: &Outcome) -> Result<Vec<u8>, CliError> {
    let mut header = vec!["index"];
    header.extend(outcome.columns.iter().map(|(name, _)| name.as_str()));
    let rows = outcome.columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    csv_bytes(
        &header,
        (0..rows).map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(outcome.columns.iter().map(|(_, v)| v.get(i).map_or_else(String::new, |&x| num(x))));
            row
        }),
    )
}

pub fn cdf_csv(outcome: &Outcome) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &["comparison", "x", "ecdf_a", "ecdf_b"],
        outcome
            .cdf
            .iter()
            .map(|p| vec![p.comparison.clone(), num(p.x), num(p.f_a), num(p.f_b)]),
    )
}

pub fn ecf_csv(outcome: &Outcome) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &["comparison", "u", "re_a", "im_a", "re_b", "im_b", "re_exact", "im_exact"],
        outcome.ecf.iter().map(|p| {
            let (re, im) = p.exact.map_or((String::new(), String::new()), |(r, i)| (num(r), num(i)));
            vec![p.comparison.clone(), num(p.u), num(p.a.0), num(p.a.1), num(p.b.0), num(p.b.1), re, im]
        }),
    )
}

/// Writes the four artifacts into `dir`, creating it if needed. Returns their paths.
pub fn write_artifacts(outcome: &Outcome, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let files = [
        ("samples.csv", samples_csv(outcome)?),
        ("report.json", report_json(outcome).into_bytes()),
        ("cdf.csv", cdf_csv(outcome)?),
        ("ecf.csv", ecf_csv(outcome)?),
    ];
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io)?;
        paths.push(path);
    }
    Ok(paths)
}
