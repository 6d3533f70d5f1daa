use std::path::Path;

use entcert::stat_tests::{audit_outcomes, HomogeneityReport, TestResult};

use crate::config::AuditSettings;
use crate::error::CliError;
use crate::output::OutDir;

/// One number per line; blank lines and `#` comments are skipped.
pub fn parse_outcomes(text: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| CliError::usage(format!("line {}: not a number: {t:?}", i + 1)))?;
        if !v.is_finite() {
            return Err(CliError::usage(format!("line {}: non-finite value", i + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn read_outcomes(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_outcomes(&text)
}

pub fn evaluate(settings: &AuditSettings) -> Result<HomogeneityReport, CliError> {
    let x = read_outcomes(&settings.input)?;
    audit_outcomes(&x, settings.bins, settings.alpha).map_err(|e| CliError::usage(e.to_string()))
}

pub fn run(settings: &AuditSettings, out: &OutDir) -> Result<String, CliError> {
    let report = evaluate(settings)?;
    out.write_json("audit.json", &report)?;
    out.write_csv("audit.csv", &report.tests)?;
    let worst: Option<&TestResult> = report
        .tests
        .iter()
        .min_by(|a, b| a.p_value.total_cmp(&b.p_value));
    Ok(format!(
        "{}: overall p = {:.3e} (smallest from {})",
        if report.overall_homogeneous { "homogeneous" } else { "not homogeneous" },
        report.overall_p_value,
        worst.map_or("-", |t| t.name.as_str())
    ))
}
