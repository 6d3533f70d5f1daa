use entcert::protocol_sim::{
    design_effect_from_stats, generate, predicted_design_effect, test_h0, theoretical_mean, theoretical_sd,
    ProtocolError, ProtocolSpec, SignalModel, SignificanceReport, H0_ALPHAS, MIN_DESIGN_EFFECT_RUNS,
};
use entcert::stat_tests::{audit_outcomes, HomogeneityReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{variant_format, ModelChoice, ProtocolSettings, LOOPHOLE_DEFAULT};
use crate::error::CliError;
use crate::output::OutDir;

/// |z| thresholds tallied in the summary.
pub const Z_THRESHOLDS: [f64; 3] = [1.96, 10.0, 50.0];

pub fn build_model(choice: &ModelChoice) -> Result<SignalModel, CliError> {
    match choice {
        ModelChoice::Named(name) if name == LOOPHOLE_DEFAULT => Ok(SignalModel::loophole_default()),
        ModelChoice::Named(name) => Err(CliError::usage(format!(
            "unknown model {name:?}; use {LOOPHOLE_DEFAULT:?} or a custom table"
        ))),
        ModelChoice::Custom { p1, p2, outcome } => {
            SignalModel::new(p1.clone(), p2.clone(), outcome.clone()).map_err(|e| CliError::usage(e.to_string()))
        }
    }
}

/// Constant runs have no naive SEM; their z and p are left empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: u64,
    pub seed: u64,
    pub sample_mean: f64,
    pub naive_sem: f64,
    pub report: Option<SignificanceReport>,
}

impl RunRecord {
    fn z_score(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.z_score)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub pool: u64,
    pub first_run: u64,
    pub last_run: u64,
    pub outcomes: usize,
    pub chi_square_p: f64,
    pub ks_p: f64,
    pub block_scan_p: f64,
    pub lag1_p: f64,
    pub overall_p: f64,
    pub homogeneous: bool,
}

impl AuditRow {
    fn new(pool: u64, first_run: u64, last_run: u64, outcomes: usize, r: &HomogeneityReport) -> Self {
        let p = |i: usize| r.tests[i].p_value;
        Self {
            pool,
            first_run,
            last_run,
            outcomes,
            chi_square_p: p(0),
            ks_p: p(1),
            block_scan_p: p(2),
            lag1_p: p(3),
            overall_p: r.overall_p_value,
            homogeneous: r.overall_homogeneous,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdFraction {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub variant: &'static str,
    pub n1: usize,
    pub n2: usize,
    pub runs: u64,
    pub seed: u64,
    pub theoretical_mean: f64,
    pub theoretical_sd: f64,
    pub mean_of_run_means: f64,
    /// Absent below the minimum run count.
    pub design_effect: Option<f64>,
    pub predicted_design_effect: f64,
    /// Fractions are over all runs; constant runs never count as exceeding.
    pub abs_z_above: Vec<ThresholdFraction>,
    pub h0_rejection_rate: Vec<ThresholdFraction>,
    /// Runs with zero spread, where z is undefined.
    pub constant_runs: usize,
    pub pools: usize,
    pub pools_homogeneous: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolResult {
    pub runs: Vec<RunRecord>,
    pub audits: Vec<AuditRow>,
    pub summary: Summary,
}

fn protocol_err(e: ProtocolError) -> CliError {
    CliError::usage(e.to_string())
}

pub fn evaluate(settings: &ProtocolSettings, seed: u64) -> Result<ProtocolResult, CliError> {
    let model = build_model(&settings.model)?;
    let spec = ProtocolSpec::new(settings.variant, settings.n1, settings.n2).map_err(protocol_err)?;
    if settings.runs == 0 {
        return Err(CliError::usage("--runs must be positive"));
    }
    if settings.pool == 0 {
        return Err(CliError::usage("--pool must be positive"));
    }
    if !(settings.alpha > 0.0 && settings.alpha < 1.0) {
        return Err(CliError::usage(format!("--alpha {} outside (0, 1)", settings.alpha)));
    }

    let mut runs = Vec::with_capacity(settings.runs as usize);
    let mut audits = Vec::new();
    let mut first = 0u64;
    while first < settings.runs {
        let last = (first + settings.pool).min(settings.runs) - 1;
        // Memory stays bounded by one pool of raw outcomes.
        let samples = (first..=last)
            .into_par_iter()
            .map(|r| generate(&model, &spec, seed, r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(protocol_err)?;
        for s in &samples {
            let report = match test_h0(s, &model) {
                Ok(r) => Some(r),
                Err(ProtocolError::ZeroSem) => None,
                Err(e) => return Err(protocol_err(e)),
            };
            runs.push(RunRecord {
                run: s.run_index,
                seed,
                sample_mean: s.mean(),
                naive_sem: s.naive_sem(),
                report,
            });
        }
        let pooled: Vec<f64> = samples.iter().flat_map(|s| s.outcomes.iter().copied()).collect();
        let report = audit_outcomes(&pooled, settings.bins, settings.alpha)
            .map_err(|e| CliError::usage(format!("audit of runs {first}..={last}: {e}")))?;
        audits.push(AuditRow::new(first / settings.pool, first, last, pooled.len(), &report));
        first = last + 1;
    }

    let k = runs.len() as f64;
    let stats: Vec<(f64, f64)> = runs.iter().map(|r| (r.sample_mean, r.naive_sem)).collect();
    let design_effect = if stats.len() >= MIN_DESIGN_EFFECT_RUNS {
        Some(design_effect_from_stats(&stats).map_err(protocol_err)?)
    } else {
        None
    };
    let frac = |pred: &dyn Fn(&RunRecord) -> bool| runs.iter().filter(|r| pred(r)).count() as f64 / k;
    let summary = Summary {
        variant: variant_format::name(settings.variant),
        n1: settings.n1,
        n2: settings.n2,
        runs: settings.runs,
        seed,
        theoretical_mean: theoretical_mean(&model),
        theoretical_sd: theoretical_sd(&model),
        mean_of_run_means: stats.iter().map(|s| s.0).sum::<f64>() / k,
        design_effect,
        predicted_design_effect: predicted_design_effect(&model, &spec),
        abs_z_above: Z_THRESHOLDS
            .iter()
            .map(|&t| ThresholdFraction {
                threshold: t,
                fraction: frac(&|r| r.z_score().is_some_and(|z| z.abs() > t)),
            })
            .collect(),
        h0_rejection_rate: H0_ALPHAS
            .iter()
            .map(|&a| ThresholdFraction {
                threshold: a,
                fraction: frac(&|r| r.report.as_ref().is_some_and(|x| x.p_value < a)),
            })
            .collect(),
        constant_runs: runs.iter().filter(|r| r.report.is_none()).count(),
        pools: audits.len(),
        pools_homogeneous: audits.iter().filter(|a| a.homogeneous).count(),
    };
    Ok(ProtocolResult { runs, audits, summary })
}

pub fn run(settings: &ProtocolSettings, seed: u64, out: &OutDir) -> Result<String, CliError> {
    let res = evaluate(settings, seed)?;
    out.write_jsonl("runs.jsonl", &res.runs)?;
    out.write_json("summary.json", &res.summary)?;
    out.write_csv("audit.csv", &res.audits)?;
    let s = &res.summary;
    let de = s.design_effect.map_or("n/a".to_string(), |d| format!("{d:.2}"));
    Ok(format!(
        "{} runs of {} ({}x{}): design effect {de} (predicted {:.2}), |z|>1.96 in {:.1}% of runs, {}/{} pools homogeneous",
        s.runs,
        s.variant,
        s.n1,
        s.n2,
        s.predicted_design_effect,
        100.0 * s.abs_z_above[0].fraction,
        s.pools_homogeneous,
        s.pools
    ))
}
