use entcert::classical_models::{analytic_moments, sample_moments, DicePairEnsemble, ExactMoments, Rational, SampleMoments};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::DiceSettings;
use crate::error::CliError;
use crate::output::OutDir;

/// Monte Carlo estimates count as consistent within this many SEMs.
pub const SEM_BAND: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub quantity: &'static str,
    pub exact: String,
    pub exact_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub run: u64,
    pub trials: u64,
    pub mean_a: f64,
    pub sem_a: f64,
    pub mean_b: f64,
    pub sem_b: f64,
    pub mean_ab: f64,
    pub sem_ab: f64,
    pub cov: f64,
    pub sem_cov: f64,
    pub within_4_sem: bool,
}

fn value(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn exact_rows(m: &ExactMoments) -> Vec<MomentRow> {
    [("E(A)", m.e_a), ("E(B)", m.e_b), ("E(AB)", m.e_ab), ("cov(A,B)", m.cov)]
        .into_iter()
        .map(|(quantity, r)| MomentRow {
            quantity,
            exact: r.to_string(),
            exact_value: value(r),
        })
        .collect()
}

pub fn run_row(run: u64, s: &SampleMoments, exact: &ExactMoments) -> RunRow {
    let ok = |est: f64, ex: Rational, sem: f64| (est - value(ex)).abs() <= SEM_BAND * sem;
    RunRow {
        run,
        trials: s.trials,
        mean_a: s.mean_a,
        sem_a: s.sem_a,
        mean_b: s.mean_b,
        sem_b: s.sem_b,
        mean_ab: s.mean_ab,
        sem_ab: s.sem_ab,
        cov: s.cov,
        sem_cov: s.sem_cov,
        within_4_sem: ok(s.mean_a, exact.e_a, s.sem_a)
            && ok(s.mean_b, exact.e_b, s.sem_b)
            && ok(s.mean_ab, exact.e_ab, s.sem_ab)
            && ok(s.cov, exact.cov, s.sem_cov),
    }
}

pub fn evaluate(settings: &DiceSettings, seed: u64) -> Result<(ExactMoments, Vec<RunRow>), CliError> {
    if settings.trials == 0 {
        return Err(CliError::usage("--trials must be positive"));
    }
    let trials = usize::try_from(settings.trials).map_err(|_| CliError::usage("--trials too large"))?;
    let ensemble = DicePairEnsemble::two_dice();
    let exact = analytic_moments(&ensemble);
    let rows = (0..settings.runs)
        .into_par_iter()
        .map(|run| {
            let s = sample_moments(&ensemble, trials, seed, run).map_err(|e| CliError::usage(e.to_string()))?;
            Ok(run_row(run, &s, &exact))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((exact, rows))
}

pub fn run(settings: &DiceSettings, seed: u64, out: &OutDir) -> Result<String, CliError> {
    let (exact, rows) = evaluate(settings, seed)?;
    out.write_csv("dice_moments.csv", &exact_rows(&exact))?;
    out.write_csv("dice_runs.csv", &rows)?;
    let inside = rows.iter().filter(|r| r.within_4_sem).count();
    Ok(format!(
        "E(A) = {}, E(B) = {}, E(AB) = {}, cov = {}; {inside}/{} runs within {SEM_BAND} SEM",
        exact.e_a,
        exact.e_b,
        exact.e_ab,
        exact.cov,
        rows.len()
    ))
}
