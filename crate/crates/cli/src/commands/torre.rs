use entcert::hilbert::{
    covariance_bilinear, lift_local, truncated_position, variance, BilinearCoefficients, HilbertError,
    TensorStructure,
};
use entcert::inequalities::{aligned_spin_pair, torre_spin_covariance, total_spin_squared, SpinAxis};
use entcert::states::random;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::TorreSettings;
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TorreRow {
    pub case: String,
    pub covariance: f64,
    pub var_a: f64,
    pub var_b: f64,
    /// k·m·var(A) + n·l·var(B), position cases only.
    pub predicted: Option<f64>,
    pub residual: Option<f64>,
    /// Max-norm of [S_z², S_x²], spin cases only.
    pub commutator_norm: Option<f64>,
}

fn hilbert_err(e: HilbertError) -> CliError {
    match e {
        HilbertError::IdentityViolated { .. } => CliError::Invariant(e.to_string()),
        other => CliError::usage(other.to_string()),
    }
}

pub fn evaluate(settings: &TorreSettings, seed: u64) -> Result<Vec<TorreRow>, CliError> {
    let d = settings.levels;
    if d < 2 {
        return Err(CliError::usage("--levels must be at least 2"));
    }
    let [k, n, m, l] = settings.coefficients;
    let coeffs = BilinearCoefficients { k, n, m, l };
    let structure = TensorStructure::bipartite(d, d).map_err(hilbert_err)?;
    let x = truncated_position(d);
    let x1 = lift_local(&x, 0, &structure).map_err(hilbert_err)?;
    let x2 = lift_local(&x, 1, &structure).map_err(hilbert_err)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let position_row = |case: String, rho| -> Result<TorreRow, CliError> {
        let r = covariance_bilinear(&rho, coeffs, &x1, &x2).map_err(hilbert_err)?;
        Ok(TorreRow {
            case,
            covariance: r.covariance,
            var_a: r.var_a,
            var_b: r.var_b,
            predicted: Some(r.predicted),
            residual: Some(r.residual),
            commutator_norm: None,
        })
    };
    for i in 0..settings.samples {
        let rho = random::product_state(&mut rng, d, d);
        rows.push(position_row(format!("position-random-{i}"), rho)?);
    }
    let one = random::mixed_state(&mut rng, d);
    rows.push(position_row("position-symmetric".into(), one.tensor(&one))?);

    let z2 = total_spin_squared(SpinAxis::Z);
    let x2s = total_spin_squared(SpinAxis::X);
    for (case, theta_deg) in [
        (format!("spin-aligned-{}deg", settings.spin_theta_deg), settings.spin_theta_deg),
        ("spin-up-up".to_string(), 0.0),
    ] {
        let rho = aligned_spin_pair(theta_deg.to_radians());
        let c = torre_spin_covariance(&rho).map_err(|e| CliError::Invariant(e.to_string()))?;
        rows.push(TorreRow {
            case,
            covariance: c.covariance,
            var_a: variance(&rho, &z2).map_err(hilbert_err)?,
            var_b: variance(&rho, &x2s).map_err(hilbert_err)?,
            predicted: None,
            residual: None,
            commutator_norm: Some(c.commutator_norm),
        });
    }
    Ok(rows)
}

pub fn run(settings: &TorreSettings, seed: u64, out: &OutDir) -> Result<String, CliError> {
    let rows = evaluate(settings, seed)?;
    out.write_csv("torre.csv", &rows)?;
    let worst = rows.iter().filter_map(|r| r.residual).fold(0.0, f64::max);
    let spin = rows.iter().find(|r| r.case.starts_with("spin-aligned")).map_or(0.0, |r| r.covariance);
    Ok(format!(
        "max identity residual {worst:.3e}; spin covariance at {}° = {spin:.6}",
        settings.spin_theta_deg
    ))
}
