use entcert::hilbert::{pauli, ComplexMatrix, DensityOperator, TensorStructure};
use entcert::inequalities::{
    chsh_value, maximize_chsh, ChshConfig, ChshReport, PlanarAngles, CLASSICAL_BOUND_TOL, TSIRELSON_BOUND,
};
use entcert::states::{negativity, singlet, to_density, werner, ConvexSumState, ConvexTerm};
use serde::Serialize;

use crate::config::ChshSettings;
use crate::error::CliError;
use crate::output::OutDir;

/// A parsed `--state` value.
pub struct ParsedState {
    pub label: String,
    pub density: DensityOperator,
    /// Built as an explicit convex sum of products, so S ≤ 2 must hold.
    pub convex_sum: bool,
}

fn bloch_qubit(r: [f64; 3]) -> Result<DensityOperator, CliError> {
    let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if norm > 1.0 + 1e-12 {
        return Err(CliError::usage(format!("Bloch vector {r:?} has length {norm} > 1")));
    }
    let m = &(&(&ComplexMatrix::identity(2) + &pauli::sigma_x().scale(r[0])) + &pauli::sigma_y().scale(r[1]))
        + &pauli::sigma_z().scale(r[2]);
    DensityOperator::new(m.scale(0.5), TensorStructure::qubits(1)).map_err(|e| CliError::usage(e.to_string()))
}

fn parse_vector(s: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("bad Bloch vector `{s}`: {e}")))?;
    parts
        .try_into()
        .map_err(|_| CliError::usage(format!("Bloch vector `{s}` needs three components")))
}

fn from_convex(label: &str, terms: Vec<ConvexTerm>) -> Result<ParsedState, CliError> {
    let sum = ConvexSumState::new(terms).map_err(|e| CliError::usage(format!("state `{label}`: {e}")))?;
    Ok(ParsedState {
        label: label.to_owned(),
        density: to_density(&sum),
        convex_sum: true,
    })
}

pub fn parse_state(spec: &str) -> Result<ParsedState, CliError> {
    let spec = spec.trim();
    let (kind, arg) = spec.split_once(':').map_or((spec, None), |(k, a)| (k, Some(a)));
    match (kind, arg) {
        ("singlet", None) => Ok(ParsedState {
            label: spec.into(),
            density: singlet(),
            convex_sum: false,
        }),
        ("werner", Some(w)) => {
            let w: f64 = w.parse().map_err(|e| CliError::usage(format!("werner weight `{w}`: {e}")))?;
            Ok(ParsedState {
                label: spec.into(),
                density: werner(w).map_err(|e| CliError::usage(e.to_string()))?,
                convex_sum: false,
            })
        }
        ("mixed-demo", None) => {
            let up = bloch_qubit([0.0, 0.0, 1.0])?;
            let down = bloch_qubit([0.0, 0.0, -1.0])?;
            from_convex(
                spec,
                vec![
                    ConvexTerm { weight: 0.5, left: up.clone(), right: up },
                    ConvexTerm { weight: 0.5, left: down.clone(), right: down },
                ],
            )
        }
        ("aligned", Some(deg)) => {
            let deg: f64 = deg.parse().map_err(|e| CliError::usage(format!("angle `{deg}`: {e}")))?;
            let theta = deg.to_radians();
            let r = [theta.sin(), 0.0, theta.cos()];
            from_convex(
                spec,
                vec![ConvexTerm { weight: 1.0, left: bloch_qubit(r)?, right: bloch_qubit(r)? }],
            )
        }
        ("convex", Some(body)) => {
            let mut terms = Vec::new();
            for term in body.split(';').filter(|t| !t.trim().is_empty()) {
                let (w, pair) = term
                    .split_once('@')
                    .ok_or_else(|| CliError::usage(format!("term `{term}` must look like w@x,y,z|x,y,z")))?;
                let weight: f64 = w.trim().parse().map_err(|e| CliError::usage(format!("weight `{w}`: {e}")))?;
                let (l, r) = pair
                    .split_once('|')
                    .ok_or_else(|| CliError::usage(format!("term `{term}` needs two Bloch vectors")))?;
                terms.push(ConvexTerm {
                    weight,
                    left: bloch_qubit(parse_vector(l)?)?,
                    right: bloch_qubit(parse_vector(r)?)?,
                });
            }
            from_convex(spec, terms)
        }
        _ => Err(CliError::usage(format!(
            "unknown state `{spec}` (singlet, werner:<w>, mixed-demo, aligned:<deg>, convex:<terms>)"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnglesDeg {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl From<PlanarAngles> for AnglesDeg {
    fn from(p: PlanarAngles) -> Self {
        Self {
            a: p.a.to_degrees(),
            a_prime: p.a_prime.to_degrees(),
            b: p.b.to_degrees(),
            b_prime: p.b_prime.to_degrees(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChshOutput {
    pub state: String,
    pub optimized: bool,
    pub grid_step_deg: Option<f64>,
    pub angles_deg: AnglesDeg,
    pub s_value: f64,
    pub violated: bool,
    pub tsirelson_exceeded: bool,
    pub negativity: f64,
    pub correlations: ChshReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub delta_deg: f64,
    pub s_value: f64,
}

pub fn evaluate(settings: &ChshSettings) -> Result<(ChshOutput, Vec<ScanRow>), CliError> {
    let state = parse_state(&settings.state)?;
    let (angles, grid_step_deg) = if settings.optimize {
        let step = settings.grid_step_deg;
        if !(step > 0.0 && step <= 90.0) {
            return Err(CliError::usage(format!("grid step {step}° must lie in (0, 90]")));
        }
        let opt = maximize_chsh(&state.density, step.to_radians()).map_err(|e| CliError::usage(e.to_string()))?;
        (opt.angles, Some(step))
    } else {
        let [a, a_prime, b, b_prime] = settings.angles_deg.map(f64::to_radians);
        (PlanarAngles { a, a_prime, b, b_prime }, None)
    };
    let report = chsh_value(&state.density, &ChshConfig::planar(angles)).map_err(|e| CliError::usage(e.to_string()))?;
    if report.tsirelson_exceeded {
        return Err(CliError::Invariant(format!("S = {} exceeds {TSIRELSON_BOUND}", report.s_value)));
    }
    if state.convex_sum && report.classical_bound_violated {
        return Err(CliError::Invariant(format!(
            "convex sum of products reached S = {} > 2 + {CLASSICAL_BOUND_TOL}",
            report.s_value
        )));
    }
    let neg = negativity(&state.density).map_err(|e| CliError::Invariant(e.to_string()))?;

    let step = settings.scan_step_deg;
    if !(step > 0.0 && step <= 180.0) {
        return Err(CliError::usage(format!("scan step {step}° must lie in (0, 180]")));
    }
    let count = (180.0 / step).floor() as usize;
    let mut scan = Vec::with_capacity(count + 1);
    for i in 0..=count {
        // a = 0, b = δ, a′ = 2δ, b′ = 3δ
        let delta_deg = i as f64 * step;
        let d = delta_deg.to_radians();
        let cfg = ChshConfig::planar(PlanarAngles { a: 0.0, a_prime: 2.0 * d, b: d, b_prime: 3.0 * d });
        let s_value = chsh_value(&state.density, &cfg).map_err(|e| CliError::usage(e.to_string()))?.s_value;
        scan.push(ScanRow { delta_deg, s_value });
    }

    Ok((
        ChshOutput {
            state: state.label,
            optimized: settings.optimize,
            grid_step_deg,
            angles_deg: angles.into(),
            s_value: report.s_value,
            violated: report.classical_bound_violated,
            tsirelson_exceeded: report.tsirelson_exceeded,
            negativity: neg,
            correlations: report,
        },
        scan,
    ))
}

pub fn run(settings: &ChshSettings, out: &OutDir) -> Result<String, CliError> {
    let (report, scan) = evaluate(settings)?;
    out.write_json("chsh_report.json", &report)?;
    out.write_csv("chsh_scan.csv", &scan)?;
    Ok(format!(
        "state {}: S = {:.6}, violated = {}, negativity = {:.6}",
        report.state, report.s_value, report.violated, report.negativity
    ))
}
