//! CHSH correlations, grid maximization over planar spin settings, and the
//! total-spin-squared covariance example.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hilbert::{
    eigen_hermitian, expectation, pauli, tensor_product, ComplexMatrix, DensityOperator,
    HermitianOperator, HilbertError, TensorStructure,
};

/// S above this is a violation of the local bound.
pub const CLASSICAL_BOUND: f64 = 2.0;
pub const CLASSICAL_BOUND_TOL: f64 = 1e-9;
pub const TSIRELSON_BOUND: f64 = 2.0 * SQRT_2;
pub const TSIRELSON_TOL: f64 = 1e-6;
pub const SPECTRUM_TOL: f64 = 1e-10;
pub const DEFAULT_GRID_STEP: f64 = PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InequalityError {
    #[error("observable spectrum reaches {max_abs}, exceeding bound {bound}")]
    SpectrumBound { max_abs: f64, bound: f64 },
    #[error("state must be two qubits, got factor dims {0:?}")]
    NotTwoQubit(Vec<usize>),
    #[error("grid step must be positive and finite, got {0}")]
    InvalidGridStep(f64),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Single-site observable with spectrum inside [−bound, bound].
#[derive(Clone, Debug)]
pub struct MeasurementSetting {
    observable: HermitianOperator,
    spectrum_bound: f64,
    angle: Option<f64>,
}

impl MeasurementSetting {
    pub fn new(observable: HermitianOperator) -> Result<Self, InequalityError> {
        Self::with_bound(observable, 1.0)
    }

    pub fn with_bound(observable: HermitianOperator, spectrum_bound: f64) -> Result<Self, InequalityError> {
        let spectrum = eigen_hermitian(&observable);
        let max_abs = spectrum.min_value().abs().max(spectrum.max_value().abs());
        if max_abs > spectrum_bound + SPECTRUM_TOL {
            return Err(InequalityError::SpectrumBound {
                max_abs,
                bound: spectrum_bound,
            });
        }
        Ok(Self {
            observable,
            spectrum_bound,
            angle: None,
        })
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.observable
    }

    pub fn spectrum_bound(&self) -> f64 {
        self.spectrum_bound
    }

    /// Planar angle, when built by [`planar_spin_setting`].
    pub fn angle(&self) -> Option<f64> {
        self.angle
    }
}

/// cos θ·σ_z + sin θ·σ_x.
pub fn planar_spin_setting(theta: f64) -> MeasurementSetting {
    let (s, c) = theta.sin_cos();
    let m = ComplexMatrix::from_real(2, 2, &[c, s, s, -c]).expect("2x2");
    MeasurementSetting {
        observable: HermitianOperator::new(m).expect("real symmetric"),
        spectrum_bound: 1.0,
        angle: Some(theta),
    }
}

/// Settings {A, A′} on the first site and {B, B′} on the second.
#[derive(Clone, Debug)]
pub struct ChshConfig {
    pub a: MeasurementSetting,
    pub a_prime: MeasurementSetting,
    pub b: MeasurementSetting,
    pub b_prime: MeasurementSetting,
}

impl ChshConfig {
    pub fn planar(angles: PlanarAngles) -> Self {
        Self {
            a: planar_spin_setting(angles.a),
            a_prime: planar_spin_setting(angles.a_prime),
            b: planar_spin_setting(angles.b),
            b_prime: planar_spin_setting(angles.b_prime),
        }
    }
}

/// Angles (radians) of a planar CHSH configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanarAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl PlanarAngles {
    /// a = 0°, a′ = 90°, b = 45°, b′ = 135°.
    pub fn canonical() -> Self {
        Self {
            a: 0.0,
            a_prime: PI / 2.0,
            b: PI / 4.0,
            b_prime: 3.0 * PI / 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChshReport {
    pub e_ab: f64,
    pub e_ab_prime: f64,
    pub e_a_prime_b: f64,
    pub e_a_prime_b_prime: f64,
    pub s_value: f64,
    pub classical_bound_violated: bool,
    pub tsirelson_exceeded: bool,
}

impl ChshReport {
    pub fn from_correlations(e_ab: f64, e_ab_prime: f64, e_a_prime_b: f64, e_a_prime_b_prime: f64) -> Self {
        let s_value = chsh_combination(e_ab, e_ab_prime, e_a_prime_b, e_a_prime_b_prime);
        Self {
            e_ab,
            e_ab_prime,
            e_a_prime_b,
            e_a_prime_b_prime,
            s_value,
            classical_bound_violated: s_value > CLASSICAL_BOUND + CLASSICAL_BOUND_TOL,
            tsirelson_exceeded: s_value > TSIRELSON_BOUND + TSIRELSON_TOL,
        }
    }
}

/// |E(AB) − E(AB′)| + |E(A′B) + E(A′B′)|
#[inline]
pub fn chsh_combination(e_ab: f64, e_ab_prime: f64, e_a_prime_b: f64, e_a_prime_b_prime: f64) -> f64 {
    (e_ab - e_ab_prime).abs() + (e_a_prime_b + e_a_prime_b_prime).abs()
}

fn require_bipartite(rho: &DensityOperator) -> Result<(), InequalityError> {
    if rho.structure().factors() != 2 {
        return Err(HilbertError::NotBipartite {
            factors: rho.structure().factors(),
        }
        .into());
    }
    Ok(())
}

fn require_two_qubit(rho: &DensityOperator) -> Result<(), InequalityError> {
    if rho.structure().factor_dims() != [2, 2] {
        return Err(InequalityError::NotTwoQubit(rho.structure().factor_dims().to_vec()));
    }
    Ok(())
}

fn correlation(
    rho: &DensityOperator,
    a: &MeasurementSetting,
    b: &MeasurementSetting,
) -> Result<f64, InequalityError> {
    let s = rho.structure();
    let (da, db) = (s.factor_dims()[0], s.factor_dims()[1]);
    if a.observable.dim() != da {
        return Err(HilbertError::DimensionMismatch {
            expected: da,
            found: a.observable.dim(),
        }
        .into());
    }
    if b.observable.dim() != db {
        return Err(HilbertError::DimensionMismatch {
            expected: db,
            found: b.observable.dim(),
        }
        .into());
    }
    let ab = HermitianOperator::new(tensor_product(a.observable.matrix(), b.observable.matrix()))?;
    Ok(expectation(rho, &ab)?)
}

/// Evaluate the four correlations and S for a bipartite state.
pub fn chsh_value(rho: &DensityOperator, cfg: &ChshConfig) -> Result<ChshReport, InequalityError> {
    require_bipartite(rho)?;
    Ok(ChshReport::from_correlations(
        correlation(rho, &cfg.a, &cfg.b)?,
        correlation(rho, &cfg.a, &cfg.b_prime)?,
        correlation(rho, &cfg.a_prime, &cfg.b)?,
        correlation(rho, &cfg.a_prime, &cfg.b_prime)?,
    ))
}

#[derive(Clone, Debug)]
pub struct ChshOptimum {
    pub angles: PlanarAngles,
    pub config: ChshConfig,
    pub s_value: f64,
}

/// Angles k·step for k = 0, 1, … covering [0, 2π).
pub fn angle_grid(step: f64) -> Result<Vec<f64>, InequalityError> {
    if !(step.is_finite() && step > 0.0) || step > 2.0 * PI {
        return Err(InequalityError::InvalidGridStep(step));
    }
    let count = ((2.0 * PI / step) - 1e-9).ceil().max(1.0) as usize;
    Ok((0..count).map(|k| k as f64 * step).collect())
}

/// Grid search for the planar settings maximizing S on a two-qubit state.
///
/// For fixed (b, b′) the two absolute-value terms decouple in a and a′, so
/// each (b, b′) pair costs two linear scans. Ties resolve to the
/// lexicographically smallest (a, a′, b, b′) index tuple.
pub fn maximize_chsh(rho: &DensityOperator, grid_step: f64) -> Result<ChshOptimum, InequalityError> {
    require_two_qubit(rho)?;
    let grid = angle_grid(grid_step)?;
    let n = grid.len();

    // Correlation tensor restricted to the z–x plane: t[i][j] = Tr ρ σᵢ⊗σⱼ.
    let paulis = [pauli::sigma_z(), pauli::sigma_x()];
    let mut t = [[0.0; 2]; 2];
    for (i, si) in paulis.iter().enumerate() {
        for (j, sj) in paulis.iter().enumerate() {
            t[i][j] = rho.matrix().trace_of_product(&tensor_product(si, sj)).re;
        }
    }
    let unit: Vec<[f64; 2]> = grid.iter().map(|&th| [th.cos(), th.sin()]).collect();
    let mut table = vec![0.0; n * n];
    for (ia, ua) in unit.iter().enumerate() {
        for (ib, ub) in unit.iter().enumerate() {
            table[ia * n + ib] = ua[0] * (t[0][0] * ub[0] + t[0][1] * ub[1])
                + ua[1] * (t[1][0] * ub[0] + t[1][1] * ub[1]);
        }
    }

    type Candidate = (f64, [usize; 4]);
    let better = |x: Candidate, y: Candidate| -> Candidate {
        match x.0.total_cmp(&y.0) {
            std::cmp::Ordering::Greater => x,
            std::cmp::Ordering::Less => y,
            std::cmp::Ordering::Equal => {
                if x.1 <= y.1 {
                    x
                } else {
                    y
                }
            }
        }
    };

    let best = (0..n)
        .into_par_iter()
        .map(|ib| {
            let mut local: Candidate = (f64::NEG_INFINITY, [usize::MAX; 4]);
            for ib2 in 0..n {
                let (mut d_best, mut d_idx) = (f64::NEG_INFINITY, 0);
                let (mut s_best, mut s_idx) = (f64::NEG_INFINITY, 0);
                for ia in 0..n {
                    let row = ia * n;
                    let d = (table[row + ib] - table[row + ib2]).abs();
                    if d > d_best {
                        d_best = d;
                        d_idx = ia;
                    }
                    let s = (table[row + ib] + table[row + ib2]).abs();
                    if s > s_best {
                        s_best = s;
                        s_idx = ia;
                    }
                }
                local = better(local, (d_best + s_best, [d_idx, s_idx, ib, ib2]));
            }
            local
        })
        .reduce(|| (f64::NEG_INFINITY, [usize::MAX; 4]), better);

    let [ia, ia2, ib, ib2] = best.1;
    let angles = PlanarAngles {
        a: grid[ia],
        a_prime: grid[ia2],
        b: grid[ib],
        b_prime: grid[ib2],
    };
    let config = ChshConfig::planar(angles);
    let s_value = chsh_value(rho, &config)?.s_value;
    Ok(ChshOptimum {
        angles,
        config,
        s_value,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpinAxis {
    Z,
    X,
}

/// (S ⊗ I + I ⊗ S)² with S = σ/2 along `axis`.
pub fn total_spin_squared(axis: SpinAxis) -> HermitianOperator {
    let sigma = match axis {
        SpinAxis::Z => pauli::sigma_z(),
        SpinAxis::X => pauli::sigma_x(),
    };
    let i2 = ComplexMatrix::identity(2);
    let total = (&sigma.kron(&i2) + &i2.kron(&sigma)).scale(0.5);
    HermitianOperator::new(total.matmul(&total)).expect("square of Hermitian is Hermitian")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpinCovariance {
    /// E(½{S_z², S_x²}) − E(S_z²)·E(S_x²)
    pub covariance: f64,
    pub e_z2: f64,
    pub e_x2: f64,
    pub e_jordan: f64,
    /// Max-norm of [S_z², S_x²].
    pub commutator_norm: f64,
}

/// Conditional covariance of the total-spin-squared pair, using the Jordan
/// product for the joint term.
pub fn torre_spin_covariance(rho: &DensityOperator) -> Result<SpinCovariance, InequalityError> {
    require_two_qubit(rho)?;
    let z2 = total_spin_squared(SpinAxis::Z);
    let x2 = total_spin_squared(SpinAxis::X);
    let jordan = z2.jordan_product(&x2)?;
    let e_z2 = expectation(rho, &z2)?;
    let e_x2 = expectation(rho, &x2)?;
    let e_jordan = expectation(rho, &jordan)?;
    Ok(SpinCovariance {
        covariance: e_jordan - e_z2 * e_x2,
        e_z2,
        e_x2,
        e_jordan,
        commutator_norm: z2.commutator_norm(&x2)?,
    })
}

/// Product state with both spins along `theta` in the z–x plane.
pub fn aligned_spin_pair(theta: f64) -> DensityOperator {
    let one = DensityOperator::pure(&pauli::spin_state(theta), TensorStructure::qubits(1)).expect("unit vector");
    one.tensor(&one)
}
