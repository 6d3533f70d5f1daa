//! Small-dimension complex linear algebra for bipartite quantum states.
//!
//! Operators are dense [`ComplexMatrix`] values. [`HermitianOperator`] and
//! [`DensityOperator`] are validated wrappers; a density operator also
//! carries the [`TensorStructure`] it lives on, which is what
//! [`lift_local`] and [`partial_transpose`] need to address a subsystem.

mod eigen;
mod matrix;

pub use eigen::{eigen_hermitian, EigenDecomposition};
pub use matrix::ComplexMatrix;

use num_complex::Complex64;
use thiserror::Error;

/// Levels kept when a position operator is truncated to finite dimension.
pub const DEFAULT_POSITION_LEVELS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("expected {expected} entries, found {found}")]
    EntryCount { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("trace is {trace}, expected 1")]
    InvalidTrace { trace: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("tensor factor dimensions must each be at least 2, got {0:?}")]
    InvalidStructure(Vec<usize>),
    #[error("site {site} out of range for {factors} tensor factors")]
    SiteOutOfRange { site: usize, factors: usize },
    #[error("operation requires a bipartite structure, got {factors} factors")]
    NotBipartite { factors: usize },
    #[error("observables do not commute (commutator norm {norm:e})")]
    NotCommuting { norm: f64 },
    #[error("expectation has imaginary part {imag:e}")]
    ComplexExpectation { imag: f64 },
    #[error("bilinear covariance identity violated (residual {residual:e})")]
    IdentityViolated { residual: f64 },
    #[error("state vector has zero norm")]
    ZeroVector,
}

/// Numerical thresholds used by validation and contract checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub hermiticity: f64,
    pub trace: f64,
    pub psd: f64,
    pub commutation: f64,
    pub imaginary: f64,
    pub bilinear_identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-12,
            trace: 1e-12,
            psd: 1e-10,
            commutation: 1e-10,
            imaginary: 1e-10,
            bilinear_identity: 1e-10,
        }
    }
}

/// Ordered factor dimensions of H₁ ⊗ H₂ ⊗ ….
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TensorStructure {
    factor_dims: Vec<usize>,
}

impl TensorStructure {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self, HilbertError> {
        if factor_dims.is_empty() || factor_dims.iter().any(|&d| d < 2) {
            return Err(HilbertError::InvalidStructure(factor_dims));
        }
        Ok(Self { factor_dims })
    }

    pub fn qubits(count: usize) -> Self {
        Self {
            factor_dims: vec![2; count.max(1)],
        }
    }

    pub fn bipartite(left: usize, right: usize) -> Result<Self, HilbertError> {
        Self::new(vec![left, right])
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn factors(&self) -> usize {
        self.factor_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut factor_dims = self.factor_dims.clone();
        factor_dims.extend_from_slice(&other.factor_dims);
        Self { factor_dims }
    }

    fn bipartite_dims(&self) -> Result<(usize, usize), HilbertError> {
        match self.factor_dims.as_slice() {
            &[a, b] => Ok((a, b)),
            dims => Err(HilbertError::NotBipartite { factors: dims.len() }),
        }
    }
}

/// Square matrix equal to its adjoint within `hermiticity` tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self, HilbertError> {
        Self::with_tolerance(matrix, Tolerances::default().hermiticity)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self, HilbertError> {
        if !matrix.is_square() {
            return Err(HilbertError::NotSquare {
                rows: matrix.rows(),
                cols: matrix.cols(),
            });
        }
        let deviation = matrix.hermiticity_defect();
        if deviation > tol {
            return Err(HilbertError::NotHermitian { deviation });
        }
        Ok(Self { matrix })
    }

    /// Real linear combinations of Hermitian operators stay Hermitian.
    pub fn linear_combination(terms: &[(f64, &HermitianOperator)]) -> Result<Self, HilbertError> {
        let first = terms.first().ok_or(HilbertError::EmptyMatrix)?.1;
        let dim = first.dim();
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for (coeff, op) in terms {
            check_dim(dim, op.dim())?;
            acc = &acc + &op.matrix.scale(*coeff);
        }
        Ok(Self { matrix: acc })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Jordan product ½(AB + BA), Hermitian for any Hermitian pair.
    pub fn jordan_product(&self, other: &Self) -> Result<Self, HilbertError> {
        check_dim(self.dim(), other.dim())?;
        let ab = self.matrix.matmul(&other.matrix);
        let ba = other.matrix.matmul(&self.matrix);
        Ok(Self {
            matrix: (&ab + &ba).scale(0.5),
        })
    }

    pub fn commutator_norm(&self, other: &Self) -> Result<f64, HilbertError> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.matrix.commutator_norm(&other.matrix))
    }
}

/// Positive semidefinite, unit-trace Hermitian matrix on a tensor structure.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
    structure: TensorStructure,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix, structure: TensorStructure) -> Result<Self, HilbertError> {
        Self::with_tolerances(matrix, structure, &Tolerances::default())
    }

    pub fn with_tolerances(
        matrix: ComplexMatrix,
        structure: TensorStructure,
        tol: &Tolerances,
    ) -> Result<Self, HilbertError> {
        let herm = HermitianOperator::with_tolerance(matrix, tol.hermiticity)?;
        check_dim(structure.total_dim(), herm.dim())?;
        let trace = herm.matrix().trace().re;
        if (trace - 1.0).abs() > tol.trace {
            return Err(HilbertError::InvalidTrace { trace });
        }
        let min_eigenvalue = eigen_hermitian(&herm).min_value();
        if min_eigenvalue < -tol.psd {
            return Err(HilbertError::NotPositive { min_eigenvalue });
        }
        Ok(Self {
            matrix: herm.into_matrix(),
            structure,
        })
    }

    /// Skips validation; callers guarantee positivity and unit trace by construction.
    pub(crate) fn from_parts_unchecked(matrix: ComplexMatrix, structure: TensorStructure) -> Self {
        debug_assert_eq!(matrix.rows(), structure.total_dim());
        Self { matrix, structure }
    }

    /// |ψ⟩⟨ψ| for the normalized `psi`.
    pub fn pure(psi: &[Complex64], structure: TensorStructure) -> Result<Self, HilbertError> {
        check_dim(structure.total_dim(), psi.len())?;
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(HilbertError::ZeroVector);
        }
        let unit: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
        Ok(Self::from_parts_unchecked(ComplexMatrix::outer(&unit), structure))
    }

    pub fn maximally_mixed(structure: TensorStructure) -> Self {
        let d = structure.total_dim();
        Self::from_parts_unchecked(ComplexMatrix::identity(d).scale(1.0 / d as f64), structure)
    }

    /// `self ⊗ other`, with factor lists concatenated.
    pub fn tensor(&self, other: &Self) -> Self {
        Self::from_parts_unchecked(
            self.matrix.kron(&other.matrix),
            self.structure.concat(&other.structure),
        )
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn structure(&self) -> &TensorStructure {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_of_product(&self.matrix).re
    }

    pub fn as_hermitian(&self) -> HermitianOperator {
        HermitianOperator {
            matrix: self.matrix.clone(),
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<(), HilbertError> {
    if expected != found {
        return Err(HilbertError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Pauli matrices and spin-½ helpers.
pub mod pauli {
    use super::{ComplexMatrix, HermitianOperator};
    use num_complex::Complex64;

    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn sigma_y() -> ComplexMatrix {
        let i = Complex64::new(0.0, 1.0);
        let z = Complex64::new(0.0, 0.0);
        ComplexMatrix::new(2, 2, vec![z, -i, i, z]).unwrap()
    }

    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::diagonal(&[1.0, -1.0])
    }

    pub fn x() -> HermitianOperator {
        HermitianOperator { matrix: sigma_x() }
    }

    pub fn y() -> HermitianOperator {
        HermitianOperator { matrix: sigma_y() }
    }

    pub fn z() -> HermitianOperator {
        HermitianOperator { matrix: sigma_z() }
    }

    /// Spin-up along `theta` in the z–x plane: cos(θ/2)|↑⟩ + sin(θ/2)|↓⟩.
    pub fn spin_state(theta: f64) -> [Complex64; 2] {
        [
            Complex64::new((theta / 2.0).cos(), 0.0),
            Complex64::new((theta / 2.0).sin(), 0.0),
        ]
    }
}

/// Diagonal position operator on a `levels`-point grid centred at zero.
pub fn truncated_position(levels: usize) -> HermitianOperator {
    let centre = (levels as f64 - 1.0) / 2.0;
    let grid: Vec<f64> = (0..levels).map(|j| j as f64 - centre).collect();
    HermitianOperator {
        matrix: ComplexMatrix::diagonal(&grid),
    }
}

pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

/// Embed a single-factor observable at `site`, identities elsewhere.
pub fn lift_local(
    obs: &HermitianOperator,
    site: usize,
    structure: &TensorStructure,
) -> Result<HermitianOperator, HilbertError> {
    let dims = structure.factor_dims();
    if site >= dims.len() {
        return Err(HilbertError::SiteOutOfRange {
            site,
            factors: dims.len(),
        });
    }
    check_dim(dims[site], obs.dim())?;
    let mut acc: Option<ComplexMatrix> = None;
    for (k, &d) in dims.iter().enumerate() {
        let factor = if k == site {
            obs.matrix.clone()
        } else {
            ComplexMatrix::identity(d)
        };
        acc = Some(match acc {
            None => factor,
            Some(m) => m.kron(&factor),
        });
    }
    Ok(HermitianOperator {
        matrix: acc.expect("structure has at least one factor"),
    })
}

/// E(A|ρ) = Tr ρA.
pub fn expectation(rho: &DensityOperator, obs: &HermitianOperator) -> Result<f64, HilbertError> {
    expectation_with(rho, obs, &Tolerances::default())
}

pub fn expectation_with(
    rho: &DensityOperator,
    obs: &HermitianOperator,
    tol: &Tolerances,
) -> Result<f64, HilbertError> {
    check_dim(rho.dim(), obs.dim())?;
    let value = rho.matrix.trace_of_product(&obs.matrix);
    if value.im.abs() > tol.imaginary {
        return Err(HilbertError::ComplexExpectation { imag: value.im });
    }
    Ok(value.re)
}

/// cov(A, B|ρ) = E(AB|ρ) − E(A|ρ)E(B|ρ) for a commuting pair.
pub fn conditional_covariance(
    rho: &DensityOperator,
    a: &HermitianOperator,
    b: &HermitianOperator,
) -> Result<f64, HilbertError> {
    conditional_covariance_with(rho, a, b, &Tolerances::default())
}

pub fn conditional_covariance_with(
    rho: &DensityOperator,
    a: &HermitianOperator,
    b: &HermitianOperator,
    tol: &Tolerances,
) -> Result<f64, HilbertError> {
    check_dim(rho.dim(), a.dim())?;
    check_dim(rho.dim(), b.dim())?;
    let ab = a.matrix.matmul(&b.matrix);
    let ba = b.matrix.matmul(&a.matrix);
    let norm = ab.max_abs_diff(&ba);
    if norm > tol.commutation {
        return Err(HilbertError::NotCommuting { norm });
    }
    // For commuting A, B the product is Hermitian up to round-off.
    let product = HermitianOperator {
        matrix: (&ab + &ba).scale(0.5),
    };
    let e_ab = expectation_with(rho, &product, tol)?;
    let e_a = expectation_with(rho, a, tol)?;
    let e_b = expectation_with(rho, b, tol)?;
    Ok(e_ab - e_a * e_b)
}

pub fn variance(rho: &DensityOperator, a: &HermitianOperator) -> Result<f64, HilbertError> {
    conditional_covariance(rho, a, a)
}

/// Coefficients of cov(kA + nB, mA + lB).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearCoefficients {
    pub k: f64,
    pub n: f64,
    pub m: f64,
    pub l: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearCovariance {
    /// cov(kA + nB, mA + lB|ρ), computed directly.
    pub covariance: f64,
    pub var_a: f64,
    pub var_b: f64,
    /// k·m·var(A) + n·l·var(B)
    pub predicted: f64,
    pub residual: f64,
}

/// Covariance of two linear combinations of lifted local observables.
///
/// For a product state and local `a`, `b` on distinct sites the result
/// equals `k·m·var(A) + n·l·var(B)`; a residual above tolerance is reported
/// as [`HilbertError::IdentityViolated`].
pub fn covariance_bilinear(
    rho: &DensityOperator,
    coeffs: BilinearCoefficients,
    a: &HermitianOperator,
    b: &HermitianOperator,
) -> Result<BilinearCovariance, HilbertError> {
    let tol = Tolerances::default();
    let BilinearCoefficients { k, n, m, l } = coeffs;
    let f = HermitianOperator::linear_combination(&[(k, a), (n, b)])?;
    let g = HermitianOperator::linear_combination(&[(m, a), (l, b)])?;
    let covariance = conditional_covariance_with(rho, &f, &g, &tol)?;
    let var_a = variance(rho, a)?;
    let var_b = variance(rho, b)?;
    let predicted = k * m * var_a + n * l * var_b;
    let residual = (covariance - predicted).abs();
    if residual > tol.bilinear_identity {
        return Err(HilbertError::IdentityViolated { residual });
    }
    Ok(BilinearCovariance {
        covariance,
        var_a,
        var_b,
        predicted,
        residual,
    })
}

/// Transpose the indices of one factor of a bipartite matrix.
pub fn partial_transpose_matrix(
    m: &ComplexMatrix,
    structure: &TensorStructure,
    site: usize,
) -> Result<ComplexMatrix, HilbertError> {
    let (d0, d1) = structure.bipartite_dims()?;
    if site > 1 {
        return Err(HilbertError::SiteOutOfRange { site, factors: 2 });
    }
    check_dim(d0 * d1, m.rows())?;
    check_dim(d0 * d1, m.cols())?;
    Ok(ComplexMatrix::from_fn(d0 * d1, d0 * d1, |row, col| {
        let (i0, i1) = (row / d1, row % d1);
        let (j0, j1) = (col / d1, col % d1);
        let (src_row, src_col) = if site == 0 {
            (j0 * d1 + i1, i0 * d1 + j1)
        } else {
            (i0 * d1 + j1, j0 * d1 + i1)
        };
        m[(src_row, src_col)]
    }))
}

pub fn partial_transpose(rho: &DensityOperator, site: usize) -> Result<HermitianOperator, HilbertError> {
    Ok(HermitianOperator {
        matrix: partial_transpose_matrix(&rho.matrix, &rho.structure, site)?,
    })
}
