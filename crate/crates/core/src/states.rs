//! Product states, convex sums of product states, and reference entangled states.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{
    eigen_hermitian, expectation, partial_transpose, ComplexMatrix, DensityOperator, HermitianOperator,
    HilbertError, TensorStructure,
};

/// Weight-sum tolerance for convex combinations.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("convex sum needs at least one term")]
    Empty,
    #[error("weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("weight {weight} of term {index} outside (0, 1)")]
    WeightRange { index: usize, weight: f64 },
    #[error("term {index} has {side} factor of dimension {found}, expected {expected}")]
    InconsistentFactors {
        index: usize,
        side: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("factor {index} must be a single-system state")]
    CompositeFactor { index: usize },
    #[error("Werner weight {0} outside [0, 1]")]
    WernerWeight(f64),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// ρ₁ ⊗ ρ₂ ⊗ … of single-system states.
#[derive(Clone, Debug)]
pub struct ProductState {
    factors: Vec<DensityOperator>,
}

impl ProductState {
    pub fn new(factors: Vec<DensityOperator>) -> Result<Self, StateError> {
        if factors.is_empty() {
            return Err(StateError::Empty);
        }
        if let Some(index) = factors.iter().position(|f| f.structure().factors() != 1) {
            return Err(StateError::CompositeFactor { index });
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[DensityOperator] {
        &self.factors
    }

    pub fn to_density(&self) -> DensityOperator {
        let mut iter = self.factors.iter();
        let first = iter.next().expect("non-empty by construction").clone();
        iter.fold(first, |acc, f| acc.tensor(f))
    }
}

#[derive(Clone, Debug)]
pub struct ConvexTerm {
    pub weight: f64,
    pub left: DensityOperator,
    pub right: DensityOperator,
}

/// Σ pᵢ ρᵢ ⊗ ρ̃ᵢ with 0 < pᵢ < 1 (a single term may carry weight 1).
#[derive(Clone, Debug)]
pub struct ConvexSumState {
    terms: Vec<ConvexTerm>,
}

impl ConvexSumState {
    pub fn new(terms: Vec<ConvexTerm>) -> Result<Self, StateError> {
        let first = terms.first().ok_or(StateError::Empty)?;
        let (dl, dr) = (first.left.dim(), first.right.dim());
        for (index, t) in terms.iter().enumerate() {
            if t.left.structure().factors() != 1 || t.right.structure().factors() != 1 {
                return Err(StateError::CompositeFactor { index });
            }
            if t.left.dim() != dl {
                return Err(StateError::InconsistentFactors {
                    index,
                    side: "left",
                    expected: dl,
                    found: t.left.dim(),
                });
            }
            if t.right.dim() != dr {
                return Err(StateError::InconsistentFactors {
                    index,
                    side: "right",
                    expected: dr,
                    found: t.right.dim(),
                });
            }
            let in_range = if terms.len() == 1 {
                t.weight > 0.0 && t.weight <= 1.0 + WEIGHT_TOL
            } else {
                t.weight > 0.0 && t.weight < 1.0
            };
            if !in_range {
                return Err(StateError::WeightRange { index, weight: t.weight });
            }
        }
        let sum: f64 = terms.iter().map(|t| t.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(StateError::WeightSum { sum });
        }
        Ok(Self { terms })
    }

    pub fn product(left: DensityOperator, right: DensityOperator) -> Result<Self, StateError> {
        Self::new(vec![ConvexTerm {
            weight: 1.0,
            left,
            right,
        }])
    }

    pub fn terms(&self) -> &[ConvexTerm] {
        &self.terms
    }

    pub fn structure(&self) -> TensorStructure {
        let t = &self.terms[0];
        t.left.structure().concat(t.right.structure())
    }

    /// Σ pᵢ E(A|ρᵢ) E(B|ρ̃ᵢ) for single-site observables `a` (left) and `b` (right).
    pub fn product_expectation(&self, a: &HermitianOperator, b: &HermitianOperator) -> Result<f64, StateError> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.weight * expectation(&t.left, a)? * expectation(&t.right, b)?;
        }
        Ok(acc)
    }
}

/// Σ pᵢ (ρᵢ ⊗ ρ̃ᵢ) as a bipartite density operator.
pub fn to_density(s: &ConvexSumState) -> DensityOperator {
    let structure = s.structure();
    let d = structure.total_dim();
    let matrix = s.terms.iter().fold(ComplexMatrix::zeros(d, d), |acc, t| {
        &acc + &t.left.matrix().kron(t.right.matrix()).scale(t.weight)
    });
    DensityOperator::from_parts_unchecked(matrix, structure)
}

fn singlet_matrix() -> ComplexMatrix {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let z = Complex64::new(0.0, 0.0);
    ComplexMatrix::outer(&[z, h, -h, z])
}

/// Projector onto (|↑↓⟩ − |↓↑⟩)/√2.
pub fn singlet() -> DensityOperator {
    DensityOperator::from_parts_unchecked(singlet_matrix(), TensorStructure::qubits(2))
}

/// w·singlet + (1 − w)·I/4.
pub fn werner(w: f64) -> Result<DensityOperator, StateError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(StateError::WernerWeight(w));
    }
    let noise = ComplexMatrix::identity(4).scale((1.0 - w) / 4.0);
    let matrix = &singlet_matrix().scale(w) + &noise;
    Ok(DensityOperator::from_parts_unchecked(matrix, TensorStructure::qubits(2)))
}

/// Sum of |negative eigenvalues| of the partial transpose on the second factor.
pub fn negativity(rho: &DensityOperator) -> Result<f64, StateError> {
    let pt = partial_transpose(rho, 1)?;
    Ok(eigen_hermitian(&pt)
        .values
        .iter()
        .filter(|&&v| v < 0.0)
        .fold(0.0, |acc, v| acc - v))
}

/// Random states for property checks: normalized complex Gaussian vectors
/// for pure states, random convex weights for mixtures.
pub mod random {
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    pub fn pure_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityOperator {
        let psi: Vec<Complex64> = (0..dim).map(|_| gaussian_complex(rng)).collect();
        let structure = TensorStructure::new(vec![dim]).expect("dim >= 2");
        DensityOperator::pure(&psi, structure).expect("Gaussian vector is nonzero almost surely")
    }

    /// Positive weights summing to 1, from normalized exponential draws.
    pub fn convex_weights<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..count).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let head: f64 = w[..count - 1].iter().sum();
        w[count - 1] = 1.0 - head;
        w
    }

    /// Mixture of up to three random pure states.
    pub fn mixed_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityOperator {
        let count = rng.random_range(1..=3);
        let weights = convex_weights(rng, count);
        let matrix = weights.iter().fold(ComplexMatrix::zeros(dim, dim), |acc, &w| {
            &acc + &pure_state(rng, dim).matrix().scale(w)
        });
        DensityOperator::from_parts_unchecked(matrix, TensorStructure::new(vec![dim]).expect("dim >= 2"))
    }

    pub fn convex_sum<R: Rng + ?Sized>(rng: &mut R, max_terms: usize) -> ConvexSumState {
        let count = rng.random_range(1..=max_terms.max(1));
        let weights = convex_weights(rng, count);
        let terms = weights
            .into_iter()
            .map(|weight| ConvexTerm {
                weight,
                left: mixed_state(rng, 2),
                right: mixed_state(rng, 2),
            })
            .collect();
        ConvexSumState::new(terms).expect("random weights are valid")
    }

    pub fn product_state<R: Rng + ?Sized>(rng: &mut R, left_dim: usize, right_dim: usize) -> DensityOperator {
        mixed_state(rng, left_dim).tensor(&mixed_state(rng, right_dim))
    }

    /// G·G†/Tr(G·G†) for a complex Gaussian G.
    pub fn density<R: Rng + ?Sized>(rng: &mut R, structure: TensorStructure) -> DensityOperator {
        let d = structure.total_dim();
        let g = ComplexMatrix::from_fn(d, d, |_, _| gaussian_complex(rng));
        let ggd = g.matmul(&g.adjoint());
        let tr = ggd.trace().re;
        DensityOperator::from_parts_unchecked(ggd.scale(1.0 / tr), structure)
    }

    pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianOperator {
        let g = ComplexMatrix::from_fn(dim, dim, |_, _| gaussian_complex(rng));
        HermitianOperator::new((&g + &g.adjoint()).scale(0.5)).expect("symmetrized matrix is Hermitian")
    }
}
