//! Classical correlated ensembles: the two-dice experiment and finite local
//! hidden-variable models, with their embedding as diagonal convex sums.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hilbert::{ComplexMatrix, DensityOperator, TensorStructure};
use crate::inequalities::ChshReport;
use crate::rng::StreamRng;
use crate::states::{ConvexSumState, ConvexTerm, StateError};

pub type Rational = Ratio<i64>;

/// Uniform draws consumed per dice trial: pair type, Alice's roll, Bob's roll.
pub const DRAWS_PER_TRIAL: u64 = 3;
const CHUNK: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("probability {0} outside [0, 1]")]
    Probability(String),
    #[error("weights sum to {0}, expected 1")]
    WeightSum(String),
    #[error("weight {0} must be positive")]
    NonPositiveWeight(String),
    #[error("model needs at least one hidden value")]
    Empty,
    #[error("response tables have {found} entries, expected {expected}")]
    ResponseLength { expected: usize, found: usize },
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error(transparent)]
    State(#[from] StateError),
}

/// A die showing 1 on a fraction `success` of its faces and 0 elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiceType {
    success: Rational,
}

impl DiceType {
    pub fn new(success: Rational) -> Result<Self, ModelError> {
        if success < Rational::from_integer(0) || success > Rational::from_integer(1) {
            return Err(ModelError::Probability(success.to_string()));
        }
        Ok(Self { success })
    }

    /// 1 on three faces of six.
    pub fn d1() -> Self {
        Self {
            success: Rational::new(3, 6),
        }
    }

    /// 1 on four faces of six.
    pub fn d2() -> Self {
        Self {
            success: Rational::new(4, 6),
        }
    }

    pub fn success(&self) -> Rational {
        self.success
    }

    fn success_f64(&self) -> f64 {
        *self.success.numer() as f64 / *self.success.denom() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DicePair {
    pub weight: Rational,
    pub left: DiceType,
    pub right: DiceType,
}

/// Source that sends one pair type per trial, chosen by exact weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DicePairEnsemble {
    pairs: Vec<DicePair>,
}

impl DicePairEnsemble {
    pub fn new(pairs: Vec<DicePair>) -> Result<Self, ModelError> {
        if pairs.is_empty() {
            return Err(ModelError::Empty);
        }
        if let Some(p) = pairs.iter().find(|p| p.weight <= Rational::from_integer(0)) {
            return Err(ModelError::NonPositiveWeight(p.weight.to_string()));
        }
        let total: Rational = pairs.iter().map(|p| p.weight).sum();
        if total != Rational::from_integer(1) {
            return Err(ModelError::WeightSum(total.to_string()));
        }
        Ok(Self { pairs })
    }

    /// (D1, D1) with weight 1/4 and (D2, D2) with weight 3/4.
    pub fn two_dice() -> Self {
        Self {
            pairs: vec![
                DicePair {
                    weight: Rational::new(1, 4),
                    left: DiceType::d1(),
                    right: DiceType::d1(),
                },
                DicePair {
                    weight: Rational::new(3, 4),
                    left: DiceType::d2(),
                    right: DiceType::d2(),
                },
            ],
        }
    }

    pub fn pairs(&self) -> &[DicePair] {
        &self.pairs
    }

    /// Hidden variable = pair type.
    pub fn to_lhv(&self) -> FiniteLhvModel {
        FiniteLhvModel {
            weights: self.pairs.iter().map(|p| ratio_f64(p.weight)).collect(),
            response_a: self.pairs.iter().map(|p| p.left.success_f64()).collect(),
            response_b: self.pairs.iter().map(|p| p.right.success_f64()).collect(),
        }
    }
}

fn ratio_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactMoments {
    pub e_a: Rational,
    pub e_b: Rational,
    pub e_ab: Rational,
    pub cov: Rational,
}

pub fn analytic_moments(e: &DicePairEnsemble) -> ExactMoments {
    let zero = Rational::from_integer(0);
    let (mut e_a, mut e_b, mut e_ab) = (zero, zero, zero);
    for p in &e.pairs {
        e_a += p.weight * p.left.success;
        e_b += p.weight * p.right.success;
        e_ab += p.weight * p.left.success * p.right.success;
    }
    ExactMoments {
        e_a,
        e_b,
        e_ab,
        cov: e_ab - e_a * e_b,
    }
}

struct TrialSampler {
    cumulative: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl TrialSampler {
    fn new(e: &DicePairEnsemble) -> Self {
        let weights: Vec<f64> = e.pairs.iter().map(|p| ratio_f64(p.weight)).collect();
        Self {
            cumulative: crate::rng::cumulative(&weights),
            left: e.pairs.iter().map(|p| p.left.success_f64()).collect(),
            right: e.pairs.iter().map(|p| p.right.success_f64()).collect(),
        }
    }

    #[inline]
    fn trial(&self, rng: &mut StreamRng) -> (u8, u8) {
        let k = crate::rng::sample_index(&self.cumulative, rng.uniform());
        let a = u8::from(rng.uniform() < self.left[k]);
        let b = u8::from(rng.uniform() < self.right[k]);
        (a, b)
    }
}

/// `n` paired outcomes from stream 0 of `seed`.
pub fn sample(e: &DicePairEnsemble, n: usize, seed: u64) -> Result<Vec<(u8, u8)>, ModelError> {
    sample_stream(e, n, seed, 0)
}

/// `n` paired outcomes from an arbitrary stream; trial `t` uses draws
/// `3t .. 3t + 3`, so the output is independent of the chunking.
pub fn sample_stream(e: &DicePairEnsemble, n: usize, seed: u64, stream: u64) -> Result<Vec<(u8, u8)>, ModelError> {
    if n == 0 {
        return Err(ModelError::NoTrials);
    }
    let sampler = TrialSampler::new(e);
    let chunks: Vec<Vec<(u8, u8)>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut rng = StreamRng::at(seed, stream, start as u64 * DRAWS_PER_TRIAL);
            (start..end).map(|_| sampler.trial(&mut rng)).collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Sample moments with naive standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleMoments {
    pub trials: u64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_ab: f64,
    pub cov: f64,
    pub sem_a: f64,
    pub sem_b: f64,
    pub sem_ab: f64,
    /// Standard error of the plug-in covariance, from its influence function.
    pub sem_cov: f64,
}

impl SampleMoments {
    pub fn from_pairs(pairs: &[(u8, u8)]) -> Self {
        let (mut na, mut nb, mut nab) = (0u64, 0u64, 0u64);
        for &(a, b) in pairs {
            na += u64::from(a);
            nb += u64::from(b);
            nab += u64::from(a & b);
        }
        Self::from_counts(pairs.len() as u64, na, nb, nab)
    }

    fn from_counts(n: u64, na: u64, nb: u64, nab: u64) -> Self {
        let nf = n as f64;
        let (ma, mb, mab) = (na as f64 / nf, nb as f64 / nf, nab as f64 / nf);
        let bern_sem = |p: f64| (p * (1.0 - p) / nf).sqrt();
        // Var of (A − ā)(B − b̄) for binary A, B from the joint cell probabilities.
        let p11 = mab;
        let p10 = ma - mab;
        let p01 = mb - mab;
        let p00 = 1.0 - ma - mb + mab;
        let cov = mab - ma * mb;
        let cell = |a: f64, b: f64| (a - ma) * (b - mb) - cov;
        let var_cov = p11 * cell(1.0, 1.0).powi(2)
            + p10 * cell(1.0, 0.0).powi(2)
            + p01 * cell(0.0, 1.0).powi(2)
            + p00 * cell(0.0, 0.0).powi(2);
        Self {
            trials: n,
            mean_a: ma,
            mean_b: mb,
            mean_ab: mab,
            cov,
            sem_a: bern_sem(ma),
            sem_b: bern_sem(mb),
            sem_ab: bern_sem(mab),
            sem_cov: (var_cov / nf).sqrt(),
        }
    }
}

/// Moments of `n` trials without materializing the outcome sequence.
pub fn sample_moments(e: &DicePairEnsemble, n: usize, seed: u64, stream: u64) -> Result<SampleMoments, ModelError> {
    if n == 0 {
        return Err(ModelError::NoTrials);
    }
    let sampler = TrialSampler::new(e);
    let (na, nb, nab) = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut rng = StreamRng::at(seed, stream, start as u64 * DRAWS_PER_TRIAL);
            let mut counts = (0u64, 0u64, 0u64);
            for _ in start..end {
                let (a, b) = sampler.trial(&mut rng);
                counts.0 += u64::from(a);
                counts.1 += u64::from(b);
                counts.2 += u64::from(a & b);
            }
            counts
        })
        .reduce(|| (0, 0, 0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2));
    Ok(SampleMoments::from_counts(n as u64, na, nb, nab))
}

/// Finite hidden variable λ with independent local Bernoulli responses.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteLhvModel {
    weights: Vec<f64>,
    response_a: Vec<f64>,
    response_b: Vec<f64>,
}

/// E(A), E(B), E(AB) of a model, outcomes in {0, 1}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LhvMoments {
    pub e_a: f64,
    pub e_b: f64,
    pub e_ab: f64,
    pub cov: f64,
}

impl FiniteLhvModel {
    pub fn new(weights: Vec<f64>, response_a: Vec<f64>, response_b: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::Empty);
        }
        for r in [&response_a, &response_b] {
            if r.len() != weights.len() {
                return Err(ModelError::ResponseLength {
                    expected: weights.len(),
                    found: r.len(),
                });
            }
        }
        let all = weights.iter().chain(&response_a).chain(&response_b);
        if let Some(p) = all.into_iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ModelError::Probability(p.to_string()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ModelError::WeightSum(total.to_string()));
        }
        Ok(Self {
            weights,
            response_a,
            response_b,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn moments(&self) -> LhvMoments {
        let mut m = LhvMoments {
            e_a: 0.0,
            e_b: 0.0,
            e_ab: 0.0,
            cov: 0.0,
        };
        for ((w, pa), pb) in self.weights.iter().zip(&self.response_a).zip(&self.response_b) {
            m.e_a += w * pa;
            m.e_b += w * pb;
            m.e_ab += w * pa * pb;
        }
        m.cov = m.e_ab - m.e_a * m.e_b;
        m
    }

    /// E of the product of ±1-valued outcomes (0 ↦ −1, 1 ↦ +1).
    pub fn signed_correlation(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.response_a)
            .zip(&self.response_b)
            .map(|((w, pa), pb)| w * (2.0 * pa - 1.0) * (2.0 * pb - 1.0))
            .sum()
    }
}

fn bernoulli_density(p: f64) -> DensityOperator {
    DensityOperator::new(ComplexMatrix::diagonal(&[1.0 - p, p]), TensorStructure::qubits(1))
        .expect("diag(1-p, p) is a qubit state for p in [0,1]")
}

/// Each λ becomes the term w(λ)·diag(1−p_a, p_a) ⊗ diag(1−p_b, p_b).
///
/// Zero-weight hidden values are dropped.
pub fn lhv_to_convex_sum(m: &FiniteLhvModel) -> Result<ConvexSumState, ModelError> {
    let terms: Vec<ConvexTerm> = m
        .weights
        .iter()
        .zip(&m.response_a)
        .zip(&m.response_b)
        .filter(|((w, _), _)| **w > 0.0)
        .map(|((&weight, &pa), &pb)| ConvexTerm {
            weight,
            left: bernoulli_density(pa),
            right: bernoulli_density(pb),
        })
        .collect();
    Ok(ConvexSumState::new(terms)?)
}

/// Two settings per side over one hidden variable; `alice[i][λ]` is the
/// probability of outcome 1 for setting i.
#[derive(Clone, Debug)]
pub struct LhvChshModel {
    pub weights: Vec<f64>,
    pub alice: [Vec<f64>; 2],
    pub bob: [Vec<f64>; 2],
}

impl LhvChshModel {
    pub fn pair(&self, a: usize, b: usize) -> Result<FiniteLhvModel, ModelError> {
        FiniteLhvModel::new(self.weights.clone(), self.alice[a].clone(), self.bob[b].clone())
    }

    /// CHSH with settings (A, A′) = (0, 1) and (B, B′) = (0, 1), outcomes mapped to ±1.
    pub fn chsh(&self) -> Result<ChshReport, ModelError> {
        let e = |a, b| -> Result<f64, ModelError> { Ok(self.pair(a, b)?.signed_correlation()) };
        Ok(ChshReport::from_correlations(e(0, 0)?, e(0, 1)?, e(1, 0)?, e(1, 1)?))
    }
}
