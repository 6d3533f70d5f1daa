//! Block-sampled random experiments and the naive significance test.
//!
//! A signal value m is drawn from p1 and a device value n from p2, and the
//! trial records A(m, n). The (N1, N2) protocols either redraw both for every
//! trial or hold one of them fixed across a block of N2 trials. Holding m fixed
//! makes the pooled sample non-homogeneous, and a test that treats it as a
//! simple random sample then reports absurd z-scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{cumulative, sample_index, StreamRng};
use crate::stat_tests::special::{normal_sf, normal_two_sided};

pub const PROBABILITY_TOL: f64 = 1e-12;
/// Every outcome slot consumes this many draws: one for m, one for n.
pub const DRAWS_PER_OUTCOME: u64 = 2;
pub const H0_ALPHAS: [f64; 3] = [0.05, 0.01, 0.001];
pub const MIN_DESIGN_EFFECT_RUNS: usize = 30;
pub const LOOPHOLE_SIGNAL_LEVELS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("{which} has no entries")]
    EmptyDistribution { which: &'static str },
    #[error("{which} sums to {sum}, expected 1")]
    ProbabilitySum { which: &'static str, sum: f64 },
    #[error("{which} has invalid probability {value}")]
    Probability { which: &'static str, value: f64 },
    #[error("outcome table is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    TableShape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("outcome table has a non-finite entry")]
    NonFiniteOutcome,
    #[error("block protocols need N2 > 1, got {0}")]
    BlockLength(usize),
    #[error("protocol needs N1 >= 1 and N2 >= 1")]
    EmptyProtocol,
    #[error("sample has no outcomes")]
    EmptySample,
    #[error("sample has zero spread, the naive standard error is 0")]
    ZeroSem,
    #[error("need at least {needed} runs, got {found}")]
    TooFewRuns { needed: usize, found: usize },
    #[error("runs come from different protocols")]
    MixedProtocols,
    #[error("runs have no sampling spread, design effect undefined")]
    DegenerateRuns,
}

/// p1(m), p2(n) and the outcome table A(m, n).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    p1: Vec<f64>,
    p2: Vec<f64>,
    outcome: Vec<Vec<f64>>,
}

fn check_distribution(p: &[f64], which: &'static str) -> Result<(), ProtocolError> {
    if p.is_empty() {
        return Err(ProtocolError::EmptyDistribution { which });
    }
    if let Some(&value) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(ProtocolError::Probability { which, value });
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOL {
        return Err(ProtocolError::ProbabilitySum { which, sum });
    }
    Ok(())
}

impl SignalModel {
    pub fn new(p1: Vec<f64>, p2: Vec<f64>, outcome: Vec<Vec<f64>>) -> Result<Self, ProtocolError> {
        check_distribution(&p1, "p1")?;
        check_distribution(&p2, "p2")?;
        let cols = outcome.first().map_or(0, Vec::len);
        if outcome.len() != p1.len() || outcome.iter().any(|r| r.len() != p2.len()) {
            return Err(ProtocolError::TableShape {
                rows: outcome.len(),
                cols,
                expected_rows: p1.len(),
                expected_cols: p2.len(),
            });
        }
        if outcome.iter().flatten().any(|a| !a.is_finite()) {
            return Err(ProtocolError::NonFiniteOutcome);
        }
        Ok(Self { p1, p2, outcome })
    }

    /// m in 0..10 with p1 ∝ 2^-m, n Bernoulli(1/2), A(m, n) = (m + 1)·n.
    pub fn loophole_default() -> Self {
        let raw: Vec<f64> = (0..LOOPHOLE_SIGNAL_LEVELS).map(|m| 0.5f64.powi(m as i32)).collect();
        let total: f64 = raw.iter().sum();
        let p1 = raw.iter().map(|w| w / total).collect();
        let outcome = (0..LOOPHOLE_SIGNAL_LEVELS)
            .map(|m| vec![0.0, (m + 1) as f64])
            .collect();
        Self::new(p1, vec![0.5, 0.5], outcome).expect("default model is valid")
    }

    /// Model whose every outcome is `c`.
    pub fn constant(c: f64) -> Self {
        Self::new(vec![1.0], vec![1.0], vec![vec![c]]).expect("constant model is valid")
    }

    pub fn p1(&self) -> &[f64] {
        &self.p1
    }

    pub fn p2(&self) -> &[f64] {
        &self.p2
    }

    pub fn outcome(&self, m: usize, n: usize) -> f64 {
        self.outcome[m][n]
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.outcome
    }

    fn raw_moment(&self, power: i32) -> f64 {
        let mut acc = 0.0;
        for (row, pm) in self.outcome.iter().zip(&self.p1) {
            for (a, pn) in row.iter().zip(&self.p2) {
                acc += a.powi(power) * pm * pn;
            }
        }
        acc
    }
}

/// ⟨A⟩ = Σ A(m, n) p1(m) p2(n).
pub fn theoretical_mean(model: &SignalModel) -> f64 {
    model.raw_moment(1)
}

pub fn theoretical_sd(model: &SignalModel) -> f64 {
    let mean = theoretical_mean(model);
    (model.raw_moment(2) - mean * mean).max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Iid,
    /// One m per block, fresh n for every trial.
    BlockFixedM,
    /// One n per block, fresh m for every trial.
    BlockFixedN,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub variant: Variant,
    pub n1: usize,
    pub n2: usize,
}

impl ProtocolSpec {
    pub fn new(variant: Variant, n1: usize, n2: usize) -> Result<Self, ProtocolError> {
        let spec = Self { variant, n1, n2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(ProtocolError::EmptyProtocol);
        }
        if self.variant != Variant::Iid && self.n2 < 2 {
            return Err(ProtocolError::BlockLength(self.n2));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n1 * self.n2
    }

    /// Start index of every nominal block of N2 trials.
    pub fn block_starts(&self) -> Vec<usize> {
        (0..self.n1).map(|b| b * self.n2).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSample {
    pub outcomes: Vec<f64>,
    /// Start index of each block. IID runs carry the nominal N2 grid.
    pub block_boundaries: Vec<usize>,
    pub protocol: ProtocolSpec,
    pub seed: u64,
    pub run_index: u64,
}

impl RunSample {
    pub fn mean(&self) -> f64 {
        self.outcomes.iter().sum::<f64>() / self.outcomes.len() as f64
    }

    /// Sample standard deviation / √N, as if the trials were a simple random sample.
    pub fn naive_sem(&self) -> f64 {
        let n = self.outcomes.len() as f64;
        if self.outcomes.len() < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self.outcomes.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    }
}

/// Draw one run. The run index selects the random stream, so runs are
/// independent and each can be regenerated on its own.
pub fn generate(
    model: &SignalModel,
    protocol: &ProtocolSpec,
    seed: u64,
    run_index: u64,
) -> Result<RunSample, ProtocolError> {
    protocol.validate()?;
    let c1 = cumulative(&model.p1);
    let c2 = cumulative(&model.p2);
    let mut rng = StreamRng::new(seed, run_index);
    let mut outcomes = Vec::with_capacity(protocol.total());
    let (mut block_m, mut block_n) = (0, 0);
    for i in 0..protocol.total() {
        let fresh_m = sample_index(&c1, rng.uniform());
        let fresh_n = sample_index(&c2, rng.uniform());
        if i % protocol.n2 == 0 {
            block_m = fresh_m;
            block_n = fresh_n;
        }
        let (m, n) = match protocol.variant {
            Variant::Iid => (fresh_m, fresh_n),
            Variant::BlockFixedM => (block_m, fresh_n),
            Variant::BlockFixedN => (fresh_m, block_n),
        };
        outcomes.push(model.outcome[m][n]);
    }
    Ok(RunSample {
        outcomes,
        block_boundaries: protocol.block_starts(),
        protocol: *protocol,
        seed,
        run_index,
    })
}

/// Runs `0..runs` in parallel, returned in run order.
pub fn generate_batch(
    model: &SignalModel,
    protocol: &ProtocolSpec,
    seed: u64,
    runs: usize,
) -> Result<Vec<RunSample>, ProtocolError> {
    map_runs(model, protocol, seed, runs, |s| s)
}

/// Generate each run and reduce it with `f` right away, keeping memory flat.
pub fn map_runs<T, F>(
    model: &SignalModel,
    protocol: &ProtocolSpec,
    seed: u64,
    runs: usize,
    f: F,
) -> Result<Vec<T>, ProtocolError>
where
    T: Send,
    F: Fn(RunSample) -> T + Sync,
{
    protocol.validate()?;
    (0..runs as u64)
        .into_par_iter()
        .map(|r| generate(model, protocol, seed, r).map(&f))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignificanceReport {
    pub sample_mean: f64,
    pub theoretical_mean: f64,
    /// ⟨A⟩_s / ⟨A⟩, absent when ⟨A⟩ = 0.
    pub ratio: Option<f64>,
    pub naive_sem: f64,
    pub z_score: f64,
    /// One-sided p-value against H0: ratio ≤ 1. Two-sided when ⟨A⟩ = 0.
    pub p_value: f64,
    pub h0_rejected_at: Vec<(f64, bool)>,
}

/// Naive test of H0: ⟨A⟩_s / ⟨A⟩ ≤ 1.
pub fn test_h0(sample: &RunSample, model: &SignalModel) -> Result<SignificanceReport, ProtocolError> {
    if sample.outcomes.is_empty() {
        return Err(ProtocolError::EmptySample);
    }
    let naive_sem = sample.naive_sem();
    if naive_sem == 0.0 {
        return Err(ProtocolError::ZeroSem);
    }
    let sample_mean = sample.mean();
    let mean = theoretical_mean(model);
    let z_score = (sample_mean - mean) / naive_sem;
    let (ratio, p_value) = if mean == 0.0 {
        (None, normal_two_sided(z_score))
    } else {
        // ratio > 1 means moving away from zero on the side of ⟨A⟩
        (Some(sample_mean / mean), normal_sf(z_score * mean.signum()))
    };
    Ok(SignificanceReport {
        sample_mean,
        theoretical_mean: mean,
        ratio,
        naive_sem,
        z_score,
        p_value,
        h0_rejected_at: H0_ALPHAS.iter().map(|&a| (a, p_value < a)).collect(),
    })
}

/// Variance of per-run means over the mean squared naive SEM.
pub fn design_effect(samples: &[RunSample]) -> Result<f64, ProtocolError> {
    let stats: Vec<(f64, f64)> = samples.iter().map(|s| (s.mean(), s.naive_sem())).collect();
    if let Some(first) = samples.first() {
        if samples.iter().any(|s| s.protocol != first.protocol) {
            return Err(ProtocolError::MixedProtocols);
        }
    }
    design_effect_from_stats(&stats)
}

/// Same as [`design_effect`] from (mean, naive SEM) pairs.
pub fn design_effect_from_stats(stats: &[(f64, f64)]) -> Result<f64, ProtocolError> {
    if stats.len() < MIN_DESIGN_EFFECT_RUNS {
        return Err(ProtocolError::TooFewRuns {
            needed: MIN_DESIGN_EFFECT_RUNS,
            found: stats.len(),
        });
    }
    let k = stats.len() as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / k;
    let var_means = stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (k - 1.0);
    let mean_sem2 = stats.iter().map(|s| s.1 * s.1).sum::<f64>() / k;
    if mean_sem2 == 0.0 {
        return Err(ProtocolError::DegenerateRuns);
    }
    Ok(var_means / mean_sem2)
}

/// Exact variance of one run's sample mean under the protocol.
pub fn predicted_mean_variance(model: &SignalModel, protocol: &ProtocolSpec) -> f64 {
    let sd = theoretical_sd(model);
    let n = protocol.total() as f64;
    let mean = theoretical_mean(model);
    // Between-block part: variance of the conditional mean given the fixed
    // coordinate. Within-block part: the rest, shrinking with N2.
    let conditional: Vec<(f64, f64)> = match protocol.variant {
        Variant::Iid => return sd * sd / n,
        Variant::BlockFixedM => model
            .p1
            .iter()
            .zip(&model.outcome)
            .map(|(pm, row)| (*pm, row.iter().zip(&model.p2).map(|(a, pn)| a * pn).sum()))
            .collect(),
        Variant::BlockFixedN => model
            .p2
            .iter()
            .enumerate()
            .map(|(j, pn)| (*pn, model.outcome.iter().zip(&model.p1).map(|(r, pm)| r[j] * pm).sum()))
            .collect(),
    };
    let between: f64 = conditional.iter().map(|(p, mu)| p * (mu - mean).powi(2)).sum();
    let within = sd * sd - between;
    let (n1, n2) = (protocol.n1 as f64, protocol.n2 as f64);
    (between + within / n2) / n1
}

/// Predicted design effect relative to the simple-random variance σ²/N.
pub fn predicted_design_effect(model: &SignalModel, protocol: &ProtocolSpec) -> f64 {
    let sd = theoretical_sd(model);
    predicted_mean_variance(model, protocol) / (sd * sd / protocol.total() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli_product() -> SignalModel {
        // A(m, n) = m·n on {0,1}²
        SignalModel::new(vec![0.5, 0.5], vec![0.5, 0.5], vec![vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn theoretical_moments() {
        let c = SignalModel::constant(2.5);
        assert_eq!((theoretical_mean(&c), theoretical_sd(&c)), (2.5, 0.0));
        let m = bernoulli_product();
        assert!((theoretical_mean(&m) - 0.25).abs() < 1e-15);
        assert!((theoretical_sd(&m) - 3f64.sqrt() / 4.0).abs() < 1e-15);
        let pm = SignalModel::new(vec![0.0, 1.0], vec![1.0, 0.0], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(theoretical_mean(&pm), 3.0);
        let sym = SignalModel::new(vec![0.5, 0.5], vec![1.0], vec![vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!((theoretical_mean(&sym), theoretical_sd(&sym)), (0.0, 1.0));
    }

    #[test]
    fn loophole_default_moments() {
        let m = SignalModel::loophole_default();
        // Independent sum over the ten levels.
        let z: f64 = (0..10).map(|k| 0.5f64.powi(k)).sum();
        let e_m1: f64 = (0..10).map(|k| (k + 1) as f64 * 0.5f64.powi(k) / z).sum();
        assert!((theoretical_mean(&m) - 0.5 * e_m1).abs() < 1e-14);
        assert!((m.p1().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn model_validation() {
        assert!(matches!(
            SignalModel::new(vec![0.5, 0.4], vec![1.0], vec![vec![0.0], vec![0.0]]),
            Err(ProtocolError::ProbabilitySum { which: "p1", .. })
        ));
        assert!(matches!(
            SignalModel::new(vec![1.0], vec![1.0], vec![vec![0.0, 1.0]]),
            Err(ProtocolError::TableShape { .. })
        ));
        assert!(matches!(ProtocolSpec::new(Variant::BlockFixedM, 4, 1), Err(ProtocolError::BlockLength(1))));
        assert!(ProtocolSpec::new(Variant::Iid, 4, 1).is_ok());
        assert!(matches!(ProtocolSpec::new(Variant::Iid, 0, 5), Err(ProtocolError::EmptyProtocol)));
    }

    #[test]
    fn constant_model_any_protocol() {
        let m = SignalModel::constant(7.0);
        for v in [Variant::Iid, Variant::BlockFixedM, Variant::BlockFixedN] {
            let s = generate(&m, &ProtocolSpec::new(v, 3, 5).unwrap(), 1, 0).unwrap();
            assert!(s.outcomes.iter().all(|&x| x == 7.0));
            assert_eq!(s.outcomes.len(), 15);
            assert!(matches!(test_h0(&s, &m), Err(ProtocolError::ZeroSem)));
        }
    }

    #[test]
    fn point_mass_device_gives_constant_blocks() {
        let m = SignalModel::new(
            vec![0.25; 4],
            vec![0.0, 1.0],
            (0..4).map(|i| vec![-1.0, i as f64]).collect(),
        )
        .unwrap();
        let p = ProtocolSpec::new(Variant::BlockFixedM, 20, 5).unwrap();
        let s = generate(&m, &p, 3, 0).unwrap();
        for block in s.outcomes.chunks(5) {
            assert!(block.iter().all(|&x| x == block[0]));
        }
        assert_eq!(s.block_boundaries, (0..20).map(|b| b * 5).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_run_indexed() {
        let m = SignalModel::loophole_default();
        let p = ProtocolSpec::new(Variant::BlockFixedN, 4, 50).unwrap();
        assert_eq!(generate(&m, &p, 9, 2).unwrap(), generate(&m, &p, 9, 2).unwrap());
        assert_ne!(generate(&m, &p, 9, 2).unwrap().outcomes, generate(&m, &p, 9, 3).unwrap().outcomes);
        let batch = generate_batch(&m, &p, 9, 5).unwrap();
        assert_eq!(batch[3], generate(&m, &p, 9, 3).unwrap());
    }

    #[test]
    fn block_variants_share_first_draws_with_iid() {
        // The first outcome of every block uses the same draws in every variant.
        let m = SignalModel::loophole_default();
        let iid = generate(&m, &ProtocolSpec::new(Variant::Iid, 6, 10).unwrap(), 4, 0).unwrap();
        let blk = generate(&m, &ProtocolSpec::new(Variant::BlockFixedM, 6, 10).unwrap(), 4, 0).unwrap();
        for b in 0..6 {
            assert_eq!(iid.outcomes[b * 10], blk.outcomes[b * 10]);
        }
    }

    #[test]
    fn h0_report_fields() {
        let m = bernoulli_product();
        let s = RunSample {
            outcomes: vec![0.0, 1.0, 1.0, 1.0],
            block_boundaries: vec![0],
            protocol: ProtocolSpec::new(Variant::Iid, 1, 4).unwrap(),
            seed: 0,
            run_index: 0,
        };
        let r = test_h0(&s, &m).unwrap();
        // sd = 0.5, SEM = 0.25, z = (0.75 − 0.25)/0.25 = 2
        assert!((r.naive_sem - 0.25).abs() < 1e-15);
        assert!((r.z_score - 2.0).abs() < 1e-12);
        assert_eq!(r.ratio, Some(3.0));
        assert_eq!(r.h0_rejected_at, vec![(0.05, true), (0.01, false), (0.001, false)]);

        let sym = SignalModel::new(vec![0.5, 0.5], vec![1.0], vec![vec![-1.0], vec![1.0]]).unwrap();
        let r = test_h0(&s, &sym).unwrap();
        assert_eq!(r.ratio, None);
    }

    #[test]
    fn design_effect_requires_runs() {
        let m = SignalModel::loophole_default();
        let p = ProtocolSpec::new(Variant::Iid, 2, 10).unwrap();
        let runs = generate_batch(&m, &p, 1, 10).unwrap();
        assert!(matches!(design_effect(&runs), Err(ProtocolError::TooFewRuns { .. })));
    }

    #[test]
    fn design_effect_iid_and_point_mass() {
        let m = SignalModel::loophole_default();
        let iid = generate_batch(&m, &ProtocolSpec::new(Variant::Iid, 4, 250).unwrap(), 11, 100).unwrap();
        let de = design_effect(&iid).unwrap();
        assert!((0.7..=1.4).contains(&de), "iid design effect {de}");

        let pm = SignalModel::new(vec![1.0], vec![0.5, 0.5], vec![vec![0.0, 3.0]]).unwrap();
        let blk = generate_batch(&pm, &ProtocolSpec::new(Variant::BlockFixedM, 4, 250).unwrap(), 11, 100).unwrap();
        let de = design_effect(&blk).unwrap();
        assert!((0.7..=1.4).contains(&de), "point-mass design effect {de}");
    }

    #[test]
    fn design_effect_grows_for_fixed_signal() {
        let m = SignalModel::loophole_default();
        let p = ProtocolSpec::new(Variant::BlockFixedM, 4, 250).unwrap();
        let stats = map_runs(&m, &p, 12, 100, |s| (s.mean(), s.naive_sem())).unwrap();
        let de = design_effect_from_stats(&stats).unwrap();
        assert!(de > 10.0, "block design effect {de}");
        assert!(predicted_design_effect(&m, &p) > 50.0);
    }

    #[test]
    fn predicted_variance_matches_brute_force() {
        // Enumerate every (m, n) assignment for a two-trial block.
        let m = SignalModel::new(
            vec![0.3, 0.7],
            vec![0.6, 0.4],
            vec![vec![1.0, -2.0], vec![0.5, 4.0]],
        )
        .unwrap();
        let mean = theoretical_mean(&m);
        let mut var_m = 0.0;
        let mut var_n = 0.0;
        for (i, pi) in m.p1().iter().enumerate() {
            for (j1, pj1) in m.p2().iter().enumerate() {
                for (j2, pj2) in m.p2().iter().enumerate() {
                    let avg = 0.5 * (m.outcome(i, j1) + m.outcome(i, j2));
                    var_m += pi * pj1 * pj2 * (avg - mean).powi(2);
                }
            }
        }
        for (j, pj) in m.p2().iter().enumerate() {
            for (i1, pi1) in m.p1().iter().enumerate() {
                for (i2, pi2) in m.p1().iter().enumerate() {
                    let avg = 0.5 * (m.outcome(i1, j) + m.outcome(i2, j));
                    var_n += pj * pi1 * pi2 * (avg - mean).powi(2);
                }
            }
        }
        let pm = ProtocolSpec::new(Variant::BlockFixedM, 1, 2).unwrap();
        let pn = ProtocolSpec::new(Variant::BlockFixedN, 1, 2).unwrap();
        assert!((predicted_mean_variance(&m, &pm) - var_m).abs() < 1e-14);
        assert!((predicted_mean_variance(&m, &pn) - var_n).abs() < 1e-14);
    }
}
