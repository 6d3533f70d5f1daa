//! Homogeneity and independence diagnostics for outcome samples.
//!
//! A sample is treated as simple random only if it passes every test of the
//! battery in [`simple_random_sample_audit`]: a contingency chi-square across
//! bins, a two-sample Kolmogorov–Smirnov test between halves, a one-way
//! analysis of bin means, and a lag-1 autocorrelation test. The battery is
//! aggregated with a Bonferroni correction.

pub mod special;

use serde::Serialize;
use thiserror::Error;

use crate::protocol_sim::RunSample;
use special::{bridge_max_sf, chi_square_sf, f_sf, kolmogorov_sf, normal_two_sided};

/// Minimum expected cell count before adjacent categories are merged.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;
/// Audit requires at least this many outcomes per bin.
pub const MIN_OUTCOMES_PER_BIN: usize = 10;
pub const BATTERY_SIZE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("bin {index} has {len} outcomes, need at least {min}")]
    SmallBin { index: usize, len: usize, min: usize },
    #[error("empty input")]
    Empty,
    #[error("every bin has zero within-bin variance")]
    DegenerateBins,
    #[error("sample of {len} outcomes is too short for {bins} bins (need {needed})")]
    SampleTooShort { len: usize, bins: usize, needed: usize },
    #[error("block boundaries {0:?} do not partition the sample")]
    BadBoundaries(Vec<usize>),
    #[error("non-finite outcome at index {0}")]
    NonFinite(usize),
    #[error("significance level {0} outside (0, 1)")]
    Alpha(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binning {
    ContiguousEqual,
    ByBlock,
}

/// Partition of a sample into ordered bins.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedSample {
    bins: Vec<Vec<f64>>,
    binning: Binning,
}

impl BinnedSample {
    pub fn new(bins: Vec<Vec<f64>>, binning: Binning) -> Result<Self, StatError> {
        if bins.len() < 2 {
            return Err(StatError::TooFewBins(bins.len()));
        }
        if let Some(index) = bins.iter().position(|b| b.is_empty()) {
            return Err(StatError::SmallBin { index, len: 0, min: 1 });
        }
        Ok(Self { bins, binning })
    }

    /// `count` contiguous bins whose sizes differ by at most one.
    pub fn contiguous(outcomes: &[f64], count: usize) -> Result<Self, StatError> {
        if count < 2 {
            return Err(StatError::TooFewBins(count));
        }
        if outcomes.len() < count {
            return Err(StatError::SampleTooShort {
                len: outcomes.len(),
                bins: count,
                needed: count,
            });
        }
        let base = outcomes.len() / count;
        let extra = outcomes.len() % count;
        let mut bins = Vec::with_capacity(count);
        let mut start = 0;
        for i in 0..count {
            let len = base + usize::from(i < extra);
            bins.push(outcomes[start..start + len].to_vec());
            start += len;
        }
        Self::new(bins, Binning::ContiguousEqual)
    }

    /// Bins starting at each of `starts` (first must be 0, strictly increasing).
    pub fn by_block(outcomes: &[f64], starts: &[usize]) -> Result<Self, StatError> {
        let valid = starts.first() == Some(&0)
            && starts.windows(2).all(|w| w[0] < w[1])
            && starts.last().is_some_and(|&s| s < outcomes.len());
        if !valid {
            return Err(StatError::BadBoundaries(starts.to_vec()));
        }
        let bins = starts
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let end = starts.get(i + 1).copied().unwrap_or(outcomes.len());
                outcomes[s..end].to_vec()
            })
            .collect();
        Self::new(bins, Binning::ByBlock)
    }

    pub fn bins(&self) -> &[Vec<f64>] {
        &self.bins
    }

    pub fn binning(&self) -> Binning {
        self.binning
    }

    pub fn total_len(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    pub fn concatenated(&self) -> Vec<f64> {
        self.bins.concat()
    }
}

/// One test of the battery.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    /// Degrees of freedom, when the reference distribution has them.
    pub dof: Option<f64>,
    pub p_value: f64,
    pub rejected: bool,
    pub note: Option<String>,
}

impl TestResult {
    fn new(name: &str, statistic: f64, dof: Option<f64>, p_value: f64, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            name: name.to_owned(),
            statistic,
            dof,
            p_value,
            rejected: p_value < alpha,
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneityReport {
    pub tests: Vec<TestResult>,
    pub alpha: f64,
    /// Per-test level after Bonferroni correction.
    pub per_test_alpha: f64,
    /// min(1, m · min p).
    pub overall_p_value: f64,
    pub overall_homogeneous: bool,
}

fn check_alpha(alpha: f64) -> Result<(), StatError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatError::Alpha(alpha));
    }
    Ok(())
}

fn check_finite(x: &[f64]) -> Result<(), StatError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Contingency chi-square of bins × outcome categories.
///
/// Categories are the distinct outcome values in ascending order; adjacent
/// categories are merged until every expected count reaches
/// [`MIN_EXPECTED_COUNT`], and the merge is recorded in the result note.
pub fn chi_square_homogeneity(b: &BinnedSample, alpha: f64) -> Result<TestResult, StatError> {
    const NAME: &str = "chi-square";
    check_alpha(alpha)?;
    if b.bins.len() < 2 {
        return Err(StatError::TooFewBins(b.bins.len()));
    }
    for bin in &b.bins {
        check_finite(bin)?;
    }

    let mut values: Vec<f64> = b.bins.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let raw_categories = values.len();
    if raw_categories < 2 {
        return Ok(TestResult::new(NAME, 0.0, Some(0.0), 1.0, alpha).with_note("all outcomes identical"));
    }

    let mut counts = vec![vec![0u64; raw_categories]; b.bins.len()];
    for (row, bin) in counts.iter_mut().zip(&b.bins) {
        for x in bin {
            let j = values.binary_search_by(|v| v.total_cmp(x)).expect("value present");
            row[j] += 1;
        }
    }

    let total = b.total_len() as f64;
    let min_row = b.bins.iter().map(Vec::len).min().unwrap_or(0) as f64;
    let min_col_needed = (MIN_EXPECTED_COUNT * total / min_row).ceil() as u64;
    let col_totals: Vec<u64> = (0..raw_categories)
        .map(|j| counts.iter().map(|r| r[j]).sum())
        .collect();

    // Group adjacent categories until each group has enough total mass.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current = Vec::new();
    let mut mass = 0;
    for (j, &c) in col_totals.iter().enumerate() {
        current.push(j);
        mass += c;
        if mass >= min_col_needed {
            groups.push(std::mem::take(&mut current));
            mass = 0;
        }
    }
    if !current.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(current),
            None => groups.push(current),
        }
    }
    let categories = groups.len();
    let note = (categories < raw_categories)
        .then(|| format!("merged {raw_categories} categories into {categories}"));
    if categories < 2 {
        let r = TestResult::new(NAME, 0.0, Some(0.0), 1.0, alpha);
        return Ok(r.with_note(note.unwrap_or_default() + "; single category, test degenerate"));
    }

    let grouped: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            groups
                .iter()
                .map(|g| g.iter().map(|&j| row[j]).sum::<u64>() as f64)
                .collect()
        })
        .collect();
    let row_totals: Vec<f64> = grouped.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<f64> = (0..categories)
        .map(|j| grouped.iter().map(|r| r[j]).sum())
        .collect();

    let mut statistic = 0.0;
    for (row, rt) in grouped.iter().zip(&row_totals) {
        for (obs, ct) in row.iter().zip(&col_totals) {
            let expected = rt * ct / total;
            statistic += (obs - expected).powi(2) / expected;
        }
    }
    let dof = ((b.bins.len() - 1) * (categories - 1)) as f64;
    let r = TestResult::new(NAME, statistic, Some(dof), chi_square_sf(statistic, dof), alpha);
    Ok(match note {
        Some(n) => r.with_note(n),
        None => r,
    })
}

/// Pooled samples with at most this many distinct values (and some ties) use
/// the discrete limit law for the KS p-value.
pub const KS_DISCRETE_MAX_VALUES: usize = 33;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KsMethod {
    /// Kolmogorov distribution with the small-sample λ correction.
    Continuous,
    /// Maximum of a Brownian bridge at the pooled CDF values.
    Discrete,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    /// sup |F_x − F_y|
    pub d: f64,
    pub p_value: f64,
    pub method: KsMethod,
}

/// Two-sample Kolmogorov–Smirnov test with an asymptotic p-value.
///
/// The Kolmogorov law assumes continuous data and is very conservative on
/// heavily tied outcomes, so samples taking only a few distinct values are
/// referred to the bridge maximum over the pooled CDF jump points instead.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult, StatError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatError::Empty);
    }
    check_finite(x)?;
    check_finite(y)?;
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);

    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    let mut pooled_cdf = Vec::new();
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
        pooled_cdf.push((i + j) as f64 / (nx + ny));
    }
    let ne = nx * ny / (nx + ny);
    let distinct = pooled_cdf.len();
    let tied = distinct < xs.len() + ys.len();
    if tied && distinct <= KS_DISCRETE_MAX_VALUES {
        pooled_cdf.pop();
        return Ok(KsResult {
            d,
            p_value: bridge_max_sf(ne.sqrt() * d, &pooled_cdf),
            method: KsMethod::Discrete,
        });
    }
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsResult {
        d,
        p_value: kolmogorov_sf(lambda),
        method: KsMethod::Continuous,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockMeanScan {
    pub means: Vec<f64>,
    /// Between-bin over within-bin mean square.
    pub f_statistic: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub p_value: f64,
}

/// One-way analysis of bin means.
pub fn block_mean_scan(b: &BinnedSample) -> Result<BlockMeanScan, StatError> {
    let k = b.bins.len();
    if k < 2 {
        return Err(StatError::TooFewBins(k));
    }
    if let Some((index, bin)) = b.bins.iter().enumerate().find(|(_, bin)| bin.len() < 2) {
        return Err(StatError::SmallBin {
            index,
            len: bin.len(),
            min: 2,
        });
    }
    let (ssb, ssw, means) = sums_of_squares(b)?;
    if ssw == 0.0 {
        return Err(StatError::DegenerateBins);
    }
    let n = b.total_len() as f64;
    let df_between = (k - 1) as f64;
    let df_within = n - k as f64;
    let f_statistic = (ssb / df_between) / (ssw / df_within);
    Ok(BlockMeanScan {
        means,
        f_statistic,
        df_between,
        df_within,
        p_value: f_sf(f_statistic, df_between, df_within),
    })
}

fn sums_of_squares(b: &BinnedSample) -> Result<(f64, f64, Vec<f64>), StatError> {
    for bin in &b.bins {
        check_finite(bin)?;
    }
    let n = b.total_len() as f64;
    let grand = b.bins.iter().flatten().sum::<f64>() / n;
    let means: Vec<f64> = b.bins.iter().map(|bin| bin.iter().sum::<f64>() / bin.len() as f64).collect();
    let ssb = b
        .bins
        .iter()
        .zip(&means)
        .map(|(bin, m)| bin.len() as f64 * (m - grand).powi(2))
        .sum();
    let ssw = b
        .bins
        .iter()
        .zip(&means)
        .map(|(bin, m)| bin.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    Ok((ssb, ssw, means))
}

/// Lag-1 sample autocorrelation r₁ with z = √N (r₁ + 1/N).
pub fn lag1_autocorrelation(x: &[f64], alpha: f64) -> Result<TestResult, StatError> {
    const NAME: &str = "lag-1 autocorrelation";
    check_alpha(alpha)?;
    if x.len() < 3 {
        return Err(StatError::Empty);
    }
    check_finite(x)?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return Ok(TestResult::new(NAME, 0.0, None, 1.0, alpha).with_note("constant sample"));
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let r1 = num / denom;
    let z = n.sqrt() * (r1 + 1.0 / n);
    Ok(TestResult::new(NAME, r1, None, normal_two_sided(z), alpha))
}

fn aggregate(tests: Vec<TestResult>, alpha: f64) -> HomogeneityReport {
    let per_test_alpha = alpha / tests.len() as f64;
    let min_p = tests.iter().map(|t| t.p_value).fold(1.0, f64::min);
    let tests: Vec<TestResult> = tests
        .into_iter()
        .map(|mut t| {
            t.rejected = t.p_value < per_test_alpha;
            t
        })
        .collect();
    let overall_homogeneous = tests.iter().all(|t| !t.rejected);
    HomogeneityReport {
        overall_p_value: (min_p * tests.len() as f64).min(1.0),
        tests,
        alpha,
        per_test_alpha,
        overall_homogeneous,
    }
}

/// Run the four-test battery on an already binned sample.
pub fn audit_binned(b: &BinnedSample, alpha: f64) -> Result<HomogeneityReport, StatError> {
    check_alpha(alpha)?;
    let all = b.concatenated();
    let chi = chi_square_homogeneity(b, alpha)?;

    let half = all.len() / 2;
    let ks = if half == 0 {
        return Err(StatError::Empty);
    } else {
        let r = ks_two_sample(&all[..half], &all[half..])?;
        TestResult::new("ks first/second half", r.d, None, r.p_value, alpha)
    };

    const SCAN: &str = "block-mean scan";
    let scan = match block_mean_scan(b) {
        Ok(s) => TestResult::new(SCAN, s.f_statistic, Some(s.df_between), s.p_value, alpha),
        Err(StatError::DegenerateBins) => {
            let (ssb, _, _) = sums_of_squares(b)?;
            if ssb == 0.0 {
                TestResult::new(SCAN, 0.0, None, 1.0, alpha).with_note("constant sample")
            } else {
                TestResult::new(SCAN, f64::INFINITY, None, 0.0, alpha)
                    .with_note("bins constant with differing values")
            }
        }
        Err(e) => return Err(e),
    };

    let lag = lag1_autocorrelation(&all, alpha)?;
    Ok(aggregate(vec![chi, ks, scan, lag], alpha))
}

/// Audit a bare outcome sequence split into `bin_count` contiguous bins.
pub fn audit_outcomes(outcomes: &[f64], bin_count: usize, alpha: f64) -> Result<HomogeneityReport, StatError> {
    let needed = MIN_OUTCOMES_PER_BIN * bin_count;
    if outcomes.len() < needed {
        return Err(StatError::SampleTooShort {
            len: outcomes.len(),
            bins: bin_count,
            needed,
        });
    }
    audit_binned(&BinnedSample::contiguous(outcomes, bin_count)?, alpha)
}

/// Does the run look like a simple random sample (independent, identically
/// distributed trials)?
pub fn simple_random_sample_audit(
    sample: &RunSample,
    bin_count: usize,
    alpha: f64,
) -> Result<HomogeneityReport, StatError> {
    audit_outcomes(&sample.outcomes, bin_count, alpha)
}

/// Same battery with one bin per protocol block.
pub fn audit_by_blocks(sample: &RunSample, alpha: f64) -> Result<HomogeneityReport, StatError> {
    let bins = BinnedSample::by_block(&sample.outcomes, &sample.block_boundaries)?;
    let needed = MIN_OUTCOMES_PER_BIN * bins.bins().len();
    if sample.outcomes.len() < needed {
        return Err(StatError::SampleTooShort {
            len: sample.outcomes.len(),
            bins: bins.bins().len(),
            needed,
        });
    }
    audit_binned(&bins, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    // (statistic, dof, Q) from a 40-digit mpmath evaluation.
    #[allow(clippy::excessive_precision)]
    const CHI_SQUARE_TABLE: [(f64, f64, f64); 12] = [
        (0.5, 1.0, 0.479_500_122_186_953_462_32),
        (3.841_458_820_694_124, 1.0, 0.050_000_000_000_000_057_435),
        (6.634_896_601_021_214, 1.0, 0.010_000_000_000_000_008_685),
        (10.0, 2.0, 0.006_737_946_999_085_467_096_6),
        (1.0, 5.0, 0.962_565_773_247_296_368_96),
        (30.0, 10.0, 8.566_412_107_753_003_921_1e-4),
        (3.0, 10.0, 0.981_424_063_777_859_325_7),
        (720.0, 1.0, 1.338_625_893_657_619_166_7e-158),
        (50.0, 20.0, 2.214_766_382_487_835_812_2e-4),
        (150.0, 100.0, 9.039_320_423_540_090_857_6e-4),
        (0.01, 3.0, 0.999_734_834_941_344_390_16),
        (25.0, 4.0, 5.030_981_782_306_205_840_4e-5),
    ];

    #[test]
    fn chi_square_sf_matches_reference_table() {
        for (x, k, q) in CHI_SQUARE_TABLE {
            let got = chi_square_sf(x, k);
            assert!(((got - q) / q).abs() < 1e-8, "x={x} k={k}: {got} vs {q}");
        }
    }

    fn bernoulli(p: f64, n: usize, stream: u64) -> Vec<f64> {
        let mut rng = StreamRng::new(77, stream);
        (0..n).map(|_| f64::from(u8::from(rng.uniform() < p))).collect()
    }

    #[test]
    fn chi_square_separated_bernoullis() {
        // Expected counts 500 in every cell: 4 · 300² / 500 = 720 at exact proportions.
        let exact: Vec<Vec<f64>> = vec![
            (0..1000).map(|i| f64::from(u8::from(i < 200))).collect(),
            (0..1000).map(|i| f64::from(u8::from(i < 800))).collect(),
        ];
        let b = BinnedSample::new(exact, Binning::ContiguousEqual).unwrap();
        let r = chi_square_homogeneity(&b, 0.05).unwrap();
        assert!((r.statistic - 720.0).abs() < 1e-9);
        assert!(r.p_value < 1e-10);

        let drawn = BinnedSample::new(vec![bernoulli(0.2, 1000, 1), bernoulli(0.8, 1000, 2)], Binning::ContiguousEqual)
            .unwrap();
        assert!(chi_square_homogeneity(&drawn, 0.05).unwrap().p_value < 1e-10);
    }

    #[test]
    fn chi_square_constant_sample() {
        let b = BinnedSample::contiguous(&[3.0; 100], 4).unwrap();
        let r = chi_square_homogeneity(&b, 0.05).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn chi_square_merges_sparse_categories() {
        let mut bins = vec![vec![0.0; 50], vec![0.0; 50]];
        bins[0].extend([1.0, 2.0, 3.0]);
        bins[1].extend([1.0; 30]);
        let b = BinnedSample::new(bins, Binning::ContiguousEqual).unwrap();
        let r = chi_square_homogeneity(&b, 0.05).unwrap();
        assert!(r.note.as_deref().unwrap_or("").contains("merged"));
        assert_eq!(r.dof, Some(1.0));
    }

    #[test]
    fn binning_rules() {
        assert!(matches!(BinnedSample::contiguous(&[1.0; 10], 1), Err(StatError::TooFewBins(1))));
        let b = BinnedSample::contiguous(&(0..11).map(f64::from).collect::<Vec<_>>(), 3).unwrap();
        let sizes: Vec<usize> = b.bins().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        assert_eq!(b.concatenated(), (0..11).map(f64::from).collect::<Vec<_>>());
        assert!(BinnedSample::by_block(&[1.0; 10], &[0, 5]).is_ok());
        assert!(BinnedSample::by_block(&[1.0; 10], &[1, 5]).is_err());
        assert!(BinnedSample::by_block(&[1.0; 10], &[0, 10]).is_err());
    }

    #[test]
    fn ks_examples() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let same = ks_two_sample(&x, &x).unwrap();
        assert_eq!((same.d, same.p_value), (0.0, 1.0));
        let shifted: Vec<f64> = x.iter().map(|v| v + 10.0).collect();
        assert_eq!(ks_two_sample(&x, &shifted).unwrap().d, 1.0);
        assert!(matches!(ks_two_sample(&[], &x), Err(StatError::Empty)));
    }

    #[test]
    fn ks_handles_ties() {
        // F_x jumps to 1/2 at 0 and F_y to 1/4: D = 1/4.
        let x = [0.0, 0.0, 1.0, 1.0];
        let y = [0.0, 1.0, 1.0, 1.0];
        assert!((ks_two_sample(&x, &y).unwrap().d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn binary_ks_is_the_pooled_two_proportion_test() {
        let x = bernoulli(0.40, 600, 11);
        let y = bernoulli(0.46, 900, 12);
        let r = ks_two_sample(&x, &y).unwrap();
        assert_eq!(r.method, KsMethod::Discrete);
        let (px, py) = (x.iter().sum::<f64>() / 600.0, y.iter().sum::<f64>() / 900.0);
        let pooled = (x.iter().sum::<f64>() + y.iter().sum::<f64>()) / 1500.0;
        let z = (px - py) / (pooled * (1.0 - pooled) * (1.0 / 600.0 + 1.0 / 900.0)).sqrt();
        let oracle = special::erfc(z.abs() / std::f64::consts::SQRT_2);
        assert!((r.d - (px - py).abs()).abs() < 1e-15);
        assert!(((r.p_value - oracle) / oracle).abs() < 1e-4, "{} vs {oracle}", r.p_value);
    }

    #[test]
    fn block_mean_scan_examples() {
        let b = BinnedSample::contiguous(&[2.0; 40], 4).unwrap();
        assert!(matches!(block_mean_scan(&b), Err(StatError::DegenerateBins)));

        let bins = vec![vec![1.0, 2.0, 3.0], vec![11.0, 12.0, 13.0]];
        let s = block_mean_scan(&BinnedSample::new(bins, Binning::ByBlock).unwrap()).unwrap();
        // SSB = 150, SSW = 4, F = 150 / (4/4) = 150
        assert!((s.f_statistic - 150.0).abs() < 1e-12);
        assert_eq!(s.means, vec![2.0, 12.0]);
        assert!(s.p_value < 1e-3);

        let tiny = BinnedSample::new(vec![vec![1.0], vec![1.0, 2.0]], Binning::ByBlock).unwrap();
        assert!(matches!(block_mean_scan(&tiny), Err(StatError::SmallBin { index: 0, .. })));
    }

    #[test]
    fn lag1_detects_runs() {
        let mut x = vec![0.0; 500];
        x.extend(vec![1.0; 500]);
        let r = lag1_autocorrelation(&x, 0.05).unwrap();
        assert!(r.statistic > 0.9);
        assert!(r.p_value < 1e-10);
        let alt: Vec<f64> = (0..1000).map(|i| f64::from(i % 2)).collect();
        assert!(lag1_autocorrelation(&alt, 0.05).unwrap().statistic < -0.9);
    }

    #[test]
    fn audit_constant_sample_is_homogeneous() {
        let r = audit_outcomes(&[1.5; 400], 10, 0.05).unwrap();
        assert!(r.overall_homogeneous);
        assert!(r.tests.iter().all(|t| t.p_value == 1.0));
        assert_eq!(r.tests.len(), BATTERY_SIZE);
    }

    #[test]
    fn audit_length_precondition() {
        assert!(matches!(
            audit_outcomes(&[1.0; 99], 10, 0.05),
            Err(StatError::SampleTooShort { needed: 100, .. })
        ));
    }

    #[test]
    fn audit_flags_step_change() {
        let mut x = bernoulli(0.3, 2000, 5);
        x.extend(bernoulli(0.6, 2000, 6));
        let r = audit_outcomes(&x, 20, 0.05).unwrap();
        assert!(!r.overall_homogeneous);
        assert!(r.overall_p_value < 1e-6);
    }

    #[test]
    fn audit_deterministic() {
        let x = bernoulli(0.4, 5000, 9);
        assert_eq!(audit_outcomes(&x, 25, 0.05).unwrap(), audit_outcomes(&x, 25, 0.05).unwrap());
    }
}
