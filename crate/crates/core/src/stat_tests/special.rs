//! Special functions behind the p-values: log-gamma, regularized incomplete
//! gamma and beta, and the Kolmogorov distribution.

// Reference constants keep every published digit.
#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// (P(a, x), Q(a, x)): series below x = a + 1, continued fraction above.
pub fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x < a + 1.0 {
        let p = gamma_series(a, x);
        (p, 1.0 - p)
    } else {
        let q = gamma_continued_fraction(a, x);
        (1.0 - q, q)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the Legendre continued fraction for Q(a, x).
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_sf(statistic: f64, dof: f64) -> f64 {
    regularized_gamma(dof / 2.0, statistic / 2.0).1
}

/// erfc(x) = Q(½, x²) for x ≥ 0.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else {
        regularized_gamma(0.5, x * x).1
    }
}

/// P(Z > z) for a standard normal Z.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Two-sided normal p-value P(|Z| > |z|).
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Upper tail of the F distribution.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_beta(df2 / (df2 + df1 * f), df2 / 2.0, df1 / 2.0)
}

/// Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form of the CDF converges fast for small λ.
        let y = (-PI * PI / (8.0 * lambda * lambda)).exp();
        let mut sum = 0.0;
        let mut k = 1.0_f64;
        loop {
            let term = y.powf((2.0 * k - 1.0).powi(2));
            sum += term;
            if term < EPS * sum || k > 100.0 {
                break;
            }
            k += 1.0;
        }
        let cdf = (2.0 * PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let k = k as f64;
            let term = (-2.0 * k * k * lambda * lambda).exp();
            sum += sign * term;
            if term < EPS * sum.abs() {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Grid cells per monitoring time for [`bridge_max_sf`], within the bounds below.
pub const BRIDGE_CELLS_PER_TIME: usize = 8;
pub const BRIDGE_MIN_CELLS: usize = 100;
pub const BRIDGE_MAX_CELLS: usize = 300;

#[inline]
fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// P(max_j |B(t_j)| > λ) for a Brownian bridge B observed at the increasing
/// times `t_j` in (0, 1).
///
/// This is the limiting law of the scaled two-sample KS statistic when the
/// pooled distribution is discrete with CDF values `t_j`. The bridge is a
/// Gaussian Markov chain at those times, so the mass still inside the band is
/// propagated cell by cell on a grid over [−λ, λ]. The p-value is the sum of
/// the mass that leaves the band, which keeps small p-values accurate.
pub fn bridge_max_sf(lambda: f64, times: &[f64]) -> f64 {
    let cells = (BRIDGE_CELLS_PER_TIME * times.len()).clamp(BRIDGE_MIN_CELLS, BRIDGE_MAX_CELLS);
    bridge_max_sf_with_grid(lambda, times, cells)
}

pub fn bridge_max_sf_with_grid(lambda: f64, times: &[f64], cells: usize) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let times: Vec<f64> = times.iter().copied().filter(|t| *t > 0.0 && *t < 1.0).collect();
    if times.is_empty() {
        return 0.0;
    }
    let m = cells.max(2);
    let h = 2.0 * lambda / m as f64;
    let edge = |k: usize| -lambda + k as f64 * h;
    let center = |i: usize| -lambda + (i as f64 + 0.5) * h;

    let t0 = times[0];
    let sd0 = (t0 * (1.0 - t0)).sqrt();
    let mut mass: Vec<f64> = (0..m)
        .map(|i| normal_cdf(edge(i + 1) / sd0) - normal_cdf(edge(i) / sd0))
        .collect();
    let mut escaped = 2.0 * normal_cdf(-lambda / sd0);

    let mut next = vec![0.0; m];
    let mut cdf = vec![0.0; m + 1];
    for w in times.windows(2) {
        let (s, t) = (w[0], w[1]);
        // B(t) | B(s) = x  ~  N(x (1−t)/(1−s), (t−s)(1−t)/(1−s))
        let scale = (1.0 - t) / (1.0 - s);
        let sd = ((t - s) * scale).sqrt();
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, &p) in mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mu = center(i) * scale;
            escaped += p * (normal_cdf((-lambda - mu) / sd) + normal_cdf((mu - lambda) / sd));
            // The kernel is negligible beyond 9 sd.
            let lo = (((mu - 9.0 * sd + lambda) / h).floor().max(0.0) as usize).min(m);
            let hi = (((mu + 9.0 * sd + lambda) / h).ceil().max(0.0) as usize).min(m);
            for (k, c) in cdf.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *c = normal_cdf((edge(k) - mu) / sd);
            }
            for k in lo..hi {
                next[k] += p * (cdf[k + 1] - cdf[k]);
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    escaped.clamp(0.0, 1.0)
}
