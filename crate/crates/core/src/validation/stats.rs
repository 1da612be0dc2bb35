//! Two-sample Kolmogorov-Smirnov test and descriptive statistics for speed
//! samples.

use serde::Serialize;

use crate::error::{Error, Result};

/// Terms of the Kolmogorov series below this are dropped.
const SERIES_EPS: f64 = 1e-12;

/// Below this `lambda` the alternating series converges slowly, so the
/// complementary theta-function form is summed instead.
const SMALL_LAMBDA: f64 = 1.18;

fn check_sample(name: &'static str, s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::param(name, "sample is empty"));
    }
    if let Some(i) = s.iter().position(|v| !v.is_finite()) {
        return Err(Error::param(name, format!("non-finite value at index {i}")));
    }
    Ok(())
}

fn sorted(s: &[f64]) -> Vec<f64> {
    let mut v = s.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup |F_a - F_b|` over the pooled values, with right-continuous ECDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    check_sample("a", a)?;
    check_sample("b", b)?;
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Step past every copy of the smallest remaining value in both.
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov survival function `Q(lambda)`, clamped to [0, 1].
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < SMALL_LAMBDA {
        // Q = 1 - sqrt(2 pi)/lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2))
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1.. {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * c).exp();
            sum += term;
            if term < SERIES_EPS * sum.max(f64::MIN_POSITIVE) || term == 0.0 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1.. {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            if term < SERIES_EPS {
                break;
            }
            sum += sign * term;
            sign = -sign;
        }
        2.0 * sum
    };
    q.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Statistic and asymptotic p-value. The p-value uses the effective size
/// `n_a n_b / (n_a + n_b)` with the usual small-sample correction to
/// `lambda`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let d = ks_statistic(a, b)?;
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, a.len(), b.len()),
    })
}

pub fn ks_p_value(d: f64, na: usize, nb: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

/// Summary of one sample. Fields that need more observations, or a
/// non-zero spread, are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Describe {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: Option<f64>,
    pub min: f64,
    pub max: f64,
    /// `m3 / m2^1.5`.
    pub skewness: Option<f64>,
    /// `m4 / m2^2 - 3`.
    pub excess_kurtosis: Option<f64>,
}

pub fn describe(sample: &[f64]) -> Result<Describe> {
    check_sample("sample", sample)?;
    let n = sample.len();
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in sample {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let ss = m2;
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let spread = m2 > 0.0;
    Ok(Describe {
        n,
        mean,
        std: (n >= 2).then(|| (ss / (nf - 1.0)).sqrt()),
        min: sample.iter().copied().fold(f64::INFINITY, f64::min),
        max: sample.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        skewness: (n >= 3 && spread).then(|| m3 / m2.powf(1.5)),
        excess_kurtosis: (n >= 4 && spread).then(|| m4 / (m2 * m2) - 3.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub labels: [String; 2],
    pub stats: [Describe; 2],
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

pub fn compare_samples(labels: [&str; 2], a: &[f64], b: &[f64]) -> Result<ComparisonReport> {
    let ks = ks_two_sample(a, b)?;
    Ok(ComparisonReport {
        labels: labels.map(String::from),
        stats: [describe(a)?, describe(b)?],
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
    })
}
