//! Statistical helpers for the harness: one-sample Kolmogorov-Smirnov
//! against an exponential law, sample summaries, least squares, and total
//! variation distance.

use serde::Serialize;

use crate::{Error, Result};

/// Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x <= 0.05 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        if term < 1e-18 {
            break;
        }
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `samples` against `Exponential(rate)`, p-value via
/// the asymptotic Kolmogorov distribution.
pub fn ks_exponential(samples: &[f64], rate: f64) -> Result<KsResult> {
    if samples.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "KS test needs at least 20 samples, got {}",
            samples.len()
        )));
    }
    if !(rate > 0.0) {
        return Err(Error::InvalidParameter("rate must be positive".into()));
    }
    if samples.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(
            "KS-vs-exponential requires strictly positive samples".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = 1.0 - (-rate * x).exp();
        d = d.max(cdf - i as f64 / n).max((i + 1) as f64 / n - cdf);
    }
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(n.sqrt() * d),
        n: sorted.len(),
    })
}

/// Sample mean with a normal-approximation 95% confidence interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

pub fn mean_ci95(samples: &[f64]) -> Option<MeanCi> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let half = 1.96 * (var / n as f64).sqrt();
    Some(MeanCi {
        mean,
        lo: mean - half,
        hi: mean + half,
        n,
    })
}

/// Ordinary least squares `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InsufficientData(
            "least squares needs >= 3 paired points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("x has no variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok(OlsFit {
        slope,
        intercept: my - slope * mx,
        n: x.len(),
    })
}

/// Total variation distance between an empirical histogram over `0..=k_max`
/// and a reference pmf (mass beyond `k_max` is pooled into one bin).
pub fn tv_distance(counts: &[u64], total: u64, pmf: &[f64]) -> f64 {
    debug_assert_eq!(counts.len(), pmf.len());
    let n = total as f64;
    let mut tv = 0.0;
    let mut emp_tail = 1.0;
    let mut ref_tail = 1.0;
    for (c, p) in counts.iter().zip(pmf) {
        let emp = *c as f64 / n;
        tv += (emp - p).abs();
        emp_tail -= emp;
        ref_tail -= p;
    }
    tv += (emp_tail - ref_tail).abs();
    tv / 2.0
}

pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}
