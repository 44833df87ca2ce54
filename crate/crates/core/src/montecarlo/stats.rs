//! Sample statistics and the Kolmogorov–Smirnov normality check.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Mean and unbiased variance with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    /// From the fourth central moment.
    pub se_variance: f64,
}

pub fn moments(xs: &[f64]) -> Result<Moments> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let variance = ss / (nf - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let se_variance = if n > 3 {
        ((m4 - variance * variance * (nf - 3.0) / (nf - 1.0)) / nf).max(0.0).sqrt()
    } else {
        f64::NAN
    };
    Ok(Moments { n, mean, variance, se_mean: (variance / nf).sqrt(), se_variance })
}

/// Unbiased covariance and the standard error of the estimate.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len().min(ys.len());
    if n < 2 || xs.len() != ys.len() {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let cov = prods.iter().sum::<f64>() / (nf - 1.0);
    let second = prods.iter().map(|p| p * p).sum::<f64>() / nf;
    let biased = cov * (nf - 1.0) / nf;
    Ok((cov, ((second - biased * biased) / nf).max(0.0).sqrt()))
}

/// Linear-interpolation quantile, `q ∈ [0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(s.len() - 1);
    s[i] + (s[j] - s[i]) * (pos - i as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(xs: &[f64]) -> Self {
        Self { q10: quantile(xs, 0.1), median: quantile(xs, 0.5), q90: quantile(xs, 0.9), max: quantile(xs, 1.0) }
    }
}

pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = (x - mean) / (2.0 * var).sqrt();
    if z < 0.0 {
        0.5 * erfc(-z)
    } else {
        1.0 - 0.5 * erfc(z)
    }
}

/// `P(K > λ)` for the limiting Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // the alternating series converges slowly here; use the theta-dual form
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=100).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test against `Normal(mean0, var0)`.
pub fn ks_normal(samples: &[f64], mean0: f64, var0: f64) -> Result<KsResult> {
    if !(var0 > 0.0 && var0.is_finite()) {
        return Err(Error::BadReference(format!("reference variance {var0} must be positive")));
    }
    if samples.len() < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: samples.len() });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x, mean0, var0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf(n.sqrt() * d) })
}
