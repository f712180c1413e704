//! Chain diagnostics and goodness-of-fit statistics.

use crate::error::{Error, Result};
use crate::quad::{integrate, LogPeak, QuadConfig};
use crate::special::gamma_q;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Effective sample size by Geyer's initial monotone sequence estimator.
///
/// A constant series returns `n`.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - m).collect();
    let autocov = |lag: usize| centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let gamma0 = autocov(0);
    if !(gamma0 > 0.0) {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = autocov(2 * k) + autocov(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = (-gamma0 + 2.0 * sum) / gamma0;
    n as f64 / tau.max(1.0 / n as f64)
}

/// Monte Carlo standard error of the sample mean.
pub fn mcse(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var / effective_sample_size(x)).sqrt()
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Asymptotic Kolmogorov tail probability with the usual small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test against an explicit CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cdf_values: Vec<f64> = sorted.iter().map(|&x| cdf(x)).collect();
    ks_from_sorted(&cdf_values)
}

fn ks_from_sorted(cdf_values: &[f64]) -> KsResult {
    let n = cdf_values.len();
    let d = cdf_values
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            (f - lo).abs().max((hi - f).abs())
        })
        .fold(0.0, f64::max);
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// KS test of positive samples against an unnormalized log-density on
/// `(0, ∞)`. The CDF is accumulated by quadrature in `ln x` between
/// consecutive order statistics.
pub fn ks_test_log_density(samples: &[f64], ln_pdf: impl Fn(f64) -> f64, cfg: &QuadConfig) -> Result<KsResult> {
    if samples.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Input("KS samples must be positive and finite".into()));
    }
    let ln_f = |s: f64| ln_pdf(s.exp()) + s;
    let peak = LogPeak::locate(ln_f, "ks_test_log_density")?;
    let total = peak.integrate_scaled(|_| 1.0, cfg, "ks_test_log_density")?.value;
    let scaled = |s: f64| {
        let v = ln_f(s) - peak.peak;
        if v < -745.0 {
            0.0
        } else {
            v.exp()
        }
    };
    let mut logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    logs.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    let mut prev = peak.lo;
    let mut cdf = Vec::with_capacity(logs.len());
    for &s in &logs {
        let s_clamped = s.clamp(peak.lo, peak.hi);
        if s_clamped > prev {
            acc += integrate(scaled, prev, s_clamped, cfg)?.value;
            prev = s_clamped;
        }
        cdf.push((acc / total).min(1.0));
    }
    Ok(ks_from_sorted(&cdf))
}

/// Pearson chi-square goodness of fit; `probs` must sum to one.
pub fn chi_square_test(counts: &[u64], probs: &[f64]) -> Result<(f64, f64)> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(Error::Input("chi-square needs matching counts and probabilities".into()));
    }
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let df = (counts.len() - 1) as f64;
    Ok((stat, gamma_q(0.5 * df, 0.5 * stat)?))
}
