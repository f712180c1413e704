//! Scalar special functions.
//!
//! Everything here works on positive reals and is written so that callers can
//! stay in log space: gamma-function ratios such as `Γ(ν+δ+1)/Γ(ν)` are
//! evaluated as differences of Stirling remainders rather than as differences
//! of two huge `ln Γ` values.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Shift threshold for the Stirling series in `ln Γ`.
const STIRLING_MIN: f64 = 15.0;
/// Shift threshold for the asymptotic series of ψ and ψ′.
const POLYGAMMA_MIN: f64 = 10.0;

fn check_arg(op: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(op, format!("argument must be finite and > 0, got {x}")))
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_arg("log_gamma", x)?;
    Ok(ln_gamma(x))
}

/// Unchecked `ln Γ(x)`; callers guarantee `x > 0`.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    // Taylor expansions around the two zeros of ln Γ keep relative accuracy there.
    let z1 = x - 1.0;
    if z1.abs() < 0.25 {
        return ln_gamma_1p_series(z1);
    }
    let z2 = x - 2.0;
    if z2.abs() < 0.25 {
        return z2.ln_1p() + ln_gamma_1p_series(z2);
    }
    if x >= STIRLING_MIN {
        return (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_tail(x);
    }
    let (shifted, log_prod) = shift_up(x, STIRLING_MIN);
    (shifted - 0.5) * shifted.ln() - shifted + HALF_LN_2PI + stirling_tail(shifted) - log_prod
}

/// Moves `x` up to at least `min` by unit steps; returns the new point and
/// `ln(x (x+1) ... (x+k-1))`.
fn shift_up(mut x: f64, min: f64) -> (f64, f64) {
    let mut prod = 1.0;
    let mut log_prod = 0.0;
    while x < min {
        prod *= x;
        if !(1e-250..=1e250).contains(&prod) {
            log_prod += prod.ln();
            prod = 1.0;
        }
        x += 1.0;
    }
    (x, log_prod + prod.ln())
}

/// `ln Γ(x) − [(x − ½) ln x − x + ½ ln 2π]` for `x ≥ 15`.
fn stirling_tail(x: f64) -> f64 {
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in C.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// Stirling remainder valid for every `x > 0`.
fn stirling_remainder(x: f64) -> f64 {
    if x >= STIRLING_MIN {
        stirling_tail(x)
    } else {
        ln_gamma(x) - ((x - 0.5) * x.ln() - x + HALF_LN_2PI)
    }
}

fn zeta_table() -> &'static [f64; 33] {
    static TABLE: OnceLock<[f64; 33]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; 33];
        t[2] = PI * PI / 6.0;
        t[3] = 1.202_056_903_159_594_3;
        t[4] = PI.powi(4) / 90.0;
        t[5] = 1.036_927_755_143_37;
        t[6] = PI.powi(6) / 945.0;
        t[7] = 1.008_349_277_381_922_8;
        t[8] = PI.powi(8) / 9450.0;
        t[9] = 1.002_008_392_826_082_2;
        for (k, slot) in t.iter_mut().enumerate().skip(10) {
            // Smallest terms first.
            *slot = 1.0 + (2..200).rev().map(|n| (n as f64).powi(-(k as i32))).sum::<f64>();
        }
        t
    })
}

/// `ln Γ(1 + z)` for `|z| < 1/4`.
fn ln_gamma_1p_series(z: f64) -> f64 {
    let zeta = zeta_table();
    let mut sum = 0.0;
    let mut zk = z;
    for (k, zv) in zeta.iter().enumerate().skip(2) {
        zk *= z;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * zv * zk / k as f64;
    }
    -EULER_GAMMA * z + sum
}

/// `ln B(a, b)`.
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    check_arg("log_beta", a)?;
    check_arg("log_beta", b)?;
    Ok(ln_beta(a, b))
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    ln_gamma(small) - ln_gamma_ratio(large, small)
}

/// `ln Γ(x + d) − ln Γ(x)` for `x > 0`, `x + d > 0`, stable for large `x`.
pub fn log_gamma_ratio(x: f64, d: f64) -> Result<f64> {
    check_arg("log_gamma_ratio", x)?;
    check_arg("log_gamma_ratio", x + d)?;
    Ok(ln_gamma_ratio(x, d))
}

pub(crate) fn ln_gamma_ratio(x: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    let y = x + d;
    if x >= STIRLING_MIN && y >= STIRLING_MIN {
        (x - 0.5) * (d / x).ln_1p() + d * y.ln() - d + stirling_tail(y) - stirling_tail(x)
    } else {
        ln_gamma(y) - ln_gamma(x)
    }
}

/// `ln(u^u e^{-u} / Γ(u))`, finite for every `u > 0` including `u ≫ 1`.
pub(crate) fn ln_pow_self_over_gamma(u: f64) -> f64 {
    if u >= STIRLING_MIN {
        0.5 * u.ln() - HALF_LN_2PI - stirling_remainder(u)
    } else {
        u * u.ln() - u - ln_gamma(u)
    }
}

/// Digamma (`order = 0`) or trigamma (`order = 1`).
pub fn polygamma(order: u32, x: f64) -> Result<f64> {
    check_arg("polygamma", x)?;
    match order {
        0 => Ok(digamma(x)),
        1 => Ok(trigamma(x)),
        _ => Err(Error::domain("polygamma", format!("order {order} not supported (0 or 1)"))),
    }
}

pub(crate) fn digamma(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < POLYGAMMA_MIN {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 / x - series
}

pub(crate) fn trigamma(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < POLYGAMMA_MIN {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0
                        - inv2
                            * (1.0 / 42.0
                                - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    shift + series
}

/// `ρ(x) = x − 1 − ln x` for `x > 0`, accurate at both `x ≈ 1` and extreme `x`.
pub fn rho(x: f64) -> f64 {
    if (0.5..2.0).contains(&x) {
        ln1p_gap(x - 1.0)
    } else {
        x - 1.0 - x.ln()
    }
}

/// `x − ln(1 + x)` for `x > −1` without cancellation near zero.
pub fn ln1p_gap(x: f64) -> f64 {
    if x.abs() < 0.05 {
        // Σ_{k≥2} (−1)^k x^k / k
        let mut term = x * x;
        let mut sum = 0.0;
        for k in 2..40 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let t = sign * term / k as f64;
            sum += t;
            if t.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= x;
        }
        sum
    } else {
        x - x.ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma and its inverse.

const ITMAX: usize = 1_000_000;
const FPMIN: f64 = 1e-300;

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn gamma_series(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..ITMAX {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            return Ok(sum * gamma_prefactor(a, x));
        }
    }
    Err(Error::numeric("gamma_p", "series did not converge", del))
}

fn gamma_continued_fraction(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..ITMAX {
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
        if (del - 1.0).abs() < 1e-16 {
            return Ok(gamma_prefactor(a, x) * h);
        }
    }
    Err(Error::numeric("gamma_q", "continued fraction did not converge", h))
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    check_arg("gamma_p", a)?;
    if !(x >= 0.0) {
        return Err(Error::domain("gamma_p", format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        Ok(1.0 - gamma_continued_fraction(a, x)?)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    check_arg("gamma_q", a)?;
    if !(x >= 0.0) {
        return Err(Error::domain("gamma_q", format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_series(a, x)?)
    } else {
        gamma_continued_fraction(a, x)
    }
}

/// Root of an increasing function of `t = ln x` by Newton steps kept inside a
/// shrinking bracket. `eval` returns `(f(t), df/dt)`.
fn bracketed_newton_log<F>(op: &'static str, mut eval: F, mut lo: f64, mut hi: f64, t0: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut t = t0.clamp(lo, hi);
    for _ in 0..200 {
        let (g, dg) = eval(t)?;
        if g == 0.0 {
            return Ok(t);
        }
        if g < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - g / dg;
        let next = if dg > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) || hi - lo <= 4.0 * f64::EPSILON * t.abs().max(1.0)
        {
            return Ok(next);
        }
        t = next;
    }
    Err(Error::numeric(op, "root finder exhausted 200 iterations", hi - lo))
}

/// Quantile `q` of `Ga(shape, rate)` with `P(shape, rate·q) = p`.
pub fn gamma_quantile(p: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("gamma_quantile", format!("p must lie in (0,1), got {p}")));
    }
    check_arg("gamma_quantile", shape)?;
    check_arg("gamma_quantile", rate)?;
    let a = shape;
    let lgam = ln_gamma(a);
    // Small-p start from P(a, x) ≈ x^a / Γ(a+1), otherwise the mean.
    let small = ((p.ln() + ln_gamma(a + 1.0)) / a).exp();
    let t0 = if small < a { small.ln() } else { a.ln() };
    let mut hi = a.max(1.0);
    while gamma_p(a, hi)? < p {
        hi *= 2.0;
    }
    let t = bracketed_newton_log(
        "gamma_quantile",
        |t| {
            let x = t.exp();
            let cdf = if p > 0.5 { 1.0 - gamma_q(a, x)? } else { gamma_p(a, x)? };
            let dcdf_dt = (a * t - x - lgam).exp();
            Ok((cdf - p, dcdf_dt))
        },
        (1e-300f64).ln(),
        hi.ln(),
        t0,
    )?;
    Ok(t.exp() / rate)
}

// ---------------------------------------------------------------------------
// φ(u) = u ln(1 + 1/u) and the expected-shrinkage rate κ*(y) = y φ⁻¹(1/y).

/// `φ(u) = u ln(1 + 1/u)`, strictly increasing from 0 to 1.
pub fn phi(u: f64) -> Result<f64> {
    check_arg("phi", u)?;
    Ok(phi_unchecked(u))
}

pub(crate) fn phi_unchecked(u: f64) -> f64 {
    if u < 1e-12 {
        u * (u.ln_1p() - u.ln())
    } else {
        u * (1.0 / u).ln_1p()
    }
}

/// `φ′(u) = ln(1 + 1/u) − 1/(1 + u)`.
pub fn phi_deriv(u: f64) -> Result<f64> {
    check_arg("phi_deriv", u)?;
    Ok(phi_deriv_unchecked(u))
}

fn phi_deriv_unchecked(u: f64) -> f64 {
    let x = 1.0 / u;
    if x < 0.01 {
        // Σ_{k≥2} (−1)^k (k−1)/k x^k
        let mut term = x * x;
        let mut sum = 0.0;
        for k in 2..30 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (k - 1) as f64 / k as f64 * term;
            term *= x;
        }
        sum
    } else if u < 1e-12 {
        u.ln_1p() - u.ln() - 1.0 / (1.0 + u)
    } else {
        x.ln_1p() - 1.0 / (1.0 + u)
    }
}

/// Inverse of [`phi`] on `(0, 1)`.
pub fn phi_inv(v: f64) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::domain("phi_inv", format!("v must lie in (0,1), got {v}")));
    }
    let u0 = if v > 0.5 { 0.5 / (1.0 - v) } else { v / (1.0 / v).ln() };
    let t = bracketed_newton_log(
        "phi_inv",
        |t| {
            let u = t.exp();
            Ok((phi_unchecked(u) - v, u * phi_deriv_unchecked(u)))
        },
        (1e-300f64).ln(),
        (1e300f64).ln(),
        u0.ln(),
    )?;
    Ok(t.exp())
}

/// `κ*(y) = y φ⁻¹(1/y)`, which behaves like `1 / ln y` as `y → ∞`.
pub fn kappa_star(y: f64) -> Result<f64> {
    if !(y.is_finite() && y > 1.0) {
        return Err(Error::domain("kappa_star", format!("y must be finite and > 1, got {y}")));
    }
    Ok(y * phi_inv(1.0 / y)?)
}
