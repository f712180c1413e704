//! Random-variate generators used by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{ensure_positive, Error, Result};
use crate::rng::RngHandle;

/// `Ga(shape, rate)`.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngHandle) -> Result<f64> {
    ensure_positive("sample_gamma", "shape", shape)?;
    ensure_positive("sample_gamma", "rate", rate)?;
    Ok(gamma_unchecked(shape, rate, rng))
}

pub(crate) fn gamma_unchecked(shape: f64, rate: f64, rng: &mut RngHandle) -> f64 {
    // Parameters were validated by the caller; construction cannot fail.
    let g = Gamma::new(shape, 1.0).expect("validated gamma parameters");
    g.sample(rng) / rate
}

/// `IG(shape, scale)`, i.e. the reciprocal of a `Ga(shape, scale)` draw.
pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RngHandle) -> Result<f64> {
    ensure_positive("sample_inverse_gamma", "shape", shape)?;
    ensure_positive("sample_inverse_gamma", "scale", scale)?;
    Ok(1.0 / gamma_unchecked(shape, scale, rng))
}

/// Parameters of the generalized inverse Gaussian law with density
/// proportional to `x^{p-1} exp(-b x / 2 - gamma / (2 x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub p: f64,
    pub b: f64,
    pub gamma: f64,
}

impl GigParams {
    pub fn new(p: f64, b: f64, gamma: f64) -> Result<Self> {
        let params = GigParams { p, b, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let GigParams { p, b, gamma } = *self;
        let ok = p.is_finite()
            && b.is_finite()
            && gamma.is_finite()
            && b >= 0.0
            && gamma >= 0.0
            && match (b > 0.0, gamma > 0.0) {
                (true, true) => true,
                (true, false) => p > 0.0,
                (false, true) => p < 0.0,
                (false, false) => false,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::domain("gig", format!("non-integrable parameters p={p}, b={b}, gamma={gamma}")))
        }
    }

    /// Log of the unnormalized density.
    pub fn ln_kernel(&self, x: f64) -> f64 {
        (self.p - 1.0) * x.ln() - 0.5 * self.b * x - 0.5 * self.gamma / x
    }
}

/// Products `b·gamma` below this are treated as one of the limiting laws.
const GIG_OMEGA_MIN: f64 = 1e-12;

/// Draw from `GIG(p, b, gamma)`.
///
/// Uses the Hörmann–Leydold family of rejection samplers on the symmetric
/// form `x^{λ-1} exp(-ω (x + 1/x) / 2)` with `λ = |p|`, `ω = sqrt(b·gamma)`,
/// then rescales by `sqrt(gamma / b)` (and inverts for negative `p`).
pub fn sample_gig(params: GigParams, rng: &mut RngHandle) -> Result<f64> {
    params.validate()?;
    let GigParams { p, b, gamma } = params;
    let omega = (b * gamma).sqrt();
    if gamma == 0.0 || (omega < GIG_OMEGA_MIN && p > 0.0) {
        return Ok(gamma_unchecked(p, 0.5 * b, rng));
    }
    if b == 0.0 || (omega < GIG_OMEGA_MIN && p < 0.0) {
        return Ok(1.0 / gamma_unchecked(-p, 0.5 * gamma, rng));
    }
    let lambda = p.abs();
    let alpha = (gamma / b).sqrt();
    let y = if lambda > 2.0 || omega > 3.0 {
        gig_rou_shift(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        gig_rou_noshift(lambda, omega, rng)
    } else {
        gig_concave_hat(lambda, omega, rng)
    };
    Ok(if p < 0.0 { alpha / y } else { alpha * y })
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0) * (lambda - 1.0) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda) * (1.0 - lambda) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

/// Ratio of uniforms without mode shift.
fn gig_rou_noshift(lambda: f64, omega: f64, rng: &mut RngHandle) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0) * (lambda + 1.0) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.uniform();
        let v = rng.uniform();
        let x = u / v;
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Ratio of uniforms with shift by the mode (minimal bounding rectangle).
fn gig_rou_shift(lambda: f64, omega: f64, rng: &mut RngHandle) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // Extremes of (x - xm) sqrt(f(x)) are roots of a cubic.
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.uniform() * (uplus - uminus);
        let v = rng.uniform();
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Rejection from a piecewise hat for `0 ≤ λ < 1` and small `ω`, where the
/// density is not T-concave.
fn gig_concave_hat(lambda: f64, omega: f64, rng: &mut RngHandle) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.uniform();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let start = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * start).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        let u = rng.uniform() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Draw from the scaled beta (beta prime) law `π_SB(u; a, b)`.
///
/// Equivalent to `x / (1 - x)` with `x ~ Beta(a, b)`, computed as a ratio of
/// two independent gamma draws to avoid the `1 - x` cancellation.
pub fn sample_sb(a: f64, b: f64, rng: &mut RngHandle) -> Result<f64> {
    ensure_positive("sample_sb", "a", a)?;
    ensure_positive("sample_sb", "b", b)?;
    Ok(sb_unchecked(a, b, rng))
}

fn sb_unchecked(a: f64, b: f64, rng: &mut RngHandle) -> f64 {
    loop {
        let num = gamma_unchecked(a, 1.0, rng);
        let den = gamma_unchecked(b, 1.0, rng);
        let u = num / den;
        if u > 0.0 && u.is_finite() {
            return u;
        }
    }
}

/// Draw from the inverse rescaled beta law `π_IRB(u; b, a)`.
///
/// `w = ln(1 + 1/u)` is beta prime with parameters `(b, a)`, so
/// `u = 1 / (e^w - 1)`.
pub fn sample_irb(b: f64, a: f64, rng: &mut RngHandle) -> Result<f64> {
    ensure_positive("sample_irb", "b", b)?;
    ensure_positive("sample_irb", "a", a)?;
    loop {
        let w = sb_unchecked(b, a, rng);
        let u = 1.0 / w.exp_m1();
        if u > 0.0 && u.is_finite() {
            return Ok(u);
        }
    }
}

/// Draw from `π_IRB(u; b, a)` through the three-latent `(s, w, z)` mixture
/// used by the IRB Gibbs sampler (requires `b < 1`).
///
/// Integrating `u` and then `z` out of the joint shows `z ~ Exp(1)`
/// independently of `(s, w)`, and `(s, w)` is a mixture over
/// `r ~ π_SB(b, a)` of `Ga(1 - b, r) ⊗ Ga(a + b, 1 + r)`; finally
/// `u | s, w, z ~ Ga(s + w, z)`.
pub fn sample_irb_latent(b: f64, a: f64, rng: &mut RngHandle) -> Result<f64> {
    ensure_positive("sample_irb_latent", "b", b)?;
    ensure_positive("sample_irb_latent", "a", a)?;
    if b >= 1.0 {
        return Err(Error::domain("sample_irb_latent", format!("needs b < 1, got {b}")));
    }
    loop {
        let r = sb_unchecked(b, a, rng);
        let s = gamma_unchecked(1.0 - b, r, rng);
        let w = gamma_unchecked(a + b, 1.0 + r, rng);
        let z = -rng.uniform().ln();
        let u = gamma_unchecked(s + w, z, rng);
        if u > 0.0 && u.is_finite() {
            return Ok(u);
        }
    }
}

/// Absolute value of a central Student t draw with `df` degrees of freedom.
pub fn sample_abs_t(df: f64, rng: &mut RngHandle) -> Result<f64> {
    ensure_positive("sample_abs_t", "df", df)?;
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let chi2 = 2.0 * gamma_unchecked(0.5 * df, 1.0, rng);
    Ok((z / (chi2 / df).sqrt()).abs())
}
