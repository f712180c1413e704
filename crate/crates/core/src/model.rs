//! The gamma observation model and its closed-form pieces.
//!
//! ```text
//! y_i | λ_i      ~ Ga(δ_i, δ_i / (λ_i η_i))
//! λ_i | u_i      ~ IG(1 + τ u_i, β τ u_i)
//! u_i            ~ π(u)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::prior::{irb_ln_density_unchecked, sb_ln_density_unchecked};
use crate::special::{ln1p_gap, rho};

/// One gamma-distributed data point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    /// Known shape `δ`.
    pub delta: f64,
    /// Known structural offset `η`, so that `E(y) = λ η`.
    pub eta: f64,
}

impl Observation {
    pub fn new(y: f64, delta: f64) -> Result<Self> {
        Self::with_offset(y, delta, 1.0)
    }

    pub fn with_offset(y: f64, delta: f64, eta: f64) -> Result<Self> {
        ensure_positive("observation", "y", y)?;
        ensure_positive("observation", "delta", delta)?;
        ensure_positive("observation", "eta", eta)?;
        Ok(Observation { y, delta, eta })
    }

    /// Offset-adjusted observation `y / η`; it enters every `λ` conditional.
    pub fn scaled_y(&self) -> f64 {
        self.y / self.eta
    }
}

/// `ln π_SB(u; a, b)`.
pub fn sb_ln_density(u: f64, a: f64, b: f64) -> Result<f64> {
    ensure_positive("sb_density", "u", u)?;
    ensure_positive("sb_density", "a", a)?;
    ensure_positive("sb_density", "b", b)?;
    Ok(sb_ln_density_unchecked(u, a, b))
}

/// `π_SB(u; a, b) = u^{a-1} / (B(a,b) (1+u)^{a+b})`.
pub fn sb_density(u: f64, a: f64, b: f64) -> Result<f64> {
    sb_ln_density(u, a, b).map(f64::exp)
}

/// `ln π_IRB(u; b, a)`.
pub fn irb_ln_density(u: f64, b: f64, a: f64) -> Result<f64> {
    ensure_positive("irb_density", "u", u)?;
    ensure_positive("irb_density", "b", b)?;
    ensure_positive("irb_density", "a", a)?;
    Ok(irb_ln_density_unchecked(u, b, a))
}

/// `π_IRB(u; b, a) = [1/(u(1+u))] {ln(1+1/u)}^{b-1} / (B(b,a) {1+ln(1+1/u)}^{b+a})`.
pub fn irb_density(u: f64, b: f64, a: f64) -> Result<f64> {
    irb_ln_density(u, b, a).map(f64::exp)
}

/// `κ = τu / (δ + τu)`.
pub fn shrinkage_factor(tau: f64, u: f64, delta: f64) -> Result<f64> {
    ensure_positive("shrinkage_factor", "tau", tau)?;
    ensure_positive("shrinkage_factor", "u", u)?;
    ensure_positive("shrinkage_factor", "delta", delta)?;
    let nu = tau * u;
    Ok(nu / (delta + nu))
}

/// Inverse-gamma law given by its shape and scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGamma {
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.scale / (self.shape - 1.0))
    }

    pub fn second_moment(&self) -> Option<f64> {
        (self.shape > 2.0).then(|| self.scale * self.scale / ((self.shape - 1.0) * (self.shape - 2.0)))
    }
}

/// `λ | y, ν, β ~ IG(1 + δ + ν, δ y/η + β ν)` with `ν = τ u`.
pub fn conditional_lambda_posterior(obs: &Observation, nu: f64, beta: f64) -> Result<InverseGamma> {
    ensure_positive("conditional_lambda_posterior", "nu", nu)?;
    ensure_positive("conditional_lambda_posterior", "beta", beta)?;
    Ok(InverseGamma {
        shape: 1.0 + obs.delta + nu,
        scale: obs.delta * obs.scaled_y() + beta * nu,
    })
}

/// Kullback–Leibler divergence `δ(λ₀/λ − 1 − ln(λ₀/λ))` between
/// `Ga(δ, δ/λ₀)` and `Ga(δ, δ/λ)`.
pub fn kl_divergence(lambda0: f64, lambda: f64, delta: f64) -> Result<f64> {
    ensure_positive("kl_divergence", "lambda0", lambda0)?;
    ensure_positive("kl_divergence", "lambda", lambda)?;
    ensure_positive("kl_divergence", "delta", delta)?;
    Ok(delta * rho(lambda0 / lambda))
}

/// The open set `{λ : D(λ₀, λ) < ε}`, an interval in `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlNeighborhood {
    pub lo: f64,
    pub hi: f64,
    /// `c^L`: `ρ(1 − c^L) = ε/δ` with `ρ(x) = x − 1 − ln x`.
    pub c_lower: f64,
    /// `c^U`: `ρ(1 + c^U) = ε/δ`.
    pub c_upper: f64,
}

impl KlNeighborhood {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.lo && lambda < self.hi
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) < 0 < f(hi)
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn kl_neighborhood(lambda0: f64, eps: f64, delta: f64) -> Result<KlNeighborhood> {
    ensure_positive("kl_neighborhood", "lambda0", lambda0)?;
    ensure_positive("kl_neighborhood", "delta", delta)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::domain("kl_neighborhood", format!("eps must be finite and > 0, got {eps}")));
    }
    let target = eps / delta;
    // ρ(1 + h) = h − ln(1 + h)
    let c_lower = bisect(0.0, 1.0, |c| ln1p_gap(-c) - target);
    let mut hi = 1.0;
    while ln1p_gap(hi) < target {
        hi *= 2.0;
    }
    let c_upper = bisect(0.0, hi, |c| ln1p_gap(c) - target);
    let inv0 = 1.0 / lambda0;
    Ok(KlNeighborhood {
        lo: 1.0 / (inv0 * (1.0 + c_upper)),
        hi: 1.0 / (inv0 * (1.0 - c_lower)),
        c_lower,
        c_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn observation_validation() {
        assert!(Observation::new(1.0, 5.0).is_ok());
        assert!(Observation::new(0.0, 5.0).is_err());
        assert!(Observation::with_offset(1.0, 5.0, -1.0).is_err());
        assert_eq!(Observation::with_offset(6.0, 1.0, 2.0).unwrap().scaled_y(), 3.0);
    }

    #[test]
    fn sb_density_at_one() {
        // B(2, 1/2) = Γ(2)Γ(1/2)/Γ(5/2) = 4/3
        let lb = crate::special::log_beta(2.0, 0.5).unwrap();
        assert!((lb - (4.0f64 / 3.0).ln()).abs() < 1e-14);
        let expected = 1.0 / (4.0 / 3.0 * 2f64.powf(2.5));
        assert!((sb_density(1.0, 2.0, 0.5).unwrap() / expected - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sb_left_tail_limit() {
        let b = 0.5;
        let inv_beta = 1.0 / crate::special::log_beta(2.0, b).unwrap().exp();
        let r = sb_density(1e-9, 2.0, b).unwrap() / 1e-9;
        assert!((r / inv_beta - 1.0).abs() < 1e-8);
    }

    #[test]
    fn densities_reject_nonpositive_u() {
        assert!(sb_density(0.0, 2.0, 0.5).is_err());
        assert!(irb_density(-1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn irb_right_tail_power() {
        let b = 0.5;
        let c1 = irb_density(1e6, b, 2.0).unwrap() * 1e6f64.powf(1.0 + b);
        let c2 = irb_density(1e9, b, 2.0).unwrap() * 1e9f64.powf(1.0 + b);
        assert!((c1 / c2 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn log_log_slopes() {
        let slope = |f: &dyn Fn(f64) -> f64, u1: f64, u2: f64| (f(u2).ln() - f(u1).ln()) / (u2.ln() - u1.ln());
        let (a, b) = (2.0, 0.5);
        let sb = |u: f64| sb_density(u, a, b).unwrap();
        let irb = |u: f64| irb_density(u, b, a).unwrap();
        assert!((slope(&sb, 1e-8, 1e-7) - (a - 1.0)).abs() < 0.02);
        assert!((slope(&sb, 1e7, 1e8) - (-1.0 - b)).abs() < 0.02);
        assert!((slope(&irb, 1e7, 1e8) - (-1.0 - b)).abs() < 0.02);
        // u π_IRB(u) {ln(1/u)}^{1+a} is bounded above and below near 0.
        let vals: Vec<f64> = [1e-10, 1e-8, 1e-6, 1e-4]
            .iter()
            .map(|&u: &f64| u * irb(u) * (1.0 / u).ln().powf(1.0 + a))
            .collect();
        let (lo, hi) = vals.iter().fold((f64::MAX, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi / lo < 2.0 && lo > 0.0, "{vals:?}");
    }

    #[test]
    fn shrinkage_factor_examples() {
        assert_eq!(shrinkage_factor(1.0, 1.0, 1.0).unwrap(), 0.5);
        assert!((shrinkage_factor(1.0, 1.0, 5.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(shrinkage_factor(1.0, 1e15, 5.0).unwrap() > 1.0 - 1e-14);
        assert!(shrinkage_factor(0.0, 1.0, 5.0).is_err());
    }

    #[test]
    fn conjugate_lambda_update() {
        let obs = Observation::new(7.0, 5.0).unwrap();
        let ig = conditional_lambda_posterior(&obs, 1.0, 1.0).unwrap();
        assert_eq!((ig.shape, ig.scale), (7.0, 36.0));
        assert_eq!(ig.mean(), Some(6.0));
        // ν → ∞: mean → β
        let far = conditional_lambda_posterior(&obs, 1e12, 2.5).unwrap();
        assert!((far.mean().unwrap() - 2.5).abs() < 1e-9);
        let offset = Observation::with_offset(14.0, 5.0, 2.0).unwrap();
        assert_eq!(conditional_lambda_posterior(&offset, 1.0, 1.0).unwrap(), ig);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(2.0, 2.0, 5.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((kl_divergence(1.0, e, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let d1 = kl_divergence(1.3, 0.7, 2.0).unwrap();
        let d2 = kl_divergence(1.3, 0.7, 4.0).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-15);
    }

    #[test]
    fn kl_neighborhood_endpoints_and_width() {
        for &(l0, eps, delta) in &[(1.0, 1e-2, 5.0), (3.0, 1e-4, 5.0), (0.2, 0.5, 1.0), (1.0, 1e-8, 10.0)] {
            let nb = kl_neighborhood(l0, eps, delta).unwrap();
            let dlo = kl_divergence(l0, nb.lo, delta).unwrap();
            let dhi = kl_divergence(l0, nb.hi, delta).unwrap();
            assert!((dlo - eps).abs() <= 1e-10 * eps, "{dlo} vs {eps}");
            assert!((dhi - eps).abs() <= 1e-10 * eps, "{dhi} vs {eps}");
            let inv0 = 1.0 / l0;
            let width = 1.0 / nb.lo - 1.0 / nb.hi;
            assert!(width > eps * inv0 / delta);
            assert!(nb.contains(l0));
        }
        assert!(kl_neighborhood(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn kl_neighborhood_shrinks() {
        let wide = kl_neighborhood(2.0, 1e-2, 5.0).unwrap();
        let narrow = kl_neighborhood(2.0, 1e-10, 5.0).unwrap();
        assert!(narrow.hi - narrow.lo < 1e-3 * (wide.hi - wide.lo));
        assert!((narrow.lo - 2.0).abs() < 1e-4 && (narrow.hi - 2.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn interior_points_are_inside(l0 in 0.1f64..10.0, eps in 1e-6f64..1.0, delta in 0.5f64..20.0, t in 0.001f64..0.999) {
            let nb = kl_neighborhood(l0, eps, delta).unwrap();
            let lambda = nb.lo + t * (nb.hi - nb.lo);
            prop_assert!(kl_divergence(l0, lambda, delta).unwrap() < eps * (1.0 + 1e-12));
        }

        #[test]
        fn posterior_mean_decomposition(y in 0.01f64..100.0, beta in 0.01f64..100.0, nu in 1e-4f64..1e4, delta in 0.1f64..50.0) {
            let kappa = nu / (delta + nu);
            let lhs = (delta * y + beta * nu) / (delta + nu) - beta;
            let rhs = (1.0 - kappa) * (y - beta);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (y.abs() + beta.abs()));
        }
    }
}
