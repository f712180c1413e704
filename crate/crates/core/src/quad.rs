//! Deterministic quadrature for the analytically characterized quantities of
//! the model, evaluated with the global parameters held at fixed values.
//!
//! Every integral over the local parameter is taken in `s = ln u`. The
//! integrand is located on a coarse grid, its log-peak refined by
//! golden-section search, and the region within `e^{-60}` of the peak is
//! handed to an adaptive Gauss–Kronrod (10/21) rule.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{ensure_positive, Error, Result};
use crate::model::kl_neighborhood;
use crate::prior::{LocalPrior, PriorSpec};
use crate::special::{ln_beta, ln_gamma, ln_gamma_ratio, ln_pow_self_over_gamma, rho};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("quad_config", "rel_tol", self.rel_tol)?;
        ensure_positive("quad_config", "abs_tol", self.abs_tol)?;
        if self.max_subdivisions == 0 {
            return Err(Error::Input("max_subdivisions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub subintervals: usize,
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], …, XGK[9]`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = WGK[10] * fc;
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let h = half.abs();
    let value = resk * half;
    resabs *= h;
    resasc *= h;
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment { a, b, value, error }
}

/// Adaptive Gauss–Kronrod integration over the given breakpoints.
fn integrate_pieces(f: &impl Fn(f64) -> f64, breaks: &[f64], cfg: &QuadConfig, op: &'static str) -> Result<Integral> {
    cfg.validate()?;
    let mut heap: BinaryHeap<Segment> = breaks.windows(2).map(|w| kronrod21(f, w[0], w[1])).collect();
    let total = |heap: &BinaryHeap<Segment>| {
        heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error))
    };
    loop {
        let (value, error) = total(&heap);
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::numeric(op, "integrand produced non-finite values", error));
        }
        if error <= cfg.abs_tol.max(cfg.rel_tol * value.abs()) {
            return Ok(Integral {
                value,
                abs_error: error,
                subintervals: heap.len(),
            });
        }
        if heap.len() >= cfg.max_subdivisions.max(breaks.len() - 1) {
            return Err(Error::numeric(
                op,
                format!("subdivision limit {} reached", cfg.max_subdivisions),
                error,
            ));
        }
        let worst = heap.pop().expect("at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::numeric(op, "interval cannot be bisected further", error));
        }
        heap.push(kronrod21(f, worst.a, mid));
        heap.push(kronrod21(f, mid, worst.b));
    }
}

/// `∫_a^b f(x) dx` to `max(abs_tol, rel_tol·|I|)`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, cfg: &QuadConfig) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integrate", format!("limits must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            abs_error: 0.0,
            subintervals: 0,
        });
    }
    integrate_pieces(&f, &[a, b], cfg, "integrate")
}

const S_MIN: f64 = -700.0;
const S_MAX: f64 = 700.0;
const GRID_STEP: f64 = 0.25;
const LOG_DROP: f64 = 60.0;
const MAX_PIECE: f64 = 8.0;

/// A positive integrand `exp(ln_f(s))` on `s ∈ [-700, 700]`, with its
/// peak located and its effective support bracketed.
pub struct LogPeak<F> {
    ln_f: F,
    pub peak_s: f64,
    pub peak: f64,
    pub lo: f64,
    pub hi: f64,
}

impl<F: Fn(f64) -> f64> LogPeak<F> {
    pub fn locate(ln_f: F, op: &'static str) -> Result<Self> {
        let steps = ((S_MAX - S_MIN) / GRID_STEP).round() as usize;
        let grid: Vec<(f64, f64)> = (0..=steps)
            .map(|k| {
                let s = S_MIN + k as f64 * GRID_STEP;
                (s, ln_f(s))
            })
            .collect();
        let (k_best, &(s_best, v_best)) = grid
            .iter()
            .enumerate()
            .filter(|(_, (_, v))| !v.is_nan())
            .max_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
            .ok_or_else(|| Error::numeric(op, "integrand is NaN everywhere", f64::NAN))?;
        if !v_best.is_finite() {
            return Err(Error::numeric(op, format!("integrand log-peak is {v_best}"), f64::NAN));
        }
        let (peak_s, peak) = golden_max(&ln_f, (s_best - GRID_STEP).max(S_MIN), (s_best + GRID_STEP).min(S_MAX), s_best, v_best);
        let threshold = peak - LOG_DROP;
        let first = grid.iter().position(|(_, v)| *v > threshold).unwrap_or(k_best);
        let last = grid.iter().rposition(|(_, v)| *v > threshold).unwrap_or(k_best);
        if first == 0 || last == steps {
            return Err(Error::numeric(
                op,
                "integrand mass extends past the representable range of u",
                f64::INFINITY,
            ));
        }
        Ok(LogPeak {
            ln_f,
            peak_s,
            peak,
            lo: grid[first - 1].0,
            hi: grid[last + 1].0,
        })
    }

    /// `∫ exp(ln_f(s) − peak) g(s) ds` over the bracketed support.
    pub fn integrate_scaled(&self, g: impl Fn(f64) -> f64, cfg: &QuadConfig, op: &'static str) -> Result<Integral> {
        let mut breaks = Vec::new();
        push_pieces(&mut breaks, self.lo, self.peak_s);
        push_pieces(&mut breaks, self.peak_s, self.hi);
        breaks.push(self.hi);
        breaks.dedup();
        let f = |s: f64| {
            let v = (self.ln_f)(s) - self.peak;
            if v < -745.0 {
                0.0
            } else {
                v.exp() * g(s)
            }
        };
        integrate_pieces(&f, &breaks, cfg, op)
    }

    /// `ln ∫ exp(ln_f(s)) ds`.
    pub fn ln_integral(&self, cfg: &QuadConfig, op: &'static str) -> Result<f64> {
        let r = self.integrate_scaled(|_| 1.0, cfg, op)?;
        Ok(self.peak + r.value.ln())
    }
}

fn push_pieces(breaks: &mut Vec<f64>, a: f64, b: f64) {
    let n = ((b - a) / MAX_PIECE).ceil().max(1.0) as usize;
    for k in 0..n {
        breaks.push(a + (b - a) * k as f64 / n as f64);
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, s0: f64, v0: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let s = 0.5 * (a + b);
    let v = f(s);
    if v.is_finite() && v >= v0 {
        (s, v)
    } else {
        (s0, v0)
    }
}

/// `ξ = 1/λ − 1 − ln(1/λ)`, the exponent driving the marginal prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiValue {
    pub xi: f64,
}

impl XiValue {
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        ensure_positive("xi", "lambda", lambda)?;
        Ok(XiValue {
            xi: rho(1.0 / lambda),
        })
    }
}

/// Marginal prior density `p(λ)` with `β = τ = 1`.
///
/// Only the family and `(a, b)` of `prior` are read. The point-mass family
/// has the closed form `IG(2, 1)`.
pub fn marginal_prior_density(lambda: f64, prior: &PriorSpec, cfg: &QuadConfig) -> Result<f64> {
    const OP: &str = "marginal_prior_density";
    prior.validate()?;
    let xi = XiValue::from_lambda(lambda)?.xi;
    let local = prior.local_prior();
    if let Some(u0) = local.point_mass() {
        return Ok((ln_pow_self_over_gamma(u0) - u0 * xi - 2.0 * lambda.ln() + u0.ln()).exp() / u0);
    }
    if xi == 0.0 && prior.b <= 0.5 {
        return Err(Error::domain(
            OP,
            format!("density is unbounded at lambda = 1 when b <= 1/2 (b = {})", prior.b),
        ));
    }
    let peak = LogPeak::locate(
        |s: f64| {
            let u = s.exp();
            local.ln_density(u) + s + ln_pow_self_over_gamma(u) - u * xi
        },
        OP,
    )?;
    Ok((peak.ln_integral(cfg, OP)? - 2.0 * lambda.ln()).exp())
}

/// `ln(1 + x/y)` for positive `x, y` without overflow of the ratio.
fn ln1p_ratio(x: f64, y: f64) -> f64 {
    if x > y {
        x.ln() - y.ln() + (y / x).ln_1p()
    } else {
        (x / y).ln_1p()
    }
}

/// Posterior over `s = ln u` for one observation with `η = 1` and fixed
/// `(β, τ)`.
struct UPosterior<'a> {
    local: &'a dyn LocalPrior,
    y: f64,
    delta: f64,
    beta: f64,
    tau: f64,
}

impl UPosterior<'_> {
    fn ln_weight(&self, s: f64) -> f64 {
        let u = s.exp();
        let nu = self.tau * u;
        let yp = self.delta * self.y;
        self.local.ln_density(u) + s + ln_gamma_ratio(nu + 1.0, self.delta)
            - self.delta * (self.beta * nu).ln()
            - (nu + self.delta + 1.0) * ln1p_ratio(yp, self.beta * nu)
    }

    fn nu(&self, s: f64) -> f64 {
        self.tau * s.exp()
    }
}

/// Posterior expectations needed for the shrinkage summaries.
struct KappaIntegrals {
    kappa: f64,
    one_minus_kappa: f64,
}

fn kappa_integrals<'p>(
    post: &'p UPosterior<'p>,
    cfg: &QuadConfig,
    op: &'static str,
) -> Result<(KappaIntegrals, LogPeak<impl Fn(f64) -> f64 + 'p>)> {
    let peak = LogPeak::locate(move |s| post.ln_weight(s), op)?;
    let z = peak.integrate_scaled(|_| 1.0, cfg, op)?.value;
    let delta = post.delta;
    let k = peak
        .integrate_scaled(
            |s| {
                let nu = post.nu(s);
                nu / (delta + nu)
            },
            cfg,
            op,
        )?
        .value;
    let c = peak.integrate_scaled(|s| delta / (delta + post.nu(s)), cfg, op)?.value;
    Ok((
        KappaIntegrals {
            kappa: k / z,
            one_minus_kappa: c / z,
        },
        peak,
    ))
}

/// `E(κ | y)` with `β = τ = 1`, `κ = u/(δ + u)`.
pub fn posterior_kappa_mean(y: f64, delta: f64, prior: &PriorSpec, cfg: &QuadConfig) -> Result<f64> {
    const OP: &str = "posterior_kappa_mean";
    ensure_positive(OP, "y", y)?;
    ensure_positive(OP, "delta", delta)?;
    prior.validate()?;
    let local = prior.local_prior();
    if let Some(u0) = local.point_mass() {
        return Ok(u0 / (delta + u0));
    }
    let post = UPosterior {
        local: local.as_ref(),
        y,
        delta,
        beta: 1.0,
        tau: 1.0,
    };
    let kappa = kappa_integrals(&post, cfg, OP)?.0.kappa;
    Ok(kappa)
}

/// Posterior mean and variance of `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMoments {
    pub mean: f64,
    /// `None` when `δ ≤ 1`, where the conditional second moment is not
    /// finite for every `u`.
    pub variance: Option<f64>,
    pub kappa_mean: f64,
}

/// Posterior moments of `λ` given `y`, with `τ = 1` and `β` fixed.
pub fn posterior_lambda_moments(y: f64, delta: f64, prior: &PriorSpec, beta: f64, cfg: &QuadConfig) -> Result<LambdaMoments> {
    const OP: &str = "posterior_lambda_moments";
    ensure_positive(OP, "y", y)?;
    ensure_positive(OP, "delta", delta)?;
    ensure_positive(OP, "beta", beta)?;
    prior.validate()?;
    let local = prior.local_prior();
    let cond_mean = |nu: f64| (delta * y + beta * nu) / (delta + nu);
    if let Some(u0) = local.point_mass() {
        let m = cond_mean(u0);
        return Ok(LambdaMoments {
            mean: m,
            variance: (delta > 1.0).then(|| m * m / (delta + u0 - 1.0)),
            kappa_mean: u0 / (delta + u0),
        });
    }
    let post = UPosterior {
        local: local.as_ref(),
        y,
        delta,
        beta,
        tau: 1.0,
    };
    let (k, peak) = kappa_integrals(&post, cfg, OP)?;
    let mean = beta + k.one_minus_kappa * (y - beta);
    let variance = if delta > 1.0 {
        let z = peak.integrate_scaled(|_| 1.0, cfg, OP)?.value;
        // E[Var(λ|u)] + Var(E[λ|u])
        let v = peak.integrate_scaled(
            |s| {
                let nu = post.nu(s);
                let m = cond_mean(nu);
                m * m / (delta + nu - 1.0) + (m - mean).powi(2)
            },
            cfg,
            OP,
        )?;
        Some(v.value / z)
    } else {
        None
    };
    Ok(LambdaMoments {
        mean,
        variance,
        kappa_mean: k.kappa,
    })
}

/// Prior probability (`β = τ = 1`) of the KL neighbourhood of `λ₀`.
pub fn prior_kl_mass(lambda0: f64, eps: f64, delta: f64, prior: &PriorSpec, cfg: &QuadConfig) -> Result<f64> {
    const OP: &str = "prior_kl_mass";
    prior.validate()?;
    let nb = kl_neighborhood(lambda0, eps, delta)?;
    let (t_lo, t_hi) = (nb.lo.ln(), nb.hi.ln());
    let mut breaks = vec![t_lo];
    if t_lo < 0.0 && t_hi > 0.0 {
        breaks.push(0.0);
    }
    breaks.push(t_hi);
    let inner = *cfg;
    let density = |t: f64| {
        let lambda = t.exp();
        marginal_prior_density(lambda, prior, &inner).map(|p| p * lambda)
    };
    // Surface the first inner failure instead of integrating NaNs.
    let failure = std::cell::RefCell::new(None);
    let f = |t: f64| match density(t) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let r = integrate_pieces(&f, &breaks, cfg, OP);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(r?.value.clamp(0.0, 1.0))
}

/// `π_IRB(u; b, a)` evaluated from its three-latent integral representation
/// (`s`, `w`, `z` integrated numerically, innermost first). Requires `b < 1`.
pub fn irb_density_latent(u: f64, b: f64, a: f64, cfg: &QuadConfig) -> Result<f64> {
    const OP: &str = "irb_density_latent";
    ensure_positive(OP, "u", u)?;
    ensure_positive(OP, "a", a)?;
    ensure_positive(OP, "b", b)?;
    if b >= 1.0 {
        return Err(Error::domain(OP, format!("needs b < 1, got {b}")));
    }
    let failure = std::cell::RefCell::new(None);
    let guard = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let ln_u = u.ln();
    // ln ∫ z^c e^{-z(1+u)} / Γ(c+1) dz, in t = ln z split at the peak.
    let ln_z_integral = |c: f64| -> Result<f64> {
        let k = c + 1.0;
        let tp = (k / (1.0 + u)).ln();
        let ln_g = |t: f64| k * t - t.exp() * (1.0 + u);
        let peak = ln_g(tp);
        let v = integrate_pieces(&|t| (ln_g(t) - peak).exp(), &[tp - 50.0 / k - 5.0, tp, tp + 6.0], cfg, OP)?.value;
        Ok(peak - ln_gamma(k) + v.ln())
    };
    // ∫ w^{b+a-1} e^{-w} / Γ(b+a) · u^{c-1} Z(c) dw with c = s + w, in x = ln w.
    let ba = b + a;
    let ln_gamma_ba = ln_gamma(ba);
    let w_integral = |s: f64| -> Result<f64> {
        let f = |x: f64| {
            let w = x.exp();
            let c = s + w;
            guard(ln_z_integral(c).map(|lz| (ba * x - w - ln_gamma_ba + (c - 1.0) * ln_u + lz).exp()))
        };
        Ok(integrate_pieces(&f, &[-60.0 / ba - 5.0, ba.ln(), 150f64.ln()], cfg, OP)?.value)
    };
    // ∫ s^{-b} / Γ(1-b) · W(s) ds, in x = ln s.
    let l = (1.0 / u).ln_1p();
    let sp = ((1.0 - b) / l).ln();
    let lo = (-60.0 / (1.0 - b) - 5.0).min(sp - 10.0);
    let hi = (80.0 / l).max(50.0).ln().max(sp + 3.0);
    let ln_gamma_1b = ln_gamma(1.0 - b);
    let f = |x: f64| {
        let s = x.exp();
        guard(w_integral(s).map(|v| v * ((1.0 - b) * x - ln_gamma_1b).exp()))
    };
    let r = integrate_pieces(&f, &[lo, sp, hi], cfg, OP);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(r?.value / ln_beta(b, a).exp())
}
