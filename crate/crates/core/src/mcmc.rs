//! Metropolis-within-Gibbs samplers for the SB, IRB and GL hierarchies.
//!
//! Every family is a [`GibbsKernel`] registered by name in a
//! [`KernelRegistry`]; [`run_chain`] picks the kernel matching the prior.
//! The non-conjugate `ν_i` (and, under GL, `τ`) updates are independence
//! Metropolis–Hastings steps whose proposal is a gamma law fitted to the
//! conditional by matching log-density derivatives ([`miller_gamma_approx`]).

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{effective_sample_size, quantile_sorted};
use crate::dist::{gamma_unchecked, sample_gig, GigParams};
use crate::error::{Error, Result};
use crate::model::Observation;
use crate::prior::{GlobalParam, PriorFamily, PriorSpec};
use crate::rng::RngHandle;
use crate::special::{digamma, ln_pow_self_over_gamma, trigamma};

/// Acceptance rates below this trigger a warning in [`ChainOutput::warnings`].
pub const LOW_ACCEPTANCE: f64 = 0.2;
/// Burn-in window length used to detect a stuck proposal.
const ADAPT_WINDOW: u64 = 200;
const ADAPT_MIN_ACCEPTANCE: f64 = 0.05;
/// Factor by which a stuck proposal's variance is inflated.
const INFLATE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burnin: usize,
    /// Number of stored draws.
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub miller_tol: f64,
    pub miller_max_iter: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burnin: 2000,
            samples: 3000,
            thin: 1,
            seed: 0,
            miller_tol: 1e-8,
            miller_max_iter: 50,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 || self.thin < 1 {
            return Err(Error::Input(format!(
                "samples and thin must be >= 1 (samples={}, thin={})",
                self.samples, self.thin
            )));
        }
        if !(self.miller_tol > 0.0) || self.miller_max_iter < 1 {
            return Err(Error::Input("miller_tol must be > 0 and miller_max_iter >= 1".into()));
        }
        Ok(())
    }
}

/// Family-specific latent variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Augmentation {
    Sb { t: Vec<f64> },
    Irb { s: Vec<f64>, w: Vec<f64>, z: Vec<f64> },
    Gl,
}

/// Current values of every unknown in the hierarchy.
///
/// `nu` holds `ν_i = τ u_i`; it is empty under GL where `ν_i ≡ τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub lambda: Vec<f64>,
    pub beta: f64,
    pub tau: f64,
    pub nu: Vec<f64>,
    pub aug: Augmentation,
}

fn all_valid(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite() && *v > 0.0)
}

impl ChainState {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn family(&self) -> PriorFamily {
        match self.aug {
            Augmentation::Sb { .. } => PriorFamily::Sb,
            Augmentation::Irb { .. } => PriorFamily::Irb,
            Augmentation::Gl => PriorFamily::Gl,
        }
    }

    /// `ν_i`, which is `τ` under GL.
    pub fn nu_at(&self, i: usize) -> f64 {
        match self.aug {
            Augmentation::Gl => self.tau,
            _ => self.nu[i],
        }
    }

    pub fn kappa(&self, data: &[Observation]) -> Vec<f64> {
        data.iter()
            .enumerate()
            .map(|(i, o)| {
                let nu = self.nu_at(i);
                nu / (o.delta + nu)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let scalars_ok = self.beta.is_finite() && self.beta > 0.0 && self.tau.is_finite() && self.tau > 0.0;
        let shapes_ok = match &self.aug {
            Augmentation::Sb { t } => self.nu.len() == n && t.len() == n && all_valid(t),
            Augmentation::Irb { s, w, z } => {
                self.nu.len() == n
                    && [s, w, z].iter().all(|v| v.len() == n && all_valid(v))
            }
            Augmentation::Gl => self.nu.is_empty(),
        };
        if n > 0 && scalars_ok && shapes_ok && all_valid(&self.lambda) && all_valid(&self.nu) {
            Ok(())
        } else {
            Err(Error::chain(None, "state", "invalid chain state"))
        }
    }
}

/// Gamma law fitted to a log-density by derivative matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MillerFit {
    pub shape: f64,
    pub rate: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The iteration left the valid region; `(shape, rate)` is the widened
    /// fallback `Ga(max(A, 1.05), shape/μ)`.
    pub fallback: bool,
}

impl MillerFit {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    fn ln_density(&self, x: f64) -> f64 {
        (self.shape - 1.0) * x.ln() - self.rate * x
    }

    /// Same mode (or mean when there is no interior mode) with the variance
    /// multiplied by [`INFLATE`].
    fn inflated(self) -> MillerFit {
        let (shape, rate) = if self.shape > 1.0 {
            let mode = (self.shape - 1.0) / self.rate;
            let shape = 1.0 + (self.shape - 1.0) / INFLATE;
            (shape, (shape - 1.0) / mode)
        } else {
            (self.shape / INFLATE, self.rate / INFLATE)
        };
        MillerFit { shape, rate, ..self }
    }
}

/// Fit `Ga(A, B)` to a log-density `f` from its first two derivatives.
///
/// Iterates `A = 1 − μ² f″(μ)`, `B = (A − 1)/μ − f′(μ)`, `μ ← A/B` until both
/// `ln A` and `ln B` move by less than `cfg.miller_tol`. If an iterate has
/// `A ≤ 0` or `B ≤ 0` the fit is abandoned and a fallback centred at the
/// last mean is returned with `fallback = true`.
pub fn miller_gamma_approx(
    d1: impl Fn(f64) -> f64,
    d2: impl Fn(f64) -> f64,
    init_mean: f64,
    cfg: &McmcConfig,
) -> Result<MillerFit> {
    if !(init_mean.is_finite() && init_mean > 0.0) {
        return Err(Error::domain("miller_gamma_approx", format!("init_mean must be > 0, got {init_mean}")));
    }
    let mut mu = init_mean;
    let mut last: Option<(f64, f64)> = None;
    for it in 1..=cfg.miller_max_iter {
        let (g1, g2) = (d1(mu), d2(mu));
        if !(g1.is_finite() && g2.is_finite()) {
            return Err(Error::numeric(
                "miller_gamma_approx",
                format!("non-finite derivative at {mu}: f'={g1}, f''={g2}"),
                f64::NAN,
            ));
        }
        let a = 1.0 - mu * mu * g2;
        let b = (a - 1.0) / mu - g1;
        if !(a > 0.0 && b > 0.0 && (a / b).is_finite()) {
            let shape = a.max(1.05);
            return Ok(MillerFit {
                shape,
                rate: shape / mu,
                iterations: it,
                converged: false,
                fallback: true,
            });
        }
        if let Some((pa, pb)) = last {
            if (a.ln() - pa.ln()).abs() < cfg.miller_tol && (b.ln() - pb.ln()).abs() < cfg.miller_tol {
                return Ok(MillerFit {
                    shape: a,
                    rate: b,
                    iterations: it,
                    converged: true,
                    fallback: false,
                });
            }
        }
        last = Some((a, b));
        mu = a / b;
    }
    let (shape, rate) = last.expect("at least one iteration");
    Ok(MillerFit {
        shape,
        rate,
        iterations: cfg.miller_max_iter,
        converged: false,
        fallback: false,
    })
}

/// Log-density (up to a constant) of `Ga(ν | shape, rate)·Ga(1/λ | ν, βν)`
/// and its first two derivatives in `ν`.
fn nu_target(nu: f64, shape: f64, rate: f64, beta: f64, lambda: f64) -> (f64, f64, f64) {
    let (ln_nu, ln_beta, ln_lambda) = (nu.ln(), beta.ln(), lambda.ln());
    let f = (shape - 1.0) * ln_nu - rate * nu + nu * ln_beta + ln_pow_self_over_gamma(nu) + nu
        - nu * ln_lambda
        - beta * nu / lambda;
    let f1 = (shape - 1.0) / nu - rate + ln_beta + ln_nu + 1.0 - digamma(nu) - ln_lambda - beta / lambda;
    let f2 = -(shape - 1.0) / (nu * nu) + 1.0 / nu - trigamma(nu);
    (f, f1, f2)
}

/// SB `ν`-conditional `Ga(ν | a, t/τ)·Ga(1/λ | ν, βν)`: `(f, f′, f″)`.
pub fn nu_logpdf_sb(nu: f64, t: f64, tau: f64, beta: f64, lambda: f64, a: f64) -> (f64, f64, f64) {
    nu_target(nu, a, t / tau, beta, lambda)
}

/// IRB `ν`-conditional `Ga(ν | s + w, z/τ)·Ga(1/λ | ν, βν)`: `(f, f′, f″)`.
pub fn nu_logpdf_irb(nu: f64, s: f64, w: f64, z: f64, tau: f64, beta: f64, lambda: f64) -> (f64, f64, f64) {
    nu_target(nu, s + w, z / tau, beta, lambda)
}

/// GL `τ`-conditional under a `Ga(a_τ, b_τ)` hyperprior: `(f, f′, f″)`.
pub fn tau_logpdf_gl(tau: f64, lambda: &[f64], beta: f64, a_tau: f64, b_tau: f64) -> (f64, f64, f64) {
    let n = lambda.len() as f64;
    let c: f64 = lambda.iter().map(|l| -l.ln() - beta / l).sum();
    let ln_tau = tau.ln();
    let f = (a_tau - 1.0) * ln_tau - b_tau * tau + n * (ln_pow_self_over_gamma(tau) + tau) + n * tau * beta.ln() + tau * c;
    let f1 = (a_tau - 1.0) / tau - b_tau + n * (ln_tau + 1.0 - digamma(tau)) + n * beta.ln() + c;
    let f2 = -(a_tau - 1.0) / (tau * tau) + n * (1.0 / tau - trigamma(tau));
    (f, f1, f2)
}

/// Bookkeeping for the independence-MH sites of one chain.
#[derive(Debug, Clone)]
pub struct MhState {
    cfg: McmcConfig,
    burnin: bool,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
    window_accepted: Vec<u64>,
    window_proposed: Vec<u64>,
    inflated: Vec<bool>,
    fallbacks: u64,
}

impl MhState {
    pub fn new(sites: usize, cfg: &McmcConfig) -> Self {
        MhState {
            cfg: *cfg,
            burnin: false,
            accepted: vec![0; sites],
            proposed: vec![0; sites],
            window_accepted: vec![0; sites],
            window_proposed: vec![0; sites],
            inflated: vec![false; sites],
            fallbacks: 0,
        }
    }

    /// While in burn-in, proposals that get stuck are widened; counts are
    /// reset when burn-in ends so reported rates cover stored sweeps only.
    pub fn set_burnin(&mut self, burnin: bool) {
        if self.burnin && !burnin {
            self.accepted.iter_mut().for_each(|c| *c = 0);
            self.proposed.iter_mut().for_each(|c| *c = 0);
        }
        self.burnin = burnin;
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    /// Number of proposals that used the fallback fit.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    /// One independence-MH update of a positive scalar whose log-density and
    /// derivatives are given by `target`.
    pub fn step(
        &mut self,
        site: usize,
        current: f64,
        target: impl Fn(f64) -> (f64, f64, f64),
        rng: &mut RngHandle,
    ) -> Result<f64> {
        let mut fit = miller_gamma_approx(|x| target(x).1, |x| target(x).2, current, &self.cfg)?;
        if fit.fallback {
            self.fallbacks += 1;
        }
        if self.inflated[site] {
            fit = fit.inflated();
        }
        let proposal = gamma_unchecked(fit.shape, fit.rate, rng);
        let accept = proposal > 0.0 && proposal.is_finite() && {
            let log_ratio = target(proposal).0 - target(current).0 + fit.ln_density(current) - fit.ln_density(proposal);
            if log_ratio.is_nan() {
                return Err(Error::chain(Some(site), "mh", format!("NaN acceptance ratio at proposal {proposal}")));
            }
            log_ratio >= 0.0 || rng.uniform().ln() < log_ratio
        };
        self.record(site, accept);
        Ok(if accept { proposal } else { current })
    }

    fn record(&mut self, site: usize, accept: bool) {
        self.proposed[site] += 1;
        self.accepted[site] += accept as u64;
        if !self.burnin {
            return;
        }
        self.window_proposed[site] += 1;
        self.window_accepted[site] += accept as u64;
        if self.window_proposed[site] == ADAPT_WINDOW {
            if (self.window_accepted[site] as f64) < ADAPT_MIN_ACCEPTANCE * ADAPT_WINDOW as f64 {
                self.inflated[site] = true;
            }
            self.window_proposed[site] = 0;
            self.window_accepted[site] = 0;
        }
    }
}

fn check(v: f64, unit: Option<usize>, step: &'static str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::chain(unit, step, format!("non-finite or non-positive value {v}")))
    }
}

fn gamma_hyper(p: &GlobalParam) -> Option<(f64, f64)> {
    match *p {
        GlobalParam::GammaPrior { shape, rate } => Some((shape, rate)),
        GlobalParam::Fixed { .. } => None,
    }
}

fn init_globals(data: &[Observation], prior: &PriorSpec) -> (f64, f64) {
    let beta = prior.beta.fixed_value().unwrap_or_else(|| {
        let w: f64 = data.iter().map(|o| o.delta).sum();
        data.iter().map(|o| o.delta * o.scaled_y()).sum::<f64>() / w
    });
    (beta, prior.tau.fixed_value().unwrap_or(1.0))
}

fn update_lambda(state: &mut ChainState, data: &[Observation], rng: &mut RngHandle) -> Result<()> {
    for (i, o) in data.iter().enumerate() {
        let nu = state.nu_at(i);
        let scale = o.delta * o.scaled_y() + state.beta * nu;
        state.lambda[i] = check(1.0 / gamma_unchecked(o.delta + nu + 1.0, scale, rng), Some(i), "lambda")?;
    }
    Ok(())
}

/// `β | ·` under the non-GL hierarchies.
fn update_beta(state: &mut ChainState, prior: &PriorSpec, rng: &mut RngHandle) -> Result<()> {
    if let Some((a_b, b_b)) = gamma_hyper(&prior.beta) {
        let n = state.n() as f64;
        let shape = state.nu.iter().sum::<f64>() + n + a_b;
        let rate = state.nu.iter().zip(&state.lambda).map(|(nu, l)| nu / l).sum::<f64>() + b_b;
        state.beta = check(gamma_unchecked(shape, rate, rng), None, "beta")?;
    }
    Ok(())
}

fn update_tau_gig(state: &mut ChainState, prior: &PriorSpec, p_shift: f64, gamma: f64, rng: &mut RngHandle) -> Result<()> {
    if let Some((a_t, b_t)) = gamma_hyper(&prior.tau) {
        let params = GigParams::new(a_t + p_shift, 2.0 * b_t, 2.0 * gamma)
            .map_err(|e| Error::chain(None, "tau", e.to_string()))?;
        state.tau = check(sample_gig(params, rng).map_err(|e| Error::chain(None, "tau", e.to_string()))?, None, "tau")?;
    }
    Ok(())
}

fn chain_err(unit: usize, step: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        e @ Error::Chain { .. } => e,
        other => Error::chain(Some(unit), step, other.to_string()),
    }
}

/// One family's Gibbs sweep.
pub trait GibbsKernel: Send + Sync {
    fn name(&self) -> &'static str;
    fn family(&self) -> PriorFamily;

    /// Family-specific constraints on the prior beyond [`PriorSpec::validate`].
    fn check_prior(&self, prior: &PriorSpec) -> Result<()> {
        prior.validate()
    }

    fn initialize(&self, data: &[Observation], prior: &PriorSpec, rng: &mut RngHandle) -> Result<ChainState>;

    /// Number of independence-MH sites used by [`GibbsKernel::sweep`].
    fn mh_sites(&self, n: usize, prior: &PriorSpec) -> usize;

    fn sweep(
        &self,
        state: &mut ChainState,
        data: &[Observation],
        prior: &PriorSpec,
        mh: &mut MhState,
        rng: &mut RngHandle,
    ) -> Result<()>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SbKernel;

impl GibbsKernel for SbKernel {
    fn name(&self) -> &'static str {
        "sb"
    }

    fn family(&self) -> PriorFamily {
        PriorFamily::Sb
    }

    fn initialize(&self, data: &[Observation], prior: &PriorSpec, rng: &mut RngHandle) -> Result<ChainState> {
        let (beta, tau) = init_globals(data, prior);
        let n = data.len();
        let t = (0..n).map(|_| gamma_unchecked(prior.a + prior.b, 2.0, rng)).collect();
        Ok(ChainState {
            lambda: data.iter().map(Observation::scaled_y).collect(),
            beta,
            tau,
            nu: vec![tau; n],
            aug: Augmentation::Sb { t },
        })
    }

    fn mh_sites(&self, n: usize, _prior: &PriorSpec) -> usize {
        n
    }

    fn sweep(
        &self,
        state: &mut ChainState,
        data: &[Observation],
        prior: &PriorSpec,
        mh: &mut MhState,
        rng: &mut RngHandle,
    ) -> Result<()> {
        update_lambda(state, data, rng)?;
        update_beta(state, prior, rng)?;
        let gamma = match &state.aug {
            Augmentation::Sb { t } => t.iter().zip(&state.nu).map(|(t, nu)| t * nu).sum(),
            _ => return Err(Error::chain(None, "state", "SB sweep on a non-SB state")),
        };
        update_tau_gig(state, prior, -(state.n() as f64) * prior.a, gamma, rng)?;
        let (beta, tau) = (state.beta, state.tau);
        let Augmentation::Sb { t } = &mut state.aug else { unreachable!() };
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = check(gamma_unchecked(prior.a + prior.b, 1.0 + state.nu[i] / tau, rng), Some(i), "t")?;
        }
        for (i, &ti) in t.iter().enumerate() {
            let li = state.lambda[i];
            let nu = mh
                .step(i, state.nu[i], |x| nu_logpdf_sb(x, ti, tau, beta, li, prior.a), rng)
                .map_err(chain_err(i, "nu"))?;
            state.nu[i] = check(nu, Some(i), "nu")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IrbKernel;

impl IrbKernel {
    fn draw_sw(prior: &PriorSpec, nu: f64, tau: f64, rng: &mut RngHandle) -> (f64, f64) {
        let l = (tau / nu).ln_1p();
        let s = gamma_unchecked(1.0 - prior.b, l, rng);
        let w = gamma_unchecked(prior.b + prior.a, 1.0 + l, rng);
        (s, w)
    }
}

impl GibbsKernel for IrbKernel {
    fn name(&self) -> &'static str {
        "irb"
    }

    fn family(&self) -> PriorFamily {
        PriorFamily::Irb
    }

    fn check_prior(&self, prior: &PriorSpec) -> Result<()> {
        prior.validate()?;
        if prior.b >= 1.0 {
            return Err(Error::Input(format!("the IRB sampler needs b < 1, got b={}", prior.b)));
        }
        Ok(())
    }

    fn initialize(&self, data: &[Observation], prior: &PriorSpec, rng: &mut RngHandle) -> Result<ChainState> {
        let (beta, tau) = init_globals(data, prior);
        let n = data.len();
        let (mut s, mut w, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let (si, wi) = Self::draw_sw(prior, tau, tau, rng);
            s.push(si);
            w.push(wi);
            z.push(gamma_unchecked(si + wi + 1.0, 2.0, rng));
        }
        Ok(ChainState {
            lambda: data.iter().map(Observation::scaled_y).collect(),
            beta,
            tau,
            nu: vec![tau; n],
            aug: Augmentation::Irb { s, w, z },
        })
    }

    fn mh_sites(&self, n: usize, _prior: &PriorSpec) -> usize {
        n
    }

    fn sweep(
        &self,
        state: &mut ChainState,
        data: &[Observation],
        prior: &PriorSpec,
        mh: &mut MhState,
        rng: &mut RngHandle,
    ) -> Result<()> {
        update_lambda(state, data, rng)?;
        update_beta(state, prior, rng)?;
        let (sw_total, gamma) = match &state.aug {
            Augmentation::Irb { s, w, z } => (
                s.iter().zip(w).map(|(s, w)| s + w).sum::<f64>(),
                z.iter().zip(&state.nu).map(|(z, nu)| z * nu).sum::<f64>(),
            ),
            _ => return Err(Error::chain(None, "state", "IRB sweep on a non-IRB state")),
        };
        update_tau_gig(state, prior, -sw_total, gamma, rng)?;
        let (beta, tau) = (state.beta, state.tau);
        let Augmentation::Irb { s, w, z } = &mut state.aug else { unreachable!() };
        for i in 0..state.lambda.len() {
            let nu_i = state.nu[i];
            let (si, wi) = Self::draw_sw(prior, nu_i, tau, rng);
            s[i] = check(si, Some(i), "s")?;
            w[i] = check(wi, Some(i), "w")?;
            z[i] = check(gamma_unchecked(si + wi + 1.0, 1.0 + nu_i / tau, rng), Some(i), "z")?;
        }
        for i in 0..state.lambda.len() {
            let (si, wi, zi, li) = (s[i], w[i], z[i], state.lambda[i]);
            let nu = mh
                .step(i, state.nu[i], |x| nu_logpdf_irb(x, si, wi, zi, tau, beta, li), rng)
                .map_err(chain_err(i, "nu"))?;
            state.nu[i] = check(nu, Some(i), "nu")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GlKernel;

impl GibbsKernel for GlKernel {
    fn name(&self) -> &'static str {
        "gl"
    }

    fn family(&self) -> PriorFamily {
        PriorFamily::Gl
    }

    fn initialize(&self, data: &[Observation], prior: &PriorSpec, _rng: &mut RngHandle) -> Result<ChainState> {
        let (beta, tau) = init_globals(data, prior);
        Ok(ChainState {
            lambda: data.iter().map(Observation::scaled_y).collect(),
            beta,
            tau,
            nu: Vec::new(),
            aug: Augmentation::Gl,
        })
    }

    fn mh_sites(&self, _n: usize, prior: &PriorSpec) -> usize {
        gamma_hyper(&prior.tau).is_some() as usize
    }

    fn sweep(
        &self,
        state: &mut ChainState,
        data: &[Observation],
        prior: &PriorSpec,
        mh: &mut MhState,
        rng: &mut RngHandle,
    ) -> Result<()> {
        update_lambda(state, data, rng)?;
        if let Some((a_b, b_b)) = gamma_hyper(&prior.beta) {
            let n = state.n() as f64;
            let shape = n * state.tau + n + a_b;
            let rate = state.tau * state.lambda.iter().map(|l| 1.0 / l).sum::<f64>() + b_b;
            state.beta = check(gamma_unchecked(shape, rate, rng), None, "beta")?;
        }
        if let Some((a_t, b_t)) = gamma_hyper(&prior.tau) {
            let (lambda, beta) = (&state.lambda, state.beta);
            let tau = mh
                .step(0, state.tau, |x| tau_logpdf_gl(x, lambda, beta, a_t, b_t), rng)
                .map_err(|e| match e {
                    e @ Error::Chain { .. } => e,
                    other => Error::chain(None, "tau", other.to_string()),
                })?;
            state.tau = check(tau, None, "tau")?;
        }
        Ok(())
    }
}

/// Name-keyed collection of Gibbs kernels.
#[derive(Clone, Default)]
pub struct KernelRegistry {
    kernels: BTreeMap<&'static str, Arc<dyn GibbsKernel>>,
}

impl KernelRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The SB, IRB and GL kernels.
    pub fn standard() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(SbKernel));
        reg.register(Arc::new(IrbKernel));
        reg.register(Arc::new(GlKernel));
        reg
    }

    /// Adds (or replaces) a kernel under its own name.
    pub fn register(&mut self, kernel: Arc<dyn GibbsKernel>) {
        self.kernels.insert(kernel.name(), kernel);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn GibbsKernel>> {
        self.kernels.get(name).cloned().ok_or_else(|| {
            Error::Input(format!("no sampler registered as '{name}' (known: {})", self.names().join(", ")))
        })
    }

    pub fn for_family(&self, family: PriorFamily) -> Result<Arc<dyn GibbsKernel>> {
        self.get(family.name())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kernels.keys().copied().collect()
    }
}

impl std::fmt::Debug for KernelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelRegistry").field("kernels", &self.names()).finish()
    }
}

fn sweep_once(
    kernel: &dyn GibbsKernel,
    mut state: ChainState,
    data: &[Observation],
    prior: &PriorSpec,
    cfg: &McmcConfig,
    rng: &mut RngHandle,
) -> Result<ChainState> {
    kernel.check_prior(prior)?;
    if state.family() != kernel.family() || state.n() != data.len() {
        return Err(Error::Input(format!("state does not match a {} chain over {} units", kernel.name(), data.len())));
    }
    let mut mh = MhState::new(kernel.mh_sites(data.len(), prior), cfg);
    kernel.sweep(&mut state, data, prior, &mut mh, rng)?;
    Ok(state)
}

/// One SB sweep: `λ`, `β`, `τ`, `t`, then Miller-MH on each `ν_i`.
pub fn gibbs_sweep_sb(state: ChainState, data: &[Observation], prior: &PriorSpec, cfg: &McmcConfig, rng: &mut RngHandle) -> Result<ChainState> {
    sweep_once(&SbKernel, state, data, prior, cfg, rng)
}

/// One IRB sweep: `λ`, `β`, `τ`, `(s, w)`, `z`, then Miller-MH on each `ν_i`.
pub fn gibbs_sweep_irb(state: ChainState, data: &[Observation], prior: &PriorSpec, cfg: &McmcConfig, rng: &mut RngHandle) -> Result<ChainState> {
    sweep_once(&IrbKernel, state, data, prior, cfg, rng)
}

/// One GL sweep: `λ`, `β`, then Miller-MH on `τ`.
pub fn gibbs_sweep_gl(state: ChainState, data: &[Observation], prior: &PriorSpec, cfg: &McmcConfig, rng: &mut RngHandle) -> Result<ChainState> {
    sweep_once(&GlKernel, state, data, prior, cfg, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub lambda: Vec<f64>,
    pub kappa: Vec<f64>,
    pub beta: f64,
    pub tau: f64,
}

/// Stored post-burn-in draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub family: PriorFamily,
    pub seed: u64,
    /// `lambda[i][k]` is draw `k` of unit `i`.
    pub lambda: Vec<Vec<f64>>,
    pub kappa: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
    /// Per MH site: one per unit for SB/IRB, one for `τ` under GL (none if fixed).
    pub acceptance_rate: Vec<f64>,
    pub ess: EssReport,
    pub fallback_proposals: u64,
    pub warnings: Vec<String>,
}

impl ChainOutput {
    pub fn draws(&self) -> usize {
        self.beta.len()
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// Concatenate chains over the same data; ESS adds up and acceptance
    /// rates are averaged.
    pub fn pool(chains: &[ChainOutput]) -> Result<ChainOutput> {
        let first = chains.first().ok_or_else(|| Error::Input("no chains to pool".into()))?;
        if chains.iter().any(|c| c.n() != first.n() || c.family != first.family) {
            return Err(Error::Input("chains differ in family or number of units".into()));
        }
        let k = chains.len() as f64;
        let concat_units = |get: fn(&ChainOutput) -> &Vec<Vec<f64>>| {
            (0..first.n())
                .map(|i| chains.iter().flat_map(|c| get(c)[i].iter().copied()).collect())
                .collect()
        };
        let sum_units = |get: fn(&EssReport) -> &Vec<f64>| {
            (0..first.n()).map(|i| chains.iter().map(|c| get(&c.ess)[i]).sum()).collect()
        };
        Ok(ChainOutput {
            family: first.family,
            seed: first.seed,
            lambda: concat_units(|c| &c.lambda),
            kappa: concat_units(|c| &c.kappa),
            beta: chains.iter().flat_map(|c| c.beta.iter().copied()).collect(),
            tau: chains.iter().flat_map(|c| c.tau.iter().copied()).collect(),
            acceptance_rate: (0..first.acceptance_rate.len())
                .map(|j| chains.iter().map(|c| c.acceptance_rate[j]).sum::<f64>() / k)
                .collect(),
            ess: EssReport {
                lambda: sum_units(|e| &e.lambda),
                kappa: sum_units(|e| &e.kappa),
                beta: chains.iter().map(|c| c.ess.beta).sum(),
                tau: chains.iter().map(|c| c.ess.tau).sum(),
            },
            fallback_proposals: chains.iter().map(|c| c.fallback_proposals).sum(),
            warnings: chains.iter().flat_map(|c| c.warnings.iter().cloned()).collect(),
        })
    }
}

/// Run one chain with the standard kernel for `prior.family`, seeded by `cfg.seed`.
pub fn run_chain(data: &[Observation], prior: &PriorSpec, cfg: &McmcConfig) -> Result<ChainOutput> {
    let kernel = KernelRegistry::standard().for_family(prior.family)?;
    run_chain_with(kernel.as_ref(), data, prior, cfg, RngHandle::new(cfg.seed))
}

/// Run `chains` independent chains in parallel. Chain 0 uses the same
/// stream as [`run_chain`]; chain `c > 0` uses the stream derived from `c`.
pub fn run_chains(data: &[Observation], prior: &PriorSpec, cfg: &McmcConfig, chains: usize) -> Result<Vec<ChainOutput>> {
    if chains < 1 {
        return Err(Error::Input("at least one chain is required".into()));
    }
    let kernel = KernelRegistry::standard().for_family(prior.family)?;
    let root = RngHandle::new(cfg.seed);
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let rng = if c == 0 { root.clone() } else { root.derive(c as u64) };
            run_chain_with(kernel.as_ref(), data, prior, cfg, rng)
        })
        .collect()
}

/// Run one chain of an arbitrary kernel on a caller-supplied stream.
pub fn run_chain_with(
    kernel: &dyn GibbsKernel,
    data: &[Observation],
    prior: &PriorSpec,
    cfg: &McmcConfig,
    mut rng: RngHandle,
) -> Result<ChainOutput> {
    cfg.validate()?;
    kernel.check_prior(prior)?;
    if data.is_empty() {
        return Err(Error::Input("no observations".into()));
    }
    let n = data.len();
    let mut state = kernel.initialize(data, prior, &mut rng)?;
    state.validate()?;
    let mut mh = MhState::new(kernel.mh_sites(n, prior), cfg);
    let mut lambda = vec![Vec::with_capacity(cfg.samples); n];
    let mut kappa = vec![Vec::with_capacity(cfg.samples); n];
    let (mut beta, mut tau) = (Vec::with_capacity(cfg.samples), Vec::with_capacity(cfg.samples));
    let total = cfg.burnin + cfg.samples * cfg.thin;
    mh.set_burnin(cfg.burnin > 0);
    for sweep in 0..total {
        if sweep == cfg.burnin {
            mh.set_burnin(false);
        }
        kernel.sweep(&mut state, data, prior, &mut mh, &mut rng).map_err(|e| match e {
            Error::Chain { unit, step, detail } => Error::Chain {
                unit,
                step,
                detail: format!("{detail} (sweep {sweep} of {total}, {} draws stored)", beta.len()),
            },
            other => other,
        })?;
        if sweep >= cfg.burnin && (sweep - cfg.burnin + 1).is_multiple_of(cfg.thin) {
            for (i, k) in state.kappa(data).into_iter().enumerate() {
                lambda[i].push(state.lambda[i]);
                kappa[i].push(k);
            }
            beta.push(state.beta);
            tau.push(state.tau);
        }
    }
    let acceptance_rate = mh.acceptance_rates();
    let warnings = acceptance_rate
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < LOW_ACCEPTANCE)
        .map(|(j, r)| format!("low MH acceptance {r:.3} at site {j}"))
        .collect();
    let ess = EssReport {
        lambda: lambda.iter().map(|d| effective_sample_size(d)).collect(),
        kappa: kappa.iter().map(|d| effective_sample_size(d)).collect(),
        beta: effective_sample_size(&beta),
        tau: effective_sample_size(&tau),
    };
    Ok(ChainOutput {
        family: kernel.family(),
        seed: cfg.seed,
        lambda,
        kappa,
        beta,
        tau,
        acceptance_rate,
        ess,
        fallback_proposals: mh.fallbacks(),
        warnings,
    })
}

/// Mean, variance and equal-tailed interval of a scalar's draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub mean: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub variance: f64,
    pub lower: f64,
    pub upper: f64,
    pub kappa_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub beta: ScalarSummary,
    pub tau: ScalarSummary,
}

const MIN_DRAWS: usize = 10;

/// Summary of a set of draws with a `level` equal-tailed interval.
pub fn summarize_draws(draws: &[f64], level: f64) -> Result<ScalarSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("interval level must lie in (0, 1), got {level}")));
    }
    if draws.len() < MIN_DRAWS {
        return Err(Error::Input(format!("need at least {MIN_DRAWS} draws, got {}", draws.len())));
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let variance = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(ScalarSummary {
        mean,
        variance,
        lower: quantile_sorted(&sorted, tail),
        upper: quantile_sorted(&sorted, 1.0 - tail),
    })
}

/// Per-unit posterior summaries of `λ_i` plus the mean shrinkage factor.
pub fn summarize(output: &ChainOutput, level: f64) -> Result<Vec<PosteriorSummary>> {
    output
        .lambda
        .iter()
        .zip(&output.kappa)
        .map(|(l, k)| {
            let s = summarize_draws(l, level)?;
            Ok(PosteriorSummary {
                mean: s.mean,
                variance: s.variance,
                lower: s.lower,
                upper: s.upper,
                kappa_mean: k.iter().sum::<f64>() / k.len() as f64,
            })
        })
        .collect()
}

pub fn summarize_globals(output: &ChainOutput, level: f64) -> Result<GlobalSummary> {
    Ok(GlobalSummary {
        beta: summarize_draws(&output.beta, level)?,
        tau: summarize_draws(&output.tau, level)?,
    })
}
