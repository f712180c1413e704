//! Simulation scenarios, competing estimators and accuracy metrics.
//!
//! Estimators implement [`Estimator`] and are looked up by name in a
//! [`MethodRegistry`]; the standard set is `sb`, `irb`, `gl` and `ml`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_abs_t, sample_gamma};
use crate::error::{Error, Result};
use crate::mcmc::{run_chain_with, summarize, KernelRegistry, McmcConfig};
use crate::model::Observation;
use crate::prior::{PriorFamily, PriorSpec};
use crate::rng::RngHandle;
use crate::special::gamma_quantile;

/// Nominal level of every interval in the simulation study.
pub const SIM_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub n: usize,
    pub mu: f64,
    pub delta: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The study configuration: `n = 200`, `μ = δ = 5`.
    pub fn standard(id: u8, seed: u64) -> Self {
        ScenarioSpec {
            id,
            n: 200,
            mu: 5.0,
            delta: 5.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.id) {
            return Err(Error::Input(format!("scenario id must be 1..=6, got {}", self.id)));
        }
        if self.n == 0 || !(self.mu > 0.0 && self.mu.is_finite()) || !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Input("scenario needs n >= 1 and positive finite mu, delta".into()));
        }
        Ok(())
    }
}

/// One simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    pub lambda_true: Vec<f64>,
    pub y: Vec<f64>,
    /// `true` for units drawn from the null component.
    pub is_null: Vec<bool>,
    pub delta: f64,
}

impl ScenarioData {
    pub fn observations(&self) -> Result<Vec<Observation>> {
        self.y.iter().map(|&y| Observation::new(y, self.delta)).collect()
    }

    pub fn non_null_mask(&self) -> Vec<bool> {
        self.is_null.iter().map(|n| !n).collect()
    }
}

enum Signal {
    Gamma(f64, f64),
    AbsT(f64),
}

enum Null {
    Point,
    Gamma(f64, f64),
}

fn mixture(id: u8, mu: f64) -> (f64, Null, Signal) {
    match id {
        1 => (0.95, Null::Point, Signal::Gamma(20.0 * mu, 2.0)),
        2 => (0.90, Null::Point, Signal::Gamma(20.0 * mu, 2.0)),
        3 => (0.95, Null::Point, Signal::AbsT(3.0)),
        4 => (0.90, Null::Gamma(5.0 * mu, 5.0), Signal::AbsT(1.0)),
        5 => (0.90, Null::Point, Signal::Gamma(10.0 * mu, 2.0)),
        _ => (0.85, Null::Point, Signal::Gamma(10.0 * mu, 2.0)),
    }
}

fn positive_draw(mut f: impl FnMut() -> Result<f64>) -> Result<f64> {
    loop {
        let v = f()?;
        if v > 0.0 && v.is_finite() {
            return Ok(v);
        }
    }
}

/// Draw true means from the scenario mixture and `y_i ~ Ga(δ, δ/λ_i)`.
pub fn generate_scenario(spec: &ScenarioSpec, rng: &mut RngHandle) -> Result<ScenarioData> {
    spec.validate()?;
    let (p_null, null, signal) = mixture(spec.id, spec.mu);
    let mut lambda_true = Vec::with_capacity(spec.n);
    let mut is_null = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let from_null = rng.uniform() < p_null;
        let lambda = if from_null {
            match null {
                Null::Point => spec.mu,
                Null::Gamma(shape, rate) => positive_draw(|| sample_gamma(shape, rate, rng))?,
            }
        } else {
            match signal {
                Signal::Gamma(shape, rate) => positive_draw(|| sample_gamma(shape, rate, rng))?,
                Signal::AbsT(df) => positive_draw(|| Ok(spec.mu * sample_abs_t(df, rng)?))?,
            }
        };
        lambda_true.push(lambda);
        is_null.push(from_null);
    }
    let y = lambda_true
        .iter()
        .map(|&l| positive_draw(|| sample_gamma(spec.delta, spec.delta / l, rng)))
        .collect::<Result<_>>()?;
    Ok(ScenarioData {
        lambda_true,
        y,
        is_null,
        delta: spec.delta,
    })
}

/// Mean of `|λ − λ̂|/λ` over the units selected by `mask` (all if `None`).
pub fn mape(lambda_true: &[f64], estimate: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    if lambda_true.len() != estimate.len() || mask.is_some_and(|m| m.len() != lambda_true.len()) {
        return Err(Error::Input("mape: length mismatch".into()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, (&l, &e)) in lambda_true.iter().zip(estimate).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if !(l > 0.0) {
            return Err(Error::Input(format!("mape: true value must be > 0, got {l}")));
        }
        sum += (l - e).abs() / l;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Input("mape: mask selects no units".into()));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `y/η` with the exact pivotal interval from `y/(λη) ~ Ga(δ, δ)`.
pub fn ml_estimate_and_ci(obs: &Observation, level: f64) -> Result<(f64, Interval)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("level must lie in (0, 1), got {level}")));
    }
    let tail = (1.0 - level) / 2.0;
    let y = obs.scaled_y();
    let q_hi = gamma_quantile(1.0 - tail, obs.delta, obs.delta)?;
    let q_lo = gamma_quantile(tail, obs.delta, obs.delta)?;
    Ok((y, Interval { lo: y / q_hi, hi: y / q_lo }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub cp: f64,
    /// Mean of `(hi − lo)/λ`, the length relative to the true value.
    pub al: f64,
    /// Mean of `hi − lo`.
    pub al_abs: f64,
}

pub fn coverage_and_length(intervals: &[Interval], lambda_true: &[f64]) -> Result<Coverage> {
    if intervals.len() != lambda_true.len() || intervals.is_empty() {
        return Err(Error::Input("coverage_and_length: empty or mismatched inputs".into()));
    }
    let n = intervals.len() as f64;
    let covered = intervals.iter().zip(lambda_true).filter(|(iv, &l)| iv.contains(l)).count();
    Ok(Coverage {
        cp: covered as f64 / n,
        al: intervals.iter().zip(lambda_true).map(|(iv, l)| iv.length() / l).sum::<f64>() / n,
        al_abs: intervals.iter().map(Interval::length).sum::<f64>() / n,
    })
}

/// Point estimates and intervals for every unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub estimate: Vec<f64>,
    pub intervals: Vec<Interval>,
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;
    fn fit(&self, data: &[Observation], level: f64, cfg: &McmcConfig, rng: RngHandle) -> Result<Fit>;
}

/// Posterior means and equal-tailed credible intervals from one chain.
#[derive(Debug, Clone)]
pub struct BayesEstimator {
    name: String,
    prior: PriorSpec,
    kernels: KernelRegistry,
}

impl BayesEstimator {
    pub fn new(name: impl Into<String>, prior: PriorSpec) -> Self {
        BayesEstimator {
            name: name.into(),
            prior,
            kernels: KernelRegistry::standard(),
        }
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }
}

impl Estimator for BayesEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(&self, data: &[Observation], level: f64, cfg: &McmcConfig, rng: RngHandle) -> Result<Fit> {
        let kernel = self.kernels.for_family(self.prior.family)?;
        let out = run_chain_with(kernel.as_ref(), data, &self.prior, cfg, rng)?;
        let summary = summarize(&out, level)?;
        Ok(Fit {
            estimate: summary.iter().map(|s| s.mean).collect(),
            intervals: summary.iter().map(|s| Interval { lo: s.lower, hi: s.upper }).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MlEstimator;

impl Estimator for MlEstimator {
    fn name(&self) -> &str {
        "ml"
    }

    fn fit(&self, data: &[Observation], level: f64, _cfg: &McmcConfig, _rng: RngHandle) -> Result<Fit> {
        let (estimate, intervals) = data.iter().map(|o| ml_estimate_and_ci(o, level)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        Ok(Fit { estimate, intervals })
    }
}

/// Name-keyed estimators.
#[derive(Clone, Default)]
pub struct MethodRegistry {
    methods: BTreeMap<String, Arc<dyn Estimator>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `sb`, `irb`, `gl` with `a = 2`, `b = 1/2` and `Ga(0.1, 0.1)` hyperpriors,
    /// plus `ml`.
    pub fn standard() -> Self {
        let mut reg = Self::empty();
        for family in PriorFamily::ALL {
            reg.register(Arc::new(BayesEstimator::new(family.name(), PriorSpec::new(family, 2.0, 0.5))));
        }
        reg.register(Arc::new(MlEstimator));
        reg
    }

    pub fn register(&mut self, method: Arc<dyn Estimator>) {
        self.methods.insert(method.name().to_owned(), method);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Estimator>> {
        let key = name.trim().to_ascii_lowercase();
        self.methods
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::Input(format!("unknown method '{name}' (known: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<String> {
        self.methods.keys().cloned().collect()
    }
}

impl std::fmt::Debug for MethodRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MethodRegistry").field("methods", &self.names()).finish()
    }
}

/// Metrics of one method on one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub mape: f64,
    /// `None` when the replication drew no non-null units.
    pub mape_non_null: Option<f64>,
    pub cp: f64,
    pub al: f64,
    pub al_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub metrics: BTreeMap<String, MethodMetrics>,
    /// Methods that failed on this replication, with the error.
    pub failures: BTreeMap<String, String>,
}

/// Mean and Monte Carlo standard error over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn of(values: &[f64]) -> Option<Estimate> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        Some(Estimate { mean, se })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Replications on which the method succeeded.
    pub reps_ok: usize,
    pub mape: Option<Estimate>,
    /// Per-replication non-null MAPE, averaged.
    pub mape_non_null: Option<Estimate>,
    pub cp: Option<Estimate>,
    pub al: Option<Estimate>,
    pub al_abs: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub scenario: ScenarioSpec,
    pub reps: usize,
    pub level: f64,
    pub methods: Vec<MethodSummary>,
    pub replications: Vec<ReplicationResult>,
}

impl MetricsTable {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// `(rep, method, error)` for every failed fit.
    pub fn failures(&self) -> Vec<(usize, String, String)> {
        self.replications
            .iter()
            .flat_map(|r| r.failures.iter().map(move |(m, e)| (r.rep, m.clone(), e.clone())))
            .collect()
    }
}

/// Stable per-method stream tag (FNV-1a of the name).
fn method_tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Run `reps` replications of a scenario with the standard methods.
pub fn run_replications(spec: &ScenarioSpec, methods: &[&str], reps: usize, cfg: &McmcConfig) -> Result<MetricsTable> {
    run_replications_with(&MethodRegistry::standard(), spec, methods, reps, SIM_LEVEL, cfg)
}

/// Replication `r` generates data on the stream derived from `r`, and each
/// method fits on a stream derived from that one and the method name, so
/// results do not depend on scheduling or on which other methods run.
pub fn run_replications_with(
    registry: &MethodRegistry,
    spec: &ScenarioSpec,
    methods: &[&str],
    reps: usize,
    level: f64,
    cfg: &McmcConfig,
) -> Result<MetricsTable> {
    spec.validate()?;
    cfg.validate()?;
    if reps == 0 || methods.is_empty() {
        return Err(Error::Input("need at least one replication and one method".into()));
    }
    let estimators: Vec<Arc<dyn Estimator>> = methods.iter().map(|m| registry.get(m)).collect::<Result<_>>()?;
    let root = RngHandle::new(spec.seed);
    let replications: Vec<ReplicationResult> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<ReplicationResult> {
            let rep_rng = root.derive(rep as u64);
            let data = generate_scenario(spec, &mut rep_rng.derive(0))?;
            let obs = data.observations()?;
            let non_null = data.non_null_mask();
            let mut result = ReplicationResult {
                rep,
                metrics: BTreeMap::new(),
                failures: BTreeMap::new(),
            };
            for est in &estimators {
                let name = est.name().to_owned();
                let fitted = est.fit(&obs, level, cfg, rep_rng.derive(method_tag(&name))).and_then(|fit| {
                    let cov = coverage_and_length(&fit.intervals, &data.lambda_true)?;
                    Ok(MethodMetrics {
                        mape: mape(&data.lambda_true, &fit.estimate, None)?,
                        mape_non_null: mape(&data.lambda_true, &fit.estimate, Some(&non_null)).ok(),
                        cp: cov.cp,
                        al: cov.al,
                        al_abs: cov.al_abs,
                    })
                });
                match fitted {
                    Ok(m) => {
                        result.metrics.insert(name, m);
                    }
                    Err(e) => {
                        result.failures.insert(name, e.to_string());
                    }
                }
            }
            Ok(result)
        })
        .collect::<Result<_>>()?;
    let methods = estimators
        .iter()
        .map(|est| {
            let name = est.name();
            let rows: Vec<&MethodMetrics> = replications.iter().filter_map(|r| r.metrics.get(name)).collect();
            let col = |f: fn(&MethodMetrics) -> f64| Estimate::of(&rows.iter().map(|m| f(m)).collect::<Vec<_>>());
            MethodSummary {
                method: name.to_owned(),
                reps_ok: rows.len(),
                mape: col(|m| m.mape),
                mape_non_null: Estimate::of(&rows.iter().filter_map(|m| m.mape_non_null).collect::<Vec<_>>()),
                cp: col(|m| m.cp),
                al: col(|m| m.al),
                al_abs: col(|m| m.al_abs),
            }
        })
        .collect();
    Ok(MetricsTable {
        scenario: *spec,
        reps,
        level,
        methods,
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0], None).unwrap(), 0.0);
        assert!((mape(&[1.0, 2.0], &[2.0, 1.0], None).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(mape(&[1.0, 2.0], &[2.0, 1.0], Some(&[false, true])).unwrap(), 0.5);
        assert!(mape(&[1.0], &[1.0], Some(&[false])).is_err());
        assert!(mape(&[1.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn ml_interval_endpoints() {
        let obs = Observation::new(1.0, 5.0).unwrap();
        let (est, iv) = ml_estimate_and_ci(&obs, 0.95).unwrap();
        assert_eq!(est, 1.0);
        let q_hi = gamma_quantile(0.975, 5.0, 5.0).unwrap();
        let q_lo = gamma_quantile(0.025, 5.0, 5.0).unwrap();
        assert_eq!((iv.lo, iv.hi), (1.0 / q_hi, 1.0 / q_lo));
        // Relative length at δ = 5.
        assert!((iv.length() - 2.59).abs() < 0.005, "{}", iv.length());
        let (_, iv3) = ml_estimate_and_ci(&Observation::new(3.0, 5.0).unwrap(), 0.95).unwrap();
        assert!((iv3.length() - 3.0 * iv.length()).abs() < 1e-12);
        assert!(ml_estimate_and_ci(&obs, 1.0).is_err());
    }

    #[test]
    fn coverage_edge_cases() {
        let truth = [1.0, 2.0];
        let wide = [Interval { lo: 0.0, hi: 1e300 }; 2];
        assert_eq!(coverage_and_length(&wide, &truth).unwrap().cp, 1.0);
        let exact = [Interval { lo: 1.0, hi: 1.0 }, Interval { lo: 2.0, hi: 2.0 }];
        let c = coverage_and_length(&exact, &truth).unwrap();
        assert_eq!((c.cp, c.al, c.al_abs), (1.0, 0.0, 0.0));
        let c = coverage_and_length(&[Interval { lo: 0.0, hi: 1.0 }, Interval { lo: 3.0, hi: 5.0 }], &truth).unwrap();
        assert_eq!((c.cp, c.al, c.al_abs), (0.5, 1.0, 1.5));
    }

    #[test]
    fn scenario_validation_and_determinism() {
        assert!(ScenarioSpec::standard(0, 1).validate().is_err());
        assert!(ScenarioSpec::standard(7, 1).validate().is_err());
        let spec = ScenarioSpec::standard(3, 9);
        let a = generate_scenario(&spec, &mut RngHandle::new(9)).unwrap();
        let b = generate_scenario(&spec, &mut RngHandle::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.y.len(), 200);
        assert!(a.lambda_true.iter().zip(&a.is_null).all(|(&l, &n)| !n || l == 5.0));
    }

    #[test]
    fn registry_has_standard_methods() {
        let reg = MethodRegistry::standard();
        assert_eq!(reg.names(), vec!["gl", "irb", "ml", "sb"]);
        assert!(reg.get("SB").is_ok());
        assert!(reg.get("dg").is_err());
    }
}
