//! Scenario generation, baselines and the replication driver.

use std::sync::Arc;

use gshrink::mcmc::McmcConfig;
use gshrink::model::Observation;
use gshrink::sim::{
    generate_scenario, mape, ml_estimate_and_ci, run_replications, run_replications_with, Estimator, Fit, MethodRegistry,
    ScenarioSpec,
};
use gshrink::{Error, RngHandle};

fn big(id: u8, n: usize) -> gshrink::sim::ScenarioData {
    let spec = ScenarioSpec { n, ..ScenarioSpec::standard(id, 17) };
    generate_scenario(&spec, &mut RngHandle::new(100 + id as u64)).unwrap()
}

#[test]
fn null_proportions_match_the_mixtures() {
    let n = 40_000;
    for (id, p) in [(1, 0.95), (2, 0.90), (3, 0.95), (4, 0.90), (5, 0.90), (6, 0.85)] {
        let d = big(id, n);
        let nulls = d.is_null.iter().filter(|&&x| x).count() as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((nulls - n as f64 * p).abs() < 4.0 * sd, "scenario {id}: {nulls}");
    }
}

#[test]
fn scenario_one_point_mass_and_signal_mean() {
    let d = big(1, 40_000);
    let at_mu = d.lambda_true.iter().filter(|&&l| l == 5.0).count();
    assert_eq!(at_mu, d.is_null.iter().filter(|&&x| x).count());
    let signal: Vec<f64> = d.lambda_true.iter().zip(&d.is_null).filter(|(_, &n)| !n).map(|(l, _)| *l).collect();
    let m = signal.iter().sum::<f64>() / signal.len() as f64;
    // Ga(100, 2): mean 50, sd 5.
    assert!((m - 50.0).abs() < 5.0 * 5.0 / (signal.len() as f64).sqrt(), "{m}");
}

#[test]
fn scenario_four_has_no_ties() {
    let d = big(4, 5000);
    let mut l = d.lambda_true.clone();
    l.sort_by(f64::total_cmp);
    assert!(l.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn ml_interval_has_exact_coverage() {
    let mut rng = RngHandle::new(5);
    let draws = 100_000;
    for delta in [0.5, 1.0, 5.0, 20.0] {
        let lambda = 3.0;
        let mut hits = 0;
        for _ in 0..draws {
            let y = gshrink::dist::sample_gamma(delta, delta / lambda, &mut rng).unwrap();
            let (_, iv) = ml_estimate_and_ci(&Observation::new(y, delta).unwrap(), 0.95).unwrap();
            hits += iv.contains(lambda) as usize;
        }
        let cp = hits as f64 / draws as f64;
        let se = (0.95 * 0.05 / draws as f64).sqrt();
        assert!((cp - 0.95).abs() < 3.0 * se, "δ={delta}: {cp}");
    }
}

fn small_cfg() -> McmcConfig {
    McmcConfig {
        burnin: 100,
        samples: 200,
        ..McmcConfig::default()
    }
}

#[test]
fn single_ml_replication_is_the_plain_mape() {
    let spec = ScenarioSpec::standard(2, 77);
    let table = run_replications(&spec, &["ml"], 1, &small_cfg()).unwrap();
    // Replication r draws its data on stream derive(r).derive(0).
    let data = generate_scenario(&spec, &mut RngHandle::new(77).derive(0).derive(0)).unwrap();
    let expected = mape(&data.lambda_true, &data.y, None).unwrap();
    assert_eq!(table.method("ml").unwrap().mape.unwrap().mean, expected);
}

#[test]
fn replications_are_deterministic() {
    let spec = ScenarioSpec { n: 30, ..ScenarioSpec::standard(1, 3) };
    let a = run_replications(&spec, &["sb", "irb", "gl", "ml"], 3, &small_cfg()).unwrap();
    let b = run_replications(&spec, &["sb", "irb", "gl", "ml"], 3, &small_cfg()).unwrap();
    assert_eq!(a, b);
    // A method's results do not depend on which others run alongside it.
    let only_sb = run_replications(&spec, &["sb"], 3, &small_cfg()).unwrap();
    assert_eq!(only_sb.method("sb"), a.method("sb"));
    for m in &a.methods {
        let cp = m.cp.unwrap().mean;
        assert!((0.0..=1.0).contains(&cp) && m.al.unwrap().mean > 0.0);
    }
}

#[test]
fn standard_errors_shrink_with_replications() {
    let spec = ScenarioSpec::standard(1, 8);
    let se = |reps| run_replications(&spec, &["ml"], reps, &small_cfg()).unwrap().method("ml").unwrap().mape.unwrap().se;
    let ratio = se(100) / se(400);
    assert!((1.5..2.7).contains(&ratio), "{ratio}");
}

struct Broken;

impl Estimator for Broken {
    fn name(&self) -> &str {
        "broken"
    }

    fn fit(&self, data: &[Observation], _level: f64, _cfg: &McmcConfig, mut rng: RngHandle) -> gshrink::Result<Fit> {
        if rng.uniform() < 0.5 {
            return Err(Error::Chain {
                unit: Some(0),
                step: "nu",
                detail: "synthetic failure".into(),
            });
        }
        Ok(Fit {
            estimate: data.iter().map(|o| o.y).collect(),
            intervals: data.iter().map(|o| gshrink::sim::Interval { lo: 0.0, hi: 2.0 * o.y }).collect(),
        })
    }
}

#[test]
fn failed_fits_are_reported() {
    let mut reg = MethodRegistry::standard();
    reg.register(Arc::new(Broken));
    let spec = ScenarioSpec { n: 20, ..ScenarioSpec::standard(1, 4) };
    let table = run_replications_with(&reg, &spec, &["broken", "ml"], 20, 0.95, &small_cfg()).unwrap();
    let failures = table.failures();
    let ok = table.method("broken").unwrap().reps_ok;
    assert!(!failures.is_empty() && ok > 0);
    assert_eq!(ok + failures.len(), 20);
    assert!(failures.iter().all(|(_, m, e)| m == "broken" && e.contains("synthetic failure")));
    assert_eq!(table.method("ml").unwrap().reps_ok, 20);
    assert!(run_replications(&spec, &["dg"], 1, &small_cfg()).is_err());
    assert!(run_replications(&spec, &["ml"], 0, &small_cfg()).is_err());
}

#[test]
fn scenario_one_orders_the_methods() {
    let cfg = McmcConfig {
        burnin: 500,
        samples: 1000,
        ..McmcConfig::default()
    };
    let table = run_replications(&ScenarioSpec::standard(1, 11), &["sb", "gl", "ml"], 6, &cfg).unwrap();
    let m = |name| table.method(name).unwrap().mape.unwrap().mean;
    assert!(m("sb") < m("gl") && m("gl") < m("ml"), "{} {} {}", m("sb"), m("gl"), m("ml"));
    let al = |name| table.method(name).unwrap().al.unwrap().mean;
    assert!(al("sb") < al("gl") && al("gl") < al("ml"));
}
