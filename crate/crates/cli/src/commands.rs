use std::collections::BTreeMap;

use gshrink::mcmc::{run_chains, summarize, summarize_globals, ChainOutput, McmcConfig};
use gshrink::quad::{marginal_prior_density, posterior_lambda_moments, QuadConfig};
use gshrink::sim::{run_replications_with, MethodRegistry, MetricsTable, ScenarioSpec};
use gshrink::{PriorFamily, PriorSpec};
use serde_json::json;

use crate::args::{FitArgs, GroupArgs, McmcArgs, PosteriorCurveArgs, PriorArgs, PriorCurveArgs, SimulateArgs, Spacing};
use crate::error::{CliError, CliResult};
use crate::io::{csv_text, fmt_num, fmt_opt, read_input, read_observations, read_records, to_sorted_json, write_text};
use crate::manifest::{self, ManifestClock};

fn usage(e: gshrink::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn mcmc_config(args: &McmcArgs, defaults: McmcConfig) -> CliResult<McmcConfig> {
    let cfg = McmcConfig {
        burnin: args.burnin.unwrap_or(defaults.burnin),
        samples: args.samples.unwrap_or(defaults.samples),
        thin: args.thin.unwrap_or(defaults.thin),
        seed: args.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn local_prior(args: &PriorArgs) -> PriorSpec {
    PriorSpec::new(args.prior, args.a, args.b)
}

fn check_sampling_prior(prior: &PriorSpec) -> CliResult<()> {
    prior.validate().map_err(usage)?;
    if prior.family == PriorFamily::Irb && prior.b >= 1.0 {
        return Err(CliError::Usage(format!("the IRB sampler requires b < 1, got b = {}", prior.b)));
    }
    Ok(())
}

pub fn group(args: &GroupArgs) -> CliResult<()> {
    let clock = ManifestClock::start("group");
    let (key_names, records) = read_records(&read_input(&args.input)?, &args.keys)?;
    let mut groups: BTreeMap<Vec<String>, (f64, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry(r.key).or_default();
        g.0 += r.value;
        g.1 += 1;
    }
    let mut header: Vec<&str> = key_names.iter().map(String::as_str).collect();
    header.extend(["y", "delta", "eta"]);
    let rows = groups.into_iter().map(|(key, (sum, count))| {
        let mut row = key;
        row.extend([fmt_num(sum / count as f64), count.to_string(), "1".to_owned()]);
        row
    });
    write_text(args.out.as_deref(), &csv_text(&header, rows)?)?;
    manifest::emit(&clock.finish(args, None)?, args.manifest.as_deref(), args.out.as_deref())
}

fn draws_csv(outputs: &[ChainOutput]) -> CliResult<String> {
    let n = outputs[0].n();
    let mut header = vec!["chain".to_owned(), "draw".to_owned()];
    header.extend((1..=n).map(|i| format!("lambda_{i}")));
    header.extend(["beta".to_owned(), "tau".to_owned()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = outputs.iter().enumerate().flat_map(|(c, out)| {
        (0..out.draws()).map(move |d| {
            let mut row = vec![c.to_string(), d.to_string()];
            row.extend(out.lambda.iter().map(|l| fmt_num(l[d])));
            row.extend([fmt_num(out.beta[d]), fmt_num(out.tau[d])]);
            row
        })
    });
    csv_text(&header, rows)
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let clock = ManifestClock::start("fit");
    let prior = PriorSpec {
        beta: args.beta,
        tau: args.tau,
        ..local_prior(&args.prior)
    };
    check_sampling_prior(&prior)?;
    let cfg = mcmc_config(&args.mcmc, McmcConfig::default())?;
    if args.chains < 1 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let data = read_observations(&read_input(&args.input)?)?;

    let outputs = run_chains(&data, &prior, &cfg, args.chains)?;
    let pooled = ChainOutput::pool(&outputs)?;
    let units = summarize(&pooled, args.level)?;
    let globals = summarize_globals(&pooled, args.level)?;
    for w in &pooled.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.draws_out {
        write_text(Some(path), &draws_csv(&outputs)?)?;
    }

    let unit_rows: Vec<_> = data
        .iter()
        .zip(&units)
        .enumerate()
        .map(|(i, (obs, s))| {
            json!({
                "unit": i + 1,
                "y": obs.y,
                "delta": obs.delta,
                "eta": obs.eta,
                "mean": s.mean,
                "variance": s.variance,
                "lower": s.lower,
                "upper": s.upper,
                "kappa_mean": s.kappa_mean,
                "ess_lambda": pooled.ess.lambda[i],
            })
        })
        .collect();
    let config = json!({ "args": args, "prior": prior, "mcmc": cfg });
    let report = json!({
        "units": unit_rows,
        "globals": globals,
        "diagnostics": {
            "chains": args.chains,
            "draws": pooled.draws(),
            "acceptance_rate": pooled.acceptance_rate,
            "acceptance_rate_by_chain": outputs.iter().map(|o| &o.acceptance_rate).collect::<Vec<_>>(),
            "ess_beta": pooled.ess.beta,
            "ess_tau": pooled.ess.tau,
            "fallback_proposals": pooled.fallback_proposals,
            "warnings": pooled.warnings,
        },
        "manifest": clock.finish(&config, Some(cfg.seed))?,
    });
    write_text(args.out.as_deref(), &to_sorted_json(&report)?)
}

fn aggregate_csv(table: &MetricsTable) -> CliResult<String> {
    let header = [
        "method",
        "reps",
        "reps_ok",
        "mape",
        "mape_se",
        "mape_non_null",
        "mape_non_null_se",
        "cp",
        "cp_se",
        "al",
        "al_se",
        "al_abs",
        "al_abs_se",
    ];
    let rows = table.methods.iter().map(|m| {
        let mut row = vec![m.method.clone(), table.reps.to_string(), m.reps_ok.to_string()];
        for est in [m.mape, m.mape_non_null, m.cp, m.al, m.al_abs] {
            row.push(fmt_opt(est.map(|e| e.mean)));
            row.push(fmt_opt(est.map(|e| e.se)));
        }
        row
    });
    csv_text(&header, rows)
}

fn replications_csv(table: &MetricsTable) -> CliResult<String> {
    let header = ["rep", "method", "status", "mape", "mape_non_null", "cp", "al", "al_abs", "error"];
    let rows = table.replications.iter().flat_map(|r| {
        table.methods.iter().map(move |m| {
            let mut row = vec![r.rep.to_string(), m.method.clone()];
            match (r.metrics.get(&m.method), r.failures.get(&m.method)) {
                (Some(x), _) => row.extend([
                    "ok".to_owned(),
                    fmt_num(x.mape),
                    fmt_opt(x.mape_non_null),
                    fmt_num(x.cp),
                    fmt_num(x.al),
                    fmt_num(x.al_abs),
                    String::new(),
                ]),
                (None, err) => {
                    row.push("failed".to_owned());
                    row.extend(std::iter::repeat_n(String::new(), 5));
                    row.push(err.cloned().unwrap_or_default());
                }
            }
            row
        })
    });
    csv_text(&header, rows)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let clock = ManifestClock::start("simulate");
    let defaults = McmcConfig {
        burnin: 1000,
        samples: 2000,
        ..McmcConfig::default()
    };
    let cfg = mcmc_config(&args.mcmc, defaults)?;
    let spec = ScenarioSpec {
        id: args.scenario,
        n: args.n,
        mu: args.mu,
        delta: args.delta,
        seed: cfg.seed,
    };
    spec.validate().map_err(usage)?;
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let registry = MethodRegistry::standard();
    let methods: Vec<&str> = args.methods.iter().map(|m| m.trim()).filter(|m| !m.is_empty()).collect();
    if methods.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }
    for m in &methods {
        registry.get(m).map_err(usage)?;
    }

    let table = run_replications_with(&registry, &spec, &methods, args.reps, args.level, &cfg)?;
    for (rep, method, err) in table.failures() {
        eprintln!("warning: replication {rep}, method {method} failed: {err}");
    }
    let config = json!({ "args": args, "scenario": spec, "mcmc": cfg });
    let manifest = clock.finish(&config, Some(cfg.seed))?;

    write_text(args.out.as_deref(), &aggregate_csv(&table)?)?;
    if let Some(path) = &args.reps_out {
        write_text(Some(path), &replications_csv(&table)?)?;
    }
    if let Some(path) = &args.json {
        write_text(Some(path), &to_sorted_json(&json!({ "table": table, "manifest": manifest }))?)?;
    }
    manifest::emit(&manifest, args.manifest.as_deref(), args.out.as_deref())
}

/// Pushes `status` and `error` columns; failed rows keep the run going.
fn status_cells<T>(res: &Result<T, gshrink::Error>, failures: &mut usize) -> [String; 2] {
    match res {
        Ok(_) => ["ok".to_owned(), String::new()],
        Err(e) => {
            *failures += 1;
            ["failed".to_owned(), e.to_string()]
        }
    }
}

pub fn prior_curve(args: &PriorCurveArgs) -> CliResult<()> {
    let clock = ManifestClock::start("prior-curve");
    let prior = local_prior(&args.prior);
    prior.validate().map_err(usage)?;
    let qcfg = QuadConfig::default();
    let mut failures = 0;
    let rows: Vec<Vec<String>> = args
        .grid
        .values(Spacing::Log)
        .into_iter()
        .map(|lambda| {
            let d = marginal_prior_density(lambda, &prior, &qcfg);
            let mut row = vec![fmt_num(lambda), d.as_ref().map(|v| fmt_num(*v)).unwrap_or_default()];
            row.extend(status_cells(&d, &mut failures));
            row
        })
        .collect();
    if failures > 0 {
        eprintln!("warning: {failures} grid point(s) failed");
    }
    write_text(args.out.as_deref(), &csv_text(&["lambda", "density", "status", "error"], rows)?)?;
    let config = json!({ "args": args, "prior": prior, "quadrature": qcfg_json(&qcfg) });
    manifest::emit(&clock.finish(&config, None)?, args.manifest.as_deref(), args.out.as_deref())
}

fn qcfg_json(q: &QuadConfig) -> serde_json::Value {
    json!({ "rel_tol": q.rel_tol, "abs_tol": q.abs_tol, "max_subdivisions": q.max_subdivisions })
}

pub fn posterior_curve(args: &PosteriorCurveArgs) -> CliResult<()> {
    let clock = ManifestClock::start("posterior-curve");
    let prior = local_prior(&args.prior);
    prior.validate().map_err(usage)?;
    let qcfg = QuadConfig::default();
    let mut failures = 0;
    let rows: Vec<Vec<String>> = args
        .grid
        .values(args.spacing)
        .into_iter()
        .map(|y| {
            let m = posterior_lambda_moments(y, args.delta, &prior, args.beta, &qcfg);
            let mut row = vec![fmt_num(y)];
            match &m {
                Ok(m) => row.extend([fmt_num(m.mean), fmt_opt(m.variance), fmt_num(m.kappa_mean)]),
                Err(_) => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
            row.extend(status_cells(&m, &mut failures));
            row
        })
        .collect();
    if failures > 0 {
        eprintln!("warning: {failures} grid point(s) failed");
    }
    let header = ["y", "mean", "variance", "kappa_mean", "status", "error"];
    write_text(args.out.as_deref(), &csv_text(&header, rows)?)?;
    let config = json!({ "args": args, "prior": prior, "quadrature": qcfg_json(&qcfg) });
    manifest::emit(&clock.finish(&config, None)?, args.manifest.as_deref(), args.out.as_deref())
}
