use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gshrink::{GlobalParam, PriorFamily};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gshrink", version, about = "Sparse Bayesian estimation of gamma means with global-local shrinkage priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collapse individual records into per-group sample means.
    Group(GroupArgs),
    /// Fit the hierarchical model to `y, delta[, eta]` data by MCMC.
    Fit(FitArgs),
    /// Run a simulation scenario and report estimator metrics.
    Simulate(SimulateArgs),
    /// Tabulate the marginal prior density of lambda.
    PriorCurve(PriorCurveArgs),
    /// Tabulate posterior moments of lambda over a grid of observations.
    PosteriorCurve(PosteriorCurveArgs),
}

fn parse_family(s: &str) -> Result<PriorFamily, String> {
    s.parse().map_err(|e: gshrink::Error| e.to_string())
}

fn parse_global(s: &str) -> Result<GlobalParam, String> {
    s.parse().map_err(|e: gshrink::Error| e.to_string())
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_level(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        Ok(v) => Err(format!("must lie strictly between 0 and 1, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

/// `min:max:points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected min:max:points, got '{s}'"));
    };
    let min = parse_positive(lo.trim())?;
    let max = parse_positive(hi.trim())?;
    let points: usize = n.trim().parse().map_err(|e| format!("points: {e}"))?;
    if points == 0 {
        return Err("points must be at least 1".into());
    }
    if max < min {
        return Err(format!("max ({max}) is below min ({min})"));
    }
    if points == 1 && max != min {
        return Err("a single-point grid needs min == max".into());
    }
    Ok(Grid { min, max, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

impl Grid {
    pub fn values(&self, spacing: Spacing) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let step = |k: usize| k as f64 / (self.points - 1) as f64;
        match spacing {
            Spacing::Linear => (0..self.points).map(|k| self.min + (self.max - self.min) * step(k)).collect(),
            Spacing::Log => {
                let (a, b) = (self.min.ln(), self.max.ln());
                (0..self.points)
                    .map(|k| match k {
                        0 => self.min,
                        k if k == self.points - 1 => self.max,
                        k => (a + (b - a) * step(k)).exp(),
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PriorArgs {
    /// Local prior family.
    #[arg(long, default_value = "sb", value_parser = parse_family)]
    pub prior: PriorFamily,
    /// First shape hyperparameter.
    #[arg(long, default_value_t = 2.0, value_parser = parse_positive)]
    pub a: f64,
    /// Second shape hyperparameter (IRB requires b < 1 for sampling).
    #[arg(long, default_value_t = 0.5, value_parser = parse_positive)]
    pub b: f64,
}

/// Sampler settings; unset values fall back to the environment, then to the
/// per-command defaults.
#[derive(Debug, Args, Serialize)]
pub struct McmcArgs {
    /// Warm-up sweeps discarded before storing draws.
    #[arg(long, env = "GSHRINK_BURNIN")]
    pub burnin: Option<usize>,
    /// Stored draws per chain.
    #[arg(long, env = "GSHRINK_SAMPLES")]
    pub samples: Option<usize>,
    /// Sweeps between stored draws.
    #[arg(long, env = "GSHRINK_THIN")]
    pub thin: Option<usize>,
    /// Root random seed.
    #[arg(long, env = "GSHRINK_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GroupArgs {
    /// Input CSV with `group_id, value` columns (`-` for stdin).
    pub input: PathBuf,
    /// Extra columns that further split groups (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub keys: Vec<String>,
    /// Output CSV path (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Manifest path (defaults to `<out>.manifest.json`, or stderr).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Input CSV with `y, delta[, eta]` columns (`-` for stdin).
    pub input: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Treatment of beta: `fixed:V` or `gamma:A,B`.
    #[arg(long, default_value = "gamma:0.1,0.1", value_parser = parse_global)]
    pub beta: GlobalParam,
    /// Treatment of tau: `fixed:V` or `gamma:A,B`.
    #[arg(long, default_value = "gamma:0.1,0.1", value_parser = parse_global)]
    pub tau: GlobalParam,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Independent chains, pooled for the summaries.
    #[arg(long, env = "GSHRINK_CHAINS", default_value_t = 1)]
    pub chains: usize,
    /// Credible interval level.
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    pub level: f64,
    /// Write every stored lambda draw to this CSV.
    #[arg(long)]
    pub draws_out: Option<PathBuf>,
    /// JSON output path (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario number.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
    pub scenario: u8,
    /// Units per data set.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Signal scale.
    #[arg(long, default_value_t = 5.0, value_parser = parse_positive)]
    pub mu: f64,
    /// Gamma shape of each observation.
    #[arg(long, default_value_t = 5.0, value_parser = parse_positive)]
    pub delta: f64,
    /// Replications.
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    /// Methods to compare (comma-separated: sb, irb, gl, ml).
    #[arg(long, value_delimiter = ',', default_value = "sb,irb,gl,ml")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Interval level for coverage.
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    pub level: f64,
    /// Aggregate metrics CSV path (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Per-replication metrics CSV.
    #[arg(long)]
    pub reps_out: Option<PathBuf>,
    /// Full metrics table as JSON, manifest included.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Manifest path (defaults to `<out>.manifest.json`, or stderr).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PriorCurveArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Log-spaced lambda grid `min:max:points`.
    #[arg(long, default_value = "1e-3:1e3:61", value_parser = parse_grid)]
    pub grid: Grid,
    /// Output CSV path (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Manifest path (defaults to `<out>.manifest.json`, or stderr).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PosteriorCurveArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Gamma shape of the observation.
    #[arg(long, default_value_t = 5.0, value_parser = parse_positive)]
    pub delta: f64,
    /// Fixed grand mean.
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    pub beta: f64,
    /// Observation grid `min:max:points`.
    #[arg(long, default_value = "0.1:10:100", value_parser = parse_grid)]
    pub grid: Grid,
    /// Grid spacing.
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    pub spacing: Spacing,
    /// Output CSV path (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Manifest path (defaults to `<out>.manifest.json`, or stderr).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn grids() {
        let g = parse_grid("1e-2:1e2:5").unwrap();
        let v = g.values(Spacing::Log);
        assert_eq!(v.len(), 5);
        assert_eq!((v[0], v[4]), (1e-2, 1e2));
        assert!((v[2] - 1.0).abs() < 1e-12);
        let lin = parse_grid("0:1:3");
        assert!(lin.is_err(), "min must be positive");
        assert_eq!(parse_grid("1:3:3").unwrap().values(Spacing::Linear), vec![1.0, 2.0, 3.0]);
        assert!(parse_grid("3:1:3").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("1:2:0").is_err());
    }
}
