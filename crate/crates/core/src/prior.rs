//! Mixing distributions for the local parameter `u`.
//!
//! Each family is a [`LocalPrior`] strategy; [`PriorSpec::local_prior`]
//! builds the right one from a resolved specification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::rng::RngHandle;
use crate::special::ln_beta;

/// The three supported local-parameter families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorFamily {
    /// Scaled beta (beta prime) prior on `u`.
    Sb,
    /// Inverse rescaled beta prior on `u`.
    Irb,
    /// Global shrinkage only: `u ≡ 1`.
    Gl,
}

impl PriorFamily {
    pub const ALL: [PriorFamily; 3] = [PriorFamily::Sb, PriorFamily::Irb, PriorFamily::Gl];

    pub fn name(self) -> &'static str {
        match self {
            PriorFamily::Sb => "sb",
            PriorFamily::Irb => "irb",
            PriorFamily::Gl => "gl",
        }
    }
}

impl fmt::Display for PriorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sb" => Ok(PriorFamily::Sb),
            "irb" => Ok(PriorFamily::Irb),
            "gl" => Ok(PriorFamily::Gl),
            other => Err(Error::Input(format!("unknown prior family '{other}' (expected sb, irb or gl)"))),
        }
    }
}

/// Treatment of a global parameter (`β` or `τ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GlobalParam {
    Fixed { value: f64 },
    GammaPrior { shape: f64, rate: f64 },
}

impl GlobalParam {
    pub fn fixed(value: f64) -> Self {
        GlobalParam::Fixed { value }
    }

    pub fn gamma(shape: f64, rate: f64) -> Self {
        GlobalParam::GammaPrior { shape, rate }
    }

    pub fn fixed_value(&self) -> Option<f64> {
        match *self {
            GlobalParam::Fixed { value } => Some(value),
            GlobalParam::GammaPrior { .. } => None,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            GlobalParam::Fixed { value } => value.is_finite() && value > 0.0,
            GlobalParam::GammaPrior { shape, rate } => shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("{name}: parameters must be finite and > 0 ({self})")))
        }
    }
}

impl fmt::Display for GlobalParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalParam::Fixed { value } => write!(f, "fixed:{value}"),
            GlobalParam::GammaPrior { shape, rate } => write!(f, "gamma:{shape},{rate}"),
        }
    }
}

/// Parses `fixed:V` or `gamma:A,B`.
impl FromStr for GlobalParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("expected 'fixed:V' or 'gamma:A,B', got '{s}'"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let param = match kind.trim() {
            "fixed" => GlobalParam::fixed(num(rest)?),
            "gamma" => {
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                GlobalParam::gamma(num(a)?, num(b)?)
            }
            _ => return Err(bad()),
        };
        param.validate("global parameter")?;
        Ok(param)
    }
}

/// Resolved prior configuration.
///
/// `(a, b)` are always stored in the SB order; the IRB family reads them as
/// `π_IRB(u; b, a)` with normalizer `B(b, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub family: PriorFamily,
    pub a: f64,
    pub b: f64,
    pub beta: GlobalParam,
    pub tau: GlobalParam,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            family: PriorFamily::Sb,
            a: 2.0,
            b: 0.5,
            beta: GlobalParam::gamma(0.1, 0.1),
            tau: GlobalParam::gamma(0.1, 0.1),
        }
    }
}

impl PriorSpec {
    pub fn new(family: PriorFamily, a: f64, b: f64) -> Self {
        PriorSpec {
            family,
            a,
            b,
            ..PriorSpec::default()
        }
    }

    /// Same family with `β` and `τ` fixed at the given values.
    pub fn with_fixed_globals(mut self, beta: f64, tau: f64) -> Self {
        self.beta = GlobalParam::fixed(beta);
        self.tau = GlobalParam::fixed(tau);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.family != PriorFamily::Gl && !(self.a.is_finite() && self.a > 0.0 && self.b.is_finite() && self.b > 0.0) {
            return Err(Error::Input(format!("hyperparameters a, b must be > 0, got a={}, b={}", self.a, self.b)));
        }
        self.beta.validate("beta")?;
        self.tau.validate("tau")
    }

    pub fn local_prior(&self) -> Box<dyn LocalPrior> {
        match self.family {
            PriorFamily::Sb => Box::new(SbPrior { a: self.a, b: self.b }),
            PriorFamily::Irb => Box::new(IrbPrior { a: self.a, b: self.b }),
            PriorFamily::Gl => Box::new(PointMassPrior { at: 1.0 }),
        }
    }

    pub fn tail_indices(&self) -> Option<TailIndices> {
        self.local_prior().tail_indices()
    }
}

/// Exponents `(α, γ)` of the small-`u` behaviour
/// `π(u) ~ C u^{α-1} / {1 + ln(1 + 1/u)}^{1+γ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIndices {
    pub alpha: f64,
    pub gamma_idx: f64,
}

impl TailIndices {
    pub fn new(alpha: f64, gamma_idx: f64) -> Result<Self> {
        if !(alpha >= 0.0 && gamma_idx >= -1.0) || (alpha == 0.0 && gamma_idx <= 0.0) {
            return Err(Error::domain(
                "tail_indices",
                format!("improper or invalid tail (alpha={alpha}, gamma={gamma_idx})"),
            ));
        }
        Ok(TailIndices { alpha, gamma_idx })
    }
}

/// A mixing distribution for the local parameter.
pub trait LocalPrior: fmt::Debug + Send + Sync {
    fn family(&self) -> PriorFamily;

    /// `ln π(u)`; `-∞` off the support.
    fn ln_density(&self, u: f64) -> f64;

    /// `Some(u0)` for a degenerate prior concentrated at `u0`.
    fn point_mass(&self) -> Option<f64> {
        None
    }

    fn tail_indices(&self) -> Option<TailIndices>;

    fn sample(&self, rng: &mut RngHandle) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbPrior {
    pub a: f64,
    pub b: f64,
}

impl LocalPrior for SbPrior {
    fn family(&self) -> PriorFamily {
        PriorFamily::Sb
    }

    fn ln_density(&self, u: f64) -> f64 {
        sb_ln_density_unchecked(u, self.a, self.b)
    }

    fn tail_indices(&self) -> Option<TailIndices> {
        Some(TailIndices {
            alpha: self.a,
            gamma_idx: -1.0,
        })
    }

    fn sample(&self, rng: &mut RngHandle) -> f64 {
        dist::sample_sb(self.a, self.b, rng).expect("validated SB parameters")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrbPrior {
    pub a: f64,
    pub b: f64,
}

impl LocalPrior for IrbPrior {
    fn family(&self) -> PriorFamily {
        PriorFamily::Irb
    }

    fn ln_density(&self, u: f64) -> f64 {
        irb_ln_density_unchecked(u, self.b, self.a)
    }

    fn tail_indices(&self) -> Option<TailIndices> {
        Some(TailIndices {
            alpha: 0.0,
            gamma_idx: self.a,
        })
    }

    fn sample(&self, rng: &mut RngHandle) -> f64 {
        dist::sample_irb(self.b, self.a, rng).expect("validated IRB parameters")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassPrior {
    pub at: f64,
}

impl LocalPrior for PointMassPrior {
    fn family(&self) -> PriorFamily {
        PriorFamily::Gl
    }

    fn ln_density(&self, _u: f64) -> f64 {
        f64::NEG_INFINITY
    }

    fn point_mass(&self) -> Option<f64> {
        Some(self.at)
    }

    fn tail_indices(&self) -> Option<TailIndices> {
        None
    }

    fn sample(&self, _rng: &mut RngHandle) -> f64 {
        self.at
    }
}

pub(crate) fn sb_ln_density_unchecked(u: f64, a: f64, b: f64) -> f64 {
    if !(u > 0.0) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * u.ln() - (a + b) * u.ln_1p() - ln_beta(a, b)
}

/// `ln(1 + 1/u)` without overflow for tiny `u`.
pub(crate) fn ln1p_recip(u: f64) -> f64 {
    if u < 1e-8 {
        u.ln_1p() - u.ln()
    } else {
        (1.0 / u).ln_1p()
    }
}

pub(crate) fn irb_ln_density_unchecked(u: f64, b: f64, a: f64) -> f64 {
    if !(u > 0.0) {
        return f64::NEG_INFINITY;
    }
    let l = ln1p_recip(u);
    -ln_beta(b, a) - u.ln() - u.ln_1p() + (b - 1.0) * l.ln() - (b + a) * l.ln_1p()
}
