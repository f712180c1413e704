// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod mcmc;
pub mod model;
pub mod prior;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use model::Observation;
pub use prior::{GlobalParam, LocalPrior, PriorFamily, PriorSpec};
pub use rng::RngHandle;
