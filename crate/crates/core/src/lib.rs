//! Conditional denoising-diffusion engine for probabilistic forecasting of
//! EV charging load: learns the predictive distribution of future load given
//! historical demand and covariates, generates forecast ensembles, fine-tunes
//! by median-deviation minimization and evaluates against a quantile
//! regression baseline.

pub mod artifact;
pub mod config;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod nn;
pub mod schedule;

pub use error::{Error, Result};
