//! Variational survival inference.
//!
//! Predicts an individual discrete-time event distribution from covariates
//! under right censoring. A covariate-conditioned Gaussian prior over a latent
//! code, an encoder that also sees the observed time, and a softmax decoder
//! over percentile time bins are trained jointly on evidence lower bounds for
//! events and for censored observations.
//!
//! The crate also ships the ablation and parametric baselines, a Cox-Gompertz
//! simulator with its exact conditional CDF, importance-weighted likelihood
//! estimators, the evaluation metrics, and the experiment driver used by the
//! `vsi` command-line tool.

pub mod artifact;
pub mod baselines;
pub mod config;
pub mod data;
pub mod discrete;
mod error;
pub mod experiment;
pub mod gaussian;
pub mod grid;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
