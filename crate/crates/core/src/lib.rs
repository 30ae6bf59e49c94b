//! Functional linear regression by principal component projection with
//! data-driven dimension selection.

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod fda;
pub mod fpca;
pub mod metrics;
pub mod simulator;

pub use error::{FlrError, Result};
