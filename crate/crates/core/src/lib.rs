//! Index-space estimation for multi-index regression models, with
//! slice-based baselines, a data-driven error proxy, link-function
//! regressors on projected predictors, and seeded experiment drivers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod metrics;
pub mod numkit;
pub mod proxy;
pub mod rcls;
pub mod regress;

pub use data::Dataset;
pub use error::{Error, Result};
pub use estimate::{fit_sdr, Method, ProjectionEstimate};
pub use numkit::SymMatrix;
