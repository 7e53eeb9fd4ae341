//! Model-free policy optimization for average-cost stochastic LQR.
//!
//! The gradient ingredients `B'P_K B` and `B'P_K A` are regressed from
//! off-policy `(x, u, x+)` triples with a primal-dual solver that tolerates
//! noisy regressors, and fed into natural-gradient or Gauss-Newton updates.

// `!(x > 0.0)` also rejects NaN, which is the point of those guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod lqr;
pub mod pgm;
pub mod presets;
pub mod tensorops;

pub use datagen::{
    collect_dataset, load_dataset, sample_gaussian, save_dataset, DataTriple, Dataset, DatasetMeta, RngState,
};
pub use error::{Error, Result};
pub use estimator::{BallSet, BoundConstants, CspdSchedule, EpochPlan, ParameterVector, RadiusMode, RegressionSample};
pub use lqr::{CostWeights, LinearSystem, Policy, ValueSolution};
pub use pgm::{Estimator, Method, PgmConfig, RunStatus, RunTrace, TraceRecord};

pub use nalgebra::{DMatrix, DVector};
