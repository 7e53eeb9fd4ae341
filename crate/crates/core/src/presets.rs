//! Benchmark plant and hyperparameters used by the experiments.

use nalgebra::{dmatrix, DMatrix};

use crate::error::Result;
use crate::lqr::{solve_dare, CostWeights, LinearSystem, Policy};

/// Slightly unstable, lightly coupled three-state plant with full actuation.
pub fn paper_system() -> LinearSystem {
    let a = dmatrix![
        1.01, 0.01, 0.0;
        0.01, 1.01, 0.01;
        0.0, 0.01, 1.01
    ];
    LinearSystem::new(a, DMatrix::identity(3, 3), DMatrix::identity(3, 3) * 0.1).expect("preset system is valid")
}

pub fn paper_weights() -> CostWeights {
    CostWeights::new(DMatrix::identity(3, 3) * 0.001, DMatrix::identity(3, 3)).expect("preset weights are valid")
}

/// Exploration covariances for states and inputs.
pub fn paper_exploration() -> (DMatrix<f64>, DMatrix<f64>) {
    (DMatrix::identity(3, 3), DMatrix::identity(3, 3))
}

/// Optimal gain for the state weight scaled by `factor`.
pub fn dare_initial_gain(sys: &LinearSystem, w: &CostWeights, factor: f64) -> Result<Policy> {
    let scaled = CostWeights::new(&w.q * factor, w.r.clone())?;
    Ok(solve_dare(sys, &scaled)?.0)
}

/// Initial policy: LQR-optimal for `(A, B, 100 Q, R)`.
pub fn paper_initial_gain() -> Result<Policy> {
    dare_initial_gain(&paper_system(), &paper_weights(), 100.0)
}

pub const PAPER_SAMPLES: usize = 100;
pub const PAPER_BALL_RADIUS: f64 = 1.0;
pub const PAPER_SCHEDULE_SCALE: f64 = 0.001;
pub const PAPER_EPOCH_SIZES: [usize; 4] = [8, 16, 24, 52];
pub const PAPER_D0: f64 = 1.0;
pub const PAPER_STEP: f64 = 0.05;
pub const PAPER_TRIALS: usize = 30;
pub const PAPER_ITERATIONS: usize = 50;
