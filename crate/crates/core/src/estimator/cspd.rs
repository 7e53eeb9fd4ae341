//! Conditional stochastic primal-dual regression and its multi-epoch restart
//! scheme.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::sets::{BallSet, FeasibleSet};
use super::RegressionSample;
use crate::error::{Error, Result};

/// Per-iteration primal step `eta_k`, dual step `lambda_k`, extrapolation `zeta_k`
/// for `k = 1..=len`.
#[derive(Debug, Clone, PartialEq)]
pub struct CspdSchedule {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl CspdSchedule {
    pub fn new(eta: Vec<f64>, lambda: Vec<f64>, zeta: Vec<f64>) -> Result<Self> {
        if eta.len() != lambda.len() || eta.len() != zeta.len() {
            return Err(Error::Argument("schedule sequences differ in length".into()));
        }
        let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !positive(&eta) || !positive(&lambda) {
            return Err(Error::Argument("step sizes must be finite and positive".into()));
        }
        if !zeta.iter().all(|z| (0.0..=1.0).contains(z)) {
            return Err(Error::Argument("extrapolation weights must lie in [0, 1]".into()));
        }
        Ok(Self { eta, lambda, zeta })
    }

    /// `eta_k = lambda_k = scale sqrt(k)`, `zeta_k = (k - 1) / k`.
    pub fn sqrt_growth(scale: f64, n: usize) -> Result<Self> {
        let steps: Vec<f64> = (1..=n).map(|k| scale * (k as f64).sqrt()).collect();
        Self::new(steps.clone(), steps, averaging_weights(n))
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }
}

/// `zeta_k = (k - 1) / k` for `k = 1..=n`.
pub(crate) fn averaging_weights(n: usize) -> Vec<f64> {
    (1..=n).map(|k| (k as f64 - 1.0) / k as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CspdOutput {
    pub xi: DVector<f64>,
    pub y: f64,
}

/// Runs the primal-dual iteration over `samples` in order and returns the
/// `k`-weighted average of the iterates.
pub fn cspd(
    samples: &[RegressionSample],
    set: &FeasibleSet,
    xi0: &DVector<f64>,
    y0: f64,
    sched: &CspdSchedule,
) -> Result<CspdOutput> {
    cspd_observed(samples, set, xi0, y0, sched, |_, _, _| {})
}

/// As [`cspd`], calling `observe(k, xi_k, y_k)` after every iteration.
pub fn cspd_observed(
    samples: &[RegressionSample],
    set: &FeasibleSet,
    xi0: &DVector<f64>,
    y0: f64,
    sched: &CspdSchedule,
    mut observe: impl FnMut(usize, &DVector<f64>, f64),
) -> Result<CspdOutput> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Argument("cspd needs at least one sample".into()));
    }
    if sched.len() < n {
        return Err(Error::Argument(format!(
            "schedule has {} entries for {n} samples",
            sched.len()
        )));
    }
    if xi0.len() != set.dim() || samples.iter().any(|s| s.gamma_hat.len() != xi0.len()) {
        return Err(Error::Dimension(
            "samples, start point and feasible set disagree in length".into(),
        ));
    }
    if !set.contains(xi0) {
        return Err(Error::Argument(
            "initial parameter lies outside the feasible set".into(),
        ));
    }
    if !(-1.0..=1.0).contains(&y0) {
        return Err(Error::Argument(format!("initial dual variable {y0} outside [-1, 1]")));
    }

    let mut prev = xi0.clone();
    let mut cur = xi0.clone();
    let mut y = y0;
    let mut sum_xi = DVector::zeros(xi0.len());
    let mut sum_y = 0.0;
    for (idx, s) in samples.iter().enumerate() {
        let k = idx + 1;
        let extrapolated = &cur + (&cur - &prev) * sched.zeta[idx];
        let residual = s.gamma_hat.dot(&extrapolated) - s.c;
        y = (y + residual / sched.lambda[idx]).clamp(-1.0, 1.0);
        let next = set.project(&(&cur - &s.gamma_hat * (y / sched.eta[idx])));
        prev = std::mem::replace(&mut cur, next);
        observe(k, &cur, y);
        sum_xi.axpy(k as f64, &cur, 1.0);
        sum_y += k as f64 * y;
    }
    let weight = 2.0 / (n as f64 * (n as f64 + 1.0));
    Ok(CspdOutput {
        xi: sum_xi * weight,
        y: sum_y * weight,
    })
}

/// How the trust radius of epoch `s` is derived from `D_s^2 = 2^{-(s-1)} D_0^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// Radius `D_s^2`.
    #[default]
    Squared,
    /// Radius `D_s`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub sizes: Vec<usize>,
    pub d0: f64,
    #[serde(default)]
    pub radius_mode: RadiusMode,
}

impl EpochPlan {
    pub fn new(sizes: Vec<usize>, d0: f64, radius_mode: RadiusMode) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Argument(
                "epoch plan needs at least one epoch, each with samples".into(),
            ));
        }
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::Argument(format!("D0 must be positive, got {d0}")));
        }
        Ok(Self { sizes, d0, radius_mode })
    }

    pub fn epochs(&self) -> usize {
        self.sizes.len()
    }

    pub fn total_samples(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// `D_s^2` for epoch `s = 1..=S`.
    pub fn squared_scale(&self, s: usize) -> f64 {
        self.d0 * self.d0 * 0.5_f64.powi(s as i32 - 1)
    }

    /// Trust radius used in epoch `s`.
    pub fn radius(&self, s: usize) -> f64 {
        match self.radius_mode {
            RadiusMode::Squared => self.squared_scale(s),
            RadiusMode::Linear => self.squared_scale(s).sqrt(),
        }
    }
}

/// Warm-started restarts on consecutive fresh blocks of `samples`, each
/// confined to `outer` intersected with a shrinking ball around the previous
/// estimate. `schedule_for(s, n_s)` supplies the schedule of epoch `s`.
pub fn multi_epoch_cspd(
    samples: &[RegressionSample],
    outer: &BallSet,
    xi0: &DVector<f64>,
    y0: f64,
    plan: &EpochPlan,
    mut schedule_for: impl FnMut(usize, usize) -> Result<CspdSchedule>,
) -> Result<DVector<f64>> {
    if plan.total_samples() > samples.len() {
        return Err(Error::Argument(format!(
            "epoch plan needs {} samples, dataset has {}",
            plan.total_samples(),
            samples.len()
        )));
    }
    if !outer.contains(xi0) {
        return Err(Error::Argument(
            "initial parameter lies outside the feasible set".into(),
        ));
    }
    let mut estimate = xi0.clone();
    let mut offset = 0;
    for (idx, &n_s) in plan.sizes.iter().enumerate() {
        let s = idx + 1;
        let trust = BallSet::new(estimate.clone(), plan.radius(s))?;
        let set = FeasibleSet::Intersection(outer.clone(), trust);
        let sched = schedule_for(s, n_s)?;
        estimate = cspd(&samples[offset..offset + n_s], &set, &estimate, y0, &sched)?.xi;
        offset += n_s;
    }
    Ok(estimate)
}
