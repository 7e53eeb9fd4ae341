//! Euclidean balls and their intersections, with exact or Dykstra projection.

use nalgebra::DVector;

use crate::error::{Error, Result};

pub const DYKSTRA_TOL: f64 = 1e-12;
pub const DYKSTRA_MAX_SWEEPS: usize = 1000;

/// Slack allowed when testing membership after a projection.
const MEMBERSHIP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BallSet {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl BallSet {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Argument(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    /// Ball of the given radius around the origin.
    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Self::new(DVector::zeros(dim), radius)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        (v - &self.center).norm() <= self.radius + MEMBERSHIP_SLACK * self.radius.max(1.0)
    }

    /// `center + (v - center) min(1, radius / |v - center|)`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let offset = v - &self.center;
        let dist = offset.norm();
        if dist <= self.radius {
            return v.clone();
        }
        &self.center + offset * (self.radius / dist)
    }
}

/// Primal feasible region: one ball, or the intersection of an outer ball with
/// an inner trust ball.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Ball(BallSet),
    Intersection(BallSet, BallSet),
}

impl From<BallSet> for FeasibleSet {
    fn from(b: BallSet) -> Self {
        FeasibleSet::Ball(b)
    }
}

impl FeasibleSet {
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Ball(b) | FeasibleSet::Intersection(b, _) => b.dim(),
        }
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        match self {
            FeasibleSet::Ball(b) => b.contains(v),
            FeasibleSet::Intersection(a, b) => a.contains(v) && b.contains(v),
        }
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            FeasibleSet::Ball(b) => b.project(v),
            FeasibleSet::Intersection(a, b) => project_intersection(a, b, v),
        }
    }
}

/// Dykstra's alternating projections onto `a` and `b`.
///
/// Returns immediately when projecting onto one ball already lands in the other,
/// which makes the result exact in that case.
pub fn project_intersection(a: &BallSet, b: &BallSet, v: &DVector<f64>) -> DVector<f64> {
    let pa = a.project(v);
    if b.contains(&pa) {
        return pa;
    }
    let pb = b.project(v);
    if a.contains(&pb) {
        return pb;
    }
    let mut x = v.clone();
    let mut p = DVector::zeros(v.len());
    let mut q = DVector::zeros(v.len());
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let y = a.project(&(&x + &p));
        p = &x + &p - &y;
        let next = b.project(&(&y + &q));
        q = &y + &q - &next;
        let moved = (&next - &x).norm();
        x = next;
        if moved <= DYKSTRA_TOL * x.norm().max(1.0) {
            break;
        }
    }
    x
}
