//! Regression of the Bellman parameter `xi_K` from off-policy triples.

mod bounds;
mod cspd;
mod sets;

pub use bounds::{
    balanced_schedule, bound_constants, empirical_alpha, empirical_gap_f, epoch_sample_sizes, BoundConstants,
    EpochSizing,
};
pub use cspd::{cspd, cspd_observed, multi_epoch_cspd, CspdOutput, CspdSchedule, EpochPlan, RadiusMode};
pub use sets::{BallSet, FeasibleSet, DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL};

use nalgebra::{DMatrix, DVector};

use crate::datagen::DataTriple;
use crate::error::{Error, Result};
use crate::lqr::{CostWeights, Policy};
use crate::tensorops::{kron, tri_len, unvec, unvecs, vecv, xi_len};

/// Largest condition number of the Gram matrix accepted by [`ls_estimate`].
pub const LS_MAX_CONDITION: f64 = 1e12;

/// Regressor `gamma_hat` and target `c` of one Bellman equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub gamma_hat: DVector<f64>,
    pub c: f64,
}

/// `gamma_hat = [2 x (x) (u - Kx); vecv(u) - vecv(Kx); vecv(x) + W - vecv(x+)]`,
/// `c = x'(Q + K'RK)x`.
pub fn build_sample(
    triple: &DataTriple,
    policy: &Policy,
    w: &CostWeights,
    lift: &DVector<f64>,
) -> Result<RegressionSample> {
    let (n_u, n_x) = policy.gain.shape();
    if triple.x.len() != n_x || triple.u.len() != n_u || triple.x_plus.len() != n_x {
        return Err(Error::Dimension(format!(
            "triple of lengths ({}, {}, {}) for a {n_u}x{n_x} gain",
            triple.x.len(),
            triple.u.len(),
            triple.x_plus.len()
        )));
    }
    if lift.len() != tri_len(n_x) || w.q.nrows() != n_x || w.r.nrows() != n_u {
        return Err(Error::Dimension("noise lift or weights do not match the gain".into()));
    }
    let x = &triple.x;
    let kx = policy.apply(x);
    let mut g = Vec::with_capacity(xi_len(n_x, n_u));
    g.extend((kron(x, &(&triple.u - &kx)) * 2.0).iter());
    g.extend((vecv(&triple.u) - vecv(&kx)).iter());
    g.extend((vecv(x) + lift - vecv(&triple.x_plus)).iter());
    let c = x.dot(&(w.closed_loop_weight(policy) * x));
    Ok(RegressionSample {
        gamma_hat: DVector::from_vec(g),
        c,
    })
}

pub fn build_samples(
    triples: &[DataTriple],
    policy: &Policy,
    w: &CostWeights,
    lift: &DVector<f64>,
) -> Result<Vec<RegressionSample>> {
    triples.iter().map(|t| build_sample(t, policy, w, lift)).collect()
}

/// Least squares `argmin sum (gamma_hat . xi - c)^2`, solved by QR on the
/// stacked regressors. Biased when the regressors carry noise.
pub fn ls_estimate(samples: &[RegressionSample]) -> Result<DVector<f64>> {
    let d = samples.first().map_or(0, |s| s.gamma_hat.len());
    if samples.iter().any(|s| s.gamma_hat.len() != d) || d == 0 {
        return Err(Error::Dimension("regressors must share a nonzero length".into()));
    }
    if samples.len() < d {
        return Err(Error::Informativity { smallest_singular: 0.0 });
    }
    let z = DMatrix::from_fn(samples.len(), d, |k, j| samples[k].gamma_hat[j]);
    let c = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.c));
    let sv = z.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 0.0 || (smax / smin).powi(2) > LS_MAX_CONDITION {
        return Err(Error::Informativity {
            smallest_singular: smin,
        });
    }
    let qr = z.qr();
    let rhs = qr.q().transpose() * c;
    qr.r().solve_upper_triangular(&rhs).ok_or(Error::Informativity {
        smallest_singular: smin,
    })
}

/// Stacked parameter `[vec(B'PA); vecs(B'PB); vecs(P)]` with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub coords: DVector<f64>,
    pub n_x: usize,
    pub n_u: usize,
}

/// Blocks of a parameter vector as matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct XiBlocks {
    pub btpa: DMatrix<f64>,
    pub btpb: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

impl ParameterVector {
    pub fn new(coords: DVector<f64>, n_x: usize, n_u: usize) -> Result<Self> {
        if coords.len() != xi_len(n_x, n_u) {
            return Err(Error::Dimension(format!(
                "parameter of length {} for n_x = {n_x}, n_u = {n_u} (expected {})",
                coords.len(),
                xi_len(n_x, n_u)
            )));
        }
        Ok(Self { coords, n_x, n_u })
    }

    pub fn unpack(&self) -> XiBlocks {
        unpack_xi(&self.coords, self.n_x, self.n_u).expect("length checked on construction")
    }
}

/// Splits `xi` into `(B'PA, B'PB, P)`.
pub fn unpack_xi(xi: &DVector<f64>, n_x: usize, n_u: usize) -> Result<XiBlocks> {
    if xi.len() != xi_len(n_x, n_u) {
        return Err(Error::Dimension(format!(
            "parameter of length {} for n_x = {n_x}, n_u = {n_u}",
            xi.len()
        )));
    }
    let k1 = n_u * n_x;
    let k2 = k1 + tri_len(n_u);
    Ok(XiBlocks {
        btpa: unvec(&xi.rows(0, k1).into_owned(), n_u, n_x)?,
        btpb: unvecs(&xi.rows(k1, k2 - k1).into_owned())?,
        p: unvecs(&xi.rows(k2, xi.len() - k2).into_owned())?,
    })
}
