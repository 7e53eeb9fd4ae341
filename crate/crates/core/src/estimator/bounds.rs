//! Data bounds, step-size schedules and sample-size calculators for the
//! primal-dual estimator.

use nalgebra::{DMatrix, DVector};

use super::cspd::{averaging_weights, CspdSchedule};
use crate::error::{Error, Result};
use crate::linalg::op_norm;
use crate::lqr::{exact_xi, noise_lift, CostWeights, LinearSystem, Policy};

/// Supremum of the extrapolation weights `(k - 1) / k`.
const ZETA_BAR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// Bound on the norm of the mean regressor.
    pub l_gamma: f64,
    /// High-probability bound on regressor norms (before the `ln(1/delta)` factor).
    pub m_gamma: f64,
    /// High-probability bound on targets (before the `ln(1/delta)` factor).
    pub m_c: f64,
    pub m_x: f64,
    pub m_y: f64,
    /// Informativity level; supplied separately from the data.
    pub alpha: Option<f64>,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub omega_x: f64,
    pub omega_y: f64,
}

impl BoundConstants {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= (-1.0_f64).exp()) {
        return Err(Error::Domain(format!("delta must lie in (0, 1/e], got {delta}")));
    }
    Ok(())
}

/// Covariance of the stacked triple `[x; u; x+]`.
fn triple_covariance(sys: &LinearSystem, sigma_x: &DMatrix<f64>, sigma_u: &DMatrix<f64>) -> DMatrix<f64> {
    let (n_x, n_u) = (sys.n_x(), sys.n_u());
    let sigma_next = &sys.a * sigma_x * sys.a.transpose() + &sys.b * sigma_u * sys.b.transpose() + &sys.sigma_w;
    let mut s = DMatrix::zeros(2 * n_x + n_u, 2 * n_x + n_u);
    s.view_mut((0, 0), (n_x, n_x)).copy_from(sigma_x);
    s.view_mut((n_x, n_x), (n_u, n_u)).copy_from(sigma_u);
    let xa = sigma_x * sys.a.transpose();
    let ub = sigma_u * sys.b.transpose();
    s.view_mut((0, n_x + n_u), (n_x, n_x)).copy_from(&xa);
    s.view_mut((n_x + n_u, 0), (n_x, n_x)).copy_from(&xa.transpose());
    s.view_mut((n_x, n_x + n_u), (n_u, n_x)).copy_from(&ub);
    s.view_mut((n_x + n_u, n_x), (n_x, n_u)).copy_from(&ub.transpose());
    s.view_mut((n_x + n_u, n_x + n_u), (n_x, n_x)).copy_from(&sigma_next);
    s
}

/// Evaluates the regressor and target bounds and the derived `M_X`, `M_Y`.
///
/// `d_x` is the diameter scale of the primal set; `c1`, `c2` are the unnamed
/// constants of the Gaussian norm concentration bound.
#[allow(clippy::too_many_arguments)]
pub fn bound_constants(
    sys: &LinearSystem,
    w: &CostWeights,
    policy: &Policy,
    sigma_x: &DMatrix<f64>,
    sigma_u: &DMatrix<f64>,
    delta: f64,
    c1: f64,
    c2: f64,
    d_x: f64,
) -> Result<BoundConstants> {
    check_delta(delta)?;
    if !(c1 > 0.0 && c2 > 0.0 && d_x > 0.0) {
        return Err(Error::Domain(format!(
            "c1, c2, D_X must be positive, got {c1}, {c2}, {d_x}"
        )));
    }
    let (n_x, n_u) = (sys.n_x(), sys.n_u());
    if sigma_x.shape() != (n_x, n_x) || sigma_u.shape() != (n_u, n_u) {
        return Err(Error::Dimension(
            "exploration covariances do not match the system".into(),
        ));
    }
    let stacked = triple_covariance(sys, sigma_x, sigma_u);
    let spread = c2 * c2 / c1.sqrt() * op_norm(&stacked) + c2 * c2 / c1 * stacked.trace();
    let nk = op_norm(&policy.gain);
    let lift_norm = noise_lift(&sys.sigma_w)?.norm();
    let m_gamma = 4.0 * (5.0 + 2.0 * nk + nk * nk) * spread + lift_norm;
    let m_c = 4.0 * (op_norm(&w.q) + nk * nk * op_norm(&w.r)) * spread;

    let sigma_next = stacked.view((n_x + n_u, n_x + n_u), (n_x, n_x)).into_owned();
    let l_gamma = 2.0 * nk * sigma_x.norm()
        + op_norm(sigma_u)
        + (nk * nk + 1.0) * op_norm(sigma_x)
        + op_norm(&sigma_next)
        + lift_norm;

    let omega_y = 1.0;
    let omega_x = exact_xi(sys, w, policy)?.norm() + (1.0 + ZETA_BAR) * 2.0_f64.sqrt() * d_x;
    let log_term = (1.0 / delta).ln();
    Ok(BoundConstants {
        l_gamma,
        m_gamma,
        m_c,
        m_x: m_gamma * omega_y * log_term,
        m_y: m_gamma * omega_x * log_term,
        alpha: None,
        delta,
        c1,
        c2,
        omega_x,
        omega_y,
    })
}

/// Step sizes that balance the primal-dual gap bound:
/// `eta_k = (3 sqrt2 L_G D_Y k + 6 M_X k^1.5) / (2 sqrt2 D_X k)`, `lambda_k`
/// symmetric in `(X, Y)`, `zeta_k = (k - 1) / k`.
pub fn balanced_schedule(consts: &BoundConstants, d_x: f64, d_y: f64, n: usize) -> Result<CspdSchedule> {
    let inputs = [consts.l_gamma, consts.m_x, consts.m_y, d_x, d_y];
    if !inputs.iter().all(|v| *v > 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!(
            "schedule constants must be positive, got L_G = {}, M_X = {}, M_Y = {}, D_X = {d_x}, D_Y = {d_y}",
            consts.l_gamma, consts.m_x, consts.m_y
        )));
    }
    let r2 = 2.0_f64.sqrt();
    let step = |d_own: f64, d_other: f64, m: f64, k: f64| {
        (3.0 * r2 * consts.l_gamma * d_other * k + 6.0 * m * k.powf(1.5)) / (2.0 * r2 * d_own * k)
    };
    let eta = (1..=n).map(|k| step(d_x, d_y, consts.m_x, k as f64)).collect();
    let lambda = (1..=n).map(|k| step(d_y, d_x, consts.m_y, k as f64)).collect();
    CspdSchedule::new(eta, lambda, averaging_weights(n))
}

/// Theoretical epoch count, per-epoch sizes, and total sample budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSizing {
    pub epochs: usize,
    pub sizes: Vec<u64>,
    pub total: u64,
}

/// Epoch sizes `N_s` for accuracy `epsilon`; the `alpha` of `consts` must be set.
pub fn epoch_sample_sizes(consts: &BoundConstants, d_y: f64, d0: f64, epsilon: f64) -> Result<EpochSizing> {
    check_delta(consts.delta)?;
    let alpha = consts
        .alpha
        .ok_or_else(|| Error::Argument("informativity level alpha is not set".into()))?;
    if !(alpha > 0.0 && d_y > 0.0 && d0 > 0.0 && consts.l_gamma > 0.0) {
        return Err(Error::Domain("alpha, L_G, D_Y and D0 must be positive".into()));
    }
    if !(epsilon > 0.0) || epsilon > d0 * d0 {
        return Err(Error::Argument(format!(
            "epsilon must lie in (0, D0^2 = {}], got {epsilon}",
            d0 * d0
        )));
    }
    let epochs = ((d0 * d0 / epsilon).log2().ceil() as usize).max(1);
    let noise_factor = (4000.0 + 256.0 * (1.0 / consts.delta).ln()) / (alpha * alpha);
    let sizes = (1..=epochs)
        .map(|s| {
            let drift = consts.l_gamma * d_y / alpha;
            let variance = noise_factor
                * (consts.m_x.powi(2) + d_y * d_y * consts.m_y.powi(2) / (d0 * d0) * 2.0_f64.powi(s as i32));
            (400.0 * drift.max(variance)).ceil() as u64
        })
        .collect();
    let log_ratio = (d0 / epsilon).ln();
    let total_inner = 2.0 * consts.l_gamma * d_y / alpha * log_ratio
        + noise_factor * (2.0 * consts.m_x.powi(2) * log_ratio + d_y * d_y * consts.m_y.powi(2) / epsilon);
    let total = (400.0 * total_inner.ceil()) as u64;
    Ok(EpochSizing { epochs, sizes, total })
}

/// Smallest squared regressor norm over the list.
pub fn empirical_alpha(gammas: &[DVector<f64>]) -> Result<f64> {
    if gammas.is_empty() {
        return Err(Error::Argument("no regressors given".into()));
    }
    Ok(gammas.iter().map(|g| g.norm_squared()).fold(f64::INFINITY, f64::min))
}

/// Mean absolute Bellman residual `(1/N) sum |Gamma_k . xi - c_k|`.
pub fn empirical_gap_f(xi_hat: &DVector<f64>, gammas: &[DVector<f64>], cs: &[f64]) -> Result<f64> {
    if gammas.len() != cs.len() || gammas.is_empty() {
        return Err(Error::Dimension(format!(
            "{} regressors for {} targets",
            gammas.len(),
            cs.len()
        )));
    }
    if gammas.iter().any(|g| g.len() != xi_hat.len()) {
        return Err(Error::Dimension("regressor length differs from the parameter".into()));
    }
    let total: f64 = gammas.iter().zip(cs).map(|(g, c)| (g.dot(xi_hat) - c).abs()).sum();
    Ok(total / gammas.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::exact_gamma;
    use crate::presets;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    fn unit_consts() -> BoundConstants {
        BoundConstants {
            l_gamma: 1.0,
            m_gamma: 1.0,
            m_c: 1.0,
            m_x: 1.0,
            m_y: 1.0,
            alpha: Some(1.0),
            delta: (-1.0_f64).exp(),
            c1: 1.0,
            c2: 1.0,
            omega_x: 1.0,
            omega_y: 1.0,
        }
    }

    #[test]
    fn unit_schedule_values() {
        let s = balanced_schedule(&unit_consts(), 1.0, 1.0, 3).unwrap();
        let want = 1.5 + 3.0 / 2.0_f64.sqrt();
        assert!((s.eta[0] - want).abs() < 1e-12);
        assert!((s.lambda[0] - want).abs() < 1e-12);
        assert_eq!(s.zeta[0], 0.0);
        assert!((s.zeta[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn schedule_dominant_term() {
        let mut c = unit_consts();
        c.m_x = 2.0;
        let n = 1_000_000;
        let s = balanced_schedule(&c, 1.5, 1.0, n).unwrap();
        let ratio = s.eta[n - 1] / (n as f64).sqrt();
        let limit = 6.0 * 2.0 / (2.0 * 2.0_f64.sqrt() * 1.5);
        assert!((ratio - limit).abs() / limit < 1e-3);
        assert!(s.zeta[n - 1] > 0.999);
        assert!(balanced_schedule(&c, 0.0, 1.0, 3).is_err());
    }

    #[test]
    fn unit_epoch_size() {
        let sizing = epoch_sample_sizes(&unit_consts(), 1.0, 1.0, 0.5).unwrap();
        assert_eq!(sizing.epochs, 1);
        assert_eq!(sizing.sizes[0], 5_107_200);
        let boundary = epoch_sample_sizes(&unit_consts(), 1.0, 1.0, 1.0).unwrap();
        assert_eq!(boundary.epochs, 1);
        assert!(matches!(
            epoch_sample_sizes(&unit_consts(), 1.0, 1.0, 1.5),
            Err(Error::Argument(_))
        ));
        let mut bad = unit_consts();
        bad.delta = 0.5;
        assert!(matches!(epoch_sample_sizes(&bad, 1.0, 1.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn epoch_count_grows_by_two_per_quartering() {
        for eps in [0.3, 0.1, 0.01, 1e-4] {
            let a = epoch_sample_sizes(&unit_consts(), 1.0, 1.0, eps).unwrap().epochs;
            let b = epoch_sample_sizes(&unit_consts(), 1.0, 1.0, eps / 4.0).unwrap().epochs;
            assert_eq!(b, a + 2);
        }
    }

    #[test]
    fn unit_total_budget() {
        let eps = 0.25;
        let sizing = epoch_sample_sizes(&unit_consts(), 1.0, 1.0, eps).unwrap();
        let l = (1.0 / eps).ln();
        let inner = 2.0 * l + 4256.0 * (2.0 * l + 1.0 / eps);
        assert_eq!(sizing.total, 400 * inner.ceil() as u64);
    }

    #[test]
    fn bound_constants_structure() {
        let paper = presets::paper_system();
        // open-loop stable variant so that K = 0 is admissible
        let sys = LinearSystem::new(&paper.a * 0.9, paper.b.clone(), paper.sigma_w.clone()).unwrap();
        let w = presets::paper_weights();
        let (sx, su) = presets::paper_exploration();
        let delta = 0.1;
        let zero = bound_constants(&sys, &w, &Policy::zeros(3, 3), &sx, &su, delta, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(zero.omega_y, 1.0);
        let lift = noise_lift(&sys.sigma_w).unwrap().norm();
        let spread = (zero.m_gamma - lift) / 20.0;
        assert!((zero.m_c - 4.0 * 0.001 * spread).abs() < 1e-12 * zero.m_c);
        assert!((zero.m_x - zero.m_gamma * (1.0 / delta).ln()).abs() < 1e-12 * zero.m_x);
        assert!(matches!(
            bound_constants(&sys, &w, &Policy::zeros(3, 3), &sx, &su, 0.5, 1.0, 1.0, 1.0),
            Err(Error::Domain(_))
        ));

        let k0 = presets::paper_initial_gain().unwrap();
        let mut prev = zero.l_gamma;
        for t in [0.25, 0.5, 1.0] {
            let c = bound_constants(&sys, &w, &Policy::new(&k0.gain * t), &sx, &su, delta, 1.0, 1.0, 1.0).unwrap();
            assert!(c.l_gamma >= prev);
            prev = c.l_gamma;
        }
    }

    #[test]
    fn alpha_and_gap_examples() {
        assert_eq!(empirical_alpha(&[dvector![0.0, 0.0, 0.75]]).unwrap(), 0.5625);
        assert_eq!(empirical_alpha(&[dvector![1.0, 0.0], DVector::zeros(2)]).unwrap(), 0.0);
        let xi = dvector![2.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0];
        let g = vec![dvector![0.0, 0.0, 0.75]];
        assert!(empirical_gap_f(&xi, &g, &[1.0]).unwrap().abs() < 1e-15);
        let off = &xi + dvector![0.0, 0.0, 1.0];
        assert!((empirical_gap_f(&off, &g, &[1.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!(empirical_gap_f(&xi, &g, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn paper_alpha_positive() {
        let sys = presets::paper_system();
        let k0 = presets::paper_initial_gain().unwrap();
        let (sx, su) = presets::paper_exploration();
        let ds = crate::datagen::collect_dataset(&sys, 100, &sx, &su, 0).unwrap();
        let gammas: Vec<_> = ds
            .triples
            .iter()
            .map(|t| exact_gamma(&sys, &k0, &t.x, &t.u).unwrap())
            .collect();
        assert!(empirical_alpha(&gammas).unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn gap_is_mean_projected_error(e in proptest::collection::vec(-1.0..1.0f64, 3)) {
            let sys = LinearSystem::new(dmatrix![0.5], dmatrix![1.0], dmatrix![0.1]).unwrap();
            let w = CostWeights::new(dmatrix![1.0], dmatrix![1.0]).unwrap();
            let k = Policy::zeros(1, 1);
            let xi = exact_xi(&sys, &w, &k).unwrap();
            let pts = [(1.0, 0.0), (0.4, -0.8), (-1.1, 0.3)];
            let gammas: Vec<_> = pts.iter().map(|&(x, u)| exact_gamma(&sys, &k, &dvector![x], &dvector![u]).unwrap()).collect();
            let cs: Vec<f64> = pts.iter().map(|&(x, _)| x * x).collect();
            let e = DVector::from_vec(e);
            let f = empirical_gap_f(&(&xi + &e), &gammas, &cs).unwrap();
            let want = gammas.iter().map(|g| g.dot(&e).abs()).sum::<f64>() / 3.0;
            prop_assert!((f - want).abs() < 1e-12);
        }

        // With one unknown every regressor row has full column rank, so the
        // informativity bound holds sample by sample.
        #[test]
        fn gap_dominates_scaled_error(
            g in proptest::collection::vec(0.1..3.0f64, 1..20),
            truth in -2.0..2.0f64,
            e in -1.0..1.0f64,
        ) {
            let gammas: Vec<_> = g.iter().map(|&v| dvector![v]).collect();
            let cs: Vec<f64> = g.iter().map(|&v| v * truth).collect();
            let alpha = empirical_alpha(&gammas).unwrap();
            let f = empirical_gap_f(&dvector![truth + e], &gammas, &cs).unwrap();
            prop_assert!(f + 1e-12 >= alpha.sqrt() * e.abs());
        }
    }
}
