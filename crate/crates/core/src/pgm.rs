//! Natural-gradient and Gauss-Newton policy updates driven by estimated
//! Bellman parameters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{
    build_samples, cspd, ls_estimate, multi_epoch_cspd, unpack_xi, BallSet, CspdSchedule, EpochPlan, FeasibleSet,
};
use crate::linalg::{min_eigenvalue, op_norm, spectral_radius};
use crate::lqr::{
    average_cost, exact_xi, lipschitz_constants, noise_lift, solve_dare, solve_policy_lyapunov, stationary_covariance,
    xi_from_value, CostWeights, LinearSystem, Policy, STABILITY_MARGIN,
};

/// Smallest eigenvalue accepted for `R + B'PB` in a Gauss-Newton step.
pub const GNM_MIN_EIGENVALUE: f64 = 1e-10;
/// Default split of the error budget between estimation and optimization.
pub const DEFAULT_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Npg,
    Gnm,
}

/// Source of the Bellman parameter at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Cspd,
    MultiEpoch,
    Ls,
    /// Model-based value (no data).
    Exact,
    /// Certainty equivalence on least-squares `(A, B)`.
    Sysid,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Cspd => "cspd",
            Estimator::MultiEpoch => "multi_epoch",
            Estimator::Ls => "ls",
            Estimator::Exact => "exact",
            Estimator::Sysid => "sysid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgmConfig {
    pub method: Method,
    pub step: f64,
    pub max_iters: usize,
    pub estimator: Estimator,
    pub stability_guard: bool,
    /// Radius of the primal ball around the origin.
    pub ball_radius: f64,
    /// Scale `s` of the primal-dual steps `s sqrt(k)`.
    pub schedule_scale: f64,
    pub epoch_plan: EpochPlan,
}

impl PgmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Domain(format!("step size must be positive, got {}", self.step)));
        }
        if self.method == Method::Gnm && self.step > 0.5 {
            return Err(Error::Domain(format!(
                "Gauss-Newton step must be at most 1/2, got {}",
                self.step
            )));
        }
        if !(self.ball_radius > 0.0 && self.schedule_scale > 0.0) {
            return Err(Error::Domain("ball radius and schedule scale must be positive".into()));
        }
        Ok(())
    }
}

/// `K - 2 eta [(R + B'PB) K + B'PA]`.
pub fn npg_step(policy: &Policy, btpb: &DMatrix<f64>, btpa: &DMatrix<f64>, r: &DMatrix<f64>, eta: f64) -> Policy {
    let direction = (r + btpb) * &policy.gain + btpa;
    Policy::new(&policy.gain - direction * (2.0 * eta))
}

/// `K - 2 eta [K + (R + B'PB)^{-1} B'PA]`; rejects an inner matrix that is not
/// safely positive definite.
pub fn gnm_step(
    policy: &Policy,
    btpb: &DMatrix<f64>,
    btpa: &DMatrix<f64>,
    r: &DMatrix<f64>,
    eta: f64,
) -> Result<Policy> {
    let inner = r + btpb;
    let inner = (&inner + inner.transpose()) * 0.5;
    let lmin = min_eigenvalue(&inner)?;
    if lmin <= GNM_MIN_EIGENVALUE {
        return Err(Error::Accuracy(format!(
            "R + B'PB estimate has smallest eigenvalue {lmin:.3e}"
        )));
    }
    let solved = inner
        .cholesky()
        .ok_or_else(|| Error::Accuracy("R + B'PB estimate is not positive definite".into()))?
        .solve(btpa);
    Ok(Policy::new(&policy.gain - (&policy.gain + solved) * (2.0 * eta)))
}

/// Guaranteed per-step contraction of the optimality gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionFactors {
    /// Exact-update factor.
    pub gamma: f64,
    /// Factor with a fraction `sigma` of the decrease reserved for estimation error.
    pub gamma_hat: f64,
}

impl ContractionFactors {
    /// Iterations sufficient to bring `gap0` below `epsilon` at rate `gamma_hat`.
    pub fn iteration_bound(&self, gap0: f64, epsilon: f64) -> u64 {
        if gap0 <= epsilon {
            return 0;
        }
        ((gap0 / epsilon).ln() / (1.0 - self.gamma_hat)).ceil() as u64
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::Domain(format!("sigma must lie in [0, 1), got {sigma}")));
    }
    Ok(())
}

/// `1 - 2 eta lambda_min(R) lambda_min(Sigma_w) / |Sigma_K*|` for NPG; the
/// Gauss-Newton factor drops `lambda_min(R)`.
pub fn contraction_factors(
    sys: &LinearSystem,
    w: &CostWeights,
    eta: f64,
    method: Method,
    sigma: f64,
) -> Result<ContractionFactors> {
    check_sigma(sigma)?;
    if !(eta > 0.0) || (method == Method::Gnm && eta > 0.5) {
        return Err(Error::Domain(format!("step size {eta} outside the admissible range")));
    }
    let (k_star, _) = solve_dare(sys, w)?;
    let sigma_star = op_norm(&stationary_covariance(sys, &k_star)?);
    let lw = min_eigenvalue(&sys.sigma_w)?;
    let decrease = match method {
        Method::Npg => 2.0 * eta * min_eigenvalue(&w.r)? * lw / sigma_star,
        Method::Gnm => 2.0 * eta * lw / sigma_star,
    };
    if !(decrease > 0.0 && decrease < 1.0) {
        return Err(Error::Domain(format!(
            "step size {eta} gives contraction factor {} outside (0, 1)",
            1.0 - decrease
        )));
    }
    Ok(ContractionFactors {
        gamma: 1.0 - decrease,
        gamma_hat: 1.0 - (1.0 - sigma) * decrease,
    })
}

/// Largest estimation error `|xi_hat - xi|` that keeps the guaranteed
/// contraction while the gap stays above `epsilon`.
pub fn required_accuracy(
    sys: &LinearSystem,
    w: &CostWeights,
    k0_cost: f64,
    epsilon: f64,
    sigma: f64,
    method: Method,
) -> Result<f64> {
    check_sigma(sigma)?;
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let (k_star, _) = solve_dare(sys, w)?;
    let c_star = average_cost(sys, w, &k_star)?;
    let sigma_star = op_norm(&stationary_covariance(sys, &k_star)?);
    let lip = lipschitz_constants(sys, w, k0_cost, c_star)?;
    let lr = min_eigenvalue(&w.r)?;
    let lw = min_eigenvalue(&sys.sigma_w)?;
    Ok(match method {
        Method::Npg => sigma * epsilon * lr * lw / (lip.h_c * (1.0 + lip.b_k) * sigma_star),
        Method::Gnm => {
            let r_inv =
                w.r.clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Domain("R is singular".into()))?;
            let inverse_sensitivity = op_norm(&r_inv) + lr / 2.0 + op_norm(&sys.a) * op_norm(&sys.b) * k0_cost / lw;
            (lr / 2.0).min(sigma * epsilon * lw / (lip.h_c * sigma_star * inverse_sensitivity))
        }
    })
}

/// Least-squares fit of `x+ ~ A x + B u`.
pub fn sysid_ls(dataset: &Dataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n_x, n_u) = (dataset.n_x(), dataset.n_u());
    let cols = n_x + n_u;
    if dataset.len() < cols {
        return Err(Error::Informativity { smallest_singular: 0.0 });
    }
    let z = DMatrix::from_fn(dataset.len(), cols, |k, j| {
        let t = &dataset.triples[k];
        if j < n_x {
            t.x[j]
        } else {
            t.u[j - n_x]
        }
    });
    let y = DMatrix::from_fn(dataset.len(), n_x, |k, j| dataset.triples[k].x_plus[j]);
    let sv = z.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 1e-12 * smax.max(f64::MIN_POSITIVE) {
        return Err(Error::Informativity {
            smallest_singular: smin,
        });
    }
    let qr = z.qr();
    let theta = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * y))
        .ok_or(Error::Informativity {
            smallest_singular: smin,
        })?;
    let ab = theta.transpose();
    Ok((ab.columns(0, n_x).into_owned(), ab.columns(n_x, n_u).into_owned()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub gain: Vec<f64>,
    pub cost: f64,
    pub gap: f64,
    /// `|xi_hat - xi_K|` for the estimate taken at this iterate.
    pub estimation_error: Option<f64>,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The update at `iteration` produced a non-stabilizing gain; the trace
    /// ends at the last stabilizing iterate.
    GuardTriggered {
        iteration: usize,
        radius: f64,
    },
    /// An estimate or update failed at `iteration`.
    Failed {
        iteration: usize,
        message: String,
    },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::GuardTriggered { .. } => "guard_triggered",
            RunStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub optimal_cost: f64,
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gap).collect()
    }

    pub fn final_gap(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.gap)
    }

    pub fn final_policy(&self, n_u: usize, n_x: usize) -> Policy {
        let last = self.records.last().expect("trace holds the initial policy");
        Policy::new(DMatrix::from_column_slice(n_u, n_x, &last.gain))
    }
}

/// Fixed inputs shared by every iteration of a run.
struct Context<'a> {
    sys: &'a LinearSystem,
    w: &'a CostWeights,
    dataset: &'a Dataset,
    cfg: &'a PgmConfig,
    lift: DVector<f64>,
    ball: BallSet,
    identified: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl Context<'_> {
    fn estimate(&self, policy: &Policy) -> Result<DVector<f64>> {
        let cfg = self.cfg;
        match cfg.estimator {
            Estimator::Exact => exact_xi(self.sys, self.w, policy),
            Estimator::Sysid => {
                let (a, b) = self.identified.as_ref().expect("identified before the loop");
                let model = LinearSystem::new(a.clone(), b.clone(), self.sys.sigma_w.clone())?;
                let p = solve_policy_lyapunov(&model, self.w, policy)?;
                xi_from_value(a, b, &p)
            }
            Estimator::Ls => {
                let samples = build_samples(&self.dataset.triples, policy, self.w, &self.lift)?;
                ls_estimate(&samples)
            }
            Estimator::Cspd => {
                let samples = build_samples(&self.dataset.triples, policy, self.w, &self.lift)?;
                let sched = CspdSchedule::sqrt_growth(cfg.schedule_scale, samples.len())?;
                let set = FeasibleSet::Ball(self.ball.clone());
                Ok(cspd(&samples, &set, &self.ball.center, 0.0, &sched)?.xi)
            }
            Estimator::MultiEpoch => {
                let samples = build_samples(&self.dataset.triples, policy, self.w, &self.lift)?;
                multi_epoch_cspd(&samples, &self.ball, &self.ball.center, 0.0, &cfg.epoch_plan, |_, n| {
                    CspdSchedule::sqrt_growth(cfg.schedule_scale, n)
                })
            }
        }
    }

    fn update(&self, policy: &Policy, xi: &DVector<f64>) -> Result<Policy> {
        let blocks = unpack_xi(xi, self.sys.n_x(), self.sys.n_u())?;
        match self.cfg.method {
            Method::Npg => Ok(npg_step(policy, &blocks.btpb, &blocks.btpa, &self.w.r, self.cfg.step)),
            Method::Gnm => gnm_step(policy, &blocks.btpb, &blocks.btpa, &self.w.r, self.cfg.step),
        }
    }
}

/// Model-free policy optimization on a single reused dataset.
///
/// The plant is used only to score iterates (cost, gap, estimation error,
/// spectral radius) and, for the exact estimator, to supply the parameter.
pub fn run_modelfree(
    sys: &LinearSystem,
    w: &CostWeights,
    k0: &Policy,
    dataset: &Dataset,
    cfg: &PgmConfig,
) -> Result<RunTrace> {
    cfg.validate()?;
    let radius = spectral_radius(&sys.closed_loop(k0)?)?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Stability { radius });
    }
    if dataset.n_x() != sys.n_x() || dataset.n_u() != sys.n_u() {
        return Err(Error::Dimension("dataset dimensions differ from the system".into()));
    }
    let (k_star, _) = solve_dare(sys, w)?;
    let optimal_cost = average_cost(sys, w, &k_star)?;
    let d = crate::tensorops::xi_len(sys.n_x(), sys.n_u());
    let ctx = Context {
        sys,
        w,
        dataset,
        cfg,
        lift: noise_lift(&sys.sigma_w)?,
        ball: BallSet::centered(d, cfg.ball_radius)?,
        identified: match cfg.estimator {
            Estimator::Sysid => Some(sysid_ls(dataset)?),
            _ => None,
        },
    };

    let score = |iteration: usize, policy: &Policy, radius: f64| -> Result<TraceRecord> {
        let cost = if radius < 1.0 - STABILITY_MARGIN {
            average_cost(sys, w, policy)?
        } else {
            f64::INFINITY
        };
        Ok(TraceRecord {
            iteration,
            gain: policy.gain.as_slice().to_vec(),
            cost,
            gap: cost - optimal_cost,
            estimation_error: None,
            spectral_radius: radius,
        })
    };

    let mut records = vec![score(0, k0, radius)?];
    let mut policy = k0.clone();
    let mut status = RunStatus::Completed;
    for i in 0..cfg.max_iters {
        let stabilizing = records[i].spectral_radius < 1.0 - STABILITY_MARGIN;
        let step = ctx.estimate(&policy).and_then(|xi| {
            if stabilizing {
                let truth = exact_xi(sys, w, &policy)?;
                records[i].estimation_error = Some((&xi - truth).norm());
            }
            ctx.update(&policy, &xi)
        });
        let next = match step {
            Ok(next) => next,
            Err(e) => {
                status = RunStatus::Failed {
                    iteration: i,
                    message: e.to_string(),
                };
                break;
            }
        };
        let radius = spectral_radius(&sys.closed_loop(&next)?)?;
        if radius >= 1.0 - STABILITY_MARGIN && cfg.stability_guard {
            status = RunStatus::GuardTriggered {
                iteration: i + 1,
                radius,
            };
            break;
        }
        records.push(score(i + 1, &next, radius)?);
        policy = next;
    }
    Ok(RunTrace {
        optimal_cost,
        records,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::collect_dataset;
    use crate::estimator::RadiusMode;
    use crate::lqr::{greedy_gain, natural_gradient_direction};
    use crate::presets;
    use nalgebra::dmatrix;

    fn scalar() -> (LinearSystem, CostWeights) {
        (
            LinearSystem::new(dmatrix![0.5], dmatrix![1.0], dmatrix![0.1]).unwrap(),
            CostWeights::new(dmatrix![1.0], dmatrix![1.0]).unwrap(),
        )
    }

    fn config(method: Method, step: f64, estimator: Estimator, iters: usize) -> PgmConfig {
        PgmConfig {
            method,
            step,
            max_iters: iters,
            estimator,
            stability_guard: true,
            ball_radius: presets::PAPER_BALL_RADIUS,
            schedule_scale: presets::PAPER_SCHEDULE_SCALE,
            epoch_plan: EpochPlan::new(
                presets::PAPER_EPOCH_SIZES.to_vec(),
                presets::PAPER_D0,
                RadiusMode::Squared,
            )
            .unwrap(),
        }
    }

    #[test]
    fn npg_scalar_step() {
        let k = npg_step(
            &Policy::zeros(1, 1),
            &dmatrix![4.0 / 3.0],
            &dmatrix![2.0 / 3.0],
            &dmatrix![1.0],
            0.25,
        );
        assert!((k.gain[(0, 0)] + 1.0 / 3.0).abs() < 1e-15);
        let k0 = Policy::new(dmatrix![0.4, -0.2]);
        let r = dmatrix![2.0];
        let k1 = npg_step(&k0, &dmatrix![0.0], &DMatrix::zeros(1, 2), &r, 0.1);
        assert!((k1.gain - (&k0.gain - &r * &k0.gain * 0.2)).amax() < 1e-15);
    }

    #[test]
    fn npg_fixed_point_at_optimum() {
        let sys = presets::paper_system();
        let w = presets::paper_weights();
        let (k_star, p) = solve_dare(&sys, &w).unwrap();
        let btp = sys.b.transpose() * &p;
        let next = npg_step(&k_star, &(&btp * &sys.b), &(&btp * &sys.a), &w.r, 0.05);
        assert!((next.gain - &k_star.gain).norm() <= 1e-8);
    }

    #[test]
    fn gnm_scalar_and_policy_iteration() {
        let k = gnm_step(
            &Policy::zeros(1, 1),
            &dmatrix![4.0 / 3.0],
            &dmatrix![2.0 / 3.0],
            &dmatrix![1.0],
            0.5,
        )
        .unwrap();
        assert!((k.gain[(0, 0)] + 2.0 / 7.0).abs() < 1e-15);

        let sys = presets::paper_system();
        let w = presets::paper_weights();
        let k0 = presets::paper_initial_gain().unwrap();
        let p = solve_policy_lyapunov(&sys, &w, &k0).unwrap();
        let btp = sys.b.transpose() * &p;
        let k1 = gnm_step(&k0, &(&btp * &sys.b), &(&btp * &sys.a), &w.r, 0.5).unwrap();
        let improved = greedy_gain(&sys, &w, &p).unwrap();
        let (c1, c2) = (
            average_cost(&sys, &w, &k1).unwrap(),
            average_cost(&sys, &w, &improved).unwrap(),
        );
        assert!((c1 - c2).abs() <= 1e-2 * c2);
    }

    #[test]
    fn gnm_rejects_indefinite_inner() {
        let r = DMatrix::identity(2, 2);
        let btpb = dmatrix![-1.1, 0.0; 0.0, 0.5];
        let res = gnm_step(&Policy::zeros(2, 2), &btpb, &DMatrix::zeros(2, 2), &r, 0.5);
        assert!(matches!(res, Err(Error::Accuracy(_))));
    }

    #[test]
    fn contraction_examples() {
        let sys = presets::paper_system();
        let w = presets::paper_weights();
        let (k_star, _) = solve_dare(&sys, &w).unwrap();
        let s_star = op_norm(&stationary_covariance(&sys, &k_star).unwrap());
        let g = contraction_factors(&sys, &w, 0.5, Method::Gnm, 0.0).unwrap();
        assert!((g.gamma - (1.0 - 0.1 / s_star)).abs() < 1e-12);
        assert_eq!(g.gamma, g.gamma_hat);

        let k0 = presets::paper_initial_gain().unwrap();
        let p0 = solve_policy_lyapunov(&sys, &w, &k0).unwrap();
        let eta_n = 1.0 / (2.0 * op_norm(&(&w.r + sys.b.transpose() * &p0 * &sys.b)));
        let n = contraction_factors(&sys, &w, eta_n, Method::Npg, 0.5).unwrap();
        assert!(g.gamma < n.gamma);
        assert!(n.gamma < n.gamma_hat && n.gamma_hat < 1.0);
        assert!(contraction_factors(&sys, &w, 0.6, Method::Gnm, 0.5).is_err());
        assert!(contraction_factors(&sys, &w, 0.1, Method::Npg, 1.0).is_err());
        assert_eq!(n.iteration_bound(1.0, 2.0), 0);
    }

    #[test]
    fn required_accuracy_structure() {
        let sys = presets::paper_system();
        let w = presets::paper_weights();
        let k0 = presets::paper_initial_gain().unwrap();
        let c0 = average_cost(&sys, &w, &k0).unwrap();
        for m in [Method::Npg, Method::Gnm] {
            let a = required_accuracy(&sys, &w, c0, 0.01, 0.5, m).unwrap();
            let b = required_accuracy(&sys, &w, c0, 0.02, 0.5, m).unwrap();
            assert!(a > 0.0 && a.is_finite());
            assert!(b >= a);
            let worse = required_accuracy(&sys, &w, 2.0 * c0, 0.01, 0.5, m).unwrap();
            assert!(worse <= a);
        }
        let a = required_accuracy(&sys, &w, c0, 0.01, 0.5, Method::Npg).unwrap();
        let b = required_accuracy(&sys, &w, c0, 0.02, 0.5, Method::Npg).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        assert!(required_accuracy(&sys, &w, c0, 0.0, 0.5, Method::Npg).is_err());
    }

    #[test]
    fn sysid_noiseless_exact() {
        let sys = presets::paper_system().with_noise(DMatrix::zeros(3, 3)).unwrap();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, 6, &sx, &su, 2).unwrap();
        let (a, b) = sysid_ls(&ds).unwrap();
        assert!((a - &sys.a).amax() < 1e-9);
        assert!((b - &sys.b).amax() < 1e-9);
        let one = collect_dataset(&sys, 1, &sx, &su, 2).unwrap();
        assert!(matches!(sysid_ls(&one), Err(Error::Informativity { .. })));
    }

    #[test]
    fn exact_run_matches_model_based_iteration() {
        let sys = presets::paper_system();
        let w = presets::paper_weights();
        let k0 = presets::paper_initial_gain().unwrap();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, 10, &sx, &su, 0).unwrap();
        let trace = run_modelfree(&sys, &w, &k0, &ds, &config(Method::Npg, 0.05, Estimator::Exact, 10)).unwrap();
        let mut k = k0.clone();
        for rec in &trace.records {
            assert!((DMatrix::from_column_slice(3, 3, &rec.gain) - &k.gain).amax() < 1e-12);
            let p = solve_policy_lyapunov(&sys, &w, &k).unwrap();
            let e = natural_gradient_direction(&sys, &w, &p, &k);
            k = Policy::new(&k.gain - e * 0.1);
        }
        assert_eq!(trace.status, RunStatus::Completed);
        assert!(trace.records.iter().all(|r| r.gap >= -1e-9));
    }

    #[test]
    fn zero_iterations_keep_initial_policy() {
        let (sys, w) = scalar();
        let ds = collect_dataset(&sys, 5, &dmatrix![1.0], &dmatrix![1.0], 0).unwrap();
        let k0 = Policy::zeros(1, 1);
        let trace = run_modelfree(&sys, &w, &k0, &ds, &config(Method::Gnm, 0.5, Estimator::Ls, 0)).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].gain, vec![0.0]);
    }

    #[test]
    fn runs_are_deterministic() {
        let sys = presets::paper_system();
        let w = presets::paper_weights();
        let k0 = presets::paper_initial_gain().unwrap();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, 100, &sx, &su, 4).unwrap();
        for est in [Estimator::Cspd, Estimator::MultiEpoch, Estimator::Ls, Estimator::Sysid] {
            let cfg = config(Method::Npg, 0.05, est, 5);
            let a = run_modelfree(&sys, &w, &k0, &ds, &cfg).unwrap();
            let b = run_modelfree(&sys, &w, &k0, &ds, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unstable_start_rejected() {
        let sys = presets::paper_system();
        let w = presets::paper_weights();
        let (sx, su) = presets::paper_exploration();
        let ds = collect_dataset(&sys, 10, &sx, &su, 0).unwrap();
        let res = run_modelfree(
            &sys,
            &w,
            &Policy::zeros(3, 3),
            &ds,
            &config(Method::Npg, 0.05, Estimator::Exact, 3),
        );
        assert!(matches!(res, Err(Error::Stability { .. })));
    }
}
