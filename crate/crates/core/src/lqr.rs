//! Exact model-based LQR machinery.
//!
//! Everything here assumes the plant is known. The estimators never call into
//! this module on the data path; it serves as ground truth for tests, gap
//! reporting, and the theoretical constant calculators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, min_eigenvalue, op_norm, spectral_radius};
use crate::tensorops::{kron, symmetrize_checked, tri_len, vec, vecs, vecv, xi_len};

/// Closed-loop spectral radius must stay below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Residual accepted from the Lyapunov and Riccati solvers, relative to `max(1, |P|_F)`.
pub const ACCEPT_RESIDUAL: f64 = 1e-10;
/// Iteration cap shared by the fixed-point solvers.
pub const MAX_SOLVER_ITERS: usize = 100_000;

const DOUBLING_TOL: f64 = 1e-16;
const REFINE_TOL: f64 = 1e-12;

/// `x+ = A x + B u + w`, `w ~ N(0, sigma_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma_w: DMatrix<f64>) -> Result<Self> {
        let n_x = a.nrows();
        if !a.is_square() || n_x == 0 {
            return Err(Error::Dimension(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n_x || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must have {n_x} rows and at least one column, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if sigma_w.shape() != (n_x, n_x) {
            return Err(Error::Dimension(format!(
                "sigma_w must be {n_x}x{n_x}, got {}x{}",
                sigma_w.nrows(),
                sigma_w.ncols()
            )));
        }
        let sigma_w = symmetrize_checked(&sigma_w)?;
        let lmin = min_eigenvalue(&sigma_w)?;
        if lmin < -1e-12 * sigma_w.amax().max(1.0) {
            return Err(Error::Domain(format!(
                "noise covariance is not positive semidefinite (smallest eigenvalue {lmin:.3e})"
            )));
        }
        Ok(Self { a, b, sigma_w })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    /// Same plant with a different noise covariance.
    pub fn with_noise(&self, sigma_w: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), sigma_w)
    }

    pub fn closed_loop(&self, policy: &Policy) -> Result<DMatrix<f64>> {
        self.check_policy(policy)?;
        Ok(&self.a + &self.b * &policy.gain)
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.gain.shape() != (self.n_u(), self.n_x()) {
            return Err(Error::Dimension(format!(
                "gain must be {}x{}, got {}x{}",
                self.n_u(),
                self.n_x(),
                policy.gain.nrows(),
                policy.gain.ncols()
            )));
        }
        Ok(())
    }

    pub fn is_stabilizing(&self, policy: &Policy) -> Result<bool> {
        Ok(spectral_radius(&self.closed_loop(policy)?)? < 1.0 - STABILITY_MARGIN)
    }

    fn require_stabilizing(&self, policy: &Policy) -> Result<DMatrix<f64>> {
        let a_k = self.closed_loop(policy)?;
        let radius = spectral_radius(&a_k)?;
        if radius >= 1.0 - STABILITY_MARGIN {
            return Err(Error::Stability { radius });
        }
        Ok(a_k)
    }
}

/// Stage cost `x'Qx + u'Ru`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let q = symmetrize_checked(&q)?;
        let r = symmetrize_checked(&r)?;
        for (name, m) in [("Q", &q), ("R", &r)] {
            let lmin = min_eigenvalue(m)?;
            if lmin <= 0.0 {
                return Err(Error::Domain(format!(
                    "{name} must be positive definite (smallest eigenvalue {lmin:.3e})"
                )));
            }
        }
        Ok(Self { q, r })
    }

    fn check(&self, sys: &LinearSystem) -> Result<()> {
        if self.q.shape() != (sys.n_x(), sys.n_x()) || self.r.shape() != (sys.n_u(), sys.n_u()) {
            return Err(Error::Dimension(format!(
                "weights are Q {}x{}, R {}x{} for a system with n_x = {}, n_u = {}",
                self.q.nrows(),
                self.q.ncols(),
                self.r.nrows(),
                self.r.ncols(),
                sys.n_x(),
                sys.n_u()
            )));
        }
        Ok(())
    }

    /// `Q_K = Q + K'RK`.
    pub fn closed_loop_weight(&self, policy: &Policy) -> DMatrix<f64> {
        &self.q + policy.gain.transpose() * &self.r * &policy.gain
    }
}

/// Linear state feedback `u = K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub gain: DMatrix<f64>,
}

impl Policy {
    pub fn new(gain: DMatrix<f64>) -> Self {
        Self { gain }
    }

    pub fn zeros(n_u: usize, n_x: usize) -> Self {
        Self::new(DMatrix::zeros(n_u, n_x))
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x
    }
}

impl From<DMatrix<f64>> for Policy {
    fn from(gain: DMatrix<f64>) -> Self {
        Self::new(gain)
    }
}

/// Value matrix, average cost and stationary covariance of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    pub p: DMatrix<f64>,
    pub cost: f64,
    pub sigma_k: DMatrix<f64>,
}

/// Solves `X = M' X M + C` by doubling, followed by one refinement pass if
/// the residual is not yet at machine level.
fn solve_stein(m: &DMatrix<f64>, c: &DMatrix<f64>, solver: &'static str) -> Result<DMatrix<f64>> {
    let doubling = |rhs: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mut x = rhs.clone();
        let mut mk = m.clone();
        for _ in 0..MAX_SOLVER_ITERS {
            let incr = mk.transpose() * &x * &mk;
            let done = incr.norm() <= DOUBLING_TOL * x.norm().max(f64::MIN_POSITIVE);
            x += incr;
            if done || !x.iter().all(|v| v.is_finite()) {
                break;
            }
            mk = &mk * &mk;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Convergence {
                solver,
                iterations: MAX_SOLVER_ITERS,
                residual: f64::INFINITY,
            });
        }
        Ok((&x + x.transpose()) * 0.5)
    };
    let residual_of = |x: &DMatrix<f64>| c + m.transpose() * x * m - x;

    let mut x = doubling(c)?;
    let mut iterations = 0;
    loop {
        let res = residual_of(&x);
        let scale = x.norm().max(1.0);
        if res.norm() <= REFINE_TOL * scale || iterations >= 5 {
            if res.norm() > ACCEPT_RESIDUAL * scale {
                return Err(Error::Convergence {
                    solver,
                    iterations,
                    residual: res.norm(),
                });
            }
            return Ok(x);
        }
        x += doubling(&res)?;
        iterations += 1;
    }
}

/// `P_K` with `P_K = A_K' P_K A_K + Q_K`.
pub fn solve_policy_lyapunov(sys: &LinearSystem, w: &CostWeights, policy: &Policy) -> Result<DMatrix<f64>> {
    w.check(sys)?;
    let a_k = sys.require_stabilizing(policy)?;
    solve_stein(&a_k, &w.closed_loop_weight(policy), "policy Lyapunov")
}

/// Stationary state covariance `Sigma_K = A_K Sigma_K A_K' + Sigma_w`.
///
/// The time average of the state covariance converges to this fixed point for
/// any initial covariance when `A_K` is Schur stable.
pub fn stationary_covariance(sys: &LinearSystem, policy: &Policy) -> Result<DMatrix<f64>> {
    let a_k = sys.require_stabilizing(policy)?;
    solve_stein(&a_k.transpose(), &sys.sigma_w, "stationary covariance")
}

/// Full value solution; the cost is checked against both trace formulas.
pub fn value_solution(sys: &LinearSystem, w: &CostWeights, policy: &Policy) -> Result<ValueSolution> {
    let p = solve_policy_lyapunov(sys, w, policy)?;
    let sigma_k = stationary_covariance(sys, policy)?;
    let via_value = (&p * &sys.sigma_w).trace();
    let via_state = (w.closed_loop_weight(policy) * &sigma_k).trace();
    let scale = via_value.abs().max(via_state.abs());
    if (via_value - via_state).abs() > 1e-9 * scale {
        return Err(Error::Convergence {
            solver: "cost duality check",
            iterations: 0,
            residual: (via_value - via_state).abs() / scale,
        });
    }
    Ok(ValueSolution {
        p,
        cost: via_value,
        sigma_k,
    })
}

/// Infinite-horizon average cost `C(K) = Tr(P_K Sigma_w)`.
pub fn average_cost(sys: &LinearSystem, w: &CostWeights, policy: &Policy) -> Result<f64> {
    Ok(value_solution(sys, w, policy)?.cost)
}

/// `E_K = (R + B'P_K B) K + B'P_K A`.
pub fn natural_gradient_direction(
    sys: &LinearSystem,
    w: &CostWeights,
    p: &DMatrix<f64>,
    policy: &Policy,
) -> DMatrix<f64> {
    let btp = sys.b.transpose() * p;
    (&w.r + &btp * &sys.b) * &policy.gain + btp * &sys.a
}

/// `grad C(K) = 2 E_K Sigma_K`.
pub fn exact_gradient(sys: &LinearSystem, w: &CostWeights, policy: &Policy) -> Result<DMatrix<f64>> {
    let sol = value_solution(sys, w, policy)?;
    Ok(natural_gradient_direction(sys, w, &sol.p, policy) * &sol.sigma_k * 2.0)
}

/// Policy improvement map `K = -(R + B'PB)^{-1} B'PA`.
pub fn greedy_gain(sys: &LinearSystem, w: &CostWeights, p: &DMatrix<f64>) -> Result<Policy> {
    let btp = sys.b.transpose() * p;
    let inner = &w.r + &btp * &sys.b;
    let rhs = btp * &sys.a;
    let ch = inner
        .cholesky()
        .ok_or_else(|| Error::Domain("R + B'PB is not positive definite".into()))?;
    Ok(Policy::new(-ch.solve(&rhs)))
}

/// Frobenius norm of the discrete Riccati residual.
pub fn riccati_residual(sys: &LinearSystem, w: &CostWeights, p: &DMatrix<f64>) -> f64 {
    let at_p = sys.a.transpose() * p;
    let btp = sys.b.transpose() * p;
    let inner = &w.r + &btp * &sys.b;
    let cross = &btp * &sys.a;
    let correction = match inner.clone().cholesky() {
        Some(ch) => cross.transpose() * ch.solve(&cross),
        None => return f64::INFINITY,
    };
    (&w.q + at_p * &sys.a - correction - p).norm()
}

/// Optimal gain and value matrix from the discrete algebraic Riccati equation.
///
/// Structured doubling produces the stabilizing solution; a few policy
/// iteration (Kleinman) sweeps then polish it to the residual tolerance.
pub fn solve_dare(sys: &LinearSystem, w: &CostWeights) -> Result<(Policy, DMatrix<f64>)> {
    w.check(sys)?;
    let n = sys.n_x();
    let eye = DMatrix::<f64>::identity(n, n);
    let r_inv =
        w.r.clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("R is singular".into()))?;

    let mut ak = sys.a.clone();
    let mut gk = &sys.b * r_inv * sys.b.transpose();
    let mut hk = w.q.clone();
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    for _ in 0..200 {
        let wk = (&eye + &gk * &hk)
            .try_inverse()
            .ok_or_else(|| Error::Stabilizability("singular doubling step".into()))?;
        let a_next = &ak * &wk * &ak;
        let g_next = &gk + &ak * &wk * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &wk * &ak;
        last_change = (&h_next - &hk).norm();
        let scale = h_next.norm().max(1.0);
        ak = a_next;
        gk = (&g_next + g_next.transpose()) * 0.5;
        hk = (&h_next + h_next.transpose()) * 0.5;
        if !hk.iter().all(|v| v.is_finite()) {
            break;
        }
        if last_change <= 1e-15 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Stabilizability(format!(
            "Riccati doubling stalled (last change {last_change:.3e})"
        )));
    }

    let mut p = hk;
    let mut gain = greedy_gain(sys, w, &p)?;
    for _ in 0..5 {
        if riccati_residual(sys, w, &p) <= REFINE_TOL * p.norm().max(1.0) {
            break;
        }
        p = solve_policy_lyapunov(sys, w, &gain)
            .map_err(|e| Error::Stabilizability(format!("policy iteration polish failed: {e}")))?;
        gain = greedy_gain(sys, w, &p)?;
    }
    let residual = riccati_residual(sys, w, &p);
    if residual > ACCEPT_RESIDUAL * p.norm().max(1.0) {
        return Err(Error::Stabilizability(format!(
            "Riccati residual {residual:.3e} above tolerance"
        )));
    }
    if !sys.is_stabilizing(&gain)? {
        return Err(Error::Stabilizability("optimal gain is not stabilizing".into()));
    }
    Ok((gain, p))
}

/// Noise lift `W = sum_k vecv(sqrt(lambda_k) v_k)` so that
/// `vecs(P) . W = Tr(P Sigma_w)`.
pub fn noise_lift(sigma_w: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (vals, vecs_) = jacobi_eigen(sigma_w)?;
    let n = sigma_w.nrows();
    let tol = 1e-12 * vals.amax().max(1.0);
    let mut lift = DVector::zeros(tri_len(n));
    for (k, &lambda) in vals.iter().enumerate() {
        if lambda < -tol {
            return Err(Error::Domain(format!(
                "noise covariance has negative eigenvalue {lambda:.3e}"
            )));
        }
        let scaled = vecs_.column(k) * lambda.max(0.0).sqrt();
        lift += vecv(&scaled.into_owned());
    }
    Ok(lift)
}

/// `xi_K = [vec(B'P_K A); vecs(B'P_K B); vecs(P_K)]`.
pub fn exact_xi(sys: &LinearSystem, w: &CostWeights, policy: &Policy) -> Result<DVector<f64>> {
    let p = solve_policy_lyapunov(sys, w, policy)?;
    xi_from_value(&sys.a, &sys.b, &p)
}

/// Stacks the parameter for a given value matrix and (possibly estimated) plant.
pub fn xi_from_value(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let btp = b.transpose() * p;
    let bpa = &btp * a;
    let bpb = &btp * b;
    let bpb = (&bpb + bpb.transpose()) * 0.5;
    let mut out = Vec::with_capacity(xi_len(a.nrows(), b.ncols()));
    out.extend_from_slice(vec(&bpa).as_slice());
    out.extend_from_slice(vecs(&bpb)?.as_slice());
    out.extend_from_slice(vecs(p)?.as_slice());
    Ok(DVector::from_vec(out))
}

/// Noise-free regressor of the Bellman identity `Gamma . xi_K = x'Q_K x`.
///
/// The conditional mean of `vecv(x+)` is `vecv(Ax + Bu) + W`, so the noise
/// lift cancels from the third block.
pub fn exact_gamma(sys: &LinearSystem, policy: &Policy, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    sys.check_policy(policy)?;
    if x.len() != sys.n_x() || u.len() != sys.n_u() {
        return Err(Error::Dimension(format!(
            "state/input of length {}/{} for n_x = {}, n_u = {}",
            x.len(),
            u.len(),
            sys.n_x(),
            sys.n_u()
        )));
    }
    let kx = policy.apply(x);
    let mean_next = &sys.a * x + &sys.b * u;
    let mut out = Vec::with_capacity(xi_len(sys.n_x(), sys.n_u()));
    out.extend((kron(x, &(u - &kx)) * 2.0).iter());
    out.extend((vecv(u) - vecv(&kx)).iter());
    out.extend((vecv(x) - vecv(&mean_next)).iter());
    Ok(DVector::from_vec(out))
}

/// Norm bound on the gain and local Lipschitz constant of the cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    pub b_k: f64,
    pub h_c: f64,
}

/// Evaluates `b_K(C(K))` and `h_C(C(K))`.
pub fn lipschitz_constants(
    sys: &LinearSystem,
    w: &CostWeights,
    cost_at_k: f64,
    cost_at_opt: f64,
) -> Result<LipschitzConstants> {
    let lr = min_eigenvalue(&w.r)?;
    let lw = min_eigenvalue(&sys.sigma_w)?;
    let lq = min_eigenvalue(&w.q)?;
    if lr <= 0.0 || lw <= 0.0 || lq <= 0.0 {
        return Err(Error::Domain(format!(
            "smallest eigenvalues must be positive (R: {lr:.3e}, Sigma_w: {lw:.3e}, Q: {lq:.3e})"
        )));
    }
    if !(cost_at_k >= cost_at_opt && cost_at_opt > 0.0) {
        return Err(Error::Domain(format!(
            "need C(K) >= C(K*) > 0, got {cost_at_k} and {cost_at_opt}"
        )));
    }
    let nb = op_norm(&sys.b);
    let na = op_norm(&sys.a);
    let nr = op_norm(&w.r);
    let b_k =
        (nb * na * cost_at_k / lw + ((cost_at_k - cost_at_opt) * (nr + nb * nb * cost_at_k / lw) / lw).sqrt()) / lr;
    let h_c = 6.0 * (cost_at_k / (lw * lq)).powi(2) * (2.0 * b_k * b_k * nr * nb + b_k * nr) * sys.sigma_w.trace();
    Ok(LipschitzConstants { b_k, h_c })
}
