//! Manifold proximal gradient solver for the penalized trace problem
//!
//! ```text
//! min  -Tr(U^T S U) + rho ||U||_1   subject to  U^T U = I_d.
//! ```
//!
//! Each outer iteration solves a convex subproblem for a descent direction
//! restricted to the linearized feasibility set, backtracks on a sufficient
//! decrease test, and retracts back to the manifold. The subproblem's
//! Lagrange multiplier equation `E(Lambda) = 0` is solved by a semi-smooth
//! Newton method on the d(d+1)/2 free entries of the symmetric multiplier,
//! with a damped fixed-point fallback.

use nalgebra::DMatrix;

use crate::stiefel::{constraint_op, prox_l1, retract_exp, StiefelPoint, TangentDirection};
use crate::{Error, Result};

/// Semi-smooth Newton controls for the subproblem.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SsnParams {
    pub max_newton: usize,
    /// Frobenius tolerance on the multiplier residual `||E(Lambda)||`.
    pub tol_e: f64,
    /// Budget for the damped fixed-point fallback after Newton stalls.
    pub max_fixed_point: usize,
}

impl Default for SsnParams {
    fn default() -> Self {
        Self {
            max_newton: 50,
            tol_e: 1e-10,
            max_fixed_point: 500,
        }
    }
}

/// Outer-loop controls.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ManPgParams {
    /// Sufficient-decrease constant in the backtracking test.
    pub delta: f64,
    /// Backtracking shrink factor.
    pub gamma_shrink: f64,
    /// Step size; `None` uses `1/L` from [`lipschitz_estimate`].
    pub step: Option<f64>,
    pub max_outer: usize,
    /// Stationarity tolerance on `||D_k||_F`; `None` uses
    /// `1e-6 * sqrt(p d)`.
    pub tol_d: Option<f64>,
    pub ssn: SsnParams,
}

impl Default for ManPgParams {
    fn default() -> Self {
        Self {
            delta: 1e-4,
            gamma_shrink: 0.5,
            step: None,
            max_outer: 1000,
            tol_d: None,
            ssn: SsnParams::default(),
        }
    }
}

impl ManPgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.gamma_shrink > 0.0 && self.gamma_shrink < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_shrink must lie in (0,1), got {}",
                self.gamma_shrink
            )));
        }
        if let Some(t) = self.step {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "step must be positive, got {t}"
                )));
            }
        }
        if let Some(tol) = self.tol_d {
            if !(tol > 0.0) {
                return Err(Error::InvalidParameter("tol_d must be positive".into()));
            }
        }
        if !(self.ssn.tol_e > 0.0) {
            return Err(Error::InvalidParameter("tol_e must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchStall,
}

/// One accepted outer step.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IterRecord {
    /// Objective after the step, `F(U_{k+1})`.
    pub objective: f64,
    pub d_norm: f64,
    pub alpha: f64,
    pub line_search_evals: usize,
    pub ssn_iterations: usize,
}

/// Per-solve log. Accepted steps satisfy
/// `F(U_{k+1}) <= F(U_k) - delta * alpha * ||D_k||_F^2`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolveTrace {
    pub initial_objective: f64,
    pub records: Vec<IterRecord>,
    pub status: SolveStatus,
    pub final_objective: f64,
    pub final_d_norm: f64,
    /// Step size `t` that was used.
    pub step: f64,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// `F(U) = -Tr(U^T S U) + rho ||U||_1`.
pub fn objective(s: &DMatrix<f64>, rho: f64, u: &StiefelPoint) -> Result<f64> {
    check_shapes(s, u)?;
    let su = s * u.matrix();
    let trace = u.matrix().dot(&su);
    let l1: f64 = u.matrix().iter().map(|x| x.abs()).sum();
    Ok(-trace + rho * l1)
}

/// `F(cand) - F(u)` without catastrophic cancellation:
/// `-Tr((C-U)^T S (C+U)) + rho sum(|c| - |u|)`. Keeps the line search able
/// to certify decreases far below the rounding floor of `F` itself.
fn objective_diff(s: &DMatrix<f64>, rho: f64, u: &StiefelPoint, cand: &StiefelPoint) -> f64 {
    let diff = cand.matrix() - u.matrix();
    let sum = cand.matrix() + u.matrix();
    let quad = diff.dot(&(s * sum));
    let mut l1 = 0.0;
    if rho > 0.0 {
        for (c, b) in cand.matrix().iter().zip(u.matrix().iter()) {
            l1 += c.abs() - b.abs();
        }
    }
    -quad + rho * l1
}

/// Euclidean gradient of the smooth part, `-2 S U`.
pub fn smooth_grad(s: &DMatrix<f64>, u: &StiefelPoint) -> Result<DMatrix<f64>> {
    check_shapes(s, u)?;
    Ok(s * u.matrix() * -2.0)
}

fn escalate(damping: f64, jac: &DMatrix<f64>) -> f64 {
    let floor = 1e-10 * jac.norm().max(1.0);
    (damping * 100.0).max(floor)
}

fn check_shapes(s: &DMatrix<f64>, u: &StiefelPoint) -> Result<()> {
    if s.nrows() != s.ncols() || s.nrows() != u.p() {
        return Err(Error::Dimension(format!(
            "S is {} x {}, U is {} x {}",
            s.nrows(),
            s.ncols(),
            u.p(),
            u.d()
        )));
    }
    Ok(())
}

/// Safeguarded Lipschitz constant `2 * 1.01 * spectral_radius(S)`.
///
/// The spectral radius comes from power iteration on `S^2` (immune to
/// symmetric `+/-lambda` pairs), tolerance `1e-8`, at most 1000 iterations,
/// floored at `1e-12`.
pub fn lipschitz_estimate(s: &DMatrix<f64>) -> f64 {
    let p = s.nrows();
    if p == 0 {
        return 1e-12;
    }
    // deterministic quasi-random start vector
    let mut state: u64 = 0x9e3779b97f4a7c15;
    let mut v = nalgebra::DVector::<f64>::from_fn(p, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    });
    let nv = v.norm();
    if nv == 0.0 {
        return 1e-12;
    }
    v /= nv;
    let mut est = 0.0f64;
    for _ in 0..1000 {
        let sv = s * &v;
        let new_est = sv.norm();
        if new_est <= 1e-300 {
            est = 0.0;
            break;
        }
        let ssv = s * &sv;
        v = &ssv / ssv.norm();
        if (new_est - est).abs() <= 1e-8 * new_est.max(1e-12) {
            est = new_est;
            break;
        }
        est = new_est;
    }
    (2.0 * 1.01 * est).max(1e-12)
}

/// Solution of the descent-direction subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    /// `D(Lambda)`, feasible for the linearized constraint to `tol_e`.
    pub direction: DMatrix<f64>,
    /// Symmetric multiplier solving `E(Lambda) = 0`.
    pub multiplier: DMatrix<f64>,
    pub newton_iters: usize,
    pub fixed_point_iters: usize,
    pub residual: f64,
}

/// Solve the convex direction subproblem at `u`:
///
/// ```text
/// min_D  <grad, D> + ||D||_F^2 / (2 t) + rho ||U + D||_1
/// s.t.   D^T U + U^T D = 0
/// ```
///
/// via the multiplier equation `E(Lambda) = A(prox_{t rho}(B(Lambda)) - U)`
/// with `B(Lambda) = U - t (grad - 2 U Lambda)`.
pub fn solve_subproblem(
    u: &StiefelPoint,
    grad: &DMatrix<f64>,
    t_step: f64,
    rho: f64,
    ssn: &SsnParams,
    lambda0: Option<&DMatrix<f64>>,
) -> Result<SubproblemSolution> {
    if grad.nrows() != u.p() || grad.ncols() != u.d() {
        return Err(Error::Dimension("gradient shape mismatch".into()));
    }
    if !(t_step > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    if rho < 0.0 {
        return Err(Error::InvalidParameter("rho must be nonnegative".into()));
    }
    let d = u.d();
    let tau = t_step * rho;
    let base = u.matrix() - grad * t_step; // U - t grad

    let compute_b = |lambda: &DMatrix<f64>| -> DMatrix<f64> {
        &base + u.matrix() * (lambda + lambda.transpose()) * t_step
    };
    let eval = |lambda: &DMatrix<f64>| -> (DMatrix<f64>, DMatrix<f64>) {
        let b = compute_b(lambda);
        let dmat = prox_l1(&b, tau) - u.matrix();
        let e = constraint_op(u, &dmat).expect("shape checked");
        (dmat, e)
    };

    let mut lambda = match lambda0 {
        Some(l0) if l0.nrows() == d && l0.ncols() == d => (l0 + l0.transpose()) * 0.5,
        _ => DMatrix::zeros(d, d),
    };
    let (mut dmat, mut e) = eval(&lambda);
    let mut res = e.norm();
    let mut newton_iters = 0usize;
    let mut fixed_point_iters = 0usize;
    let mut nonmonotone_left = 3usize;

    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|a| (a..d).map(move |b| (a, b)))
        .collect();
    let n_free = pairs.len();

    while res > ssn.tol_e && newton_iters < ssn.max_newton {
        newton_iters += 1;
        // generalized Jacobian column by column over the symmetric basis
        let b = compute_b(&lambda);
        let mask = b.map(|x| if rho == 0.0 || x.abs() > tau { 1.0 } else { 0.0 });
        let mut jac = DMatrix::<f64>::zeros(n_free, n_free);
        for (col, &(a, c)) in pairs.iter().enumerate() {
            // W = mask .* (2 t U Theta^{(a,c)}) has at most two nonzero columns
            let mut w = DMatrix::<f64>::zeros(u.p(), d);
            {
                let src = u.matrix().column(c);
                let m = mask.column(a);
                let mut dst = w.column_mut(a);
                for i in 0..u.p() {
                    dst[i] = 2.0 * t_step * m[i] * src[i];
                }
            }
            if a != c {
                let src = u.matrix().column(a);
                let m = mask.column(c);
                let mut dst = w.column_mut(c);
                for i in 0..u.p() {
                    dst[i] = 2.0 * t_step * m[i] * src[i];
                }
            }
            let jw = constraint_op(u, &w).expect("shape checked");
            for (row, &(ra, rc)) in pairs.iter().enumerate() {
                jac[(row, col)] = jw[(ra, rc)];
            }
        }
        let rhs = nalgebra::DVector::<f64>::from_fn(n_free, |row, _| {
            let (ra, rc) = pairs[row];
            -e[(ra, rc)]
        });

        // the mask can make J rank deficient, so solve by damped least
        // squares and escalate the damping until the residual line search
        // makes progress
        let mut improved = false;
        let mut best: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64)> = None;
        let mut damping = 0.0f64;
        'attempts: for _ in 0..5 {
            let mut jd = jac.clone();
            if damping > 0.0 {
                for i in 0..n_free {
                    jd[(i, i)] += damping;
                }
            }
            let svd = jd.svd(true, true);
            let Ok(x) = svd.solve(&rhs, 1e-12 * jac.norm().max(1.0)) else {
                damping = escalate(damping, &jac);
                continue;
            };
            if x.iter().any(|v| !v.is_finite()) {
                damping = escalate(damping, &jac);
                continue;
            }
            let mut delta = DMatrix::<f64>::zeros(d, d);
            for (k, &(a, c)) in pairs.iter().enumerate() {
                delta[(a, c)] += x[k];
                if a != c {
                    delta[(c, a)] += x[k];
                }
            }

            let mut beta = 1.0;
            for _ in 0..30 {
                let cand = &lambda + &delta * beta;
                let (dc, ec) = eval(&cand);
                let rc = ec.norm();
                if best.as_ref().is_none_or(|b| rc < b.3) {
                    best = Some((cand.clone(), dc.clone(), ec.clone(), rc));
                }
                if rc < (1.0 - 1e-4 * beta) * res || rc <= ssn.tol_e {
                    lambda = cand;
                    dmat = dc;
                    e = ec;
                    res = rc;
                    improved = true;
                    break 'attempts;
                }
                beta *= 0.5;
            }
            damping = escalate(damping, &jac);
        }
        if !improved {
            // piecewise-affine kinks: accept any strict progress, or one
            // bounded nonmonotone step to cross onto the next smooth piece
            match best {
                Some((lc, dc, ec, rc)) if rc < res => {
                    lambda = lc;
                    dmat = dc;
                    e = ec;
                    res = rc;
                }
                Some((lc, dc, ec, rc)) if nonmonotone_left > 0 && rc <= 1.5 * res => {
                    nonmonotone_left -= 1;
                    lambda = lc;
                    dmat = dc;
                    e = ec;
                    res = rc;
                }
                _ => break,
            }
        }
    }

    if res > ssn.tol_e {
        // damped fixed-point fallback; the multiplier map has operator norm
        // at most 4t, so eta = 1/(4t) contracts every reachable mode
        let eta = 1.0 / (4.0 * t_step);
        while res > ssn.tol_e && fixed_point_iters < ssn.max_fixed_point {
            fixed_point_iters += 1;
            lambda -= &e * eta;
            let (dc, ec) = eval(&lambda);
            dmat = dc;
            e = ec;
            res = e.norm();
        }
    }

    if res > ssn.tol_e || !res.is_finite() {
        return Err(Error::SubproblemFail {
            residual: res,
            newton: newton_iters,
            fixed_point: fixed_point_iters,
        });
    }
    Ok(SubproblemSolution {
        direction: dmat,
        multiplier: lambda,
        newton_iters,
        fixed_point_iters,
        residual: res,
    })
}

/// Algorithm: subproblem direction, backtracking line search from
/// `alpha = 1` on `F(Retr(alpha D)) <= F(U) - delta alpha ||D||^2`, exponential
/// retraction; stops when `||D_k|| <= tol_d` or the iteration budget runs
/// out. Subproblem failures return the best iterate with
/// [`SolveStatus::LineSearchStall`] rather than an error.
pub fn manpg_solve(
    s: &DMatrix<f64>,
    rho: f64,
    u0: &StiefelPoint,
    params: &ManPgParams,
) -> Result<(StiefelPoint, SolveTrace)> {
    check_shapes(s, u0)?;
    params.validate()?;
    if rho < 0.0 {
        return Err(Error::InvalidParameter("rho must be nonnegative".into()));
    }
    let (p, d) = (u0.p(), u0.d());
    let t = match params.step {
        Some(t) => t,
        None => 1.0 / lipschitz_estimate(s),
    };
    let tol_d = params
        .tol_d
        .unwrap_or(1e-6 * ((p * d) as f64).sqrt());

    let mut u = u0.clone();
    let mut f_u = objective(s, rho, &u)?;
    let initial_objective = f_u;
    let mut records = Vec::new();
    let mut lambda_prev: Option<DMatrix<f64>> = None;
    let mut status = SolveStatus::MaxIter;
    let mut final_d_norm = f64::NAN;

    for _ in 0..params.max_outer {
        let grad = smooth_grad(s, &u)?;
        let sub = match solve_subproblem(&u, &grad, t, rho, &params.ssn, lambda_prev.as_ref()) {
            Ok(sub) => sub,
            Err(Error::SubproblemFail { .. }) => {
                status = SolveStatus::LineSearchStall;
                break;
            }
            Err(other) => return Err(other),
        };
        let d_norm = sub.direction.norm();
        final_d_norm = d_norm;
        if d_norm <= tol_d {
            status = SolveStatus::Converged;
            break;
        }
        let dir = TangentDirection::at(&u, sub.direction.clone())?;

        let mut alpha = 1.0;
        let mut ls_evals = 0usize;
        let mut accepted = None;
        while alpha >= 1e-14 {
            let cand = retract_exp(&u, &dir, alpha)?;
            let df = objective_diff(s, rho, &u, &cand);
            ls_evals += 1;
            if df <= -params.delta * alpha * d_norm * d_norm {
                let f_cand = f_u + df;
                accepted = Some((cand, f_cand));
                break;
            }
            alpha *= params.gamma_shrink;
        }
        let Some((cand, f_cand)) = accepted else {
            status = SolveStatus::LineSearchStall;
            break;
        };
        u = cand;
        f_u = f_cand;
        lambda_prev = Some(sub.multiplier);
        records.push(IterRecord {
            objective: f_cand,
            d_norm,
            alpha,
            line_search_evals: ls_evals,
            ssn_iterations: sub.newton_iters + sub.fixed_point_iters,
        });
    }

    let trace = SolveTrace {
        initial_objective,
        records,
        status,
        final_objective: f_u,
        final_d_norm,
        step: t,
    };
    Ok((u, trace))
}
