//! Stiefel manifold primitives: orthonormal frames, the tangent-space
//! constraint operator and its adjoint, the elementwise l1 proximal map, and
//! the QR-based exponential retraction.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Orthonormality drift accepted without repair.
const ORTHO_TOL: f64 = 1e-8;
/// Largest drift repaired by a thin QR; anything beyond is rejected so that
/// solver bugs are not silently absorbed.
const ORTHO_REPAIR_TOL: f64 = 1e-6;
/// Residual allowed on the linearized feasibility constraint of a tangent
/// direction.
const TANGENT_TOL: f64 = 1e-6;

/// A `p x d` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    u: DMatrix<f64>,
}

impl StiefelPoint {
    /// Wrap a matrix, accepting drift up to `1e-8` as-is, repairing drift up
    /// to `1e-6` by a sign-fixed thin QR, and rejecting anything larger.
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        let (p, d) = (u.nrows(), u.ncols());
        if d < 1 || p < d {
            return Err(Error::Dimension(format!(
                "Stiefel point needs p >= d >= 1, got {p} x {d}"
            )));
        }
        let drift = orthonormality_drift(&u);
        if drift <= ORTHO_TOL {
            Ok(Self { u })
        } else if drift <= ORTHO_REPAIR_TOL {
            let (q, _) = thin_qr_posdiag(&u);
            Ok(Self { u: q })
        } else {
            Err(Error::NotOrthonormal { drift })
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.u
    }

    pub fn p(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.u.ncols()
    }

    /// Projection matrix `U U^T`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.u * self.u.transpose()
    }

    /// Diagonal of `U U^T`, i.e. squared row norms; cheaper than the full
    /// projection matrix.
    pub fn projection_diagonal(&self) -> Vec<f64> {
        (0..self.p()).map(|i| self.u.row(i).norm_squared()).collect()
    }
}

pub(crate) fn orthonormality_drift(u: &DMatrix<f64>) -> f64 {
    let d = u.ncols();
    (u.transpose() * u - DMatrix::<f64>::identity(d, d)).norm()
}

/// A direction anchored at a Stiefel point satisfying the linearized
/// feasibility constraint `D^T U + U^T D = 0` up to `1e-6`.
#[derive(Debug, Clone)]
pub struct TangentDirection {
    d: DMatrix<f64>,
}

impl TangentDirection {
    pub fn at(u: &StiefelPoint, d: DMatrix<f64>) -> Result<Self> {
        let residual = constraint_op(u, &d)?.norm();
        if residual > TANGENT_TOL {
            return Err(Error::TangentViolation { residual });
        }
        Ok(Self { d })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }
}

/// Linearized constraint operator `A_U(D) = D^T U + U^T D`; symmetric by
/// construction.
pub fn constraint_op(u: &StiefelPoint, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if d.nrows() != u.p() || d.ncols() != u.d() {
        return Err(Error::Dimension(format!(
            "direction is {} x {}, expected {} x {}",
            d.nrows(),
            d.ncols(),
            u.p(),
            u.d()
        )));
    }
    let utd = u.matrix().transpose() * d;
    Ok(&utd + utd.transpose())
}

/// Adjoint of the constraint operator: `A_U^*(L) = U (L + L^T)`, defined for
/// symmetric `L` so that `<A_U(D), L> = <D, A_U^*(L)>`.
pub fn constraint_adjoint(u: &StiefelPoint, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = u.d();
    if l.nrows() != d || l.ncols() != d {
        return Err(Error::Dimension(format!(
            "multiplier is {} x {}, expected {d} x {d}",
            l.nrows(),
            l.ncols()
        )));
    }
    let residual = (l - l.transpose()).norm();
    if residual > 1e-10 * l.norm().max(1.0) {
        return Err(Error::NotSymmetric { residual });
    }
    Ok(u.matrix() * (l + l.transpose()))
}

/// Elementwise soft threshold, the proximal map of `tau * ||.||_1`.
pub fn prox_l1(b: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    debug_assert!(tau >= 0.0);
    b.map(|x| {
        let shrunk = x.abs() - tau;
        if shrunk > 0.0 {
            shrunk.copysign(x)
        } else {
            0.0
        }
    })
}

/// Exponential-map retraction on the Stiefel manifold.
///
/// With `A = U^T D` (skew) and the sign-fixed thin factorization
/// `Q R = (I - U U^T) D`, the retraction is the first `d` columns of
/// `[U Q] exp(alpha [[A, -R^T], [R, 0]])`. `retract_exp(U, 0, alpha)` and
/// `retract_exp(U, D, 0)` return `U` exactly.
pub fn retract_exp(u: &StiefelPoint, dir: &TangentDirection, alpha: f64) -> Result<StiefelPoint> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "retraction step must be nonnegative, got {alpha}"
        )));
    }
    // re-check against this anchor: the direction may have been built elsewhere
    let residual = constraint_op(u, dir.matrix())?.norm();
    if residual > TANGENT_TOL {
        return Err(Error::TangentViolation { residual });
    }
    let d_mat = dir.matrix();
    if alpha == 0.0 || d_mat.norm() == 0.0 {
        return Ok(u.clone());
    }

    let d = u.d();
    let a = u.matrix().transpose() * d_mat;
    // skew part only; the symmetric residual is constraint noise
    let a = (&a - a.transpose()) * 0.5;
    let normal = d_mat - u.matrix() * &a;
    let (q, r) = thin_qr_posdiag(&normal);

    let mut block = DMatrix::<f64>::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&a);
    block.view_mut((0, d), (d, d)).copy_from(&(-r.transpose()));
    block.view_mut((d, 0), (d, d)).copy_from(&r);
    block *= alpha;

    let e = expm(&block);
    let e_top = e.view((0, 0), (d, d));
    let e_bot = e.view((d, 0), (d, d));
    let out = u.matrix() * e_top + q * e_bot;
    StiefelPoint::new(out)
}

/// Thin QR with the positive-diagonal convention `R_ii >= 0`, which makes
/// the factorization (and therefore the retraction) deterministic.
pub(crate) fn thin_qr_posdiag(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows().min(r.ncols()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    (q, r)
}

/// Matrix exponential by scaling-and-squaring with a [6/6] Pade approximant.
/// Only used on the small `2d x 2d` skew-symmetric retraction block.
pub(crate) fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let norm = a
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let b = a / 2f64.powi(s as i32);

    // Pade [6/6]: N(B) = sum c_k B^k, D(B) = sum c_k (-B)^k
    const Q: usize = 6;
    let mut coeffs = [0.0f64; Q + 1];
    coeffs[0] = 1.0;
    for k in 1..=Q {
        coeffs[k] = coeffs[k - 1] * (Q - k + 1) as f64 / ((k * (2 * Q - k + 1)) as f64);
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut power = eye.clone();
    let mut num = eye.clone() * coeffs[0];
    let mut den = eye.clone() * coeffs[0];
    for (k, &c) in coeffs.iter().enumerate().skip(1) {
        power = &power * &b;
        num += &power * c;
        if k % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut e = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is nonsingular for scaled input");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}
