//! Kernel families and local linear smoothing weights.
//!
//! Every covariance and mean estimate in this crate is a weighted sum of
//! observations, with weights built here. The weights reproduce constant and
//! linear trends exactly (their zeroth moment is one and first moment is
//! zero), which is what makes local linear smoothing self-correcting at the
//! boundaries of `[0, 1]`.

use crate::{Error, Result};

/// `P(|Z| <= 1)` for a standard normal, used to renormalize the truncated
/// Gaussian kernel so it integrates to one on `[-1, 1]`.
const GAUSS_TRUNC_MASS: f64 = 0.682_689_492_137_085_9;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Symmetric probability densities supported on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KernelFamily {
    Epanechnikov,
    GaussianTruncated,
    Uniform,
}

impl KernelFamily {
    /// Evaluate the kernel density at `u`. Total function: zero outside
    /// `[-1, 1]`, symmetric, nonnegative.
    pub fn eval(self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        match self {
            KernelFamily::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelFamily::GaussianTruncated => {
                INV_SQRT_2PI * (-0.5 * u * u).exp() / GAUSS_TRUNC_MASS
            }
            KernelFamily::Uniform => 0.5,
        }
    }
}

/// A kernel family together with a bandwidth `h` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth <= 1.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must lie in (0, 1], got {bandwidth}"
            )));
        }
        Ok(Self { family, bandwidth })
    }

    /// Epanechnikov kernel with the given bandwidth, the crate default.
    pub fn epanechnikov(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Epanechnikov, bandwidth)
    }

    /// `K(u)` of the underlying family.
    pub fn eval(&self, u: f64) -> f64 {
        self.family.eval(u)
    }

    /// Rescaled kernel `K_h(x) = K(x/h)/h`.
    pub fn eval_scaled(&self, x: f64) -> f64 {
        self.family.eval(x / self.bandwidth) / self.bandwidth
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        Self::new(self.family, bandwidth)
    }
}

/// Local linear weights at a target time, with the kernel moments they were
/// built from. Weights are indexed like the time list they were computed
/// from; entries outside the bandwidth window are exactly zero.
#[derive(Debug, Clone)]
pub struct LocalWeights {
    pub weights: Vec<f64>,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub t: f64,
}

impl LocalWeights {
    /// Number of observations with nonzero kernel value.
    pub fn in_window(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

/// Relative tolerance distinguishing a genuinely rank-deficient local design
/// from double-precision round-off in `R0*R2 - R1^2`.
const DEGENERACY_REL_TOL: f64 = 1e-12;

/// Local linear weights over a pooled list of observation times.
///
/// `w_i = K_h(t_i - t) * (R2 - R1 (t_i - t)) / (R0 R2 - R1^2)` with
/// `R_l = sum_i K_h(t_i - t) (t_i - t)^l`. Requires at least two distinct
/// time points inside `(t - h, t + h)`.
pub fn local_linear_weights(times: &[f64], t: f64, spec: &KernelSpec) -> Result<LocalWeights> {
    let h = spec.bandwidth;
    let mut r0 = 0.0;
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    let mut in_window: Vec<f64> = Vec::new();
    for &ti in times {
        let dt = ti - t;
        let k = spec.eval_scaled(dt);
        if k > 0.0 {
            in_window.push(ti);
            r0 += k;
            r1 += k * dt;
            r2 += k * dt * dt;
        }
    }

    in_window.sort_by(|a, b| a.total_cmp(b));
    in_window.dedup();
    if in_window.len() < 2 {
        return Err(Error::DegenerateWindow {
            t,
            reason: format!(
                "{} distinct time point(s) within bandwidth {h}",
                in_window.len()
            ),
        });
    }

    let denom = r0 * r2 - r1 * r1;
    if denom.abs() <= DEGENERACY_REL_TOL * (r0 * r2).abs() || denom == 0.0 {
        return Err(Error::DegenerateWindow {
            t,
            reason: format!("singular local design, R0*R2 - R1^2 = {denom:.3e}"),
        });
    }

    let weights = times
        .iter()
        .map(|&ti| {
            let dt = ti - t;
            let k = spec.eval_scaled(dt);
            if k > 0.0 {
                k * (r2 - r1 * dt) / denom
            } else {
                0.0
            }
        })
        .collect();

    Ok(LocalWeights {
        weights,
        r0,
        r1,
        r2,
        t,
    })
}

/// Local linear weights over the shared grid times of a common design,
/// computing the grid moments `R_{l,c}`. Same formula and degeneracy rules
/// as [`local_linear_weights`], applied to one copy of the grid.
pub fn common_design_weights(grid_times: &[f64], t: f64, spec: &KernelSpec) -> Result<LocalWeights> {
    local_linear_weights(grid_times, t, spec)
}
