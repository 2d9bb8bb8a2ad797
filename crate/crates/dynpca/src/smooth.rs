//! Panel data and local-linear-smoothed mean and covariance estimates.
//!
//! The smoothed covariance `S_h(t)` is the weighted second moment of pooled
//! observations (optionally mean-corrected), or under a common design the
//! weighted combination of per-grid-time sample covariances. It estimates
//! `Sigma(t) + sigma^2 I`, so positive semidefiniteness is not an invariant;
//! exact symmetry is.

use nalgebra::{DMatrix, DVector};

use crate::kernel::{common_design_weights, local_linear_weights, KernelSpec};
use crate::{Error, Result};

/// Sampling design of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Design {
    /// Every subject is observed on one shared, deterministic time grid.
    Common,
    /// Per-subject observation times.
    Irregular,
}

/// One subject's repeated measurements: `values` is `p x m_i` with column
/// `l` holding the observation at `times[l]`.
#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
}

/// `n` subjects' noisy `p`-dimensional observations at time points in
/// `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    p: usize,
    subjects: Vec<Subject>,
    design: Design,
}

impl PanelDataset {
    /// Validate and assemble a panel. Passing `None` auto-detects the
    /// design: `Common` iff all subjects share an identical time vector.
    /// Times are sorted per subject, carrying their observation columns
    /// along.
    pub fn new(mut subjects: Vec<Subject>, design: Option<Design>) -> Result<Self> {
        if subjects.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 subjects, got {}",
                subjects.len()
            )));
        }
        let p = subjects[0].values.nrows();
        if p == 0 {
            return Err(Error::InvalidParameter("p must be positive".into()));
        }
        let mut total = 0usize;
        for s in &mut subjects {
            if s.values.nrows() != p {
                return Err(Error::Dimension(format!(
                    "subject {} has {} variables, expected {p}",
                    s.id,
                    s.values.nrows()
                )));
            }
            if s.values.ncols() != s.times.len() {
                return Err(Error::Dimension(format!(
                    "subject {} has {} observations but {} time points",
                    s.id,
                    s.values.ncols(),
                    s.times.len()
                )));
            }
            if s.times.iter().any(|t| !t.is_finite() || !(0.0..=1.0).contains(t)) {
                return Err(Error::InvalidParameter(format!(
                    "subject {} has time points outside [0, 1]",
                    s.id
                )));
            }
            total += s.times.len();
            if !s.times.is_sorted() {
                let mut order: Vec<usize> = (0..s.times.len()).collect();
                order.sort_by(|&a, &b| s.times[a].total_cmp(&s.times[b]));
                let times: Vec<f64> = order.iter().map(|&i| s.times[i]).collect();
                let values = DMatrix::from_fn(p, times.len(), |r, c| s.values[(r, order[c])]);
                s.times = times;
                s.values = values;
            }
        }
        if total < 2 {
            return Err(Error::InvalidParameter(
                "need at least 2 observations in total".into(),
            ));
        }
        let detected = Self::detect_design(&subjects);
        let design = match design {
            None => detected,
            Some(Design::Common) => {
                if detected != Design::Common {
                    return Err(Error::WrongDesign);
                }
                Design::Common
            }
            Some(Design::Irregular) => Design::Irregular,
        };
        Ok(Self { p, subjects, design })
    }

    fn detect_design(subjects: &[Subject]) -> Design {
        let first = &subjects[0].times;
        if subjects.iter().all(|s| &s.times == first) {
            Design::Common
        } else {
            Design::Irregular
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn total_obs(&self) -> usize {
        self.subjects.iter().map(|s| s.times.len()).sum()
    }

    /// Average number of observations per subject.
    pub fn mean_obs(&self) -> f64 {
        self.total_obs() as f64 / self.n() as f64
    }

    /// The shared grid under a common design.
    pub fn common_grid(&self) -> Result<&[f64]> {
        match self.design {
            Design::Common => Ok(&self.subjects[0].times),
            Design::Irregular => Err(Error::WrongDesign),
        }
    }
}

/// Spectral diagnostics recorded with every smoothed covariance.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CovDiagnostics {
    /// Observations (or grid times times subjects under the common design)
    /// with nonzero weight.
    pub in_window: usize,
    /// Largest `d + 1` eigenvalues, descending.
    pub top_eigenvalues: Vec<f64>,
    /// `lambda_d - lambda_{d+1}`, the well-posedness margin of the
    /// d-dimensional principal subspace.
    pub eigengap: f64,
}

/// Symmetric local-linear covariance estimate at one evaluation time.
#[derive(Debug, Clone)]
pub struct SmoothedCovariance {
    pub t: f64,
    pub s: DMatrix<f64>,
    pub mu_hat: DVector<f64>,
    pub diagnostics: CovDiagnostics,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SmoothedCovariance {
    /// Symmetrize, eigendecompose, and record diagnostics for dimension `d`.
    pub fn from_matrix(
        t: f64,
        s: DMatrix<f64>,
        mu_hat: DVector<f64>,
        in_window: usize,
        d: usize,
    ) -> Result<Self> {
        let p = s.nrows();
        if s.ncols() != p {
            return Err(Error::Dimension("covariance must be square".into()));
        }
        if d < 1 || d >= p {
            return Err(Error::Dimension(format!(
                "diagnostic dimension d = {d} must satisfy 1 <= d < p = {p}"
            )));
        }
        let s = (&s + s.transpose()) * 0.5;
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "smoothed covariance has non-finite entries".into(),
            ));
        }
        let eig = s.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
        let top = eigenvalues[..(d + 1).min(p)].to_vec();
        let eigengap = eigenvalues[d - 1] - eigenvalues[d];
        Ok(Self {
            t,
            s,
            mu_hat,
            diagnostics: CovDiagnostics {
                in_window,
                top_eigenvalues: top,
                eigengap,
            },
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn p(&self) -> usize {
        self.s.nrows()
    }

    /// Full spectrum, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvectors column-aligned with [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Leading `d` eigenvectors as a Stiefel point.
    pub fn leading_eigenvectors(&self, d: usize) -> Result<crate::stiefel::StiefelPoint> {
        if d > self.p() {
            return Err(Error::Dimension(format!(
                "requested {d} eigenvectors of a {} x {} matrix",
                self.p(),
                self.p()
            )));
        }
        crate::stiefel::StiefelPoint::new(self.eigenvectors.columns(0, d).into_owned())
    }
}

/// `lambda_d - lambda_{d+1}` of a smoothed covariance, eigenvalues sorted
/// descending.
pub fn eigengap_diagnostic(s: &SmoothedCovariance, d: usize) -> Result<f64> {
    if d < 1 || d >= s.p() {
        return Err(Error::Dimension(format!(
            "eigengap needs 1 <= d < p, got d = {d}, p = {}",
            s.p()
        )));
    }
    Ok(s.eigenvalues[d - 1] - s.eigenvalues[d])
}

/// Local linear estimate of the mean function at `t` over pooled
/// observations.
pub fn smooth_mean(data: &PanelDataset, t: f64, spec: &KernelSpec) -> Result<DVector<f64>> {
    PooledView::new(data).mean(t, spec, None)
}

/// Pooled smoothed covariance at `t`; subtracts the smoothed-mean outer
/// product when `center` is set.
pub fn smooth_cov_pooled(
    data: &PanelDataset,
    t: f64,
    spec: &KernelSpec,
    center: bool,
    d: usize,
) -> Result<SmoothedCovariance> {
    PooledView::new(data).cov(t, spec, center, d, None)
}

/// Common-design smoothed covariance: weighted combination of per-grid-time
/// sample covariances around their cross-sectional means.
pub fn smooth_cov_common(
    data: &PanelDataset,
    t: f64,
    spec: &KernelSpec,
    d: usize,
) -> Result<SmoothedCovariance> {
    CommonMoments::new(data)?.cov(t, spec, d, None)
}

/// Pooled observations flattened and sorted by time, so any bandwidth window
/// is a contiguous column range. Several evaluation times and leave-one-out
/// variants reuse one view.
pub struct PooledView {
    p: usize,
    times: Vec<f64>,
    y: DMatrix<f64>,
    subject: Vec<usize>,
}

impl PooledView {
    pub fn new(data: &PanelDataset) -> Self {
        Self::with_subjects(data, None)
    }

    /// Restrict to subjects where `mask` is true (all when `None`).
    pub fn with_subjects(data: &PanelDataset, mask: Option<&[bool]>) -> Self {
        let p = data.p();
        let mut entries: Vec<(f64, usize, usize)> = Vec::new();
        for (si, s) in data.subjects().iter().enumerate() {
            if let Some(m) = mask {
                if !m[si] {
                    continue;
                }
            }
            for (l, &t) in s.times.iter().enumerate() {
                entries.push((t, si, l));
            }
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let times: Vec<f64> = entries.iter().map(|e| e.0).collect();
        let subject: Vec<usize> = entries.iter().map(|e| e.1).collect();
        let y = DMatrix::from_fn(p, entries.len(), |r, c| {
            let (_, si, l) = entries[c];
            data.subjects()[si].values[(r, l)]
        });
        Self {
            p,
            times,
            y,
            subject,
        }
    }

    fn window(&self, t: f64, h: f64) -> (usize, usize) {
        let lo = self.times.partition_point(|&x| x < t - h);
        let hi = self.times.partition_point(|&x| x <= t + h);
        (lo, hi)
    }

    fn window_weights(
        &self,
        t: f64,
        spec: &KernelSpec,
        excluded_subject: Option<usize>,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        let (lo, hi) = self.window(t, spec.bandwidth);
        let mut cols: Vec<usize> = Vec::with_capacity(hi - lo);
        let mut win_times: Vec<f64> = Vec::with_capacity(hi - lo);
        for c in lo..hi {
            if Some(self.subject[c]) == excluded_subject {
                continue;
            }
            cols.push(c);
            win_times.push(self.times[c]);
        }
        let w = local_linear_weights(&win_times, t, spec)?;
        Ok((cols, w.weights))
    }

    /// Weighted mean `sum w_il y_il` at `t`.
    pub fn mean(
        &self,
        t: f64,
        spec: &KernelSpec,
        excluded_subject: Option<usize>,
    ) -> Result<DVector<f64>> {
        let (cols, weights) = self.window_weights(t, spec, excluded_subject)?;
        let mut mu = DVector::zeros(self.p);
        for (k, &c) in cols.iter().enumerate() {
            mu.axpy(weights[k], &self.y.column(c), 1.0);
        }
        Ok(mu)
    }

    /// Smoothed covariance at `t`, optionally excluding one subject.
    pub fn cov(
        &self,
        t: f64,
        spec: &KernelSpec,
        center: bool,
        d: usize,
        excluded_subject: Option<usize>,
    ) -> Result<SmoothedCovariance> {
        let (cols, weights) = self.window_weights(t, spec, excluded_subject)?;
        let k = cols.len();
        let mut yw = DMatrix::zeros(self.p, k);
        let mut yr = DMatrix::zeros(self.p, k);
        let mut in_window = 0usize;
        for (j, &c) in cols.iter().enumerate() {
            let w = weights[j];
            if w != 0.0 {
                in_window += 1;
            }
            yw.column_mut(j).copy_from(&(self.y.column(c) * w));
            yr.column_mut(j).copy_from(&self.y.column(c));
        }
        let mut s = &yw * yr.transpose();
        let mu = if center {
            let mut mu = DVector::zeros(self.p);
            for (j, _) in cols.iter().enumerate() {
                mu += yw.column(j);
            }
            s -= &mu * mu.transpose();
            mu
        } else {
            DVector::zeros(self.p)
        };
        SmoothedCovariance::from_matrix(t, s, mu, in_window, d)
    }
}

/// Per-grid-time first and second moments of a common-design panel.
/// Precomputing them once makes every evaluation time and leave-one-out
/// covariance a cheap weighted combination.
pub struct CommonMoments {
    grid: Vec<f64>,
    /// `T_l = sum_i y_il y_il^T`
    second: Vec<DMatrix<f64>>,
    /// `s_l = sum_i y_il`
    first: Vec<DVector<f64>>,
    n: usize,
    p: usize,
}

impl CommonMoments {
    pub fn new(data: &PanelDataset) -> Result<Self> {
        Self::with_subjects(data, None)
    }

    pub fn with_subjects(data: &PanelDataset, mask: Option<&[bool]>) -> Result<Self> {
        let grid = data.common_grid()?.to_vec();
        let p = data.p();
        let m = grid.len();
        let mut second = vec![DMatrix::<f64>::zeros(p, p); m];
        let mut first = vec![DVector::<f64>::zeros(p); m];
        let mut n = 0usize;
        for (si, s) in data.subjects().iter().enumerate() {
            if let Some(mk) = mask {
                if !mk[si] {
                    continue;
                }
            }
            n += 1;
            for l in 0..m {
                let y = s.values.column(l);
                second[l].ger(1.0, &y, &y, 1.0);
                first[l] += y;
            }
        }
        if n < 2 {
            return Err(Error::InvalidParameter(
                "common-design moments need at least 2 subjects".into(),
            ));
        }
        Ok(Self {
            grid,
            second,
            first,
            n,
            p,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Cross-sectional sample mean at grid index `l`.
    pub fn sample_mean(&self, l: usize) -> DVector<f64> {
        &self.first[l] / self.n as f64
    }

    /// `S_h(t) = sum_l w_l S_l` with `S_l` the per-time sample covariance.
    pub fn cov(
        &self,
        t: f64,
        spec: &KernelSpec,
        d: usize,
        exclude: Option<(&PanelDataset, usize)>,
    ) -> Result<SmoothedCovariance> {
        let w = common_design_weights(&self.grid, t, spec)?;
        let nf = match exclude {
            Some(_) => (self.n - 1) as f64,
            None => self.n as f64,
        };
        if nf < 2.0 {
            return Err(Error::InvalidParameter(
                "need at least 2 subjects after exclusion".into(),
            ));
        }
        let mut s = DMatrix::<f64>::zeros(self.p, self.p);
        let mut mu = DVector::<f64>::zeros(self.p);
        let mut in_window = 0usize;
        for (l, &wl) in w.weights.iter().enumerate() {
            if wl == 0.0 {
                continue;
            }
            in_window += 1;
            let (tl, fl) = match exclude {
                Some((data, i)) => {
                    let y = data.subjects()[i].values.column(l);
                    (&self.second[l] - y * y.transpose(), &self.first[l] - y)
                }
                None => (self.second[l].clone(), self.first[l].clone()),
            };
            let ybar = fl / nf;
            // S_l = T_l / n - ybar ybar^T
            s += (tl / nf - &ybar * ybar.transpose()) * wl;
            mu.axpy(wl, &ybar, 1.0);
        }
        SmoothedCovariance::from_matrix(t, s, mu, in_window * nf as usize, d)
    }
}
