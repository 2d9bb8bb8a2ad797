//! Two-step dynamic principal subspace estimation over an evaluation grid:
//! penalized initial fit, support thresholding on the projection diagonal,
//! refined re-fit on the retained variables with zero padding, plus the
//! projection-based subspace distance and explained-variance dimension
//! selection.

use nalgebra::DMatrix;

use crate::kernel::KernelSpec;
use crate::manpg::{manpg_solve, objective, ManPgParams, SolveTrace};
use crate::smooth::{
    eigengap_diagnostic, CommonMoments, Design, PanelDataset, PooledView, SmoothedCovariance,
};
use crate::stiefel::{thin_qr_posdiag, StiefelPoint};
use crate::{Error, Result};

/// How the subspace dimension is chosen at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum DimensionRule {
    Fixed(usize),
    /// Smallest `d` whose leading eigenvalues explain at least this fraction
    /// of the positive spectrum.
    Fve(f64),
}

/// A per-time parameter: one value broadcast over the grid, or one value per
/// grid point.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ParamSchedule {
    Constant(f64),
    PerGridPoint(Vec<f64>),
}

impl ParamSchedule {
    pub fn at(&self, idx: usize) -> f64 {
        match self {
            ParamSchedule::Constant(v) => *v,
            ParamSchedule::PerGridPoint(v) => v[idx],
        }
    }

    fn validate(&self, grid_len: usize, name: &str) -> Result<()> {
        let ok = match self {
            ParamSchedule::Constant(v) => *v >= 0.0 && v.is_finite(),
            ParamSchedule::PerGridPoint(v) => {
                v.len() == grid_len && v.iter().all(|x| *x >= 0.0 && x.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{name} schedule must be nonnegative and match the grid length {grid_len}"
            )))
        }
    }
}

/// Which smoothed covariance formula a trajectory fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CovarianceKind {
    /// Common design uses the per-grid-time estimator, anything else pools.
    Auto,
    Pooled,
    CommonDesign,
}

/// Configuration of a trajectory fit.
#[derive(Debug, Clone)]
pub struct DpcaConfig {
    pub dimension: DimensionRule,
    pub kernel: KernelSpec,
    pub rho: ParamSchedule,
    pub gamma: ParamSchedule,
    /// Evaluation times, sorted, in `[0, 1]`.
    pub grid: Vec<f64>,
    /// Mean-correct the pooled covariance estimate.
    pub center: bool,
    pub solver: ManPgParams,
    pub covariance: CovarianceKind,
    /// Start each solve from the previous grid point's refined estimate.
    pub warm_start: bool,
    /// Start the refine solve from the initial estimate restricted to the
    /// retained support.
    pub refine_warm_start: bool,
    /// Magnitude above which a projection diagonal entry counts as nonzero
    /// in support reporting.
    pub nonzero_threshold: f64,
}

impl DpcaConfig {
    pub fn new(kernel: KernelSpec, dimension: DimensionRule) -> Self {
        Self {
            dimension,
            kernel,
            rho: ParamSchedule::Constant(0.0),
            gamma: ParamSchedule::Constant(0.0),
            grid: default_grid(100),
            center: true,
            solver: ManPgParams::default(),
            covariance: CovarianceKind::Auto,
            warm_start: true,
            refine_warm_start: true,
            nonzero_threshold: 1e-6,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self.dimension {
            DimensionRule::Fixed(d) => {
                if d < 1 || d >= p {
                    return Err(Error::InvalidParameter(format!(
                        "dimension d = {d} must satisfy 1 <= d < p = {p}"
                    )));
                }
            }
            DimensionRule::Fve(thr) => {
                if !(thr > 0.0 && thr < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "FVE threshold must lie in (0, 1), got {thr}"
                    )));
                }
            }
        }
        if self.grid.is_empty()
            || !self.grid.is_sorted()
            || self
                .grid
                .iter()
                .any(|t| !t.is_finite() || !(0.0..=1.0).contains(t))
        {
            return Err(Error::InvalidParameter(
                "grid must be nonempty, sorted, and within [0, 1]".into(),
            ));
        }
        self.rho.validate(self.grid.len(), "rho")?;
        self.gamma.validate(self.grid.len(), "gamma")?;
        if !(self.nonzero_threshold >= 0.0) {
            return Err(Error::InvalidParameter(
                "nonzero threshold must be nonnegative".into(),
            ));
        }
        self.solver.validate()
    }
}

/// `n` equispaced points spanning `[0, 1]` inclusive.
pub fn default_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Fit at a single grid point.
#[derive(Debug, Clone)]
pub struct GridPointFit {
    pub t: f64,
    pub d: usize,
    pub initial: StiefelPoint,
    pub initial_trace: SolveTrace,
    /// Retained variable indices, ascending.
    pub support: Vec<usize>,
    /// Refined estimate; rows outside `support` are exactly zero.
    pub refined: StiefelPoint,
    pub refine_trace: SolveTrace,
    pub eigengap: f64,
    /// Set when an empty or too-small support forced a refit at gamma = 0.
    pub gamma_fallback: bool,
    pub warnings: Vec<String>,
}

impl GridPointFit {
    /// Projection matrix of the refined estimate, materialized on demand.
    pub fn projection(&self) -> DMatrix<f64> {
        self.refined.projection()
    }
}

#[derive(Debug, Clone)]
pub enum PointOutcome {
    Fitted(Box<GridPointFit>),
    Skipped { t: f64, reason: String },
}

/// Per-grid-point estimates over the evaluation grid.
#[derive(Debug, Clone)]
pub struct SubspaceFit {
    pub grid: Vec<f64>,
    pub points: Vec<PointOutcome>,
}

impl SubspaceFit {
    pub fn point(&self, idx: usize) -> Option<&GridPointFit> {
        match &self.points[idx] {
            PointOutcome::Fitted(f) => Some(f),
            PointOutcome::Skipped { .. } => None,
        }
    }

    pub fn fitted(&self) -> impl Iterator<Item = (usize, &GridPointFit)> {
        self.points.iter().enumerate().filter_map(|(i, p)| match p {
            PointOutcome::Fitted(f) => Some((i, f.as_ref())),
            PointOutcome::Skipped { .. } => None,
        })
    }

    pub fn n_fitted(&self) -> usize {
        self.fitted().count()
    }
}

/// Penalized initial estimate at one smoothed covariance; starts from the
/// top-`d` eigenvectors, or from `warm` when that has a lower objective.
pub fn initial_estimate(
    s: &SmoothedCovariance,
    d: usize,
    rho: f64,
    params: &ManPgParams,
    warm: Option<&StiefelPoint>,
) -> Result<(StiefelPoint, SolveTrace)> {
    let eig_init = s.leading_eigenvectors(d)?;
    let start = match warm {
        Some(w) if w.p() == s.p() && w.d() == d => {
            let f_w = objective(&s.s, rho, w)?;
            let f_e = objective(&s.s, rho, &eig_init)?;
            if f_w <= f_e {
                w.clone()
            } else {
                eig_init
            }
        }
        _ => eig_init,
    };
    manpg_solve(&s.s, rho, &start, params)
}

/// Variables whose initial projection diagonal reaches `gamma`, computed
/// from row norms of the estimate without materializing the projection.
pub fn threshold_support(u0: &StiefelPoint, gamma: f64) -> Result<Vec<usize>> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    let support: Vec<usize> = u0
        .projection_diagonal()
        .iter()
        .enumerate()
        .filter_map(|(j, &pi)| if pi >= gamma { Some(j) } else { None })
        .collect();
    if support.is_empty() {
        return Err(Error::EmptySupport { gamma });
    }
    Ok(support)
}

/// Re-fit on the retained variables and embed with exact zero rows
/// elsewhere.
pub fn refine(
    s: &SmoothedCovariance,
    support: &[usize],
    d: usize,
    rho: f64,
    params: &ManPgParams,
    warm: Option<&StiefelPoint>,
) -> Result<(StiefelPoint, SolveTrace)> {
    let p = s.p();
    if support.len() < d {
        return Err(Error::SupportTooSmall {
            support: support.len(),
            d,
        });
    }
    if support.iter().any(|&j| j >= p) {
        return Err(Error::Dimension("support index out of range".into()));
    }
    let k = support.len();
    let sub = DMatrix::from_fn(k, k, |r, c| s.s[(support[r], support[c])]);

    let init = warm
        .filter(|w| w.p() == p && w.d() == d)
        .and_then(|w| {
            let restricted = DMatrix::from_fn(k, d, |r, c| w.matrix()[(support[r], c)]);
            let (q, r) = thin_qr_posdiag(&restricted);
            let min_diag = (0..d).map(|j| r[(j, j)].abs()).fold(f64::INFINITY, f64::min);
            if min_diag > 1e-8 {
                StiefelPoint::new(q).ok()
            } else {
                None
            }
        });
    let init = match init {
        Some(q) => q,
        None => {
            let eig = sub.clone().symmetric_eigen();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            StiefelPoint::new(DMatrix::from_fn(k, d, |r, c| eig.eigenvectors[(r, order[c])]))?
        }
    };

    let (solution, trace) = manpg_solve(&sub, rho, &init, params)?;
    let mut embedded = DMatrix::<f64>::zeros(p, d);
    for (r, &j) in support.iter().enumerate() {
        for c in 0..d {
            embedded[(j, c)] = solution.matrix()[(r, c)];
        }
    }
    Ok((StiefelPoint::new(embedded)?, trace))
}

/// Distance `sqrt(||E - F||_F^2 / 2)` between subspaces given by projection
/// matrices of equal integer trace.
pub fn subspace_distance(e: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<f64> {
    for (name, m) in [("first", e), ("second", f)] {
        if m.nrows() != m.ncols() {
            return Err(Error::NotProjection(format!("{name} input is not square")));
        }
        let idem = (m * m - m).norm();
        if idem > 1e-6 {
            return Err(Error::NotProjection(format!(
                "{name} input violates P^2 = P by {idem:.3e}"
            )));
        }
        let tr = m.trace();
        if (tr - tr.round()).abs() > 1e-6 {
            return Err(Error::NotProjection(format!(
                "{name} input has non-integer trace {tr}"
            )));
        }
    }
    if e.nrows() != f.nrows() || (e.trace() - f.trace()).abs() > 1e-6 {
        return Err(Error::Dimension(
            "projections must have equal size and trace".into(),
        ));
    }
    Ok(((e - f).norm_squared() / 2.0).sqrt())
}

/// Same distance computed from orthonormal bases:
/// `sqrt(d - ||A^T B||_F^2)`.
pub fn subspace_distance_frames(a: &StiefelPoint, b: &StiefelPoint) -> Result<f64> {
    if a.p() != b.p() || a.d() != b.d() {
        return Err(Error::Dimension("frames must have equal shape".into()));
    }
    let overlap = (a.matrix().transpose() * b.matrix()).norm_squared();
    Ok((a.d() as f64 - overlap).max(0.0).sqrt())
}

/// Smallest `d` explaining at least `threshold` of the positive spectrum.
pub fn select_d_by_fve(s: &SmoothedCovariance, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "FVE threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let total: f64 = s.eigenvalues().iter().map(|&x| x.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSpectrum);
    }
    let mut cum = 0.0;
    for (i, &lam) in s.eigenvalues().iter().enumerate() {
        cum += lam.max(0.0);
        if cum / total >= threshold {
            return Ok(i + 1);
        }
    }
    Ok(s.p())
}

enum CovSource {
    Pooled(PooledView),
    Common(CommonMoments),
}

impl CovSource {
    fn cov(
        &self,
        t: f64,
        spec: &KernelSpec,
        center: bool,
        d_diag: usize,
    ) -> Result<SmoothedCovariance> {
        match self {
            CovSource::Pooled(view) => view.cov(t, spec, center, d_diag, None),
            CovSource::Common(moments) => moments.cov(t, spec, d_diag, None),
        }
    }
}

/// Fit the two-step estimator at every grid point, warm-starting along the
/// grid and aligning exported column signs and order between consecutive
/// points (the alignment changes frames, never projections).
pub fn fit_trajectory(data: &PanelDataset, config: &DpcaConfig) -> Result<SubspaceFit> {
    let p = data.p();
    config.validate(p)?;

    let source = match config.covariance {
        CovarianceKind::Pooled => CovSource::Pooled(PooledView::new(data)),
        CovarianceKind::CommonDesign => CovSource::Common(CommonMoments::new(data)?),
        CovarianceKind::Auto => match data.design() {
            Design::Common => CovSource::Common(CommonMoments::new(data)?),
            Design::Irregular => CovSource::Pooled(PooledView::new(data)),
        },
    };

    let mut points: Vec<PointOutcome> = Vec::with_capacity(config.grid.len());
    let mut warm: Option<StiefelPoint> = None;

    for (idx, &t) in config.grid.iter().enumerate() {
        let d_diag = match config.dimension {
            DimensionRule::Fixed(d) => d,
            DimensionRule::Fve(_) => 1,
        };
        let s = match source.cov(t, &config.kernel, config.center, d_diag) {
            Ok(s) => s,
            Err(Error::DegenerateWindow { reason, .. }) => {
                points.push(PointOutcome::Skipped { t, reason });
                continue;
            }
            Err(other) => return Err(other),
        };

        let mut warnings = Vec::new();
        let d = match config.dimension {
            DimensionRule::Fixed(d) => d,
            DimensionRule::Fve(thr) => match select_d_by_fve(&s, thr) {
                Ok(d) => {
                    if d >= p {
                        warnings.push(format!(
                            "FVE rule selected d = {d}; capped at p - 1 = {}",
                            p - 1
                        ));
                        p - 1
                    } else {
                        d
                    }
                }
                Err(Error::DegenerateSpectrum) => {
                    points.push(PointOutcome::Skipped {
                        t,
                        reason: "degenerate spectrum under FVE rule".into(),
                    });
                    continue;
                }
                Err(other) => return Err(other),
            },
        };
        let eigengap = eigengap_diagnostic(&s, d)?;
        if eigengap < 1e-8 {
            warnings.push(format!(
                "eigengap {eigengap:.3e} below 1e-8; subspace weakly identified"
            ));
        }

        let rho = config.rho.at(idx);
        let gamma = config.gamma.at(idx);
        let warm_ref = warm.as_ref().filter(|w| config.warm_start && w.d() == d);
        let (initial, initial_trace) = initial_estimate(&s, d, rho, &config.solver, warm_ref)?;

        let mut gamma_fallback = false;
        let support = match threshold_support(&initial, gamma) {
            Ok(j) if j.len() >= d => j,
            Ok(j) => {
                warnings.push(format!(
                    "support of size {} smaller than d = {d} at gamma = {gamma}; refit at gamma = 0",
                    j.len()
                ));
                gamma_fallback = true;
                threshold_support(&initial, 0.0)?
            }
            Err(Error::EmptySupport { .. }) => {
                warnings.push(format!("empty support at gamma = {gamma}; refit at gamma = 0"));
                gamma_fallback = true;
                threshold_support(&initial, 0.0)?
            }
            Err(other) => return Err(other),
        };

        let refine_warm = config.refine_warm_start.then_some(&initial);
        let (refined, refine_trace) =
            refine(&s, &support, d, rho, &config.solver, refine_warm)?;

        warm = Some(refined.clone());
        points.push(PointOutcome::Fitted(Box::new(GridPointFit {
            t,
            d,
            initial,
            initial_trace,
            support,
            refined,
            refine_trace,
            eigengap,
            gamma_fallback,
            warnings,
        })));
    }

    if points.iter().all(|p| matches!(p, PointOutcome::Skipped { .. })) {
        let first_reason = points
            .iter()
            .find_map(|p| match p {
                PointOutcome::Skipped { reason, .. } => Some(reason.clone()),
                PointOutcome::Fitted(_) => None,
            })
            .unwrap_or_default();
        return Err(Error::AllPointsFailed(first_reason));
    }

    align_chain(&mut points, Field::Initial);
    align_chain(&mut points, Field::Refined);

    Ok(SubspaceFit {
        grid: config.grid.to_vec(),
        points,
    })
}

#[derive(Clone, Copy)]
enum Field {
    Initial,
    Refined,
}

fn align_chain(points: &mut [PointOutcome], field: Field) {
    let mut prev: Option<DMatrix<f64>> = None;
    for point in points.iter_mut() {
        let PointOutcome::Fitted(fit) = point else {
            continue;
        };
        let current = match field {
            Field::Initial => fit.initial.matrix().clone(),
            Field::Refined => fit.refined.matrix().clone(),
        };
        if let Some(prev_u) = prev.as_ref().filter(|m| m.ncols() == current.ncols()) {
            let aligned = align_frames(prev_u, &current);
            let aligned_point = StiefelPoint::new(aligned).expect("permutation keeps orthonormality");
            match field {
                Field::Initial => fit.initial = aligned_point.clone(),
                Field::Refined => fit.refined = aligned_point.clone(),
            }
            prev = Some(aligned_point.into_inner());
        } else {
            prev = Some(current);
        }
    }
}

/// Greedy column matching of `current` to `prev`: repeatedly pick the pair
/// with the largest |inner product|, permute the matched column into place,
/// and fix its sign.
pub(crate) fn align_frames(prev: &DMatrix<f64>, current: &DMatrix<f64>) -> DMatrix<f64> {
    let d = current.ncols();
    let overlap = prev.transpose() * current;
    let mut used_rows = vec![false; d];
    let mut used_cols = vec![false; d];
    let mut assignment = vec![(0usize, 1.0f64); d];
    for _ in 0..d {
        let mut best = (0usize, 0usize, -1.0f64);
        for r in 0..d {
            if used_rows[r] {
                continue;
            }
            for c in 0..d {
                if used_cols[c] {
                    continue;
                }
                if overlap[(r, c)].abs() > best.2 {
                    best = (r, c, overlap[(r, c)].abs());
                }
            }
        }
        let (r, c, _) = best;
        used_rows[r] = true;
        used_cols[c] = true;
        assignment[r] = (c, if overlap[(r, c)] < 0.0 { -1.0 } else { 1.0 });
    }
    let mut out = DMatrix::<f64>::zeros(current.nrows(), d);
    for (slot, &(src, sign)) in assignment.iter().enumerate() {
        let col = current.column(src) * sign;
        out.column_mut(slot).copy_from(&col);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::{smooth_cov_pooled, Subject};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn cov_from(s: DMatrix<f64>, d: usize) -> SmoothedCovariance {
        let p = s.nrows();
        SmoothedCovariance::from_matrix(0.5, s, DVector::zeros(p), 10, d).unwrap()
    }

    fn tight_params() -> ManPgParams {
        ManPgParams {
            tol_d: Some(1e-10),
            max_outer: 20_000,
            ..Default::default()
        }
    }

    #[test]
    fn initial_estimate_diagonal_case() {
        let s = cov_from(
            DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 4.0, 3.0, 2.0, 1.0])),
            2,
        );
        let (u, trace) = initial_estimate(&s, 2, 0.0, &tight_params(), None).unwrap();
        assert_eq!(trace.status, crate::manpg::SolveStatus::Converged);
        let truth = StiefelPoint::new(DMatrix::from_fn(5, 2, |r, c| {
            if r == c {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        assert!(subspace_distance_frames(&u, &truth).unwrap() <= 1e-6);
    }

    #[test]
    fn penalty_shrinks_off_support_rows() {
        // spiked sparse covariance: signal on the first two coordinates,
        // weakly coupled to the rest so the unpenalized eigenvectors leak
        // off-support
        let mut s = DMatrix::<f64>::zeros(6, 6);
        s[(0, 0)] = 5.0;
        s[(1, 1)] = 4.0;
        s[(0, 1)] = 1.0;
        s[(1, 0)] = 1.0;
        for j in 2..6 {
            s[(j, j)] = 0.3;
        }
        s[(0, 4)] = 0.5;
        s[(4, 0)] = 0.5;
        s[(1, 5)] = 0.5;
        s[(5, 1)] = 0.5;
        s[(0, 2)] = 0.3;
        s[(2, 0)] = 0.3;
        let cov = cov_from(s, 2);
        let (dense, _) = initial_estimate(&cov, 2, 0.0, &tight_params(), None).unwrap();
        let (sparse, _) = initial_estimate(&cov, 2, 0.25, &tight_params(), None).unwrap();
        let off_l1 = |u: &StiefelPoint| -> f64 {
            (2..6)
                .map(|r| u.matrix().row(r).iter().map(|x| x.abs()).sum::<f64>())
                .sum()
        };
        assert!(off_l1(&sparse) < off_l1(&dense));
        // descent: final objective no worse than the eigenvector start
        let (_, trace) = initial_estimate(&cov, 2, 0.25, &tight_params(), None).unwrap();
        assert!(trace.final_objective <= trace.initial_objective + 1e-12);
    }

    #[test]
    fn threshold_support_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let axes = StiefelPoint::new(DMatrix::from_fn(6, 2, |r, c| {
            if r == c {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        assert_eq!(threshold_support(&axes, 0.0).unwrap(), (0..6).collect::<Vec<_>>());
        assert_eq!(threshold_support(&axes, 0.5).unwrap(), vec![0, 1]);
        assert!(matches!(
            threshold_support(&axes, 1.5),
            Err(Error::EmptySupport { .. })
        ));

        // against the materialized projection diagonal
        let raw = DMatrix::from_fn(8, 3, |_, _| {
            if rng.random::<f64>() < 0.5 {
                0.0
            } else {
                rng.random::<f64>() - 0.5
            }
        });
        let (q, _) = crate::stiefel::thin_qr_posdiag(&raw);
        let u = StiefelPoint::new(q).unwrap();
        let pi = u.projection();
        let gamma = 1e-3;
        let oracle: Vec<usize> = (0..8).filter(|&j| pi[(j, j)] >= gamma).collect();
        assert_eq!(threshold_support(&u, gamma).unwrap(), oracle);
    }

    #[test]
    fn refine_full_support_equals_initial_problem() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let raw = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5);
        let cov = cov_from((&raw + raw.transpose()) * 0.5, 2);
        let (initial, _) = initial_estimate(&cov, 2, 0.1, &tight_params(), None).unwrap();
        let all: Vec<usize> = (0..5).collect();
        let (refined, _) =
            refine(&cov, &all, 2, 0.1, &tight_params(), Some(&initial)).unwrap();
        assert!(subspace_distance_frames(&initial, &refined).unwrap() <= 1e-8);
    }

    #[test]
    fn refine_block_diagonal_matches_submatrix_eigenspace() {
        let mut s = DMatrix::<f64>::zeros(7, 7);
        let j = [1usize, 3, 4];
        let block = [[4.0, 0.5, 0.2], [0.5, 3.0, 0.1], [0.2, 0.1, 2.0]];
        for (a, &ja) in j.iter().enumerate() {
            for (b, &jb) in j.iter().enumerate() {
                s[(ja, jb)] = block[a][b];
            }
        }
        s[(0, 0)] = 0.1;
        s[(2, 2)] = 0.1;
        s[(5, 5)] = 0.1;
        s[(6, 6)] = 0.1;
        let cov = cov_from(s.clone(), 2);
        let (refined, _) = refine(&cov, &j, 2, 0.0, &tight_params(), None).unwrap();

        // dense eigensolver on the submatrix, zero padded
        let sub = DMatrix::from_fn(3, 3, |r, c| block[r][c]);
        let eig = sub.symmetric_eigen();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut truth = DMatrix::<f64>::zeros(7, 2);
        for (r, &jr) in j.iter().enumerate() {
            for c in 0..2 {
                truth[(jr, c)] = eig.eigenvectors[(r, order[c])];
            }
        }
        let truth = StiefelPoint::new(truth).unwrap();
        assert!(subspace_distance_frames(&refined, &truth).unwrap() <= 1e-7);

        // off-support rows are bitwise zero
        for &row in &[0usize, 2, 5, 6] {
            for c in 0..2 {
                assert_eq!(refined.matrix()[(row, c)], 0.0);
            }
        }
    }

    #[test]
    fn refine_minimal_support_is_coordinate_projector() {
        let s = cov_from(
            DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0, 0.5])),
            2,
        );
        let j = [0usize, 2];
        let (refined, _) = refine(&s, &j, 2, 0.0, &tight_params(), None).unwrap();
        let pi = refined.projection();
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r == c && j.contains(&r) { 1.0 } else { 0.0 };
                assert_relative_eq!(pi[(r, c)], expect, epsilon = 1e-10);
            }
        }

        assert!(matches!(
            refine(&s, &[1], 2, 0.0, &tight_params(), None),
            Err(Error::SupportTooSmall { .. })
        ));
    }

    #[test]
    fn subspace_distance_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let raw = DMatrix::from_fn(8, 3, |_, _| rng.random::<f64>() - 0.5);
        let (q, _) = crate::stiefel::thin_qr_posdiag(&raw);
        let u = StiefelPoint::new(q).unwrap();
        let e = u.projection();
        assert_relative_eq!(subspace_distance(&e, &e).unwrap(), 0.0, epsilon = 1e-12);

        // orthogonal subspaces: distance sqrt(d)
        let a = StiefelPoint::new(DMatrix::from_fn(8, 3, |r, c| {
            if r == c {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        let b = StiefelPoint::new(DMatrix::from_fn(8, 3, |r, c| {
            if r == c + 4 {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        assert_relative_eq!(
            subspace_distance(&a.projection(), &b.projection()).unwrap(),
            3.0f64.sqrt(),
            epsilon = 1e-12
        );

        // principal-angle oracle
        for _ in 0..10 {
            let ra = DMatrix::from_fn(8, 3, |_, _| rng.random::<f64>() - 0.5);
            let rb = DMatrix::from_fn(8, 3, |_, _| rng.random::<f64>() - 0.5);
            let ua = StiefelPoint::new(crate::stiefel::thin_qr_posdiag(&ra).0).unwrap();
            let ub = StiefelPoint::new(crate::stiefel::thin_qr_posdiag(&rb).0).unwrap();
            let dist = subspace_distance(&ua.projection(), &ub.projection()).unwrap();
            let svd = (ua.matrix().transpose() * ub.matrix()).svd(false, false);
            let sin_sq: f64 = svd
                .singular_values
                .iter()
                .map(|&c| 1.0 - (c.min(1.0)) * (c.min(1.0)))
                .sum();
            assert_relative_eq!(dist, sin_sq.sqrt(), epsilon = 1e-10);
            assert!(dist <= 3.0f64.sqrt() + 1e-12);
            assert_relative_eq!(
                dist,
                subspace_distance_frames(&ua, &ub).unwrap(),
                epsilon = 1e-10
            );
        }

        let not_proj = DMatrix::<f64>::from_element(4, 4, 0.3);
        assert!(matches!(
            subspace_distance(&not_proj, &not_proj),
            Err(Error::NotProjection(_))
        ));
    }

    #[test]
    fn fve_selection() {
        let lam = vec![30.0, 25.0, 20.0, 5.0, 3.0, 2.0, 1.0, 0.5, 0.2, 0.1];
        let s = cov_from(DMatrix::from_diagonal(&DVector::from_vec(lam)), 3);
        assert_eq!(select_d_by_fve(&s, 0.85).unwrap(), 3);

        let eye = cov_from(DMatrix::identity(6, 6), 2);
        assert_eq!(select_d_by_fve(&eye, 0.5).unwrap(), 3);

        let s =
            cov_from(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0])), 2);
        assert_eq!(select_d_by_fve(&s, 0.9999).unwrap(), 4);

        let neg = cov_from(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -0.5])), 1);
        assert!(matches!(
            select_d_by_fve(&neg, 0.5),
            Err(Error::DegenerateSpectrum)
        ));
    }

    #[test]
    fn support_recovery_on_constructed_instance() {
        // noiseless sparse instance: exact eigenvector recovery up to a
        // perturbation small enough for the threshold rule to succeed
        let p = 10;
        let j_true = [2usize, 5, 7];
        let mut u_true = DMatrix::<f64>::zeros(p, 1);
        for &j in &j_true {
            u_true[(j, 0)] = (1.0 / 3.0f64).sqrt();
        }
        let mut s = &u_true * u_true.transpose() * 5.0;
        for jj in 0..p {
            s[(jj, jj)] += 0.01 * (jj as f64 + 1.0) / p as f64;
        }
        let cov = cov_from(s, 1);
        let (u0, _) = initial_estimate(&cov, 1, 0.0, &tight_params(), None).unwrap();

        let pi_true = &u_true * u_true.transpose();
        let realized = (u0.projection() - &pi_true).norm();
        let min_signal = 1.0 / 3.0;
        let gamma = (realized * 1.5).max(1e-4);
        assert!(min_signal >= 2.0 * gamma, "constructed instance must satisfy the signal condition");
        assert!(gamma > realized);
        assert_eq!(threshold_support(&u0, gamma).unwrap(), j_true.to_vec());
    }

    #[test]
    fn align_frames_preserves_span_and_orders_columns() {
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let raw = DMatrix::from_fn(7, 3, |_, _| rng.random::<f64>() - 0.5);
        let (prev, _) = crate::stiefel::thin_qr_posdiag(&raw);
        // permute columns 0<-2, 1<-0, 2<-1 and flip a sign, plus noise
        let mut cur = DMatrix::<f64>::zeros(7, 3);
        cur.column_mut(0).copy_from(&(-prev.column(2)));
        cur.column_mut(1).copy_from(&prev.column(0));
        cur.column_mut(2).copy_from(&prev.column(1));
        let aligned = align_frames(&prev, &cur);
        // aligned columns now match prev's order and signs
        for c in 0..3 {
            assert!(aligned.column(c).dot(&prev.column(c)) > 0.99);
        }
        // span unchanged
        let pa = &aligned * aligned.transpose();
        let pc = &cur * cur.transpose();
        assert!((pa - pc).norm() <= 1e-12);
    }

    #[test]
    fn single_point_trajectory_matches_smoothed_pca() {
        let data = random_panel_for_fit(35, 6, 12, 5);
        let kernel = KernelSpec::epanechnikov(0.5).unwrap();
        let mut config = DpcaConfig::new(kernel, DimensionRule::Fixed(2));
        config.grid = vec![0.5];
        config.solver = tight_params();
        config.center = false;
        config.covariance = CovarianceKind::Pooled;
        let fit = fit_trajectory(&data, &config).unwrap();
        let point = fit.point(0).unwrap();
        assert_eq!(point.support.len(), 5);

        let cov = smooth_cov_pooled(&data, 0.5, &config.kernel, false, 2).unwrap();
        let truth = cov.leading_eigenvectors(2).unwrap();
        assert!(subspace_distance_frames(&point.refined, &truth).unwrap() <= 1e-6);
        assert!(subspace_distance_frames(&point.initial, &truth).unwrap() <= 1e-6);
    }

    #[test]
    fn trajectory_skips_degenerate_points_and_reports() {
        let data = random_panel_for_fit(36, 5, 8, 4);
        let kernel = KernelSpec::epanechnikov(0.02).unwrap();
        let mut config = DpcaConfig::new(kernel, DimensionRule::Fixed(1));
        // t = 0 almost surely has no window at h = 0.02
        config.grid = vec![0.0, 0.5];
        config.center = false;
        let fit = fit_trajectory(&data, &config);
        if let Ok(fit) = fit {
            assert!(fit.n_fitted() >= 1);
        }
    }

    fn random_panel_for_fit(seed: u64, n: usize, m: usize, p: usize) -> PanelDataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let subjects = (0..n)
            .map(|i| {
                let mut times: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                times.sort_by(f64::total_cmp);
                let values = DMatrix::from_fn(p, m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                Subject {
                    id: format!("s{i}"),
                    times,
                    values,
                }
            })
            .collect();
        PanelDataset::new(subjects, None).unwrap()
    }
}
