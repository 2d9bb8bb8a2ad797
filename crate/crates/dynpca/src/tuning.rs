//! Sequential data-driven tuning: bandwidth by leave-one-curve-out
//! cross-validation, then the sparsity level by the k-fold cross-validated
//! inner product, then the threshold by trading explained variance against
//! retained-variable count. Later stages consume the earlier selections.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::estimator::{initial_estimate, refine, threshold_support, ParamSchedule};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::manpg::ManPgParams;
use crate::smooth::{CommonMoments, Design, PanelDataset, PooledView, SmoothedCovariance};
use crate::stiefel::StiefelPoint;
use crate::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Candidate sets and cross-validation controls. Empty candidate lists are
/// replaced by scale-aware defaults derived from the data.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TuningGrids {
    /// Bandwidth candidates (A1); all positive.
    pub bandwidths: Vec<f64>,
    /// Sparsity candidates (A2); may include 0.
    pub rhos: Vec<f64>,
    /// Threshold candidates (A3); may include 0.
    pub gammas: Vec<f64>,
    /// Fold count for the rho and gamma stages.
    pub folds: usize,
    /// Information-loss tolerance of the gamma rule: pick the largest gamma
    /// whose cross-validated inner product stays within `1 - epsilon` of the
    /// best value on the curve (screening noise variables typically raises
    /// the curve before cutting signal drops it).
    pub epsilon_gamma: f64,
    /// Number of held-out observation points scored per bandwidth
    /// candidate.
    pub validation_subsample: Option<usize>,
    /// Evaluation times for the rho and gamma stages in shared mode.
    pub tuning_times: Option<Vec<f64>>,
}

impl Default for TuningGrids {
    fn default() -> Self {
        Self {
            bandwidths: Vec::new(),
            rhos: Vec::new(),
            gammas: Vec::new(),
            folds: 5,
            epsilon_gamma: 0.002,
            validation_subsample: Some(25),
            tuning_times: None,
        }
    }
}

impl TuningGrids {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidParameter("need at least 2 folds".into()));
        }
        if !(0.0..=0.5).contains(&self.epsilon_gamma) {
            return Err(Error::InvalidParameter(
                "epsilon_gamma must lie in [0, 0.5]".into(),
            ));
        }
        if self.bandwidths.iter().any(|&h| !(h > 0.0 && h <= 1.0)) {
            return Err(Error::InvalidParameter(
                "bandwidth candidates must lie in (0, 1]".into(),
            ));
        }
        if self.rhos.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidParameter(
                "rho candidates must be nonnegative".into(),
            ));
        }
        if self.gammas.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidParameter(
                "gamma candidates must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn tuning_times_or_default(&self) -> Vec<f64> {
        self.tuning_times
            .clone()
            .unwrap_or_else(|| vec![0.1, 0.3, 0.5, 0.7, 0.9])
    }
}

/// One cross-validation curve: a score per candidate, aligned 1:1.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CvCurve {
    pub candidates: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Selected parameters with the full curves behind each selection.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TuningReport {
    pub h_star: f64,
    pub bandwidth_curve: CvCurve,
    pub rho_star: ParamSchedule,
    /// One curve per tuning time (a single averaged curve in shared mode).
    pub rho_curves: Vec<CvCurve>,
    pub gamma_star: ParamSchedule,
    pub ip_curves: Vec<CvCurve>,
    pub support_size_curves: Vec<CvCurve>,
    pub tuning_times: Vec<f64>,
    pub shared: bool,
    /// Seed that fixed the fold assignment and validation subsample.
    pub seed: u64,
}

/// Whether one `(rho, gamma)` pair is selected for the whole grid or one
/// per grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuningMode<'a> {
    Shared,
    PerGridPoint(&'a [f64]),
}

/// Solver used inside tuning: looser than the final fit, since CV scores
/// only need a few correct digits.
fn cv_solver() -> ManPgParams {
    ManPgParams {
        max_outer: 300,
        ..Default::default()
    }
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (l + (h - l) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Leave-one-curve-out bandwidth selection at `rho = 0`, `gamma = 0`.
///
/// The prediction error of the fitted projector is averaged over a seeded
/// subsample of held-out observation points; candidates whose window
/// degenerates anywhere are scored infinity. Ties break toward the larger
/// (smoother) bandwidth.
pub fn select_bandwidth(
    data: &PanelDataset,
    grids: &TuningGrids,
    d: usize,
    family: KernelFamily,
    center: bool,
    seed: u64,
) -> Result<(f64, CvCurve)> {
    grids.validate()?;
    if data.n() < 3 {
        return Err(Error::InvalidParameter(
            "leave-one-curve-out needs at least 3 subjects".into(),
        ));
    }
    let mut candidates = if grids.bandwidths.is_empty() {
        let lo = (1.0 / data.mean_obs()).min(0.45).max(1e-3);
        log_spaced(lo, 0.5, 8)
    } else {
        grids.bandwidths.clone()
    };
    candidates.sort_by(f64::total_cmp);

    // seeded subsample of (subject, observation) pairs
    let pairs: Vec<(usize, usize)> = data
        .subjects()
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.times.len()).map(move |l| (i, l)))
        .collect();
    let take = grids
        .validation_subsample
        .unwrap_or(pairs.len())
        .min(pairs.len())
        .max(1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let chosen: Vec<(usize, usize)> = sample(&mut rng, pairs.len(), take)
        .iter()
        .map(|k| pairs[k])
        .collect();

    let common = match data.design() {
        Design::Common => Some(CommonMoments::new(data)?),
        Design::Irregular => None,
    };
    let pooled = PooledView::new(data);

    let score_candidate = |h: f64| -> f64 {
        let spec = match KernelSpec::new(family, h) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        let mut total = 0.0;
        for &(i, l) in &chosen {
            let subj = &data.subjects()[i];
            let t_val = subj.times[l];
            let y = subj.values.column(l);

            let cov = match &common {
                Some(m) => m.cov(t_val, &spec, d, Some((data, i))),
                None => pooled.cov(t_val, &spec, center, d, Some(i)),
            };
            let Ok(cov) = cov else { return f64::INFINITY };
            let Ok(u) = cov.leading_eigenvectors(d) else {
                return f64::INFINITY;
            };

            let mu = if center {
                match &common {
                    Some(m) => m.sample_mean(l),
                    None => match pooled.mean(t_val, &spec, None) {
                        Ok(mu) => mu,
                        Err(_) => return f64::INFINITY,
                    },
                }
            } else {
                DVector::zeros(data.p())
            };
            let r = y - mu;
            let proj = u.matrix() * (u.matrix().transpose() * &r);
            total += (r - proj).norm_squared();
        }
        total / chosen.len() as f64
    };

    #[cfg(feature = "parallel")]
    let scores: Vec<f64> = candidates.par_iter().map(|&h| score_candidate(h)).collect();
    #[cfg(not(feature = "parallel"))]
    let scores: Vec<f64> = candidates.iter().map(|&h| score_candidate(h)).collect();

    let mut best: Option<(f64, f64)> = None;
    for (&h, &score) in candidates.iter().zip(&scores) {
        if !score.is_finite() {
            continue;
        }
        match best {
            // candidates ascending, so `<=` keeps the larger h on ties
            Some((_, s)) if score > s => {}
            _ => best = Some((h, score)),
        }
    }
    let Some((h_star, _)) = best else {
        return Err(Error::AllCandidatesFailed);
    };
    Ok((
        h_star,
        CvCurve {
            candidates,
            scores,
        },
    ))
}

/// Subject fold labels from a seeded shuffle.
fn fold_labels(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed_f01d);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut labels = vec![0usize; n];
    for (pos, &subj) in order.iter().enumerate() {
        labels[subj] = pos % folds;
    }
    labels
}

/// Smoothed covariances for every (fold, time): the fit side excludes the
/// fold, the score side holds only the fold.
struct FoldCovariances {
    /// `[fold][time]`, `None` where the window degenerates.
    train: Vec<Vec<Option<SmoothedCovariance>>>,
    validate: Vec<Vec<Option<SmoothedCovariance>>>,
}

fn fold_covariances(
    data: &PanelDataset,
    labels: &[usize],
    folds: usize,
    times: &[f64],
    spec: &KernelSpec,
    center: bool,
    d: usize,
) -> Result<FoldCovariances> {
    let build = |mask: Vec<bool>| -> Result<Vec<Option<SmoothedCovariance>>> {
        let n_in = mask.iter().filter(|&&b| b).count();
        if n_in < 2 {
            return Ok(vec![None; times.len()]);
        }
        let covs: Vec<Option<SmoothedCovariance>> = match data.design() {
            Design::Common => {
                let m = CommonMoments::with_subjects(data, Some(&mask))?;
                times
                    .iter()
                    .map(|&t| m.cov(t, spec, d, None).ok())
                    .collect()
            }
            Design::Irregular => {
                let v = PooledView::with_subjects(data, Some(&mask));
                times
                    .iter()
                    .map(|&t| v.cov(t, spec, center, d, None).ok())
                    .collect()
            }
        };
        Ok(covs)
    };

    let mut train = Vec::with_capacity(folds);
    let mut validate = Vec::with_capacity(folds);
    for f in 0..folds {
        let in_fold: Vec<bool> = labels.iter().map(|&l| l == f).collect();
        let out_fold: Vec<bool> = labels.iter().map(|&l| l != f).collect();
        train.push(build(out_fold)?);
        validate.push(build(in_fold)?);
    }
    Ok(FoldCovariances { train, validate })
}

fn explained(u: &StiefelPoint, s: &SmoothedCovariance) -> f64 {
    u.matrix().dot(&(&s.s * u.matrix()))
}

/// Default rho candidates: zero plus log-spaced values scaled by the
/// largest covariance magnitude at the tuning times.
fn default_rhos(
    data: &PanelDataset,
    h_star: f64,
    family: KernelFamily,
    center: bool,
    d: usize,
    times: &[f64],
) -> Result<Vec<f64>> {
    let spec = KernelSpec::new(family, h_star)?;
    let mut scale = 0.0f64;
    for &t in times {
        let cov = match data.design() {
            Design::Common => crate::smooth::smooth_cov_common(data, t, &spec, d),
            Design::Irregular => crate::smooth::smooth_cov_pooled(data, t, &spec, center, d),
        };
        if let Ok(cov) = cov {
            scale = scale.max(cov.s.iter().fold(0.0f64, |m, &x| m.max(x.abs())));
        }
    }
    if scale <= 0.0 {
        scale = 1.0;
    }
    let mut out = vec![0.0];
    out.extend(log_spaced(1e-3 * scale, scale, 8));
    Ok(out)
}

/// k-fold selection of the sparsity level at the chosen bandwidth,
/// maximizing the cross-validated inner product averaged over `times`.
/// Ties break toward the larger (sparser) candidate.
pub fn select_rho(
    data: &PanelDataset,
    h_star: f64,
    grids: &TuningGrids,
    d: usize,
    family: KernelFamily,
    center: bool,
    times: &[f64],
    seed: u64,
) -> Result<(f64, CvCurve)> {
    grids.validate()?;
    let mut candidates = if grids.rhos.is_empty() {
        default_rhos(data, h_star, family, center, d, times)?
    } else {
        grids.rhos.clone()
    };
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let spec = KernelSpec::new(family, h_star)?;
    let labels = fold_labels(data.n(), grids.folds, seed);
    let covs = fold_covariances(data, &labels, grids.folds, times, &spec, center, d)?;

    let tasks: Vec<(usize, usize)> = (0..grids.folds)
        .flat_map(|f| (0..times.len()).map(move |ti| (f, ti)))
        .collect();
    let eval_task = |&(f, ti): &(usize, usize)| -> Option<Vec<f64>> {
        let train = covs.train[f][ti].as_ref()?;
        let val = covs.validate[f][ti].as_ref()?;
        let solver = cv_solver();
        let mut warm: Option<StiefelPoint> = None;
        let mut scores = Vec::with_capacity(candidates.len());
        for &rho in &candidates {
            match initial_estimate(train, d, rho, &solver, warm.as_ref()) {
                Ok((u, _)) => {
                    let sc = explained(&u, val);
                    scores.push(if sc.is_finite() { sc } else { f64::NEG_INFINITY });
                    warm = Some(u);
                }
                Err(_) => scores.push(f64::NEG_INFINITY),
            }
        }
        Some(scores)
    };

    #[cfg(feature = "parallel")]
    let per_task: Vec<Option<Vec<f64>>> = tasks.par_iter().map(eval_task).collect();
    #[cfg(not(feature = "parallel"))]
    let per_task: Vec<Option<Vec<f64>>> = tasks.iter().map(eval_task).collect();

    let mut totals = vec![0.0f64; candidates.len()];
    let mut used = 0usize;
    for scores in per_task.into_iter().flatten() {
        for (tot, s) in totals.iter_mut().zip(&scores) {
            *tot += s;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllCandidatesFailed);
    }
    for tot in &mut totals {
        *tot /= used as f64;
    }

    let mut best: Option<(f64, f64)> = None;
    for (&rho, &score) in candidates.iter().zip(&totals) {
        if !score.is_finite() {
            continue;
        }
        match best {
            // ascending candidates: `>=` keeps the larger rho on ties
            Some((_, s)) if score < s => {}
            _ => best = Some((rho, score)),
        }
    }
    let Some((rho_star, _)) = best else {
        return Err(Error::AllCandidatesFailed);
    };
    Ok((
        rho_star,
        CvCurve {
            candidates,
            scores: totals,
        },
    ))
}

/// Default gamma candidates: zero plus the deciles of the initial fit's
/// projection diagonal at the tuning times.
fn default_gammas(
    data: &PanelDataset,
    h_star: f64,
    rho_star: f64,
    family: KernelFamily,
    center: bool,
    d: usize,
    times: &[f64],
) -> Result<Vec<f64>> {
    let spec = KernelSpec::new(family, h_star)?;
    let solver = cv_solver();
    let mut diag: Vec<f64> = Vec::new();
    for &t in times {
        let cov = match data.design() {
            Design::Common => crate::smooth::smooth_cov_common(data, t, &spec, d),
            Design::Irregular => crate::smooth::smooth_cov_pooled(data, t, &spec, center, d),
        };
        if let Ok(cov) = cov {
            if let Ok((u, _)) = initial_estimate(&cov, d, rho_star, &solver, None) {
                diag.extend(u.projection_diagonal());
            }
        }
    }
    // deciles of the positive part; exactly-zero rows of a sparse initial
    // fit would otherwise collapse the quantiles
    diag.retain(|&v| v > 1e-8);
    if diag.is_empty() {
        return Err(Error::AllCandidatesFailed);
    }
    diag.sort_by(f64::total_cmp);
    let mut out = vec![0.0];
    for q in 1..=9 {
        let idx = ((q as f64 / 10.0) * (diag.len() - 1) as f64).round() as usize;
        out.push(diag[idx]);
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    // bridge wide multiplicative gaps (noise band vs signal band) with
    // geometric midpoints so the grid can separate the two
    let mut bridged = out.clone();
    for w in out.windows(2) {
        if w[0] > 0.0 && w[1] / w[0] > 3.0 {
            bridged.push((w[0] * w[1]).sqrt());
        }
    }
    bridged.sort_by(f64::total_cmp);
    bridged.dedup();
    Ok(bridged)
}

/// Threshold selection: computes `Ip(gamma)` and the retained-variable
/// count per candidate, then keeps the largest gamma whose explained
/// variance stays within `1 - epsilon` of the curve's best value (with
/// `Ip(0)` as a floor for the reference).
pub fn select_gamma(
    data: &PanelDataset,
    h_star: f64,
    rho_star: f64,
    grids: &TuningGrids,
    d: usize,
    family: KernelFamily,
    center: bool,
    times: &[f64],
    seed: u64,
) -> Result<(f64, CvCurve, CvCurve)> {
    grids.validate()?;
    let mut candidates = if grids.gammas.is_empty() {
        default_gammas(data, h_star, rho_star, family, center, d, times)?
    } else {
        grids.gammas.clone()
    };
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let spec = KernelSpec::new(family, h_star)?;
    let labels = fold_labels(data.n(), grids.folds, seed);
    let covs = fold_covariances(data, &labels, grids.folds, times, &spec, center, d)?;

    let tasks: Vec<(usize, usize)> = (0..grids.folds)
        .flat_map(|f| (0..times.len()).map(move |ti| (f, ti)))
        .collect();
    // per candidate: (Ip contribution, support size); plus the gamma = 0
    // reference
    let eval_task = |&(f, ti): &(usize, usize)| -> Option<(Vec<(f64, f64)>, f64)> {
        let train = covs.train[f][ti].as_ref()?;
        let val = covs.validate[f][ti].as_ref()?;
        let solver = cv_solver();
        let (u0, _) = initial_estimate(train, d, rho_star, &solver, None).ok()?;

        let score_at = |gamma: f64| -> Option<(f64, usize)> {
            let support = threshold_support(&u0, gamma).ok()?;
            if support.len() < d {
                return None;
            }
            let (u, _) = refine(train, &support, d, rho_star, &solver, Some(&u0)).ok()?;
            Some((explained(&u, val), support.len()))
        };

        let reference = score_at(0.0)?.0;
        let mut per_candidate = Vec::with_capacity(candidates.len());
        for &gamma in &candidates {
            match score_at(gamma) {
                Some((ip, size)) => per_candidate.push((ip, size as f64)),
                None => per_candidate.push((f64::NEG_INFINITY, f64::NAN)),
            }
        }
        Some((per_candidate, reference))
    };

    #[cfg(feature = "parallel")]
    let per_task: Vec<Option<(Vec<(f64, f64)>, f64)>> =
        tasks.par_iter().map(eval_task).collect();
    #[cfg(not(feature = "parallel"))]
    let per_task: Vec<Option<(Vec<(f64, f64)>, f64)>> = tasks.iter().map(eval_task).collect();

    let mut ip = vec![0.0f64; candidates.len()];
    let mut size = vec![0.0f64; candidates.len()];
    let mut reference = 0.0f64;
    let mut used = 0usize;
    for (scores, r) in per_task.into_iter().flatten() {
        for (k, (i, s)) in scores.into_iter().enumerate() {
            ip[k] += i;
            size[k] += s;
        }
        reference += r;
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllCandidatesFailed);
    }
    for v in ip.iter_mut().chain(size.iter_mut()) {
        *v /= used as f64;
    }
    reference /= used as f64;

    let best_score = ip
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(reference, f64::max);
    let bound = (1.0 - grids.epsilon_gamma) * best_score;
    let mut gamma_star: Option<f64> = None;
    for (&gamma, &score) in candidates.iter().zip(&ip) {
        if score.is_finite() && score >= bound {
            gamma_star = Some(gamma); // ascending scan keeps the largest
        }
    }
    let gamma_star = match gamma_star {
        Some(g) => g,
        None => *candidates
            .iter()
            .zip(&ip)
            .filter(|(_, s)| s.is_finite())
            .map(|(g, _)| g)
            .next()
            .ok_or(Error::AllCandidatesFailed)?,
    };
    Ok((
        gamma_star,
        CvCurve {
            candidates: candidates.clone(),
            scores: ip,
        },
        CvCurve {
            candidates,
            scores: size,
        },
    ))
}

/// Run the three tuning stages in order and collect the report.
pub fn tune_sequential(
    data: &PanelDataset,
    grids: &TuningGrids,
    d: usize,
    family: KernelFamily,
    center: bool,
    seed: u64,
    mode: TuningMode<'_>,
) -> Result<TuningReport> {
    let (h_star, bandwidth_curve) = select_bandwidth(data, grids, d, family, center, seed)?;
    match mode {
        TuningMode::Shared => {
            let times = grids.tuning_times_or_default();
            let (rho_star, rho_curve) =
                select_rho(data, h_star, grids, d, family, center, &times, seed)?;
            let (gamma_star, ip_curve, size_curve) = select_gamma(
                data, h_star, rho_star, grids, d, family, center, &times, seed,
            )?;
            Ok(TuningReport {
                h_star,
                bandwidth_curve,
                rho_star: ParamSchedule::Constant(rho_star),
                rho_curves: vec![rho_curve],
                gamma_star: ParamSchedule::Constant(gamma_star),
                ip_curves: vec![ip_curve],
                support_size_curves: vec![size_curve],
                tuning_times: times,
                shared: true,
                seed,
            })
        }
        TuningMode::PerGridPoint(grid) => {
            let mut rho_values = Vec::with_capacity(grid.len());
            let mut gamma_values = Vec::with_capacity(grid.len());
            let mut rho_curves = Vec::with_capacity(grid.len());
            let mut ip_curves = Vec::with_capacity(grid.len());
            let mut size_curves = Vec::with_capacity(grid.len());
            for &t in grid {
                let times = [t];
                let (rho_t, rho_curve) =
                    select_rho(data, h_star, grids, d, family, center, &times, seed)?;
                let (gamma_t, ip_curve, size_curve) = select_gamma(
                    data, h_star, rho_t, grids, d, family, center, &times, seed,
                )?;
                rho_values.push(rho_t);
                gamma_values.push(gamma_t);
                rho_curves.push(rho_curve);
                ip_curves.push(ip_curve);
                size_curves.push(size_curve);
            }
            Ok(TuningReport {
                h_star,
                bandwidth_curve,
                rho_star: ParamSchedule::PerGridPoint(rho_values),
                rho_curves,
                gamma_star: ParamSchedule::PerGridPoint(gamma_values),
                ip_curves,
                support_size_curves: size_curves,
                tuning_times: grid.to_vec(),
                shared: false,
                seed,
            })
        }
    }
}
