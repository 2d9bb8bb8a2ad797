//! Synthetic panel generator with sparse Fourier-basis eigenvectors, error
//! metrics against the known truth, and seeded replication studies.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::estimator::{subspace_distance_frames, DpcaConfig, SubspaceFit};
use crate::smooth::{PanelDataset, Subject};
use crate::stiefel::StiefelPoint;
use crate::tuning::{tune_sequential, TuningGrids, TuningMode};
use crate::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of generated components.
pub const TRUE_COMPONENTS: usize = 10;
/// Nonzero rows per component.
pub const BLOCK_SIZE: usize = 5;

/// Component variances `(30, 25, 20, 5, 3, 2, 1, 0.5, 0.2, 0.1)`.
pub fn default_lambda() -> Vec<f64> {
    vec![30.0, 25.0, 20.0, 5.0, 3.0, 2.0, 1.0, 0.5, 0.2, 0.1]
}

/// Sampling scheme of a synthetic panel.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SamplingDesign {
    /// Shared deterministic grid `t_l = 2l / (2m + 1)`.
    Common { m: usize },
    /// Per-subject counts drawn uniformly from `m_support`, times i.i.d.
    /// uniform on `[0, 1]`.
    Irregular { m_support: Vec<usize> },
}

/// A full synthetic study design.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimDesign {
    pub p: usize,
    pub n: usize,
    pub sampling: SamplingDesign,
    /// Measurement noise variance (constructors default to 1.0).
    pub sigma2: f64,
    /// The ten component variances, strictly positive and descending.
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub replications: usize,
}

impl SimDesign {
    pub fn common(p: usize, n: usize, m: usize) -> Self {
        Self {
            p,
            n,
            sampling: SamplingDesign::Common { m },
            sigma2: 1.0,
            lambda: default_lambda(),
            seed: 0,
            replications: 1,
        }
    }

    pub fn irregular(p: usize, n: usize, m_support: Vec<usize>) -> Self {
        Self {
            p,
            n,
            sampling: SamplingDesign::Irregular { m_support },
            sigma2: 1.0,
            lambda: default_lambda(),
            seed: 0,
            replications: 1,
        }
    }

    /// The six irregular-design settings: per-subject observation counts
    /// drawn around means 100, 50, 20 (n = 100) and 20, 10, 4 (n = 500).
    pub fn irregular_setting(setting: usize, p: usize) -> Result<Self> {
        let (n, support) = match setting {
            1 => (100, vec![95, 100, 105]),
            2 => (100, vec![45, 50, 55]),
            3 => (100, vec![15, 20, 25]),
            4 => (500, vec![19, 20, 21]),
            5 => (500, vec![9, 10, 11]),
            6 => (500, vec![3, 4, 5]),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "setting must be 1..=6, got {other}"
                )))
            }
        };
        Ok(Self::irregular(p, n, support))
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < TRUE_COMPONENTS * BLOCK_SIZE {
            return Err(Error::Dimension(format!(
                "p = {} cannot hold {} disjoint blocks of {}",
                self.p, TRUE_COMPONENTS, BLOCK_SIZE
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter("need n >= 2".into()));
        }
        if self.lambda.len() != TRUE_COMPONENTS
            || self.lambda.iter().any(|&l| !(l > 0.0))
            || self.lambda.windows(2).any(|w| w[0] < w[1])
        {
            return Err(Error::InvalidParameter(
                "lambda must be 10 strictly positive descending values".into(),
            ));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::InvalidParameter("sigma2 must be nonnegative".into()));
        }
        match &self.sampling {
            SamplingDesign::Common { m } => {
                if *m < 2 {
                    return Err(Error::InvalidParameter("need m >= 2".into()));
                }
            }
            SamplingDesign::Irregular { m_support } => {
                if m_support.is_empty() || m_support.iter().any(|&m| m == 0) {
                    return Err(Error::InvalidParameter(
                        "m_support must be nonempty and positive".into(),
                    ));
                }
            }
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("need at least 1 replication".into()));
        }
        Ok(())
    }

    /// Mean observations per subject implied by the sampling scheme.
    pub fn mean_m(&self) -> f64 {
        match &self.sampling {
            SamplingDesign::Common { m } => *m as f64,
            SamplingDesign::Irregular { m_support } => {
                m_support.iter().sum::<usize>() as f64 / m_support.len() as f64
            }
        }
    }
}

/// Fourier-pattern values on one block: `phi_r(t)`, `r = 1..=5`, odd `r`
/// mapping to `sqrt(2) sin(pi (r+1) t)` and even `r` to
/// `sqrt(2) cos(pi r t)`.
fn block_pattern(t: f64) -> [f64; BLOCK_SIZE] {
    let mut out = [0.0; BLOCK_SIZE];
    for (r0, slot) in out.iter_mut().enumerate() {
        let r = r0 + 1;
        *slot = if r % 2 == 1 {
            2f64.sqrt() * (std::f64::consts::PI * (r as f64 + 1.0) * t).sin()
        } else {
            2f64.sqrt() * (std::f64::consts::PI * r as f64 * t).cos()
        };
    }
    out
}

/// The ten true eigenvectors at time `t`: component `k` carries the Fourier
/// pattern on rows `(k-1)*5 .. k*5` and zeros elsewhere, orthonormalized by
/// Gram-Schmidt in index order (the disjoint blocks make this a pure
/// normalization).
pub fn true_eigenvectors(t: f64, p: usize) -> Result<DMatrix<f64>> {
    if p < TRUE_COMPONENTS * BLOCK_SIZE {
        return Err(Error::Dimension(format!(
            "p = {p} is too small for {TRUE_COMPONENTS} blocks of {BLOCK_SIZE}"
        )));
    }
    let pattern = block_pattern(t);
    let mut u = DMatrix::<f64>::zeros(p, TRUE_COMPONENTS);
    for k in 0..TRUE_COMPONENTS {
        for (r, &v) in pattern.iter().enumerate() {
            u[(k * BLOCK_SIZE + r, k)] = v;
        }
    }
    // modified Gram-Schmidt in index order
    for k in 0..TRUE_COMPONENTS {
        for j in 0..k {
            let proj = u.column(j).dot(&u.column(k));
            let col_j = u.column(j).into_owned();
            u.column_mut(k).axpy(-proj, &col_j, 1.0);
        }
        let norm = u.column(k).norm();
        u.column_mut(k).scale_mut(1.0 / norm);
    }
    Ok(u)
}

/// Evaluates the true subspace, projection diagonal, support, and
/// covariance at any time.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub p: usize,
    pub lambda: Vec<f64>,
    pub sigma2: f64,
}

impl GroundTruth {
    /// First `d` true eigenvectors.
    pub fn basis(&self, t: f64, d: usize) -> Result<StiefelPoint> {
        let u = true_eigenvectors(t, self.p)?;
        StiefelPoint::new(u.columns(0, d).into_owned())
    }

    /// Diagonal of the true projection onto the leading `d` components.
    pub fn pi_diag(&self, t: f64, d: usize) -> Result<Vec<f64>> {
        let u = true_eigenvectors(t, self.p)?;
        Ok((0..self.p)
            .map(|j| (0..d).map(|k| u[(j, k)] * u[(j, k)]).sum())
            .collect())
    }

    /// Variables relevant to the leading-`d` subspace at `t`, judged
    /// against `threshold` on the true projection diagonal.
    pub fn support(&self, t: f64, d: usize, threshold: f64) -> Result<Vec<usize>> {
        Ok(self
            .pi_diag(t, d)?
            .iter()
            .enumerate()
            .filter_map(|(j, &v)| if v > threshold { Some(j) } else { None })
            .collect())
    }

    /// Noise-free covariance `Sigma(t) = sum_k lambda_k u_k u_k^T`.
    pub fn sigma(&self, t: f64) -> Result<DMatrix<f64>> {
        let u = true_eigenvectors(t, self.p)?;
        let mut s = DMatrix::<f64>::zeros(self.p, self.p);
        for (k, &lam) in self.lambda.iter().enumerate() {
            let col = u.column(k);
            s.ger(lam, &col, &col, 1.0);
        }
        Ok(s)
    }
}

/// Standard normal draw by the Box-Muller transform, so streams are
/// identical across platforms.
fn gaussian(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generate one panel replication. Scores `xi_ik ~ N(0, lambda_k)` are
/// drawn once per subject and held constant over time; noise is
/// `N_p(0, sigma^2 I)`. The RNG stream is `(seed, replication)` so
/// replications are independent and reproducible in parallel.
pub fn generate_panel(design: &SimDesign, replication: usize) -> Result<(PanelDataset, GroundTruth)> {
    design.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed);
    rng.set_stream(replication as u64 + 1);

    let sigma = design.sigma2.sqrt();
    let common_grid: Option<Vec<f64>> = match &design.sampling {
        SamplingDesign::Common { m } => Some(
            (1..=*m)
                .map(|l| 2.0 * l as f64 / (2.0 * *m as f64 + 1.0))
                .collect(),
        ),
        SamplingDesign::Irregular { .. } => None,
    };

    let mut subjects = Vec::with_capacity(design.n);
    for i in 0..design.n {
        let times: Vec<f64> = match &design.sampling {
            SamplingDesign::Common { .. } => common_grid.clone().unwrap(),
            SamplingDesign::Irregular { m_support } => {
                let mi = m_support[rng.random_range(0..m_support.len())];
                let mut t: Vec<f64> = (0..mi).map(|_| rng.random::<f64>()).collect();
                t.sort_by(f64::total_cmp);
                t
            }
        };
        let scores: Vec<f64> = design
            .lambda
            .iter()
            .map(|&lam| gaussian(&mut rng) * lam.sqrt())
            .collect();
        let mut values = DMatrix::<f64>::zeros(design.p, times.len());
        for (l, &t) in times.iter().enumerate() {
            let u = true_eigenvectors(t, design.p)?;
            let mut col = values.column_mut(l);
            for k in 0..TRUE_COMPONENTS {
                col.axpy(scores[k], &u.column(k), 1.0);
            }
            if sigma > 0.0 {
                for j in 0..design.p {
                    col[j] += sigma * gaussian(&mut rng);
                }
            }
        }
        subjects.push(Subject {
            id: format!("s{i}"),
            times,
            values,
        });
    }
    let dataset = PanelDataset::new(
        subjects,
        Some(match design.sampling {
            SamplingDesign::Common { .. } => crate::smooth::Design::Common,
            SamplingDesign::Irregular { .. } => crate::smooth::Design::Irregular,
        }),
    )?;
    Ok((
        dataset,
        GroundTruth {
            p: design.p,
            lambda: design.lambda.clone(),
            sigma2: design.sigma2,
        },
    ))
}

/// Which side of the two-step fit a metric refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStage {
    Initial,
    Refined,
}

fn stage_frame<'a>(fit: &'a crate::estimator::GridPointFit, stage: FitStage) -> &'a StiefelPoint {
    match stage {
        FitStage::Initial => &fit.initial,
        FitStage::Refined => &fit.refined,
    }
}

fn check_grid(fit: &SubspaceFit, grid: &[f64]) -> Result<()> {
    if fit.grid.len() != grid.len()
        || fit
            .grid
            .iter()
            .zip(grid)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::GridMismatch(format!(
            "fit grid has {} points, evaluation grid has {}",
            fit.grid.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Integrated squared subspace distance between fit and truth: trapezoidal
/// integral of `d^2(U(t), U_hat(t))` over the grid. Intervals touching a
/// skipped point are dropped and the integral is rescaled to the covered
/// span.
pub fn integrated_squared_error(
    fit: &SubspaceFit,
    truth: &GroundTruth,
    grid: &[f64],
    stage: FitStage,
) -> Result<f64> {
    check_grid(fit, grid)?;
    let mut sq: Vec<Option<f64>> = Vec::with_capacity(grid.len());
    for (idx, &t) in grid.iter().enumerate() {
        match fit.point(idx) {
            Some(point) => {
                let truth_basis = truth.basis(t, point.d)?;
                let dist = subspace_distance_frames(stage_frame(point, stage), &truth_basis)?;
                sq.push(Some(dist * dist));
            }
            None => sq.push(None),
        }
    }
    let mut integral = 0.0;
    let mut covered = 0.0;
    for w in 0..grid.len().saturating_sub(1) {
        if let (Some(a), Some(b)) = (sq[w], sq[w + 1]) {
            let dt = grid[w + 1] - grid[w];
            integral += dt * (a + b) * 0.5;
            covered += dt;
        }
    }
    if covered > 0.0 {
        let span = grid[grid.len() - 1] - grid[0];
        Ok(integral * if span > 0.0 { span / covered } else { 1.0 })
    } else {
        // a single fitted point: fall back to its pointwise error
        let vals: Vec<f64> = sq.iter().flatten().copied().collect();
        if vals.is_empty() {
            return Err(Error::GridMismatch("no fitted grid points".into()));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Per-grid-point true/false positive classification of the refined
/// support against the true support. Entries are NaN at skipped points or
/// when a rate's denominator is empty.
pub fn tpr_tnr(
    fit: &SubspaceFit,
    truth: &GroundTruth,
    grid: &[f64],
    nz_threshold: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_grid(fit, grid)?;
    let mut tpr = Vec::with_capacity(grid.len());
    let mut tnr = Vec::with_capacity(grid.len());
    for (idx, &t) in grid.iter().enumerate() {
        let Some(point) = fit.point(idx) else {
            tpr.push(f64::NAN);
            tnr.push(f64::NAN);
            continue;
        };
        let true_diag = truth.pi_diag(t, point.d)?;
        let est_diag = point.refined.projection_diagonal();
        let (mut tp, mut fp, mut tn, mut fnn) = (0usize, 0usize, 0usize, 0usize);
        for j in 0..truth.p {
            let truth_pos = true_diag[j] > nz_threshold;
            let est_pos = est_diag[j] > nz_threshold;
            match (truth_pos, est_pos) {
                (true, true) => tp += 1,
                (true, false) => fnn += 1,
                (false, true) => fp += 1,
                (false, false) => tn += 1,
            }
        }
        tpr.push(if tp + fnn > 0 {
            tp as f64 / (tp + fnn) as f64
        } else {
            f64::NAN
        });
        tnr.push(if tn + fp > 0 {
            tn as f64 / (tn + fp) as f64
        } else {
            f64::NAN
        });
    }
    Ok((tpr, tnr))
}

/// Study-level configuration: the fit configuration plus optional
/// data-driven tuning that overrides `h`, `rho`, and `gamma` per
/// replication.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub dpca: DpcaConfig,
    pub tuning: Option<TuningGrids>,
}

/// One replication's outcome.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub ise_initial: f64,
    pub ise_refined: f64,
    pub h: f64,
    pub rho: f64,
    pub gamma: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Aggregated study output.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StudyResult {
    pub records: Vec<ReplicationRecord>,
    pub mise_initial: f64,
    pub sd_initial: f64,
    pub mise_refined: f64,
    pub sd_refined: f64,
    /// Mean TPR/TNR over replications, per grid point.
    pub tpr_mean: Vec<f64>,
    pub tnr_mean: Vec<f64>,
    pub grid: Vec<f64>,
}

impl StudyResult {
    pub fn successes(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_none()).count()
    }

    /// One-line-per-metric summary table.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("metric,mean,sd\n");
        out.push_str(&format!(
            "mise_initial,{},{}\n",
            self.mise_initial, self.sd_initial
        ));
        out.push_str(&format!(
            "mise_refined,{},{}\n",
            self.mise_refined, self.sd_refined
        ));
        out
    }

    /// Per-replication table; excludes timing so seeded runs serialize
    /// byte-identically.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("replication,ise_initial,ise_refined,h,rho,gamma,error\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.replication,
                r.ise_initial,
                r.ise_refined,
                r.h,
                r.rho,
                r.gamma,
                r.error.clone().unwrap_or_default()
            ));
        }
        out
    }

    pub fn rate_curves_csv(&self) -> String {
        let mut out = String::from("t,tpr,tnr\n");
        for ((t, tpr), tnr) in self.grid.iter().zip(&self.tpr_mean).zip(&self.tnr_mean) {
            out.push_str(&format!("{t},{tpr},{tnr}\n"));
        }
        out
    }
}

struct RepOutcome {
    record: ReplicationRecord,
    tpr: Vec<f64>,
    tnr: Vec<f64>,
}

fn run_replication(design: &SimDesign, config: &StudyConfig, rep: usize) -> RepOutcome {
    let start = std::time::Instant::now();
    let fail = |msg: String, started: std::time::Instant| RepOutcome {
        record: ReplicationRecord {
            replication: rep,
            ise_initial: f64::NAN,
            ise_refined: f64::NAN,
            h: f64::NAN,
            rho: f64::NAN,
            gamma: f64::NAN,
            seconds: started.elapsed().as_secs_f64(),
            error: Some(msg),
        },
        tpr: Vec::new(),
        tnr: Vec::new(),
    };

    let (data, truth) = match generate_panel(design, rep) {
        Ok(pair) => pair,
        Err(e) => return fail(e.to_string(), start),
    };

    let mut dpca = config.dpca.clone();
    if let Some(grids) = &config.tuning {
        let d = match dpca.dimension {
            crate::estimator::DimensionRule::Fixed(d) => d,
            crate::estimator::DimensionRule::Fve(_) => {
                return fail("tuning requires a fixed dimension".into(), start)
            }
        };
        match tune_sequential(
            &data,
            grids,
            d,
            dpca.kernel.family,
            dpca.center,
            design.seed.wrapping_add(rep as u64),
            TuningMode::Shared,
        ) {
            Ok(r) => {
                dpca.kernel = match dpca.kernel.with_bandwidth(r.h_star) {
                    Ok(k) => k,
                    Err(e) => return fail(e.to_string(), start),
                };
                dpca.rho = r.rho_star;
                dpca.gamma = r.gamma_star;
            }
            Err(e) => return fail(format!("tuning failed: {e}"), start),
        }
    }

    let fit = match crate::estimator::fit_trajectory(&data, &dpca) {
        Ok(f) => f,
        Err(e) => return fail(e.to_string(), start),
    };
    let ise_initial =
        match integrated_squared_error(&fit, &truth, &dpca.grid, FitStage::Initial) {
            Ok(v) => v,
            Err(e) => return fail(e.to_string(), start),
        };
    let ise_refined =
        match integrated_squared_error(&fit, &truth, &dpca.grid, FitStage::Refined) {
            Ok(v) => v,
            Err(e) => return fail(e.to_string(), start),
        };
    let (tpr, tnr) = match tpr_tnr(&fit, &truth, &dpca.grid, dpca.nonzero_threshold) {
        Ok(v) => v,
        Err(e) => return fail(e.to_string(), start),
    };

    let (rho, gamma) = (
        dpca.rho.at(dpca.grid.len() / 2),
        dpca.gamma.at(dpca.grid.len() / 2),
    );
    RepOutcome {
        record: ReplicationRecord {
            replication: rep,
            ise_initial,
            ise_refined,
            h: dpca.kernel.bandwidth,
            rho,
            gamma,
            seconds: start.elapsed().as_secs_f64(),
            error: None,
        },
        tpr,
        tnr,
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Run `design.replications` seeded replications (in parallel when the
/// `parallel` feature is on), recording per-replication errors and the
/// aggregated error/rate summaries. Individual failures are recorded; the
/// study fails only when every replication does.
pub fn run_study(design: &SimDesign, config: &StudyConfig) -> Result<StudyResult> {
    design.validate()?;
    config.dpca.validate(design.p)?;
    let reps = design.replications;

    #[cfg(feature = "parallel")]
    let outcomes: Vec<RepOutcome> = (0..reps)
        .into_par_iter()
        .map(|r| run_replication(design, config, r))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<RepOutcome> = (0..reps).map(|r| run_replication(design, config, r)).collect();

    let ok: Vec<&RepOutcome> = outcomes.iter().filter(|o| o.record.error.is_none()).collect();
    if ok.is_empty() {
        let first = outcomes
            .first()
            .and_then(|o| o.record.error.clone())
            .unwrap_or_default();
        return Err(Error::AllPointsFailed(format!(
            "all {reps} replications failed; first error: {first}"
        )));
    }

    let (mise_initial, sd_initial) =
        mean_sd(&ok.iter().map(|o| o.record.ise_initial).collect::<Vec<_>>());
    let (mise_refined, sd_refined) =
        mean_sd(&ok.iter().map(|o| o.record.ise_refined).collect::<Vec<_>>());

    let grid = config.dpca.grid.clone();
    let mut tpr_mean = vec![0.0f64; grid.len()];
    let mut tnr_mean = vec![0.0f64; grid.len()];
    let mut counts = vec![0usize; grid.len()];
    for o in &ok {
        for (i, (&a, &b)) in o.tpr.iter().zip(&o.tnr).enumerate() {
            if a.is_finite() && b.is_finite() {
                tpr_mean[i] += a;
                tnr_mean[i] += b;
                counts[i] += 1;
            }
        }
    }
    for i in 0..grid.len() {
        if counts[i] > 0 {
            tpr_mean[i] /= counts[i] as f64;
            tnr_mean[i] /= counts[i] as f64;
        } else {
            tpr_mean[i] = f64::NAN;
            tnr_mean[i] = f64::NAN;
        }
    }

    Ok(StudyResult {
        records: outcomes.into_iter().map(|o| o.record).collect(),
        mise_initial,
        sd_initial,
        mise_refined,
        sd_refined,
        tpr_mean,
        tnr_mean,
        grid,
    })
}
