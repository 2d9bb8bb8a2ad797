//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities. Run with
//! `cargo test -p dynpca --test acceptance -- --nocapture` to see them all.

use dynpca::estimator::{
    default_grid, fit_trajectory, initial_estimate, subspace_distance, DimensionRule, DpcaConfig,
    ParamSchedule,
};
use dynpca::kernel::{local_linear_weights, KernelFamily, KernelSpec};
use dynpca::manpg::{
    lipschitz_estimate, manpg_solve, smooth_grad, solve_subproblem, ManPgParams, SsnParams,
};
use dynpca::sim::{
    generate_panel, integrated_squared_error, tpr_tnr, FitStage, SamplingDesign, SimDesign,
    StudyConfig,
};
use dynpca::smooth::{smooth_mean, CommonMoments, PanelDataset, Subject};
use dynpca::stiefel::{retract_exp, StiefelPoint, TangentDirection};
use dynpca::tuning::{
    select_bandwidth, select_gamma, tune_sequential, TuningGrids, TuningMode,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn random_matrix(rng: &mut ChaCha12Rng, p: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, d, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

fn random_symmetric(rng: &mut ChaCha12Rng, p: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, p, p);
    (&a + a.transpose()) * 0.5
}

fn random_stiefel(rng: &mut ChaCha12Rng, p: usize, d: usize) -> StiefelPoint {
    StiefelPoint::new(random_matrix(rng, p, d).qr().q()).unwrap()
}

fn random_tangent(rng: &mut ChaCha12Rng, u: &StiefelPoint) -> TangentDirection {
    let (p, d) = (u.p(), u.d());
    let raw = random_matrix(rng, d, d);
    let skew = (&raw - raw.transpose()) * 0.5;
    let z = random_matrix(rng, p, d);
    let dir = u.matrix() * skew + &z - u.matrix() * (u.matrix().transpose() * &z);
    TangentDirection::at(u, dir).unwrap()
}

fn sorted_eigen(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let p = s.nrows();
    let eig = s.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (
        order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]),
    )
}

fn frame_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = a.ncols() as f64;
    (d - (a.transpose() * b).norm_squared()).max(0.0).sqrt()
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Criterion 1: with rho = 0 the solver recovers the dense top-d eigenspace
/// to distance 1e-6 on 50 random instances with eigengap >= 1e-3.
#[test]
fn c01_eigensolver_oracle_equivalence() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let mut done = 0usize;
    let mut worst = 0.0f64;
    while done < 50 {
        let p = 5 + (rng.random::<u64>() % 16) as usize; // 5..=20
        let d = 1 + (rng.random::<u64>() % 3) as usize;
        let s = random_symmetric(&mut rng, p) * 2.0;
        let (vals, vecs) = sorted_eigen(&s);
        let gap = vals[d - 1] - vals[d];
        if gap < 1e-3 {
            continue;
        }
        let u0 = random_stiefel(&mut rng, p, d);
        let t = 1.0 / lipschitz_estimate(&s);
        let params = ManPgParams {
            tol_d: Some((1e-6 * t * gap).max(1e-9)),
            max_outer: 300_000,
            ssn: SsnParams {
                tol_e: 1e-13,
                ..Default::default()
            },
            ..Default::default()
        };
        let (u, trace) = manpg_solve(&s, 0.0, &u0, &params).unwrap();
        assert_eq!(
            trace.status,
            dynpca::manpg::SolveStatus::Converged,
            "instance {done} did not converge (gap {gap:.3e})"
        );
        let truth = vecs.columns(0, d).into_owned();
        let dist = frame_distance(u.matrix(), &truth);
        worst = worst.max(dist);
        assert!(
            dist <= 1e-6,
            "instance {done}: distance {dist:.3e} (gap {gap:.3e})"
        );
        done += 1;
    }
    println!("criterion 01 eigensolver-oracle-equivalence: PASS (50 instances, worst distance {worst:.3e})");
}

/// Criterion 2: 200 solver runs log monotone sufficient decrease and keep
/// iterates feasible.
#[test]
fn c02_descent_and_feasibility() {
    let mut rng = ChaCha12Rng::seed_from_u64(102);
    let rhos = [0.0, 0.1, 1.0];
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_drift = 0.0f64;
    for run in 0..200 {
        let p = 5 + (rng.random::<u64>() % 16) as usize;
        let d = 1 + (rng.random::<u64>() % 3.min(p as u64 - 1)) as usize;
        let s = random_symmetric(&mut rng, p) * 3.0;
        let u0 = random_stiefel(&mut rng, p, d);
        let rho = rhos[run % 3];
        let (u, trace) = manpg_solve(&s, rho, &u0, &ManPgParams::default()).unwrap();

        let mut prev = trace.initial_objective;
        for rec in &trace.records {
            let violation = rec.objective - (prev - 1e-4 * rec.alpha * rec.d_norm * rec.d_norm);
            max_violation = max_violation.max(violation);
            assert!(
                violation <= 1e-10,
                "run {run}: decrease test violated by {violation:.3e}"
            );
            prev = rec.objective;
        }
        let drift = (u.matrix().transpose() * u.matrix() - DMatrix::<f64>::identity(d, d)).norm();
        max_drift = max_drift.max(drift);
        assert!(drift <= 1e-8, "run {run}: drift {drift:.3e}");
    }
    println!(
        "criterion 02 descent-and-feasibility: PASS (200 runs, max logged violation {max_violation:.3e}, max drift {max_drift:.3e})"
    );
}

/// Criterion 3: the semi-smooth Newton subproblem matches a slow projected
/// subgradient oracle to 1e-4 on 20 instances with p <= 6, d = 1.
#[test]
fn c03_subproblem_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let p = 4 + (inst % 3); // 4..=6
        let s = random_symmetric(&mut rng, p);
        let u = random_stiefel(&mut rng, p, 1);
        let grad = smooth_grad(&s, &u).unwrap();
        let t = 1.0 / lipschitz_estimate(&s);
        let rho = 0.2;
        let sol = solve_subproblem(&u, &grad, t, rho, &SsnParams::default(), None).unwrap();

        // projected subgradient on the strongly convex subproblem:
        // step 2t/(k+1), iterate averaging weighted by k
        let uvec = u.matrix().column(0).into_owned();
        let gvec = DVector::from_column_slice(grad.column(0).as_slice());
        let project = |x: &DVector<f64>| x - &uvec * uvec.dot(x);
        let mut dvec = DVector::<f64>::zeros(p);
        let mut avg = DVector::<f64>::zeros(p);
        let mut weight_sum = 0.0f64;
        let iters = 1_000_000usize;
        for k in 1..=iters {
            let mut sub = &gvec + &dvec / t;
            for j in 0..p {
                let point = uvec[j] + dvec[j];
                sub[j] += rho
                    * if point > 0.0 {
                        1.0
                    } else if point < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
            }
            let eta = 2.0 * t / (k as f64 + 1.0);
            dvec = project(&(dvec - sub * eta));
            let w = k as f64;
            avg = avg * (weight_sum / (weight_sum + w)) + &dvec * (w / (weight_sum + w));
            weight_sum += w;
        }
        let gap = (DMatrix::from_column_slice(p, 1, avg.as_slice()) - &sol.direction).norm();
        worst = worst.max(gap);
        assert!(gap <= 1e-4, "instance {inst}: oracle gap {gap:.3e}");
    }
    println!("criterion 03 subproblem-oracle: PASS (20 instances, worst gap {worst:.3e})");
}

/// Criterion 4: local linear weight identities on 1000 random windows and
/// exact affine reproduction of the smoothed mean.
#[test]
fn c04_weight_identities() {
    let mut rng = ChaCha12Rng::seed_from_u64(104);
    let mut checked = 0usize;
    while checked < 1000 {
        let count = 5 + (rng.random::<u64>() % 60) as usize;
        let times: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
        let t = rng.random::<f64>();
        let h = 0.05 + 0.45 * rng.random::<f64>();
        let spec = KernelSpec::epanechnikov(h).unwrap();
        let Ok(w) = local_linear_weights(&times, t, &spec) else {
            continue;
        };
        let sum: f64 = w.weights.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-10, "weight sum {sum}");
        let m1: f64 = w
            .weights
            .iter()
            .zip(&times)
            .map(|(wi, ti)| wi * (ti - t))
            .sum();
        let scale: f64 = w
            .weights
            .iter()
            .zip(&times)
            .map(|(wi, ti)| (wi * (ti - t)).abs())
            .sum::<f64>()
            .max(1.0);
        assert!(m1.abs() <= 1e-10 * scale, "first moment {m1}");
        checked += 1;
    }

    // noiseless affine data reproduced exactly at interior and boundary
    let p = 3;
    let (a, b) = (0.8, -1.7);
    let subjects: Vec<Subject> = (0..4)
        .map(|i| {
            let times: Vec<f64> = (0..12).map(|l| (l as f64 + 0.3 * i as f64) / 12.5).collect();
            let values = DMatrix::from_fn(p, 12, |j, l| a + b * times[l] + j as f64);
            Subject {
                id: format!("s{i}"),
                times,
                values,
            }
        })
        .collect();
    let data = PanelDataset::new(subjects, None).unwrap();
    let spec = KernelSpec::epanechnikov(0.3).unwrap();
    let mut worst = 0.0f64;
    for &t in &[0.0, 0.2, 0.5, 0.8, 1.0] {
        let mu = smooth_mean(&data, t, &spec).unwrap();
        for j in 0..p {
            let err = (mu[j] - (a + b * t + j as f64)).abs();
            worst = worst.max(err);
            assert!(err <= 1e-10, "affine reproduction error {err:.3e} at t = {t}");
        }
    }
    println!("criterion 04 weight-identities: PASS (1000 windows, affine error {worst:.3e})");
}

/// Criterion 5: the projection distance equals the principal-angle formula
/// and respects its bounds.
#[test]
fn c05_distance_vs_principal_angles() {
    let mut rng = ChaCha12Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = 4 + (rng.random::<u64>() % 9) as usize;
        let d = 1 + (rng.random::<u64>() % 3.min(p as u64 / 2)) as usize;
        let a = random_stiefel(&mut rng, p, d);
        let b = random_stiefel(&mut rng, p, d);
        let dist = subspace_distance(&a.projection(), &b.projection()).unwrap();
        let svd = (a.matrix().transpose() * b.matrix()).svd(false, false);
        let sin_sq: f64 = svd
            .singular_values
            .iter()
            .map(|&c| {
                let c = c.min(1.0);
                1.0 - c * c
            })
            .sum();
        let err = (dist - sin_sq.sqrt()).abs();
        worst = worst.max(err);
        assert!(err <= 1e-10, "principal-angle mismatch {err:.3e}");
        assert!(dist >= 0.0 && dist <= (d as f64).sqrt() + 1e-12);
    }
    println!("criterion 05 distance-vs-principal-angles: PASS (100 pairs, worst mismatch {worst:.3e})");
}

/// Criterion 6: first-order agreement of the retraction decays
/// quadratically (ratio 50..200 per alpha decade) and Retr(0) = U exactly.
#[test]
fn c06_retraction_order() {
    let mut rng = ChaCha12Rng::seed_from_u64(106);
    let mut ratios: Vec<f64> = Vec::new();
    for _ in 0..20 {
        let p = 5 + (rng.random::<u64>() % 8) as usize;
        let d = 1 + (rng.random::<u64>() % 3) as usize;
        let u = random_stiefel(&mut rng, p, d);
        let raw = random_tangent(&mut rng, &u);
        let unit = TangentDirection::at(&u, raw.matrix() / raw.matrix().norm()).unwrap();

        assert_eq!(retract_exp(&u, &unit, 0.0).unwrap().matrix(), u.matrix());

        let err = |alpha: f64| {
            let r = retract_exp(&u, &unit, alpha).unwrap();
            (r.matrix() - (u.matrix() + unit.matrix() * alpha)).norm()
        };
        let (e2, e3, e4) = (err(1e-2), err(1e-3), err(1e-4));
        for ratio in [e2 / e3, e3 / e4] {
            assert!(
                (50.0..=200.0).contains(&ratio),
                "decay ratio {ratio} outside [50, 200]"
            );
            ratios.push(ratio);
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("criterion 06 retraction-order: PASS (20 tangents, mean decay ratio {mean:.1})");
}

fn table_study(design: &SimDesign) -> dynpca::sim::StudyResult {
    let kernel = KernelSpec::epanechnikov(0.1).unwrap();
    let mut dpca = DpcaConfig::new(kernel, DimensionRule::Fixed(3));
    dpca.grid = default_grid(100);
    dpca.center = false;
    dynpca::sim::run_study(
        design,
        &StudyConfig {
            dpca,
            tuning: Some(TuningGrids::default()),
        },
    )
    .unwrap()
}

/// Criterion 7: the common-design error cell at reduced scale, with the
/// sampling-frequency ordering and a fast smoke variant.
#[test]
fn c07_common_design_error_cell() {
    let mut design = SimDesign::common(100, 100, 100);
    design.sigma2 = 1.0;
    design.seed = 2026_08;
    design.replications = 20;
    let study_m100 = table_study(&design);
    assert_eq!(study_m100.successes(), 20);

    let mut sparse = design.clone();
    sparse.sampling = SamplingDesign::Common { m: 20 };
    let study_m20 = table_study(&sparse);
    assert_eq!(study_m20.successes(), 20);

    let mise = study_m100.mise_refined;
    assert!(
        (0.005..=0.08).contains(&mise),
        "refined MISE {mise:.4} outside [0.005, 0.08]"
    );
    assert!(
        study_m100.mise_refined <= study_m100.mise_initial + 0.005,
        "refined {:.4} worse than initial {:.4} beyond 0.005",
        study_m100.mise_refined,
        study_m100.mise_initial
    );
    assert!(
        study_m100.mise_refined < study_m20.mise_refined,
        "expected MISE(m=100) {:.4} < MISE(m=20) {:.4}",
        study_m100.mise_refined,
        study_m20.mise_refined
    );

    // smoke variant
    let mut smoke = SimDesign::common(50, 50, 50);
    smoke.sigma2 = 1.0;
    smoke.seed = 2026_09;
    smoke.replications = 10;
    let study_smoke = table_study(&smoke);
    assert!(
        study_smoke.mise_refined < 0.1,
        "smoke MISE {:.4} not below 0.1",
        study_smoke.mise_refined
    );

    println!(
        "criterion 07 common-design-error-cell: PASS (MISE0 {:.4} (sd {:.4}), MISE {:.4} (sd {:.4}); m=20 MISE {:.4}; smoke MISE {:.4})",
        study_m100.mise_initial,
        study_m100.sd_initial,
        study_m100.mise_refined,
        study_m100.sd_refined,
        study_m20.mise_refined,
        study_smoke.mise_refined
    );
}

/// Criterion 8: pooling across more subjects beats more observations per
/// subject at equal total size (irregular settings 3 vs 4).
#[test]
fn c08_irregular_pooling_pattern() {
    let mut setting3 = SimDesign::irregular_setting(3, 100).unwrap();
    setting3.sigma2 = 1.0;
    setting3.seed = 2026_10;
    setting3.replications = 10;
    let study3 = table_study(&setting3);
    assert_eq!(study3.successes(), 10);

    let mut setting4 = SimDesign::irregular_setting(4, 100).unwrap();
    setting4.sigma2 = 1.0;
    setting4.seed = 2026_10;
    setting4.replications = 10;
    let study4 = table_study(&setting4);
    assert_eq!(study4.successes(), 10);

    assert!(
        study4.mise_refined < study3.mise_refined,
        "expected setting-4 MISE {:.4} < setting-3 MISE {:.4}",
        study4.mise_refined,
        study3.mise_refined
    );
    println!(
        "criterion 08 irregular-pooling-pattern: PASS (setting 3 MISE {:.4}, setting 4 MISE {:.4})",
        study3.mise_refined, study4.mise_refined
    );
}

/// Criterion 9: support recovery at high signal-to-noise, and the screening
/// advantage of a tuned threshold over gamma = 0.
#[test]
fn c09_support_recovery() {
    let mut design = SimDesign::common(100, 100, 100);
    design.sigma2 = 0.01;
    design.seed = 2026_11;
    let (data, truth) = generate_panel(&design, 0).unwrap();

    let grids = TuningGrids::default();
    let (h_star, _) =
        select_bandwidth(&data, &grids, 3, KernelFamily::Epanechnikov, false, design.seed)
            .unwrap();
    let times = [0.1, 0.3, 0.5, 0.7, 0.9];
    let (gamma_star, _, _) = select_gamma(
        &data,
        h_star,
        0.0,
        &grids,
        3,
        KernelFamily::Epanechnikov,
        false,
        &times,
        design.seed,
    )
    .unwrap();

    let kernel = KernelSpec::epanechnikov(h_star).unwrap();
    let mut config = DpcaConfig::new(kernel, DimensionRule::Fixed(3));
    config.grid = default_grid(100);
    config.center = false;
    config.gamma = ParamSchedule::Constant(gamma_star);
    let tuned = fit_trajectory(&data, &config).unwrap();
    let (tpr, tnr) = tpr_tnr(&tuned, &truth, &config.grid, 1e-6).unwrap();

    config.gamma = ParamSchedule::Constant(0.0);
    let unthresholded = fit_trajectory(&data, &config).unwrap();
    let (_, tnr0) = tpr_tnr(&unthresholded, &truth, &config.grid, 1e-6).unwrap();

    let (med_tpr, med_tnr, med_tnr0) = (median(&tpr), median(&tnr), median(&tnr0));
    assert!(med_tpr >= 0.9, "median TPR {med_tpr:.3} below 0.9");
    assert!(med_tnr >= 0.95, "median TNR {med_tnr:.3} below 0.95");
    assert!(
        med_tnr0 < med_tnr,
        "gamma = 0 TNR {med_tnr0:.3} not strictly below tuned TNR {med_tnr:.3}"
    );
    println!(
        "criterion 09 support-recovery: PASS (median TPR {med_tpr:.3}, median TNR {med_tnr:.3}, gamma=0 TNR {med_tnr0:.3}, gamma* {gamma_star:.4})"
    );
}

/// Criterion 10: tuning sanity — bandwidth near the oracle, l1 norm
/// decreasing in rho, support size nonincreasing in gamma.
#[test]
fn c10_tuning_sanity() {
    let mut design = SimDesign::common(100, 100, 100);
    design.sigma2 = 1.0;
    design.seed = 2026_12;
    let (data, truth) = generate_panel(&design, 0).unwrap();

    // (a) selected h within factor 2 of the oracle h minimizing MRSE
    let candidates = vec![0.05, 0.1, 0.2, 0.4];
    let grids = TuningGrids {
        bandwidths: candidates.clone(),
        ..Default::default()
    };
    let (h_star, _) =
        select_bandwidth(&data, &grids, 3, KernelFamily::Epanechnikov, false, design.seed)
            .unwrap();
    let moments = CommonMoments::new(&data).unwrap();
    let sampling_grid = data.common_grid().unwrap().to_vec();
    let mut h_oracle = (f64::INFINITY, f64::NAN);
    for &h in &candidates {
        let spec = KernelSpec::epanechnikov(h).unwrap();
        let mut mrse = 0.0;
        let mut count = 0usize;
        for &tl in &sampling_grid {
            if let Ok(cov) = moments.cov(tl, &spec, 3, None) {
                let mut target = truth.sigma(tl).unwrap();
                for j in 0..100 {
                    target[(j, j)] += design.sigma2;
                }
                mrse += (cov.s.clone() - &target).norm_squared() / target.norm_squared();
                count += 1;
            }
        }
        mrse /= count as f64;
        if mrse < h_oracle.0 {
            h_oracle = (mrse, h);
        }
    }
    let ratio = h_star / h_oracle.1;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "selected h {h_star} vs oracle {} (ratio {ratio:.2})",
        h_oracle.1
    );

    // (b) fitted l1 norm decreases in rho
    let spec = KernelSpec::epanechnikov(h_star).unwrap();
    let cov = moments.cov(0.5, &spec, 3, None).unwrap();
    let rhos = [0.0, 0.1, 0.3, 1.0, 3.0];
    let mut l1s = Vec::new();
    let mut warm: Option<StiefelPoint> = None;
    for &rho in &rhos {
        let (u, _) =
            initial_estimate(&cov, 3, rho, &ManPgParams::default(), warm.as_ref()).unwrap();
        l1s.push(u.matrix().iter().map(|x| x.abs()).sum::<f64>());
        warm = Some(u);
    }
    for w in l1s.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "l1 curve not nonincreasing: {l1s:?}");
    }
    assert!(
        l1s[l1s.len() - 1] < l1s[0],
        "l1 curve is constant: {l1s:?}"
    );

    // (c) retained-variable counts nonincreasing in gamma
    let times = [0.3, 0.5, 0.7];
    let (_, _, sizes) = select_gamma(
        &data,
        h_star,
        0.3,
        &TuningGrids::default(),
        3,
        KernelFamily::Epanechnikov,
        false,
        &times,
        design.seed,
    )
    .unwrap();
    for w in sizes.scores.windows(2) {
        if w[0].is_finite() && w[1].is_finite() {
            assert!(w[1] <= w[0] + 1e-9, "support sizes increase: {:?}", sizes.scores);
        }
    }

    println!(
        "criterion 10 tuning-sanity: PASS (h* {h_star}, oracle h {}, l1 {:?} decreasing, support curve nonincreasing)",
        h_oracle.1,
        l1s.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
}

/// Criterion 11: seeded runs are byte-identical.
#[test]
fn c11_determinism() {
    let mut design = SimDesign::common(50, 20, 20);
    design.sigma2 = 1.0;
    design.seed = 2026_13;
    design.replications = 2;
    let kernel = KernelSpec::epanechnikov(0.15).unwrap();
    let mut dpca = DpcaConfig::new(kernel, DimensionRule::Fixed(2));
    dpca.grid = default_grid(20);
    dpca.center = false;
    let config = StudyConfig {
        dpca,
        tuning: Some(TuningGrids {
            bandwidths: vec![0.1, 0.2],
            rhos: vec![0.0, 0.3],
            gammas: vec![0.0, 0.01],
            validation_subsample: Some(10),
            tuning_times: Some(vec![0.3, 0.7]),
            ..Default::default()
        }),
    };
    let a = dynpca::sim::run_study(&design, &config).unwrap();
    let b = dynpca::sim::run_study(&design, &config).unwrap();
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert_eq!(a.records_csv(), b.records_csv());
    assert_eq!(a.rate_curves_csv(), b.rate_curves_csv());

    let (data, _) = generate_panel(&design, 0).unwrap();
    let grids = config.tuning.clone().unwrap();
    let ra = tune_sequential(
        &data,
        &grids,
        2,
        KernelFamily::Epanechnikov,
        false,
        9,
        TuningMode::Shared,
    )
    .unwrap();
    let rb = tune_sequential(
        &data,
        &grids,
        2,
        KernelFamily::Epanechnikov,
        false,
        9,
        TuningMode::Shared,
    )
    .unwrap();
    assert_eq!(
        serde_json::to_string(&ra).unwrap(),
        serde_json::to_string(&rb).unwrap()
    );
    println!("criterion 11 determinism: PASS (study CSVs and tuning reports byte-identical)");
}
