//! Browser demo: a seeded synthetic panel held in wasm memory, with three
//! interactive operations the page can drive from sliders. Results cross
//! the boundary as JSON strings.

use dynpca::estimator::{
    default_grid, fit_trajectory, initial_estimate, refine, subspace_distance_frames,
    threshold_support, DimensionRule, DpcaConfig, ParamSchedule,
};
use dynpca::kernel::KernelSpec;
use dynpca::manpg::ManPgParams;
use dynpca::sim::{generate_panel, tpr_tnr, GroundTruth, SimDesign};
use dynpca::smooth::{smooth_cov_common, smooth_cov_pooled, Design, PanelDataset};
use wasm_bindgen::prelude::*;

fn err_to_js(err: dynpca::Error) -> JsValue {
    JsValue::from_str(&err.to_string())
}

fn covariance_at(
    data: &PanelDataset,
    t: f64,
    h: f64,
    d: usize,
) -> Result<dynpca::smooth::SmoothedCovariance, dynpca::Error> {
    let spec = KernelSpec::epanechnikov(h)?;
    match data.design() {
        Design::Common => smooth_cov_common(data, t, &spec, d),
        Design::Irregular => smooth_cov_pooled(data, t, &spec, false, d),
    }
}

/// A generated panel plus its ground truth, ready for interactive fits.
#[wasm_bindgen]
pub struct Demo {
    data: PanelDataset,
    truth: GroundTruth,
}

#[wasm_bindgen]
impl Demo {
    /// Simulate a panel: `p >= 50` variables, `n` subjects, `m` observations
    /// per subject, noise variance `sigma2`, seeded. `common` switches
    /// between the shared-grid and irregular designs.
    #[wasm_bindgen(constructor)]
    pub fn new(
        p: usize,
        n: usize,
        m: usize,
        sigma2: f64,
        seed: u32,
        common: bool,
    ) -> Result<Demo, JsValue> {
        let mut design = if common {
            SimDesign::common(p, n, m)
        } else {
            SimDesign::irregular(p, n, vec![m.saturating_sub(2).max(1), m, m + 2])
        };
        design.sigma2 = sigma2;
        design.seed = seed as u64;
        let (data, truth) = generate_panel(&design, 0).map_err(err_to_js)?;
        Ok(Demo { data, truth })
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// Leading eigenvalues of the smoothed covariance at `t`, for the
    /// spectrum panel.
    pub fn spectrum(&self, t: f64, h: f64, d: usize) -> Result<String, JsValue> {
        let cov = covariance_at(&self.data, t, h, d).map_err(err_to_js)?;
        let top: Vec<f64> = cov.eigenvalues().iter().take(10).copied().collect();
        let json = serde_json::json!({
            "t": t,
            "eigenvalues": top,
            "eigengap": cov.diagnostics.eigengap,
            "in_window": cov.diagnostics.in_window,
        });
        Ok(json.to_string())
    }

    /// Two-step fit at a single evaluation time: estimated and true
    /// projection diagonals, the retained support, and the subspace
    /// distance to the truth.
    pub fn fit_at(
        &self,
        t: f64,
        h: f64,
        rho: f64,
        gamma: f64,
        d: usize,
    ) -> Result<String, JsValue> {
        let cov = covariance_at(&self.data, t, h, d).map_err(err_to_js)?;
        let params = ManPgParams::default();
        let (initial, _) = initial_estimate(&cov, d, rho, &params, None).map_err(err_to_js)?;
        let support = match threshold_support(&initial, gamma) {
            Ok(j) if j.len() >= d => j,
            _ => threshold_support(&initial, 0.0).map_err(err_to_js)?,
        };
        let (refined, _) =
            refine(&cov, &support, d, rho, &params, Some(&initial)).map_err(err_to_js)?;

        let truth_basis = self.truth.basis(t, d).map_err(err_to_js)?;
        let distance = subspace_distance_frames(&refined, &truth_basis).map_err(err_to_js)?;
        let distance_initial =
            subspace_distance_frames(&initial, &truth_basis).map_err(err_to_js)?;
        let json = serde_json::json!({
            "t": t,
            "pi_diag": refined.projection_diagonal(),
            "pi_diag_initial": initial.projection_diagonal(),
            "true_pi_diag": self.truth.pi_diag(t, d).map_err(err_to_js)?,
            "support": support.iter().map(|j| j + 1).collect::<Vec<_>>(),
            "eigengap": cov.diagnostics.eigengap,
            "distance": distance,
            "distance_initial": distance_initial,
        });
        Ok(json.to_string())
    }

    /// Fit the whole trajectory on an equispaced grid: per-time subspace
    /// distances, support recovery rates, and the projection-diagonal
    /// heatmap.
    pub fn trajectory(
        &self,
        h: f64,
        rho: f64,
        gamma: f64,
        d: usize,
        grid_points: usize,
    ) -> Result<String, JsValue> {
        let kernel = KernelSpec::epanechnikov(h).map_err(err_to_js)?;
        let mut config = DpcaConfig::new(kernel, DimensionRule::Fixed(d));
        config.grid = default_grid(grid_points.clamp(5, 200));
        config.center = false;
        config.rho = ParamSchedule::Constant(rho);
        config.gamma = ParamSchedule::Constant(gamma);
        let fit = fit_trajectory(&self.data, &config).map_err(err_to_js)?;

        let mut distance = Vec::with_capacity(config.grid.len());
        let mut distance_initial = Vec::with_capacity(config.grid.len());
        let mut support_size = Vec::with_capacity(config.grid.len());
        let mut pi_rows: Vec<Vec<f64>> = Vec::with_capacity(config.grid.len());
        for (idx, &t) in config.grid.iter().enumerate() {
            match fit.point(idx) {
                Some(point) => {
                    let basis = self.truth.basis(t, point.d).map_err(err_to_js)?;
                    distance.push(
                        subspace_distance_frames(&point.refined, &basis).map_err(err_to_js)?,
                    );
                    distance_initial.push(
                        subspace_distance_frames(&point.initial, &basis).map_err(err_to_js)?,
                    );
                    support_size.push(point.support.len() as f64);
                    pi_rows.push(point.refined.projection_diagonal());
                }
                None => {
                    distance.push(f64::NAN);
                    distance_initial.push(f64::NAN);
                    support_size.push(f64::NAN);
                    pi_rows.push(vec![f64::NAN; self.data.p()]);
                }
            }
        }
        let (tpr, tnr) = tpr_tnr(&fit, &self.truth, &config.grid, 1e-6).map_err(err_to_js)?;

        // NaN is not valid JSON; encode gaps as nulls
        let opt = |v: Vec<f64>| -> Vec<Option<f64>> {
            v.into_iter().map(|x| x.is_finite().then_some(x)).collect()
        };
        let pi: Vec<Vec<Option<f64>>> = pi_rows.into_iter().map(opt).collect();
        let json = serde_json::json!({
            "grid": config.grid,
            "distance": opt(distance),
            "distance_initial": opt(distance_initial),
            "tpr": opt(tpr),
            "tnr": opt(tnr),
            "support_size": opt(support_size),
            "pi": pi,
        });
        Ok(json.to_string())
    }
}
