//! Serialization of datasets, fits, tuning reports, and metrics.
//!
//! All commands build their outputs in memory first and write files only
//! after every computation has succeeded, so a nonzero exit never leaves a
//! partial file behind. Dataset floats are printed with 17 significant
//! digits so ingestion reproduces them bit for bit.

use std::fs;
use std::path::Path;

use dynpca::estimator::{GridPointFit, PointOutcome, SubspaceFit};
use dynpca::manpg::{SolveStatus, SolveTrace};
use dynpca::sim::SimDesign;
use dynpca::smooth::{Design, PanelDataset};
use dynpca::stiefel::StiefelPoint;
use dynpca::tuning::TuningReport;
use nalgebra::DMatrix;

use crate::ingest::TimeMap;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Exact round-trip float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// dataset CSV

pub fn dataset_to_wide_csv(data: &PanelDataset) -> String {
    let p = data.p();
    let mut out = String::from("subject,time");
    for j in 1..=p {
        out.push_str(&format!(",var_{j}"));
    }
    out.push('\n');
    for subject in data.subjects() {
        for (l, &t) in subject.times.iter().enumerate() {
            out.push_str(&subject.id);
            out.push(',');
            out.push_str(&fmt_f64(t));
            for j in 0..p {
                out.push(',');
                out.push_str(&fmt_f64(subject.values[(j, l)]));
            }
            out.push('\n');
        }
    }
    out
}

pub fn dataset_to_long_csv(data: &PanelDataset) -> String {
    let p = data.p();
    let mut out = String::from("subject,time,variable,value\n");
    for subject in data.subjects() {
        for (l, &t) in subject.times.iter().enumerate() {
            for j in 0..p {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    subject.id,
                    fmt_f64(t),
                    j + 1,
                    fmt_f64(subject.values[(j, l)])
                ));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// ground-truth sidecar

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct TruthSidecar {
    pub schema_version: u32,
    pub kind: String,
    pub p: usize,
    pub n: usize,
    pub design: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_support: Option<Vec<usize>>,
    pub sigma2: f64,
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub replication: usize,
}

impl TruthSidecar {
    pub fn from_design(design: &SimDesign, replication: usize) -> Self {
        let (kind_name, m, m_support) = match &design.sampling {
            dynpca::sim::SamplingDesign::Common { m } => ("common".to_string(), Some(*m), None),
            dynpca::sim::SamplingDesign::Irregular { m_support } => {
                ("irregular".to_string(), None, Some(m_support.clone()))
            }
        };
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "dynpca.truth".into(),
            p: design.p,
            n: design.n,
            design: kind_name,
            m,
            m_support,
            sigma2: design.sigma2,
            lambda: design.lambda.clone(),
            seed: design.seed,
            replication,
        }
    }

    pub fn ground_truth(&self) -> dynpca::sim::GroundTruth {
        dynpca::sim::GroundTruth {
            p: self.p,
            lambda: self.lambda.clone(),
            sigma2: self.sigma2,
        }
    }
}

// ---------------------------------------------------------------------------
// fit JSON

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct FitJson {
    pub schema_version: u32,
    pub kind: String,
    pub p: usize,
    pub kernel_family: String,
    pub bandwidth: f64,
    pub center: bool,
    pub time_map: TimeMap,
    pub points: Vec<FitPointJson>,
}

/// One grid point; `u` and `u_initial` hold 1-based `(row, col, value)`
/// triplets of the refined and initial frames.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct FitPointJson {
    pub t: f64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigengap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
    #[serde(default)]
    pub gamma_fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_solver_status: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_solver_status: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u_initial: Vec<(usize, usize, f64)>,
}

fn status_name(status: SolveStatus) -> String {
    match status {
        SolveStatus::Converged => "converged".into(),
        SolveStatus::MaxIter => "max-iterations".into(),
        SolveStatus::LineSearchStall => "line-search-stall".into(),
    }
}

fn sparse_triplets(u: &StiefelPoint) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for r in 0..u.p() {
        for c in 0..u.d() {
            let v = u.matrix()[(r, c)];
            if v != 0.0 {
                out.push((r + 1, c + 1, v));
            }
        }
    }
    out
}

pub fn fit_to_json(
    fit: &SubspaceFit,
    rho_at: impl Fn(usize) -> f64,
    gamma_at: impl Fn(usize) -> f64,
    p: usize,
    kernel_family: &str,
    bandwidth: f64,
    center: bool,
    time_map: TimeMap,
) -> FitJson {
    let points = fit
        .points
        .iter()
        .enumerate()
        .map(|(idx, outcome)| match outcome {
            PointOutcome::Fitted(point) => FitPointJson {
                t: point.t,
                status: "ok".into(),
                reason: None,
                d: Some(point.d),
                rho: Some(rho_at(idx)),
                gamma: Some(gamma_at(idx)),
                eigengap: Some(point.eigengap),
                support: Some(point.support.iter().map(|j| j + 1).collect()),
                gamma_fallback: point.gamma_fallback,
                initial_solver_status: Some(status_name(point.initial_trace.status)),
                refine_solver_status: Some(status_name(point.refine_trace.status)),
                warnings: point.warnings.clone(),
                u: sparse_triplets(&point.refined),
                u_initial: sparse_triplets(&point.initial),
            },
            PointOutcome::Skipped { t, reason } => FitPointJson {
                t: *t,
                status: "skipped".into(),
                reason: Some(reason.clone()),
                d: None,
                rho: None,
                gamma: None,
                eigengap: None,
                support: None,
                gamma_fallback: false,
                initial_solver_status: None,
                refine_solver_status: None,
                warnings: Vec::new(),
                u: Vec::new(),
                u_initial: Vec::new(),
            },
        })
        .collect();
    FitJson {
        schema_version: SCHEMA_VERSION,
        kind: "dynpca.fit".into(),
        p,
        kernel_family: kernel_family.into(),
        bandwidth,
        center,
        time_map,
        points,
    }
}

fn frame_from_triplets(
    triplets: &[(usize, usize, f64)],
    p: usize,
    d: usize,
) -> Result<StiefelPoint, CliError> {
    let mut m = DMatrix::<f64>::zeros(p, d);
    for &(r, c, v) in triplets {
        if r == 0 || c == 0 || r > p || c > d {
            return Err(CliError::Data(format!(
                "fit JSON triplet ({r}, {c}) out of range for {p} x {d}"
            )));
        }
        m[(r - 1, c - 1)] = v;
    }
    StiefelPoint::new(m).map_err(|e| CliError::Data(format!("fit JSON frame invalid: {e}")))
}

/// Rebuild the in-memory fit from its JSON form (solver traces are not
/// serialized; placeholders are used).
pub fn fit_from_json(json: &FitJson) -> Result<SubspaceFit, CliError> {
    let empty_trace = || SolveTrace {
        initial_objective: f64::NAN,
        records: Vec::new(),
        status: SolveStatus::Converged,
        final_objective: f64::NAN,
        final_d_norm: f64::NAN,
        step: f64::NAN,
    };
    let mut grid = Vec::with_capacity(json.points.len());
    let mut points = Vec::with_capacity(json.points.len());
    for point in &json.points {
        grid.push(point.t);
        if point.status == "ok" {
            let d = point
                .d
                .ok_or_else(|| CliError::Data("fitted point lacks d".into()))?;
            let refined = frame_from_triplets(&point.u, json.p, d)?;
            let initial = frame_from_triplets(&point.u_initial, json.p, d)?;
            let support = point
                .support
                .clone()
                .unwrap_or_default()
                .iter()
                .map(|j| j - 1)
                .collect();
            points.push(PointOutcome::Fitted(Box::new(GridPointFit {
                t: point.t,
                d,
                initial,
                initial_trace: empty_trace(),
                support,
                refined,
                refine_trace: empty_trace(),
                eigengap: point.eigengap.unwrap_or(f64::NAN),
                gamma_fallback: point.gamma_fallback,
                warnings: point.warnings.clone(),
            })));
        } else {
            points.push(PointOutcome::Skipped {
                t: point.t,
                reason: point.reason.clone().unwrap_or_default(),
            });
        }
    }
    Ok(SubspaceFit { grid, points })
}

/// Flat projection-diagonal table: one row per (t, variable).
pub fn pi_diagonal_csv(fit: &SubspaceFit) -> String {
    let mut out = String::from("t,variable,pi_diag\n");
    for (_, point) in fit.fitted() {
        for (j, v) in point.refined.projection_diagonal().iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", point.t, j + 1, v));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// tuning JSON + curve CSVs

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct TuningJson {
    pub schema_version: u32,
    pub kind: String,
    pub d: usize,
    pub kernel_family: String,
    pub center: bool,
    pub report: TuningReport,
}

pub fn curve_csv(header: &str, curves: &[(String, &dynpca::tuning::CvCurve)]) -> String {
    let mut out = format!("{header}\n");
    for (label, curve) in curves {
        for (c, s) in curve.candidates.iter().zip(&curve.scores) {
            out.push_str(&format!("{label},{c},{s}\n"));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// evaluation outputs

pub fn metrics_csv(ise_initial: f64, ise_refined: f64) -> String {
    format!("metric,value\nise_initial,{ise_initial}\nise_refined,{ise_refined}\n")
}

pub fn rates_csv(grid: &[f64], tpr: &[f64], tnr: &[f64]) -> String {
    let mut out = String::from("t,tpr,tnr\n");
    for ((t, a), b) in grid.iter().zip(tpr).zip(tnr) {
        out.push_str(&format!("{t},{a},{b}\n"));
    }
    out
}

pub fn design_label(data: &PanelDataset) -> &'static str {
    match data.design() {
        Design::Common => "common",
        Design::Irregular => "irregular",
    }
}
