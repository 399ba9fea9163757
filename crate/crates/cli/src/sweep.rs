//! Grid evaluation, CSV records and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use bistab_core::covariance::{cooling_factor, CoolingResult, CovarianceError, DetuningMode, MomentPoint};
use bistab_core::liouville::{
    build_generator, convergence_scan, phonon_number, steady_state, LiouvilleError, LiouvillePoint,
};
use bistab_core::manifest::RunManifest;
use bistab_core::meanfield::{linearized_reference, solve_photon_branches};
use bistab_core::stability::{classify, threshold_scan, BranchPolicy};
use bistab_core::{DynLabel, MeanFieldBranch, ParamField, PhysParams, Units};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{AxisField, BranchSelect, SweepSpec, Task};
use crate::error::CliError;

/// Columns after the swept values, in order.
pub const RECORD_COLUMNS: [&str; 12] = [
    "branch_id",
    "n",
    "g_abs",
    "margin",
    "stable",
    "nbs_exact",
    "n_rw",
    "n_arw",
    "r_c",
    "nbs_master",
    "source",
    "error",
];

pub const THRESHOLD_COLUMNS: [&str; 4] = ["field", "value", "stable_below", "source"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Linearized reference, classical nonlinearity dropped.
    Cl,
    /// A root of the full cubic.
    Cnl,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Cl => "CL",
            Source::Cnl => "CNL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    InvalidParams,
    NoBranch,
    DegenerateBranch,
    SingularDrift,
    Residual,
    Integration,
    DimensionCap,
    InvalidCutoff,
    NonConvergence,
    DegenerateKernel,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::InvalidParams => "invalid-params",
            ErrorCode::NoBranch => "no-branch",
            ErrorCode::DegenerateBranch => "degenerate-branch",
            ErrorCode::SingularDrift => "singular-drift",
            ErrorCode::Residual => "residual",
            ErrorCode::Integration => "integration",
            ErrorCode::DimensionCap => "dimension-cap",
            ErrorCode::InvalidCutoff => "invalid-cutoff",
            ErrorCode::NonConvergence => "non-convergence",
            ErrorCode::DegenerateKernel => "degenerate-kernel",
        }
    }
}

impl From<&CovarianceError> for ErrorCode {
    fn from(e: &CovarianceError) -> Self {
        match e {
            CovarianceError::SingularDrift { .. } => ErrorCode::SingularDrift,
            CovarianceError::Residual { .. } => ErrorCode::Residual,
            CovarianceError::Ode(_) => ErrorCode::Integration,
        }
    }
}

impl From<&LiouvilleError> for ErrorCode {
    fn from(e: &LiouvilleError) -> Self {
        match e {
            LiouvilleError::DimensionCap { .. } => ErrorCode::DimensionCap,
            LiouvilleError::InvalidCutoff { .. } => ErrorCode::InvalidCutoff,
            LiouvilleError::NonConvergence { .. } => ErrorCode::NonConvergence,
            LiouvilleError::DegenerateKernel { .. } => ErrorCode::DegenerateKernel,
            LiouvilleError::Ode(_) => ErrorCode::Integration,
        }
    }
}

/// One CSV row. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub swept: Vec<f64>,
    pub branch_id: Option<usize>,
    pub n: Option<f64>,
    pub g_abs: Option<f64>,
    pub margin: Option<f64>,
    pub stable: Option<bool>,
    pub nbs_exact: Option<f64>,
    pub n_rw: Option<f64>,
    pub n_arw: Option<f64>,
    pub r_c: Option<f64>,
    pub nbs_master: Option<f64>,
    pub source: Source,
    pub error: Option<ErrorCode>,
}

impl SweepRecord {
    pub fn empty(swept: Vec<f64>, source: Source) -> Self {
        Self {
            swept,
            branch_id: None,
            n: None,
            g_abs: None,
            margin: None,
            stable: None,
            nbs_exact: None,
            n_rw: None,
            n_arw: None,
            r_c: None,
            nbs_master: None,
            source,
            error: None,
        }
    }

    pub fn failed(swept: Vec<f64>, source: Source, code: ErrorCode) -> Self {
        Self { error: Some(code), ..Self::empty(swept, source) }
    }

    /// Mean-field columns of `b`. CL rows carry no branch id.
    pub fn from_branch(swept: Vec<f64>, source: Source, b: &MeanFieldBranch) -> Self {
        Self {
            branch_id: (source == Source::Cnl).then_some(b.branch_id),
            n: Some(b.n),
            g_abs: Some(b.g_enh.norm()),
            margin: Some(b.margin),
            stable: Some(b.dyn_label != DynLabel::Unstable),
            ..Self::empty(swept, source)
        }
    }

    fn set_cooling(&mut self, c: &CoolingResult) {
        self.nbs_exact = Some(c.nbs_exact);
        self.n_rw = Some(c.n_rw);
        self.n_arw = Some(c.n_arw);
        self.r_c = Some(c.r_c);
    }

    pub fn cells(&self) -> Vec<String> {
        let mut out: Vec<String> = self.swept.iter().map(|&v| fmt_f64(v)).collect();
        out.push(self.branch_id.map(|b| b.to_string()).unwrap_or_default());
        for v in [self.n, self.g_abs, self.margin] {
            out.push(v.map(fmt_f64).unwrap_or_default());
        }
        out.push(self.stable.map(|s| s.to_string()).unwrap_or_default());
        for v in [self.nbs_exact, self.n_rw, self.n_arw, self.r_c, self.nbs_master] {
            out.push(v.map(fmt_f64).unwrap_or_default());
        }
        out.push(self.source.as_str().to_string());
        out.push(self.error.map(|e| e.as_str().to_string()).unwrap_or_default());
        out
    }
}

/// 17 significant digits; round-trips every finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn header(axes: &[&str]) -> Vec<String> {
    axes.iter().copied().chain(RECORD_COLUMNS).map(str::to_string).collect()
}

pub fn records_csv(axes: &[&str], records: &[SweepRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(axes)).expect("in-memory write");
    for r in records {
        w.write_record(r.cells()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Cartesian product of the axes, first axis slowest. No axes gives one
/// empty point.
pub fn grid_points(spec: &SweepSpec) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in &spec.grid {
        let vals = axis.values();
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

fn params_at(spec: &SweepSpec, values: &[f64]) -> (PhysParams, Option<f64>) {
    let mut p = spec.fixed;
    let mut g_enh = None;
    for (axis, &v) in spec.grid.iter().zip(values) {
        match axis.field {
            AxisField::Param(f) => p = f.with(p, v),
            AxisField::GEnh => g_enh = Some(v),
        }
    }
    (p, g_enh)
}

/// Every row produced by one grid point, CL first.
pub fn evaluate_point(spec: &SweepSpec, values: &[f64]) -> Vec<SweepRecord> {
    let (p, g_enh) = params_at(spec, values);
    let swept = values.to_vec();
    let Ok(p) = p.validate(Units::Normalized) else {
        return vec![SweepRecord::failed(swept, Source::Cnl, ErrorCode::InvalidParams)];
    };
    if spec.task == Task::Rcmap {
        return vec![rcmap_cell(&p, g_enh.unwrap_or(0.0), swept)];
    }
    let mut rows = Vec::new();
    if spec.source.cl() {
        let b = linearized_reference(&p).as_branch(&p);
        rows.push(branch_row(spec, &p, &b, swept.clone(), Source::Cl));
    }
    if spec.source.cnl() {
        let set = solve_photon_branches(&p);
        let chosen: Vec<&MeanFieldBranch> = match spec.branch_policy {
            BranchSelect::All => set.branches.iter().collect(),
            BranchSelect::HysteresisUp => set.branches.first().into_iter().collect(),
            BranchSelect::HysteresisDown => set.branches.last().into_iter().collect(),
        };
        if chosen.is_empty() {
            rows.push(SweepRecord::failed(swept.clone(), Source::Cnl, ErrorCode::NoBranch));
        }
        for b in chosen {
            rows.push(branch_row(spec, &p, b, swept.clone(), Source::Cnl));
        }
    }
    rows
}

fn branch_row(spec: &SweepSpec, p: &PhysParams, b: &MeanFieldBranch, swept: Vec<f64>, source: Source) -> SweepRecord {
    let mut row = SweepRecord::from_branch(swept, source, b);
    if !(b.n.is_finite() && b.g_enh.norm().is_finite() && b.delta_eff.is_finite()) {
        row.error = Some(ErrorCode::DegenerateBranch);
        return row;
    }
    if matches!(spec.task, Task::Cooling | Task::Master) {
        match cooling_factor(&MomentPoint::from_branch(p, b, spec.detuning)) {
            Ok(c) => row.set_cooling(&c),
            Err(e) => row.error = Some(ErrorCode::from(&e)),
        }
    }
    if spec.task == Task::Master {
        let mut point = LiouvillePoint::from_branch(p, b);
        if spec.detuning == DetuningMode::AsPrinted {
            point.delta_eff = p.delta;
        }
        match master_nbs(&point, spec) {
            Ok(v) => row.nbs_master = Some(v),
            Err(e) => row.error = row.error.or(Some(ErrorCode::from(&e))),
        }
    }
    row
}

fn master_nbs(point: &LiouvillePoint, spec: &SweepSpec) -> Result<f64, LiouvilleError> {
    let cfg = &spec.master.fock;
    if spec.master.scan {
        return Ok(convergence_scan(point, cfg)?.nbs);
    }
    let ss = steady_state(&build_generator(point, cfg)?)?;
    Ok(phonon_number(&ss.state).nb)
}

/// Cooling at a prescribed `|G|` and `Δ' = delta`; `r_c` is masked where the
/// point is dynamically unstable.
fn rcmap_cell(p: &PhysParams, g_enh: f64, swept: Vec<f64>) -> SweepRecord {
    let pt = MomentPoint::new(p.delta, Complex64::new(g_enh, 0.0), p.kappa, p.gamma, p.omega_m, p.n_th);
    let rep = classify(&pt.operating_point());
    let mut row = SweepRecord {
        g_abs: Some(g_enh),
        margin: Some(rep.margin),
        stable: Some(rep.stable),
        ..SweepRecord::empty(swept, Source::Cnl)
    };
    match cooling_factor(&pt) {
        Ok(c) => {
            row.set_cooling(&c);
            if !rep.stable {
                row.r_c = None;
            }
        }
        Err(e) => row.error = Some(ErrorCode::from(&e)),
    }
    row
}

/// Evaluates the grid on a pool of `workers` threads (0: all cores). Row
/// order follows the grid regardless of the worker count.
pub fn evaluate_grid(spec: &SweepSpec, workers: usize) -> Vec<SweepRecord> {
    let points = grid_points(spec);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let nested: Vec<Vec<SweepRecord>> =
        pool.install(|| points.par_iter().map(|v| evaluate_point(spec, v)).collect());
    nested.into_iter().flatten().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub field: ParamField,
    pub value: f64,
    pub stable_below: bool,
    pub source: Source,
}

/// Stability boundaries along the single axis of a stability sweep.
pub fn thresholds(spec: &SweepSpec) -> Vec<ThresholdRow> {
    let [axis] = spec.grid.as_slice() else { return Vec::new() };
    let AxisField::Param(field) = axis.field else { return Vec::new() };
    let mut policies = Vec::new();
    if spec.source.cl() {
        policies.push((Source::Cl, BranchPolicy::Linearized));
    }
    if spec.source.cnl() {
        let pol = match spec.branch_policy {
            BranchSelect::HysteresisDown => BranchPolicy::HysteresisDown,
            _ => BranchPolicy::HysteresisUp,
        };
        policies.push((Source::Cnl, pol));
    }
    let (lo, hi) = (axis.start.min(axis.stop), axis.start.max(axis.stop));
    policies
        .into_iter()
        .flat_map(|(source, pol)| {
            threshold_scan(&spec.fixed, field, (lo, hi), axis.count.max(2), pol)
                .thresholds
                .into_iter()
                .map(move |t| ThresholdRow { field, value: t.value, stable_below: t.stable_below, source })
        })
        .collect()
}

pub fn thresholds_csv(rows: &[ThresholdRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(THRESHOLD_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.field.name().to_string(),
            fmt_f64(r.value),
            r.stable_below.to_string(),
            r.source.as_str().to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub csv: PathBuf,
    pub thresholds: Option<PathBuf>,
    pub manifest: PathBuf,
    /// Rows carrying an error code.
    pub failures: usize,
}

/// Collects output files of one run and writes its manifest.
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    pub fn create(dir: &Path, name: &str, params: PhysParams, settings: serde_json::Value) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::unwritable(dir))?;
        Ok(Self { dir: dir.to_path_buf(), manifest: RunManifest::new(name, params, settings) })
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(file);
        fs::write(&path, bytes).map_err(CliError::unwritable(&path))?;
        self.manifest.record_output(&self.dir, &path).map_err(CliError::unwritable(&path))?;
        Ok(path)
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.manifest.finish();
        let path = self.dir.join(format!("{}.manifest.json", self.manifest.name));
        self.manifest.write(&path).map_err(CliError::unwritable(&path))?;
        Ok(path)
    }
}

/// Evaluates `spec` and writes `<name>.csv` (plus `<name>_thresholds.csv` for
/// one-axis stability sweeps) and `<name>.manifest.json` into `spec.output`.
/// Per-point failures are recorded in the error column.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome, CliError> {
    spec.validate()?;
    let records = evaluate_grid(spec, spec.workers);
    let axes: Vec<&str> = spec.grid.iter().map(|a| a.field.name()).collect();
    let settings = serde_json::to_value(spec).unwrap_or_else(|_| json!({}));
    let mut w = RunWriter::create(&spec.output, &spec.name, spec.fixed, settings)?;
    let csv = w.write(&format!("{}.csv", spec.name), &records_csv(&axes, &records))?;
    let thresholds = if spec.task == Task::Stability && spec.grid.len() == 1 {
        let rows = thresholds(spec);
        Some(w.write(&format!("{}_thresholds.csv", spec.name), &thresholds_csv(&rows))?)
    } else {
        None
    };
    let manifest = w.finish()?;
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    Ok(SweepOutcome { records, csv, thresholds, manifest, failures })
}
