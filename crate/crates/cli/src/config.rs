//! Sweep specifications and their line-oriented `key = value` config files.
//!
//! ```text
//! [sweep]
//! name = fig2a
//! task = stability
//!
//! [params]
//! kappa = 0.1
//!
//! [grid.kappa]
//! start = 0.5
//! stop = 4
//! count = 351
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Keys are only
//! valid inside a section, and every key outside the schema is an error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bistab_core::covariance::DetuningMode;
use bistab_core::liouville::{FockConfig, SteadyMethod};
use bistab_core::{ParamField, PhysParams, Units};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Meanfield,
    Stability,
    Cooling,
    Master,
    Rcmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// Which CNL branches produce rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchSelect {
    #[default]
    All,
    /// Lowest root, the one reached by increasing the drive from zero.
    HysteresisUp,
    /// Highest root.
    HysteresisDown,
}

/// Which series are emitted: CL (no classical nonlinearity) and/or CNL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceSelect {
    Cl,
    Cnl,
    #[default]
    Both,
}

impl SourceSelect {
    pub fn cl(self) -> bool {
        matches!(self, SourceSelect::Cl | SourceSelect::Both)
    }

    pub fn cnl(self) -> bool {
        matches!(self, SourceSelect::Cnl | SourceSelect::Both)
    }
}

/// A swept quantity: a physical parameter, or the enhanced coupling `|G|`
/// itself for `rcmap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AxisField {
    Param(ParamField),
    GEnh,
}

impl AxisField {
    pub fn name(self) -> &'static str {
        match self {
            AxisField::Param(f) => f.name(),
            AxisField::GEnh => "g_enh",
        }
    }

    pub fn parse(s: &str) -> Option<AxisField> {
        if s == "g_enh" {
            Some(AxisField::GEnh)
        } else {
            ParamField::parse(s).map(AxisField::Param)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridAxis {
    pub field: AxisField,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub scale: Scale,
}

impl GridAxis {
    pub fn linear(field: ParamField, start: f64, stop: f64, count: usize) -> Self {
        Self { field: AxisField::Param(field), start, stop, count, scale: Scale::Linear }
    }

    pub fn log(field: ParamField, start: f64, stop: f64, count: usize) -> Self {
        Self { field: AxisField::Param(field), start, stop, count, scale: Scale::Log }
    }

    /// Grid values; both endpoints are hit exactly.
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == 0 {
                    return self.start;
                }
                if i + 1 == self.count {
                    return self.stop;
                }
                let t = i as f64 / last;
                match self.scale {
                    Scale::Linear => self.start + (self.stop - self.start) * t,
                    Scale::Log => (self.start.ln() + (self.stop.ln() - self.start.ln()) * t).exp(),
                }
            })
            .collect()
    }

    fn check(&self) -> Result<(), CliError> {
        let name = self.field.name();
        if self.count == 0 {
            return Err(CliError::InvalidSpec(format!("grid `{name}` needs count >= 1")));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CliError::InvalidSpec(format!("grid `{name}` has non-finite endpoints")));
        }
        if self.scale == Scale::Log && (self.start <= 0.0 || self.stop <= 0.0) {
            return Err(CliError::InvalidSpec(format!("log grid `{name}` needs positive endpoints")));
        }
        Ok(())
    }
}

/// Settings of the master-equation task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MasterOptions {
    pub fock: FockConfig,
    /// Refine the cutoffs with a convergence scan at every point.
    pub scan: bool,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self { fock: FockConfig::with_cutoffs(8, 16), scan: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub name: String,
    pub task: Task,
    /// Axes in row-major order: the first axis varies slowest.
    pub grid: Vec<GridAxis>,
    /// Normalized parameters the grid overrides.
    pub fixed: PhysParams,
    pub branch_policy: BranchSelect,
    pub source: SourceSelect,
    pub detuning: DetuningMode,
    pub master: MasterOptions,
    /// Worker threads; 0 uses every core. Not part of the manifest, since
    /// results do not depend on it.
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub output: PathBuf,
}

impl SweepSpec {
    pub fn new(name: impl Into<String>, task: Task, fixed: PhysParams) -> Self {
        Self {
            name: name.into(),
            task,
            grid: Vec::new(),
            fixed,
            branch_policy: BranchSelect::All,
            source: SourceSelect::Both,
            detuning: DetuningMode::Effective,
            master: MasterOptions::default(),
            workers: 0,
            output: PathBuf::from("out"),
        }
    }

    pub fn with_axis(mut self, axis: GridAxis) -> Self {
        self.grid.push(axis);
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::InvalidSpec(format!("bad sweep name `{}`", self.name)));
        }
        self.fixed
            .validate(Units::Normalized)
            .map_err(|e| CliError::InvalidSpec(e.to_string()))?;
        if self.fixed.omega_m != 1.0 {
            return Err(CliError::InvalidSpec("parameters must be normalized to omega_m = 1".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.grid {
            a.check()?;
            if !seen.insert(a.field.name()) {
                return Err(CliError::InvalidSpec(format!("axis `{}` given twice", a.field.name())));
            }
        }
        let has_g_enh = seen.contains("g_enh");
        match self.task {
            Task::Rcmap if !has_g_enh => {
                Err(CliError::InvalidSpec("task rcmap needs a [grid.g_enh] axis".into()))
            }
            Task::Rcmap => Ok(()),
            _ if has_g_enh => Err(CliError::InvalidSpec("a g_enh axis is only valid for rcmap".into())),
            _ => self.master.fock.check().map_err(|e| CliError::InvalidSpec(e.to_string())),
        }
    }

    /// Renders the spec in the config format; `parse_config_str` inverts it.
    pub fn to_config(&self) -> String {
        let mut s = String::new();
        let f = &self.fixed;
        let m = &self.master;
        let _ = writeln!(s, "[sweep]");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "task = {}", keyword(TASKS, self.task));
        let _ = writeln!(s, "branch_policy = {}", keyword(POLICIES, self.branch_policy));
        let _ = writeln!(s, "source = {}", keyword(SOURCES, self.source));
        let _ = writeln!(s, "detuning = {}", keyword(DETUNINGS, self.detuning));
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "\n[params]");
        for (k, v) in [
            ("delta", f.delta),
            ("kappa", f.kappa),
            ("gamma", f.gamma),
            ("g", f.g),
            ("eps", f.eps),
            ("n_th", f.n_th),
        ] {
            let _ = writeln!(s, "{k} = {v:e}");
        }
        for a in &self.grid {
            let _ = writeln!(s, "\n[grid.{}]", a.field.name());
            let _ = writeln!(s, "start = {:e}", a.start);
            let _ = writeln!(s, "stop = {:e}", a.stop);
            let _ = writeln!(s, "count = {}", a.count);
            let _ = writeln!(s, "scale = {}", keyword(SCALES, a.scale));
        }
        if self.task == Task::Master {
            let _ = writeln!(s, "\n[master]");
            let _ = writeln!(s, "n_cav = {}", m.fock.n_cav);
            let _ = writeln!(s, "n_mech = {}", m.fock.n_mech);
            let _ = writeln!(s, "include_qnl = {}", m.fock.include_qnl);
            let _ = writeln!(s, "method = {}", keyword(METHODS, m.fock.method));
            let _ = writeln!(s, "steady_tol = {:e}", m.fock.steady_tol);
            let _ = writeln!(s, "max_dim = {}", m.fock.max_dim);
            let _ = writeln!(s, "max_nullspace_dim = {}", m.fock.max_nullspace_dim);
            let _ = writeln!(s, "scan = {}", m.scan);
        }
        s
    }
}

const TASKS: &[(&str, Task)] = &[
    ("meanfield", Task::Meanfield),
    ("stability", Task::Stability),
    ("cooling", Task::Cooling),
    ("master", Task::Master),
    ("rcmap", Task::Rcmap),
];
const POLICIES: &[(&str, BranchSelect)] = &[
    ("all", BranchSelect::All),
    ("hysteresis-up", BranchSelect::HysteresisUp),
    ("hysteresis-down", BranchSelect::HysteresisDown),
];
const SOURCES: &[(&str, SourceSelect)] =
    &[("cl", SourceSelect::Cl), ("cnl", SourceSelect::Cnl), ("both", SourceSelect::Both)];
const DETUNINGS: &[(&str, DetuningMode)] =
    &[("effective", DetuningMode::Effective), ("as-printed", DetuningMode::AsPrinted)];
const SCALES: &[(&str, Scale)] = &[("linear", Scale::Linear), ("log", Scale::Log)];
const METHODS: &[(&str, SteadyMethod)] =
    &[("time-evolution", SteadyMethod::TimeEvolution), ("null-space", SteadyMethod::NullSpace)];
const UNITS: &[(&str, Units)] = &[("normalized", Units::Normalized), ("raw", Units::Raw)];

fn keyword<T: PartialEq + Copy>(table: &[(&'static str, T)], v: T) -> &'static str {
    table.iter().find(|(_, t)| *t == v).map(|(k, _)| *k).unwrap_or("?")
}

pub fn parse_config(path: &Path) -> Result<SweepSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CliError::Input { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

struct Line<'a> {
    no: usize,
    key: &'a str,
    value: &'a str,
}

impl Line<'_> {
    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::Parse { line: self.no, msg: msg.into() }
    }

    fn f64(&self) -> Result<f64, CliError> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("`{}` expects a number, got `{}`", self.key, self.value)))
    }

    fn usize(&self) -> Result<usize, CliError> {
        self.value.parse().map_err(|_| {
            self.err(format!("`{}` expects a non-negative integer, got `{}`", self.key, self.value))
        })
    }

    fn bool(&self) -> Result<bool, CliError> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("`{}` expects true or false, got `{}`", self.key, self.value)))
    }

    fn choice<T: Copy>(&self, table: &[(&str, T)]) -> Result<T, CliError> {
        table.iter().find(|(k, _)| *k == self.value).map(|(_, v)| *v).ok_or_else(|| {
            let opts: Vec<&str> = table.iter().map(|(k, _)| *k).collect();
            self.err(format!("`{}` must be one of {}, got `{}`", self.key, opts.join("|"), self.value))
        })
    }
}

#[derive(Default)]
struct PartialAxis {
    line: usize,
    start: Option<f64>,
    stop: Option<f64>,
    count: Option<usize>,
    scale: Scale,
}

pub fn parse_config_str(text: &str) -> Result<SweepSpec, CliError> {
    let mut section: Option<String> = None;
    let mut seen_sections = BTreeSet::new();
    let mut seen_keys = BTreeSet::new();

    let mut task = None;
    let mut name = String::from("sweep");
    let mut spec_policy = BranchSelect::All;
    let mut source = SourceSelect::Both;
    let mut detuning = DetuningMode::Effective;
    let mut workers = 0;
    let mut output = PathBuf::from("out");
    let mut units = Units::Normalized;
    let mut fixed = PhysParams::default();
    let mut master = MasterOptions::default();
    let mut axes: Vec<(AxisField, PartialAxis)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(sec) = rest.strip_suffix(']').map(str::trim) else {
                return Err(CliError::Parse { line: no, msg: format!("malformed section header `{line}`") });
            };
            let known = matches!(sec, "sweep" | "params" | "master")
                || sec.strip_prefix("grid.").is_some_and(|f| AxisField::parse(f).is_some());
            if !known {
                return Err(CliError::Parse { line: no, msg: format!("unknown section [{sec}]") });
            }
            if !seen_sections.insert(sec.to_string()) {
                return Err(CliError::Parse { line: no, msg: format!("duplicate section [{sec}]") });
            }
            if let Some(f) = sec.strip_prefix("grid.") {
                let field = AxisField::parse(f).expect("checked above");
                axes.push((field, PartialAxis { line: no, ..Default::default() }));
            }
            section = Some(sec.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Parse { line: no, msg: format!("expected `key = value`, got `{line}`") });
        };
        let l = Line { no, key: key.trim(), value: value.trim() };
        let Some(sec) = section.as_deref() else {
            return Err(l.err(format!("key `{}` outside any section", l.key)));
        };
        if !seen_keys.insert((sec.to_string(), l.key.to_string())) {
            return Err(l.err(format!("duplicate key `{}` in [{sec}]", l.key)));
        }
        let unknown =
            || CliError::UnknownKey { line: no, section: sec.to_string(), key: l.key.to_string() };
        match sec {
            "sweep" => match l.key {
                "name" => name = l.value.to_string(),
                "task" => task = Some(l.choice(TASKS)?),
                "branch_policy" => spec_policy = l.choice(POLICIES)?,
                "source" => source = l.choice(SOURCES)?,
                "detuning" => detuning = l.choice(DETUNINGS)?,
                "workers" => workers = l.usize()?,
                "output" => output = PathBuf::from(l.value),
                "units" => units = l.choice(UNITS)?,
                _ => return Err(unknown()),
            },
            "params" => match l.key {
                "omega_m" => fixed.omega_m = l.f64()?,
                k => match ParamField::parse(k) {
                    Some(f) => fixed = f.with(fixed, l.f64()?),
                    None => return Err(unknown()),
                },
            },
            "master" => match l.key {
                "n_cav" => master.fock.n_cav = l.usize()?,
                "n_mech" => master.fock.n_mech = l.usize()?,
                "include_qnl" => master.fock.include_qnl = l.bool()?,
                "method" => master.fock.method = l.choice(METHODS)?,
                "steady_tol" => master.fock.steady_tol = l.f64()?,
                "max_dim" => master.fock.max_dim = l.usize()?,
                "max_nullspace_dim" => master.fock.max_nullspace_dim = l.usize()?,
                "scan" => master.scan = l.bool()?,
                _ => return Err(unknown()),
            },
            _ => {
                let axis = &mut axes.last_mut().expect("grid section registered").1;
                match l.key {
                    "start" => axis.start = Some(l.f64()?),
                    "stop" => axis.stop = Some(l.f64()?),
                    "count" => axis.count = Some(l.usize()?),
                    "scale" => axis.scale = l.choice(SCALES)?,
                    _ => return Err(unknown()),
                }
            }
        }
    }

    let task = task.ok_or_else(|| CliError::InvalidSpec("[sweep] needs a `task`".into()))?;
    let omega = fixed.omega_m;
    let fixed = fixed.validate(units).map_err(|e| CliError::InvalidSpec(e.to_string()))?;
    let mut grid = Vec::with_capacity(axes.len());
    for (field, a) in axes {
        let missing = |k: &str| CliError::Parse {
            line: a.line,
            msg: format!("[grid.{}] is missing `{k}`", field.name()),
        };
        let start = a.start.ok_or_else(|| missing("start"))?;
        let stop = a.stop.or(a.start).ok_or_else(|| missing("stop"))?;
        let count = a.count.unwrap_or(1);
        // raw rates are rescaled like the fixed parameters; n_th is a number
        let rescale = units == Units::Raw && field != AxisField::Param(ParamField::NTh);
        let k = if rescale { 1.0 / omega } else { 1.0 };
        grid.push(GridAxis { field, start: start * k, stop: stop * k, count, scale: a.scale });
    }
    let spec = SweepSpec {
        name,
        task,
        grid,
        fixed,
        branch_policy: spec_policy,
        source,
        detuning,
        master,
        workers,
        output,
    };
    spec.validate()?;
    Ok(spec)
}
