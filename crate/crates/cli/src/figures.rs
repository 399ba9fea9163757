//! Preconfigured sweeps behind `bistab figure <id>`.

use std::path::{Path, PathBuf};

use bistab_core::covariance::DetuningMode;
use bistab_core::liouville::FockConfig;
use bistab_core::meanfield::{hysteresis_sweep, linearized_reference, SweepDirection};
use bistab_core::{ParamField, PhysParams};
use serde_json::json;

use crate::config::{BranchSelect, GridAxis, MasterOptions, SourceSelect, SweepSpec, Task};
use crate::error::CliError;
use crate::sweep::{records_csv, run_sweep, ErrorCode, RunWriter, Source, SweepRecord};

pub const FIGURE_IDS: [&str; 17] = [
    "fig1b", "fig2a", "fig2b", "fig2c", "fig2d", "fig3a", "fig3b", "fig3c", "fig3d", "fig3e",
    "fig3f", "fig4", "figadd", "fig5a", "fig5b", "fig5c", "fig5d",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FigureOptions {
    /// Run fig4 at the full thermal occupation with cutoff refinement.
    pub expensive: bool,
    pub detuning: DetuningMode,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FigureOutcome {
    pub files: Vec<PathBuf>,
    /// Rows carrying an error code.
    pub failures: usize,
}

/// Parameters shared by the stability maps.
pub fn stability_base() -> PhysParams {
    PhysParams { kappa: 0.1, gamma: 1e-5, g: 1e-3, eps: 1e3, ..PhysParams::default() }
}

/// Parameters shared by the mean-field and cooling figures.
pub fn cooling_base() -> PhysParams {
    PhysParams::default()
}

/// Bistable point whose two outer branches are both dynamically stable.
pub fn hysteresis_base() -> PhysParams {
    PhysParams { omega_m: 1.0, delta: 1.0, kappa: 0.1, gamma: 0.1, g: 0.05, eps: 1.0, n_th: 0.0 }
}

/// The sweeps that make up figure `id`; `fig1b` is not grid based and
/// yields none.
pub fn figure_specs(id: &str, out: &Path, opts: &FigureOptions) -> Result<Vec<SweepSpec>, CliError> {
    use ParamField::*;
    let spec = |task, fixed| {
        let mut s = SweepSpec::new(id, task, fixed);
        s.output = out.to_path_buf();
        s.workers = opts.workers;
        s.detuning = opts.detuning;
        s
    };
    let st = stability_base();
    let cb = cooling_base();
    let specs = match id {
        "fig1b" => Vec::new(),
        "fig2a" => vec![spec(Task::Stability, st).with_axis(GridAxis::linear(Kappa, 0.5, 4.0, 351))],
        "fig2b" => vec![spec(Task::Stability, st).with_axis(GridAxis::linear(Eps, 100.0, 1500.0, 281))],
        "fig2c" => vec![spec(Task::Stability, st).with_axis(GridAxis::linear(G, 1e-4, 2e-3, 381))],
        "fig2d" => vec![spec(Task::Stability, st).with_axis(GridAxis::linear(Delta, -4.0, 4.0, 401))],
        "fig3a" | "fig3d" => vec![spec(Task::Meanfield, cb).with_axis(GridAxis::linear(Eps, 1.0, 200.0, 400))],
        "fig3b" | "fig3e" => vec![spec(Task::Meanfield, cb).with_axis(GridAxis::log(Kappa, 0.01, 1.0, 400))],
        "fig3c" | "fig3f" => vec![spec(Task::Meanfield, cb).with_axis(GridAxis::log(G, 1e-5, 3e-3, 400))],
        "fig4" => fig4_specs(id, out, opts),
        "figadd" => {
            let mut s = spec(Task::Rcmap, cb).with_axis(GridAxis::log(Kappa, 0.01, 1.0, 61));
            s.grid.push(GridAxis {
                field: crate::config::AxisField::GEnh,
                start: 0.01,
                stop: 1.0,
                count: 100,
                scale: crate::config::Scale::Linear,
            });
            vec![s]
        }
        "fig5a" => vec![spec(Task::Cooling, cb).with_axis(GridAxis::log(G, 1e-4, 3e-3, 300))],
        "fig5b" => vec![spec(Task::Cooling, PhysParams { eps: 200.0, ..cb })
            .with_axis(GridAxis::log(G, 1e-4, 3e-3, 300))],
        "fig5c" => vec![spec(Task::Cooling, cb).with_axis(GridAxis::log(Kappa, 0.01, 0.5, 300))],
        "fig5d" => vec![spec(Task::Cooling, PhysParams { eps: 200.0, ..cb })
            .with_axis(GridAxis::log(Kappa, 0.01, 0.5, 300))],
        _ => return Err(CliError::InvalidSpec(format!("unknown figure `{id}`"))),
    };
    Ok(specs)
}

/// QL and QNL master-equation runs. The default is a desk-scale variant
/// (`n_th = 2`, `γ = 1e-2`, 8×16 cutoffs); `expensive` uses the full
/// thermal occupation with cutoff refinement.
fn fig4_specs(id: &str, out: &Path, opts: &FigureOptions) -> Vec<SweepSpec> {
    let (fixed, master, axis) = if opts.expensive {
        let fock = FockConfig { max_dim: 4096, max_nullspace_dim: 4096, ..FockConfig::with_cutoffs(12, 30) };
        (cooling_base(), MasterOptions { fock, scan: true }, GridAxis::log(ParamField::G, 1e-4, 3e-2, 41))
    } else {
        let fixed = PhysParams { n_th: 2.0, gamma: 1e-2, ..cooling_base() };
        (fixed, MasterOptions::default(), GridAxis::log(ParamField::G, 1e-4, 2e-2, 9))
    };
    [("ql", false), ("qnl", true)]
        .into_iter()
        .map(|(tag, qnl)| {
            let mut s = SweepSpec::new(format!("{id}_{tag}"), Task::Master, fixed).with_axis(axis);
            s.master = master;
            s.master.fock.include_qnl = qnl;
            s.source = SourceSelect::Cnl;
            s.branch_policy = BranchSelect::All;
            s.output = out.to_path_buf();
            s.workers = opts.workers;
            s.detuning = opts.detuning;
            s
        })
        .collect()
}

pub fn run_figure(id: &str, out: &Path, opts: &FigureOptions) -> Result<FigureOutcome, CliError> {
    if id == "fig1b" {
        return run_fig1b(out);
    }
    let mut outcome = FigureOutcome::default();
    for spec in figure_specs(id, out, opts)? {
        let r = run_sweep(&spec)?;
        outcome.files.push(r.csv);
        outcome.files.extend(r.thresholds);
        outcome.files.push(r.manifest);
        outcome.failures += r.failures;
    }
    Ok(outcome)
}

/// Adiabatic drive sweeps up and down across the bistable window, each next
/// to the linearized reference.
fn run_fig1b(out: &Path) -> Result<FigureOutcome, CliError> {
    let p = hysteresis_base();
    let grid: Vec<f64> = (0..=32).map(|i| 0.2 + 0.05 * i as f64).collect();
    let settings = json!({
        "task": "hysteresis",
        "field": "eps",
        "start": grid[0],
        "stop": grid[grid.len() - 1],
        "count": grid.len(),
    });
    let mut w = RunWriter::create(out, "fig1b", p, settings)?;
    let mut outcome = FigureOutcome::default();
    for (tag, dir) in [("up", SweepDirection::Up), ("down", SweepDirection::Down)] {
        let mut rows = Vec::new();
        match hysteresis_sweep(&p, ParamField::Eps, &grid, dir) {
            Ok(points) => {
                for h in points {
                    let q = PhysParams { eps: h.value, ..p };
                    let cl = linearized_reference(&q).as_branch(&q);
                    rows.push(SweepRecord::from_branch(vec![h.value], Source::Cl, &cl));
                    let mut row = SweepRecord::from_branch(vec![h.value], Source::Cnl, &h.branch);
                    row.n = Some(h.terminal_n);
                    if !h.converged {
                        row.error = Some(ErrorCode::NonConvergence);
                    }
                    rows.push(row);
                }
            }
            Err(_) => rows.extend(
                grid.iter().map(|&v| SweepRecord::failed(vec![v], Source::Cnl, ErrorCode::Integration)),
            ),
        }
        outcome.failures += rows.iter().filter(|r| r.error.is_some()).count();
        outcome.files.push(w.write(&format!("fig1b_{tag}.csv"), &records_csv(&["eps"], &rows))?);
    }
    outcome.files.push(w.finish()?);
    Ok(outcome)
}
