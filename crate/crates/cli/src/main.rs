use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bistab::config::{BranchSelect, MasterOptions, SourceSelect};
use bistab::sweep::{evaluate_grid, records_csv};
use bistab::{exit, parse_config, run_figure, run_sweep, CliError, FigureOptions, SweepSpec, Task, FIGURE_IDS};
use bistab_core::covariance::DetuningMode;
use bistab_core::liouville::{FockConfig, SteadyMethod};
use bistab_core::{PhysParams, Units};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bistab", version, about = "Bistability, stability and cooling of a driven optomechanical cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-field branches at one parameter point.
    Meanfield(PointArgs),
    /// Branches with their linear stability verdicts.
    Stability(PointArgs),
    /// Steady phonon numbers and cooling factor per branch.
    Cooling(PointArgs),
    /// Master-equation steady state per branch.
    Master {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = 8)]
        n_cav: usize,
        #[arg(long, default_value_t = 16)]
        n_mech: usize,
        /// Keep the single-photon nonlinear term.
        #[arg(long)]
        qnl: bool,
        /// Grow the cutoffs until the phonon number settles.
        #[arg(long)]
        scan: bool,
        #[arg(long, value_enum, default_value_t = Method::NullSpace)]
        method: Method,
    },
    /// Run a sweep described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `workers` from the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Emit the data behind one figure.
    Figure {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(FIGURE_IDS))]
        id: String,
        /// Output directory (default `out/<id>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run fig4 at full thermal occupation.
        #[arg(long)]
        expensive: bool,
        /// Use the bare detuning in the fluctuation equations.
        #[arg(long)]
        detuning_as_printed: bool,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Args)]
struct PointArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    kappa: f64,
    #[arg(long, default_value_t = 1e-4)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    g: f64,
    #[arg(long, default_value_t = 100.0)]
    eps: f64,
    #[arg(long, default_value_t = 200.0)]
    n_th: f64,
    /// Mechanical frequency; other rates are read in the same units.
    #[arg(long, default_value_t = 1.0)]
    omega_m: f64,
    #[arg(long, value_enum, default_value_t = Policy::All)]
    policy: Policy,
    #[arg(long, value_enum, default_value_t = Series::Both)]
    source: Series,
    #[arg(long)]
    detuning_as_printed: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    All,
    HysteresisUp,
    HysteresisDown,
}

#[derive(Clone, Copy, ValueEnum)]
enum Series {
    Cl,
    Cnl,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    TimeEvolution,
    NullSpace,
}

impl PointArgs {
    fn spec(&self, task: Task) -> Result<SweepSpec, CliError> {
        let raw = PhysParams {
            omega_m: self.omega_m,
            delta: self.delta,
            kappa: self.kappa,
            gamma: self.gamma,
            g: self.g,
            eps: self.eps,
            n_th: self.n_th,
        };
        let fixed = raw.validate(Units::Raw).map_err(|e| CliError::InvalidSpec(e.to_string()))?;
        let mut s = SweepSpec::new(task_name(task), task, fixed);
        s.branch_policy = match self.policy {
            Policy::All => BranchSelect::All,
            Policy::HysteresisUp => BranchSelect::HysteresisUp,
            Policy::HysteresisDown => BranchSelect::HysteresisDown,
        };
        s.source = match self.source {
            Series::Cl => SourceSelect::Cl,
            Series::Cnl => SourceSelect::Cnl,
            Series::Both => SourceSelect::Both,
        };
        if self.detuning_as_printed {
            s.detuning = DetuningMode::AsPrinted;
        }
        Ok(s)
    }
}

fn task_name(t: Task) -> &'static str {
    match t {
        Task::Meanfield => "meanfield",
        Task::Stability => "stability",
        Task::Cooling => "cooling",
        Task::Master => "master",
        Task::Rcmap => "rcmap",
    }
}

/// Evaluates a single point and prints the rows as CSV.
fn print_point(spec: &SweepSpec) -> Result<i32, CliError> {
    spec.validate()?;
    let rows = evaluate_grid(spec, 1);
    std::io::stdout()
        .write_all(&records_csv(&[], &rows))
        .map_err(CliError::unwritable("<stdout>"))?;
    Ok(status(rows.iter().filter(|r| r.error.is_some()).count()))
}

fn status(failures: usize) -> i32 {
    if failures > 0 { exit::NUMERICAL_FAILURE } else { exit::SUCCESS }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Meanfield(a) => print_point(&a.spec(Task::Meanfield)?),
        Command::Stability(a) => print_point(&a.spec(Task::Stability)?),
        Command::Cooling(a) => print_point(&a.spec(Task::Cooling)?),
        Command::Master { point, n_cav, n_mech, qnl, scan, method } => {
            let mut s = point.spec(Task::Master)?;
            let method = match method {
                Method::TimeEvolution => SteadyMethod::TimeEvolution,
                Method::NullSpace => SteadyMethod::NullSpace,
            };
            let fock = FockConfig { include_qnl: qnl, method, ..FockConfig::with_cutoffs(n_cav, n_mech) };
            s.master = MasterOptions { fock, scan };
            print_point(&s)
        }
        Command::Sweep { config, out, workers } => {
            let mut spec = parse_config(&config)?;
            if let Some(o) = out {
                spec.output = o;
            }
            if let Some(w) = workers {
                spec.workers = w;
            }
            let r = run_sweep(&spec)?;
            eprintln!("wrote {} ({} rows, {} failed)", r.csv.display(), r.records.len(), r.failures);
            Ok(status(r.failures))
        }
        Command::Figure { id, out, expensive, detuning_as_printed, workers } => {
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(&id));
            let detuning = if detuning_as_printed { DetuningMode::AsPrinted } else { DetuningMode::Effective };
            let r = run_figure(&id, &out, &FigureOptions { expensive, detuning, workers })?;
            for f in &r.files {
                eprintln!("wrote {}", f.display());
            }
            Ok(status(r.failures))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
