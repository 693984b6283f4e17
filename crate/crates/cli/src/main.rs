mod config;
mod expr;
mod report;
mod sweep;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crossdiff_core::solver::{run, Mode, RunReport, SolverError};

use config::{Config, ConfigError};
use report::ReportFile;
use verify::{BatteryOptions, VerifyReport, DEFAULT_SEED, VERIFY_FILE};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "crossdiff", version, about = "Degenerate cross-diffusion solvers on the periodic box")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Direct,
    NormalForm,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Direct => Mode::Direct,
            ModeArg::NormalForm => Mode::NormalForm,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Report directory (default: `[output] dir`, else `<config stem>_report`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomised checks.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Overrides `[solver] mode`.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system and write a report directory.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the certification battery on the `[system]` section, or re-validate
    /// an existing report directory.
    Verify {
        #[arg(required_unless_present = "report")]
        config: Option<PathBuf>,
        /// Validate this report directory offline instead.
        #[arg(long, conflicts_with = "config")]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Test hook: skew a hyperbolic coefficient before certification.
        #[arg(long, hide = true)]
        corrupt_a1: bool,
    },
    /// Run both solvers and print their distance; with `--sweep K`, a grid
    /// refinement study over K + 1 resolutions.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "K")]
        sweep: Option<u32>,
    },
}

enum Failure {
    Config(ConfigError),
    Solver(SolverError),
    Verify,
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Solver(_) | Failure::Io(_) => EXIT_SOLVER,
            Failure::Verify => EXIT_VERIFY,
        }
    }
}

fn load(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(Failure::Config)
}

fn io_err(dir: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", dir.display()))
}

fn base_report(command: &str, cfg: &Config, seed: u64) -> ReportFile {
    ReportFile {
        command: command.into(),
        status: "ok".into(),
        exit_code: 0,
        error: None,
        seed,
        config_path: cfg.source.display().to_string(),
        initial: cfg.initial.clone(),
        snapshots: Vec::new(),
        series_files: Vec::new(),
        run: None,
    }
}

/// Runs the configured system and writes the report directory. Solver errors
/// are recorded in `report.json` before being returned.
fn execute(command: &str, cfg: &Config, common: &Common) -> Result<(RunReport, PathBuf), Failure> {
    let dir = cfg.out_dir(common.out.as_deref());
    let mode = common.mode.map(Mode::from).unwrap_or(cfg.mode);
    let mut file = base_report(command, cfg, common.seed);
    let result = cfg.initial_field(cfg.grid()).and_then(|u0| run(&cfg.spec, &u0, &cfg.solver, mode));
    match result {
        Ok(report) => {
            file.run = Some(report);
            report::write_run(&dir, &mut file, cfg.output.format).map_err(io_err(&dir))?;
            Ok((file.run.take().expect("run stored above"), dir))
        }
        Err(e) => {
            file.status = "solver_error".into();
            file.exit_code = EXIT_SOLVER as i32;
            file.error = Some(e.to_string());
            report::write_json(&dir, &file).map_err(io_err(&dir))?;
            Err(Failure::Solver(e))
        }
    }
}

fn cmd_run(config: &Path, common: &Common) -> Result<(), Failure> {
    let cfg = load(config)?;
    let (report, dir) = execute("run", &cfg, common)?;
    for traj in [&report.direct, &report.normal_form].into_iter().flatten() {
        println!(
            "{:<12} steps {:>7}  dt [{:.3e}, {:.3e}]  min density {:.6e}",
            traj.label,
            traj.steps,
            traj.dt_min,
            traj.dt_max,
            traj.series.iter().map(|s| s.min_density).fold(f64::INFINITY, f64::min)
        );
    }
    if let Some(max) = report.max_cross_distance() {
        println!("max cross distance {max:.3e}");
    }
    if let Some(trace) = &report.picard {
        println!(
            "picard: {} iterations, horizon {:.3e}, converged {}",
            trace.records.len(),
            trace.horizon,
            trace.converged
        );
    }
    println!("report written to {}", dir.display());
    Ok(())
}

fn finish_verify(rep: &VerifyReport, dir: &Path) -> Result<(), Failure> {
    rep.print();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let text = serde_json::to_string_pretty(rep).map_err(|e| Failure::Io(e.to_string()))?;
    std::fs::write(dir.join(VERIFY_FILE), text + "\n").map_err(io_err(dir))?;
    if rep.pass {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn cmd_verify(config: Option<&Path>, report: Option<&Path>, common: &Common, corrupt_a1: bool) -> Result<(), Failure> {
    if let Some(dir) = report {
        let rep = verify::verify_report_dir(dir);
        return finish_verify(&rep, common.out.as_deref().unwrap_or(dir));
    }
    let cfg = load(config.expect("clap requires a config"))?;
    let opts = BatteryOptions {
        seed: common.seed,
        corrupt_a1,
    };
    let rep = verify::run_battery(&cfg.spec, cfg.source.display().to_string(), opts);
    finish_verify(&rep, &cfg.out_dir(common.out.as_deref()))
}

fn cmd_compare(config: &Path, common: &Common, sweep: Option<u32>) -> Result<(), Failure> {
    let cfg = load(config)?;
    if let Some(levels) = sweep {
        let dir = cfg.out_dir(common.out.as_deref());
        let mode = common.mode.map(Mode::from).unwrap_or(cfg.mode);
        let table = sweep::refinement_study(&cfg, mode, levels).map_err(Failure::Solver)?;
        table.print();
        table.write_csv(&dir.join("convergence.csv")).map_err(io_err(&dir))?;
        return Ok(());
    }
    let forced = Common {
        out: common.out.clone(),
        seed: common.seed,
        mode: Some(ModeArg::Both),
    };
    let (report, dir) = execute("compare", &cfg, &forced)?;
    println!("{:>12}  {:>12}", "t", "distance");
    for c in &report.cross_distance {
        println!("{:>12.5e}  {:>12.5e}", c.t, c.distance);
    }
    if let Some(max) = report.max_cross_distance() {
        println!("max cross distance {max:.3e}");
    }
    println!("report written to {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, common } => cmd_run(config, common),
        Command::Verify {
            config,
            report,
            common,
            corrupt_a1,
        } => cmd_verify(config.as_deref(), report.as_deref(), common, *corrupt_a1),
        Command::Compare { config, common, sweep } => cmd_compare(config, common, *sweep),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("config error: {e}"),
                Failure::Solver(e) => eprintln!("solver error: {e}"),
                Failure::Io(e) => eprintln!("i/o error: {e}"),
                Failure::Verify => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
