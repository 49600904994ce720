use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use elsim::check;
use elsim::config::RunConfig;
use elsim::diagnostics;
use elsim::grid::Spectral;
use elsim::run::{self, Mode, Outcome};
use elsim::snapshot;
use elsim::solver::Solver;

#[derive(Parser)]
#[command(name = "elsim", version, about = "Periodic Ericksen-Leslie simulator with Oseen-Frank elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the coupled flow described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides [output] dir.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Relax the director by its gradient flow with the velocity held at zero.
    Minimize {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the acceptance suite and print one verdict per criterion.
    Check,
    /// Evaluate one diagnostic on snapshot files.
    Diag {
        name: DiagName,
        snapshot: PathBuf,
        /// Second snapshot, required by uniqueness_gap.
        other: Option<PathBuf>,
        /// Config supplying elastic constants and ball radii.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DiagName {
    Energy,
    Dissipation,
    L3Uloc,
    UniquenessGap,
    Interpolation,
    Divergence,
}

fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    RunConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn simulate(config: &Path, output: Option<PathBuf>, mode: Mode) -> Result<ExitCode, String> {
    let cfg = load_config(config)?;
    let dir = output.unwrap_or_else(|| cfg.output.dir.clone());
    let summary = run::run(&cfg, mode, Some(&dir)).map_err(|e| e.to_string())?;
    if let Some(s) = summary.calibration_scale {
        println!("calibrated amplitude scale {s}");
    }
    let last = summary.records.last().expect("at least the initial record");
    println!("steps {}  t {}  E_total {:.6e}  energy residual {:.3e}", summary.steps, summary.last.t, last.e_total, summary.max_energy_residual);
    println!("diagnostics written to {}", dir.join("diagnostics.csv").display());
    match &summary.outcome {
        Outcome::Completed => println!("completed"),
        Outcome::CeilingExceeded { t, norm, radius } => {
            println!("blow-up: critical norm {norm:.6e} on radius {radius} exceeded the ceiling at t = {t}")
        }
        Outcome::NonFinite { t, reason } => println!("blow-up at t = {t}: {reason}"),
    }
    Ok(ExitCode::from(summary.outcome.exit_code() as u8))
}

fn diag(name: DiagName, a: &Path, b: Option<&Path>, config: Option<&Path>) -> Result<(), String> {
    let cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let read = |p: &Path| snapshot::read_snapshot(p).map_err(|e| format!("{}: {e}", p.display()));
    let state = read(a)?;
    let grid = state.grid();
    let ops = Spectral::with_mode(grid, cfg.diag.derivatives);
    let stride = cfg.diag.center_stride;
    match name {
        DiagName::Energy => {
            let e = diagnostics::total_energy(&ops, &state, &cfg.frank);
            println!("E_total {}\nE_elastic {}\nE_kinetic {}", e.total, e.elastic, e.kinetic);
        }
        DiagName::Dissipation => {
            let solver = Solver::new(grid, cfg.frank, cfg.scheme).map_err(|e| e.to_string())?;
            println!("dissipation_rate {}", diagnostics::dissipation_rate(&solver, &state).map_err(|e| e.to_string())?);
        }
        DiagName::L3Uloc => {
            let grad_u = ops.gradient(&state.u);
            for &r in &cfg.diag.radii {
                let v = diagnostics::l3_uloc(&state.v, r, stride).map_err(|e| e.to_string())?;
                let g = diagnostics::l3_uloc(&grad_u, r, stride).map_err(|e| e.to_string())?;
                let c = diagnostics::critical_norm(&ops, &state, r, stride).map_err(|e| e.to_string())?;
                println!("R {r}: l3_uloc_v {v} l3_uloc_gradu {g} critical {c}");
            }
        }
        DiagName::UniquenessGap => {
            let other = read(b.ok_or("uniqueness_gap needs two snapshots")?)?;
            let gap = diagnostics::uniqueness_gap(&ops, &state, &other).map_err(|e| e.to_string())?;
            println!("{}", gap.phi);
            println!("xi_sq {}\ngrad_xi_sq {}\nw_sq {}", gap.xi_sq, gap.grad_xi_sq, gap.w_sq);
        }
        DiagName::Interpolation => {
            for &r in &cfg.diag.radii {
                let ratio = diagnostics::interpolation_ratio_max(&ops, &state.v, r, stride).map_err(|e| e.to_string())?;
                println!("R {r}: interpolation_ratio_max {ratio}");
            }
        }
        DiagName::Divergence => {
            let (drift, div) = diagnostics::constraint_defects(&ops, &state);
            println!("div_v_inf {div}\nmax_unit_drift {drift}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, output } => simulate(&config, output, Mode::Dynamic),
        Command::Minimize { config, output } => simulate(&config, output, Mode::Minimize),
        Command::Check => {
            let mut all = true;
            for (_, _, criterion) in check::CRITERIA {
                let outcome = criterion();
                println!("{outcome}");
                all &= outcome.passed;
            }
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Diag { name, snapshot, other, config } => {
            diag(name, &snapshot, other.as_deref(), config.as_deref()).map(|()| ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
