//! Run orchestration: initial data, the time loop, diagnostics and output.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::RunConfig;
use crate::csv;
use crate::diagnostics::{self, DiagnosticsError, DiagnosticsRecord, EnergyBalance, LocalEnergyReport, LocalEnergyTracker};
use crate::grid::{Ball, GridField, Spectral, VectorField};
use crate::initial::{self, InitialError};
use crate::snapshot::{self, SnapshotError};
use crate::solver::{FlowState, Solver, SolverError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Initial(#[from] InitialError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Full coupled flow.
    Dynamic,
    /// Director gradient flow with `v ≡ 0`.
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    /// The critical norm crossed the configured ceiling; the state is still finite.
    CeilingExceeded { t: f64, norm: f64, radius: f64 },
    /// The solver produced non-finite values.
    NonFinite { t: f64, reason: String },
}

impl Outcome {
    pub fn is_blowup(&self) -> bool {
        !matches!(self, Outcome::Completed)
    }

    /// Process exit status: 0 for a completed run, 2 for any blow-up.
    pub fn exit_code(&self) -> i32 {
        if self.is_blowup() {
            2
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub steps: u64,
    pub initial: FlowState,
    /// Last finite state reached.
    pub last: FlowState,
    pub records: Vec<DiagnosticsRecord>,
    pub max_energy_residual: f64,
    /// Largest `‖∇·v‖∞` seen after any step.
    pub max_divergence: f64,
    /// Largest director drift before renormalization over all steps.
    pub max_drift: f64,
    pub local_energy: LocalEnergyReport,
    pub calibration_scale: Option<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Initial state of a configuration, after optional calibration.
pub fn initial_state(cfg: &RunConfig, mode: Mode) -> Result<(FlowState, Option<f64>), RunError> {
    let grid = cfg.grid();
    let (u, mut v, scale) = match cfg.calibrate {
        Some(target) => {
            let c = initial::calibrate_smallness(grid, &cfg.director, &cfg.velocity, cfg.diag.radii[0], cfg.diag.center_stride, target)?;
            (c.u, c.v, Some(c.scale))
        }
        None => (initial::make_director(&cfg.director, grid)?, initial::make_velocity(&cfg.velocity, grid)?, None),
    };
    if mode == Mode::Minimize {
        v = VectorField::zeros(grid);
    }
    Ok((FlowState::new(v, u)?, scale))
}

struct Output {
    dir: PathBuf,
    csv: PathBuf,
}

impl Output {
    fn create(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let csv = dir.join("diagnostics.csv");
        if csv.exists() {
            fs::remove_file(&csv).map_err(io_err(&csv))?;
        }
        Ok(Self { dir: dir.to_path_buf(), csv })
    }

    fn record(&self, r: &DiagnosticsRecord) -> Result<(), RunError> {
        csv::append_diagnostics(r, &self.csv).map_err(io_err(&self.csv))
    }

    fn snapshot(&self, state: &FlowState, step: u64) -> Result<(), RunError> {
        Ok(snapshot::write_snapshot(state, &self.dir.join(snapshot_name(step)))?)
    }
}

pub fn snapshot_name(step: u64) -> String {
    format!("snapshot_{step:08}.elof")
}

struct Monitor<'a> {
    cfg: &'a RunConfig,
    ops: Spectral,
    balance: EnergyBalance,
    tracker: LocalEnergyTracker,
    records: Vec<DiagnosticsRecord>,
    max_divergence: f64,
}

impl<'a> Monitor<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, RunError> {
        let grid = cfg.grid();
        let centre = [0.5 * grid.l(); 3];
        let ball = Ball::new(grid, centre, cfg.diag.radii[0]).map_err(DiagnosticsError::from)?;
        Ok(Self {
            cfg,
            ops: Spectral::with_mode(grid, cfg.diag.derivatives),
            balance: EnergyBalance::new(),
            tracker: LocalEnergyTracker::new(grid, ball, cfg.cutoff_width(), cfg.frank.a())?,
            records: Vec::new(),
            max_divergence: 0.0,
        })
    }

    fn observe(&mut self, solver: &Solver, state: &FlowState) -> Result<(), RunError> {
        let e = diagnostics::total_energy(solver.ops(), state, &self.cfg.frank).total;
        let d = diagnostics::dissipation_rate(solver, state)?;
        self.balance.push(state.t, e, d);
        self.max_divergence = self.max_divergence.max(self.ops.divergence(&state.v).max_abs());
        Ok(())
    }

    fn ceiling(&self, state: &FlowState) -> Result<Option<Outcome>, RunError> {
        if !self.cfg.diag.ceiling.is_finite() {
            return Ok(None);
        }
        let verdict = diagnostics::blowup_monitor(&self.ops, state, self.cfg.diag.ceiling, &self.cfg.diag.radii, self.cfg.diag.center_stride)?;
        Ok(verdict.entries.iter().find(|e| e.flagged).map(|e| Outcome::CeilingExceeded { t: state.t, norm: e.norm, radius: e.radius }))
    }

    fn record(&mut self, solver: &Solver, state: &FlowState, drift: f64) -> Result<DiagnosticsRecord, RunError> {
        self.tracker.push(state);
        let r0 = self.cfg.diag.radii[0];
        let stride = self.cfg.diag.center_stride;
        let energies = diagnostics::total_energy(solver.ops(), state, &self.cfg.frank);
        let grad_u = self.ops.gradient(&state.u);
        let rec = DiagnosticsRecord {
            t: state.t,
            e_total: energies.total,
            e_elastic: energies.elastic,
            e_kinetic: energies.kinetic,
            dissipation_rate: diagnostics::dissipation_rate(solver, state)?,
            energy_balance_residual: self.balance.residual(),
            l3_uloc_v: diagnostics::l3_uloc(&state.v, r0, stride)?,
            l3_uloc_gradu: diagnostics::l3_uloc(&grad_u, r0, stride)?,
            max_unit_drift: drift,
            div_v_inf: self.ops.divergence(&state.v).max_abs(),
            interpolation_ratio_max: diagnostics::interpolation_ratio_max(&self.ops, &state.v, r0, stride)?,
            local_energy_margin: self.tracker.report().margin,
        };
        self.records.push(rec);
        Ok(rec)
    }
}

/// Runs a configuration to `t_end` (or `max_steps`), writing
/// `diagnostics.csv` and snapshots into `output` when given.
pub fn run(cfg: &RunConfig, mode: Mode, output: Option<&Path>) -> Result<RunSummary, RunError> {
    let grid = cfg.grid();
    let mut solver = Solver::new(grid, cfg.frank, cfg.scheme)?;
    let (state, calibration_scale) = initial_state(cfg, mode)?;
    let initial = solver.with_pressure(state)?;
    let out = output.map(Output::create).transpose()?;

    let mut monitor = Monitor::new(cfg)?;

    let mut state = initial.clone();
    let mut step: u64 = 0;
    let mut max_drift = state.u.max_unit_drift();
    monitor.observe(&solver, &state)?;
    let rec = monitor.record(&solver, &state, max_drift)?;
    if let Some(o) = &out {
        o.record(&rec)?;
        o.snapshot(&state, 0)?;
    }
    let mut outcome = monitor.ceiling(&state)?.unwrap_or(Outcome::Completed);
    let mut recorded_last = true;

    let eps = 1e-12 * cfg.t_end.max(1.0);
    while outcome == Outcome::Completed && state.t < cfg.t_end - eps && step < cfg.max_steps {
        let dt = solver.choose_dt(&state)?.min(cfg.t_end - state.t);
        let next = match mode {
            Mode::Dynamic => solver.step_with_dt(&state, dt),
            Mode::Minimize => advance_gradient_flow(&solver, &state, dt),
        };
        let next = match next {
            Ok(s) => s,
            Err(SolverError::BlowupDetected { t, reason }) => {
                outcome = Outcome::NonFinite { t, reason };
                break;
            }
            Err(e) => return Err(e.into()),
        };
        step += 1;
        let drift = match mode {
            Mode::Dynamic => solver.last_drift(),
            Mode::Minimize => 0.0,
        };
        max_drift = max_drift.max(drift);
        state = next;
        monitor.observe(&solver, &state)?;
        recorded_last = false;
        if let Some(flag) = monitor.ceiling(&state)? {
            outcome = flag;
            break;
        }
        if step % cfg.diag.cadence == 0 {
            let rec = monitor.record(&solver, &state, drift)?;
            recorded_last = true;
            if let Some(o) = &out {
                o.record(&rec)?;
            }
        }
        if let Some(o) = &out {
            if cfg.output.snapshot_every > 0 && step % cfg.output.snapshot_every == 0 {
                o.snapshot(&state, step)?;
            }
        }
    }

    if !recorded_last {
        let drift = if mode == Mode::Dynamic { solver.last_drift() } else { 0.0 };
        let rec = monitor.record(&solver, &state, drift)?;
        if let Some(o) = &out {
            o.record(&rec)?;
        }
    }
    if let Some(o) = &out {
        o.snapshot(&state, step)?;
    }

    Ok(RunSummary {
        outcome,
        steps: step,
        initial,
        last: state,
        max_energy_residual: monitor.balance.max_residual(),
        max_divergence: monitor.max_divergence,
        max_drift,
        local_energy: monitor.tracker.report(),
        records: monitor.records,
        calibration_scale,
    })
}

fn advance_gradient_flow(solver: &Solver, state: &FlowState, dt: f64) -> Result<FlowState, SolverError> {
    let t = state.t + dt;
    let u = solver.gradient_flow_step(&state.u, dt).map_err(|e| match e {
        SolverError::BlowupDetected { reason, .. } => SolverError::BlowupDetected { t, reason },
        other => other,
    })?;
    let next = FlowState { v: VectorField::zeros(state.grid()), u, p: state.p.clone(), t };
    solver.with_pressure(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::InitialKind;
    use crate::solver::SchemeConfig;

    fn small() -> RunConfig {
        let mut cfg = RunConfig { n: 16, t_end: 0.05, ..RunConfig::default() };
        cfg.diag.cadence = 2;
        cfg
    }

    #[test]
    fn default_run_writes_csv_and_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let summary = run(&cfg, Mode::Dynamic, Some(dir.path())).unwrap();
        assert_eq!(summary.outcome, Outcome::Completed);
        assert!((summary.last.t - cfg.t_end).abs() < 1e-12);
        let rows = csv::read_diagnostics(&dir.path().join("diagnostics.csv")).unwrap();
        assert_eq!(rows, summary.records);
        assert_eq!(rows[0].t, 0.0);
        assert_eq!(rows.last().unwrap().t, summary.last.t);
        for r in &rows {
            assert!(r.values().iter().all(|x| x.is_finite()));
            assert!((r.e_total - r.e_elastic - r.e_kinetic).abs() <= 1e-12 * r.e_total.abs().max(1.0));
        }
        let first = snapshot::read_snapshot(&dir.path().join(snapshot_name(0))).unwrap();
        assert_eq!(first, summary.initial);
        let last = snapshot::read_snapshot(&dir.path().join(snapshot_name(summary.steps))).unwrap();
        assert_eq!(last, summary.last);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small();
        let a = run(&cfg, Mode::Dynamic, None).unwrap();
        let b = run(&cfg, Mode::Dynamic, None).unwrap();
        assert_eq!(snapshot::encode(&a.last), snapshot::encode(&b.last));
    }

    #[test]
    fn minimize_lowers_elastic_energy() {
        let mut cfg = small();
        cfg.director.kind = InitialKind::RandomSmooth;
        cfg.director.amplitude = 0.5;
        cfg.t_end = 0.2;
        let s = run(&cfg, Mode::Minimize, None).unwrap();
        assert_eq!(s.outcome, Outcome::Completed);
        assert!(s.records.iter().all(|r| r.e_kinetic == 0.0));
        for w in s.records.windows(2) {
            assert!(w[1].e_total <= w[0].e_total);
        }
        assert!(s.records.last().unwrap().e_total < 0.9 * s.records[0].e_total);
    }

    #[test]
    fn low_ceiling_stops_the_run() {
        let mut cfg = small();
        cfg.diag.ceiling = 1e-3;
        let s = run(&cfg, Mode::Dynamic, None).unwrap();
        assert!(matches!(s.outcome, Outcome::CeilingExceeded { .. }));
        assert_eq!(s.steps, 0);
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let mut cfg = small();
        cfg.scheme = SchemeConfig::fixed(10.0);
        assert!(matches!(run(&cfg, Mode::Dynamic, None), Err(RunError::Solver(SolverError::CflViolation { .. }))));
    }
}
