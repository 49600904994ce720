//! Energies, dissipation, critical-norm monitors, inequality ratios,
//! scaling checks and the two-state stability functional.

use thiserror::Error;

use crate::frank::{self, FrankConstants};
use crate::grid::{Ball, Grid, GridError, GridField, ScalarField, Spectral, VectorField};
use crate::solver::{FlowState, SchemeConfig, Solver, SolverError};

/// Finest grid the rescaling check will build.
pub const MAX_RESOLUTION: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("scaling factor must be a positive integer, got {0}")]
    BadScale(usize),
    #[error("cutoff width {width} must lie in (0, {radius}]")]
    BadCutoff { width: f64, radius: f64 },
}

impl From<frank::FrankError> for DiagnosticsError {
    fn from(e: frank::FrankError) -> Self {
        DiagnosticsError::Solver(SolverError::Frank(e))
    }
}

/// Column order of the diagnostics CSV.
pub const RECORD_COLUMNS: [&str; 12] = [
    "t",
    "E_total",
    "E_elastic",
    "E_kinetic",
    "dissipation_rate",
    "energy_balance_residual",
    "l3_uloc_v",
    "l3_uloc_gradu",
    "max_unit_drift",
    "div_v_inf",
    "interpolation_ratio_max",
    "local_energy_margin",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e_total: f64,
    pub e_elastic: f64,
    pub e_kinetic: f64,
    pub dissipation_rate: f64,
    pub energy_balance_residual: f64,
    pub l3_uloc_v: f64,
    pub l3_uloc_gradu: f64,
    pub max_unit_drift: f64,
    pub div_v_inf: f64,
    pub interpolation_ratio_max: f64,
    pub local_energy_margin: f64,
}

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 12] {
        [
            self.t,
            self.e_total,
            self.e_elastic,
            self.e_kinetic,
            self.dissipation_rate,
            self.energy_balance_residual,
            self.l3_uloc_v,
            self.l3_uloc_gradu,
            self.max_unit_drift,
            self.div_v_inf,
            self.interpolation_ratio_max,
            self.local_energy_margin,
        ]
    }

    pub fn from_values(v: [f64; 12]) -> Self {
        Self {
            t: v[0],
            e_total: v[1],
            e_elastic: v[2],
            e_kinetic: v[3],
            dissipation_rate: v[4],
            energy_balance_residual: v[5],
            l3_uloc_v: v[6],
            l3_uloc_gradu: v[7],
            max_unit_drift: v[8],
            div_v_inf: v[9],
            interpolation_ratio_max: v[10],
            local_energy_margin: v[11],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub total: f64,
    pub elastic: f64,
    pub kinetic: f64,
}

/// `E_elastic = ∫W(u, ∇u)`, `E_kinetic = ½∫|v|²`.
pub fn total_energy(ops: &Spectral, state: &FlowState, k: &FrankConstants) -> Energies {
    let grid = state.grid();
    let grad = ops.gradient(&state.u);
    let elastic: f64 = (0..grid.len())
        .map(|idx| frank::energy_density_unchecked(&state.u.at(idx), &grad.at(idx), k))
        .sum::<f64>()
        * grid.cell_volume();
    let kinetic = 0.5 * state.v.l2_norm_sq();
    Energies { total: elastic + kinetic, elastic, kinetic }
}

/// `∫|∇v|² + ∫|P(u) h|²`, the rate at which the energy decreases.
pub fn dissipation_rate(solver: &Solver, state: &FlowState) -> Result<f64, DiagnosticsError> {
    let grad_v = solver.ops().gradient(&state.v);
    let elastic = solver.tangential_elastic(&state.u)?;
    Ok(grad_v.l2_norm_sq() + elastic.l2_norm_sq())
}

/// Running check of `E(t) + ∫₀ᵗ D ds = E(0)` with trapezoidal time quadrature.
#[derive(Debug, Clone, Default)]
pub struct EnergyBalance {
    e0: Option<f64>,
    last: Option<(f64, f64, f64)>,
    integral: f64,
    max_residual: f64,
}

impl EnergyBalance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, energy: f64, dissipation: f64) {
        if let Some((t0, _, d0)) = self.last {
            self.integral += 0.5 * (t - t0) * (d0 + dissipation);
        }
        self.e0.get_or_insert(energy);
        self.last = Some((t, energy, dissipation));
        self.max_residual = self.max_residual.max(self.residual());
    }

    /// `|E(t) + ∫D − E(0)|`, divided by `E(0)` when that is positive.
    pub fn residual(&self) -> f64 {
        match (self.e0, self.last) {
            (Some(e0), Some((_, e, _))) => {
                let r = (e + self.integral - e0).abs();
                if e0 > 0.0 {
                    r / e0
                } else {
                    r
                }
            }
            _ => 0.0,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    pub fn dissipated(&self) -> f64 {
        self.integral
    }
}

/// Residual at the final sample of `(t, E, D)` triples.
pub fn energy_balance_residual(samples: &[(f64, f64, f64)]) -> Result<f64, DiagnosticsError> {
    if samples.len() < 2 {
        return Err(DiagnosticsError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let mut acc = EnergyBalance::new();
    for &(t, e, d) in samples {
        acc.push(t, e, d);
    }
    Ok(acc.residual())
}

/// Integer node offsets within distance `R` of a node.
pub fn ball_offsets(grid: Grid, radius: f64) -> Result<Vec<[i64; 3]>, DiagnosticsError> {
    let ball = Ball::new(grid, [0.0; 3], radius)?;
    Ok(ball
        .members(grid)
        .into_iter()
        .map(|(_, off)| off.map(|x| x.round() as i64))
        .collect())
}

/// Largest `Σ_{ball} density · h³` over node-centred balls on a strided
/// lattice of centers.
pub fn max_ball_sum(density: &ScalarField, radius: f64, stride: usize) -> Result<f64, DiagnosticsError> {
    let grid = density.grid();
    let offsets = ball_offsets(grid, radius)?;
    let n = grid.n() as i64;
    let stride = stride.max(1);
    let data = density.data();
    let mut best = 0.0_f64;
    for k in (0..grid.n()).step_by(stride) {
        for j in (0..grid.n()).step_by(stride) {
            for i in (0..grid.n()).step_by(stride) {
                let sum: f64 = offsets
                    .iter()
                    .map(|o| {
                        let idx = grid.index(
                            (i as i64 + o[0]).rem_euclid(n) as usize,
                            (j as i64 + o[1]).rem_euclid(n) as usize,
                            (k as i64 + o[2]).rem_euclid(n) as usize,
                        );
                        data[idx]
                    })
                    .sum();
                best = best.max(sum);
            }
        }
    }
    Ok(best * grid.cell_volume())
}

/// `max_x ‖f‖_{L³(B_R(x))}` over strided node centers.
pub fn l3_uloc<F: GridField>(f: &F, radius: f64, stride: usize) -> Result<f64, DiagnosticsError> {
    let cube = f.magnitude().map_components(|c| c.iter().map(|x| x * x * x).collect());
    Ok(max_ball_sum(&cube, radius, stride)?.cbrt())
}

/// Pointwise `|v|³ + |∇u|³`.
pub fn critical_density(ops: &Spectral, state: &FlowState) -> ScalarField {
    let v = state.v.magnitude();
    let g = ops.gradient(&state.u).magnitude();
    v.zip_components(&g, |a, b| a.powi(3) + b.powi(3))
}

/// `max_x ‖(v, ∇u)‖_{L³(B_R(x))}`.
pub fn critical_norm(ops: &Spectral, state: &FlowState, radius: f64, stride: usize) -> Result<f64, DiagnosticsError> {
    Ok(max_ball_sum(&critical_density(ops, state), radius, stride)?.cbrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupEntry {
    pub radius: f64,
    pub norm: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupVerdict {
    pub entries: Vec<BlowupEntry>,
}

impl BlowupVerdict {
    pub fn flagged(&self) -> bool {
        self.entries.iter().any(|e| e.flagged)
    }

    pub fn max_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.norm).fold(0.0, f64::max)
    }
}

/// Flags every radius whose critical norm exceeds `eps0`; non-finite norms
/// are always flagged.
pub fn blowup_monitor(
    ops: &Spectral,
    state: &FlowState,
    eps0: f64,
    radii: &[f64],
    stride: usize,
) -> Result<BlowupVerdict, DiagnosticsError> {
    let density = critical_density(ops, state);
    let entries = radii
        .iter()
        .map(|&r| {
            let norm = max_ball_sum(&density, r, stride)?.cbrt();
            Ok(BlowupEntry { radius: r, norm, flagged: !(norm <= eps0) })
        })
        .collect::<Result<Vec<_>, DiagnosticsError>>()?;
    Ok(BlowupVerdict { entries })
}

/// Parabolic rescaling on the same box: `v^λ(x) = λ v(λx)`, `u^λ(x) = u(λx)`,
/// `p^λ(x) = λ² p(λx)`, `t^λ = t/λ²`, sampled on a `λN` grid. Fine node `j`
/// sits at `λ·x_j = x_{j mod N}`, so the samples are copied exactly.
pub fn rescale_state(state: &FlowState, lambda: usize) -> Result<FlowState, DiagnosticsError> {
    if lambda == 0 {
        return Err(DiagnosticsError::BadScale(lambda));
    }
    let coarse = state.grid();
    let n_fine = coarse.n() * lambda;
    if n_fine > MAX_RESOLUTION {
        return Err(GridError::ResolutionExceeded { requested: n_fine, limit: MAX_RESOLUTION }.into());
    }
    let fine = Grid::new(n_fine, coarse.l())?;
    let n = coarse.n();
    let remap = |src: &[f64], scale: f64| -> Vec<f64> {
        (0..fine.len())
            .map(|idx| {
                let [i, j, k] = fine.coords(idx);
                src[coarse.index(i % n, j % n, k % n)] * scale
            })
            .collect()
    };
    let lam = lambda as f64;
    let v = VectorField::from_components(fine, std::array::from_fn(|i| remap(state.v.component(i), lam)));
    let u = VectorField::from_components(fine, std::array::from_fn(|i| remap(state.u.component(i), 1.0)));
    let p = ScalarField::from_vec(fine, remap(state.p.data(), lam * lam));
    Ok(FlowState { v, u, p, t: state.t / (lam * lam) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingReport {
    pub lambda: usize,
    pub original: f64,
    pub rescaled: f64,
    pub relative_gap: f64,
}

/// Compares `∫_{B_R(x₀)} |v|³ + |∇u|³` with the same integral of the rescaled
/// state over `B_{R/λ}(x₀/λ)`.
pub fn scaling_check(state: &FlowState, lambda: usize, center: [f64; 3], radius: f64) -> Result<ScalingReport, DiagnosticsError> {
    let grid = state.grid();
    let ops = Spectral::new(grid);
    let ball = Ball::new(grid, center, radius)?;
    let original = ball_sum(&critical_density(&ops, state), &ball);
    let scaled = rescale_state(state, lambda)?;
    let fine = scaled.grid();
    let lam = lambda as f64;
    let fine_ops = Spectral::new(fine);
    let fine_ball = Ball::new(fine, center.map(|c| c / lam), radius / lam)?;
    let rescaled = ball_sum(&critical_density(&fine_ops, &scaled), &fine_ball);
    let relative_gap = if original == 0.0 { (rescaled - original).abs() } else { (rescaled - original).abs() / original };
    Ok(ScalingReport { lambda, original, rescaled, relative_gap })
}

fn ball_sum(density: &ScalarField, ball: &Ball) -> f64 {
    let grid = density.grid();
    ball.members(grid).iter().map(|(idx, _)| density.data()[*idx]).sum::<f64>() * grid.cell_volume()
}

/// Steps the state once with `dt` and the rescaled state once with `dt/λ²`,
/// then returns the largest difference between the rescaled result and the
/// result of the rescaled run, relative to the field magnitudes.
pub fn scaling_step_check(
    state: &FlowState,
    k: FrankConstants,
    cfg: SchemeConfig,
    lambda: usize,
    dt: f64,
) -> Result<f64, DiagnosticsError> {
    let lam = lambda as f64;
    let mut coarse = Solver::new(state.grid(), k, cfg)?;
    let stepped = coarse.step_with_dt(state, dt)?;
    let expected = rescale_state(&stepped, lambda)?;
    let scaled = rescale_state(state, lambda)?;
    let mut fine = Solver::new(scaled.grid(), k, cfg)?;
    let got = fine.step_with_dt(&scaled, dt / (lam * lam))?;
    let rel = |a: &VectorField, b: &VectorField| {
        a.zip_components(b, |x, y| x - y).max_abs() / b.max_abs().max(f64::MIN_POSITIVE)
    };
    let dp = got.p.zip_components(&expected.p, |x, y| x - y).max_abs() / expected.p.max_abs().max(1e-300);
    let dp = if expected.p.max_abs() == 0.0 { got.p.max_abs() } else { dp };
    Ok(rel(&got.v, &expected.v).max(rel(&got.u, &expected.u)).max(dp))
}

/// `∫_{B_r}|f|³ / [(r⁻¹∫|f|²)^{3/4} (r∫|∇f|²)^{3/4} + (r⁻¹∫|f|²)^{3/2}]`
/// from pointwise `|f|` and `|∇f|²`; `0/0` is reported as `0`.
pub fn interpolation_ratio_from(f_abs: &ScalarField, grad_sq: &ScalarField, ball: &Ball) -> f64 {
    let grid = f_abs.grid();
    let dv = grid.cell_volume();
    let r = ball.radius();
    let (mut i3, mut i2, mut d2) = (0.0, 0.0, 0.0);
    for (idx, _) in ball.members(grid) {
        let f = f_abs.data()[idx];
        i3 += f * f * f;
        i2 += f * f;
        d2 += grad_sq.data()[idx];
    }
    let (i3, i2, d2) = (i3 * dv, i2 * dv, d2 * dv);
    let low = i2 / r;
    let denom = low.powf(0.75) * (r * d2).powf(0.75) + low.powf(1.5);
    if denom == 0.0 {
        0.0
    } else {
        i3 / denom
    }
}

pub fn interpolation_ratio_scalar(ops: &Spectral, f: &ScalarField, ball: &Ball) -> f64 {
    let grad_sq = ops.gradient_scalar(f).magnitude().map_components(|c| c.iter().map(|x| x * x).collect());
    interpolation_ratio_from(&f.magnitude(), &grad_sq, ball)
}

pub fn interpolation_ratio_vector(ops: &Spectral, v: &VectorField, ball: &Ball) -> f64 {
    let grad_sq = ops.gradient(v).magnitude().map_components(|c| c.iter().map(|x| x * x).collect());
    interpolation_ratio_from(&v.magnitude(), &grad_sq, ball)
}

/// Largest interpolation ratio of `v` over strided node-centred balls.
pub fn interpolation_ratio_max(ops: &Spectral, v: &VectorField, radius: f64, stride: usize) -> Result<f64, DiagnosticsError> {
    let grid = v.grid();
    let grad_sq = ops.gradient(v).magnitude().map_components(|c| c.iter().map(|x| x * x).collect());
    let mag = v.magnitude();
    let mut best = 0.0_f64;
    let stride = stride.max(1);
    for k in (0..grid.n()).step_by(stride) {
        for j in (0..grid.n()).step_by(stride) {
            for i in (0..grid.n()).step_by(stride) {
                let center = grid.position(grid.index(i, j, k));
                let ball = Ball::new(grid, center, radius)?;
                best = best.max(interpolation_ratio_from(&mag, &grad_sq, &ball));
            }
        }
    }
    Ok(best)
}

/// Radial cutoff equal to 1 on `ρ ≤ R − w` and `(1 − s²)²` with
/// `s = (ρ − R + w)/w` on the outer shell; `w = R` gives `(1 − (ρ/R)²)²`.
#[derive(Debug, Clone)]
pub struct Cutoff {
    pub phi: ScalarField,
    pub grad: VectorField,
}

impl Cutoff {
    pub fn new(grid: Grid, ball: &Ball, width: f64) -> Result<Self, DiagnosticsError> {
        let r = ball.radius();
        if !(width > 0.0 && width <= r) {
            return Err(DiagnosticsError::BadCutoff { width, radius: r });
        }
        let l = grid.l();
        let c = ball.center();
        let mut phi = ScalarField::zeros(grid);
        let mut grad = VectorField::zeros(grid);
        for idx in 0..grid.len() {
            let x = grid.position(idx);
            let d: [f64; 3] = std::array::from_fn(|a| {
                let mut e = (x[a] - c[a]).rem_euclid(l);
                if e > 0.5 * l {
                    e -= l;
                }
                e
            });
            let rho = frank::norm(&d);
            if rho >= r {
                continue;
            }
            let inner = r - width;
            if rho <= inner {
                phi.data_mut()[idx] = 1.0;
                continue;
            }
            let s = (rho - inner) / width;
            let one = 1.0 - s * s;
            phi.data_mut()[idx] = one * one;
            let dphi = -4.0 * s * one / width;
            grad.set(idx, d.map(|x| dphi * x / rho));
        }
        Ok(Self { phi, grad })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEnergySample {
    pub t: f64,
    pub lhs: f64,
    /// Initial-data term plus the pressure flux term.
    pub base: f64,
    /// Coefficient of the fitted constant: quartic plus cutoff-gradient terms.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalEnergyBreakdown {
    pub initial: f64,
    pub pressure: f64,
    pub quartic: f64,
    pub cutoff_gradient: f64,
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEnergyReport {
    pub c_report: f64,
    pub margin: f64,
    pub breakdown: LocalEnergyBreakdown,
    pub samples: Vec<LocalEnergySample>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Integrands {
    t: f64,
    dissipation: f64,
    pressure: f64,
    quartic: f64,
    cutoff_gradient: f64,
}

/// Accumulates the terms of the localized energy inequality along a
/// trajectory: `LHS = ∫(|v|²+|∇u|²)φ² + ∫∫(|∇v|²+a|∇²u|²)φ²` against
/// `initial + 4∫∫(p − c)v·∇φ φ + C[∫∫(|v|⁴+|∇u|⁴)φ² + ∫∫(|v|²+|∇u|²)|∇φ|²]`,
/// with `c(t)` the ball average of `p`.
#[derive(Debug, Clone)]
pub struct LocalEnergyTracker {
    ops: Spectral,
    ball: Ball,
    members: Vec<usize>,
    cutoff: Cutoff,
    a: f64,
    previous: Option<Integrands>,
    totals: LocalEnergyBreakdown,
    samples: Vec<LocalEnergySample>,
}

impl LocalEnergyTracker {
    pub fn new(grid: Grid, ball: Ball, width: f64, a: f64) -> Result<Self, DiagnosticsError> {
        let cutoff = Cutoff::new(grid, &ball, width)?;
        let members = ball.members(grid).into_iter().map(|(idx, _)| idx).collect();
        Ok(Self {
            ops: Spectral::new(grid),
            ball,
            members,
            cutoff,
            a,
            previous: None,
            totals: LocalEnergyBreakdown::default(),
            samples: Vec::new(),
        })
    }

    pub fn ball(&self) -> &Ball {
        &self.ball
    }

    pub fn push(&mut self, state: &FlowState) {
        let grid = state.grid();
        let dv = grid.cell_volume();
        let grad_u = self.ops.gradient(&state.u);
        let grad_v = self.ops.gradient(&state.v);
        let hess = self.ops.hessian_norm_sq(&state.u);
        let c = self.members.iter().map(|&i| state.p.data()[i]).sum::<f64>() / self.members.len() as f64;
        let phi = self.cutoff.phi.data();
        let mut local = 0.0;
        let mut cur = Integrands { t: state.t, ..Integrands::default() };
        for idx in 0..grid.len() {
            let ph = phi[idx];
            let gphi = self.cutoff.grad.at(idx);
            if ph == 0.0 && gphi == [0.0; 3] {
                continue;
            }
            let v = state.v.at(idx);
            let v2 = frank::dot(&v, &v);
            let gu2 = frank::frobenius_sq(&grad_u.at(idx));
            let ph2 = ph * ph;
            local += (v2 + gu2) * ph2;
            cur.dissipation += (frank::frobenius_sq(&grad_v.at(idx)) + self.a * hess.data()[idx]) * ph2;
            cur.pressure += 4.0 * (state.p.data()[idx] - c) * frank::dot(&v, &gphi) * ph;
            cur.quartic += (v2 * v2 + gu2 * gu2) * ph2;
            cur.cutoff_gradient += (v2 + gu2) * frank::dot(&gphi, &gphi);
        }
        local *= dv;
        cur.dissipation *= dv;
        cur.pressure *= dv;
        cur.quartic *= dv;
        cur.cutoff_gradient *= dv;
        match self.previous {
            None => self.totals.initial = local,
            Some(prev) => {
                let h = 0.5 * (cur.t - prev.t);
                self.totals.dissipation += h * (prev.dissipation + cur.dissipation);
                self.totals.pressure += h * (prev.pressure + cur.pressure);
                self.totals.quartic += h * (prev.quartic + cur.quartic);
                self.totals.cutoff_gradient += h * (prev.cutoff_gradient + cur.cutoff_gradient);
            }
        }
        self.previous = Some(cur);
        self.samples.push(LocalEnergySample {
            t: state.t,
            lhs: local + self.totals.dissipation,
            base: self.totals.initial + self.totals.pressure,
            weight: self.totals.quartic + self.totals.cutoff_gradient,
        });
    }

    /// Smallest constant making the inequality hold at every sample so far,
    /// and the resulting minimal slack.
    pub fn report(&self) -> LocalEnergyReport {
        let mut c: f64 = 0.0;
        for s in &self.samples {
            let excess = s.lhs - s.base;
            if excess > 0.0 {
                c = c.max(if s.weight > 0.0 { excess / s.weight } else { f64::INFINITY });
            }
        }
        let margin = self
            .samples
            .iter()
            .map(|s| {
                let extra = if s.weight == 0.0 { 0.0 } else { c * s.weight };
                s.base + extra - s.lhs
            })
            .fold(f64::INFINITY, f64::min);
        LocalEnergyReport {
            c_report: c,
            margin: if self.samples.is_empty() { 0.0 } else { margin },
            breakdown: self.totals,
            samples: self.samples.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniquenessGap {
    pub phi: f64,
    pub xi_sq: f64,
    pub grad_xi_sq: f64,
    pub w_sq: f64,
}

/// `Φ = ‖ξ‖² + ‖∇ξ‖² + ‖w‖²` with `ξ = (I − Δ)⁻¹(v₁ − v₂)`, `w = u₁ − u₂`.
pub fn uniqueness_gap(ops: &Spectral, a: &FlowState, b: &FlowState) -> Result<UniquenessGap, DiagnosticsError> {
    crate::grid::ensure_same_grid(a.grid(), b.grid())?;
    crate::grid::ensure_same_grid(ops.grid(), a.grid())?;
    let dv = a.v.zip_components(&b.v, |x, y| x - y);
    let xi = ops.helmholtz_inverse(&dv, 1.0);
    let xi_sq = xi.l2_norm_sq();
    let grad_xi_sq = ops.gradient(&xi).l2_norm_sq();
    let w_sq = a.u.zip_components(&b.u, |x, y| x - y).l2_norm_sq();
    Ok(UniquenessGap { phi: xi_sq + grad_xi_sq + w_sq, xi_sq, grad_xi_sq, w_sq })
}

/// Smallest `C` with `Φ(t) ≤ Φ(t₀) e^{C (t − t₀)}` at every later sample.
pub fn gronwall_rate(samples: &[(f64, f64)]) -> Result<f64, DiagnosticsError> {
    if samples.len() < 2 {
        return Err(DiagnosticsError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let (t0, phi0) = samples[0];
    Ok(samples[1..]
        .iter()
        .map(|&(t, phi)| (phi / phi0).ln() / (t - t0))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest `| |u| − 1 |` and `‖∇·v‖∞` of a state.
pub fn constraint_defects(ops: &Spectral, state: &FlowState) -> (f64, f64) {
    (state.u.max_unit_drift(), ops.divergence(&state.v).max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    fn twist_state(g: Grid, tau: f64) -> FlowState {
        let u = VectorField::from_fn(g, |x| [(tau * x[2]).cos(), (tau * x[2]).sin(), 0.0]);
        FlowState::new(VectorField::zeros(g), u).unwrap()
    }

    #[test]
    fn constant_state_has_no_energy() {
        let g = grid(16);
        let ops = Spectral::new(g);
        let e = total_energy(&ops, &FlowState::equilibrium(g, [0.0, 1.0, 0.0]), &FrankConstants::default());
        assert_eq!(e, Energies { total: 0.0, elastic: 0.0, kinetic: 0.0 });
    }

    #[test]
    fn twist_energy_matches_closed_form() {
        let g = grid(16);
        let ops = Spectral::new(g);
        let k = FrankConstants::new(1.4, 0.8, 2.0, 0.3).unwrap();
        let e = total_energy(&ops, &twist_state(g, 2.0), &k);
        let expected = k.k2() * 4.0 * g.volume();
        assert!((e.total - expected).abs() < 1e-10 * expected);
        assert_eq!(e.total, e.elastic + e.kinetic);
    }

    #[test]
    fn energy_balance_accumulates_trapezoids() {
        assert!(energy_balance_residual(&[(0.0, 1.0, 0.0)]).is_err());
        let samples = [(0.0, 1.0, 2.0), (0.1, 0.8, 2.0), (0.2, 0.6, 2.0)];
        assert!(energy_balance_residual(&samples).unwrap() < 1e-15);
        let flat = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)];
        assert_eq!(energy_balance_residual(&flat).unwrap(), 0.0);
    }

    #[test]
    fn l3_uloc_of_constants_and_zero() {
        let g = grid(16);
        assert_eq!(l3_uloc(&ScalarField::zeros(g), 1.0, 2).unwrap(), 0.0);
        let c = 1.7;
        let f = ScalarField::constant(g, c);
        let ball = Ball::new(g, [0.0; 3], 1.0).unwrap();
        let expected = c * ball.discrete_volume(g).cbrt();
        assert!((l3_uloc(&f, 1.0, 3).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(l3_uloc(&f, 3.5, 1), Err(DiagnosticsError::Grid(GridError::BallTooLarge { .. }))));
    }

    #[test]
    fn l3_uloc_is_monotone_and_homogeneous() {
        let g = grid(16);
        let f = ScalarField::from_fn(g, |x| (x[0] + 0.3).sin() * (2.0 * x[1]).cos() + 0.2 * x[2].sin());
        let a = l3_uloc(&f, 0.8, 1).unwrap();
        let b = l3_uloc(&f, 1.6, 1).unwrap();
        assert!(b >= a);
        let s = l3_uloc(&f.scaled(-3.0), 0.8, 1).unwrap();
        assert!((s - 3.0 * a).abs() < 1e-12 * s);
    }

    #[test]
    fn constant_gradient_critical_norm_grows_with_radius() {
        let g = grid(32);
        let ops = Spectral::new(g);
        let tau = 1.0;
        let state = twist_state(g, tau);
        // |∇u| = τ everywhere, so the norm is τ·(discrete ball volume)^{1/3}
        for r in [0.5, 1.0, 2.0] {
            let n = critical_norm(&ops, &state, r, 4).unwrap();
            let vol = Ball::new(g, [0.0; 3], r).unwrap().discrete_volume(g);
            assert!((n - tau * vol.cbrt()).abs() < 1e-10);
        }
        let n1 = critical_norm(&ops, &state, 1.0, 4).unwrap();
        let verdict = blowup_monitor(&ops, &state, n1 * 1.0001, &[0.5, 1.0, 2.0], 4).unwrap();
        assert_eq!(verdict.entries.iter().map(|e| e.flagged).collect::<Vec<_>>(), vec![false, false, true]);
        let zero = FlowState::equilibrium(g, [0.0, 0.0, 1.0]);
        assert!(!blowup_monitor(&ops, &zero, 1e-12, &[1.0], 2).unwrap().flagged());
    }

    #[test]
    fn rescaling_copies_samples() {
        let g = grid(16);
        let mut state = twist_state(g, 1.0);
        state.v = VectorField::from_fn(g, |x| [x[1].sin(), 0.0, 0.0]);
        state.p = ScalarField::from_fn(g, |x| x[0].cos());
        let r = rescale_state(&state, 2).unwrap();
        assert_eq!(r.grid().n(), 32);
        let idx_c = g.index(3, 5, 7);
        let idx_f = r.grid().index(19, 5, 23);
        assert_eq!(r.v.at(idx_f), state.v.at(idx_c).map(|x| 2.0 * x));
        assert_eq!(r.u.at(idx_f), state.u.at(idx_c));
        assert_eq!(r.p.data()[idx_f], 4.0 * state.p.data()[idx_c]);
        assert!(matches!(
            rescale_state(&r, 8),
            Err(DiagnosticsError::Grid(GridError::ResolutionExceeded { .. }))
        ));
        let same = scaling_check(&state, 1, [1.0, 2.0, 3.0], 1.2).unwrap();
        assert_eq!(same.relative_gap, 0.0);
    }

    #[test]
    fn interpolation_ratio_special_cases() {
        let g = grid(32);
        let ops = Spectral::new(g);
        let ball = Ball::new(g, [PI, PI, PI], PI / 2.0).unwrap();
        assert_eq!(interpolation_ratio_scalar(&ops, &ScalarField::zeros(g), &ball), 0.0);
        let r = ball.radius();
        let vol = ball.discrete_volume(g);
        // f ≡ 1: only the lower-order term survives, giving sqrt(r³ / |B|)
        let one = interpolation_ratio_scalar(&ops, &ScalarField::constant(g, 1.0), &ball);
        assert!((one - (r.powi(3) / vol).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cutoff_profile() {
        let g = grid(32);
        let ball = Ball::new(g, [1.0, 1.0, 1.0], 1.5).unwrap();
        assert!(Cutoff::new(g, &ball, 0.0).is_err());
        assert!(Cutoff::new(g, &ball, 2.0).is_err());
        let full = Cutoff::new(g, &ball, 1.5).unwrap();
        for idx in 0..g.len() {
            let x = g.position(idx);
            let rho = frank::norm(&std::array::from_fn(|a| {
                let d = x[a] - 1.0;
                if d > PI {
                    d - 2.0 * PI
                } else {
                    d
                }
            }));
            let expected = if rho < 1.5 { (1.0 - (rho / 1.5).powi(2)).powi(2) } else { 0.0 };
            assert!((full.phi.data()[idx] - expected).abs() < 1e-12);
            assert!(frank::norm(&full.grad.at(idx)) <= 4.0 / 1.5);
        }
        let narrow = Cutoff::new(g, &ball, 0.5).unwrap();
        assert!(narrow.grad.max_abs() > full.grad.max_abs());
    }

    #[test]
    fn equilibrium_local_energy_margin_is_zero() {
        let g = grid(16);
        let ball = Ball::new(g, [PI; 3], 1.5).unwrap();
        let mut tracker = LocalEnergyTracker::new(g, ball, 1.0, 1.0).unwrap();
        let mut state = FlowState::equilibrium(g, [1.0, 0.0, 0.0]);
        for i in 0..3 {
            state.t = 0.1 * i as f64;
            tracker.push(&state);
        }
        let rep = tracker.report();
        assert_eq!(rep.c_report, 0.0);
        assert_eq!(rep.margin, 0.0);
    }

    #[test]
    fn uniqueness_gap_single_mode() {
        let g = grid(16);
        let ops = Spectral::new(g);
        let a = twist_state(g, 1.0);
        assert_eq!(uniqueness_gap(&ops, &a, &a).unwrap().phi, 0.0);
        let delta = 1e-3;
        let kx = 2.0;
        let mut b = a.clone();
        b.v = VectorField::from_fn(g, |x| [0.0, delta * (kx * x[0]).sin(), 0.0]);
        let gap = uniqueness_gap(&ops, &a, &b).unwrap();
        let expected = delta * delta * g.volume() / (2.0 * (1.0 + kx * kx));
        assert!((gap.phi - expected).abs() < 1e-12 * expected);
        assert_eq!(gap.phi, uniqueness_gap(&ops, &b, &a).unwrap().phi);
        let other = FlowState::equilibrium(grid(8), [0.0, 0.0, 1.0]);
        assert!(matches!(uniqueness_gap(&ops, &a, &other), Err(DiagnosticsError::Grid(GridError::GridMismatch))));
    }

    #[test]
    fn gronwall_rate_of_exponential() {
        let samples: Vec<(f64, f64)> = (0..10).map(|i| (0.1 * i as f64, (0.7 * 0.1 * i as f64).exp())).collect();
        assert!((gronwall_rate(&samples).unwrap() - 0.7).abs() < 1e-12);
    }
}
