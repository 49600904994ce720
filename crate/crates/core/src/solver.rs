//! Right-hand sides, pressure recovery and time stepping for the coupled
//! flow/director system with unit viscosity and unit director mobility.
//!
//! The director equation is assembled in projected form
//! `∂_t u = P(u) [div W_p − W_u − (v·∇)u]` with `P(u) = I − u⊗u`, which keeps
//! the update tangent to the sphere exactly. The momentum equation is
//! `∂_t v = Δv − (v·∇)v − ∇p − div σ` with `σ[j][i] = ∂_i u^k W_{p_j^k}`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::frank::{self, FrankConstants, FrankError};
use crate::grid::{Grid, GridError, GridField, ScalarField, Spectral, TensorField, VectorField};

/// Largest `| |u| − 1 |` the solver accepts on input.
pub const DRIFT_GUARD: f64 = 1e-2;

const VELOCITY_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Frank(#[from] FrankError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("director drifted off the sphere by {drift:e}")]
    NonUnitDirector { drift: f64 },
    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("blow-up detected at t = {t}: {reason}")]
    BlowupDetected { t: f64, reason: String },
    #[error("invalid scheme setting: {0}")]
    InvalidScheme(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub v: VectorField,
    pub u: VectorField,
    pub p: ScalarField,
    pub t: f64,
}

impl FlowState {
    /// State at `t = 0` with zero pressure; call [`Solver::with_pressure`]
    /// to fill in `p`.
    pub fn new(v: VectorField, u: VectorField) -> Result<Self, SolverError> {
        crate::grid::ensure_same_grid(v.grid(), u.grid())?;
        let p = ScalarField::zeros(v.grid());
        Ok(Self { v, u, p, t: 0.0 })
    }

    /// Spatially constant director `b` at rest.
    pub fn equilibrium(grid: Grid, b: [f64; 3]) -> Self {
        Self {
            v: VectorField::zeros(grid),
            u: VectorField::constant(grid, b),
            p: ScalarField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.v.grid()
    }

    pub fn all_finite(&self) -> bool {
        self.v.all_finite() && self.u.all_finite() && self.p.all_finite() && self.t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    ImexASplit,
    ExplicitRk2,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ImexASplit => "imex_a_split",
            Scheme::ExplicitRk2 => "explicit_rk2",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "imex_a_split" => Ok(Scheme::ImexASplit),
            "explicit_rk2" => Ok(Scheme::ExplicitRk2),
            other => Err(SolverError::InvalidScheme(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    Cfl(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub time_step: TimeStep,
    pub scheme: Scheme,
    pub renormalize_every: u32,
    pub dealias: bool,
    /// Reject fixed steps above the stability limit.
    pub check_cfl: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            time_step: TimeStep::Cfl(0.5),
            scheme: Scheme::ImexASplit,
            renormalize_every: 1,
            dealias: true,
            check_cfl: true,
        }
    }
}

impl SchemeConfig {
    pub fn fixed(dt: f64) -> Self {
        Self { time_step: TimeStep::Fixed(dt), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        match self.time_step {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                return Err(SolverError::InvalidScheme(format!("dt must be positive, got {dt}")))
            }
            TimeStep::Cfl(c) if !(c > 0.0 && c <= 1.0) => {
                return Err(SolverError::InvalidScheme(format!("cfl must lie in (0, 1], got {c}")))
            }
            _ => {}
        }
        if self.renormalize_every == 0 {
            return Err(SolverError::InvalidScheme("renormalize_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Pointwise elastic quantities derived from one director field.
#[derive(Debug, Clone)]
pub struct ElasticFields {
    pub grad_u: TensorField,
    pub w_p: TensorField,
    pub w_u: VectorField,
    pub density: ScalarField,
}

#[derive(Debug, Clone)]
pub struct Solver {
    ops: Spectral,
    k: FrankConstants,
    cfg: SchemeConfig,
    steps: u64,
    last_drift: f64,
}

impl Solver {
    pub fn new(grid: Grid, k: FrankConstants, cfg: SchemeConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        Ok(Self { ops: Spectral::new(grid), k, cfg, steps: 0, last_drift: 0.0 })
    }

    pub fn grid(&self) -> Grid {
        self.ops.grid()
    }

    pub fn ops(&self) -> &Spectral {
        &self.ops
    }

    pub fn constants(&self) -> &FrankConstants {
        &self.k
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Largest `| |u| − 1 |` seen just before the most recent renormalization.
    pub fn last_drift(&self) -> f64 {
        self.last_drift
    }

    fn check_director(&self, u: &VectorField) -> Result<(), SolverError> {
        crate::grid::ensure_same_grid(self.grid(), u.grid())?;
        let drift = u.max_unit_drift();
        if !(drift <= DRIFT_GUARD) {
            return Err(SolverError::NonUnitDirector { drift });
        }
        Ok(())
    }

    fn truncated<F: GridField>(&self, f: F) -> F {
        if self.cfg.dealias {
            self.ops.dealias_field(&f)
        } else {
            f
        }
    }

    pub fn elastic_fields(&self, u: &VectorField) -> Result<ElasticFields, SolverError> {
        self.check_director(u)?;
        let grid = u.grid();
        let grad_u = self.ops.gradient(u);
        let mut w_p = TensorField::zeros(grid);
        let mut w_u = VectorField::zeros(grid);
        let mut density = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            let un = u.at(idx);
            let g = grad_u.at(idx);
            let (wp, wu) = frank::derivatives_unchecked(&un, &g, &self.k);
            w_p.set(idx, wp);
            w_u.set(idx, wu);
            density[idx] = frank::energy_density_unchecked(&un, &g, &self.k);
        }
        Ok(ElasticFields { grad_u, w_p, w_u, density: ScalarField::from_vec(grid, density) })
    }

    fn stress_from(fields: &ElasticFields) -> TensorField {
        let grid = fields.grad_u.grid();
        let mut s = TensorField::zeros(grid);
        for idx in 0..grid.len() {
            let g = fields.grad_u.at(idx);
            let wp = fields.w_p.at(idx);
            let mut out = [[0.0; 3]; 3];
            for (j, row) in out.iter_mut().enumerate() {
                for (i, entry) in row.iter_mut().enumerate() {
                    *entry = (0..3).map(|k| g[i][k] * wp[j][k]).sum();
                }
            }
            s.set(idx, out);
        }
        s
    }

    /// `σ[j][i] = Σ_k ∂_i u^k W_{p_j^k}`.
    pub fn elastic_stress(&self, u: &VectorField) -> Result<TensorField, SolverError> {
        Ok(Self::stress_from(&self.elastic_fields(u)?))
    }

    /// `h = div W_p − W_u`, with the fluxes truncated when dealiasing is on.
    fn molecular_field_from(&self, fields: &ElasticFields) -> VectorField {
        let grid = self.grid();
        let truncate = self.cfg.dealias;
        let comps = [0, 1, 2].map(|i| {
            let spectra = [0, 1, 2].map(|a| self.ops.forward(fields.w_p.component(a, i)));
            let wu = self.ops.forward(fields.w_u.component(i));
            let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
            self.ops.for_each_mode(|idx, k, _, keep| {
                if truncate && !keep {
                    return;
                }
                let s = spectra[0][idx] * k[0] + spectra[1][idx] * k[1] + spectra[2][idx] * k[2];
                acc[idx] = Complex64::new(-s.im, s.re) - wu[idx];
            });
            self.ops.inverse(acc)
        });
        VectorField::from_components(grid, comps)
    }

    pub fn molecular_field(&self, u: &VectorField) -> Result<VectorField, SolverError> {
        Ok(self.molecular_field_from(&self.elastic_fields(u)?))
    }

    fn project_tangent(u: &VectorField, f: &VectorField) -> VectorField {
        let mut out = f.clone();
        for idx in 0..u.grid().len() {
            let un = u.at(idx);
            let x = f.at(idx);
            let d = frank::dot(&un, &x);
            out.set(idx, [x[0] - d * un[0], x[1] - d * un[1], x[2] - d * un[2]]);
        }
        out
    }

    /// `P(u) h`: the elastic part of the director velocity, transport excluded.
    pub fn tangential_elastic(&self, u: &VectorField) -> Result<VectorField, SolverError> {
        let h = self.molecular_field(u)?;
        Ok(Self::project_tangent(u, &h))
    }

    /// `(v·∇)f` from a precomputed gradient, truncated when dealiasing is on.
    fn advect(&self, v: &VectorField, grad: &TensorField) -> VectorField {
        let grid = v.grid();
        let mut out = VectorField::zeros(grid);
        for idx in 0..grid.len() {
            let vn = v.at(idx);
            let g = grad.at(idx);
            out.set(idx, std::array::from_fn(|i| (0..3).map(|a| vn[a] * g[a][i]).sum()));
        }
        self.truncated(out)
    }

    fn director_rhs_parts(&self, v: &VectorField, fields: &ElasticFields, u: &VectorField) -> VectorField {
        let h = self.molecular_field_from(fields);
        let transport = self.advect(v, &fields.grad_u);
        Self::project_tangent(u, &h.zip_components(&transport, |a, b| a - b))
    }

    /// Full `∂_t u`, including the projected transport term.
    pub fn director_rhs(&self, state: &FlowState) -> Result<VectorField, SolverError> {
        crate::grid::ensure_same_grid(self.grid(), state.v.grid())?;
        let fields = self.elastic_fields(&state.u)?;
        Ok(self.director_rhs_parts(&state.v, &fields, &state.u))
    }

    /// `−(v·∇)v − div σ`, without pressure and viscosity.
    fn momentum_explicit(&self, v: &VectorField, fields: &ElasticFields) -> VectorField {
        let grad_v = self.ops.gradient(v);
        let adv = self.advect(v, &grad_v);
        let stress = Self::stress_from(fields);
        let force = self.ops.divergence_tensor_truncated(&stress, self.cfg.dealias);
        adv.zip_components(&force, |a, b| -a - b)
    }

    fn pressure_from_fields(&self, v: &VectorField, fields: &ElasticFields) -> ScalarField {
        let grid = self.grid();
        let stress = Self::stress_from(fields);
        // F^{ij} = σ[j][i] + v^i v^j
        let mut spectra = Vec::with_capacity(9);
        for i in 0..3 {
            for j in 0..3 {
                let f: Vec<f64> = stress
                    .component(j, i)
                    .iter()
                    .zip(v.component(i).iter().zip(v.component(j)))
                    .map(|(s, (a, b))| s + a * b)
                    .collect();
                spectra.push(self.ops.forward(&f));
            }
        }
        let truncate = self.cfg.dealias;
        let mut p = vec![Complex64::new(0.0, 0.0); grid.len()];
        self.ops.for_each_mode(|idx, kd, kf, keep| {
            let k2 = kf[0] * kf[0] + kf[1] * kf[1] + kf[2] * kf[2];
            if k2 == 0.0 || (truncate && !keep) {
                return;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    acc += spectra[3 * i + j][idx] * (kd[i] * kd[j]);
                }
            }
            p[idx] = -acc / k2;
        });
        ScalarField::from_vec(grid, self.ops.inverse(p))
    }

    /// Zero-mean `p` with `−Δp = ∂_i ∂_j (σ[j][i] + v^i v^j)`.
    pub fn pressure_from_state(&self, state: &FlowState) -> Result<ScalarField, SolverError> {
        crate::grid::ensure_same_grid(self.grid(), state.v.grid())?;
        let fields = self.elastic_fields(&state.u)?;
        Ok(self.pressure_from_fields(&state.v, &fields))
    }

    pub fn with_pressure(&self, mut state: FlowState) -> Result<FlowState, SolverError> {
        state.p = self.pressure_from_state(&state)?;
        Ok(state)
    }

    /// `Δv − (v·∇)v − ∇p − div σ` using the pressure stored in `state`.
    pub fn momentum_rhs(&self, state: &FlowState) -> Result<VectorField, SolverError> {
        crate::grid::ensure_same_grid(self.grid(), state.v.grid())?;
        let fields = self.elastic_fields(&state.u)?;
        let explicit = self.momentum_explicit(&state.v, &fields);
        let lap = self.ops.laplacian(&state.v);
        let grad_p = self.ops.gradient_scalar(&state.p);
        Ok(lap.zip_components(&explicit, |a, b| a + b).zip_components(&grad_p, |a, b| a - b))
    }

    /// Stability limit for the configured scheme at `cfl = 1`.
    pub fn stable_dt(&self, v: &VectorField) -> f64 {
        let h = self.grid().h();
        let kmax_sq = 3.0 * (std::f64::consts::PI / h).powi(2);
        let maxk = self.k.k1().max(self.k.k2()).max(self.k.k3());
        let a = self.k.a();
        let diffusive = match self.cfg.scheme {
            Scheme::ImexASplit => {
                let mut d = a * h * h / (4.0 * maxk);
                if maxk > a {
                    d = d.min(2.0 / ((2.0 * maxk - 2.0 * a) * kmax_sq));
                }
                d
            }
            Scheme::ExplicitRk2 => 2.0 / ((2.0 * maxk).max(1.0) * kmax_sq),
        };
        let advective = h / v.max_abs().max(VELOCITY_FLOOR);
        advective.min(diffusive)
    }

    pub fn choose_dt(&self, state: &FlowState) -> Result<f64, SolverError> {
        let limit = self.stable_dt(&state.v);
        match self.cfg.time_step {
            TimeStep::Cfl(c) => Ok(c * limit),
            TimeStep::Fixed(dt) => {
                if self.cfg.check_cfl && dt > limit {
                    Err(SolverError::CflViolation { dt, limit })
                } else {
                    Ok(dt)
                }
            }
        }
    }

    /// One step with the configured time step rule.
    pub fn step(&mut self, state: &FlowState) -> Result<FlowState, SolverError> {
        let dt = self.choose_dt(state)?;
        self.step_with_dt(state, dt)
    }

    /// One step of exactly `dt`, bypassing the step-size rule.
    pub fn step_with_dt(&mut self, state: &FlowState, dt: f64) -> Result<FlowState, SolverError> {
        crate::grid::ensure_same_grid(self.grid(), state.v.grid())?;
        let (v, mut u) = match self.cfg.scheme {
            Scheme::ImexASplit => self.imex_update(state, dt)?,
            Scheme::ExplicitRk2 => self.midpoint_update(state, dt)?,
        };
        let t = state.t + dt;
        if !(v.all_finite() && u.all_finite()) {
            return Err(SolverError::BlowupDetected { t, reason: "non-finite field values".into() });
        }
        self.steps += 1;
        self.last_drift = u.max_unit_drift();
        if self.steps % u64::from(self.cfg.renormalize_every) == 0 {
            u.normalize();
        }
        let mut next = FlowState { v, u, p: ScalarField::zeros(self.grid()), t };
        let fields = self.elastic_fields(&next.u).map_err(|e| match e {
            SolverError::NonUnitDirector { .. } => {
                SolverError::BlowupDetected { t, reason: e.to_string() }
            }
            other => other,
        })?;
        next.p = self.pressure_from_fields(&next.v, &fields);
        if !next.p.all_finite() {
            return Err(SolverError::BlowupDetected { t, reason: "non-finite pressure".into() });
        }
        Ok(next)
    }

    /// `Leray (I − cΔ)⁻¹ f` in one spectral pass.
    fn implicit_velocity(&self, f: &VectorField, c: f64) -> VectorField {
        let mut s = [0, 1, 2].map(|i| self.ops.forward(f.component(i)));
        for comp in s.iter_mut() {
            self.ops.apply_symbol(comp, |_, k| 1.0 / (1.0 + c * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2])));
        }
        self.ops.leray_project_spectra(&mut s);
        let [a, b, d] = s;
        VectorField::from_components(self.grid(), [self.ops.inverse(a), self.ops.inverse(b), self.ops.inverse(d)])
    }

    fn imex_update(&self, state: &FlowState, dt: f64) -> Result<(VectorField, VectorField), SolverError> {
        let fields = self.elastic_fields(&state.u)?;
        let rhs = self.director_rhs_parts(&state.v, &fields, &state.u);
        // (I − dt·aΔ) u_new = u + dt (rhs − aΔu)  ⇔  u_new = u + dt (I − dt·aΔ)⁻¹ rhs
        let inc = self.ops.helmholtz_inverse(&rhs, dt * self.k.a());
        let u = state.u.zip_components(&inc, |a, b| a + dt * b);
        let n = self.momentum_explicit(&state.v, &fields);
        let v = self.implicit_velocity(&state.v.zip_components(&n, |a, b| a + dt * b), dt);
        Ok((v, u))
    }

    fn explicit_rates(&self, v: &VectorField, u: &VectorField) -> Result<(VectorField, VectorField), SolverError> {
        let fields = self.elastic_fields(u)?;
        let du = self.director_rhs_parts(v, &fields, u);
        let n = self.momentum_explicit(v, &fields);
        let dv = self.ops.leray_project(&self.ops.laplacian(v).zip_components(&n, |a, b| a + b));
        Ok((dv, du))
    }

    fn midpoint_update(&self, state: &FlowState, dt: f64) -> Result<(VectorField, VectorField), SolverError> {
        let (dv1, du1) = self.explicit_rates(&state.v, &state.u)?;
        let v_half = state.v.zip_components(&dv1, |a, b| a + 0.5 * dt * b);
        let mut u_half = state.u.zip_components(&du1, |a, b| a + 0.5 * dt * b);
        if !(v_half.all_finite() && u_half.all_finite()) {
            return Err(SolverError::BlowupDetected { t: state.t + 0.5 * dt, reason: "non-finite midpoint".into() });
        }
        u_half.normalize();
        let (dv2, du2) = self.explicit_rates(&v_half, &u_half)?;
        let v = self.ops.leray_project(&state.v.zip_components(&dv2, |a, b| a + dt * b));
        let u = state.u.zip_components(&du2, |a, b| a + dt * b);
        Ok((v, u))
    }

    /// One step of the static (`v ≡ 0`) director flow, followed by
    /// renormalization.
    pub fn gradient_flow_step(&self, u: &VectorField, dt: f64) -> Result<VectorField, SolverError> {
        let rhs = self.tangential_elastic(u)?;
        let inc = self.ops.helmholtz_inverse(&rhs, dt * self.k.a());
        let mut out = u.zip_components(&inc, |a, b| a + dt * b);
        if !out.all_finite() {
            return Err(SolverError::BlowupDetected { t: f64::NAN, reason: "non-finite director".into() });
        }
        out.normalize();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    /// `(sin θ cos φ, sin θ sin φ, cos θ)` with linear angles is a unit
    /// trigonometric polynomial, so spectral derivatives are exact.
    pub(crate) fn angle_field(g: Grid, theta: ([f64; 3], f64), phi: ([f64; 3], f64)) -> VectorField {
        VectorField::from_fn(g, |x| {
            let th = theta.0[0] * x[0] + theta.0[1] * x[1] + theta.0[2] * x[2] + theta.1;
            let ph = phi.0[0] * x[0] + phi.0[1] * x[1] + phi.0[2] * x[2] + phi.1;
            [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
        })
    }

    fn twist(g: Grid, tau: f64) -> VectorField {
        VectorField::from_fn(g, |x| [(tau * x[2]).cos(), (tau * x[2]).sin(), 0.0])
    }

    fn taylor_green(g: Grid) -> VectorField {
        VectorField::from_fn(g, |x| [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0])
    }

    fn diff_max<F: GridField>(a: &F, b: &F) -> f64 {
        a.zip_components(b, |x, y| x - y).max_abs()
    }

    #[test]
    fn rejects_bad_scheme_settings() {
        let g = grid(16);
        let k = FrankConstants::equal();
        assert!(Solver::new(g, k, SchemeConfig::fixed(0.0)).is_err());
        let cfg = SchemeConfig { time_step: TimeStep::Cfl(1.5), ..SchemeConfig::default() };
        assert!(Solver::new(g, k, cfg).is_err());
        assert_eq!("explicit_rk2".parse::<Scheme>().unwrap(), Scheme::ExplicitRk2);
        assert!("euler".parse::<Scheme>().is_err());
    }

    #[test]
    fn constant_director_has_no_stress_or_rhs() {
        let g = grid(16);
        let k = FrankConstants::new(1.0, 0.8, 1.4, 0.2).unwrap();
        let s = Solver::new(g, k, SchemeConfig::default()).unwrap();
        let mut state = FlowState::equilibrium(g, [0.0, 0.6, 0.8]);
        state.v = taylor_green(g);
        assert_eq!(s.elastic_stress(&state.u).unwrap().max_abs(), 0.0);
        assert_eq!(s.director_rhs(&state).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn equal_constant_stress_is_harmonic_map_stress() {
        let g = grid(16);
        let s = Solver::new(g, FrankConstants::equal(), SchemeConfig::default()).unwrap();
        let u = angle_field(g, ([1.0, 0.0, 1.0], 0.3), ([0.0, 1.0, 0.0], 0.1));
        let sigma = s.elastic_stress(&u).unwrap();
        let grad = s.ops().gradient(&u);
        for idx in 0..g.len() {
            let gr = grad.at(idx);
            let st = sigma.at(idx);
            for j in 0..3 {
                for i in 0..3 {
                    let expected: f64 = 2.0 * (0..3).map(|k| gr[i][k] * gr[j][k]).sum::<f64>();
                    assert!((st[j][i] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn twist_stress_has_only_the_axial_entry() {
        let g = grid(16);
        let tau = 2.0;
        let k = FrankConstants::new(1.5, 0.7, 2.0, -0.3).unwrap();
        let s = Solver::new(g, k, SchemeConfig::default()).unwrap();
        let sigma = s.elastic_stress(&twist(g, tau)).unwrap();
        for idx in 0..g.len() {
            let st = sigma.at(idx);
            for j in 0..3 {
                for i in 0..3 {
                    let expected = if (i, j) == (2, 2) { 2.0 * k.k2() * tau * tau } else { 0.0 };
                    assert!((st[j][i] - expected).abs() < 1e-11, "σ[{j}][{i}] = {}", st[j][i]);
                }
            }
        }
    }

    #[test]
    fn pure_twist_is_a_director_equilibrium() {
        let g = grid(16);
        let k = FrankConstants::new(1.2, 0.9, 0.5, 0.1).unwrap();
        let s = Solver::new(g, k, SchemeConfig::default()).unwrap();
        let rhs = s.tangential_elastic(&twist(g, 1.0)).unwrap();
        assert!(rhs.max_abs() < 1e-12);
    }

    #[test]
    fn equal_constant_rhs_is_harmonic_map_flow() {
        let g = grid(32);
        let s = Solver::new(g, FrankConstants::equal(), SchemeConfig::default()).unwrap();
        for (theta, phi) in [
            (([1.0, 0.0, 1.0], 0.3), ([0.0, 1.0, 0.0], 0.1)),
            (([0.0, 2.0, -1.0], 1.1), ([1.0, 0.0, 1.0], -0.4)),
            (([1.0, 1.0, 0.0], 0.0), ([0.0, 0.0, 2.0], 0.7)),
        ] {
            let u = angle_field(g, theta, phi);
            let state = FlowState::new(VectorField::zeros(g), u.clone()).unwrap();
            let rhs = s.director_rhs(&state).unwrap();
            let lap = s.ops().laplacian(&u);
            let grad = s.ops().gradient(&u);
            let mut expected = lap.clone();
            for idx in 0..g.len() {
                let gsq = frank::frobenius_sq(&grad.at(idx));
                let l = lap.at(idx);
                let un = u.at(idx);
                expected.set(idx, std::array::from_fn(|i| 2.0 * (l[i] + gsq * un[i])));
            }
            assert!(diff_max(&rhs, &expected) < 1e-8);
        }
    }

    #[test]
    fn rhs_is_tangent_to_the_sphere() {
        let g = grid(16);
        let k = FrankConstants::new(2.0, 1.0, 0.6, 0.4).unwrap();
        let s = Solver::new(g, k, SchemeConfig::default()).unwrap();
        let u = angle_field(g, ([1.0, 0.0, 1.0], 0.3), ([0.0, 1.0, 1.0], 0.1));
        let state = FlowState::new(taylor_green(g), u.clone()).unwrap();
        let rhs = s.director_rhs(&state).unwrap();
        for idx in 0..g.len() {
            assert!(frank::dot(&u.at(idx), &rhs.at(idx)).abs() < 1e-12);
        }
    }

    #[test]
    fn taylor_green_pressure_and_rate() {
        let g = grid(16);
        let s = Solver::new(g, FrankConstants::equal(), SchemeConfig::default()).unwrap();
        let state = s.with_pressure(FlowState::new(taylor_green(g), VectorField::constant(g, [0.0, 0.0, 1.0])).unwrap()).unwrap();
        let expected = ScalarField::from_fn(g, |x| 0.25 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos()));
        assert!(diff_max(&state.p, &expected) < 1e-10);
        let rhs = s.momentum_rhs(&state).unwrap();
        assert!(diff_max(&rhs, &state.v.scaled(-2.0)) < 1e-10);
    }

    #[test]
    fn twist_pressure_satisfies_poisson_equation() {
        let g = grid(16);
        let k = FrankConstants::new(1.0, 0.8, 1.3, 0.0).unwrap();
        let s = Solver::new(g, k, SchemeConfig { dealias: false, ..SchemeConfig::default() }).unwrap();
        let u = twist(g, 1.0);
        let state = FlowState::new(VectorField::zeros(g), u.clone()).unwrap();
        let p = s.pressure_from_state(&state).unwrap();
        let sigma = s.elastic_stress(&u).unwrap();
        let inner = s.ops().divergence_tensor(&sigma);
        let ddf = s.ops().divergence(&inner);
        let residual = s.ops().laplacian(&p).zip_components(&ddf, |a, b| a + b);
        assert!(residual.max_abs() < 1e-10);
        assert!(p.mean().abs() < 1e-14);
    }

    #[test]
    fn equilibrium_is_a_bitwise_fixed_point() {
        let g = grid(16);
        for scheme in [Scheme::ImexASplit, Scheme::ExplicitRk2] {
            let k = FrankConstants::new(1.0, 0.7, 1.2, 0.3).unwrap();
            let cfg = SchemeConfig { scheme, ..SchemeConfig::default() };
            let mut s = Solver::new(g, k, cfg).unwrap();
            let b = [0.48, 0.6, 0.64];
            let b = {
                let n = frank::norm(&b);
                b.map(|x| x / n)
            };
            let start = FlowState::equilibrium(g, b);
            let mut state = start.clone();
            for _ in 0..5 {
                state = s.step(&state).unwrap();
            }
            assert_eq!(state.u, start.u.normalized());
            assert_eq!(state.v, start.v);
            assert_eq!(state.p, start.p);
        }
    }

    #[test]
    fn taylor_green_decays_at_the_viscous_rate() {
        let g = grid(16);
        let dt = 1e-3;
        let mut s = Solver::new(g, FrankConstants::equal(), SchemeConfig::fixed(dt)).unwrap();
        let mut state = s.with_pressure(FlowState::new(taylor_green(g).scaled(0.1), VectorField::constant(g, [1.0, 0.0, 0.0])).unwrap()).unwrap();
        for _ in 0..100 {
            state = s.step(&state).unwrap();
        }
        let exact = taylor_green(g).scaled(0.1 * (-2.0 * state.t).exp());
        let err = diff_max(&state.v, &exact);
        assert!(err < 1e-4, "err {err}");
        let ratio = state.v.l2_norm() / (0.1 * taylor_green(g).l2_norm());
        assert!((ratio.ln() / state.t + 2.0).abs() < 5e-3);
    }

    #[test]
    fn fixed_steps_above_the_limit_are_rejected() {
        let g = grid(16);
        let s = Solver::new(g, FrankConstants::equal(), SchemeConfig::fixed(10.0)).unwrap();
        let state = FlowState::equilibrium(g, [0.0, 0.0, 1.0]);
        assert!(matches!(s.choose_dt(&state), Err(SolverError::CflViolation { .. })));
        let loose = Solver::new(g, FrankConstants::equal(), SchemeConfig { check_cfl: false, ..SchemeConfig::fixed(10.0) }).unwrap();
        assert_eq!(loose.choose_dt(&state).unwrap(), 10.0);
    }

    #[test]
    fn non_unit_director_is_rejected() {
        let g = grid(16);
        let s = Solver::new(g, FrankConstants::equal(), SchemeConfig::default()).unwrap();
        let u = VectorField::constant(g, [0.0, 0.0, 1.1]);
        assert!(matches!(s.tangential_elastic(&u), Err(SolverError::NonUnitDirector { .. })));
    }
}
