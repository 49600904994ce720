//! Deterministic initial directors and velocities.
//!
//! Random fields are finite Fourier sums whose coefficients are drawn from a
//! counter-based generator keyed by `(seed, stream, mode)`, so a given spec
//! yields the same continuous field on every grid that resolves it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsError};
use crate::frank;
use crate::grid::{Grid, GridField, ScalarField, Spectral, VectorField};

/// Largest supported `|m|` per axis in random fields.
pub const MAX_MODES: u32 = 63;

const UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitialError {
    #[error("amplitude must be finite and non-negative, got {0}")]
    BadAmplitude(f64),
    #[error("b must be a unit vector, got |b| = {0}")]
    NonUnitB(f64),
    #[error("spectral width must be finite and non-negative, got {0}")]
    BadWidth(f64),
    #[error("mode count {modes} is not resolved on an N = {n} grid")]
    TooManyModes { modes: u32, n: usize },
    #[error("unknown initial kind '{0}'")]
    UnknownKind(String),
    #[error("cannot reach target {target:e}: achievable range starts at {floor:e}")]
    CannotCalibrate { target: f64, floor: f64 },
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialKind {
    #[default]
    Constant,
    Twist,
    PerturbedConstant,
    RandomSmooth,
}

impl InitialKind {
    pub fn name(&self) -> &'static str {
        match self {
            InitialKind::Constant => "constant",
            InitialKind::Twist => "twist",
            InitialKind::PerturbedConstant => "perturbed_constant",
            InitialKind::RandomSmooth => "random_smooth",
        }
    }
}

impl fmt::Display for InitialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitialKind {
    type Err = InitialError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(InitialKind::Constant),
            "twist" => Ok(InitialKind::Twist),
            "perturbed_constant" => Ok(InitialKind::PerturbedConstant),
            "random_smooth" => Ok(InitialKind::RandomSmooth),
            other => Err(InitialError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub b: [f64; 3],
    /// Director: perturbation size. Velocity: target `‖v₀‖₂`.
    pub amplitude: f64,
    /// Largest `|m|` per axis; for twists, the winding number.
    pub mode_count: u32,
    /// Coefficients are weighted by `exp(−w²|k|²/2)`.
    pub spectral_width: f64,
    pub seed: u64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            kind: InitialKind::Constant,
            b: [0.0, 0.0, 1.0],
            amplitude: 0.0,
            mode_count: 2,
            spectral_width: 0.0,
            seed: 0,
        }
    }
}

impl InitialSpec {
    pub fn validate(&self) -> Result<(), InitialError> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(InitialError::BadAmplitude(self.amplitude));
        }
        let nb = frank::norm(&self.b);
        if !((nb - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(InitialError::NonUnitB(nb));
        }
        if !(self.spectral_width >= 0.0 && self.spectral_width.is_finite()) {
            return Err(InitialError::BadWidth(self.spectral_width));
        }
        if self.mode_count > MAX_MODES {
            return Err(InitialError::TooManyModes { modes: self.mode_count, n: 2 * MAX_MODES as usize });
        }
        Ok(())
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self { amplitude, ..*self }
    }

    fn check_grid(&self, grid: Grid) -> Result<(), InitialError> {
        self.validate()?;
        if 2 * self.mode_count as usize >= grid.n() {
            return Err(InitialError::TooManyModes { modes: self.mode_count, n: grid.n() });
        }
        Ok(())
    }
}

/// `Σ_{0 < |m|∞ ≤ M} e^{−w²|k|²/2} (a_m cos k·x + b_m sin k·x)` with
/// `a_m, b_m` uniform on `[−1, 1)`.
pub fn band_limited_field(grid: Grid, seed: u64, stream: u64, modes: u32, width: f64) -> ScalarField {
    let n = grid.n() as i64;
    assert!(modes <= MAX_MODES && 2 * i64::from(modes) < n, "mode count not resolved");
    let m = i64::from(modes);
    let kappa = 2.0 * PI / grid.l();
    let scale = grid.len() as f64 / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
    let slot = |f: i64| f.rem_euclid(n) as usize;
    for mz in -m..=m {
        for my in -m..=m {
            for mx in -m..=m {
                if mx == 0 && my == 0 && mz == 0 {
                    continue;
                }
                let key = ((mx + 64) * 128 + (my + 64)) * 128 + (mz + 64);
                rng.set_word_pos(4 * key as u128);
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                let k2 = kappa * kappa * (mx * mx + my * my + mz * mz) as f64;
                let w = (-0.5 * width * width * k2).exp() * scale;
                let plus = grid.index(slot(mx), slot(my), slot(mz));
                let minus = grid.index(slot(-mx), slot(-my), slot(-mz));
                spec[plus] += Complex64::new(a, -b) * w;
                spec[minus] += Complex64::new(a, b) * w;
            }
        }
    }
    ScalarField::from_vec(grid, Spectral::new(grid).inverse(spec))
}

fn unit_rms<F: GridField>(f: F) -> F {
    let rms = (f.l2_norm_sq() / f.grid().volume()).sqrt();
    if rms > 0.0 {
        f.scaled(1.0 / rms)
    } else {
        f
    }
}

fn random_vector(grid: Grid, spec: &InitialSpec, first_stream: u64) -> VectorField {
    let comps = [0, 1, 2].map(|i| {
        band_limited_field(grid, spec.seed, first_stream + i, spec.mode_count, spec.spectral_width).into_vec()
    });
    unit_rms(VectorField::from_components(grid, comps))
}

/// `normalize(base + A (w − (w·base) base))` for a unit-RMS random `w`.
fn perturb_tangentially(base: &VectorField, spec: &InitialSpec) -> VectorField {
    let grid = base.grid();
    let w = random_vector(grid, spec, 0);
    let mut out = base.clone();
    for idx in 0..grid.len() {
        let b = base.at(idx);
        let x = w.at(idx);
        let d = frank::dot(&b, &x);
        out.set(idx, std::array::from_fn(|i| b[i] + spec.amplitude * (x[i] - d * b[i])));
    }
    out.normalize();
    out
}

pub fn make_director(spec: &InitialSpec, grid: Grid) -> Result<VectorField, InitialError> {
    spec.check_grid(grid)?;
    let constant = VectorField::constant(grid, spec.b);
    match spec.kind {
        InitialKind::Constant => Ok(constant),
        InitialKind::Twist => {
            let tau = 2.0 * PI * f64::from(spec.mode_count.max(1)) / grid.l();
            let twist = VectorField::from_fn(grid, |x| [(tau * x[2]).cos(), (tau * x[2]).sin(), 0.0]);
            if spec.amplitude == 0.0 {
                Ok(twist)
            } else {
                Ok(perturb_tangentially(&twist, spec))
            }
        }
        InitialKind::PerturbedConstant => {
            if spec.amplitude == 0.0 {
                Ok(constant)
            } else {
                Ok(perturb_tangentially(&constant, spec))
            }
        }
        InitialKind::RandomSmooth => {
            if spec.amplitude == 0.0 {
                return Ok(constant);
            }
            let theta = unit_rms(band_limited_field(grid, spec.seed, 3, spec.mode_count, spec.spectral_width));
            let phi = unit_rms(band_limited_field(grid, spec.seed, 4, spec.mode_count, spec.spectral_width));
            let q = frank::transpose(&frank::rotation_to_north_pole(&spec.b).expect("validated unit b"));
            let mut u = VectorField::zeros(grid);
            for idx in 0..grid.len() {
                let th = spec.amplitude * theta.data()[idx];
                let ph = phi.data()[idx];
                let local = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                u.set(idx, frank::mat_vec(&q, &local));
            }
            Ok(u)
        }
    }
}

/// Divergence-free, zero-mean random velocity with `‖v₀‖₂ = amplitude`.
pub fn make_velocity(spec: &InitialSpec, grid: Grid) -> Result<VectorField, InitialError> {
    spec.check_grid(grid)?;
    if spec.amplitude == 0.0 || spec.mode_count == 0 {
        return Ok(VectorField::zeros(grid));
    }
    let raw = random_vector(grid, spec, 10);
    let projected = Spectral::new(grid).leray_project(&raw);
    let mean = projected.mean();
    let centred = projected.zip_components(&VectorField::constant(grid, mean), |a, b| a - b);
    let norm = centred.l2_norm();
    if norm == 0.0 {
        return Ok(centred);
    }
    Ok(centred.scaled(spec.amplitude / norm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub scale: f64,
    pub director: InitialSpec,
    pub velocity: InitialSpec,
    pub u: VectorField,
    pub v: VectorField,
    pub achieved: f64,
}

/// Rescales both amplitudes by one factor so that
/// `l3_uloc(v₀, R₀) + l3_uloc(∇u₀, R₀)` hits `target` within `10⁻³·target`.
pub fn calibrate_smallness(
    grid: Grid,
    director: &InitialSpec,
    velocity: &InitialSpec,
    radius: f64,
    stride: usize,
    target: f64,
) -> Result<Calibrated, InitialError> {
    let ops = Spectral::new(grid);
    let build = |s: f64| -> Result<Calibrated, InitialError> {
        let d = director.with_amplitude(director.amplitude * s);
        let vs = velocity.with_amplitude(velocity.amplitude * s);
        let u = make_director(&d, grid)?;
        let v = make_velocity(&vs, grid)?;
        let achieved = diagnostics::l3_uloc(&v, radius, stride)? + diagnostics::l3_uloc(&ops.gradient(&u), radius, stride)?;
        Ok(Calibrated { scale: s, director: d, velocity: vs, u, v, achieved })
    };
    let tol = 1e-3 * target;
    let hit = |c: &Calibrated| (c.achieved - target).abs() <= tol;

    let floor = build(0.0)?;
    if hit(&floor) {
        return Ok(floor);
    }
    if target < floor.achieved || (director.amplitude == 0.0 && velocity.amplitude == 0.0) {
        return Err(InitialError::CannotCalibrate { target, floor: floor.achieved });
    }
    let unit = build(1.0)?;
    if hit(&unit) {
        return Ok(unit);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut upper = unit;
    let mut doublings = 0;
    while upper.achieved < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 30 {
            return Err(InitialError::CannotCalibrate { target, floor: floor.achieved });
        }
        upper = build(hi)?;
        if hit(&upper) {
            return Ok(upper);
        }
    }
    let mut best = upper;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let trial = build(mid)?;
        if hit(&trial) {
            return Ok(trial);
        }
        if trial.achieved < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (trial.achieved - target).abs() < (best.achieved - target).abs() {
            best = trial;
        }
    }
    Ok(best)
}
