//! Periodic cubic grid, discrete fields and spectral operators.
//!
//! Samples are stored x-fastest: node `(i, j, k)` lives at `i + N (j + N k)`.
//! Vector and tensor fields keep one such array per component; tensor
//! components follow the gradient convention `T[α][i]`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid size {0} must be a power of two >= 8")]
    BadSize(usize),
    #[error("box length {0} must be positive and finite")]
    BadLength(f64),
    #[error("ball radius {radius} exceeds the cap L/2 - h = {cap}")]
    BallTooLarge { radius: f64, cap: f64 },
    #[error("ball radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("requested resolution {requested} exceeds the limit {limit}")]
    ResolutionExceeded { requested: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    l: f64,
}

impl Grid {
    pub fn new(n: usize, l: f64) -> Result<Self, GridError> {
        if n < 8 || !n.is_power_of_two() {
            return Err(GridError::BadSize(n));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(GridError::BadLength(l));
        }
        Ok(Self { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes, `N³`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Quadrature weight `h³`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.l.powi(3)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let h = self.h();
        let c = self.coords(idx);
        [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h]
    }

    /// Signed integer frequency of FFT index `m`, in `[-N/2, N/2)`.
    #[inline]
    pub fn frequency(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Angular wavenumber `2π/L · frequency(m)`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI / self.l * self.frequency(m) as f64
    }

    /// Largest radius a ball may have on this grid.
    pub fn max_ball_radius(&self) -> f64 {
        self.l / 2.0 - self.h()
    }
}

/// Common interface over scalar, vector and tensor fields.
pub trait GridField: Clone {
    fn grid(&self) -> Grid;
    fn components(&self) -> Vec<&[f64]>;
    fn components_mut(&mut self) -> Vec<&mut Vec<f64>>;

    /// Pointwise Euclidean (Frobenius) magnitude.
    fn magnitude(&self) -> ScalarField {
        let grid = self.grid();
        let comps = self.components();
        let data = (0..grid.len())
            .map(|idx| comps.iter().map(|c| c[idx] * c[idx]).sum::<f64>().sqrt())
            .collect();
        ScalarField { grid, data }
    }

    fn map_components(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        let new: Vec<Vec<f64>> = self.components().into_iter().map(|c| f(c)).collect();
        for (dst, src) in out.components_mut().into_iter().zip(new) {
            *dst = src;
        }
        out
    }

    fn zip_components(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = self.clone();
        let theirs = other.components();
        for (dst, src) in out.components_mut().into_iter().zip(theirs) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = f(*d, *s);
            }
        }
        out
    }

    /// `Σ h³ ⟨f, g⟩` over all components.
    fn inner(&self, other: &Self) -> f64 {
        let dv = self.grid().cell_volume();
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
            * dv
    }

    fn l2_norm_sq(&self) -> f64 {
        self.inner(self)
    }

    fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    fn max_abs(&self) -> f64 {
        self.components()
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    fn all_finite(&self) -> bool {
        self.components().iter().all(|c| c.iter().all(|x| x.is_finite()))
    }

    fn scaled(&self, s: f64) -> Self {
        self.map_components(|c| c.iter().map(|x| x * s).collect())
    }

    /// Lattice translation: the value at node `x` moves to `x + d·h`.
    fn shifted(&self, d: [isize; 3]) -> Self {
        let grid = self.grid();
        let n = grid.n() as isize;
        self.map_components(|c| {
            let mut out = vec![0.0; c.len()];
            for (idx, v) in c.iter().enumerate() {
                let [i, j, k] = grid.coords(idx);
                let wrap = |a: usize, b: isize| ((a as isize + b).rem_euclid(n)) as usize;
                out[grid.index(wrap(i, d[0]), wrap(j, d[1]), wrap(k, d[2]))] = *v;
            }
            out
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, data: vec![c; grid.len()] }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len(), "sample count does not match grid");
        Self { grid, data }
    }

    /// Samples `f(x, y, z)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|idx| f(grid.position(idx))).collect();
        Self { grid, data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// `Σ h³ f`.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

impl GridField for ScalarField {
    fn grid(&self) -> Grid {
        self.grid
    }
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.data]
    }
    fn components_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![&mut self.data]
    }
    fn magnitude(&self) -> ScalarField {
        ScalarField { grid: self.grid, data: self.data.iter().map(|x| x.abs()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![0.0; grid.len()];
        Self { grid, comps: [z.clone(), z.clone(), z] }
    }

    pub fn constant(grid: Grid, c: [f64; 3]) -> Self {
        Self { grid, comps: c.map(|x| vec![x; grid.len()]) }
    }

    pub fn from_components(grid: Grid, comps: [Vec<f64>; 3]) -> Self {
        for c in &comps {
            assert_eq!(c.len(), grid.len(), "sample count does not match grid");
        }
        Self { grid, comps }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for idx in 0..grid.len() {
            out.set(idx, f(grid.position(idx)));
        }
        out
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    #[inline]
    pub fn set(&mut self, idx: usize, v: [f64; 3]) {
        for (c, x) in self.comps.iter_mut().zip(v) {
            c[idx] = x;
        }
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.comps[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.comps[i]
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.comps
    }

    pub fn mean(&self) -> [f64; 3] {
        let n = self.grid.len() as f64;
        [0, 1, 2].map(|i| self.comps[i].iter().sum::<f64>() / n)
    }

    /// Largest `| |u| − 1 |` over the nodes.
    pub fn max_unit_drift(&self) -> f64 {
        (0..self.grid.len())
            .map(|idx| (crate::frank::norm(&self.at(idx)) - 1.0).abs())
            .fold(0.0_f64, f64::max)
    }

    /// Nodewise `u ← u / |u|`.
    pub fn normalize(&mut self) {
        for idx in 0..self.grid.len() {
            let v = self.at(idx);
            let n = crate::frank::norm(&v);
            self.set(idx, [v[0] / n, v[1] / n, v[2] / n]);
        }
    }

    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        out.normalize();
        out
    }
}

impl GridField for VectorField {
    fn grid(&self) -> Grid {
        self.grid
    }
    fn components(&self) -> Vec<&[f64]> {
        self.comps.iter().map(|c| c.as_slice()).collect()
    }
    fn components_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.comps.iter_mut().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Grid,
    comps: [[Vec<f64>; 3]; 3],
}

impl TensorField {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![0.0; grid.len()];
        Self {
            grid,
            comps: std::array::from_fn(|_| std::array::from_fn(|_| z.clone())),
        }
    }

    pub fn from_components(grid: Grid, comps: [[Vec<f64>; 3]; 3]) -> Self {
        Self { grid, comps }
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [[f64; 3]; 3] {
        std::array::from_fn(|a| std::array::from_fn(|i| self.comps[a][i][idx]))
    }

    #[inline]
    pub fn set(&mut self, idx: usize, m: [[f64; 3]; 3]) {
        for a in 0..3 {
            for i in 0..3 {
                self.comps[a][i][idx] = m[a][i];
            }
        }
    }

    pub fn component(&self, a: usize, i: usize) -> &[f64] {
        &self.comps[a][i]
    }

    pub fn component_mut(&mut self, a: usize, i: usize) -> &mut [f64] {
        &mut self.comps[a][i]
    }
}

impl GridField for TensorField {
    fn grid(&self) -> Grid {
        self.grid
    }
    fn components(&self) -> Vec<&[f64]> {
        self.comps.iter().flat_map(|r| r.iter().map(|c| c.as_slice())).collect()
    }
    fn components_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.comps.iter_mut().flat_map(|r| r.iter_mut()).collect()
    }
}

pub fn ensure_same_grid(a: Grid, b: Grid) -> Result<(), GridError> {
    if a == b {
        Ok(())
    } else {
        Err(GridError::GridMismatch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    #[default]
    Spectral,
    CentralDifference,
}

/// FFT plans, wavenumber tables and the differentiation mode for one grid.
///
/// First derivatives drop the Nyquist mode so real fields stay real;
/// second-order symbols (`Δ`, Helmholtz, Poisson) keep it.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k_full: Vec<f64>,
    k_deriv: Vec<f64>,
    keep: Vec<bool>,
    mode: DerivativeMode,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).field("mode", &self.mode).finish()
    }
}

pub type Spectrum = Vec<Complex64>;

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        Self::with_mode(grid, DerivativeMode::Spectral)
    }

    pub fn with_mode(grid: Grid, mode: DerivativeMode) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let k_full: Vec<f64> = (0..n).map(|m| grid.wavenumber(m)).collect();
        let k_deriv = (0..n).map(|m| if m == n / 2 { 0.0 } else { k_full[m] }).collect();
        // 2/3 rule: keep |m| < N/3 along each axis
        let keep = (0..n).map(|m| 3 * grid.frequency(m).unsigned_abs() < n as u64).collect();
        Self { grid, forward, inverse, k_full, k_deriv, keep, mode }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    fn transform_axes(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // x lanes are contiguous
        fft.process_with_scratch(buf, &mut scratch);
        let mut lane = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            for i in 0..n {
                let base = i + n * n * k;
                for (j, l) in lane.iter_mut().enumerate() {
                    *l = buf[base + n * j];
                }
                fft.process_with_scratch(&mut lane, &mut scratch);
                for (j, l) in lane.iter().enumerate() {
                    buf[base + n * j] = *l;
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                let base = i + n * j;
                for (k, l) in lane.iter_mut().enumerate() {
                    *l = buf[base + n * n * k];
                }
                fft.process_with_scratch(&mut lane, &mut scratch);
                for (k, l) in lane.iter().enumerate() {
                    buf[base + n * n * k] = *l;
                }
            }
        }
    }

    pub fn forward(&self, data: &[f64]) -> Spectrum {
        let mut buf: Spectrum = data.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.transform_axes(&mut buf, &self.forward);
        buf
    }

    /// Inverse transform keeping the real part, normalized by `1/N³`.
    pub fn inverse(&self, mut spec: Spectrum) -> Vec<f64> {
        self.transform_axes(&mut spec, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }

    /// Visits every mode with its first-derivative wavenumbers, full
    /// wavenumbers and 2/3-band membership.
    #[inline]
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, [f64; 3], [f64; 3], bool)) {
        let n = self.grid.n();
        let mut idx = 0;
        for c in 0..n {
            for b in 0..n {
                for a in 0..n {
                    let kd = [self.k_deriv[a], self.k_deriv[b], self.k_deriv[c]];
                    let kf = [self.k_full[a], self.k_full[b], self.k_full[c]];
                    let keep = self.keep[a] && self.keep[b] && self.keep[c];
                    f(idx, kd, kf, keep);
                    idx += 1;
                }
            }
        }
    }

    /// Multiplies a spectrum by a real symbol of `(k_deriv, k_full)`.
    pub fn apply_symbol(&self, spec: &mut [Complex64], symbol: impl Fn([f64; 3], [f64; 3]) -> f64) {
        self.for_each_mode(|idx, kd, kf, _| spec[idx] *= symbol(kd, kf));
    }

    /// Zeroes every mode outside the 2/3 band.
    pub fn truncate(&self, spec: &mut [Complex64]) {
        self.for_each_mode(|idx, _, _, keep| {
            if !keep {
                spec[idx] = Complex64::new(0.0, 0.0);
            }
        });
    }

    /// `i k_axis` applied in place.
    pub fn differentiate_spectrum(&self, spec: &mut [Complex64], axis: usize) {
        self.for_each_mode(|idx, kd, _, _| spec[idx] *= Complex64::new(0.0, kd[axis]));
    }

    pub fn dealias(&self, data: &[f64]) -> Vec<f64> {
        let mut s = self.forward(data);
        self.truncate(&mut s);
        self.inverse(s)
    }

    pub fn dealias_field<F: GridField>(&self, f: &F) -> F {
        f.map_components(|c| self.dealias(c))
    }

    /// All three first derivatives of one component.
    pub fn first_derivatives(&self, data: &[f64]) -> [Vec<f64>; 3] {
        match self.mode {
            DerivativeMode::Spectral => {
                let s = self.forward(data);
                std::array::from_fn(|axis| {
                    let mut d = s.clone();
                    self.differentiate_spectrum(&mut d, axis);
                    self.inverse(d)
                })
            }
            DerivativeMode::CentralDifference => {
                std::array::from_fn(|axis| self.central_difference(data, axis))
            }
        }
    }

    fn central_difference(&self, data: &[f64], axis: usize) -> Vec<f64> {
        let g = self.grid;
        let n = g.n();
        let inv = 1.0 / (2.0 * g.h());
        (0..g.len())
            .map(|idx| {
                let mut c = g.coords(idx);
                let orig = c[axis];
                c[axis] = (orig + 1) % n;
                let plus = data[g.index(c[0], c[1], c[2])];
                c[axis] = (orig + n - 1) % n;
                let minus = data[g.index(c[0], c[1], c[2])];
                (plus - minus) * inv
            })
            .collect()
    }

    fn laplacian_component(&self, data: &[f64]) -> Vec<f64> {
        match self.mode {
            DerivativeMode::Spectral => {
                let mut s = self.forward(data);
                self.apply_symbol(&mut s, |_, k| -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]));
                self.inverse(s)
            }
            DerivativeMode::CentralDifference => {
                let g = self.grid;
                let n = g.n();
                let inv = 1.0 / (g.h() * g.h());
                (0..g.len())
                    .map(|idx| {
                        let c = g.coords(idx);
                        let mut acc = -6.0 * data[idx];
                        for axis in 0..3 {
                            for step in [1, n - 1] {
                                let mut d = c;
                                d[axis] = (c[axis] + step) % n;
                                acc += data[g.index(d[0], d[1], d[2])];
                            }
                        }
                        acc * inv
                    })
                    .collect()
            }
        }
    }

    pub fn gradient(&self, v: &VectorField) -> TensorField {
        let mut t = TensorField::zeros(v.grid());
        for i in 0..3 {
            let d = self.first_derivatives(v.component(i));
            for (a, da) in d.into_iter().enumerate() {
                t.comps[a][i] = da;
            }
        }
        t
    }

    pub fn gradient_scalar(&self, f: &ScalarField) -> VectorField {
        VectorField::from_components(f.grid(), self.first_derivatives(f.data()))
    }

    /// `Σ_α ∂_α c_α`, optionally truncated to the 2/3 band.
    pub fn divergence_of(&self, comps: [&[f64]; 3], truncate: bool) -> Vec<f64> {
        match self.mode {
            DerivativeMode::Spectral => {
                let spectra = comps.map(|c| self.forward(c));
                let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.len()];
                self.for_each_mode(|idx, k, _, keep| {
                    if truncate && !keep {
                        return;
                    }
                    let s = spectra[0][idx] * k[0] + spectra[1][idx] * k[1] + spectra[2][idx] * k[2];
                    acc[idx] = Complex64::new(-s.im, s.re);
                });
                self.inverse(acc)
            }
            DerivativeMode::CentralDifference => {
                let mut out = vec![0.0; self.grid.len()];
                for (axis, c) in comps.iter().enumerate() {
                    for (o, x) in out.iter_mut().zip(self.central_difference(c, axis)) {
                        *o += x;
                    }
                }
                if truncate {
                    self.dealias(&out)
                } else {
                    out
                }
            }
        }
    }

    pub fn divergence(&self, v: &VectorField) -> ScalarField {
        let [a, b, c] = [0, 1, 2].map(|i| v.component(i));
        ScalarField::from_vec(v.grid(), self.divergence_of([a, b, c], false))
    }

    /// `(div T)_i = Σ_α ∂_α T[α][i]`.
    pub fn divergence_tensor(&self, t: &TensorField) -> VectorField {
        self.divergence_tensor_truncated(t, false)
    }

    pub fn divergence_tensor_truncated(&self, t: &TensorField, truncate: bool) -> VectorField {
        let comps = [0, 1, 2].map(|i| self.divergence_of([t.component(0, i), t.component(1, i), t.component(2, i)], truncate));
        VectorField::from_components(t.grid(), comps)
    }

    pub fn curl(&self, v: &VectorField) -> VectorField {
        let g = self.gradient(v);
        let mut out = VectorField::zeros(v.grid());
        for idx in 0..v.grid().len() {
            out.set(idx, crate::frank::curl_of(&g.at(idx)));
        }
        out
    }

    pub fn laplacian<F: GridField>(&self, f: &F) -> F {
        f.map_components(|c| self.laplacian_component(c))
    }

    /// `Σ_{α,β,i} (∂_α ∂_β u^i)²` at every node.
    pub fn hessian_norm_sq(&self, v: &VectorField) -> ScalarField {
        let g = v.grid();
        let mut out = vec![0.0; g.len()];
        for i in 0..3 {
            let d = self.first_derivatives(v.component(i));
            for da in d.iter() {
                let dd = self.first_derivatives(da);
                for db in dd.iter() {
                    for (o, x) in out.iter_mut().zip(db) {
                        *o += x * x;
                    }
                }
            }
        }
        ScalarField::from_vec(g, out)
    }

    /// Zero-mean `φ` with `−Δφ = rhs − mean(rhs)`.
    pub fn poisson_solve_zero_mean(&self, rhs: &ScalarField) -> ScalarField {
        let mut s = self.forward(rhs.data());
        self.apply_symbol(&mut s, |_, k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                0.0
            } else {
                1.0 / k2
            }
        });
        ScalarField::from_vec(rhs.grid(), self.inverse(s))
    }

    /// `(I − cΔ)⁻¹ f`; `c = 1` gives `(−Δ + I)⁻¹`.
    pub fn helmholtz_inverse<F: GridField>(&self, f: &F, c: f64) -> F {
        assert!(c >= 0.0, "Helmholtz coefficient must be non-negative");
        f.map_components(|comp| {
            let mut s = self.forward(comp);
            self.apply_symbol(&mut s, |_, k| 1.0 / (1.0 + c * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2])));
            self.inverse(s)
        })
    }

    /// Leray projection of spectra in place: `v̂ ← (I − k kᵀ/|k|²) v̂`.
    pub fn leray_project_spectra(&self, s: &mut [Spectrum; 3]) {
        self.for_each_mode(|idx, k, _, _| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                return;
            }
            let dot = (s[0][idx] * k[0] + s[1][idx] * k[1] + s[2][idx] * k[2]) / k2;
            for a in 0..3 {
                s[a][idx] -= dot * k[a];
            }
        });
    }

    pub fn leray_project(&self, v: &VectorField) -> VectorField {
        let mut s = [0, 1, 2].map(|i| self.forward(v.component(i)));
        self.leray_project_spectra(&mut s);
        let [a, b, c] = s;
        VectorField::from_components(v.grid(), [self.inverse(a), self.inverse(b), self.inverse(c)])
    }

    /// Gaussian filter `exp(−w²|k|²/2)`.
    pub fn mollify<F: GridField>(&self, f: &F, width: f64) -> F {
        assert!(width >= 0.0, "mollifier width must be non-negative");
        if width == 0.0 {
            return f.clone();
        }
        f.map_components(|comp| {
            let mut s = self.forward(comp);
            self.apply_symbol(&mut s, |_, k| (-0.5 * width * width * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2])).exp());
            self.inverse(s)
        })
    }

    /// `Σ |f̂|² / N³ · h³`; equals the grid L² norm squared by Parseval.
    pub fn spectral_norm_sq<F: GridField>(&self, f: &F) -> f64 {
        let g = self.grid;
        f.components()
            .iter()
            .map(|c| self.forward(c).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / g.len() as f64
            * g.cell_volume()
    }
}

/// Ball with periodic (torus) distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    center: [f64; 3],
    radius: f64,
}

impl Ball {
    pub fn new(grid: Grid, center: [f64; 3], radius: f64) -> Result<Self, GridError> {
        if !(radius > 0.0) {
            return Err(GridError::BadRadius(radius));
        }
        let cap = grid.max_ball_radius();
        if radius > cap + 1e-12 * grid.l() {
            return Err(GridError::BallTooLarge { radius, cap });
        }
        let center = center.map(|c| c.rem_euclid(grid.l()));
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Node indices within periodic distance `R` of the center, with the
    /// signed offsets (in units of `h`) from the center.
    pub fn members(&self, grid: Grid) -> Vec<(usize, [f64; 3])> {
        let n = grid.n() as i64;
        let h = grid.h();
        let cg = self.center.map(|c| c / h);
        let rg = self.radius / h;
        let r2 = rg * rg * (1.0 + 1e-12);
        let lo = cg.map(|c| (c - rg).floor() as i64);
        let hi = cg.map(|c| (c + rg).ceil() as i64);
        let mut out = Vec::new();
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let off = [i as f64 - cg[0], j as f64 - cg[1], k as f64 - cg[2]];
                    if off.iter().map(|x| x * x).sum::<f64>() <= r2 {
                        let idx = grid.index(
                            i.rem_euclid(n) as usize,
                            j.rem_euclid(n) as usize,
                            k.rem_euclid(n) as usize,
                        );
                        out.push((idx, off));
                    }
                }
            }
        }
        out
    }

    /// Discrete volume `count · h³`.
    pub fn discrete_volume(&self, grid: Grid) -> f64 {
        self.members(grid).len() as f64 * grid.cell_volume()
    }
}

/// `(Σ_{nodes in ball} |f|^p h³)^{1/p}`.
pub fn local_lp_norm<F: GridField>(f: &F, ball: &Ball, p: f64) -> Result<f64, GridError> {
    assert!(p >= 1.0, "Lp exponent must be >= 1");
    let grid = f.grid();
    Ball::new(grid, ball.center, ball.radius)?;
    let mag = f.magnitude();
    let sum: f64 = ball.members(grid).iter().map(|(idx, _)| mag.data()[*idx].powf(p)).sum();
    Ok((sum * grid.cell_volume()).powf(1.0 / p))
}
