//! Stand-alone solver for the equal-constant system: incompressible
//! Navier–Stokes coupled to the harmonic map heat flow,
//!
//! `∂_t u = 2(Δu + |∇u|² u) − (v·∇)u`,
//! `∂_t v = Δv − (v·∇)v − ∇p − 2 Σ_k Δu^k ∇u^k`.
//!
//! It shares only the spectral operators with the general solver and serves
//! as a second implementation to compare against.

use crate::grid::{Grid, GridField, Spectral, VectorField};

#[derive(Debug, Clone)]
pub struct SimplifiedSolver {
    ops: Spectral,
}

impl SimplifiedSolver {
    pub fn new(grid: Grid) -> Self {
        Self { ops: Spectral::new(grid) }
    }

    pub fn grid(&self) -> Grid {
        self.ops.grid()
    }

    pub fn director_rhs(&self, u: &VectorField, v: &VectorField) -> VectorField {
        let g = self.grid();
        let lap = self.ops.laplacian(u);
        let grad = self.ops.gradient(u);
        let mut out = VectorField::zeros(g);
        for idx in 0..g.len() {
            let l = lap.at(idx);
            let un = u.at(idx);
            let vn = v.at(idx);
            let gr = grad.at(idx);
            let gsq: f64 = gr.iter().flat_map(|r| r.iter()).map(|x| x * x).sum();
            out.set(
                idx,
                std::array::from_fn(|i| {
                    let transport: f64 = (0..3).map(|a| vn[a] * gr[a][i]).sum();
                    2.0 * (l[i] + gsq * un[i]) - transport
                }),
            );
        }
        out
    }

    /// `−(v·∇)v − 2 Σ_k Δu^k ∇u^k`.
    pub fn momentum_forcing(&self, u: &VectorField, v: &VectorField) -> VectorField {
        let g = self.grid();
        let lap = self.ops.laplacian(u);
        let grad_u = self.ops.gradient(u);
        let grad_v = self.ops.gradient(v);
        let mut out = VectorField::zeros(g);
        for idx in 0..g.len() {
            let l = lap.at(idx);
            let gu = grad_u.at(idx);
            let gv = grad_v.at(idx);
            let vn = v.at(idx);
            out.set(
                idx,
                std::array::from_fn(|i| {
                    let adv: f64 = (0..3).map(|a| vn[a] * gv[a][i]).sum();
                    let force: f64 = (0..3).map(|k| l[k] * gu[i][k]).sum();
                    -adv - 2.0 * force
                }),
            );
        }
        out
    }

    /// `(I − dtΔ) u_new = u + dt (rhs − Δu)`, `(I − dtΔ) v* = v + dt·forcing`,
    /// `v_new = Leray v*`, then `u_new ← u_new / |u_new|`.
    pub fn step(&self, u: &VectorField, v: &VectorField, dt: f64) -> (VectorField, VectorField) {
        let rhs = self.director_rhs(u, v);
        let lap = self.ops.laplacian(u);
        let explicit = VectorField::from_components(
            self.grid(),
            std::array::from_fn(|i| {
                u.component(i)
                    .iter()
                    .zip(rhs.component(i))
                    .zip(lap.component(i))
                    .map(|((a, r), l)| a + dt * (r - l))
                    .collect()
            }),
        );
        let mut u_new = self.ops.helmholtz_inverse(&explicit, dt);
        u_new.normalize();
        let forcing = self.momentum_forcing(u, v);
        let v_star = self.ops.helmholtz_inverse(&v.zip_components(&forcing, |a, b| a + dt * b), dt);
        (u_new, self.ops.leray_project(&v_star))
    }

    /// Harmonic map heat flow step (`v ≡ 0`).
    pub fn heat_flow_step(&self, u: &VectorField, dt: f64) -> VectorField {
        let zero = VectorField::zeros(self.grid());
        let rhs = self.director_rhs(u, &zero);
        let lap = self.ops.laplacian(u);
        let explicit = u.zip_components(&rhs, |a, r| a + dt * r).zip_components(&lap, |a, l| a - dt * l);
        let mut out = self.ops.helmholtz_inverse(&explicit, dt);
        out.normalize();
        out
    }
}
