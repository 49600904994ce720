//! Oseen–Frank elastic energy density and its derivatives.
//!
//! The density is evaluated from its geometric form (splay, twist, bend and
//! the saddle-splay null Lagrangian) for a director `u` and a pointwise
//! gradient `G` with `G[α][i] = ∂_α u^i`:
//!
//! ```text
//! W = k1 (div u)² + k2 (u·curl u)² + k3 |u × curl u|² + (k2 + k4)(tr(G²) − (div u)²)
//! ```
//!
//! Off the unit sphere the bend term is extended as `|curl u|² − (u·curl u)²`,
//! which agrees with `|u × curl u|²` whenever `|u| = 1`. With that extension
//! the equal-constant case `k = (1, 1, 1, 0)` reduces to `W = |G|²` for every
//! `u`, so `W_p = 2G` and `W_u = 0` hold identically.

use thiserror::Error;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Gradient of a vector field at one point: `G[α][i] = ∂_α u^i`.
///
/// Rows index the spatial direction, columns the component.
pub type PointwiseGradient = Mat3;

/// Largest accepted deviation of `|u|` from one at evaluation sites.
pub const UNIT_TOLERANCE: f64 = 1e-8;

/// Tolerance on `QᵀQ = I` and `det Q = 1` for rotation inputs.
pub const ROTATION_TOLERANCE: f64 = 1e-12;

/// The four Ericksen inequalities, in the order they are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EricksenInequality {
    SplayPositive,
    TwistDominatesSaddleSplay,
    BendPositive,
    SplayBound,
}

impl std::fmt::Display for EricksenInequality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EricksenInequality::SplayPositive => "k1 > 0",
            EricksenInequality::TwistDominatesSaddleSplay => "k2 > |k4|",
            EricksenInequality::BendPositive => "k3 > 0",
            EricksenInequality::SplayBound => "2k1 >= k2 + k4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrankError {
    #[error("Ericksen inequality violated: {0}")]
    EricksenViolation(EricksenInequality),
    #[error("Frank constants must be finite")]
    NonFinite,
    #[error("director is not unit length (|u| = {norm})")]
    NonUnitDirector { norm: f64 },
    #[error("matrix is not a proper rotation (orthogonality defect {defect:e}, det {det})")]
    NotARotation { defect: f64, det: f64 },
}

/// Validated elastic moduli together with the ellipticity constant
/// `a = min(k2, k3, k2 + k4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrankConstants {
    k1: f64,
    k2: f64,
    k3: f64,
    k4: f64,
    a: f64,
}

impl FrankConstants {
    /// Validates `(k1, k2, k3, k4)` against Ericksen's inequalities.
    pub fn new(k1: f64, k2: f64, k3: f64, k4: f64) -> Result<Self, FrankError> {
        if ![k1, k2, k3, k4].iter().all(|k| k.is_finite()) {
            return Err(FrankError::NonFinite);
        }
        let checks = [
            (k1 > 0.0, EricksenInequality::SplayPositive),
            (k2 > k4.abs(), EricksenInequality::TwistDominatesSaddleSplay),
            (k3 > 0.0, EricksenInequality::BendPositive),
            (2.0 * k1 >= k2 + k4, EricksenInequality::SplayBound),
        ];
        if let Some((_, failed)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(FrankError::EricksenViolation(*failed));
        }
        let a = k2.min(k3).min(k2 + k4);
        Ok(Self { k1, k2, k3, k4, a })
    }

    /// The equal-constant case `k = (1, 1, 1, 0)`, where `W = |∇u|²`.
    pub fn equal() -> Self {
        Self::new(1.0, 1.0, 1.0, 0.0).expect("equal constants are admissible")
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }
    pub fn k3(&self) -> f64 {
        self.k3
    }
    pub fn k4(&self) -> f64 {
        self.k4
    }

    /// Ellipticity constant `min(k2, k3, k2 + k4)`.
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.k1, self.k2, self.k3, self.k4]
    }

    /// Same moduli with the saddle-splay constant replaced.
    pub fn with_k4(&self, k4: f64) -> Result<Self, FrankError> {
        Self::new(self.k1, self.k2, self.k3, k4)
    }

    pub fn max_modulus(&self) -> f64 {
        self.k1.max(self.k2).max(self.k3)
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0_f64, |m, k| m.max(k.abs()))
    }
}

impl Default for FrankConstants {
    fn default() -> Self {
        Self::equal()
    }
}

/// `curl_i = ε_{iαβ} G[α][β]`.
#[inline]
pub fn curl_of(g: &Mat3) -> Vec3 {
    [g[1][2] - g[2][1], g[2][0] - g[0][2], g[0][1] - g[1][0]]
}

#[inline]
pub fn trace(g: &Mat3) -> f64 {
    g[0][0] + g[1][1] + g[2][2]
}

/// `tr(G²) = Σ G[α][i] G[i][α]`.
#[inline]
pub fn trace_of_square(g: &Mat3) -> f64 {
    let mut t = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            t += g[a][b] * g[b][a];
        }
    }
    t
}

#[inline]
pub fn frobenius_sq(g: &Mat3) -> f64 {
    g.iter().flatten().map(|x| x * x).sum()
}

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// `E(x)[α][β] = ε_{iαβ} x_i`, the skew matrix dual to `x`.
#[inline]
fn levi_civita_dual(x: &Vec3) -> Mat3 {
    [[0.0, x[2], -x[1]], [-x[2], 0.0, x[0]], [x[1], -x[0], 0.0]]
}

fn check_unit(u: &Vec3) -> Result<(), FrankError> {
    let n = norm(u);
    if (n - 1.0).abs() > UNIT_TOLERANCE || !n.is_finite() {
        return Err(FrankError::NonUnitDirector { norm: n });
    }
    Ok(())
}

/// Energy density without the unit-length check.
#[inline]
pub fn energy_density_unchecked(u: &Vec3, g: &Mat3, k: &FrankConstants) -> f64 {
    let d = trace(g);
    let c = curl_of(g);
    let s = dot(u, &c);
    k.k1 * d * d
        + (k.k2 - k.k3) * s * s
        + k.k3 * dot(&c, &c)
        + (k.k2 + k.k4) * (trace_of_square(g) - d * d)
}

/// Oseen–Frank density `W(u, G)`.
pub fn energy_density(u: &Vec3, g: &PointwiseGradient, k: &FrankConstants) -> Result<f64, FrankError> {
    check_unit(u)?;
    Ok(energy_density_unchecked(u, g, k))
}

/// `(W_p, W_u)` without the unit-length check; used in grid loops after a
/// whole-field drift check.
#[inline]
pub fn derivatives_unchecked(u: &Vec3, g: &Mat3, k: &FrankConstants) -> (Mat3, Vec3) {
    let d = trace(g);
    let c = curl_of(g);
    let s = dot(u, &c);
    let big_k = k.k2 + k.k4;
    let twist_bend = 2.0 * (k.k2 - k.k3) * s;
    let eu = levi_civita_dual(u);
    let ec = levi_civita_dual(&c);
    let mut wp = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut w = twist_bend * eu[a][b] + 2.0 * k.k3 * ec[a][b] + 2.0 * big_k * g[b][a];
            if a == b {
                w += 2.0 * (k.k1 - big_k) * d;
            }
            wp[a][b] = w;
        }
    }
    let wu = [twist_bend * c[0], twist_bend * c[1], twist_bend * c[2]];
    (wp, wu)
}

/// `∂W/∂G[α][i]`, linear in `G` for fixed `u`.
pub fn d_w_d_p(u: &Vec3, g: &PointwiseGradient, k: &FrankConstants) -> Result<Mat3, FrankError> {
    check_unit(u)?;
    Ok(derivatives_unchecked(u, g, k).0)
}

/// `∂W/∂u^i`, quadratic in `G`.
pub fn d_w_d_u(u: &Vec3, g: &PointwiseGradient, k: &FrankConstants) -> Result<Vec3, FrankError> {
    check_unit(u)?;
    Ok(derivatives_unchecked(u, g, k).1)
}

/// Constant-in-`p` second derivative `W_{p_α^i p_β^j}` at a fixed director.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessTensor {
    /// `c[α][i][β][j]`.
    pub c: [[[[f64; 3]; 3]; 3]; 3],
}

impl StiffnessTensor {
    /// `Σ ξ[α][i] c[α][i][β][j] ξ[β][j]`.
    pub fn quadratic_form(&self, xi: &Mat3) -> f64 {
        let mut q = 0.0;
        for a in 0..3 {
            for i in 0..3 {
                for b in 0..3 {
                    for j in 0..3 {
                        q += xi[a][i] * self.c[a][i][b][j] * xi[b][j];
                    }
                }
            }
        }
        q
    }

    /// Contraction with a gradient; reproduces `W_p` exactly since `W` is
    /// quadratic in `p`.
    pub fn apply(&self, g: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for a in 0..3 {
            for i in 0..3 {
                let mut s = 0.0;
                for b in 0..3 {
                    for j in 0..3 {
                        s += self.c[a][i][b][j] * g[b][j];
                    }
                }
                out[a][i] = s;
            }
        }
        out
    }

    /// Acoustic tensor `A_ij(n) = c[α][i][β][j] n_α n_β`.
    pub fn acoustic(&self, n: &Vec3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        s += self.c[a][i][b][j] * n[a] * n[b];
                    }
                }
                out[i][j] = s;
            }
        }
        out
    }
}

/// Second derivative of `W` in the gradient slot.
pub fn d2_w_d_p2(u: &Vec3, k: &FrankConstants) -> Result<StiffnessTensor, FrankError> {
    check_unit(u)?;
    let eu = levi_civita_dual(u);
    let big_k = k.k2 + k.k4;
    let delta = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
    let mut c = [[[[0.0; 3]; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for g in 0..3 {
                for d in 0..3 {
                    c[a][b][g][d] = 2.0 * k.k1 * delta(a, b) * delta(g, d)
                        + 2.0 * (k.k2 - k.k3) * eu[a][b] * eu[g][d]
                        + 2.0 * k.k3 * (delta(a, g) * delta(b, d) - delta(a, d) * delta(b, g))
                        + 2.0 * big_k * (delta(b, g) * delta(a, d) - delta(a, b) * delta(g, d));
                }
            }
        }
    }
    Ok(StiffnessTensor { c })
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|m| a[i][m] * b[m][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, x: &Vec3) -> Vec3 {
    [dot(&a[0], x), dot(&a[1], x), dot(&a[2], x)]
}

pub fn determinant(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Checks `QᵀQ = I` and `det Q = +1`.
pub fn check_rotation(q: &Mat3) -> Result<(), FrankError> {
    let qtq = mat_mul(&transpose(q), q);
    let mut defect: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((qtq[i][j] - target).abs());
        }
    }
    let det = determinant(q);
    if !(defect <= ROTATION_TOLERANCE) || !((det - 1.0).abs() <= ROTATION_TOLERANCE) {
        return Err(FrankError::NotARotation { defect, det });
    }
    Ok(())
}

/// Frame change `(u, G) ↦ (Qu, Q G Qᵀ)`.
pub fn apply_rotation(u: &Vec3, g: &PointwiseGradient, q: &Mat3) -> Result<(Vec3, Mat3), FrankError> {
    check_rotation(q)?;
    Ok((mat_vec(q, u), mat_mul(&mat_mul(q, g), &transpose(q))))
}

/// A rotation taking the unit vector `u` to the north pole `(0, 0, 1)`.
pub fn rotation_to_north_pole(u: &Vec3) -> Result<Mat3, FrankError> {
    check_unit(u)?;
    let c = u[2];
    if c < -1.0 + 1e-12 {
        // antipodal: half turn about the x axis
        return Ok([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
    }
    // Rodrigues form R = I + [w]× + [w]×² / (1 + c), w = u × e3
    let w = cross(u, &[0.0, 0.0, 1.0]);
    let wx = [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]];
    let wx2 = mat_mul(&wx, &wx);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = if i == j { 1.0 } else { 0.0 } + wx[i][j] + wx2[i][j] / (1.0 + c);
        }
    }
    Ok(r)
}

/// The frame-invariant contraction `u^i u^k W_{p_α^k} ∂_α w^i`, with
/// `gw[α][i] = ∂_α w^i`.
pub fn director_coupling(
    u: &Vec3,
    g: &PointwiseGradient,
    gw: &Mat3,
    k: &FrankConstants,
) -> Result<f64, FrankError> {
    let wp = d_w_d_p(u, g, k)?;
    let mut total = 0.0;
    for a in 0..3 {
        let uw = dot(u, &wp[a]);
        let ug = dot(u, &gw[a]);
        total += uw * ug;
    }
    Ok(total)
}
