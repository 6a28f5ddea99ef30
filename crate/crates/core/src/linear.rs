//! The linearisation of the reduced screw-profile operator at the circle.
//!
//! In the basis `(cos(ls/R), sin(ls/R))` the operator acts on each mode
//! through the symmetric 2×2 block
//!
//! ```text
//! M_l(Ω) = [ (l²−1)/R²   −lΩ  ]
//!          [   −lΩ      l²/R² ]
//! ```
//!
//! so it is only ever materialised block by block.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{h2_inner, Grid, Parity, ScalarField};

/// Sense of rotation of the bifurcating branch: `Ω_k` or `−Ω_k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    #[default]
    Positive,
    Negative,
}

impl Rotation {
    pub fn sign(self) -> f64 {
        match self {
            Rotation::Positive => 1.0,
            Rotation::Negative => -1.0,
        }
    }
}

/// `Ω_k = √(k²−1)/R²`.
pub fn critical_omega(k: usize, radius: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Mode { k: k as i64 });
    }
    let kf = k as f64;
    Ok((kf * kf - 1.0).sqrt() / (radius * radius))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeMatrix {
    pub l: usize,
    pub omega: f64,
    pub radius: f64,
    pub entries: Matrix2<f64>,
}

impl ModeMatrix {
    pub fn new(l: usize, omega: f64, radius: f64) -> Self {
        let lf = l as f64;
        let r2 = radius * radius;
        let off = -lf * omega;
        Self {
            l,
            omega,
            radius,
            entries: Matrix2::new((lf * lf - 1.0) / r2, off, off, lf * lf / r2),
        }
    }

    /// Evaluated in factored form `l²((l²−1)/R⁴ − Ω²)` to avoid cancellation.
    pub fn determinant(&self) -> f64 {
        let lf = self.l as f64;
        let r4 = self.radius.powi(4);
        lf * lf * ((lf * lf - 1.0) / r4 - self.omega * self.omega)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = &self.entries;
        let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
        let rad = (0.25 * (m[(0, 0)] - m[(1, 1)]).powi(2) + m[(0, 1)].powi(2)).sqrt();
        (mid - rad, mid + rad)
    }

    /// Image of the coefficient pair `(a, b)` of `(a cos, b sin)`.
    pub fn apply(&self, a: f64, b: f64) -> (f64, f64) {
        let out = self.entries * Vector2::new(a, b);
        (out.x, out.y)
    }
}

pub fn mode_determinant(l: usize, omega: f64, radius: f64) -> f64 {
    ModeMatrix::new(l, omega, radius).determinant()
}

/// `𝓛_Ω(v⊥, w) = (−v⊥_ss − v⊥/R² − RΩ w_s, −w_ss + RΩ v⊥_s)`.
pub fn apply_l(
    omega: f64,
    vperp: &ScalarField,
    w: &ScalarField,
) -> Result<(ScalarField, ScalarField)> {
    let (vperp, w) = require_pair(vperp, w)?;
    let r = vperp.grid().radius();
    let first = &(&(-&vperp.d2()) - &vperp.scale(1.0 / (r * r))) - &w.d1().scale(r * omega);
    let second = &(-&w.d2()) + &vperp.d1().scale(r * omega);
    Ok((first, second))
}

/// `∂_Ω 𝓛_Ω (v⊥, w) = (−R w_s, R v⊥_s)`.
pub fn apply_lprime(vperp: &ScalarField, w: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    let (vperp, w) = require_pair(vperp, w)?;
    let r = vperp.grid().radius();
    Ok((w.d1().scale(-r), vperp.d1().scale(r)))
}

fn require_pair(vperp: &ScalarField, w: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    if vperp.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    Ok((
        vperp.clone().require(Parity::Even, true)?,
        w.clone().require(Parity::Odd, true)?,
    ))
}

/// Kernel direction `Φ_k = (k cos(ks/R), ±√(k²−1) sin(ks/R))` of `𝓛_{±Ω_k}`.
#[derive(Clone, Debug)]
pub struct KernelVector {
    pub k: usize,
    pub rotation: Rotation,
    pub phi1: ScalarField,
    pub phi2: ScalarField,
}

impl KernelVector {
    pub fn grid(&self) -> &Grid {
        self.phi1.grid()
    }

    /// `‖Φ_k‖²_{H²}`.
    pub fn norm_sq(&self) -> f64 {
        h2_inner((&self.phi1, &self.phi2), (&self.phi1, &self.phi2)).expect("shared grid")
    }

    /// `⟨(v⊥, w), Φ_k⟩_{H²}`.
    pub fn pair(&self, vperp: &ScalarField, w: &ScalarField) -> Result<f64> {
        h2_inner((vperp, w), (&self.phi1, &self.phi2))
    }
}

pub fn kernel_vector(k: usize, grid: &Grid) -> Result<KernelVector> {
    kernel_vector_for(k, grid, Rotation::Positive)
}

pub fn kernel_vector_for(k: usize, grid: &Grid, rotation: Rotation) -> Result<KernelVector> {
    if k < 2 {
        return Err(Error::Mode { k: k as i64 });
    }
    grid.require_resolved(k)?;
    let kf = k as f64;
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    a[k - 1] = kf;
    b[k - 1] = rotation.sign() * (kf * kf - 1.0).sqrt();
    Ok(KernelVector {
        k,
        rotation,
        phi1: ScalarField::from_cos_modes(grid, &a),
        phi2: ScalarField::from_sin_modes(grid, &b),
    })
}

/// `⟨𝓛'Φ_k, Φ_k⟩_{H²}` evaluated numerically on `grid`.
pub fn transversality_pairing(k: usize, grid: &Grid) -> Result<f64> {
    let phi = kernel_vector(k, grid)?;
    let (l1, l2) = apply_lprime(&phi.phi1, &phi.phi2)?;
    h2_inner((&l1, &l2), (&phi.phi1, &phi.phi2))
}

/// `−2πR k²√(k²−1)(1 + k²/R² + k⁴/R⁴)`.
pub fn transversality_closed_form(k: usize, radius: f64) -> f64 {
    let kf = k as f64;
    let xi2 = (kf / radius).powi(2);
    -2.0 * std::f64::consts::PI * radius * kf * kf * (kf * kf - 1.0).sqrt() * (1.0 + xi2 + xi2 * xi2)
}
