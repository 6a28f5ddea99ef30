//! Periodic pseudospectral calculus on the circle of length `2πR`.
//!
//! Fields are stored as real samples on an equispaced grid; every spectral
//! operation goes through a complex FFT of length `N` normalised so that
//!
//! ```text
//! f(s_j) = Σ_l f̂_l exp(i l s_j / R),   f̂_l = (1/N) Σ_j f(s_j) exp(-i l s_j / R).
//! ```
//!
//! Pointwise products are dealiased with the 2/3 rule: every mode with
//! `|l| > (N - 1) / 3` is discarded after multiplication. Parity tags are
//! enforced by projecting the spectrum (even fields have real coefficients,
//! odd fields imaginary ones).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative tolerance used when validating parity and mean-free tags.
pub const TOL_PARITY: f64 = 1e-10;
/// Highest derivative order [`ScalarField::differentiate`] accepts.
pub const MAX_DERIVATIVE_ORDER: usize = 4;
/// Smallest admissible number of grid points.
pub const MIN_POINTS: usize = 16;

/// Equispaced periodic grid `s_j = j L / N` on `[0, L)`, `L = 2πR`.
#[derive(Clone)]
pub struct Grid {
    radius: f64,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Grid {
    pub fn new(radius: f64, n: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidGrid(format!("radius must be positive, got {radius}")));
        }
        if n < MIN_POINTS || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "N must be even and at least {MIN_POINTS}, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self {
            radius,
            n,
            forward,
            inverse,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Period `L = 2πR`.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.period() / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Largest mode kept by the 2/3 dealiasing rule.
    pub fn cutoff(&self) -> usize {
        (self.n - 1) / 3
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Signed Fourier mode stored at spectrum index `idx`.
    pub fn mode_at(&self, idx: usize) -> i64 {
        if idx <= self.n / 2 {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// Spectrum index of the signed mode `l` (taken modulo `N`).
    pub fn index_of(&self, l: i64) -> usize {
        l.rem_euclid(self.n as i64) as usize
    }

    /// Angular wavenumber `ξ = l / R` at spectrum index `idx`.
    pub fn wavenumber(&self, idx: usize) -> f64 {
        self.mode_at(idx) as f64 / self.radius
    }

    /// Returns an error unless mode `l` survives dealiasing.
    pub fn require_resolved(&self, l: usize) -> Result<()> {
        if l > self.cutoff() {
            Err(Error::resolution(l, self.n, self.cutoff()))
        } else {
            Ok(())
        }
    }

    /// Normalised forward transform of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_inplace(&mut buf);
        buf
    }

    /// Inverse transform, keeping the real part.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse_inplace(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Normalised forward transform of complex samples, in place.
    pub fn forward_inplace(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.forward.process(buf);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// Inverse transform (synthesis), in place.
    pub fn inverse_inplace(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.inverse.process(buf);
    }

    /// Zeroes every mode above the dealiasing cutoff.
    pub fn truncate(&self, spectrum: &mut [Complex64]) {
        let m = self.cutoff();
        for (idx, z) in spectrum.iter_mut().enumerate() {
            if self.mode_at(idx).unsigned_abs() as usize > m {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// H² Fourier weight `1 + ξ² + ξ⁴` at spectrum index `idx`.
    pub fn h2_weight(&self, idx: usize) -> f64 {
        let xi2 = self.wavenumber(idx).powi(2);
        1.0 + xi2 + xi2 * xi2
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.radius == other.radius
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("radius", &self.radius)
            .field("n", &self.n)
            .finish()
    }
}

/// Reflection symmetry class of a periodic field about `s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    Any,
}

impl Parity {
    /// Parity after `order` derivatives.
    pub fn differentiated(self, order: usize) -> Parity {
        match (self, order % 2) {
            (p, 0) => p,
            (Parity::Even, _) => Parity::Odd,
            (Parity::Odd, _) => Parity::Even,
            (Parity::Any, _) => Parity::Any,
        }
    }

    pub fn product(self, other: Parity) -> Parity {
        match (self, other) {
            (Parity::Any, _) | (_, Parity::Any) => Parity::Any,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        }
    }

    pub fn sum(self, other: Parity) -> Parity {
        if self == other {
            self
        } else {
            Parity::Any
        }
    }

    /// Whether a field tagged `self` is acceptable where `required` is expected.
    pub fn satisfies(self, required: Parity) -> bool {
        required == Parity::Any || self == required
    }
}

/// Projects a spectrum onto the requested parity / mean class, in place.
fn project(grid: &Grid, spectrum: &mut [Complex64], parity: Parity, mean_free: bool) {
    match parity {
        Parity::Even => spectrum.iter_mut().for_each(|z| z.im = 0.0),
        Parity::Odd => spectrum.iter_mut().for_each(|z| z.re = 0.0),
        Parity::Any => {}
    }
    if mean_free {
        spectrum[0] = Complex64::new(0.0, 0.0);
    }
    // A real signal's Nyquist coefficient must be real.
    let nyq = grid.nyquist_index();
    spectrum[nyq].im = 0.0;
}

/// Real-valued periodic function sampled on a [`Grid`].
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    parity: Parity,
    mean_free: bool,
}

impl ScalarField {
    /// Wraps samples, validating the parity and mean-free tags.
    pub fn new(grid: &Grid, values: Vec<f64>, parity: Parity, mean_free: bool) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        let field = Self {
            grid: grid.clone(),
            values,
            parity: Parity::Any,
            mean_free: false,
        };
        field.require(parity, mean_free)
    }

    /// Samples `f` at the grid points; untagged.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: grid.clone(),
            values: (0..grid.len()).map(|j| f(grid.point(j))).collect(),
            parity: Parity::Any,
            mean_free: false,
        }
    }

    pub fn zeros(grid: &Grid, parity: Parity) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            parity,
            mean_free: true,
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
            parity: Parity::Even,
            mean_free: c == 0.0,
        }
    }

    /// `Σ_{l≥1} coeffs[l-1] cos(l s / R)`: a mean-free even field.
    pub fn from_cos_modes(grid: &Grid, coeffs: &[f64]) -> Self {
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (i, &a) in coeffs.iter().enumerate() {
            let l = i as i64 + 1;
            spec[grid.index_of(l)] += Complex64::new(0.5 * a, 0.0);
            spec[grid.index_of(-l)] += Complex64::new(0.5 * a, 0.0);
        }
        Self::from_spectrum(grid, spec, Parity::Even, true)
    }

    /// `Σ_{l≥1} coeffs[l-1] sin(l s / R)`: an odd field.
    pub fn from_sin_modes(grid: &Grid, coeffs: &[f64]) -> Self {
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (i, &b) in coeffs.iter().enumerate() {
            let l = i as i64 + 1;
            spec[grid.index_of(l)] += Complex64::new(0.0, -0.5 * b);
            spec[grid.index_of(-l)] += Complex64::new(0.0, 0.5 * b);
        }
        Self::from_spectrum(grid, spec, Parity::Odd, true)
    }

    /// Synthesises a field from its normalised spectrum after projecting
    /// onto the requested class.
    pub fn from_spectrum(
        grid: &Grid,
        mut spectrum: Vec<Complex64>,
        parity: Parity,
        mean_free: bool,
    ) -> Self {
        project(grid, &mut spectrum, parity, mean_free);
        let values = grid.inverse(&spectrum);
        Self {
            grid: grid.clone(),
            values,
            parity,
            mean_free: mean_free || parity == Parity::Odd,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn is_mean_free(&self) -> bool {
        self.mean_free
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Arithmetic average of the samples: `(1/L) ∫ f ds` for resolved fields.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Coefficients `a_1..a_count` of `Σ a_l cos(l s / R)`.
    pub fn cos_modes(&self, count: usize) -> Vec<f64> {
        let spec = self.spectrum();
        (1..=count)
            .map(|l| 2.0 * spec[self.grid.index_of(l as i64)].re)
            .collect()
    }

    /// Coefficients `b_1..b_count` of `Σ b_l sin(l s / R)`.
    pub fn sin_modes(&self, count: usize) -> Vec<f64> {
        let spec = self.spectrum();
        (1..=count)
            .map(|l| -2.0 * spec[self.grid.index_of(l as i64)].im)
            .collect()
    }

    /// Checks the sample-level parity and mean conditions without retagging.
    pub fn check(&self, parity: Parity, mean_free: bool) -> Result<()> {
        let n = self.values.len();
        let scale = self.sup_norm();
        let tol = TOL_PARITY * scale;
        match parity {
            Parity::Even => {
                for j in 1..n {
                    let d = (self.values[j] - self.values[n - j]).abs();
                    if d > tol {
                        return Err(Error::Parity(format!(
                            "expected even field, mismatch {d:e} at sample {j}"
                        )));
                    }
                }
            }
            Parity::Odd => {
                if self.values[0].abs() > tol {
                    return Err(Error::Parity(format!(
                        "expected odd field, value {:e} at s = 0",
                        self.values[0]
                    )));
                }
                for j in 1..n {
                    let d = (self.values[j] + self.values[n - j]).abs();
                    if d > tol {
                        return Err(Error::Parity(format!(
                            "expected odd field, mismatch {d:e} at sample {j}"
                        )));
                    }
                }
            }
            Parity::Any => {}
        }
        if mean_free {
            let mean = self.mean();
            if mean.abs() > tol {
                return Err(Error::NotMeanFree { mean });
            }
        }
        Ok(())
    }

    /// Returns the field tagged with `parity`/`mean_free`. Already-tagged
    /// fields pass straight through; otherwise the samples are validated
    /// and projected onto the class.
    pub fn require(self, parity: Parity, mean_free: bool) -> Result<Self> {
        if self.parity.satisfies(parity) && (!mean_free || self.mean_free) {
            return Ok(self);
        }
        self.check(parity, mean_free)?;
        let tagged_parity = if parity == Parity::Any {
            self.parity
        } else {
            parity
        };
        let spec = self.spectrum();
        Ok(Self::from_spectrum(
            &self.grid,
            spec,
            tagged_parity,
            mean_free || self.mean_free,
        ))
    }

    /// Spectral derivative of the given order. The Nyquist mode is dropped.
    pub fn differentiate(&self, order: usize) -> Result<Self> {
        if order == 0 || order > MAX_DERIVATIVE_ORDER {
            return Err(Error::DerivativeOrder {
                order,
                max: MAX_DERIVATIVE_ORDER,
            });
        }
        let mut spec = self.spectrum();
        self.apply_derivative(&mut spec, order);
        Ok(Self::from_spectrum(
            &self.grid,
            spec,
            self.parity.differentiated(order),
            true,
        ))
    }

    pub(crate) fn apply_derivative(&self, spec: &mut [Complex64], order: usize) {
        let nyq = self.grid.nyquist_index();
        for (idx, z) in spec.iter_mut().enumerate() {
            if idx == nyq {
                *z = Complex64::new(0.0, 0.0);
                continue;
            }
            let ik = Complex64::new(0.0, self.grid.wavenumber(idx));
            *z *= ik.powu(order as u32);
        }
    }

    /// First derivative; infallible shorthand used throughout the solvers.
    pub fn d1(&self) -> Self {
        self.differentiate(1).expect("order 1 is always admissible")
    }

    pub fn d2(&self) -> Self {
        self.differentiate(2).expect("order 2 is always admissible")
    }

    /// The unique odd primitive of a mean-free even field.
    pub fn antiderivative(&self) -> Result<Self> {
        if self.parity != Parity::Even {
            return Err(Error::Parity(format!(
                "antiderivative needs an even field, got {:?}",
                self.parity
            )));
        }
        let mean = self.mean();
        if mean.abs() > TOL_PARITY * self.sup_norm().max(1.0) {
            return Err(Error::NotMeanFree { mean });
        }
        let nyq = self.grid.nyquist_index();
        let mut spec = self.spectrum();
        for (idx, z) in spec.iter_mut().enumerate() {
            if idx == 0 || idx == nyq {
                *z = Complex64::new(0.0, 0.0);
            } else {
                *z /= Complex64::new(0.0, self.grid.wavenumber(idx));
            }
        }
        Ok(Self::from_spectrum(&self.grid, spec, Parity::Odd, true))
    }

    /// Dealiased pointwise product.
    pub fn try_product(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let raw: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        let mut spec = self.grid.forward(&raw);
        self.grid.truncate(&mut spec);
        let parity = self.parity.product(other.parity);
        Ok(Self::from_spectrum(&self.grid, spec, parity, false))
    }

    /// Pointwise product on the grid without dealiasing; used for
    /// diagnostics that are evaluated sample by sample.
    pub fn pointwise(&self, other: &Self) -> Vec<f64> {
        assert!(self.grid == other.grid, "fields live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect()
    }

    /// Drops every mode above the dealiasing cutoff.
    pub fn dealiased(&self) -> Self {
        let mut spec = self.spectrum();
        self.grid.truncate(&mut spec);
        Self::from_spectrum(&self.grid, spec, self.parity, self.mean_free)
    }

    /// `s ↦ f(s + sigma)` as an exact spectral phase shift.
    pub fn shift(&self, sigma: f64) -> Self {
        let mut spec = self.spectrum();
        let nyq = self.grid.nyquist_index();
        for (idx, z) in spec.iter_mut().enumerate() {
            let phase = self.grid.wavenumber(idx) * sigma;
            if idx == nyq {
                *z *= phase.cos();
            } else {
                *z *= Complex64::from_polar(1.0, phase);
            }
        }
        Self::from_spectrum(&self.grid, spec, Parity::Any, self.mean_free)
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        let parity = match self.parity {
            Parity::Even => Parity::Even,
            _ if c == 0.0 => self.parity,
            _ => Parity::Any,
        };
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
            parity,
            mean_free: self.mean_free && c == 0.0,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            parity: self.parity,
            mean_free: self.mean_free,
        }
    }

    /// `f - mean(f)`.
    pub fn mean_removed(&self) -> Self {
        let m = self.mean();
        let mut out = self.add_scalar(-m);
        out.parity = self.parity;
        out.mean_free = true;
        out
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid == other.grid, "fields live on different grids");
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| op(a, b))
                .collect(),
            parity: self.parity.sum(other.parity),
            mean_free: self.mean_free && other.mean_free,
        }
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

/// Dealiased product. Panics if the grids differ; see [`ScalarField::try_product`].
impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.try_product(rhs).expect("fields live on different grids")
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scale(rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($($tr:ident :: $m:ident),*) => {$(
        impl $tr<ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $m(self, rhs: ScalarField) -> ScalarField { $tr::$m(&self, &rhs) }
        }
        impl $tr<&ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $m(self, rhs: &ScalarField) -> ScalarField { $tr::$m(&self, rhs) }
        }
        impl $tr<ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $m(self, rhs: ScalarField) -> ScalarField { $tr::$m(self, &rhs) }
        }
    )*};
}
forward_owned!(Add::add, Sub::sub, Mul::mul);

impl Mul<f64> for ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scale(rhs)
    }
}

impl Neg for ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scale(-1.0)
    }
}

/// `Σ_j ∫ ∂^j f ∂^j g ds` for `j = 0, 1, 2`, evaluated with Fourier weights.
pub fn h2_inner_scalar(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    let grid = &f.grid;
    let fs = f.spectrum();
    let gs = g.spectrum();
    let sum: f64 = fs
        .iter()
        .zip(&gs)
        .enumerate()
        .map(|(idx, (a, b))| grid.h2_weight(idx) * (a * b.conj()).re)
        .sum();
    Ok(grid.period() * sum)
}

/// H² pairing of two-component fields, summed over components.
pub fn h2_inner(
    f: (&ScalarField, &ScalarField),
    g: (&ScalarField, &ScalarField),
) -> Result<f64> {
    if f.0.grid != f.1.grid || f.0.grid != g.0.grid || g.0.grid != g.1.grid {
        return Err(Error::GridMismatch);
    }
    Ok(h2_inner_scalar(f.0, g.0)? + h2_inner_scalar(f.1, g.1)?)
}
