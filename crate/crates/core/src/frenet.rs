//! Geometry around the reference circle: curves in ℝ³, the Frenet frame of
//! the circle, perturbations written in that frame, the residual fields of
//! the screw-profile equation, screw-motion evaluation and the distance to
//! the orbit of the circle under rotations about `e₃` and translations.

use std::io::{Read, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{h2_inner_scalar, Grid, Parity, ScalarField};

/// Closed curve `𝕋 → ℝ³` sampled on the spectral grid.
#[derive(Clone, Debug)]
pub struct Curve3 {
    comps: [ScalarField; 3],
}

impl Curve3 {
    pub fn new(x: ScalarField, y: ScalarField, z: ScalarField) -> Result<Self> {
        if x.grid() != y.grid() || x.grid() != z.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { comps: [x, y, z] })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> Vector3<f64>) -> Self {
        let pts: Vec<Vector3<f64>> = grid.points().into_iter().map(f).collect();
        let comp = |i: usize| {
            ScalarField::new(grid, pts.iter().map(|p| p[i]).collect(), Parity::Any, false)
                .expect("sample count matches grid")
        };
        Self {
            comps: [comp(0), comp(1), comp(2)],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.comps[0].grid()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn components(&self) -> &[ScalarField; 3] {
        &self.comps
    }

    pub fn point(&self, j: usize) -> Vector3<f64> {
        Vector3::new(
            self.comps[0].values()[j],
            self.comps[1].values()[j],
            self.comps[2].values()[j],
        )
    }

    pub fn derivative(&self, order: usize) -> Result<Self> {
        Ok(Self {
            comps: [
                self.comps[0].differentiate(order)?,
                self.comps[1].differentiate(order)?,
                self.comps[2].differentiate(order)?,
            ],
        })
    }

    /// Reparameterisation `s ↦ x(s + sigma)`.
    pub fn shift(&self, sigma: f64) -> Self {
        Self {
            comps: self.comps.clone().map(|c| c.shift(sigma)),
        }
    }

    /// Rigid rotation `Q^α_z` about the `e₃` axis.
    pub fn rotate_z(&self, alpha: f64) -> Self {
        let (sa, ca) = alpha.sin_cos();
        let [x, y, z] = &self.comps;
        Self {
            comps: [&x.scale(ca) - &y.scale(sa), &x.scale(sa) + &y.scale(ca), z.clone()],
        }
    }

    pub fn translate(&self, v: Vector3<f64>) -> Self {
        Self {
            comps: [
                self.comps[0].add_scalar(v.x),
                self.comps[1].add_scalar(v.y),
                self.comps[2].add_scalar(v.z),
            ],
        }
    }

    pub fn mean(&self) -> Vector3<f64> {
        Vector3::new(self.comps[0].mean(), self.comps[1].mean(), self.comps[2].mean())
    }

    /// `sup_j |x(s_j) − y(s_j)|` (Euclidean norm per sample).
    pub fn sup_distance(&self, other: &Self) -> f64 {
        (0..self.grid().len())
            .map(|j| (self.point(j) - other.point(j)).norm())
            .fold(0.0, f64::max)
    }

    /// Componentwise difference.
    pub fn difference(&self, other: &Self) -> Self {
        Self {
            comps: [
                &self.comps[0] - &other.comps[0],
                &self.comps[1] - &other.comps[1],
                &self.comps[2] - &other.comps[2],
            ],
        }
    }

    pub fn h2_norm(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| h2_inner_scalar(c, c).expect("components share a grid"))
            .sum::<f64>()
            .sqrt()
    }

    /// `|x_s|` at every sample.
    pub fn speed(&self) -> Vec<f64> {
        let d = self.derivative(1).expect("order 1");
        (0..self.grid().len()).map(|j| d.point(j).norm()).collect()
    }

    /// Length `∫ |x_s| ds` (trapezoidal rule, spectrally accurate).
    pub fn length(&self) -> f64 {
        self.speed().iter().sum::<f64>() * self.grid().spacing()
    }

    /// Writes `s,x,y,z` rows with 17 significant digits, preceded by
    /// `# ` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for line in comments {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "x", "y", "z"])?;
        for j in 0..self.grid().len() {
            let p = self.point(j);
            w.write_record([
                format!("{:.16e}", self.grid().point(j)),
                format!("{:.16e}", p.x),
                format!("{:.16e}", p.y),
                format!("{:.16e}", p.z),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Curve3::write_csv`]; `#` lines are skipped.
    pub fn read_csv<R: Read>(input: R, radius: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let mut cols: [Vec<f64>; 3] = Default::default();
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Io(format!("expected 4 columns, got {}", rec.len())));
            }
            for i in 0..3 {
                let v: f64 = rec[i + 1]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Io(format!("bad number {:?}: {e}", &rec[i + 1])))?;
                cols[i].push(v);
            }
        }
        let grid = Grid::new(radius, cols[0].len())?;
        let [x, y, z] = cols;
        Self::new(
            ScalarField::new(&grid, x, Parity::Any, false)?,
            ScalarField::new(&grid, y, Parity::Any, false)?,
            ScalarField::new(&grid, z, Parity::Any, false)?,
        )
    }
}

/// `x^R_0(s) = R cos(s/R) e₁ + R sin(s/R) e₂`.
pub fn circle_profile(grid: &Grid) -> Curve3 {
    let r = grid.radius();
    Curve3::from_fn(grid, |s| {
        let th = s / r;
        Vector3::new(r * th.cos(), r * th.sin(), 0.0)
    })
}

/// Frenet frame of the reference circle.
#[derive(Clone, Debug)]
pub struct FrenetFrame {
    pub tangent: Curve3,
    pub normal: Curve3,
    pub binormal: Curve3,
}

/// `t = x^R_{0s}`, `n = −x^R_0 / R`, `b = e₃`.
pub fn frenet_frame(grid: &Grid) -> FrenetFrame {
    let r = grid.radius();
    FrenetFrame {
        tangent: Curve3::from_fn(grid, |s| {
            let th = s / r;
            Vector3::new(-th.sin(), th.cos(), 0.0)
        }),
        normal: Curve3::from_fn(grid, |s| {
            let th = s / r;
            Vector3::new(-th.cos(), -th.sin(), 0.0)
        }),
        binormal: Curve3::from_fn(grid, |_| Vector3::z()),
    }
}

/// Perturbation `z = u t + (v₀ + v⊥) n + w b` of the reference circle.
#[derive(Clone, Debug)]
pub struct FramePerturbation {
    u: ScalarField,
    v0: f64,
    vperp: ScalarField,
    w: ScalarField,
}

impl FramePerturbation {
    /// `u` and `w` must be odd, `vperp` even and mean-free.
    pub fn new(u: ScalarField, v0: f64, vperp: ScalarField, w: ScalarField) -> Result<Self> {
        if u.grid() != vperp.grid() || u.grid() != w.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            u: u.require(Parity::Odd, true)?,
            v0,
            vperp: vperp.require(Parity::Even, true)?,
            w: w.require(Parity::Odd, true)?,
        })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            u: ScalarField::zeros(grid, Parity::Odd),
            v0: 0.0,
            vperp: ScalarField::zeros(grid, Parity::Even),
            w: ScalarField::zeros(grid, Parity::Odd),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn vperp(&self) -> &ScalarField {
        &self.vperp
    }

    pub fn w(&self) -> &ScalarField {
        &self.w
    }

    /// Full normal component `v = v₀ + v⊥`.
    pub fn v(&self) -> ScalarField {
        self.vperp.add_scalar(self.v0)
    }

    /// Tangential stretch `1 + u_s − v/R` of the perturbed curve.
    pub fn stretch(&self) -> ScalarField {
        let r = self.grid().radius();
        (&self.u.d1() - &self.v().scale(1.0 / r)).add_scalar(1.0)
    }

    pub fn min_stretch(&self) -> f64 {
        self.stretch().values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            u: self.u.scale(factor),
            v0: self.v0 * factor,
            vperp: self.vperp.scale(factor),
            w: self.w.scale(factor),
        }
    }

    /// `s ↦ z(s + sigma)` expressed in the frame at `s`. Parity is kept only
    /// when the shift is a symmetry of the field content, so the result is
    /// re-validated.
    pub fn shifted(&self, sigma: f64) -> Result<Self> {
        Self::new(
            self.u.shift(sigma),
            self.v0,
            self.vperp.shift(sigma),
            self.w.shift(sigma),
        )
    }
}

/// Parameters `(R, Ω, c, δV)` of an axial screw motion
/// `x(s,t) = Q^{Ωt}_z y(s + ct) + V t e₃` with `V = 1/R + δV`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrewParams {
    pub radius: f64,
    pub omega: f64,
    pub c: f64,
    pub delta_v: f64,
}

impl ScrewParams {
    pub fn new(radius: f64, omega: f64, c: f64, delta_v: f64) -> Self {
        Self {
            radius,
            omega,
            c,
            delta_v,
        }
    }

    pub fn from_axial_speed(radius: f64, omega: f64, c: f64, v: f64) -> Self {
        Self::new(radius, omega, c, v - 1.0 / radius)
    }

    /// `V = 1/R + δV`.
    pub fn axial_speed(&self) -> f64 {
        1.0 / self.radius + self.delta_v
    }
}

/// Residual fields `𝒯, 𝒩, ℬ, 𝒞` and the quadratic part `𝒬` of `𝒞`.
#[derive(Clone, Debug)]
pub struct Residuals {
    pub t: ScalarField,
    pub n: ScalarField,
    pub b: ScalarField,
    pub c: ScalarField,
    pub q: ScalarField,
}

impl Residuals {
    /// `max(sup|𝒩|, sup|ℬ|, sup|𝒞|)`: the equations actually imposed.
    pub fn nbc_sup(&self) -> f64 {
        self.n.sup_norm().max(self.b.sup_norm()).max(self.c.sup_norm())
    }
}

/// Tangential, normal and binormal components of the screw-profile
/// equation for the perturbation `p`, plus the arclength constraint.
pub fn residuals(p: &FramePerturbation, omega: f64, delta_v: f64) -> Residuals {
    let r = p.grid().radius();
    let (u, w) = (&p.u, &p.w);
    let v = p.v();
    let us = u.d1();
    let uss = u.d2();
    let vs = p.vperp.d1();
    let vss = p.vperp.d2();
    let ws = w.d1();
    let wss = w.d2();

    let a = &us - &v.scale(1.0 / r); // u_s − v/R
    let bt = &vs + &u.scale(1.0 / r); // v_s + u/R

    let t = &(&(-&uss + vs.scale(1.0 / r)) + &(u * &ws).scale(omega)) - &bt.scale(delta_v);
    let n = &(&(&(-&vss) - &us.scale(1.0 / r)) - &ws.scale(r * omega))
        + &(&(&v * &ws).scale(omega) + &a.add_scalar(1.0).scale(delta_v));
    let b = &(&(-&wss) + &vs.scale(r * omega)) - &(&(u * &us) + &(&v * &vs)).scale(omega);
    let q = (&(&(&a * &a) + &(&bt * &bt)) + &(&ws * &ws)).scale(0.5);
    let c = &a + &q;

    Residuals { t, n, b, c, q }
}

/// Sup-norm of `(1+u_s−v/R)𝒯 + (v_s+u/R)𝒩 + w_s ℬ + ∂_s𝒞`, which vanishes
/// identically (on and off solutions).
pub fn tangential_identity_defect(p: &FramePerturbation, omega: f64, delta_v: f64) -> f64 {
    let r = p.grid().radius();
    let res = residuals(p, omega, delta_v);
    let stretch = p.stretch();
    let bt = &p.vperp.d1() + &p.u.scale(1.0 / r);
    let ws = p.w.d1();
    let cs = res.c.d1();
    let lhs1 = stretch.pointwise(&res.t);
    let lhs2 = bt.pointwise(&res.n);
    let lhs3 = ws.pointwise(&res.b);
    (0..lhs1.len())
        .map(|j| (lhs1[j] + lhs2[j] + lhs3[j] + cs.values()[j]).abs())
        .fold(0.0, f64::max)
}

/// `y = x^R_0 + u t + (v₀+v⊥) n + w b`.
pub fn assemble_curve(p: &FramePerturbation) -> Curve3 {
    let grid = p.grid();
    let r = grid.radius();
    let v = p.v();
    let u = p.u.values();
    let v = v.values();
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let (sn, cs) = (grid.point(j) / r).sin_cos();
        xs.push(r * cs - u[j] * sn - v[j] * cs);
        ys.push(r * sn + u[j] * cs - v[j] * sn);
    }
    Curve3::new(
        ScalarField::new(grid, xs, Parity::Any, false).expect("grid sized"),
        ScalarField::new(grid, ys, Parity::Any, false).expect("grid sized"),
        p.w.clone(),
    )
    .expect("shared grid")
}

/// Slip velocity from `g(s) = −y_s·(Ω e₃×y + V e₃)`: returns the mean of
/// `g` and `sup|g − mean|`, which vanishes on true screw profiles.
pub fn slip_velocity(y: &Curve3, omega: f64, v: f64) -> (f64, f64) {
    let ys = y.derivative(1).expect("order 1");
    let n = y.grid().len();
    let mut worst_speed = 0.0f64;
    let g: Vec<f64> = (0..n)
        .map(|j| {
            let p = y.point(j);
            let d = ys.point(j);
            worst_speed = worst_speed.max((d.norm() - 1.0).abs());
            let rot = Vector3::new(-omega * p.y, omega * p.x, v);
            -d.dot(&rot)
        })
        .collect();
    if worst_speed > 1e-6 {
        log::warn!("slip velocity evaluated on a curve with | |y_s| - 1 | up to {worst_speed:e}");
    }
    let c = g.iter().sum::<f64>() / n as f64;
    let variation = g.iter().fold(0.0f64, |m, gi| m.max((gi - c).abs()));
    (c, variation)
}

/// `x(s,t) = Q^{Ωt}_z y(s + ct) + V t e₃`.
pub fn screw_evaluate(y: &Curve3, sp: &ScrewParams, t: f64) -> Curve3 {
    y.shift(sp.c * t)
        .rotate_z(sp.omega * t)
        .translate(Vector3::new(0.0, 0.0, sp.axial_speed() * t))
}

/// Minimiser of the H² distance to the orbit of the circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitDistance {
    pub dist: f64,
    pub alpha: f64,
    pub tau: Vector3<f64>,
}

/// `inf_{α, τ} ‖x − (Q^α_z x^R_0 + τ)‖_{H²}` with `R` taken from the grid.
///
/// The translation only sees the mean of `x`, and the rotation only sees the
/// first Fourier harmonic of the planar components, where the cross term is
/// `A cos α + B sin α`; both minimisers are therefore explicit.
pub fn orbit_distance(x: &Curve3) -> OrbitDistance {
    let grid = x.grid();
    let r = grid.radius();
    let tau = x.mean();
    let (x1, x2) = (x.component(0).values(), x.component(1).values());
    let (mut a, mut b) = (0.0, 0.0);
    for j in 0..grid.len() {
        let (sn, cs) = (grid.point(j) / r).sin_cos();
        a += x1[j] * cs + x2[j] * sn;
        b += x2[j] * cs - x1[j] * sn;
    }
    let alpha = b.atan2(a);
    let reference = circle_profile(grid).rotate_z(alpha).translate(tau);
    let dist = x.difference(&reference).h2_norm();
    OrbitDistance { dist, alpha, tau }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(r: f64) -> Grid {
        Grid::new(r, 128).unwrap()
    }

    /// Low-mode random perturbation with the right parities.
    fn sample_perturbation(grid: &Grid, seed: u64, amp: f64) -> FramePerturbation {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|l| amp * rng.gen_range(-1.0..1.0) / (1.0 + l as f64).powi(2)).collect()
        };
        let u = ScalarField::from_sin_modes(grid, &draw(6));
        let vp = ScalarField::from_cos_modes(grid, &draw(6));
        let w = ScalarField::from_sin_modes(grid, &draw(6));
        let v0 = draw(1)[0];
        FramePerturbation::new(u, v0, vp, w).unwrap()
    }

    #[test]
    fn circle_samples() {
        let g = grid(1.0);
        let x0 = circle_profile(&g);
        assert!((x0.point(0) - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        for j in 0..g.len() {
            assert!((x0.point(j).norm() - 1.0).abs() < 1e-14);
        }
        let t0 = x0.derivative(1).unwrap().point(0);
        assert!((t0 - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn frame_is_orthonormal_and_satisfies_frenet_serret() {
        for &r in &[0.5, 1.0, 2.0] {
            let g = Grid::new(r, 256).unwrap();
            let f = frenet_frame(&g);
            if r == 1.0 {
                assert!((f.tangent.point(0) - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
                assert!((f.normal.point(0) - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
                assert!((f.binormal.point(0) - Vector3::z()).norm() < 1e-15);
            }
            for j in 0..g.len() {
                let (t, n, b) = (f.tangent.point(j), f.normal.point(j), f.binormal.point(j));
                assert!(t.dot(&n).abs() < 1e-15);
                assert!(t.dot(&b).abs() < 1e-15);
                assert!(n.dot(&b).abs() < 1e-15);
                assert!((t.cross(&n) - b).norm() < 1e-15);
            }
            let ts = f.tangent.derivative(1).unwrap();
            let ns = f.normal.derivative(1).unwrap();
            let bs = f.binormal.derivative(1).unwrap();
            for j in 0..g.len() {
                assert!((ts.point(j) - f.normal.point(j) / r).norm() < 1e-12);
                assert!((ns.point(j) + f.tangent.point(j) / r).norm() < 1e-12);
                assert!(bs.point(j).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn assemble_examples() {
        let g = grid(1.3);
        let x0 = circle_profile(&g);
        assert!(assemble_curve(&FramePerturbation::zero(&g)).sup_distance(&x0) < 1e-15);

        let eps = 0.01;
        let zero = ScalarField::zeros(&g, Parity::Odd);
        let p = FramePerturbation::new(
            zero.clone(),
            -eps,
            ScalarField::zeros(&g, Parity::Even),
            zero,
        )
        .unwrap();
        let y = assemble_curve(&p);
        for j in 0..g.len() {
            assert!((y.point(j).norm() - (1.3 + eps)).abs() < 1e-14);
        }
    }

    #[test]
    fn assemble_first_order_branch_shape() {
        // u = λ sin(ks/R), v⊥ = λk cos(ks/R), w = λ√(k²−1) sin(ks/R)
        let (r, k, lam) = (1.0, 2.0, 0.01);
        let g = grid(r);
        let u = ScalarField::from_fn(&g, |s| lam * (k * s / r).sin());
        let vp = ScalarField::from_fn(&g, |s| lam * k * (k * s / r).cos());
        let w = ScalarField::from_fn(&g, |s| lam * (k * k - 1.0f64).sqrt() * (k * s / r).sin());
        let p = FramePerturbation::new(u, 0.0, vp, w).unwrap();
        let y = assemble_curve(&p);
        let frame = frenet_frame(&g);
        let x0 = circle_profile(&g);
        for j in 0..g.len() {
            let s = g.point(j);
            let expect = x0.point(j)
                + frame.tangent.point(j) * lam * (k * s).sin()
                + frame.normal.point(j) * lam * k * (k * s).cos()
                + Vector3::z() * lam * 3f64.sqrt() * (k * s).sin();
            assert!((y.point(j) - expect).norm() < 1e-15);
        }
        // first-order arclength: stretch stays close to one
        assert!((p.min_stretch() - 1.0).abs() < 0.05);
    }

    #[test]
    fn trivial_residuals() {
        let g = grid(1.0);
        let p = FramePerturbation::zero(&g);
        for &om in &[0.0, 1.0, 3f64.sqrt(), -2.0] {
            let res = residuals(&p, om, 0.0);
            assert_eq!(res.nbc_sup(), 0.0);
            assert_eq!(res.t.sup_norm(), 0.0);
        }
        let d = 0.37;
        let res = residuals(&p, 1.5, d);
        assert!(res.n.values().iter().all(|&x| (x - d).abs() < 1e-15));
        assert_eq!(res.b.sup_norm(), 0.0);
        assert_eq!(res.c.sup_norm(), 0.0);
        assert_eq!(res.t.sup_norm(), 0.0);
        assert_eq!(tangential_identity_defect(&p, 1.0, 0.0), 0.0);
    }

    #[test]
    fn residual_parities() {
        let g = grid(1.0);
        let p = sample_perturbation(&g, 7, 0.1);
        let res = residuals(&p, 1.2, -0.03);
        assert!(res.n.check(Parity::Even, false).is_ok());
        assert!(res.b.check(Parity::Odd, false).is_ok());
        assert!(res.c.check(Parity::Even, false).is_ok());
        assert!(res.t.check(Parity::Odd, false).is_ok());
        assert!(res.q.check(Parity::Even, false).is_ok());
    }

    #[test]
    fn residuals_match_cartesian_profile_equation() {
        // T t + N n + B b = −y_ss − Ω(y_s·y)e₃ + Ω(y_s·e₃)y − V y_s×e₃
        let g = Grid::new(0.8, 128).unwrap();
        let p = sample_perturbation(&g, 11, 0.08);
        let (om, dv) = (0.9, 0.02);
        let res = residuals(&p, om, dv);
        let y = assemble_curve(&p);
        let ys = y.derivative(1).unwrap();
        let yss = y.derivative(2).unwrap();
        let f = frenet_frame(&g);
        let v = 1.0 / 0.8 + dv;
        for j in 0..g.len() {
            let (pt, d1, d2) = (y.point(j), ys.point(j), yss.point(j));
            let e3 = Vector3::z();
            let cart = -d2 - e3 * (om * d1.dot(&pt)) + pt * (om * d1.z) - d1.cross(&e3) * v;
            let frame = f.tangent.point(j) * res.t.values()[j]
                + f.normal.point(j) * res.n.values()[j]
                + f.binormal.point(j) * res.b.values()[j];
            assert!((cart - frame).norm() < 1e-11, "sample {j}: {}", (cart - frame).norm());
        }
    }

    #[test]
    fn speed_squared_is_one_plus_twice_constraint() {
        for seed in 0..8 {
            let g = grid(1.0);
            let p = sample_perturbation(&g, seed, 0.1);
            let res = residuals(&p, 0.0, 0.0);
            let speed = assemble_curve(&p).speed();
            for j in 0..g.len() {
                assert!((speed[j].powi(2) - (1.0 + 2.0 * res.c.values()[j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tangential_identity_holds_off_shell() {
        for seed in 0..8 {
            let g = grid(1.0 + 0.1 * seed as f64);
            let p = sample_perturbation(&g, 100 + seed, 0.1);
            let om = -2.0 + 0.5 * seed as f64;
            let dv = 0.05 * (seed as f64 - 4.0);
            assert!(tangential_identity_defect(&p, om, dv) < 1e-9);
        }
    }

    #[test]
    fn slip_velocity_on_circle() {
        let g = grid(1.0);
        let x0 = circle_profile(&g);
        let om = 3f64.sqrt();
        let (c, var) = slip_velocity(&x0, om, 1.0);
        assert!((c + om).abs() < 1e-12);
        assert!(var < 1e-12);
        let (c0, var0) = slip_velocity(&x0, 0.0, 4.2);
        assert!(c0.abs() < 1e-14 && var0 < 1e-14);
    }

    #[test]
    fn screw_evaluate_examples() {
        let r = 1.0;
        let g = grid(r);
        let x0 = circle_profile(&g);
        let om = 0.8;
        let sp = ScrewParams::from_axial_speed(r, om, -r * om, 1.0 / r);
        assert!(screw_evaluate(&x0, &sp, 0.0).sup_distance(&x0) < 1e-15);
        for &t in &[0.3, 1.0, 7.5] {
            let x = screw_evaluate(&x0, &sp, t);
            let expect = x0.translate(Vector3::new(0.0, 0.0, t / r));
            assert!(x.sup_distance(&expect) < 1e-12);
        }
    }

    #[test]
    fn screw_evaluate_semigroup() {
        let g = grid(1.0);
        let y = assemble_curve(&sample_perturbation(&g, 3, 0.1));
        let sp = ScrewParams::new(1.0, 1.7, -1.2, -0.01);
        let a = screw_evaluate(&screw_evaluate(&y, &sp, 0.4), &sp, 1.1);
        let b = screw_evaluate(&y, &sp, 1.5);
        assert!(a.sup_distance(&b) < 1e-12);
    }

    #[test]
    fn orbit_distance_vanishes_on_the_orbit() {
        let g = grid(1.4);
        let x0 = circle_profile(&g);
        let tr = x0.translate(Vector3::new(0.3, -2.0, 5.0));
        let d = orbit_distance(&tr);
        assert!(d.dist < 1e-12);
        assert!((d.tau - Vector3::new(0.3, -2.0, 5.0)).norm() < 1e-13);
        for &a0 in &[0.5, 2.0, -2.9] {
            let d = orbit_distance(&x0.rotate_z(a0));
            assert!(d.dist < 1e-12);
            assert!(((d.alpha - a0 + PI).rem_euclid(2.0 * PI) - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn orbit_distance_invariances() {
        for seed in 0..6 {
            let g = grid(1.0);
            let y = assemble_curve(&sample_perturbation(&g, 40 + seed, 0.1));
            let d0 = orbit_distance(&y).dist;
            assert!(d0 > 0.0);
            let shift = 0.17 + seed as f64;
            let others = [
                y.translate(Vector3::new(1.0, 2.0, -3.0)),
                y.rotate_z(0.3 * seed as f64 + 0.1),
                y.shift(shift),
            ];
            for o in &others {
                assert!((orbit_distance(o).dist - d0).abs() < 1e-9);
            }
            // the minimum cannot exceed the unrotated, untranslated distance
            assert!(d0 <= y.difference(&circle_profile(&g)).h2_norm() + 1e-12);
        }
    }

    #[test]
    fn screw_motion_preserves_orbit_distance() {
        let g = grid(1.0);
        let y = assemble_curve(&sample_perturbation(&g, 5, 0.1));
        let sp = ScrewParams::new(1.0, 1.7, -1.3, -0.02);
        let d0 = orbit_distance(&y).dist;
        for &t in &[0.5, 2.0, 9.0] {
            assert!((orbit_distance(&screw_evaluate(&y, &sp, t)).dist - d0).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(1.0);
        let y = assemble_curve(&sample_perturbation(&g, 9, 0.1));
        let mut buf = Vec::new();
        y.write_csv(&mut buf, &["k = 2".to_string()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# k = 2\ns,x,y,z\n"));
        let back = Curve3::read_csv(&buf[..], 1.0).unwrap();
        assert_eq!(back.sup_distance(&y), 0.0);
    }
}
