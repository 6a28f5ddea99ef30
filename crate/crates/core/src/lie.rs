//! Time integration of `x_t = x_s × x_ss` and drift diagnostics relative to
//! the translating circle `x^R(s, t) = x^R_0(s) + (t/R) e₃`.
//!
//! The curve is advanced in Fourier space with the classical fourth-order
//! Runge–Kutta scheme; derivatives are spectral, the cross product is taken
//! pointwise and dealiased with the 2/3 rule.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Serialize;

use crate::branch::BranchPoint;
use crate::error::{Error, Result};
use crate::frenet::{circle_profile, orbit_distance, Curve3};
use crate::spectral::{Grid, Parity, ScalarField};

pub const C_CFL: f64 = 0.2;
pub const DEFECT_MAX: f64 = 1e-4;
pub const RTOL_LEN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub c_cfl: f64,
    pub defect_max: f64,
    pub rtol_len: f64,
    /// Spacing of the returned states; `None` returns only the endpoints.
    pub output_interval: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            c_cfl: C_CFL,
            defect_max: DEFECT_MAX,
            rtol_len: RTOL_LEN,
            output_interval: None,
        }
    }
}

impl IntegratorConfig {
    /// Largest admissible step `c_cfl (L/N)²` on `grid`.
    pub fn max_dt(&self, grid: &Grid) -> f64 {
        self.c_cfl * grid.spacing().powi(2)
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub t: f64,
    pub curve: Curve3,
    pub length: f64,
    /// `sup_s ||x_s| − 1|`.
    pub arclength_defect: f64,
}

type Spectra = [Vec<Complex64>; 3];

/// Precomputed spectral multipliers and FFT scratch for one grid.
struct Stepper {
    grid: Grid,
    ik: Vec<Complex64>,
    minus_xi2: Vec<f64>,
    keep: Vec<bool>,
    buf: Vec<Complex64>,
    xs: [Vec<f64>; 3],
    xss: [Vec<f64>; 3],
}

impl Stepper {
    fn new(grid: &Grid) -> Self {
        let n = grid.len();
        let nyq = grid.nyquist_index();
        let m = grid.cutoff();
        let ik = (0..n)
            .map(|i| {
                if i == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, grid.wavenumber(i))
                }
            })
            .collect();
        let minus_xi2 = (0..n)
            .map(|i| if i == nyq { 0.0 } else { -grid.wavenumber(i).powi(2) })
            .collect();
        let keep = (0..n).map(|i| grid.mode_at(i).unsigned_abs() as usize <= m).collect();
        Self {
            grid: grid.clone(),
            ik,
            minus_xi2,
            keep,
            buf: vec![Complex64::new(0.0, 0.0); n],
            xs: Default::default(),
            xss: Default::default(),
        }
    }

    fn to_spectra(&self, x: &Curve3) -> Spectra {
        let mut out: Spectra = Default::default();
        for (c, spec) in out.iter_mut().enumerate() {
            *spec = self.grid.forward(x.component(c).values());
            for (z, &k) in spec.iter_mut().zip(&self.keep) {
                if !k {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    fn to_curve(&self, spec: &Spectra) -> Curve3 {
        let comp = |c: usize| {
            ScalarField::new(&self.grid, self.grid.inverse(&spec[c]), Parity::Any, false)
                .expect("grid sized")
        };
        Curve3::new(comp(0), comp(1), comp(2)).expect("shared grid")
    }

    /// Writes the dealiased spectrum of `x_s × x_ss` into `out` and returns
    /// `sup_s ||x_s| − 1|` of the input.
    fn rhs(&mut self, x: &Spectra, out: &mut Spectra) -> f64 {
        let n = self.grid.len();
        for c in 0..3 {
            // x_s + i x_ss in one complex synthesis
            for i in 0..n {
                let z = x[c][i];
                self.buf[i] = self.ik[i] * z + Complex64::new(0.0, self.minus_xi2[i]) * z;
            }
            self.grid.inverse_inplace(&mut self.buf);
            self.xs[c].clear();
            self.xss[c].clear();
            self.xs[c].extend(self.buf.iter().map(|z| z.re));
            self.xss[c].extend(self.buf.iter().map(|z| z.im));
        }
        let mut defect = 0.0f64;
        for c in 0..3 {
            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
            for i in 0..n {
                let v = self.xs[a][i] * self.xss[b][i] - self.xs[b][i] * self.xss[a][i];
                self.buf[i] = Complex64::new(v, 0.0);
            }
            self.grid.forward_inplace(&mut self.buf);
            out[c].clear();
            out[c].extend(
                self.buf
                    .iter()
                    .zip(&self.keep)
                    .map(|(&z, &k)| if k { z } else { Complex64::new(0.0, 0.0) }),
            );
        }
        for i in 0..n {
            let s2 = self.xs[0][i].powi(2) + self.xs[1][i].powi(2) + self.xs[2][i].powi(2);
            defect = defect.max((s2.sqrt() - 1.0).abs());
        }
        defect
    }

    /// One classical RK4 step; returns the arclength defect of the input.
    fn step(&mut self, x: &mut Spectra, dt: f64, k: &mut [Spectra; 4], tmp: &mut Spectra) -> f64 {
        let defect = self.rhs(x, &mut k[0]);
        for (stage, factor) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for c in 0..3 {
                tmp[c].clear();
                tmp[c].extend(x[c].iter().zip(&k[stage - 1][c]).map(|(a, b)| a + b * (factor * dt)));
            }
            self.rhs(tmp, &mut k[stage]);
        }
        for c in 0..3 {
            for i in 0..x[c].len() {
                x[c][i] += (k[0][c][i] + k[1][c][i] * 2.0 + k[2][c][i] * 2.0 + k[3][c][i]) * (dt / 6.0);
            }
        }
        defect
    }
}

/// `x_s × x_ss`, spectrally differentiated and dealiased.
pub fn lie_rhs(x: &Curve3) -> Curve3 {
    let mut st = Stepper::new(x.grid());
    let spec = st.to_spectra(x);
    let mut out: Spectra = Default::default();
    st.rhs(&spec, &mut out);
    st.to_curve(&out)
}

/// Integrates from `x0` to `t_end` with steps no larger than `dt`, returning
/// the states at `t = 0`, every `output_interval`, and `t_end`.
pub fn integrate(
    x0: &Curve3,
    t_end: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<EvolutionState>> {
    let grid = x0.grid().clone();
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("t_end must be non-negative, got {t_end}")));
    }
    let max_dt = cfg.max_dt(&grid);
    if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "dt = {dt:e} violates the step bound 0 < dt ≤ c_cfl (L/N)² = {max_dt:e}"
        )));
    }
    let mut targets = Vec::new();
    if let Some(every) = cfg.output_interval.filter(|e| *e > 0.0) {
        let count = (t_end / every - 1e-9).floor().max(0.0) as usize;
        targets.extend((1..=count).map(|i| i as f64 * every));
    }
    if t_end > 0.0 {
        targets.push(t_end);
    }

    let mut st = Stepper::new(&grid);
    let mut x = st.to_spectra(x0);
    let mut k: [Spectra; 4] = Default::default();
    let mut tmp: Spectra = Default::default();
    let length0 = grid.period();
    let mut warned = false;

    let snapshot = |st: &Stepper, x: &Spectra, t: f64| {
        let curve = st.to_curve(x);
        let speed = curve.speed();
        let defect = speed.iter().fold(0.0f64, |m, s| m.max((s - 1.0).abs()));
        EvolutionState {
            t,
            length: speed.iter().sum::<f64>() * grid.spacing(),
            arclength_defect: defect,
            curve,
        }
    };

    let mut states = vec![snapshot(&st, &x, 0.0)];
    let mut t = 0.0;
    for &target in &targets {
        let span = target - t;
        let steps = (span / dt).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for i in 0..steps {
            let defect = st.step(&mut x, h, &mut k, &mut tmp);
            if !(defect <= cfg.defect_max) {
                return Err(Error::Blowup {
                    t: t + i as f64 * h,
                    defect,
                });
            }
        }
        t = target;
        let s = snapshot(&st, &x, t);
        if !(s.arclength_defect <= cfg.defect_max) {
            return Err(Error::Blowup {
                t,
                defect: s.arclength_defect,
            });
        }
        if !warned && ((s.length - length0) / length0).abs() > cfg.rtol_len {
            log::warn!(
                "length drifted by {:e} (relative) at t = {t}",
                (s.length - length0) / length0
            );
            warned = true;
        }
        states.push(s);
    }
    Ok(states)
}

/// `|x_dt − x_{dt/2}| / |x_{dt/2} − x_{dt/4}|` at `t_end` (sup-norm), which
/// tends to 16 for a fourth-order scheme.
pub fn self_convergence_ratio(
    x0: &Curve3,
    t_end: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let cfg = IntegratorConfig {
        output_interval: None,
        ..*cfg
    };
    let run = |h: f64| -> Result<Curve3> {
        Ok(integrate(x0, t_end, h, &cfg)?
            .pop()
            .expect("at least the initial state")
            .curve)
    };
    let (a, b, c) = (run(dt)?, run(dt / 2.0)?, run(dt / 4.0)?);
    Ok(a.sup_distance(&b) / b.sup_distance(&c))
}

/// `x^R(s, t) = x^R_0(s) + (t/R) e₃`.
pub fn reference_circle(grid: &Grid, t: f64) -> Curve3 {
    circle_profile(grid).translate(Vector3::new(0.0, 0.0, t / grid.radius()))
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub lambda: f64,
    pub branch_delta_v: f64,
    pub times: Vec<f64>,
    pub dist_sigma: Vec<f64>,
    pub z_center: Vec<f64>,
    /// `sup_s |x(s,t) − x^R(s,t)|`.
    pub pointwise_gap: Vec<f64>,
    pub length: Vec<f64>,
    pub arclength_defect: Vec<f64>,
    /// Least-squares slope of `z_center` against `t`.
    pub fitted_v: f64,
    /// First output time from which `gap(t) ≥ 0.9 |δV| t` holds for all
    /// later outputs.
    pub t0: Option<f64>,
    /// `min gap(t)/t` over outputs with `t ≥ t0`.
    pub gamma: Option<f64>,
}

impl DriftReport {
    /// Spread `max − min` of the distance to the circle orbit.
    pub fn dist_variation(&self) -> f64 {
        let (lo, hi) = self
            .dist_sigma
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        hi - lo
    }

    pub fn dist_sup(&self) -> f64 {
        self.dist_sigma.iter().copied().fold(0.0, f64::max)
    }

    /// Fitted axial speed below `1/R` with a secular gap.
    pub fn drift_linear(&self, radius: f64) -> bool {
        self.fitted_v < 1.0 / radius && self.t0.is_some() && self.gamma.is_some_and(|g| g > 0.0)
    }
}

/// Evolves the branch profile and measures its distance to the circle orbit
/// and its separation from the translating circle.
pub fn drift_report(
    branch: &BranchPoint,
    t_end: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<DriftReport> {
    let states = integrate(&branch.profile(), t_end, dt, cfg)?;
    Ok(drift_report_from_states(branch, &states))
}

/// Drift diagnostics for states already integrated from `branch.profile()`.
pub fn drift_report_from_states(branch: &BranchPoint, states: &[EvolutionState]) -> DriftReport {
    let grid = branch.grid().clone();
    let mut rep = DriftReport {
        lambda: branch.lambda,
        branch_delta_v: branch.delta_v(),
        times: Vec::with_capacity(states.len()),
        dist_sigma: Vec::with_capacity(states.len()),
        z_center: Vec::with_capacity(states.len()),
        pointwise_gap: Vec::with_capacity(states.len()),
        length: Vec::with_capacity(states.len()),
        arclength_defect: Vec::with_capacity(states.len()),
        fitted_v: 0.0,
        t0: None,
        gamma: None,
    };
    for s in states {
        rep.times.push(s.t);
        rep.dist_sigma.push(orbit_distance(&s.curve).dist);
        rep.z_center.push(s.curve.component(2).mean());
        rep.pointwise_gap
            .push(s.curve.sup_distance(&reference_circle(&grid, s.t)));
        rep.length.push(s.length);
        rep.arclength_defect.push(s.arclength_defect);
    }
    rep.fitted_v = least_squares_slope(&rep.times, &rep.z_center);

    let rate = 0.9 * branch.delta_v().abs();
    if rate > 0.0 {
        let ok: Vec<bool> = rep
            .times
            .iter()
            .zip(&rep.pointwise_gap)
            .map(|(&t, &g)| g >= rate * t)
            .collect();
        // first positive output time from which every later output satisfies the bound
        let mut first = None;
        for i in (0..ok.len()).rev() {
            if !ok[i] {
                break;
            }
            if rep.times[i] > 0.0 {
                first = Some(i);
            }
        }
        if let Some(i) = first {
            rep.t0 = Some(rep.times[i]);
            rep.gamma = Some(
                rep.times[i..]
                    .iter()
                    .zip(&rep.pointwise_gap[i..])
                    .map(|(&t, &g)| g / t)
                    .fold(f64::INFINITY, f64::min),
            );
        }
    }
    rep
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_rhs_is_constant_binormal() {
        for &r in &[0.5, 1.0, 2.0] {
            let g = Grid::new(r, 64).unwrap();
            let x0 = circle_profile(&g);
            let f = lie_rhs(&x0);
            for j in 0..g.len() {
                assert!((f.point(j) - Vector3::new(0.0, 0.0, 1.0 / r)).norm() < 1e-12);
            }
            let shifted = lie_rhs(&x0.translate(Vector3::new(3.0, -1.0, 2.0)));
            assert!(shifted.sup_distance(&f) < 1e-12);
        }
    }

    #[test]
    fn circle_translates_exactly() {
        let g = Grid::new(1.0, 64).unwrap();
        let cfg = IntegratorConfig::default();
        let x0 = circle_profile(&g);
        let states = integrate(&x0, 1.0, cfg.max_dt(&g), &cfg).unwrap();
        let last = states.last().unwrap();
        assert_eq!(last.t, 1.0);
        assert!(last.curve.sup_distance(&reference_circle(&g, 1.0)) < 1e-8);
        assert!((last.length - g.period()).abs() < 1e-8 * g.period());
    }

    #[test]
    fn output_schedule() {
        let g = Grid::new(1.0, 32).unwrap();
        let cfg = IntegratorConfig {
            output_interval: Some(0.25),
            ..IntegratorConfig::default()
        };
        let states = integrate(&circle_profile(&g), 1.0, cfg.max_dt(&g), &cfg).unwrap();
        let times: Vec<f64> = states.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn step_bound_is_enforced() {
        let g = Grid::new(1.0, 32).unwrap();
        let cfg = IntegratorConfig::default();
        let x0 = circle_profile(&g);
        assert!(matches!(
            integrate(&x0, 1.0, 2.0 * cfg.max_dt(&g), &cfg),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(integrate(&x0, 1.0, 0.0, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn non_arclength_input_blows_up() {
        let g = Grid::new(1.0, 32).unwrap();
        let cfg = IntegratorConfig::default();
        let stretched = Curve3::from_fn(&g, |s| Vector3::new(1.1 * s.cos(), 1.1 * s.sin(), 0.0));
        assert!(matches!(
            integrate(&stretched, 0.1, cfg.max_dt(&g), &cfg),
            Err(Error::Blowup { .. })
        ));
    }

    #[test]
    fn slope_fit() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let z: Vec<f64> = t.iter().map(|t| 0.5 + 0.97 * t).collect();
        assert!((least_squares_slope(&t, &z) - 0.97).abs() < 1e-15);
    }
}
