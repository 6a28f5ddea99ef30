//! Numerical continuation of the screw-profile branch bifurcating from the
//! circle at `Ω = ±Ω_k`.
//!
//! The amplitude `λ` is the H²-projection coefficient of `(v⊥, w)` onto the
//! kernel direction `Φ_k`; with it the reduced equations `𝒢 = 0` become a
//! square bordered system in `(Ω, v⊥, w)`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frenet::{
    assemble_curve, orbit_distance, residuals, slip_velocity, Curve3, FramePerturbation,
    ScrewParams,
};
use crate::linear::{critical_omega, kernel_vector_for, KernelVector, ModeMatrix, Rotation};
use crate::reduction::{
    full_residuals, perturbation, solve_phi_with, EliminatedState, PhiConfig, ReducedState,
};
use crate::spectral::{Grid, Parity, ScalarField};

pub const TOL_OUTER: f64 = 1e-10;
pub const MAX_OUTER: usize = 30;
/// Smallest admissible tangential stretch `1 + u_s − v/R`.
pub const MIN_STRETCH: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchConfig {
    pub n: usize,
    pub tol_outer: f64,
    pub max_outer: usize,
    /// Central finite-difference step for the outer Jacobian.
    pub fd_step: f64,
    pub phi: PhiConfig,
    pub rotation: Rotation,
}

impl Default for BranchConfig {
    fn default() -> Self {
        Self {
            n: 256,
            tol_outer: TOL_OUTER,
            max_outer: MAX_OUTER,
            fd_step: 1e-6,
            phi: PhiConfig {
                polish: true,
                ..PhiConfig::default()
            },
            rotation: Rotation::Positive,
        }
    }
}

/// A posteriori checks recorded for every accepted point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PointDiagnostics {
    pub tangential_sup: f64,
    pub slip_variation: f64,
    pub speed_defect: f64,
    pub min_stretch: f64,
    pub newton_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub k: usize,
    pub lambda: f64,
    pub omega: f64,
    pub rs: ReducedState,
    pub es: EliminatedState,
    pub c: f64,
    pub v: f64,
    pub residual_sup: f64,
    pub dist_to_sigma: f64,
    pub diagnostics: PointDiagnostics,
}

impl BranchPoint {
    pub fn grid(&self) -> &Grid {
        self.rs.grid()
    }

    pub fn radius(&self) -> f64 {
        self.grid().radius()
    }

    pub fn delta_v(&self) -> f64 {
        self.es.delta_v
    }

    pub fn perturbation(&self) -> FramePerturbation {
        perturbation(&self.rs, &self.es).expect("accepted points have valid parities")
    }

    /// The profile curve `y^λ`.
    pub fn profile(&self) -> Curve3 {
        assemble_curve(&self.perturbation())
    }

    pub fn screw_params(&self) -> ScrewParams {
        ScrewParams::from_axial_speed(self.radius(), self.omega, self.c, self.v)
    }
}

/// Layout of the reduced unknown vector `[Ω, a₁, b₁, a₂, b₂, …]` where
/// `v⊥ = Σ a_l cos(ls/R)` and `w = Σ b_l sin(ls/R)`.
struct Layout {
    m: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        2 * self.m + 1
    }

    fn pack(&self, omega: f64, vperp: &ScalarField, w: &ScalarField) -> DVector<f64> {
        let a = vperp.cos_modes(self.m);
        let b = w.sin_modes(self.m);
        let mut x = DVector::zeros(self.dim());
        x[0] = omega;
        for l in 0..self.m {
            x[2 * l + 1] = a[l];
            x[2 * l + 2] = b[l];
        }
        x
    }

    fn unpack(&self, grid: &Grid, x: &DVector<f64>) -> ReducedState {
        let a: Vec<f64> = (0..self.m).map(|l| x[2 * l + 1]).collect();
        let b: Vec<f64> = (0..self.m).map(|l| x[2 * l + 2]).collect();
        ReducedState::new(
            x[0],
            ScalarField::from_cos_modes(grid, &a),
            ScalarField::from_sin_modes(grid, &b),
        )
        .expect("spectral synthesis respects parity")
    }
}

struct Evaluation {
    rs: ReducedState,
    es: EliminatedState,
    vector: DVector<f64>,
    sup: f64,
}

struct Problem<'a> {
    k: usize,
    lambda: f64,
    grid: Grid,
    phi: KernelVector,
    phi_norm_sq: f64,
    layout: Layout,
    cfg: &'a BranchConfig,
}

impl Problem<'_> {
    fn eval(&self, x: &DVector<f64>, warm: Option<&EliminatedState>) -> Result<Evaluation> {
        let rs = self.layout.unpack(&self.grid, x);
        let es = solve_phi_with(&rs, &self.cfg.phi, warm)
            .map_err(|e| Error::NoConvergence(format!("elimination failed: {e}")))?
            .state;
        let res = full_residuals(&rs, &es)?;
        let amp = self.phi.pair(rs.vperp(), rs.w())? / self.phi_norm_sq - self.lambda;
        let m = self.layout.m;
        let g1 = res.n.cos_modes(m);
        let g2 = res.b.sin_modes(m);
        let mut vector = DVector::zeros(self.layout.dim());
        vector[0] = amp;
        for l in 0..m {
            vector[2 * l + 1] = g1[l];
            vector[2 * l + 2] = g2[l];
        }
        let sup = res.nbc_sup().max(amp.abs());
        Ok(Evaluation { rs, es, vector, sup })
    }

    fn jacobian(&self, x: &DVector<f64>, base: &EliminatedState) -> Result<DMatrix<f64>> {
        let dim = self.layout.dim();
        let h = self.cfg.fd_step;
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = self.eval(&xp, Some(base))?.vector;
            let fm = self.eval(&xm, Some(base))?.vector;
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        Ok(jac)
    }

    /// Left preconditioner: the inverse of the mode block `M_l(±Ω_k)` on
    /// each `(cos l, sin l)` row pair, identity on the singular block `l = k`
    /// and on the amplitude row.
    fn preconditioner(&self) -> Vec<(usize, Matrix2<f64>)> {
        let r = self.grid.radius();
        let om = self.cfg.rotation.sign() * critical_omega(self.k, r).expect("k >= 2");
        (1..=self.layout.m)
            .filter(|&l| l != self.k)
            .filter_map(|l| ModeMatrix::new(l, om, r).entries.try_inverse().map(|inv| (l, inv)))
            .collect()
    }
}

fn precondition_matrix(blocks: &[(usize, Matrix2<f64>)], jac: &mut DMatrix<f64>) {
    for &(l, inv) in blocks {
        let (i, j) = (2 * l - 1, 2 * l);
        for col in 0..jac.ncols() {
            let v = inv * Vector2::new(jac[(i, col)], jac[(j, col)]);
            jac[(i, col)] = v.x;
            jac[(j, col)] = v.y;
        }
    }
}

fn precondition_vector(blocks: &[(usize, Matrix2<f64>)], rhs: &mut DVector<f64>) {
    for &(l, inv) in blocks {
        let (i, j) = (2 * l - 1, 2 * l);
        let v = inv * Vector2::new(rhs[i], rhs[j]);
        rhs[i] = v.x;
        rhs[j] = v.y;
    }
}

/// Solves the bordered reduced system for the branch point of amplitude
/// `lambda`, starting from `predictor` (rescaled to `lambda`) or from the
/// first-order guess `(±Ω_k, λΦ_k)`.
pub fn solve_branch_point(
    k: usize,
    radius: f64,
    lambda: f64,
    predictor: Option<&BranchPoint>,
    cfg: &BranchConfig,
) -> Result<BranchPoint> {
    let grid = Grid::new(radius, cfg.n)?;
    let omega_k = cfg.rotation.sign() * critical_omega(k, radius)?;
    grid.require_resolved(2 * k)?;
    let phi = kernel_vector_for(k, &grid, cfg.rotation)?;
    if lambda == 0.0 {
        return finish(k, 0.0, ReducedState::trivial(omega_k, &grid), EliminatedState::zero(&grid), 0);
    }

    let layout = Layout { m: grid.cutoff() };
    let problem = Problem {
        k,
        lambda,
        phi_norm_sq: phi.norm_sq(),
        phi,
        layout,
        cfg,
        grid: grid.clone(),
    };

    let (mut x, mut warm) = match predictor {
        Some(p) if p.lambda != 0.0 && p.grid() == &grid && p.k == k => {
            let ratio = lambda / p.lambda;
            let om = omega_k + (p.omega - omega_k) * ratio * ratio;
            let x = problem.layout.pack(om, &p.rs.vperp().scale(ratio), &p.rs.w().scale(ratio));
            (x, Some(p.es.clone()))
        }
        _ => {
            let x = problem.layout.pack(
                omega_k,
                &problem.phi.phi1.scale(lambda),
                &problem.phi.phi2.scale(lambda),
            );
            (x, None)
        }
    };

    let blocks = problem.preconditioner();
    let mut jac: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> = None;
    let mut last_sup = f64::INFINITY;
    for iter in 0..=cfg.max_outer {
        let ev = problem.eval(&x, warm.as_ref())?;
        log::debug!("branch k={k} λ={lambda:e}: iteration {iter}, residual {:e}", ev.sup);
        if !ev.sup.is_finite() {
            break;
        }
        if ev.sup <= cfg.tol_outer {
            return finish(k, lambda, ev.rs, ev.es, iter);
        }
        if iter == cfg.max_outer {
            break;
        }
        // Chord iterations reuse the factorisation while they contract well.
        if jac.is_none() || ev.sup > 0.25 * last_sup {
            let mut j = problem.jacobian(&x, &ev.es)?;
            precondition_matrix(&blocks, &mut j);
            jac = Some(j.lu());
        }
        last_sup = ev.sup;
        let mut rhs = -ev.vector.clone();
        precondition_vector(&blocks, &mut rhs);
        let step = jac
            .as_ref()
            .expect("factorised above")
            .solve(&rhs)
            .ok_or_else(|| Error::NoConvergence(format!("singular bordered Jacobian at λ = {lambda}")))?;
        x += step;
        warm = Some(ev.es);
    }
    Err(Error::NoConvergence(format!(
        "branch Newton for k = {k}, λ = {lambda} did not reach {:e} in {} iterations (last residual {last_sup:e})",
        cfg.tol_outer, cfg.max_outer
    )))
}

/// Computes the derived quantities of a converged point and enforces the
/// geometric admissibility condition.
fn finish(
    k: usize,
    lambda: f64,
    rs: ReducedState,
    es: EliminatedState,
    iterations: usize,
) -> Result<BranchPoint> {
    let p = perturbation(&rs, &es)?;
    let min_stretch = p.min_stretch();
    if !(min_stretch >= MIN_STRETCH) {
        return Err(Error::Geometry(format!(
            "1 + u_s − v/R drops to {min_stretch} < {MIN_STRETCH} at λ = {lambda}"
        )));
    }
    let res = residuals(&p, rs.omega(), es.delta_v);
    let r = rs.grid().radius();
    let v = 1.0 / r + es.delta_v;
    let y = assemble_curve(&p);
    let speed_defect = y.speed().iter().fold(0.0f64, |m, s| m.max((s - 1.0).abs()));
    let (c, slip_variation) = slip_velocity(&y, rs.omega(), v);
    let dist_to_sigma = orbit_distance(&y).dist;
    Ok(BranchPoint {
        k,
        lambda,
        omega: rs.omega(),
        c,
        v,
        residual_sup: res.nbc_sup(),
        dist_to_sigma,
        diagnostics: PointDiagnostics {
            tangential_sup: res.t.sup_norm(),
            slip_variation,
            speed_defect,
            min_stretch,
            newton_iterations: iterations,
        },
        rs,
        es,
    })
}

#[derive(Clone, Debug)]
pub struct BranchSweep {
    pub k: usize,
    pub radius: f64,
    pub lambdas: Vec<f64>,
    pub points: Vec<BranchPoint>,
    /// Extrapolated limit of `δV^λ / λ²`; `None` with fewer than three
    /// converged nonzero amplitudes.
    pub dv_coeff_estimate: Option<f64>,
    /// First amplitude that failed, with the reason.
    pub failure: Option<(f64, String)>,
}

impl BranchSweep {
    /// Largest `|λ|` that converged.
    pub fn reachable_lambda(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.lambda.abs()))
    }
}

/// `0` followed by `λ_max·2^{−j}` for `j = n_points − 2, …, 0`.
pub fn sweep_lambdas(lambda_max: f64, n_points: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    for j in (0..n_points.saturating_sub(1)).rev() {
        out.push(lambda_max * 0.5f64.powi(j as i32));
    }
    out
}

/// Natural-parameter continuation from the circle outwards.
pub fn sweep_branch(
    k: usize,
    radius: f64,
    lambda_max: f64,
    n_points: usize,
    cfg: &BranchConfig,
) -> Result<BranchSweep> {
    if n_points < 4 {
        return Err(Error::InvalidInput(format!(
            "a sweep needs at least 4 points, got {n_points}"
        )));
    }
    if !(lambda_max.is_finite() && lambda_max != 0.0) {
        return Err(Error::InvalidInput(format!("λ_max must be finite and nonzero, got {lambda_max}")));
    }
    let lambdas = sweep_lambdas(lambda_max, n_points);
    let mut points: Vec<BranchPoint> = Vec::with_capacity(lambdas.len());
    let mut failure = None;
    for &lam in &lambdas {
        match solve_branch_point(k, radius, lam, points.last(), cfg) {
            Ok(p) => points.push(p),
            Err(e @ (Error::NoConvergence(_) | Error::Geometry(_) | Error::IftDomain(_))) => {
                log::warn!(
                    "branch k = {k} stops at λ = {lam}: {e}; reachable |λ| = {}",
                    points.iter().fold(0.0f64, |m, p| m.max(p.lambda.abs()))
                );
                failure = Some((lam, e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let dv_coeff_estimate = richardson_dv_coeff(&points);
    Ok(BranchSweep {
        k,
        radius,
        lambdas,
        points,
        dv_coeff_estimate,
        failure,
    })
}

/// Fits `δV/λ² = a + bλ² + cλ⁴` through the three smallest nonzero `|λ|`
/// and returns `a`.
pub fn richardson_dv_coeff(points: &[BranchPoint]) -> Option<f64> {
    let mut nz: Vec<&BranchPoint> = points.iter().filter(|p| p.lambda != 0.0).collect();
    nz.sort_by(|a, b| a.lambda.abs().total_cmp(&b.lambda.abs()));
    if nz.len() < 3 {
        return None;
    }
    let samples: Vec<(f64, f64)> = nz[..3]
        .iter()
        .map(|p| (p.lambda * p.lambda, p.delta_v() / (p.lambda * p.lambda)))
        .collect();
    Some(extrapolate_to_zero(&samples))
}

/// Value at `x = 0` of the interpolating polynomial through `samples`.
pub fn extrapolate_to_zero(samples: &[(f64, f64)]) -> f64 {
    samples
        .iter()
        .enumerate()
        .map(|(i, &(xi, yi))| {
            let w: f64 = samples
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &(xj, _))| xj / (xj - xi))
                .product();
            yi * w
        })
        .sum()
}

/// Solves `{𝒩 = 0, ℬ = 0, 𝒞 = 0, amplitude}` for all unknowns at once,
/// without eliminating `(δV, u, v₀)`, using a central-difference Jacobian.
pub fn monolithic_crosscheck(
    k: usize,
    radius: f64,
    lambda: f64,
    cfg: &BranchConfig,
) -> Result<BranchPoint> {
    let grid = Grid::new(radius, cfg.n)?;
    let omega_k = cfg.rotation.sign() * critical_omega(k, radius)?;
    grid.require_resolved(2 * k)?;
    let phi = kernel_vector_for(k, &grid, cfg.rotation)?;
    if lambda == 0.0 {
        return finish(k, 0.0, ReducedState::trivial(omega_k, &grid), EliminatedState::zero(&grid), 0);
    }
    let m = grid.cutoff();
    let dim = 3 * m + 3;
    let phi_norm_sq = phi.norm_sq();

    // x = [Ω, δV, v₀, u_1..u_M, a_1..a_M, b_1..b_M]
    let unpack = |x: &DVector<f64>| -> (ReducedState, EliminatedState) {
        let u: Vec<f64> = (0..m).map(|l| x[3 + l]).collect();
        let a: Vec<f64> = (0..m).map(|l| x[3 + m + l]).collect();
        let b: Vec<f64> = (0..m).map(|l| x[3 + 2 * m + l]).collect();
        let rs = ReducedState::new(
            x[0],
            ScalarField::from_cos_modes(&grid, &a),
            ScalarField::from_sin_modes(&grid, &b),
        )
        .expect("spectral synthesis respects parity");
        let es = EliminatedState::new(x[1], ScalarField::from_sin_modes(&grid, &u), x[2])
            .expect("spectral synthesis respects parity");
        (rs, es)
    };
    let eval = |x: &DVector<f64>| -> Result<(DVector<f64>, f64)> {
        let (rs, es) = unpack(x);
        let res = full_residuals(&rs, &es)?;
        let amp = phi.pair(rs.vperp(), rs.w())? / phi_norm_sq - lambda;
        let spec_n = res.n.spectrum();
        let spec_c = res.c.spectrum();
        let b = res.b.sin_modes(m);
        let mut out = DVector::zeros(dim);
        out[0] = amp;
        out[1] = spec_n[0].re;
        out[2] = spec_c[0].re;
        for l in 1..=m {
            out[2 + l] = 2.0 * spec_n[l].re;
            out[2 + m + l] = 2.0 * spec_c[l].re;
            out[2 + 2 * m + l] = b[l - 1];
        }
        Ok((out, res.nbc_sup().max(amp.abs())))
    };

    // first-order predictor
    let r = radius;
    let kf = k as f64;
    let mut x = DVector::zeros(dim);
    x[0] = omega_k;
    x[1] = -kf * kf * (kf * kf - 1.0) / (2.0 * r * r * r) * lambda * lambda;
    // u = (λ/R) ∂⁻¹ (k cos(ks/R)) = λ sin(ks/R)
    x[3 + k - 1] = lambda;
    x[3 + m + k - 1] = lambda * kf;
    x[3 + 2 * m + k - 1] = lambda * cfg.rotation.sign() * (kf * kf - 1.0).sqrt();

    let h = cfg.fd_step;
    let mut last = f64::INFINITY;
    let mut lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> = None;
    for iter in 0..=cfg.max_outer {
        let (f, sup) = eval(&x)?;
        if !sup.is_finite() {
            break;
        }
        if sup <= cfg.tol_outer {
            let (rs, es) = unpack(&x);
            return finish(k, lambda, rs, es, iter);
        }
        if iter == cfg.max_outer {
            break;
        }
        if lu.is_none() || sup > 0.25 * last {
            let mut jac = DMatrix::zeros(dim, dim);
            for j in 0..dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let col = (eval(&xp)?.0 - eval(&xm)?.0) / (2.0 * h);
                jac.set_column(j, &col);
            }
            lu = Some(jac.lu());
        }
        last = sup;
        let step = lu
            .as_ref()
            .expect("factorised above")
            .solve(&(-f))
            .ok_or_else(|| Error::NoConvergence("singular monolithic Jacobian".into()))?;
        x += step;
    }
    Err(Error::NoConvergence(format!(
        "monolithic Newton for k = {k}, λ = {lambda} did not converge (last residual {last:e})"
    )))
}

/// Checks that a field pair has the parity structure of branch data.
pub fn has_branch_parity(vperp: &ScalarField, w: &ScalarField) -> bool {
    vperp.check(Parity::Even, true).is_ok() && w.check(Parity::Odd, true).is_ok()
}
