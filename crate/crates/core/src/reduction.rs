//! Elimination of the axial speed, the tangential displacement and the mean
//! normal displacement.
//!
//! With `A = u_s − v/R`, `B = v_s + u/R` and `𝒬 = ½(A² + B² + w_s²)`:
//!
//! ```text
//! ℱ₁ = Ω mean(v⊥ w_s) + δV (1 − v₀/R)
//! ℱ₂ = u_s − v⊥/R + 𝒬 − mean 𝒬
//! ℱ₃ = −v₀/R + mean 𝒬
//! ```
//!
//! `ℱ = 0` is solved for `(δV, u, v₀)` by Newton's method with the exact
//! Jacobian; at the circle that Jacobian is `diag(1, ∂_s, −1/R)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::frenet::{residuals, FramePerturbation, Residuals};
use crate::spectral::{Grid, Parity, ScalarField};

pub const TOL_INNER: f64 = 1e-12;
pub const MAX_INNER: usize = 25;
/// Inputs with `sup(|v⊥|, |w|)` above this multiple of `R` are rejected.
pub const DOMAIN_FRACTION: f64 = 0.5;

/// The independent unknowns `(Ω, v⊥, w)`.
#[derive(Clone, Debug)]
pub struct ReducedState {
    omega: f64,
    vperp: ScalarField,
    w: ScalarField,
}

impl ReducedState {
    pub fn new(omega: f64, vperp: ScalarField, w: ScalarField) -> Result<Self> {
        if vperp.grid() != w.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            omega,
            vperp: vperp.require(Parity::Even, true)?,
            w: w.require(Parity::Odd, true)?,
        })
    }

    pub fn trivial(omega: f64, grid: &Grid) -> Self {
        Self {
            omega,
            vperp: ScalarField::zeros(grid, Parity::Even),
            w: ScalarField::zeros(grid, Parity::Odd),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.vperp.grid()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn vperp(&self) -> &ScalarField {
        &self.vperp
    }

    pub fn w(&self) -> &ScalarField {
        &self.w
    }

    /// Copy with every mode above the dealiasing cutoff removed.
    pub fn band_limited(&self) -> Self {
        Self {
            omega: self.omega,
            vperp: self.vperp.dealiased(),
            w: self.w.dealiased(),
        }
    }
}

/// The eliminated unknowns `(δV, u, v₀)`.
#[derive(Clone, Debug)]
pub struct EliminatedState {
    pub delta_v: f64,
    u: ScalarField,
    pub v0: f64,
}

impl EliminatedState {
    pub fn new(delta_v: f64, u: ScalarField, v0: f64) -> Result<Self> {
        Ok(Self {
            delta_v,
            u: u.require(Parity::Odd, true)?,
            v0,
        })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            delta_v: 0.0,
            u: ScalarField::zeros(grid, Parity::Odd),
            v0: 0.0,
        }
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }
}

/// Frame perturbation assembled from both halves of the unknowns.
pub fn perturbation(rs: &ReducedState, es: &EliminatedState) -> Result<FramePerturbation> {
    FramePerturbation::new(es.u.clone(), es.v0, rs.vperp.clone(), rs.w.clone())
}

#[derive(Clone, Debug)]
pub struct FValues {
    pub f1: f64,
    pub f2: ScalarField,
    pub f3: f64,
}

impl FValues {
    pub fn sup(&self) -> f64 {
        self.f1.abs().max(self.f2.sup_norm()).max(self.f3.abs())
    }
}

struct Shear {
    a: ScalarField,
    b: ScalarField,
    q: ScalarField,
}

fn shear(rs: &ReducedState, u: &ScalarField, v0: f64) -> Shear {
    let r = rs.grid().radius();
    let v = rs.vperp.add_scalar(v0);
    let a = &u.d1() - &v.scale(1.0 / r);
    let b = &rs.vperp.d1() + &u.scale(1.0 / r);
    let ws = rs.w.d1();
    let q = (&(&(&a * &a) + &(&b * &b)) + &(&ws * &ws)).scale(0.5);
    Shear { a, b, q }
}

pub fn f_map(rs: &ReducedState, es: &EliminatedState) -> Result<FValues> {
    if rs.grid() != es.u.grid() {
        return Err(Error::GridMismatch);
    }
    let r = rs.grid().radius();
    let sh = shear(rs, &es.u, es.v0);
    let qbar = sh.q.mean();
    let f1 = rs.omega * (&rs.vperp * &rs.w.d1()).mean() + es.delta_v * (1.0 - es.v0 / r);
    let f2 = (&(&es.u.d1() - &rs.vperp.scale(1.0 / r)) + &sh.q.mean_removed())
        .require(Parity::Even, true)?;
    let f3 = -es.v0 / r + qbar;
    Ok(FValues { f1, f2, f3 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Take one extra Newton step once the tolerance is met.
    pub polish: bool,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            tol: TOL_INNER,
            max_iter: MAX_INNER,
            polish: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhiSolve {
    pub state: EliminatedState,
    pub iterations: usize,
    /// `sup` residual before each Newton step and after the last one.
    pub residual_history: Vec<f64>,
}

pub fn solve_phi(rs: &ReducedState) -> Result<EliminatedState> {
    Ok(solve_phi_with(rs, &PhiConfig::default(), None)?.state)
}

/// Newton solve of `ℱ = 0`, optionally warm-started.
pub fn solve_phi_with(
    rs: &ReducedState,
    cfg: &PhiConfig,
    warm: Option<&EliminatedState>,
) -> Result<PhiSolve> {
    let grid = rs.grid().clone();
    let r = grid.radius();
    let size = rs.vperp.sup_norm().max(rs.w.sup_norm());
    if !(size <= DOMAIN_FRACTION * r) {
        return Err(Error::IftDomain(format!(
            "sup(|v⊥|, |w|) = {size:e} exceeds {DOMAIN_FRACTION}·R"
        )));
    }
    let rs = rs.band_limited();
    let m = grid.cutoff();
    let dim = m + 2;

    let mut es = match warm {
        Some(w) if w.u.grid() == &grid => EliminatedState {
            delta_v: w.delta_v,
            u: w.u.dealiased(),
            v0: w.v0,
        },
        _ => EliminatedState::zero(&grid),
    };
    let mut coeffs = es.u.sin_modes(m);
    let mut history = Vec::new();
    let mut polishing = false;

    for iter in 0..=cfg.max_iter {
        let f = f_map(&rs, &es)?;
        let res = f.sup();
        history.push(res);
        if !res.is_finite() {
            break;
        }
        if polishing || res == 0.0 || (res <= cfg.tol && (!cfg.polish || iter == cfg.max_iter)) {
            return Ok(PhiSolve {
                state: es,
                iterations: iter,
                residual_history: history,
            });
        }
        if res <= cfg.tol {
            polishing = true;
        } else if iter == cfg.max_iter {
            break;
        }
        let mut rhs = DVector::zeros(dim);
        rhs[0] = -f.f1;
        for (l, c) in f.f2.cos_modes(m).into_iter().enumerate() {
            rhs[l + 1] = -c;
        }
        rhs[m + 1] = -f.f3;
        let jac = phi_jacobian(&rs, &es);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::IftDomain("singular elimination Jacobian".into()))?;
        es.delta_v += step[0];
        for l in 0..m {
            coeffs[l] += step[l + 1];
        }
        es.v0 += step[m + 1];
        es.u = ScalarField::from_sin_modes(&grid, &coeffs);
    }
    Err(Error::IftDomain(format!(
        "elimination Newton did not reach {:e} in {} iterations (last residual {:e})",
        cfg.tol,
        cfg.max_iter,
        history.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Exact Jacobian of `(ℱ₁, cos-coefficients of ℱ₂, ℱ₃)` with respect to
/// `(δV, sin-coefficients of u, v₀)`.
fn phi_jacobian(rs: &ReducedState, es: &EliminatedState) -> DMatrix<f64> {
    let grid = rs.grid();
    let r = grid.radius();
    let m = grid.cutoff();
    let dim = m + 2;
    let sh = shear(rs, &es.u, es.v0);
    let (a, b) = (sh.a.values(), sh.b.values());
    let thetas: Vec<f64> = grid.points().iter().map(|s| s / r).collect();
    let mut jac = DMatrix::zeros(dim, dim);

    // The products below are band-limited to 2M < N − M, so their low
    // coefficients are exact and agree with the dealiased 𝒬.
    let mut column = |col: usize, dq: Vec<f64>, diag: f64, f3_shift: f64| {
        let spec = grid.forward(&dq);
        for l in 1..=m {
            jac[(l, col)] = 2.0 * spec[l].re;
        }
        if (1..=m).contains(&col) {
            jac[(col, col)] += diag;
        }
        jac[(m + 1, col)] = spec[0].re + f3_shift;
    };

    for l in 1..=m {
        let lf = l as f64;
        let dq = thetas
            .iter()
            .enumerate()
            .map(|(j, th)| {
                let (sn, cs) = (lf * th).sin_cos();
                a[j] * (lf / r) * cs + b[j] * sn / r
            })
            .collect();
        column(l, dq, lf / r, 0.0);
    }
    column(m + 1, a.iter().map(|x| -x / r).collect(), 0.0, -1.0 / r);

    jac[(0, 0)] = 1.0 - es.v0 / r;
    jac[(0, m + 1)] = -es.delta_v / r;
    jac
}

/// `(𝒢₁, 𝒢₂) = (𝒩 − mean 𝒩, ℬ)` after elimination.
pub fn g_map(rs: &ReducedState) -> Result<(ScalarField, ScalarField)> {
    let es = solve_phi(rs)?;
    g_with(rs, &es)
}

/// `(𝒢₁, 𝒢₂)` for already-eliminated unknowns.
pub fn g_with(rs: &ReducedState, es: &EliminatedState) -> Result<(ScalarField, ScalarField)> {
    let res = full_residuals(rs, es)?;
    Ok((
        res.n.mean_removed().require(Parity::Even, true)?,
        res.b.require(Parity::Odd, true)?,
    ))
}

pub fn full_residuals(rs: &ReducedState, es: &EliminatedState) -> Result<Residuals> {
    let p = perturbation(rs, es)?;
    Ok(residuals(&p, rs.omega, es.delta_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{apply_l, critical_omega, kernel_vector};

    fn grid() -> Grid {
        Grid::new(1.0, 128).unwrap()
    }

    fn state(g: &Grid, om: f64, eps: f64, a: &[f64], b: &[f64]) -> ReducedState {
        ReducedState::new(
            om,
            ScalarField::from_cos_modes(g, a).scale(eps),
            ScalarField::from_sin_modes(g, b).scale(eps),
        )
        .unwrap()
    }

    #[test]
    fn f_map_vanishes_at_the_circle() {
        let g = grid();
        for &om in &[0.0, 1.0, -2.5] {
            let f = f_map(&ReducedState::trivial(om, &g), &EliminatedState::zero(&g)).unwrap();
            assert_eq!(f.sup(), 0.0);
        }
        let es = EliminatedState::new(0.3, ScalarField::zeros(&g, Parity::Odd), 0.0).unwrap();
        let f = f_map(&ReducedState::trivial(1.1, &g), &es).unwrap();
        assert!((f.f1 - 0.3).abs() < 1e-15);
        assert_eq!(f.f2.sup_norm(), 0.0);
        assert_eq!(f.f3, 0.0);
    }

    #[test]
    fn f1_along_kernel_direction() {
        let g = grid();
        let phi = kernel_vector(2, &g).unwrap();
        let (lam, om) = (0.01, 1.3);
        let rs = ReducedState::new(om, phi.phi1.scale(lam), phi.phi2.scale(lam)).unwrap();
        let f = f_map(&rs, &EliminatedState::zero(&g)).unwrap();
        assert!((f.f1 - om * 2.0 * 3f64.sqrt() * lam * lam).abs() < 1e-15);
    }

    #[test]
    fn trivial_input_gives_trivial_output() {
        let g = grid();
        let out = solve_phi_with(&ReducedState::trivial(1.7, &g), &PhiConfig::default(), None).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.state.delta_v, 0.0);
        assert_eq!(out.state.v0, 0.0);
        assert_eq!(out.state.u().sup_norm(), 0.0);
    }

    #[test]
    fn solution_satisfies_f_equals_zero() {
        let g = grid();
        let rs = state(&g, 1.4, 0.05, &[0.3, 1.0, -0.2], &[0.5, 0.8, 0.1]);
        let out = solve_phi_with(&rs, &PhiConfig::default(), None).unwrap();
        assert!(out.iterations <= 6, "{:?}", out.residual_history);
        assert!(f_map(&rs, &out.state).unwrap().sup() <= TOL_INNER);
        // quadratic convergence: r_{n+1} / r_n² stays bounded
        let h = &out.residual_history;
        for w in h.windows(2) {
            if w[1] > 1e-14 {
                assert!(w[1] / (w[0] * w[0]) < 100.0, "{h:?}");
            }
        }
    }

    #[test]
    fn first_order_derivative_of_phi() {
        // φ(Ω, εh) = (0, (ε/R)∂⁻¹h_v, 0) + O(ε²)
        let r = 1.3;
        let g = Grid::new(r, 128).unwrap();
        let hv = ScalarField::from_cos_modes(&g, &[0.4, -1.0, 0.25]);
        let hw = ScalarField::from_sin_modes(&g, &[0.2, 0.7]);
        let lin_u = hv.antiderivative().unwrap().scale(1.0 / r);
        let mut prev = f64::INFINITY;
        for &eps in &[1e-2, 1e-3, 1e-4] {
            let rs = ReducedState::new(0.9, hv.scale(eps), hw.scale(eps)).unwrap();
            let es = solve_phi(&rs).unwrap();
            let du = (&es.u().scale(1.0 / eps) - &lin_u).sup_norm();
            let err = du.max(es.delta_v.abs() / eps).max(es.v0.abs() / eps);
            assert!(err < 2.0 * eps, "eps={eps} err={err}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn g_map_trivial_and_linearisation() {
        let g = grid();
        let (g1, g2) = g_map(&ReducedState::trivial(0.8, &g)).unwrap();
        assert_eq!(g1.sup_norm() + g2.sup_norm(), 0.0);

        let phi = kernel_vector(3, &g).unwrap();
        let v = (&phi.phi1 + &ScalarField::from_cos_modes(&g, &[0.2, 0.1])).require(Parity::Even, true).unwrap();
        let w = (&phi.phi2 + &ScalarField::from_sin_modes(&g, &[0.0, 0.4])).require(Parity::Odd, true).unwrap();
        let om = 2.0;
        let (l1, l2) = apply_l(om, &v, &w).unwrap();
        let mut prev = f64::INFINITY;
        for &eps in &[1e-3, 1e-4, 1e-5] {
            let rs = ReducedState::new(om, v.scale(eps), w.scale(eps)).unwrap();
            let (g1, g2) = g_map(&rs).unwrap();
            let err = (&g1.scale(1.0 / eps) - &l1).sup_norm().max((&g2.scale(1.0 / eps) - &l2).sup_norm());
            assert!(err < 50.0 * eps, "eps={eps} err={err}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn g_map_parities() {
        let g = grid();
        let rs = state(&g, critical_omega(2, 1.0).unwrap(), 0.03, &[0.1, 2.0, 0.3], &[0.2, 1.7]);
        let (g1, g2) = g_map(&rs).unwrap();
        assert!(g1.check(Parity::Even, true).is_ok());
        assert!(g2.check(Parity::Odd, false).is_ok());
    }

    #[test]
    fn domain_guard() {
        let g = grid();
        let rs = state(&g, 1.0, 1.0, &[0.0, 0.6], &[]);
        assert!(matches!(solve_phi(&rs), Err(Error::IftDomain(_))));
        // large but admissible inputs that Newton cannot handle are reported the same way
        let cfg = PhiConfig { tol: 1e-12, max_iter: 1, polish: false };
        let rs = state(&g, 1.0, 0.3, &[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(solve_phi_with(&rs, &cfg, None), Err(Error::IftDomain(_))));
    }

    #[test]
    fn warm_start_is_consistent() {
        let g = grid();
        let rs = state(&g, 1.2, 0.04, &[0.0, 1.0, 0.3], &[0.0, 0.9]);
        let cold = solve_phi(&rs).unwrap();
        let warm = solve_phi_with(&rs, &PhiConfig::default(), Some(&cold)).unwrap();
        assert_eq!(warm.iterations, 0);
        let rs2 = state(&g, 1.2, 0.041, &[0.0, 1.0, 0.3], &[0.0, 0.9]);
        let a = solve_phi(&rs2).unwrap();
        let b = solve_phi_with(&rs2, &PhiConfig::default(), Some(&cold)).unwrap().state;
        assert!((a.delta_v - b.delta_v).abs() < 1e-13);
        assert!((a.v0 - b.v0).abs() < 1e-13);
        assert!((a.u() - b.u()).sup_norm() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn newton_converges_quickly_for_small_inputs(
                a in prop::collection::vec(-1.0f64..1.0, 1..6),
                b in prop::collection::vec(-1.0f64..1.0, 1..6),
                om in -3.0f64..3.0,
                r in 0.6f64..2.0,
            ) {
                let g = Grid::new(r, 64).unwrap();
                let v = ScalarField::from_cos_modes(&g, &a);
                let w = ScalarField::from_sin_modes(&g, &b);
                // H⁴-type size ≤ 0.1
                let size = v.differentiate(4).unwrap().sup_norm() + v.sup_norm()
                    + w.differentiate(4).unwrap().sup_norm() + w.sup_norm();
                let scale = if size > 0.0 { 0.1 / size } else { 1.0 };
                let rs = ReducedState::new(om, v.scale(scale), w.scale(scale)).unwrap();
                let out = solve_phi_with(&rs, &PhiConfig::default(), None).unwrap();
                prop_assert!(out.iterations <= 6);
                let res = f_map(&rs, &out.state).unwrap();
                prop_assert!(res.sup() <= TOL_INNER);
                prop_assert!(res.f2.parity() == Parity::Even && res.f2.is_mean_free());
            }
        }
    }
}
