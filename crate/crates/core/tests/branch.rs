use std::sync::OnceLock;

use screwbif::branch::{
    monolithic_crosscheck, solve_branch_point, sweep_branch, BranchConfig, BranchSweep,
};
use screwbif::linear::{critical_omega, kernel_vector};
use screwbif::Error;

fn sweep_k2() -> &'static BranchSweep {
    static SWEEP: OnceLock<BranchSweep> = OnceLock::new();
    SWEEP.get_or_init(|| sweep_branch(2, 1.0, 0.05, 6, &BranchConfig::default()).unwrap())
}

#[test]
fn every_point_passes_the_a_posteriori_checks() {
    let sweep = sweep_k2();
    assert!(sweep.failure.is_none());
    assert_eq!(sweep.points.len(), 6);
    for p in &sweep.points {
        assert!(p.residual_sup <= 1e-10, "λ={} residual {:e}", p.lambda, p.residual_sup);
        assert!(p.diagnostics.tangential_sup <= 1e-9);
        assert!(p.diagnostics.slip_variation <= 1e-9);
        assert!(p.diagnostics.speed_defect <= 1e-9);
        assert!(p.diagnostics.min_stretch >= 0.5);
    }
}

#[test]
fn amplitudes_are_the_kernel_projections() {
    let sweep = sweep_k2();
    let phi = kernel_vector(2, sweep.points[0].grid()).unwrap();
    for p in &sweep.points {
        let amp = phi.pair(p.rs.vperp(), p.rs.w()).unwrap() / phi.norm_sq();
        assert!((amp - p.lambda).abs() < 1e-12);
    }
}

#[test]
fn axial_speed_deficit_is_quadratic() {
    let sweep = sweep_k2();
    let est = sweep.dv_coeff_estimate.unwrap();
    assert!((est + 6.0).abs() < 0.12, "estimate {est}");
    for p in sweep.points.iter().skip(1) {
        assert!(p.delta_v() < 0.0);
        assert!(p.v < 1.0);
    }
}

#[test]
fn small_amplitude_speed_deficit() {
    let p = solve_branch_point(2, 1.0, 0.01, None, &BranchConfig::default()).unwrap();
    assert!((p.delta_v() / -6e-4 - 1.0).abs() < 0.05);
    // |Ω − Ω_k| = O(|λ|)
    assert!((p.omega - 3f64.sqrt()).abs() < 10.0 * 0.01);
}

#[test]
fn remainder_is_superlinear_and_distance_is_linear() {
    let sweep = sweep_k2();
    let phi = kernel_vector(2, sweep.points[0].grid()).unwrap();
    let mut ratios = Vec::new();
    let mut dist_ratios = Vec::new();
    for p in sweep.points.iter().skip(1) {
        let rv = (p.rs.vperp() - &phi.phi1.scale(p.lambda)).sup_norm();
        let rw = (p.rs.w() - &phi.phi2.scale(p.lambda)).sup_norm();
        ratios.push(rv.max(rw) / p.lambda);
        dist_ratios.push(p.dist_to_sigma / p.lambda);
    }
    for w in ratios.windows(2) {
        assert!(w[1] > w[0], "{ratios:?}");
    }
    // remainder / λ shrinks roughly in proportion to λ
    assert!(ratios[0] < 0.1 * ratios[ratios.len() - 1], "{ratios:?}");
    let (lo, hi) = dist_ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    assert!(hi / lo < 1.1, "{dist_ratios:?}");
}

#[test]
fn circle_point_has_rigid_slip() {
    let r = 1.5;
    let p = solve_branch_point(3, r, 0.0, None, &BranchConfig::default()).unwrap();
    let om = critical_omega(3, r).unwrap();
    assert!((p.c + r * om).abs() < 1e-12);
    assert!((p.v - 1.0 / r).abs() < 1e-15);
}

#[test]
fn other_radius_follows_the_cubic_scaling() {
    let cfg = BranchConfig {
        n: 128,
        ..BranchConfig::default()
    };
    let r = 2.0;
    let lam = 0.01;
    let p = solve_branch_point(2, r, lam, None, &cfg).unwrap();
    assert!(p.residual_sup <= 1e-10);
    let target = -4.0 * 3.0 / (2.0 * r * r * r) * lam * lam;
    assert!((p.delta_v() / target - 1.0).abs() < 0.05);
}

#[test]
fn monolithic_solve_matches_reduction() {
    let cfg = BranchConfig {
        n: 64,
        ..BranchConfig::default()
    };
    let a = solve_branch_point(2, 1.0, 0.02, None, &cfg).unwrap();
    let b = monolithic_crosscheck(2, 1.0, 0.02, &cfg).unwrap();
    assert!(b.residual_sup <= 1e-10);
    assert!((a.omega - b.omega).abs() < 1e-8);
    assert!((a.delta_v() - b.delta_v()).abs() < 1e-8);
    assert!((a.c - b.c).abs() < 1e-8);
    assert!((a.rs.vperp() - b.rs.vperp()).sup_norm() < 1e-8);
    assert!((a.rs.w() - b.rs.w()).sup_norm() < 1e-8);
    assert!((a.es.u() - b.es.u()).sup_norm() < 1e-8);

    let zero = monolithic_crosscheck(2, 1.0, 0.0, &cfg).unwrap();
    assert_eq!(zero.residual_sup, 0.0);
}

#[test]
fn oversized_sweep_is_truncated() {
    let cfg = BranchConfig {
        n: 64,
        max_outer: 8,
        ..BranchConfig::default()
    };
    let sweep = sweep_branch(2, 1.0, 3.0, 4, &cfg).unwrap();
    let (lam, _) = sweep.failure.clone().expect("λ = 3 is far outside the branch neighbourhood");
    assert!(lam > sweep.reachable_lambda());
    assert!(!sweep.points.is_empty());
    assert_eq!(sweep.points[0].lambda, 0.0);
}

#[test]
fn invalid_requests() {
    let cfg = BranchConfig::default();
    assert!(matches!(sweep_branch(2, 1.0, 0.0, 6, &cfg), Err(Error::InvalidInput(_))));
    let coarse = BranchConfig { n: 16, ..cfg };
    assert!(matches!(
        solve_branch_point(6, 1.0, 0.01, None, &coarse),
        Err(Error::Resolution { suggested_n, .. }) if suggested_n >= 36
    ));
}
