use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::Vector3;
use screwbif::branch::{solve_branch_point, BranchConfig, BranchPoint};
use screwbif::frenet::screw_evaluate;
use screwbif::lie::{drift_report, integrate, lie_rhs, IntegratorConfig};

fn point() -> &'static BranchPoint {
    static P: OnceLock<BranchPoint> = OnceLock::new();
    P.get_or_init(|| solve_branch_point(2, 1.0, 0.02, None, &BranchConfig::default()).unwrap())
}

#[test]
fn branch_profile_moves_rigidly_under_the_flow() {
    let p = point();
    let y = p.profile();
    let ys = y.derivative(1).unwrap();
    let f = lie_rhs(&y);
    let e3 = Vector3::z();
    for j in 0..y.grid().len() {
        let expect = ys.point(j) * p.c + e3.cross(&y.point(j)) * p.omega + e3 * p.v;
        assert!((f.point(j) - expect).norm() < 1e-9);
    }
}

#[test]
fn length_and_shape_are_preserved() {
    let p = point();
    let y = p.profile();
    let cfg = IntegratorConfig {
        output_interval: Some(0.5),
        ..IntegratorConfig::default()
    };
    let states = integrate(&y, 5.0, cfg.max_dt(y.grid()), &cfg).unwrap();
    assert_eq!(states.len(), 11);
    let sp = p.screw_params();
    for s in &states {
        assert!((s.length - 2.0 * PI).abs() <= 1e-8 * 2.0 * PI);
        assert!(s.arclength_defect < 1e-9);
        assert!(s.curve.sup_distance(&screw_evaluate(&y, &sp, s.t)) < 1e-6);
    }
}

#[test]
fn circle_drift_report_is_trivial() {
    let cfg = BranchConfig {
        n: 64,
        ..BranchConfig::default()
    };
    let p = solve_branch_point(2, 1.0, 0.0, None, &cfg).unwrap();
    let ic = IntegratorConfig {
        output_interval: Some(0.5),
        ..IntegratorConfig::default()
    };
    let rep = drift_report(&p, 2.0, ic.max_dt(p.grid()), &ic).unwrap();
    assert!(rep.dist_sup() < 1e-10);
    assert!(rep.pointwise_gap.iter().all(|g| *g < 1e-9));
    assert!((rep.fitted_v - 1.0).abs() < 1e-10);
    assert!(rep.t0.is_none());
    assert!(!rep.drift_linear(1.0));
}

#[test]
fn branch_drifts_behind_the_circle() {
    let p = point();
    let ic = IntegratorConfig {
        output_interval: Some(0.5),
        ..IntegratorConfig::default()
    };
    let rep = drift_report(p, 3.0, ic.max_dt(p.grid()), &ic).unwrap();
    assert!(p.delta_v() < 0.0);
    assert!((rep.fitted_v - p.v).abs() < 0.01 * p.v);
    assert!(rep.fitted_v < 1.0);
    assert!(rep.dist_variation() < 1e-6);
    assert!(rep.drift_linear(1.0));
    let t0 = rep.t0.unwrap();
    for (t, g) in rep.times.iter().zip(&rep.pointwise_gap) {
        if *t >= t0 {
            assert!(*g >= 0.9 * p.delta_v().abs() * t);
        }
    }
    assert_eq!(rep.times.len(), rep.dist_sigma.len());
    assert_eq!(rep.times.len(), rep.z_center.len());
    assert_eq!(rep.times.len(), rep.length.len());
}
