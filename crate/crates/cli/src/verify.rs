use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use screwbif::branch::{solve_branch_point, BranchConfig, BranchPoint};
use screwbif::frenet::screw_evaluate;
use screwbif::lie::integrate;
use screwbif::linear::{
    apply_l, critical_omega, kernel_vector, mode_determinant, transversality_closed_form,
    transversality_pairing, Rotation,
};
use screwbif::reduction::{solve_phi, ReducedState};
use screwbif::spectral::h2_inner_scalar;
use screwbif::{Grid, Parity, ScalarField};

use crate::config::RunConfig;
use crate::output::write_json;
use crate::Numerical;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type Probe = fn(&RunConfig, &mut ChaCha8Rng) -> anyhow::Result<(bool, String)>;

const PROBES: [(&str, Probe); 9] = [
    ("critical frequencies", critical_frequencies),
    ("mode determinants", mode_determinants),
    ("kernel and transversality", kernel),
    ("spectral calculus", spectral_calculus),
    ("H2 inner product", h2_product),
    ("elimination derivative", elimination),
    ("branch point checks", branch_point),
    ("symmetries", symmetries),
    ("screw motion under the flow", screw_motion),
];

pub fn run(cfg: &RunConfig) -> anyhow::Result<()> {
    // each probe gets its own stream so the outcome is independent of scheduling
    let checks: Vec<Check> = PROBES
        .par_iter()
        .enumerate()
        .map(|(i, (name, probe))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let (pass, detail) = probe(cfg, &mut rng).unwrap_or_else(|e| (false, format!("error: {e}")));
            Check { name, pass, detail }
        })
        .collect();
    for c in &checks {
        println!("{}: {} ({})", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    write_json(
        &cfg.output_dir.join("verify.json"),
        json!({
            "config": cfg.as_json(),
            "checks": checks
                .iter()
                .map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail}))
                .collect::<Vec<_>>(),
            "failed": failed,
        }),
    )?;
    if failed > 0 {
        return Err(Numerical(format!("{failed} of {} checks failed", checks.len())).into());
    }
    Ok(())
}

fn critical_frequencies(cfg: &RunConfig, _: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let mut worst = 0.0f64;
    for k in 2..=8usize {
        let exact = (((k * k - 1) as f64).sqrt()) / cfg.radius.powi(2);
        worst = worst.max((critical_omega(k, cfg.radius)? / exact - 1.0).abs());
    }
    Ok((worst <= 1e-14, format!("max rel err {worst:.2e}")))
}

fn mode_determinants(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let r = cfg.radius;
    let mut worst = 0.0f64;
    let mut signs_ok = true;
    for _ in 0..64 {
        let k = rng.gen_range(2..=8usize);
        let omega = critical_omega(k, r)?;
        for l in 1..=20usize {
            let (l2, k2) = ((l * l) as f64, (k * k) as f64);
            let det = mode_determinant(l, omega, r);
            let scale = l2 * l2.max(k2) / r.powi(4);
            worst = worst.max((det - l2 * (l2 - k2) / r.powi(4)).abs() / scale);
            signs_ok &= match l.cmp(&k) {
                std::cmp::Ordering::Less => det < 0.0,
                std::cmp::Ordering::Equal => det.abs() <= 1e-12 * scale,
                std::cmp::Ordering::Greater => det > 0.0,
            };
        }
    }
    Ok((
        worst <= 1e-12 && signs_ok,
        format!("max scaled err {worst:.2e}, sign pattern {}", if signs_ok { "ok" } else { "broken" }),
    ))
}

fn kernel(cfg: &RunConfig, _: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let grid = Grid::new(cfg.radius, cfg.n)?;
    let top = grid.cutoff().min(8);
    let (mut res, mut pair) = (0.0f64, 0.0f64);
    for k in 2..=top {
        let phi = kernel_vector(k, &grid)?;
        let (a, b) = apply_l(critical_omega(k, cfg.radius)?, &phi.phi1, &phi.phi2)?;
        res = res.max(a.sup_norm()).max(b.sup_norm());
        let exact = transversality_closed_form(k, cfg.radius);
        pair = pair.max(((transversality_pairing(k, &grid)? - exact) / exact).abs());
    }
    Ok((
        res <= 1e-10 && pair <= 1e-9,
        format!("k = 2..={top}: sup |LΦ| {res:.2e}, pairing rel err {pair:.2e}"),
    ))
}

fn random_modes(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|j| rng.gen_range(-1.0..1.0) / (1 + j * j) as f64).collect()
}

fn spectral_calculus(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let grid = Grid::new(cfg.radius, cfg.n)?;
    let r = cfg.radius;
    let modes = (grid.cutoff() / 2).clamp(1, 12);
    let mut worst = 0.0f64;
    let mut parity_ok = true;
    for _ in 0..16 {
        let a = random_modes(rng, modes);
        let b = random_modes(rng, modes);
        let f = ScalarField::from_cos_modes(&grid, &a);
        let g = ScalarField::from_sin_modes(&grid, &b);
        // d/ds Σ a_j cos(js/R) = −Σ (j/R) a_j sin(js/R)
        let da: Vec<f64> = a.iter().enumerate().map(|(j, x)| -((j + 1) as f64) / r * x).collect();
        worst = worst.max((&f.d1() - &ScalarField::from_sin_modes(&grid, &da)).sup_norm());
        let fg = f.try_product(&g)?;
        parity_ok &= f.parity() == Parity::Even && g.parity() == Parity::Odd && fg.parity() == Parity::Odd;
        let direct = ScalarField::from_fn(&grid, |s| {
            let c: f64 = a.iter().enumerate().map(|(j, x)| x * ((j + 1) as f64 * s / r).cos()).sum();
            let d: f64 = b.iter().enumerate().map(|(j, x)| x * ((j + 1) as f64 * s / r).sin()).sum();
            c * d
        });
        worst = worst.max((&fg - &direct).sup_norm());
    }
    Ok((
        worst <= 1e-10 && parity_ok,
        format!("max err {worst:.2e} over 16 random pairs, parity tags {}", if parity_ok { "ok" } else { "wrong" }),
    ))
}

fn h2_product(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let grid = Grid::new(cfg.radius, cfg.n)?;
    let modes = (grid.cutoff() / 2).clamp(1, 12);
    let mut worst = 0.0f64;
    let mut positive = true;
    for _ in 0..16 {
        let f = ScalarField::from_cos_modes(&grid, &random_modes(rng, modes));
        let g = ScalarField::from_cos_modes(&grid, &random_modes(rng, modes));
        let fg = h2_inner_scalar(&f, &g)?;
        worst = worst.max((fg - h2_inner_scalar(&g, &f)?).abs() / fg.abs().max(1.0));
        positive &= h2_inner_scalar(&f, &f)? > 0.0;
    }
    Ok((worst <= 1e-13 && positive, format!("asymmetry {worst:.2e}, positive {positive}")))
}

fn elimination(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let grid = Grid::new(cfg.radius, cfg.n)?;
    let omega = critical_omega(cfg.k, cfg.radius)?;
    let modes = (grid.cutoff() / 2).clamp(1, 6);
    let hv = random_modes(rng, modes);
    let hw = random_modes(rng, modes);
    let lin: Vec<f64> = hv.iter().enumerate().map(|(j, x)| x / (j + 1) as f64).collect();
    let lin_u = ScalarField::from_sin_modes(&grid, &lin);
    let mut errs = Vec::new();
    for eps in [1e-3, 1e-4] {
        let rs = ReducedState::new(
            omega,
            ScalarField::from_cos_modes(&grid, &hv).scale(eps),
            ScalarField::from_sin_modes(&grid, &hw).scale(eps),
        )?;
        let es = solve_phi(&rs)?;
        let du = (&es.u().scale(1.0 / eps) - &lin_u).sup_norm();
        errs.push(du.max(es.delta_v.abs() / eps).max(es.v0.abs() / eps));
    }
    let ratio = errs[0] / errs[1];
    Ok((
        (7.0..=13.0).contains(&ratio),
        format!("first-order errors {:.2e} → {:.2e}, ratio {ratio:.2}", errs[0], errs[1]),
    ))
}

fn probe_point(cfg: &RunConfig, lambda: f64, rotation: Rotation) -> anyhow::Result<BranchPoint> {
    let bc = BranchConfig { rotation, ..cfg.branch() };
    Ok(solve_branch_point(cfg.k, cfg.radius, lambda, None, &bc)?)
}

/// Small amplitude used by the branch probes.
fn probe_lambda(cfg: &RunConfig) -> f64 {
    0.01 * cfg.radius
}

fn branch_point(cfg: &RunConfig, _: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let p = probe_point(cfg, probe_lambda(cfg), Rotation::Positive)?;
    let d = &p.diagnostics;
    let pass = p.residual_sup <= 1e-10
        && d.tangential_sup <= 1e-9
        && d.slip_variation <= 1e-9
        && d.speed_defect <= 1e-9
        && d.min_stretch >= 0.5
        && p.delta_v() < 0.0;
    Ok((
        pass,
        format!(
            "λ = {}: residual {:.2e}, T {:.2e}, slip var {:.2e}, δV {:.4e}",
            p.lambda,
            p.residual_sup,
            d.tangential_sup,
            d.slip_variation,
            p.delta_v()
        ),
    ))
}

fn symmetries(cfg: &RunConfig, _: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let lam = probe_lambda(cfg);
    let p = probe_point(cfg, lam, Rotation::Positive)?;
    let m = probe_point(cfg, lam, Rotation::Negative)?;
    let q = probe_point(cfg, -lam, Rotation::Positive)?;
    let mirror = [
        (p.omega + m.omega).abs(),
        (p.delta_v() - m.delta_v()).abs(),
        (p.c + m.c).abs(),
        (p.rs.vperp() - m.rs.vperp()).sup_norm(),
        (p.rs.w() + m.rs.w()).sup_norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let half = std::f64::consts::PI * cfg.radius / cfg.k as f64;
    let flip = [
        (p.omega - q.omega).abs(),
        (p.delta_v() - q.delta_v()).abs(),
        (&p.rs.vperp().shift(half) - q.rs.vperp()).sup_norm(),
        (&p.rs.w().shift(half) - q.rs.w()).sup_norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok((
        mirror <= 1e-9 && flip <= 1e-9,
        format!("mirror {mirror:.2e}, half-period shift {flip:.2e}"),
    ))
}

fn screw_motion(cfg: &RunConfig, _: &mut ChaCha8Rng) -> anyhow::Result<(bool, String)> {
    let p = probe_point(cfg, probe_lambda(cfg), Rotation::Positive)?;
    let y = p.profile();
    let ic = cfg.integrator();
    let t_end = 0.5;
    let states = integrate(&y, t_end, ic.max_dt(y.grid()), &ic)?;
    let sp = p.screw_params();
    let err = states
        .iter()
        .map(|s| s.curve.sup_distance(&screw_evaluate(&y, &sp, s.t)))
        .fold(0.0, f64::max);
    Ok((err <= 1e-6, format!("sup err on [0, {t_end}] {err:.2e}")))
}
