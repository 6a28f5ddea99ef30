use std::io;

use rayon::prelude::*;
use serde_json::{json, Value};

use screwbif::branch::{solve_branch_point, sweep_branch, BranchPoint};
use screwbif::lie::{drift_report_from_states, integrate};
use screwbif::linear::{critical_omega, ModeMatrix};
use screwbif::Grid;

use crate::config::RunConfig;
use crate::output::{full, round12, write_curve, write_json, write_table, write_table_to};
use crate::{Numerical, Usage};

/// Largest spread of the orbit distance still counted as bounded.
pub const DIST_TOL: f64 = 1e-6;

pub fn critical(cfg: &RunConfig, k_min: usize, k_max: usize) -> anyhow::Result<()> {
    if k_min < 2 {
        return Err(Usage(format!("k range must start at 2 or above, got {k_min}")).into());
    }
    if k_max < k_min {
        return Err(Usage(format!("empty k range {k_min}..={k_max}")).into());
    }
    let grid = Grid::new(cfg.radius, cfg.n)?;
    let mut rows = Vec::new();
    for k in k_min..=k_max {
        let omega = critical_omega(k, cfg.radius)?;
        for l in 1..=grid.cutoff() {
            let m = ModeMatrix::new(l, omega, cfg.radius);
            rows.push(vec![k.to_string(), full(omega), l.to_string(), full(m.determinant())]);
        }
    }
    let mut prov = cfg.provenance("critical");
    prov.push(format!("k_range = {k_min}..={k_max}"));
    let header = ["k", "Omega_k", "l", "det_Ml"];
    write_table(&cfg.output_dir.join("critical.csv"), &prov, &header, rows.clone())?;
    write_table_to(io::stdout().lock(), &prov, &header, rows)
}

pub fn spectrum(cfg: &RunConfig, omega: Option<f64>) -> anyhow::Result<()> {
    let grid = Grid::new(cfg.radius, cfg.n)?;
    let omega = match omega {
        Some(x) if x.is_finite() => x,
        Some(x) => return Err(Usage(format!("Ω must be finite, got {x}")).into()),
        None => cfg.rotation.sign() * critical_omega(cfg.k, cfg.radius)?,
    };
    let rows: Vec<Vec<String>> = (1..=grid.cutoff())
        .map(|l| {
            let m = ModeMatrix::new(l, omega, cfg.radius);
            let (e1, e2) = m.eigenvalues();
            vec![l.to_string(), full(m.determinant()), full(e1), full(e2)]
        })
        .collect();
    let mut prov = cfg.provenance("spectrum");
    prov.push(format!("omega = {omega:?}"));
    let header = ["l", "det_Ml", "eig1", "eig2"];
    write_table(&cfg.output_dir.join("spectrum.csv"), &prov, &header, rows.clone())?;
    write_table_to(io::stdout().lock(), &prov, &header, rows)
}

fn point_json(p: &BranchPoint) -> Value {
    json!({
        "lambda": p.lambda,
        "omega": p.omega,
        "delta_v": p.delta_v(),
        "c": p.c,
        "v": p.v,
        "residual_sup": p.residual_sup,
        "dist_to_sigma": p.dist_to_sigma,
        "diagnostics": p.diagnostics,
    })
}

pub fn branch(cfg: &RunConfig) -> anyhow::Result<()> {
    let sweep = sweep_branch(cfg.k, cfg.radius, cfg.lambda_max, cfg.n_points, &cfg.branch())?;
    if sweep.reachable_lambda() == 0.0 {
        let reason = sweep.failure.as_ref().map_or("unknown", |(_, r)| r.as_str());
        return Err(Numerical(format!(
            "no nonzero amplitude converged; last good λ = 0 ({reason})"
        ))
        .into());
    }
    let prov = cfg.provenance("branch");
    let dir = &cfg.output_dir;
    let rows = sweep.points.iter().map(|p| {
        vec![
            full(p.lambda),
            full(p.omega),
            full(p.delta_v()),
            full(p.c),
            full(p.v),
            full(p.residual_sup),
            full(p.dist_to_sigma),
        ]
    });
    write_table(
        &dir.join("branch.csv"),
        &prov,
        &["lambda", "Omega", "deltaV", "c", "V", "residual_sup", "dist_to_sigma"],
        rows,
    )?;
    sweep
        .points
        .par_iter()
        .enumerate()
        .try_for_each(|(i, p)| {
            let mut lines = prov.clone();
            lines.push(format!("lambda = {:?}", p.lambda));
            write_curve(&dir.join(format!("profiles/profile_{i:02}.csv")), &p.profile(), &lines)
        })?;

    let kf = cfg.k as f64;
    let target = -kf * kf * (kf * kf - 1.0) / (2.0 * cfg.radius.powi(3));
    let rel = sweep.dv_coeff_estimate.map(|e| ((e - target) / target).abs());
    let mut warnings = Vec::new();
    if let Some((lam, reason)) = &sweep.failure {
        warnings.push(format!(
            "sweep truncated at λ = {lam}: {reason}; reachable |λ| = {}",
            sweep.reachable_lambda()
        ));
    }
    if sweep.dv_coeff_estimate.is_none() {
        warnings.push("fewer than three nonzero amplitudes converged; no δV/λ² estimate".into());
    }
    let warning = (!warnings.is_empty()).then(|| warnings.join("; "));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    write_json(
        &dir.join("summary.json"),
        json!({
            "config": cfg.as_json(),
            "k": cfg.k,
            "radius": cfg.radius,
            "dv_coeff_target": target,
            "dv_coeff_estimate": sweep.dv_coeff_estimate,
            "dv_coeff_rel_error": rel,
            "lambda_max": cfg.lambda_max,
            "reachable_lambda": sweep.reachable_lambda(),
            "warning": warning,
            "points": sweep.points.iter().map(point_json).collect::<Vec<_>>(),
        }),
    )?;
    match sweep.dv_coeff_estimate {
        Some(e) => println!(
            "k = {}, R = {}: δV/λ² → {} (target {}, rel. error {:.3e}); {} points in {}",
            cfg.k,
            cfg.radius,
            round12(e),
            target,
            rel.unwrap(),
            sweep.points.len(),
            dir.display()
        ),
        None => println!("{} points in {}", sweep.points.len(), dir.display()),
    }
    Ok(())
}

pub fn evolve(cfg: &RunConfig) -> anyhow::Result<()> {
    let point = solve_branch_point(cfg.k, cfg.radius, cfg.lambda, None, &cfg.branch())?;
    let ic = cfg.integrator();
    let y = point.profile();
    let dt = cfg.dt.unwrap_or_else(|| ic.max_dt(y.grid()));
    let states = integrate(&y, cfg.t_end, dt, &ic)?;
    let rep = drift_report_from_states(&point, &states);

    let prov = cfg.provenance("evolve");
    let dir = &cfg.output_dir;
    let rows = (0..rep.times.len()).map(|i| {
        vec![
            full(rep.times[i]),
            full(rep.dist_sigma[i]),
            full(rep.z_center[i]),
            full(rep.pointwise_gap[i]),
            full(rep.length[i]),
            full(rep.arclength_defect[i]),
        ]
    });
    write_table(
        &dir.join("timeseries.csv"),
        &prov,
        &["t", "dist_sigma", "z_center", "pointwise_gap", "length", "arclength_defect"],
        rows,
    )?;
    states.par_iter().enumerate().try_for_each(|(i, s)| {
        let mut lines = prov.clone();
        lines.push(format!("t = {:?}", s.t));
        write_curve(&dir.join(format!("snapshots/snapshot_{i:04}.csv")), &s.curve, &lines)
    })?;

    let variation = rep.dist_variation();
    let bounded = variation <= DIST_TOL;
    let ratio = (cfg.lambda != 0.0).then(|| rep.dist_sup() / cfg.lambda.abs());
    let drift = rep.drift_linear(cfg.radius);
    write_json(
        &dir.join("verdict.json"),
        json!({
            "config": cfg.as_json(),
            "lambda": cfg.lambda,
            "dt": dt,
            "branch": point_json(&point),
            "dist_bounded": {
                "value": bounded,
                "sup_dist": rep.dist_sup(),
                "sup_dist_over_lambda": ratio,
                "variation": variation,
                "tolerance": DIST_TOL,
            },
            "drift_linear": {
                "value": drift,
                "gamma": rep.gamma.unwrap_or(0.0),
                "t0": rep.t0,
            },
            "fitted_v": rep.fitted_v,
            "branch_v": point.v,
            "circle_v": 1.0 / cfg.radius,
        }),
    )?;
    println!(
        "λ = {}: dist_bounded = {bounded}, drift_linear = {drift}, fitted V = {} (branch {}); output in {}",
        cfg.lambda,
        round12(rep.fitted_v),
        round12(point.v),
        dir.display()
    );
    Ok(())
}
