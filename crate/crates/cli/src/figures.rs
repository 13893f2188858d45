//! Scripted experiments, one per figure, writing plot-ready tables.

use std::path::{Path, PathBuf};

use anyhow::Result;
use rayon::prelude::*;

use cubicwave::analytic::AttractorParams;
use cubicwave::diagnostics::{convergence_factor, local_power_index, TimeSeries};
use cubicwave::experiments::{
    critical_criterion, critical_search, divergence_times, flip_search, predict_null_infinity_blowup, run_gaussian,
    simultaneous_blowup_search, Bisection, BisectionConfig,
};
use cubicwave::fit::{extrapolate_modulation, fit_in_space, residual_norm_series, FitOptions, Weighting};
use cubicwave::grid::{compactified_radius, conformal_factor};
use cubicwave::io::{format_f64, snapshot_table, write_series, KeyValues, Table};
use cubicwave::standard::{cone_difference, fit_origin_blowup, StandardConfig, StandardInitialData, StandardSolver};
use cubicwave::{HyperboloidalSolver, InitialData, Run, SolverConfig};

pub fn reproduce(figure: u8, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let files = match figure {
        2 => figure2(out)?,
        3 => figure3(out)?,
        4 => figure4(out)?,
        5 => figure5(out)?,
        6 => figure6(out)?,
        7 => figure7(out)?,
        8 => figure8(out)?,
        9 => figure9(out)?,
        _ => unreachable!("clap restricts the figure number"),
    };
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn evolve(config: SolverConfig, data: &InitialData) -> Result<Run> {
    Ok(HyperboloidalSolver::new(config)?.evolve_initial(data)?)
}

fn damped(n: usize, max_tau: f64) -> SolverConfig {
    SolverConfig { n_cells: n, max_tau, sample_dt: 0.5, constraint_damping: 1.0, courant: 0.4, ..Default::default() }
}

fn labelled(mut s: TimeSeries, label: &str) -> TimeSeries {
    s.label = label.into();
    s
}

fn power_index_at(run: &Run, i: usize, label: &str) -> Result<TimeSeries> {
    let (t, v) = run.regular_series_at(i);
    Ok(labelled(local_power_index(&TimeSeries::new(label, t, v)?.window(1.0, f64::INFINITY))?, label))
}

fn meta(pairs: &[(&str, String)]) -> KeyValues {
    let mut kv = KeyValues::new();
    for (k, v) in pairs {
        kv.set(k, v.clone());
    }
    kv
}

fn save_bisection(b: &Bisection, path: PathBuf, what: &str) -> Result<PathBuf> {
    let mut kv = KeyValues::new();
    kv.set("experiment", what);
    kv.set_f64("estimate", b.estimate);
    kv.set_f64("lo", b.lo);
    kv.set_f64("hi", b.hi);
    kv.set("depth", b.depth.to_string());
    kv.set("indeterminate", b.indeterminate.to_string());
    kv.set("stalled", b.stalled.to_string());
    kv.save(&path)?;
    println!("{what}: {} (depth {}, stalled {})", format_f64(b.estimate), b.depth, b.stalled);
    Ok(path)
}

/// Self-convergence factor at 200/400/800 cells, A = 2, Courant 0.8 and 0.08.
fn figure2(out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (courant, max_tau, name) in [(0.8, 60.0, "fig2.csv"), (0.08, 1.0, "fig2_courant0.08.csv")] {
        let runs: Vec<Run> = [200, 400, 800]
            .par_iter()
            .map(|&n| evolve(SolverConfig { n_cells: n, courant, max_tau, sample_dt: 0.1, ..Default::default() }, &InitialData::gaussian(2.0)))
            .collect::<Result<_>>()?;
        let q = labelled(convergence_factor(&runs[0], &runs[1], &runs[2])?, "Q");
        let path = out.join(name);
        write_series(&path, &meta(&[("courant", format_f64(courant)), ("cells", "200,400,800".into())]), &[q])?;
        files.push(path);
    }
    Ok(files)
}

/// Left: local power indices of a decaying Gaussian. Right: blowup rate of
/// a large Gaussian at the origin.
fn figure3(out: &Path) -> Result<Vec<PathBuf>> {
    let (decay, blow) = rayon::join(
        || evolve(SolverConfig { max_tau: 200.0, sample_dt: 1.0, ..Default::default() }, &InitialData::gaussian(2.0)),
        || evolve(SolverConfig { max_tau: 20.0, ..Default::default() }, &InitialData::gaussian(4.0)),
    );
    let (decay, blow) = (decay?, blow?);
    let g = &decay.grid;
    let series = vec![
        power_index_at(&decay, g.last(), "p_at_scri")?,
        power_index_at(&decay, g.nearest_index(compactified_radius(100.0)), "p_r100")?,
        power_index_at(&decay, g.nearest_index(compactified_radius(20.0)), "p_r20")?,
        power_index_at(&decay, 0, "p_origin")?,
    ];
    let left = out.join("fig3_left.csv");
    write_series(&left, &meta(&[("amplitude", "2".into())]), &series)?;

    let t_b = blow.blowup.tau_estimate;
    let omega = conformal_factor(0.0)?;
    let mut t = Table::new(["s", "phi_origin", "sqrt2_over_s"]);
    t.meta.set_f64("blowup_tau", t_b);
    for snap in &blow.snapshots {
        let s = t_b - snap.tau;
        if s > 0.0 {
            t.push_row(vec![s, (omega * snap.phi[0]).abs(), std::f64::consts::SQRT_2 / s])?;
        }
    }
    let right = out.join("fig3_right.csv");
    t.save(&right)?;
    Ok(vec![left, right])
}

/// Residual norms against the extrapolated optimal member and the
/// modulation of per-slice fits, A = 2 at 800 cells.
fn figure4(out: &Path) -> Result<Vec<PathBuf>> {
    let run = evolve(damped(800, 100.0), &InitialData::gaussian(2.0))?;
    let space = fit_in_space(&run, &FitOptions { tau_start: 5.0, weighting: Weighting::Absolute, ..Default::default() })?;
    let limit = extrapolate_modulation(&space, 20.0, 80.0)?;
    let r = residual_norm_series(&run, &limit);
    let m = meta(&[("a", format_f64(limit.a)), ("b", format_f64(limit.b))]);
    let left = out.join("fig4_left.csv");
    write_series(&left, &m, &[labelled(r.l2, "l2"), labelled(r.weighted_l2, "weighted_l2")])?;
    let right = out.join("fig4_right.csv");
    write_series(
        &right,
        &m,
        &[
            labelled(space.a.clone(), "a"),
            labelled(space.b.clone(), "b"),
            labelled(space.delta_a.clone(), "delta_a"),
            labelled(space.delta_b.clone(), "delta_b"),
        ],
    )?;
    Ok(vec![left, right])
}

/// Flip amplitude and the decay rates at and around it. Several minutes.
fn figure5(out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = SolverConfig { max_tau: 200.0, constraint_damping: 1.0, ..Default::default() };
    let b = flip_search(&cfg, &BisectionConfig::relative(3.6, 3.7, 1e-10, 60))?;
    let mut files = vec![save_bisection(&b, out.join("fig5.manifest"), "flip amplitude")?];
    let runs: Vec<Run> = [0.0, 0.01, -0.01]
        .par_iter()
        .map(|d| Ok(run_gaussian(&cfg, b.estimate + d)?))
        .collect::<Result<_>>()?;
    for (run, name) in runs.iter().zip(["fig5_left.csv", "fig5_right_plus.csv", "fig5_right_minus.csv"]) {
        let series = vec![power_index_at(run, 0, "p_origin")?, power_index_at(run, run.grid.last(), "p_at_scri")?];
        let path = out.join(name);
        let amp = match &run.initial {
            Some(InitialData::Gaussian { amplitude, .. }) => format_f64(*amplitude),
            _ => String::new(),
        };
        write_series(&path, &meta(&[("amplitude", amp)]), &series)?;
        files.push(path);
    }
    Ok(files)
}

/// Origin blowup in standard coordinates: difference to the fitted member.
fn figure6(out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = StandardConfig { n_cells: 800, r_max: 1.0, max_t: 1.0, ..Default::default() };
    let solver = StandardSolver::new(cfg)?;
    let run = solver.evolve_lightcone(StandardInitialData::Gaussian { amplitude: 4.0, center: 0.0, width: 1.0 }.build(solver.r())?)?;
    let t_b = run.blowup_time.ok_or_else(|| crate::Indeterminate("no blowup".into()))?;
    let f = fit_origin_blowup(&run, t_b, (1e-3, 0.1), (1e-3, 0.1))?;
    let cone = cone_difference(&run, &f, (1e-4, 0.3));
    let mut t = Table::new(["s", "origin_difference"]);
    t.meta.set_f64("blowup_time", f.blowup_time);
    t.meta.set_f64("b", f.b);
    t.meta.set_f64("slope", f.slope.slope);
    for (s, v) in f.difference.iter() {
        t.push_row(vec![s, v])?;
    }
    let p = out.join("fig6.csv");
    t.save(&p)?;
    let mut c = Table::new(["s", "cone_difference"]);
    for (s, v) in cone.iter() {
        c.push_row(vec![s, v])?;
    }
    let q = out.join("fig6_cone.csv");
    c.save(&q)?;
    Ok(vec![p, q])
}

/// Simultaneous blowup: tuned amplitude, divergence times and last profiles.
fn figure7(out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = SolverConfig { max_tau: 20.0, constraint_damping: 1.0, sample_dt: 0.05, ..Default::default() };
    let b = simultaneous_blowup_search(&cfg, &BisectionConfig { lo: 3.74, hi: 3.75, tol: 1e-12, max_iter: 80 }, 0.0)?;
    let mut files = vec![save_bisection(&b, out.join("fig7.manifest"), "simultaneous-blowup amplitude")?];
    let run = run_gaussian(&cfg, b.estimate)?;
    let d = divergence_times(&run, 8)?;
    let mut t = Table::new(["rho", "divergence_tau"]);
    t.meta.set_f64("spread", d.spread);
    for (r, x) in d.rho.iter().zip(&d.times) {
        t.push_row(vec![*r, *x])?;
    }
    let p = out.join("fig7_times.csv");
    t.save(&p)?;
    files.push(p);
    let tail: Vec<_> = run.snapshots.iter().rev().step_by(4).take(6).rev().cloned().collect();
    let p = out.join("fig7_profiles.csv");
    snapshot_table(run.grid.rho(), &tail)?.save(&p)?;
    files.push(p);
    Ok(files)
}

/// Blowup at null infinity of the seeded `b = -0.02` member.
fn figure8(out: &Path) -> Result<Vec<PathBuf>> {
    let member = AttractorParams::positive(0.0, -0.02);
    let cfg = SolverConfig { max_tau: 40.0, sample_dt: 0.05, ..Default::default() };
    let run = evolve(cfg, &InitialData::Attractor { a: member.a, b: member.b, kappa: 1.0, tau0: 0.0 })?;
    let p = predict_null_infinity_blowup(&run, 2.0, 12.0, 0.5)?;
    let last = run.grid.last();
    let (t, origin) = run.regular_series_at(0);
    let (_, scri) = run.regular_series_at(last);
    let exact_o: Vec<f64> = t.iter().map(|&x| member.phi(x, 0.0)).collect();
    let exact_s: Vec<f64> = t.iter().map(|&x| member.phi(x, 1.0)).collect();
    let series = vec![
        TimeSeries::new("phi_origin", t.clone(), origin)?,
        TimeSeries::new("phi_at_scri", t.clone(), scri)?,
        TimeSeries::new("exact_origin", t.clone(), exact_o)?,
        TimeSeries::new("exact_at_scri", t, exact_s)?,
    ];
    let m = meta(&[
        ("predicted_location", format!("{:?}", p.location).to_lowercase()),
        ("predicted_tau", format_f64(p.tau)),
        ("fitted_b", format_f64(p.params.b)),
        ("measured_tau", format_f64(run.blowup.tau_estimate)),
    ]);
    let path = out.join("fig8.csv");
    write_series(&path, &m, &series)?;
    Ok(vec![path])
}

/// Critical amplitude and the deviation of `|Phi|` at null infinity from
/// `sqrt 2` at and around it.
fn figure9(out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = SolverConfig { max_tau: 80.0, constraint_damping: 1.0, ..Default::default() };
    let b = critical_search(&cfg, &BisectionConfig::relative(3.70, 3.78, 1e-10, 80))?;
    let mut files = vec![save_bisection(&b, out.join("fig9.manifest"), "critical amplitude")?];
    let devs: Vec<TimeSeries> = [(0.0, "dev_critical"), (1e-6, "dev_plus_1e-6"), (-1e-6, "dev_minus_1e-6")]
        .par_iter()
        .map(|&(d, label)| Ok(labelled(critical_criterion(&run_gaussian(&cfg, b.estimate + d)?)?.deviation, label)))
        .collect::<Result<_>>()?;
    let n = devs.iter().map(TimeSeries::len).min().unwrap_or(0);
    let cut: Vec<TimeSeries> = devs
        .iter()
        .map(|s| TimeSeries { label: s.label.clone(), times: s.times[..n].to_vec(), values: s.values[..n].to_vec() })
        .collect();
    let path = out.join("fig9.csv");
    write_series(&path, &meta(&[("amplitude", format_f64(b.estimate))]), &cut)?;
    files.push(path);
    Ok(files)
}
