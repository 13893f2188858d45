use std::f64::consts::SQRT_2;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use cubicwave::diagnostics::{blowup_rate, convergence_factor, local_power_index, series_loglog_slope, TimeSeries};
use cubicwave::experiments::{
    critical_search, divergence_times, flip_search, predict_null_infinity_blowup, simultaneous_blowup_search, Bisection,
    BisectionConfig, Side,
};
use cubicwave::fit::{
    extrapolate_modulation, fit_in_space, fit_in_time, fit_in_time_extrapolated, fit_in_time_limit, residual_norm_series,
    FitOptions, Weighting,
};
use cubicwave::grid::compactified_radius;
use cubicwave::io::{format_f64, write_series, KeyValues, Table};
use cubicwave::standard::{cone_difference, fit_origin_blowup, StandardConfig, StandardInitialData, StandardSolver};
use cubicwave::{AttractorParams, HyperboloidalSolver, InitialData, Run, RunRecord, RunStatus, SolverConfig};

use crate::settings::{DataArgs, OutArgs, Settings, SolverArgs};
use crate::{BisectMode, FitMethod, Indeterminate, Usage, WeightingArg};

/// Evolves and writes the run record. A failed evolution (or one that hit
/// the step limit) still writes a record, marked FAILED, and returns an error.
pub fn evolve_recorded(
    settings: &Settings,
    config: SolverConfig,
    data: &InitialData,
    out: &OutArgs,
    stem: &str,
    sample_rho: &[f64],
    snapshot_tau: &[f64],
) -> Result<Run> {
    let dir = out.ensure()?;
    let kv = settings.record(&config, Some(data));
    let run = HyperboloidalSolver::new(config)?.evolve_initial(data);
    let run = match run {
        Ok(r) => r,
        Err(e) => {
            RunRecord::failed(kv, data.to_string(), e.to_string()).write(dir, stem)?;
            return Err(anyhow!(e).context(format!("evolution failed; partial record in {}", dir.display())));
        }
    };
    let mut record = RunRecord::from_run(&run, sample_rho, snapshot_tau)?;
    record.config = kv;
    if run.status == RunStatus::StepLimit {
        record.failure = Some(format!("step limit reached at tau = {}", format_f64(run.final_state.tau)));
    }
    record.write(dir, stem)?;
    if let Some(f) = &record.failure {
        bail!("{f}; partial record in {}", dir.display());
    }
    Ok(run)
}

fn summary(run: &Run) -> String {
    if run.blowup.detected {
        format!(
            "blowup at tau = {:.10} near rho = {:.4} ({} steps)",
            run.blowup.tau_estimate, run.blowup.location_rho, run.steps
        )
    } else {
        format!("{} at tau = {} ({} steps)", run.status, format_f64(run.final_state.tau), run.steps)
    }
}

pub fn evolve(solver: &SolverArgs, data: &DataArgs, out: &OutArgs, sample_rho: &[f64], snapshot_tau: &[f64]) -> Result<()> {
    let s = Settings::from_args(solver, Some(data))?;
    s.check(true, &[])?;
    let stem = out.stem("run");
    let run = evolve_recorded(&s, s.solver()?, &s.initial()?, out, stem, sample_rho, snapshot_tau)?;
    println!("{}", summary(&run));
    println!("wrote {}", out.path(stem, ".manifest").display());
    Ok(())
}

pub fn converge(solver: &SolverArgs, data: &DataArgs, out: &OutArgs, levels: usize) -> Result<()> {
    if levels < 3 {
        return Err(Usage("--levels must be at least 3".into()).into());
    }
    let s = Settings::from_args(solver, Some(data))?;
    s.check(true, &["levels"])?;
    let base = s.solver()?;
    let init = s.initial()?;
    let runs: Vec<Run> = (0..levels)
        .into_par_iter()
        .map(|k| {
            let cfg = SolverConfig { n_cells: base.n_cells << k, ..base.clone() };
            Ok(HyperboloidalSolver::new(cfg)?.evolve_initial(&init)?)
        })
        .collect::<Result<_>>()?;
    let mut series = Vec::new();
    for w in runs.windows(3) {
        let mut q = convergence_factor(&w[0], &w[1], &w[2])?;
        q.label = format!("Q_{}_{}_{}", w[0].grid.n_cells(), w[1].grid.n_cells(), w[2].grid.n_cells());
        let end = q.times.last().copied().unwrap_or(0.0);
        println!("{}: mean Q on the second half = {:.4}", q.label, q.window(0.5 * end, end).finite().mean());
        series.push(q);
    }
    let common = common_times(&series);
    let series: Vec<TimeSeries> = series.iter().map(|q| restrict(q, &common)).collect();
    let mut meta = s.record(&base, Some(&init));
    meta.set("levels", levels.to_string());
    let stem = out.stem("converge");
    out.ensure()?;
    write_series(out.path(stem, ".csv"), &meta, &series)?;
    println!("wrote {}", out.path(stem, ".csv").display());
    Ok(())
}

/// Times present in every series (runs that stop early shorten the table).
fn common_times(series: &[TimeSeries]) -> Vec<f64> {
    let Some(first) = series.first() else { return Vec::new() };
    first.times.iter().copied().filter(|t| series.iter().all(|s| s.times.contains(t))).collect()
}

fn restrict(s: &TimeSeries, times: &[f64]) -> TimeSeries {
    let values = times
        .iter()
        .map(|t| s.times.iter().position(|x| x == t).map_or(f64::NAN, |i| s.values[i]))
        .collect();
    TimeSeries { label: s.label.clone(), times: times.to_vec(), values }
}

pub struct FitArgs {
    pub method: FitMethod,
    pub tau_start: Option<f64>,
    pub tau_end: Option<f64>,
    pub weighting: Option<WeightingArg>,
    pub stride: Option<usize>,
    pub starts: Vec<f64>,
    pub extrapolate: Vec<f64>,
}

pub fn fit(solver: &SolverArgs, data: &DataArgs, out: &OutArgs, args: &FitArgs) -> Result<()> {
    let mut s = Settings::from_args(solver, Some(data))?;
    s.set("tau_start", args.tau_start);
    s.set("tau_end", args.tau_end);
    s.check(true, &["tau_start", "tau_end"])?;
    let stem = out.stem("fit");
    let run = evolve_recorded(&s, s.solver()?, &s.initial()?, out, &format!("{stem}.run"), &[0.0, 1.0], &[])?;
    println!("{}", summary(&run));
    let weighting = match args.weighting {
        Some(WeightingArg::Absolute) => Weighting::Absolute,
        Some(WeightingArg::Relative) => Weighting::Relative,
        None if args.method == FitMethod::Space => Weighting::Absolute,
        None => Weighting::Relative,
    };
    let opts = FitOptions {
        tau_start: s.f64_or("tau_start", 5.0)?,
        tau_end: s.f64_or("tau_end", f64::INFINITY)?,
        weighting,
        point_stride: args.stride.unwrap_or(1),
        ..Default::default()
    };
    let mut report = KeyValues::new();
    report.set("method", format!("{:?}", args.method).to_lowercase());
    let params = match args.method {
        FitMethod::Time => {
            let r = fit_in_time(&run, &opts)?;
            report.set_f64("dispersion_a", r.dispersion_a);
            report.set_f64("dispersion_b", r.dispersion_b);
            report.set("unreliable", r.unreliable.to_string());
            r.params
        }
        FitMethod::Extrapolated => fit_in_time_extrapolated(&run, opts.tau_start, &opts)?.params,
        FitMethod::Limit => {
            let starts = if args.starts.is_empty() {
                (3..=11).map(|k| 5.0 * f64::from(k)).collect()
            } else {
                args.starts.clone()
            };
            fit_in_time_limit(&run, &starts, &opts)?.0
        }
        FitMethod::Space => {
            let sp = fit_in_space(&run, &opts)?;
            out.ensure()?;
            let mut meta = KeyValues::new();
            meta.set("kind", "modulation");
            let mut a = sp.a.clone();
            a.label = "a".into();
            let mut b = sp.b.clone();
            b.label = "b".into();
            let mut da = sp.delta_a.clone();
            da.label = "delta_a".into();
            let mut db = sp.delta_b.clone();
            db.label = "delta_b".into();
            write_series(out.path(stem, ".modulation.csv"), &meta, &[a, b, da, db])?;
            if let [t0, t1] = args.extrapolate[..] {
                report.set("extrapolated_over", format!("{},{}", format_f64(t0), format_f64(t1)));
                extrapolate_modulation(&sp, t0, t1)?
            } else {
                sp.result.params
            }
        }
    };
    report_params(&mut report, &params);
    let r = residual_norm_series(&run, &params);
    let mut meta = KeyValues::new();
    meta.set("kind", "residual");
    let mut l2 = r.l2.clone();
    l2.label = "l2".into();
    let mut w = r.weighted_l2.clone();
    w.label = "weighted_l2".into();
    out.ensure()?;
    write_series(out.path(stem, ".residuals.csv"), &meta, &[l2, w.clone()])?;
    if let Ok(slope) = series_loglog_slope(&w, opts.tau_start.max(10.0), f64::INFINITY) {
        report.set_f64("weighted_l2_loglog_slope", slope.slope);
    }
    report.save(out.path(stem, ".fit"))?;
    println!("a = {}, b = {}, kappa = {}", format_f64(params.a), format_f64(params.b), params.kappa.value());
    println!("wrote {}", out.path(stem, ".fit").display());
    Ok(())
}

fn report_params(kv: &mut KeyValues, p: &AttractorParams) {
    kv.set_f64("a", p.a);
    kv.set_f64("b", p.b);
    kv.set_f64("kappa", p.kappa.value());
}

pub fn power_index(solver: &SolverArgs, data: &DataArgs, out: &OutArgs, rho: &[f64], radius: &[f64]) -> Result<()> {
    let s = Settings::from_args(solver, Some(data))?;
    s.check(true, &[])?;
    let stem = out.stem("power");
    let run = evolve_recorded(&s, s.solver()?, &s.initial()?, out, &format!("{stem}.run"), &[], &[])?;
    println!("{}", summary(&run));
    let mut points: Vec<(String, f64)> = rho.iter().map(|&r| (format!("p_rho={}", format_f64(r)), r)).collect();
    points.extend(radius.iter().map(|&r| (format!("p_r={}", format_f64(r)), compactified_radius(r))));
    if points.is_empty() {
        points = vec![("p_origin".into(), 0.0), ("p_scri".into(), 1.0)];
    }
    let series = points
        .iter()
        .map(|(label, r)| {
            let (t, v) = run.regular_series_at(run.grid.nearest_index(*r));
            let mut p = local_power_index(&TimeSeries::new(label.clone(), t, v)?.window(1.0, f64::INFINITY))?;
            p.label = label.clone();
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = KeyValues::new();
    meta.set("initial", run.initial.as_ref().map_or(String::new(), |d| d.to_string()));
    write_series(out.path(stem, ".csv"), &meta, &series)?;
    for p in &series {
        let end = p.times.last().copied().unwrap_or(0.0);
        println!("{}: mean over the second half = {:.4}", p.label, p.window(0.5 * end, end).finite().mean());
    }
    println!("wrote {}", out.path(stem, ".csv").display());
    Ok(())
}

pub struct BisectArgs {
    pub mode: BisectMode,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub simultaneity: Option<f64>,
}

pub fn bisect(solver: &SolverArgs, out: &OutArgs, args: &BisectArgs) -> Result<()> {
    let mut s = Settings::from_args(solver, None)?;
    s.set("lo", args.lo);
    s.set("hi", args.hi);
    s.set("tol", args.tol);
    s.set("rel_tol", args.rel_tol);
    s.set_usize("max_iter", args.max_iter);
    s.set("simultaneity", args.simultaneity);
    s.check(false, &["lo", "hi", "tol", "rel_tol", "max_iter", "simultaneity", "mode"])?;
    let need = |k: &str| -> Result<f64> {
        s.kv.get_f64(k)?.ok_or_else(|| Usage(format!("--{k} is required")).into())
    };
    let (lo, hi) = (need("lo")?, need("hi")?);
    let max_iter = s.kv.get_usize("max_iter")?.unwrap_or(80);
    let bc = match s.kv.get_f64("rel_tol")? {
        Some(r) => BisectionConfig::relative(lo, hi, r, max_iter),
        None => BisectionConfig { lo, hi, tol: s.f64_or("tol", 1e-10 * (hi - lo).abs())?, max_iter },
    };
    let cfg = s.solver()?;
    let b = match args.mode {
        BisectMode::Critical => critical_search(&cfg, &bc)?,
        BisectMode::Flip => flip_search(&cfg, &bc)?,
        BisectMode::Simultaneous => simultaneous_blowup_search(&cfg, &bc, s.f64_or("simultaneity", 0.0)?)?,
    };
    let stem = out.stem(match args.mode {
        BisectMode::Critical => "critical",
        BisectMode::Flip => "flip",
        BisectMode::Simultaneous => "simultaneous",
    });
    write_bisection(&b, &s, &cfg, out, stem, args.mode)?;
    println!(
        "estimate = {} in [{}, {}], depth {}, indeterminate {}, monotonicity violations {}",
        format_f64(b.estimate),
        format_f64(b.lo),
        format_f64(b.hi),
        b.depth,
        b.indeterminate,
        b.monotonicity_violations
    );
    println!("wrote {}", out.path(stem, ".manifest").display());
    if b.stalled {
        return Err(Indeterminate(format!(
            "classifier undecided on both quarter points; bracket [{}, {}]",
            format_f64(b.lo),
            format_f64(b.hi)
        ))
        .into());
    }
    Ok(())
}

pub fn write_bisection(b: &Bisection, s: &Settings, cfg: &SolverConfig, out: &OutArgs, stem: &str, mode: BisectMode) -> Result<()> {
    out.ensure()?;
    let mut t = Table::new(["amplitude", "side", "lo", "hi"]);
    for step in &b.history {
        let side = match step.side {
            Side::Low => -1.0,
            Side::High => 1.0,
            Side::Indeterminate => 0.0,
        };
        t.push_row(vec![step.amplitude, side, step.lo, step.hi])?;
    }
    t.meta.set("side", "-1 low, 1 high, 0 indeterminate");
    t.save(out.path(stem, ".history.csv"))?;
    let mut kv = KeyValues::new();
    kv.set("mode", format!("{mode:?}").to_lowercase());
    kv.set_f64("estimate", b.estimate);
    kv.set_f64("lo", b.lo);
    kv.set_f64("hi", b.hi);
    kv.set("depth", b.depth.to_string());
    kv.set("indeterminate", b.indeterminate.to_string());
    kv.set("stalled", b.stalled.to_string());
    kv.set("monotonicity_violations", b.monotonicity_violations.to_string());
    for (k, v) in s.record(cfg, None).iter() {
        kv.set(&format!("config.{k}"), v);
    }
    kv.save(out.path(stem, ".manifest"))?;
    Ok(())
}

pub struct BlowupArgs {
    pub r_max: Option<f64>,
    pub max_t: Option<f64>,
    pub fit_window: Vec<f64>,
    pub slope_window: Vec<f64>,
    pub predict: Vec<f64>,
    pub rho_max: Option<f64>,
}

fn pair(v: &[f64], default: (f64, f64)) -> (f64, f64) {
    match v {
        [a, b] => (*a, *b),
        _ => default,
    }
}

pub fn blowup_hyperboloidal(solver: &SolverArgs, data: &DataArgs, out: &OutArgs, args: &BlowupArgs) -> Result<()> {
    let s = Settings::from_args(solver, Some(data))?;
    s.check(true, &[])?;
    let stem = out.stem("blowup");
    let run = evolve_recorded(&s, s.solver()?, &s.initial()?, out, &format!("{stem}.run"), &[0.0, 1.0], &[])?;
    println!("{}", summary(&run));
    let mut kv = KeyValues::new();
    if let [t0, t1] = args.predict[..] {
        let p = predict_null_infinity_blowup(&run, t0, t1, args.rho_max.unwrap_or(0.5))?;
        report_params(&mut kv, &p.params);
        kv.set("predicted_location", format!("{:?}", p.location).to_lowercase());
        kv.set_f64("predicted_tau", p.tau);
        println!("prediction from [{t0}, {t1}]: {:?} at tau = {} (b = {})", p.location, format_f64(p.tau), format_f64(p.params.b));
    }
    if !run.blowup.detected {
        kv.save(out.path(stem, ".summary"))?;
        return Err(Indeterminate("no blowup before max_tau".into()).into());
    }
    kv.set_f64("tau", run.blowup.tau_estimate);
    kv.set_f64("rho", run.blowup.location_rho);
    kv.set("low_confidence", run.blowup.low_confidence.to_string());
    if let Ok(d) = divergence_times(&run, 8) {
        kv.set_f64("divergence_spread", d.spread);
    }
    let i = run.blowup.location_index;
    match blowup_rate(&run, i, pair(&args.fit_window, (1e-7, 1e-4))) {
        Ok(r) => {
            kv.set_f64("rate_slope", r.slope);
            kv.set_f64("rate_amplitude", r.amplitude);
            println!("|phi| ~ {:.5} (T - tau)^{:.5} at rho = {:.4} (sqrt 2 = {SQRT_2:.5})", r.amplitude, r.slope, run.grid.rho()[i]);
        }
        Err(e) => kv.set("rate_error", e.to_string()),
    }
    kv.save(out.path(stem, ".summary"))?;
    println!("wrote {}", out.path(stem, ".summary").display());
    Ok(())
}

pub fn blowup_standard(solver: &SolverArgs, data: &DataArgs, out: &OutArgs, args: &BlowupArgs) -> Result<()> {
    let mut s = Settings::from_args(solver, Some(data))?;
    s.set("r_max", args.r_max);
    s.set("max_t", args.max_t);
    s.check(true, &["r_max", "max_t"])?;
    if s.kv.get("data").is_some_and(|d| d != "gaussian") {
        return Err(Usage("the standard chart takes Gaussian data only".into()).into());
    }
    let d = StandardConfig::default();
    let r_max = s.f64_or("r_max", 1.0)?;
    let cfg = StandardConfig {
        n_cells: s.kv.get_usize("cells")?.unwrap_or(d.n_cells),
        r_max,
        courant: s.f64_or("courant", d.courant)?,
        dissipation: s.f64_or("dissipation", d.dissipation)?,
        blowup_threshold: s.f64_or("blowup_threshold", d.blowup_threshold)?,
        adapt_scale: s.f64_or("adapt_scale", d.adapt_scale)?,
        max_t: s.f64_or("max_t", r_max)?,
        sample_dt: s.f64_or("sample_dt", d.sample_dt)?,
        max_steps: s.kv.get_usize("max_steps")?.unwrap_or(d.max_steps),
    };
    let solver = StandardSolver::new(cfg)?;
    let init = StandardInitialData::Gaussian {
        amplitude: s.f64_or("amplitude", 4.0)?,
        center: s.f64_or("center", 0.0)?,
        width: s.f64_or("width", 1.0)?,
    }
    .build(solver.r())?;
    let run = solver.evolve_lightcone(init)?;
    let stem = out.stem("standard");
    out.ensure()?;
    let mut kv = KeyValues::new();
    for (k, v) in s.kv.iter() {
        kv.set(&format!("config.{k}"), v);
    }
    kv.set("status", run.status.to_string());
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let Some(t_b) = run.blowup_time else {
        kv.save(out.path(stem, ".manifest"))?;
        return Err(Indeterminate(format!("no blowup before t = {}", format_f64(run.config.max_t))).into());
    };
    let fw = pair(&args.fit_window, (1e-3, 0.1));
    let sw = pair(&args.slope_window, fw);
    let f = fit_origin_blowup(&run, t_b, fw, sw).context("origin attractor fit")?;
    kv.set_f64("blowup_time", f.blowup_time);
    kv.set_f64("b", f.b);
    kv.set_f64("a", f.params().a);
    kv.set_f64("c2", f.c2);
    kv.set_f64("difference_slope", f.slope.slope);
    kv.set_f64("difference_slope_stderr", f.slope.slope_stderr);
    kv.set("valid_at_blowup", run.is_valid(t_b, 0.0).to_string());
    let cone = cone_difference(&run, &f, sw);
    if let Ok(c) = series_loglog_slope(&cone, sw.0, sw.1) {
        kv.set_f64("cone_slope", c.slope);
    }
    kv.save(out.path(stem, ".manifest"))?;
    let mut t = Table::new(["s", "origin_difference"]);
    for (x, v) in f.difference.iter() {
        t.push_row(vec![x, v])?;
    }
    t.save(out.path(stem, ".difference.csv"))?;
    let mut t = Table::new(["s", "cone_difference"]);
    for (x, v) in cone.iter() {
        t.push_row(vec![x, v])?;
    }
    t.save(out.path(stem, ".cone.csv"))?;
    println!(
        "T = {}, b = {:.6}, |phi - phi_(a,b)| ~ (T - t)^{:.4} at the origin",
        format_f64(f.blowup_time),
        f.b,
        f.slope.slope
    );
    println!("wrote {}", out.path(stem, ".manifest").display());
    Ok(())
}
