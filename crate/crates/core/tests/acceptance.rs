//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits non-zero if any fails.
//!
//! `cargo test --test acceptance -- 3 7` runs a subset; any other filter
//! word skips the suite (so `cargo test some_unit_test` stays fast).

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::time::Instant;

use cubicwave::analytic::{
    attractor_hyperboloidal, attractor_standard, conformal_attractor_difference_profile, conformal_inversion,
    conformal_optimal_params, conformal_solution_hyperboloidal, conformal_solution_standard, AttractorParams, ConformalSolution,
    HyperboloidalSolution, Sign,
};
use cubicwave::diagnostics::{
    blowup_rate, convergence_exponent, convergence_factor, linear_fit, local_power_index, series_loglog_slope, TimeSeries,
};
use cubicwave::experiments::{
    bisect, critical_criterion, critical_search, divergence_times, flip_search, predict_from_params,
    predict_null_infinity_blowup, run_gaussian, simultaneous_blowup_search, BisectionConfig, BlowupLocation, Side,
};
use cubicwave::fit::{
    extrapolate_modulation, fit_in_space, fit_in_time_limit, fit_samples, residual_norm_series, FitOptions, Weighting,
};
use cubicwave::grid::{conformal_factor, Foliation, RadialGrid};
use cubicwave::hyperboloidal::{make_initial_from_solution, HyperboloidalSolver, InitialData, Run, SolverConfig};
use cubicwave::standard::{cone_difference, fit_origin_blowup, StandardConfig, StandardInitialData, StandardSolver};

type Res<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Collects named checks; the criterion passes when all of them do.
#[derive(Default)]
struct Checks {
    pass: bool,
    lines: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks { pass: true, lines: Vec::new() }
    }

    fn range(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        let ok = value >= lo && value <= hi;
        self.pass &= ok;
        self.lines.push(format!("{name} = {value:.6} in [{lo}, {hi}]{}", mark(ok)));
    }

    fn below(&mut self, name: &str, value: f64, limit: f64) {
        let ok = value.abs() < limit;
        self.pass &= ok;
        self.lines.push(format!("|{name}| = {value:.3e} < {limit:e}{}", mark(ok)));
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.pass &= ok;
        self.lines.push(format!("{name}{}", mark(ok)));
    }

    fn info(&mut self, text: String) {
        self.lines.push(text);
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        ""
    } else {
        "  <-- FAIL"
    }
}

fn evolve(config: SolverConfig, data: &InitialData) -> Res<Run> {
    Ok(HyperboloidalSolver::new(config)?.evolve_initial(data)?)
}

fn series(run: &Run, i: usize) -> Res<TimeSeries> {
    let (t, v) = run.regular_series_at(i);
    Ok(TimeSeries::new("phi", t, v)?)
}

fn mean_power_index(run: &Run, i: usize, t0: f64, t1: f64) -> Res<f64> {
    let p = local_power_index(&series(run, i)?.window(1.0, f64::INFINITY))?;
    Ok(p.window(t0, t1).finite().mean())
}

fn c1() -> Res<Checks> {
    let mut c = Checks::new();
    let three = |courant: f64, max_tau: f64| -> Res<TimeSeries> {
        let runs: Vec<Run> = [200, 400, 800]
            .iter()
            .map(|&n| {
                let cfg = SolverConfig { n_cells: n, courant, max_tau, sample_dt: 0.1, ..Default::default() };
                evolve(cfg, &InitialData::gaussian(2.0))
            })
            .collect::<Res<_>>()?;
        Ok(convergence_factor(&runs[0], &runs[1], &runs[2])?.finite())
    };
    let q = three(0.8, 60.0)?;
    let late = q.window(5.0, 60.0);
    let min = late.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = late.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    c.range("min Q on [5,60], Courant 0.8", min, 5.5, 6.5);
    c.range("max Q on [5,60], Courant 0.8", max, 5.5, 6.5);
    c.range("mean Q on (0,0.5], Courant 0.8", q.window(0.05, 0.5).mean(), 3.5, 4.5);
    let small = three(0.08, 1.0)?;
    c.range("mean Q on (0,0.5], Courant 0.08", small.window(0.05, 0.5).mean(), 5.5, 6.5);
    Ok(c)
}

fn c2() -> Res<Checks> {
    let mut c = Checks::new();
    let mut errors = Vec::new();
    for n in [200, 400, 800] {
        let cfg = SolverConfig { n_cells: n, max_tau: 20.0, sample_dt: 1.0, ..Default::default() };
        let run = evolve(cfg, &InitialData::Conformal { tau0: 0.0 })?;
        let rho = run.grid.rho();
        let e = run
            .regular_snapshots()
            .flat_map(|s| s.phi.iter().zip(rho).map(move |(v, r)| (v - conformal_solution_hyperboloidal(s.tau, *r)).abs()))
            .fold(0.0, f64::max);
        c.info(format!("n={n}: sup error {e:.3e}"));
        errors.push(e);
    }
    c.range("error ratio 200/400", errors[0] / errors[1], 51.2, 76.8);
    c.range("error ratio 400/800", errors[1] / errors[2], 51.2, 76.8);
    Ok(c)
}

fn c3() -> Res<Checks> {
    let mut c = Checks::new();
    let cfg = SolverConfig { max_tau: 200.0, sample_dt: 1.0, ..Default::default() };
    let run = evolve(cfg, &InitialData::gaussian(2.0))?;
    c.flag("run completed without blowup", !run.blowup.detected);
    c.range("mean p at origin on [100,200]", mean_power_index(&run, 0, 100.0, 200.0)?, -2.1, -1.9);
    c.range("mean p at scri on [100,200]", mean_power_index(&run, run.grid.last(), 100.0, 200.0)?, -1.1, -0.9);
    Ok(c)
}

fn c4() -> Res<Checks> {
    let mut c = Checks::new();
    let cfg = SolverConfig { max_tau: 20.0, ..Default::default() };
    let run = evolve(cfg, &InitialData::gaussian(4.0))?;
    c.flag("run blew up", run.blowup.detected);
    let window = (1e-7, 1e-4);
    let rate = blowup_rate(&run, 0, window)?;
    let s: Vec<f64> = run
        .snapshots
        .iter()
        .map(|x| rate.blowup_tau - x.tau)
        .filter(|s| *s >= window.0 && *s <= window.1)
        .collect();
    let decades = (s.iter().copied().fold(f64::MIN, f64::max) / s.iter().copied().fold(f64::MAX, f64::min)).log10();
    c.info(format!("T = {:.10}, {} samples", rate.blowup_tau, rate.fit.points));
    c.range("decades covered", decades, 2.95, f64::INFINITY);
    c.range("slope", rate.slope, -1.02, -0.98);
    c.range("amplitude", rate.amplitude.abs(), 0.98 * SQRT_2, 1.02 * SQRT_2);
    Ok(c)
}

fn damped(n: usize, max_tau: f64) -> SolverConfig {
    SolverConfig { n_cells: n, max_tau, sample_dt: 0.5, constraint_damping: 1.0, courant: 0.4, ..Default::default() }
}

fn c5() -> Res<Checks> {
    let mut c = Checks::new();
    let run = evolve(damped(800, 100.0), &InitialData::gaussian(2.0))?;
    let space = fit_in_space(&run, &FitOptions { tau_start: 5.0, weighting: Weighting::Absolute, ..Default::default() })?;
    let limit = extrapolate_modulation(&space, 20.0, 80.0)?;
    c.info(format!("optimal (a, b) = ({:.7}, {:.7})", limit.a, limit.b));
    let r = residual_norm_series(&run, &limit);
    c.range("weighted L2 residual slope on [10,100]", series_loglog_slope(&r.weighted_l2, 10.0, 100.0)?.slope, -4.2, -3.8);
    c.info(format!("plain L2 slope on [10,100] = {:.3}", series_loglog_slope(&r.l2, 10.0, 100.0)?.slope));
    c.range("delta_a exponent on [10,60]", convergence_exponent(&space.a, 10.0, 60.0)?.slope, -1.3, -0.7);
    c.range("delta_b exponent on [10,60]", convergence_exponent(&space.b, 10.0, 60.0)?.slope, -2.3, -1.7);
    Ok(c)
}

fn c6() -> Res<Checks> {
    let mut c = Checks::new();
    let run = evolve(damped(800, 110.0), &InitialData::Conformal { tau0: 0.0 })?;
    let starts: Vec<f64> = (3..=11).map(|k| 5.0 * k as f64).collect();
    let opts = FitOptions { weighting: Weighting::Relative, point_stride: 8, ..Default::default() };
    let (p, _) = fit_in_time_limit(&run, &starts, &opts)?;
    c.below("a + 1/sqrt 2", p.a + FRAC_1_SQRT_2, 1e-3);
    c.below("b - 1/sqrt 2", p.b - FRAC_1_SQRT_2, 1e-3);
    let opt = conformal_optimal_params();
    let t: f64 = 1e3;
    for y in [0.0, 0.3, 0.6] {
        let r = y * t;
        let d = t.powi(4) * (conformal_solution_standard(t, r) - attractor_standard(t, r, &opt));
        let want = conformal_attractor_difference_profile(y);
        c.below(&format!("relative profile error at y={y}"), (d - want) / want, 1e-2);
    }
    Ok(c)
}

fn c7() -> Res<Checks> {
    let mut c = Checks::new();
    let cfg = StandardConfig {
        n_cells: 800,
        r_max: 1.0,
        max_t: 1.0,
        blowup_threshold: 1e6,
        adapt_scale: 0.01,
        ..Default::default()
    };
    let solver = StandardSolver::new(cfg)?;
    let init = StandardInitialData::Gaussian { amplitude: 4.0, center: 0.0, width: 1.0 }.build(solver.r())?;
    let run = solver.evolve_lightcone(init)?;
    let t_b = run.blowup_time.ok_or("standard run did not blow up")?;
    c.info(format!("T = {t_b:.10}"));
    let window = (1e-3, 0.1);
    let fit = fit_origin_blowup(&run, t_b, window, window)?;
    c.flag("blowup inside the domain of dependence of the origin", run.is_valid(t_b, 0.0));
    let d = fit.difference.window(window.0, window.1);
    let decades = (d.times.iter().copied().fold(f64::MIN, f64::max) / d.times.iter().copied().fold(f64::MAX, f64::min)).log10();
    c.range("decades covered", decades, 1.95, f64::INFINITY);
    c.range("origin difference slope", fit.slope.slope, 1.9, 2.1);
    let cone = cone_difference(&run, &fit, window);
    c.info(format!("b = {:.5}, past-cone difference slope = {:.3}", fit.b, series_loglog_slope(&cone, window.0, window.1)?.slope));
    Ok(c)
}

fn c8() -> Res<Checks> {
    let mut c = Checks::new();
    let cfg = SolverConfig { max_tau: 200.0, constraint_damping: 1.0, ..Default::default() };
    let b = flip_search(&cfg, &BisectionConfig::relative(3.6, 3.7, 1e-10, 60))?;
    let a_f = b.estimate;
    c.info(format!(
        "A_f = {a_f:.10}, depth {}, indeterminate {}, stalled {}",
        b.depth, b.indeterminate, b.stalled
    ));
    c.flag("no monotonicity violations", b.monotonicity_violations == 0);
    let run = run_gaussian(&cfg, a_f)?;
    c.range("A_f: mean p at origin on [50,100]", mean_power_index(&run, 0, 50.0, 100.0)?, -3.15, -2.85);
    c.range("A_f: mean p at scri on [50,100]", mean_power_index(&run, run.grid.last(), 50.0, 100.0)?, -2.15, -1.85);
    for d in [0.01, -0.01] {
        let run = run_gaussian(&cfg, a_f + d)?;
        c.range(&format!("A_f{d:+}: mean p at origin on [100,200]"), mean_power_index(&run, 0, 100.0, 200.0)?, -2.15, -1.85);
        c.range(
            &format!("A_f{d:+}: mean p at scri on [100,200]"),
            mean_power_index(&run, run.grid.last(), 100.0, 200.0)?,
            -1.15,
            -0.85,
        );
    }
    Ok(c)
}

fn c9() -> Res<Checks> {
    let mut c = Checks::new();
    let cfg = SolverConfig { max_tau: 80.0, constraint_damping: 1.0, ..Default::default() };
    let b = critical_search(&cfg, &BisectionConfig::relative(3.70, 3.78, 1e-10, 80))?;
    let a_c = b.estimate;
    c.info(format!("A_c = {a_c:.12}, indeterminate {}", b.indeterminate));
    c.range("bisection depth", b.depth as f64, 30.0, f64::INFINITY);
    let run = run_gaussian(&cfg, a_c)?;
    let hold = critical_criterion(&run)?.deviation.window(5.0, 80.0);
    let max = hold.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    c.flag("A_c run completes", !run.blowup.detected && hold.times.last().copied() == Some(80.0));
    c.below("max ||Phi_scri| - sqrt 2| on [5,80] at A_c", max, 0.05);
    let mut ends = Vec::new();
    for d in [1e-6, -1e-6] {
        let run = run_gaussian(&cfg, a_c + d)?;
        let dev = critical_criterion(&run)?.deviation.window(40.0, 80.0);
        let end = *dev.values.last().ok_or("empty deviation")?;
        let line = linear_fit(&dev.times, &dev.values)?;
        let rms = (dev.iter().map(|(t, v)| (v - line.intercept - line.slope * t).powi(2)).sum::<f64>() / dev.len() as f64).sqrt();
        c.info(format!("A_c{d:+e}: deviation {end:.4} at tau=80, slope {:.3e} on [40,80]", line.slope));
        c.below(&format!("A_c{d:+e}: rms off the line / final deviation"), rms / end.abs(), 0.05);
        c.range(&format!("A_c{d:+e}: |deviation| at tau=80 over max at A_c"), end.abs() / max, 10.0, f64::INFINITY);
        ends.push(end);
    }
    c.flag("deviations of opposite sign (+ above, - below)", ends[0] > 0.0 && ends[1] < 0.0);
    Ok(c)
}

fn c10() -> Res<Checks> {
    let mut c = Checks::new();
    let cfg = SolverConfig { max_tau: 20.0, constraint_damping: 1.0, sample_dt: 0.05, ..Default::default() };
    let b = simultaneous_blowup_search(&cfg, &BisectionConfig { lo: 3.74, hi: 3.75, tol: 1e-12, max_iter: 80 }, 0.0)?;
    let run = run_gaussian(&cfg, b.estimate)?;
    let t = run.blowup.tau_estimate;
    let d = divergence_times(&run, 8)?;
    c.info(format!("A_s = {:.12}, depth {}, T = {t:.6}", b.estimate, b.depth));
    c.below("divergence-time spread / T", d.spread / t, 0.05);
    let p = predict_null_infinity_blowup(&run, 0.8 * t, 0.98 * t, 1.0)?;
    c.below("fitted b + 1/2", p.params.b + 0.5, 0.05);

    let cfg = SolverConfig { n_cells: 800, max_tau: 20.0, sample_dt: 0.05, ..Default::default() };
    let run = evolve(cfg, &InitialData::Attractor { a: -0.5, b: -0.5, kappa: 1.0, tau0: 0.0 })?;
    let d = divergence_times(&run, 8)?;
    c.info(format!("seeded b = -1/2: T = {:.8} (exact 1.5)", run.blowup.tau_estimate));
    c.below("seeded b = -1/2: spread", d.spread, 1e-2);
    Ok(c)
}

fn c11() -> Res<Checks> {
    let mut c = Checks::new();
    let seeded = InitialData::Attractor { a: 0.0, b: -0.02, kappa: 1.0, tau0: 0.0 };
    let mut times = Vec::new();
    let mut prediction = None;
    for n in [200, 400] {
        let cfg = SolverConfig { n_cells: n, max_tau: 40.0, sample_dt: 0.05, ..Default::default() };
        let run = evolve(cfg, &seeded)?;
        c.flag(&format!("n={n}: blows up at null infinity"), run.blowup.detected && run.blowup.location_rho > 0.5);
        times.push(run.blowup.tau_estimate);
        if n == 400 {
            let p = predict_null_infinity_blowup(&run, 2.0, 12.0, 0.5)?;
            c.info(format!("prefix fit on [2,12], rho <= 1/2: a = {:.5}, b = {:.6}", p.params.a, p.params.b));
            c.flag("prefix fit predicts blowup at null infinity", p.location == BlowupLocation::NullInfinity);
            let late = 0.9 * run.blowup.tau_estimate;
            let at = |tau: f64, i: usize| {
                run.regular_snapshots()
                    .min_by(|x, y| (x.tau - tau).abs().total_cmp(&(y.tau - tau).abs()))
                    .map_or(f64::NAN, |s| s.phi[i])
            };
            let last = run.grid.last();
            c.flag("origin decays on [2, 0.9 T]", at(late, 0) < 0.5 * at(2.0, 0));
            c.flag("null infinity grows on [2, 0.9 T]", at(late, last) > 2.0 * at(2.0, last));
            prediction = Some(p.tau);
        }
    }
    let predicted = prediction.ok_or("no prediction")?;
    let richardson = 2.0 * times[1] - times[0];
    c.info(format!("T(200) = {:.4}, T(400) = {:.4}", times[0], times[1]));
    c.below("(Richardson T - predicted) / predicted", (richardson - predicted) / predicted, 1e-2);

    let cfg = SolverConfig { max_tau: 60.0, constraint_damping: 1.0, sample_dt: 0.05, ..Default::default() };
    let run = run_gaussian(&cfg, 3.7395)?;
    let p = predict_null_infinity_blowup(&run, 5.0, 15.0, 0.5)?;
    c.info(format!(
        "Gaussian A=3.7395: fitted b = {:.5}, predicted T = {:.3}, measured T = {:.3} at rho = {:.2}",
        p.params.b, p.tau, run.blowup.tau_estimate, run.blowup.location_rho
    ));
    c.flag(
        "Gaussian A=3.7395: predicted null-infinity blowup happens there",
        p.location == BlowupLocation::NullInfinity && run.blowup.detected && run.blowup.location_rho > 0.5,
    );
    c.below("Gaussian A=3.7395: relative error of predicted T", (p.tau - run.blowup.tau_estimate) / run.blowup.tau_estimate, 0.05);
    Ok(c)
}

fn c12() -> Res<Checks> {
    let mut c = Checks::new();
    let fol = Foliation::default();
    let members = [
        AttractorParams::positive(0.3, 0.1),
        AttractorParams::new(-1.0, 0.02, Sign::Minus),
        AttractorParams::positive(2.0, -0.01),
    ];

    // charts
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let rho = 0.995 * i as f64 / 199.0;
        for tau in [0.0, 0.5, 3.0, 40.0] {
            let (t, r) = fol.to_standard(tau, rho)?;
            let (tau2, rho2) = fol.to_hyperboloidal(t, r)?;
            worst = worst.max((tau2 - tau).abs() / (1.0 + tau.abs())).max((rho2 - rho).abs());
            let om = conformal_factor(rho)?;
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
            worst = worst.max(rel(om * conformal_solution_hyperboloidal(tau, rho), conformal_solution_standard(t, r)));
            for p in &members {
                worst = worst.max(rel(om * attractor_hyperboloidal(tau, rho, p), attractor_standard(t, r, p)));
            }
        }
    }
    c.below("cross-chart mismatch", worst, 1e-12);

    // conformal inversion is an involution
    let f = |t: f64, r: f64| attractor_standard(t, r, &members[0]);
    let twice = conformal_inversion(conformal_inversion(f));
    let mut worst: f64 = 0.0;
    for &(t, r) in &[(2.0, 0.5), (5.0, 1.0), (9.0, 8.0), (-3.0, 0.2), (30.0, 4.0)] {
        worst = worst.max(((twice(t, r) - f(t, r)) / f(t, r)).abs());
    }
    c.below("inversion twice vs identity", worst, 1e-12);

    // the semi-discrete operator reproduces the time derivative of exact
    // data to 6th order
    let p = members[0];
    let (e1, e2) = (rhs_error(&p, 1.0, 50)?, rhs_error(&p, 1.0, 100)?);
    c.info(format!("attractor residual of the discrete operator: {e1:.2e} (n=50), {e2:.2e} (n=100)"));
    c.range("observed residual order", (e1 / e2).log2(), 5.5, 7.5);
    let (e1, e2) = (rhs_error(&ConformalSolution, 0.5, 50)?, rhs_error(&ConformalSolution, 0.5, 100)?);
    c.info(format!("conformal residual of the discrete operator: {e1:.2e} (n=50), {e2:.2e} (n=100)"));
    c.range("observed residual order", (e1 / e2).log2(), 5.5, 7.5);

    // fit equivariances on exact samples
    let truth = AttractorParams::positive(0.3, 0.2);
    let sample = |p: &AttractorParams, shift: f64, sign: f64| -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for k in 0..=15 {
            let tau = 5.0 + k as f64;
            for j in 0..=20 {
                let rho = j as f64 / 20.0;
                out.push((tau, rho, sign * p.phi(tau + shift, rho)));
            }
        }
        out
    };
    let opts = FitOptions { tau_start: 0.0, ..Default::default() };
    let guess = AttractorParams::positive(0.0, 0.1);
    let base = fit_samples(&sample(&truth, 0.0, 1.0), guess, &opts)?;
    c.below("fit recovers a", base.params[0] - truth.a, 1e-8);
    c.below("fit recovers b", base.params[1] - truth.b, 1e-8);
    let shifted = fit_samples(&sample(&truth, 0.7, 1.0), guess, &opts)?;
    c.below("time shift by 0.7 moves a by 0.7", shifted.params[0] - (truth.a + 0.7), 1e-8);
    let flipped = fit_samples(&sample(&truth, 0.0, -1.0), AttractorParams::new(0.0, 0.1, Sign::Minus), &opts)?;
    c.below("reflection keeps (a, b)", (flipped.params[0] - truth.a).abs() + (flipped.params[1] - truth.b).abs(), 1e-8);
    let pred = predict_from_params(&AttractorParams::positive(0.0, -0.02));
    c.flag("b = -0.02 member blows up first at null infinity at tau = 25", pred.location == BlowupLocation::NullInfinity && (pred.tau - 25.0).abs() < 1e-12);

    // bisection on synthetic classifiers
    let x0 = std::f64::consts::PI / 4.0;
    let sharp = bisect(&BisectionConfig { lo: 0.0, hi: 1.0, tol: 1e-12, max_iter: 100 }, |x| {
        Ok(if x < x0 { Side::Low } else { Side::High })
    })?;
    c.flag("sharp classifier: bracket holds the threshold", sharp.lo <= x0 && x0 <= sharp.hi && sharp.hi - sharp.lo <= 1e-12);
    let fuzzy = bisect(&BisectionConfig { lo: 0.0, hi: 1.0, tol: 1e-12, max_iter: 100 }, |x| {
        Ok(if (x - x0).abs() < 1e-4 {
            Side::Indeterminate
        } else if x < x0 {
            Side::Low
        } else {
            Side::High
        })
    })?;
    c.flag(
        "fuzzy classifier: bracket holds the threshold, no violations",
        fuzzy.lo <= x0 && x0 <= fuzzy.hi && fuzzy.monotonicity_violations == 0,
    );
    Ok(c)
}

/// Max difference between the discrete `d(psi, pi)/dtau` and a 4th-order
/// central difference in `tau` of the exact fields (step 1e-3, error far
/// below the spatial one).
fn rhs_error(solution: &dyn HyperboloidalSolution, tau: f64, n: usize) -> Res<f64> {
    let grid = RadialGrid::new(n)?;
    let solver = HyperboloidalSolver::new(SolverConfig { n_cells: n, dissipation: 0.0, ..Default::default() })?;
    let d = solver.rhs(&make_initial_from_solution(solution, tau, &grid)?);
    let e = 1e-3;
    let at = |k: f64| make_initial_from_solution(solution, tau + k * e, &grid);
    let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
    let dt = |f: fn(&cubicwave::FieldState) -> &Vec<f64>, i: usize| {
        (f(&m2)[i] - 8.0 * f(&m1)[i] + 8.0 * f(&p1)[i] - f(&p2)[i]) / (12.0 * e)
    };
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        worst = worst.max((d.psi[i] - dt(|s| &s.psi, i)).abs()).max((d.pi[i] - dt(|s| &s.pi, i)).abs());
    }
    Ok(worst)
}

type Criterion = (usize, &'static str, fn() -> Res<Checks>);

const CRITERIA: [Criterion; 12] = [
    (1, "sixth-order self-convergence", c1),
    (2, "convergence to the conformal solution", c2),
    (3, "subcritical decay rates", c3),
    (4, "blowup rate at the origin", c4),
    (5, "t^-4 approach to the attractor and modulation rates", c5),
    (6, "optimal parameters of the conformal solution", c6),
    (7, "(T-t)^2 approach to the attractor at origin blowup", c7),
    (8, "flip solution decay rates", c8),
    (9, "critical solution at null infinity", c9),
    (10, "simultaneous blowup", c10),
    (11, "null-infinity blowup prediction", c11),
    (12, "closed-form and synthetic property checks", c12),
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut selected: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    if selected.is_empty() {
        if !args.is_empty() {
            println!("acceptance: skipped (filter {args:?})");
            return;
        }
        selected = (1..=12).collect();
    }
    let todo: Vec<&Criterion> = CRITERIA.iter().filter(|c| selected.contains(&c.0)).collect();
    let results: Vec<(bool, String)> = std::thread::scope(|s| {
        let handles: Vec<_> = todo
            .iter()
            .map(|&&(n, title, f)| {
                s.spawn(move || {
                    let start = Instant::now();
                    let (pass, body) = match f() {
                        Ok(c) => (c.pass, c.lines.iter().map(|l| format!("    {l}\n")).collect::<String>()),
                        Err(e) => (false, format!("    error: {e}\n")),
                    };
                    let verdict = if pass { "PASS" } else { "FAIL" };
                    let text = format!("criterion {n}: {verdict} {title} ({:.1}s)\n{body}", start.elapsed().as_secs_f64());
                    eprint!("{text}");
                    (pass, text)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or((false, "panicked\n".into()))).collect()
    });
    println!("\nacceptance summary:");
    for (_, text) in &results {
        print!("{text}");
    }
    let failed = results.iter().filter(|r| !r.0).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
