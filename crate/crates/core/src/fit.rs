//! Fitting evolution data to the attractor family: per-point fits in time,
//! per-slice fits in space (modulation), residual norms and the sign `kappa`.

use rayon::prelude::*;

use crate::analytic::{AttractorParams, Sign};
use crate::diagnostics::{l2_norm, linear_fit, TimeSeries};
use crate::error::{Error, Result};
use crate::hyperboloidal::Run;

/// How residuals are weighted in the least-squares cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Absolute,
    /// Residuals divided by `|data|`; equalizes decades in time fits.
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub tau_start: f64,
    pub tau_end: f64,
    /// Samples where the model denominator falls below this are skipped.
    pub min_denominator: f64,
    pub weighting: Weighting,
    pub max_iterations: usize,
    /// Fixes the sign instead of reading it off the run.
    pub kappa: Option<Sign>,
    /// Fit every `point_stride`-th grid point (time fit only).
    pub point_stride: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tau_start: 5.0,
            tau_end: f64::INFINITY,
            min_denominator: 0.1,
            weighting: Weighting::Relative,
            max_iterations: 200,
            kappa: None,
            point_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOutcome {
    pub params: [f64; 2],
    /// Sum of squared weighted residuals.
    pub cost: f64,
    pub points: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg-Marquardt for two parameters. `model(p, out)` fills `out` with
/// `(residual, d residual/dp0, d residual/dp1)` and returns false when `p`
/// is inadmissible.
pub fn levenberg_marquardt(
    init: [f64; 2],
    max_iterations: usize,
    mut model: impl FnMut(&[f64; 2], &mut Vec<(f64, f64, f64)>) -> bool,
) -> Result<LmOutcome> {
    let mut rows = Vec::new();
    let cost_of = |rows: &[(f64, f64, f64)]| rows.iter().map(|r| r.0 * r.0).sum::<f64>();
    if !model(&init, &mut rows) || rows.len() < 2 {
        return Err(Error::Fit("initial guess is inadmissible".into()));
    }
    let mut p = init;
    let mut cost = cost_of(&rows);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = Vec::new();
    while iterations < max_iterations {
        iterations += 1;
        let (mut a00, mut a01, mut a11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(r, j0, j1) in &rows {
            a00 += j0 * j0;
            a01 += j0 * j1;
            a11 += j1 * j1;
            g0 += j0 * r;
            g1 += j1 * r;
        }
        if g0 == 0.0 && g1 == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let m00 = a00 * (1.0 + lambda);
            let m11 = a11 * (1.0 + lambda);
            let det = m00 * m11 - a01 * a01;
            if !(det.abs() > 0.0) || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let d0 = -(m11 * g0 - a01 * g1) / det;
            let d1 = -(m00 * g1 - a01 * g0) / det;
            let q = [p[0] + d0, p[1] + d1];
            if model(&q, &mut trial) && trial.len() >= 2 {
                let c = cost_of(&trial);
                if c.is_finite() && c <= cost {
                    let small_step = d0.abs() <= 1e-13 * (1.0 + p[0].abs())
                        && d1.abs() <= 1e-13 * (1.0 + p[1].abs());
                    let small_gain = cost - c <= 1e-15 * cost;
                    p = q;
                    std::mem::swap(&mut rows, &mut trial);
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if small_step || small_gain {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left: at a (possibly flat) minimum
            converged = cost.is_finite();
            break;
        }
        if converged {
            break;
        }
    }
    Ok(LmOutcome {
        params: p,
        cost,
        points: rows.len(),
        iterations,
        converged,
    })
}

/// Fits `Phi_(a,b)` to samples `(tau, rho, value)`.
pub fn fit_samples(
    samples: &[(f64, f64, f64)],
    guess: AttractorParams,
    opts: &FitOptions,
) -> Result<LmOutcome> {
    let kappa = guess.kappa;
    let weights: Vec<f64> = samples
        .iter()
        .map(|s| match opts.weighting {
            Weighting::Absolute => 1.0,
            Weighting::Relative => 1.0 / s.2.abs().max(1e-300),
        })
        .collect();
    let min_den = opts.min_denominator;
    levenberg_marquardt([guess.a, guess.b], opts.max_iterations, |p, out| {
        out.clear();
        let params = AttractorParams::new(p[0], p[1], kappa);
        if !params.is_finite() {
            return false;
        }
        for (s, w) in samples.iter().zip(&weights) {
            if params.denominator(s.0, s.1).abs() < min_den {
                continue;
            }
            let (f, da, db) = params.value_and_gradient(s.0, s.1);
            out.push((w * (f - s.2), w * da, w * db));
        }
        true
    })
}

/// Per-point (time fit) or per-slice (space fit) parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFit {
    /// `rho` for a time fit, `tau` for a space fit.
    pub coordinate: f64,
    pub a: f64,
    pub b: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: AttractorParams,
    pub per_point: Vec<PointFit>,
    /// Standard deviations of the per-point `a` and `b`.
    pub dispersion_a: f64,
    pub dispersion_b: f64,
    pub excluded: usize,
    /// More than 20% of the points failed.
    pub unreliable: bool,
    pub residual_series: TimeSeries,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Sign of the late-time field at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaEstimate {
    pub sign: Sign,
    pub mean: f64,
    /// The sign changes within the window, or the mean is small against
    /// the mean magnitude.
    pub ambiguous: bool,
}

/// Sign of `Phi(tau, 0)` averaged over the last decade of samples.
pub fn determine_kappa(run: &Run) -> Result<KappaEstimate> {
    let (t, v) = run.regular_series_at(0);
    let last = *t.last().ok_or_else(|| Error::InsufficientData("empty run".into()))?;
    let from = if last > 0.0 { last / 10.0 } else { last - 1.0 };
    let window: Vec<f64> = t
        .iter()
        .zip(&v)
        .filter(|(x, _)| **x >= from)
        .map(|(_, y)| *y)
        .collect();
    if window.len() < 2 {
        return Err(Error::InsufficientData("too few late-time samples".into()));
    }
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let mean_abs = window.iter().map(|x| x.abs()).sum::<f64>() / window.len() as f64;
    let changes = window.windows(2).any(|w| w[0].signum() != w[1].signum());
    Ok(KappaEstimate {
        sign: Sign::of(mean),
        mean,
        ambiguous: changes || mean.abs() < 0.5 * mean_abs || !mean.is_finite(),
    })
}

/// Seed guesses from the null-infinity series, where the model is
/// `kappa sqrt 2 / (2 b (tau + a) + 1)`, and from the origin series.
pub fn seed_guesses(run: &Run, kappa: Sign, opts: &FitOptions) -> Vec<AttractorParams> {
    let window = |i: usize| -> (Vec<f64>, Vec<f64>) {
        run.regular_snapshots()
            .filter(|s| s.tau >= opts.tau_start && s.tau <= opts.tau_end)
            .map(|s| (s.tau, s.phi[i]))
            .unzip()
    };
    let k = kappa.value();
    let mut seeds = Vec::new();
    let (t, v) = window(run.grid.last());
    let y: Vec<f64> = v.iter().map(|x| k * std::f64::consts::SQRT_2 / x).collect();
    let b = linear_fit(&t, &y).ok().map(|f| {
        let b = f.slope / 2.0;
        if b.abs() > 1e-3 {
            seeds.push(AttractorParams::new((f.intercept - 1.0) / (2.0 * b), b, kappa));
        }
        b
    });
    // origin: 2 sqrt 2 kappa / Phi = x (b x + 1), x = tau + a + 1
    let (t0, v0) = window(0);
    if let (Some(b), Some(&tm), Some(&phim)) = (b, t0.get(t0.len() / 2), v0.get(v0.len() / 2)) {
        let c = k * 2.0 * std::f64::consts::SQRT_2 / phim;
        let x = if b.abs() < 1e-12 {
            c
        } else {
            let disc = 1.0 + 4.0 * b * c;
            if disc >= 0.0 {
                (-1.0 + disc.sqrt()) / (2.0 * b)
            } else {
                -0.5 / b
            }
        };
        seeds.push(AttractorParams::new(x - 1.0 - tm, b, kappa));
    }
    seeds.retain(|p| p.is_finite());
    if seeds.is_empty() {
        seeds.push(AttractorParams::new(0.0, 0.1, kappa));
    }
    seeds
}

fn best_fit(samples: &[(f64, f64, f64)], seeds: &[AttractorParams], opts: &FitOptions) -> Option<LmOutcome> {
    seeds
        .iter()
        .filter_map(|s| fit_samples(samples, *s, opts).ok())
        .filter(|o| o.converged && o.params.iter().all(|x| x.is_finite()))
        .min_by(|x, y| x.cost.total_cmp(&y.cost))
}

fn kappa_for(run: &Run, opts: &FitOptions) -> Result<Sign> {
    match opts.kappa {
        Some(k) => Ok(k),
        None => Ok(determine_kappa(run)?.sign),
    }
}

fn assemble(run: &Run, per_point: Vec<PointFit>, attempted: usize, kappa: Sign, params: Option<(f64, f64)>) -> Result<FitResult> {
    if per_point.is_empty() {
        return Err(Error::Fit("no point converged".into()));
    }
    let (ma, sa) = mean_std(per_point.iter().map(|p| p.a));
    let (mb, sb) = mean_std(per_point.iter().map(|p| p.b));
    let (a, b) = params.unwrap_or((ma, mb));
    let params = AttractorParams::new(a, b, kappa);
    let excluded = attempted - per_point.len();
    Ok(FitResult {
        params,
        per_point,
        dispersion_a: sa,
        dispersion_b: sb,
        excluded,
        unreliable: excluded * 5 > attempted,
        residual_series: residual_norm_series(run, &params).l2,
    })
}

/// Fits each grid point's time series on `[tau_start, tau_end]`; the
/// parameters are the averages over all points.
pub fn fit_in_time(run: &Run, opts: &FitOptions) -> Result<FitResult> {
    let kappa = kappa_for(run, opts)?;
    let snaps: Vec<_> = run
        .regular_snapshots()
        .filter(|s| s.tau >= opts.tau_start && s.tau <= opts.tau_end)
        .collect();
    if snaps.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples in the time-fit window",
            snaps.len()
        )));
    }
    let seeds = seed_guesses(run, kappa, opts);
    let points: Vec<usize> = (0..run.grid.len()).step_by(opts.point_stride.max(1)).collect();
    let rho = run.grid.rho();
    let per_point: Vec<PointFit> = points
        .par_iter()
        .filter_map(|&i| {
            let samples: Vec<(f64, f64, f64)> = snaps.iter().map(|s| (s.tau, rho[i], s.phi[i])).collect();
            let o = best_fit(&samples, &seeds, opts)?;
            Some(PointFit {
                coordinate: rho[i],
                a: o.params[0],
                b: o.params[1],
                rms: (o.cost / o.points as f64).sqrt(),
            })
        })
        .collect();
    assemble(run, per_point, points.len(), kappa, None)
}

/// Time fits on `[ts, 2 ts]` and `[2 ts, 4 ts]` combined as `2 p(2 ts) - p(ts)`,
/// which removes the leading `1/ts` bias of a finite window.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolatedFit {
    pub params: AttractorParams,
    pub early: FitResult,
    pub late: FitResult,
}

pub fn fit_in_time_extrapolated(run: &Run, tau_start: f64, opts: &FitOptions) -> Result<ExtrapolatedFit> {
    let window = |t0: f64| FitOptions {
        tau_start: t0,
        tau_end: 2.0 * t0,
        ..opts.clone()
    };
    let last = run.regular_snapshots().last().map_or(0.0, |s| s.tau);
    if last < 4.0 * tau_start * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(format!(
            "extrapolated fit needs data to tau = {}, run ends at {last}",
            4.0 * tau_start
        )));
    }
    let early = fit_in_time(run, &window(tau_start))?;
    let late = fit_in_time(run, &window(2.0 * tau_start))?;
    let params = AttractorParams::new(
        2.0 * late.params.a - early.params.a,
        2.0 * late.params.b - early.params.b,
        late.params.kappa,
    );
    Ok(ExtrapolatedFit { params, early, late })
}

/// Time fits on `[s, 2 s]` for each start in `starts`, with `a(s)` and
/// `b(s)` extrapolated to `s -> inf` like [`extrapolate_modulation`]. Needs
/// at least six starts.
pub fn fit_in_time_limit(run: &Run, starts: &[f64], opts: &FitOptions) -> Result<(AttractorParams, Vec<FitResult>)> {
    let last = run.regular_snapshots().last().map_or(0.0, |s| s.tau);
    let mut fits = Vec::with_capacity(starts.len());
    for &s in starts {
        if last < 2.0 * s * (1.0 - 1e-12) {
            return Err(Error::InsufficientData(format!("window [{s}, {}] ends after the run ({last})", 2.0 * s)));
        }
        fits.push(fit_in_time(run, &FitOptions { tau_start: s, tau_end: 2.0 * s, ..opts.clone() })?);
    }
    let series = |f: &dyn Fn(&FitResult) -> f64| TimeSeries::new("p", starts.to_vec(), fits.iter().map(f).collect());
    let a = inverse_power_limit(&series(&|r| r.params.a)?)?;
    let b = inverse_power_limit(&series(&|r| r.params.b)?)?;
    let kappa = fits.last().map_or(Sign::Plus, |r| r.params.kappa);
    Ok((AttractorParams::new(a, b, kappa), fits))
}

/// Per-slice fits and the resulting modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceFit {
    /// `params` are those of the last slice.
    pub result: FitResult,
    pub a: TimeSeries,
    pub b: TimeSeries,
    /// `|a(tau) - a_final| / |a_final|`.
    pub delta_a: TimeSeries,
    pub delta_b: TimeSeries,
}

/// Fits each sampled slice in `rho`, seeding each fit with the previous one.
pub fn fit_in_space(run: &Run, opts: &FitOptions) -> Result<SpaceFit> {
    let kappa = kappa_for(run, opts)?;
    let snaps: Vec<_> = run
        .regular_snapshots()
        .filter(|s| s.tau >= opts.tau_start && s.tau <= opts.tau_end)
        .collect();
    if snaps.is_empty() {
        return Err(Error::InsufficientData("no slices in the space-fit window".into()));
    }
    let rho = run.grid.rho();
    let mut seeds = seed_guesses(run, kappa, opts);
    let mut per_point = Vec::with_capacity(snaps.len());
    for s in &snaps {
        let samples: Vec<(f64, f64, f64)> = rho.iter().zip(&s.phi).map(|(r, v)| (s.tau, *r, *v)).collect();
        if let Some(o) = best_fit(&samples, &seeds, opts) {
            let p = AttractorParams::new(o.params[0], o.params[1], kappa);
            per_point.push(PointFit {
                coordinate: s.tau,
                a: p.a,
                b: p.b,
                rms: (o.cost / o.points as f64).sqrt(),
            });
            seeds = vec![p];
        }
    }
    let last = *per_point.last().ok_or_else(|| Error::Fit("no slice converged".into()))?;
    let result = assemble(run, per_point, snaps.len(), kappa, Some((last.a, last.b)))?;
    let times: Vec<f64> = result.per_point.iter().map(|p| p.coordinate).collect();
    let series = |label: &str, f: &dyn Fn(&PointFit) -> f64| {
        TimeSeries::new(label, times.clone(), result.per_point.iter().map(f).collect())
    };
    Ok(SpaceFit {
        a: series("a", &|p| p.a)?,
        b: series("b", &|p| p.b)?,
        delta_a: series("delta_a", &|p| ((p.a - last.a) / last.a).abs())?,
        delta_b: series("delta_b", &|p| ((p.b - last.b) / last.b).abs())?,
        result,
    })
}

/// Late-time limit of a space fit: `a(tau)` and `b(tau)` on `[t0, t1]` are
/// least-squares fitted by `c0 + c1/tau + c2/tau^2` and `c0` is returned.
/// Slice fits converge only like `1/tau`, which is far too slow for the
/// enhanced residual rates, so this is the preferred estimate of the
/// optimal parameters.
pub fn extrapolate_modulation(space: &SpaceFit, t0: f64, t1: f64) -> Result<AttractorParams> {
    let a = inverse_power_limit(&space.a.window(t0, t1))?;
    let b = inverse_power_limit(&space.b.window(t0, t1))?;
    Ok(AttractorParams::new(a, b, space.result.params.kappa))
}

fn inverse_power_limit(series: &TimeSeries) -> Result<f64> {
    if series.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "{} slices in the extrapolation window",
            series.len()
        )));
    }
    // normal equations in x = t_min / tau keep the matrix well scaled
    let t_min = series.times[0];
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for (t, v) in series.iter() {
        let x = t_min / t;
        let basis = [1.0, x, x * x];
        for i in 0..3 {
            r[i] += basis[i] * v;
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
        }
    }
    solve3(m, r).map(|c| c[0]).ok_or_else(|| Error::Fit("singular extrapolation system".into()))
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let tail: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - tail) / m[i][i];
    }
    Some(x)
}

/// Norms of `Phi - Phi_(a,b)` per regular sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    /// L2 norm of the rescaled difference over `rho in [0, 1]`.
    pub l2: TimeSeries,
    /// L2 norm of `Omega (Phi - Phi_(a,b))`, i.e. of the physical field
    /// difference on the leaf.
    pub weighted_l2: TimeSeries,
    /// The difference has one strict sign on the whole grid.
    pub strict_sign: Vec<bool>,
}

pub fn residual_norm_series(run: &Run, params: &AttractorParams) -> Residuals {
    let rho = run.grid.rho();
    let omega: Vec<f64> = rho.iter().map(|r| 0.5 * (1.0 - r * r)).collect();
    let mut t = Vec::new();
    let mut l2 = Vec::new();
    let mut wl2 = Vec::new();
    let mut strict = Vec::new();
    for s in run.regular_snapshots() {
        let d: Vec<f64> = s.phi.iter().zip(rho).map(|(v, r)| v - params.phi(s.tau, *r)).collect();
        let w: Vec<f64> = d.iter().zip(&omega).map(|(x, o)| x * o).collect();
        t.push(s.tau);
        l2.push(l2_norm(&d, &run.grid));
        wl2.push(l2_norm(&w, &run.grid));
        strict.push(d.iter().all(|x| *x > 0.0) || d.iter().all(|x| *x < 0.0));
    }
    Residuals {
        l2: TimeSeries { label: "residual_l2".into(), times: t.clone(), values: l2 },
        weighted_l2: TimeSeries { label: "residual_weighted_l2".into(), times: t, values: wl2 },
        strict_sign: strict,
    }
}
