//! Threshold searches on one-parameter families of initial data, and the
//! blowup-location prediction from an early attractor fit.

use std::f64::consts::SQRT_2;

use crate::analytic::{AttractorParams, Sign};
use crate::diagnostics::{linear_fit, TimeSeries};
use crate::error::{Error, Result};
use crate::fit::{determine_kappa, fit_in_time, fit_samples, seed_guesses, FitOptions};
use crate::hyperboloidal::{blowup_time_from_reciprocal, sup_abs, HyperboloidalSolver, InitialData, Run, SolverConfig};

/// Outcome of a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    pub lo: f64,
    pub hi: f64,
    /// Stop once `hi - lo <= tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl BisectionConfig {
    /// Tolerance `rel_tol * (hi - lo)`.
    pub fn relative(lo: f64, hi: f64, rel_tol: f64, max_iter: usize) -> Self {
        BisectionConfig {
            lo,
            hi,
            tol: rel_tol * (hi - lo).abs(),
            max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionStep {
    pub amplitude: f64,
    pub side: Side,
    /// Bracket after this evaluation.
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    /// Midpoint of the final bracket.
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// Every classifier evaluation, including the two bracket checks.
    pub history: Vec<BisectionStep>,
    /// Number of halvings of the bracket.
    pub depth: usize,
    pub indeterminate: usize,
    /// Classifier could not be resolved even after probing.
    pub stalled: bool,
    /// Pairs in the history where a larger amplitude classified LOW than a
    /// smaller one classified HIGH.
    pub monotonicity_violations: usize,
}

/// Bisection on `classify`. An indeterminate midpoint `m` is handled by
/// probing the quarter points: the bracket then shrinks to whatever part
/// still must contain the transition, never excluding it.
pub fn bisect(cfg: &BisectionConfig, mut classify: impl FnMut(f64) -> Result<Side>) -> Result<Bisection> {
    let (mut lo, mut hi) = (cfg.lo, cfg.hi);
    if !(lo < hi) || !(cfg.tol > 0.0) {
        return Err(Error::Bracket(format!("need lo < hi and tol > 0, got [{lo}, {hi}], tol {}", cfg.tol)));
    }
    let mut history = Vec::new();
    for (a, want) in [(lo, Side::Low), (hi, Side::High)] {
        let got = classify(a)?;
        history.push(BisectionStep { amplitude: a, side: got, lo, hi });
        if got != want {
            return Err(Error::Bracket(format!("classifier({a}) = {got:?}, expected {want:?}")));
        }
    }
    let mut depth = 0;
    let mut indeterminate = 0;
    let mut stalled = false;
    let mut iter = 0;
    while hi - lo > cfg.tol && iter < cfg.max_iter {
        iter += 1;
        let m = 0.5 * (lo + hi);
        let side = classify(m)?;
        match side {
            Side::Low => lo = m,
            Side::High => hi = m,
            Side::Indeterminate => {
                indeterminate += 1;
                history.push(BisectionStep { amplitude: m, side, lo, hi });
                let (ql, qh) = (0.5 * (lo + m), 0.5 * (m + hi));
                let (sl, sh) = (classify(ql)?, classify(qh)?);
                history.push(BisectionStep { amplitude: ql, side: sl, lo, hi });
                history.push(BisectionStep { amplitude: qh, side: sh, lo, hi });
                match (sl, sh) {
                    (Side::High, _) => hi = ql,
                    (_, Side::Low) => lo = qh,
                    (Side::Low, Side::High) => {
                        lo = ql;
                        hi = qh;
                    }
                    (Side::Low, Side::Indeterminate) => lo = ql,
                    (Side::Indeterminate, Side::High) => hi = qh,
                    (Side::Indeterminate, Side::Indeterminate) => {
                        stalled = true;
                        break;
                    }
                }
                depth += 1;
                continue;
            }
        }
        depth += 1;
        history.push(BisectionStep { amplitude: m, side, lo, hi });
    }
    let monotonicity_violations = count_violations(&history);
    Ok(Bisection {
        estimate: 0.5 * (lo + hi),
        lo,
        hi,
        history,
        depth,
        indeterminate,
        stalled,
        monotonicity_violations,
    })
}

fn count_violations(history: &[BisectionStep]) -> usize {
    let mut v = 0;
    for x in history.iter().filter(|s| s.side == Side::High) {
        v += history
            .iter()
            .filter(|y| y.side == Side::Low && y.amplitude > x.amplitude)
            .count();
    }
    v
}

/// Evolves the default Gaussian of amplitude `amplitude`.
pub fn run_gaussian(config: &SolverConfig, amplitude: f64) -> Result<Run> {
    HyperboloidalSolver::new(config.clone())?.evolve_initial(&InitialData::gaussian(amplitude))
}

/// HIGH on blowup; LOW when `sup |Phi|` has fallen below `floor` times its
/// initial value; otherwise indeterminate.
pub fn classify_dispersal_vs_blowup(run: &Run, floor: f64) -> Side {
    if run.blowup.detected {
        return Side::High;
    }
    let initial = run.snapshots.first().map_or(0.0, |s| crate::hyperboloidal::sup_abs(&s.phi).0);
    let last = run.final_state.sup_norm().0;
    if last < floor * initial {
        Side::Low
    } else {
        Side::Indeterminate
    }
}

/// Dispersal/blowup of the Gaussian family, extending `max_tau` once when
/// undecided and then falling back to the sign of the fitted `b`.
pub fn classify_amplitude(config: &SolverConfig, amplitude: f64, floor: f64) -> Result<Side> {
    let run = run_gaussian(config, amplitude)?;
    let side = classify_dispersal_vs_blowup(&run, floor);
    if side != Side::Indeterminate {
        return Ok(side);
    }
    let longer = SolverConfig { max_tau: 2.0 * config.max_tau, ..config.clone() };
    let run = run_gaussian(&longer, amplitude)?;
    let side = classify_dispersal_vs_blowup(&run, floor);
    if side != Side::Indeterminate {
        return Ok(side);
    }
    let opts = FitOptions { tau_start: 0.5 * longer.max_tau, ..Default::default() };
    match fit_in_time(&run, &opts) {
        Ok(f) if !f.unreliable && f.params.b > 0.0 => Ok(Side::Low),
        Ok(f) if !f.unreliable && f.params.b < 0.0 => Ok(Side::High),
        _ => Ok(Side::Indeterminate),
    }
}

/// `|Phi| - sqrt 2` at null infinity, and its least-squares slope over the
/// last quarter of the run. At the threshold the field at null infinity
/// tends to `sqrt 2`; off it the deviation grows linearly, upwards on the
/// blowup side.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalDeviation {
    pub deviation: TimeSeries,
    pub slope: f64,
    /// `+inf` when the run blew up.
    pub signed: f64,
}

pub fn critical_criterion(run: &Run) -> Result<CriticalDeviation> {
    let (t, v) = run.regular_series_at(run.grid.last());
    let dev: Vec<f64> = v.iter().map(|x| x.abs() - SQRT_2).collect();
    let deviation = TimeSeries::new("scri_deviation", t.clone(), dev)?;
    if run.blowup.detected {
        return Ok(CriticalDeviation { deviation, slope: f64::INFINITY, signed: f64::INFINITY });
    }
    let end = *t.last().ok_or_else(|| Error::InsufficientData("empty run".into()))?;
    let late = deviation.window(t[0] + 0.75 * (end - t[0]), end);
    let fit = linear_fit(&late.times, &late.values)?;
    Ok(CriticalDeviation { deviation, slope: fit.slope, signed: fit.slope })
}

/// Side of the critical threshold from [`critical_criterion`].
pub fn critical_side(run: &Run) -> Result<Side> {
    let c = critical_criterion(run)?;
    Ok(if c.signed > 0.0 {
        Side::High
    } else if c.signed < 0.0 {
        Side::Low
    } else {
        Side::Indeterminate
    })
}

/// Flip classifier: LOW while the late-time sign equals `low_sign`.
///
/// When [`determine_kappa`] is ambiguous (near the flip the sign settles
/// late) the origin series on the last half of the run is fitted by
/// `c2 tau^-2 + c3 tau^-3` and the sign of the generic coefficient `c2`
/// decides, provided it is at least three standard errors from zero.
/// Blown-up runs are indeterminate.
pub fn flip_side(run: &Run, low_sign: Sign) -> Result<Side> {
    if run.blowup.detected {
        return Ok(Side::Indeterminate);
    }
    // the late-time sign of Phi lags the generic coefficient: near the flip
    // the tau^-3 part dominates long after tau^-2 has changed sign
    Ok(match generic_tail_coefficient(run)? {
        Some(c2) if Sign::of(c2) == low_sign => Side::Low,
        Some(_) => Side::High,
        None => Side::Indeterminate,
    })
}

/// Sign of the generic tail, falling back to `kappa` when the tail fit is
/// not significant.
pub fn tail_sign(run: &Run) -> Result<Sign> {
    match generic_tail_coefficient(run)? {
        Some(c2) => Ok(Sign::of(c2)),
        None => Ok(determine_kappa(run)?.sign),
    }
}

/// Significant `c2` of `Phi(tau, 0) ~ c2 tau^-2 + c3 tau^-3` on the last
/// half of the run, or `None`.
pub fn generic_tail_coefficient(run: &Run) -> Result<Option<f64>> {
    let (t, v) = run.regular_series_at(0);
    let end = *t.last().ok_or_else(|| Error::InsufficientData("empty run".into()))?;
    let pts: Vec<(f64, f64)> = t.into_iter().zip(v).filter(|(x, _)| *x >= 0.5 * end && *x > 0.0).collect();
    if pts.len() < 6 {
        return Err(Error::InsufficientData("too few late samples for the tail fit".into()));
    }
    // tau^2 Phi = c2 + c3 / tau: a straight line in 1/tau
    let x: Vec<f64> = pts.iter().map(|p| 1.0 / p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.0 * p.0 * p.1).collect();
    let fit = linear_fit(&x, &y)?;
    let significant = fit.intercept.abs() > 3.0 * fit.intercept_stderr;
    Ok(significant.then_some(fit.intercept))
}

pub fn critical_search(config: &SolverConfig, bisection: &BisectionConfig) -> Result<Bisection> {
    bisect(bisection, |a| critical_side(&run_gaussian(config, a)?))
}

/// Flip search; the sign below the flip is read off the `lo` run. An
/// indeterminate run is repeated once with twice the `max_tau`.
pub fn flip_search(config: &SolverConfig, bisection: &BisectionConfig) -> Result<Bisection> {
    let low_sign = tail_sign(&run_gaussian(config, bisection.lo)?)?;
    bisect(bisection, |a| {
        let side = flip_side(&run_gaussian(config, a)?, low_sign)?;
        if side != Side::Indeterminate {
            return Ok(side);
        }
        let longer = SolverConfig { max_tau: 2.0 * config.max_tau, ..config.clone() };
        flip_side(&run_gaussian(&longer, a)?, low_sign)
    })
}

/// Per-point divergence times from the adaptive tail of a blown-up run:
/// the zero of the line through `1/|Phi(tau, rho_i)|` over the last
/// `points` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceTimes {
    pub rho: Vec<f64>,
    pub times: Vec<f64>,
    pub spread: f64,
    pub mean: f64,
}

pub fn divergence_times(run: &Run, points: usize) -> Result<DivergenceTimes> {
    if !run.blowup.detected {
        return Err(Error::InsufficientData("run did not blow up".into()));
    }
    let tail: Vec<_> = run.snapshots.iter().rev().take(points).rev().collect();
    if tail.len() < 3 {
        return Err(Error::InsufficientData("too few samples before blowup".into()));
    }
    let rho = run.grid.rho().to_vec();
    let times: Vec<f64> = (0..rho.len())
        .map(|i| {
            let pts: Vec<(f64, f64)> = tail.iter().map(|s| (s.tau, 1.0 / s.phi[i].abs())).collect();
            blowup_time_from_reciprocal(&pts).0
        })
        .collect();
    let finite: Vec<f64> = times.iter().copied().filter(|t| t.is_finite()).collect();
    if finite.len() != times.len() {
        return Err(Error::Fit("a divergence time is not finite".into()));
    }
    let max = finite.iter().copied().fold(f64::MIN, f64::max);
    let min = finite.iter().copied().fold(f64::MAX, f64::min);
    Ok(DivergenceTimes {
        spread: max - min,
        mean: finite.iter().sum::<f64>() / finite.len() as f64,
        rho,
        times,
    })
}

/// First blowup location: LOW when the field first exceeds the threshold
/// near null infinity (`rho > 1/2`), HIGH near the origin. A run whose
/// divergence times agree to `simultaneity` is indeterminate.
pub fn blowup_location_side(run: &Run, simultaneity: f64) -> Result<Side> {
    if !run.blowup.detected {
        return Ok(Side::Indeterminate);
    }
    if let Ok(d) = divergence_times(run, 8) {
        if d.spread < simultaneity {
            return Ok(Side::Indeterminate);
        }
    }
    Ok(if run.blowup.location_rho > 0.5 { Side::Low } else { Side::High })
}

pub fn simultaneous_blowup_search(
    config: &SolverConfig,
    bisection: &BisectionConfig,
    simultaneity: f64,
) -> Result<Bisection> {
    bisect(bisection, |a| blowup_location_side(&run_gaussian(config, a)?, simultaneity))
}

/// Where an attractor member blows up first, if at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlowupLocation {
    None,
    NullInfinity,
    Origin,
    /// `b = -1/2`: the whole leaf at once.
    Everywhere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupPrediction {
    pub params: AttractorParams,
    pub location: BlowupLocation,
    /// Predicted blowup `tau` at that location (NaN for none).
    pub tau: f64,
}

/// `|b + 1/2|` below which a member counts as blowing up on a whole leaf;
/// about the accuracy of a converged fit.
pub const EVERYWHERE_TOL: f64 = 1e-6;

/// Classifies an attractor member: `b >= 0` is regular to the future, `b in
/// (-1/2, 0)` blows up first at null infinity, `b < -1/2` first at the origin.
pub fn predict_from_params(params: &AttractorParams) -> BlowupPrediction {
    let b = params.b;
    let (location, tau) = if b >= 0.0 {
        (BlowupLocation::None, f64::NAN)
    } else if (b + 0.5).abs() < EVERYWHERE_TOL {
        (BlowupLocation::Everywhere, 1.0 - params.a)
    } else if b > -0.5 {
        (BlowupLocation::NullInfinity, params.scri_blowup_tau().unwrap_or(f64::NAN))
    } else {
        let t = params.origin_blowup_time().unwrap_or(f64::NAN);
        // leaf through (t, 0): tau = t - 1
        (BlowupLocation::Origin, t - 1.0)
    };
    BlowupPrediction { params: *params, location, tau }
}

/// Fits the attractor to the origin region `rho <= rho_max` over
/// `[tau_start, tau_end]` of a run and predicts the blowup location.
pub fn predict_null_infinity_blowup(run: &Run, tau_start: f64, tau_end: f64, rho_max: f64) -> Result<BlowupPrediction> {
    // the sign at the dominant point of the last slice: early slices can
    // still carry the opposite-sign transient at the origin
    let kappa = run
        .regular_snapshots()
        .filter(|s| s.tau <= tau_end)
        .last()
        .map_or(Sign::Plus, |s| Sign::of(s.phi[sup_abs(&s.phi).1]));
    let opts = FitOptions {
        tau_start,
        tau_end,
        kappa: Some(kappa),
        ..Default::default()
    };
    let rho = run.grid.rho();
    let samples: Vec<(f64, f64, f64)> = run
        .regular_snapshots()
        .filter(|s| s.tau >= tau_start && s.tau <= tau_end)
        .flat_map(|s| {
            rho.iter()
                .zip(&s.phi)
                .filter(|(r, _)| **r <= rho_max)
                .map(move |(r, v)| (s.tau, *r, *v))
        })
        .collect();
    if samples.len() < 10 {
        return Err(Error::InsufficientData(format!("{} samples in the prefix", samples.len())));
    }
    let mut seeds = seed_guesses(run, kappa, &opts);
    // a matched to the last scri sample for each trial b:
    // Phi|scri = kappa sqrt2 / (2 b (tau + a) + 1)
    let (t_last, v_last) = samples
        .iter()
        .filter(|s| s.1 == rho_max.min(1.0))
        .last()
        .map_or((tau_end, 0.0), |s| (s.0, s.2));
    for b in [-1.0, -0.5, -0.3, -0.1, -0.02, 0.02, 0.3] {
        let a = if v_last * kappa.value() > 0.0 {
            (kappa.value() * SQRT_2 / v_last - 1.0) / (2.0 * b) - t_last
        } else {
            0.0
        };
        seeds.push(AttractorParams::new(a, b, kappa));
    }
    let best = seeds
        .iter()
        .filter_map(|s| fit_samples(&samples, *s, &opts).ok())
        .filter(|o| o.converged)
        .min_by(|x, y| x.cost.total_cmp(&y.cost))
        .ok_or_else(|| Error::Fit("no converged prefix fit".into()))?;
    let rms = (best.cost / best.points as f64).sqrt();
    if rms > 1e-2 {
        return Err(Error::Fit(format!("prefix fit is poor (relative rms {rms:.2e})")));
    }
    Ok(predict_from_params(&AttractorParams::new(best.params[0], best.params[1], kappa)))
}
