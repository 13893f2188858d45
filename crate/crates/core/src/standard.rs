//! Evolution in standard coordinates `(t, r)` on a truncated ball `[0, R]`.
//!
//! Used only inside the past light cone of an origin blowup, where the
//! approximate outgoing condition at `r = R` cannot interfere: a sample
//! `(t, r)` is trusted when `r < R - t`.

use std::f64::consts::SQRT_2;
use std::time::Instant;

use crate::analytic::{AttractorParams, Sign, StandardSolution};
use crate::diagnostics::{loglog_slope, LinearFit, TimeSeries};
use crate::error::{Error, Result};
use crate::fit::levenberg_marquardt;
use crate::hyperboloidal::{blowup_time_from_reciprocal, sup_abs, RunStatus, BLOWUP_FIT_POINTS};
use crate::stencil::{Derivative, Dissipation, LeftClosure};

#[derive(Debug, Clone, PartialEq)]
pub struct StandardState {
    pub t: f64,
    pub phi: Vec<f64>,
    /// `d phi / dt`.
    pub phidot: Vec<f64>,
}

impl StandardState {
    pub fn zeros(t: f64, len: usize) -> Self {
        StandardState {
            t,
            phi: vec![0.0; len],
            phidot: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.phidot).all(|v| v.is_finite())
    }
}

/// Initial data given directly in `(t, r)`.
#[derive(Debug, Clone, PartialEq)]
pub enum StandardInitialData {
    /// `phi = A exp(-((r - center) / width)^2)`, `phidot = 0`.
    Gaussian { amplitude: f64, center: f64, width: f64 },
}

impl StandardInitialData {
    pub fn build(&self, r: &[f64]) -> Result<StandardState> {
        match *self {
            StandardInitialData::Gaussian { amplitude, center, width } => {
                if !(width > 0.0) || !amplitude.is_finite() || !center.is_finite() {
                    return Err(Error::Config(format!(
                        "bad Gaussian: A = {amplitude}, center = {center}, width = {width}"
                    )));
                }
                let mut s = StandardState::zeros(0.0, r.len());
                for (i, &x) in r.iter().enumerate() {
                    let z = (x - center) / width;
                    s.phi[i] = amplitude * (-z * z).exp();
                }
                if center != 0.0 {
                    // keep the profile even at the origin
                    let z = center / width;
                    let bump = amplitude * (-z * z).exp();
                    if bump > 1e-14 * amplitude.abs() {
                        return Err(Error::Config(
                            "an off-center Gaussian must vanish at the origin".into(),
                        ));
                    }
                }
                Ok(s)
            }
        }
    }
}

/// Samples a closed-form solution at time `t0`.
pub fn sample_solution(solution: &dyn StandardSolution, t0: f64, r: &[f64]) -> Result<StandardState> {
    let mut s = StandardState::zeros(t0, r.len());
    for (i, &x) in r.iter().enumerate() {
        s.phi[i] = solution.phi(t0, x);
        s.phidot[i] = solution.dphi_dt(t0, x);
    }
    if !s.is_finite() {
        return Err(Error::domain("t0", t0, "the closed form must be finite at t0"));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardConfig {
    pub n_cells: usize,
    /// Outer radius `R`.
    pub r_max: f64,
    /// `dt / dr`.
    pub courant: f64,
    pub dissipation: f64,
    pub blowup_threshold: f64,
    /// Once `sup |phi|` exceeds `adapt_scale / dt_base` the step becomes
    /// `adapt_scale / sup |phi|`.
    pub adapt_scale: f64,
    pub max_t: f64,
    pub sample_dt: f64,
    pub max_steps: usize,
}

impl Default for StandardConfig {
    fn default() -> Self {
        StandardConfig {
            n_cells: 800,
            r_max: 4.0,
            courant: 0.5,
            dissipation: 0.3,
            blowup_threshold: 1e6,
            adapt_scale: 0.01,
            max_t: 4.0,
            sample_dt: 0.05,
            max_steps: 10_000_000,
        }
    }
}

impl StandardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 16 {
            return Err(Error::Config(format!("n_cells = {} < 16", self.n_cells)));
        }
        if !(self.r_max > 0.0) || !self.r_max.is_finite() {
            return Err(Error::Config(format!("r_max = {} must be positive", self.r_max)));
        }
        if !(self.courant > 0.0 && self.courant <= 1.0) {
            return Err(Error::Config(format!("courant = {} not in (0, 1]", self.courant)));
        }
        if !(self.sample_dt > 0.0) || !self.max_t.is_finite() {
            return Err(Error::Config("sample_dt must be > 0 and max_t finite".into()));
        }
        if !(self.blowup_threshold > 0.0) || !(self.adapt_scale > 0.0) || !(self.dissipation >= 0.0) {
            return Err(Error::Config("thresholds and dissipation must be positive".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.r_max / self.n_cells as f64
    }

    /// Largest step `<= courant * h` dividing `sample_dt`.
    pub fn base_dt(&self) -> f64 {
        let per_sample = (self.sample_dt / (self.courant * self.h()) - 1e-9).ceil().max(1.0);
        self.sample_dt / per_sample
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardSnapshot {
    pub t: f64,
    pub phi: Vec<f64>,
    pub adaptive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardRun {
    pub r: Vec<f64>,
    pub config: StandardConfig,
    pub snapshots: Vec<StandardSnapshot>,
    pub status: RunStatus,
    /// Extrapolated blowup time, if the run blew up.
    pub blowup_time: Option<f64>,
    /// Radius of `sup |phi|` at the last step.
    pub blowup_radius: f64,
    pub steps: usize,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
}

impl StandardRun {
    /// Domain-of-dependence flag of the sample `(t, r)`.
    pub fn is_valid(&self, t: f64, r: f64) -> bool {
        r < self.config.r_max - t
    }

    pub fn validity_mask(&self, snapshot: &StandardSnapshot) -> Vec<bool> {
        self.r.iter().map(|&r| self.is_valid(snapshot.t, r)).collect()
    }

    /// `(t, phi(t, 0))` for every recorded sample inside the valid region.
    pub fn origin_series(&self) -> TimeSeries {
        let (t, v): (Vec<f64>, Vec<f64>) = self
            .snapshots
            .iter()
            .filter(|s| self.is_valid(s.t, 0.0))
            .map(|s| (s.t, s.phi[0]))
            .unzip();
        TimeSeries {
            label: "phi_origin".into(),
            times: t,
            values: v,
        }
    }
}

pub struct StandardSolver {
    config: StandardConfig,
    r: Vec<f64>,
    d1: Derivative,
    d2: Derivative,
    diss: Dissipation,
}

/// Scratch storage for [`StandardSolver::step`].
#[derive(Debug, Clone)]
pub struct StandardWorkspace {
    d: Vec<f64>,
    stage: StandardState,
    k: [(Vec<f64>, Vec<f64>); 4],
}

impl StandardSolver {
    pub fn new(config: StandardConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_cells + 1;
        let h = config.h();
        let r = (0..n).map(|i| config.r_max * i as f64 / config.n_cells as f64).collect();
        Ok(StandardSolver {
            d1: Derivative::new(n, h, 1, 7, LeftClosure::Parity(1.0)),
            d2: Derivative::new(n, h, 2, 7, LeftClosure::Parity(1.0)),
            diss: Dissipation::new(config.dissipation, h),
            r,
            config,
        })
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn config(&self) -> &StandardConfig {
        &self.config
    }

    pub fn workspace(&self) -> StandardWorkspace {
        let n = self.r.len();
        StandardWorkspace {
            d: vec![0.0; n],
            stage: StandardState::zeros(0.0, n),
            k: std::array::from_fn(|_| (vec![0.0; n], vec![0.0; n])),
        }
    }

    /// `(d phi/dt, d phidot/dt)`.
    pub fn rhs(&self, state: &StandardState) -> (Vec<f64>, Vec<f64>) {
        let n = self.r.len();
        let mut out = (vec![0.0; n], vec![0.0; n]);
        let mut d = vec![0.0; n];
        self.rhs_into(state, &mut d, &mut out);
        out
    }

    fn rhs_into(&self, s: &StandardState, d: &mut [f64], out: &mut (Vec<f64>, Vec<f64>)) {
        let n = self.r.len();
        let last = n - 1;
        let (dphi, ddot) = out;
        dphi.copy_from_slice(&s.phidot);
        self.d2.apply(&s.phi, ddot);
        self.d1.apply(&s.phi, d);
        // phi_rr + 2 phi_r / r, with limit 3 phi_rr at the origin
        ddot[0] *= 3.0;
        for i in 1..n {
            ddot[i] += 2.0 * d[i] / self.r[i];
        }
        for i in 0..n {
            let p = s.phi[i];
            ddot[i] += p * p * p;
        }
        // outgoing condition d_t (r phi) + d_r (r phi) = 0, differentiated in time
        self.d1.apply(&s.phidot, d);
        ddot[last] = -d[last] - s.phidot[last] / self.r[last];
        if self.diss.is_active() {
            self.diss.add(&s.phi, dphi);
            self.diss.add(&s.phidot, ddot);
        }
    }

    pub fn step(&self, state: &mut StandardState, dt: f64, ws: &mut StandardWorkspace) {
        let StandardWorkspace { d, stage, k } = ws;
        let n = state.len();
        let [k1, k2, k3, k4] = k;
        let combine = |stage: &mut StandardState, k: &(Vec<f64>, Vec<f64>), w: f64| {
            for i in 0..n {
                stage.phi[i] = state.phi[i] + w * k.0[i];
                stage.phidot[i] = state.phidot[i] + w * k.1[i];
            }
        };
        self.rhs_into(state, d, k1);
        combine(stage, k1, 0.5 * dt);
        self.rhs_into(stage, d, k2);
        combine(stage, k2, 0.5 * dt);
        self.rhs_into(stage, d, k3);
        combine(stage, k3, dt);
        self.rhs_into(stage, d, k4);
        let w = dt / 6.0;
        for i in 0..n {
            state.phi[i] += w * (k1.0[i] + 2.0 * (k2.0[i] + k3.0[i]) + k4.0[i]);
            state.phidot[i] += w * (k1.1[i] + 2.0 * (k2.1[i] + k3.1[i]) + k4.1[i]);
        }
        state.t += dt;
    }

    /// Evolves to `max_t` or blowup. Every adaptive step is recorded.
    pub fn evolve_lightcone(&self, initial: StandardState) -> Result<StandardRun> {
        if initial.len() != self.r.len() {
            return Err(Error::Config(format!(
                "initial data has {} points, grid has {}",
                initial.len(),
                self.r.len()
            )));
        }
        if !initial.is_finite() {
            return Err(Error::Config("initial data is not finite".into()));
        }
        let started = Instant::now();
        let cfg = &self.config;
        let dt_base = cfg.base_dt();
        let adapt_start = cfg.adapt_scale / dt_base;
        let t0 = initial.t;
        let mut state = initial;
        let mut ws = self.workspace();
        let mut snapshots = vec![StandardSnapshot {
            t: state.t,
            phi: state.phi.clone(),
            adaptive: false,
        }];
        let mut recent = std::collections::VecDeque::with_capacity(BLOWUP_FIT_POINTS + 1);
        let mut sample_index = 1u64;
        let mut next_sample = t0 + cfg.sample_dt;
        let mut steps = 0;
        let mut status = RunStatus::Completed;
        let mut sup = sup_abs(&state.phi).0;

        while state.t < cfg.max_t {
            if steps >= cfg.max_steps {
                status = RunStatus::StepLimit;
                break;
            }
            let adaptive = sup >= adapt_start;
            let mut dt = if adaptive { cfg.adapt_scale / sup } else { dt_base };
            let target = next_sample.min(cfg.max_t);
            let mut landed = false;
            if target - state.t <= dt * (1.0 + 1e-9) {
                dt = target - state.t;
                landed = true;
            }
            self.step(&mut state, dt, &mut ws);
            steps += 1;
            if landed {
                state.t = target;
            }
            sup = sup_abs(&state.phi).0;
            recent.push_back((state.t, 1.0 / sup));
            if recent.len() > BLOWUP_FIT_POINTS {
                recent.pop_front();
            }
            let on_cadence = landed && (target - next_sample).abs() <= 1e-12 * next_sample.abs().max(1.0);
            if on_cadence {
                sample_index += 1;
                next_sample = t0 + sample_index as f64 * cfg.sample_dt;
            }
            let blown = !sup.is_finite() || sup > cfg.blowup_threshold;
            if (on_cadence || adaptive || blown || landed) && state.is_finite() {
                snapshots.push(StandardSnapshot {
                    t: state.t,
                    phi: state.phi.clone(),
                    adaptive: !on_cadence,
                });
            }
            if blown {
                status = RunStatus::BlowUp;
                break;
            }
        }

        let mut warnings = Vec::new();
        let (blowup_time, blowup_radius) = if status == RunStatus::BlowUp {
            let pts: Vec<(f64, f64)> = recent.iter().copied().filter(|p| p.1.is_finite()).collect();
            let (t, low) = blowup_time_from_reciprocal(&pts);
            if low {
                warnings.push("blowup time extrapolation has low confidence".into());
            }
            let arg = sup_abs(&state.phi).1;
            let radius = self.r[arg];
            if !(radius + t < cfg.r_max) {
                warnings.push(format!(
                    "past light cone of the blowup point (T = {t:.6}, r = {radius:.4}) leaves the domain of dependence (R = {})",
                    cfg.r_max
                ));
            }
            (Some(t), radius)
        } else {
            (None, f64::NAN)
        };
        Ok(StandardRun {
            r: self.r.clone(),
            config: self.config.clone(),
            snapshots,
            status,
            blowup_time,
            blowup_radius,
            steps,
            wall_seconds: started.elapsed().as_secs_f64(),
            warnings,
        })
    }
}

/// Origin blowup fit `phi(t, 0) ~ sqrt 2 / (s (1 + b s))`, `s = T - t`:
/// the attractor member with `a = -T - 1/b`, restricted to the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginBlowupFit {
    pub blowup_time: f64,
    pub b: f64,
    /// `(s, |phi - phi_(a,b)|)` at the origin over all valid samples.
    pub difference: TimeSeries,
    /// Fitted coefficient of the `s^2` remainder.
    pub c2: f64,
    /// Log-log slope of `difference` over `slope_window`.
    pub slope: LinearFit,
    pub fit_window: (f64, f64),
    pub slope_window: (f64, f64),
}

/// Weighted least-squares `c2` in `phi - phi_(a,b) ~ c2 s^2` (weights `s^-2`).
fn remainder_coefficient(pts: &[(f64, f64)], t_b: f64, b: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, v) in pts {
        let s = t_b - t;
        let w2 = 1.0 / (s * s * s * s);
        num += w2 * s * s * (v - origin_attractor(s, b));
        den += w2 * s * s * s * s;
    }
    num / den
}

/// Attractor value at the origin in terms of the time to blowup.
pub fn origin_attractor(s: f64, b: f64) -> f64 {
    SQRT_2 / (s * (1.0 + b * s))
}

/// Fits `(T, b)` to the origin samples with `s = T - t` in `fit_window`.
///
/// The model is `phi_(a,b) + c2 s^2` with `c2` projected out linearly and
/// residuals weighted by `s^-2`. Without the `c2` term the remainder gets
/// absorbed into `T` near the small-`s` end of the window, where a shift
/// `dT` shows up as `dT / s^2`. If the true remainder were not `O(s^2)`
/// the measured slope of `|phi - phi_(a,b)|` would show it; `c2` does not
/// enter that difference.
pub fn fit_origin_blowup(
    run: &StandardRun,
    t_guess: f64,
    fit_window: (f64, f64),
    slope_window: (f64, f64),
) -> Result<OriginBlowupFit> {
    let series = run.origin_series();
    let (s_lo, s_hi) = fit_window;
    if !(s_lo > 0.0 && s_hi > s_lo) {
        return Err(Error::Config(format!("bad window {fit_window:?}")));
    }
    // T is the zero of 1/phi; seed b from phi - sqrt2/s -> -sqrt2 b
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| {
            let s = t_guess - t;
            s >= s_lo && s <= s_hi
        })
        .collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientData(format!("{} origin samples in the window", pts.len())));
    }
    let mut best: Option<crate::fit::LmOutcome> = None;
    for b0 in [-2.0, -1.0, -0.5, -0.2, -0.05] {
        let out = levenberg_marquardt([t_guess, b0], 300, |p, res| {
            res.clear();
            let (t_b, b) = (p[0], p[1]);
            if pts.iter().any(|&(t, _)| !(t_b - t > 0.0) || !(1.0 + b * (t_b - t) > 0.05)) {
                return false;
            }
            let c2 = remainder_coefficient(&pts, t_b, b);
            for &(t, v) in &pts {
                let s = t_b - t;
                let m = origin_attractor(s, b);
                let w = 1.0 / (s * s);
                // dm/ds = -m (1 + 2 b s) / (s (1 + b s)); c2 held fixed in the Jacobian
                let dm_ds = -m * (1.0 + 2.0 * b * s) / (s * (1.0 + b * s));
                let dm_db = -m * s / (1.0 + b * s);
                res.push(((v - m - c2 * s * s) * w, -(dm_ds + 2.0 * c2 * s) * w, -dm_db * w));
            }
            true
        });
        if let Ok(o) = out {
            if best.as_ref().map_or(true, |b| o.cost < b.cost) {
                best = Some(o);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Fit("origin blowup fit did not converge".into()))?;
    let [t_b, b] = best.params;
    let c2 = remainder_coefficient(&pts, t_b, b);
    let (s, d): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(t, _)| *t < t_b)
        .map(|(t, v)| (t_b - t, (v - origin_attractor(t_b - t, b)).abs()))
        .unzip();
    let slope = loglog_slope(&s, &d, slope_window)?;
    let mut difference = TimeSeries {
        label: "origin_difference".into(),
        times: s,
        values: d,
    };
    difference.times.reverse();
    difference.values.reverse();
    Ok(OriginBlowupFit {
        blowup_time: t_b,
        b,
        c2,
        difference,
        slope,
        fit_window,
        slope_window,
    })
}

impl OriginBlowupFit {
    /// The attractor member matching the fit: `a = -T - 1/b`, `kappa = +1`.
    pub fn params(&self) -> AttractorParams {
        AttractorParams::new(-self.blowup_time - 1.0 / self.b, self.b, Sign::Plus)
    }
}

/// `(s, sup |phi - phi_(a,b)|)` over the past light cone `r <= s` of the
/// origin blowup point, restricted to valid samples with `s` in `window`.
pub fn cone_difference(run: &StandardRun, fit: &OriginBlowupFit, window: (f64, f64)) -> TimeSeries {
    let p = fit.params();
    let mut pts: Vec<(f64, f64)> = run
        .snapshots
        .iter()
        .filter_map(|snap| {
            let s = fit.blowup_time - snap.t;
            if !(s >= window.0 && s <= window.1) {
                return None;
            }
            let sup = run
                .r
                .iter()
                .zip(&snap.phi)
                .take_while(|(r, _)| **r <= s)
                .filter(|(r, _)| run.is_valid(snap.t, **r))
                .map(|(r, v)| (v - p.phi_standard(snap.t, *r)).abs())
                .fold(0.0, f64::max);
            Some((s, sup))
        })
        .collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (times, values) = pts.into_iter().unzip();
    TimeSeries {
        label: "cone_difference".into(),
        times,
        values,
    }
}
