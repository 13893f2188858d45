//! Method-of-lines evolution of the conformally rescaled cubic wave
//! equation on the compactified hyperboloidal grid.
//!
//! The state is the first-order triple `(Phi, psi, pi)` with
//! `psi = dPhi/drho` and `pi = 2/(1 + rho^2) (dPhi/dtau + rho dPhi/drho)`.
//! Space is discretized with 7-point sixth-order stencils (one-sided at both
//! ends), time with classical RK4. Null infinity needs no boundary
//! condition; the origin carries `psi = 0`.

use std::fmt;
use std::time::Instant;

use crate::analytic::HyperboloidalSolution;
use crate::error::{Error, Result};
use crate::grid::{ricci_scalar_unchecked, RadialGrid};
use crate::stencil::{Derivative, Dissipation, LeftClosure};

/// Number of trailing steps used to extrapolate the blowup time.
pub const BLOWUP_FIT_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub tau: f64,
    /// Rescaled field `Phi = phi / Omega`.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub pi: Vec<f64>,
}

impl FieldState {
    pub fn zeros(tau: f64, len: usize) -> Self {
        FieldState {
            tau,
            phi: vec![0.0; len],
            psi: vec![0.0; len],
            pi: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.phi
            .iter()
            .chain(&self.psi)
            .chain(&self.pi)
            .all(|v| v.is_finite())
    }

    /// `(max |Phi|, argmax)`; non-finite entries win.
    pub fn sup_norm(&self) -> (f64, usize) {
        sup_abs(&self.phi)
    }

    pub fn negated(&self) -> FieldState {
        FieldState {
            tau: self.tau,
            phi: self.phi.iter().map(|v| -v).collect(),
            psi: self.psi.iter().map(|v| -v).collect(),
            pi: self.pi.iter().map(|v| -v).collect(),
        }
    }
}

pub(crate) fn sup_abs(values: &[f64]) -> (f64, usize) {
    let mut best = (0.0, 0);
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return (f64::INFINITY, i);
        }
        if v.abs() > best.0 {
            best = (v.abs(), i);
        }
    }
    best
}

/// Description of the data a run starts from; enough to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `A exp(-(rho - center)^2 / width^2)`, time-symmetric.
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Conformal solution sampled on the leaf `tau0`.
    Conformal { tau0: f64 },
    /// Attractor member sampled on the leaf `tau0`.
    Attractor {
        a: f64,
        b: f64,
        kappa: f64,
        tau0: f64,
    },
}

impl InitialData {
    /// Gaussian with the default center 0.3 and width 0.07.
    pub fn gaussian(amplitude: f64) -> Self {
        InitialData::Gaussian {
            amplitude,
            center: 0.3,
            width: 0.07,
        }
    }

    pub fn build(&self, grid: &RadialGrid) -> Result<FieldState> {
        match *self {
            InitialData::Gaussian {
                amplitude,
                center,
                width,
            } => make_initial_gaussian(amplitude, center, width, grid),
            InitialData::Conformal { tau0 } => {
                make_initial_from_solution(&crate::analytic::ConformalSolution, tau0, grid)
            }
            InitialData::Attractor { a, b, kappa, tau0 } => {
                let p = crate::analytic::AttractorParams::new(
                    a,
                    b,
                    crate::analytic::Sign::of(kappa),
                );
                make_initial_from_solution(&p, tau0, grid)
            }
        }
    }

    pub fn start_tau(&self) -> f64 {
        match *self {
            InitialData::Gaussian { .. } => 0.0,
            InitialData::Conformal { tau0 } | InitialData::Attractor { tau0, .. } => tau0,
        }
    }
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Gaussian {
                amplitude,
                center,
                width,
            } => write!(f, "gaussian(A={amplitude}, center={center}, width={width})"),
            InitialData::Conformal { tau0 } => write!(f, "conformal(tau0={tau0})"),
            InitialData::Attractor { a, b, kappa, tau0 } => {
                write!(f, "attractor(a={a}, b={b}, kappa={kappa}, tau0={tau0})")
            }
        }
    }
}

/// Gaussian pulse with `dPhi/dtau = 0`; `psi` is the analytic derivative
/// and `psi(0)` is set to zero (regularity).
pub fn make_initial_gaussian(
    amplitude: f64,
    center: f64,
    width: f64,
    grid: &RadialGrid,
) -> Result<FieldState> {
    if !(width > 0.0) {
        return Err(Error::domain("sigma", width, "sigma > 0"));
    }
    let mut s = FieldState::zeros(0.0, grid.len());
    for (i, &rho) in grid.rho().iter().enumerate() {
        let x = (rho - center) / width;
        let phi = amplitude * (-x * x).exp();
        let psi = -2.0 * x / width * phi;
        s.phi[i] = phi;
        s.psi[i] = psi;
        s.pi[i] = 2.0 / (1.0 + rho * rho) * rho * psi;
    }
    s.psi[0] = 0.0;
    Ok(s)
}

/// Samples `(Phi, psi, pi)` of a closed-form solution on the leaf `tau0`.
pub fn make_initial_from_solution(
    solution: &dyn HyperboloidalSolution,
    tau0: f64,
    grid: &RadialGrid,
) -> Result<FieldState> {
    let mut s = FieldState::zeros(tau0, grid.len());
    for (i, &rho) in grid.rho().iter().enumerate() {
        let phi = solution.phi(tau0, rho);
        let psi = if i == 0 { 0.0 } else { solution.dphi_drho(tau0, rho) };
        let dtau = solution.dphi_dtau(tau0, rho);
        s.phi[i] = phi;
        s.psi[i] = psi;
        s.pi[i] = 2.0 / (1.0 + rho * rho) * (dtau + rho * psi);
    }
    if !s.is_finite() {
        return Err(Error::domain(
            "tau0",
            tau0,
            "the closed form must be finite on the initial leaf",
        ));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n_cells: usize,
    /// `dtau / drho`.
    pub courant: f64,
    /// Kreiss-Oliger strength; 0 switches dissipation off.
    pub dissipation: f64,
    /// Rate at which `psi - dPhi/drho` is driven to zero; 0 is the plain system.
    pub constraint_damping: f64,
    /// A run stops as blown up once `sup |Phi|` exceeds this.
    pub blowup_threshold: f64,
    /// Adaptive stepping starts at `sup |Phi| = adapt_scale / dt_base`.
    pub adapt_scale: f64,
    /// Step factor applied at every doubling of `sup |Phi|` past the start.
    pub dt_shrink: f64,
    pub max_tau: f64,
    /// Cadence of recorded profiles.
    pub sample_dt: f64,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_cells: 400,
            courant: 0.8,
            dissipation: 0.3,
            constraint_damping: 0.0,
            blowup_threshold: 1e8,
            adapt_scale: 0.06,
            dt_shrink: 0.5,
            max_tau: 60.0,
            sample_dt: 0.5,
            max_steps: 50_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 16 {
            return Err(Error::Config(format!("n_cells = {} < 16", self.n_cells)));
        }
        if !(self.courant > 0.0 && self.courant <= 1.0) {
            return Err(Error::Config(format!("courant = {} not in (0, 1]", self.courant)));
        }
        if !(self.sample_dt > 0.0) || !(self.max_tau.is_finite()) {
            return Err(Error::Config("sample_dt must be > 0 and max_tau finite".into()));
        }
        if !(self.blowup_threshold > 0.0) || !(self.adapt_scale > 0.0) {
            return Err(Error::Config("thresholds must be positive".into()));
        }
        if !(self.dt_shrink > 0.0 && self.dt_shrink < 1.0) {
            return Err(Error::Config(format!("dt_shrink = {} not in (0, 1)", self.dt_shrink)));
        }
        if !(self.dissipation >= 0.0) {
            return Err(Error::Config("dissipation must be >= 0".into()));
        }
        Ok(())
    }

    /// Base step: the largest `dtau <= courant * h` dividing `sample_dt`.
    pub fn base_dt(&self) -> f64 {
        let h = 1.0 / self.n_cells as f64;
        let per_sample = (self.sample_dt / (self.courant * h) - 1e-9).ceil().max(1.0);
        self.sample_dt / per_sample
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupInfo {
    pub detected: bool,
    /// Extrapolated blowup time `T` (zero of the line through `1/sup|Phi|`).
    pub tau_estimate: f64,
    pub location_index: usize,
    pub location_rho: f64,
    /// Set when the extrapolation had too few points or a poor fit.
    pub low_confidence: bool,
}

impl BlowupInfo {
    pub fn none() -> Self {
        BlowupInfo {
            detected: false,
            tau_estimate: f64::NAN,
            location_index: 0,
            location_rho: f64::NAN,
            low_confidence: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    BlowUp,
    StepLimit,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Completed => "completed",
            RunStatus::BlowUp => "blowup",
            RunStatus::StepLimit => "step_limit",
        })
    }
}

/// One recorded profile of `Phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tau: f64,
    pub phi: Vec<f64>,
    /// Recorded off-cadence during adaptive stepping.
    pub adaptive: bool,
}

/// Output of one evolution.
#[derive(Debug, Clone)]
pub struct Run {
    pub grid: RadialGrid,
    pub config: SolverConfig,
    pub initial: Option<InitialData>,
    pub snapshots: Vec<Snapshot>,
    pub blowup: BlowupInfo,
    pub status: RunStatus,
    pub final_state: FieldState,
    pub steps: usize,
    pub wall_seconds: f64,
}

impl Run {
    /// Uniform-cadence samples only.
    pub fn regular_snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter().filter(|s| !s.adaptive)
    }

    /// `Phi` at grid index `i` over all recorded snapshots.
    pub fn series_at(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        self.snapshots.iter().map(|s| (s.tau, s.phi[i])).unzip()
    }

    /// Same as [`Run::series_at`] restricted to the uniform cadence.
    pub fn regular_series_at(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        self.regular_snapshots().map(|s| (s.tau, s.phi[i])).unzip()
    }

    pub fn snapshot_at(&self, tau: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.tau - tau).abs() <= 1e-9 * tau.abs().max(1.0))
    }
}

/// Time derivatives of the three fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub pi: Vec<f64>,
}

/// The semi-discrete system on one grid.
#[derive(Debug, Clone)]
pub struct HyperboloidalSolver {
    grid: RadialGrid,
    config: SolverConfig,
    d1: Derivative,
    diss: Dissipation,
    rho: Vec<f64>,
    /// `(1 + rho^2) / 2`
    c: Vec<f64>,
    /// `(1 + rho^2)/2 * R/6`
    mass: Vec<f64>,
}

/// Scratch space for one integration; keeps stepping allocation-free.
#[derive(Debug, Clone)]
pub struct Workspace {
    g: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
    stage: FieldState,
    k: [Derivatives; 4],
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        let z = || Derivatives {
            phi: vec![0.0; n],
            psi: vec![0.0; n],
            pi: vec![0.0; n],
        };
        Workspace {
            g: vec![0.0; n],
            f: vec![0.0; n],
            df: vec![0.0; n],
            stage: FieldState::zeros(0.0, n),
            k: [z(), z(), z(), z()],
        }
    }
}

impl HyperboloidalSolver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let grid = RadialGrid::new(config.n_cells)?;
        let n = grid.len();
        let d1 = Derivative::new(n, grid.h(), 1, 7, LeftClosure::OneSided);
        let diss = Dissipation::new(config.dissipation, grid.h());
        let rho = grid.rho().to_vec();
        let c: Vec<f64> = rho.iter().map(|r| 0.5 * (1.0 + r * r)).collect();
        let mass = rho
            .iter()
            .zip(&c)
            .map(|(&r, &c)| c * ricci_scalar_unchecked(r) / 6.0)
            .collect();
        Ok(HyperboloidalSolver {
            grid,
            config,
            d1,
            diss,
            rho,
            c,
            mass,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.grid.len())
    }

    /// Right-hand side of the first-order system.
    pub fn rhs(&self, state: &FieldState) -> Derivatives {
        let mut ws = self.workspace();
        let mut out = ws.k[0].clone();
        self.rhs_into(state, &mut ws.g, &mut ws.f, &mut ws.df, &mut out);
        out
    }

    fn rhs_into(
        &self,
        s: &FieldState,
        g: &mut [f64],
        f: &mut [f64],
        df: &mut [f64],
        out: &mut Derivatives,
    ) {
        let n = self.grid.len();
        for i in 0..n {
            let (c, r) = (self.c[i], self.rho[i]);
            g[i] = c * s.pi[i] - r * s.psi[i];
            f[i] = c * s.psi[i] - r * s.pi[i];
        }
        out.phi.copy_from_slice(g);
        self.d1.apply(g, &mut out.psi);
        out.psi[0] = 0.0;
        self.d1.apply(f, df);
        // (1/rho^2) d/drho (rho^2 F) = F' + 2F/rho, with limit 3 F'(0)
        out.pi[0] = 3.0 * df[0];
        for i in 1..n {
            out.pi[i] = df[i] + 2.0 * f[i] / self.rho[i];
        }
        for i in 0..n {
            let p = s.phi[i];
            out.pi[i] += self.c[i] * p * p * p - self.mass[i] * p;
        }
        let gamma = self.config.constraint_damping;
        if gamma != 0.0 {
            self.d1.apply(&s.phi, df);
            for i in 1..n {
                out.psi[i] -= gamma * (s.psi[i] - df[i]);
            }
        }
        if self.diss.is_active() {
            self.diss.add(&s.phi, &mut out.phi);
            self.diss.add(&s.psi, &mut out.psi);
            self.diss.add(&s.pi, &mut out.pi);
        }
    }

    /// One classical RK4 step; re-imposes `psi(0) = 0`.
    pub fn step(&self, state: &mut FieldState, dt: f64, ws: &mut Workspace) {
        let Workspace {
            g,
            f,
            df,
            stage,
            k,
        } = ws;
        let n = state.len();
        let [k1, k2, k3, k4] = k;

        self.rhs_into(state, g, f, df, k1);
        combine(stage, state, k1, 0.5 * dt);
        self.rhs_into(stage, g, f, df, k2);
        combine(stage, state, k2, 0.5 * dt);
        self.rhs_into(stage, g, f, df, k3);
        combine(stage, state, k3, dt);
        self.rhs_into(stage, g, f, df, k4);

        let w = dt / 6.0;
        for i in 0..n {
            state.phi[i] += w * (k1.phi[i] + 2.0 * (k2.phi[i] + k3.phi[i]) + k4.phi[i]);
            state.psi[i] += w * (k1.psi[i] + 2.0 * (k2.psi[i] + k3.psi[i]) + k4.psi[i]);
            state.pi[i] += w * (k1.pi[i] + 2.0 * (k2.pi[i] + k3.pi[i]) + k4.pi[i]);
        }
        state.psi[0] = 0.0;
        state.tau += dt;
    }

    /// Integrates to `max_tau` or blowup, recording profiles.
    pub fn evolve(&self, initial: FieldState) -> Result<Run> {
        self.evolve_with(initial, &mut |_: &FieldState, _: bool| {})
    }

    /// Builds `data` on the grid, evolves it and keeps its descriptor.
    pub fn evolve_initial(&self, data: &InitialData) -> Result<Run> {
        let mut run = self.evolve(data.build(&self.grid)?)?;
        run.initial = Some(data.clone());
        Ok(run)
    }

    /// Like [`evolve`](Self::evolve), also handing every recorded state to
    /// `observer` (the flag marks off-cadence adaptive samples).
    pub fn evolve_with(
        &self,
        initial: FieldState,
        observer: &mut dyn FnMut(&FieldState, bool),
    ) -> Result<Run> {
        if initial.len() != self.grid.len() {
            return Err(Error::Config(format!(
                "initial data has {} points, grid has {}",
                initial.len(),
                self.grid.len()
            )));
        }
        if !initial.is_finite() {
            return Err(Error::Config("initial data is not finite".into()));
        }
        let started = Instant::now();
        let cfg = &self.config;
        let dt_base = cfg.base_dt();
        let adapt_start = cfg.adapt_scale / dt_base;
        let tau0 = initial.tau;
        let mut state = initial;
        let mut ws = self.workspace();
        let mut snapshots = vec![Snapshot {
            tau: state.tau,
            phi: state.phi.clone(),
            adaptive: false,
        }];
        observer(&state, false);

        let mut trace = Trace::new(BLOWUP_FIT_POINTS);
        let (sup0, arg0) = state.sup_norm();
        trace.push(state.tau, sup0, arg0);

        let mut sample_index = 1u64;
        let mut next_sample = tau0 + cfg.sample_dt;
        let mut steps = 0usize;
        let mut status = RunStatus::Completed;
        let mut sup = sup0;

        while state.tau < cfg.max_tau {
            if steps >= cfg.max_steps {
                status = RunStatus::StepLimit;
                break;
            }
            let adaptive = sup >= adapt_start;
            let mut dt = if adaptive {
                let doublings = (sup / adapt_start).log2().floor() + 1.0;
                dt_base * cfg.dt_shrink.powf(doublings)
            } else {
                dt_base
            };
            let target = next_sample.min(cfg.max_tau);
            let mut landed = false;
            if target - state.tau <= dt * (1.0 + 1e-9) {
                dt = target - state.tau;
                landed = true;
            }
            self.step(&mut state, dt, &mut ws);
            steps += 1;
            if landed {
                state.tau = target;
            }
            let (s, arg) = state.sup_norm();
            sup = s;
            trace.push(state.tau, sup, arg);

            let on_cadence = landed && (target - next_sample).abs() <= 1e-12 * next_sample.abs().max(1.0);
            if on_cadence {
                sample_index += 1;
                next_sample = tau0 + sample_index as f64 * cfg.sample_dt;
            }
            let blown = !sup.is_finite() || sup > cfg.blowup_threshold;
            if on_cadence || adaptive || blown || (landed && state.tau >= cfg.max_tau) {
                if state.is_finite() {
                    snapshots.push(Snapshot {
                        tau: state.tau,
                        phi: state.phi.clone(),
                        adaptive: !on_cadence,
                    });
                    observer(&state, !on_cadence);
                }
            }
            if blown {
                status = RunStatus::BlowUp;
                break;
            }
        }

        let blowup = if status == RunStatus::BlowUp {
            let (t_est, low) = trace.extrapolate_blowup();
            let (_, arg) = state.sup_norm();
            BlowupInfo {
                detected: true,
                tau_estimate: t_est,
                location_index: arg,
                location_rho: self.rho[arg],
                low_confidence: low,
            }
        } else {
            BlowupInfo::none()
        };

        Ok(Run {
            grid: self.grid.clone(),
            config: self.config.clone(),
            initial: None,
            snapshots,
            blowup,
            status,
            final_state: state,
            steps,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }
}

fn combine(out: &mut FieldState, base: &FieldState, k: &Derivatives, dt: f64) {
    for i in 0..base.len() {
        out.phi[i] = base.phi[i] + dt * k.phi[i];
        out.psi[i] = base.psi[i] + dt * k.psi[i];
        out.pi[i] = base.pi[i] + dt * k.pi[i];
    }
    out.psi[0] = 0.0;
    out.tau = base.tau + dt;
}

/// Ring buffer of `(tau, sup|Phi|, argmax)` for the last steps.
#[derive(Debug, Clone)]
struct Trace {
    cap: usize,
    items: std::collections::VecDeque<(f64, f64, usize)>,
}

impl Trace {
    fn new(cap: usize) -> Self {
        Trace {
            cap,
            items: std::collections::VecDeque::with_capacity(cap + 1),
        }
    }

    fn push(&mut self, tau: f64, sup: f64, arg: usize) {
        self.items.push_back((tau, sup, arg));
        if self.items.len() > self.cap {
            self.items.pop_front();
        }
    }

    fn extrapolate_blowup(&self) -> (f64, bool) {
        let pts: Vec<(f64, f64)> = self
            .items
            .iter()
            .filter(|(_, s, _)| s.is_finite() && *s > 0.0)
            .map(|&(t, s, _)| (t, 1.0 / s))
            .collect();
        blowup_time_from_reciprocal(&pts)
    }
}

/// Zero crossing of the least-squares line through `(tau, 1/|Phi|)`;
/// returns the estimate and a low-confidence flag.
pub fn blowup_time_from_reciprocal(points: &[(f64, f64)]) -> (f64, bool) {
    if points.len() < 3 {
        return (points.last().map_or(f64::NAN, |p| p.0), true);
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let fit = crate::diagnostics::linear_fit(&x, &y);
    let Ok(fit) = fit else {
        return (x[x.len() - 1], true);
    };
    let t = -fit.intercept / fit.slope;
    let last = x[x.len() - 1];
    let rms = (y
        .iter()
        .zip(&x)
        .map(|(yi, xi)| (yi - fit.intercept - fit.slope * xi).powi(2))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let low = !(fit.slope < 0.0) || !t.is_finite() || t < last || rms > 1e-2 * scale || points.len() < BLOWUP_FIT_POINTS / 2;
    (t, low)
}
