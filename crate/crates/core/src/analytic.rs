//! Closed-form solutions of the radial cubic wave equation
//! `phi_tt - phi_rr - (2/r) phi_r - phi^3 = 0` and the perturbation
//! profiles around them.
//!
//! Every evaluation returns a non-finite value at a pole instead of an
//! error; fitting code probes near-singular parameter regions and filters
//! those samples itself.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Sign `kappa` of an attractor member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn flipped(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Parameters `(a, b, kappa)` of the member
/// `kappa * sqrt(2) / (t + a + b ((t + a)^2 - r^2))` of the attractor family.
///
/// `b > 0` decays, `b < 0` blows up, `b = 0` is the critical solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractorParams {
    pub a: f64,
    pub b: f64,
    pub kappa: Sign,
}

impl AttractorParams {
    pub fn new(a: f64, b: f64, kappa: Sign) -> Self {
        AttractorParams { a, b, kappa }
    }

    pub fn positive(a: f64, b: f64) -> Self {
        Self::new(a, b, Sign::Plus)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }

    /// Denominator of the rescaled field in the `K = 3` chart (without the
    /// `2 sqrt 2` numerator).
    pub fn denominator(&self, tau: f64, rho: f64) -> f64 {
        let x = tau + self.a;
        let (p, m) = (x + 1.0, x - 1.0);
        p * (self.b * p + 1.0) - rho * rho * m * (self.b * m + 1.0)
    }

    /// Rescaled field `Phi = phi / Omega` in the `K = 3` hyperboloidal chart.
    pub fn phi(&self, tau: f64, rho: f64) -> f64 {
        self.kappa.value() * 2.0 * SQRT_2 / self.denominator(tau, rho)
    }

    /// `(Phi, dPhi/da, dPhi/db)` at one point; used by the fitters.
    pub fn value_and_gradient(&self, tau: f64, rho: f64) -> (f64, f64, f64) {
        let x = tau + self.a;
        let (p, m) = (x + 1.0, x - 1.0);
        let r2 = rho * rho;
        let d = p * (self.b * p + 1.0) - r2 * m * (self.b * m + 1.0);
        let dd_da = 2.0 * self.b * p + 1.0 - r2 * (2.0 * self.b * m + 1.0);
        let dd_db = p * p - r2 * m * m;
        let k = self.kappa.value() * 2.0 * SQRT_2;
        let f = k / d;
        let g = -f / d;
        (f, g * dd_da, g * dd_db)
    }

    /// Value of the rescaled field at null infinity, `sqrt 2 / (2 b (tau + a) + 1)`.
    pub fn phi_at_scri(&self, tau: f64) -> f64 {
        self.kappa.value() * SQRT_2 / (2.0 * self.b * (tau + self.a) + 1.0)
    }

    pub fn phi_standard(&self, t: f64, r: f64) -> f64 {
        let s = t + self.a;
        self.kappa.value() * SQRT_2 / (s + self.b * (s * s - r * r))
    }

    pub fn dphi_dt_standard(&self, t: f64, r: f64) -> f64 {
        let s = t + self.a;
        let e = s + self.b * (s * s - r * r);
        -self.kappa.value() * SQRT_2 * (1.0 + 2.0 * self.b * s) / (e * e)
    }

    /// Time at which the member blows up at the origin, `-a - 1/b` (for `b < 0`).
    pub fn origin_blowup_time(&self) -> Option<f64> {
        (self.b < 0.0).then(|| -self.a - 1.0 / self.b)
    }

    /// Hyperboloidal time (`K = 3`) at which the member blows up at null infinity.
    pub fn scri_blowup_tau(&self) -> Option<f64> {
        (self.b < 0.0).then(|| -self.a - 0.5 / self.b)
    }
}

/// Spatially homogeneous solution `sqrt 2 / (b - t)`.
pub fn ode_solution(t: f64, b: f64) -> f64 {
    SQRT_2 / (b - t)
}

pub fn attractor_standard(t: f64, r: f64, params: &AttractorParams) -> f64 {
    params.phi_standard(t, r)
}

/// Rescaled attractor member in the `K = 3` hyperboloidal chart.
pub fn attractor_hyperboloidal(tau: f64, rho: f64, params: &AttractorParams) -> f64 {
    params.phi(tau, rho)
}

/// The globally regular solution `2 / sqrt((1 + (t-r)^2)(1 + (t+r)^2))`
/// with time-symmetric data `2 / (1 + r^2)`.
pub fn conformal_solution_standard(t: f64, r: f64) -> f64 {
    let (u, v) = (t - r, t + r);
    2.0 / ((1.0 + u * u) * (1.0 + v * v)).sqrt()
}

pub fn conformal_solution_dt_standard(t: f64, r: f64) -> f64 {
    let (u, v) = (t - r, t + r);
    let (x, y) = (1.0 + u * u, 1.0 + v * v);
    -conformal_solution_standard(t, r) * (u / x + v / y)
}

/// The conformal solution rescaled by `1/Omega` in the `K = 3` chart. The
/// factors are arranged so that `rho = 1` is regular: there it equals
/// `1 / sqrt(1 + tau^2)`.
pub fn conformal_solution_hyperboloidal(tau: f64, rho: f64) -> f64 {
    let c = ConformalTerms::new(tau, rho);
    4.0 / ((1.0 + rho) * (c.p * c.q).sqrt())
}

struct ConformalTerms {
    u: f64,
    v: f64,
    p: f64,
    q: f64,
}

impl ConformalTerms {
    // u = t - r and v (1 - rho) = (t + r)(1 - rho) expressed on the leaf
    fn new(tau: f64, rho: f64) -> Self {
        let u = tau + (1.0 - rho) / (1.0 + rho);
        let v = tau * (1.0 - rho) + 1.0 + rho;
        let w = 1.0 - rho;
        ConformalTerms {
            u,
            v,
            p: 1.0 + u * u,
            q: w * w + v * v,
        }
    }
}

fn conformal_log_derivatives(tau: f64, rho: f64) -> (f64, f64) {
    let c = ConformalTerms::new(tau, rho);
    let w = 1.0 - rho;
    let dlog_dtau = -c.u / c.p - c.v * w / c.q;
    let du = -2.0 / ((1.0 + rho) * (1.0 + rho));
    let dq = -2.0 * w + 2.0 * c.v * (1.0 - tau);
    let dlog_drho = -1.0 / (1.0 + rho) - c.u * du / c.p - 0.5 * dq / c.q;
    (dlog_dtau, dlog_drho)
}

/// Blowup hyperboloid `t = -a - 1/(2b) + sqrt(1/(4 b^2) + r^2)` of a member
/// with `b < 0`; its mean extrinsic curvature is `-6 b`.
pub fn blowup_surface(r: f64, params: &AttractorParams) -> Result<f64> {
    let b = params.b;
    if !(b < 0.0) {
        return Err(Error::domain("b", b, "b < 0 (blowup branch)"));
    }
    Ok(-params.a - 0.5 / b + (0.25 / (b * b) + r * r).sqrt())
}

/// Conformal inversion
/// `phi(t, r) -> phi(t / (r^2 - t^2), r / (t^2 - r^2)) / (t^2 - r^2)`, an
/// involution of the solution space.
pub fn conformal_inversion<F>(field: F) -> impl Fn(f64, f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    move |t, r| {
        let s = t * t - r * r;
        field(-t / s, r / s) / s
    }
}

/// Time translation `phi(t, r) -> phi(t + a, r)`.
pub fn time_translation<F>(field: F, a: f64) -> impl Fn(f64, f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    move |t, r| field(t + a, r)
}

/// Default cut-off `eps` for the `n = 2` profile, valid on `|y| <= 1 - eps`.
pub const EIGENMODE_EDGE: f64 = 1e-3;

/// One eigenmode `t^exponent * profile(y)`, `y = r/t`, of the linearization
/// around `sqrt 2 / t`. Profiles are defined up to normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenmodeProfile {
    pub index: usize,
    pub temporal_exponent: f64,
    edge: f64,
}

impl EigenmodeProfile {
    pub fn profile(&self, y: f64) -> Option<f64> {
        let y2 = y * y;
        match self.index {
            0 => Some(1.0 - y2),
            1 => Some(1.0),
            2 => {
                if y.abs() > 1.0 - self.edge {
                    return None;
                }
                let d = 1.0 - y2;
                Some((1.0 - 2.0 * y2 / 3.0 + y2 * y2 / 5.0) / (d * d * d))
            }
            _ => None,
        }
    }

    /// `t^exponent * profile(r/t)`.
    pub fn evaluate(&self, t: f64, r: f64) -> Option<f64> {
        self.profile(r / t).map(|p| p * t.powf(self.temporal_exponent))
    }
}

pub fn eigenmode_profiles() -> [EigenmodeProfile; 3] {
    eigenmode_profiles_with_edge(EIGENMODE_EDGE)
}

pub fn eigenmode_profiles_with_edge(edge: f64) -> [EigenmodeProfile; 3] {
    [0.0, -2.0, -4.0].map(|e| EigenmodeProfile {
        index: (-e / 2.0) as usize,
        temporal_exponent: e,
        edge,
    })
}

/// Leading late-time difference between the conformal solution and the
/// member `(-1/sqrt 2, 1/sqrt 2)`: `-(3 + y^2) / ((1 - y^2)^3 t^4)`.
pub fn conformal_attractor_difference_profile(y: f64) -> f64 {
    let d = 1.0 - y * y;
    -(3.0 + y * y) / (d * d * d)
}

/// Optimal attractor parameters of the conformal solution.
pub fn conformal_optimal_params() -> AttractorParams {
    AttractorParams::positive(-1.0 / SQRT_2, 1.0 / SQRT_2)
}

/// A closed-form solution in the `K = 3` hyperboloidal chart.
pub trait HyperboloidalSolution: Sync {
    fn phi(&self, tau: f64, rho: f64) -> f64;
    fn dphi_dtau(&self, tau: f64, rho: f64) -> f64;
    fn dphi_drho(&self, tau: f64, rho: f64) -> f64;
}

/// A closed-form solution in standard coordinates.
pub trait StandardSolution: Sync {
    fn phi(&self, t: f64, r: f64) -> f64;
    fn dphi_dt(&self, t: f64, r: f64) -> f64;
}

impl HyperboloidalSolution for AttractorParams {
    fn phi(&self, tau: f64, rho: f64) -> f64 {
        AttractorParams::phi(self, tau, rho)
    }

    fn dphi_dtau(&self, tau: f64, rho: f64) -> f64 {
        // dPhi/dtau == dPhi/da
        self.value_and_gradient(tau, rho).1
    }

    fn dphi_drho(&self, tau: f64, rho: f64) -> f64 {
        let x = tau + self.a;
        let m = x - 1.0;
        let d = self.denominator(tau, rho);
        let dd = -2.0 * rho * m * (self.b * m + 1.0);
        -self.kappa.value() * 2.0 * SQRT_2 * dd / (d * d)
    }
}

impl StandardSolution for AttractorParams {
    fn phi(&self, t: f64, r: f64) -> f64 {
        self.phi_standard(t, r)
    }

    fn dphi_dt(&self, t: f64, r: f64) -> f64 {
        self.dphi_dt_standard(t, r)
    }
}

/// The conformal solution, usable in both charts.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConformalSolution;

impl HyperboloidalSolution for ConformalSolution {
    fn phi(&self, tau: f64, rho: f64) -> f64 {
        conformal_solution_hyperboloidal(tau, rho)
    }

    fn dphi_dtau(&self, tau: f64, rho: f64) -> f64 {
        conformal_solution_hyperboloidal(tau, rho) * conformal_log_derivatives(tau, rho).0
    }

    fn dphi_drho(&self, tau: f64, rho: f64) -> f64 {
        conformal_solution_hyperboloidal(tau, rho) * conformal_log_derivatives(tau, rho).1
    }
}

impl StandardSolution for ConformalSolution {
    fn phi(&self, t: f64, r: f64) -> f64 {
        conformal_solution_standard(t, r)
    }

    fn dphi_dt(&self, t: f64, r: f64) -> f64 {
        conformal_solution_dt_standard(t, r)
    }
}

/// Spatially homogeneous solution `sqrt 2 / (b - t)`.
#[derive(Debug, Clone, Copy)]
pub struct OdeSolution {
    pub b: f64,
}

impl StandardSolution for OdeSolution {
    fn phi(&self, t: f64, _r: f64) -> f64 {
        ode_solution(t, self.b)
    }

    fn dphi_dt(&self, t: f64, _r: f64) -> f64 {
        let d = self.b - t;
        SQRT_2 / (d * d)
    }
}

/// Negated solution (reflection symmetry).
#[derive(Debug, Clone, Copy)]
pub struct Reflected<S>(pub S);

impl<S: HyperboloidalSolution> HyperboloidalSolution for Reflected<S> {
    fn phi(&self, tau: f64, rho: f64) -> f64 {
        -self.0.phi(tau, rho)
    }
    fn dphi_dtau(&self, tau: f64, rho: f64) -> f64 {
        -self.0.dphi_dtau(tau, rho)
    }
    fn dphi_drho(&self, tau: f64, rho: f64) -> f64 {
        -self.0.dphi_drho(tau, rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{conformal_factor, Foliation};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    /// Fourth-order central second derivative.
    fn d2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
            / (12.0 * h * h)
    }

    fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    }

    fn wave_residual(f: &dyn Fn(f64, f64) -> f64, t: f64, r: f64, h: f64) -> f64 {
        let ftt = d2(|s| f(s, r), t, h);
        let frr = d2(|s| f(t, s), r, h);
        let fr = d1(|s| f(t, s), r, h);
        ftt - frr - 2.0 / r * fr - f(t, r).powi(3)
    }

    #[test]
    fn ode_solution_values() {
        assert_relative_eq!(ode_solution(0.0, 1.0), SQRT_2);
        assert!(!ode_solution(2.0, 2.0).is_finite());
        let b = 1.3;
        for t in [0.0, 0.5, 1.0] {
            let ftt = d2(|s| ode_solution(s, b), t, 1e-3);
            let exact = 2.0 * SQRT_2 / (b - t).powi(3);
            assert_relative_eq!(ftt, exact, max_relative = 1e-8);
            assert!((ftt - ode_solution(t, b).powi(3)).abs() < 1e-7 * exact);
        }
    }

    #[test]
    fn attractor_standard_values() {
        let p = AttractorParams::positive(1.0, 0.0);
        for t in [0.0, 1.0, 7.5] {
            assert_relative_eq!(attractor_standard(t, 3.0, &p), SQRT_2 / (t + 1.0));
        }
        let p = AttractorParams::positive(-FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        assert_relative_eq!(attractor_standard(0.0, 0.0, &p), -4.0, max_relative = 1e-14);
        let m = AttractorParams::new(0.3, 0.2, Sign::Minus);
        assert_relative_eq!(
            attractor_standard(1.0, 0.5, &m),
            -attractor_standard(1.0, 0.5, &AttractorParams::positive(0.3, 0.2))
        );
    }

    #[test]
    fn attractor_solves_the_wave_equation() {
        let p = AttractorParams::positive(0.4, 0.25);
        let f = move |t: f64, r: f64| attractor_standard(t, r, &p);
        // residual of the 4th-order oracle falls by ~16 per halving
        let mut prev = f64::INFINITY;
        for h in [4e-2, 2e-2, 1e-2] {
            let res: f64 = [(2.0, 0.5), (3.0, 1.2), (5.0, 2.0)]
                .iter()
                .map(|&(t, r)| wave_residual(&f, t, r, h).abs())
                .fold(0.0, f64::max);
            assert!(res < prev / 10.0, "{res} vs {prev}");
            prev = res;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn conformal_solution_values() {
        assert_eq!(conformal_solution_standard(0.0, 0.0), 2.0);
        assert_relative_eq!(conformal_solution_standard(0.0, 1.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(conformal_solution_standard(10.0, 0.0), 2.0 / 101.0, max_relative = 1e-15);
        let f = |t: f64, r: f64| conformal_solution_standard(t, r);
        for &(t, r) in &[(0.5, 0.3), (2.0, 1.0), (4.0, 3.5)] {
            assert!(wave_residual(&f, t, r, 1e-2).abs() < 1e-6);
        }
    }

    #[test]
    fn hyperboloidal_forms_match_standard_chart() {
        let fol = Foliation::default();
        let p = AttractorParams::positive(0.3, 0.1);
        for i in 0..=99 {
            let rho = 0.99 * i as f64 / 99.0;
            for tau in [0.0, 0.7, 3.0, 20.0] {
                let (t, r) = fol.to_standard(tau, rho).unwrap();
                let om = conformal_factor(rho).unwrap();
                let lhs = om * attractor_hyperboloidal(tau, rho, &p);
                assert_relative_eq!(lhs, attractor_standard(t, r, &p), max_relative = 1e-12);
                let lhs = om * conformal_solution_hyperboloidal(tau, rho);
                assert_relative_eq!(lhs, conformal_solution_standard(t, r), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn scri_values() {
        for a in [-2.0, 0.0, 1.5] {
            let crit = AttractorParams::positive(a, 0.0);
            for tau in [0.0, 3.0, 100.0] {
                assert_relative_eq!(crit.phi(tau, 1.0), SQRT_2, max_relative = 1e-15);
            }
        }
        let p = AttractorParams::positive(0.5, 0.1);
        for tau in [0.0, 2.0, 40.0] {
            let expected = SQRT_2 / (2.0 * 0.1 * (tau + 0.5) + 1.0);
            assert_relative_eq!(p.phi(tau, 1.0), expected, max_relative = 1e-14);
            assert_relative_eq!(p.phi_at_scri(tau), expected, max_relative = 1e-14);
        }
        for tau in [0.0, 1.0, 10.0] {
            assert_relative_eq!(
                conformal_solution_hyperboloidal(tau, 1.0),
                1.0 / (1.0 + tau * tau).sqrt(),
                max_relative = 1e-14
            );
        }
    }

    fn check_solution_derivatives(s: &dyn HyperboloidalSolution) {
        let e = 1e-4;
        for &(tau, rho) in &[(0.0, 0.0), (0.3, 0.2), (2.0, 0.7), (5.0, 0.95), (1.0, 1.0 - 2.0 * e)] {
            let dt = d1(|x| s.phi(x, rho), tau, e);
            let dr = d1(|x| s.phi(tau, x), rho.max(2.0 * e), e);
            assert!((s.dphi_dtau(tau, rho) - dt).abs() < 1e-9, "tau-derivative at {tau},{rho}: {} vs {dt}", s.dphi_dtau(tau, rho));
            assert!(
                (s.dphi_drho(tau, rho.max(2.0 * e)) - dr).abs() < 1e-9,
                "rho-derivative at {tau},{rho}"
            );
        }
    }

    #[test]
    fn analytic_chart_derivatives() {
        check_solution_derivatives(&ConformalSolution);
        check_solution_derivatives(&AttractorParams::positive(0.5, 0.1));
        check_solution_derivatives(&AttractorParams::new(1.0, -0.05, Sign::Minus));
        let c = ConformalSolution;
        for &(t, r) in &[(0.0, 0.0), (1.0, 0.5), (3.0, 2.0)] {
            let dt = d1(|x| StandardSolution::phi(&c, x, r), t, 1e-4);
            assert!((c.dphi_dt(t, r) - dt).abs() < 1e-10);
        }
    }

    #[test]
    fn blowup_surface_values() {
        let p = AttractorParams::positive(0.0, -1.0);
        assert_relative_eq!(blowup_surface(0.0, &p).unwrap(), 1.0);
        let p = AttractorParams::positive(0.0, -0.5);
        assert_relative_eq!(blowup_surface(0.0, &p).unwrap(), 2.0);
        assert!(blowup_surface(0.0, &AttractorParams::positive(0.0, 0.0)).is_err());
        assert!(blowup_surface(0.0, &AttractorParams::positive(0.0, 0.2)).is_err());

        // b = -1/2 coincides with a leaf of the K = 3 foliation
        let fol = Foliation::default();
        let p = AttractorParams::positive(0.25, -0.5);
        let tau0 = fol.tau_of(blowup_surface(0.0, &p).unwrap(), 0.0);
        for i in 0..100 {
            let r = 0.37 * i as f64;
            let tau = fol.tau_of(blowup_surface(r, &p).unwrap(), r);
            assert!((tau - tau0).abs() < 1e-12, "r = {r}");
        }
        // the field is singular there
        let t = blowup_surface(1.7, &p).unwrap();
        assert!(attractor_standard(t, 1.7, &p).abs() > 1e12);
    }

    #[test]
    fn conformal_inversion_maps_ode_onto_family() {
        for b in [0.0, 0.3, -0.7] {
            let ode = move |t: f64, _r: f64| ode_solution(t, b);
            let inverted = conformal_inversion(ode);
            let translated = time_translation(&inverted, 0.4);
            let p = AttractorParams::positive(0.4, b);
            for &(t, r) in &[(2.0, 0.5), (5.0, 1.0), (9.0, 8.0)] {
                assert_relative_eq!(translated(t, r), p.phi_standard(t, r), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn conformal_inversion_is_involution() {
        let fields: Vec<Box<dyn Fn(f64, f64) -> f64>> = vec![
            Box::new(|t, r| conformal_solution_standard(t, r)),
            Box::new(|t, r| (t * 0.3).sin() + r * r),
            Box::new(|t, r| AttractorParams::positive(0.2, 0.3).phi_standard(t, r)),
        ];
        for f in &fields {
            let twice = conformal_inversion(conformal_inversion(|t, r| f(t, r)));
            for &(t, r) in &[(2.0, 0.5), (3.0, 1.0), (0.7, 0.1), (-4.0, 1.5)] {
                assert_relative_eq!(twice(t, r), f(t, r), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn eigenmodes() {
        let modes = eigenmode_profiles();
        assert_eq!(
            modes.map(|m| m.temporal_exponent),
            [0.0, -2.0, -4.0]
        );
        assert_eq!(modes[0].profile(0.0), Some(1.0));
        assert_eq!(modes[1].profile(0.9), Some(1.0));
        assert!(modes[2].profile(0.9995).is_none());
        assert!(modes[2].profile(0.99).is_some());

        // symmetry modes: derivatives along the family at (0, 0)
        let e = 1e-6;
        let at = |a: f64, b: f64, t: f64, r: f64| AttractorParams::positive(a, b).phi_standard(t, r);
        for &t in &[2.0, 5.0, 11.0] {
            let ratios_b: Vec<f64> = [0.0, 0.3, 0.6, 0.8]
                .iter()
                .map(|&y| {
                    let db = (at(0.0, e, t, y * t) - at(0.0, -e, t, y * t)) / (2.0 * e);
                    db / modes[0].profile(y).unwrap()
                })
                .collect();
            for r in &ratios_b {
                assert_relative_eq!(*r, ratios_b[0], max_relative = 1e-6);
            }
            let da = |y: f64| (at(e, 0.0, t, y * t) - at(-e, 0.0, t, y * t)) / (2.0 * e);
            assert_relative_eq!(da(0.0), da(0.7), max_relative = 1e-6);
            let (da5, da10) = (
                (at(e, 0.0, 5.0, 1.0) - at(-e, 0.0, 5.0, 1.0)) / (2.0 * e),
                (at(e, 0.0, 10.0, 1.0) - at(-e, 0.0, 10.0, 1.0)) / (2.0 * e),
            );
            assert_relative_eq!(da5 / da10, 4.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn conformal_solution_late_time_difference() {
        let p = conformal_optimal_params();
        let t = 1e3;
        for y in [0.0, 0.3, 0.6] {
            let r = y * t;
            let diff = conformal_solution_standard(t, r) - p.phi_standard(t, r);
            let scaled = t.powi(4) * diff;
            let expected = conformal_attractor_difference_profile(y);
            assert!(((scaled - expected) / expected).abs() < 0.01, "y={y}: {scaled} vs {expected}");
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(a in -1.0f64..1.0, b in 0.05f64..1.0, tau in 0.0f64..10.0, rho in 0.0f64..1.0) {
            let p = AttractorParams::positive(a, b);
            let (_, ga, gb) = p.value_and_gradient(tau, rho);
            let e = 1e-6;
            let fa = (AttractorParams::positive(a + e, b).phi(tau, rho) - AttractorParams::positive(a - e, b).phi(tau, rho)) / (2.0 * e);
            let fb = (AttractorParams::positive(a, b + e).phi(tau, rho) - AttractorParams::positive(a, b - e).phi(tau, rho)) / (2.0 * e);
            prop_assert!((ga - fa).abs() <= 1e-6 * (1.0 + fa.abs()));
            prop_assert!((gb - fb).abs() <= 1e-6 * (1.0 + fb.abs()));
        }
    }
}
