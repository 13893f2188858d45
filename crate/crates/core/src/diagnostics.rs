//! Norms, convergence factors, local power indices and log-log slopes.

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::hyperboloidal::Run;
use crate::stencil::fornberg_weights;

/// A sampled scalar observable.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    /// Checks equal lengths and strictly increasing times.
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Config(format!(
                "time series has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("time series times must increase strictly".into()));
        }
        Ok(TimeSeries {
            label: label.into(),
            times,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> TimeSeries {
        let (times, values) = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(t, v)| (*t, *v))
            .unzip();
        TimeSeries {
            label: self.label.clone(),
            times,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> TimeSeries {
        TimeSeries {
            label: self.label.clone(),
            times: self.times.clone(),
            values: self.times.iter().zip(&self.values).map(|(t, v)| f(*t, *v)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Drops non-finite values.
    pub fn finite(&self) -> TimeSeries {
        let (times, values) = self.iter().filter(|(_, v)| v.is_finite()).unzip();
        TimeSeries {
            label: self.label.clone(),
            times,
            values,
        }
    }
}

/// `sqrt(h sum w_i f_i^2)` with trapezoid weights (1/2 at both ends).
pub fn l2_norm(profile: &[f64], grid: &RadialGrid) -> f64 {
    l2_norm_spacing(profile, grid.h())
}

pub(crate) fn l2_norm_spacing(profile: &[f64], h: f64) -> f64 {
    let n = profile.len();
    if n == 0 {
        return 0.0;
    }
    let mut s: f64 = profile.iter().map(|v| v * v).sum();
    if n > 1 {
        s -= 0.5 * (profile[0] * profile[0] + profile[n - 1] * profile[n - 1]);
    }
    (h * s).sqrt()
}

/// Injection of a fine profile onto every `ratio`-th point.
pub fn restrict(fine: &[f64], ratio: usize) -> Vec<f64> {
    fine.iter().step_by(ratio).copied().collect()
}

/// `Q = log2(|low - med| / |med - high|)` on the coarse grid, given three
/// profiles at the same time on nested grids with ratios 1:2:4.
pub fn convergence_factor_profiles(low: &[f64], med: &[f64], high: &[f64], h_low: f64) -> f64 {
    let med = restrict(med, 2);
    let high = restrict(high, 4);
    let d1: Vec<f64> = low.iter().zip(&med).map(|(a, b)| a - b).collect();
    let d2: Vec<f64> = med.iter().zip(&high).map(|(a, b)| a - b).collect();
    let n1 = l2_norm_spacing(&d1, h_low);
    let n2 = l2_norm_spacing(&d2, h_low);
    // a zero denominator gives inf/NaN on purpose
    (n1 / n2).log2()
}

/// Convergence factor over the sample times shared by three runs with
/// `n`, `2n` and `4n` cells.
pub fn convergence_factor(low: &Run, med: &Run, high: &Run) -> Result<TimeSeries> {
    let n = low.grid.n_cells();
    if med.grid.nests(&low.grid) != Some(2) || high.grid.nests(&low.grid) != Some(4) {
        return Err(Error::Config(format!(
            "convergence needs n, 2n, 4n cells; got {}, {}, {}",
            n,
            med.grid.n_cells(),
            high.grid.n_cells()
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for s in low.regular_snapshots() {
        let (Some(m), Some(h)) = (med.snapshot_at(s.tau), high.snapshot_at(s.tau)) else {
            continue;
        };
        times.push(s.tau);
        values.push(convergence_factor_profiles(&s.phi, &m.phi, &h.phi, low.grid.h()));
    }
    if times.is_empty() {
        return Err(Error::InsufficientData("runs share no sample times".into()));
    }
    TimeSeries::new("Q", times, values)
}

/// `p = d ln|f| / d ln t` by 5-point finite differences in `ln t` (one-sided
/// near the ends). Samples whose stencil meets a sign change or zero of
/// `f` are dropped; `t` must be positive.
pub fn local_power_index(series: &TimeSeries) -> Result<TimeSeries> {
    let n = series.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "power index needs 5 samples, got {n}"
        )));
    }
    if series.times[0] <= 0.0 {
        return Err(Error::domain("tau", series.times[0], "tau > 0 for a power index"));
    }
    let x: Vec<f64> = series.times.iter().map(|t| t.ln()).collect();
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(2).min(n - 5);
        let window = &series.values[lo..lo + 5];
        let s0 = window[0].signum();
        if window.iter().any(|v| *v == 0.0 || !v.is_finite() || v.signum() != s0) {
            continue;
        }
        let y: Vec<f64> = window.iter().map(|v| v.abs().ln()).collect();
        let w = fornberg_weights(x[i], &x[lo..lo + 5], 1);
        times.push(series.times[i]);
        values.push(w.iter().zip(&y).map(|(a, b)| a * b).sum());
    }
    TimeSeries::new(format!("p[{}]", series.label), times, values)
}

/// Least-squares line with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Config("x and y lengths differ".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("line fit needs 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (se_s, se_i) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let s2 = rss / (nf - 2.0);
        let se_s = (s2 / sxx).sqrt();
        (se_s, (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr: se_s,
        intercept_stderr: se_i,
        points: n,
    })
}

/// Slope of `ln|y|` against `ln x` for samples with `x` in `[x0, x1]`.
pub fn loglog_slope(x: &[f64], y: &[f64], window: (f64, f64)) -> Result<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, _)| **a >= window.0 && **a <= window.1)
        .map(|(a, b)| (*a, *b))
        .unzip();
    if lx.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "log-log slope needs 3 points in the window, got {}",
            lx.len()
        )));
    }
    if lx.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("x", 0.0, "positive abscissae"));
    }
    if ly.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::domain("y", 0.0, "nonzero finite values"));
    }
    let lx: Vec<f64> = lx.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ly.iter().map(|v| v.abs().ln()).collect();
    linear_fit(&lx, &ly)
}

/// [`loglog_slope`] on a time series.
pub fn series_loglog_slope(series: &TimeSeries, t0: f64, t1: f64) -> Result<LinearFit> {
    loglog_slope(&series.times, &series.values, (t0, t1))
}

/// Exponent `p` of `f(t) = f_inf + c t^p` on `[t0, t1]` without knowing
/// `f_inf`: the log-log slope of the successive differences of `f`, plus
/// one. The returned fit carries that shifted slope.
pub fn convergence_exponent(series: &TimeSeries, t0: f64, t1: f64) -> Result<LinearFit> {
    let w = series.window(t0, t1);
    let (mid, diff): (Vec<f64>, Vec<f64>) = w
        .times
        .windows(2)
        .zip(w.values.windows(2))
        .map(|(t, v)| (0.5 * (t[0] + t[1]), (v[1] - v[0]) / (t[1] - t[0])))
        .unzip();
    let mut fit = loglog_slope(&mid, &diff, (t0, t1))?;
    fit.slope += 1.0;
    Ok(fit)
}

/// Power law `|phi(tau, rho_i)| ~ amplitude (T - tau)^slope` of the physical
/// field `phi = Omega Phi` at grid index `i` of a blown-up run, over
/// `T - tau` in `window`, using the run's extrapolated `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupRate {
    pub blowup_tau: f64,
    pub slope: f64,
    pub amplitude: f64,
    pub fit: LinearFit,
}

pub fn blowup_rate(run: &Run, i: usize, window: (f64, f64)) -> Result<BlowupRate> {
    if !run.blowup.detected {
        return Err(Error::InsufficientData("run did not blow up".into()));
    }
    let t_b = run.blowup.tau_estimate;
    let omega = crate::grid::conformal_factor(run.grid.rho()[i])?;
    let (s, v): (Vec<f64>, Vec<f64>) = run
        .snapshots
        .iter()
        .map(|snap| (t_b - snap.tau, omega * snap.phi[i]))
        .filter(|(s, _)| *s > 0.0)
        .unzip();
    let fit = loglog_slope(&s, &v, window)?;
    Ok(BlowupRate {
        blowup_tau: t_b,
        slope: fit.slope,
        amplitude: fit.intercept.exp(),
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn convergence_exponent_ignores_the_limit() {
        let t: Vec<f64> = (10..=60).map(f64::from).collect();
        for (limit, c, p) in [(16.6, 0.3, -2.0), (-1.9, -0.05, -1.0), (0.0, 1.0, -1.5)] {
            let v = t.iter().map(|x| limit + c * x.powf(p)).collect();
            let s = TimeSeries::new("f", t.clone(), v).unwrap();
            let fit = convergence_exponent(&s, 10.0, 60.0).unwrap();
            assert!((fit.slope - p).abs() < 5e-3, "{p}: {}", fit.slope);
        }
    }

    #[test]
    fn series_validation() {
        assert!(TimeSeries::new("x", vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(TimeSeries::new("x", vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        let s = TimeSeries::new("x", vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.window(0.5, 2.0).values, vec![2.0, 3.0]);
    }

    #[test]
    fn l2_examples() {
        let g = RadialGrid::new(400).unwrap();
        assert_eq!(l2_norm(&vec![0.0; g.len()], &g), 0.0);
        assert_relative_eq!(l2_norm(&vec![1.0; g.len()], &g), 1.0, epsilon = 1e-14);
        let f: Vec<f64> = g.rho().to_vec();
        assert!((l2_norm(&f, &g) - 1.0 / 3f64.sqrt()).abs() < 1e-6);
    }

    fn manufactured(order: i32) -> f64 {
        let base = |n: usize| -> Vec<f64> {
            let h = 1.0 / n as f64;
            (0..=n)
                .map(|i| {
                    let x = i as f64 * h;
                    x.sin() + h.powi(order) * (3.0 * x).cos()
                })
                .collect()
        };
        convergence_factor_profiles(&base(50), &base(100), &base(200), 1.0 / 50.0)
    }

    #[test]
    fn manufactured_orders() {
        assert_relative_eq!(manufactured(6), 6.0, epsilon = 1e-6);
        assert_relative_eq!(manufactured(4), 4.0, epsilon = 1e-8);
    }

    #[test]
    fn convergence_factor_is_scale_invariant() {
        let mk = |n: usize, c: f64| -> Vec<f64> {
            let h = 1.0 / n as f64;
            (0..=n).map(|i| c * ((i as f64 * h).exp() + h.powi(5) * 2.0)).collect()
        };
        let q1 = convergence_factor_profiles(&mk(40, 1.0), &mk(80, 1.0), &mk(160, 1.0), 1.0 / 40.0);
        let q2 = convergence_factor_profiles(&mk(40, -7.5), &mk(80, -7.5), &mk(160, -7.5), 1.0 / 40.0);
        // differences are ~1e-8 of the profiles, so rounding enters at ~1e-8
        assert_relative_eq!(q1, q2, epsilon = 1e-6);
        assert_relative_eq!(q1, 5.0, epsilon = 1e-6);
    }

    #[test]
    fn identical_profiles_flag_non_finite() {
        let p = vec![1.0; 11];
        let q = convergence_factor_profiles(&p, &vec![1.0; 21], &vec![1.0; 41], 0.1);
        assert!(!q.is_finite());
    }

    #[test]
    fn power_index_examples() {
        let t: Vec<f64> = (1..200).map(|k| k as f64 * 0.5).collect();
        let s = TimeSeries::new("f", t.clone(), t.iter().map(|x| x.powi(-2)).collect()).unwrap();
        let p = local_power_index(&s).unwrap();
        assert_eq!(p.len(), s.len());
        for v in &p.values {
            assert!((v + 2.0).abs() < 1e-9, "{v}");
        }
        let c = TimeSeries::new("c", t.clone(), vec![3.0; t.len()]).unwrap();
        assert!(local_power_index(&c).unwrap().values.iter().all(|v| v.abs() < 1e-12));
        // zero crossing is masked
        let z = TimeSeries::new("z", t.clone(), t.iter().map(|x| x - 10.1).collect()).unwrap();
        let pz = local_power_index(&z).unwrap();
        assert!(pz.len() < z.len() && pz.times.iter().all(|x| (x - 10.1).abs() > 0.5));
    }

    #[test]
    fn loglog_examples() {
        let t: Vec<f64> = (1..100).map(|k| k as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| 5.0 * x.powi(-4)).collect();
        assert_relative_eq!(loglog_slope(&t, &y, (1.0, 100.0)).unwrap().slope, -4.0, epsilon = 1e-10);
        let s: Vec<f64> = (1..50).map(|k| 1e-5 * 1.2f64.powi(k)).collect();
        let y: Vec<f64> = s.iter().map(|x| 3.0 * x * x).collect();
        assert_relative_eq!(loglog_slope(&s, &y, (0.0, 1.0)).unwrap().slope, 2.0, epsilon = 1e-10);
        assert!(loglog_slope(&t, &y, (1.0, 2.0)).is_err());
    }

    proptest! {
        #[test]
        fn power_index_of_product_adds(p in -4.0f64..2.0, q in -3.0f64..3.0) {
            let t: Vec<f64> = (1..60).map(|k| 1.0 + k as f64 * 0.25).collect();
            let mk = |e: f64| TimeSeries::new("x", t.clone(), t.iter().map(|x| x.powf(e)).collect()).unwrap();
            let a = local_power_index(&mk(p)).unwrap();
            let b = local_power_index(&mk(q)).unwrap();
            let ab = local_power_index(&mk(p + q)).unwrap();
            for i in 0..ab.len() {
                prop_assert!((ab.values[i] - a.values[i] - b.values[i]).abs() < 1e-8);
            }
        }

        #[test]
        fn l2_triangle_inequality(f in proptest::collection::vec(-10.0f64..10.0, 33),
                                  g in proptest::collection::vec(-10.0f64..10.0, 33)) {
            let grid = RadialGrid::new(32).unwrap();
            let s: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
            prop_assert!(l2_norm(&s, &grid) <= l2_norm(&f, &grid) + l2_norm(&g, &grid) + 1e-12);
        }
    }
}
