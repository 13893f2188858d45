//! Compactified radial grid and the hyperboloidal foliation.
//!
//! The foliation is the family of shifted hyperboloids
//! `tau = t - sqrt(9/K^2 + r^2)` with constant mean curvature `K`, and the
//! radial coordinate is compactified through `r = rho / Omega` with
//! `Omega = (1 - rho^2) / 2`. Future null infinity sits at `rho = 1`.

use crate::error::{Error, Result};

/// Mean curvature used by the evolution equations.
pub const DEFAULT_MEAN_CURVATURE: f64 = 3.0;

/// Vertex-centered uniform grid on `[0, 1]`: both the origin and null
/// infinity are grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    n_cells: usize,
    h: f64,
    rho: Vec<f64>,
}

impl RadialGrid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        let h = 1.0 / n_cells as f64;
        // i/n rather than i*h keeps the end points exact.
        let rho = (0..=n_cells).map(|i| i as f64 / n_cells as f64).collect();
        Ok(RadialGrid { n_cells, h, rho })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of grid points (`n_cells + 1`).
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn last(&self) -> usize {
        self.n_cells
    }

    /// Index of the grid point closest to `rho`.
    pub fn nearest_index(&self, rho: f64) -> usize {
        let i = (rho.clamp(0.0, 1.0) * self.n_cells as f64).round();
        i as usize
    }

    /// Grid point closest to the physical radius `r` (`r = inf` maps to null infinity).
    pub fn nearest_index_to_radius(&self, r: f64) -> usize {
        if r.is_infinite() {
            return self.last();
        }
        self.nearest_index(compactified_radius(r))
    }

    /// `Some(ratio)` when `coarse` is obtained from `self` by keeping every
    /// `ratio`-th point.
    pub fn nests(&self, coarse: &RadialGrid) -> Option<usize> {
        if self.n_cells % coarse.n_cells != 0 {
            return None;
        }
        Some(self.n_cells / coarse.n_cells)
    }
}

/// `Omega(rho) = (1 - rho^2) / 2`.
pub fn conformal_factor(rho: f64) -> Result<f64> {
    check_unit_interval(rho)?;
    Ok(0.5 * (1.0 - rho * rho))
}

/// `r = rho / Omega = 2 rho / (1 - rho^2)`; infinite at null infinity, so
/// `rho = 1` is rejected.
pub fn physical_radius(rho: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::domain("rho", rho, "0 <= rho < 1"));
    }
    Ok(2.0 * rho / (1.0 - rho * rho))
}

/// Inverse of [`physical_radius`], written in the cancellation-free form
/// `rho = r / (1 + sqrt(1 + r^2))`.
pub fn compactified_radius(r: f64) -> f64 {
    if r.is_infinite() {
        return 1.0;
    }
    r / (1.0 + (1.0 + r * r).sqrt())
}

/// Ricci scalar of the rescaled metric `g = Omega^2 eta` in the `(tau, rho)` chart.
pub fn ricci_scalar(rho: f64) -> Result<f64> {
    check_unit_interval(rho)?;
    Ok(ricci_scalar_unchecked(rho))
}

pub(crate) fn ricci_scalar_unchecked(rho: f64) -> f64 {
    let r2 = rho * rho;
    let d = 1.0 + r2;
    12.0 * (1.0 - r2) * (3.0 + r2) / (d * d * d)
}

fn check_unit_interval(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain("rho", rho, "0 <= rho <= 1"));
    }
    Ok(())
}

/// The constant-mean-curvature foliation `tau = t - sqrt(9/K^2 + r^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Foliation {
    mean_curvature: f64,
}

impl Default for Foliation {
    fn default() -> Self {
        Foliation {
            mean_curvature: DEFAULT_MEAN_CURVATURE,
        }
    }
}

impl Foliation {
    pub fn new(mean_curvature: f64) -> Result<Self> {
        if !(mean_curvature > 0.0) || !mean_curvature.is_finite() {
            return Err(Error::domain("K", mean_curvature, "K > 0"));
        }
        Ok(Foliation { mean_curvature })
    }

    pub fn mean_curvature(&self) -> f64 {
        self.mean_curvature
    }

    /// `sqrt(9/K^2 + r^2)`, the height of the leaf above `t = tau`.
    pub fn height(&self, r: f64) -> f64 {
        let k = 3.0 / self.mean_curvature;
        k.hypot(r)
    }

    pub fn to_hyperboloidal(&self, t: f64, r: f64) -> Result<(f64, f64)> {
        if !(r >= 0.0) {
            return Err(Error::domain("r", r, "r >= 0"));
        }
        Ok((t - self.height(r), compactified_radius(r)))
    }

    pub fn to_standard(&self, tau: f64, rho: f64) -> Result<(f64, f64)> {
        let r = physical_radius(rho)?;
        Ok((tau + self.height(r), r))
    }

    /// Leaf time of the point `(t, r)`.
    pub fn tau_of(&self, t: f64, r: f64) -> f64 {
        t - self.height(r)
    }
}

/// A spacetime point carried in both charts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub t: f64,
    pub r: f64,
    pub tau: f64,
    pub rho: f64,
}

impl ChartPoint {
    pub fn from_standard(t: f64, r: f64, foliation: &Foliation) -> Result<Self> {
        let (tau, rho) = foliation.to_hyperboloidal(t, r)?;
        Ok(ChartPoint { t, r, tau, rho })
    }

    pub fn from_hyperboloidal(tau: f64, rho: f64, foliation: &Foliation) -> Result<Self> {
        let (t, r) = foliation.to_standard(tau, rho)?;
        Ok(ChartPoint { t, r, tau, rho })
    }
}
