//! Gaussian kernel density curves for prediction and residual summaries.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule `0.9 · min(σ, IQR / 1.34) · n^(−1/5)`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    pub fn trapezoid_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        _ => return Err(Error::IdenticalSamples),
    };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Kernel density estimate on `grid_points` uniform points spanning
/// `[min − 3h, max + 3h]`, scaled to unit trapezoidal mass on that grid.
pub fn ksde(samples: &[f64], bandwidth: Bandwidth, grid_points: usize) -> Result<DensityCurve> {
    if samples.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: samples.len() });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite sample".into()));
    }
    let h = match bandwidth {
        Bandwidth::Auto => silverman_bandwidth(samples)?,
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(_) => return Err(Error::Validation("bandwidth must be positive".into())),
    };
    let grid_points = grid_points.max(2);
    let lo = samples.iter().fold(f64::INFINITY, |a, &b| a.min(b)) - 3.0 * h;
    let hi = samples.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) + 3.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&g| norm * samples.iter().map(|&s| (-0.5 * ((g - s) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    let mass = trapezoid(&grid, &density);
    density.iter_mut().for_each(|d| *d /= mass);
    Ok(DensityCurve { grid, density, bandwidth: h })
}
