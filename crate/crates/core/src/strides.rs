//! Per-stride displacements and the z-score loss comparing them.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::data::StrideRange;
use crate::error::{Error, Result};
use crate::se2::PoseSE2;

/// Motion over one stride in the stride's initial body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrideRecord {
    pub dx: f64,
    pub dy: f64,
    /// Heading change, unwrapped.
    pub dtheta: f64,
}

impl StrideRecord {
    pub fn get(&self, q: usize) -> f64 {
        [self.dx, self.dy, self.dtheta][q]
    }
}

pub const VARIABLES: [&str; 3] = ["x", "y", "theta"];

/// `g_start⁻¹ · g_end` for each range, read from `traj` (a single
/// trajectory's poses; the ranges' trajectory ids are not consulted).
pub fn stride_displacements(traj: &[PoseSE2], ranges: &[StrideRange]) -> Result<Vec<StrideRecord>> {
    ranges
        .iter()
        .map(|r| {
            if r.start >= r.end || r.end >= traj.len() {
                return Err(Error::Validation(alloc::format!(
                    "stride [{}, {}) out of bounds for {} poses",
                    r.start,
                    r.end,
                    traj.len()
                )));
            }
            let d = traj[r.start].between(&traj[r.end]);
            Ok(StrideRecord { dx: d.x, dy: d.y, dtheta: d.theta })
        })
        .collect()
}

/// Sum over x, y and θ of `sqrt(mean (pred − truth)² / (2 Var(truth)))`.
///
/// Zero for a perfect prediction; a random permutation of the truth scores
/// about 1 per variable, 3 in total.
pub fn zscore_loss(pred: &[StrideRecord], truth: &[StrideRecord]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
    }
    if truth.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: truth.len() });
    }
    let n = truth.len() as f64;
    let mut total = 0.0;
    for (q, name) in VARIABLES.iter().enumerate() {
        let mean = truth.iter().map(|s| s.get(q)).sum::<f64>() / n;
        let var = truth.iter().map(|s| (s.get(q) - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::ZeroVariance(name));
        }
        let mse = pred.iter().zip(truth).map(|(p, t)| (p.get(q) - t.get(q)).powi(2)).sum::<f64>() / n;
        total += (mse / (2.0 * var)).sqrt();
    }
    Ok(total)
}
