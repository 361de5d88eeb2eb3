//! Shape/pose trajectories, velocity derivation and stride segmentation.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::se2::{log_se2, PoseSE2};

/// One time sample of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSample {
    pub t: f64,
    pub r: Vec<f64>,
    pub rdot: Option<Vec<f64>>,
    /// World-frame pose.
    pub pose: Option<PoseSE2>,
    /// Gait phase in `[0, 2π)`.
    pub phase: Option<f64>,
    /// Body velocity `(vx, vy, ω)`.
    pub vb: Option<Vec<f64>>,
}

impl ShapeSample {
    pub fn new(t: f64, r: Vec<f64>) -> Self {
        Self { t, r, rdot: None, pose: None, phase: None, vb: None }
    }
}

/// A point of the motility-map graph. Flattened order is `(r, ṙ, v_b)`, so
/// the regression input block `(r, ṙ)` precedes the output block.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPoint {
    pub r: Vec<f64>,
    pub rdot: Vec<f64>,
    pub vb: Vec<f64>,
}

impl GraphPoint {
    pub fn dim(&self) -> usize {
        self.r.len() + self.rdot.len() + self.vb.len()
    }

    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.r.iter().chain(&self.rdot).chain(&self.vb).copied(),
        )
    }

    pub fn unflatten(flat: &[f64], ns: usize, nb: usize) -> Result<Self> {
        if flat.len() != 2 * ns + nb {
            return Err(Error::DimensionMismatch { expected: 2 * ns + nb, got: flat.len() });
        }
        Ok(Self {
            r: flat[..ns].to_vec(),
            rdot: flat[ns..2 * ns].to_vec(),
            vb: flat[2 * ns..].to_vec(),
        })
    }

    /// Reorders into the `(v_b, r, ṙ)` layout used when writing the graph
    /// with the body velocity first.
    pub fn to_velocity_first(&self) -> Vec<f64> {
        self.vb.iter().chain(&self.r).chain(&self.rdot).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<ShapeSample>,
}

impl Trajectory {
    pub fn new(samples: Vec<ShapeSample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Forward time steps, one per sample; the last repeats the final interval.
    pub fn steps(&self) -> Vec<f64> {
        let n = self.samples.len();
        (0..n)
            .map(|i| {
                if i + 1 < n {
                    self.samples[i + 1].t - self.samples[i].t
                } else if n >= 2 {
                    self.samples[n - 1].t - self.samples[n - 2].t
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn poses(&self) -> Option<Vec<PoseSE2>> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    pub fn phases(&self) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.phase).collect()
    }
}

/// Half-open sample range `[start, end)` of one gait cycle. The stride's
/// displacement runs from the pose at `start` to the pose at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrideRange {
    pub trajectory: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ns: usize,
    pub nb: usize,
    pub trajectories: Vec<Trajectory>,
    pub stride_ranges: Vec<StrideRange>,
}

impl Dataset {
    /// Builds a validated dataset: shared dimensions, strictly increasing
    /// time, phases in `[0, 2π)`, finite values.
    pub fn new(ns: usize, nb: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        let d = Self { ns, nb, trajectories, stride_ranges: Vec::new() };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() || self.trajectories.iter().all(Trajectory::is_empty) {
            return Err(Error::Validation("dataset has no samples".into()));
        }
        for (ti, traj) in self.trajectories.iter().enumerate() {
            if traj.is_empty() {
                return Err(Error::Validation(format!("trajectory {ti} is empty")));
            }
            for (i, s) in traj.samples.iter().enumerate() {
                let at = || format!("trajectory {ti}, sample {i}");
                if !s.t.is_finite() {
                    return Err(Error::Validation(format!("{}: non-finite time", at())));
                }
                if i > 0 && !(s.t > traj.samples[i - 1].t) {
                    return Err(Error::Validation(format!("{}: time not strictly increasing", at())));
                }
                if s.r.len() != self.ns {
                    return Err(Error::Validation(format!("{}: shape has {} entries, expected {}", at(), s.r.len(), self.ns)));
                }
                if s.rdot.as_ref().is_some_and(|v| v.len() != self.ns) {
                    return Err(Error::Validation(format!("{}: shape velocity has wrong length", at())));
                }
                if s.vb.as_ref().is_some_and(|v| v.len() != self.nb) {
                    return Err(Error::Validation(format!("{}: body velocity has wrong length", at())));
                }
                if let Some(p) = s.phase {
                    if !(0.0..TAU).contains(&p) {
                        return Err(Error::Validation(format!("{}: phase {p} outside [0, 2π)", at())));
                    }
                }
                let finite = s.r.iter().all(|v| v.is_finite())
                    && s.rdot.iter().flatten().all(|v| v.is_finite())
                    && s.vb.iter().flatten().all(|v| v.is_finite())
                    && s.pose.is_none_or(|p| p.is_finite());
                if !finite {
                    return Err(Error::Validation(format!("{}: non-finite value", at())));
                }
            }
        }
        for w in self.stride_ranges.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.trajectory == b.trajectory && b.start < a.end {
                return Err(Error::Validation("stride ranges overlap".into()));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = &ShapeSample> {
        self.trajectories.iter().flat_map(|t| t.samples.iter())
    }

    pub fn has_phase(&self) -> bool {
        self.samples().all(|s| s.phase.is_some())
    }

    /// Graph points of every sample carrying both ṙ and v_b.
    pub fn graph_points(&self) -> Vec<GraphPoint> {
        self.samples()
            .filter_map(|s| {
                Some(GraphPoint { r: s.r.clone(), rdot: s.rdot.clone()?, vb: s.vb.clone()? })
            })
            .collect()
    }

    /// Copy with ṙ and v_b removed, keeping shapes, poses and phases.
    pub fn without_velocities(&self) -> Dataset {
        let mut d = self.clone();
        for s in d.trajectories.iter_mut().flat_map(|t| t.samples.iter_mut()) {
            s.rdot = None;
            s.vb = None;
        }
        d
    }

    /// Splits a multi-trajectory dataset into single-trajectory datasets,
    /// carrying each trajectory's stride ranges along.
    pub fn split(&self) -> Vec<Dataset> {
        self.trajectories
            .iter()
            .enumerate()
            .map(|(ti, traj)| Dataset {
                ns: self.ns,
                nb: self.nb,
                trajectories: alloc::vec![traj.clone()],
                stride_ranges: self
                    .stride_ranges
                    .iter()
                    .filter(|r| r.trajectory == ti)
                    .map(|r| StrideRange { trajectory: 0, ..*r })
                    .collect(),
            })
            .collect()
    }

    /// Concatenates datasets with equal dimensions, renumbering strides.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::Validation("no datasets to join".into()))?;
        let mut out = Dataset { ns: first.ns, nb: first.nb, trajectories: Vec::new(), stride_ranges: Vec::new() };
        for p in parts {
            if p.ns != out.ns || p.nb != out.nb {
                return Err(Error::Validation("datasets disagree on dimensions".into()));
            }
            let offset = out.trajectories.len();
            out.trajectories.extend(p.trajectories.iter().cloned());
            out.stride_ranges.extend(
                p.stride_ranges.iter().map(|r| StrideRange { trajectory: r.trajectory + offset, ..*r }),
            );
        }
        out.validate()?;
        Ok(out)
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Derivative weights `(w0, w1, w2)` for samples at `x0 < x1 < x2`, evaluated
/// at sample `at` (0, 1 or 2). Second order for any spacing.
fn three_point(x0: f64, x1: f64, x2: f64, at: usize) -> [f64; 3] {
    let h1 = x1 - x0;
    let h2 = x2 - x1;
    let s = h1 + h2;
    match at {
        0 => [-(2.0 * h1 + h2) / (h1 * s), s / (h1 * h2), -h1 / (h2 * s)],
        1 => [-h2 / (h1 * s), (h2 - h1) / (h1 * h2), h1 / (h2 * s)],
        _ => [h2 / (h1 * s), -s / (h1 * h2), (h1 + 2.0 * h2) / (h2 * s)],
    }
}

/// Time derivative of a sampled vector signal. Interior points with four
/// equal neighbouring intervals use the fourth-order central stencil, other
/// interior points the three-point central rule, endpoints a one-sided
/// three-point rule.
pub(crate) fn differentiate(t: &[f64], values: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = t.len();
    let dim = values.first().map_or(0, |v| v.len());
    let combine = |idx: [usize; 3], w: [f64; 3]| -> Vec<f64> {
        (0..dim).map(|j| w[0] * values[idx[0]][j] + w[1] * values[idx[1]][j] + w[2] * values[idx[2]][j]).collect()
    };
    (0..n)
        .map(|i| {
            if i == 0 {
                combine([0, 1, 2], three_point(t[0], t[1], t[2], 0))
            } else if i == n - 1 {
                combine([n - 3, n - 2, n - 1], three_point(t[n - 3], t[n - 2], t[n - 1], 2))
            } else if i >= 2 && i + 2 < n && {
                let h = t[i + 1] - t[i];
                rel_eq(t[i] - t[i - 1], h) && rel_eq(t[i - 1] - t[i - 2], h) && rel_eq(t[i + 2] - t[i + 1], h)
            } {
                let h = (t[i + 2] - t[i - 2]) / 4.0;
                (0..dim)
                    .map(|j| {
                        (values[i - 2][j] - 8.0 * values[i - 1][j] + 8.0 * values[i + 1][j] - values[i + 2][j])
                            / (12.0 * h)
                    })
                    .collect()
            } else {
                combine([i - 1, i, i + 1], three_point(t[i - 1], t[i], t[i + 1], 1))
            }
        })
        .collect()
}

/// Fills in missing shape velocities (finite differences of `r`) and body
/// velocities (SE(2) logarithm of consecutive relative poses). Values
/// already present are kept.
pub fn derive_velocities(d: &Dataset) -> Result<Dataset> {
    let mut out = d.clone();
    for (ti, traj) in out.trajectories.iter_mut().enumerate() {
        let n = traj.len();
        if n < 3 {
            return Err(Error::Validation(format!("trajectory {ti} has {n} samples; at least 3 are needed")));
        }
        let t = traj.times();
        if traj.samples.iter().any(|s| s.rdot.is_none()) {
            let rs: Vec<&[f64]> = traj.samples.iter().map(|s| s.r.as_slice()).collect();
            let rdots = differentiate(&t, &rs);
            for (s, rd) in traj.samples.iter_mut().zip(rdots) {
                s.rdot.get_or_insert(rd);
            }
        }
        if traj.samples.iter().any(|s| s.vb.is_none()) {
            if d.nb != 3 {
                return Err(Error::Validation("body velocities from poses require Nb = 3".into()));
            }
            let poses = traj.poses().ok_or(Error::Missing("pose"))?;
            for i in 0..n {
                let (a, b) = if i + 1 < n { (i, i + 1) } else { (i - 1, i) };
                let dt = t[b] - t[a];
                let twist = log_se2(&poses[a].between(&poses[b]));
                traj.samples[i].vb.get_or_insert_with(|| twist.iter().map(|v| v / dt).collect());
            }
        }
    }
    Ok(out)
}

/// Populates stride ranges at phase wraps (a drop of more than π between
/// consecutive samples). A cycle that starts within the first sampling step
/// counts as complete; trailing partial cycles are dropped.
pub fn segment_strides(d: &Dataset) -> Result<Dataset> {
    let mut out = d.clone();
    out.stride_ranges.clear();
    for (ti, traj) in d.trajectories.iter().enumerate() {
        let phase = traj.phases().ok_or(Error::Missing("phase"))?;
        let mut bounds = Vec::new();
        if phase.len() >= 2 {
            let advance = phase[1] - phase[0];
            if advance > 0.0 && phase[0] < advance {
                bounds.push(0);
            }
        }
        for i in 1..phase.len() {
            if phase[i - 1] - phase[i] > PI {
                bounds.push(i);
            }
        }
        out.stride_ranges
            .extend(bounds.windows(2).map(|w| StrideRange { trajectory: ti, start: w[0], end: w[1] }));
    }
    if out.stride_ranges.is_empty() {
        log::warn!("no complete strides found");
    }
    Ok(out)
}
