//! Planar rigid motions and the exponential map used to turn predicted
//! body velocities back into world trajectories.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

const SMALL_ANGLE: f64 = 1e-8;

/// Planar pose. `theta` is kept unwrapped along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseSE2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PoseSE2 {
    pub const IDENTITY: PoseSE2 = PoseSE2 { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Group product `self * other`; angles add without wrapping.
    pub fn compose(&self, other: &PoseSE2) -> PoseSE2 {
        let (s, c) = self.theta.sin_cos();
        PoseSE2 {
            x: self.x + c * other.x - s * other.y,
            y: self.y + s * other.x + c * other.y,
            theta: self.theta + other.theta,
        }
    }

    pub fn inverse(&self) -> PoseSE2 {
        let (s, c) = self.theta.sin_cos();
        PoseSE2 {
            x: -(c * self.x + s * self.y),
            y: s * self.x - c * self.y,
            theta: -self.theta,
        }
    }

    /// `self⁻¹ * other`, the motion from `self` to `other` seen from `self`.
    pub fn between(&self, other: &PoseSE2) -> PoseSE2 {
        let (s, c) = self.theta.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        PoseSE2 {
            x: c * dx + s * dy,
            y: -s * dx + c * dy,
            theta: other.theta - self.theta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Entries of the left Jacobian `V(θ) = [[a, -b], [b, a]]`.
fn left_jacobian(theta: f64) -> (f64, f64) {
    if theta.abs() < SMALL_ANGLE {
        (1.0 - theta * theta / 6.0, theta / 2.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta)
    }
}

/// Closed-form exponential of the body twist `vb = (vx, vy, ω)` held for `dt`.
pub fn exp_se2(vb: [f64; 3], dt: f64) -> PoseSE2 {
    let ux = vb[0] * dt;
    let uy = vb[1] * dt;
    let theta = vb[2] * dt;
    let (a, b) = left_jacobian(theta);
    PoseSE2 {
        x: a * ux - b * uy,
        y: b * ux + a * uy,
        theta,
    }
}

/// Inverse of [`exp_se2`] with `dt = 1`. The angle is taken as stored, so
/// increments up to (but excluding) a full turn are recovered.
pub fn log_se2(pose: &PoseSE2) -> [f64; 3] {
    let (a, b) = left_jacobian(pose.theta);
    let det = a * a + b * b;
    [
        (a * pose.x + b * pose.y) / det,
        (-b * pose.x + a * pose.y) / det,
        pose.theta,
    ]
}

/// Integrates body velocities by left composition:
/// `g[i+1] = g[i] * exp(vb[i] * dt[i])`. Returns `vb.len() + 1` poses
/// starting at `g0`.
pub fn integrate(vb_series: &[[f64; 3]], dts: &[f64], g0: PoseSE2) -> Vec<PoseSE2> {
    assert_eq!(vb_series.len(), dts.len(), "velocity and step counts differ");
    let mut out = Vec::with_capacity(vb_series.len() + 1);
    let mut g = g0;
    out.push(g);
    for (vb, &dt) in vb_series.iter().zip(dts) {
        g = g.compose(&exp_se2(*vb, dt));
        out.push(g);
    }
    out
}
