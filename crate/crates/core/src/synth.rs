//! Synthetic data: the noisy two-branch variety and principally kinematic
//! systems `v_b = A(r)ṙ` driven by sinusoidal gaits.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::data::{segment_strides, Dataset, ShapeSample, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, stream};
use crate::se2::{integrate, PoseSE2};

/// Noisy samples of `y² = (x−1)²(x+1)²`: `x ~ U[−1.5, 1.5]`, a fair-coin
/// branch `y = ±(x² − 1)`, then `N(0, noise²)` on both coordinates.
pub fn gen_variety(n: usize, noise: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = derive_rng(seed, stream::GENERATOR);
    let jitter = Normal::new(0.0, noise.abs()).expect("finite noise");
    (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(-1.5..=1.5);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let y = sign * (x * x - 1.0);
            if noise == 0.0 {
                [x, y]
            } else {
                [x + jitter.sample(&mut rng), y + jitter.sample(&mut rng)]
            }
        })
        .collect()
}

/// A local connection `A(r)`, mapping shape velocity to body velocity.
pub trait MotilityMap {
    fn ns(&self) -> usize;

    fn nb(&self) -> usize {
        3
    }

    /// `nb × ns` matrix at shape `r`.
    fn connection(&self, r: &[f64]) -> DMatrix<f64>;

    fn body_velocity(&self, r: &[f64], rdot: &[f64]) -> DVector<f64> {
        self.connection(r) * DVector::from_column_slice(rdot)
    }
}

impl<M: MotilityMap + ?Sized> MotilityMap for &M {
    fn ns(&self) -> usize {
        (**self).ns()
    }
    fn nb(&self) -> usize {
        (**self).nb()
    }
    fn connection(&self, r: &[f64]) -> DMatrix<f64> {
        (**self).connection(r)
    }
}

impl<M: MotilityMap + ?Sized> MotilityMap for Box<M> {
    fn ns(&self) -> usize {
        (**self).ns()
    }
    fn nb(&self) -> usize {
        (**self).nb()
    }
    fn connection(&self, r: &[f64]) -> DMatrix<f64> {
        (**self).connection(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMap {
    pub a: DMatrix<f64>,
}

impl MotilityMap for ConstantMap {
    fn ns(&self) -> usize {
        self.a.ncols()
    }
    fn nb(&self) -> usize {
        self.a.nrows()
    }
    fn connection(&self, _r: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// Two-joint system whose connection entries are trigonometric polynomials
/// in `r`. It is mirror symmetric: swapping the joints flips the sign of
/// the lateral and rotational rows, `A(Pr) = D A(r) P` with
/// `D = diag(1, −1, −1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurvatureVaryingMap;

impl CurvatureVaryingMap {
    fn forward(r1: f64, r2: f64) -> f64 {
        0.6 * r2.sin() + 0.25 * (r1 + r2).cos() - 0.15 * (2.0 * r1).sin() * r2.cos()
    }

    fn lateral(r1: f64, r2: f64) -> f64 {
        0.3 * r2.cos() - 0.2 * r1.sin() + 0.1 * (r1 - r2).sin()
    }

    fn turning(r1: f64, r2: f64) -> f64 {
        0.5 + 0.35 * (r1 - 2.0 * r2).cos() + 0.2 * r2.sin() * r1.cos()
    }
}

impl MotilityMap for CurvatureVaryingMap {
    fn ns(&self) -> usize {
        2
    }

    fn connection(&self, r: &[f64]) -> DMatrix<f64> {
        let (r1, r2) = (r[0], r[1]);
        DMatrix::from_row_slice(
            3,
            2,
            &[
                Self::forward(r1, r2),
                Self::forward(r2, r1),
                Self::lateral(r1, r2),
                -Self::lateral(r2, r1),
                Self::turning(r1, r2),
                -Self::turning(r2, r1),
            ],
        )
    }
}

/// Per-joint sinusoids `r_j(t) = offset_j + amplitude_j · sin(2π f t + phase_offset_j)`,
/// optionally perturbed by a quasi-periodic wobble of size `variability`
/// so that strides differ from one another. The gait phase is `2π f t mod 2π`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitParams {
    pub amplitude: Vec<f64>,
    pub offset: Vec<f64>,
    pub phase_offset: Vec<f64>,
    /// Cycles per second.
    pub frequency: f64,
    /// Peak size of the wobble added to every joint, in shape units.
    pub variability: f64,
}

/// Wobble terms `(joint, amplitude, angular frequency, phase)`.
#[derive(Debug, Clone, PartialEq, Default)]
struct Wobble(Vec<(usize, f64, f64, f64)>);

const WOBBLE_TERMS: usize = 3;

impl Wobble {
    /// Frequencies between 0.2 and 2.2 times the gait frequency, so the
    /// perturbation is not locked to the cycle.
    fn draw(gait: &GaitParams, rng: &mut crate::rng::Rng) -> Self {
        if gait.variability == 0.0 {
            return Self::default();
        }
        let amp = gait.variability / WOBBLE_TERMS as f64;
        let terms = (0..gait.ns())
            .flat_map(|j| (0..WOBBLE_TERMS).map(move |_| j))
            .map(|j| (j, amp, TAU * gait.frequency * rng.random_range(0.2..2.2), rng.random_range(0.0..TAU)))
            .collect();
        Self(terms)
    }

    fn apply(&self, t: f64, r: &mut [f64], rdot: &mut [f64]) {
        for &(j, a, w, p) in &self.0 {
            r[j] += a * (w * t + p).sin();
            rdot[j] += a * w * (w * t + p).cos();
        }
    }
}

impl GaitParams {
    /// Two joints `±Δφ/2` apart in phase around a zero mean shape.
    pub fn two_joint(amplitude: f64, delta_phi: f64, frequency: f64) -> Self {
        Self {
            amplitude: alloc::vec![amplitude; 2],
            offset: alloc::vec![0.0; 2],
            phase_offset: alloc::vec![0.5 * delta_phi, -0.5 * delta_phi],
            frequency,
            variability: 0.0,
        }
    }

    pub fn with_variability(mut self, variability: f64) -> Self {
        self.variability = variability;
        self
    }

    pub fn ns(&self) -> usize {
        self.amplitude.len()
    }

    fn validate(&self) -> Result<()> {
        let ns = self.ns();
        if ns == 0 || self.offset.len() != ns || self.phase_offset.len() != ns {
            return Err(Error::Validation("gait amplitude, offset and phase_offset lengths differ".into()));
        }
        let finite = self.amplitude.iter().chain(&self.offset).chain(&self.phase_offset).all(|v| v.is_finite());
        if !finite || !(self.frequency > 0.0 && self.frequency.is_finite()) || !(self.variability >= 0.0 && self.variability.is_finite()) {
            return Err(Error::Validation("gait parameters must be finite with positive frequency".into()));
        }
        Ok(())
    }

    pub fn shape(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let w = TAU * self.frequency;
        let r = (0..self.ns()).map(|j| self.offset[j] + self.amplitude[j] * (w * t + self.phase_offset[j]).sin()).collect();
        let rdot = (0..self.ns()).map(|j| self.amplitude[j] * w * (w * t + self.phase_offset[j]).cos()).collect();
        (r, rdot)
    }

    pub fn phase(&self, t: f64) -> f64 {
        let p = (TAU * self.frequency * t).rem_euclid(TAU);
        if p >= TAU {
            0.0
        } else {
            p
        }
    }
}

/// Simulates `n_strides` gait cycles at step `dt` (plus a short tail that
/// segmentation drops). Shape and shape velocity are analytic, body velocity
/// is `A(r)ṙ`, held constant over each step to integrate the world pose from
/// the identity. Stored `r` and pose receive i.i.d. `N(0, noise²)`; `ṙ`,
/// `v_b` and phase are stored exact. Stride ranges are populated.
pub fn gen_kinematic(
    map: &dyn MotilityMap,
    gait: &GaitParams,
    n_strides: usize,
    dt: f64,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    gait.validate()?;
    let (ns, nb) = (map.ns(), map.nb());
    if gait.ns() != ns {
        return Err(Error::DimensionMismatch { expected: ns, got: gait.ns() });
    }
    if nb != 3 {
        return Err(Error::Validation(format!("pose integration needs Nb = 3, map has {nb}")));
    }
    if !(dt > 0.0 && dt.is_finite()) || !(noise >= 0.0 && noise.is_finite()) || n_strides == 0 {
        return Err(Error::Validation("need dt > 0, noise >= 0 and at least one stride".into()));
    }
    let mut rng = derive_rng(seed, stream::GENERATOR);
    let wobble = Wobble::draw(gait, &mut rng);
    let per_cycle = 1.0 / (gait.frequency * dt);
    let n = (n_strides as f64 * per_cycle).ceil() as usize + 3;
    let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let mut samples = Vec::with_capacity(n);
    let mut twists = Vec::with_capacity(n);
    for &t in &times {
        let (mut r, mut rdot) = gait.shape(t);
        wobble.apply(t, &mut r, &mut rdot);
        let vb = map.body_velocity(&r, &rdot);
        if vb.iter().any(|v| !v.is_finite()) || vb.len() != nb {
            return Err(Error::Validation("motility map produced a non-finite velocity".into()));
        }
        twists.push([vb[0], vb[1], vb[2]]);
        samples.push(ShapeSample {
            rdot: Some(rdot),
            phase: Some(gait.phase(t)),
            vb: Some(vb.as_slice().to_vec()),
            ..ShapeSample::new(t, r)
        });
    }
    let poses = integrate(&twists[..n - 1], &alloc::vec![dt; n - 1], PoseSE2::IDENTITY);
    let jitter = Normal::new(0.0, noise).expect("finite noise");
    let draw = |rng: &mut crate::rng::Rng| if noise > 0.0 { jitter.sample(rng) } else { 0.0 };
    for (s, g) in samples.iter_mut().zip(poses) {
        for v in s.r.iter_mut() {
            *v += draw(&mut rng);
        }
        s.pose = Some(PoseSE2::new(g.x + draw(&mut rng), g.y + draw(&mut rng), g.theta + draw(&mut rng)));
    }
    segment_strides(&Dataset::new(ns, nb, alloc::vec![Trajectory::new(samples)])?)
}
