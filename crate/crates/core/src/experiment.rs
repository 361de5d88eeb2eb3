//! The extrapolation protocol: fit models on training trajectories, predict
//! body velocities on test trajectories, reconstruct, and score strides.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;

use crate::augment::{agbr_from_base, AugmentConfig};
use crate::baselines::{fit_geometric, GeometricModel, DEFAULT_BINS, DEFAULT_FOURIER_ORDER};
use crate::data::{derive_velocities, segment_strides, Dataset, Trajectory};
use crate::density::{ksde, Bandwidth, DensityCurve, DEFAULT_GRID_POINTS};
use crate::error::{Error, Result};
use crate::gbr::{build_gbr_from_points, FeedbackMode, GbrModel};
use crate::gmm::EmConfig;
use crate::rng::{derive_seed, stream};
use crate::se2::{integrate, PoseSE2};
use crate::strides::{stride_displacements, zscore_loss, StrideRecord};
use crate::synth::{gen_kinematic, CurvatureVaryingMap, GaitParams, MotilityMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Phase,
    Geometric,
    Gbr,
    Agbr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Phase, ModelKind::Geometric, ModelKind::Gbr, ModelKind::Agbr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Phase => "phase",
            ModelKind::Geometric => "geometric",
            ModelKind::Gbr => "gbr",
            ModelKind::Agbr => "agbr",
        }
    }

    pub fn needs_phase(self) -> bool {
        matches!(self, ModelKind::Phase | ModelKind::Geometric)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(alloc::format!("unknown model '{s}' (phase, geometric, gbr, agbr)")))
    }
}

/// Everything needed to fit any of the four model families.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub em: EmConfig,
    pub augment: AugmentConfig,
    pub n_bins: usize,
    pub fourier_order: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            augment: AugmentConfig::default(),
            n_bins: DEFAULT_BINS,
            fourier_order: DEFAULT_FOURIER_ORDER,
        }
    }
}

impl FitConfig {
    /// Sets the seed of both the mixture fits and the augmentation.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.em.seed = seed;
        self.augment.seed = seed;
        self
    }

    /// Mixture settings of the plain GBR, which is also the first stage of
    /// the A-GBR pipeline.
    pub fn gbr_config(&self) -> EmConfig {
        self.augment.stage_config(&self.em, stream::GBR_FIT)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Phase(GeometricModel),
    Geometric(GeometricModel),
    Gbr(GbrModel),
    Agbr(GbrModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Phase(_) => ModelKind::Phase,
            FittedModel::Geometric(_) => ModelKind::Geometric,
            FittedModel::Gbr(_) => ModelKind::Gbr,
            FittedModel::Agbr(_) => ModelKind::Agbr,
        }
    }

    /// Body velocity at every sample of `traj`. The regressors are self-fed
    /// from the first observed body velocity; the baselines are stateless.
    pub fn predict_velocities(&self, traj: &Trajectory) -> Result<Vec<DVector<f64>>> {
        let rdot = |i: usize| traj.samples[i].rdot.as_deref().ok_or(Error::Missing("shape velocity"));
        match self {
            FittedModel::Phase(m) | FittedModel::Geometric(m) => traj
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let phi = s.phase.ok_or(Error::Missing("phase"))?;
                    Ok(match self {
                        FittedModel::Phase(_) => m.phase_predict(phi),
                        _ => m.geometric_predict(phi, &s.r, rdot(i)?),
                    })
                })
                .collect(),
            FittedModel::Gbr(m) | FittedModel::Agbr(m) => {
                let inputs = (0..traj.len())
                    .map(|i| {
                        let s = &traj.samples[i];
                        Ok(DVector::from_iterator(m.dim_in, s.r.iter().chain(rdot(i)?).copied()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let y0 = traj
                    .samples
                    .first()
                    .and_then(|s| s.vb.as_deref())
                    .ok_or(Error::Missing("initial body velocity"))?;
                let y0 = DVector::from_column_slice(y0);
                Ok(m.predict_trajectory(&inputs, &y0, FeedbackMode::SelfFed)?.into_iter().map(|p| p.y).collect())
            }
        }
    }
}

/// Derives missing velocities and, when phase is present and no strides are
/// recorded yet, segments strides.
pub fn prepare(d: &Dataset) -> Result<Dataset> {
    let mut out = if d.samples().any(|s| s.rdot.is_none() || s.vb.is_none()) { derive_velocities(d)? } else { d.clone() };
    if out.stride_ranges.is_empty() && out.has_phase() {
        out = segment_strides(&out)?;
    }
    Ok(out)
}

fn graph_points(d: &Dataset) -> Result<Vec<DVector<f64>>> {
    let points: Vec<DVector<f64>> = d.graph_points().iter().map(|g| g.flatten()).collect();
    if points.is_empty() {
        return Err(Error::Missing("shape and body velocities"));
    }
    Ok(points)
}

/// Fits the requested models on `train`, sharing work between related
/// families: Phase and Geometric come from one binned fit, and A-GBR reuses
/// the plain GBR as its first stage.
pub fn fit_models(kinds: &[ModelKind], train: &Dataset, cfg: &FitConfig) -> Result<Vec<FittedModel>> {
    let train = prepare(train)?;
    let mut geometric: Option<GeometricModel> = None;
    let mut gbr: Option<GbrModel> = None;
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        match kind {
            ModelKind::Phase | ModelKind::Geometric => {
                if geometric.is_none() {
                    geometric = Some(fit_geometric(&train, cfg.n_bins, cfg.fourier_order)?);
                }
                let m = geometric.clone().expect("fitted above");
                out.push(if kind == ModelKind::Phase { FittedModel::Phase(m) } else { FittedModel::Geometric(m) });
            }
            ModelKind::Gbr | ModelKind::Agbr => {
                let points = graph_points(&train)?;
                if gbr.is_none() {
                    gbr = Some(build_gbr_from_points(&points, train.ns, train.nb, &cfg.gbr_config())?);
                }
                let base = gbr.as_ref().expect("fitted above");
                out.push(if kind == ModelKind::Gbr {
                    FittedModel::Gbr(base.clone())
                } else {
                    FittedModel::Agbr(agbr_from_base(&points, base, &cfg.em, &cfg.augment)?.0)
                });
            }
        }
    }
    Ok(out)
}

/// One model's predictions on one test trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPrediction {
    pub trajectory: usize,
    pub vb: Vec<DVector<f64>>,
    pub poses: Vec<PoseSE2>,
}

/// Kernel density curves for x, y and θ; `None` where the samples were all
/// identical.
pub type DensityTriple = [Option<DensityCurve>; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub kind: ModelKind,
    pub loss: f64,
    /// Root mean square body-velocity error over all samples and components.
    pub vb_rmse: f64,
    pub strides: Vec<StrideRecord>,
    pub trajectories: Vec<TrajectoryPrediction>,
    pub prediction_density: DensityTriple,
    pub residual_density: DensityTriple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub truth: Vec<StrideRecord>,
    pub truth_density: DensityTriple,
    pub models: Vec<ModelEvaluation>,
}

impl ExperimentReport {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelEvaluation> {
        self.models.iter().find(|m| m.kind == kind)
    }
}

fn densities(strides: &[StrideRecord], grid_points: usize) -> Result<DensityTriple> {
    let mut out: DensityTriple = [None, None, None];
    for (q, slot) in out.iter_mut().enumerate() {
        let values: Vec<f64> = strides.iter().map(|s| s.get(q)).collect();
        *slot = match ksde(&values, Bandwidth::Auto, grid_points) {
            Ok(c) => Some(c),
            Err(Error::IdenticalSamples | Error::TooFewPoints { .. }) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(out)
}

fn truth_strides(test: &Dataset) -> Result<Vec<StrideRecord>> {
    let mut out = Vec::new();
    for (ti, traj) in test.trajectories.iter().enumerate() {
        let ranges: Vec<_> = test.stride_ranges.iter().filter(|r| r.trajectory == ti).copied().collect();
        if ranges.is_empty() {
            continue;
        }
        let poses = traj.poses().ok_or(Error::Missing("pose"))?;
        out.extend(stride_displacements(&poses, &ranges)?);
    }
    Ok(out)
}

/// Predicts every test trajectory with every model, reconstructs the world
/// motion from the first observed pose and scores the strides.
pub fn evaluate(models: &[FittedModel], test: &Dataset, grid_points: usize) -> Result<ExperimentReport> {
    if test.nb != 3 {
        return Err(Error::Validation("reconstruction needs Nb = 3 body velocities".into()));
    }
    let test = prepare(test)?;
    let truth = truth_strides(&test)?;
    let mut evaluations = Vec::with_capacity(models.len());
    for model in models {
        let mut strides = Vec::new();
        let mut trajectories = Vec::new();
        let (mut sq, mut count) = (0.0, 0usize);
        for (ti, traj) in test.trajectories.iter().enumerate() {
            let vb = model.predict_velocities(traj)?;
            for (p, s) in vb.iter().zip(&traj.samples) {
                if let Some(v) = &s.vb {
                    sq += p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    count += v.len();
                }
            }
            let g0 = traj.samples[0].pose.ok_or(Error::Missing("pose"))?;
            let twists: Vec<[f64; 3]> = vb[..vb.len() - 1].iter().map(|v| [v[0], v[1], v[2]]).collect();
            let t = traj.times();
            let dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
            let poses = integrate(&twists, &dts, g0);
            let ranges: Vec<_> = test.stride_ranges.iter().filter(|r| r.trajectory == ti).copied().collect();
            strides.extend(stride_displacements(&poses, &ranges)?);
            trajectories.push(TrajectoryPrediction { trajectory: ti, vb, poses });
        }
        let loss = zscore_loss(&strides, &truth)?;
        let residuals: Vec<StrideRecord> = strides
            .iter()
            .zip(&truth)
            .map(|(p, t)| StrideRecord { dx: p.dx - t.dx, dy: p.dy - t.dy, dtheta: p.dtheta - t.dtheta })
            .collect();
        evaluations.push(ModelEvaluation {
            kind: model.kind(),
            loss,
            vb_rmse: if count > 0 { (sq / count as f64).sqrt() } else { f64::NAN },
            prediction_density: densities(&strides, grid_points)?,
            residual_density: densities(&residuals, grid_points)?,
            strides,
            trajectories,
        });
    }
    Ok(ExperimentReport { truth_density: densities(&truth, grid_points)?, truth, models: evaluations })
}

/// A synthetic train/test split on a known motility map.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: Vec<GaitParams>,
    pub test: Vec<GaitParams>,
    pub n_strides: usize,
    pub dt: f64,
    pub noise: f64,
    /// Recompute ṙ and v_b from the noisy shapes and poses instead of using
    /// the generator's exact values.
    pub derive: bool,
    pub seed: u64,
}

impl Benchmark {
    /// The ruled-surface extrapolation benchmark on [`CurvatureVaryingMap`]:
    /// three phase offsets at an intermediate stride frequency for training,
    /// the same gaits at 1.2x the frequency (and so 1.2x the shape velocity)
    /// for testing.
    pub fn extrapolation(seed: u64) -> Self {
        let gait = |dphi, f| GaitParams::two_joint(0.6, dphi, f).with_variability(0.1);
        let offsets = [0.8, 1.0, 1.2];
        Self {
            train: offsets.iter().map(|&p| gait(p, 1.0)).collect(),
            test: offsets.iter().map(|&p| gait(p, 1.2)).collect(),
            n_strides: 20,
            dt: 1.0 / 120.0,
            noise: 0.002,
            derive: false,
            seed,
        }
    }

    fn generate(&self, map: &dyn MotilityMap, gaits: &[GaitParams], stream_base: u64) -> Result<Dataset> {
        let parts = gaits
            .iter()
            .enumerate()
            .map(|(i, g)| gen_kinematic(map, g, self.n_strides, self.dt, self.noise, derive_seed(self.seed, stream_base + i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::concat(&parts)
    }

    pub fn datasets(&self, map: &dyn MotilityMap) -> Result<(Dataset, Dataset)> {
        Ok((self.generate(map, &self.train, stream::GENERATOR)?, self.generate(map, &self.test, stream::GENERATOR + 0x100)?))
    }

    /// Fits all four models with `fit` (seeded from this benchmark) and
    /// evaluates them on the test gaits. Models only see velocities derived
    /// from the noisy shapes and poses; `vb_rmse` is measured against the
    /// exact body velocity.
    pub fn run(&self, fit: &FitConfig) -> Result<ExperimentReport> {
        let (train, test) = self.datasets(&CurvatureVaryingMap)?;
        let observe = |d: &Dataset| if self.derive { prepare(&d.without_velocities()) } else { Ok(d.clone()) };
        let models = fit_models(&ModelKind::ALL, &observe(&train)?, &fit.clone().with_seed(self.seed))?;
        let mut report = evaluate(&models, &observe(&test)?, DEFAULT_GRID_POINTS)?;
        for m in &mut report.models {
            let (mut sq, mut count) = (0.0, 0usize);
            for p in &m.trajectories {
                for (v, s) in p.vb.iter().zip(&test.trajectories[p.trajectory].samples) {
                    let exact = s.vb.as_deref().ok_or(Error::Missing("body velocity"))?;
                    sq += v.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    count += exact.len();
                }
            }
            m.vb_rmse = (sq / count as f64).sqrt();
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ConstantMap;
    use nalgebra::DMatrix;
    use std::vec;

    #[test]
    fn model_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("GBR".parse::<ModelKind>().is_ok());
        assert!("lstm".parse::<ModelKind>().is_err());
    }

    fn constant_map() -> ConstantMap {
        ConstantMap { a: DMatrix::from_row_slice(3, 2, &[0.8, -0.3, 0.2, 0.5, 0.4, 0.1]) }
    }

    fn small_fit(seed: u64, k: usize) -> FitConfig {
        let mut fit = FitConfig::default().with_seed(seed);
        fit.em.k = k;
        fit.augment.k = k;
        fit.em.n_init = 1;
        fit
    }

    fn losses(bench: &Benchmark, fit: &FitConfig) -> Vec<(ModelKind, f64)> {
        let (train, test) = bench.datasets(&constant_map()).unwrap();
        let models = fit_models(&ModelKind::ALL, &train, fit).unwrap();
        let report = evaluate(&models, &test, 64).unwrap();
        report.models.iter().map(|m| (m.kind, m.loss)).collect()
    }

    #[test]
    fn constant_map_is_learned_across_gaits() {
        let gaits: Vec<GaitParams> =
            [(0.6, 0.8, 1.0), (0.5, 1.4, 1.0), (0.7, 1.0, 1.3)].iter().map(|&(a, p, f)| GaitParams::two_joint(a, p, f)).collect();
        let bench = Benchmark { train: gaits.clone(), test: gaits, n_strides: 6, dt: 1.0 / 60.0, noise: 0.0, derive: false, seed: 3 };
        for (kind, loss) in losses(&bench, &small_fit(3, 4)) {
            // the phase average cannot tell gaits apart
            if kind != ModelKind::Phase {
                assert!(loss < 0.05, "{kind} loss {loss}");
            }
        }
    }

    #[test]
    fn constant_map_single_gait_every_family() {
        // 1.07 Hz at 60 fps leaves stride boundaries at varying phases, which is
        // the only stride-to-stride variation of a single periodic gait
        let gait = vec![GaitParams::two_joint(0.6, 1.0, 1.07)];
        let bench = Benchmark { train: gait.clone(), test: gait, n_strides: 12, dt: 1.0 / 60.0, noise: 0.0, derive: false, seed: 4 };
        // fine bins keep the within-bin averaging of v_b small
        let fit = FitConfig { n_bins: 72, ..small_fit(4, 3) };
        for (kind, loss) in losses(&bench, &fit) {
            assert!(loss < 0.05, "{kind} loss {loss}");
        }
    }

    #[test]
    fn gbr_is_the_first_stage_of_agbr() {
        let bench = Benchmark { n_strides: 3, ..Benchmark::extrapolation(1) };
        let (train, _) = bench.datasets(&CurvatureVaryingMap).unwrap();
        let mut fit = FitConfig::default().with_seed(1);
        fit.em.k = 5;
        fit.augment.k = 5;
        fit.em.n_init = 1;
        let both = fit_models(&[ModelKind::Gbr, ModelKind::Agbr], &train, &fit).unwrap();
        let alone = fit_models(&[ModelKind::Gbr], &train, &fit).unwrap();
        assert_eq!(both[0], alone[0]);
        assert_ne!(both[0], FittedModel::Gbr(match &both[1] {
            FittedModel::Agbr(m) => m.clone(),
            _ => unreachable!(),
        }));
    }

    #[test]
    fn evaluation_needs_three_body_velocities() {
        let traj = Trajectory::new((0..4).map(|i| crate::data::ShapeSample::new(i as f64, vec![0.0])).collect());
        let d = Dataset::new(1, 2, vec![traj]).unwrap();
        assert!(matches!(evaluate(&[], &d, 16), Err(Error::Validation(_))));
    }
}
