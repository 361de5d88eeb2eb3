//! Ruled-surface augmentation.
//!
//! The motility-map graph is linear in ṙ at fixed r. Each component's
//! associated points are recombined with random unit-sphere weights and the
//! ṙ and v_b deviations stretched by β, which extends the local linear
//! relation beyond the observed ṙ range without inflating r.

use alloc::vec::Vec;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gbr::{build_gbr_from_points, GbrModel};
use crate::gmm::EmConfig;
use crate::rng::{derive_rng, derive_seed, stream, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Synthetic points per associated point (the count is `⌈α N_k⌉`).
    pub alpha: f64,
    /// Stretch applied to ṙ and v_b deviations.
    pub beta: f64,
    /// Points combined per synthetic point; smaller clusters are skipped.
    pub c: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.2, c: 5, k: 60, seed: 0 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) || self.c == 0 || self.k == 0 {
            return Err(Error::Validation("augmentation needs alpha > 0, beta > 0, c >= 1, K >= 1".into()));
        }
        Ok(())
    }

    /// EM settings for one of the two fits, with K and a seed derived from
    /// this config.
    pub fn stage_config(&self, em: &EmConfig, stage: u64) -> EmConfig {
        EmConfig { k: self.k, seed: derive_seed(self.seed, stage), ..em.clone() }
    }
}

/// Synthetic graph points and the component each was drawn from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Augmentation {
    pub points: Vec<DVector<f64>>,
    pub component: Vec<usize>,
}

/// Indices of the points within one normalized Mahalanobis unit of each
/// component. A point may belong to several components or none.
pub fn assign_points(points: &[DVector<f64>], m: &GbrModel) -> Result<Vec<Vec<usize>>> {
    let n_tot = m.gmm.n_tot;
    let mut scratch = alloc::vec![0.0; n_tot];
    let mut sets = alloc::vec![Vec::new(); m.gmm.k];
    for (i, p) in points.iter().enumerate() {
        if p.len() != n_tot {
            return Err(Error::DimensionMismatch { expected: n_tot, got: p.len() });
        }
        for (k, c) in m.components().iter().enumerate() {
            if c.mahalanobis_with(p.as_slice(), &mut scratch) / n_tot as f64 <= 1.0 {
                sets[k].push(i);
            }
        }
    }
    Ok(sets)
}

/// [`assign_points`] over the graph points of a dataset, indexed in
/// [`Dataset::graph_points`] order.
pub fn assign_members(d: &Dataset, m: &GbrModel) -> Result<Vec<Vec<usize>>> {
    let points: Vec<DVector<f64>> = d.graph_points().iter().map(|g| g.flatten()).collect();
    assign_points(&points, m)
}

/// A uniformly random point on the unit sphere in `c` dimensions.
pub fn sphere_weights(c: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(c >= 1, "sphere dimension must be positive");
    loop {
        let raw: Vec<f64> = (0..c).map(|_| StandardNormal.sample(rng)).collect();
        let norm = raw.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return raw.into_iter().map(|b| b / norm).collect();
        }
    }
}

/// Draws `⌈α N_k⌉` synthetic points from a cluster of `N_k ≥ c` members
/// (none otherwise). Each point mixes `c` members drawn with replacement:
/// `μ + Σ b_i (x_i − μ)` in r and `μ + β Σ b_i (x_i − μ)` in ṙ and v_b.
pub fn synthesize(members: &[&DVector<f64>], mean: &DVector<f64>, ns: usize, cfg: &AugmentConfig, rng: &mut Rng) -> Vec<DVector<f64>> {
    let nk = members.len();
    if nk < cfg.c || nk == 0 {
        return Vec::new();
    }
    let count = (cfg.alpha * nk as f64).ceil() as usize;
    let dim = mean.len();
    (0..count)
        .map(|_| {
            let picks: Vec<usize> = (0..cfg.c).map(|_| rng.random_range(0..nk)).collect();
            let b = sphere_weights(cfg.c, rng);
            let mut dev = DVector::zeros(dim);
            for (&i, &bi) in picks.iter().zip(&b) {
                dev += (members[i] - mean) * bi;
            }
            for j in ns..dim {
                dev[j] *= cfg.beta;
            }
            mean + dev
        })
        .collect()
}

/// Synthetic points for every component of `base`, each component drawn
/// from its own random stream.
pub fn augment_points(points: &[DVector<f64>], base: &GbrModel, cfg: &AugmentConfig) -> Result<Augmentation> {
    cfg.validate()?;
    let ns = base.dim_in / 2;
    let sets = assign_points(points, base)?;
    let mut out = Augmentation::default();
    for (k, (set, comp)) in sets.iter().zip(base.components()).enumerate() {
        let members: Vec<&DVector<f64>> = set.iter().map(|&i| &points[i]).collect();
        let mut rng = derive_rng(cfg.seed, stream::AUGMENT + k as u64);
        let synth = synthesize(&members, &comp.mean, ns, cfg, &mut rng);
        out.component.extend(core::iter::repeat_n(k, synth.len()));
        out.points.extend(synth);
    }
    Ok(out)
}

/// Refits on `points ∪ augmentation(base)`; returns the model and the
/// synthetic points.
pub fn agbr_from_base(points: &[DVector<f64>], base: &GbrModel, em: &EmConfig, cfg: &AugmentConfig) -> Result<(GbrModel, Augmentation)> {
    let aug = augment_points(points, base, cfg)?;
    let mut all = points.to_vec();
    all.extend(aug.points.iter().cloned());
    let model = build_gbr_from_points(&all, base.dim_in / 2, base.dim_out, &cfg.stage_config(em, stream::AGBR_FIT))?;
    Ok((model, aug))
}

/// Fits a GBR, augments its data and fits again with the same K.
pub fn build_agbr(d: &Dataset, em: &EmConfig, cfg: &AugmentConfig) -> Result<GbrModel> {
    cfg.validate()?;
    let points: Vec<DVector<f64>> = d.graph_points().iter().map(|g| g.flatten()).collect();
    if points.is_empty() {
        return Err(Error::Missing("shape and body velocities"));
    }
    let base = build_gbr_from_points(&points, d.ns, d.nb, &cfg.stage_config(em, stream::GBR_FIT))?;
    Ok(agbr_from_base(&points, &base, em, cfg)?.0)
}
