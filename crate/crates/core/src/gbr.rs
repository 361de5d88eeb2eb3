//! Gaussian branching regression: a mixture over the graph `(x, y)` whose
//! components are blended by their joint density at `(x, y_p)`, where `y_p`
//! is the previous output. Away from branch points the components of other
//! branches carry negligible weight, so a trajectory stays on its branch.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gaussian::GaussianComponent;
use crate::gmm::{fit_gmm, EmConfig, GmmModel};

/// Below this `log Σ c_k` the blend is abandoned for the nearest component.
pub const UNDERFLOW_LOG: f64 = -700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GbrModel {
    pub gmm: GmmModel,
    pub dim_in: usize,
    pub dim_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y: DVector<f64>,
    /// `log Σ_k c_k` at the query.
    pub confidence: f64,
    /// Set when every weight underflowed and the nearest component was used.
    pub fallback: bool,
}

/// How `y_p` is produced along a trajectory.
#[derive(Debug, Clone, Copy)]
pub enum FeedbackMode<'a> {
    /// `y_p` at step `i + 1` is the prediction at step `i`.
    SelfFed,
    /// `y_p ← (1 − gain)·ŷ + gain·y_observed`, `gain` in `[0, 1]`.
    Observer { observed: &'a [DVector<f64>], gain: f64 },
}

impl GbrModel {
    /// Wraps a fitted mixture, computing each component's TLS slope.
    pub fn from_gmm(gmm: GmmModel, dim_in: usize, dim_out: usize) -> Result<Self> {
        if dim_in + dim_out != gmm.n_tot {
            return Err(Error::DimensionMismatch { expected: gmm.n_tot, got: dim_in + dim_out });
        }
        let mut gmm = gmm;
        let comps = core::mem::take(&mut gmm.components);
        gmm.components = comps.into_iter().map(|c| c.with_slope(dim_in, dim_out)).collect::<Result<_>>()?;
        let flagged = gmm.components.iter().filter(|c| !c.slope.as_ref().is_some_and(|s| s.ok)).count();
        if flagged > 0 {
            log::debug!("{flagged} component(s) have near-vertical tangents; using their means only");
        }
        Ok(Self { gmm, dim_in, dim_out })
    }

    /// Wraps a mixture whose components already carry slopes (e.g. loaded
    /// from disk), checking their shapes.
    pub fn from_parts(gmm: GmmModel, dim_in: usize, dim_out: usize) -> Result<Self> {
        if dim_in + dim_out != gmm.n_tot {
            return Err(Error::DimensionMismatch { expected: gmm.n_tot, got: dim_in + dim_out });
        }
        for c in &gmm.components {
            match &c.slope {
                Some(s) if s.a.shape() == (dim_out, dim_in) => {}
                _ => return Err(Error::Validation("component slope missing or misshapen".into())),
            }
        }
        Ok(Self { gmm, dim_in, dim_out })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.gmm.components
    }

    /// Number of components whose tangent was too steep for a slope.
    pub fn flagged(&self) -> usize {
        self.components().iter().filter(|c| !c.slope.as_ref().is_some_and(|s| s.ok)).count()
    }

    /// Affine prediction `A_k (x − μ_x,k) + μ_y,k` of component `k`.
    pub fn component_prediction(&self, k: usize, x: &[f64]) -> DVector<f64> {
        let c = &self.gmm.components[k];
        let mut y = DVector::from_column_slice(&c.mean.as_slice()[self.dim_in..]);
        if let Some(s) = c.slope.as_ref().filter(|s| s.ok) {
            let dx = DVector::from_iterator(self.dim_in, x.iter().zip(c.mean.iter()).map(|(a, m)| a - m));
            y += &s.a * dx;
        }
        y
    }

    pub fn predict(&self, x: &[f64], y_p: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim_in {
            return Err(Error::DimensionMismatch { expected: self.dim_in, got: x.len() });
        }
        if y_p.len() != self.dim_out {
            return Err(Error::DimensionMismatch { expected: self.dim_out, got: y_p.len() });
        }
        let z: Vec<f64> = x.iter().chain(y_p).copied().collect();
        let mut scratch = vec![0.0; z.len()];
        let comps = self.components();
        let log_c: Vec<f64> =
            comps.iter().map(|c| c.weight.ln() + c.log_density_with(&z, &mut scratch)).collect();
        let max = log_c.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = if max.is_finite() { log_c.iter().map(|l| (l - max).exp()).sum() } else { 0.0 };
        let confidence = max + sum.ln();
        if !(confidence >= UNDERFLOW_LOG) {
            let nearest = comps
                .iter()
                .enumerate()
                .filter(|(_, c)| c.weight > 0.0)
                .map(|(k, c)| (k, c.mahalanobis_with(&z, &mut scratch)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(0, |(k, _)| k);
            return Ok(Prediction { y: self.component_prediction(nearest, x), confidence, fallback: true });
        }
        let mut y = DVector::zeros(self.dim_out);
        for (k, l) in log_c.iter().enumerate() {
            let w = (l - max).exp() / sum;
            if w > 0.0 {
                y += self.component_prediction(k, x) * w;
            }
        }
        Ok(Prediction { y, confidence, fallback: false })
    }

    /// Predicts along a sequence of inputs starting from `y0`.
    pub fn predict_trajectory(&self, inputs: &[DVector<f64>], y0: &DVector<f64>, mode: FeedbackMode<'_>) -> Result<Vec<Prediction>> {
        if let FeedbackMode::Observer { observed, gain } = mode {
            if observed.len() < inputs.len() {
                return Err(Error::DimensionMismatch { expected: inputs.len(), got: observed.len() });
            }
            if !(0.0..=1.0).contains(&gain) {
                return Err(Error::Validation("observer gain must lie in [0, 1]".into()));
            }
        }
        let mut y_p = y0.clone();
        let mut out = Vec::with_capacity(inputs.len());
        for (i, x) in inputs.iter().enumerate() {
            let p = self.predict(x.as_slice(), y_p.as_slice())?;
            y_p = match mode {
                FeedbackMode::SelfFed => p.y.clone(),
                FeedbackMode::Observer { observed, gain } => &p.y * (1.0 - gain) + &observed[i] * gain,
            };
            out.push(p);
        }
        Ok(out)
    }
}

/// Fits a regressor on the graph points of `d` (samples with ṙ and v_b).
pub fn build_gbr(d: &Dataset, cfg: &EmConfig) -> Result<GbrModel> {
    let points: Vec<DVector<f64>> = d.graph_points().iter().map(|g| g.flatten()).collect();
    if points.is_empty() {
        return Err(Error::Missing("shape and body velocities"));
    }
    build_gbr_from_points(&points, d.ns, d.nb, cfg)
}

/// Fits a regressor on flattened `(r, ṙ, v_b)` points.
pub fn build_gbr_from_points(points: &[DVector<f64>], ns: usize, nb: usize, cfg: &EmConfig) -> Result<GbrModel> {
    let gmm = fit_gmm(points, cfg)?;
    GbrModel::from_gmm(gmm, 2 * ns, nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use nalgebra::DMatrix;
    use rand::Rng as _;

    fn line_model() -> GbrModel {
        let mut rng = derive_rng(1, 0);
        let pts: Vec<DVector<f64>> = (0..200)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                DVector::from_vec(vec![x, 2.0 * x])
            })
            .collect();
        let gmm = fit_gmm(&pts, &EmConfig { k: 1, ..EmConfig::default() }).unwrap();
        GbrModel::from_gmm(gmm, 1, 1).unwrap()
    }

    #[test]
    fn single_component_ignores_previous_output() {
        let m = line_model();
        let a = m.predict(&[3.0], &[100.0]).unwrap();
        let b = m.predict(&[3.0], &[-5.0]).unwrap();
        assert!((a.y[0] - 6.0).abs() < 1e-6);
        assert!((a.y[0] - b.y[0]).abs() < 1e-12);
    }

    #[test]
    fn far_queries_fall_back() {
        let m = line_model();
        let p = m.predict(&[1e6], &[0.0]).unwrap();
        assert!(p.fallback && p.y[0].is_finite() && p.confidence < UNDERFLOW_LOG);
    }

    #[test]
    fn dimension_checks() {
        let m = line_model();
        assert!(m.predict(&[1.0, 2.0], &[0.0]).is_err());
        assert!(m.predict(&[1.0], &[]).is_err());
    }

    #[test]
    fn linear_system_slope_recovery() {
        let a0 = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 0.2, 0.3, -0.7, 1.1]);
        let mut rng = derive_rng(2, 0);
        let pts: Vec<DVector<f64>> = (0..500)
            .map(|_| {
                let r: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let rd = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                let v = &a0 * &rd;
                DVector::from_iterator(7, r.iter().copied().chain(rd.iter().copied()).chain(v.iter().copied()))
            })
            .collect();
        let m = build_gbr_from_points(&pts, 2, 3, &EmConfig { k: 1, ..EmConfig::default() }).unwrap();
        let a = &m.components()[0].slope.as_ref().unwrap().a;
        // the r columns vanish, the ṙ columns are A₀
        assert!(a.columns(0, 2).norm() < 1e-6);
        assert!((a.columns(2, 2) - &a0).norm() < 1e-6);
    }

    #[test]
    fn single_point_dataset_is_rejected() {
        let pts = vec![DVector::from_vec(vec![0.0; 7])];
        assert!(matches!(build_gbr_from_points(&pts, 2, 3, &EmConfig { k: 1, ..EmConfig::default() }), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn observer_with_full_gain_tracks_truth() {
        let m = line_model();
        let xs: Vec<DVector<f64>> = (0..10).map(|i| DVector::from_vec(vec![i as f64 * 0.1])).collect();
        let truth: Vec<DVector<f64>> = xs.iter().map(|x| x * 2.0 + DVector::from_vec(vec![0.3])).collect();
        let preds = m.predict_trajectory(&xs, &truth[0], FeedbackMode::Observer { observed: &truth, gain: 1.0 }).unwrap();
        assert_eq!(preds.len(), 10);
        for i in 1..10 {
            // y_p at step i was exactly the observation at step i − 1
            assert_eq!(preds[i], m.predict(xs[i].as_slice(), truth[i - 1].as_slice()).unwrap());
        }
        assert!(m.predict_trajectory(&xs, &truth[0], FeedbackMode::Observer { observed: &truth[..3], gain: 1.0 }).is_err());
        assert!(m.predict_trajectory(&xs, &truth[0], FeedbackMode::Observer { observed: &truth, gain: 1.5 }).is_err());
    }
}
