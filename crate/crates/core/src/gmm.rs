//! Full-covariance Gaussian mixtures fitted by expectation–maximization.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::gaussian::GaussianComponent;
use crate::rng::{derive_rng, stream, Rng};

/// Reseeds allowed per EM run before the run is abandoned.
pub const MAX_RESEEDS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Relative change of the mean log-likelihood that ends a run.
    pub tol: f64,
    /// Diagonal regularization, relative to `tr(S_global) / n`.
    pub cov_floor: f64,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { k: 60, max_iter: 500, tol: 1e-4, cov_floor: 1e-6, n_init: 3, seed: 0 }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n_init == 0 || self.max_iter == 0 {
            return Err(Error::Validation("K, n_init and max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.cov_floor > 0.0) {
            return Err(Error::Validation("tol and cov_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub components: Vec<GaussianComponent>,
    pub n_tot: usize,
    /// Mean per-point log-likelihood after each E-step of the returned run,
    /// restarted whenever a collapsed component was reseeded.
    pub loglik_trace: Vec<f64>,
    pub seed: u64,
    pub k: usize,
}

impl GmmModel {
    /// Assembles a model from already-built components (e.g. when loading).
    pub fn from_components(components: Vec<GaussianComponent>, seed: u64, loglik_trace: Vec<f64>) -> Result<Self> {
        let n_tot = components.first().map(GaussianComponent::dim).ok_or_else(|| Error::Validation("model has no components".into()))?;
        if let Some(c) = components.iter().find(|c| c.dim() != n_tot) {
            return Err(Error::DimensionMismatch { expected: n_tot, got: c.dim() });
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(alloc::format!("mixture weights sum to {total}")));
        }
        Ok(Self { k: components.len(), components, n_tot, loglik_trace, seed })
    }

    pub fn final_loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Mean per-point log-likelihood of `points`.
    pub fn mean_loglik(&self, points: &[DVector<f64>]) -> Result<f64> {
        let flat = Flat::from_points(points, self.n_tot)?;
        let mut logp = vec![0.0; flat.len() * self.k];
        Ok(e_step(&flat, &self.components, &mut logp))
    }
}

/// Row-major point storage.
pub(crate) struct Flat {
    pub(crate) dim: usize,
    pub(crate) data: Vec<f64>,
}

impl Flat {
    pub(crate) fn from_points(points: &[DVector<f64>], dim: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            data.extend(p.iter());
        }
        Ok(Self { dim, data })
    }

    pub(crate) fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Fills `logp` (N×K, row-major) with `log w_k + log N(x_i)`, turns it into
/// responsibilities in place and returns the mean log-likelihood.
fn e_step(flat: &Flat, comps: &[GaussianComponent], logp: &mut [f64]) -> f64 {
    let k = comps.len();
    let mut scratch = vec![0.0; flat.dim];
    let log_w: Vec<f64> = comps.iter().map(|c| c.weight.ln()).collect();
    let mut total = 0.0;
    for i in 0..flat.len() {
        let x = flat.row(i);
        let row = &mut logp[i * k..(i + 1) * k];
        for (j, c) in comps.iter().enumerate() {
            row[j] = log_w[j] + c.log_density_with(x, &mut scratch);
        }
        let lse = log_sum_exp(row);
        total += lse;
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    total / flat.len() as f64
}

/// Responsibilities of every point (rows, in input order) for every component.
pub fn responsibilities(points: &[DVector<f64>], model: &GmmModel) -> Result<DMatrix<f64>> {
    let flat = Flat::from_points(points, model.n_tot)?;
    let k = model.k;
    let mut logp = vec![0.0; flat.len() * k];
    e_step(&flat, &model.components, &mut logp);
    Ok(DMatrix::from_row_slice(flat.len(), k, &logp))
}

struct Params {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

impl Params {
    fn components(&self) -> Result<Vec<GaussianComponent>> {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.covs)
            .map(|((&w, m), c)| GaussianComponent::new(w, m.clone(), c.clone()))
            .collect()
    }
}

struct RunOutcome {
    params: Params,
    trace: Vec<f64>,
}

/// Fits a `cfg.k`-component mixture.
///
/// Points are put in a canonical (lexicographic) order first, so the result
/// depends only on the point multiset and the seed. Each of the `n_init`
/// runs seeds means k-means++-style from the data, starts every covariance
/// at the global covariance and weights at `1/K`; the run with the highest
/// final log-likelihood wins. Every covariance carries a diagonal floor of
/// `cov_floor · tr(S_global) / n`.
pub fn fit_gmm(points: &[DVector<f64>], cfg: &EmConfig) -> Result<GmmModel> {
    cfg.validate()?;
    let dim = points.first().map(|p| p.len()).ok_or(Error::TooFewPoints { needed: cfg.k, got: 0 })?;
    let needed = cfg.k * (dim + 1);
    if points.len() < needed {
        return Err(Error::TooFewPoints { needed, got: points.len() });
    }
    let mut sorted: Vec<&DVector<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| lex_cmp(a.as_slice(), b.as_slice()));
    let mut data = Vec::with_capacity(points.len() * dim);
    for p in &sorted {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        data.extend(p.iter());
    }
    let flat = Flat { dim, data };

    let n = flat.len() as f64;
    let mut mean = DVector::zeros(dim);
    for i in 0..flat.len() {
        for (m, x) in mean.iter_mut().zip(flat.row(i)) {
            *m += x;
        }
    }
    mean /= n;
    let mut global = DMatrix::zeros(dim, dim);
    accumulate_cov(&flat, |_| 1.0, &mean, &mut global);
    global /= n;
    let floor = cfg.cov_floor * global.trace() / dim as f64;
    let start_cov = &global + DMatrix::identity(dim, dim) * floor;

    let mut best: Option<RunOutcome> = None;
    let mut last_err = None;
    for run in 0..cfg.n_init {
        let mut rng = derive_rng(cfg.seed, stream::EM_RUN + run as u64);
        match run_em(&flat, cfg, &start_cov, floor, &mut rng) {
            Ok(out) => {
                let better = best.as_ref().is_none_or(|b| out.trace.last() > b.trace.last());
                if better {
                    best = Some(out);
                }
            }
            Err(e) => {
                log::debug!("EM run {run} abandoned: {e}");
                last_err = Some(e);
            }
        }
    }
    let best = best.ok_or_else(|| last_err.unwrap_or(Error::Collapse { reseeds: MAX_RESEEDS }))?;
    Ok(GmmModel { components: best.params.components()?, n_tot: dim, loglik_trace: best.trace, seed: cfg.seed, k: cfg.k })
}

fn accumulate_cov(flat: &Flat, weight: impl Fn(usize) -> f64, mean: &DVector<f64>, out: &mut DMatrix<f64>) {
    let dim = flat.dim;
    let mut upper = vec![0.0; dim * dim];
    let mut d = vec![0.0; dim];
    for i in 0..flat.len() {
        let w = weight(i);
        if w == 0.0 {
            continue;
        }
        for (dj, (x, m)) in d.iter_mut().zip(flat.row(i).iter().zip(mean.iter())) {
            *dj = x - m;
        }
        for a in 0..dim {
            let wa = w * d[a];
            for b in a..dim {
                upper[a * dim + b] += wa * d[b];
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            out[(a, b)] += upper[a * dim + b];
            if a != b {
                out[(b, a)] += upper[a * dim + b];
            }
        }
    }
}

fn kmeans_pp(flat: &Flat, k: usize, rng: &mut Rng) -> Vec<DVector<f64>> {
    let n = flat.len();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq(flat.row(i), flat.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter().position(|&w| {
                acc += w;
                acc > u
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq(flat.row(i), flat.row(pick)));
        }
    }
    centers.iter().map(|&c| DVector::from_column_slice(flat.row(c))).collect()
}

fn run_em(flat: &Flat, cfg: &EmConfig, start_cov: &DMatrix<f64>, floor: f64, rng: &mut Rng) -> Result<RunOutcome> {
    let (n, dim, k) = (flat.len(), flat.dim, cfg.k);
    let mut params = Params {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(flat, k, rng),
        covs: vec![start_cov.clone(); k],
    };
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut reseeds = 0;
    let mut iter = 0;
    loop {
        let comps = params.components()?;
        let ll = e_step(flat, &comps, &mut resp);
        let converged = trace.last().is_some_and(|&prev: &f64| ll - prev < cfg.tol * prev.abs());
        trace.push(ll);
        if converged || iter >= cfg.max_iter {
            break;
        }
        iter += 1;

        let mass: Vec<f64> = (0..k).map(|j| (0..n).map(|i| resp[i * k + j]).sum()).collect();
        let collapsed: Vec<usize> = (0..k).filter(|&j| !(mass[j] >= (dim + 1) as f64)).collect();
        for j in 0..k {
            if collapsed.contains(&j) {
                continue;
            }
            let mut m = DVector::zeros(dim);
            for i in 0..n {
                let r = resp[i * k + j];
                for (mm, x) in m.iter_mut().zip(flat.row(i)) {
                    *mm += r * x;
                }
            }
            m /= mass[j];
            let mut c = DMatrix::zeros(dim, dim);
            accumulate_cov(flat, |i| resp[i * k + j], &m, &mut c);
            c /= mass[j];
            for a in 0..dim {
                c[(a, a)] += floor;
            }
            params.means[j] = m;
            params.covs[j] = c;
            params.weights[j] = mass[j] / n as f64;
        }
        if !collapsed.is_empty() {
            reseeds += collapsed.len();
            if reseeds > MAX_RESEEDS {
                return Err(Error::Collapse { reseeds });
            }
            // split the component that owns a random point
            for &j in &collapsed {
                let i = rng.random_range(0..n);
                let owner = (0..k)
                    .filter(|o| !collapsed.contains(o))
                    .max_by(|&a, &b| resp[i * k + a].total_cmp(&resp[i * k + b]).then(b.cmp(&a)));
                params.means[j] = DVector::from_column_slice(flat.row(i));
                match owner {
                    Some(o) => {
                        params.covs[j] = params.covs[o].clone();
                        params.weights[o] *= 0.5;
                        params.weights[j] = params.weights[o];
                    }
                    None => {
                        params.covs[j] = start_cov.clone();
                        params.weights[j] = 1.0 / k as f64;
                    }
                }
            }
            let total: f64 = params.weights.iter().sum();
            params.weights.iter_mut().for_each(|w| *w /= total);
            trace.clear();
        }
    }
    Ok(RunOutcome { params, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_points(rng: &mut crate::rng::Rng, n: usize, dim: usize, shift: &[f64]) -> Vec<DVector<f64>> {
        (0..n)
            .map(|_| DVector::from_fn(dim, |i, _| shift[i] + Distribution::<f64>::sample(&StandardNormal, rng)))
            .collect()
    }

    fn cfg(k: usize, seed: u64) -> EmConfig {
        EmConfig { k, seed, ..EmConfig::default() }
    }

    #[test]
    fn single_standard_normal() {
        let mut rng = derive_rng(1, 0);
        let pts = normal_points(&mut rng, 2000, 2, &[0.0, 0.0]);
        let m = fit_gmm(&pts, &cfg(1, 4)).unwrap();
        let c = &m.components[0];
        // sample statistics of the same draw
        let mean = pts.iter().fold(DVector::zeros(2), |a, p| a + p) / 2000.0;
        let cov = pts.iter().fold(DMatrix::zeros(2, 2), |a, p| a + (p - &mean) * (p - &mean).transpose()) / 2000.0;
        assert!(c.mean.norm() < 0.1);
        assert!((&c.cov - DMatrix::identity(2, 2)).norm() < 0.15);
        assert!((&c.mean - &mean).norm() < 1e-12);
        let floor = 1e-6 * cov.trace() / 2.0;
        assert!((&c.cov - (&cov + DMatrix::identity(2, 2) * floor)).norm() < 1e-12);
    }

    #[test]
    fn two_separated_blobs() {
        let mut rng = derive_rng(2, 0);
        let mut pts = normal_points(&mut rng, 500, 2, &[10.0, 0.0]);
        pts.extend(normal_points(&mut rng, 500, 2, &[-10.0, 0.0]));
        let m = fit_gmm(&pts, &cfg(2, 9)).unwrap();
        for c in &m.components {
            assert!((c.weight - 0.5).abs() < 0.05);
            assert!((c.mean[0].abs() - 10.0).abs() < 0.2);
        }
        let total: f64 = m.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let pts = vec![DVector::from_vec(vec![0.0, 1.0])];
        assert!(matches!(fit_gmm(&pts, &cfg(1, 0)), Err(Error::TooFewPoints { .. })));
        assert!(matches!(fit_gmm(&[], &cfg(1, 0)), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn responsibilities_examples() {
        let mut rng = derive_rng(3, 0);
        let pts = normal_points(&mut rng, 50, 2, &[0.0, 0.0]);
        let m = fit_gmm(&pts, &cfg(1, 0)).unwrap();
        let r = responsibilities(&pts, &m).unwrap();
        assert!(r.iter().all(|&v| v == 1.0));

        let comps = vec![
            GaussianComponent::new(0.5, DVector::from_vec(vec![-50.0, 0.0]), DMatrix::identity(2, 2)).unwrap(),
            GaussianComponent::new(0.5, DVector::from_vec(vec![50.0, 0.0]), DMatrix::identity(2, 2)).unwrap(),
        ];
        let m = GmmModel::from_components(comps, 0, vec![]).unwrap();
        let r = responsibilities(&[DVector::from_vec(vec![-50.0, 0.0])], &m).unwrap();
        assert!((r[(0, 0)] - 1.0).abs() < 1e-6 && r[(0, 1)] < 1e-6);
    }

    #[test]
    fn responsibilities_match_bayes_rule() {
        let mut rng = derive_rng(4, 0);
        let pts = normal_points(&mut rng, 5, 2, &[0.0, 0.0]);
        let c0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.7]);
        let c1 = DMatrix::from_row_slice(2, 2, &[0.5, -0.1, -0.1, 2.0]);
        let m0 = DVector::from_vec(vec![0.5, -0.2]);
        let m1 = DVector::from_vec(vec![-0.4, 0.6]);
        let comps = vec![
            GaussianComponent::new(0.3, m0.clone(), c0.clone()).unwrap(),
            GaussianComponent::new(0.7, m1.clone(), c1.clone()).unwrap(),
        ];
        let model = GmmModel::from_components(comps, 0, vec![]).unwrap();
        let r = responsibilities(&pts, &model).unwrap();
        // oracle: densities from explicit inverses of the floored covariances
        let dens = |x: &DVector<f64>, m: &DVector<f64>, c: &DMatrix<f64>| {
            let reg = c + DMatrix::identity(2, 2) * (1e-9 * c.trace() / 2.0);
            let d = x - m;
            let q = (d.transpose() * reg.clone().try_inverse().unwrap() * &d)[(0, 0)];
            (-0.5 * q).exp() / (2.0 * core::f64::consts::PI * reg.determinant().sqrt())
        };
        for (i, x) in pts.iter().enumerate() {
            let a = 0.3 * dens(x, &m0, &c0);
            let b = 0.7 * dens(x, &m1, &c1);
            assert!((r[(i, 0)] - a / (a + b)).abs() < 1e-12);
            assert!((r[(i, 0)] + r[(i, 1)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_permutation_invariant() {
        let mut rng = derive_rng(5, 0);
        let mut pts = normal_points(&mut rng, 300, 3, &[0.0, 0.0, 0.0]);
        pts.extend(normal_points(&mut rng, 300, 3, &[4.0, 1.0, -2.0]));
        let a = fit_gmm(&pts, &cfg(3, 17)).unwrap();
        let b = fit_gmm(&pts, &cfg(3, 17)).unwrap();
        assert_eq!(a, b);
        pts.reverse();
        pts.swap(3, 100);
        let c = fit_gmm(&pts, &cfg(3, 17)).unwrap();
        assert_eq!(a, c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn loglik_is_monotone(seed in 0u64..10_000, k in 1usize..5, dim in 1usize..4) {
            let mut rng = derive_rng(seed, 7);
            let mut pts = Vec::new();
            for c in 0..3 {
                let shift: Vec<f64> = (0..dim).map(|i| 3.0 * ((c * 7 + i * 3) % 5) as f64 - 6.0).collect();
                pts.extend(normal_points(&mut rng, 80, dim, &shift));
            }
            let m = fit_gmm(&pts, &cfg(k, seed)).unwrap();
            for w in m.loglik_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }
}
