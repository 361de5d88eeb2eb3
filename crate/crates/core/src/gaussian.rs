//! Single-Gaussian primitives: densities, normalized Mahalanobis distance and
//! the total-least-squares slope of a graph Gaussian.

use alloc::vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, trace, Factor, DENSITY_FLOOR};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Condition number of the output block of the null-space basis beyond which
/// the tangent is treated as vertical.
pub const TLS_MAX_CONDITION: f64 = 1e8;

/// Linear map `y = A x` read off a covariance, with `ok = false` when the
/// tangent is (nearly) vertical and `a` has been zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct TlsSlope {
    pub a: DMatrix<f64>,
    pub ok: bool,
}

/// A weighted Gaussian. Densities and distances are evaluated with a
/// diagonal floor of `1e-9 · tr(S) / n` so near-degenerate graph components
/// stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Cached TLS slope of `cov` for a given input/output split.
    pub slope: Option<TlsSlope>,
    factor: Factor,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: cov.nrows() });
        }
        if !(weight >= 0.0) || !weight.is_finite() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("component weight or mean not finite".into()));
        }
        if !is_symmetric(&cov) {
            return Err(Error::NotSpd);
        }
        let floor = DENSITY_FLOOR * trace(&cov) / n as f64;
        let factor = Factor::new(&cov, floor.max(0.0)).ok_or(Error::Singular)?;
        Ok(Self { weight, mean, cov, slope: None, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// `log N(x; μ, S)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut scratch = vec![0.0; self.dim()];
        Ok(self.log_density_with(x, &mut scratch))
    }

    pub(crate) fn log_density_with(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let q = self.factor.quad_form(x, self.mean.as_slice(), scratch);
        -0.5 * (q + self.dim() as f64 * LN_2PI + self.factor.log_det())
    }

    /// `(x − μ)ᵀ S⁻¹ (x − μ) / n_tot`; values up to 1 mean "associated".
    pub fn mahalanobis_normalized(&self, x: &[f64], n_tot: usize) -> Result<f64> {
        self.check(x)?;
        let mut scratch = vec![0.0; self.dim()];
        Ok(self.mahalanobis_with(x, &mut scratch) / n_tot as f64)
    }

    pub(crate) fn mahalanobis_with(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.factor.quad_form(x, self.mean.as_slice(), scratch)
    }

    /// Computes and caches the TLS slope for the given split.
    pub fn with_slope(mut self, dim_in: usize, dim_out: usize) -> Result<Self> {
        self.slope = Some(tls_extract(&self.cov, dim_in, dim_out)?);
        Ok(self)
    }
}

/// Total-least-squares slope of the graph described by covariance `s`.
///
/// With `S = Uᵀ d U` (eigenvalues non-increasing), the last `dim_out` rows of
/// `U` span the normal directions of the fitted plane; writing them as
/// `[U_yx U_yy]` gives `A = −U_yy⁻¹ U_yx`.
pub fn tls_extract(s: &DMatrix<f64>, dim_in: usize, dim_out: usize) -> Result<TlsSlope> {
    let n = dim_in + dim_out;
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: s.nrows() });
    }
    if !is_symmetric(s) {
        return Err(Error::NotSpd);
    }
    let eig = nalgebra::SymmetricEigen::new(s.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
        return Err(Error::NotSpd);
    }
    let mut order: alloc::vec::Vec<usize> = (0..n).collect();
    // stable: ties keep the solver's order
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let normals = DMatrix::from_fn(dim_out, n, |row, col| eig.eigenvectors[(col, order[dim_in + row])]);
    let u_yx = normals.columns(0, dim_in).into_owned();
    let u_yy = normals.columns(dim_in, dim_out).into_owned();
    let sv = u_yy.clone().singular_values();
    let smax = sv.iter().fold(0.0f64, |a, &v| a.max(v));
    let smin = sv.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let zero = || TlsSlope { a: DMatrix::zeros(dim_out, dim_in), ok: false };
    if !(smin > 0.0) || smax / smin > TLS_MAX_CONDITION {
        return Ok(zero());
    }
    match u_yy.lu().solve(&u_yx) {
        Some(x) => Ok(TlsSlope { a: -x, ok: true }),
        None => Ok(zero()),
    }
}
