//! Small dense kernels for the hot loops: a Cholesky factor stored row-major
//! with allocation-free triangular solves.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

/// Relative diagonal floor added before factorizing a covariance.
pub(crate) const DENSITY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Factor {
    n: usize,
    /// Lower triangle, row-major, `l[i * n + j]` for `j <= i`.
    l: Vec<f64>,
    log_det: f64,
}

impl Factor {
    /// Cholesky factor of `cov + extra·I`; `None` when not positive definite.
    pub(crate) fn new(cov: &DMatrix<f64>, extra: f64) -> Option<Self> {
        let n = cov.nrows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = cov[(i, j)];
                if i == j {
                    s += extra;
                }
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        let log_det = 2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>();
        Some(Self { n, l, log_det })
    }

    pub(crate) fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `dᵀ Σ⁻¹ d` for `d = x - mean`, using `scratch` (length n) for `L⁻¹ d`.
    pub(crate) fn quad_form(&self, x: &[f64], mean: &[f64], scratch: &mut [f64]) -> f64 {
        let n = self.n;
        let mut q = 0.0;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = x[i] - mean[i];
            for (lij, zj) in row.iter().zip(&scratch[..i]) {
                s -= lij * zj;
            }
            let z = s / self.l[i * n + i];
            scratch[i] = z;
            q += z * z;
        }
        q
    }
}

/// Symmetric within `1e-12` of the largest entry, all entries finite.
pub(crate) fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

pub(crate) fn trace(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_matches_direct_quadratic_form() {
        let cov = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let f = Factor::new(&cov, 0.0).unwrap();
        let x = [1.0, -2.0, 0.5];
        let mean = [0.1, 0.2, 0.3];
        let d = nalgebra::DVector::from_iterator(3, x.iter().zip(&mean).map(|(a, b)| a - b));
        let direct = (d.transpose() * cov.clone().try_inverse().unwrap() * &d)[(0, 0)];
        let mut s = [0.0; 3];
        assert!((f.quad_form(&x, &mean, &mut s) - direct).abs() < 1e-12);
        assert!((f.log_det() - cov.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn indefinite_fails() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Factor::new(&cov, 0.0).is_none());
    }
}
