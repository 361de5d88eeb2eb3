//! Phase-binned comparison models.
//!
//! Samples are binned by gait phase. Each bin gets the average body velocity
//! and a least-squares first-order correction in the shape and shape-velocity
//! deviations from the bin means. Bin quantities are then interpolated over
//! phase by a truncated Fourier series. The Geometric model uses the full
//! expansion, the Phase model only the averaged velocity.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 24;
pub const DEFAULT_FOURIER_ORDER: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBin {
    pub phi_center: f64,
    pub mean_vb: DVector<f64>,
    pub mean_r: DVector<f64>,
    pub mean_rdot: DVector<f64>,
    /// `Nb × Ns` slope in the shape deviation.
    pub b_r: DMatrix<f64>,
    /// `Nb × Ns` slope in the shape-velocity deviation.
    pub b_rdot: DMatrix<f64>,
    pub count: usize,
    /// Fewer than `2 Ns + 1` samples: slopes zeroed.
    pub underdetermined: bool,
    /// Training sum of squared residuals with and without the correction.
    pub sse_geometric: f64,
    pub sse_phase: f64,
}

/// Truncated real Fourier series `a0 + Σ a_m cos mφ + b_m sin mφ`, one row of
/// coefficients per interpolated scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    pub order: usize,
    /// `entries × (2·order + 1)`, columns `[a0, a1, b1, a2, b2, …]`.
    pub coeffs: DMatrix<f64>,
}

fn basis(order: usize, phi: f64) -> DVector<f64> {
    let mut out = DVector::zeros(2 * order + 1);
    out[0] = 1.0;
    for m in 1..=order {
        let (s, c) = (m as f64 * phi).sin_cos();
        out[2 * m - 1] = c;
        out[2 * m] = s;
    }
    out
}

fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
    svd.solve(b, 1e-10 * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Validation(alloc::format!("least squares failed: {e}")))
}

impl FourierSeries {
    /// Least-squares fit of `values` (one row per phase in `phis`).
    pub fn fit(phis: &[f64], values: &DMatrix<f64>, order: usize) -> Result<Self> {
        if values.nrows() != phis.len() {
            return Err(Error::DimensionMismatch { expected: phis.len(), got: values.nrows() });
        }
        let design = DMatrix::from_fn(phis.len(), 2 * order + 1, |i, j| basis(order, phis[i])[j]);
        let coeffs = lstsq(&design, values)?.transpose();
        Ok(Self { order, coeffs })
    }

    pub fn eval(&self, phi: f64) -> DVector<f64> {
        &self.coeffs * basis(self.order, phi)
    }

    /// Root-mean-square misfit against `values` at `phis`.
    pub fn residual(&self, phis: &[f64], values: &DMatrix<f64>) -> f64 {
        let mut sse = 0.0;
        for (i, &phi) in phis.iter().enumerate() {
            let v = self.eval(phi);
            sse += v.iter().zip(values.row(i).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        (sse / (phis.len() * values.ncols()).max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricModel {
    pub ns: usize,
    pub nb: usize,
    pub n_bins: usize,
    pub bins: Vec<PhaseBin>,
    /// Interpolant of `[v0, mean_r, mean_ṙ, B_r, B_ṙ]` (matrices row-major).
    pub fourier: FourierSeries,
    /// RMS interpolation residual at the bin centres.
    pub fit_residual: f64,
}

/// Interpolated bin quantities at one phase.
struct Expansion {
    v0: DVector<f64>,
    mean_r: DVector<f64>,
    mean_rdot: DVector<f64>,
    b_r: DMatrix<f64>,
    b_rdot: DMatrix<f64>,
}

fn pack(bin: &PhaseBin) -> Vec<f64> {
    let mut v: Vec<f64> = bin.mean_vb.iter().chain(bin.mean_r.iter()).chain(bin.mean_rdot.iter()).copied().collect();
    let (nb, ns) = bin.b_r.shape();
    v.extend((0..nb).flat_map(|i| (0..ns).map(move |j| (i, j))).map(|(i, j)| bin.b_r[(i, j)]));
    v.extend((0..nb).flat_map(|i| (0..ns).map(move |j| (i, j))).map(|(i, j)| bin.b_rdot[(i, j)]));
    v
}

impl GeometricModel {
    fn expansion(&self, phi: f64) -> Expansion {
        let (ns, nb) = (self.ns, self.nb);
        let v = self.fourier.eval(phi);
        let mut off = 0;
        let mut take = |len: usize| {
            let s = v.rows(off, len).into_owned();
            off += len;
            s
        };
        let v0 = take(nb);
        let mean_r = take(ns);
        let mean_rdot = take(ns);
        let b_r = DMatrix::from_row_slice(nb, ns, take(nb * ns).as_slice());
        let b_rdot = DMatrix::from_row_slice(nb, ns, take(nb * ns).as_slice());
        Expansion { v0, mean_r, mean_rdot, b_r, b_rdot }
    }

    /// `v0(φ) + B_r(φ)(r − r̄(φ)) + B_ṙ(φ)(ṙ − ṙ̄(φ))`.
    pub fn geometric_predict(&self, phi: f64, r: &[f64], rdot: &[f64]) -> DVector<f64> {
        let e = self.expansion(phi);
        let dr = DVector::from_column_slice(r) - &e.mean_r;
        let drd = DVector::from_column_slice(rdot) - &e.mean_rdot;
        e.v0 + e.b_r * dr + e.b_rdot * drd
    }

    /// Phase-averaged body velocity `v0(φ)`.
    pub fn phase_predict(&self, phi: f64) -> DVector<f64> {
        self.fourier.eval(phi).rows(0, self.nb).into_owned()
    }

    /// Interpolated bin means `(r̄(φ), ṙ̄(φ))`.
    pub fn mean_shape(&self, phi: f64) -> (DVector<f64>, DVector<f64>) {
        let e = self.expansion(phi);
        (e.mean_r, e.mean_rdot)
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.phi_center).collect()
    }

    /// Rebuilds a model from stored bins and coefficients.
    pub fn from_parts(ns: usize, nb: usize, bins: Vec<PhaseBin>, fourier: FourierSeries) -> Result<Self> {
        let entries = nb + 2 * ns + 2 * nb * ns;
        if fourier.coeffs.shape() != (entries, 2 * fourier.order + 1) {
            return Err(Error::Validation("Fourier coefficient table has the wrong shape".into()));
        }
        let n_bins = bins.len();
        let mut m = Self { ns, nb, n_bins, bins, fourier, fit_residual: 0.0 };
        m.fit_residual = m.fourier.residual(&m.centers(), &m.bin_table());
        Ok(m)
    }

    fn bin_table(&self) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = self.bins.iter().map(pack).collect();
        let cols = rows.first().map_or(0, Vec::len);
        DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }
}

fn column_mean<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize, count: f64) -> DVector<f64> {
    let mut acc = DVector::zeros(dim);
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc / count
}

/// Fits the binned expansion and its Fourier interpolant.
pub fn fit_geometric(d: &Dataset, n_bins: usize, fourier_order: usize) -> Result<GeometricModel> {
    if n_bins == 0 || 2 * fourier_order + 1 > n_bins {
        return Err(Error::Validation(alloc::format!(
            "need n_bins >= 2·order + 1 (got {n_bins} bins, order {fourier_order})"
        )));
    }
    let (ns, nb) = (d.ns, d.nb);
    let width = TAU / n_bins as f64;
    let mut members: Vec<Vec<(f64, &[f64], &[f64], &[f64])>> = alloc::vec![Vec::new(); n_bins];
    for s in d.samples() {
        let phi = s.phase.ok_or(Error::Missing("phase"))?;
        let rdot = s.rdot.as_deref().ok_or(Error::Missing("shape velocity"))?;
        let vb = s.vb.as_deref().ok_or(Error::Missing("body velocity"))?;
        let bin = ((phi / width).floor() as usize).min(n_bins - 1);
        members[bin].push((phi, &s.r[..], rdot, vb));
    }
    let mut bins = Vec::with_capacity(n_bins);
    for (b, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(Error::EmptyBin { bin: b });
        }
        let count = m.len();
        let cnt = count as f64;
        let mean_r = column_mean(m.iter().map(|row| row.1), ns, cnt);
        let mean_rdot = column_mean(m.iter().map(|row| row.2), ns, cnt);
        let mean_vb = column_mean(m.iter().map(|row| row.3), nb, cnt);
        let x = DMatrix::from_fn(count, 2 * ns, |i, j| {
            if j < ns { m[i].1[j] - mean_r[j] } else { m[i].2[j - ns] - mean_rdot[j - ns] }
        });
        let y = DMatrix::from_fn(count, nb, |i, j| m[i].3[j] - mean_vb[j]);
        let sse_phase = y.norm_squared();
        let underdetermined = count < 2 * ns + 1;
        let (b_r, b_rdot, sse_geometric) = if underdetermined {
            log::warn!("phase bin {b} has {count} samples; first-order terms zeroed");
            (DMatrix::zeros(nb, ns), DMatrix::zeros(nb, ns), sse_phase)
        } else {
            let coef = lstsq(&x, &y)?.transpose();
            let sse = (&y - &x * coef.transpose()).norm_squared();
            (coef.columns(0, ns).into_owned(), coef.columns(ns, ns).into_owned(), sse)
        };
        bins.push(PhaseBin {
            phi_center: (b as f64 + 0.5) * width,
            mean_vb,
            mean_r,
            mean_rdot,
            b_r,
            b_rdot,
            count,
            underdetermined,
            sse_geometric,
            sse_phase,
        });
    }
    let entries = nb + 2 * ns + 2 * nb * ns;
    let mut m = GeometricModel {
        ns,
        nb,
        n_bins,
        bins,
        fourier: FourierSeries { order: fourier_order, coeffs: DMatrix::zeros(entries, 2 * fourier_order + 1) },
        fit_residual: 0.0,
    };
    let (centers, table) = (m.centers(), m.bin_table());
    m.fourier = FourierSeries::fit(&centers, &table, fourier_order)?;
    m.fit_residual = m.fourier.residual(&centers, &table);
    Ok(m)
}
