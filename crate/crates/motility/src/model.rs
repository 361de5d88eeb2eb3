//! Self-describing JSON model documents.
//!
//! Numbers are written in shortest round-trip form and parsed with correct
//! rounding, so a saved model loads back bit for bit. Matrices are stored
//! as lists of rows.

use std::path::Path;

use motility_core::baselines::{FourierSeries, GeometricModel, PhaseBin};
use motility_core::experiment::{FittedModel, ModelKind};
use motility_core::gaussian::{GaussianComponent, TlsSlope};
use motility_core::gbr::GbrModel;
use motility_core::gmm::GmmModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "motility-model";
pub const VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &Rows, shape: (usize, usize), what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::Model(format!("{what} should be {}x{}", shape.0, shape.1)));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeDoc {
    pub a: Rows,
    pub tls_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDoc {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<SlopeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmDoc {
    pub k: usize,
    pub n_tot: usize,
    pub seed: u64,
    pub loglik_trace: Vec<f64>,
    pub components: Vec<ComponentDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbrDoc {
    pub dim_in: usize,
    pub dim_out: usize,
    pub mixture: GmmDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinDoc {
    pub phi_center: f64,
    pub mean_vb: Vec<f64>,
    pub mean_r: Vec<f64>,
    pub mean_rdot: Vec<f64>,
    pub b_r: Rows,
    pub b_rdot: Rows,
    pub count: usize,
    pub underdetermined: bool,
    pub sse_geometric: f64,
    pub sse_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricDoc {
    pub ns: usize,
    pub nb: usize,
    pub fourier_order: usize,
    pub fourier: Rows,
    pub bins: Vec<BinDoc>,
}

/// The model payload, tagged with its family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelBody {
    Gmm(GmmDoc),
    Gbr(GbrDoc),
    Agbr(GbrDoc),
    Phase(GeometricDoc),
    Geometric(GeometricDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub body: ModelBody,
}

impl GmmDoc {
    pub fn from_model(m: &GmmModel) -> Self {
        let components = m
            .components
            .iter()
            .map(|c| ComponentDoc {
                weight: c.weight,
                mean: c.mean.iter().copied().collect(),
                cov: rows(&c.cov),
                slope: c.slope.as_ref().map(|s| SlopeDoc { a: rows(&s.a), tls_ok: s.ok }),
            })
            .collect();
        Self { k: m.k, n_tot: m.n_tot, seed: m.seed, loglik_trace: m.loglik_trace.clone(), components }
    }

    /// Rebuilds the mixture. `split` gives the slope shape `(dim_out, dim_in)`
    /// that every component must carry, or `None` for a bare mixture.
    pub fn to_model(&self, split: Option<(usize, usize)>) -> Result<GmmModel> {
        if self.components.len() != self.k {
            return Err(Error::Model(format!("k = {} but {} components", self.k, self.components.len())));
        }
        let n = self.n_tot;
        let components = self
            .components
            .iter()
            .map(|c| {
                if c.mean.len() != n {
                    return Err(Error::Model(format!("mean should have {n} entries")));
                }
                let mut g = GaussianComponent::new(c.weight, DVector::from_vec(c.mean.clone()), matrix(&c.cov, (n, n), "cov")?)?;
                g.slope = match (&c.slope, split) {
                    (Some(s), Some(shape)) => Some(TlsSlope { a: matrix(&s.a, shape, "slope")?, ok: s.tls_ok }),
                    (None, None) => None,
                    (None, Some(_)) => return Err(Error::Model("component is missing its slope".into())),
                    (Some(_), None) => return Err(Error::Model("bare mixture carries slopes".into())),
                };
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GmmModel::from_components(components, self.seed, self.loglik_trace.clone())?)
    }
}

impl GbrDoc {
    pub fn from_model(m: &GbrModel) -> Self {
        Self { dim_in: m.dim_in, dim_out: m.dim_out, mixture: GmmDoc::from_model(&m.gmm) }
    }

    pub fn to_model(&self) -> Result<GbrModel> {
        let gmm = self.mixture.to_model(Some((self.dim_out, self.dim_in)))?;
        Ok(GbrModel::from_parts(gmm, self.dim_in, self.dim_out)?)
    }
}

impl GeometricDoc {
    pub fn from_model(m: &GeometricModel) -> Self {
        let bins = m
            .bins
            .iter()
            .map(|b| BinDoc {
                phi_center: b.phi_center,
                mean_vb: b.mean_vb.iter().copied().collect(),
                mean_r: b.mean_r.iter().copied().collect(),
                mean_rdot: b.mean_rdot.iter().copied().collect(),
                b_r: rows(&b.b_r),
                b_rdot: rows(&b.b_rdot),
                count: b.count,
                underdetermined: b.underdetermined,
                sse_geometric: b.sse_geometric,
                sse_phase: b.sse_phase,
            })
            .collect();
        Self { ns: m.ns, nb: m.nb, fourier_order: m.fourier.order, fourier: rows(&m.fourier.coeffs), bins }
    }

    pub fn to_model(&self) -> Result<GeometricModel> {
        let (ns, nb) = (self.ns, self.nb);
        let vector = |v: &Vec<f64>, n: usize, what: &str| {
            if v.len() == n {
                Ok(DVector::from_vec(v.clone()))
            } else {
                Err(Error::Model(format!("{what} should have {n} entries")))
            }
        };
        let bins = self
            .bins
            .iter()
            .map(|b| {
                Ok(PhaseBin {
                    phi_center: b.phi_center,
                    mean_vb: vector(&b.mean_vb, nb, "mean_vb")?,
                    mean_r: vector(&b.mean_r, ns, "mean_r")?,
                    mean_rdot: vector(&b.mean_rdot, ns, "mean_rdot")?,
                    b_r: matrix(&b.b_r, (nb, ns), "b_r")?,
                    b_rdot: matrix(&b.b_rdot, (nb, ns), "b_rdot")?,
                    count: b.count,
                    underdetermined: b.underdetermined,
                    sse_geometric: b.sse_geometric,
                    sse_phase: b.sse_phase,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let entries = nb + 2 * ns + 2 * nb * ns;
        let coeffs = matrix(&self.fourier, (entries, 2 * self.fourier_order + 1), "fourier")?;
        Ok(GeometricModel::from_parts(ns, nb, bins, FourierSeries { order: self.fourier_order, coeffs })?)
    }
}

impl ModelFile {
    pub fn new(body: ModelBody) -> Self {
        Self { format: FORMAT.into(), version: VERSION, body }
    }

    pub fn from_fitted(m: &FittedModel) -> Self {
        Self::new(match m {
            FittedModel::Phase(g) => ModelBody::Phase(GeometricDoc::from_model(g)),
            FittedModel::Geometric(g) => ModelBody::Geometric(GeometricDoc::from_model(g)),
            FittedModel::Gbr(g) => ModelBody::Gbr(GbrDoc::from_model(g)),
            FittedModel::Agbr(g) => ModelBody::Agbr(GbrDoc::from_model(g)),
        })
    }

    /// The fitted model, or an error for a bare mixture.
    pub fn to_fitted(&self) -> Result<FittedModel> {
        Ok(match &self.body {
            ModelBody::Phase(g) => FittedModel::Phase(g.to_model()?),
            ModelBody::Geometric(g) => FittedModel::Geometric(g.to_model()?),
            ModelBody::Gbr(g) => FittedModel::Gbr(g.to_model()?),
            ModelBody::Agbr(g) => FittedModel::Agbr(g.to_model()?),
            ModelBody::Gmm(_) => return Err(Error::Model("a bare mixture cannot predict body velocities".into())),
        })
    }

    pub fn kind(&self) -> Option<ModelKind> {
        match self.body {
            ModelBody::Phase(_) => Some(ModelKind::Phase),
            ModelBody::Geometric(_) => Some(ModelKind::Geometric),
            ModelBody::Gbr(_) => Some(ModelKind::Gbr),
            ModelBody::Agbr(_) => Some(ModelKind::Agbr),
            ModelBody::Gmm(_) => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s).map_err(|e| Error::Model(e.to_string()))?;
        if f.format != FORMAT {
            return Err(Error::Model(format!("not a model document (format '{}')", f.format)));
        }
        if f.version != VERSION {
            return Err(Error::Model(format!("unsupported version {}", f.version)));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
