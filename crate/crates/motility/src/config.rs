//! TOML run configuration.

use std::path::{Path, PathBuf};

use motility_core::augment::AugmentConfig;
use motility_core::baselines::{DEFAULT_BINS, DEFAULT_FOURIER_ORDER};
use motility_core::density::DEFAULT_GRID_POINTS;
use motility_core::experiment::{Benchmark, FitConfig, ModelKind};
use motility_core::gmm::EmConfig;
use motility_core::synth::GaitParams;
use serde::{Deserialize, Serialize};

use crate::csvio::Schema;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmSection {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub cov_floor: f64,
    pub n_init: usize,
}

impl Default for EmSection {
    fn default() -> Self {
        let d = EmConfig::default();
        Self { k: d.k, max_iter: d.max_iter, tol: d.tol, cov_floor: d.cov_floor, n_init: d.n_init }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub alpha: f64,
    pub beta: f64,
    pub c: usize,
    /// Components of both A-GBR fits; defaults to `em.k`.
    pub k: Option<usize>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentConfig::default();
        Self { alpha: d.alpha, beta: d.beta, c: d.c, k: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub bins: usize,
    pub fourier_order: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS, fourier_order: DEFAULT_FOURIER_ORDER }
    }
}

/// A sinusoidal gait; see [`GaitParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSpec {
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    pub phase_offset: Vec<f64>,
    pub frequency: f64,
    #[serde(default)]
    pub variability: f64,
}

impl GaitSpec {
    pub fn to_params(&self) -> GaitParams {
        GaitParams {
            amplitude: self.amplitude.clone(),
            offset: self.offset.clone().unwrap_or_else(|| vec![0.0; self.amplitude.len()]),
            phase_offset: self.phase_offset.clone(),
            frequency: self.frequency,
            variability: self.variability,
        }
    }

    pub fn from_params(g: &GaitParams) -> Self {
        Self {
            amplitude: g.amplitude.clone(),
            offset: Some(g.offset.clone()),
            phase_offset: g.phase_offset.clone(),
            frequency: g.frequency,
            variability: g.variability,
        }
    }
}

/// Which known motility map drives a synthetic source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// The built-in curvature-varying two-joint map.
    Curvature,
    /// A constant connection, `Nb × Ns` rows.
    Constant(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub system: System,
    pub gaits: Vec<GaitSpec>,
    pub n_strides: usize,
    pub dt: f64,
    pub noise: f64,
}

/// How files are laid out on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// The columns written by this tool.
    #[default]
    Canonical,
    /// Recorded data read through the run's `[schema]`.
    Schema,
}

/// A train or test set: either files or a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default)]
    pub files: Vec<PathBuf>,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Replace any stored ṙ and v_b by finite differences of the shapes and
    /// poses before fitting.
    #[serde(default)]
    pub derive: bool,
}

impl DataSource {
    pub fn files(files: Vec<PathBuf>) -> Self {
        Self { files, layout: Layout::Canonical, synthetic: None, derive: false }
    }

    fn validate(&self, what: &str) -> Result<()> {
        match (&self.synthetic, self.files.is_empty()) {
            (Some(_), false) => Err(Error::Config(format!("{what}: give either files or a synthetic spec, not both"))),
            (None, true) => Err(Error::Config(format!("{what}: no files and no synthetic spec"))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Model families to fit and compare; `fit` needs exactly one.
    pub models: Vec<String>,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    #[serde(default)]
    pub em: EmSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub schema: Schema,
    pub train: DataSource,
    pub test: DataSource,
}

fn default_grid() -> usize {
    DEFAULT_GRID_POINTS
}

impl Default for RunConfig {
    /// The built-in ruled-surface extrapolation benchmark.
    fn default() -> Self {
        Self::from_benchmark(&Benchmark::extrapolation(0))
    }
}

impl RunConfig {
    pub fn from_benchmark(b: &Benchmark) -> Self {
        let source = |gaits: &[GaitParams]| DataSource {
            files: Vec::new(),
            layout: Layout::Canonical,
            synthetic: Some(SyntheticSpec {
                system: System::Curvature,
                gaits: gaits.iter().map(GaitSpec::from_params).collect(),
                n_strides: b.n_strides,
                dt: b.dt,
                noise: b.noise,
            }),
            derive: b.derive,
        };
        Self {
            models: ModelKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            seed: b.seed,
            out: PathBuf::from("out"),
            grid_points: DEFAULT_GRID_POINTS,
            em: EmSection::default(),
            augment: AugmentSection::default(),
            baselines: BaselineSection::default(),
            schema: Schema::default(),
            train: source(&b.train),
            test: source(&b.test),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths in it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        for src in [&mut cfg.train, &mut cfg.test] {
            for f in &mut src.files {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    /// Canonical TOML text; hashing it identifies the run.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model_kinds()?;
        self.train.validate("train")?;
        self.test.validate("test")?;
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        self.fit_config().em.validate()?;
        self.fit_config().augment.validate()?;
        Ok(())
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        if self.models.is_empty() {
            return Err(Error::Config("no models requested".into()));
        }
        let mut kinds: Vec<ModelKind> = self.models.iter().map(|m| m.parse()).collect::<motility_core::Result<_>>()?;
        let n = kinds.len();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != n {
            return Err(Error::Config("a model is listed twice".into()));
        }
        Ok(kinds)
    }

    /// The single model a `fit` produces.
    pub fn single_model(&self) -> Result<ModelKind> {
        match self.model_kinds()?.as_slice() {
            [k] => Ok(*k),
            _ => Err(Error::Config("fit needs exactly one model (use --model)".into())),
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        let em = EmConfig {
            k: self.em.k,
            max_iter: self.em.max_iter,
            tol: self.em.tol,
            cov_floor: self.em.cov_floor,
            n_init: self.em.n_init,
            seed: self.seed,
        };
        let augment = AugmentConfig {
            alpha: self.augment.alpha,
            beta: self.augment.beta,
            c: self.augment.c,
            k: self.augment.k.unwrap_or(self.em.k),
            seed: self.seed,
        };
        FitConfig { em, augment, n_bins: self.baselines.bins, fourier_order: self.baselines.fourier_order }
    }
}
