//! Resolving data sources, running the pipeline stages and writing their
//! outputs.
//!
//! Every stage writes into a staging directory next to the output
//! directory and moves its files into place only once everything
//! succeeded, so a failed run leaves no partial outputs behind.

use std::fs;
use std::path::{Path, PathBuf};

use motility_core::augment::augment_points;
use motility_core::data::Dataset;
use motility_core::density::DensityCurve;
use motility_core::experiment::{evaluate, fit_models, prepare, ExperimentReport, FittedModel};
use motility_core::gbr::build_gbr_from_points;
use motility_core::rng::{derive_seed, stream};
use motility_core::se2::{integrate, PoseSE2};
use motility_core::strides::{StrideRecord, VARIABLES};
use motility_core::synth::{gen_kinematic, gen_variety, ConstantMap, CurvatureVaryingMap, MotilityMap};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataSource, Layout, RunConfig, System};
use crate::csvio::{self, PlotRow, Provenance};
use crate::error::{Error, Result, StageExt};
use crate::model::ModelFile;

/// Generator stream offset separating test sets from training sets.
const TEST_STREAMS: u64 = 0x100;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn system_map(system: &System) -> Result<Box<dyn MotilityMap>> {
    Ok(match system {
        System::Curvature => Box::new(CurvatureVaryingMap),
        System::Constant(rows) => {
            let (nb, ns) = (rows.len(), rows.first().map_or(0, Vec::len));
            if nb == 0 || ns == 0 || rows.iter().any(|r| r.len() != ns) {
                return Err(Error::Config("constant connection must be a non-empty rectangular matrix".into()));
            }
            Box::new(ConstantMap { a: DMatrix::from_fn(nb, ns, |i, j| rows[i][j]) })
        }
    })
}

/// Reads or generates a data source without any velocity derivation.
pub fn load_raw(src: &DataSource, cfg: &RunConfig, test: bool) -> Result<Dataset> {
    if let Some(spec) = &src.synthetic {
        let map = system_map(&spec.system)?;
        let base = stream::GENERATOR + if test { TEST_STREAMS } else { 0 };
        let parts = spec
            .gaits
            .iter()
            .enumerate()
            .map(|(i, g)| gen_kinematic(map.as_ref(), &g.to_params(), spec.n_strides, spec.dt, spec.noise, derive_seed(cfg.seed, base + i as u64)))
            .collect::<motility_core::Result<Vec<_>>>()?;
        return Ok(Dataset::concat(&parts)?);
    }
    match src.layout {
        Layout::Schema => csvio::ingest_files(&src.files, &cfg.schema),
        Layout::Canonical => {
            if src.files.is_empty() {
                return Err(Error::Validation("no input files".into()));
            }
            let parts = src.files.iter().map(|f| csvio::read_dataset(f)).collect::<Result<Vec<_>>>()?;
            Ok(Dataset::concat(&parts)?)
        }
    }
}

/// The source as the models see it: velocities derived where missing (or
/// everywhere when `derive` is set) and strides segmented.
pub fn load(src: &DataSource, cfg: &RunConfig, test: bool) -> Result<Dataset> {
    let raw = load_raw(src, cfg, test)?;
    Ok(prepare(&if src.derive { raw.without_velocities() } else { raw })?)
}

/// Run provenance written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_sha256: Option<String>,
    pub files: Vec<String>,
}

/// Files being produced by one command.
pub struct Outputs {
    out: PathBuf,
    staging: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn begin(out: &Path) -> Result<Self> {
        let name = out.file_name().map_or("out".into(), |n| n.to_string_lossy().into_owned());
        let staging = out.with_file_name(format!(".{name}.partial"));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(Self { out: out.to_path_buf(), staging, files: Vec::new() })
    }

    /// Staging path for `rel`, recorded for the manifest.
    pub fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.staging.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    pub fn write(&mut self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    /// Writes the manifest and moves everything into the output directory.
    pub fn commit(mut self, mut manifest: Manifest) -> Result<Vec<String>> {
        manifest.files = self.files.clone();
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Validation(e.to_string()))?;
        self.write("manifest.json", &(text + "\n"))?;
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        for rel in &self.files {
            let (from, to) = (self.staging.join(rel), self.out.join(rel));
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
        }
        fs::remove_dir_all(&self.staging).map_err(|e| Error::io(&self.staging, e))?;
        Ok(std::mem::take(&mut self.files))
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.staging.exists() {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

/// Hash of the configuration with the output directory left out, so the
/// same run written to two places has one identity.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out = PathBuf::new();
    Ok(sha256_hex(c.to_toml()?.as_bytes()))
}

fn manifest(cfg: &RunConfig, command: &str, train: Option<&Dataset>, test: Option<&Dataset>) -> Result<Manifest> {
    Ok(Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: cfg.seed,
        config_sha256: config_hash(cfg)?,
        train_sha256: train.map(|d| sha256_hex(&csvio::dataset_bytes(d))),
        test_sha256: test.map(|d| sha256_hex(&csvio::dataset_bytes(d))),
        files: Vec::new(),
    })
}

/// Writes the generated (or re-exported) train and test sets.
pub fn synth(cfg: &RunConfig, variety: Option<usize>) -> Result<Vec<String>> {
    let train = load_raw(&cfg.train, cfg, false).stage("load train")?;
    let test = load_raw(&cfg.test, cfg, true).stage("load test")?;
    let mut out = Outputs::begin(&cfg.out)?;
    csvio::write_dataset(&train, &out.path("train.csv")?)?;
    csvio::write_dataset(&test, &out.path("test.csv")?)?;
    if let Some(n) = variety {
        let pts = gen_variety(n, 0.15, derive_seed(cfg.seed, stream::GENERATOR));
        let rows = pts.iter().map(|p| vec![p[0].to_string(), p[1].to_string()]);
        csvio::write_rows(&["x", "y"], rows, &out.path("variety.csv")?)?;
    }
    out.commit(manifest(cfg, "synth", Some(&train), Some(&test))?)
}

/// Fits the single configured model and saves it as `model.json`.
pub fn fit(cfg: &RunConfig) -> Result<Vec<String>> {
    let kind = cfg.single_model()?;
    let train = load(&cfg.train, cfg, false).stage("load train")?;
    let model = fit_models(&[kind], &train, &cfg.fit_config()).stage("fit")?.remove(0);
    let mut out = Outputs::begin(&cfg.out)?;
    ModelFile::from_fitted(&model).save(&out.path("model.json")?)?;
    out.commit(manifest(cfg, "fit", Some(&train), None)?)
}

/// Fits the first-stage regressor and writes the training graph points
/// together with the synthetic ruled-surface points.
pub fn augment(cfg: &RunConfig) -> Result<Vec<String>> {
    let train = load(&cfg.train, cfg, false).stage("load train")?;
    let fit = cfg.fit_config();
    let points: Vec<DVector<f64>> = train.graph_points().iter().map(|g| g.flatten()).collect();
    let base = build_gbr_from_points(&points, train.ns, train.nb, &fit.gbr_config()).stage("fit")?;
    let aug = augment_points(&points, &base, &fit.augment).stage("augment")?;
    let mut rows: Vec<(Vec<f64>, Provenance)> = points.iter().map(|p| (p.iter().copied().collect(), Provenance::Original)).collect();
    rows.extend(aug.points.iter().zip(&aug.component).map(|(p, &k)| (p.iter().copied().collect(), Provenance::Synthetic(k))));
    let mut out = Outputs::begin(&cfg.out)?;
    csvio::write_graph_points(&rows, train.ns, train.nb, &out.path("augmented.csv")?)?;
    ModelFile::from_fitted(&FittedModel::Gbr(base)).save(&out.path("base_model.json")?)?;
    out.commit(manifest(cfg, "augment", Some(&train), None)?)
}

fn integrate_from(vb: &[DVector<f64>], t: &[f64], g0: PoseSE2) -> Result<Vec<PoseSE2>> {
    if vb.first().is_some_and(|v| v.len() != 3) {
        return Err(Error::Validation("reconstruction needs three body velocities".into()));
    }
    let twists: Vec<[f64; 3]> = vb[..vb.len().saturating_sub(1)].iter().map(|v| [v[0], v[1], v[2]]).collect();
    let dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(integrate(&twists, &dts, g0))
}

/// Predicts body velocities on the test set with a saved model and
/// integrates them into world trajectories.
pub fn predict(cfg: &RunConfig, model_path: &Path) -> Result<Vec<String>> {
    let model = ModelFile::load(model_path).stage("load model")?.to_fitted().stage("load model")?;
    let test = load(&cfg.test, cfg, true).stage("load test")?;
    let name = model.kind().name();
    let mut rows = Vec::new();
    let mut plots = Vec::new();
    for (ti, traj) in test.trajectories.iter().enumerate() {
        let vb = model.predict_velocities(traj).stage("predict")?;
        let t = traj.times();
        let poses = match traj.samples[0].pose {
            Some(g0) if test.nb == 3 => Some(integrate_from(&vb, &t, g0)?),
            _ => None,
        };
        for (i, v) in vb.iter().enumerate() {
            let mut row = vec![ti.to_string(), t[i].to_string()];
            row.extend(v.iter().map(f64::to_string));
            rows.push(row);
        }
        if let Some(p) = poses {
            plots.push((ti, p, t));
        }
    }
    let mut header = vec!["trajectory".to_string(), "t".to_string()];
    header.extend((0..test.nb).map(|i| format!("vb{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = Outputs::begin(&cfg.out)?;
    csvio::write_rows(&header, rows, &out.path("predictions.csv")?)?;
    for (ti, poses, t) in plots {
        let markers = stride_starts(&test, ti, t.len());
        let rows = poses.iter().zip(&t).zip(&markers).map(|((p, &t), &m)| PlotRow { t, pose: *p, model: name, stride_marker: m });
        csvio::write_trajectory_plot(rows, &out.path(&format!("trajectories/trajectory_{ti}.csv"))?)?;
    }
    out.commit(manifest(cfg, "predict", None, Some(&test))?)
}

/// Marks the first sample of every stride, i.e. the same gait phase in
/// every cycle.
fn stride_starts(d: &Dataset, ti: usize, n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for r in d.stride_ranges.iter().filter(|r| r.trajectory == ti) {
        m[r.start] = true;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub loss: f64,
    /// `None` when the test set carries no body velocities.
    pub vb_rmse: Option<f64>,
    pub strides: Vec<[f64; 3]>,
}

/// The serialized experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub seed: u64,
    pub config_sha256: String,
    pub train_sha256: String,
    pub test_sha256: String,
    pub truth: Vec<[f64; 3]>,
    pub models: Vec<ModelSummary>,
}

fn triple(s: &StrideRecord) -> [f64; 3] {
    [s.dx, s.dy, s.dtheta]
}

impl ReportDoc {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }
}

fn write_density(out: &mut Outputs, rel: &str, c: &Option<DensityCurve>) -> Result<()> {
    if let Some(c) = c {
        csvio::write_curve(&c.grid, &c.density, &out.path(rel)?)?;
    }
    Ok(())
}

/// Fits every configured model, evaluates it on the test set and writes
/// the report, losses, strides, density curves, trajectory plots and models.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    let kinds = cfg.model_kinds()?;
    let train = load(&cfg.train, cfg, false).stage("load train")?;
    let test = load(&cfg.test, cfg, true).stage("load test")?;
    if kinds.iter().any(|k| k.needs_phase()) && !(train.has_phase() && test.has_phase()) {
        return Err(Error::Validation("phase and geometric models need a phase column in train and test".into()));
    }
    let models = fit_models(&kinds, &train, &cfg.fit_config()).stage("fit")?;
    let report = evaluate(&models, &test, cfg.grid_points).stage("evaluate")?;

    let mut out = Outputs::begin(&cfg.out)?;
    let mf = manifest(cfg, "evaluate", Some(&train), Some(&test))?;
    let doc = ReportDoc {
        seed: cfg.seed,
        config_sha256: mf.config_sha256.clone(),
        train_sha256: mf.train_sha256.clone().unwrap_or_default(),
        test_sha256: mf.test_sha256.clone().unwrap_or_default(),
        truth: report.truth.iter().map(triple).collect(),
        models: report
            .models
            .iter()
            .map(|m| ModelSummary {
                model: m.kind.name().into(),
                loss: m.loss,
                vb_rmse: m.vb_rmse.is_finite().then_some(m.vb_rmse),
                strides: m.strides.iter().map(triple).collect(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Validation(e.to_string()))?;
    out.write("report.json", &(text + "\n"))?;

    let losses = report.models.iter().map(|m| vec![m.kind.name().to_string(), m.loss.to_string(), m.vb_rmse.to_string()]);
    csvio::write_rows(&["model", "loss", "vb_rmse"], losses, &out.path("losses.csv")?)?;

    let mut stride_rows = Vec::new();
    let mut push = |source: &str, strides: &[StrideRecord]| {
        for (i, s) in strides.iter().enumerate() {
            stride_rows.push(vec![source.to_string(), i.to_string(), s.dx.to_string(), s.dy.to_string(), s.dtheta.to_string()]);
        }
    };
    push("truth", &report.truth);
    for m in &report.models {
        push(m.kind.name(), &m.strides);
    }
    csvio::write_rows(&["source", "stride", "dx", "dy", "dtheta"], stride_rows, &out.path("strides.csv")?)?;

    for (q, var) in VARIABLES.iter().enumerate() {
        write_density(&mut out, &format!("density/truth_{var}.csv"), &report.truth_density[q])?;
        for m in &report.models {
            write_density(&mut out, &format!("density/{}_prediction_{var}.csv", m.kind), &m.prediction_density[q])?;
            write_density(&mut out, &format!("density/{}_residual_{var}.csv", m.kind), &m.residual_density[q])?;
        }
    }

    for (ti, traj) in test.trajectories.iter().enumerate() {
        let markers = stride_starts(&test, ti, traj.len());
        let mut rows = Vec::new();
        if let Some(poses) = traj.poses() {
            rows.extend(traj.samples.iter().zip(poses).zip(&markers).map(|((s, p), &m)| PlotRow { t: s.t, pose: p, model: "truth", stride_marker: m }));
        }
        for m in &report.models {
            let pred = m.trajectories.iter().find(|p| p.trajectory == ti).expect("every trajectory is predicted");
            rows.extend(
                traj.samples.iter().zip(&pred.poses).zip(&markers).map(|((s, p), &mk)| PlotRow { t: s.t, pose: *p, model: m.kind.name(), stride_marker: mk }),
            );
        }
        csvio::write_trajectory_plot(rows, &out.path(&format!("trajectories/trajectory_{ti}.csv"))?)?;
    }

    for m in &models {
        ModelFile::from_fitted(m).save(&out.path(&format!("models/{}.json", m.kind()))?)?;
    }
    out.commit(mf)?;
    Ok(report)
}

/// Loss table of a finished experiment, one line per model.
pub fn report_table(out_dir: &Path) -> Result<String> {
    let doc = ReportDoc::load(&out_dir.join("report.json"))?;
    let mut text = format!("seed {}  config {}\n", doc.seed, &doc.config_sha256[..12.min(doc.config_sha256.len())]);
    text += &format!("{:<10} {:>12} {:>12} {:>8}\n", "model", "loss", "vb_rmse", "strides");
    for m in &doc.models {
        let rmse = m.vb_rmse.map_or("-".to_string(), |v| format!("{v:.6}"));
        text += &format!("{:<10} {:>12.6} {:>12} {:>8}\n", m.model, m.loss, rmse, m.strides.len());
    }
    Ok(text)
}
