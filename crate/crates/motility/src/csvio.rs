//! CSV ingestion and export.
//!
//! Two layouts are understood. Recorded data goes through a [`Schema`] that
//! names the columns to read. The canonical layout written by
//! [`write_dataset`] has fixed column names (`trajectory, t, r0.., rdot0..,
//! x, y, theta, phase, vb0.., stride`), uses empty cells for absent values
//! and prints every number in its shortest round-trip form, so
//! [`read_dataset`] restores the dataset exactly.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use motility_core::data::{Dataset, ShapeSample, StrideRange, Trajectory};
use motility_core::se2::PoseSE2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column mapping for a recorded CSV file (header row required).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub time: String,
    pub shape: Vec<String>,
    #[serde(default)]
    pub shape_velocity: Vec<String>,
    /// World-frame `x`, `y`, `theta` columns.
    #[serde(default)]
    pub pose: Option<[String; 3]>,
    #[serde(default)]
    pub phase: Option<String>,
    #[serde(default)]
    pub body_velocity: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            time: "t".into(),
            shape: vec!["r0".into(), "r1".into()],
            shape_velocity: Vec::new(),
            pose: Some(["x".into(), "y".into(), "theta".into()]),
            phase: Some("phase".into()),
            body_velocity: Vec::new(),
        }
    }
}

impl Schema {
    /// Body velocity dimension implied by the schema (planar when unset).
    pub fn nb(&self) -> usize {
        if self.body_velocity.is_empty() {
            3
        } else {
            self.body_velocity.len()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.shape.is_empty() {
            return Err(Error::Validation("schema names no shape columns".into()));
        }
        if !self.shape_velocity.is_empty() && self.shape_velocity.len() != self.shape.len() {
            return Err(Error::Validation("schema needs one shape velocity column per shape column".into()));
        }
        Ok(())
    }
}

struct Table {
    index: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        Error::Parse { path: path.into(), line, message: e.to_string() }
    };
    let headers = reader.headers().map_err(parse_err)?.clone();
    let index = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!("{}: no data rows", path.display())));
    }
    Ok(Table { index, rows })
}

impl Table {
    fn column(&self, path: &Path, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Validation(format!("{}: no column named '{name}'", path.display())))
    }

    fn columns(&self, path: &Path, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.column(path, n)).collect()
    }
}

fn cell<'a>(path: &Path, line: u64, rec: &'a csv::StringRecord, col: usize) -> Result<&'a str> {
    rec.get(col).ok_or_else(|| Error::Parse { path: path.into(), line, message: format!("missing field {}", col + 1) })
}

fn number(path: &Path, line: u64, rec: &csv::StringRecord, col: usize) -> Result<f64> {
    let s = cell(path, line, rec, col)?;
    s.parse::<f64>().map_err(|_| Error::Parse { path: path.into(), line, message: format!("'{s}' is not a number") })
}

/// Reads a group of columns that must be either all filled or all empty.
fn optional(path: &Path, line: u64, rec: &csv::StringRecord, cols: &[usize]) -> Result<Option<Vec<f64>>> {
    if cols.is_empty() {
        return Ok(None);
    }
    let empty = cols.iter().map(|&c| cell(path, line, rec, c).map(str::is_empty)).collect::<Result<Vec<_>>>()?;
    if empty.iter().all(|&e| e) {
        return Ok(None);
    }
    if empty.iter().any(|&e| e) {
        return Err(Error::Parse { path: path.into(), line, message: "partially filled column group".into() });
    }
    cols.iter().map(|&c| number(path, line, rec, c)).collect::<Result<Vec<_>>>().map(Some)
}

fn to_validation(path: &Path, e: motility_core::Error) -> Error {
    match e {
        motility_core::Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other.into(),
    }
}

/// Reads one recorded trajectory through `schema`.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let table = read_table(path)?;
    let t_col = table.column(path, &schema.time)?;
    let r_cols = table.columns(path, &schema.shape)?;
    let rdot_cols = table.columns(path, &schema.shape_velocity)?;
    let vb_cols = table.columns(path, &schema.body_velocity)?;
    let pose_cols = match &schema.pose {
        Some(names) => table.columns(path, names.as_slice())?,
        None => Vec::new(),
    };
    let phase_col = schema.phase.as_deref().map(|p| table.column(path, p)).transpose()?;
    let mut samples = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let r = r_cols.iter().map(|&c| number(path, line, rec, c)).collect::<Result<Vec<_>>>()?;
        let mut s = ShapeSample::new(number(path, line, rec, t_col)?, r);
        s.rdot = optional(path, line, rec, &rdot_cols)?;
        s.vb = optional(path, line, rec, &vb_cols)?;
        s.pose = optional(path, line, rec, &pose_cols)?.map(|p| PoseSE2::new(p[0], p[1], p[2]));
        s.phase = phase_col.map(|c| number(path, line, rec, c)).transpose()?;
        samples.push(s);
    }
    Dataset::new(schema.shape.len(), schema.nb(), vec![Trajectory::new(samples)]).map_err(|e| to_validation(path, e))
}

/// One trajectory per file, concatenated in the given order.
pub fn ingest_files(paths: &[impl AsRef<Path>], schema: &Schema) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::Validation("no input files".into()));
    }
    let parts = paths.iter().map(|p| ingest_csv(p.as_ref(), schema)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset::concat(&parts)?)
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn canonical_header(ns: usize, nb: usize) -> Vec<String> {
    let mut h = vec!["trajectory".to_string(), "t".to_string()];
    h.extend(numbered("r", ns));
    h.extend(numbered("rdot", ns));
    h.extend(["x", "y", "theta", "phase"].map(String::from));
    h.extend(numbered("vb", nb));
    h.push("stride".into());
    h
}

fn push_opt(row: &mut Vec<String>, v: Option<&[f64]>, n: usize) {
    match v {
        Some(v) => row.extend(v.iter().map(f64::to_string)),
        None => row.extend(std::iter::repeat_n(String::new(), n)),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `d` in the canonical layout.
pub fn write_dataset(d: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    encode_dataset(d, file).map_err(|e| csv_io(path, e))
}

/// The canonical CSV text of `d`.
pub fn dataset_bytes(d: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    encode_dataset(d, &mut buf).expect("writing to memory cannot fail");
    buf
}

fn encode_dataset<W: std::io::Write>(d: &Dataset, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(canonical_header(d.ns, d.nb))?;
    for (ti, traj) in d.trajectories.iter().enumerate() {
        let mut stride_of = vec![None; traj.len()];
        for (k, r) in d.stride_ranges.iter().enumerate().filter(|(_, r)| r.trajectory == ti) {
            for slot in &mut stride_of[r.start..r.end] {
                *slot = Some(k);
            }
        }
        for (s, stride) in traj.samples.iter().zip(stride_of) {
            let mut row = vec![ti.to_string(), s.t.to_string()];
            row.extend(s.r.iter().map(f64::to_string));
            push_opt(&mut row, s.rdot.as_deref(), d.ns);
            push_opt(&mut row, s.pose.map(|p| [p.x, p.y, p.theta]).as_ref().map(|p| p.as_slice()), 3);
            row.push(s.phase.map(|p| p.to_string()).unwrap_or_default());
            push_opt(&mut row, s.vb.as_deref(), d.nb);
            row.push(stride.map(|k| k.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn count_numbered(table: &Table, prefix: &str) -> usize {
    (0..).take_while(|i| table.index.contains_key(&format!("{prefix}{i}"))).count()
}

fn integer(path: &Path, line: u64, rec: &csv::StringRecord, col: usize) -> Result<usize> {
    let s = cell(path, line, rec, col)?;
    s.parse().map_err(|_| Error::Parse { path: path.into(), line, message: format!("'{s}' is not an index") })
}

/// Reads a file written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let table = read_table(path)?;
    let (ns, nb) = (count_numbered(&table, "r"), count_numbered(&table, "vb"));
    let header = canonical_header(ns, nb);
    let cols = table.columns(path, &header)?;
    let at = |name: &str| cols[header.iter().position(|h| h == name).expect("canonical column")];
    let r_cols: Vec<usize> = (0..ns).map(|i| at(&format!("r{i}"))).collect();
    let rdot_cols: Vec<usize> = (0..ns).map(|i| at(&format!("rdot{i}"))).collect();
    let vb_cols: Vec<usize> = (0..nb).map(|i| at(&format!("vb{i}"))).collect();
    let pose_cols = [at("x"), at("y"), at("theta")];

    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (line, rec) in &table.rows {
        let line = *line;
        let ti = integer(path, line, rec, at("trajectory"))?;
        if ti + 1 < trajectories.len() || ti > trajectories.len() {
            return Err(Error::Parse { path: path.into(), line, message: "trajectories must appear in order".into() });
        }
        if ti == trajectories.len() {
            trajectories.push(Trajectory::new(Vec::new()));
        }
        let r = r_cols.iter().map(|&c| number(path, line, rec, c)).collect::<Result<Vec<_>>>()?;
        let mut s = ShapeSample::new(number(path, line, rec, at("t"))?, r);
        s.rdot = optional(path, line, rec, &rdot_cols)?;
        s.vb = optional(path, line, rec, &vb_cols)?;
        s.pose = optional(path, line, rec, &pose_cols)?.map(|p| PoseSE2::new(p[0], p[1], p[2]));
        s.phase = optional(path, line, rec, &[at("phase")])?.map(|p| p[0]);
        trajectories[ti].samples.push(s);
    }
    let mut d = Dataset::new(ns, nb, trajectories).map_err(|e| to_validation(path, e))?;
    d.stride_ranges = stride_runs(&table, path, at("trajectory"), at("stride"))?;
    d.validate().map_err(|e| to_validation(path, e))?;
    Ok(d)
}

/// Maximal runs of equal stride labels within each trajectory.
fn stride_runs(table: &Table, path: &Path, traj_col: usize, stride_col: usize) -> Result<Vec<StrideRange>> {
    let mut out: Vec<(usize, StrideRange)> = Vec::new();
    let mut local = 0usize;
    let mut last_traj = usize::MAX;
    for (line, rec) in &table.rows {
        let ti = integer(path, *line, rec, traj_col)?;
        if ti != last_traj {
            local = 0;
            last_traj = ti;
        }
        if !cell(path, *line, rec, stride_col)?.is_empty() {
            let k = integer(path, *line, rec, stride_col)?;
            match out.last_mut() {
                Some((lk, r)) if *lk == k && r.trajectory == ti && r.end == local => r.end += 1,
                _ => out.push((k, StrideRange { trajectory: ti, start: local, end: local + 1 })),
            }
        }
        local += 1;
    }
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

/// Where a graph point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original,
    /// Drawn from the cluster of mixture component `k`.
    Synthetic(usize),
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Original => f.write_str("original"),
            Provenance::Synthetic(k) => write!(f, "synthetic:{k}"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "original" {
            return Ok(Provenance::Original);
        }
        s.strip_prefix("synthetic:")
            .and_then(|k| k.parse().ok())
            .map(Provenance::Synthetic)
            .ok_or_else(|| Error::Validation(format!("unknown provenance '{s}'")))
    }
}

/// Writes flattened `(r, ṙ, v_b)` graph points with their provenance.
pub fn write_graph_points(points: &[(Vec<f64>, Provenance)], ns: usize, nb: usize, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = numbered("r", ns).chain(numbered("rdot", ns)).chain(numbered("vb", nb)).collect();
    header.push("provenance".into());
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (p, prov) in points {
        if p.len() != 2 * ns + nb {
            return Err(Error::Validation(format!("graph point has {} entries, expected {}", p.len(), 2 * ns + nb)));
        }
        let mut row: Vec<String> = p.iter().map(f64::to_string).collect();
        row.push(prov.to_string());
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_graph_points`].
pub fn read_graph_points(path: &Path) -> Result<(usize, usize, Vec<(Vec<f64>, Provenance)>)> {
    let table = read_table(path)?;
    let (ns, nb) = (count_numbered(&table, "r"), count_numbered(&table, "vb"));
    let names: Vec<String> = numbered("r", ns).chain(numbered("rdot", ns)).chain(numbered("vb", nb)).collect();
    let cols = table.columns(path, &names)?;
    let prov = table.column(path, "provenance")?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let p = cols.iter().map(|&c| number(path, *line, rec, c)).collect::<Result<Vec<_>>>()?;
        let tag = cell(path, *line, rec, prov)?.parse().map_err(|e: Error| Error::Parse {
            path: path.into(),
            line: *line,
            message: e.to_string(),
        })?;
        out.push((p, tag));
    }
    Ok((ns, nb, out))
}

/// Writes a two-column `grid, density` curve.
pub fn write_curve(grid: &[f64], density: &[f64], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["grid", "density"]).map_err(|e| csv_io(path, e))?;
    for (g, d) in grid.iter().zip(density) {
        w.write_record([g.to_string(), d.to_string()]).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of a trajectory plot file.
pub struct PlotRow<'a> {
    pub t: f64,
    pub pose: PoseSE2,
    pub model: &'a str,
    pub stride_marker: bool,
}

/// Writes `t, x, y, theta, model, stride_marker` rows.
pub fn write_trajectory_plot<'a>(rows: impl IntoIterator<Item = PlotRow<'a>>, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "x", "y", "theta", "model", "stride_marker"]).map_err(|e| csv_io(path, e))?;
    for r in rows {
        let marker = if r.stride_marker { "1" } else { "0" };
        w.write_record([r.t.to_string(), r.pose.x.to_string(), r.pose.y.to_string(), r.pose.theta.to_string(), r.model.into(), marker.into()])
            .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a plain table of numbers under `header`.
pub fn write_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
