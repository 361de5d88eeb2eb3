use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use motility::config::RunConfig;
use motility::run::{self, Manifest};

const SMALL: &str = r#"
models = ["phase", "geometric", "gbr", "agbr"]
seed = 3
out = "res"

[em]
k = 6
n_init = 1

[train.synthetic]
system = "curvature"
n_strides = 4
dt = 0.008333333333333333
noise = 0.002
gaits = [{ amplitude = [0.6, 0.6], phase_offset = [0.5, -0.5], frequency = 1.0, variability = 0.1 }]

[test.synthetic]
system = "curvature"
n_strides = 4
dt = 0.008333333333333333
noise = 0.002
gaits = [{ amplitude = [0.6, 0.6], phase_offset = [0.5, -0.5], frequency = 1.2, variability = 0.1 }]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_motility"))
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

fn status(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn evaluate_writes_every_output_and_a_manifest() {
    let (dir, cfg) = setup();
    let out = bin().args(["evaluate", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    let files = tree(&res);
    for f in ["report.json", "losses.csv", "strides.csv", "manifest.json", "models/agbr.json", "trajectories/trajectory_0.csv", "density/truth_x.csv", "density/gbr_residual_theta.csv"] {
        assert!(files.contains_key(f), "missing {f}");
    }
    let manifest: Manifest = serde_json::from_slice(&files["manifest.json"]).unwrap();
    assert_eq!(manifest.seed, 3);
    assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest.config_sha256.len(), 64);
    assert_eq!(manifest.files.len() + 1, files.len());

    let plot = String::from_utf8(files["trajectories/trajectory_0.csv"].clone()).unwrap();
    assert!(plot.starts_with("t,x,y,theta,model,stride_marker\n"));
    let truth_markers = plot.lines().filter(|l| l.contains(",truth,1")).count();
    assert_eq!(truth_markers, 4);
    let curve = String::from_utf8(files["density/truth_x.csv"].clone()).unwrap();
    assert!(curve.starts_with("grid,density\n"));

    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("agbr"));
    let report = bin().args(["report", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(String::from_utf8(report.stdout).unwrap(), table);
}

#[test]
fn reruns_are_byte_identical() {
    let (dir, cfg) = setup();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        assert_eq!(status(&["evaluate", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]), 0);
    }
    assert_eq!(tree(&a), tree(&b));
    let c = dir.path().join("c");
    assert_eq!(status(&["evaluate", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "4"]), 0);
    assert_ne!(tree(&a)["report.json"], tree(&c)["report.json"]);
}

#[test]
fn synth_then_fit_then_predict_from_files() {
    let (dir, cfg) = setup();
    let c = cfg.to_str().unwrap();
    let data = dir.path().join("data");
    assert_eq!(status(&["synth", "--config", c, "--out", data.to_str().unwrap(), "--variety", "50"]), 0);
    let (train, test) = (data.join("train.csv"), data.join("test.csv"));
    let fitted = dir.path().join("fit");
    let args = ["fit", "--config", c, "--model", "geometric", "--train", train.to_str().unwrap(), "--out", fitted.to_str().unwrap()];
    assert_eq!(status(&args), 0);
    let pred = dir.path().join("pred");
    let model = fitted.join("model.json");
    let args = ["predict", "--config", c, "--model-file", model.to_str().unwrap(), "--test", test.to_str().unwrap(), "--out", pred.to_str().unwrap()];
    assert_eq!(status(&args), 0);
    let text = fs::read_to_string(pred.join("predictions.csv")).unwrap();
    assert!(text.starts_with("trajectory,t,vb0,vb1,vb2\n"));
    assert!(pred.join("trajectories/trajectory_0.csv").exists());
    assert_eq!(fs::read_to_string(data.join("variety.csv")).unwrap().lines().count(), 51);
}

#[test]
fn augment_tags_synthetic_points() {
    let (dir, cfg) = setup();
    let out = dir.path().join("aug");
    assert_eq!(status(&["augment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let (ns, nb, rows) = motility::csvio::read_graph_points(&out.join("augmented.csv")).unwrap();
    assert_eq!((ns, nb), (2, 3));
    let synthetic = rows.iter().filter(|(_, p)| *p != motility::csvio::Provenance::Original).count();
    assert!(synthetic > 0 && synthetic < rows.len());
}

#[test]
fn exit_codes() {
    let (dir, cfg) = setup();
    let c = cfg.to_str().unwrap();
    assert_eq!(status(&["evaluate", "--config", c, "--model", "svm"]), 2);
    assert_eq!(status(&["fit", "--config", c]), 2);
    assert_eq!(status(&["frobnicate"]), 2);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "trajectory,t,r0\n0,0,x\n").unwrap();
    assert_eq!(status(&["fit", "--config", c, "--model", "gbr", "--train", bad.to_str().unwrap()]), 2);
    let missing = dir.path().join("nope.csv");
    assert_eq!(status(&["fit", "--config", c, "--model", "gbr", "--train", missing.to_str().unwrap()]), 1);
    assert_eq!(status(&["--version"]), 0);
}

#[test]
fn failed_runs_leave_no_outputs() {
    let (dir, cfg) = setup();
    let no_phase = dir.path().join("np.csv");
    fs::write(&no_phase, "trajectory,t,r0,rdot0,x,y,theta,phase,vb0,vb1,vb2,stride\n0,0,1,,0,0,0,,,,,\n0,1,2,,1,0,0,,,,,\n0,2,3,,2,0,0,,,,,\n").unwrap();
    let out = dir.path().join("failed");
    let args = ["evaluate", "--config", cfg.to_str().unwrap(), "--train", no_phase.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(status(&args), 2);
    assert!(!out.exists());
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).filter(|n| n.to_string_lossy().contains("partial")).collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn constant_connection_is_learned_by_every_family() {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cfg.out = dir.path().join("const");
    let a = vec![vec![0.4, -0.2], vec![0.1, 0.3], vec![-0.25, 0.5]];
    for src in [&mut cfg.train, &mut cfg.test] {
        let spec = src.synthetic.as_mut().unwrap();
        spec.system = motility::config::System::Constant(a.clone());
        spec.noise = 0.0;
        spec.n_strides = 12;
        spec.dt = 1.0 / 60.0;
        spec.gaits[0].frequency = 1.07;
        spec.gaits[0].variability = 0.0;
    }
    cfg.baselines.bins = 72;
    cfg.em.k = 3;
    let report = run::run_experiment(&cfg).unwrap();
    for m in &report.models {
        assert!(m.loss < 0.05, "{}: {}", m.kind, m.loss);
    }
}

#[test]
fn config_text_round_trips() {
    let cfg = RunConfig::default();
    let text = cfg.to_toml().unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    assert!(RunConfig::from_toml("models = []\nseed = 0\nout = \"o\"\n").is_err());
    let unknown = SMALL.replace("[em]", "[em]\nbogus = 1");
    assert!(RunConfig::from_toml(&unknown).is_err());
}
