//! Acceptance criteria AC1–AC10, one PASS/FAIL line each.
//!
//! The process exits with status 0 so that the workspace test run reports
//! the table without aborting; set `ACCEPTANCE_STRICT=1` to exit with
//! status 1 when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use motility::config::RunConfig;
use motility::csvio;
use motility::model::ModelFile;
use motility::run::run_experiment;
use motility_core::augment::{synthesize, AugmentConfig};
use motility_core::experiment::{fit_models, Benchmark, ExperimentReport, FitConfig, ModelKind};
use motility_core::gaussian::tls_extract;
use motility_core::gbr::{FeedbackMode, GbrModel};
use motility_core::gmm::{fit_gmm, EmConfig};
use motility_core::rng::derive_rng;
use motility_core::se2::{exp_se2, integrate, PoseSE2};
use motility_core::strides::{zscore_loss, StrideRecord};
use motility_core::synth::gen_variety;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ac1_branch_following() -> Outcome {
    let start = Instant::now();
    let xs: Vec<DVector<f64>> = (0..=180).map(|i| DVector::from_element(1, -0.9 + 0.01 * i as f64)).collect();
    let mut good = 0;
    let mut notes = Vec::new();
    for seed in 0..10u64 {
        let pts: Vec<DVector<f64>> = gen_variety(1000, 0.15, seed).iter().map(|p| DVector::from_column_slice(p)).collect();
        let cfg = EmConfig { k: 8, seed, ..EmConfig::default() };
        let model = match fit_gmm(&pts, &cfg).and_then(|g| GbrModel::from_gmm(g, 1, 1)) {
            Ok(m) => m,
            Err(e) => {
                notes.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let mut seed_ok = true;
        let mut parts = Vec::new();
        for sign in [1.0, -1.0] {
            let pred = model.predict_trajectory(&xs, &DVector::from_element(1, sign), FeedbackMode::SelfFed).expect("valid sweep");
            let flips = pred.iter().filter(|p| p.y[0] * sign <= 0.0).count();
            let err = pred.iter().zip(&xs).map(|(p, x)| (p.y[0] - sign * (1.0 - x[0] * x[0])).abs()).sum::<f64>() / xs.len() as f64;
            seed_ok &= flips == 0 && err < 0.15;
            parts.push(format!("{sign:+}: {flips} flips, err {err:.3}"));
        }
        good += usize::from(seed_ok);
        notes.push(format!("seed {seed} [{}]", parts.join("; ")));
    }
    let secs = start.elapsed().as_secs_f64();
    for n in &notes {
        println!("    AC1 {n}");
    }
    outcome(good >= 9 && secs < 10.0, format!("{good}/10 seeds follow both branches (need 9), {secs:.1} s (limit 10 s)"))
}

fn covariance(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let n = rows.len() as f64;
    let mean = rows.iter().fold(DVector::zeros(rows[0].len()), |a, r| a + r) / n;
    rows.iter().fold(DMatrix::zeros(mean.len(), mean.len()), |a, r| {
        let d = r - &mean;
        a + &d * d.transpose()
    }) / n
}

fn ac2_tls_recovery() -> Outcome {
    let mut rng = derive_rng(2, 0);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    for dim_out in 1..=3 {
        for dim_in in 1..=4 {
            for _ in 0..5 {
                let a0 = DMatrix::from_fn(dim_out, dim_in, |_, _| normal(&mut rng));
                let rows: Vec<DVector<f64>> = (0..60)
                    .map(|_| {
                        let x = DVector::from_fn(dim_in, |_, _| 2.0 * normal(&mut rng));
                        let y = &a0 * &x;
                        DVector::from_iterator(dim_in + dim_out, x.iter().chain(y.iter()).copied())
                    })
                    .collect();
                let a = tls_extract(&covariance(&rows), dim_in, dim_out).expect("well posed").a;
                worst = worst.max((a - &a0).norm());
                trials += 1;
            }
        }
    }
    outcome(worst < 1e-6, format!("{trials} random systems up to 3x4, worst ||A - A0||_F = {worst:.2e} (limit 1e-6)"))
}

fn ac3_em_monotone() -> Outcome {
    let mut worst_drop: f64 = 0.0;
    let mut failures = 0;
    for s in 0..50u64 {
        let mut rng = derive_rng(s, 3);
        let dim = 1 + (s as usize % 4);
        let k = 1 + (s as usize % 5);
        let centres: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(dim, |_, _| 4.0 * normal(&mut rng))).collect();
        let pts: Vec<DVector<f64>> = (0..300)
            .map(|i| &centres[i % k] + DVector::from_fn(dim, |_, _| normal(&mut rng) * (0.3 + (i % 3) as f64 * 0.3)))
            .collect();
        match fit_gmm(&pts, &EmConfig { k: k + s as usize % 2, seed: s, ..EmConfig::default() }) {
            Ok(g) => {
                for w in g.loglik_trace.windows(2) {
                    worst_drop = worst_drop.max(w[0] - w[1]);
                }
            }
            Err(_) => failures += 1,
        }
    }
    outcome(worst_drop <= 1e-9 && failures == 0, format!("50 fits, {failures} failed, largest decrease {worst_drop:.2e} (limit 1e-9)"))
}

fn ac4_augmentation_closure() -> Outcome {
    let mut rng = derive_rng(4, 0);
    let (ns, nb) = (2, 3);
    let mut worst: f64 = 0.0;
    let mut count_ok = true;
    for trial in 0..10 {
        let a0 = DMatrix::from_fn(nb, ns, |_, _| normal(&mut rng));
        let n_k = 7 + trial * 3;
        let mu = DVector::from_fn(2 * ns + nb, |_, _| normal(&mut rng));
        let mut members: Vec<DVector<f64>> = (0..n_k)
            .map(|_| {
                let dr = DVector::from_fn(ns, |_, _| normal(&mut rng));
                let drdot = DVector::from_fn(ns, |_, _| normal(&mut rng));
                let dv = &a0 * &drdot;
                DVector::from_iterator(2 * ns + nb, dr.iter().chain(drdot.iter()).chain(dv.iter()).copied())
            })
            .collect();
        let centre = members.iter().fold(DVector::zeros(2 * ns + nb), |a, m| a + m) / n_k as f64;
        for m in &mut members {
            *m = &*m - &centre + &mu;
        }
        let refs: Vec<&DVector<f64>> = members.iter().collect();
        for beta in [0.5, 1.0, 1.2, 2.0] {
            for alpha in [0.3, 1.0, 2.5] {
                let cfg = AugmentConfig { alpha, beta, ..AugmentConfig::default() };
                let synth = synthesize(&refs, &mu, ns, &cfg, &mut rng);
                count_ok &= synth.len() == (alpha * n_k as f64).ceil() as usize;
                for p in &synth {
                    let drdot = p.rows(ns, ns) - mu.rows(ns, ns);
                    let dv = p.rows(2 * ns, nb) - mu.rows(2 * ns, nb);
                    worst = worst.max((dv - &a0 * drdot).amax());
                }
            }
        }
    }
    outcome(worst < 1e-10 && count_ok, format!("worst residual {worst:.2e} (limit 1e-10), count law {}", if count_ok { "exact" } else { "violated" }))
}

fn benchmark_reports() -> Vec<(u64, Result<ExperimentReport, String>)> {
    (0..10u64)
        .map(|seed| {
            let t = Instant::now();
            let r = Benchmark::extrapolation(seed).run(&FitConfig::default()).map_err(|e| e.to_string());
            match &r {
                Ok(rep) => {
                    let parts: Vec<String> = rep.models.iter().map(|m| format!("{} loss {:.3} rmse {:.4}", m.kind, m.loss, m.vb_rmse)).collect();
                    println!("    benchmark seed {seed}: {} ({:.1} s)", parts.join(", "), t.elapsed().as_secs_f64());
                }
                Err(e) => println!("    benchmark seed {seed}: {e}"),
            }
            (seed, r)
        })
        .collect()
}

fn per_model(reports: &[(u64, Result<ExperimentReport, String>)], kind: ModelKind, f: impl Fn(&motility_core::experiment::ModelEvaluation) -> f64) -> Option<Vec<f64>> {
    reports.iter().map(|(_, r)| r.as_ref().ok().and_then(|r| r.model(kind)).map(&f)).collect()
}

fn ac5_ruled_surface(reports: &[(u64, Result<ExperimentReport, String>)]) -> Outcome {
    match (per_model(reports, ModelKind::Agbr, |m| m.vb_rmse), per_model(reports, ModelKind::Gbr, |m| m.vb_rmse)) {
        (Some(a), Some(g)) => {
            let (ma, mg) = (median(a), median(g));
            outcome(ma <= mg, format!("median v_b RMSE: A-GBR {ma:.4} vs GBR {mg:.4}"))
        }
        _ => outcome(false, "some benchmark runs failed"),
    }
}

fn ac6_model_ordering(reports: &[(u64, Result<ExperimentReport, String>)]) -> Outcome {
    let losses = |k| per_model(reports, k, |m| m.loss).map(median);
    match (losses(ModelKind::Agbr), losses(ModelKind::Geometric), losses(ModelKind::Phase)) {
        (Some(a), Some(g), Some(p)) => outcome(a <= g && g <= p, format!("median loss: A-GBR {a:.3}, Geometric {g:.3}, Phase {p:.3}")),
        _ => outcome(false, "some benchmark runs failed"),
    }
}

fn ac7_loss_calibration() -> Outcome {
    let mut rng = derive_rng(7, 0);
    let mut sum = 0.0;
    for _ in 0..200 {
        let truth: Vec<StrideRecord> =
            (0..1000).map(|_| StrideRecord { dx: 1.0 + 0.2 * normal(&mut rng), dy: 0.1 * normal(&mut rng), dtheta: 0.3 + 0.05 * normal(&mut rng) }).collect();
        let mut pred = truth.clone();
        pred.shuffle(&mut rng);
        sum += zscore_loss(&pred, &truth).expect("non-degenerate truth");
    }
    let mean = sum / 200.0;
    let truth: Vec<StrideRecord> = (0..50).map(|i| StrideRecord { dx: i as f64, dy: (i * i) as f64, dtheta: -(i as f64) }).collect();
    let perfect = zscore_loss(&truth, &truth).expect("non-degenerate truth");
    outcome((2.9..=3.1).contains(&mean) && perfect == 0.0, format!("permutation mean {mean:.4} (need [2.9, 3.1]), perfect {perfect}"))
}

fn ac8_se2() -> Outcome {
    let dt = 1.0 / 120.0;
    let steps = (std::f64::consts::TAU / dt).ceil() as usize;
    let poses = integrate(&vec![[1.0, 0.0, 1.0]; steps], &vec![dt; steps], PoseSE2::default());
    let radius_err = poses.iter().map(|p| ((p.x * p.x + (p.y - 1.0) * (p.y - 1.0)).sqrt() - 1.0).abs()).fold(0.0, f64::max);
    let mut cont: f64 = 0.0;
    for w in [1e-9, -1e-9, 1e-12] {
        let (a, b) = (exp_se2([0.7, -0.3, w], 0.5), exp_se2([0.7, -0.3, 0.0], 0.5));
        cont = cont.max((a.x - b.x).abs().max((a.y - b.y).abs()).max((a.theta - b.theta).abs()));
    }
    outcome(radius_err < 1e-4 && cont < 1e-8, format!("circle deviation {radius_err:.2e} over {steps} steps (limit 1e-4), omega->0 gap {cont:.2e} (limit 1e-8)"))
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable output") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).expect("inside root").display().to_string(), fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn small_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_benchmark(&Benchmark { n_strides: 6, ..Benchmark::extrapolation(seed) });
    cfg.em.k = 12;
    cfg.em.n_init = 2;
    cfg
}

fn ac9_determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut same = true;
    let mut notes = Vec::new();
    for seed in [0u64, 1] {
        let mut trees = Vec::new();
        for run in 0..2 {
            let mut cfg = small_config(seed);
            cfg.out = dir.path().join(format!("s{seed}_{run}"));
            if let Err(e) = run_experiment(&cfg) {
                return outcome(false, format!("experiment failed: {e}"));
            }
            trees.push(tree(&cfg.out));
        }
        let equal = trees[0] == trees[1];
        same &= equal;
        notes.push(format!("seed {seed}: {} files {}", trees[0].len(), if equal { "identical" } else { "differ" }));
    }
    let pts: Vec<DVector<f64>> = gen_variety(500, 0.15, 9).iter().map(|p| DVector::from_column_slice(p)).collect();
    let cfg = EmConfig { k: 6, seed: 9, ..EmConfig::default() };
    let a = fit_gmm(&pts, &cfg).map(|g| format!("{g:?}"));
    let b = fit_gmm(&pts, &cfg).map(|g| format!("{g:?}"));
    let gmm_same = a.is_ok() && a == b;
    same &= gmm_same;
    notes.push(format!("mixture fit {}", if gmm_same { "identical" } else { "differs" }));
    outcome(same, notes.join(", "))
}

fn ac10_round_trips() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let b = Benchmark { n_strides: 4, derive: true, ..Benchmark::extrapolation(10) };
    let (train, _) = b.datasets(&motility_core::synth::CurvatureVaryingMap).expect("generator");
    let train = motility_core::experiment::prepare(&train.without_velocities()).expect("derivable");
    let p = dir.path().join("train.csv");
    let data_ok = csvio::write_dataset(&train, &p).and_then(|_| csvio::read_dataset(&p)).map(|d| d == train).unwrap_or(false);

    let mut fit = FitConfig::default().with_seed(10);
    fit.em.k = 10;
    fit.augment.k = 10;
    fit.em.n_init = 1;
    let mut models_ok = true;
    match fit_models(&ModelKind::ALL, &train, &fit) {
        Ok(models) => {
            for m in &models {
                let path = dir.path().join(format!("{}.json", m.kind()));
                let back = ModelFile::from_fitted(m).save(&path).and_then(|_| ModelFile::load(&path)).and_then(|f| f.to_fitted());
                models_ok &= back.as_ref().is_ok_and(|b| b == m);
            }
        }
        Err(_) => models_ok = false,
    }
    outcome(data_ok && models_ok, format!("dataset CSV {}, four model documents {}", ok_word(data_ok), ok_word(models_ok)))
}

fn ok_word(ok: bool) -> &'static str {
    if ok {
        "lossless"
    } else {
        "lossy"
    }
}

fn main() {
    let mut table: Vec<(&str, Outcome)> = Vec::new();
    table.push(("AC1 branch following", ac1_branch_following()));
    table.push(("AC2 TLS recovery", ac2_tls_recovery()));
    table.push(("AC3 EM monotonicity", ac3_em_monotone()));
    table.push(("AC4 augmentation affine closure", ac4_augmentation_closure()));
    let reports = benchmark_reports();
    table.push(("AC5 ruled-surface benefit", ac5_ruled_surface(&reports)));
    table.push(("AC6 model ordering", ac6_model_ordering(&reports)));
    table.push(("AC7 loss calibration", ac7_loss_calibration()));
    table.push(("AC8 SE(2) integration", ac8_se2()));
    table.push(("AC9 determinism", ac9_determinism()));
    table.push(("AC10 round trips", ac10_round_trips()));

    println!();
    for (name, o) in &table {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = table.iter().filter(|(_, o)| !o.pass).count();
    println!("{} of {} criteria pass", table.len() - failed, table.len());
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
