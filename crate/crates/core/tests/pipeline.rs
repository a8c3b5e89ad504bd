use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mttv::cli::{evaluate, evaluate_knn, pretrain, read_plot_values, EvalMode, RunConfig, TrainData, Trainer};
use mttv::encoder::Encoder;
use mttv::evaluation::read_metrics;
use mttv::longtail::{DatasetManifest, DatasetSpec};

fn quick() -> RunConfig {
    let mut cfg = RunConfig::toy();
    cfg.schedule.epochs = 2;
    cfg.evaluation.knn_every = 1;
    cfg.evaluation.linear.epochs = 3;
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, cfg.to_toml_string().unwrap()).unwrap();
    p
}

fn mttv(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mttv")).args(args).output().unwrap()
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn evaluating_a_checkpoint_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    pretrain(&quick(), &run, None).unwrap();
    let ckpt = run.join("checkpoint.json");
    for mode in [EvalMode::Knn, EvalMode::Linear] {
        let (a, b) = (dir.path().join("e1"), dir.path().join("e2"));
        let ra = evaluate(&ckpt, mode, &a).unwrap();
        let rb = evaluate(&ckpt, mode, &b).unwrap();
        assert_eq!(ra, rb);
        let name = if mode == EvalMode::Knn { "report-knn.json" } else { "report-linear.json" };
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
    // the probe on the checkpoint matches the report written at the end of training
    let written: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.join("report-knn.json")).unwrap()).unwrap();
    let again: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("e1/report-knn.json")).unwrap()).unwrap();
    assert_eq!(written, again);
}

#[test]
fn random_encoder_on_label_free_data_is_near_chance() {
    let mut cfg = RunConfig::toy();
    if let DatasetSpec::Synthetic(s) = &mut cfg.data.source {
        s.cluster_separation = 0.0;
        s.exposure_spread = 0.0;
    }
    let data = TrainData::prepare(&cfg).unwrap();
    let encoder = Encoder::new(&cfg.encoder, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let report = evaluate_knn(&encoder, &cfg, &data).unwrap();
    assert!((report.overall_acc - 0.1).abs() <= 0.05, "accuracy {}", report.overall_acc);
}

#[test]
fn zero_learning_rate_freezes_the_online_encoder() {
    let mut cfg = quick();
    cfg.optimizer.lr = 0.0;
    let data = TrainData::prepare(&cfg).unwrap();
    let mut trainer = Trainer::new(&cfg, &data).unwrap();
    let before: Vec<_> = trainer.pair.query.params().into_iter().cloned().collect();
    trainer.train_epoch().unwrap();
    let after: Vec<_> = trainer.pair.query.params().into_iter().cloned().collect();
    assert_eq!(before, after);
    // m*x + (1-m)*x equals x only up to rounding
    for (k, q) in trainer.pair.key.params().into_iter().zip(&after) {
        assert!(k.iter().zip(q).all(|(a, b)| (a - b).abs() <= 1e-15 * b.abs().max(1e-300)));
    }
}

#[test]
fn metrics_log_has_a_header_and_increasing_steps() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = pretrain(&quick(), dir.path(), None).unwrap();
    let parsed = read_metrics(&outcome.paths.metrics).unwrap();
    assert_eq!(parsed.header, Some(quick().to_json()));
    assert_eq!(parsed.records.len() as u64, outcome.steps);
    assert!(parsed.records.windows(2).all(|w| w[1].step > w[0].step));
    assert_eq!(parsed.records.iter().filter(|r| r.knn_acc.is_some()).count(), 2);
    for r in &parsed.records {
        assert!((0.0..=1.0).contains(&r.elimination_rate));
        assert!((r.mi_bound - ((128f64).ln() - r.loss)).abs() < 1e-12);
    }
}

#[test]
fn build_data_writes_manifests_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = mttv(&["build-data", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let train = DatasetManifest::load(&out.join("train-manifest.json")).unwrap();
    let test = DatasetManifest::load(&out.join("test-manifest.json")).unwrap();
    assert_eq!(train.samples.len(), 1242);
    assert_eq!(test.samples.len(), 1000);
    assert_eq!(RunConfig::load(&out.join("config.toml")).unwrap(), RunConfig::toy());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("o");
    let out = out.to_str().unwrap();

    let typo = d.join("typo.toml");
    std::fs::write(&typo, RunConfig::toy().to_toml_string().unwrap().replace("seed = 0", "seed = 0\nsed = 1")).unwrap();
    assert_eq!(code(&mttv(&["pretrain", "--config", typo.to_str().unwrap(), "--out", out])), 2);

    let mut bad = quick();
    bad.objective.loss.lambda_low = 0.95;
    let bad = write_config(d, "bad.toml", &bad);
    assert_eq!(code(&mttv(&["pretrain", "--config", bad.to_str().unwrap(), "--out", out])), 2);

    let mut resnet = quick();
    resnet.encoder.backbone = mttv::encoder::BackboneKind::Resnet18;
    let resnet = write_config(d, "resnet.toml", &resnet);
    assert_eq!(code(&mttv(&["build-data", "--config", resnet.to_str().unwrap(), "--out", out])), 2);

    assert_eq!(code(&mttv(&["pretrain", "--config", d.join("missing.toml").to_str().unwrap()])), 2);
    assert_eq!(code(&mttv(&["pretrain", "--resume", "x.json", "--seed", "3", "--out", out])), 2);
    assert_eq!(code(&mttv(&["analyze-options", "--seeds", "0", "--out", out])), 2);
}

#[test]
fn collapse_and_divergence_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let mut collapse = quick();
    collapse.objective.loss.lambda_low = -1.0;
    collapse.objective.loss.lambda_high = -0.999;
    let p = write_config(d, "collapse.toml", &collapse);
    let o = mttv(&["pretrain", "--config", p.to_str().unwrap(), "--out", d.join("c").to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("collapsed"));

    let mut diverge = quick();
    diverge.optimizer.lr = 1e300;
    diverge.schedule.warmup_fraction = 0.0;
    let p = write_config(d, "diverge.toml", &diverge);
    let o = mttv(&["pretrain", "--config", p.to_str().unwrap(), "--out", d.join("n").to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_checkpoint_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = mttv(&[
        "evaluate",
        "knn",
        "--checkpoint",
        dir.path().join("none.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn cli_pretrain_resume_evaluate_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "quick.toml", &quick());
    let run = d.join("run");
    let run_s = run.to_str().unwrap();
    let o = mttv(&["pretrain", "--config", cfg.to_str().unwrap(), "--seed", "4", "--deterministic", "--out", run_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(RunConfig::load(&run.join("config.toml")).unwrap().seed, 4);

    // resuming a finished run changes nothing
    let log = std::fs::read(run.join("metrics.jsonl")).unwrap();
    let ckpt = run.join("checkpoint.json");
    let o = mttv(&["pretrain", "--resume", ckpt.to_str().unwrap(), "--out", run_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(run.join("metrics.jsonl")).unwrap(), log);

    let o = mttv(&["evaluate", "knn", "--checkpoint", ckpt.to_str().unwrap(), "--out", run_s]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Rare"));

    let figs = d.join("figs");
    let metrics = run.join("metrics.jsonl");
    for kind in ["knn-curve", "elimination-curve"] {
        let o = mttv(&["plot", kind, "--input", metrics.to_str().unwrap(), "--out", figs.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let values = read_plot_values(&figs.join("knn_curve.csv")).unwrap();
    let logged: Vec<f64> = read_metrics(&metrics).unwrap().records.iter().filter_map(|r| r.knn_acc).collect();
    assert_eq!(values.iter().map(|p| p.y).collect::<Vec<_>>(), logged);
    assert!(figs.join("elimination_curve.svg").exists());

    let header_only = d.join("empty.jsonl");
    let text = std::fs::read_to_string(&metrics).unwrap();
    std::fs::write(&header_only, format!("{}\n", text.lines().next().unwrap())).unwrap();
    let o = mttv(&[
        "plot",
        "knn-curve",
        "--input",
        header_only.to_str().unwrap(),
        "--out",
        d.join("nofigs").to_str().unwrap(),
    ]);
    assert_ne!(code(&o), 0);
    assert!(!d.join("nofigs").exists());
}

#[test]
fn analyze_options_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "quick.toml", &quick());
    let out = d.join("opts");
    let o = mttv(&["analyze-options", "--config", cfg.to_str().unwrap(), "--seeds", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let analysis = mttv::cli::OptionAnalysis::load(&out.join("options.json")).unwrap();
    let names: Vec<&str> = analysis.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["mttv-option-1", "mttv-option-2", "mttv-option-3", "nt-xent-aa", "nt-xent-na"]);
    assert!(analysis.variants.iter().all(|v| v.reports.len() == 2 && v.seeds == [0, 1]));
    let r1 = analysis.variants[0].info.unwrap();
    assert!((r1.left - 5.0 / 9.0).abs() < 1e-15 && (r1.right - 4.0 / 9.0).abs() < 1e-15);
    assert!(analysis.variants[3].info.is_none());

    let table = std::fs::read_to_string(out.join("options.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(table.lines().nth(3).unwrap().starts_with("mttv-option-3,1,0,"));
    assert_eq!(std::fs::read_to_string(out.join("info_curves.csv")).unwrap().lines().count(), 1 + 3 * 21);

    let figs = d.join("figs");
    let o = mttv(&["plot", "option-compare", "--input", out.join("options.json").to_str().unwrap(), "--out", figs.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let bars = read_plot_values(&figs.join("option_compare.csv")).unwrap();
    assert_eq!(bars.len(), 5);
    assert_eq!(bars[0].y, analysis.variants[0].summary.overall_acc.mean);
}
