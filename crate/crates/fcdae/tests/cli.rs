use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fcdae::core::synth::{generate_truth_c2, DynamicsSpec};
use fcdae::formats::write_c2;

const TINY: &str = r#"
seed = 5

[dataset]
n_samples = 10
n_frames = 32
splits = [0.6, 0.2, 0.2]
crop_size = 16
crop_stride = 16

[[dataset.dynamics]]
kind = "stationary_kww"
tau_c = 6.0
gamma = 1.0

[[dataset.speckle]]
n_pixels = 400
n_modes = 1
mean_counts = 5.0

[train]
learning_rate = 3e-3
batch_size = 4
max_epochs = 1

[ensemble]
max_epochs = 1
max_train_crops = 8
"#;

fn fcdae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcdae")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    o
}

fn failed_with(o: &Output, code: &str) {
    assert!(!o.status.success(), "expected failure, got stdout {}", stdout(o));
    assert!(stderr(o).starts_with(code), "stderr: {}", stderr(o));
}

struct Run {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Run {
    fn new(toml: &str) -> Run {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.toml");
        std::fs::write(&config, toml).unwrap();
        Run { dir, config }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cmd(&self, sub: &str, out: &str, extra: &[&str]) -> Output {
        let out = self.out(out);
        let mut args = vec![sub, "--config", self.config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        fcdae(&args)
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_reports_counts_and_is_deterministic() {
    let run = Run::new(TINY);
    let first = ok(run.cmd("synth", "a", &[]));
    ok(run.cmd("synth", "b", &[]));
    let text = stdout(&first);
    assert!(text.contains("base samples: train 6 val 2 test 2"), "{text}");
    // reversal and one subsampling interval: 4 variants per training sample
    assert!(text.contains("records: train 24 val 2 test 2"), "{text}");
    let a = std::fs::read_to_string(run.out("a/dataset/manifest.tsv")).unwrap();
    let b = std::fs::read_to_string(run.out("b/dataset/manifest.tsv")).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("sample_id\tsplit\traw_path\ttruth_path\tT\tspec\tseed"));
    let raw = a.lines().nth(1).unwrap().split('\t').nth(2).unwrap().to_string();
    assert_eq!(
        std::fs::read(run.out("a/dataset").join(&raw)).unwrap(),
        std::fs::read(run.out("b/dataset").join(&raw)).unwrap()
    );
    let reseeded = ok(fcdae(&["synth", "--config", path(&run.config), "--seed", "6", "--out", path(&run.out("c"))]));
    assert!(stdout(&reseeded).contains("records:"));
    assert_ne!(a, std::fs::read_to_string(run.out("c/dataset/manifest.tsv")).unwrap());
}

#[test]
fn invalid_split_fractions_are_a_config_error() {
    let run = Run::new(&TINY.replace("splits = [0.6, 0.2, 0.2]", "splits = [0.6, 0.3, 0.3]"));
    let o = run.cmd("synth", "a", &[]);
    failed_with(&o, "E_CONFIG");
    assert!(!run.out("a/dataset/manifest.tsv").exists());
}

#[test]
fn unknown_config_key_is_rejected_with_its_line() {
    let run = Run::new(&TINY.replace("seed = 5", "seed = 5\nsede = 6"));
    let o = run.cmd("synth", "a", &[]);
    failed_with(&o, "E_CONFIG");
    assert!(stderr(&o).contains("sede"), "{}", stderr(&o));
}

#[test]
fn train_without_manifest_fails() {
    let run = Run::new(TINY);
    failed_with(&run.cmd("train", "empty", &[]), "E_CONFIG");
}

#[test]
fn train_denoise_eval_round() {
    let run = Run::new(TINY);
    ok(run.cmd("synth", "a", &[]));
    let trained = ok(run.cmd("train", "a", &[]));
    assert!(stdout(&trained).contains("epochs: 1"));
    assert!(stderr(&trained).contains("epoch 1: loss"));
    let ckpt = run.out("a/model/checkpoint.fcda");
    let history = std::fs::read_to_string(run.out("a/model/loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);

    // same seed, same bytes
    ok(run.cmd("synth", "b", &[]));
    ok(run.cmd("train", "b", &[]));
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(run.out("b/model/checkpoint.fcda")).unwrap());

    let manifest = std::fs::read_to_string(run.out("a/dataset/manifest.tsv")).unwrap();
    let val = manifest.lines().find(|l| l.split('\t').nth(1) == Some("val")).unwrap();
    let raw = run.out("a/dataset").join(val.split('\t').nth(2).unwrap());
    let den = run.out("den.c2f");
    let den2 = run.out("den2.c2f");
    ok(fcdae(&["denoise", path(&ckpt), path(&raw), path(&den)]));
    ok(fcdae(&["denoise", path(&ckpt), path(&den), path(&den2)]));
    let meta = std::fs::read_to_string(run.out("den.c2f.meta")).unwrap();
    assert!(meta.contains("provenance"), "{meta}");

    let o = ok(fcdae(&["eval", path(&raw), path(&den)]));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["beta_obs_raw", "delta_beta_rel", "acf_pass", "ssim", "snr_raw", "snr_denoised", "tau_star", "contrast_bias"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(report.get("generated_at").is_none());
    let stamped = ok(fcdae(&["--timestamps", "eval", path(&raw), path(&den)]));
    assert!(stdout(&stamped).contains("generated_at"));
}

#[test]
fn eval_of_a_map_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let truth = generate_truth_c2(&DynamicsSpec::StationaryKww { tau_c: 8.0, gamma: 1.0 }, 0.2, 40, 1.0).unwrap();
    let p = dir.path().join("t.c2f");
    write_c2(&p, &truth, "test").unwrap();
    let o = ok(fcdae(&["eval", path(&p), path(&p), "--out", path(dir.path())]));
    assert!(stdout(&o).is_empty());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["delta_beta_rel"], 0.0);
    assert_eq!(report["ssim"], 1.0);
    assert_eq!(report["acf_pass"], true);
    assert!((report["acf_bound"].as_f64().unwrap() - 1.96 / 40f64.sqrt()).abs() < 1e-15);
}

#[test]
fn eval_shape_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DynamicsSpec::StationaryKww { tau_c: 8.0, gamma: 1.0 };
    let (a, b) = (dir.path().join("a.c2f"), dir.path().join("b.c2f"));
    write_c2(&a, &generate_truth_c2(&spec, 0.2, 20, 1.0).unwrap(), "a").unwrap();
    write_c2(&b, &generate_truth_c2(&spec, 0.2, 24, 1.0).unwrap(), "b").unwrap();
    failed_with(&fcdae(&["eval", path(&a), path(&b)]), "E_SHAPE");
}

#[test]
fn damaged_inputs_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.c2f");
    std::fs::write(&junk, b"NOPE\x01\x00\x00\x00").unwrap();
    let o = fcdae(&["fit", path(&junk)]);
    failed_with(&o, "E_FORMAT");
    assert!(stderr(&o).contains("junk.c2f"));
    failed_with(&fcdae(&["denoise", path(&junk), path(&junk), path(&dir.path().join("x.c2f"))]), "E_FORMAT");
    failed_with(&fcdae(&["fit", path(&dir.path().join("missing.c2f"))]), "E_IO");
}

#[test]
fn fit_trace_of_a_stationary_truth_map() {
    let dir = tempfile::tempdir().unwrap();
    let n = 60;
    let truth = generate_truth_c2(&DynamicsSpec::StationaryKww { tau_c: 10.0, gamma: 1.0 }, 0.2, n, 1.0).unwrap();
    let p = dir.path().join("t.c2f");
    write_c2(&p, &truth, "test").unwrap();
    let o = ok(fcdae(&["fit", path(&p), "--edge-exclude", "0.1"]));
    let text = stdout(&o);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["age_index", "c_inf", "beta", "tau_c", "gamma", "sigma_c_inf", "sigma_beta", "sigma_tau_c", "sigma_gamma", "r_squared", "converged"]
    );
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    // floor(0.1 * 60) = 6 ages dropped at each end
    let ages: Vec<usize> = records.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ages.first(), Some(&6));
    assert_eq!(ages.last(), Some(&(n - 7)));
    let tau: Vec<f64> = records.iter().map(|r| r[3].parse().unwrap()).collect();
    for t in &tau {
        assert!((t - 10.0).abs() < 1e-4, "tau_c {t}");
    }
    ok(fcdae(&["fit", path(&p), "--model", "composite", "--half-window", "2", "--out", path(dir.path())]));
    assert!(std::fs::read_to_string(dir.path().join("trace.svg")).unwrap().starts_with("<svg"));
    failed_with(&fcdae(&["fit", path(&p), "--edge-exclude", "0.5"]), "E_CONFIG");
}

#[test]
fn ensemble_needs_two_seeds() {
    let run = Run::new(TINY);
    ok(run.cmd("synth", "a", &[]));
    failed_with(&run.cmd("ensemble", "a", &["--seeds", "1"]), "E_CONFIG");
    let o = ok(run.cmd("ensemble", "a", &["--seeds", "1,2"]));
    assert!(stdout(&o).contains("median variance/beta_obs"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.out("a/ensemble/report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"], serde_json::json!([1, 2]));
    assert!(run.out("a/ensemble/members/seed_2.fcda").exists());
}

#[test]
fn bootstrap_study_writes_report_and_overlays() {
    let run = Run::new(&format!(
        "{TINY}\n[bootstrap]\nn_frames = 40\nfractions = [1.0, 0.5]\nmodel = \"kww\"\n[bootstrap.speckle]\nn_pixels = 600\nn_modes = 1\nmean_counts = 5.0\n"
    ));
    ok(run.cmd("synth", "a", &[]));
    failed_with(&run.cmd("bootstrap-study", "a", &[]), "E_IO");
    ok(run.cmd("train", "a", &[]));
    let o = ok(run.cmd("bootstrap-study", "a", &[]));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("snr_raw")).count(), 2);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.out("a/bootstrap/report.json")).unwrap()).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 2);
    assert_eq!(report["records"][1]["n_pixels"], 300);
    assert!(run.out("a/bootstrap/overlays/frac_0500.svg").exists());
    assert!(run.out("a/bootstrap/report.csv").exists());
    failed_with(&run.cmd("bootstrap-study", "a", &["--fractions", "1.0,0.0"]), "E_CONFIG");
}

#[test]
fn help_lists_configuration_defaults() {
    let o = ok(fcdae(&["--help"]));
    assert!(stdout(&o).contains("learning_rate = 1e-3"));
    failed_with(&fcdae(&["frobnicate"]), "E_CONFIG");
}
