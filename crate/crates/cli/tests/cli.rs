use std::path::Path;
use std::process::{Command, Output};

use rmcos::data::{parse_idx, serialize_idx, IdxData, IdxTensor};
use rmcos::harness::CSV_HEADER;

const SMALL: &[&str] = &[
    "--set",
    "steps=20",
    "--set",
    "eval_interval=10",
    "--set",
    "eval_samples=200",
    "--set",
    "reference_samples=1000",
    "--set",
    "batch_size=16",
    "--set",
    "generator.sizes=[16, 16, 2]",
    "--set",
    "discriminator.sizes=[2, 16, 1]",
];

fn rmcos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmcos"))
        .args(args)
        .env_remove("RMCOS_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    rmcos(&args)
}

#[test]
fn train_writes_report_with_exact_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_small(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 3);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["steps_completed"], 20);
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("checkpoints/step_00000020.json").exists());
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train"];
    args.extend_from_slice(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_rmcos"))
        .args(&args)
        .env("RMCOS_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn unknown_loss_is_a_config_error_listing_all_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_small(dir.path(), &["--set", "loss=foo"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for kind in ["ce", "r-ce", "ra-ce", "ls", "ra-ls", "hinge", "ra-hinge", "rmcos"] {
        assert!(err.contains(kind), "{err}");
    }
    assert!(err.contains("loss"));
}

#[test]
fn unknown_key_is_a_config_error_listing_valid_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_small(dir.path(), &["--set", "adam.learning_rate=1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("adam.learning_rate") && err.contains("adam.lr") && err.contains("eval_interval"), "{err}");
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "loss = \"hinge\"\nsteps = 5\n").unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--set", "steps=10", "--seed", "7"]);
    let o = rmcos(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["loss"], "hinge");
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["steps_completed"], 10);
    let missing = rmcos(&["train", "--config", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(4), "{}", stderr(&missing));
}

#[test]
fn divergence_has_its_own_exit_code_and_keeps_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_small(
        dir.path(),
        &["--set", "loss=ls", "--set", "dataset.scale=1e300", "--set", "discriminator.spectral_norm=false"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn gen_eval_and_sample_sweep_on_a_toy_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(train_small(dir.path(), &[]).status.code(), Some(0));
    let ckpt = dir.path().join("checkpoints/step_00000020.json");
    let ck = ckpt.to_str().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = rmcos(&["gen", "--checkpoint", ck, "--n", "60", "--seed", "3", "--output", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert_eq!(text.lines().next(), Some("x,y"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let o = rmcos(&["eval", "--checkpoint", ck, "--samples", "500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(e["samples"], 500);
    assert!(e["fid"].as_f64().unwrap() >= 0.0);

    let o = rmcos(&["sweep-samples", "--checkpoint", ck, "--counts", "300,300,1000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<String> = String::from_utf8(o.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(lines[0], "samples,fid,is_mean,is_std");
    assert_eq!(lines[1], lines[2]);
    let o = rmcos(&["sweep-samples", "--checkpoint", ck, "--counts", "1000,300"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmcos(&["gen", "--checkpoint", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn sweeps_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let mut args = vec!["sweep-margin", "--margins", "0,0.5", "--seeds", "1,2", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let o = rmcos(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("margin_runs.csv").exists() && out.join("margin_summary.csv").exists());
    let o = rmcos(&["sweep-margin", "--margins", "", "--out", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));

    let out = dir.path().join("s");
    let mut args = vec!["seed-variance", "--seeds", "1,2", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let o = rmcos(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("seed_variance.csv")).unwrap();
    assert!(csv.starts_with("seed,best_fid,best_fid_step"));
}

/// Tiny two-class image set: bright left half vs bright right half.
fn write_images(dir: &Path) -> (String, String) {
    let (n, side) = (40usize, 4usize);
    let mut pixels = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u8;
        labels.push(class);
        for _r in 0..side {
            for c in 0..side {
                let bright = (c < side / 2) == (class == 0);
                pixels.push(if bright { 200 + (i % 50) as u8 } else { (i % 30) as u8 });
            }
        }
    }
    let img = dir.join("images.idx");
    let lab = dir.join("labels.idx");
    std::fs::write(&img, serialize_idx(&IdxTensor::new(vec![n, side, side], IdxData::U8(pixels)).unwrap())).unwrap();
    std::fs::write(&lab, serialize_idx(&IdxTensor::new(vec![n], IdxData::U8(labels)).unwrap())).unwrap();
    (img.display().to_string(), lab.display().to_string())
}

#[test]
fn image_mode_gen_writes_parseable_idx() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_images(dir.path());
    let out = dir.path().join("run");
    let images = format!("dataset.images={img}");
    let labels = format!("dataset.labels={lab}");
    let o = rmcos(&[
        "train",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "dataset.kind=mnist",
        "--set",
        &images,
        "--set",
        &labels,
        "--set",
        "generator.sizes=[16, 32, 16]",
        "--set",
        "generator.output=tanh",
        "--set",
        "discriminator.sizes=[16, 32, 1]",
        "--set",
        "steps=4",
        "--set",
        "eval_interval=2",
        "--set",
        "eval_samples=100",
        "--set",
        "reference_samples=200",
        "--set",
        "batch_size=8",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ckpt = out.join("checkpoints/step_00000004.json");
    let path = dir.path().join("g.idx");
    let o = rmcos(&["gen", "--checkpoint", ckpt.to_str().unwrap(), "--n", "12", "--output", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bytes = std::fs::read(&path).unwrap();
    let t = parse_idx(&bytes).unwrap();
    assert_eq!(t.shape(), &[12, 4, 4]);
    assert!(t.as_u8().is_some());
    assert_eq!(serialize_idx(&t), bytes);
}

#[test]
fn verify_single_property_and_unknown_name() {
    let o = rmcos(&["verify", "--property", "rsgan-reduction"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS rsgan-reduction"));
    let o = rmcos(&["verify", "--property", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gradient-oracle"));
}

#[test]
fn verify_full_suite_is_green_and_reports_gradient_error() {
    let start = std::time::Instant::now();
    let o = rmcos(&["verify"]);
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(o.status.code(), Some(0), "{out}{}", stderr(&o));
    assert_eq!(out.lines().count(), rmcos::verify::PROPERTIES.len());
    assert!(out.lines().all(|l| l.starts_with("PASS ")));
    assert!(out.contains("max_rel_err="));
    assert!(start.elapsed().as_secs() < 120);
}
