use std::sync::Arc;

use rmcos::data::{RealData, RngStream, Substream};
use rmcos::harness::{
    evaluate_source, run_seed_variance, sweep_margin, sweep_sample_count, Checkpoint, ExperimentConfig,
    GeneratorSource, HarnessError, MetricReport, Reference, SampleSource, Trainer, TrueSampler, CSV_HEADER,
};
use rmcos::layers::Mode;

fn small(overrides: &[&str]) -> ExperimentConfig {
    let mut all = vec![
        "steps=40",
        "eval_interval=20",
        "eval_samples=200",
        "reference_samples=1000",
        "batch_size=32",
        "generator.sizes=[16, 32, 2]",
        "discriminator.sizes=[2, 32, 1]",
    ];
    all.extend_from_slice(overrides);
    let owned: Vec<String> = all.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::from_toml_with_overrides("", &owned).unwrap()
}

/// Checkpoint with run-location and wall-clock fields cleared.
fn normalized(c: &Checkpoint) -> Checkpoint {
    let mut c = c.clone();
    c.config.output_dir.clear();
    c.report = c.report.without_wall_clock();
    c
}

#[test]
fn zero_steps_gives_empty_report_and_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(&["steps=0"]);
    c.output_dir = dir.path().display().to_string();
    let out = rmcos::harness::train(&c).unwrap();
    assert!(out.report.rows.is_empty());
    assert_eq!(out.checkpoints.len(), 1);
    assert!(out.checkpoints[0].ends_with("checkpoints/step_00000000.json"));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv, format!("{CSV_HEADER}\n"));
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn runs_are_deterministic_and_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(&["checkpoint_interval=20"]);
    c.output_dir = dir.path().join("a").display().to_string();
    let a = rmcos::harness::train(&c).unwrap();
    c.output_dir = dir.path().join("b").display().to_string();
    let b = rmcos::harness::train(&c).unwrap();
    assert_eq!(a.report.without_wall_clock(), b.report.without_wall_clock());
    assert_eq!(normalized(&a.final_checkpoint), normalized(&b.final_checkpoint));
    assert_eq!(a.report.rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![20, 40]);
    assert_eq!(a.checkpoints.len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("a/report.csv")).unwrap();
    assert!(csv.starts_with(&format!("{CSV_HEADER}\n")));
    let parsed = MetricReport::from_csv(&csv).unwrap();
    assert_eq!(parsed, a.report);
    for r in &a.report.rows {
        assert!(r.fid >= 0.0 && r.is_mean >= 1.0 && r.d_loss.is_finite() && r.g_loss.is_finite());
    }
}

#[test]
fn resume_from_checkpoint_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(&["checkpoint_interval=20", "eval_interval=10"]);
    c.output_dir = dir.path().display().to_string();
    let full = rmcos::harness::train(&c).unwrap();
    let mid = Checkpoint::load(&dir.path().join("checkpoints/step_00000020.json")).unwrap();
    assert_eq!(mid.step, 20);
    let mut resumed = Trainer::from_checkpoint(mid).unwrap();
    let out = resumed.run(None).unwrap();
    assert_eq!(out.report.without_wall_clock(), full.report.without_wall_clock());
    assert_eq!(normalized(&out.final_checkpoint), normalized(&full.final_checkpoint));
}

#[test]
fn evaluation_does_not_perturb_training() {
    let a = Trainer::new(small(&["eval_interval=5"])).unwrap().run(None).unwrap();
    let b = Trainer::new(small(&["eval_interval=40"])).unwrap().run(None).unwrap();
    assert_eq!(a.final_checkpoint.generator, b.final_checkpoint.generator);
    assert_eq!(a.final_checkpoint.discriminator, b.final_checkpoint.discriminator);
    let t = Trainer::new(small(&[])).unwrap();
    assert_eq!(t.evaluate().unwrap(), t.evaluate().unwrap());
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let mut t = Trainer::new(small(&["loss=ra-hinge"])).unwrap();
    for _ in 0..7 {
        t.train_step().unwrap();
    }
    let ckpt = t.checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    let z = rmcos::data::sample_latent(50, 16, &mut RngStream::new(1, Substream::Eval)).unwrap();
    let y1 = ckpt.generator.evaluate(&z, Mode::EVAL).unwrap();
    let y2 = back.generator.evaluate(&z, Mode::EVAL).unwrap();
    assert_eq!(
        y1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        y2.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let mut tampered = serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(&path).unwrap()).unwrap();
    tampered["config"]["seed"] = serde_json::json!(99);
    std::fs::write(&path, tampered.to_string()).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(HarnessError::Checkpoint(_))));
}

#[test]
fn every_loss_kind_trains_a_few_steps() {
    for kind in rmcos::losses::LossKind::ALL {
        let mut t = Trainer::new(small(&[&format!("loss={kind}")])).unwrap();
        for _ in 0..3 {
            let l = t.train_step().unwrap();
            assert!(l.d_loss.is_finite() && l.g_loss.is_finite(), "{kind}");
        }
    }
}

#[test]
fn divergence_is_reported_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(&["loss=ls", "dataset.scale=1e300", "discriminator.spectral_norm=false"]);
    c.output_dir = dir.path().display().to_string();
    match rmcos::harness::train(&c) {
        Err(HarnessError::Divergence { step, report }) => {
            assert!(step >= 1);
            assert!(report.rows.iter().all(|r| r.step < step));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"diverged_at\""));
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn true_sampler_sits_at_the_noise_floor() {
    let c = small(&[]);
    let data = c.real_data().unwrap();
    let reference = Reference::fit(&data, 10_000, c.reference_seed, c.quality_radius).unwrap();
    let floor = evaluate_source(&TrueSampler(&data), &data, &reference, 10_000, 7, 10).unwrap();
    assert!(floor.fid <= 0.05, "{}", floor.fid);
    assert_eq!(floor.coverage.modes_covered, 8);
    assert!(floor.inception.mean > 7.5);
    let t = Trainer::new(c).unwrap();
    let untrained = evaluate_source(&GeneratorSource(t.generator()), &data, &reference, 10_000, 7, 10).unwrap();
    assert!(untrained.fid >= 10.0 * floor.fid, "{} vs {}", untrained.fid, floor.fid);
}

#[test]
fn sample_count_sweep_repeats_with_same_seed() {
    let c = small(&[]);
    let data = c.real_data().unwrap();
    let reference = Reference::for_config(&c, &data).unwrap();
    let rows = sweep_sample_count(&TrueSampler(&data), &data, &reference, &[300, 300, 3000], 4, 10).unwrap();
    assert_eq!(rows[0], rows[1]);
    assert!(sweep_sample_count(&TrueSampler(&data), &data, &reference, &[300, 100], 4, 10).is_err());
    assert!(sweep_sample_count(&TrueSampler(&data), &data, &reference, &[], 4, 10).is_err());
}

#[test]
fn margin_sweep_and_seed_variance_tables() {
    let c = small(&["steps=20", "eval_interval=10"]);
    let table = sweep_margin(&c, &[0.0, 0.5], &[1, 2]).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows.iter().all(|r| r.runs.len() == 2 && r.median_final_fid.is_some()));
    assert_eq!(table.runs_csv().lines().count(), 5);
    let seeds = run_seed_variance(&c, &[1, 2, 3]).unwrap();
    assert_eq!(seeds.rows.len(), 3);
    assert!(seeds.spread.unwrap() > 0.0);
    assert!(seeds.rows.iter().all(|r| r.best_fid_step.is_some()));
    assert_eq!(seeds.to_csv().lines().count(), 5);
}

#[test]
fn cached_reference_is_written_once_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("stats.json");
    let c = small(&[
        "fid_reference=cached",
        &format!("dataset.stats_cache={}", cache.display()),
    ]);
    let data = Arc::new(c.real_data().unwrap());
    let first = Reference::for_config(&c, &data).unwrap();
    assert!(cache.exists());
    let second = Reference::for_config(&c, &data).unwrap();
    assert_eq!(first.stats, second.stats);
    let direct = Reference::fit(&data, c.reference_samples, c.reference_seed, c.quality_radius).unwrap();
    assert_eq!(direct.stats, first.stats);
    let _ = RealData::Synthetic(c.synthetic_spec().unwrap());
    let _: &dyn SampleSource = &TrueSampler(&data);
}
