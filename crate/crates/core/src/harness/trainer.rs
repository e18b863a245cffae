use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{checkpoint_file_name, Checkpoint, CHECKPOINT_FORMAT};
use super::report::{write_text, MetricReport, ReportRow, RunSummary};
use super::{ExperimentConfig, FidReference, HarnessError};
use crate::autodiff::{Adam, OptimError, Tape, Tensor};
use crate::data::{sample_latent, RealData, RngStream, Substream};
use crate::layers::{build_network, Mlp, Mode};
use crate::losses::{discriminator_loss, generator_loss, LogitBatch, LossKind, MarginCosineParams};
use crate::metrics::{
    fit_gaussian, frechet_distance, inception_score, mode_classifier_probs, mode_coverage, Coverage,
    GaussianStats, InceptionScore, ModeSpec,
};

/// Anything that can produce samples in data space.
pub trait SampleSource {
    fn generate(&self, n: usize, rng: &mut RngStream) -> Result<Tensor, HarnessError>;
}

/// Row chunk for untracked generation; results do not depend on it.
const GENERATE_CHUNK: usize = 2048;

/// A generator network run in eval mode on standard-normal latents.
pub struct GeneratorSource<'a>(pub &'a Mlp);

impl SampleSource for GeneratorSource<'_> {
    fn generate(&self, n: usize, rng: &mut RngStream) -> Result<Tensor, HarnessError> {
        let z = sample_latent(n, self.0.input_dim(), rng)?;
        let width = self.0.output_dim();
        let mut data = Vec::with_capacity(n * width);
        let mut start = 0;
        while start < n {
            let end = (start + GENERATE_CHUNK).min(n);
            let rows = end - start;
            let chunk = Tensor::new(
                vec![rows, self.0.input_dim()],
                z.data()[start * self.0.input_dim()..end * self.0.input_dim()].to_vec(),
            )?;
            data.extend_from_slice(self.0.evaluate(&chunk, Mode::EVAL)?.data());
            start = end;
        }
        Ok(Tensor::new(vec![n, width], data)?)
    }
}

/// Draws straight from the real distribution; a perfect generator.
pub struct TrueSampler<'a>(pub &'a RealData);

impl SampleSource for TrueSampler<'_> {
    fn generate(&self, n: usize, rng: &mut RngStream) -> Result<Tensor, HarnessError> {
        Ok(self.0.sample(n, rng)?)
    }
}

/// Real-data feature statistics and classifier geometry.
#[derive(Clone, Debug)]
pub struct Reference {
    pub stats: GaussianStats,
    pub modes: ModeSpec,
}

impl Reference {
    pub fn fit(data: &RealData, n: usize, seed: u64, quality_radius: f64) -> Result<Self, HarnessError> {
        let mut rng = RngStream::new(seed, Substream::Reference);
        let real = data.sample(n, &mut rng)?;
        let stats = fit_gaussian(&data.features(&real)?)?;
        Ok(Self {
            stats,
            modes: data.mode_spec(quality_radius)?,
        })
    }

    /// Direct or cached reference per the config.
    pub fn for_config(config: &ExperimentConfig, data: &RealData) -> Result<Self, HarnessError> {
        match config.fid_reference {
            FidReference::Direct => Self::fit(data, config.reference_samples, config.reference_seed, config.quality_radius),
            FidReference::Cached => {
                let path = Path::new(&config.dataset.stats_cache);
                let modes = data.mode_spec(config.quality_radius)?;
                if path.exists() {
                    let stats = GaussianStats::load_json(path)?;
                    if stats.dim != modes.dim() {
                        return Err(HarnessError::Checkpoint(format!(
                            "stats cache {} has dimension {}, features have {}",
                            path.display(),
                            stats.dim,
                            modes.dim()
                        )));
                    }
                    Ok(Self { stats, modes })
                } else {
                    let r = Self::fit(data, config.reference_samples, config.reference_seed, config.quality_radius)?;
                    r.stats.save_json(path)?;
                    Ok(r)
                }
            }
        }
    }
}

/// Metrics for one batch of generated samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub samples: usize,
    pub fid: f64,
    pub inception: InceptionScore,
    pub coverage: Coverage,
}

/// Generates `n` samples from a fresh eval stream and scores them.
pub fn evaluate_source(
    source: &dyn SampleSource,
    data: &RealData,
    reference: &Reference,
    n: usize,
    eval_seed: u64,
    is_splits: usize,
) -> Result<Evaluation, HarnessError> {
    if n < 2 {
        return Err(HarnessError::InvalidValue {
            key: "eval_samples".into(),
            message: format!("need at least 2 samples, got {n}"),
        });
    }
    let mut rng = RngStream::new(eval_seed, Substream::Eval);
    let x = source.generate(n, &mut rng)?;
    if x.shape()[1] != data.dim() {
        return Err(HarnessError::InvalidValue {
            key: "generator.sizes".into(),
            message: format!("generator emits width {}, data has {}", x.shape()[1], data.dim()),
        });
    }
    let feats = data.features(&x)?;
    if !feats.is_finite() {
        return Err(HarnessError::NonFiniteSamples);
    }
    let stats = fit_gaussian(&feats)?;
    let fid = frechet_distance(&reference.stats, &stats)?;
    let probs = mode_classifier_probs(&feats, &reference.modes)?;
    let inception = inception_score(&probs, is_splits.min(n))?;
    let coverage = mode_coverage(&feats, &reference.modes)?;
    Ok(Evaluation {
        samples: n,
        fid,
        inception,
        coverage,
    })
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub summary: RunSummary,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: Checkpoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Alternating-update training state.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: ExperimentConfig,
    kind: LossKind,
    params: MarginCosineParams,
    data: Arc<RealData>,
    reference: Arc<Reference>,
    generator: Mlp,
    discriminator: Mlp,
    opt_g: Adam,
    opt_d: Adam,
    data_rng: RngStream,
    latent_rng: RngStream,
    step: usize,
    last_losses: (f64, f64),
    report: MetricReport,
    low_coverage_streak: usize,
    collapsed: bool,
}

impl Trainer {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let data = Arc::new(config.real_data()?);
        let reference = Arc::new(Reference::for_config(&config, &data)?);
        Self::with_shared(config, data, reference)
    }

    /// Builds a trainer over an already loaded dataset and reference.
    pub fn with_shared(
        config: ExperimentConfig,
        data: Arc<RealData>,
        reference: Arc<Reference>,
    ) -> Result<Self, HarnessError> {
        config.validate()?;
        let mut init = RngStream::new(config.seed, Substream::Init);
        let generator = build_network(&config.generator_spec()?, &mut init)?;
        let discriminator = build_network(&config.discriminator_spec()?, &mut init)?;
        let opt_g = Adam::new(config.adam, &generator.parameters())?;
        let opt_d = Adam::new(config.adam, &discriminator.parameters())?;
        Ok(Self {
            kind: config.loss_kind()?,
            params: config.loss_params(),
            data_rng: RngStream::new(config.seed, Substream::Data),
            latent_rng: RngStream::new(config.seed, Substream::Latent),
            config,
            data,
            reference,
            generator,
            discriminator,
            opt_g,
            opt_d,
            step: 0,
            last_losses: (f64::NAN, f64::NAN),
            report: MetricReport::default(),
            low_coverage_streak: 0,
            collapsed: false,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, HarnessError> {
        let data = Arc::new(ckpt.config.real_data()?);
        let reference = Arc::new(Reference::for_config(&ckpt.config, &data)?);
        Self::from_checkpoint_shared(ckpt, data, reference)
    }

    pub fn from_checkpoint_shared(
        ckpt: Checkpoint,
        data: Arc<RealData>,
        reference: Arc<Reference>,
    ) -> Result<Self, HarnessError> {
        let config = ckpt.config;
        config.validate()?;
        Ok(Self {
            kind: config.loss_kind()?,
            params: config.loss_params(),
            data_rng: RngStream::restore(&ckpt.data_rng)?,
            latent_rng: RngStream::restore(&ckpt.latent_rng)?,
            config,
            data,
            reference,
            generator: ckpt.generator,
            discriminator: ckpt.discriminator,
            opt_g: ckpt.generator_optimizer,
            opt_d: ckpt.discriminator_optimizer,
            step: ckpt.step,
            last_losses: ckpt.last_losses,
            report: ckpt.report,
            low_coverage_streak: ckpt.low_coverage_streak,
            collapsed: ckpt.collapsed,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn generator(&self) -> &Mlp {
        &self.generator
    }

    pub fn discriminator(&self) -> &Mlp {
        &self.discriminator
    }

    pub fn data(&self) -> &Arc<RealData> {
        &self.data
    }

    pub fn reference(&self) -> &Arc<Reference> {
        &self.reference
    }

    pub fn report(&self) -> &MetricReport {
        &self.report
    }

    pub fn collapsed(&self) -> bool {
        self.collapsed
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            config: self.config.clone(),
            config_hash: self.config.hash(),
            step: self.step,
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            generator_optimizer: self.opt_g.clone(),
            discriminator_optimizer: self.opt_d.clone(),
            data_rng: self.data_rng.state(),
            latent_rng: self.latent_rng.state(),
            last_losses: self.last_losses,
            report: self.report.clone(),
            low_coverage_streak: self.low_coverage_streak,
            collapsed: self.collapsed,
        }
    }

    fn diverged(&self, step: usize) -> HarnessError {
        HarnessError::Divergence {
            step,
            report: Box::new(self.report.clone()),
        }
    }

    fn optim(&self, step: usize, e: OptimError) -> HarnessError {
        match e {
            OptimError::Divergence { .. } => self.diverged(step),
            other => other.into(),
        }
    }

    /// One generator update preceded by `d_steps` discriminator updates.
    pub fn train_step(&mut self) -> Result<StepLosses, HarnessError> {
        let b = self.config.batch_size;
        let step = self.step + 1;
        let mut real = None;
        let mut d_loss = f64::NAN;
        for _ in 0..self.config.d_steps {
            let r = self.data.sample(b, &mut self.data_rng)?;
            let z = sample_latent(b, self.config.latent_dim, &mut self.latent_rng)?;
            let fake = self.generator.evaluate(&z, Mode::FROZEN_TRAIN)?;
            self.discriminator.power_iterate()?;
            let mut joined = r.data().to_vec();
            joined.extend_from_slice(fake.data());
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::new(vec![2 * b, r.shape()[1]], joined)?);
            let pass = self.discriminator.forward(&mut tape, x, Mode::TRAIN)?;
            let cr = tape.slice_rows(pass.output, 0, b)?;
            let cf = tape.slice_rows(pass.output, b, 2 * b)?;
            let logits = LogitBatch::new(&tape, cr, cf)?;
            let loss = discriminator_loss(&mut tape, self.kind, &logits, &self.params)?;
            d_loss = tape.value(loss).item()?;
            if !d_loss.is_finite() {
                return Err(self.diverged(step));
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = pass.params.iter().map(|&p| grads.get(p)).collect();
            let mut slots = self.discriminator.parameters_mut();
            if let Err(e) = self.opt_d.step(&mut slots, &g) {
                return Err(self.optim(step, e));
            }
            real = Some(r);
        }
        let real = real.expect("d_steps >= 1");

        let z = sample_latent(b, self.config.latent_dim, &mut self.latent_rng)?;
        let mut tape = Tape::new();
        let zv = tape.constant(z);
        let gen = self.generator.forward(&mut tape, zv, Mode::TRAIN)?;
        let rv = tape.constant(real);
        let x = tape.concat_rows(&[rv, gen.output])?;
        let critic = self.discriminator.forward(&mut tape, x, Mode::FROZEN_TRAIN)?;
        let cr = tape.slice_rows(critic.output, 0, b)?;
        let cf = tape.slice_rows(critic.output, b, 2 * b)?;
        let logits = LogitBatch::new(&tape, cr, cf)?;
        let loss = generator_loss(&mut tape, self.kind, &logits, &self.params)?;
        let g_loss = tape.value(loss).item()?;
        if !g_loss.is_finite() {
            return Err(self.diverged(step));
        }
        let grads = tape.backward(loss)?;
        let g: Vec<Tensor> = gen.params.iter().map(|&p| grads.get(p)).collect();
        let mut slots = self.generator.parameters_mut();
        if let Err(e) = self.opt_g.step(&mut slots, &g) {
            return Err(self.optim(step, e));
        }
        self.generator.absorb(&gen.stats);
        self.step = step;
        self.last_losses = (d_loss, g_loss);
        Ok(StepLosses { d_loss, g_loss })
    }

    /// Scores the current generator without touching training state.
    pub fn evaluate(&self) -> Result<Evaluation, HarnessError> {
        self.evaluate_with(self.config.eval_samples, self.config.eval_seed)
    }

    pub fn evaluate_with(&self, n: usize, eval_seed: u64) -> Result<Evaluation, HarnessError> {
        evaluate_source(
            &GeneratorSource(&self.generator),
            &self.data,
            &self.reference,
            n,
            eval_seed,
            self.config.is_splits,
        )
    }

    fn record_eval(&mut self, started: Instant) -> Result<(), HarnessError> {
        let e = match self.evaluate() {
            Ok(e) => e,
            Err(HarnessError::NonFiniteSamples) => return Err(self.diverged(self.step)),
            Err(other) => return Err(other),
        };
        if e.coverage.modes_covered <= self.config.collapse_modes {
            self.low_coverage_streak += 1;
        } else {
            self.low_coverage_streak = 0;
        }
        if self.low_coverage_streak >= self.config.collapse_window {
            self.collapsed = true;
        }
        self.report.push(ReportRow {
            step: self.step,
            d_loss: self.last_losses.0,
            g_loss: self.last_losses.1,
            fid: e.fid,
            is_mean: e.inception.mean,
            is_std: e.inception.std,
            modes: e.coverage.modes_covered,
            hq_frac: e.coverage.high_quality_fraction,
            wall_ms: started.elapsed().as_millis() as u64,
        });
        Ok(())
    }

    pub fn summary(&self, diverged_at: Option<usize>) -> RunSummary {
        let best = self.report.best_fid();
        RunSummary {
            config_hash: self.config.hash(),
            loss: self.kind.name().to_string(),
            seed: self.config.seed,
            steps_completed: self.step,
            evaluations: self.report.rows.len(),
            final_row: self.report.last().cloned(),
            best_fid: best.map(|r| r.fid),
            best_fid_step: best.map(|r| r.step),
            collapsed: self.collapsed,
            diverged_at,
        }
    }

    fn write_reports(&self, dir: &Path, diverged_at: Option<usize>) -> Result<(), HarnessError> {
        write_text(&dir.join("report.csv"), &self.report.to_csv())?;
        let summary = serde_json::to_string_pretty(&self.summary(diverged_at))
            .map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
        write_text(&dir.join("summary.json"), &summary)
    }

    fn save_checkpoint(&self, dir: &Path, written: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
        let path = dir.join("checkpoints").join(checkpoint_file_name(self.step));
        if written.last() != Some(&path) {
            self.checkpoint().save(&path)?;
            written.push(path);
        }
        Ok(())
    }

    /// Trains up to `config.steps`, evaluating and checkpointing on the
    /// configured cadence. With an output directory, writes `config.toml`,
    /// `report.csv`, `summary.json` and `checkpoints/step_XXXXXXXX.json`.
    pub fn run(&mut self, out: Option<&Path>) -> Result<RunOutcome, HarnessError> {
        let started = Instant::now();
        let mut written = Vec::new();
        if let Some(dir) = out {
            write_text(&dir.join("config.toml"), &self.config.to_toml())?;
            self.save_checkpoint(dir, &mut written)?;
        }
        while self.step < self.config.steps {
            let result = self.train_step().and_then(|_| {
                let s = self.step;
                if s % self.config.eval_interval == 0 || s == self.config.steps {
                    self.record_eval(started)?;
                }
                Ok(())
            });
            if let Err(e) = result {
                if let (HarnessError::Divergence { step, .. }, Some(dir)) = (&e, out) {
                    self.write_reports(dir, Some(*step))?;
                }
                return Err(e);
            }
            if let Some(dir) = out {
                let every = self.config.checkpoint_interval;
                if every > 0 && self.step % every == 0 {
                    self.save_checkpoint(dir, &mut written)?;
                }
            }
        }
        if let Some(dir) = out {
            self.save_checkpoint(dir, &mut written)?;
            self.write_reports(dir, None)?;
        }
        Ok(RunOutcome {
            report: self.report.clone(),
            summary: self.summary(None),
            checkpoints: written,
            final_checkpoint: self.checkpoint(),
        })
    }
}

/// Trains one configuration, writing artifacts to its output directory.
pub fn train(config: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let mut trainer = Trainer::new(config.clone())?;
    let out = config.output_path();
    trainer.run(out.as_deref())
}

/// Evaluates a checkpoint's generator with its own or overridden settings.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, n: usize, eval_seed: u64) -> Result<Evaluation, HarnessError> {
    let data = ckpt.config.real_data()?;
    let reference = Reference::for_config(&ckpt.config, &data)?;
    evaluate_source(&GeneratorSource(&ckpt.generator), &data, &reference, n, eval_seed, ckpt.config.is_splits)
}

/// Deterministic samples from a checkpoint's generator.
pub fn generate_samples(ckpt: &Checkpoint, n: usize, seed: u64) -> Result<Tensor, HarnessError> {
    if n == 0 {
        return Err(HarnessError::InvalidValue {
            key: "n".into(),
            message: "must be positive".into(),
        });
    }
    GeneratorSource(&ckpt.generator).generate(n, &mut RngStream::new(seed, Substream::Eval))
}
