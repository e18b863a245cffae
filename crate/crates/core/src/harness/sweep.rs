use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trainer::{evaluate_source, GeneratorSource, Reference, RunOutcome, SampleSource, Trainer};
use super::{Checkpoint, ExperimentConfig, HarnessError};
use crate::data::RealData;
use crate::losses::LossKind;

/// Outcome of one member run of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCell {
    pub margin: f64,
    pub seed: u64,
    pub final_fid: Option<f64>,
    pub final_is_mean: Option<f64>,
    pub final_modes: Option<usize>,
    pub best_fid: Option<f64>,
    pub best_fid_step: Option<usize>,
    pub collapsed: bool,
    pub diverged_at: Option<usize>,
}

impl RunCell {
    fn from_outcome(margin: f64, seed: u64, result: Result<RunOutcome, HarnessError>) -> Result<Self, HarnessError> {
        match result {
            Ok(o) => {
                let last = o.report.last();
                let best = o.report.best_fid();
                Ok(Self {
                    margin,
                    seed,
                    final_fid: last.map(|r| r.fid),
                    final_is_mean: last.map(|r| r.is_mean),
                    final_modes: last.map(|r| r.modes),
                    best_fid: best.map(|r| r.fid),
                    best_fid_step: best.map(|r| r.step),
                    collapsed: o.summary.collapsed,
                    diverged_at: None,
                })
            }
            Err(HarnessError::Divergence { step, report }) => {
                let best = report.best_fid();
                Ok(Self {
                    margin,
                    seed,
                    final_fid: None,
                    final_is_mean: None,
                    final_modes: report.last().map(|r| r.modes),
                    best_fid: best.map(|r| r.fid),
                    best_fid_step: best.map(|r| r.step),
                    collapsed: true,
                    diverged_at: Some(step),
                })
            }
            Err(other) => Err(other),
        }
    }
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub margin: f64,
    pub runs: Vec<RunCell>,
    pub median_final_fid: Option<f64>,
    pub median_final_is: Option<f64>,
    pub collapsed_runs: usize,
    pub diverged_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginTable {
    pub rows: Vec<MarginRow>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MarginTable {
    pub fn row(&self, margin: f64) -> Option<&MarginRow> {
        self.rows.iter().find(|r| r.margin == margin)
    }

    /// One line per run.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("margin,seed,final_fid,final_is_mean,final_modes,best_fid,best_fid_step,collapsed,diverged_at\n");
        for row in &self.rows {
            for c in &row.runs {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    c.margin,
                    c.seed,
                    opt(c.final_fid),
                    opt(c.final_is_mean),
                    opt(c.final_modes),
                    opt(c.best_fid),
                    opt(c.best_fid_step),
                    c.collapsed,
                    opt(c.diverged_at)
                )
                .expect("write to string");
            }
        }
        out
    }

    /// One line per margin.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("margin,runs,median_final_fid,median_final_is,collapsed_runs,diverged_runs\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.margin,
                r.runs.len(),
                opt(r.median_final_fid),
                opt(r.median_final_is),
                r.collapsed_runs,
                r.diverged_runs
            )
            .expect("write to string");
        }
        out
    }
}

fn member_dir(base: &ExperimentConfig, name: String) -> String {
    base.output_path()
        .map(|p| p.join(name).display().to_string())
        .unwrap_or_default()
}

fn run_members(
    configs: Vec<ExperimentConfig>,
    data: &Arc<RealData>,
    reference: &Arc<Reference>,
) -> Vec<Result<RunOutcome, HarnessError>> {
    configs
        .into_par_iter()
        .map(|c| {
            let out = c.output_path();
            let mut t = Trainer::with_shared(c, Arc::clone(data), Arc::clone(reference))?;
            t.run(out.as_deref())
        })
        .collect()
}

fn shared(base: &ExperimentConfig) -> Result<(Arc<RealData>, Arc<Reference>), HarnessError> {
    base.validate()?;
    let data = Arc::new(base.real_data()?);
    let reference = Arc::new(Reference::for_config(base, &data)?);
    Ok((data, reference))
}

/// Trains every (margin, seed) pair and aggregates medians per margin.
pub fn sweep_margin(base: &ExperimentConfig, margins: &[f64], seeds: &[u64]) -> Result<MarginTable, HarnessError> {
    if margins.is_empty() {
        return Err(HarnessError::InvalidSweep("margin list is empty".into()));
    }
    if seeds.is_empty() {
        return Err(HarnessError::InvalidSweep("seed list is empty".into()));
    }
    if let Some(m) = margins.iter().find(|m| !(m.abs() <= 1.0)) {
        return Err(HarnessError::InvalidSweep(format!("margin {m} outside [-1, 1]")));
    }
    if base.loss_kind()? != LossKind::RmCos {
        return Err(HarnessError::InvalidSweep(format!(
            "margin sweep needs loss = \"rmcos\", got {:?}",
            base.loss
        )));
    }
    let (data, reference) = shared(base)?;
    let mut configs = Vec::new();
    for &m in margins {
        for &s in seeds {
            let mut c = base.clone();
            c.margin = m;
            c.seed = s;
            c.output_dir = member_dir(base, format!("margin_{m}/seed_{s}"));
            configs.push(c);
        }
    }
    let results = run_members(configs, &data, &reference);
    let mut cells = results.into_iter();
    let mut rows = Vec::new();
    for &m in margins {
        let runs = seeds
            .iter()
            .map(|&s| RunCell::from_outcome(m, s, cells.next().expect("one result per member")))
            .collect::<Result<Vec<_>, _>>()?;
        let fids: Vec<f64> = runs.iter().filter_map(|r| r.final_fid).collect();
        let iss: Vec<f64> = runs.iter().filter_map(|r| r.final_is_mean).collect();
        rows.push(MarginRow {
            margin: m,
            median_final_fid: median(&fids),
            median_final_is: median(&iss),
            collapsed_runs: runs.iter().filter(|r| r.collapsed).count(),
            diverged_runs: runs.iter().filter(|r| r.diverged_at.is_some()).count(),
            runs,
        });
    }
    Ok(MarginTable { rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleCountRow {
    pub samples: usize,
    pub fid: f64,
    pub is_mean: f64,
    pub is_std: f64,
}

pub fn sample_count_csv(rows: &[SampleCountRow]) -> String {
    let mut out = String::from("samples,fid,is_mean,is_std\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.samples, r.fid, r.is_mean, r.is_std).expect("write to string");
    }
    out
}

/// FID at each sample count, every count starting from the same eval seed.
pub fn sweep_sample_count(
    source: &dyn SampleSource,
    data: &RealData,
    reference: &Reference,
    counts: &[usize],
    eval_seed: u64,
    is_splits: usize,
) -> Result<Vec<SampleCountRow>, HarnessError> {
    if counts.is_empty() {
        return Err(HarnessError::InvalidSweep("count list is empty".into()));
    }
    if let Some(c) = counts.iter().find(|&&c| c < 2) {
        return Err(HarnessError::InvalidSweep(format!("sample count {c} is below 2")));
    }
    if counts.windows(2).any(|w| w[1] < w[0]) {
        return Err(HarnessError::InvalidSweep("sample counts must be non-decreasing".into()));
    }
    counts
        .iter()
        .map(|&n| {
            let e = evaluate_source(source, data, reference, n, eval_seed, is_splits)?;
            Ok(SampleCountRow {
                samples: n,
                fid: e.fid,
                is_mean: e.inception.mean,
                is_std: e.inception.std,
            })
        })
        .collect()
}

/// [`sweep_sample_count`] for a checkpoint's generator.
pub fn sweep_sample_count_checkpoint(
    ckpt: &Checkpoint,
    counts: &[usize],
    eval_seed: u64,
) -> Result<Vec<SampleCountRow>, HarnessError> {
    let data = ckpt.config.real_data()?;
    let reference = Reference::for_config(&ckpt.config, &data)?;
    sweep_sample_count(
        &GeneratorSource(&ckpt.generator),
        &data,
        &reference,
        counts,
        eval_seed,
        ckpt.config.is_splits,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub best_fid: Option<f64>,
    pub best_fid_step: Option<usize>,
    pub final_fid: Option<f64>,
    pub collapsed: bool,
    pub diverged_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedVarianceTable {
    pub rows: Vec<SeedRow>,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
    /// `max - min` of the per-seed best FID.
    pub spread: Option<f64>,
    #[serde(skip)]
    pub checkpoints: Vec<PathBuf>,
}

impl SeedVarianceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,best_fid,best_fid_step,final_fid,collapsed,diverged_at\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.seed,
                opt(r.best_fid),
                opt(r.best_fid_step),
                opt(r.final_fid),
                r.collapsed,
                opt(r.diverged_at)
            )
            .expect("write to string");
        }
        writeln!(
            out,
            "# min={} median={} max={} spread={}",
            opt(self.min),
            opt(self.median),
            opt(self.max),
            opt(self.spread)
        )
        .expect("write to string");
        out
    }
}

/// Trains once per seed and tabulates the best FID of each run.
pub fn run_seed_variance(config: &ExperimentConfig, seeds: &[u64]) -> Result<SeedVarianceTable, HarnessError> {
    if seeds.len() < 2 {
        return Err(HarnessError::InvalidSweep(format!(
            "seed variance needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let (data, reference) = shared(config)?;
    let configs: Vec<ExperimentConfig> = seeds
        .iter()
        .map(|&s| {
            let mut c = config.clone();
            c.seed = s;
            c.output_dir = member_dir(config, format!("seed_{s}"));
            c
        })
        .collect();
    let results = run_members(configs, &data, &reference);
    let mut rows = Vec::new();
    let mut checkpoints = Vec::new();
    for (&seed, result) in seeds.iter().zip(results) {
        if let Ok(o) = &result {
            checkpoints.extend(o.checkpoints.last().cloned());
        }
        let cell = RunCell::from_outcome(f64::NAN, seed, result)?;
        rows.push(SeedRow {
            seed,
            best_fid: cell.best_fid,
            best_fid_step: cell.best_fid_step,
            final_fid: cell.final_fid,
            collapsed: cell.collapsed,
            diverged_at: cell.diverged_at,
        });
    }
    let bests: Vec<f64> = rows.iter().filter_map(|r| r.best_fid).collect();
    let min = bests.iter().copied().reduce(f64::min);
    let max = bests.iter().copied().reduce(f64::max);
    Ok(SeedVarianceTable {
        median: median(&bests),
        spread: min.zip(max).map(|(a, b)| b - a),
        min,
        max,
        rows,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_parity_and_nan() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn sweep_argument_errors() {
        let base = ExperimentConfig::default();
        assert!(matches!(sweep_margin(&base, &[], &[0]), Err(HarnessError::InvalidSweep(_))));
        assert!(matches!(sweep_margin(&base, &[0.1], &[]), Err(HarnessError::InvalidSweep(_))));
        assert!(matches!(sweep_margin(&base, &[1.5], &[0]), Err(HarnessError::InvalidSweep(_))));
        let mut hinge = base.clone();
        hinge.loss = "hinge".into();
        assert!(matches!(sweep_margin(&hinge, &[0.1], &[0]), Err(HarnessError::InvalidSweep(_))));
        assert!(matches!(run_seed_variance(&base, &[1]), Err(HarnessError::InvalidSweep(_))));
    }
}
