use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::autodiff::AdamConfig;
use crate::data::{ImageDataset, RealData, SyntheticKind, SyntheticSpec};
use crate::layers::{Activation, NetworkSpec};
use crate::losses::{LossKind, MarginCosineParams};

/// Which real-feature statistics the distance is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidReference {
    /// Fit on a fresh draw of real samples at run start.
    Direct,
    /// Load from `dataset.stats_cache`, writing it on first use.
    Cached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// `ring8`, `grid25`, `spiral` or `mnist`.
    pub kind: String,
    pub scale: f64,
    pub std: f64,
    pub images: String,
    pub labels: String,
    pub stats_cache: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: "ring8".into(),
            scale: 2.0,
            std: 0.15,
            images: String::new(),
            labels: String::new(),
            stats_cache: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub sizes: Vec<usize>,
    pub batch_norm: bool,
    pub init_std: f64,
    /// `identity` or `tanh`.
    pub output: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            sizes: vec![16, 128, 128, 2],
            batch_norm: true,
            init_std: 0.02,
            output: "identity".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub sizes: Vec<usize>,
    pub spectral_norm: bool,
    pub leaky_slope: f64,
    pub init_std: f64,
    pub warmup_iterations: usize,
    pub power_iterations: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            sizes: vec![2, 128, 128, 1],
            spectral_norm: true,
            leaky_slope: 0.2,
            init_std: 0.02,
            warmup_iterations: 5,
            power_iterations: 1,
        }
    }
}

/// One training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub loss: String,
    pub seed: u64,
    pub steps: usize,
    pub d_steps: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    /// Cosine scale `s`.
    pub scale: f64,
    /// Cosine margin `m`, only read by `rmcos`.
    pub margin: f64,
    pub eval_interval: usize,
    pub eval_samples: usize,
    pub eval_seed: u64,
    pub reference_samples: usize,
    pub reference_seed: u64,
    pub fid_reference: FidReference,
    pub is_splits: usize,
    pub quality_radius: f64,
    pub collapse_modes: usize,
    pub collapse_window: usize,
    /// 0 writes checkpoints only at the start and end.
    pub checkpoint_interval: usize,
    /// Empty keeps everything in memory.
    pub output_dir: String,
    pub dataset: DatasetConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub adam: AdamConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            loss: "rmcos".into(),
            seed: 0,
            steps: 20_000,
            d_steps: 1,
            batch_size: 64,
            latent_dim: 16,
            scale: 10.0,
            margin: 0.15,
            eval_interval: 500,
            eval_samples: 2_000,
            eval_seed: 1_000,
            reference_samples: 10_000,
            reference_seed: 2_000,
            fid_reference: FidReference::Direct,
            is_splits: 10,
            quality_radius: 3.0,
            collapse_modes: 2,
            collapse_window: 3,
            checkpoint_interval: 0,
            output_dir: String::new(),
            dataset: DatasetConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn default_table() -> toml::Table {
    toml::Table::try_from(ExperimentConfig::default()).expect("default config serializes")
}

/// Every settable dotted key, sorted.
pub fn valid_keys() -> Vec<String> {
    let mut keys = Vec::new();
    flatten("", &toml::Value::Table(default_table()), &mut keys);
    keys.sort();
    keys
}

fn check_keys(table: &toml::Table) -> Result<(), HarnessError> {
    let valid: BTreeSet<String> = valid_keys().into_iter().collect();
    let mut present = Vec::new();
    flatten("", &toml::Value::Table(table.clone()), &mut present);
    for key in present {
        if !valid.contains(&key) {
            return Err(HarnessError::UnknownKey {
                key,
                valid: valid.iter().cloned().collect::<Vec<_>>().join(", "),
            });
        }
    }
    Ok(())
}

/// Parses a `--set` right-hand side as a TOML value, falling back to a string.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), HarnessError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let valid = valid_keys();
    if !valid.iter().any(|k| k == key) {
        return Err(HarnessError::UnknownKey {
            key: key.to_string(),
            valid: valid.join(", "),
        });
    }
    let mut value = parse_override_value(raw.trim());
    // keep string-typed keys as strings even when the text looks numeric
    let parts: Vec<&str> = key.split('.').collect();
    let default = default_table();
    let mut slot = &default;
    for p in &parts[..parts.len() - 1] {
        slot = slot[*p].as_table().expect("valid key path");
    }
    let template = &slot[parts[parts.len() - 1]];
    match (template, &value) {
        (toml::Value::String(_), v) if !v.is_str() => value = toml::Value::String(raw.trim().to_string()),
        (toml::Value::Float(_), toml::Value::Integer(i)) => value = toml::Value::Float(*i as f64),
        _ => {}
    }
    let mut target = table;
    for p in &parts[..parts.len() - 1] {
        target = target
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{p} is not a table")))?;
    }
    target.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Builds a config from TOML text plus `key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        check_keys(&table)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn loss_kind(&self) -> Result<LossKind, HarnessError> {
        self.loss.parse().map_err(|e: crate::losses::UnknownLossKind| HarnessError::InvalidValue {
            key: "loss".into(),
            message: e.to_string(),
        })
    }

    pub fn loss_params(&self) -> MarginCosineParams {
        MarginCosineParams {
            scale: self.scale,
            margin: self.margin,
        }
    }

    pub fn output_path(&self) -> Option<PathBuf> {
        (!self.output_dir.is_empty()).then(|| PathBuf::from(&self.output_dir))
    }

    /// Hex SHA-256 of the config with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn is_image_mode(&self) -> bool {
        self.dataset.kind.eq_ignore_ascii_case("mnist")
    }

    /// Width of one real sample.
    pub fn data_dim(&self) -> Result<usize, HarnessError> {
        if self.is_image_mode() {
            // resolved from the files, checked again when they are loaded
            Ok(*self.generator.sizes.last().unwrap_or(&0))
        } else {
            Ok(2)
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |key: &str, message: String| {
            Err(HarnessError::InvalidValue {
                key: key.into(),
                message,
            })
        };
        let kind = self.loss_kind()?;
        for (key, v) in [
            ("d_steps", self.d_steps),
            ("latent_dim", self.latent_dim),
            ("is_splits", self.is_splits),
            ("collapse_window", self.collapse_window),
        ] {
            if v == 0 {
                return bad(key, "must be positive".into());
            }
        }
        if self.batch_size < 2 {
            return bad("batch_size", format!("must be at least 2, got {}", self.batch_size));
        }
        if self.steps > 0 && self.eval_interval == 0 {
            return bad("eval_interval", "must be positive".into());
        }
        if self.eval_samples < self.is_splits.max(2) {
            return bad(
                "eval_samples",
                format!("must be at least max(2, is_splits) = {}", self.is_splits.max(2)),
            );
        }
        if self.reference_samples < 2 {
            return bad("reference_samples", "must be at least 2".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale", format!("must be positive, got {}", self.scale));
        }
        if kind == LossKind::RmCos && !(self.margin.abs() <= 1.0) {
            return bad("margin", format!("must lie in [-1, 1], got {}", self.margin));
        }
        if !(self.quality_radius > 0.0) {
            return bad("quality_radius", "must be positive".into());
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad("adam.lr", format!("must be positive, got {}", self.adam.lr));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) {
            return bad("adam.beta1", format!("must lie in [0, 1), got {}", self.adam.beta1));
        }
        if !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("adam.beta2", format!("must lie in [0, 1), got {}", self.adam.beta2));
        }
        if !(self.adam.eps > 0.0) {
            return bad("adam.eps", "must be positive".into());
        }
        let g = &self.generator.sizes;
        let d = &self.discriminator.sizes;
        if g.len() < 2 || g.contains(&0) {
            return bad("generator.sizes", format!("need at least 2 positive widths, got {g:?}"));
        }
        if d.len() < 2 || d.contains(&0) {
            return bad("discriminator.sizes", format!("need at least 2 positive widths, got {d:?}"));
        }
        if g[0] != self.latent_dim {
            return bad(
                "generator.sizes",
                format!("first width {} must equal latent_dim {}", g[0], self.latent_dim),
            );
        }
        if *d.last().expect("nonempty") != 1 {
            return bad("discriminator.sizes", "last width must be 1 (the critic head)".into());
        }
        let data_dim = self.data_dim()?;
        if *g.last().expect("nonempty") != data_dim {
            return bad(
                "generator.sizes",
                format!("last width {} must equal the data dimension {data_dim}", g.last().unwrap()),
            );
        }
        if d[0] != data_dim {
            return bad(
                "discriminator.sizes",
                format!("first width {} must equal the data dimension {data_dim}", d[0]),
            );
        }
        for (key, v) in [("generator.init_std", self.generator.init_std), ("discriminator.init_std", self.discriminator.init_std)] {
            if !(v > 0.0) {
                return bad(key, "must be positive".into());
            }
        }
        self.output_activation()?;
        if self.is_image_mode() {
            if self.dataset.images.is_empty() || self.dataset.labels.is_empty() {
                return bad(
                    "dataset.images",
                    "mnist mode needs both dataset.images and dataset.labels".into(),
                );
            }
        } else {
            self.synthetic_spec()?;
        }
        if self.fid_reference == FidReference::Cached && self.dataset.stats_cache.is_empty() {
            return bad("dataset.stats_cache", "required when fid_reference = \"cached\"".into());
        }
        Ok(())
    }

    fn output_activation(&self) -> Result<Activation, HarnessError> {
        match self.generator.output.to_ascii_lowercase().as_str() {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            other => Err(HarnessError::InvalidValue {
                key: "generator.output".into(),
                message: format!("unknown output {other:?}; valid: identity, tanh"),
            }),
        }
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec, HarnessError> {
        let kind: SyntheticKind = self.dataset.kind.parse().map_err(|_| HarnessError::InvalidValue {
            key: "dataset.kind".into(),
            message: format!("unknown kind {:?}; valid: ring8, grid25, spiral, mnist", self.dataset.kind),
        })?;
        SyntheticSpec::new(kind, self.dataset.scale, self.dataset.std).map_err(|e| HarnessError::InvalidValue {
            key: "dataset".into(),
            message: e.to_string(),
        })
    }

    /// Loads or builds the real-data source.
    pub fn real_data(&self) -> Result<RealData, HarnessError> {
        if self.is_image_mode() {
            let ds = ImageDataset::load(Path::new(&self.dataset.images), Path::new(&self.dataset.labels))?;
            let g_out = *self.generator.sizes.last().expect("validated");
            if ds.pixel_dim() != g_out {
                return Err(HarnessError::InvalidValue {
                    key: "generator.sizes".into(),
                    message: format!("last width {g_out} must equal the image size {}", ds.pixel_dim()),
                });
            }
            Ok(RealData::Images(Box::new(ds)))
        } else {
            Ok(RealData::Synthetic(self.synthetic_spec()?))
        }
    }

    pub fn generator_spec(&self) -> Result<NetworkSpec, HarnessError> {
        let mut spec = NetworkSpec::generator(self.generator.sizes.clone());
        spec.batch_norm = self.generator.batch_norm;
        spec.init_std = self.generator.init_std;
        spec.output_activation = self.output_activation()?;
        Ok(spec)
    }

    pub fn discriminator_spec(&self) -> Result<NetworkSpec, HarnessError> {
        let kind = self.loss_kind()?;
        let mut spec = NetworkSpec::discriminator(self.discriminator.sizes.clone(), kind.head());
        spec.spectral_norm = self.discriminator.spectral_norm;
        spec.hidden_activation = Activation::LeakyRelu(self.discriminator.leaky_slope);
        spec.init_std = self.discriminator.init_std;
        spec.warmup_iterations = self.discriminator.warmup_iterations;
        spec.train_iterations = self.discriminator.power_iterations;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn overrides_apply_with_types() {
        let c = ExperimentConfig::from_toml_with_overrides(
            "seed = 3\n",
            &[
                "adam.lr=1e-3".into(),
                "dataset.kind=grid25".into(),
                "margin=0".into(),
                "steps=10".into(),
                "output_dir=123".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.adam.lr, 1e-3);
        assert_eq!(c.dataset.kind, "grid25");
        assert_eq!(c.margin, 0.0);
        assert_eq!(c.steps, 10);
        assert_eq!(c.seed, 3);
        assert_eq!(c.output_dir, "123");
    }

    #[test]
    fn unknown_keys_list_valid_keys() {
        let err = ExperimentConfig::from_toml_with_overrides("", &["adam.learning_rate=1".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("adam.learning_rate") && msg.contains("adam.lr") && msg.contains("dataset.kind"));
        let err = ExperimentConfig::from_toml("[dataset]\nradius = 2.0\n").unwrap_err();
        assert!(matches!(err, HarnessError::UnknownKey { ref key, .. } if key == "dataset.radius"));
    }

    #[test]
    fn unknown_loss_lists_all_kinds() {
        let msg = ExperimentConfig::from_toml("loss = \"foo\"").unwrap_err().to_string();
        for k in LossKind::ALL {
            assert!(msg.contains(k.name()), "{msg}");
        }
    }

    #[test]
    fn inconsistent_shapes_rejected() {
        for o in ["latent_dim=8", "generator.sizes=[16, 64, 3]", "discriminator.sizes=[2, 64, 2]", "margin=1.5", "scale=0", "batch_size=1", "dataset.kind=ring9"] {
            assert!(ExperimentConfig::from_toml_with_overrides("", &[o.into()]).is_err(), "{o}");
        }
        assert!(ExperimentConfig::from_toml_with_overrides("", &["loss=hinge".into(), "margin=1.5".into()]).is_ok());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
