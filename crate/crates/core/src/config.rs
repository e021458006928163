//! Experiment configuration files.
//!
//! Configs are TOML. Every key is optional: missing keys take the defaults of
//! the selected `experiment` profile, unknown keys are rejected with the
//! closest known key as a suggestion, and constraint violations name the
//! offending key path. A `manifest.json` written by a previous run can be
//! loaded in place of a TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{default_independent_spec, GaussianSpec, DEFAULT_P_VALUES};
use crate::error::{Error, Result};
use crate::network::{Architecture, PenaltyScope, SpectralLayers};
use crate::relevance::IMAGE_PIXELS;
use crate::spectral::SpectralMode;
use crate::train::{BatchSize, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    IndependentGaussians,
    CorrelatedGaussians,
    MnistBinary,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::IndependentGaussians => "independent-gaussians",
            ExperimentKind::CorrelatedGaussians => "correlated-gaussians",
            ExperimentKind::MnistBinary => "mnist-binary",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            ExperimentKind::IndependentGaussians,
            ExperimentKind::CorrelatedGaussians,
            ExperimentKind::MnistBinary,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    /// Independent-Gaussians class means and standard deviations.
    pub mu_class0: Vec<f64>,
    pub mu_class1: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Correlated-Gaussians pair flip probabilities.
    pub p_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist_test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist_test_labels: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn gaussian_spec(&self) -> Vec<GaussianSpec> {
        self.mu_class0
            .iter()
            .zip(&self.mu_class1)
            .zip(&self.sigma)
            .map(|((&mu_class0, &mu_class1), &sigma)| GaussianSpec {
                mu_class0,
                mu_class1,
                sigma,
            })
            .collect()
    }

    /// Test-split path: the explicit key, else the training path with `train` replaced by `t10k`.
    pub fn mnist_test_paths(&self) -> Option<(PathBuf, PathBuf)> {
        let derive = |p: &Option<PathBuf>| {
            p.as_ref().and_then(|p| {
                let name = p.file_name()?.to_str()?;
                name.contains("train")
                    .then(|| p.with_file_name(name.replacen("train", "t10k", 1)))
            })
        };
        let images = self
            .mnist_test_images
            .clone()
            .or_else(|| derive(&self.mnist_images))?;
        let labels = self
            .mnist_test_labels
            .clone()
            .or_else(|| derive(&self.mnist_labels))?;
        Some((images, labels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub hidden: Vec<usize>,
    pub spectral_layers: SpectralLayers,
    pub mode: SpectralMode,
}

/// `[training]` table: [`TrainingConfig`] minus the seed, which is derived per realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub eigenvalue_penalty: f64,
    pub penalty_scope: PenaltyScope,
    pub validation_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl TrainingSection {
    pub fn with_seed(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            eigenvalue_penalty: self.eigenvalue_penalty,
            penalty_scope: self.penalty_scope,
            validation_fraction: self.validation_fraction,
            seed,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
        }
    }
}

impl From<TrainingConfig> for TrainingSection {
    fn from(c: TrainingConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            eigenvalue_penalty: c.eigenvalue_penalty,
            penalty_scope: c.penalty_scope,
            validation_fraction: c.validation_fraction,
            adam_beta1: c.adam_beta1,
            adam_beta2: c.adam_beta2,
            adam_epsilon: c.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Feature counts for the top-k accuracy curve.
    pub top_k: Vec<usize>,
    /// Random subsets per k for the baseline.
    pub n_random: usize,
    pub mask_k: usize,
    pub histogram_bins: usize,
    pub retrain_per_k: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Realization `r` uses seed `seed + r`.
    pub seed: u64,
    pub realizations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    pub training: TrainingSection,
    pub analysis: AnalysisConfig,
}

/// Epoch count restored by `--paper-exact` for MNIST.
pub const MNIST_PAPER_EPOCHS: usize = 5000;

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let spec = default_independent_spec();
        let training = TrainingConfig::default();
        let mut cfg = Self {
            experiment: kind,
            seed: 0,
            realizations: 10,
            output_dir: None,
            dataset: DatasetConfig {
                samples_per_class: 5000,
                test_samples_per_class: 1000,
                mu_class0: spec.iter().map(|s| s.mu_class0).collect(),
                mu_class1: spec.iter().map(|s| s.mu_class1).collect(),
                sigma: spec.iter().map(|s| s.sigma).collect(),
                p_values: DEFAULT_P_VALUES.to_vec(),
                mnist_images: None,
                mnist_labels: None,
                mnist_test_images: None,
                mnist_test_labels: None,
            },
            architecture: ArchitectureConfig {
                hidden: vec![100, 100, 50],
                spectral_layers: SpectralLayers::First,
                mode: SpectralMode::Reduced,
            },
            training: training.into(),
            analysis: AnalysisConfig {
                top_k: Vec::new(),
                n_random: 20,
                mask_k: 20,
                histogram_bins: 41,
                retrain_per_k: false,
            },
        };
        match kind {
            ExperimentKind::IndependentGaussians => {
                cfg.training.eigenvalue_penalty = 1.0;
            }
            ExperimentKind::CorrelatedGaussians => {
                cfg.training.epochs = 500;
                cfg.training.eigenvalue_penalty = 0.3;
            }
            ExperimentKind::MnistBinary => {
                cfg.realizations = 1;
                cfg.training.learning_rate = 1e-4;
                cfg.training.eigenvalue_penalty = 1.0;
                cfg.training.epochs = 200;
                cfg.training.batch_size = BatchSize::Size(128);
                cfg.analysis.top_k = vec![
                    0, 1, 2, 5, 10, 15, 20, 30, 40, 50, 75, 100, 150, 200, 300, 400, 500, 600, 784,
                ];
            }
        }
        cfg
    }

    /// Input dimension implied by the experiment and dataset settings.
    pub fn input_dim(&self) -> usize {
        match self.experiment {
            ExperimentKind::IndependentGaussians => self.dataset.mu_class1.len(),
            ExperimentKind::CorrelatedGaussians => 10,
            ExperimentKind::MnistBinary => IMAGE_PIXELS,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            hidden: self.architecture.hidden.clone(),
            n_classes: 2,
            spectral: self.architecture.spectral_layers,
            mode: self.architecture.mode,
        }
    }

    pub fn realization_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    /// Switches MNIST to the long schedule.
    pub fn apply_paper_exact(&mut self) {
        if self.experiment == ExperimentKind::MnistBinary {
            self.training.epochs = MNIST_PAPER_EPOCHS;
        }
    }

    /// The config without its output directory, as recorded in manifests.
    pub fn portable(&self) -> Self {
        Self {
            output_dir: None,
            ..self.clone()
        }
    }

    /// SHA-256 of the portable config's JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.portable()).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    /// Range and consistency checks.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.realizations == 0 {
            return bad("realizations", "must be at least 1".into());
        }
        if let Some(k) = self.architecture.hidden.iter().position(|&w| w == 0) {
            return bad(
                &format!("architecture.hidden[{k}]"),
                "widths must be positive".into(),
            );
        }
        if let Err(Error::Config { key, message }) = self.training.with_seed(self.seed).validate() {
            return bad(&format!("training.{key}"), message);
        }
        let d = self.input_dim();
        let an = &self.analysis;
        if an.top_k.windows(2).any(|w| w[0] > w[1]) {
            return bad("analysis.top_k", "must be sorted ascending".into());
        }
        if let Some(&k) = an.top_k.iter().find(|&&k| k > d) {
            return bad(
                "analysis.top_k",
                format!("{k} exceeds the {d} input features"),
            );
        }
        if an.n_random == 0 {
            return bad("analysis.n_random", "must be at least 1".into());
        }
        if self.experiment == ExperimentKind::MnistBinary && an.mask_k > d {
            return bad(
                "analysis.mask_k",
                format!("{} exceeds the {d} input features", an.mask_k),
            );
        }
        if an.histogram_bins == 0 {
            return bad("analysis.histogram_bins", "must be at least 1".into());
        }
        let ds = &self.dataset;
        match self.experiment {
            ExperimentKind::IndependentGaussians | ExperimentKind::CorrelatedGaussians => {
                if ds.samples_per_class == 0 {
                    return bad("dataset.samples_per_class", "must be positive".into());
                }
                if ds.test_samples_per_class == 0 {
                    return bad("dataset.test_samples_per_class", "must be positive".into());
                }
            }
            ExperimentKind::MnistBinary => {}
        }
        match self.experiment {
            ExperimentKind::IndependentGaussians => {
                let d = ds.mu_class1.len();
                if d == 0 {
                    return bad("dataset.mu_class1", "must list at least one feature".into());
                }
                for (key, len) in [
                    ("dataset.mu_class0", ds.mu_class0.len()),
                    ("dataset.sigma", ds.sigma.len()),
                ] {
                    if len != d {
                        return bad(
                            key,
                            format!("has {len} entries but dataset.mu_class1 has {d}"),
                        );
                    }
                }
                if let Some(k) = ds.sigma.iter().position(|&s| !(s > 0.0)) {
                    return bad(&format!("dataset.sigma[{k}]"), "must be positive".into());
                }
            }
            ExperimentKind::CorrelatedGaussians => {
                if ds.p_values.len() != 4 {
                    return bad(
                        "dataset.p_values",
                        format!("needs 4 entries, got {}", ds.p_values.len()),
                    );
                }
                if let Some(k) = ds.p_values.iter().position(|p| !(0.0..=1.0).contains(p)) {
                    return bad(
                        &format!("dataset.p_values[{k}]"),
                        "must be in [0, 1]".into(),
                    );
                }
            }
            ExperimentKind::MnistBinary => {
                for (key, p) in [
                    ("dataset.mnist_images", &ds.mnist_images),
                    ("dataset.mnist_labels", &ds.mnist_labels),
                ] {
                    match p {
                        None => return bad(key, "required for mnist-binary".into()),
                        Some(p) if !p.exists() => {
                            return bad(key, format!("{} does not exist", p.display()))
                        }
                        Some(_) => {}
                    }
                }
                match ds.mnist_test_paths() {
                    None => {
                        return bad(
                            "dataset.mnist_test_images",
                            "required (or name the training files with `train` so the test files can be derived)".into(),
                        )
                    }
                    Some((i, l)) => {
                        for (key, p) in [("dataset.mnist_test_images", i), ("dataset.mnist_test_labels", l)] {
                            if !p.exists() {
                                return bad(key, format!("{} does not exist", p.display()));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn known_paths(value: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    if let toml::Value::Table(t) = value {
        for (k, v) in t {
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            known_paths(v, &path, out);
            out.push(path);
        }
    }
}

const OPTIONAL_KEYS: &[&str] = &[
    "output_dir",
    "dataset.mnist_images",
    "dataset.mnist_labels",
    "dataset.mnist_test_images",
    "dataset.mnist_test_labels",
];

fn suggestion(unknown: &str, known: &[String]) -> Option<String> {
    let leaf = |p: &str| p.rsplit('.').next().unwrap_or(p).to_string();
    let target = leaf(unknown);
    known
        .iter()
        .map(|k| (strsim::levenshtein(&leaf(k), &target), k))
        .filter(|(d, k)| *d <= 3.max(leaf(k).len() / 3))
        .min_by_key(|(d, k)| (*d, k.len()))
        .map(|(_, k)| k.clone())
}

fn check_keys(
    user: &toml::Table,
    defaults: &toml::Value,
    prefix: &str,
    known: &[String],
) -> Result<()> {
    for (k, v) in user {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let default = defaults.as_table().and_then(|t| t.get(k));
        match default {
            None if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            None => {
                let hint = suggestion(&path, known)
                    .map(|s| format!("; did you mean `{s}`?"))
                    .unwrap_or_default();
                return Err(Error::config(path, format!("unknown key{hint}")));
            }
            Some(d) => {
                if let (toml::Value::Table(ut), toml::Value::Table(_)) = (v, d) {
                    check_keys(ut, d, &path, known)?;
                } else if d.is_table() {
                    return Err(Error::config(path, "expected a table"));
                }
            }
        }
    }
    Ok(())
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses TOML text into a defaulted config without range checks.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let user: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    let kind = match user.get("experiment") {
        None => ExperimentKind::default(),
        Some(toml::Value::String(s)) => ExperimentKind::parse(s).ok_or_else(|| {
            Error::config(
                "experiment",
                format!("unknown experiment `{s}` (expected independent-gaussians, correlated-gaussians or mnist-binary)"),
            )
        })?,
        Some(_) => return Err(Error::config("experiment", "expected a string")),
    };
    let defaults =
        toml::Value::try_from(ExperimentConfig::defaults(kind)).expect("defaults serialize");
    let mut known = Vec::new();
    known_paths(&defaults, "", &mut known);
    known.extend(OPTIONAL_KEYS.iter().map(|s| s.to_string()));
    check_keys(&user, &defaults, "", &known)?;
    let mut merged = defaults.as_table().cloned().expect("defaults form a table");
    merge(&mut merged, user);
    serde_path_to_error::deserialize(toml::Value::Table(merged))
        .map_err(|e| Error::config(e.path().to_string(), e.inner().to_string()))
}

#[derive(Deserialize)]
struct ManifestConfig {
    config: ExperimentConfig,
}

/// Loads a TOML config, or the config recorded in a run manifest (`.json`).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: ManifestConfig =
            serde_json::from_str(&text).map_err(|e| Error::config("<manifest>", e.to_string()))?;
        return Ok(m.config);
    }
    parse_config(&text)
}

/// Loads, fills defaults, and range-checks a config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg = load_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}
