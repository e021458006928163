//! End-to-end experiment runs: data, R training realizations, relevance
//! analysis, and artifacts on disk.
//!
//! Every artifact is a pure function of the config. Wall-clock timings go to
//! `timings.json`, which is not listed in the manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::data::{
    gen_correlated_gaussians, gen_independent_gaussians, load_mnist_binary, LabeledDataset,
};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::relevance::{
    aggregate_realizations, eigenvalue_histogram, extract_relevance, grid_csv, heatmap_pgm,
    pixel_mask, relevance_vs_ground_truth, spearman, topk_curve_with, Provenance, RelevanceReport,
    TopKCurve, IMAGE_PIXELS,
};
use crate::train::{evaluate, evaluate_features, init_network, train, TrainingHistory};

/// Offset added to a realization seed to draw its synthetic test set.
pub const TEST_SEED_OFFSET: u64 = 1 << 32;

/// MNIST digits kept for the binary task, in class order.
pub const MNIST_DIGITS: [u8; 2] = [0, 1];

pub const MANIFEST_VERSION: u32 = 1;

pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Training and test data for one realization seed.
pub fn load_datasets(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentData> {
    let ds = &cfg.dataset;
    let (train, test) = match cfg.experiment {
        ExperimentKind::IndependentGaussians => {
            let spec = ds.gaussian_spec();
            (
                gen_independent_gaussians(&spec, ds.samples_per_class, seed)?,
                gen_independent_gaussians(
                    &spec,
                    ds.test_samples_per_class,
                    seed.wrapping_add(TEST_SEED_OFFSET),
                )?,
            )
        }
        ExperimentKind::CorrelatedGaussians => (
            gen_correlated_gaussians(&ds.p_values, ds.samples_per_class, seed)?,
            gen_correlated_gaussians(
                &ds.p_values,
                ds.test_samples_per_class,
                seed.wrapping_add(TEST_SEED_OFFSET),
            )?,
        ),
        ExperimentKind::MnistBinary => {
            let missing = |key: &str| Error::config(key, "required for mnist-binary");
            let images = ds
                .mnist_images
                .as_ref()
                .ok_or_else(|| missing("dataset.mnist_images"))?;
            let labels = ds
                .mnist_labels
                .as_ref()
                .ok_or_else(|| missing("dataset.mnist_labels"))?;
            let (test_images, test_labels) = ds
                .mnist_test_paths()
                .ok_or_else(|| missing("dataset.mnist_test_images"))?;
            (
                load_mnist_binary(images, labels, &MNIST_DIGITS)?,
                load_mnist_binary(&test_images, &test_labels, &MNIST_DIGITS)?,
            )
        }
    };
    Ok(ExperimentData { train, test })
}

/// One trained network and its analysis.
#[derive(Debug, Clone)]
pub struct Realization {
    pub index: usize,
    pub seed: u64,
    pub network: Network,
    pub history: TrainingHistory,
    pub report: RelevanceReport,
    pub test_accuracy: f64,
    pub curve: Option<TopKCurve>,
    pub seconds: f64,
}

/// Trains and analyzes realization `r`.
pub fn run_realization(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    r: usize,
) -> Result<Realization> {
    let start = Instant::now();
    let seed = cfg.realization_seed(r);
    let training = cfg.training.with_seed(seed);
    let arch = cfg.architecture();
    let (network, history) = train(init_network(&arch, seed)?, &data.train, &training)?;
    let mut report = extract_relevance(&network)?;
    report.ground_truth = data.train.ground_truth_relevance.clone();
    report.provenance = Some(Provenance {
        seeds: vec![seed],
        config_hash: cfg.hash(),
    });
    let test_accuracy = evaluate(&network, &data.test)?;
    let curve = curve_k_values(cfg)
        .map(|ks| {
            if cfg.analysis.retrain_per_k {
                retrained_curve(cfg, data, &report, &ks, seed)
            } else {
                topk_curve_with(&report.ranking, &ks, cfg.analysis.n_random, seed, |keep| {
                    evaluate_features(
                        &network,
                        data.test.masked_features(keep).view(),
                        &data.test.labels,
                    )
                })
            }
        })
        .transpose()?;
    Ok(Realization {
        index: r,
        seed,
        network,
        history,
        report,
        test_accuracy,
        curve,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// The configured k values (plus the mask size for images), or `None` when no curve is requested.
fn curve_k_values(cfg: &ExperimentConfig) -> Option<Vec<usize>> {
    if cfg.analysis.top_k.is_empty() {
        return None;
    }
    let mut ks: BTreeSet<usize> = cfg.analysis.top_k.iter().copied().collect();
    if cfg.experiment == ExperimentKind::MnistBinary {
        ks.insert(cfg.analysis.mask_k);
    }
    Some(ks.into_iter().collect())
}

/// Curve where every point trains a fresh network on the kept features only.
fn retrained_curve(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    report: &RelevanceReport,
    ks: &[usize],
    seed: u64,
) -> Result<TopKCurve> {
    let training = cfg.training.with_seed(seed);
    let arch = cfg.architecture();
    topk_curve_with(&report.ranking, ks, cfg.analysis.n_random, seed, |keep| {
        let masked = LabeledDataset::new(
            &data.train.name,
            data.train.masked_features(keep),
            data.train.labels.clone(),
            None,
        )?;
        let (net, _) = train(init_network(&arch, seed)?, &masked, &training)?;
        evaluate_features(
            &net,
            data.test.masked_features(keep).view(),
            &data.test.labels,
        )
    })
}

/// Pointwise mean of realization curves; baseline spreads are averaged.
pub fn mean_curve(curves: &[TopKCurve]) -> Option<TopKCurve> {
    let first = curves.first()?;
    let n = curves.len() as f64;
    let avg = |get: fn(&TopKCurve) -> &Vec<f64>| -> Vec<f64> {
        (0..first.k_values.len())
            .map(|i| curves.iter().map(|c| get(c)[i]).sum::<f64>() / n)
            .collect()
    };
    Some(TopKCurve {
        k_values: first.k_values.clone(),
        spectral_accuracy: avg(|c| &c.spectral_accuracy),
        random_baseline_mean: avg(|c| &c.random_baseline_mean),
        random_baseline_std: avg(|c| &c.random_baseline_std),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: usize,
    pub ground_truth: f64,
    pub mean_abs: f64,
    pub std_abs: f64,
    /// `mean_abs` divided by the largest `mean_abs`.
    pub fraction_of_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: usize,
    pub p: f64,
    pub first: f64,
    pub second: f64,
    pub mean: f64,
    /// `|first − second| / max(first, second)`.
    pub relative_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistSummary {
    pub test_accuracy: f64,
    pub mask_k: usize,
    pub top_k_accuracy: f64,
    pub random_k_mean: f64,
    pub random_k_std: f64,
    pub histogram_bins: usize,
    pub modal_bin_lo: f64,
    pub modal_bin_hi: f64,
    pub modal_bin_contains_zero: bool,
    /// Share of features with `|normalized score| < 0.05`.
    pub fraction_near_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub test_accuracy: Vec<f64>,
    pub mean_test_accuracy: f64,
    pub features: Vec<FeatureSummary>,
    /// Rank correlation of mean `|λ̃|` with ground truth over all features.
    pub spearman_all: Option<f64>,
    /// The same over features with nonzero ground truth.
    pub spearman_relevant: Option<f64>,
    pub pairs: Vec<PairSummary>,
    pub mnist: Option<MnistSummary>,
}

impl ExperimentSummary {
    /// Largest `fraction_of_max` among features with zero ground truth.
    pub fn max_irrelevant_fraction(&self) -> Option<f64> {
        self.features
            .iter()
            .filter(|f| f.ground_truth == 0.0)
            .map(|f| f.fraction_of_max)
            .reduce(f64::max)
    }
}

/// Everything a run produced, plus the artifact paths relative to the output directory.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub realizations: Vec<Realization>,
    pub aggregate: RelevanceReport,
    pub curve: Option<TopKCurve>,
    pub summary: ExperimentSummary,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<String>,
    /// Wall-clock timings, kept out of the manifest so reruns stay byte-identical.
    pub timings_file: String,
}

#[derive(Serialize)]
struct Timings {
    realization_seconds: Vec<f64>,
    total_seconds: f64,
}

struct Artifacts {
    root: PathBuf,
    written: BTreeSet<String>,
}

impl Artifacts {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .map_err(|e| Error::io(format!("creating {}", root.display()), e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: BTreeSet::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
        fs::write(&path, contents)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        self.written.insert(rel.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }
}

fn summarize(
    cfg: &ExperimentConfig,
    realizations: &[Realization],
    aggregate: &RelevanceReport,
    curve: Option<&TopKCurve>,
) -> Result<ExperimentSummary> {
    let test_accuracy: Vec<f64> = realizations.iter().map(|r| r.test_accuracy).collect();
    let mean_abs = aggregate.magnitudes();
    let std_abs = aggregate
        .realization_stats
        .as_ref()
        .map(|s| s.std_abs.clone())
        .unwrap_or_else(|| vec![0.0; mean_abs.len()]);
    let max = mean_abs.iter().copied().fold(0.0, f64::max);
    let mut summary = ExperimentSummary {
        experiment: cfg.experiment,
        seeds: realizations.iter().map(|r| r.seed).collect(),
        mean_test_accuracy: test_accuracy.iter().sum::<f64>() / test_accuracy.len() as f64,
        test_accuracy,
        features: Vec::new(),
        spearman_all: None,
        spearman_relevant: None,
        pairs: Vec::new(),
        mnist: None,
    };
    if let Some(gt) = &aggregate.ground_truth {
        summary.features = (0..mean_abs.len())
            .map(|f| FeatureSummary {
                feature: f,
                ground_truth: gt[f],
                mean_abs: mean_abs[f],
                std_abs: std_abs[f],
                fraction_of_max: if max > 0.0 { mean_abs[f] / max } else { 0.0 },
            })
            .collect();
        summary.spearman_all = spearman(&mean_abs, gt);
        let (m, g): (Vec<f64>, Vec<f64>) = mean_abs
            .iter()
            .zip(gt)
            .filter(|(_, &g)| g > 0.0)
            .map(|(&m, &g)| (m, g))
            .unzip();
        summary.spearman_relevant = if m.len() >= 2 { spearman(&m, &g) } else { None };
    }
    if cfg.experiment == ExperimentKind::CorrelatedGaussians {
        summary.pairs = cfg
            .dataset
            .p_values
            .iter()
            .enumerate()
            .map(|(n, &p)| {
                let (a, b) = (mean_abs[2 * n], mean_abs[2 * n + 1]);
                let hi = a.max(b);
                PairSummary {
                    pair: n,
                    p,
                    first: a,
                    second: b,
                    mean: (a + b) / 2.0,
                    relative_difference: if hi > 0.0 { (a - b).abs() / hi } else { 0.0 },
                }
            })
            .collect();
    }
    if cfg.experiment == ExperimentKind::MnistBinary {
        let hist = eigenvalue_histogram(
            histogram_source(realizations, aggregate),
            cfg.analysis.histogram_bins,
        )?;
        let modal = hist.modal_bin();
        let (lo, hi) = (hist.bin_edges[modal], hist.bin_edges[modal + 1]);
        let near = hist
            .normalized_scores
            .iter()
            .filter(|s| s.abs() < 0.05)
            .count();
        let k = cfg.analysis.mask_k;
        let (top, (rmean, rstd)) = curve
            .and_then(|c| Some((c.spectral_at(k)?, c.random_at(k)?)))
            .unwrap_or((f64::NAN, (f64::NAN, f64::NAN)));
        summary.mnist = Some(MnistSummary {
            test_accuracy: summary.mean_test_accuracy,
            mask_k: k,
            top_k_accuracy: top,
            random_k_mean: rmean,
            random_k_std: rstd,
            histogram_bins: cfg.analysis.histogram_bins,
            modal_bin_lo: lo,
            modal_bin_hi: hi,
            modal_bin_contains_zero: lo <= 0.0 && 0.0 <= hi,
            fraction_near_zero: near as f64 / hist.normalized_scores.len() as f64,
        });
    }
    Ok(summary)
}

/// Signed scores for a single realization, mean magnitudes otherwise.
fn histogram_source<'a>(
    realizations: &'a [Realization],
    aggregate: &'a RelevanceReport,
) -> &'a RelevanceReport {
    match realizations {
        [only] => &only.report,
        _ => aggregate,
    }
}

/// Runs every realization and writes all artifacts under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let shared = match cfg.experiment {
        ExperimentKind::MnistBinary => Some(load_datasets(cfg, cfg.seed)?),
        _ => None,
    };
    let mut artifacts = Artifacts::new(out_dir)?;
    let mut realizations = Vec::with_capacity(cfg.realizations);
    for r in 0..cfg.realizations {
        let wrap = |e: Error| Error::Realization {
            index: r,
            source: Box::new(e),
        };
        let owned;
        let data = match &shared {
            Some(d) => d,
            None => {
                owned = load_datasets(cfg, cfg.realization_seed(r)).map_err(wrap)?;
                &owned
            }
        };
        let real = run_realization(cfg, data, r).map_err(wrap)?;
        let dir = format!("realizations/r{r:03}");
        artifacts.write_json(&format!("{dir}/relevance_report.json"), &real.report)?;
        artifacts.write(&format!("{dir}/history.csv"), real.history.to_csv())?;
        artifacts.write_json(
            &format!("{dir}/checkpoint.json"),
            &Checkpoint::new(real.network.clone(), cfg.training.with_seed(real.seed)),
        )?;
        if let Some(c) = &real.curve {
            artifacts.write(&format!("{dir}/topk_curve.csv"), c.to_csv())?;
        }
        realizations.push(real);
    }

    let reports: Vec<RelevanceReport> = realizations.iter().map(|r| r.report.clone()).collect();
    let aggregate = aggregate_realizations(&reports)?;
    let curves: Vec<TopKCurve> = realizations
        .iter()
        .filter_map(|r| r.curve.clone())
        .collect();
    let curve = mean_curve(&curves);
    let summary = summarize(cfg, &realizations, &aggregate, curve.as_ref())?;

    artifacts.write_json("relevance_report.json", &aggregate)?;
    artifacts.write_json("summary.json", &summary)?;
    if let Some(gt) = &aggregate.ground_truth {
        artifacts.write(
            "scatter.csv",
            relevance_vs_ground_truth(&aggregate, gt)?.to_csv(),
        )?;
    }
    if !summary.pairs.is_empty() {
        let mut csv = String::from("pair,p,first,second,mean,relative_difference\n");
        for p in &summary.pairs {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.pair, p.p, p.first, p.second, p.mean, p.relative_difference
            ));
        }
        artifacts.write("pair_symmetry.csv", csv)?;
    }
    if let Some(c) = &curve {
        artifacts.write("topk_curve.csv", c.to_csv())?;
    }
    if aggregate.n_features() == IMAGE_PIXELS {
        let k = cfg.analysis.mask_k;
        let mask = pixel_mask(&aggregate, k)?;
        artifacts.write(&format!("mask_k{k}.csv"), mask.to_csv())?;
        artifacts.write(&format!("mask_k{k}.pgm"), mask.to_pgm())?;
        let hist = eigenvalue_histogram(
            histogram_source(&realizations, &aggregate),
            cfg.analysis.histogram_bins,
        )?;
        artifacts.write("histogram.csv", hist.to_csv())?;
        if let Some(h) = &hist.heatmap {
            artifacts.write("heatmap.csv", grid_csv(h))?;
            artifacts.write("heatmap.pgm", heatmap_pgm(h))?;
        }
    }

    let mut listed: Vec<String> = artifacts.written.iter().cloned().collect();
    listed.push("manifest.json".into());
    listed.sort();
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.portable(),
        config_hash: cfg.hash(),
        seeds: summary.seeds.clone(),
        artifacts: listed.clone(),
        timings_file: TIMINGS_FILE.into(),
    };
    artifacts.write_json("manifest.json", &manifest)?;
    artifacts.write_json(
        TIMINGS_FILE,
        &Timings {
            realization_seconds: realizations.iter().map(|r| r.seconds).collect(),
            total_seconds: start.elapsed().as_secs_f64(),
        },
    )?;

    Ok(ExperimentOutcome {
        realizations,
        aggregate,
        curve,
        summary,
        artifacts: listed,
    })
}
