use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use specrel::checkpoint::Checkpoint;
use specrel::config::{load_config, ExperimentConfig, ExperimentKind};
use specrel::experiment::{load_datasets, run_experiment, run_realization, ExperimentData};
use specrel::relevance::{
    eigenvalue_histogram, extract_relevance, grid_csv, heatmap_pgm, topk_curve_with,
};
use specrel::train::evaluate_features;
use specrel::{Error, Result};

#[derive(Parser)]
#[command(
    name = "specrel",
    version,
    about = "Feature relevance from spectrally parametrized networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file and print it with all defaults filled in.
    Validate(CommonArgs),
    /// Write the training and test datasets as CSV.
    GenData(CommonArgs),
    /// Train one network and save its checkpoint, history and relevance report.
    Train(CommonArgs),
    /// Relevance report and eigenvalue histogram of a saved checkpoint.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 41)]
        bins: usize,
    },
    /// Top-k accuracy curve of a saved checkpoint on the config's test set.
    Curve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Full experiment: all realizations, aggregation and artifacts.
    Run(CommonArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    IndependentGaussians,
    CorrelatedGaussians,
    MnistBinary,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment profile to use when no config file is given.
    #[arg(long, value_enum, conflicts_with = "config")]
    experiment: Option<Kind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// MNIST only: train for the long 5000-epoch schedule.
    #[arg(long)]
    paper_exact: bool,
    /// Retrain a fresh network for every point of the top-k curve.
    #[arg(long)]
    retrain_per_k: bool,
    #[arg(long)]
    mnist_images: Option<PathBuf>,
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
    #[arg(long)]
    mnist_test_images: Option<PathBuf>,
    #[arg(long)]
    mnist_test_labels: Option<PathBuf>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.experiment) {
            (Some(path), _) => load_config(path)?,
            (None, kind) => ExperimentConfig::defaults(match kind {
                None | Some(Kind::IndependentGaussians) => ExperimentKind::IndependentGaussians,
                Some(Kind::CorrelatedGaussians) => ExperimentKind::CorrelatedGaussians,
                Some(Kind::MnistBinary) => ExperimentKind::MnistBinary,
            }),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.realizations {
            cfg.realizations = r;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        if self.paper_exact {
            cfg.apply_paper_exact();
        }
        if self.retrain_per_k {
            cfg.analysis.retrain_per_k = true;
        }
        let ds = &mut cfg.dataset;
        for (flag, slot) in [
            (&self.mnist_images, &mut ds.mnist_images),
            (&self.mnist_labels, &mut ds.mnist_labels),
            (&self.mnist_test_images, &mut ds.mnist_test_images),
            (&self.mnist_test_labels, &mut ds.mnist_test_labels),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn datasets(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    load_datasets(cfg, cfg.seed)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(args) => {
            let cfg = args.resolve()?;
            print!("{}", cfg.to_toml());
        }
        Command::GenData(args) => {
            let cfg = args.resolve()?;
            let dir = out_dir(&cfg);
            let data = datasets(&cfg)?;
            write(&dir.join("train.csv"), data.train.to_csv())?;
            write(&dir.join("test.csv"), data.test.to_csv())?;
            if let Some(gt) = &data.train.ground_truth_relevance {
                write_json(&dir.join("ground_truth.json"), gt)?;
            }
            println!(
                "wrote {} training and {} test rows to {}",
                data.train.len(),
                data.test.len(),
                dir.display()
            );
        }
        Command::Train(args) => {
            let mut cfg = args.resolve()?;
            cfg.analysis.top_k.clear();
            let dir = out_dir(&cfg);
            let data = datasets(&cfg)?;
            let real = run_realization(&cfg, &data, 0)?;
            Checkpoint::new(real.network.clone(), cfg.training.with_seed(real.seed))
                .save(&dir.join("checkpoint.json"))?;
            write(&dir.join("history.csv"), real.history.to_csv())?;
            write_json(&dir.join("relevance_report.json"), &real.report)?;
            println!("test accuracy {:.4}", real.test_accuracy);
            println!(
                "top features {:?}",
                &real.report.ranking[..real.report.ranking.len().min(10)]
            );
        }
        Command::Analyze {
            checkpoint,
            out,
            bins,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let report = extract_relevance(&ckpt.network)?;
            let hist = eigenvalue_histogram(&report, bins)
                .map_err(|e| Error::config("bins", e.to_string()))?;
            write_json(&out.join("relevance_report.json"), &report)?;
            write(&out.join("histogram.csv"), hist.to_csv())?;
            if let Some(h) = &hist.heatmap {
                write(&out.join("heatmap.csv"), grid_csv(h))?;
                write(&out.join("heatmap.pgm"), heatmap_pgm(h))?;
            }
            println!(
                "top features {:?}",
                &report.ranking[..report.ranking.len().min(10)]
            );
        }
        Command::Curve { common, checkpoint } => {
            let cfg = common.resolve()?;
            let dir = out_dir(&cfg);
            let ckpt = Checkpoint::load(&checkpoint)?;
            let report = extract_relevance(&ckpt.network)?;
            let data = datasets(&cfg)?;
            let mut ks = cfg.analysis.top_k.clone();
            if ks.is_empty() {
                ks = (0..=report.n_features()).collect();
            }
            let curve = if cfg.analysis.retrain_per_k {
                let arch = cfg.architecture();
                let training = ckpt.training.clone();
                topk_curve_with(
                    &report.ranking,
                    &ks,
                    cfg.analysis.n_random,
                    ckpt.seed,
                    |keep| {
                        let masked = specrel::data::LabeledDataset::new(
                            &data.train.name,
                            data.train.masked_features(keep),
                            data.train.labels.clone(),
                            None,
                        )?;
                        let net = specrel::train::init_network(&arch, training.seed)?;
                        let (net, _) = specrel::train::train(net, &masked, &training)?;
                        evaluate_features(
                            &net,
                            data.test.masked_features(keep).view(),
                            &data.test.labels,
                        )
                    },
                )?
            } else {
                topk_curve_with(
                    &report.ranking,
                    &ks,
                    cfg.analysis.n_random,
                    ckpt.seed,
                    |keep| {
                        evaluate_features(
                            &ckpt.network,
                            data.test.masked_features(keep).view(),
                            &data.test.labels,
                        )
                    },
                )?
            };
            write(&dir.join("topk_curve.csv"), curve.to_csv())?;
            print!("{}", curve.to_csv());
        }
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let dir = out_dir(&cfg);
            let outcome = run_experiment(&cfg, &dir)?;
            let s = &outcome.summary;
            println!(
                "{} realizations, mean test accuracy {:.4}",
                s.seeds.len(),
                s.mean_test_accuracy
            );
            if let Some(rho) = s.spearman_relevant {
                println!("spearman (relevant features) {rho:.4}");
            }
            if let Some(f) = s.max_irrelevant_fraction() {
                println!("largest irrelevant feature, share of max |λ̃|: {f:.4}");
            }
            for p in &s.pairs {
                println!(
                    "pair {} (p = {}): mean {:.4}, relative difference {:.4}",
                    p.pair, p.p, p.mean, p.relative_difference
                );
            }
            if let Some(m) = &s.mnist {
                println!(
                    "top-{} accuracy {:.4}, random-{} accuracy {:.4} ± {:.4}",
                    m.mask_k, m.top_k_accuracy, m.mask_k, m.random_k_mean, m.random_k_std
                );
                println!(
                    "features with |normalized λ̃| < 0.05: {:.1}%",
                    100.0 * m.fraction_near_zero
                );
            }
            println!("artifacts in {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
