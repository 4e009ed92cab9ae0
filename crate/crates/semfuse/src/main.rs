//! Command-line driver. Metric tables go to stdout as TSV; training logs,
//! checkpoints, and prediction dumps go to a run directory under the root
//! named by SEMFUSE_RUN_ROOT (default `runs/`).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use semfuse::config::{FusionMode, RunConfig, TaskKind};
use semfuse::data::{load_dataset, TaskExample};
use semfuse::error::Result;
use semfuse::heads::NullThreshold;
use semfuse::srl::LabelVocab;
use semfuse::tokenizer::{encode_pair, tokenize, Vocab};
use semfuse::train;

const RUN_ROOT_VAR: &str = "SEMFUSE_RUN_ROOT";

#[derive(Parser)]
#[command(name = "semfuse", version, about = "Train and probe a toy encoder with explicit semantic-role fusion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonOpts {
    /// JSON config; missing keys fall back to desk-scale defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's fusion mode.
    #[arg(long, value_enum)]
    fusion_mode: Option<CliFusionMode>,
    /// Override the config's task kind.
    #[arg(long, value_enum)]
    task: Option<CliTaskKind>,
    /// Override the config's epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
    /// Run directory name under the run root.
    #[arg(long, default_value = "run")]
    run_name: String,
}

// snake_case so the flag accepts the same tokens as the config file
#[derive(Clone, Copy, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
enum CliFusionMode {
    Sembert,
    SubwordAblation,
    Baseline,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CliTaskKind {
    Classification,
    Regression,
    Span,
}

impl CommonOpts {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.fusion_mode {
            cfg.fusion_mode = match mode {
                CliFusionMode::Sembert => FusionMode::Sembert,
                CliFusionMode::SubwordAblation => FusionMode::SubwordAblation,
                CliFusionMode::Baseline => FusionMode::Baseline,
            };
        }
        if let Some(task) = self.task {
            cfg.task_kind = match task {
                CliTaskKind::Classification => TaskKind::Classification,
                CliTaskKind::Regression => TaskKind::Regression,
                CliTaskKind::Span => TaskKind::Span,
            };
        }
        if let Some(epochs) = self.epochs {
            cfg.epochs = epochs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn run_dir(&self) -> PathBuf {
        let root = std::env::var(RUN_ROOT_VAR).unwrap_or_else(|_| "runs".into());
        Path::new(&root).join(&self.run_name)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Segment text into subword pieces; with two texts, also print the
    /// packed pair encoding.
    Tokenize {
        #[arg(long)]
        vocab: PathBuf,
        text: String,
        text_b: Option<String>,
        /// Length cap for the packed pair encoding.
        #[arg(long, default_value_t = 48)]
        max_len: usize,
    },
    /// Check a dataset file, reporting every invalid line.
    ValidateData {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train on a dataset and keep the best-dev checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate a checkpoint; span tasks also write a prediction dump.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Threshold file from tune-threshold (span tasks).
        #[arg(long)]
        threshold: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Pick the null threshold that maximizes dev F1.
    TuneThreshold {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Retrain once per frame budget m and tabulate dev metrics.
    SweepM {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        m_values: Vec<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Retrain under label noise and tabulate dev metrics.
    SweepNoise {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4")]
        p_values: Vec<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train baseline, subword-concat, and full fusion under one budget.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn load_pair(
    data: &Path,
    dev: &Path,
    cfg: &RunConfig,
    labels: &LabelVocab,
) -> Result<(Vec<TaskExample>, Vec<TaskExample>)> {
    let tr = load_dataset(data, cfg.task_kind, labels)?;
    let dv = load_dataset(dev, cfg.task_kind, labels)?;
    for w in tr.warnings.iter().chain(&dv.warnings) {
        eprintln!("warning: {w}");
    }
    Ok((tr.examples, dv.examples))
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let labels = LabelVocab::default_roles();
    match cli.cmd {
        Cmd::Tokenize {
            vocab,
            text,
            text_b,
            max_len,
        } => {
            let vocab = Vocab::load(&vocab)?;
            let sent_a = tokenize(&text, &vocab)?;
            let sent_b = match &text_b {
                Some(t) => Some(tokenize(t, &vocab)?),
                None => None,
            };
            for sent in [Some(&sent_a), sent_b.as_ref()].into_iter().flatten() {
                for (word, &(start, len)) in sent.words.iter().zip(&sent.spans) {
                    let pieces: Vec<&str> = sent.subwords[start..start + len]
                        .iter()
                        .map(|&id| vocab.token(id))
                        .collect();
                    println!("{word}\t{}", pieces.join(" "));
                }
            }
            if sent_b.is_some() {
                let enc = encode_pair(&sent_a, sent_b.as_ref(), max_len, &vocab)?;
                let fmt = |xs: &[usize]| {
                    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
                };
                println!("ids\t{}", fmt(&enc.ids));
                println!("segments\t{}", fmt(&enc.segments));
                println!(
                    "mask\t{}",
                    enc.mask
                        .iter()
                        .map(|&b| if b { "1" } else { "0" })
                        .collect::<Vec<_>>()
                        .join(" ")
                );
            }
            Ok(())
        }
        Cmd::ValidateData { data, common } => {
            let cfg = common.config()?;
            let ds = load_dataset(&data, cfg.task_kind, &labels)?;
            for w in &ds.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}\t{}\tok", data.display(), ds.examples.len());
            Ok(())
        }
        Cmd::Train {
            data,
            dev,
            vocab,
            common,
        } => {
            let cfg = common.config()?;
            let vocab = Vocab::load(&vocab)?;
            let (tr, dv) = load_pair(&data, &dev, &cfg, &labels)?;
            let dir = common.run_dir();
            let report = train::train(&cfg, &tr, &dv, &vocab, &labels, &dir)?;
            println!("run_dir\t{}", dir.display());
            println!("epochs_run\t{}", report.epochs_run);
            println!("best_epoch\t{}", report.best_epoch);
            println!("best_dev_metric\t{:.6}", report.best_dev_metric);
            println!("final_train_metric\t{:.6}", report.final_train_metric);
            Ok(())
        }
        Cmd::Eval {
            data,
            vocab,
            checkpoint,
            threshold,
            common,
        } => {
            let cfg = common.config()?;
            let vocab = Vocab::load(&vocab)?;
            let ds = load_dataset(&data, cfg.task_kind, &labels)?;
            let tau = match threshold {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    serde_json::from_str::<NullThreshold>(&text)?
                }
                None => NullThreshold { tau: 0.0 },
            };
            let eval =
                train::eval_checkpoint(&cfg, &ds.examples, &vocab, &labels, &checkpoint, tau)?;
            println!("examples\t{}", ds.examples.len());
            println!("metric\t{:.6}", eval.metric);
            if let Some(em) = eval.em {
                println!("exact_match\t{em:.6}");
                let dir = common.run_dir();
                std::fs::create_dir_all(&dir)?;
                let dump = dir.join(train::PREDICTIONS_FILE);
                train::write_predictions(&dump, &eval.rows)?;
                println!("predictions\t{}", dump.display());
            }
            Ok(())
        }
        Cmd::TuneThreshold {
            data,
            vocab,
            checkpoint,
            common,
        } => {
            let cfg = common.config()?;
            let vocab = Vocab::load(&vocab)?;
            let ds = load_dataset(&data, cfg.task_kind, &labels)?;
            let (tau, f1) =
                train::tune_threshold_on(&cfg, &ds.examples, &vocab, &labels, &checkpoint)?;
            let dir = common.run_dir();
            std::fs::create_dir_all(&dir)?;
            let out = dir.join(train::THRESHOLD_FILE);
            std::fs::write(&out, serde_json::to_string(&tau)? + "\n")?;
            println!("tau\t{}", tau.tau);
            println!("dev_f1\t{f1:.6}");
            println!("threshold_file\t{}", out.display());
            Ok(())
        }
        Cmd::SweepM {
            data,
            dev,
            vocab,
            m_values,
            common,
        } => {
            let cfg = common.config()?;
            let vocab = Vocab::load(&vocab)?;
            let (tr, dv) = load_pair(&data, &dev, &cfg, &labels)?;
            let rows =
                train::sweep_m(&cfg, &tr, &dv, &vocab, &labels, &common.run_dir(), &m_values)?;
            println!("m\tdev_metric");
            for (m, metric) in rows {
                println!("{m}\t{metric:.6}");
            }
            Ok(())
        }
        Cmd::SweepNoise {
            data,
            dev,
            vocab,
            p_values,
            common,
        } => {
            let cfg = common.config()?;
            let vocab = Vocab::load(&vocab)?;
            let (tr, dv) = load_pair(&data, &dev, &cfg, &labels)?;
            let rows = train::sweep_noise(
                &cfg,
                &tr,
                &dv,
                &vocab,
                &labels,
                &common.run_dir(),
                &p_values,
            )?;
            println!("noise_p\tdev_metric");
            for (p, metric) in rows {
                println!("{p}\t{metric:.6}");
            }
            Ok(())
        }
        Cmd::Ablate {
            data,
            dev,
            vocab,
            common,
        } => {
            let cfg = common.config()?;
            let vocab = Vocab::load(&vocab)?;
            let (tr, dv) = load_pair(&data, &dev, &cfg, &labels)?;
            let rows = train::ablate(&cfg, &tr, &dv, &vocab, &labels, &common.run_dir())?;
            println!("fusion_mode\tdev_metric");
            for (mode, metric) in rows {
                println!("{}\t{metric:.6}", mode.name());
            }
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
