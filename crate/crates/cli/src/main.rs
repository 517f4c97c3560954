//! `vgslab`: one binary orchestrating the full pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vgslab_core::Error;

#[derive(Parser)]
#[command(
    name = "vgslab",
    version,
    about = "Dual-encoder speech/image embedding lab: training, word recognition, gating, and mixed-effects analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic desk-scale dataset (manifest, features, images,
    /// alignment, lexicon, relevance, default model specs).
    Toy {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
        /// Tokens per class.
        #[arg(long)]
        tokens: Option<usize>,
        #[arg(long)]
        image_dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        feature_noise: Option<f64>,
        #[arg(long)]
        image_noise: Option<f64>,
        #[arg(long)]
        speakers: Option<usize>,
        /// Corrupt every n-th training token per class (0 disables).
        #[arg(long)]
        corrupt_every: Option<usize>,
        /// Key-value config file (flags take precedence).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Extract 39-dim MFCC features for manifest captions (or one WAV).
    Features {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Where to write the updated manifest (manifest mode).
        #[arg(long)]
        out_manifest: Option<PathBuf>,
        /// Directory for the .feat files (manifest mode).
        #[arg(long)]
        features_dir: Option<PathBuf>,
        /// Single-file mode: input WAV.
        #[arg(long)]
        wav: Option<PathBuf>,
        /// Single-file mode: output .feat path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Single-file mode: also dump the features as CSV for inspection.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the dual encoder with the batch hinge loss; keeps the
    /// checkpoint with the best validation Recall@1.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Architecture profile: desk or paper.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-epoch metrics CSV (epoch,loss,recall_at_1,...).
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Embed manifest images or captions into an embedding store.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// What to embed: images or captions.
        #[arg(long)]
        what: String,
        /// Split filter: train, val, test or all.
        #[arg(long, default_value = "all")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank a store against a query store; optionally score Precision@10
    /// against a relevance map (query ids are then treated as words).
    Retrieve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Rankings CSV output.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        relevance: Option<PathBuf>,
        /// P@10 report CSV (required with --relevance).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Experiment 1: embed isolated word tokens and score P@10.
    Words {
        #[arg(long)]
        ckpt: PathBuf,
        /// Alignment CSV of word tokens.
        #[arg(long)]
        tokens: PathBuf,
        /// Directory of per-token .feat files.
        #[arg(long)]
        features: PathBuf,
        /// Image embedding store.
        #[arg(long)]
        store: PathBuf,
        /// Relevance JSON; derived from store metadata when omitted.
        #[arg(long)]
        relevance: Option<PathBuf>,
        /// Per-token results CSV.
        #[arg(long)]
        out: PathBuf,
        /// Per-word summary CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Histogram CSV over per-word average P@10.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Experiment 2: gating; P@10 for every phoneme prefix of every token.
    Gate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        relevance: Option<PathBuf>,
        /// Per-(token, prefix) results CSV.
        #[arg(long)]
        out: PathBuf,
        /// Word-by-decile heatmap CSV.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Assemble the analysis table joining results with covariates.
    StatsTable {
        /// 1 = word recognition, 2 = gating.
        #[arg(long)]
        experiment: u32,
        /// words/gate results CSV.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Phone class table (built-in ARPAbet classes when omitted).
        #[arg(long)]
        phone_classes: Option<PathBuf>,
        /// Count only competitors in cohort sizes (exclude the target).
        #[arg(long)]
        cohort_excludes_target: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the mixed-effects model described by a model spec JSON.
    Regress {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Fit CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Human-readable fit report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Merge pipeline outputs into one summary document. Missing optional
    /// sections are marked "not run".
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train_metrics: Option<PathBuf>,
        #[arg(long)]
        words_summary: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long)]
        heatmap: Option<PathBuf>,
        #[arg(long)]
        fit1: Option<PathBuf>,
        #[arg(long)]
        fit2: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> vgslab_core::Result<()> {
    match cli.command {
        Command::Toy {
            out,
            classes,
            tokens,
            image_dim,
            seed,
            feature_noise,
            image_noise,
            speakers,
            corrupt_every,
            config,
        } => commands::cmd_toy(
            &out,
            classes,
            tokens,
            image_dim,
            seed,
            feature_noise,
            image_noise,
            speakers,
            corrupt_every,
            config.as_deref(),
        ),
        Command::Features {
            manifest,
            out_manifest,
            features_dir,
            wav,
            out,
            csv,
            config,
        } => commands::cmd_features(
            manifest.as_deref(),
            out_manifest.as_deref(),
            features_dir.as_deref(),
            wav.as_deref(),
            out.as_deref(),
            csv.as_deref(),
            config.as_deref(),
        ),
        Command::Train {
            manifest,
            out,
            profile,
            margin,
            epochs,
            batch_size,
            lr,
            seed,
            metrics,
            config,
        } => commands::cmd_train(
            &manifest,
            &out,
            profile,
            margin,
            epochs,
            batch_size,
            lr,
            seed,
            metrics.as_deref(),
            config.as_deref(),
        ),
        Command::Embed {
            ckpt,
            manifest,
            what,
            split,
            out,
        } => commands::cmd_embed(&ckpt, &manifest, &what, &split, &out),
        Command::Retrieve {
            store,
            query,
            k,
            out,
            relevance,
            report,
        } => commands::cmd_retrieve(
            &store,
            &query,
            k,
            &out,
            relevance.as_deref(),
            report.as_deref(),
        ),
        Command::Words {
            ckpt,
            tokens,
            features,
            store,
            relevance,
            out,
            summary,
            histogram,
        } => commands::cmd_words(
            &ckpt,
            &tokens,
            &features,
            &store,
            relevance.as_deref(),
            &out,
            summary.as_deref(),
            histogram.as_deref(),
        ),
        Command::Gate {
            ckpt,
            tokens,
            features,
            store,
            relevance,
            out,
            heatmap,
        } => commands::cmd_gate(
            &ckpt,
            &tokens,
            &features,
            &store,
            relevance.as_deref(),
            &out,
            heatmap.as_deref(),
        ),
        Command::StatsTable {
            experiment,
            results,
            tokens,
            features,
            lexicon,
            phone_classes,
            cohort_excludes_target,
            out,
        } => commands::cmd_stats_table(
            experiment,
            &results,
            &tokens,
            &features,
            &lexicon,
            phone_classes.as_deref(),
            cohort_excludes_target,
            &out,
        ),
        Command::Regress {
            table,
            spec,
            out,
            report,
        } => commands::cmd_regress(&table, &spec, &out, report.as_deref()),
        Command::Report {
            out,
            train_metrics,
            words_summary,
            histogram,
            heatmap,
            fit1,
            fit2,
        } => commands::cmd_report(
            &commands::ReportInputs {
                train_metrics,
                words_summary,
                histogram,
                heatmap,
                fit1,
                fit2,
            },
            &out,
        ),
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        // Bad flag combinations and config mistakes are usage errors.
        Error::Contract(msg) if msg.starts_with("config") => 1,
        // Numeric failures: NaN losses, non-convergence, rank deficiency.
        Error::Numeric(_) => 3,
        // Everything else is a data problem.
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
