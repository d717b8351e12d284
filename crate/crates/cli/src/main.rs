use std::path::PathBuf;
use std::process::ExitCode;

use affectlens_cli::config::{Overrides, RunConfig};
use affectlens_cli::{exit_code, run_stages, Stage};
use affectlens_core::corpus::{generate, write_corpus, CorpusConfig};
use affectlens_core::features::Window;
use affectlens_core::learners::ClassifierKind;
use affectlens_core::ChannelKind;
use clap::{Args, Parser, Subcommand};

/// Visual-channel decomposition and affect recognition for video advertisements.
#[derive(Parser)]
#[command(name = "affectlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// TOML file; its values take precedence over flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated channel slugs.
    #[arg(long, global = true, value_delimiter = ',')]
    channels: Option<Vec<ChannelKind>>,
    /// Comma-separated classifiers: lda, linear_svm, rbf_svm.
    #[arg(long, global = true, value_delimiter = ',')]
    classifiers: Option<Vec<ClassifierKind>>,
    /// Comma-separated temporal windows: all, l30, l10.
    #[arg(long = "window", global = true, value_delimiter = ',')]
    windows: Option<Vec<Window>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output; repeat for trace level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic planted-signal dataset with a manifest.
    Corpus {
        dir: PathBuf,
        #[arg(long, default_value_t = 30)]
        videos: usize,
        #[arg(long, default_value_t = 7)]
        corpus_seed: u64,
    },
    /// Synthesise the frame- and detection-driven image channels.
    Synth,
    /// Segment gaze, build heatmaps, gaze-driven channels and gaze histograms.
    Gaze,
    /// Compute descriptor vectors for every channel.
    Features,
    /// Run the cross-validation protocol.
    Eval,
    /// Rater agreement and rating statistics.
    Stats,
    /// Render report.md.
    Report,
    /// Every stage in order.
    Run,
    /// Print the resolved configuration as TOML.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = cli.global;
    let level = match (g.quiet, g.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).init();
    let flags = Overrides {
        manifest: g.manifest,
        out: g.out,
        channels: g.channels,
        classifiers: g.classifiers,
        windows: g.windows,
        seed: g.seed,
        workers: g.workers,
    };
    let stages: Vec<Stage> = match cli.command {
        Command::Corpus {
            dir,
            videos,
            corpus_seed,
        } => {
            let cfg = CorpusConfig {
                n_videos: videos,
                seed: corpus_seed,
                ..CorpusConfig::default()
            };
            return match write_corpus(&generate(&cfg), &dir) {
                Ok(path) => {
                    println!("{}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
        Command::Synth => vec![Stage::Synth],
        Command::Gaze => vec![Stage::Gaze],
        Command::Features => vec![Stage::Features],
        Command::Eval => vec![Stage::Eval],
        Command::Stats => vec![Stage::Stats],
        Command::Report => vec![Stage::Report],
        Command::Run => Stage::ALL.to_vec(),
        Command::Config => {
            return match RunConfig::resolve(flags, g.config.as_deref()) {
                Ok(cfg) => {
                    print!("{}", cfg.to_toml());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            };
        }
    };
    let result = RunConfig::resolve(flags, g.config.as_deref()).and_then(|cfg| run_stages(cfg, &stages));
    match &result {
        Ok(reports) => {
            for r in reports {
                for s in &r.skipped {
                    eprintln!("skipped: {}: {s}", r.stage);
                }
            }
        }
        Err(e) => eprintln!("error: {e:#}"),
    }
    ExitCode::from(exit_code(&result))
}
