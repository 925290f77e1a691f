use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use clockflow_cli::commands::{
    cmd_extract, cmd_score_words, cmd_segment, cmd_train, cmd_trends, SegmentOptions,
};
use clockflow_cli::config::PipelineConfig;

#[derive(Parser)]
#[command(name = "clockflow", about = "Literary time-of-day analysis pipeline")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "clockflow.toml")]
    config: PathBuf,
    /// Override the config's random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 or unset means one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the corpus and dump sentences, time expressions, and hour counts.
    Extract,
    /// Train the AM/PM and hour models and write the evaluation report.
    Train,
    /// Infer per-window hour tracks for whole books.
    Segment {
        /// Restrict to these book ids (repeatable); default is every book.
        #[arg(long = "book")]
        books: Vec<String>,
        #[arg(long)]
        window_sentences: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
        /// Explicit segment count, overriding the ratio.
        #[arg(long)]
        k: Option<usize>,
        /// Hour model file; defaults to the trained artifact.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Import per-window hour scores instead of applying the model.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Aggregate hour tracks into author-birth-year cohorts.
    Trends,
    /// Rank hours by word association strength.
    ScoreWords {
        /// Words to score (repeatable); default is the whole vocabulary.
        #[arg(long = "word")]
        words: Vec<String>,
        /// Hours to report per word.
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()?;
        }
    }
    let mut config = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Extract => cmd_extract(&config),
        Command::Train => cmd_train(&config),
        Command::Segment {
            books,
            window_sentences,
            ratio,
            k,
            model,
            scores,
        } => cmd_segment(
            &config,
            &SegmentOptions {
                books,
                window_sentences,
                ratio,
                k,
                model_path: model,
                scores_path: scores,
            },
        ),
        Command::Trends => cmd_trends(&config),
        Command::ScoreWords { words, top } => cmd_score_words(&config, &words, top),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error\t{err:#}");
        std::process::exit(1);
    }
}
