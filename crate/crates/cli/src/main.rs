mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsd_stream::{CorpusFormat, CountingMode};

use config::{RunConfig, Scope, VectorChoice, WindowSetting};
use error::{AppError, AppResult};

/// Streaming first story detection and its evaluation harness.
#[derive(Debug, Parser)]
#[command(name = "fsd-stream", version)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Tweet corpus (JSONL or TSV).
    #[arg(long, global = true, value_name = "PATH")]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_format)]
    corpus_format: Option<CorpusFormat>,
    /// Tweets to cluster and evaluate.
    #[arg(long, global = true, value_enum)]
    scope: Option<Scope>,
    /// Tweet collection used for all-tweets document frequencies.
    #[arg(long, global = true, value_name = "PATH")]
    background: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    vectors: Option<VectorChoice>,
    /// Saved vocabulary for the idf sources.
    #[arg(long, global = true, value_name = "PATH")]
    vocabulary: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    word_vectors: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    tweet_vectors: Option<PathBuf>,
    #[arg(long, global = true)]
    df_min: Option<u64>,
    /// Built-in list (en, fr), a file, or "none".
    #[arg(long, global = true)]
    stopwords: Option<String>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Window size in tweets, or "one-day".
    #[arg(long, global = true, value_parser = parse_window)]
    window: Option<WindowSetting>,
    /// Tweets per mini-batch [default: 8].
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Single seed for classification runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count document frequencies and write a vocabulary file.
    BuildVocab {
        /// Counting mode; follows --vectors when omitted.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<CountingMode>,
    },
    /// Write one vector per tweet.
    Vectorize {
        /// Write the TSV text format instead of the binary one.
        #[arg(long)]
        tsv: bool,
    },
    /// Cluster the corpus and score it against the gold events.
    Cluster,
    /// Score every threshold of a grid.
    Sweep {
        /// Comma-separated thresholds, replacing the configured grid.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Train and test the one-vs-rest SVM over several seeds.
    Classify {
        #[arg(long)]
        c: Option<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Score a saved thread assignment.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        assignment: PathBuf,
    },
}

fn parse_format(s: &str) -> Result<CorpusFormat, String> {
    s.parse().map_err(|e: fsd_stream::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<CountingMode, String> {
    s.parse().map_err(|e: fsd_stream::Error| e.to_string())
}

fn parse_window(s: &str) -> Result<WindowSetting, String> {
    if s == config::ONE_DAY {
        return Ok(WindowSetting::Rule(s.to_owned()));
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or \"{}\"", config::ONE_DAY)),
        Ok(n) => Ok(WindowSetting::Fixed(n)),
    }
}

/// Configuration file first, flags on top.
fn resolve(common: CommonArgs, command: &mut Command) -> AppResult<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let c = &mut config;
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(common.corpus.map(Some) => c.corpus.path);
    set!(common.corpus_format.map(Some) => c.corpus.format);
    set!(common.scope => c.corpus.scope);
    set!(common.background.map(Some) => c.corpus.background);
    set!(common.vectors.map(Some) => c.vectors.source);
    set!(common.vocabulary.map(Some) => c.vectors.vocabulary);
    set!(common.word_vectors.map(Some) => c.vectors.word_vectors);
    set!(common.tweet_vectors.map(Some) => c.vectors.tweet_vectors);
    set!(common.df_min => c.vectors.df_min);
    set!(common.stopwords.map(Some) => c.vectors.stopwords);
    set!(common.threshold.map(Some) => c.fsd.threshold);
    set!(common.window => c.fsd.window);
    set!(common.batch_size => c.fsd.batch_size);
    set!(common.out.map(Some) => c.output.dir);
    set!(common.seed.map(|s| vec![s]) => c.classify.seeds);
    match command {
        Command::Sweep { thresholds } => set!(thresholds.take() => c.sweep.thresholds),
        Command::Classify {
            c: svm_c,
            seeds,
            train_fraction,
        } => {
            set!(svm_c.take() => c.classify.c);
            set!(seeds.take() => c.classify.seeds);
            set!(train_fraction.take() => c.classify.train_fraction);
        }
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn configure_threads() -> AppResult<()> {
    let Ok(raw) = std::env::var("FSD_STREAM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| AppError::validation(format!("FSD_STREAM_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| AppError::internal(format!("cannot size the worker pool: {e}")))
}

fn run(cli: Cli) -> AppResult<()> {
    configure_threads()?;
    let Cli { common, mut command } = cli;
    let config = resolve(common, &mut command)?;
    match command {
        Command::BuildVocab { mode } => commands::build_vocab(&config, mode),
        Command::Vectorize { tsv } => commands::vectorize(&config, tsv),
        Command::Cluster => commands::cluster(&config),
        Command::Sweep { .. } => commands::sweep(&config),
        Command::Classify { .. } => commands::classify(&config),
        Command::Evaluate { assignment } => commands::evaluate(&config, &assignment),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
