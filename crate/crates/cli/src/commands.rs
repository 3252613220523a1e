use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use fsd_stream::classify::{run_classification, ClassifyParams};
use fsd_stream::cluster::{fsd_cluster, sweep_threshold, window_for_one_day, SweepTable};
use fsd_stream::corpus::TweetReader;
use fsd_stream::vectorize::{
    load_tweet_vectors, load_word_vectors_filtered, vectorize_corpus, write_tweet_vectors_binary,
    write_tweet_vectors_tsv, IdfVectorizer, VectorSource, VocabularyBuilder, Weighting,
    WordAverageVectorizer,
};
use fsd_stream::{
    best_matching_f1, load_corpus, tokenize, Corpus, CountingMode, DocVector, EvalReport,
    FsdParams, GoldLabels, ThreadAssignment, Vocabulary,
};
use serde::Serialize;

use crate::config::{resolve_stopwords, RunConfig, Scope, VectorChoice, WindowSetting};
use crate::error::{AppError, AppResult};
use crate::output::{io_error, write_atomic, write_json};

/// Corpus as configured, plus the subset that is clustered.
struct Loaded {
    full: Corpus,
    scoped: Corpus,
}

fn load(config: &RunConfig) -> AppResult<Loaded> {
    let path = config.corpus_path()?;
    let mut full = load_corpus(path, config.corpus_format(path))?;
    if let Some(lang) = &config.corpus.language {
        full = full.with_language(lang.clone());
    }
    let scoped = match config.corpus.scope {
        Scope::All => full.clone(),
        Scope::Annotated => {
            let annotated = full.annotated();
            if annotated.is_empty() {
                return Err(AppError::validation(format!(
                    "{} has no annotated tweets; use --scope all to cluster everything",
                    path.display()
                )));
            }
            annotated
        }
    };
    log::info!(
        "loaded {} tweets ({} annotated) from {}",
        full.len(),
        full.n_annotated(),
        path.display()
    );
    Ok(Loaded { full, scoped })
}

fn language(config: &RunConfig, corpus: &Corpus) -> String {
    config
        .corpus
        .language
        .clone()
        .unwrap_or_else(|| corpus.language().to_owned())
}

/// Count document frequencies in `mode`.
fn count_vocabulary(config: &RunConfig, loaded: &Loaded, mode: CountingMode) -> AppResult<Vocabulary> {
    let stopwords = resolve_stopwords(config.vectors.stopwords.as_deref(), &language(config, &loaded.full))?;
    let tokenizer = &config.tokenizer;
    let mut builder = VocabularyBuilder::new();
    match mode {
        CountingMode::Dataset => {
            for t in loaded.full.iter().filter(|t| t.is_annotated()) {
                builder.add_document(&tokenize(&t.text, tokenizer));
            }
        }
        CountingMode::AllTweets => match &config.corpus.background {
            Some(path) => {
                let format = config.corpus.format.unwrap_or_else(|| fsd_stream::CorpusFormat::from_path(path));
                for record in TweetReader::open(path, format)? {
                    let (_, tweet) = record?;
                    builder.add_document(&tokenize(&tweet.text, tokenizer));
                }
            }
            None => {
                for t in loaded.full.iter() {
                    builder.add_document(&tokenize(&t.text, tokenizer));
                }
            }
        },
    }
    log::info!("counted document frequencies over {} tweets ({mode})", builder.n_docs());
    Ok(builder.finish(&stopwords, config.vectors.df_min, mode)?)
}

fn read_vocabulary(path: &Path) -> AppResult<Vocabulary> {
    let file = File::open(path).map_err(|e| AppError::missing(format!("cannot open {}: {e}", path.display())))?;
    Vocabulary::read_from(BufReader::new(file))
        .map_err(|e| AppError::validation(format!("{}: {e}", path.display())))
}

fn vocabulary_for(config: &RunConfig, loaded: &Loaded, mode: CountingMode) -> AppResult<Vocabulary> {
    match &config.vectors.vocabulary {
        Some(path) => {
            let vocab = read_vocabulary(path)?;
            if vocab.mode() != mode {
                return Err(AppError::validation(format!(
                    "{} was counted in {} mode, {mode} is required",
                    path.display(),
                    vocab.mode()
                )));
            }
            Ok(vocab)
        }
        None => count_vocabulary(config, loaded, mode),
    }
}

fn vector_source(config: &RunConfig, loaded: &Loaded) -> AppResult<Box<dyn VectorSource>> {
    let choice = config.vector_choice()?;
    let tokenizer = config.tokenizer;
    let source: Box<dyn VectorSource> = match choice {
        VectorChoice::IdfDataset | VectorChoice::IdfAllTweets => {
            let mode = if choice == VectorChoice::IdfDataset {
                CountingMode::Dataset
            } else {
                CountingMode::AllTweets
            };
            let vocab = vocabulary_for(config, loaded, mode)?;
            log::info!("vocabulary: {} terms over {} documents", vocab.len(), vocab.n_docs());
            Box::new(IdfVectorizer::new(Arc::new(vocab), tokenizer))
        }
        VectorChoice::W2vMean | VectorChoice::W2vIdfMean => {
            let path = config.vectors.word_vectors.as_deref().ok_or_else(|| {
                AppError::validation(format!("{choice} needs word vectors (--word-vectors)"))
            })?;
            // Only words that occur in the clustered tweets are kept in memory.
            let needed: HashSet<String> = loaded
                .scoped
                .iter()
                .flat_map(|t| tokenize(&t.text, &tokenizer))
                .collect();
            let table = load_word_vectors_filtered(path, |w| needed.contains(w))?;
            log::info!("word vectors: {} of {} needed words found", table.len(), needed.len());
            let (weighting, vocab) = if choice == VectorChoice::W2vIdfMean {
                let vocab = vocabulary_for(config, loaded, config.vectors.idf_counting)?;
                (Weighting::Idf, Some(Arc::new(vocab)))
            } else {
                (Weighting::Uniform, None)
            };
            Box::new(WordAverageVectorizer::new(Arc::new(table), weighting, vocab, tokenizer)?)
        }
        VectorChoice::External => {
            let path = config.vectors.tweet_vectors.as_deref().ok_or_else(|| {
                AppError::validation("external vectors need a vector file (--tweet-vectors)")
            })?;
            Box::new(load_tweet_vectors(path)?)
        }
    };
    Ok(source)
}

fn window(config: &RunConfig, corpus: &Corpus) -> AppResult<usize> {
    match &config.fsd.window {
        WindowSetting::Fixed(w) => Ok(*w),
        WindowSetting::Rule(_) => {
            let w = window_for_one_day(corpus)?;
            log::info!("window: {w} tweets (about one day)");
            Ok(w)
        }
    }
}

fn threshold(config: &RunConfig) -> AppResult<f64> {
    config
        .fsd
        .threshold
        .ok_or_else(|| AppError::validation("no threshold given (--threshold or [fsd] threshold)"))
}

pub fn build_vocab(config: &RunConfig, mode: Option<CountingMode>) -> AppResult<()> {
    let mode = match (mode, config.vectors.source) {
        (Some(m), _) => m,
        (None, Some(VectorChoice::IdfAllTweets)) => CountingMode::AllTweets,
        (None, Some(VectorChoice::W2vIdfMean)) => config.vectors.idf_counting,
        _ => CountingMode::Dataset,
    };
    let loaded = load(config)?;
    let vocab = count_vocabulary(config, &loaded, mode)?;
    let path = config.out_dir().join("vocabulary.tsv");
    write_atomic(&path, |out| vocab.write_to(out).map_err(|e| io_error(&path, e)))?;
    println!("{} terms ({mode}, df_min {}) -> {}", vocab.len(), vocab.df_min(), path.display());
    Ok(())
}

pub fn vectorize(config: &RunConfig, tsv: bool) -> AppResult<()> {
    let loaded = load(config)?;
    let source = vector_source(config, &loaded)?;
    let vectors = vectorize_corpus(&loaded.scoped, source.as_ref())?;
    let dir = config.out_dir();
    let ids = loaded.scoped.iter().map(|t| t.id.as_str());
    let path = if let Some(DocVector::Sparse(_)) = vectors.first() {
        // Sparse rows: id, then index:weight pairs.
        let path = dir.join("vectors.sparse.tsv");
        write_atomic(&path, |out| {
            for (id, v) in ids.zip(&vectors) {
                let DocVector::Sparse(s) = v else {
                    return Err(AppError::internal("mixed vector kinds"));
                };
                write!(out, "{id}").map_err(|e| io_error(&path, e))?;
                for (i, w) in s.pairs() {
                    write!(out, "\t{i}:{w}").map_err(|e| io_error(&path, e))?;
                }
                writeln!(out).map_err(|e| io_error(&path, e))?;
            }
            Ok(())
        })?;
        path
    } else {
        let mut rows = Vec::with_capacity(vectors.len());
        for (id, v) in ids.zip(&vectors) {
            let DocVector::Dense(d) = v else {
                return Err(AppError::internal("mixed vector kinds"));
            };
            rows.push((id, d));
        }
        let dim = rows.first().map_or(0, |(_, d)| d.dim());
        let path = dir.join(if tsv { "vectors.tsv" } else { "vectors.twvec" });
        write_atomic_via_path(&path, |tmp| {
            if tsv {
                write_tweet_vectors_tsv(tmp, rows.iter().copied())
            } else {
                write_tweet_vectors_binary(tmp, dim, &rows)
            }
        })?;
        path
    };
    println!("{} vectors ({}) -> {}", vectors.len(), source.describe(), path.display());
    Ok(())
}

/// Atomic write for library writers that take a path.
fn write_atomic_via_path(path: &Path, write: impl FnOnce(&Path) -> fsd_stream::Result<()>) -> AppResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_error(path, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(path, e))?;
    write(tmp.path())?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    threshold: f64,
    window: usize,
    batch_size: usize,
    vector_source: String,
    n_tweets: usize,
    n_threads: usize,
    runtime_seconds: f64,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct ReportFile<'a, T: Serialize> {
    #[serde(flatten)]
    report: &'a T,
    config: &'a RunConfig,
}

pub fn cluster(config: &RunConfig) -> AppResult<()> {
    let t = threshold(config)?;
    let loaded = load(config)?;
    let source = vector_source(config, &loaded)?;
    let w = window(config, &loaded.scoped)?;
    let params = FsdParams::new(t, w, config.fsd.batch_size)?;

    let started = Instant::now();
    let assignment = fsd_cluster(&loaded.scoped, source.as_ref(), params)?;
    let runtime = started.elapsed().as_secs_f64();
    assignment.validate()?;

    let dir = config.out_dir();
    let path = dir.join("assignment.tsv");
    write_atomic(&path, |out| assignment.write_tsv(out).map_err(|e| io_error(&path, e)))?;
    write_json(
        &dir.join("run.json"),
        &RunMetadata {
            threshold: t,
            window: w,
            batch_size: params.batch_size,
            vector_source: source.describe(),
            n_tweets: assignment.len(),
            n_threads: assignment.n_threads(),
            runtime_seconds: runtime,
            config,
        },
    )?;
    println!(
        "{} tweets -> {} threads (t={t}, w={w}, batch {}, {}) in {runtime:.2}s",
        assignment.len(),
        assignment.n_threads(),
        params.batch_size,
        source.describe()
    );

    let gold = GoldLabels::from_corpus(&loaded.scoped);
    if gold.is_empty() {
        log::info!("no gold labels; skipping evaluation");
        return Ok(());
    }
    let report = best_matching_f1(&assignment, &gold)?;
    write_report(config, &report)
}

fn write_report(config: &RunConfig, report: &EvalReport) -> AppResult<()> {
    write_json(
        &config.out_dir().join("report.json"),
        &ReportFile {
            report,
            config,
        },
    )?;
    println!("{report}");
    Ok(())
}

pub fn sweep(config: &RunConfig) -> AppResult<()> {
    let grid = config.sweep.grid()?;
    let loaded = load(config)?;
    let gold = GoldLabels::from_corpus(&loaded.scoped);
    if gold.is_empty() {
        return Err(AppError::validation("the sweep needs annotated tweets"));
    }
    let source = vector_source(config, &loaded)?;
    let w = window(config, &loaded.scoped)?;
    let table = sweep_threshold(&loaded.scoped, source.as_ref(), w, config.fsd.batch_size, &grid, &gold)?;

    let dir = config.out_dir();
    let path = dir.join("sweep.tsv");
    write_atomic(&path, |out| write_sweep_tsv(out, &table).map_err(|e| io_error(&path, e)))?;
    write_json(
        &dir.join("sweep.json"),
        &ReportFile {
            report: &table,
            config,
        },
    )?;
    print!("threshold\tf1\tn_clusters\n");
    for row in &table.rows {
        println!("{:.4}\t{:.4}\t{}", row.threshold, row.f1, row.n_clusters);
    }
    let best = table.best_row();
    println!(
        "best t = {} with best-matching F1 = {:.2}% ({}, w={w})",
        best.threshold,
        100.0 * best.f1,
        source.describe()
    );
    Ok(())
}

fn write_sweep_tsv(out: &mut dyn Write, table: &SweepTable) -> std::io::Result<()> {
    writeln!(out, "threshold\tf1\tn_clusters")?;
    for row in &table.rows {
        writeln!(out, "{}\t{}\t{}", row.threshold, row.f1, row.n_clusters)?;
    }
    Ok(())
}

pub fn classify(config: &RunConfig) -> AppResult<()> {
    let loaded = load(config)?;
    let source = vector_source(config, &loaded)?;
    let params = ClassifyParams {
        c: config.classify.c,
        train_fraction: config.classify.train_fraction,
    };
    let report = run_classification(&loaded.full, source.as_ref(), params, &config.classify.seeds)?;
    write_json(
        &config.out_dir().join("classification.json"),
        &ReportFile {
            report: &report,
            config,
        },
    )?;
    println!("{report}");
    Ok(())
}

pub fn evaluate(config: &RunConfig, assignment_path: &Path) -> AppResult<()> {
    crate::config::require_file(assignment_path)?;
    let loaded = load(config)?;
    let file = File::open(assignment_path).map_err(|e| AppError::missing(format!("{}: {e}", assignment_path.display())))?;
    let assignment = ThreadAssignment::read_tsv(BufReader::new(file))
        .map_err(|e| AppError::validation(format!("{}: {e}", assignment_path.display())))?;
    let gold = GoldLabels::from_corpus(&loaded.scoped);
    if gold.is_empty() {
        return Err(AppError::validation("the corpus has no annotated tweets"));
    }
    let report = best_matching_f1(&assignment, &gold)?;
    write_report(config, &report)
}
