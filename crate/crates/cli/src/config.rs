//! Run configuration: TOML file, then command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use fsd_stream::{CorpusFormat, CountingMode, TokenizerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VectorChoice {
    IdfDataset,
    IdfAllTweets,
    W2vMean,
    W2vIdfMean,
    External,
}

impl VectorChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            VectorChoice::IdfDataset => "idf-dataset",
            VectorChoice::IdfAllTweets => "idf-all-tweets",
            VectorChoice::W2vMean => "w2v-mean",
            VectorChoice::W2vIdfMean => "w2v-idf-mean",
            VectorChoice::External => "external",
        }
    }
}

impl fmt::Display for VectorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which tweets are clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    #[default]
    Annotated,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSetting {
    Fixed(usize),
    /// `"one-day"`: about one day of tweets, derived from the corpus.
    Rule(String),
}

impl Default for WindowSetting {
    fn default() -> Self {
        WindowSetting::Rule(ONE_DAY.to_owned())
    }
}

pub const ONE_DAY: &str = "one-day";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    pub language: Option<String>,
    pub scope: Scope,
    /// Larger tweet collection for idf counts in all-tweets mode.
    pub background: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorsSection {
    pub source: Option<VectorChoice>,
    /// Saved vocabulary; built on the fly when absent.
    pub vocabulary: Option<PathBuf>,
    pub df_min: u64,
    /// Language code of a built-in list, a path, or "none".
    pub stopwords: Option<String>,
    pub word_vectors: Option<PathBuf>,
    pub tweet_vectors: Option<PathBuf>,
    /// Counting mode of the idf weights used by `w2v-idf-mean`.
    pub idf_counting: CountingMode,
}

impl Default for VectorsSection {
    fn default() -> Self {
        VectorsSection {
            source: None,
            vocabulary: None,
            df_min: 10,
            stopwords: None,
            word_vectors: None,
            tweet_vectors: None,
            idf_counting: CountingMode::AllTweets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsdSection {
    pub threshold: Option<f64>,
    pub window: WindowSetting,
    pub batch_size: usize,
}

impl Default for FsdSection {
    fn default() -> Self {
        FsdSection {
            threshold: None,
            window: WindowSetting::default(),
            batch_size: fsd_stream::cluster::DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit thresholds; when empty the range below is used.
    pub thresholds: Vec<f64>,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            thresholds: Vec::new(),
            start: 0.02,
            stop: 0.80,
            step: 0.01,
        }
    }
}

impl SweepSection {
    pub fn grid(&self) -> AppResult<Vec<f64>> {
        if !self.thresholds.is_empty() {
            return Ok(self.thresholds.clone());
        }
        if !(self.step > 0.0) || self.stop < self.start {
            return Err(AppError::validation(format!(
                "bad sweep range {}..{} step {}",
                self.start, self.stop, self.step
            )));
        }
        // Integer steps avoid accumulating rounding error.
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|k| {
                let t = self.start + k as f64 * self.step;
                (t * 1e9).round() / 1e9
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub c: f64,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection {
            c: fsd_stream::classify::DEFAULT_C,
            seeds: vec![1, 2, 3, 4, 5],
            train_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Defaults to `out` in the working directory.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub tokenizer: TokenizerConfig,
    pub vectors: VectorsSection,
    pub fsd: FsdSection,
    pub sweep: SweepSection,
    pub classify: ClassifySection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Read a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::missing(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| AppError::validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.corpus.path);
        fix(&mut self.corpus.background);
        fix(&mut self.vectors.vocabulary);
        fix(&mut self.vectors.word_vectors);
        fix(&mut self.vectors.tweet_vectors);
        fix(&mut self.output.dir);
        if let Some(s) = &self.vectors.stopwords {
            if fsd_stream::preprocess::builtin_stopwords(s).is_none() && s != "none" {
                let p = Path::new(s);
                if p.is_relative() {
                    self.vectors.stopwords = Some(base.join(p).to_string_lossy().into_owned());
                }
            }
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn corpus_path(&self) -> AppResult<&Path> {
        let path = self
            .corpus
            .path
            .as_deref()
            .ok_or_else(|| AppError::validation("no corpus given (--corpus or [corpus] path)"))?;
        require_file(path)?;
        Ok(path)
    }

    pub fn corpus_format(&self, path: &Path) -> CorpusFormat {
        self.corpus.format.unwrap_or_else(|| CorpusFormat::from_path(path))
    }

    pub fn vector_choice(&self) -> AppResult<VectorChoice> {
        self.vectors
            .source
            .ok_or_else(|| AppError::validation("no vector source selected (--vectors or [vectors] source)"))
    }

    /// Check ranges and that every referenced file exists.
    pub fn validate(&self) -> AppResult<()> {
        if let Some(t) = self.fsd.threshold {
            if !(0.0..=2.0).contains(&t) {
                return Err(AppError::validation(format!("threshold must lie in [0, 2], got {t}")));
            }
        }
        if self.fsd.batch_size == 0 {
            return Err(AppError::validation("batch size must be at least 1"));
        }
        match &self.fsd.window {
            WindowSetting::Fixed(0) => return Err(AppError::validation("window must be positive")),
            WindowSetting::Rule(r) if r != ONE_DAY => {
                return Err(AppError::validation(format!(
                    "window must be a positive integer or \"{ONE_DAY}\", got {r:?}"
                )))
            }
            _ => {}
        }
        if self.vectors.df_min == 0 {
            return Err(AppError::validation("df_min must be at least 1"));
        }
        if !(self.classify.c > 0.0) {
            return Err(AppError::validation(format!("C must be positive, got {}", self.classify.c)));
        }
        for path in [
            &self.corpus.path,
            &self.corpus.background,
            &self.vectors.vocabulary,
            &self.vectors.word_vectors,
            &self.vectors.tweet_vectors,
        ]
        .into_iter()
        .flatten()
        {
            require_file(path)?;
        }
        Ok(())
    }
}

pub fn require_file(path: &Path) -> AppResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(AppError::missing(format!("file not found: {}", path.display())))
    }
}

/// Stopwords named by a language code, a file path or "none".
pub fn resolve_stopwords(spec: Option<&str>, language: &str) -> AppResult<std::collections::HashSet<String>> {
    match spec {
        Some("none") => Ok(Default::default()),
        Some(s) => match fsd_stream::preprocess::builtin_stopwords(s) {
            Some(set) => Ok(set),
            None => {
                let path = Path::new(s);
                require_file(path)?;
                Ok(fsd_stream::preprocess::load_stopwords(path)?)
            }
        },
        None => Ok(fsd_stream::preprocess::builtin_stopwords(language).unwrap_or_default()),
    }
}
