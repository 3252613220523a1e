//! Tweet corpora: loading, validation, chronological ordering and splitting.
//!
//! Two on-disk formats carry the same four fields (`id`, `timestamp`, `text`,
//! optional `event_id`):
//!
//! * JSON Lines, one object per line:
//!   `{"id": "1", "timestamp": 1340000000, "text": "...", "event_id": "e42"}`
//! * TSV with a header row naming the columns; an empty `event_id` cell marks
//!   an unannotated tweet.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tweet {
    pub id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub text: String,
    /// Gold event label, absent for unannotated tweets.
    pub event_id: Option<String>,
}

impl Tweet {
    pub fn new(
        id: impl Into<String>,
        timestamp: i64,
        text: impl Into<String>,
        event_id: Option<&str>,
    ) -> Self {
        Tweet {
            id: id.into(),
            timestamp,
            text: text.into(),
            event_id: event_id.map(str::to_owned),
        }
    }

    pub fn is_annotated(&self) -> bool {
        self.event_id.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Guess the format from a file extension (`.tsv`/`.tab` → TSV, anything else → JSONL).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::invalid(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// An immutable, chronologically sorted collection of tweets.
///
/// Tweets are ordered by `(timestamp, id)`; ids are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    tweets: Vec<Tweet>,
    name: String,
    language: String,
}

impl Corpus {
    /// Validate and sort a set of tweets.
    pub fn from_tweets(
        name: impl Into<String>,
        language: impl Into<String>,
        mut tweets: Vec<Tweet>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(tweets.len());
        for tweet in &tweets {
            validate_tweet(tweet)?;
            if !seen.insert(tweet.id.as_str()) {
                return Err(Error::DuplicateId(tweet.id.clone()));
            }
        }
        tweets.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
        Ok(Corpus {
            tweets,
            name: name.into(),
            language: language.into(),
        })
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tweet> {
        self.tweets.iter()
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = language.into();
        self
    }

    /// The annotated subset, still in chronological order.
    pub fn annotated(&self) -> Corpus {
        self.filtered(|t| t.is_annotated())
    }

    pub fn n_annotated(&self) -> usize {
        self.tweets.iter().filter(|t| t.is_annotated()).count()
    }

    fn filtered(&self, keep: impl Fn(&Tweet) -> bool) -> Corpus {
        Corpus {
            tweets: self.tweets.iter().filter(|t| keep(t)).cloned().collect(),
            name: self.name.clone(),
            language: self.language.clone(),
        }
    }

    /// Time covered by the corpus, in seconds.
    pub fn span_seconds(&self) -> i64 {
        match (self.tweets.first(), self.tweets.last()) {
            (Some(first), Some(last)) => last.timestamp - first.timestamp,
            _ => 0,
        }
    }

    pub fn write_to<W: Write>(&self, mut writer: W, format: CorpusFormat) -> Result<()> {
        let to_err = |e: io::Error| Error::io("<writer>", e);
        match format {
            CorpusFormat::Jsonl => {
                for tweet in &self.tweets {
                    let line = serde_json::to_string(tweet)
                        .map_err(|e| Error::Invariant(e.to_string()))?;
                    writeln!(writer, "{line}").map_err(to_err)?;
                }
            }
            CorpusFormat::Tsv => {
                writeln!(writer, "id\ttimestamp\ttext\tevent_id").map_err(to_err)?;
                for tweet in &self.tweets {
                    for field in [Some(&tweet.id), Some(&tweet.text), tweet.event_id.as_ref()]
                        .into_iter()
                        .flatten()
                    {
                        if field.contains(['\t', '\n', '\r']) {
                            return Err(Error::invalid(format!(
                                "tweet {:?}: TSV fields cannot contain tabs or line breaks",
                                tweet.id
                            )));
                        }
                    }
                    writeln!(
                        writer,
                        "{}\t{}\t{}\t{}",
                        tweet.id,
                        tweet.timestamp,
                        tweet.text,
                        tweet.event_id.as_deref().unwrap_or("")
                    )
                    .map_err(to_err)?;
                }
            }
        }
        writer.flush().map_err(to_err)
    }

    pub fn save(&self, path: &Path, format: CorpusFormat) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(io::BufWriter::new(file), format)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Tweet;
    type IntoIter = std::slice::Iter<'a, Tweet>;

    fn into_iter(self) -> Self::IntoIter {
        self.tweets.iter()
    }
}

fn validate_tweet(tweet: &Tweet) -> Result<()> {
    if tweet.id.is_empty() {
        return Err(Error::invalid("tweet id must be non-empty"));
    }
    if tweet.timestamp <= 0 {
        return Err(Error::invalid(format!(
            "tweet {:?}: timestamp must be positive, got {}",
            tweet.id, tweet.timestamp
        )));
    }
    Ok(())
}

/// Load, validate and sort a corpus file.
///
/// Malformed records are reported with their 1-based line number.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let mut tweets = Vec::new();
    let mut seen = HashSet::new();
    for record in TweetReader::open(path, format)? {
        let (line, tweet) = record?;
        validate_tweet(&tweet).map_err(|e| Error::malformed(path, line, e.to_string()))?;
        if !seen.insert(tweet.id.clone()) {
            return Err(Error::DuplicateId(tweet.id));
        }
        tweets.push(tweet);
    }
    if tweets.is_empty() {
        return Err(Error::EmptyInput(path.to_owned()));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::from_tweets(name, "und", tweets)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IdRepr {
    Text(String),
    Number(u64),
}

#[derive(Deserialize)]
struct JsonRecord {
    id: IdRepr,
    timestamp: i64,
    text: String,
    #[serde(default)]
    event_id: Option<IdRepr>,
}

impl IdRepr {
    fn into_string(self) -> String {
        match self {
            IdRepr::Text(s) => s,
            IdRepr::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TsvColumns {
    id: usize,
    timestamp: usize,
    text: usize,
    event_id: Option<usize>,
}

/// Streaming record reader yielding `(line number, tweet)` pairs in file order.
///
/// No ordering or uniqueness checks are made; use [`load_corpus`] for that.
/// Useful for counting document frequencies over files too large to hold.
pub struct TweetReader {
    lines: io::Lines<BufReader<File>>,
    path: PathBuf,
    format: CorpusFormat,
    line_no: usize,
    columns: Option<TsvColumns>,
}

impl TweetReader {
    pub fn open(path: &Path, format: CorpusFormat) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(TweetReader {
            lines: BufReader::new(file).lines(),
            path: path.to_owned(),
            format,
            line_no: 0,
            columns: None,
        })
    }

    fn parse_header(&self, line: &str) -> Result<TsvColumns> {
        let names: Vec<&str> = line.split('\t').map(str::trim).collect();
        let find = |name: &str| names.iter().position(|n| *n == name);
        let require = |name: &str| {
            find(name).ok_or_else(|| {
                Error::malformed(&self.path, self.line_no, format!("header lacks {name:?} column"))
            })
        };
        Ok(TsvColumns {
            id: require("id")?,
            timestamp: require("timestamp")?,
            text: require("text")?,
            event_id: find("event_id"),
        })
    }

    fn parse_tsv(&self, columns: TsvColumns, line: &str) -> Result<Tweet> {
        let cells: Vec<&str> = line.split('\t').collect();
        let cell = |idx: usize, name: &str| {
            cells.get(idx).copied().ok_or_else(|| {
                Error::malformed(&self.path, self.line_no, format!("missing {name:?} cell"))
            })
        };
        let timestamp = cell(columns.timestamp, "timestamp")?;
        let timestamp = timestamp.trim().parse::<i64>().map_err(|e| {
            Error::malformed(
                &self.path,
                self.line_no,
                format!("bad timestamp {timestamp:?}: {e}"),
            )
        })?;
        let event_id = match columns.event_id {
            Some(idx) => cells.get(idx).map(|s| s.trim()).filter(|s| !s.is_empty()),
            None => None,
        };
        Ok(Tweet::new(
            cell(columns.id, "id")?.trim(),
            timestamp,
            cell(columns.text, "text")?,
            event_id,
        ))
    }

    fn parse_json(&self, line: &str) -> Result<Tweet> {
        let record: JsonRecord = serde_json::from_str(line)
            .map_err(|e| Error::malformed(&self.path, self.line_no, e.to_string()))?;
        Ok(Tweet {
            id: record.id.into_string(),
            timestamp: record.timestamp,
            text: record.text,
            event_id: record
                .event_id
                .map(IdRepr::into_string)
                .filter(|s| !s.is_empty()),
        })
    }
}

impl Iterator for TweetReader {
    type Item = Result<(usize, Tweet)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parsed = match self.format {
                CorpusFormat::Jsonl => self.parse_json(line),
                CorpusFormat::Tsv => match self.columns {
                    None => match self.parse_header(line) {
                        Ok(columns) => {
                            self.columns = Some(columns);
                            continue;
                        }
                        Err(e) => Err(e),
                    },
                    Some(columns) => self.parse_tsv(columns, line),
                },
            };
            return Some(parsed.map(|tweet| (self.line_no, tweet)));
        }
    }
}

/// Split the annotated tweets into a train and a test corpus.
///
/// The train part holds `round(fraction * n)` tweets drawn uniformly at
/// random; both parts stay chronologically ordered. Unannotated tweets are
/// left out of both.
pub fn split_train_test(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let annotated: Vec<&Tweet> = corpus.iter().filter(|t| t.is_annotated()).collect();
    if annotated.is_empty() {
        return Err(Error::invalid("corpus has no annotated tweets to split"));
    }
    let n_train = (fraction * annotated.len() as f64).round() as usize;

    let mut order: Vec<usize> = (0..annotated.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; annotated.len()];
    for &idx in &order[..n_train] {
        in_train[idx] = true;
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (tweet, selected) in annotated.into_iter().zip(in_train) {
        if selected {
            train.push(tweet.clone());
        } else {
            test.push(tweet.clone());
        }
    }
    let part = |tweets| Corpus {
        tweets,
        name: corpus.name.clone(),
        language: corpus.language.clone(),
    };
    Ok((part(train), part(test)))
}
