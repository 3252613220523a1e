use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SparseVector;
use crate::{Error, Result};

/// Which tweets the document frequencies were counted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// Annotated tweets only.
    Dataset,
    /// Every tweet of the collection, annotated or not.
    AllTweets,
}

impl fmt::Display for CountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountingMode::Dataset => "dataset",
            CountingMode::AllTweets => "all_tweets",
        })
    }
}

impl FromStr for CountingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset" => Ok(CountingMode::Dataset),
            "all_tweets" | "all-tweets" => Ok(CountingMode::AllTweets),
            other => Err(Error::invalid(format!("unknown counting mode {other:?}"))),
        }
    }
}

/// `1 + ln((n_docs + 1) / (df + 1))`.
///
/// Equals 1 when a term occurs in every document and grows as the term gets
/// rarer.
pub fn idf_weight(df: u64, n_docs: u64) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("document frequency must be at least 1"));
    }
    if df > n_docs {
        return Err(Error::invalid(format!(
            "document frequency {df} exceeds document count {n_docs}"
        )));
    }
    Ok(1.0 + ((n_docs as f64 + 1.0) / (df as f64 + 1.0)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VocabEntry {
    pub index: u32,
    pub df: u64,
    pub idf: f64,
}

/// Term table with document frequencies and idf weights.
///
/// Indices are assigned in lexicographic term order, so two vocabularies
/// built from the same counts are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    entries: HashMap<String, VocabEntry>,
    n_docs: u64,
    mode: CountingMode,
    df_min: u64,
    stopwords: BTreeSet<String>,
}

impl Vocabulary {
    fn from_counts(
        counts: impl IntoIterator<Item = (String, u64)>,
        n_docs: u64,
        stopwords: BTreeSet<String>,
        df_min: u64,
        mode: CountingMode,
    ) -> Result<Self> {
        if df_min < 1 {
            return Err(Error::invalid("df_min must be at least 1"));
        }
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(term, df)| *df >= df_min && !stopwords.contains(term))
            .collect();
        kept.sort_unstable_by(|a, b| a.0.cmp(&b.0));

        let mut terms = Vec::with_capacity(kept.len());
        let mut entries = HashMap::with_capacity(kept.len());
        for (index, (term, df)) in kept.into_iter().enumerate() {
            let index = u32::try_from(index)
                .map_err(|_| Error::invalid("vocabulary exceeds u32 indices"))?;
            let idf = idf_weight(df, n_docs)?;
            entries.insert(term.clone(), VocabEntry { index, df, idf });
            terms.push(term);
        }
        Ok(Vocabulary {
            terms,
            entries,
            n_docs,
            mode,
            df_min,
            stopwords,
        })
    }

    pub fn get(&self, term: &str) -> Option<&VocabEntry> {
        self.entries.get(term)
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.entries.get(term).map(|e| e.idf)
    }

    pub fn term(&self, index: u32) -> Option<&str> {
        self.terms.get(index as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn mode(&self) -> CountingMode {
        self.mode
    }

    pub fn df_min(&self) -> u64 {
        self.df_min
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    /// Terms in index order with their entries.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &VocabEntry)> {
        self.terms
            .iter()
            .map(move |term| (term.as_str(), &self.entries[term]))
    }

    /// Term → df map, for comparisons.
    pub fn document_frequencies(&self) -> HashMap<&str, u64> {
        self.iter().map(|(term, entry)| (term, entry.df)).collect()
    }

    /// Serialize as a TSV table preceded by `#key<TAB>value` metadata lines.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#format\tfsd-vocab/1")?;
        writeln!(out, "#mode\t{}", self.mode)?;
        writeln!(out, "#df_min\t{}", self.df_min)?;
        writeln!(out, "#n_docs\t{}", self.n_docs)?;
        let stopwords: Vec<&str> = self.stopwords.iter().map(String::as_str).collect();
        writeln!(out, "#stopwords\t{}", stopwords.join(" "))?;
        writeln!(out, "term\tdf\tidf")?;
        for (term, entry) in self.iter() {
            writeln!(out, "{term}\t{}\t{}", entry.df, entry.idf)?;
        }
        out.flush()
    }

    /// Parse the format written by [`Vocabulary::write_to`]. idf values are
    /// recomputed from `df` and `n_docs`.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let source = "<vocabulary>";
        let mut meta: HashMap<String, String> = HashMap::new();
        let mut counts = Vec::new();
        let mut seen_header = false;
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (key, value) = rest.split_once('\t').unwrap_or((rest, ""));
                meta.insert(key.to_owned(), value.to_owned());
                continue;
            }
            if !seen_header {
                if line != "term\tdf\tidf" {
                    return Err(Error::malformed(source, line_no, "expected column header"));
                }
                seen_header = true;
                continue;
            }
            let mut cells = line.split('\t');
            let (Some(term), Some(df)) = (cells.next(), cells.next()) else {
                return Err(Error::malformed(source, line_no, "expected term and df"));
            };
            let df = df
                .parse::<u64>()
                .map_err(|e| Error::malformed(source, line_no, format!("bad df: {e}")))?;
            counts.push((term.to_owned(), df));
        }

        let field = |key: &str| {
            meta.get(key)
                .ok_or_else(|| Error::invalid(format!("vocabulary file lacks #{key}")))
        };
        let parse_u64 = |key: &str| -> Result<u64> {
            field(key)?
                .parse()
                .map_err(|e| Error::invalid(format!("vocabulary #{key}: {e}")))
        };
        let mode: CountingMode = field("mode")?.parse()?;
        let df_min = parse_u64("df_min")?;
        let n_docs = parse_u64("n_docs")?;
        let stopwords = meta
            .get("stopwords")
            .map(|s| s.split_whitespace().map(str::to_owned).collect())
            .unwrap_or_default();

        let n_terms = counts.len();
        let vocabulary = Vocabulary::from_counts(counts, n_docs, stopwords, df_min, mode)?;
        if vocabulary.len() != n_terms {
            return Err(Error::invalid(
                "vocabulary file lists terms below df_min, stopwords or duplicates",
            ));
        }
        Ok(vocabulary)
    }
}

/// Incremental document-frequency counter.
#[derive(Debug, Default)]
pub struct VocabularyBuilder {
    counts: HashMap<String, u64>,
    n_docs: u64,
}

impl VocabularyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Count each distinct token of one document once.
    pub fn add_document<S: AsRef<str>>(&mut self, tokens: &[S]) {
        self.n_docs += 1;
        let mut seen: HashSet<&str> = HashSet::with_capacity(tokens.len());
        for token in tokens {
            let token = token.as_ref();
            if seen.insert(token) {
                match self.counts.get_mut(token) {
                    Some(df) => *df += 1,
                    None => {
                        self.counts.insert(token.to_owned(), 1);
                    }
                }
            }
        }
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn finish(
        self,
        stopwords: &HashSet<String>,
        df_min: u64,
        mode: CountingMode,
    ) -> Result<Vocabulary> {
        if self.n_docs == 0 {
            return Err(Error::invalid("cannot build a vocabulary from zero documents"));
        }
        Vocabulary::from_counts(
            self.counts,
            self.n_docs,
            stopwords.iter().cloned().collect(),
            df_min,
            mode,
        )
    }
}

/// Count document frequencies over `docs` and keep the terms with
/// `df >= df_min` that are not stopwords.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    stopwords: &HashSet<String>,
    df_min: u64,
    mode: CountingMode,
) -> Result<Vocabulary> {
    if df_min < 1 {
        return Err(Error::invalid("df_min must be at least 1"));
    }
    let mut builder = VocabularyBuilder::new();
    for doc in docs {
        builder.add_document(doc);
    }
    builder.finish(stopwords, df_min, mode)
}

/// Sparse idf vector of a token list: each distinct in-vocabulary token gets
/// its idf weight once; the result is L2-normalized. Out-of-vocabulary tokens
/// are ignored, so an all-OOV list gives the empty vector.
pub fn vectorize_idf<S: AsRef<str>>(tokens: &[S], vocabulary: &Vocabulary) -> SparseVector {
    let mut pairs: Vec<(u32, f64)> = tokens
        .iter()
        .filter_map(|t| vocabulary.get(t.as_ref()))
        .map(|e| (e.index, e.idf))
        .collect();
    pairs.sort_unstable_by_key(|&(index, _)| index);
    pairs.dedup_by_key(|&mut (index, _)| index);
    SparseVector::from_weights(pairs).expect("idf weights are finite and >= 1")
}
