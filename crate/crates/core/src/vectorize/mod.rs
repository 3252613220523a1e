//! Document representations.
//!
//! Tweets become either a [`SparseVector`] of idf weights over a
//! [`Vocabulary`] (binary term presence: a term contributes its idf once,
//! however often it repeats) or a [`DenseVector`] averaged from word vectors
//! or read from a precomputed embedding file. Non-empty vectors are always
//! L2-normalized, so cosine similarity reduces to a dot product.

mod embeddings;
mod vocabulary;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use embeddings::{
    average_embedding, load_tweet_vectors, load_word_vectors, load_word_vectors_filtered,
    write_tweet_vectors_binary, write_tweet_vectors_tsv, TweetVectorFile, Weighting,
    WordVectorTable, TWVEC_MAGIC,
};
pub use vocabulary::{
    build_vocabulary, idf_weight, vectorize_idf, CountingMode, VocabEntry, Vocabulary,
    VocabularyBuilder,
};

use crate::corpus::{Corpus, Tweet};
use crate::preprocess::{tokenize, TokenizerConfig};
use crate::{Error, Result};

/// Sparse unit vector: `(term index, weight)` pairs with strictly increasing
/// indices and positive weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pairs: Vec<(u32, f64)>,
    norm: f64,
}

impl SparseVector {
    pub fn empty() -> Self {
        SparseVector::default()
    }

    /// Build a normalized vector from raw weights. Repeated indices are
    /// summed; zero weights are dropped.
    pub fn from_weights(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        if let Some(&(index, w)) = pairs.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "sparse weight for index {index} must be finite and non-negative, got {w}"
            )));
        }
        pairs.sort_unstable_by_key(|&(index, _)| index);
        pairs.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        pairs.retain(|&(_, w)| w > 0.0);

        let norm = pairs.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if pairs.is_empty() || norm == 0.0 {
            return Ok(SparseVector::empty());
        }
        for (_, w) in pairs.iter_mut() {
            *w /= norm;
        }
        Ok(SparseVector { pairs, norm: 1.0 })
    }

    pub fn pairs(&self) -> &[(u32, f64)] {
        &self.pairs
    }

    /// 1 for non-empty vectors, 0 for the empty vector.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.pairs.len()
    }

    /// Dot product by merging the two index lists, accumulating shared terms
    /// in increasing index order.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.pairs, &other.pairs);
        let mut sum = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    pub fn squared_distance(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.pairs, &other.pairs);
        let mut sum = 0.0;
        while i < a.len() || j < b.len() {
            let diff = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    i += 1;
                    j += 1;
                    x.1 - y.1
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    i += 1;
                    x.1
                }
                (Some(x), None) => {
                    i += 1;
                    x.1
                }
                (_, Some(y)) => {
                    j += 1;
                    y.1
                }
                (None, None) => unreachable!(),
            };
            sum += diff * diff;
        }
        sum
    }
}

/// Dense unit vector (or the all-zero vector, flagged empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector {
    values: Vec<f64>,
    norm: f64,
}

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        DenseVector {
            values: vec![0.0; dim],
            norm: 0.0,
        }
    }

    /// Scale `values` to unit length. Non-finite components are rejected; an
    /// all-zero input yields the empty vector.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "component {pos} is not finite ({})",
                values[pos]
            )));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(DenseVector::zeros(values.len()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(DenseVector { values, norm: 1.0 })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_empty(&self) -> bool {
        self.norm == 0.0
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn squared_distance(&self, other: &DenseVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    fn check_dim(&self, other: &DenseVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    Sparse,
    Dense(usize),
}

impl fmt::Display for VectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorKind::Sparse => write!(f, "sparse"),
            VectorKind::Dense(dim) => write!(f, "dense[{dim}]"),
        }
    }
}

/// Representation of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocVector {
    Sparse(SparseVector),
    Dense(DenseVector),
}

impl DocVector {
    pub fn is_empty(&self) -> bool {
        match self {
            DocVector::Sparse(v) => v.is_empty(),
            DocVector::Dense(v) => v.is_empty(),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            DocVector::Sparse(v) => v.norm(),
            DocVector::Dense(v) => v.norm(),
        }
    }

    pub fn kind(&self) -> VectorKind {
        match self {
            DocVector::Sparse(_) => VectorKind::Sparse,
            DocVector::Dense(v) => VectorKind::Dense(v.dim()),
        }
    }

    pub fn dot(&self, other: &DocVector) -> Result<f64> {
        match (self, other) {
            (DocVector::Sparse(a), DocVector::Sparse(b)) => Ok(a.dot(b)),
            (DocVector::Dense(a), DocVector::Dense(b)) => a.dot(b),
            _ => Err(Error::RepresentationMismatch),
        }
    }

    pub fn squared_distance(&self, other: &DocVector) -> Result<f64> {
        match (self, other) {
            (DocVector::Sparse(a), DocVector::Sparse(b)) => Ok(a.squared_distance(b)),
            (DocVector::Dense(a), DocVector::Dense(b)) => a.squared_distance(b),
            _ => Err(Error::RepresentationMismatch),
        }
    }
}

impl From<SparseVector> for DocVector {
    fn from(v: SparseVector) -> Self {
        DocVector::Sparse(v)
    }
}

impl From<DenseVector> for DocVector {
    fn from(v: DenseVector) -> Self {
        DocVector::Dense(v)
    }
}

/// Anything that can produce the vector of a tweet.
pub trait VectorSource: Sync {
    fn vector(&self, tweet: &Tweet) -> Result<DocVector>;

    /// Short label recorded in run metadata.
    fn describe(&self) -> String;
}

/// Sparse idf vectors over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct IdfVectorizer {
    vocabulary: Arc<Vocabulary>,
    tokenizer: TokenizerConfig,
}

impl IdfVectorizer {
    pub fn new(vocabulary: Arc<Vocabulary>, tokenizer: TokenizerConfig) -> Self {
        IdfVectorizer {
            vocabulary,
            tokenizer,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }
}

impl VectorSource for IdfVectorizer {
    fn vector(&self, tweet: &Tweet) -> Result<DocVector> {
        let tokens = tokenize(&tweet.text, &self.tokenizer);
        Ok(vectorize_idf(&tokens, &self.vocabulary).into())
    }

    fn describe(&self) -> String {
        match self.vocabulary.mode() {
            CountingMode::Dataset => "idf-dataset".to_owned(),
            CountingMode::AllTweets => "idf-all-tweets".to_owned(),
        }
    }
}

/// Averaged word vectors, optionally idf-weighted.
#[derive(Debug, Clone)]
pub struct WordAverageVectorizer {
    table: Arc<WordVectorTable>,
    weighting: Weighting,
    vocabulary: Option<Arc<Vocabulary>>,
    tokenizer: TokenizerConfig,
}

impl WordAverageVectorizer {
    pub fn new(
        table: Arc<WordVectorTable>,
        weighting: Weighting,
        vocabulary: Option<Arc<Vocabulary>>,
        tokenizer: TokenizerConfig,
    ) -> Result<Self> {
        if weighting == Weighting::Idf && vocabulary.is_none() {
            return Err(Error::invalid("idf weighting requires a vocabulary"));
        }
        Ok(WordAverageVectorizer {
            table,
            weighting,
            vocabulary,
            tokenizer,
        })
    }
}

impl VectorSource for WordAverageVectorizer {
    fn vector(&self, tweet: &Tweet) -> Result<DocVector> {
        let tokens = tokenize(&tweet.text, &self.tokenizer);
        average_embedding(
            &tokens,
            &self.table,
            self.weighting,
            self.vocabulary.as_deref(),
        )
        .map(DocVector::Dense)
    }

    fn describe(&self) -> String {
        match self.weighting {
            Weighting::Uniform => "w2v-mean".to_owned(),
            Weighting::Idf => "w2v-idf-mean".to_owned(),
        }
    }
}

impl VectorSource for TweetVectorFile {
    fn vector(&self, tweet: &Tweet) -> Result<DocVector> {
        self.get(&tweet.id).cloned().map(DocVector::Dense)
    }

    fn describe(&self) -> String {
        format!("external[{}]", self.dim())
    }
}

/// Vectors computed ahead of time, keyed by tweet id.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedVectors {
    vectors: HashMap<String, DocVector>,
    label: String,
}

impl PrecomputedVectors {
    pub fn new(label: impl Into<String>) -> Self {
        PrecomputedVectors {
            vectors: HashMap::new(),
            label: label.into(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: DocVector) {
        self.vectors.insert(id.into(), vector);
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl FromIterator<(String, DocVector)> for PrecomputedVectors {
    fn from_iter<I: IntoIterator<Item = (String, DocVector)>>(iter: I) -> Self {
        PrecomputedVectors {
            vectors: iter.into_iter().collect(),
            label: "precomputed".to_owned(),
        }
    }
}

impl VectorSource for PrecomputedVectors {
    fn vector(&self, tweet: &Tweet) -> Result<DocVector> {
        self.vectors
            .get(&tweet.id)
            .cloned()
            .ok_or_else(|| Error::MissingVector(tweet.id.clone()))
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Vectorize every tweet of a corpus, in corpus order.
pub fn vectorize_corpus<S: VectorSource + ?Sized>(
    corpus: &Corpus,
    source: &S,
) -> Result<Vec<DocVector>> {
    use rayon::prelude::*;
    corpus
        .tweets()
        .par_iter()
        .map(|tweet| source.vector(tweet))
        .collect()
}
