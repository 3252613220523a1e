//! Streaming event detection for short texts.
//!
//! Tweets are read in chronological order, turned into sparse idf vectors or
//! dense embeddings, and grouped into threads by mini-batch First Story
//! Detection: each document joins the thread of its nearest neighbour among
//! the last `w` documents when the cosine distance is below a threshold, and
//! opens a new thread otherwise.
//!
//! The crate also carries the scoring used to compare representations:
//! best-matching F1 for clusterings and macro-F1 for a one-vs-rest SVM with
//! the triangular kernel `k(x, y) = 1 - ||x - y||`.

pub mod classify;
pub mod cluster;
pub mod corpus;
mod error;
pub mod evaluate;
pub mod preprocess;
pub mod vectorize;

pub use error::{Error, ErrorKind, Result};

pub use classify::{predict, train_ovr_svm, triangular_kernel, KernelSvmModel, OvrModel};
pub use cluster::{
    cosine_distance, fsd_cluster, sweep_threshold, window_for_one_day, FsdParams, ThreadAssignment,
};
pub use corpus::{load_corpus, split_train_test, Corpus, CorpusFormat, Tweet};
pub use evaluate::{best_matching_f1, macro_f1, pair_f1, EvalReport, GoldLabels};
pub use preprocess::{tokenize, TokenizerConfig};
pub use vectorize::{
    build_vocabulary, idf_weight, vectorize_idf, CountingMode, DenseVector, DocVector,
    SparseVector, Vocabulary,
};
