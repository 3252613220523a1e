//! Mini-batch First Story Detection.
//!
//! Documents are consumed in chronological batches. Every document of a batch
//! looks up its nearest neighbour in the window as it stood when the batch
//! began (documents of the same batch do not see each other), so the lookups
//! of one batch can run in parallel. A document joins its neighbour's thread
//! when the cosine distance is below the threshold and opens a new thread
//! otherwise. The batch is then appended to the window, evicting the oldest
//! documents so that at most `window` remain.
//!
//! With `batch_size == 1` this is the classic sequential algorithm.

mod window;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use window::{cosine_distance, Neighbor, NnBackend, Scratch, WindowBuffer, WindowEntry};

use crate::corpus::Corpus;
use crate::evaluate::{best_matching_f1, GoldLabels};
use crate::vectorize::{DocVector, VectorSource};
use crate::{Error, Result};

pub const DEFAULT_BATCH_SIZE: usize = 8;

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsdParams {
    /// Cosine distance below which a document joins its neighbour's thread.
    pub threshold: f64,
    /// Number of past documents searched for a neighbour.
    pub window: usize,
    pub batch_size: usize,
}

impl FsdParams {
    pub fn new(threshold: f64, window: usize, batch_size: usize) -> Result<Self> {
        let params = FsdParams {
            threshold,
            window,
            batch_size,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.threshold) {
            return Err(Error::invalid(format!(
                "threshold must lie in [0, 2], got {}",
                self.threshold
            )));
        }
        if self.window == 0 {
            return Err(Error::invalid("window size must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome for one document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub thread: u32,
    pub is_first: bool,
    /// Nearest neighbour at query time, `None` when the window was empty.
    pub neighbor: Option<Neighbor>,
}

/// Streaming clusterer; feed it batches in chronological order.
#[derive(Debug)]
pub struct FsdClusterer {
    params: FsdParams,
    backend: NnBackend,
    window: WindowBuffer,
    next_thread: u32,
    n_seen: usize,
}

impl FsdClusterer {
    pub fn new(params: FsdParams) -> Result<Self> {
        Self::with_backend(params, NnBackend::default())
    }

    pub fn with_backend(params: FsdParams, backend: NnBackend) -> Result<Self> {
        params.validate()?;
        Ok(FsdClusterer {
            params,
            backend,
            window: WindowBuffer::new(params.window),
            next_thread: 0,
            n_seen: 0,
        })
    }

    pub fn params(&self) -> &FsdParams {
        &self.params
    }

    pub fn window(&self) -> &WindowBuffer {
        &self.window
    }

    pub fn n_threads(&self) -> u32 {
        self.next_thread
    }

    /// Process one batch. Every lookup sees the window as of the batch start.
    pub fn process_batch(&mut self, batch: Vec<DocVector>) -> Result<Vec<Decision>> {
        let window = &self.window;
        let backend = self.backend;
        let neighbors: Vec<Option<Neighbor>> = if batch.len() > 1 {
            batch
                .par_iter()
                .map_init(Scratch::new, |scratch, v| window.nearest(v, backend, scratch))
                .collect::<Result<_>>()?
        } else {
            let mut scratch = Scratch::new();
            batch
                .iter()
                .map(|v| window.nearest(v, backend, &mut scratch))
                .collect::<Result<_>>()?
        };

        let mut decisions = Vec::with_capacity(batch.len());
        for (vector, neighbor) in batch.into_iter().zip(neighbors) {
            let joined = match neighbor {
                Some(nb) if !vector.is_empty() && nb.distance < self.params.threshold => {
                    Some(nb.thread)
                }
                _ => None,
            };
            let (thread, is_first) = match joined {
                Some(thread) => (thread, false),
                None => {
                    let thread = self.next_thread;
                    self.next_thread += 1;
                    (thread, true)
                }
            };
            self.window.push(self.n_seen, thread, vector)?;
            self.n_seen += 1;
            decisions.push(Decision {
                thread,
                is_first,
                neighbor,
            });
        }
        if self.window.len() > self.params.window {
            return Err(Error::Invariant("window exceeded its capacity".into()));
        }
        Ok(decisions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub doc_id: String,
    pub thread: u32,
    pub is_first: bool,
}

/// Thread id of every document, in stream order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThreadAssignment {
    rows: Vec<AssignmentRow>,
    n_threads: u32,
}

impl ThreadAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, doc_id: impl Into<String>, thread: u32, is_first: bool) {
        if is_first {
            debug_assert_eq!(thread, self.n_threads);
            self.n_threads = self.n_threads.max(thread + 1);
        }
        self.rows.push(AssignmentRow {
            doc_id: doc_id.into(),
            thread,
            is_first,
        });
    }

    pub fn rows(&self) -> &[AssignmentRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_threads(&self) -> usize {
        self.n_threads as usize
    }

    /// Id of the first document of every thread, indexed by thread id.
    pub fn first_docs(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.is_first)
            .map(|r| r.doc_id.as_str())
            .collect()
    }

    pub fn thread_of(&self) -> HashMap<&str, u32> {
        self.rows
            .iter()
            .map(|r| (r.doc_id.as_str(), r.thread))
            .collect()
    }

    /// Check that thread ids are dense and creation-ordered and that each
    /// thread's first document precedes its other members.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0u32;
        for row in &self.rows {
            if row.is_first {
                if row.thread != next {
                    return Err(Error::Invariant(format!(
                        "thread {} opened by {:?}, expected thread {next}",
                        row.thread, row.doc_id
                    )));
                }
                next += 1;
            } else if row.thread >= next {
                return Err(Error::Invariant(format!(
                    "{:?} joins thread {} before it was opened",
                    row.doc_id, row.thread
                )));
            }
        }
        if next != self.n_threads {
            return Err(Error::Invariant("thread count out of sync".into()));
        }
        Ok(())
    }

    /// TSV with columns `id`, `thread_id`, `is_first` (1 or 0).
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "id\tthread_id\tis_first")?;
        for row in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}",
                row.doc_id,
                row.thread,
                u8::from(row.is_first)
            )?;
        }
        out.flush()
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let source = "<assignment>";
        let mut assignment = ThreadAssignment::new();
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(source, e))?;
            if line_no == 1 {
                if line.trim_end() != "id\tthread_id\tis_first" {
                    return Err(Error::malformed(source, 1, "expected header id/thread_id/is_first"));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            let [id, thread, first] = cells.as_slice() else {
                return Err(Error::malformed(source, line_no, "expected 3 columns"));
            };
            let thread = thread
                .parse::<u32>()
                .map_err(|e| Error::malformed(source, line_no, format!("bad thread id: {e}")))?;
            let is_first = match *first {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::malformed(
                        source,
                        line_no,
                        format!("bad first flag {other:?}"),
                    ))
                }
            };
            if is_first && thread != assignment.n_threads {
                return Err(Error::malformed(
                    source,
                    line_no,
                    format!("thread {thread} opened out of order"),
                ));
            }
            assignment.push(*id, thread, is_first);
        }
        assignment
            .validate()
            .map_err(|e| Error::invalid(format!("assignment file: {e}")))?;
        Ok(assignment)
    }
}

fn vectorize_batch<S: VectorSource + ?Sized>(
    tweets: &[crate::corpus::Tweet],
    source: &S,
) -> Result<Vec<DocVector>> {
    if tweets.len() > 1 {
        tweets.par_iter().map(|t| source.vector(t)).collect()
    } else {
        tweets.iter().map(|t| source.vector(t)).collect()
    }
}

/// Cluster a corpus with mini-batch First Story Detection.
pub fn fsd_cluster<S: VectorSource + ?Sized>(
    corpus: &Corpus,
    source: &S,
    params: FsdParams,
) -> Result<ThreadAssignment> {
    fsd_cluster_with_backend(corpus, source, params, NnBackend::default())
}

pub fn fsd_cluster_with_backend<S: VectorSource + ?Sized>(
    corpus: &Corpus,
    source: &S,
    params: FsdParams,
    backend: NnBackend,
) -> Result<ThreadAssignment> {
    let mut clusterer = FsdClusterer::with_backend(params, backend)?;
    let mut assignment = ThreadAssignment::new();
    for chunk in corpus.tweets().chunks(params.batch_size) {
        let vectors = vectorize_batch(chunk, source)?;
        for (tweet, decision) in chunk.iter().zip(clusterer.process_batch(vectors)?) {
            assignment.push(tweet.id.as_str(), decision.thread, decision.is_first);
        }
    }
    Ok(assignment)
}

/// Nearest-neighbour distances of a whole stream.
///
/// Which document is a document's neighbour does not depend on the
/// threshold, so one pass serves every threshold of a sweep.
#[derive(Debug, Clone)]
pub struct NeighborTrace {
    doc_ids: Vec<String>,
    // (neighbour stream position, distance); None for empty windows and empty vectors.
    links: Vec<Option<(usize, f64)>>,
}

impl NeighborTrace {
    pub fn compute<S: VectorSource + ?Sized>(
        corpus: &Corpus,
        source: &S,
        window: usize,
        batch_size: usize,
        backend: NnBackend,
    ) -> Result<Self> {
        // The threshold only affects thread labels, which the trace ignores.
        let params = FsdParams::new(0.0, window, batch_size)?;
        let mut clusterer = FsdClusterer::with_backend(params, backend)?;
        let mut links = Vec::with_capacity(corpus.len());
        for chunk in corpus.tweets().chunks(batch_size) {
            let vectors = vectorize_batch(chunk, source)?;
            let empty: Vec<bool> = vectors.iter().map(DocVector::is_empty).collect();
            for (decision, is_empty) in clusterer.process_batch(vectors)?.into_iter().zip(empty) {
                links.push(match decision.neighbor {
                    Some(nb) if !is_empty => Some((nb.doc, nb.distance)),
                    _ => None,
                });
            }
        }
        Ok(NeighborTrace {
            doc_ids: corpus.iter().map(|t| t.id.clone()).collect(),
            links,
        })
    }

    /// Replay the thread decisions for one threshold.
    pub fn assign(&self, threshold: f64) -> ThreadAssignment {
        let mut threads: Vec<u32> = Vec::with_capacity(self.links.len());
        let mut assignment = ThreadAssignment::new();
        for (doc_id, link) in self.doc_ids.iter().zip(&self.links) {
            let (thread, is_first) = match link {
                Some((neighbor, distance)) if *distance < threshold => (threads[*neighbor], false),
                _ => (assignment.n_threads, true),
            };
            threads.push(thread);
            assignment.push(doc_id.as_str(), thread, is_first);
        }
        assignment
    }

    /// Distance to the nearest neighbour of every document (`None` when the
    /// document opened a thread unconditionally).
    pub fn distances(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.links.iter().map(|l| l.map(|(_, d)| d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub f1: f64,
    pub n_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub window: usize,
    pub batch_size: usize,
    /// Sorted by threshold, ascending.
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the best F1 (smallest threshold on ties).
    pub best: usize,
}

impl SweepTable {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }
}

/// Best-matching F1 for every threshold of `thresholds`.
pub fn sweep_threshold<S: VectorSource + ?Sized>(
    corpus: &Corpus,
    source: &S,
    window: usize,
    batch_size: usize,
    thresholds: &[f64],
    gold: &GoldLabels,
) -> Result<SweepTable> {
    if thresholds.is_empty() {
        return Err(Error::invalid("threshold grid is empty"));
    }
    let mut grid = thresholds.to_vec();
    for &t in &grid {
        FsdParams::new(t, window, batch_size)?;
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let trace = NeighborTrace::compute(corpus, source, window, batch_size, NnBackend::default())?;
    let rows = grid
        .par_iter()
        .map(|&threshold| {
            let assignment = trace.assign(threshold);
            let report = best_matching_f1(&assignment, gold)?;
            Ok(SweepRow {
                threshold,
                f1: report.score,
                n_clusters: assignment.n_threads(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.f1 > rows[best].f1 {
            best = i;
        }
    }
    Ok(SweepTable {
        window,
        batch_size,
        rows,
        best,
    })
}

/// Window size holding roughly one day of documents: `round(n / span_days)`,
/// at least 1.
pub fn window_for_one_day(corpus: &Corpus) -> Result<usize> {
    let span = corpus.span_seconds();
    if span <= 0 {
        return Err(Error::invalid(
            "corpus covers zero time; cannot derive a one-day window",
        ));
    }
    let per_day = corpus.len() as f64 / (span as f64 / SECONDS_PER_DAY);
    Ok((per_day.round() as usize).max(1))
}
