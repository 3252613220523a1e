//! FIFO window of recent documents with exact nearest-neighbour search.
//!
//! Sparse windows keep an inverted index (term → postings in insertion
//! order). Because eviction is strictly FIFO, the evicted document's postings
//! are always at the front of their lists.

use std::collections::VecDeque;

use crate::vectorize::{DocVector, VectorKind};
use crate::{Error, Result};

/// How to search a sparse window. Dense windows are always scanned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnBackend {
    #[default]
    InvertedIndex,
    FlatScan,
}

#[derive(Debug, Clone)]
pub struct WindowEntry {
    /// Stream position of the document.
    pub doc: usize,
    pub thread: u32,
    pub vector: DocVector,
}

/// Result of a nearest-neighbour query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position in the window, 0 being the oldest entry.
    pub slot: usize,
    /// Stream position of the neighbour.
    pub doc: usize,
    pub thread: u32,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Posting {
    seq: u64,
    weight: f64,
}

/// Per-query accumulator for the inverted-index path. Reusable across
/// queries; one per worker.
#[derive(Debug, Default)]
pub struct Scratch {
    dots: Vec<f64>,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

impl Scratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, len: usize) {
        if self.dots.len() < len {
            self.dots.resize(len, 0.0);
            self.marked.resize(len, false);
        }
    }

    fn reset(&mut self) {
        for &slot in &self.touched {
            self.dots[slot] = 0.0;
            self.marked[slot] = false;
        }
        self.touched.clear();
    }
}

/// Cosine distance `1 - a·b / (|a| |b|)`, clamped to `[0, 2]`.
///
/// Empty vectors are at distance 2 from everything.
pub fn cosine_distance(a: &DocVector, b: &DocVector) -> Result<f64> {
    let dot = a.dot(b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(2.0);
    }
    Ok(distance_from_dot(dot / (a.norm() * b.norm())))
}

#[inline]
fn distance_from_dot(similarity: f64) -> f64 {
    (1.0 - similarity).clamp(0.0, 2.0)
}

#[derive(Debug)]
pub struct WindowBuffer {
    capacity: usize,
    entries: VecDeque<WindowEntry>,
    kind: Option<VectorKind>,
    postings: Vec<VecDeque<Posting>>,
    // Sequence number of the oldest entry; entries hold consecutive numbers.
    front_seq: u64,
}

impl WindowBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        WindowBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 20)),
            kind: None,
            postings: Vec::new(),
            front_seq: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    fn check_kind(&self, vector: &DocVector) -> Result<()> {
        match (self.kind, vector.kind()) {
            (None, _) => Ok(()),
            (Some(VectorKind::Sparse), VectorKind::Sparse) => Ok(()),
            (Some(VectorKind::Dense(a)), VectorKind::Dense(b)) if a == b => Ok(()),
            (Some(VectorKind::Dense(a)), VectorKind::Dense(b)) => {
                Err(Error::DimensionMismatch { left: a, right: b })
            }
            _ => Err(Error::RepresentationMismatch),
        }
    }

    /// Append a document, evicting the oldest one first if the window is full.
    pub fn push(&mut self, doc: usize, thread: u32, vector: DocVector) -> Result<Option<WindowEntry>> {
        self.check_kind(&vector)?;
        self.kind = Some(vector.kind());

        let evicted = if self.entries.len() >= self.capacity {
            self.pop_front()
        } else {
            None
        };

        let seq = self.front_seq + self.entries.len() as u64;
        if let DocVector::Sparse(sparse) = &vector {
            for &(term, weight) in sparse.pairs() {
                let term = term as usize;
                if term >= self.postings.len() {
                    self.postings.resize_with(term + 1, VecDeque::new);
                }
                self.postings[term].push_back(Posting { seq, weight });
            }
        }
        self.entries.push_back(WindowEntry {
            doc,
            thread,
            vector,
        });
        debug_assert!(self.entries.len() <= self.capacity);
        Ok(evicted)
    }

    fn pop_front(&mut self) -> Option<WindowEntry> {
        let entry = self.entries.pop_front()?;
        if let DocVector::Sparse(sparse) = &entry.vector {
            for &(term, _) in sparse.pairs() {
                let _removed = self.postings[term as usize].pop_front();
                debug_assert_eq!(_removed.map(|p| p.seq), Some(self.front_seq));
            }
        }
        self.front_seq += 1;
        Some(entry)
    }

    /// Exact nearest neighbour of `query`; ties go to the most recent entry.
    pub fn nearest(
        &self,
        query: &DocVector,
        backend: NnBackend,
        scratch: &mut Scratch,
    ) -> Result<Option<Neighbor>> {
        self.check_kind(query)?;
        if self.entries.is_empty() {
            return Ok(None);
        }
        if query.is_empty() {
            return Ok(Some(self.neighbor_at(self.entries.len() - 1, 2.0)));
        }
        match (query, backend) {
            (DocVector::Sparse(sparse), NnBackend::InvertedIndex) => {
                Ok(Some(self.nearest_indexed(sparse.pairs(), scratch)))
            }
            _ => self.nearest_scan(query),
        }
    }

    fn neighbor_at(&self, slot: usize, distance: f64) -> Neighbor {
        let entry = &self.entries[slot];
        Neighbor {
            slot,
            doc: entry.doc,
            thread: entry.thread,
            distance,
        }
    }

    fn nearest_scan(&self, query: &DocVector) -> Result<Option<Neighbor>> {
        let mut best: Option<(usize, f64)> = None;
        for (slot, entry) in self.entries.iter().enumerate() {
            let d = cosine_distance(query, &entry.vector)?;
            if best.is_none_or(|(_, b)| d <= b) {
                best = Some((slot, d));
            }
        }
        Ok(best.map(|(slot, d)| self.neighbor_at(slot, d)))
    }

    fn nearest_indexed(&self, query: &[(u32, f64)], scratch: &mut Scratch) -> Neighbor {
        scratch.prepare(self.entries.len());
        // Terms are visited in increasing index order, the same order in
        // which SparseVector::dot accumulates, so both paths agree bitwise.
        for &(term, qw) in query {
            let Some(list) = self.postings.get(term as usize) else {
                continue;
            };
            for posting in list {
                let slot = (posting.seq - self.front_seq) as usize;
                if !scratch.marked[slot] {
                    scratch.marked[slot] = true;
                    scratch.touched.push(slot);
                }
                scratch.dots[slot] += qw * posting.weight;
            }
        }

        let mut best: Option<(usize, f64)> = None;
        for &slot in &scratch.touched {
            let d = distance_from_dot(scratch.dots[slot]);
            match best {
                Some((b_slot, b)) if d > b || (d == b && slot < b_slot) => {}
                _ => best = Some((slot, d)),
            }
        }
        scratch.reset();

        match best {
            Some((slot, d)) if d < 1.0 => self.neighbor_at(slot, d),
            // Every non-empty entry is at distance exactly 1 (or nothing shares
            // a term): the newest non-empty entry wins the tie.
            _ => match self.entries.iter().rposition(|e| !e.vector.is_empty()) {
                Some(slot) => self.neighbor_at(slot, 1.0),
                None => self.neighbor_at(self.entries.len() - 1, 2.0),
            },
        }
    }

    /// Full consistency check of the inverted index against the entries.
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() > self.capacity {
            return Err(Error::Invariant(format!(
                "window holds {} entries, capacity {}",
                self.entries.len(),
                self.capacity
            )));
        }
        let mut expected: Vec<Vec<(u64, f64)>> = vec![Vec::new(); self.postings.len()];
        for (slot, entry) in self.entries.iter().enumerate() {
            if let DocVector::Sparse(sparse) = &entry.vector {
                for &(term, w) in sparse.pairs() {
                    let Some(list) = expected.get_mut(term as usize) else {
                        return Err(Error::Invariant(format!("term {term} has no posting list")));
                    };
                    list.push((self.front_seq + slot as u64, w));
                }
            }
        }
        for (term, (actual, expected)) in self.postings.iter().zip(&expected).enumerate() {
            let actual: Vec<(u64, f64)> = actual.iter().map(|p| (p.seq, p.weight)).collect();
            if &actual != expected {
                return Err(Error::Invariant(format!(
                    "posting list of term {term} does not mirror the window"
                )));
            }
        }
        Ok(())
    }
}
