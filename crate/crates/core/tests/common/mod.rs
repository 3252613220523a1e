//! Oracles and synthetic data shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::Arc;

use fsd_stream::vectorize::{IdfVectorizer, PrecomputedVectors};
use fsd_stream::{
    build_vocabulary, tokenize, CountingMode, Corpus, DenseVector, DocVector, SparseVector,
    TokenizerConfig, Tweet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

/// Plain transcription of sequential first story detection over dense
/// vectors: one document at a time, brute-force neighbour search over the
/// last `w` documents, newest document wins ties.
pub fn naive_fsd(vectors: &[Vec<f64>], t: f64, w: usize) -> Vec<u32> {
    let mut window: Vec<(usize, u32)> = Vec::new();
    let mut threads = Vec::with_capacity(vectors.len());
    let mut next = 0u32;
    for (d, v) in vectors.iter().enumerate() {
        let thread = if window.is_empty() {
            next += 1;
            next - 1
        } else {
            let mut best_dist = f64::INFINITY;
            let mut best_thread = 0;
            for &(other, other_thread) in &window {
                let dist = naive_distance(v, &vectors[other]);
                if dist <= best_dist {
                    best_dist = dist;
                    best_thread = other_thread;
                }
            }
            if best_dist < t {
                best_thread
            } else {
                next += 1;
                next - 1
            }
        };
        if window.len() >= w {
            window.remove(0);
        }
        window.push((d, thread));
        threads.push(thread);
    }
    threads
}

/// Cosine distance of two unit-or-zero vectors; zero vectors are at 2.
pub fn naive_distance(a: &[f64], b: &[f64]) -> f64 {
    let zero = |v: &[f64]| v.iter().all(|x| *x == 0.0);
    if zero(a) || zero(b) {
        return 2.0;
    }
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    DenseVector::normalized(v).unwrap().values().to_vec()
}

/// Corpus of `n` unannotated tweets `d00000, d00001, ...` one second apart.
pub fn plain_corpus(n: usize) -> Corpus {
    let tweets = (0..n)
        .map(|i| Tweet::new(format!("d{i:05}"), 1_000 + i as i64, "", None))
        .collect();
    Corpus::from_tweets("synthetic", "en", tweets).unwrap()
}

/// Random dense corpus with clustered structure, so that thresholds in
/// [0, 1] produce a mix of joins and new threads.
pub struct DenseInstance {
    pub corpus: Corpus,
    pub raw: Vec<Vec<f64>>,
    pub vectors: PrecomputedVectors,
}

pub fn dense_instance(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> DenseInstance {
    let n_centres = rng.gen_range(1..=8);
    let centres: Vec<Vec<f64>> = (0..n_centres).map(|_| random_unit(rng, dim)).collect();
    let spread: f64 = rng.gen_range(0.1..1.5);
    let corpus = plain_corpus(n);
    let mut raw = Vec::with_capacity(n);
    let mut vectors = PrecomputedVectors::new("random");
    for tweet in corpus.iter() {
        let vector = if rng.gen_bool(0.03) {
            DenseVector::zeros(dim)
        } else {
            let centre = &centres[rng.gen_range(0..n_centres)];
            let noisy: Vec<f64> = centre
                .iter()
                .map(|c| c + spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) / (dim as f64).sqrt())
                .collect();
            DenseVector::normalized(noisy).unwrap()
        };
        raw.push(vector.values().to_vec());
        vectors.insert(tweet.id.clone(), vector.into());
    }
    DenseInstance {
        corpus,
        raw,
        vectors,
    }
}

/// Random sparse unit vector with `nnz` distinct terms drawn from a Zipf
/// law over `vocab` terms.
pub fn random_sparse(rng: &mut impl Rng, vocab: u64, nnz: usize) -> DocVector {
    let zipf = Zipf::new(vocab, 1.05).unwrap();
    let pairs: Vec<(u32, f64)> = (0..nnz)
        .map(|_| (zipf.sample(rng) as u32 - 1, rng.gen_range(0.5..4.0)))
        .collect();
    SparseVector::from_weights(pairs).unwrap().into()
}

/// `n_events` events with disjoint vocabularies, `per_event` tweets each,
/// timestamps interleaved round-robin. Every tweet carries its event's
/// hashtag and three words from the event's own pool.
pub fn separable_corpus(n_events: usize, per_event: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tweets = Vec::with_capacity(n_events * per_event);
    for i in 0..per_event {
        for e in 0..n_events {
            let mut words = vec![format!("#event{e}")];
            for _ in 0..3 {
                words.push(format!("e{e}word{}", rng.gen_range(0..8)));
            }
            let position = (i * n_events + e) as i64;
            tweets.push(Tweet::new(
                format!("s{position:05}"),
                1_600_000_000 + 60 * position,
                words.join(" "),
                Some(&format!("event-{e}")),
            ));
        }
    }
    Corpus::from_tweets("separable", "en", tweets).unwrap()
}

/// idf vectorizer with statistics counted over `corpus`.
pub fn idf_source(corpus: &Corpus, df_min: u64) -> IdfVectorizer {
    let config = TokenizerConfig::default();
    let docs: Vec<Vec<String>> = corpus.iter().map(|t| tokenize(&t.text, &config)).collect();
    let vocab = build_vocabulary(&docs, &HashSet::new(), df_min, CountingMode::Dataset).unwrap();
    IdfVectorizer::new(Arc::new(vocab), config)
}
