mod common;

use common::{dense_instance, idf_source, naive_fsd, separable_corpus};
use fsd_stream::cluster::{fsd_cluster_with_backend, NeighborTrace, NnBackend};
use fsd_stream::{best_matching_f1, fsd_cluster, sweep_threshold, FsdParams, GoldLabels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sequential_clustering_matches_naive_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..25 {
        let n = rng.gen_range(1..200);
        let dim = rng.gen_range(2..12);
        let inst = dense_instance(&mut rng, n, dim);
        let t = rng.gen_range(0.0..1.0);
        let w = rng.gen_range(5..=50);
        let got = fsd_cluster(&inst.corpus, &inst.vectors, FsdParams::new(t, w, 1).unwrap()).unwrap();
        let threads: Vec<u32> = got.rows().iter().map(|r| r.thread).collect();
        assert_eq!(threads, naive_fsd(&inst.raw, t, w), "case {case}, t={t}, w={w}");
        got.validate().unwrap();
    }
}

#[test]
fn replayed_trace_equals_direct_clustering() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let inst = dense_instance(&mut rng, 150, 6);
        let w = rng.gen_range(3..40);
        for batch in [1, 3, 8] {
            let trace = NeighborTrace::compute(&inst.corpus, &inst.vectors, w, batch, NnBackend::default()).unwrap();
            for k in 0..=20 {
                let t = k as f64 * 0.06;
                let direct = fsd_cluster(&inst.corpus, &inst.vectors, FsdParams::new(t, w, batch).unwrap()).unwrap();
                assert_eq!(trace.assign(t), direct, "t={t}, w={w}, batch={batch}");
            }
        }
    }
}

#[test]
fn sparse_backends_give_the_same_threads() {
    let corpus = separable_corpus(4, 60, 3);
    let source = idf_source(&corpus, 1);
    for batch in [1, 8] {
        let params = FsdParams::new(0.7, 50, batch).unwrap();
        let a = fsd_cluster_with_backend(&corpus, &source, params, NnBackend::InvertedIndex).unwrap();
        let b = fsd_cluster_with_backend(&corpus, &source, params, NnBackend::FlatScan).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn separable_events_are_recovered() {
    let corpus = separable_corpus(5, 100, 11);
    let source = idf_source(&corpus, 1);
    let gold = GoldLabels::from_corpus(&corpus);
    let assignment = fsd_cluster(&corpus, &source, FsdParams::new(0.9, 500, 1).unwrap()).unwrap();
    let report = best_matching_f1(&assignment, &gold).unwrap();
    assert_eq!(report.score, 1.0);
    assert_eq!(assignment.n_threads(), 5);
}

#[test]
fn first_batch_cannot_link_its_own_members() {
    // Every document of the opening batch sees an empty window.
    let corpus = separable_corpus(5, 100, 11);
    let source = idf_source(&corpus, 1);
    let assignment = fsd_cluster(&corpus, &source, FsdParams::new(0.9, 500, 8).unwrap()).unwrap();
    assert!(assignment.rows()[..8].iter().all(|r| r.is_first));
}

#[test]
fn sweep_finds_a_perfect_threshold() {
    let corpus = separable_corpus(2, 30, 5);
    let source = idf_source(&corpus, 1);
    let gold = GoldLabels::from_corpus(&corpus);
    let grid: Vec<f64> = (2..=95).map(|k| k as f64 / 100.0).collect();
    let table = sweep_threshold(&corpus, &source, 100, 1, &grid, &gold).unwrap();
    assert_eq!(table.rows.len(), grid.len());
    assert_eq!(table.best_row().f1, 1.0);
    assert!(table.rows.windows(2).all(|p| p[0].threshold < p[1].threshold));
    assert!(table.rows.windows(2).all(|p| p[0].n_clusters >= p[1].n_clusters));

    let single = sweep_threshold(&corpus, &source, 100, 1, &[0.5], &gold).unwrap();
    assert_eq!(single.rows.len(), 1);
    assert_eq!(single.best, 0);
    assert!(sweep_threshold(&corpus, &source, 100, 1, &[], &gold).is_err());
    assert!(sweep_threshold(&corpus, &source, 100, 1, &[2.5], &gold).is_err());
}
