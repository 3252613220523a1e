//! Clustering and classification scores.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ThreadAssignment;
use crate::corpus::Corpus;
use crate::{Error, Result};

/// Precision, recall and F1 of a cluster against an event.
///
/// An empty cluster has precision 0.
pub fn pair_f1<T: Eq + std::hash::Hash>(
    event_members: &HashSet<T>,
    cluster_members: &HashSet<T>,
) -> Result<(f64, f64, f64)> {
    if event_members.is_empty() {
        return Err(Error::invalid("event has no members"));
    }
    let (small, large) = if event_members.len() <= cluster_members.len() {
        (event_members, cluster_members)
    } else {
        (cluster_members, event_members)
    };
    let overlap = small.iter().filter(|d| large.contains(*d)).count();
    Ok(f1_from_counts(overlap, event_members.len(), cluster_members.len()))
}

fn f1_from_counts(overlap: usize, event_size: usize, cluster_size: usize) -> (f64, f64, f64) {
    if overlap == 0 {
        return (0.0, 0.0, 0.0);
    }
    let precision = overlap as f64 / cluster_size as f64;
    let recall = overlap as f64 / event_size as f64;
    // Same value as 2pr / (p + r), without the intermediate rounding.
    let f1 = 2.0 * overlap as f64 / (event_size + cluster_size) as f64;
    (precision, recall, f1)
}

/// Event id of every annotated document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoldLabels {
    labels: BTreeMap<String, String>,
}

impl GoldLabels {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        corpus
            .iter()
            .filter_map(|t| t.event_id.as_ref().map(|e| (t.id.clone(), e.clone())))
            .collect()
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, event_id: impl Into<String>) {
        self.labels.insert(doc_id.into(), event_id.into());
    }

    pub fn get(&self, doc_id: &str) -> Option<&str> {
        self.labels.get(doc_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.labels.iter().map(|(d, e)| (d.as_str(), e.as_str()))
    }

    /// Members of every event, keyed by event id.
    pub fn events(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut events: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (doc, event) in self.iter() {
            events.entry(event).or_default().push(doc);
        }
        events
    }
}

impl<D: Into<String>, E: Into<String>> FromIterator<(D, E)> for GoldLabels {
    fn from_iter<I: IntoIterator<Item = (D, E)>>(iter: I) -> Self {
        GoldLabels {
            labels: iter.into_iter().map(|(d, e)| (d.into(), e.into())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatch {
    pub event_id: String,
    pub cluster_id: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub event_size: usize,
    /// Annotated members of the matched cluster.
    pub cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub score: f64,
    pub n_events: usize,
    /// Distinct clusters in the assignment, annotated or not.
    pub n_clusters: usize,
    pub per_event: Vec<EventMatch>,
}

impl EvalReport {
    /// Check the internal consistency of the report.
    pub fn check(&self) -> Result<()> {
        if self.per_event.len() != self.n_events {
            return Err(Error::Invariant("per-event rows do not match n_events".into()));
        }
        for m in &self.per_event {
            for v in [m.precision, m.recall, m.f1] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Invariant(format!(
                        "score {v} of event {} outside [0, 1]",
                        m.event_id
                    )));
                }
            }
        }
        let mean = self.per_event.iter().map(|m| m.f1).sum::<f64>() / self.n_events as f64;
        if (mean - self.score).abs() > 1e-12 || !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Invariant(format!(
                "score {} differs from the per-event mean {mean}",
                self.score
            )));
        }
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .per_event
            .iter()
            .map(|m| m.event_id.len())
            .chain(Some(5))
            .max()
            .unwrap_or(5);
        writeln!(
            f,
            "{:<width$}  {:>8}  {:>6}  {:>7}  {:>9}  {:>6}  {:>6}",
            "event", "cluster", "size", "matched", "precision", "recall", "f1"
        )?;
        for m in &self.per_event {
            writeln!(
                f,
                "{:<width$}  {:>8}  {:>6}  {:>7}  {:>9.4}  {:>6.4}  {:>6.4}",
                m.event_id, m.cluster_id, m.event_size, m.cluster_size, m.precision, m.recall, m.f1
            )?;
        }
        write!(
            f,
            "best-matching F1 = {:.2}%  ({} events, {} clusters)",
            100.0 * self.score,
            self.n_events,
            self.n_clusters
        )
    }
}

/// Best-matching F1 of a thread assignment.
pub fn best_matching_f1(assignment: &ThreadAssignment, gold: &GoldLabels) -> Result<EvalReport> {
    best_matching_f1_labels(
        assignment.rows().iter().map(|r| (r.doc_id.as_str(), r.thread)),
        gold,
    )
}

/// Best-matching F1 of any labelling `doc id → cluster id`.
///
/// Every event is matched to the cluster with the highest F1 (lowest cluster
/// id on ties); several events may pick the same cluster. The score is the
/// unweighted mean over events. Only annotated documents count on both sides.
pub fn best_matching_f1_labels<'a, I>(clusters: I, gold: &GoldLabels) -> Result<EvalReport>
where
    I: IntoIterator<Item = (&'a str, u32)>,
{
    if gold.is_empty() {
        return Err(Error::invalid("gold labels are empty"));
    }
    let mut cluster_of: HashMap<&str, u32> = HashMap::new();
    let mut all_clusters = HashSet::new();
    for (doc, cluster) in clusters {
        all_clusters.insert(cluster);
        cluster_of.insert(doc, cluster);
    }

    let mut annotated_size: HashMap<u32, usize> = HashMap::new();
    for (doc, _) in gold.iter() {
        let cluster = *cluster_of
            .get(doc)
            .ok_or_else(|| Error::MissingAssignment(doc.to_owned()))?;
        *annotated_size.entry(cluster).or_default() += 1;
    }

    let events: Vec<(&str, Vec<&str>)> = gold.events().into_iter().collect();
    let per_event: Vec<EventMatch> = events
        .par_iter()
        .map(|(event, members)| {
            let mut overlap: BTreeMap<u32, usize> = BTreeMap::new();
            for doc in members {
                *overlap.entry(cluster_of[doc]).or_default() += 1;
            }
            let mut best: Option<EventMatch> = None;
            // Ascending cluster ids, so strict improvement keeps the lowest id.
            for (&cluster, &k) in &overlap {
                let size = annotated_size[&cluster];
                let (precision, recall, f1) = f1_from_counts(k, members.len(), size);
                if best.as_ref().is_none_or(|b| f1 > b.f1) {
                    best = Some(EventMatch {
                        event_id: (*event).to_owned(),
                        cluster_id: cluster,
                        precision,
                        recall,
                        f1,
                        event_size: members.len(),
                        cluster_size: size,
                    });
                }
            }
            best.expect("events have at least one member")
        })
        .collect();

    let score = per_event.iter().map(|m| m.f1).sum::<f64>() / per_event.len() as f64;
    let report = EvalReport {
        score,
        n_events: per_event.len(),
        n_clusters: all_clusters.len(),
        per_event,
    };
    report.check()?;
    Ok(report)
}

/// Unweighted mean over gold classes of the one-vs-rest F1.
///
/// A gold class never predicted scores 0.
pub fn macro_f1(
    predicted: &BTreeMap<String, String>,
    gold: &BTreeMap<String, String>,
) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::invalid("gold labels are empty"));
    }
    if predicted.len() != gold.len() || predicted.keys().zip(gold.keys()).any(|(a, b)| a != b) {
        let missing = gold
            .keys()
            .find(|k| !predicted.contains_key(*k))
            .or_else(|| predicted.keys().find(|k| !gold.contains_key(*k)));
        return Err(Error::invalid(format!(
            "predicted and gold cover different documents (first difference: {:?})",
            missing.map(String::as_str).unwrap_or("?")
        )));
    }

    let classes: BTreeSet<&str> = gold.values().map(String::as_str).collect();
    let mut tp: HashMap<&str, usize> = HashMap::new();
    let mut fp: HashMap<&str, usize> = HashMap::new();
    let mut fn_: HashMap<&str, usize> = HashMap::new();
    for (doc, g) in gold {
        let p = &predicted[doc];
        if p == g {
            *tp.entry(g).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fn_.entry(g).or_default() += 1;
        }
    }
    let total: f64 = classes
        .iter()
        .map(|c| {
            let tp = tp.get(c).copied().unwrap_or(0);
            if tp == 0 {
                return 0.0;
            }
            let denom = 2 * tp + fp.get(c).copied().unwrap_or(0) + fn_.get(c).copied().unwrap_or(0);
            2.0 * tp as f64 / denom as f64
        })
        .sum();
    Ok(total / classes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> HashSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn labels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn pair_f1_examples() {
        assert_eq!(pair_f1(&set(&["a", "b"]), &set(&["a", "b"])).unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(pair_f1(&set(&["a"]), &set(&["b"])).unwrap(), (0.0, 0.0, 0.0));
        assert_eq!(pair_f1(&set(&["a"]), &set(&[])).unwrap(), (0.0, 0.0, 0.0));
        let (p, r, f) = pair_f1(&set(&["a", "b", "c"]), &set(&["a", "b"])).unwrap();
        assert_eq!(p, 1.0);
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert!((f - 0.8).abs() < 1e-15);
        assert!(pair_f1(&set(&[]), &set(&["a"])).is_err());
    }

    #[test]
    fn worked_matching_example() {
        let gold: GoldLabels = [("a", "e1"), ("b", "e1"), ("c", "e1"), ("d", "e2"), ("e", "e2")]
            .into_iter()
            .collect();
        let clusters = [("a", 1), ("b", 1), ("c", 2), ("d", 2), ("e", 2)];
        let report = best_matching_f1_labels(clusters, &gold).unwrap();
        assert!((report.score - 0.8).abs() < 1e-12);
        assert_eq!(report.per_event[0].cluster_id, 1);
        assert_eq!(report.per_event[1].cluster_id, 2);
        assert_eq!(report.n_clusters, 2);
    }

    #[test]
    fn ties_pick_lower_cluster_and_reuse_is_allowed() {
        let gold: GoldLabels = [("a", "e1"), ("b", "e1"), ("c", "e2")].into_iter().collect();
        // e1 splits evenly over clusters 7 and 3.
        let report = best_matching_f1_labels([("a", 7), ("b", 3), ("c", 5)], &gold).unwrap();
        assert_eq!(report.per_event[0].cluster_id, 3);
        let merged = best_matching_f1_labels([("a", 0), ("b", 0), ("c", 0)], &gold).unwrap();
        assert!(merged.per_event.iter().all(|m| m.cluster_id == 0));
    }

    #[test]
    fn unannotated_documents_are_ignored() {
        let gold: GoldLabels = [("a", "e1"), ("b", "e1")].into_iter().collect();
        let report =
            best_matching_f1_labels([("a", 0), ("x", 0), ("y", 0), ("b", 0), ("z", 1)], &gold).unwrap();
        assert_eq!(report.score, 1.0);
        assert_eq!(report.n_clusters, 2);
    }

    #[test]
    fn missing_assignment_and_empty_gold() {
        let gold: GoldLabels = [("a", "e1"), ("b", "e1")].into_iter().collect();
        assert!(matches!(
            best_matching_f1_labels([("a", 0)], &gold),
            Err(Error::MissingAssignment(id)) if id == "b"
        ));
        assert!(best_matching_f1_labels([("a", 0)], &GoldLabels::default()).is_err());
    }

    #[test]
    fn report_table_mentions_score() {
        let gold: GoldLabels = [("a", "e1")].into_iter().collect();
        let text = best_matching_f1_labels([("a", 0)], &gold).unwrap().to_string();
        assert!(text.contains("best-matching F1 = 100.00%"));
    }

    #[test]
    fn macro_f1_examples() {
        let gold = labels(&[("1", "x"), ("2", "x"), ("3", "y"), ("4", "y")]);
        assert_eq!(macro_f1(&gold, &gold).unwrap(), 1.0);
        let swapped = labels(&[("1", "y"), ("2", "y"), ("3", "x"), ("4", "x")]);
        assert_eq!(macro_f1(&swapped, &gold).unwrap(), 0.0);
        let fewer = labels(&[("1", "x")]);
        assert!(macro_f1(&fewer, &gold).is_err());
        let other = labels(&[("1", "x"), ("2", "x"), ("3", "y"), ("5", "y")]);
        assert!(macro_f1(&other, &gold).is_err());
    }

    #[test]
    fn macro_f1_three_classes_by_confusion_matrix() {
        // gold:      a a a b b c
        // predicted: a a b b c c
        let gold = labels(&[("1", "a"), ("2", "a"), ("3", "a"), ("4", "b"), ("5", "b"), ("6", "c")]);
        let pred = labels(&[("1", "a"), ("2", "a"), ("3", "b"), ("4", "b"), ("5", "c"), ("6", "c")]);
        // a: tp2 fp0 fn1 -> 4/5; b: tp1 fp1 fn1 -> 2/4; c: tp1 fp1 fn0 -> 2/3
        let expected = (0.8 + 0.5 + 2.0 / 3.0) / 3.0;
        assert!((macro_f1(&pred, &gold).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_counts_unpredicted_class_as_zero() {
        let gold = labels(&[("1", "a"), ("2", "b")]);
        let pred = labels(&[("1", "a"), ("2", "a")]);
        // a: tp1 fp1 fn0 -> 2/3; b: 0
        assert!((macro_f1(&pred, &gold).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    fn instance() -> impl Strategy<Value = (Vec<u32>, Vec<Option<u8>>)> {
        (1usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u32..8, n),
                proptest::collection::vec(proptest::option::weighted(0.8, 0u8..5), n),
            )
        })
    }

    proptest! {
        #[test]
        fn relabelling_clusters_keeps_the_score((clusters, events) in instance(), shift in 1u32..100) {
            let ids: Vec<String> = (0..clusters.len()).map(|i| format!("d{i}")).collect();
            let gold: GoldLabels = ids.iter().zip(&events)
                .filter_map(|(d, e)| e.map(|e| (d.clone(), format!("e{e}"))))
                .collect();
            prop_assume!(!gold.is_empty());
            let base = best_matching_f1_labels(ids.iter().map(String::as_str).zip(clusters.iter().copied()), &gold).unwrap();
            // Reverse the id order and shift: a bijection on cluster ids.
            let relabelled = best_matching_f1_labels(
                ids.iter().map(String::as_str).zip(clusters.iter().map(|c| 1000 - c * shift)),
                &gold,
            ).unwrap();
            prop_assert!((base.score - relabelled.score).abs() < 1e-12);
        }

        #[test]
        fn perfect_score_iff_partitions_agree((clusters, events) in instance()) {
            let ids: Vec<String> = (0..clusters.len()).map(|i| format!("d{i}")).collect();
            let gold: GoldLabels = ids.iter().zip(&events)
                .filter_map(|(d, e)| e.map(|e| (d.clone(), format!("e{e}"))))
                .collect();
            prop_assume!(!gold.is_empty());
            let report = best_matching_f1_labels(ids.iter().map(String::as_str).zip(clusters.iter().copied()), &gold).unwrap();
            report.check().unwrap();
            // Partitions agree on annotated docs iff the event→cluster relation is a bijection.
            let mut ev_to_cl: HashMap<u8, HashSet<u32>> = HashMap::new();
            let mut cl_to_ev: HashMap<u32, HashSet<u8>> = HashMap::new();
            for (c, e) in clusters.iter().zip(&events) {
                if let Some(e) = e {
                    ev_to_cl.entry(*e).or_default().insert(*c);
                    cl_to_ev.entry(*c).or_default().insert(*e);
                }
            }
            let same = ev_to_cl.values().all(|s| s.len() == 1) && cl_to_ev.values().all(|s| s.len() == 1);
            prop_assert_eq!(report.score == 1.0, same);
        }

        #[test]
        fn gold_partition_scores_one(events in proptest::collection::vec(0u8..6, 1..50)) {
            let gold: GoldLabels = events.iter().enumerate().map(|(i, e)| (format!("d{i}"), format!("e{e}"))).collect();
            let ids: Vec<String> = (0..events.len()).map(|i| format!("d{i}")).collect();
            let report = best_matching_f1_labels(ids.iter().map(String::as_str).zip(events.iter().map(|&e| u32::from(e) * 3)), &gold).unwrap();
            prop_assert!((report.score - 1.0).abs() < 1e-12);
        }

        #[test]
        fn macro_f1_ignores_class_names(pairs in proptest::collection::vec((0u8..4, 0u8..4), 1..40)) {
            let gold: BTreeMap<String, String> = pairs.iter().enumerate().map(|(i, (g, _))| (format!("d{i:03}"), format!("c{g}"))).collect();
            let pred: BTreeMap<String, String> = pairs.iter().enumerate().map(|(i, (_, p))| (format!("d{i:03}"), format!("c{p}"))).collect();
            let rename = |m: &BTreeMap<String, String>| -> BTreeMap<String, String> {
                m.iter().map(|(k, v)| (k.clone(), format!("renamed-{}", v.chars().rev().collect::<String>()))).collect()
            };
            let a = macro_f1(&pred, &gold).unwrap();
            let b = macro_f1(&rename(&pred), &rename(&gold)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
