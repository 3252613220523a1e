//! One-vs-rest kernel SVM with the triangular kernel `k(x, y) = 1 - ||x - y||`.
//!
//! The dual is solved with SMO using second-order working set selection. The
//! kernel is only conditionally positive definite, so non-positive curvature
//! along a pair is replaced by a tiny positive constant.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_train_test, Corpus};
use crate::evaluate::macro_f1;
use crate::vectorize::{DocVector, VectorSource};
use crate::{Error, Result};

pub const KERNEL_NAME: &str = "triangular";
pub const DEFAULT_C: f64 = 1.0;
pub const KKT_TOLERANCE: f64 = 1e-3;

const TAU: f64 = 1e-12;
// Training sets up to this size get a precomputed Gram matrix shared by all
// binary problems; larger ones compute kernel rows on demand.
const FULL_GRAM_LIMIT: usize = 4096;
const ROW_CACHE_BYTES: usize = 256 << 20;

pub fn triangular_kernel(x: &DocVector, y: &DocVector) -> Result<f64> {
    Ok(1.0 - x.squared_distance(y)?.sqrt())
}

/// Binary classifier `label` vs rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSvmModel {
    pub label: String,
    /// Indices into the owning model's support vector pool.
    pub support: Vec<usize>,
    /// `alpha_i * y_i` for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

impl KernelSvmModel {
    fn decision(&self, kernel_row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coefficients)
            .map(|(&s, &a)| a * kernel_row[s])
            .sum::<f64>()
            + self.bias
    }
}

/// All one-vs-rest models plus the support vectors they share.
#[derive(Debug, Clone)]
pub struct OvrModel {
    support_ids: Vec<String>,
    support_vectors: Arc<[DocVector]>,
    models: Vec<KernelSvmModel>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct PersistedModel {
    kernel: String,
    c: f64,
    support_ids: Vec<String>,
    models: Vec<KernelSvmModel>,
}

impl OvrModel {
    pub fn models(&self) -> &[KernelSvmModel] {
        &self.models
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|m| m.label.as_str())
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn support_ids(&self) -> &[String] {
        &self.support_ids
    }

    /// Decision value of every binary model, in model order.
    pub fn decision_values(&self, x: &DocVector) -> Result<Vec<f64>> {
        let row = self
            .support_vectors
            .iter()
            .map(|sv| triangular_kernel(sv, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.models.iter().map(|m| m.decision(&row)).collect())
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let persisted = PersistedModel {
            kernel: KERNEL_NAME.to_owned(),
            c: self.c,
            support_ids: self.support_ids.clone(),
            models: self.models.clone(),
        };
        serde_json::to_writer_pretty(writer, &persisted)
            .map_err(|e| Error::Invariant(format!("cannot serialize model: {e}")))
    }

    /// Load a model saved by [`OvrModel::save`]; `resolve` supplies the
    /// vector of each support vector id.
    pub fn load<R: Read>(
        reader: R,
        mut resolve: impl FnMut(&str) -> Result<DocVector>,
    ) -> Result<Self> {
        let persisted: PersistedModel = serde_json::from_reader(reader)
            .map_err(|e| Error::invalid(format!("malformed model file: {e}")))?;
        if persisted.kernel != KERNEL_NAME {
            return Err(Error::invalid(format!("unsupported kernel {:?}", persisted.kernel)));
        }
        for m in &persisted.models {
            if m.support.len() != m.coefficients.len()
                || m.support.iter().any(|&s| s >= persisted.support_ids.len())
            {
                return Err(Error::invalid(format!("inconsistent model for class {:?}", m.label)));
            }
        }
        let vectors = persisted
            .support_ids
            .iter()
            .map(|id| resolve(id))
            .collect::<Result<Vec<_>>>()?;
        let model = OvrModel {
            support_ids: persisted.support_ids,
            support_vectors: vectors.into(),
            models: persisted.models,
            c: persisted.c,
        };
        if model.models.is_empty() {
            return Err(Error::invalid("model file holds no classes"));
        }
        Ok(model)
    }
}

/// Label with the highest decision value; ties go to the smallest label.
pub fn predict(model: &OvrModel, x: &DocVector) -> Result<String> {
    let values = model.decision_values(x)?;
    let mut best: Option<(f64, &str)> = None;
    for (m, v) in model.models.iter().zip(values) {
        let better = match best {
            None => true,
            Some((bv, bl)) => v > bv || (v == bv && m.label.as_str() < bl),
        };
        if better {
            best = Some((v, m.label.as_str()));
        }
    }
    best.map(|(_, l)| l.to_owned())
        .ok_or_else(|| Error::invalid("model holds no classes"))
}

/// Kernel rows for the solver.
enum Gram<'a> {
    Full { n: usize, values: &'a [f64] },
    Lazy {
        vectors: &'a [DocVector],
        cache: HashMap<usize, Arc<[f64]>>,
        order: VecDeque<usize>,
        capacity: usize,
    },
}

/// Row-major kernel matrix of `vectors`.
fn gram_matrix(vectors: &[DocVector]) -> Result<Vec<f64>> {
    let n = vectors.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| triangular_kernel(&vectors[i], &vectors[j]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

impl<'a> Gram<'a> {
    fn lazy(vectors: &'a [DocVector]) -> Self {
        let per_row = vectors.len().max(1) * std::mem::size_of::<f64>();
        Gram::Lazy {
            vectors,
            cache: HashMap::new(),
            order: VecDeque::new(),
            capacity: (ROW_CACHE_BYTES / per_row).max(2),
        }
    }

    fn row(&mut self, i: usize) -> Result<Row<'a>> {
        match self {
            Gram::Full { n, values } => {
                let values: &'a [f64] = values;
                Ok(Row::Borrowed(&values[i * *n..(i + 1) * *n]))
            }
            Gram::Lazy {
                vectors,
                cache,
                order,
                capacity,
            } => {
                if let Some(row) = cache.get(&i) {
                    return Ok(Row::Shared(Arc::clone(row)));
                }
                let row: Arc<[f64]> = vectors
                    .iter()
                    .map(|v| triangular_kernel(&vectors[i], v))
                    .collect::<Result<Vec<_>>>()?
                    .into();
                if cache.len() >= *capacity {
                    if let Some(old) = order.pop_front() {
                        cache.remove(&old);
                    }
                }
                cache.insert(i, Arc::clone(&row));
                order.push_back(i);
                Ok(Row::Shared(row))
            }
        }
    }
}

enum Row<'a> {
    Borrowed(&'a [f64]),
    Shared(Arc<[f64]>),
}

impl std::ops::Deref for Row<'_> {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        match self {
            Row::Borrowed(r) => r,
            Row::Shared(r) => r,
        }
    }
}

/// Solution of one binary dual problem.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_i alpha_i y_i k(x_i, x) - rho`.
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve `min 1/2 a'Qa - e'a` s.t. `0 <= a <= c`, `y'a = 0`, with
/// `Q_ij = y_i y_j k(x_i, x_j)`. `order` fixes the scan order of the
/// working set selection.
fn solve_binary(gram: &mut Gram<'_>, y: &[f64], c: f64, order: &[usize]) -> Result<BinarySolution> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000_000);
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        // i: maximal violator in I_up.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for &t in order {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        let k_i = gram.row(i)?;

        // j: second-order selection over I_low.
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for &t in order {
            let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let yg = y[t] * grad[t];
            if yg >= g_max2 {
                g_max2 = yg;
            }
            let b = g_max + yg;
            if b > 0.0 {
                let a = 2.0 - 2.0 * k_i[t];
                let a = if a > 0.0 { a } else { TAU };
                let obj = -(b * b) / a;
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        let gap = g_max + g_max2;
        let j = match j_sel {
            Some(j) if gap >= KKT_TOLERANCE => j,
            _ => {
                converged = true;
                break;
            }
        };
        iterations += 1;

        let k_ij = k_i[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        // Q_ii = Q_jj = k(x, x) = 1.
        if y[i] != y[j] {
            let q_ij = y[i] * y[j] * k_ij;
            let mut quad = 2.0 + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let q_ij = y[i] * y[j] * k_ij;
            let mut quad = 2.0 - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let d_i = alpha[i] - old_i;
        let d_j = alpha[j] - old_j;
        let k_j = gram.row(j)?;
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k_i[t] * d_i + y[j] * k_j[t] * d_j);
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching the KKT tolerance");
    }

    // rho: average over free vectors, midpoint of the feasible range otherwise.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(BinarySolution {
        alpha,
        rho,
        iterations,
        converged,
    })
}

/// Train one binary model per class.
///
/// `train` pairs an id with its vector and label. The seed permutes the scan
/// order of the solver, so it only changes which of several equally good
/// pairs is optimised first.
pub fn train_ovr_svm(train: &[(String, DocVector, String)], c: f64, seed: u64) -> Result<OvrModel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    let classes: BTreeSet<&str> = train.iter().map(|(_, _, l)| l.as_str()).collect();
    if classes.len() < 2 {
        return Err(Error::invalid(format!(
            "training needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let vectors: Vec<DocVector> = train.iter().map(|(_, v, _)| v.clone()).collect();
    if let Some(first) = vectors.first() {
        for v in &vectors {
            first.squared_distance(v)?;
        }
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let full = if train.len() <= FULL_GRAM_LIMIT {
        Some(gram_matrix(&vectors)?)
    } else {
        None
    };
    let classes: Vec<&str> = classes.into_iter().collect();
    let solutions: Vec<(String, BinarySolution)> = classes
        .par_iter()
        .map(|&label| {
            let y: Vec<f64> = train
                .iter()
                .map(|(_, _, l)| if l == label { 1.0 } else { -1.0 })
                .collect();
            let mut gram = match &full {
                Some(values) => Gram::Full {
                    n: vectors.len(),
                    values,
                },
                None => Gram::lazy(&vectors),
            };
            let solution = solve_binary(&mut gram, &y, c, &order)?;
            Ok((label.to_owned(), solution))
        })
        .collect::<Result<_>>()?;

    let mut pool: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, s) in &solutions {
        for (t, &a) in s.alpha.iter().enumerate() {
            if a > 0.0 {
                pool.insert(t, 0);
            }
        }
    }
    for (slot, value) in pool.values_mut().enumerate() {
        *value = slot;
    }
    let models = solutions
        .into_iter()
        .map(|(label, s)| {
            let mut support = Vec::new();
            let mut coefficients = Vec::new();
            for (t, &a) in s.alpha.iter().enumerate() {
                if a > 0.0 {
                    if a > c {
                        return Err(Error::Invariant(format!("dual coefficient {a} exceeds C = {c}")));
                    }
                    support.push(pool[&t]);
                    coefficients.push(if train[t].2 == label { a } else { -a });
                }
            }
            Ok(KernelSvmModel {
                label,
                support,
                coefficients,
                bias: -s.rho,
                c,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrModel {
        support_ids: pool.keys().map(|&t| train[t].0.clone()).collect(),
        support_vectors: pool.keys().map(|&t| vectors[t].clone()).collect(),
        models,
        c,
    })
}

/// Macro-F1 of one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_support: usize,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub c: f64,
    pub train_fraction: f64,
    pub representation: String,
    pub runs: Vec<SeedRun>,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
}

impl ClassificationReport {
    /// `mean ± std` in percent with two decimals.
    pub fn summary(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6}  {:>7}  {:>6}  {:>7}  {:>8}", "seed", "train", "test", "support", "macro-F1")?;
        for r in &self.runs {
            writeln!(
                f,
                "{:>6}  {:>7}  {:>6}  {:>7}  {:>7.2}%",
                r.seed,
                r.n_train,
                r.n_test,
                r.n_support,
                100.0 * r.macro_f1
            )?;
        }
        write!(f, "{}: macro-F1 = {}", self.representation, self.summary())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub c: f64,
    pub train_fraction: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            c: DEFAULT_C,
            train_fraction: 0.5,
        }
    }
}

/// Train on a random split of the annotated tweets and score the rest, once
/// per seed.
pub fn run_classification<S: VectorSource + ?Sized>(
    corpus: &Corpus,
    source: &S,
    params: ClassifyParams,
    seeds: &[u64],
) -> Result<ClassificationReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds given"));
    }
    let annotated = corpus.annotated();
    let vectors: HashMap<&str, DocVector> = annotated
        .tweets()
        .par_iter()
        .map(|t| Ok((t.id.as_str(), source.vector(t)?)))
        .collect::<Result<_>>()?;

    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (train, test) = split_train_test(corpus, params.train_fraction, seed)?;
        if test.is_empty() {
            return Err(Error::invalid("test split is empty"));
        }
        let examples: Vec<(String, DocVector, String)> = train
            .iter()
            .map(|t| {
                let label = t.event_id.clone().unwrap_or_default();
                (t.id.clone(), vectors[t.id.as_str()].clone(), label)
            })
            .collect();
        let model = train_ovr_svm(&examples, params.c, seed)?;
        let predicted: BTreeMap<String, String> = test
            .tweets()
            .par_iter()
            .map(|t| Ok((t.id.clone(), predict(&model, &vectors[t.id.as_str()])?)))
            .collect::<Result<_>>()?;
        let gold: BTreeMap<String, String> = test
            .iter()
            .map(|t| (t.id.clone(), t.event_id.clone().unwrap_or_default()))
            .collect();
        runs.push(SeedRun {
            seed,
            n_train: train.len(),
            n_test: test.len(),
            n_support: model.support_ids.len(),
            macro_f1: macro_f1(&predicted, &gold)?,
        });
    }
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.macro_f1).sum::<f64>() / n;
    let var = runs.iter().map(|r| (r.macro_f1 - mean).powi(2)).sum::<f64>() / n;
    Ok(ClassificationReport {
        c: params.c,
        train_fraction: params.train_fraction,
        representation: source.describe(),
        runs,
        mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::{DenseVector, SparseVector};
    use proptest::prelude::*;
    use rand::Rng;

    fn unit(angle_deg: f64) -> DocVector {
        let a = angle_deg.to_radians();
        DenseVector::normalized(vec![a.cos(), a.sin()]).unwrap().into()
    }

    fn example(id: usize, angle: f64, label: &str) -> (String, DocVector, String) {
        (format!("x{id}"), unit(angle), label.to_owned())
    }

    #[test]
    fn kernel_examples() {
        let x = unit(30.0);
        assert_eq!(triangular_kernel(&x, &x).unwrap(), 1.0);
        let k = triangular_kernel(&unit(0.0), &unit(90.0)).unwrap();
        assert!((k - (1.0 - 2f64.sqrt())).abs() < 1e-12);
        let a = SparseVector::from_weights(vec![(0, 1.0)]).unwrap().into();
        let b = SparseVector::from_weights(vec![(1, 1.0)]).unwrap().into();
        assert!((triangular_kernel(&a, &b).unwrap() + 0.41421).abs() < 1e-5);
        assert!(triangular_kernel(&a, &unit(0.0)).is_err());
        let dense3: DocVector = DenseVector::normalized(vec![1.0, 0.0, 0.0]).unwrap().into();
        assert!(triangular_kernel(&dense3, &unit(0.0)).is_err());
    }

    #[test]
    fn kernel_ignores_scale_after_normalisation() {
        let raw = [0.3, -1.2, 2.0];
        let other = [1.0, 0.5, 0.25];
        let base = triangular_kernel(
            &DenseVector::normalized(raw.to_vec()).unwrap().into(),
            &DenseVector::normalized(other.to_vec()).unwrap().into(),
        )
        .unwrap();
        for s in [0.001, 3.0, 1e6] {
            let scaled = triangular_kernel(
                &DenseVector::normalized(raw.iter().map(|v| v * s).collect()).unwrap().into(),
                &DenseVector::normalized(other.iter().map(|v| v * s).collect()).unwrap().into(),
            )
            .unwrap();
            assert!((scaled - base).abs() < 1e-12);
        }
    }

    fn separable_set() -> Vec<(String, DocVector, String)> {
        let mut set = Vec::new();
        for i in 0..10 {
            set.push(example(i, 10.0 + 5.0 * i as f64, "east"));
            set.push(example(100 + i, 190.0 + 5.0 * i as f64, "west"));
        }
        set
    }

    #[test]
    fn separable_training_accuracy_is_perfect() {
        let train = separable_set();
        let model = train_ovr_svm(&train, DEFAULT_C, 1).unwrap();
        for (_, v, label) in &train {
            assert_eq!(&predict(&model, v).unwrap(), label);
        }
        for m in model.models() {
            assert!(m.coefficients.iter().all(|a| a.abs() <= m.c));
        }
    }

    #[test]
    fn xor_instance() {
        let train = vec![
            example(0, 0.0, "a"),
            example(1, 180.0, "a"),
            example(2, 90.0, "b"),
            example(3, 270.0, "b"),
        ];
        let model = train_ovr_svm(&train, DEFAULT_C, 7).unwrap();
        for (_, v, label) in &train {
            assert_eq!(&predict(&model, v).unwrap(), label);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let train = vec![example(0, 0.0, "a"), example(1, 10.0, "a")];
        assert!(train_ovr_svm(&train, 1.0, 0).is_err());
        assert!(train_ovr_svm(&separable_set(), 0.0, 0).is_err());
    }

    #[test]
    fn predict_breaks_ties_by_label() {
        let model = OvrModel {
            support_ids: vec![],
            support_vectors: Vec::new().into(),
            models: ["b", "a", "c"]
                .iter()
                .map(|l| KernelSvmModel {
                    label: l.to_string(),
                    support: vec![],
                    coefficients: vec![],
                    bias: 0.5,
                    c: 1.0,
                })
                .collect(),
            c: 1.0,
        };
        assert_eq!(predict(&model, &unit(0.0)).unwrap(), "a");
    }

    #[test]
    fn persistence_round_trip() {
        let train = separable_set();
        let model = train_ovr_svm(&train, 0.5, 3).unwrap();
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(json["kernel"], "triangular");
        assert_eq!(json["c"], 0.5);
        let lookup: HashMap<String, DocVector> =
            train.iter().map(|(id, v, _)| (id.clone(), v.clone())).collect();
        let loaded = OvrModel::load(buf.as_slice(), |id| {
            lookup.get(id).cloned().ok_or_else(|| Error::MissingVector(id.to_owned()))
        })
        .unwrap();
        for angle in [0.0, 45.0, 100.0, 200.0, 300.0] {
            let x = unit(angle);
            assert_eq!(loaded.decision_values(&x).unwrap(), model.decision_values(&x).unwrap());
        }
        let missing = OvrModel::load(buf.as_slice(), |id| Err(Error::MissingVector(id.to_owned())));
        assert!(matches!(missing, Err(Error::MissingVector(_))));
    }

    #[test]
    fn predictions_do_not_depend_on_training_order() {
        let train = separable_set();
        let mut reversed = train.clone();
        reversed.reverse();
        let a = train_ovr_svm(&train, 1.0, 11).unwrap();
        let b = train_ovr_svm(&reversed, 1.0, 11).unwrap();
        // Held-out points drawn from the two class arcs.
        for angle in (0..14).flat_map(|k| [2.5 + 5.0 * k as f64, 182.5 + 5.0 * k as f64]) {
            let x = unit(angle);
            assert_eq!(predict(&a, &x).unwrap(), predict(&b, &x).unwrap(), "angle {angle}");
        }
    }

    /// Euclidean projection onto `{0 <= a <= c, y'a = 0}` by bisection on
    /// the multiplier of the equality constraint.
    fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
        let at = |lambda: f64| -> Vec<f64> {
            v.iter().zip(y).map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c)).collect()
        };
        let g = |lambda: f64| -> f64 { at(lambda).iter().zip(y).map(|(a, yi)| a * yi).sum() };
        let (mut lo, mut hi) = (-1e3, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    }

    fn dual_objective(alpha: &[f64], q: &[Vec<f64>]) -> f64 {
        let n = alpha.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += alpha[i] * alpha[j] * q[i][j];
            }
        }
        0.5 * quad - alpha.iter().sum::<f64>()
    }

    #[test]
    fn smo_agrees_with_projected_gradient_reference() {
        // 30 noisy points on the unit circle; overlapping classes so some
        // multipliers sit at the bound.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let c = 2.0;
        let mut vectors = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let positive = i % 2 == 0;
            let centre = if positive { 40.0 } else { 160.0 };
            vectors.push(unit(centre + rng.gen_range(-70.0..70.0)));
            y.push(if positive { 1.0 } else { -1.0 });
        }
        let n = vectors.len();
        let k: Vec<Vec<f64>> = vectors
            .iter()
            .map(|a| vectors.iter().map(|b| triangular_kernel(a, b).unwrap()).collect())
            .collect();
        let q: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect())
            .collect();

        let order: Vec<usize> = (0..n).collect();
        let matrix = gram_matrix(&vectors).unwrap();
        let smo = solve_binary(&mut Gram::Full { n, values: &matrix }, &y, c, &order).unwrap();
        assert!(smo.converged);
        assert!(smo.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        assert!(smo.alpha.iter().zip(&y).map(|(a, yi)| a * yi).sum::<f64>().abs() < 1e-9);

        // Reference: projected gradient with step 1/L, L bounded by the
        // largest absolute row sum.
        let lipschitz = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let mut alpha = vec![0.0; n];
        for _ in 0..200_000 {
            let grad: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| q[i][j] * alpha[j]).sum::<f64>() - 1.0)
                .collect();
            let step: Vec<f64> = alpha.iter().zip(&grad).map(|(a, g)| a - g / lipschitz).collect();
            alpha = project(&step, &y, c);
        }
        let reference = dual_objective(&alpha, &q);
        let ours = dual_objective(&smo.alpha, &q);
        assert!((ours - reference).abs() < 1e-3 * reference.abs().max(1.0), "{ours} vs {reference}");

        // Bias from the reference's free multipliers.
        let f_ref = |t: usize| (0..n).map(|j| alpha[j] * y[j] * k[j][t]).sum::<f64>();
        let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > 1e-6 && alpha[i] < c - 1e-6).collect();
        assert!(!free.is_empty());
        let b_ref = free.iter().map(|&i| y[i] - f_ref(i)).sum::<f64>() / free.len() as f64;
        for t in 0..n {
            let ours = (0..n).map(|j| smo.alpha[j] * y[j] * k[j][t]).sum::<f64>() - smo.rho;
            let theirs = f_ref(t) + b_ref;
            if theirs.abs() > 0.05 {
                assert_eq!(ours > 0.0, theirs > 0.0, "point {t}: {ours} vs {theirs}");
            }
            assert!((ours - theirs).abs() < 0.05, "point {t}: {ours} vs {theirs}");
        }
    }

    #[test]
    fn lazy_rows_match_full_matrix() {
        let vectors: Vec<DocVector> = (0..40).map(|i| unit(9.0 * i as f64)).collect();
        let y: Vec<f64> = (0..40).map(|i| if (i / 10) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let order: Vec<usize> = (0..40).collect();
        let matrix = gram_matrix(&vectors).unwrap();
        let full = solve_binary(&mut Gram::Full { n: 40, values: &matrix }, &y, 1.0, &order).unwrap();
        let mut lazy = Gram::lazy(&vectors);
        if let Gram::Lazy { capacity, .. } = &mut lazy {
            *capacity = 3;
        }
        let lazy = solve_binary(&mut lazy, &y, 1.0, &order).unwrap();
        assert_eq!(full.alpha, lazy.alpha);
        assert_eq!(full.rho, lazy.rho);
    }

    #[test]
    fn classification_run_reports_mean_and_std() {
        use crate::corpus::Tweet;
        use crate::vectorize::PrecomputedVectors;
        let mut tweets = Vec::new();
        let mut vectors = PrecomputedVectors::new("toy");
        for i in 0..40 {
            let (event, angle) = if i % 2 == 0 { ("e1", 20.0) } else { ("e2", 200.0) };
            let id = format!("t{i}");
            vectors.insert(id.clone(), unit(angle + (i % 7) as f64));
            tweets.push(Tweet::new(id, 100 + i as i64, "", Some(event)));
        }
        tweets.push(Tweet::new("unlabelled", 5, "", None));
        let corpus = Corpus::from_tweets("toy", "en", tweets).unwrap();
        let report = run_classification(&corpus, &vectors, ClassifyParams::default(), &[1]).unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.std, 0.0);
        assert_eq!(report.runs[0].n_train + report.runs[0].n_test, 40);
        let report = run_classification(&corpus, &vectors, ClassifyParams::default(), &[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(report.mean, 1.0);
        assert_eq!(report.summary(), "100.00 ± 0.00");
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric_with_unit_diagonal(
            a in proptest::collection::vec(-5.0f64..5.0, 6),
            b in proptest::collection::vec(-5.0f64..5.0, 6),
        ) {
            let x: DocVector = DenseVector::normalized(a).unwrap().into();
            let y: DocVector = DenseVector::normalized(b).unwrap().into();
            prop_assert_eq!(triangular_kernel(&x, &y).unwrap(), triangular_kernel(&y, &x).unwrap());
            prop_assert_eq!(triangular_kernel(&x, &x).unwrap(), 1.0);
        }

        #[test]
        fn dual_coefficients_respect_the_box(seed in 0u64..1000, c in 0.05f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let train: Vec<_> = (0..24)
                .map(|i| example(i, rng.gen_range(0.0..360.0), ["a", "b", "c"][i % 3]))
                .collect();
            let model = train_ovr_svm(&train, c, seed).unwrap();
            for m in model.models() {
                prop_assert!(m.coefficients.iter().all(|a| a.abs() <= c));
            }
        }
    }
}
