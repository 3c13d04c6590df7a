//! Gradient-boosted regression trees with squared-error loss.
//!
//! Trees are grown depth-first with an exhaustive axis-aligned split search
//! over presorted feature columns. Training is fully deterministic: rows are
//! put into a canonical order first, so any permutation of the training set
//! produces a bit-identical model.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Clip, EncodeTask};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const NUM_FEATURES: usize = 9;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "height",
    "num_pixels",
    "framerate",
    "num_frames",
    "E",
    "h",
    "luma",
    "preset",
    "cqp",
];
const MODEL_FORMAT: &str = "corpus-eta/gbrt";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GbrtError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("target {0} is not finite")]
    NonFiniteTarget(usize),
    #[error("feature {col} of row {row} is not finite")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("model expects {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("model document: {0}")]
    Document(String),
}

/// Model input for one encode task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub height: f64,
    pub num_pixels: f64,
    pub framerate: f64,
    pub num_frames: f64,
    pub spatial_energy: f64,
    pub temporal_energy: f64,
    pub luma: f64,
    /// 0 = ultrafast, 1 = medium, 2 = veryslow.
    pub preset_ord: u8,
    pub cqp: u8,
}

impl FeatureRow {
    pub fn new(clip: &Clip, task: &EncodeTask) -> Self {
        Self {
            height: f64::from(clip.height),
            num_pixels: clip.num_pixels() as f64,
            framerate: clip.framerate.as_f64(),
            num_frames: f64::from(clip.num_frames),
            spatial_energy: clip.spatial_energy,
            temporal_energy: clip.temporal_energy,
            luma: clip.luma,
            preset_ord: task.preset.ordinal(),
            cqp: task.cqp,
        }
    }

    pub fn to_array<T: Scalar>(&self) -> [T; NUM_FEATURES] {
        [
            self.height,
            self.num_pixels,
            self.framerate,
            self.num_frames,
            self.spatial_energy,
            self.temporal_energy,
            self.luma,
            f64::from(self.preset_ord),
            f64::from(self.cqp),
        ]
        .map(T::of)
    }
}

pub fn feature_matrix<T: Scalar>(rows: &[FeatureRow]) -> Matrix<T> {
    let flat = rows.iter().flat_map(|r| r.to_array::<T>()).collect();
    Matrix::from_vec(rows.len(), NUM_FEATURES, flat).expect("fixed width rows")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            num_trees: 200,
            max_depth: 6,
            learning_rate: 0.1,
            min_samples_leaf: 5,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), GbrtError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(GbrtError::Hyperparams(format!(
                "learning_rate {} must lie in (0, 1]",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(GbrtError::Hyperparams("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Scalar")]
pub enum Node<T> {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf { value: T },
}

/// Binary regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RegressionTree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    pub fn eval(&self, x: &[T]) -> T {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Trained ensemble predicting log-seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GbrtModel<T> {
    pub num_features: usize,
    pub base_score: T,
    pub learning_rate: T,
    pub hyperparams: Hyperparams,
    pub trees: Vec<RegressionTree<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelDocument<T> {
    format: String,
    version: u32,
    feature_names: Vec<String>,
    model: GbrtModel<T>,
}

impl<T: Scalar> GbrtModel<T> {
    /// Model with no trees; predicts `base_score` everywhere.
    pub fn constant(num_features: usize, base_score: T) -> Self {
        Self {
            num_features,
            base_score,
            learning_rate: T::one(),
            hyperparams: Hyperparams {
                num_trees: 0,
                ..Hyperparams::default()
            },
            trees: Vec::new(),
        }
    }

    pub fn predict(&self, x: &[T]) -> Result<T, GbrtError> {
        if x.len() != self.num_features {
            return Err(GbrtError::FeatureCount {
                expected: self.num_features,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[T]) -> T {
        let mut acc = self.base_score;
        for tree in &self.trees {
            acc += self.learning_rate * tree.eval(x);
        }
        acc
    }

    pub fn predict_row(&self, row: &FeatureRow) -> Result<T, GbrtError> {
        self.predict(&row.to_array::<T>())
    }

    pub fn predict_matrix(&self, rows: &Matrix<T>) -> Result<Vec<T>, GbrtError> {
        if rows.cols() != self.num_features && rows.rows() > 0 {
            return Err(GbrtError::FeatureCount {
                expected: self.num_features,
                got: rows.cols(),
            });
        }
        Ok(rows.iter_rows().map(|r| self.predict_unchecked(r)).collect())
    }

    pub fn to_json(&self) -> Result<String, GbrtError> {
        let names = if self.num_features == NUM_FEATURES {
            FEATURE_NAMES.iter().map(|s| (*s).to_owned()).collect()
        } else {
            (0..self.num_features).map(|i| format!("f{i}")).collect()
        };
        serde_json::to_string_pretty(&ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            feature_names: names,
            model: self.clone(),
        })
        .map_err(|e| GbrtError::Document(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, GbrtError> {
        let doc: ModelDocument<T> =
            serde_json::from_str(s).map_err(|e| GbrtError::Document(e.to_string()))?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(GbrtError::Document(format!(
                "unsupported model format {} v{}",
                doc.format, doc.version
            )));
        }
        doc.model.check_structure()?;
        Ok(doc.model)
    }

    fn check_structure(&self) -> Result<(), GbrtError> {
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(GbrtError::Document(format!("tree {t} has no nodes")));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if let Node::Split {
                    feature, left, right, ..
                } = *node
                {
                    let n = tree.nodes.len();
                    // Children always follow their parent, which rules out cycles.
                    if feature >= self.num_features || left <= i || right <= i || left >= n || right >= n {
                        return Err(GbrtError::Document(format!("tree {t} node {i} is malformed")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-round training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace<T> {
    /// Training MSE before any tree (index 0) and after each boosting round.
    pub loss: Vec<T>,
}

pub fn train<T: Scalar>(
    rows: &Matrix<T>,
    targets: &[T],
    params: &Hyperparams,
) -> Result<GbrtModel<T>, GbrtError> {
    train_with_trace(rows, targets, params).map(|(m, _)| m)
}

pub fn train_with_trace<T: Scalar>(
    rows: &Matrix<T>,
    targets: &[T],
    params: &Hyperparams,
) -> Result<(GbrtModel<T>, TrainingTrace<T>), GbrtError> {
    params.validate()?;
    if rows.rows() != targets.len() {
        return Err(GbrtError::LengthMismatch {
            rows: rows.rows(),
            targets: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(GbrtError::EmptyTrainingSet);
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(GbrtError::NonFiniteTarget(i));
    }
    for (r, row) in rows.iter_rows().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(GbrtError::NonFiniteFeature { row: r, col: c });
        }
    }

    let data = TrainingData::canonical(rows, targets);
    let n = data.len();
    let lr = T::of(params.learning_rate);
    let first = data.y[0];
    let base = if data.y.iter().all(|&v| v == first) {
        first
    } else {
        data.y.iter().copied().sum::<T>() / T::of_usize(n)
    };
    let mut pred = vec![base; n];
    let mut residual = vec![T::zero(); n];
    let mut loss = vec![mse(&data.y, &pred)];
    let mut trees = Vec::with_capacity(params.num_trees);
    let mut grower = TreeGrower::new(&data, params);
    for _ in 0..params.num_trees {
        for i in 0..n {
            residual[i] = data.y[i] - pred[i];
        }
        let tree = grower.grow(&residual, |idx, value| {
            for &i in idx {
                pred[i as usize] += lr * value;
            }
        });
        trees.push(tree);
        loss.push(mse(&data.y, &pred));
    }
    let model = GbrtModel {
        num_features: rows.cols(),
        base_score: base,
        learning_rate: lr,
        hyperparams: *params,
        trees,
    };
    Ok((model, TrainingTrace { loss }))
}

fn mse<T: Scalar>(y: &[T], pred: &[T]) -> T {
    y.iter()
        .zip(pred)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum::<T>()
        / T::of_usize(y.len())
}

/// Training rows in canonical order, stored column-major with a presorted
/// index per feature.
struct TrainingData<T> {
    cols: Vec<Vec<T>>,
    y: Vec<T>,
    sorted: Vec<Vec<u32>>,
}

impl<T: Scalar> TrainingData<T> {
    fn canonical(rows: &Matrix<T>, targets: &[T]) -> Self {
        let mut perm: Vec<usize> = (0..rows.rows()).collect();
        perm.sort_by(|&a, &b| {
            rows.row(a)
                .iter()
                .zip(rows.row(b))
                .map(|(x, y)| cmp_finite(*x, *y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
                .then_with(|| cmp_finite(targets[a], targets[b]))
        });
        let cols: Vec<Vec<T>> = (0..rows.cols())
            .map(|j| perm.iter().map(|&i| rows.get(i, j)).collect())
            .collect();
        let y = perm.iter().map(|&i| targets[i]).collect();
        let sorted = cols
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                // Stable, so ties keep canonical order.
                idx.sort_by(|&a, &b| cmp_finite(col[a as usize], col[b as usize]));
                idx
            })
            .collect();
        Self { cols, y, sorted }
    }

    fn len(&self) -> usize {
        self.y.len()
    }
}

fn cmp_finite<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate<T> {
    feature: usize,
    threshold: T,
    left_count: usize,
    gain: T,
}

struct TreeGrower<'a, T> {
    data: &'a TrainingData<T>,
    params: &'a Hyperparams,
    // Per feature, the node segments of sample indices in ascending feature order.
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

impl<'a, T: Scalar> TreeGrower<'a, T> {
    fn new(data: &'a TrainingData<T>, params: &'a Hyperparams) -> Self {
        Self {
            data,
            params,
            order: data.sorted.clone(),
            goes_left: vec![false; data.len()],
            scratch: Vec::with_capacity(data.len()),
        }
    }

    /// Grows one tree on `residual`; `on_leaf` receives the samples of each
    /// leaf with its value.
    fn grow(&mut self, residual: &[T], mut on_leaf: impl FnMut(&[u32], T)) -> RegressionTree<T> {
        for (order, sorted) in self.order.iter_mut().zip(&self.data.sorted) {
            order.copy_from_slice(sorted);
        }
        let mut nodes = vec![Node::Leaf { value: T::zero() }];
        // (node id, start, end, depth)
        let mut stack = vec![(0usize, 0usize, self.data.len(), 0usize)];
        while let Some((id, start, end, depth)) = stack.pop() {
            let split = if depth < self.params.max_depth {
                self.best_split(residual, start, end)
            } else {
                None
            };
            match split {
                Some(s) => {
                    self.partition(s, start, end);
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { value: T::zero() });
                    nodes.push(Node::Leaf { value: T::zero() });
                    nodes[id] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right,
                    };
                    let mid = start + s.left_count;
                    // Right first so the left subtree is expanded first.
                    stack.push((right, mid, end, depth + 1));
                    stack.push((left, start, mid, depth + 1));
                }
                None => {
                    let idx = &self.order[0][start..end];
                    let sum = idx.iter().map(|&i| residual[i as usize]).sum::<T>();
                    let value = sum / T::of_usize(end - start);
                    nodes[id] = Node::Leaf { value };
                    on_leaf(idx, value);
                }
            }
        }
        RegressionTree { nodes }
    }

    fn best_split(&self, residual: &[T], start: usize, end: usize) -> Option<SplitCandidate<T>> {
        let n = end - start;
        let min_leaf = self.params.min_samples_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let total = self.order[0][start..end]
            .iter()
            .map(|&i| residual[i as usize])
            .sum::<T>();
        let nf = T::of_usize(n);
        let parent = total * total / nf;
        let mut best: Option<SplitCandidate<T>> = None;
        for (f, order) in self.order.iter().enumerate() {
            let col = &self.data.cols[f];
            let seg = &order[start..end];
            let mut left_sum = T::zero();
            for pos in 0..n - 1 {
                let i = seg[pos] as usize;
                left_sum += residual[i];
                let left_count = pos + 1;
                if left_count < min_leaf {
                    continue;
                }
                if n - left_count < min_leaf {
                    break;
                }
                let (v, next) = (col[i], col[seg[pos + 1] as usize]);
                if !(v < next) {
                    continue;
                }
                let right_sum = total - left_sum;
                let nl = T::of_usize(left_count);
                let nr = T::of_usize(n - left_count);
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent;
                if gain > T::zero() && best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate {
                        feature: f,
                        threshold: midpoint(v, next),
                        left_count,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn partition(&mut self, s: SplitCandidate<T>, start: usize, end: usize) {
        let mid = start + s.left_count;
        for &i in &self.order[s.feature][start..mid] {
            self.goes_left[i as usize] = true;
        }
        for &i in &self.order[s.feature][mid..end] {
            self.goes_left[i as usize] = false;
        }
        for (f, order) in self.order.iter_mut().enumerate() {
            if f == s.feature {
                continue;
            }
            let seg = &mut order[start..end];
            self.scratch.clear();
            let mut w = 0;
            for r in 0..seg.len() {
                let i = seg[r];
                if self.goes_left[i as usize] {
                    seg[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
        }
    }
}

/// Midpoint strictly above `lo` and at most `hi`.
fn midpoint<T: Scalar>(lo: T, hi: T) -> T {
    let m = lo + (hi - lo) / T::of(2.0);
    if m > lo && m <= hi {
        m
    } else {
        hi
    }
}
