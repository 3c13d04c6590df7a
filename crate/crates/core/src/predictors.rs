//! The five remaining-time predictors and the cascade that picks between them.
//!
//! * `BP` scales the running mean of completed task times.
//! * `CP` does the same per content cluster.
//! * `XP` retrains a GBRT on the completed tasks and sums `exp(f(x))` over
//!   the remainder.
//! * `CXP` is `XP` fed by a cluster-stratified processing order.
//! * `GXP` is a GBRT trained once on other source groups and never updated.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterAssignment, ClusterError};
use crate::corpus::{to_log_time, Corpus};
use crate::gbrt::{self, FeatureRow, GbrtError, GbrtModel, Hyperparams, NUM_FEATURES};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("BP undefined at c=0")]
    BpUndefined,
    #[error("CP undefined: no completed tasks in any cluster")]
    CpUndefined,
    #[error("nothing remaining")]
    NothingRemaining,
    #[error("{0} needs a trained model")]
    MissingModel(System),
    #[error("completed count {completed} is not below total {total}")]
    BadCounts { completed: usize, total: usize },
    #[error("cluster count mismatch: {times} completed groups vs {sizes} sizes")]
    ClusterMismatch { times: usize, sizes: usize },
    #[error("task `{0}` has no measured time")]
    MissingTime(String),
    #[error("unknown source group `{0}`")]
    UnknownGroup(String),
    #[error("{0} side of the group split is empty")]
    EmptySplit(&'static str),
    #[error("invalid cascade policy: {0}")]
    Policy(String),
    #[error("completion ratio {0} outside [0, 1)")]
    Ratio(f64),
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error(transparent)]
    Model(#[from] GbrtError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    #[serde(rename = "BP")]
    Bp,
    #[serde(rename = "CP")]
    Cp,
    #[serde(rename = "XP")]
    Xp,
    #[serde(rename = "CXP")]
    Cxp,
    #[serde(rename = "GXP")]
    Gxp,
}

impl System {
    pub const ALL: [System; 5] = [System::Bp, System::Cp, System::Xp, System::Cxp, System::Gxp];

    pub fn as_str(self) -> &'static str {
        match self {
            System::Bp => "BP",
            System::Cp => "CP",
            System::Xp => "XP",
            System::Cxp => "CXP",
            System::Gxp => "GXP",
        }
    }

    /// Systems that learn from completed tasks.
    pub fn is_online(self) -> bool {
        !matches!(self, System::Gxp)
    }

    pub fn uses_model(self) -> bool {
        matches!(self, System::Xp | System::Cxp | System::Gxp)
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for System {
    type Err = PredictError;

    fn from_str(s: &str) -> Result<Self, PredictError> {
        System::ALL
            .into_iter()
            .find(|sys| sys.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PredictError::UnknownSystem(s.to_owned()))
    }
}

/// Parses a comma-separated system list such as `BP,CP,XP`.
pub fn parse_systems(s: &str) -> Result<Vec<System>, PredictError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

fn mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().sum::<T>() / T::of_usize(values.len())
}

/// `(1 - c) · weighted` with `1 - c` kept as the exact ratio `(N - n) / N`.
fn remaining_share<T: Scalar>(weighted: T, done: usize, total_tasks: usize) -> T {
    weighted * T::of_usize(total_tasks - done) / T::of_usize(total_tasks)
}

/// Baseline-predictor estimate at completion ratio `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineEstimate<T> {
    pub c: T,
    /// Predicted seconds for each remaining task.
    pub per_task: T,
    /// Predicted seconds for the whole remainder.
    pub total: T,
}

/// Running-mean baseline. The total `((1 - c)/c) Σ t` is evaluated as
/// `(N · mean) · (N - n) / N`, the same expression the clustering predictor
/// reduces to with one cluster.
pub fn bp_predict<T: Scalar>(completed: &[T], total_tasks: usize) -> Result<BaselineEstimate<T>, PredictError> {
    if completed.is_empty() {
        return Err(PredictError::BpUndefined);
    }
    if completed.len() >= total_tasks {
        return Err(PredictError::NothingRemaining);
    }
    let c = T::of_usize(completed.len()) / T::of_usize(total_tasks);
    let per_task = mean(completed);
    let weighted = T::of_usize(total_tasks) * per_task;
    let total = remaining_share(weighted, completed.len(), total_tasks);
    Ok(BaselineEstimate { c, per_task, total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEstimate<T> {
    pub c: T,
    /// Per-cluster predicted task time; empty clusters carry the global mean.
    pub cluster_means: Vec<T>,
    pub global_mean: T,
    pub total: T,
}

/// Clustering predictor: `(1 - c) Σⱼ Mⱼ t̂ⱼ` with `t̂ⱼ` the mean completed
/// time in cluster `j` and `c` the global completion ratio.
pub fn cp_predict<T: Scalar>(
    completed: &[Vec<T>],
    cluster_tasks: &[usize],
    total_tasks: usize,
) -> Result<ClusterEstimate<T>, PredictError> {
    if completed.len() != cluster_tasks.len() {
        return Err(PredictError::ClusterMismatch {
            times: completed.len(),
            sizes: cluster_tasks.len(),
        });
    }
    let done: usize = completed.iter().map(Vec::len).sum();
    if done == 0 {
        return Err(PredictError::CpUndefined);
    }
    if done >= total_tasks {
        return Err(PredictError::NothingRemaining);
    }
    let c = T::of_usize(done) / T::of_usize(total_tasks);
    let global_mean = if completed.len() == 1 {
        mean(&completed[0])
    } else {
        let all: Vec<T> = completed.iter().flatten().copied().collect();
        mean(&all)
    };
    let cluster_means: Vec<T> = completed
        .iter()
        .map(|ts| if ts.is_empty() { global_mean } else { mean(ts) })
        .collect();
    let weighted = cluster_means
        .iter()
        .zip(cluster_tasks)
        .fold(T::zero(), |acc, (&m, &size)| acc + T::of_usize(size) * m);
    Ok(ClusterEstimate {
        c,
        cluster_means,
        global_mean,
        total: remaining_share(weighted, done, total_tasks),
    })
}

/// Per-task `exp(f(x))` over the remaining rows and their sum.
pub fn xp_predict<T: Scalar>(model: &GbrtModel<T>, remaining: &Matrix<T>) -> Result<(Vec<T>, T), PredictError> {
    if remaining.rows() == 0 {
        return Err(PredictError::NothingRemaining);
    }
    let per_task: Vec<T> = model
        .predict_matrix(remaining)?
        .into_iter()
        .map(|v| v.exp())
        .collect();
    let total = per_task.iter().copied().sum::<T>();
    Ok((per_task, total))
}

/// Aggregate prediction for the unprocessed part of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePrediction {
    pub system: System,
    pub c: f64,
    /// Task positions (into [`Corpus::tasks`]) of the remaining tasks.
    pub remaining: Vec<usize>,
    /// Predicted seconds, parallel to `remaining`.
    pub t_hat: Vec<f64>,
    /// Predicted seconds for the remainder as a whole.
    pub total: f64,
}

impl AggregatePrediction {
    pub fn per_task<'a>(&'a self, corpus: &'a Corpus) -> impl Iterator<Item = (&'a str, f64)> + 'a {
        self.remaining
            .iter()
            .zip(&self.t_hat)
            .map(|(&p, &t)| (corpus.tasks()[p].task_id.as_str(), t))
    }
}

/// Seeded uniform shuffle of `0..n`.
pub fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Round-robin over clusters in index order, drawing a seeded random task
/// from each cluster in turn and skipping clusters that have run dry.
pub fn stratified_order(task_labels: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &l) in task_labels.iter().enumerate() {
        buckets[l].push(pos);
    }
    for b in &mut buckets {
        b.shuffle(&mut rng);
    }
    let mut order = Vec::with_capacity(task_labels.len());
    let mut cursor = vec![0usize; k];
    while order.len() < task_labels.len() {
        for (j, b) in buckets.iter().enumerate() {
            if let Some(&p) = b.get(cursor[j]) {
                order.push(p);
                cursor[j] += 1;
            }
        }
    }
    order
}

/// Cluster label of every task, inherited from its clip.
pub fn task_labels(corpus: &Corpus, assignment: &ClusterAssignment) -> Result<Vec<usize>, ClusterError> {
    corpus
        .tasks()
        .iter()
        .map(|t| {
            assignment
                .label(&t.clip_id)
                .ok_or_else(|| ClusterError::Unlabeled(t.clip_id.clone()))
        })
        .collect()
}

/// Cluster-stratified processing order as task ids.
pub fn cxp_order(corpus: &Corpus, assignment: &ClusterAssignment, seed: u64) -> Result<Vec<String>, PredictError> {
    let labels = task_labels(corpus, assignment)?;
    Ok(stratified_order(&labels, assignment.k, seed)
        .into_iter()
        .map(|p| corpus.tasks()[p].task_id.clone())
        .collect())
}

/// Training side and held-out side of a split by source group.
#[derive(Debug, Clone)]
pub struct GroupSplit {
    pub train_tasks: Vec<usize>,
    pub train_rows: Vec<FeatureRow>,
    /// Log-seconds targets parallel to `train_rows`.
    pub train_targets: Vec<f64>,
    pub test_tasks: Vec<usize>,
}

impl GroupSplit {
    pub fn test_task_ids<'a>(&'a self, corpus: &'a Corpus) -> impl Iterator<Item = &'a str> + 'a {
        self.test_tasks.iter().map(|&p| corpus.tasks()[p].task_id.as_str())
    }

    pub fn train_model(&self, params: &Hyperparams) -> Result<GbrtModel<f64>, PredictError> {
        let x = gbrt::feature_matrix::<f64>(&self.train_rows);
        Ok(gbrt::train(&x, &self.train_targets, params)?)
    }
}

/// Puts every task whose clip belongs to one of `test_groups` on the test side.
pub fn gxp_train_split(corpus: &Corpus, test_groups: &BTreeSet<String>) -> Result<GroupSplit, PredictError> {
    let present: BTreeSet<&str> = corpus.clips().iter().map(|c| c.source_group.as_str()).collect();
    if let Some(g) = test_groups.iter().find(|g| !present.contains(g.as_str())) {
        return Err(PredictError::UnknownGroup(g.clone()));
    }
    let mut split = GroupSplit {
        train_tasks: Vec::new(),
        train_rows: Vec::new(),
        train_targets: Vec::new(),
        test_tasks: Vec::new(),
    };
    for (pos, task) in corpus.tasks().iter().enumerate() {
        let clip = &corpus.clips()[corpus.clip_of(pos)];
        if test_groups.contains(&clip.source_group) {
            split.test_tasks.push(pos);
        } else {
            let secs = corpus
                .seconds_at(pos)
                .ok_or_else(|| PredictError::MissingTime(task.task_id.clone()))?;
            split.train_tasks.push(pos);
            split.train_rows.push(FeatureRow::new(clip, task));
            split
                .train_targets
                .push(to_log_time(secs).expect("corpus validates positive times"));
        }
    }
    if split.train_tasks.is_empty() {
        return Err(PredictError::EmptySplit("train"));
    }
    if split.test_tasks.is_empty() {
        return Err(PredictError::EmptySplit("test"));
    }
    Ok(split)
}

/// Predictor choice by completion ratio: entry `i` covers `(bound[i-1], bound[i]]`,
/// the first entry covers `[0, bound[0]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePolicy {
    entries: Vec<(f64, System)>,
}

impl Default for CascadePolicy {
    fn default() -> Self {
        Self {
            entries: vec![(0.0, System::Gxp), (0.06, System::Cxp), (1.0, System::Cp)],
        }
    }
}

impl CascadePolicy {
    pub fn new(entries: Vec<(f64, System)>) -> Result<Self, PredictError> {
        if entries.is_empty() {
            return Err(PredictError::Policy("no entries".into()));
        }
        for w in entries.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(PredictError::Policy(format!(
                    "bounds must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if entries[0].0 < 0.0 {
            return Err(PredictError::Policy("bounds must be non-negative".into()));
        }
        if entries.last().map(|e| e.0) != Some(1.0) {
            return Err(PredictError::Policy("last bound must be 1.0".into()));
        }
        Ok(Self { entries })
    }

    /// Builds a policy from the parallel `cascade.bounds` / `cascade.systems` lists.
    pub fn from_parallel(bounds: &[f64], systems: &[System]) -> Result<Self, PredictError> {
        if bounds.len() != systems.len() {
            return Err(PredictError::Policy(format!(
                "{} bounds but {} systems",
                bounds.len(),
                systems.len()
            )));
        }
        Self::new(bounds.iter().copied().zip(systems.iter().copied()).collect())
    }

    pub fn entries(&self) -> &[(f64, System)] {
        &self.entries
    }

    pub fn select(&self, c: f64) -> Result<System, PredictError> {
        if !(0.0..1.0).contains(&c) {
            return Err(PredictError::Ratio(c));
        }
        Ok(self
            .entries
            .iter()
            .find(|(bound, _)| c <= *bound)
            .map(|e| e.1)
            .expect("last bound is 1.0"))
    }
}

pub fn cascade_select(policy: &CascadePolicy, c: f64) -> Result<System, PredictError> {
    policy.select(c)
}

/// Precomputed per-task features, clusters and sizes for one corpus.
#[derive(Debug, Clone)]
pub struct PredictionContext<'a> {
    pub corpus: &'a Corpus,
    pub assignment: &'a ClusterAssignment,
    pub labels: Vec<usize>,
    /// Task count per cluster (`Mⱼ`).
    pub cluster_tasks: Vec<usize>,
    pub features: Matrix<f64>,
    pub params: Hyperparams,
}

impl<'a> PredictionContext<'a> {
    pub fn new(
        corpus: &'a Corpus,
        assignment: &'a ClusterAssignment,
        params: Hyperparams,
    ) -> Result<Self, PredictError> {
        let labels = task_labels(corpus, assignment)?;
        let mut cluster_tasks = vec![0; assignment.k];
        for &l in &labels {
            cluster_tasks[l] += 1;
        }
        let rows: Vec<FeatureRow> = corpus
            .tasks()
            .iter()
            .enumerate()
            .map(|(p, t)| FeatureRow::new(&corpus.clips()[corpus.clip_of(p)], t))
            .collect();
        Ok(Self {
            corpus,
            assignment,
            labels,
            cluster_tasks,
            features: gbrt::feature_matrix(&rows),
            params,
        })
    }

    fn gather(&self, positions: &[usize]) -> Matrix<f64> {
        let mut flat = Vec::with_capacity(positions.len() * NUM_FEATURES);
        for &p in positions {
            flat.extend_from_slice(self.features.row(p));
        }
        Matrix::from_vec(positions.len(), NUM_FEATURES, flat).expect("fixed width rows")
    }

    /// Fits an online GBRT on completed tasks (log-seconds targets).
    pub fn train_online(&self, completed: &[usize], seconds: &[f64]) -> Result<GbrtModel<f64>, PredictError> {
        let targets: Vec<f64> = seconds.iter().map(|s| s.ln()).collect();
        Ok(gbrt::train(&self.gather(completed), &targets, &self.params)?)
    }

    /// Predicts the remaining tasks with `system`. `seconds` is parallel to
    /// `completed`. `GXP` requires `model`, which the others ignore.
    pub fn predict(
        &self,
        system: System,
        completed: &[usize],
        seconds: &[f64],
        remaining: &[usize],
        model: Option<&GbrtModel<f64>>,
    ) -> Result<AggregatePrediction, PredictError> {
        if remaining.is_empty() {
            return Err(PredictError::NothingRemaining);
        }
        let n = self.corpus.len();
        if completed.len() + remaining.len() > n || completed.len() != seconds.len() {
            return Err(PredictError::BadCounts {
                completed: completed.len(),
                total: n,
            });
        }
        let c = completed.len() as f64 / n as f64;
        let (t_hat, total) = match system {
            System::Bp => {
                let est = bp_predict(seconds, n)?;
                (vec![est.per_task; remaining.len()], est.total)
            }
            System::Cp => {
                let mut by_cluster = vec![Vec::new(); self.assignment.k];
                for (&p, &s) in completed.iter().zip(seconds) {
                    by_cluster[self.labels[p]].push(s);
                }
                let est = cp_predict(&by_cluster, &self.cluster_tasks, n)?;
                let t = remaining
                    .iter()
                    .map(|&p| est.cluster_means[self.labels[p]])
                    .collect();
                (t, est.total)
            }
            System::Xp | System::Cxp => {
                if completed.is_empty() {
                    return Err(PredictError::MissingModel(system));
                }
                let m = self.train_online(completed, seconds)?;
                xp_predict(&m, &self.gather(remaining))?
            }
            System::Gxp => {
                let m = model.ok_or(PredictError::MissingModel(System::Gxp))?;
                xp_predict(m, &self.gather(remaining))?
            }
        };
        Ok(AggregatePrediction {
            system,
            c,
            remaining: remaining.to_vec(),
            t_hat,
            total,
        })
    }
}
