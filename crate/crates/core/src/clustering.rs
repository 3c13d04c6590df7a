//! K-means stratification of clips on standardized format and complexity
//! features.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Clip, EncodeTask};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_MAX_ITERS: usize = 300;

pub const FEATURE_NAMES: [&str; 7] = [
    "height",
    "num_pixels",
    "framerate",
    "num_frames",
    "E",
    "h",
    "luma",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("k = {k} exceeds the number of points ({points})")]
    TooManyClusters { k: usize, points: usize },
    #[error("clip `{0}` has no cluster label")]
    Unlabeled(String),
    #[error("no points to cluster")]
    NoPoints,
}

/// Clustering feature vector of a clip, in [`FEATURE_NAMES`] order.
pub fn clip_features(clip: &Clip) -> [f64; 7] {
    [
        f64::from(clip.height),
        clip.num_pixels() as f64,
        clip.framerate.as_f64(),
        f64::from(clip.num_frames),
        clip.spatial_energy,
        clip.temporal_energy,
        clip.luma,
    ]
}

/// Per-column z-score parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams<T> {
    pub mean: Vec<T>,
    /// Population standard deviation, replaced by 1 for constant columns.
    pub stddev: Vec<T>,
}

impl<T: Scalar> StandardizationParams<T> {
    pub fn fit(points: &Matrix<T>) -> Self {
        let n = T::of_usize(points.rows().max(1));
        let mut mean = vec![T::zero(); points.cols()];
        let mut stddev = vec![T::one(); points.cols()];
        for j in 0..points.cols() {
            let m = (0..points.rows()).map(|i| points.get(i, j)).sum::<T>() / n;
            let var = (0..points.rows())
                .map(|i| {
                    let d = points.get(i, j) - m;
                    d * d
                })
                .sum::<T>()
                / n;
            mean[j] = m;
            if var > T::zero() {
                stddev[j] = var.sqrt();
            }
        }
        Self { mean, stddev }
    }

    pub fn apply(&self, points: &Matrix<T>) -> Matrix<T> {
        let mut out = points.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.stddev[j];
            }
        }
        out
    }
}

/// Z-scores the clustering features of `clips`.
pub fn standardize<T: Scalar>(clips: &[Clip]) -> (Matrix<T>, StandardizationParams<T>) {
    let rows: Vec<Vec<T>> = clips
        .iter()
        .map(|c| clip_features(c).iter().map(|&v| T::of(v)).collect())
        .collect();
    let raw = match Matrix::from_rows(&rows) {
        Some(m) if m.rows() > 0 => m,
        _ => Matrix::zeros(0, FEATURE_NAMES.len()),
    };
    let params = StandardizationParams::fit(&raw);
    (params.apply(&raw), params)
}

/// Result of a K-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    pub labels: Vec<usize>,
    pub centroids: Matrix<T>,
    pub sizes: Vec<usize>,
    /// Within-cluster SSE after every Lloyd iteration.
    pub sse_history: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> KMeansFit<T> {
    pub fn sse(&self) -> T {
        self.sse_history.last().copied().unwrap_or_else(T::zero)
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, d| acc + d)
}

/// Within-cluster sum of squared distances for the given labelling.
pub fn within_cluster_sse<T: Scalar>(points: &Matrix<T>, labels: &[usize], centroids: &Matrix<T>) -> T {
    points
        .iter_rows()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, centroids.row(l)))
        .fold(T::zero(), |acc, d| acc + d)
}

fn nearest<T: Scalar>(p: &[T], centroids: &Matrix<T>) -> (usize, T) {
    let mut best = (0, sq_dist(p, centroids.row(0)));
    for j in 1..centroids.rows() {
        let d = sq_dist(p, centroids.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus<T: Scalar>(points: &Matrix<T>, k: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut dist: Vec<f64> = points
        .iter_rows()
        .map(|p| sq_dist(p, points.row(first)).to_f64_lossy())
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    cum += d;
                    pick = Some(i);
                    if cum > target {
                        break;
                    }
                }
            }
            pick.expect("positive total implies a positive distance")
        } else {
            // Every remaining point coincides with a centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, p) in points.iter_rows().enumerate() {
            let d = sq_dist(p, points.row(pick)).to_f64_lossy();
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    centroids
}

fn update_centroids<T: Scalar>(
    points: &Matrix<T>,
    labels: &mut [usize],
    k: usize,
) -> (Matrix<T>, Vec<usize>) {
    let cols = points.cols();
    let mut sums = Matrix::zeros(k, cols);
    let mut sizes = vec![0usize; k];
    for (p, &l) in points.iter_rows().zip(labels.iter()) {
        sizes[l] += 1;
        for (s, &v) in sums.row_mut(l).iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut centroids = means(&sums, &sizes);
    // Refill each empty cluster with the point farthest from its own centroid,
    // taken from a cluster that can spare one.
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let mut far: Option<(usize, T)> = None;
        for (i, p) in points.iter_rows().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, centroids.row(labels[i]));
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("k <= n guarantees a donor cluster");
        let donor = labels[i];
        labels[i] = empty;
        sizes[donor] -= 1;
        sizes[empty] = 1;
        for (s, &v) in sums.row_mut(donor).iter_mut().zip(points.row(i)) {
            *s -= v;
        }
        sums.row_mut(empty).copy_from_slice(points.row(i));
        centroids = means(&sums, &sizes);
    }
    (centroids, sizes)
}

fn means<T: Scalar>(sums: &Matrix<T>, sizes: &[usize]) -> Matrix<T> {
    let mut out = sums.clone();
    for (j, &s) in sizes.iter().enumerate() {
        if s > 0 {
            let n = T::of_usize(s);
            out.row_mut(j).iter_mut().for_each(|v| *v = *v / n);
        }
    }
    out
}

/// Independent k-means++ starts per call; the lowest-SSE run is kept.
pub const KMEANS_RESTARTS: usize = 32;

/// Lloyd's algorithm with k-means++ seeding. Each start runs until the
/// assignment stops changing or `max_iters` updates have been made; all starts
/// draw from one stream seeded by `seed`.
pub fn kmeans<T: Scalar>(
    points: &Matrix<T>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansFit<T>, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if points.rows() == 0 {
        return Err(ClusterError::NoPoints);
    }
    if k > points.rows() {
        return Err(ClusterError::TooManyClusters {
            k,
            points: points.rows(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit<T>> = None;
    for _ in 0..KMEANS_RESTARTS {
        let fit = lloyd(points, k, max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| fit.sse() < b.sse()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one start"))
}

fn lloyd<T: Scalar>(points: &Matrix<T>, k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> KMeansFit<T> {
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut labels: Vec<usize> = points.iter_rows().map(|p| nearest(p, &centroids).0).collect();
    let mut sizes = Vec::new();
    let mut sse_history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        (centroids, sizes) = update_centroids(points, &mut labels, k);
        sse_history.push(within_cluster_sse(points, &labels, &centroids));
        let next: Vec<usize> = points.iter_rows().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    KMeansFit {
        labels,
        centroids,
        sizes,
        sse_history,
        converged,
    }
}

/// Cluster label of every clip, plus the fitted centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    clip_ids: Vec<String>,
    labels: Vec<usize>,
    index: HashMap<String, usize>,
    pub centroids: Matrix<f64>,
    /// Clip count per cluster.
    pub sizes: Vec<usize>,
}

impl ClusterAssignment {
    /// Builds an assignment from explicit labels; centroids are left empty.
    pub fn from_labels(k: usize, labelled: impl IntoIterator<Item = (String, usize)>) -> Self {
        let (clip_ids, labels): (Vec<String>, Vec<usize>) = labelled.into_iter().unzip();
        let mut sizes = vec![0; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        let index = clip_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Self {
            k,
            clip_ids,
            labels,
            index,
            centroids: Matrix::zeros(k, FEATURE_NAMES.len()),
            sizes,
        }
    }

    /// Every clip in one cluster.
    pub fn single(clips: &[Clip]) -> Self {
        Self::from_labels(1, clips.iter().map(|c| (c.clip_id.clone(), 0)))
    }

    pub fn label(&self, clip_id: &str) -> Option<usize> {
        self.index.get(clip_id).map(|&i| self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.clip_ids.iter().map(String::as_str).zip(self.labels.iter().copied())
    }

    pub fn write_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["clip_id", "cluster"])?;
        for (id, l) in self.iter() {
            wtr.write_record([id, &l.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Centroids in standardized feature space, one row per cluster.
    pub fn write_centroids_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["cluster", "size"];
        header.extend(FEATURE_NAMES);
        wtr.write_record(&header)?;
        for j in 0..self.k {
            let mut rec = vec![j.to_string(), self.sizes[j].to_string()];
            rec.extend(self.centroids.row(j).iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Standardizes the clips and runs K-means on them.
pub fn cluster_clips(
    clips: &[Clip],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment, ClusterError> {
    let (points, _) = standardize::<f64>(clips);
    let fit = kmeans(&points, k, seed, max_iters)?;
    let mut a = ClusterAssignment::from_labels(
        k,
        clips.iter().map(|c| c.clip_id.clone()).zip(fit.labels.iter().copied()),
    );
    a.centroids = fit.centroids;
    Ok(a)
}

/// Task count per cluster; tasks inherit the label of their clip.
pub fn cluster_sizes_by_task(
    assignment: &ClusterAssignment,
    tasks: &[EncodeTask],
) -> Result<Vec<usize>, ClusterError> {
    let mut sizes = vec![0; assignment.k];
    for t in tasks {
        let l = assignment
            .label(&t.clip_id)
            .ok_or_else(|| ClusterError::Unlabeled(t.clip_id.clone()))?;
        sizes[l] += 1;
    }
    Ok(sizes)
}
