//! Slow, direct reference implementations used to check the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use corpus_eta::gbrt::{GbrtModel, Node};

/// Weighted AC energy from the textbook 2-D DCT-II double sum, one
/// coefficient at a time.
pub fn naive_dct_energy(block: &[f64], n: usize) -> f64 {
    let scale = |k: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let mut energy = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u == 0 && v == 0 {
                continue;
            }
            let mut s = 0.0;
            for y in 0..n {
                for x in 0..n {
                    s += block[y * n + x]
                        * (PI * (2 * y + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                        * (PI * (2 * x + 1) as f64 * v as f64 / (2 * n) as f64).cos();
                }
            }
            let w = 2f64.powf((u + v) as f64 / 2.0 - 2.0);
            energy += w * (scale(u) * scale(v) * s).abs();
        }
    }
    energy
}

fn sse_about_mean(points: &[Vec<f64>], members: impl Iterator<Item = usize> + Clone) -> f64 {
    let count = members.clone().count() as f64;
    let dims = points[0].len();
    let mut total = 0.0;
    for d in 0..dims {
        let mean = members.clone().map(|i| points[i][d]).sum::<f64>() / count;
        total += members.clone().map(|i| (points[i][d] - mean).powi(2)).sum::<f64>();
    }
    total
}

/// Smallest within-cluster SSE over every split of `points` into two
/// non-empty groups.
pub fn best_two_partition_sse(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    assert!((2..=20).contains(&n));
    let mut best = f64::INFINITY;
    // Fixing point 0 in group A visits each unordered partition once.
    for mask in 0u32..(1 << (n - 1)) {
        let in_b = |i: usize| i > 0 && mask & (1 << (i - 1)) != 0;
        if (0..n).all(|i| !in_b(i)) {
            continue;
        }
        let a = (0..n).filter(move |&i| !in_b(i));
        let b = (0..n).filter(move |&i| in_b(i));
        best = best.min(sse_about_mean(points, a) + sse_about_mean(points, b));
    }
    best
}

/// Recursive tree evaluation written against the public node layout.
pub fn walk_tree(nodes: &[Node<f64>], at: usize, x: &[f64]) -> f64 {
    match &nodes[at] {
        Node::Leaf { value } => *value,
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if x[*feature] < *threshold {
                walk_tree(nodes, *left, x)
            } else {
                walk_tree(nodes, *right, x)
            }
        }
    }
}

pub fn walk_model(model: &GbrtModel<f64>, x: &[f64]) -> f64 {
    let mut f = model.base_score;
    for tree in &model.trees {
        f += model.learning_rate * walk_tree(&tree.nodes, 0, x);
    }
    f
}

fn sse(ys: &[f64]) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - m).powi(2)).sum()
}

/// Best SSE of a tree of depth at most `depth` over `rows`, trying every
/// axis-aligned threshold between distinct observed values.
pub fn best_tree_sse(x: &[Vec<f64>], y: &[f64], rows: &[usize], depth: usize) -> f64 {
    let here: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let mut best = sse(&here);
    if depth == 0 || rows.len() < 2 {
        return best;
    }
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] < t);
            best = best.min(best_tree_sse(x, y, &l, depth - 1) + best_tree_sse(x, y, &r, depth - 1));
        }
    }
    best
}

/// Remaining total by the fraction form `((1 - c) / c) Σ t`.
pub fn bp_total(completed: &[f64], n: usize) -> f64 {
    let c = completed.len() as f64 / n as f64;
    (1.0 - c) / c * completed.iter().sum::<f64>()
}

/// `(1 - c) Σⱼ Mⱼ t̂ⱼ`, empty clusters using the mean over all completed tasks.
pub fn cp_total(by_cluster: &[Vec<f64>], sizes: &[usize], n: usize) -> f64 {
    let done: usize = by_cluster.iter().map(Vec::len).sum();
    let c = done as f64 / n as f64;
    let global = by_cluster.iter().flatten().sum::<f64>() / done as f64;
    let mut total = 0.0;
    for (ts, &m) in by_cluster.iter().zip(sizes) {
        let mean = if ts.is_empty() { global } else { ts.iter().sum::<f64>() / ts.len() as f64 };
        total += m as f64 * mean;
    }
    (1.0 - c) * total
}

pub fn xp_total(log_predictions: &[f64]) -> f64 {
    let mut total = 0.0;
    for &f in log_predictions {
        total += f.exp();
    }
    total
}

pub fn mape(a: &[f64], p: &[f64]) -> f64 {
    100.0 * a.iter().zip(p).map(|(a, p)| ((a - p) / a).abs()).sum::<f64>() / a.len() as f64
}

pub fn r2(a: &[f64], p: &[f64]) -> f64 {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    let res: f64 = a.iter().zip(p).map(|(a, p)| (a - p) * (a - p)).sum();
    let tot: f64 = a.iter().map(|a| (a - mean) * (a - mean)).sum();
    1.0 - res / tot
}

pub fn sape(a: &[f64], p: &[f64]) -> f64 {
    let ta: f64 = a.iter().sum();
    let tp: f64 = p.iter().sum();
    100.0 * (ta - tp).abs() / ta
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
