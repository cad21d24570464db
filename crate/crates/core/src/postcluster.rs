//! Post-selection dimension reduction, k-means clustering, and clustering
//! accuracy metrics.

use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, PURPOSE_KMEANS};
use rand::Rng;

/// Principal-component scores of a centered matrix.
#[derive(Clone, Debug)]
pub struct PcaScores {
    /// n x d_used projections, ordered by decreasing singular value.
    pub scores: Array2<f64>,
    pub requested_d: usize,
    /// The rank cap `min(d, m, n - 1)` actually used.
    pub d_used: usize,
    pub singular_values: Vec<f64>,
}

/// Project onto the top-`d` right singular directions of the column-centered
/// matrix. Columns are centered only (no variance scaling). Each direction
/// is oriented so its largest-magnitude entry is positive.
pub fn pca_scores(x: &Array2<f64>, d: usize) -> Result<PcaScores> {
    let n = x.nrows();
    let m = x.ncols();
    if m < 1 || n < 2 {
        return Err(Error::Config(format!(
            "PCA needs at least 2 rows and 1 column, got {n} x {m}"
        )));
    }
    if d == 0 {
        return Err(Error::Config("PCA dimension must be >= 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("PCA input contains non-finite values".into()));
    }
    let d_used = d.min(m).min(n - 1);

    let mut centered = x.clone();
    for j in 0..m {
        let mean = centered.column(j).sum() / n as f64;
        centered.column_mut(j).mapv_inplace(|v| v - mean);
    }

    let mat = DMatrix::from_fn(n, m, |i, j| centered[(i, j)]);
    let svd = mat.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");

    // order directions by decreasing singular value
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut scores = Array2::zeros((n, d_used));
    let mut singular_values = Vec::with_capacity(d_used);
    for (out_col, &idx) in order.iter().take(d_used).enumerate() {
        let mut direction: Vec<f64> = (0..m).map(|j| v_t[(idx, j)]).collect();
        let mut arg = 0usize;
        for (j, v) in direction.iter().enumerate() {
            if v.abs() > direction[arg].abs() {
                arg = j;
            }
        }
        if direction[arg] < 0.0 {
            for v in direction.iter_mut() {
                *v = -*v;
            }
        }
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..m {
                acc += centered[(i, j)] * direction[j];
            }
            scores[(i, out_col)] = acc;
        }
        singular_values.push(svd.singular_values[idx]);
    }

    Ok(PcaScores {
        scores,
        requested_d: d,
        d_used,
        singular_values,
    })
}

/// K-means output.
#[derive(Clone, Debug)]
pub struct ClusterResult {
    /// Cluster of each point, in [0, K).
    pub labels: Vec<usize>,
    /// K x d centers.
    pub centers: Array2<f64>,
    /// Sum of squared distances of points to their assigned centers.
    pub inertia: f64,
    /// The score matrix that was clustered.
    pub pcs: Array2<f64>,
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = vec![0usize; points.len()];
    let mut dists = vec![0.0f64; points.len()];
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, c) in centers.iter().enumerate() {
            let d = dist2(p, c);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
        inertia += best_d;
    }
    (labels, dists, inertia)
}

/// Squared-distance-proportional greedy seeding.
fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.push(points[first].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if target < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining mass is zero (duplicate points): first unchosen
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[idx] = true;
        centers.push(points[idx].clone());
        let last = centers.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, last);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

/// One seeded Lloyd run; returns labels, centers, final inertia, and the
/// per-iteration inertia trace.
fn lloyd_once(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
    max_iters: usize,
) -> (Vec<usize>, Vec<Vec<f64>>, f64, Vec<f64>) {
    let d = points[0].len();
    let mut centers = seed_centers(points, k, rng);
    let (mut labels, mut dists, mut inertia) = assign(points, &centers);
    let mut trace = vec![inertia];

    for _ in 0..max_iters {
        // means of assigned points
        let mut sums = vec![vec![0.0f64; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut reseed_block = vec![false; points.len()];
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centers[c] = sums[c].clone();
            } else {
                // empty cluster: reseed to the farthest point not already used
                let mut far = 0usize;
                let mut far_d = f64::NEG_INFINITY;
                for (i, &dd) in dists.iter().enumerate() {
                    if !reseed_block[i] && dd > far_d {
                        far_d = dd;
                        far = i;
                    }
                }
                reseed_block[far] = true;
                centers[c] = points[far].clone();
            }
        }
        let (new_labels, new_dists, new_inertia) = assign(points, &centers);
        trace.push(new_inertia);
        let converged = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        inertia = new_inertia;
        if converged {
            break;
        }
    }
    (labels, centers, inertia, trace)
}

/// Lloyd k-means with squared-distance-proportional seeding, best of
/// `n_init` restarts by inertia (ties to the lowest restart index).
pub fn kmeans(scores: &Array2<f64>, k: usize, seed: u64, n_init: usize) -> Result<ClusterResult> {
    let n = scores.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "cluster count {k} must lie in [1, {n}]"
        )));
    }
    if n_init == 0 {
        return Err(Error::Config("n_init must be >= 1".into()));
    }
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| scores.row(i).iter().copied().collect())
        .collect();

    let runs: Vec<(Vec<usize>, Vec<Vec<f64>>, f64)> = (0..n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, PURPOSE_KMEANS, r as u64);
            let (labels, centers, inertia, _) = lloyd_once(&points, k, &mut rng, 300);
            (labels, centers, inertia)
        })
        .collect();

    let mut best = 0usize;
    for r in 1..runs.len() {
        if runs[r].2 < runs[best].2 {
            best = r;
        }
    }
    let (labels, centers, inertia) = runs.into_iter().nth(best).unwrap();
    let d = centers[0].len();
    let mut centers_arr = Array2::zeros((k, d));
    for (c, row) in centers.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            centers_arr[(c, j)] = v;
        }
    }
    Ok(ClusterResult {
        labels,
        centers: centers_arr,
        inertia,
        pcs: scores.clone(),
    })
}

/// Agreement between two labelings.
#[derive(Clone, Copy, Debug)]
pub struct ClusterScore {
    /// Misclassification rate minimized over label permutations.
    pub hamming_rate: f64,
    /// Adjusted Rand index.
    pub ari: f64,
}

pub fn cluster_score(pred: &[usize], truth: &[usize]) -> Result<ClusterScore> {
    Ok(ClusterScore {
        hamming_rate: hamming_error(pred, truth)?,
        ari: adjusted_rand(pred, truth)?,
    })
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Config(format!(
            "label vectors differ in length: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Config("label vectors are empty".into()));
    }
    Ok(())
}

/// Classic O(k^3) assignment on a square cost matrix; returns the minimum
/// total cost.
fn hungarian_min_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Misclassification rate minimized over permutations of the predicted
/// label alphabet, computed by optimal assignment on the confusion matrix.
pub fn hamming_error(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let k = kp.max(kt);
    let mut agree = vec![vec![0.0f64; k]; k];
    for (&a, &b) in pred.iter().zip(truth) {
        agree[a][b] += 1.0;
    }
    // maximize agreement = minimize (n - agreement)
    let maxval = pred.len() as f64;
    let cost: Vec<Vec<f64>> = agree
        .iter()
        .map(|row| row.iter().map(|&a| maxval - a).collect())
        .collect();
    let min_cost = hungarian_min_cost(&cost);
    let best_agreement = maxval * k as f64 - min_cost;
    Ok((pred.len() as f64 - best_agreement) / pred.len() as f64)
}

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Pair-counting adjusted Rand index from the contingency table.
pub fn adjusted_rand(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let mut table = vec![vec![0.0f64; kt]; kp];
    for (&a, &b) in pred.iter().zip(truth) {
        table[a][b] += 1.0;
    }
    let sum_ij: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = table
        .iter()
        .map(|row| comb2(row.iter().sum::<f64>()))
        .sum();
    let sum_cols: f64 = (0..kt)
        .map(|j| comb2(table.iter().map(|row| row[j]).sum::<f64>()))
        .sum();
    let expected = sum_rows * sum_cols / comb2(pred.len() as f64);
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        // both partitions trivial and identical in pair structure
        return Ok(1.0);
    }
    Ok((sum_ij - expected) / denom)
}
