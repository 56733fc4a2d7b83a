//! Centroid graph, normalized-Laplacian spectral clustering and silhouette
//! based selection of the cluster count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::LayoutError;

/// Guard added to distances before inversion.
pub const INVERSE_DISTANCE_EPS: f64 = 1e-6;
pub const KMEANS_RESTARTS: usize = 10;
pub const MAX_CLUSTERS: usize = 10;

const KMEANS_MAX_ITERS: usize = 300;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense symmetric `n × n` matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> WeightMatrix<S> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

fn distance<S: Scalar>(a: (S, S), b: (S, S)) -> S {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    (dx * dx + dy * dy).sqrt()
}

/// Complete graph over centroids with weights `1 / (ε + d_ij)`.
pub fn build_graph<S: Scalar>(centroids: &[(S, S)]) -> WeightMatrix<S> {
    let n = centroids.len();
    let eps = S::lit(INVERSE_DISTANCE_EPS);
    let mut data = vec![S::zero(); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let w = S::one() / (eps + distance(centroids[i], centroids[j]));
            data[i * n + j] = w;
            data[j * n + i] = w;
        }
    }
    WeightMatrix { n, data }
}

/// Eigen-decomposition of a symmetric row-major matrix by cyclic Jacobi
/// rotations. Returns eigenvalues ascending with matching eigenvectors
/// (each inner `Vec` is one eigenvector).
pub fn symmetric_eigen<S: Scalar>(matrix: &[S], n: usize) -> (Vec<S>, Vec<Vec<S>>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![S::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = S::one();
    }
    let scale: S = a.iter().map(|&x| x * x).sum::<S>().max(S::min_positive_value());
    let tol = S::epsilon() * S::epsilon() * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = S::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a[p * n + q] * a[p * n + q];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == S::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i * n + i]
            .partial_cmp(&a[j * n + j])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| (0..n).map(|k| v[k * n + col]).collect())
        .collect();
    (values, vectors)
}

fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn kmeans_once<S: Scalar>(points: &[Vec<S>], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, S) {
    let n = points.len();
    // k-means++ seeding
    let mut centers: Vec<Vec<S>> = vec![points[rng.gen_range(0..n)].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(S::infinity(), S::min)
                    .as_f64()
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[next].clone());
    }

    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = S::infinity();
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![S::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(p) {
                *s = *s + x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = S::lit(counts[c] as f64);
                centers[c] = sums[c].iter().map(|&s| s / cnt).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .fold(S::zero(), |acc, (p, &l)| acc + sq_dist(p, &centers[l]));
    (labels, inertia)
}

/// Lloyd's k-means with k-means++ seeding; keeps the lowest-inertia run.
pub fn kmeans<S: Scalar>(points: &[Vec<S>], k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, S)> = None;
    for _ in 0..restarts.max(1) {
        let (labels, inertia) = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    best.map(|(l, _)| l).unwrap_or_default()
}

/// Renumbers labels by first appearance so every label in `0..max` is used.
pub fn compact_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Normalized-Laplacian spectral clustering into `n_clusters` groups.
pub fn spectral_cluster<S: Scalar>(
    w: &WeightMatrix<S>,
    n_clusters: usize,
    seed: u64,
) -> Result<Vec<usize>, LayoutError> {
    let n = w.len();
    if n_clusters < 2 || n_clusters + 1 > n {
        return Err(LayoutError::ClusterCount { n_clusters, n });
    }
    let inv_sqrt_deg: Vec<S> = (0..n)
        .map(|i| {
            let d: S = w.row(i).iter().copied().sum();
            if d > S::zero() {
                S::one() / d.sqrt()
            } else {
                S::zero()
            }
        })
        .collect();
    let mut lap = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { S::one() } else { S::zero() };
            lap[i * n + j] = id - inv_sqrt_deg[i] * w.get(i, j) * inv_sqrt_deg[j];
        }
    }
    let (_, vectors) = symmetric_eigen(&lap, n);
    let mut embedding: Vec<Vec<S>> = (0..n)
        .map(|i| (0..n_clusters).map(|c| vectors[c][i]).collect())
        .collect();
    for row in &mut embedding {
        crate::scalar::normalize_in_place(row);
    }
    Ok(compact_labels(&kmeans(&embedding, n_clusters, seed, KMEANS_RESTARTS)))
}

/// Mean silhouette coefficient with Euclidean distance; `None` with fewer
/// than two clusters. Members of singleton clusters score 0.
pub fn silhouette<S: Scalar>(points: &[(S, S)], labels: &[usize]) -> Option<S> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return None;
    }
    let mut total = S::zero();
    for (i, &pi) in points.iter().enumerate() {
        let li = labels[i];
        if sizes[li] <= 1 {
            continue;
        }
        let mut sums = vec![S::zero(); k];
        for (j, &pj) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] = sums[labels[j]] + distance(pi, pj);
            }
        }
        let a = sums[li] / S::lit((sizes[li] - 1) as f64);
        let b = (0..k)
            .filter(|&c| c != li && sizes[c] > 0)
            .map(|c| sums[c] / S::lit(sizes[c] as f64))
            .fold(S::infinity(), S::min);
        let m = a.max(b);
        if m > S::zero() {
            total = total + (b - a) / m;
        }
    }
    Some(total / S::lit(points.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<S> {
    pub n_clusters: usize,
    pub labels: Vec<usize>,
    /// Mean silhouette of the chosen labeling; `None` for a single cluster.
    pub silhouette: Option<S>,
}

/// Picks the cluster count in `2..=min(n−1, 10)` maximizing the mean
/// silhouette (ties to the smaller count). Falls back to one cluster for
/// `n ≤ 2` or when no candidate has a positive silhouette.
pub fn select_clusters<S: Scalar>(centroids: &[(S, S)], seed: u64) -> Clustering<S> {
    let n = centroids.len();
    let single = Clustering {
        n_clusters: 1,
        labels: vec![0; n],
        silhouette: None,
    };
    if n <= 2 {
        return single;
    }
    let w = build_graph(centroids);
    let mut best: Option<Clustering<S>> = None;
    for k in 2..=(n - 1).min(MAX_CLUSTERS) {
        let labels = match spectral_cluster(&w, k, seed) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let Some(s) = silhouette(centroids, &labels) else {
            continue;
        };
        if s > S::zero() && best.as_ref().is_none_or(|b| s > b.silhouette.unwrap_or(S::zero())) {
            let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
            best = Some(Clustering {
                n_clusters,
                labels,
                silhouette: Some(s),
            });
        }
    }
    best.unwrap_or(single)
}
