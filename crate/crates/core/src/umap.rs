//! UMAP dimensionality reduction: exact cosine kNN graph, per-point smooth
//! calibration, fuzzy-union symmetrization and a negative-sampling SGD layout.
//!
//! The layout starts from a seeded uniform draw in `[-10, 10]^out_dim` rather
//! than a spectral embedding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embedding::{cosine_distance_unchecked, EmbeddingMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum UmapError {
    #[error("k = {k} neighbors requested but only {n} points (need k < n)")]
    TooFewPoints { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroNeighbors,
    #[error("curve fit did not converge after {0} iterations")]
    CurveFit(usize),
    #[error("invalid layout configuration: {0}")]
    Config(String),
}

/// Exact k nearest neighbors, self excluded, each row sorted by ascending distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    k: usize,
    neighbors: Vec<usize>,
    distances: Vec<f64>,
}

impl KnnGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.neighbors.len() / self.k
        }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

pub fn knn_graph(m: &EmbeddingMatrix, k: usize) -> Result<KnnGraph, UmapError> {
    knn_graph_by(m.n(), k, |i, j| cosine_distance_unchecked(m.row(i), m.row(j)))
}

/// Brute-force kNN under an arbitrary distance; ties resolve to the lower index.
pub fn knn_graph_by<F>(n: usize, k: usize, dist: F) -> Result<KnnGraph, UmapError>
where
    F: Fn(usize, usize) -> f64,
{
    if k == 0 {
        return Err(UmapError::ZeroNeighbors);
    }
    if k >= n {
        return Err(UmapError::TooFewPoints { k, n });
    }
    let mut neighbors = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    let mut row: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)));
        row.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        row.truncate(k);
        row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in &row {
            neighbors.push(j);
            distances.push(d);
        }
    }
    Ok(KnnGraph {
        k,
        neighbors,
        distances,
    })
}

/// Per-point local connectivity: `rho` is the nearest-neighbor distance,
/// `sigma` the bandwidth that makes the membership sum hit `log2(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub rho: f64,
    pub sigma: f64,
}

const SIGMA_ITERATIONS: usize = 64;
const MIN_SIGMA_SCALE: f64 = 1e-3;

fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    (-(d - rho).max(0.0) / sigma).exp()
}

/// Binary search for `sigma` such that `Σ_j exp(−max(0, d_j − rho)/sigma) = target`,
/// with the result clamped below by `floor`.
pub fn solve_sigma(distances: &[f64], rho: f64, target: f64, floor: f64) -> f64 {
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..SIGMA_ITERATIONS {
        let psum: f64 = distances.iter().map(|&d| membership(d, rho, mid)).sum();
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    mid.max(floor)
}

pub fn smooth_knn(g: &KnnGraph) -> Vec<Calibration> {
    let n = g.n();
    let target = (g.k() as f64).log2();
    let global_mean = if n == 0 {
        0.0
    } else {
        g.distances.iter().sum::<f64>() / g.distances.len() as f64
    };
    (0..n)
        .map(|i| {
            let dists = g.distances(i);
            let rho = dists[0];
            let row_mean = dists.iter().sum::<f64>() / dists.len() as f64;
            let mean = if row_mean > 0.0 { row_mean } else { global_mean };
            let floor = if mean > 0.0 {
                MIN_SIGMA_SCALE * mean
            } else {
                MIN_SIGMA_SCALE
            };
            Calibration {
                rho,
                sigma: solve_sigma(dists, rho, target, floor),
            }
        })
        .collect()
}

/// Directed membership strengths: row `i` lists `(j, strength)` for each neighbor `j`.
pub type DirectedMemberships = Vec<Vec<(usize, f64)>>;

pub fn directed_memberships(g: &KnnGraph, calibration: &[Calibration]) -> DirectedMemberships {
    (0..g.n())
        .map(|i| {
            let Calibration { rho, sigma } = calibration[i];
            g.neighbors(i)
                .iter()
                .zip(g.distances(i))
                .map(|(&j, &d)| (j, membership(d, rho, sigma)))
                .collect()
        })
        .collect()
}

/// Symmetric sparse membership graph with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl FuzzyGraph {
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|p| self.adjacency[i][p].1)
            .unwrap_or(0.0)
    }

    /// Every stored entry `(i, j, w)`, both directions included.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    /// Builds a graph from undirected weighted edges; mainly for tests and callers
    /// with precomputed affinities.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> FuzzyGraph {
        let mut directed: DirectedMemberships = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            directed[i].push((j, w));
            directed[j].push((i, w));
        }
        fuzzy_union(&directed)
    }
}

/// Probabilistic t-conorm: `s(i, j) = a + b − a·b` for directed strengths `a`, `b`.
pub fn fuzzy_union(directed: &DirectedMemberships) -> FuzzyGraph {
    let n = directed.len();
    let mut dense_rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for (i, row) in directed.iter().enumerate() {
        for &(j, w) in row {
            if i == j {
                continue;
            }
            let slot = dense_rows[i].entry(j).or_insert(0.0);
            *slot = slot.max(w);
        }
    }
    let mut support: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); n];
    for (i, row) in dense_rows.iter().enumerate() {
        for &j in row.keys() {
            support[i].insert(j);
            support[j].insert(i);
        }
    }
    let mut adjacency = vec![Vec::new(); n];
    for (i, cols) in support.iter().enumerate() {
        for &j in cols {
            let a = dense_rows[i].get(&j).copied().unwrap_or(0.0);
            let b = dense_rows[j].get(&i).copied().unwrap_or(0.0);
            let s = a + b - a * b;
            if s > 0.0 {
                adjacency[i].push((j, s));
            }
        }
    }
    FuzzyGraph { adjacency }
}

/// Fuzzy simplicial set of an embedding under cosine distance.
pub fn fuzzy_graph(m: &EmbeddingMatrix, k: usize) -> Result<FuzzyGraph, UmapError> {
    let g = knn_graph(m, k)?;
    let cal = smooth_knn(&g);
    Ok(fuzzy_union(&directed_memberships(&g, &cal)))
}

const CURVE_SAMPLES: usize = 300;
const CURVE_MAX_ITER: usize = 1000;

/// Least-squares fit of `1 / (1 + a·x^(2b))` to the piecewise target
/// (1 up to `min_dist`, then `exp(−(x − min_dist)/spread)`) on 300 points in `[0, 3·spread]`.
/// Levenberg–Marquardt from `(a, b) = (1, 1)`.
pub fn fit_curve_params(min_dist: f64, spread: f64) -> Result<(f64, f64), UmapError> {
    if !(min_dist > 0.0 && spread > 0.0 && min_dist < spread * 10.0) {
        return Err(UmapError::Config(format!(
            "need 0 < min_dist < 10·spread, got min_dist={min_dist}, spread={spread}"
        )));
    }
    let xs: Vec<f64> = (0..CURVE_SAMPLES)
        .map(|i| 3.0 * spread * i as f64 / (CURVE_SAMPLES - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x <= min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let cost = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut current = cost(a, b);
    let mut lambda = 1e-3;
    for _ in 0..CURVE_MAX_ITER {
        // Normal equations JᵀJ δ = −Jᵀr.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = if x > 0.0 { x.powf(2.0 * b) } else { 0.0 };
            let denom = 1.0 + a * p;
            let phi = 1.0 / denom;
            let r = phi - y;
            let da = -p / (denom * denom);
            let db = if x > 0.0 {
                -a * p * 2.0 * x.ln() / (denom * denom)
            } else {
                0.0
            };
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        if ga.abs() < 1e-14 && gb.abs() < 1e-14 {
            return Ok((a, b));
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let m00 = jaa * (1.0 + lambda);
            let m11 = jbb * (1.0 + lambda);
            let det = m00 * m11 - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = (-ga * m11 + gb * jab) / det;
            let step_b = (-gb * m00 + ga * jab) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let next = cost(na, nb);
                if next <= current {
                    let converged = (current - next).abs() <= 1e-15 * current.max(1e-300)
                        && step_a.abs() <= 1e-12 * a
                        && step_b.abs() <= 1e-12 * b;
                    a = na;
                    b = nb;
                    current = next;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if converged {
                        return Ok((a, b));
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left at any damping: a stationary point.
            return Ok((a, b));
        }
    }
    Err(UmapError::CurveFit(CURVE_MAX_ITER))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutConfig {
    pub out_dim: usize,
    pub epochs: usize,
    pub min_dist: f64,
    pub spread: f64,
    /// Curve parameters; fitted from `min_dist`/`spread` when `None`.
    pub curve: Option<(f64, f64)>,
    pub negative_sample_rate: usize,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            out_dim: 5,
            epochs: 200,
            min_dist: 0.1,
            spread: 1.0,
            curve: None,
            negative_sample_rate: 5,
            seed: 42,
            learning_rate: 1.0,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<(), UmapError> {
        if self.out_dim < 1 {
            return Err(UmapError::Config("out_dim must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(UmapError::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(UmapError::Config("learning_rate must be > 0".into()));
        }
        if let Some((a, b)) = self.curve {
            if !(a > 0.0 && b > 0.0) {
                return Err(UmapError::Config("curve parameters a, b must be > 0".into()));
            }
        } else if !(self.min_dist > 0.0 && self.spread > 0.0) {
            return Err(UmapError::Config("min_dist and spread must be > 0".into()));
        }
        Ok(())
    }

    pub fn curve_params(&self) -> Result<(f64, f64), UmapError> {
        match self.curve {
            Some(ab) => Ok(ab),
            None => fit_curve_params(self.min_dist, self.spread),
        }
    }
}

/// Seeded uniform draw in `[-10, 10]^out_dim`.
pub fn random_init(n: usize, out_dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..out_dim).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect()
}

pub fn optimize_layout(g: &FuzzyGraph, cfg: &LayoutConfig) -> Result<Vec<Vec<f64>>, UmapError> {
    cfg.validate()?;
    let init = random_init(g.n(), cfg.out_dim, cfg.seed);
    optimize_layout_from(init, g, cfg)
}

fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// SGD on the fuzzy-set cross-entropy starting from `init`. Edges are sampled in
/// proportion to their strength; the learning rate decays linearly to zero.
pub fn optimize_layout_from(
    mut emb: Vec<Vec<f64>>,
    g: &FuzzyGraph,
    cfg: &LayoutConfig,
) -> Result<Vec<Vec<f64>>, UmapError> {
    cfg.validate()?;
    let n = g.n();
    if emb.len() != n || emb.iter().any(|r| r.len() != cfg.out_dim) {
        return Err(UmapError::Config(format!(
            "initial layout must be {n} x {}",
            cfg.out_dim
        )));
    }
    let (a, b) = cfg.curve_params()?;
    let epochs = cfg.epochs;

    let max_w = g.entries().map(|(_, _, w)| w).fold(0.0f64, f64::max);
    let edges: Vec<(usize, usize, f64)> = g
        .entries()
        .filter(|&(_, _, w)| w >= max_w / epochs as f64)
        .collect();
    if edges.is_empty() || n < 2 {
        return Ok(emb);
    }
    let epochs_per_sample: Vec<f64> = edges.iter().map(|&(_, _, w)| max_w / w).collect();
    let neg_rate = cfg.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample
        .iter()
        .map(|&e| if neg_rate > 0.0 { e / neg_rate } else { f64::INFINITY })
        .collect();
    let mut next_sample = epochs_per_sample.clone();
    // Negative sampling starts after an edge's first positive sample.
    let mut next_negative = epochs_per_sample.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let dim = cfg.out_dim;
    let mut grad = vec![0.0f64; dim];
    let mut alpha = cfg.learning_rate;

    for epoch in 0..epochs {
        let e = epoch as f64;
        for (idx, &(i, j, _)) in edges.iter().enumerate() {
            if next_sample[idx] > e + 1.0 {
                continue;
            }
            // Attraction along the edge.
            let d2 = squared_distance(&emb[i], &emb[j]);
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for k in 0..dim {
                grad[k] = clip(coeff * (emb[i][k] - emb[j][k]));
            }
            for k in 0..dim {
                emb[i][k] += grad[k] * alpha;
                emb[j][k] -= grad[k] * alpha;
            }
            next_sample[idx] += epochs_per_sample[idx];

            // Repulsion from uniformly drawn negatives.
            let n_neg = ((e + 1.0 - next_negative[idx]) / epochs_per_negative[idx]).floor();
            let n_neg = if n_neg.is_finite() && n_neg > 0.0 {
                n_neg as usize
            } else {
                0
            };
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                if other == i {
                    continue;
                }
                let d2 = squared_distance(&emb[i], &emb[other]);
                if d2 > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                    for k in 0..dim {
                        grad[k] = clip(coeff * (emb[i][k] - emb[other][k]));
                    }
                } else {
                    grad.iter_mut().for_each(|g| *g = 4.0);
                }
                for k in 0..dim {
                    emb[i][k] += grad[k] * alpha;
                }
            }
            next_negative[idx] += n_neg as f64 * epochs_per_negative[idx];
        }
        alpha = cfg.learning_rate * (1.0 - (epoch + 1) as f64 / epochs as f64);
    }
    debug_assert!(emb.iter().flatten().all(|v| v.is_finite()));
    Ok(emb)
}

/// Full reduction: cosine kNN graph with `n_neighbors`, fuzzy union, SGD layout.
pub fn reduce(
    m: &EmbeddingMatrix,
    n_neighbors: usize,
    cfg: &LayoutConfig,
) -> Result<Vec<Vec<f64>>, UmapError> {
    let g = fuzzy_graph(m, n_neighbors)?;
    optimize_layout(&g, cfg)
}
