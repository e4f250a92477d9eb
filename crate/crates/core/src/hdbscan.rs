//! HDBSCAN over low-dimensional points (Euclidean metric).
//!
//! Stages: core distances → mutual-reachability MST (Prim) → single-linkage
//! hierarchy → condensed tree → excess-of-mass cluster selection.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HdbscanError {
    #[error("min_samples = {min_samples} requires more than {n} points")]
    TooFewPoints { min_samples: usize, n: usize },
    #[error("min_samples must be at least 1")]
    ZeroMinSamples,
    #[error("min_cluster_size must be at least 2, got {0}")]
    MinClusterSize(usize),
    #[error("points have inconsistent dimensions ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),
}

pub type Point = Vec<f64>;

/// Smallest distance used when converting to lambda = 1/distance.
const MIN_DISTANCE: f64 = 1e-12;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_points(points: &[Point]) -> Result<(), HdbscanError> {
    let d = points.first().map_or(0, Vec::len);
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(HdbscanError::Dimension(d, p.len()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(HdbscanError::NonFinite(i));
        }
    }
    Ok(())
}

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances(points: &[Point], min_samples: usize) -> Result<Vec<f64>, HdbscanError> {
    check_points(points)?;
    let n = points.len();
    if min_samples == 0 {
        return Err(HdbscanError::ZeroMinSamples);
    }
    if min_samples >= n {
        return Err(HdbscanError::TooFewPoints { min_samples, n });
    }
    let mut row = Vec::with_capacity(n - 1);
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            row.clear();
            row.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, q)| euclidean(p, q)),
            );
            let (_, kth, _) = row.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm on the dense mutual-reachability graph
/// `max(core_a, core_b, d(a, b))`. Ties go to the lowest index.
pub fn mutual_reachability_mst(points: &[Point], core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    assert_eq!(core.len(), n, "one core distance per point");
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclidean(&points[current], &points[j])
                .max(core[current])
                .max(core[j]);
            if d < best[j] {
                best[j] = d;
                parent[j] = current;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: parent[next],
            b: next,
            weight: best[next],
        });
        current = next;
    }
    edges
}

/// One merge of the single-linkage dendrogram. Ids below `n` are points,
/// `n + i` is the `i`-th merge.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(mst: &[MstEdge], n: usize) -> Vec<Merge> {
    let mut order: Vec<usize> = (0..mst.len()).collect();
    order.sort_by(|&x, &y| mst[x].weight.total_cmp(&mst[y].weight).then(x.cmp(&y)));

    // Union-find over 2n - 1 dendrogram nodes.
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for idx in order {
        let e = mst[idx];
        let ra = find(&mut parent, e.a);
        let rb = find(&mut parent, e.b);
        if ra == rb {
            continue;
        }
        let node = n + merges.len();
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: e.weight,
            size: size[node],
        });
    }
    merges
}

/// Edge of the condensed tree. `child < n_points` is a point falling out of
/// `parent`; otherwise `child` is a cluster born from `parent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedNode {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensedTree {
    n_points: usize,
    min_cluster_size: usize,
    nodes: Vec<CondensedNode>,
    n_clusters: usize,
}

impl CondensedTree {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn min_cluster_size(&self) -> usize {
        self.min_cluster_size
    }

    pub fn nodes(&self) -> &[CondensedNode] {
        &self.nodes
    }

    /// The root cluster id.
    pub fn root(&self) -> usize {
        self.n_points
    }

    /// Cluster ids (root included), in creation order.
    pub fn cluster_ids(&self) -> std::ops::Range<usize> {
        self.n_points..self.n_points + self.n_clusters
    }

    /// Cluster nodes below the root.
    pub fn cluster_nodes(&self) -> impl Iterator<Item = &CondensedNode> {
        self.nodes.iter().filter(move |n| n.child >= self.n_points)
    }

    fn birth_lambdas(&self) -> Vec<f64> {
        let mut birth = vec![0.0; self.n_clusters];
        for node in self.cluster_nodes() {
            birth[node.child - self.n_points] = node.lambda;
        }
        birth
    }

    /// Stability of every cluster: `Σ_children (lambda_child − lambda_birth) · child_size`.
    pub fn stabilities(&self) -> Vec<f64> {
        let birth = self.birth_lambdas();
        let mut stability = vec![0.0; self.n_clusters];
        for node in &self.nodes {
            let c = node.parent - self.n_points;
            stability[c] += (node.lambda - birth[c]) * node.child_size as f64;
        }
        stability
    }
}

/// Walks the single-linkage hierarchy top-down. A split where one side has
/// fewer than `min_cluster_size` points sheds those points from the parent
/// instead of creating a new cluster.
pub fn condensed_tree(mst: &[MstEdge], n_points: usize, min_cluster_size: usize) -> CondensedTree {
    let merges = single_linkage(mst, n_points);
    let mut tree = CondensedTree {
        n_points,
        min_cluster_size,
        nodes: Vec::new(),
        n_clusters: 1,
    };
    if n_points == 0 {
        return tree;
    }
    if merges.len() + 1 != n_points {
        // Disconnected input: treat every point as falling out of the root at lambda 0.
        for p in 0..n_points {
            tree.nodes.push(CondensedNode {
                parent: n_points,
                child: p,
                lambda: 0.0,
                child_size: 1,
            });
        }
        return tree;
    }
    if n_points == 1 {
        tree.nodes.push(CondensedNode {
            parent: 1,
            child: 0,
            lambda: 0.0,
            child_size: 1,
        });
        return tree;
    }

    let node_size = |id: usize| if id < n_points { 1 } else { merges[id - n_points].size };
    let leaves_of = |id: usize| -> Vec<usize> {
        let mut stack = vec![id];
        let mut out = Vec::new();
        while let Some(x) = stack.pop() {
            if x < n_points {
                out.push(x);
            } else {
                let m = merges[x - n_points];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    };

    let root = n_points + merges.len() - 1;
    let mut label = std::collections::HashMap::new();
    label.insert(root, n_points);
    let mut next_label = n_points + 1;
    let mut queue = std::collections::VecDeque::from([root]);

    while let Some(node) = queue.pop_front() {
        let m = merges[node - n_points];
        let parent = label[&node];
        let lambda = 1.0 / m.distance.max(MIN_DISTANCE);
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let fall_out = |tree: &mut CondensedTree, side: usize| {
            for p in leaves_of(side) {
                tree.nodes.push(CondensedNode {
                    parent,
                    child: p,
                    lambda,
                    child_size: 1,
                });
            }
        };
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (side, size) in [(m.left, ls), (m.right, rs)] {
                    label.insert(side, next_label);
                    tree.nodes.push(CondensedNode {
                        parent,
                        child: next_label,
                        lambda,
                        child_size: size,
                    });
                    next_label += 1;
                    tree.n_clusters += 1;
                    if side >= n_points {
                        queue.push_back(side);
                    } else {
                        // A single point as a cluster only happens with min_cluster_size <= 1.
                        tree.nodes.push(CondensedNode {
                            parent: next_label - 1,
                            child: side,
                            lambda,
                            child_size: 1,
                        });
                    }
                }
            }
            (false, false) => {
                fall_out(&mut tree, m.left);
                fall_out(&mut tree, m.right);
            }
            (true, false) | (false, true) => {
                let (keep, shed) = if ls >= min_cluster_size {
                    (m.left, m.right)
                } else {
                    (m.right, m.left)
                };
                fall_out(&mut tree, shed);
                if keep >= n_points {
                    label.insert(keep, parent);
                    queue.push_back(keep);
                } else {
                    fall_out(&mut tree, keep);
                }
            }
        }
    }
    tree
}

/// Flat clustering. Labels are `-1` for noise, otherwise `0..n_clusters`
/// ordered by decreasing cluster size.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub labels: Vec<i64>,
    pub probabilities: Vec<f64>,
    pub n_clusters: usize,
}

impl ClusterResult {
    pub fn all_noise(n: usize) -> Self {
        ClusterResult {
            labels: vec![-1; n],
            probabilities: vec![0.0; n],
            n_clusters: 0,
        }
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }
}

/// Excess-of-mass selection: a cluster is kept when its own stability is at
/// least the summed stability of the best selection among its descendants.
/// The root is never selected.
pub fn extract_clusters(tree: &CondensedTree) -> ClusterResult {
    let n = tree.n_points;
    let nc = tree.n_clusters;
    let base = n;
    let mut stability = tree.stabilities();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for node in tree.cluster_nodes() {
        children[node.parent - base].push(node.child - base);
    }

    let mut selected = vec![true; nc];
    selected[0] = false;
    // Child clusters always carry larger ids than their parent.
    for c in (1..nc).rev() {
        let subtree: f64 = children[c].iter().map(|&ch| stability[ch]).sum();
        if subtree > stability[c] {
            selected[c] = false;
            stability[c] = subtree;
        } else {
            let mut stack = children[c].clone();
            while let Some(d) = stack.pop() {
                selected[d] = false;
                stack.extend_from_slice(&children[d]);
            }
        }
    }

    let mut cluster_parent = vec![usize::MAX; nc];
    for node in tree.cluster_nodes() {
        cluster_parent[node.child - base] = node.parent - base;
    }
    let owning = |mut c: usize| -> Option<usize> {
        loop {
            if selected[c] {
                return Some(c);
            }
            if c == 0 {
                return None;
            }
            c = cluster_parent[c];
        }
    };

    let mut point_cluster = vec![None; n];
    let mut point_lambda = vec![0.0; n];
    for node in tree.nodes.iter().filter(|x| x.child < n) {
        point_cluster[node.child] = owning(node.parent - base);
        point_lambda[node.child] = node.lambda;
    }

    let mut max_lambda = vec![0.0f64; nc];
    let mut size = vec![0usize; nc];
    for p in 0..n {
        if let Some(c) = point_cluster[p] {
            max_lambda[c] = max_lambda[c].max(point_lambda[p]);
            size[c] += 1;
        }
    }

    let mut chosen: Vec<usize> = (0..nc).filter(|&c| selected[c] && size[c] > 0).collect();
    chosen.sort_by(|&x, &y| size[y].cmp(&size[x]).then(x.cmp(&y)));
    let mut relabel = vec![-1i64; nc];
    for (new, &c) in chosen.iter().enumerate() {
        relabel[c] = new as i64;
    }

    let mut labels = vec![-1i64; n];
    let mut probabilities = vec![0.0; n];
    for p in 0..n {
        if let Some(c) = point_cluster[p] {
            labels[p] = relabel[c];
            probabilities[p] = if max_lambda[c] > 0.0 {
                (point_lambda[p] / max_lambda[c]).min(1.0)
            } else {
                1.0
            };
        }
    }
    ClusterResult {
        labels,
        probabilities,
        n_clusters: chosen.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size` when `None`.
    pub min_samples: Option<usize>,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_cluster_size: 50,
            min_samples: None,
        }
    }
}

/// End-to-end clustering. `min_samples` is capped at `n − 1` so that small
/// inputs degrade to all-noise instead of failing.
pub fn hdbscan(points: &[Point], params: &HdbscanParams) -> Result<ClusterResult, HdbscanError> {
    if params.min_cluster_size < 2 {
        return Err(HdbscanError::MinClusterSize(params.min_cluster_size));
    }
    check_points(points)?;
    let n = points.len();
    if n < 2 * params.min_cluster_size || n < 3 {
        // No split can leave two sides that both reach min_cluster_size.
        return Ok(ClusterResult::all_noise(n));
    }
    let min_samples = params
        .min_samples
        .unwrap_or(params.min_cluster_size)
        .clamp(1, n - 1);
    let core = core_distances(points, min_samples)?;
    let mst = mutual_reachability_mst(points, &core);
    let tree = condensed_tree(&mst, n, params.min_cluster_size);
    Ok(extract_clusters(&tree))
}
