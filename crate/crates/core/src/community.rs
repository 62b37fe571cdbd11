//! Louvain community detection, representative user sampling, k-means with an
//! automated elbow, and stratified population splits.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::UndirectedGraph;
use crate::embedding::Vector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: BTreeMap<String, usize>,
    pub modularity: f64,
    /// Modularity on the input graph after each aggregation level.
    #[serde(default)]
    pub level_modularity: Vec<f64>,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment
            .values()
            .copied()
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Members of every community, sorted by user id.
    pub fn communities(&self) -> BTreeMap<usize, Vec<String>> {
        let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (user, &c) in &self.assignment {
            out.entry(c).or_default().push(user.clone());
        }
        out
    }
}

/// Weighted modularity of `assignment` (indexed like `graph.names`).
///
/// A self-loop of weight `w` contributes `2w` to its node's degree.
pub fn modularity(graph: &UndirectedGraph, assignment: &[usize], resolution: f64) -> f64 {
    let m: f64 = graph.edges.iter().map(|e| e.2).sum();
    if m == 0.0 {
        return 0.0;
    }
    let communities = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; communities];
    let mut degree = vec![0.0; communities];
    for &(u, v, w) in &graph.edges {
        degree[assignment[u]] += w;
        degree[assignment[v]] += w;
        if assignment[u] == assignment[v] {
            internal[assignment[u]] += w;
        }
    }
    internal
        .iter()
        .zip(&degree)
        .map(|(l, d)| l / m - resolution * (d / (2.0 * m)).powi(2))
        .sum()
}

struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
    degree: Vec<f64>,
}

impl LevelGraph {
    fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        let mut loops = vec![0.0; n];
        let mut degree = vec![0.0; n];
        for (u, v, w) in edges {
            if u == v {
                loops[u] += w;
                degree[u] += 2.0 * w;
            } else {
                adj[u].push((v, w));
                adj[v].push((u, w));
                degree[u] += w;
                degree[v] += w;
            }
        }
        LevelGraph { adj, loops, degree }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }
}

/// Local-move phase. Returns the community of each node and whether any
/// node moved.
fn local_moves(g: &LevelGraph, m: f64, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = g.len();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = g.degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let two_m = 2.0 * m;
    let mut moved_any = false;
    let mut links: HashMap<usize, f64> = HashMap::new();
    loop {
        let mut moved = false;
        for &i in &order {
            let ci = comm[i];
            let ki = g.degree[i];
            links.clear();
            for &(j, w) in &g.adj[i] {
                *links.entry(comm[j]).or_insert(0.0) += w;
            }
            tot[ci] -= ki;
            let gain = |c: usize, k_in: f64| k_in - resolution * tot[c] * ki / two_m;
            let mut best = ci;
            let mut best_gain = gain(ci, links.get(&ci).copied().unwrap_or(0.0));
            let mut candidates: Vec<(usize, f64)> = links.iter().map(|(&c, &w)| (c, w)).collect();
            candidates.sort_unstable_by_key(|&(c, _)| c);
            for (c, k_in) in candidates {
                let g = gain(c, k_in);
                if g > best_gain + 1e-12 {
                    best = c;
                    best_gain = g;
                }
            }
            tot[best] += ki;
            if best != ci {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (comm, moved_any)
}

/// Renumbers community labels densely in order of first appearance.
fn relabel(comm: &mut [usize]) -> usize {
    let mut map: HashMap<usize, usize> = HashMap::new();
    for c in comm.iter_mut() {
        let next = map.len();
        *c = *map.entry(*c).or_insert(next);
    }
    map.len()
}

/// Two-phase Louvain with a seeded node-visit order.
pub fn louvain(graph: &UndirectedGraph, resolution: f64, seed: u64) -> Result<Partition> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::Empty("graph has no nodes".into()));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let m: f64 = graph.edges.iter().map(|e| e.2).sum();
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level_modularity = Vec::new();
    if m > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = LevelGraph::from_edges(n, graph.edges.iter().copied());
        loop {
            let (mut comm, moved) = local_moves(&level, m, resolution, &mut rng);
            if !moved {
                break;
            }
            let count = relabel(&mut comm);
            for c in membership.iter_mut() {
                *c = comm[*c];
            }
            level_modularity.push(modularity(graph, &membership, resolution));
            let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
            for (u, nbrs) in level.adj.iter().enumerate() {
                for &(v, w) in nbrs {
                    if u < v {
                        let (a, b) = (comm[u].min(comm[v]), comm[u].max(comm[v]));
                        *merged.entry((a, b)).or_insert(0.0) += w;
                    }
                }
                if level.loops[u] > 0.0 {
                    *merged.entry((comm[u], comm[u])).or_insert(0.0) += level.loops[u];
                }
            }
            let mut edges: Vec<(usize, usize, f64)> =
                merged.into_iter().map(|((a, b), w)| (a, b, w)).collect();
            edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
            level = LevelGraph::from_edges(count, edges);
            if count == 1 {
                break;
            }
        }
    }
    relabel(&mut membership);
    let modularity = modularity(graph, &membership, resolution);
    let assignment = graph
        .names
        .iter()
        .cloned()
        .zip(membership.iter().copied())
        .collect();
    Ok(Partition {
        assignment,
        modularity,
        level_modularity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub top_community_fraction: f64,
    pub user_fraction: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            top_community_fraction: 0.2,
            user_fraction: 0.1,
            seed: 123,
        }
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("top_community_fraction", self.top_community_fraction),
            ("user_fraction", self.user_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

/// Samples users from the largest communities.
///
/// Communities are ranked by size descending, ties by smallest id. Output is
/// grouped by community rank, sorted by user id within a community.
pub fn sample_users(partition: &Partition, spec: &SampleSpec) -> Result<Vec<String>> {
    spec.validate()?;
    if partition.assignment.is_empty() {
        return Err(Error::Empty("partition has no users".into()));
    }
    let mut communities: Vec<(usize, Vec<String>)> = partition.communities().into_iter().collect();
    communities.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let top = ((spec.top_community_fraction * communities.len() as f64).ceil() as usize)
        .clamp(1, communities.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for (_, members) in communities.into_iter().take(top) {
        let take = ((spec.user_fraction * members.len() as f64).ceil() as usize).min(members.len());
        let mut picked: Vec<String> = members.choose_multiple(&mut rng, take).cloned().collect();
        picked.sort();
        out.extend(picked);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    pub iterations: usize,
}

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(centroid, p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's k-means under squared Euclidean distance with seeded
/// farthest-point initialization.
pub fn kmeans(points: &[Vector], k: usize, seed: u64) -> Result<KMeans> {
    if points.is_empty() {
        return Err(Error::Empty("k-means over zero points".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k={k} must lie in 1..={}",
            points.len()
        )));
    }
    let dim = points[0].dim();
    if let Some(p) = points.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.gen_range(0..points.len())].values().to_vec()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq_dist(&centroids[0], p.values())).collect();
    while centroids.len() < k {
        let mut far = 0;
        for (i, &d) in closest.iter().enumerate() {
            if d > closest[far] {
                far = i;
            }
        }
        let c = points[far].values().to_vec();
        for (d, p) in closest.iter_mut().zip(points) {
            *d = d.min(sq_dist(&c, p.values()));
        }
        centroids.push(c);
    }

    let mut assignment = vec![0usize; points.len()];
    let mut prev = f64::INFINITY;
    let mut wcss;
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        wcss = 0.0;
        for (a, p) in assignment.iter_mut().zip(points) {
            let (c, d) = nearest(&centroids, p.values());
            *a = c;
            wcss += d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p.values()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if wcss == 0.0 || (prev - wcss).abs() <= KMEANS_TOL * prev {
            break;
        }
        prev = wcss;
    }
    // Score the final centroids.
    wcss = 0.0;
    for (a, p) in assignment.iter_mut().zip(points) {
        let (c, d) = nearest(&centroids, p.values());
        *a = c;
        wcss += d;
    }
    Ok(KMeans {
        assignment,
        centroids,
        wcss,
        iterations,
    })
}

/// Picks `k` at the point of the WCSS curve farthest from the chord joining
/// its endpoints, after scaling both axes to `[0, 1]`.
///
/// Candidates run from `k_min` to `min(k_max, max(n / 5, k_min))`. Fewer than
/// four points, or all points identical, yields 1.
pub fn elbow_k(vectors: &[Vector], k_min: usize, k_max: usize, seed: u64) -> Result<usize> {
    let n = vectors.len();
    if n < 4 || vectors.iter().all(|v| v == &vectors[0]) {
        return Ok(1);
    }
    let k_min = k_min.max(1);
    if k_min > n {
        return Err(Error::InvalidArgument(format!("k_min={k_min} exceeds {n} points")));
    }
    let hi = k_max.min((n / 5).max(k_min)).min(n);
    if hi <= k_min {
        return Ok(k_min);
    }
    let ks: Vec<usize> = (k_min..=hi).collect();
    let wcss: Vec<f64> = ks
        .par_iter()
        .map(|&k| kmeans(vectors, k, seed).map(|r| r.wcss))
        .collect::<Result<_>>()?;
    Ok(chord_elbow(&ks, &wcss))
}

/// Index-free elbow selection over `(k, wcss)` pairs; ties pick the smaller k.
pub fn chord_elbow(ks: &[usize], wcss: &[f64]) -> usize {
    let (lo, hi) = (ks[0] as f64, ks[ks.len() - 1] as f64);
    let wmax = wcss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wmin = wcss.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == lo || wmax - wmin <= 0.0 {
        return ks[0];
    }
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(wcss)
        .map(|(&k, &w)| ((k as f64 - lo) / (hi - lo), (w - wmin) / (wmax - wmin)))
        .collect();
    let (x0, y0) = pts[0];
    let (x1, y1) = pts[pts.len() - 1];
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let mut best = (ks[0], f64::NEG_INFINITY);
    for (&k, &(x, y)) in ks.iter().zip(&pts) {
        let d = ((x1 - x0) * (y0 - y) - (x0 - x) * (y1 - y0)).abs() / len;
        if d > best.1 + 1e-12 {
            best = (k, d);
        }
    }
    best.0
}

/// Largest-remainder apportionment of `min(n, sum(caps))` seats in proportion
/// to `weights`, never exceeding `caps`.
pub fn apportion(weights: &[usize], caps: &[usize], n: usize) -> Vec<usize> {
    assert_eq!(weights.len(), caps.len());
    let total_w: usize = weights.iter().sum();
    let target = n.min(caps.iter().sum());
    if target == 0 || total_w == 0 {
        return vec![0; weights.len()];
    }
    let ideal: Vec<f64> = weights
        .iter()
        .map(|&w| w as f64 * target as f64 / total_w as f64)
        .collect();
    let mut quota: Vec<usize> = ideal
        .iter()
        .zip(caps)
        .map(|(&x, &c)| (x.floor() as usize).min(c))
        .collect();
    let mut left = target - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - quota[a] as f64;
        let rb = ideal[b] - quota[b] as f64;
        rb.total_cmp(&ra)
            .then(weights[b].cmp(&weights[a]))
            .then(a.cmp(&b))
    });
    while left > 0 {
        let before = left;
        for &i in &order {
            if left == 0 {
                break;
            }
            if quota[i] < caps[i] {
                quota[i] += 1;
                left -= 1;
            }
        }
        if before == left {
            break;
        }
    }
    quota
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSplit {
    pub statement: Vec<String>,
    pub profile: Vec<String>,
    pub clusters: usize,
}

pub const SPLIT_K_MAX: usize = 10;

/// Stratified split of `users` into disjoint statement and profiling groups.
///
/// Users are clustered with k-means (k from [`elbow_k`]) over their vectors;
/// each cluster contributes to both groups in proportion to its size.
pub fn split_population(
    users: &[String],
    user_vectors: &HashMap<String, Vector>,
    n_statement: usize,
    n_profile: usize,
    seed: u64,
) -> Result<PopulationSplit> {
    let mut users: Vec<String> = users.to_vec();
    users.sort();
    users.dedup();
    if n_statement + n_profile > users.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {} + {} users but only {} available",
            n_statement,
            n_profile,
            users.len()
        )));
    }
    let vectors: Vec<Vector> = users
        .iter()
        .map(|u| {
            user_vectors
                .get(u)
                .cloned()
                .ok_or_else(|| Error::UnknownId(u.clone()))
        })
        .collect::<Result<_>>()?;
    let k = elbow_k(&vectors, 1, SPLIT_K_MAX, seed)?;
    let assignment = if k == 1 {
        vec![0; users.len()]
    } else {
        kmeans(&vectors, k, seed)?.assignment
    };
    let mut clusters: Vec<Vec<String>> = vec![Vec::new(); k];
    for (u, &c) in users.iter().zip(&assignment) {
        clusters[c].push(u.clone());
    }
    clusters.retain(|c| !c.is_empty());
    let sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
    let q_stmt = apportion(&sizes, &sizes, n_statement);
    let room: Vec<usize> = sizes.iter().zip(&q_stmt).map(|(s, q)| s - q).collect();
    let q_prof = apportion(&sizes, &room, n_profile);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut statement = Vec::with_capacity(n_statement);
    let mut profile = Vec::with_capacity(n_profile);
    for ((members, &qs), &qp) in clusters.iter_mut().zip(&q_stmt).zip(&q_prof) {
        members.shuffle(&mut rng);
        statement.extend_from_slice(&members[..qs]);
        profile.extend_from_slice(&members[qs..qs + qp]);
    }
    statement.sort();
    profile.sort();
    Ok(PopulationSplit {
        statement,
        profile,
        clusters: sizes.len(),
    })
}
