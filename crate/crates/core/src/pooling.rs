//! Per-user tweet pools built from four selection methods.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::community::{apportion, elbow_k, kmeans};
use crate::embedding::{cosine_similarity, dot, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingConfig {
    pub n_select: usize,
    pub initial_threshold: f64,
    pub decay_alpha: f64,
    pub decay_floor: f64,
    pub seed: u64,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        PoolingConfig {
            n_select: 20,
            initial_threshold: 0.9,
            decay_alpha: 0.02,
            decay_floor: 0.5,
            seed: 123,
        }
    }
}

impl PoolingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_select == 0 {
            return Err(Error::InvalidArgument("n_select must be positive".into()));
        }
        if !(self.initial_threshold > 0.0 && self.initial_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "initial_threshold must lie in (0, 1], got {}",
                self.initial_threshold
            )));
        }
        if !(self.decay_alpha > 0.0) {
            return Err(Error::InvalidArgument("decay_alpha must be positive".into()));
        }
        if !(self.decay_floor < self.initial_threshold) {
            return Err(Error::InvalidArgument(
                "decay_floor must be below initial_threshold".into(),
            ));
        }
        Ok(())
    }

    /// Similarity threshold in force for the `j`-th selection (0-based).
    pub fn threshold(&self, j: usize) -> f64 {
        (self.initial_threshold - self.decay_alpha * (1.0 + j as f64).ln()).max(self.decay_floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMethod {
    Random,
    MeanNearest,
    StratifiedKmeans,
    IterativeElimination,
}

impl PoolMethod {
    pub const ALL: [PoolMethod; 4] = [
        PoolMethod::Random,
        PoolMethod::MeanNearest,
        PoolMethod::StratifiedKmeans,
        PoolMethod::IterativeElimination,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPool {
    pub user_id: String,
    pub tweet_ids: Vec<String>,
    pub provenance: BTreeMap<String, BTreeSet<PoolMethod>>,
}

/// A tweet id and its embedding.
pub type Item = (String, Vector);

/// Seeded uniform sample without replacement.
pub fn pool_random(ids: &[String], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.choose_multiple(&mut rng, n.min(ids.len())).cloned().collect()
}

/// Cosine similarity of every item to the mean embedding; 0 when the mean
/// vanishes.
fn similarity_to_mean(items: &[Item]) -> Result<Vec<f64>> {
    let mean = Vector::mean(items.iter().map(|(_, v)| v))?;
    if mean.norm() == 0.0 {
        return Ok(vec![0.0; items.len()]);
    }
    items.iter().map(|(_, v)| cosine_similarity(v, &mean)).collect()
}

/// Indices sorted by similarity to the mean, descending, ties by id.
fn mean_order(items: &[Item]) -> Result<(Vec<usize>, Vec<f64>)> {
    let sims = similarity_to_mean(items)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then_with(|| items[a].0.cmp(&items[b].0)));
    Ok((order, sims))
}

/// The `n` tweets nearest the user's mean embedding.
pub fn pool_mean_nearest(items: &[Item], n: usize) -> Result<Vec<String>> {
    if items.is_empty() {
        return Err(Error::Empty("no tweets to pool".into()));
    }
    let (order, _) = mean_order(items)?;
    Ok(order.into_iter().take(n).map(|i| items[i].0.clone()).collect())
}

/// Clusters the tweets and samples each cluster in proportion to its size.
pub fn pool_stratified_kmeans(items: &[Item], n: usize, seed: u64) -> Result<Vec<String>> {
    if items.is_empty() {
        return Err(Error::Empty("no tweets to pool".into()));
    }
    let vectors: Vec<Vector> = items.iter().map(|(_, v)| v.clone()).collect();
    let ids: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
    let k = elbow_k(&vectors, 1, STRATA_K_MAX, seed)?;
    if k == 1 {
        return Ok(pool_random(&ids, n, seed));
    }
    let assignment = kmeans(&vectors, k, seed)?.assignment;
    let mut strata: Vec<Vec<String>> = vec![Vec::new(); k];
    for (id, &c) in ids.into_iter().zip(&assignment) {
        strata[c].push(id);
    }
    strata.retain(|s| !s.is_empty());
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let quotas = apportion(&sizes, &sizes, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (stratum, q) in strata.iter().zip(quotas) {
        out.extend(stratum.choose_multiple(&mut rng, q).cloned());
    }
    Ok(out)
}

pub const STRATA_K_MAX: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationTrace {
    /// Output ids: greedy picks first, then refill.
    pub selected: Vec<String>,
    /// Number of greedy picks at the head of `selected`.
    pub picked: usize,
    /// Threshold applied after each pick.
    pub thresholds: Vec<f64>,
    /// For each pick, the ids it eliminated.
    pub eliminated: Vec<Vec<String>>,
}

/// Greedy diversity selection.
///
/// Tweets are ranked by similarity to the user's mean embedding. The top
/// unchecked tweet is taken, every unchecked tweet at least as similar to it
/// as the current threshold is dropped, and the threshold decays. If fewer
/// than `n_select` are taken, dropped tweets refill the pool in rank order.
pub fn pool_iterative_elimination(items: &[Item], cfg: &PoolingConfig) -> Result<EliminationTrace> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::Empty("no tweets to pool".into()));
    }
    let (order, _) = mean_order(items)?;
    let unit: Vec<Vec<f64>> = items
        .iter()
        .map(|(_, v)| v.normalized().map(Vector::into_values))
        .collect::<Result<_>>()?;
    let mut unchecked = vec![true; order.len()];
    let mut taken = vec![false; order.len()];
    let mut selected = Vec::new();
    let mut thresholds = Vec::new();
    let mut eliminated = Vec::new();
    let mut cursor = 0;
    while selected.len() < cfg.n_select {
        while cursor < order.len() && !unchecked[cursor] {
            cursor += 1;
        }
        if cursor == order.len() {
            break;
        }
        unchecked[cursor] = false;
        taken[cursor] = true;
        let t = order[cursor];
        selected.push(items[t].0.clone());
        let threshold = cfg.threshold(thresholds.len());
        let mut dropped = Vec::new();
        for pos in cursor + 1..order.len() {
            if unchecked[pos] {
                let u = order[pos];
                if dot(&unit[t], &unit[u]) >= threshold {
                    unchecked[pos] = false;
                    dropped.push(items[u].0.clone());
                }
            }
        }
        thresholds.push(threshold);
        eliminated.push(dropped);
    }
    let picked = selected.len();
    for pos in 0..order.len() {
        if selected.len() >= cfg.n_select {
            break;
        }
        if !taken[pos] {
            selected.push(items[order[pos]].0.clone());
        }
    }
    Ok(EliminationTrace {
        selected,
        picked,
        thresholds,
        eliminated,
    })
}

/// Union of all four methods (`n_select` each), deduplicated in method order.
pub fn assemble_pool(user_id: &str, items: &[Item], cfg: &PoolingConfig) -> Result<UserPool> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::Empty(format!("user {user_id} has no tweets")));
    }
    let mut seen = HashSet::new();
    for (id, _) in items {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId {
                id: id.clone(),
                line: 0,
            });
        }
    }
    let ids: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
    let n = cfg.n_select;
    let outputs = [
        (PoolMethod::Random, pool_random(&ids, n, cfg.seed)),
        (PoolMethod::MeanNearest, pool_mean_nearest(items, n)?),
        (PoolMethod::StratifiedKmeans, pool_stratified_kmeans(items, n, cfg.seed)?),
        (
            PoolMethod::IterativeElimination,
            pool_iterative_elimination(items, cfg)?.selected,
        ),
    ];
    let mut tweet_ids = Vec::new();
    let mut provenance: BTreeMap<String, BTreeSet<PoolMethod>> = BTreeMap::new();
    for (method, out) in outputs {
        for id in out {
            let entry = provenance.entry(id.clone()).or_default();
            if entry.is_empty() {
                tweet_ids.push(id);
            }
            entry.insert(method);
        }
    }
    Ok(UserPool {
        user_id: user_id.to_owned(),
        tweet_ids,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedder, HashingEmbedder};
    use proptest::prelude::*;

    fn basis(dim: usize, i: usize) -> Vector {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Vector::new(v).unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i:03}")).collect()
    }

    #[test]
    fn random_edges() {
        let all = ids(5);
        let mut got = pool_random(&all, 10, 1);
        got.sort();
        assert_eq!(got, all);
        assert!(pool_random(&all, 0, 1).is_empty());
        assert_eq!(pool_random(&ids(50), 7, 3), pool_random(&ids(50), 7, 3));
    }

    #[test]
    fn mean_nearest_basics() {
        let one = vec![("a".to_string(), basis(3, 0))];
        assert_eq!(pool_mean_nearest(&one, 5).unwrap(), vec!["a"]);
        let items = vec![
            ("x".to_string(), basis(3, 0)),
            ("y".to_string(), basis(3, 1)),
            ("z".to_string(), Vector::new(vec![1.0, 1.0, 0.0]).unwrap()),
        ];
        assert_eq!(pool_mean_nearest(&items, 1).unwrap(), vec!["z"]);
        assert!(pool_mean_nearest(&[], 1).is_err());
    }

    #[test]
    fn threshold_schedule() {
        let cfg = PoolingConfig::default();
        assert_eq!(cfg.threshold(0), 0.9);
        let seq: Vec<f64> = (0..100_000).step_by(997).map(|j| cfg.threshold(j)).collect();
        for w in seq.windows(2) {
            assert!(w[1] < w[0] || w[1] == cfg.decay_floor);
        }
        assert_eq!(cfg.threshold(1_000_000_000), 0.5);
    }

    #[test]
    fn identical_tweets_refill() {
        let items: Vec<Item> = ids(30).into_iter().map(|id| (id, basis(4, 2))).collect();
        let t = pool_iterative_elimination(&items, &PoolingConfig::default()).unwrap();
        assert_eq!(t.picked, 1);
        assert_eq!(t.eliminated[0].len(), 29);
        assert_eq!(t.selected.len(), 20);
        assert_eq!(t.selected[..3], ids(3)[..]);
    }

    #[test]
    fn orthogonal_tweets_no_elimination() {
        let items: Vec<Item> = ids(25).into_iter().enumerate().map(|(i, id)| (id, basis(25, i))).collect();
        let t = pool_iterative_elimination(&items, &PoolingConfig::default()).unwrap();
        assert_eq!(t.picked, 20);
        assert!(t.eliminated.iter().all(Vec::is_empty));
        assert_eq!(t.selected, pool_mean_nearest(&items, 20).unwrap());
    }

    #[test]
    fn stratified_quota_example() {
        let mut items: Vec<Item> = Vec::new();
        for i in 0..15 {
            items.push((format!("a{i:02}"), Vector::new(vec![1.0, 0.001 * i as f64]).unwrap()));
        }
        for i in 0..5 {
            items.push((format!("b{i:02}"), Vector::new(vec![0.001 * i as f64, 1.0]).unwrap()));
        }
        let got = pool_stratified_kmeans(&items, 4, 123).unwrap();
        assert_eq!(got.len(), 4);
        assert_eq!(got.iter().filter(|id| id.starts_with('a')).count(), 3);
    }

    #[test]
    fn stratified_single_cluster_is_random() {
        let items: Vec<Item> = ids(12).into_iter().map(|id| (id, basis(3, 0))).collect();
        assert_eq!(
            pool_stratified_kmeans(&items, 5, 9).unwrap(),
            pool_random(&ids(12), 5, 9)
        );
    }

    #[test]
    fn small_user_pool_is_everything() {
        let e = HashingEmbedder::new(64).unwrap();
        let items: Vec<Item> = (0..10)
            .map(|i| (format!("t{i}"), e.embed(&format!("tweet number {i} about things")).unwrap()))
            .collect();
        let pool = assemble_pool("u", &items, &PoolingConfig::default()).unwrap();
        assert_eq!(pool.tweet_ids.len(), 10);
        for id in &pool.tweet_ids {
            assert_eq!(pool.provenance[id].len(), 4);
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = PoolingConfig {
            decay_floor: 0.95,
            ..PoolingConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn pool_invariants(n in 1usize..120, seed in 0u64..50) {
            let e = HashingEmbedder::new(32).unwrap();
            let items: Vec<Item> = (0..n)
                .map(|i| (format!("t{i:03}"), e.embed(&format!("w{} w{} w{}", i % 7, i % 11, i % 3)).unwrap()))
                .collect();
            let cfg = PoolingConfig { seed, ..PoolingConfig::default() };
            let pool = assemble_pool("u", &items, &cfg).unwrap();
            prop_assert!(pool.tweet_ids.len() <= 4 * cfg.n_select);
            let uniq: HashSet<&String> = pool.tweet_ids.iter().collect();
            prop_assert_eq!(uniq.len(), pool.tweet_ids.len());
            prop_assert_eq!(pool.provenance.len(), pool.tweet_ids.len());
            let all: HashSet<&String> = items.iter().map(|(id, _)| id).collect();
            prop_assert!(pool.tweet_ids.iter().all(|id| all.contains(id)));
            prop_assert_eq!(&pool, &assemble_pool("u", &items, &cfg).unwrap());
        }
    }
}
