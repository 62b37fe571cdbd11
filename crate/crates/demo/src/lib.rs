//! Three pipeline steps exposed to a static browser page.
//!
//! Each operation takes plain text, runs the core routine with the hashing
//! embedder and returns a json string, so the page needs no bundler.

use std::collections::BTreeMap;

use pillar::community::louvain;
use pillar::corpus::{RetweetEdge, RetweetGraph};
use pillar::embedding::{Embedder, HashingEmbedder, VectorIndex};
use pillar::filter::{label_by_distance, DomainLabel, FilterConfig};
use pillar::pooling::{pool_iterative_elimination, PoolingConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const DIM: usize = 512;

fn lines(text: &str) -> Vec<&str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo output serializes")
}

#[derive(Serialize)]
struct ScoredTweet {
    text: String,
    mean_distance: f64,
    label: DomainLabel,
}

#[derive(Serialize)]
struct BandView {
    domain_below: f64,
    non_domain_above: f64,
    k: usize,
    tweets: Vec<ScoredTweet>,
}

/// Scores each tweet line by mean cosine distance to its `k` nearest
/// knowledge lines and places it in a band.
pub fn distance_bands(knowledge: &str, tweets: &str, theta: f64, k: usize) -> Result<String, String> {
    let cfg = FilterConfig::new(theta, k).map_err(|e| e.to_string())?;
    let embedder = HashingEmbedder::new(DIM).map_err(|e| e.to_string())?;
    let chunks = lines(knowledge);
    if chunks.is_empty() {
        return Err("add at least one knowledge line".into());
    }
    let items = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| embedder.embed(c).map(|v| (format!("c{i}"), v)))
        .collect::<pillar::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let index = VectorIndex::build(items).map_err(|e| e.to_string())?;
    let mut scored = Vec::new();
    for (i, t) in lines(tweets).into_iter().enumerate() {
        let v = embedder.embed(t).map_err(|e| e.to_string())?;
        let l = label_by_distance(&format!("t{i}"), &v, &index, &cfg).map_err(|e| e.to_string())?;
        scored.push(ScoredTweet {
            text: t.to_string(),
            mean_distance: l.mean_distance,
            label: l.label,
        });
    }
    Ok(to_json(&BandView {
        domain_below: 1.0 - theta,
        non_domain_above: theta,
        k: k.min(index.len()),
        tweets: scored,
    }))
}

#[derive(Serialize)]
struct Step {
    picked: String,
    threshold: f64,
    eliminated: Vec<String>,
}

#[derive(Serialize)]
struct EliminationView {
    steps: Vec<Step>,
    refill: Vec<String>,
    selected: Vec<String>,
}

/// Runs greedy elimination over one user's tweet lines and reports each pick
/// with the tweets it knocked out.
pub fn elimination(tweets: &str, n_select: usize, initial_threshold: f64, decay_alpha: f64, decay_floor: f64) -> Result<String, String> {
    let cfg = PoolingConfig {
        n_select,
        initial_threshold,
        decay_alpha,
        decay_floor,
        ..PoolingConfig::default()
    };
    let embedder = HashingEmbedder::new(DIM).map_err(|e| e.to_string())?;
    let texts = lines(tweets);
    // Ids are the texts themselves so the trace reads without a lookup.
    let mut seen = BTreeMap::new();
    let mut items = Vec::new();
    for t in texts {
        if seen.insert(t, ()).is_some() {
            continue;
        }
        items.push((t.to_string(), embedder.embed(t).map_err(|e| e.to_string())?));
    }
    let trace = pool_iterative_elimination(&items, &cfg).map_err(|e| e.to_string())?;
    let steps = (0..trace.picked)
        .map(|i| Step {
            picked: trace.selected[i].clone(),
            threshold: trace.thresholds[i],
            eliminated: trace.eliminated[i].clone(),
        })
        .collect();
    Ok(to_json(&EliminationView {
        steps,
        refill: trace.selected[trace.picked..].to_vec(),
        selected: trace.selected,
    }))
}

#[derive(Serialize)]
struct CommunityView {
    modularity: f64,
    level_modularity: Vec<f64>,
    communities: Vec<Vec<String>>,
}

/// Louvain over `source target [weight]` lines.
pub fn communities(edges: &str, resolution: f64, seed: u64) -> Result<String, String> {
    let mut parsed = Vec::new();
    for (i, line) in lines(edges).into_iter().enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let weight = match parts.as_slice() {
            [_, _] => 1,
            [_, _, w] => w.parse::<u64>().map_err(|_| format!("line {}: weight must be a positive integer", i + 1))?,
            _ => return Err(format!("line {}: expected `source target [weight]`", i + 1)),
        };
        parsed.push(RetweetEdge {
            source: parts[0].to_string(),
            target: parts[1].to_string(),
            weight,
        });
    }
    if parsed.is_empty() {
        return Err("add at least one edge".into());
    }
    let graph = RetweetGraph::new(Vec::new(), parsed).map_err(|e| e.to_string())?;
    let partition = louvain(&graph.undirected(), resolution, seed).map_err(|e| e.to_string())?;
    let mut communities: Vec<Vec<String>> = partition.communities().into_values().collect();
    communities.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    Ok(to_json(&CommunityView {
        modularity: partition.modularity,
        level_modularity: partition.level_modularity,
        communities,
    }))
}

#[wasm_bindgen(js_name = distanceBands)]
pub fn distance_bands_js(knowledge: &str, tweets: &str, theta: f64, k: usize) -> Result<String, JsError> {
    distance_bands(knowledge, tweets, theta, k).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = elimination)]
pub fn elimination_js(tweets: &str, n_select: usize, initial_threshold: f64, decay_alpha: f64, decay_floor: f64) -> Result<String, JsError> {
    elimination(tweets, n_select, initial_threshold, decay_alpha, decay_floor).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = communities)]
pub fn communities_js(edges: &str, resolution: f64, seed: u32) -> Result<String, JsError> {
    communities(edges, resolution, seed as u64).map_err(|e| JsError::new(&e))
}
