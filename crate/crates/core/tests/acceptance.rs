//! One line per acceptance criterion, printed even when all pass. Every oracle here is written
//! independently of the library code it checks.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pillar::community::{louvain, modularity};
use pillar::corpus::{RetweetEdge, RetweetGraph};
use pillar::embedding::{Embedder, HashingEmbedder, Vector, VectorIndex};
use pillar::evaluation::{bootstrap_ci, cohens_kappa, macro_f1, mcnemar, EvalResult, StanceLabel};
use pillar::filter::{label_all, DomainLabel, FilterConfig};
use pillar::pipeline::embed_tweets;
use pillar::pooling::{
    assemble_pool, pool_iterative_elimination, pool_stratified_kmeans, PoolMethod, PoolingConfig,
};
use pillar::retrieval::{bm25_rank, dense_rank, Bm25Index, Bm25Params};
use pillar::synth::{distance_fixture, FixtureShape, SynthSpec};
use pillar::text::tokenize;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn cos_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    (1.0 - d / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0)
}

fn distance_band(cfg: &FilterConfig, d: f64) -> DomainLabel {
    if d < 1.0 - cfg.theta {
        DomainLabel::Domain
    } else if d > cfg.theta {
        DomainLabel::NonDomain
    } else {
        DomainLabel::Borderline
    }
}

fn distance_oracle() -> Outcome {
    let fixture = distance_fixture(&FixtureShape {
        groups: 20,
        chunks_per_group: 10,
        near: 300,
        mid: 200,
        far: 500,
        seed: 7,
    })
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let embedder = HashingEmbedder::new(256).unwrap();
    let chunk_vecs: Vec<(String, Vector)> = fixture
        .chunks
        .iter()
        .map(|(id, t)| (id.clone(), embedder.embed(t).unwrap()))
        .collect();
    let items: Vec<(String, Vector)> = fixture
        .tweets
        .iter()
        .map(|(id, t, _)| (id.clone(), embedder.embed(t).unwrap()))
        .collect();
    let cfg = FilterConfig::default();
    let index = VectorIndex::build(chunk_vecs.clone()).unwrap();
    let labels = label_all(&items, &index, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let mut matched = 0;
    let mut bands = BTreeMap::new();
    for ((_, v), got) in items.iter().zip(&labels) {
        let mut all: Vec<f64> = chunk_vecs
            .iter()
            .map(|(_, c)| cos_distance(v.values(), c.values()))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = all[..cfg.k].iter().sum::<f64>() / cfg.k as f64;
        let want = distance_band(&cfg, mean);
        if want == got.label && (mean - got.mean_distance).abs() < 1e-9 {
            matched += 1;
        }
        *bands.entry(format!("{want:?}")).or_insert(0) += 1;
    }
    check(matched == items.len(), || format!("{matched}/{} tweets match", items.len()))?;
    check(bands.len() == 3, || format!("fixture must exercise all bands, got {bands:?}"))?;
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("{matched}/1000 match, bands {bands:?}, {elapsed:.2?}"))
}

fn word_corpus(rng: &mut ChaCha8Rng, vocab: &[String], n: usize, len: std::ops::Range<usize>) -> Vec<String> {
    (0..n)
        .map(|_| {
            let k = rng.gen_range(len.clone());
            (0..k)
                .map(|_| {
                    let u: f64 = rng.gen();
                    vocab[((u * u) * vocab.len() as f64) as usize].as_str()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn bm25_oracle(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, t)| tokenize(t)).collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms = tokenize(query);
    terms.sort();
    terms.dedup();
    let mut out = Vec::new();
    for (i, toks) in tokenized.iter().enumerate() {
        let mut score = 0.0;
        for term in &terms {
            let tf = toks.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = tokenized.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * toks.len() as f64 / avgdl));
        }
        if score > 0.0 {
            out.push((docs[i].0.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

fn retrieval_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vocab: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
    let texts = word_corpus(&mut rng, &vocab, 500, 5..40);
    let docs: Vec<(String, String)> = texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| (format!("d{i:03}"), t))
        .collect();
    let queries = word_corpus(&mut rng, &vocab, 50, 1..5);

    let start = Instant::now();
    let params = Bm25Params::default();
    let index = Bm25Index::build(docs.iter().map(|(i, t)| (i.as_str(), t.as_str())), params);
    let embedder = HashingEmbedder::new(256).unwrap();
    let doc_vecs: Vec<(String, Vector)> = docs
        .iter()
        .map(|(id, t)| (id.clone(), embedder.embed(t).unwrap()))
        .collect();
    let dense = VectorIndex::build(doc_vecs.clone()).unwrap();
    let mut sparse_out = Vec::new();
    let mut dense_out = Vec::new();
    for q in &queries {
        sparse_out.push(bm25_rank(&index, q, docs.len()).map_err(|e| e.to_string())?);
        let qv = embedder.embed(q).unwrap();
        dense_out.push((qv.clone(), dense_rank(&dense, &qv, docs.len()).map_err(|e| e.to_string())?));
    }
    let elapsed = start.elapsed();

    for (q, got) in queries.iter().zip(&sparse_out) {
        let want = bm25_oracle(&docs, q, params.k1, params.b);
        check(want.len() == got.len(), || format!("bm25 `{q}`: {} vs {} hits", got.len(), want.len()))?;
        for (r, (w, g)) in want.iter().zip(got).enumerate() {
            check(w.0 == g.id && (w.1 - g.score).abs() < 1e-9, || {
                format!("bm25 `{q}` rank {r}: {} {} vs oracle {} {}", g.id, g.score, w.0, w.1)
            })?;
        }
    }
    for (qv, got) in &dense_out {
        let mut want: Vec<(String, f64)> = doc_vecs
            .iter()
            .map(|(id, v)| (id.clone(), cos_distance(qv.values(), v.values())))
            .collect();
        want.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        check(want.len() == got.len(), || "dense result size differs".into())?;
        for (r, (w, g)) in want.iter().zip(got).enumerate() {
            check(w.0 == g.id && (w.1 - g.distance).abs() < 1e-9, || {
                format!("dense rank {r}: {} {} vs oracle {} {}", g.id, g.distance, w.0, w.1)
            })?;
        }
    }
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("500 docs x 50 queries exact, {elapsed:.2?}"))
}

/// Newman modularity from a dense adjacency matrix.
fn modularity_oracle(n: usize, edges: &[(usize, usize, f64)], comm: &[usize]) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v, w) in edges {
        a[u][v] += w;
        a[v][u] += w;
    }
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if comm[i] == comm[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

fn louvain_planted() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let n = 100;
    let planted: Vec<usize> = (0..n).map(|i| i / 25).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if planted[u] == planted[v] { 0.3 } else { 0.02 };
            if rng.gen_bool(p) {
                edges.push(RetweetEdge {
                    source: format!("n{u:03}"),
                    target: format!("n{v:03}"),
                    weight: rng.gen_range(1..4),
                });
            }
        }
    }
    let graph = RetweetGraph::new((0..n).map(|i| format!("n{i:03}")), edges)
        .unwrap()
        .undirected();
    let start = Instant::now();
    let part = louvain(&graph, 1.0, 123).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let comm: Vec<usize> = graph.names.iter().map(|name| part.assignment[name]).collect();
    let planted_q = modularity_oracle(n, &graph.edges, &planted);
    let found_q = modularity_oracle(n, &graph.edges, &comm);
    check(part.modularity >= planted_q - 0.02, || {
        format!("modularity {:.4} below planted {planted_q:.4} - 0.02", part.modularity)
    })?;
    check((found_q - part.modularity).abs() < 1e-9, || {
        format!("reported {} vs recomputed {found_q}", part.modularity)
    })?;
    check((modularity(&graph, &planted, 1.0) - planted_q).abs() < 1e-9, || {
        "library modularity disagrees on the planted partition".into()
    })?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "Q={:.4} vs planted {planted_q:.4}, {} communities, {elapsed:.2?}",
        part.modularity,
        part.community_count()
    ))
}

/// Step-by-step replay of greedy elimination using plain lists.
fn elimination_oracle(items: &[(String, Vector)], cfg: &PoolingConfig) -> Vec<String> {
    let dim = items[0].1.dim();
    let mut mean = vec![0.0; dim];
    for (_, v) in items {
        for (m, x) in mean.iter_mut().zip(v.values()) {
            *m += x / items.len() as f64;
        }
    }
    let sim = |a: &[f64], b: &[f64]| 1.0 - cos_distance(a, b);
    let mut sorted: Vec<usize> = (0..items.len()).collect();
    sorted.sort_by(|&a, &b| {
        let (sa, sb) = (sim(items[a].1.values(), &mean), sim(items[b].1.values(), &mean));
        sb.partial_cmp(&sa).unwrap().then_with(|| items[a].0.cmp(&items[b].0))
    });
    let mut unchecked = sorted.clone();
    let mut selected: Vec<usize> = Vec::new();
    let mut iteration = 0;
    while selected.len() < cfg.n_select && !unchecked.is_empty() {
        let current = unchecked.remove(0);
        selected.push(current);
        let threshold = (cfg.initial_threshold - cfg.decay_alpha * (1.0 + iteration as f64).ln()).max(cfg.decay_floor);
        unchecked.retain(|&u| sim(items[current].1.values(), items[u].1.values()) < threshold);
        iteration += 1;
    }
    for &i in &sorted {
        if selected.len() >= cfg.n_select {
            break;
        }
        if !selected.contains(&i) {
            selected.push(i);
        }
    }
    selected.into_iter().map(|i| items[i].0.clone()).collect()
}

fn random_items(rng: &mut ChaCha8Rng, n: usize, dim: usize, clusters: usize) -> Vec<(String, Vector)> {
    let centers: Vec<Vec<f64>> = (0..clusters.max(1))
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            let c = &centers[rng.gen_range(0..centers.len())];
            let v: Vec<f64> = c.iter().map(|x| x + rng.gen_range(-0.05..0.05)).collect();
            (format!("x{i:03}"), Vector::new(v).unwrap())
        })
        .collect()
}

fn near_duplicate_fixture(seed: u64) -> Vec<(String, Vector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 16;
    let base: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut items = Vec::new();
    for i in 0..30 {
        let v: Vec<f64> = if i < 20 {
            base[i % 2].iter().map(|x| x + rng.gen_range(-0.02..0.02)).collect()
        } else {
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        items.push((format!("p{i:02}"), Vector::new(v).unwrap()));
    }
    items.shuffle(&mut rng);
    items
}

fn pooling_contracts() -> Outcome {
    let mut fixtures = 0;
    for seed in 0..10 {
        let items = near_duplicate_fixture(seed);
        for n_select in [5, 12, 20, 28] {
            let cfg = PoolingConfig {
                n_select,
                ..PoolingConfig::default()
            };
            let got = pool_iterative_elimination(&items, &cfg).map_err(|e| e.to_string())?.selected;
            let want = elimination_oracle(&items, &cfg);
            check(got == want, || format!("seed {seed} n {n_select}: {got:?} vs oracle {want:?}"))?;
            fixtures += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let len = rng.gen_range(1..60);
        let n = rng.gen_range(0..40);
        let clusters = rng.gen_range(1..5);
        let items = random_items(&mut rng, len, 8, clusters);
        let out = pool_stratified_kmeans(&items, n, 123).map_err(|e| e.to_string())?;
        let distinct: BTreeSet<&String> = out.iter().collect();
        check(out.len() == n.min(len) && distinct.len() == out.len(), || {
            format!("case {case}: {} picked for n={n}, |tweets|={len}", out.len())
        })?;
    }

    let cfg = PoolingConfig::default();
    let mut largest = 0;
    for case in 0..20 {
        let items = random_items(&mut rng, 50 + case * 10, 12, 6);
        let pool = assemble_pool("u", &items, &cfg).map_err(|e| e.to_string())?;
        let again = assemble_pool("u", &items, &cfg).map_err(|e| e.to_string())?;
        check(pool == again, || format!("case {case}: pool not deterministic"))?;
        check(pool.tweet_ids.len() <= 4 * cfg.n_select, || format!("case {case}: pool of {}", pool.tweet_ids.len()))?;
        let ids: BTreeSet<&String> = pool.tweet_ids.iter().collect();
        check(ids.len() == pool.tweet_ids.len(), || "duplicate pooled id".into())?;
        check(pool.provenance.len() == ids.len(), || "provenance does not cover the pool".into())?;
        let mut per_method: BTreeMap<PoolMethod, usize> = BTreeMap::new();
        for (id, methods) in &pool.provenance {
            check(ids.contains(id) && !methods.is_empty(), || format!("bad provenance for {id}"))?;
            for m in methods {
                *per_method.entry(*m).or_insert(0) += 1;
            }
        }
        check(
            PoolMethod::ALL.iter().all(|m| per_method.get(m) == Some(&cfg.n_select)),
            || format!("case {case}: per-method counts {per_method:?}"),
        )?;
        largest = largest.max(pool.tweet_ids.len());
    }
    Ok(format!(
        "{fixtures} elimination fixtures match, 100 quota fixtures exact, largest pool {largest}"
    ))
}

fn result(gold: StanceLabel, predicted: StanceLabel, i: usize) -> EvalResult {
    EvalResult {
        user_id: format!("u{i:04}"),
        statement_id: "s001".into(),
        method: "m".into(),
        predicted,
        gold,
        transport_error: false,
    }
}

fn macro_f1_oracle(pairs: &[(usize, usize)]) -> f64 {
    let mut f1s = Vec::new();
    for class in 0..3 {
        let tp = pairs.iter().filter(|(p, g)| *p == class && *g == class).count() as f64;
        let pred = pairs.iter().filter(|(p, _)| *p == class).count() as f64;
        let gold = pairs.iter().filter(|(_, g)| *g == class).count() as f64;
        if pred == 0.0 && gold == 0.0 {
            continue;
        }
        let p = if pred > 0.0 { tp / pred } else { 0.0 };
        let r = if gold > 0.0 { tp / gold } else { 0.0 };
        f1s.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
    }
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

fn bootstrap_oracle(results: &[EvalResult], resamples: usize, level: f64, seed: u64) -> (f64, f64, f64) {
    let pairs: Vec<(usize, usize)> = results.iter().map(|r| (r.predicted.index(), r.gold.index())).collect();
    let point = macro_f1_oracle(&pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let sample: Vec<(usize, usize)> = (0..pairs.len()).map(|_| pairs[rng.gen_range(0..pairs.len())]).collect();
            macro_f1_oracle(&sample)
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| {
        let rank = ((q * stats.len() as f64).ceil() as usize).max(1);
        stats[rank - 1]
    };
    let alpha = (1.0 - level) / 2.0;
    (pick(alpha).min(point), point, pick(1.0 - alpha).max(point))
}

fn statistics() -> Outcome {
    use StanceLabel::*;
    let fixture = [result(True, True, 0), result(False, True, 1), result(CannotAnswer, True, 2)];
    let m = macro_f1(&fixture).map_err(|e| e.to_string())?;
    check((m - 1.0 / 6.0).abs() < 1e-6, || format!("macro fixture gave {m}"))?;

    let ann1 = [True, True, False, False];
    let ann2 = [True, True, True, True];
    let k = cohens_kappa(&ann1, &ann2).map_err(|e| e.to_string())?;
    check(k.abs() < 1e-6, || format!("kappa fixture gave {k}"))?;

    let a: Vec<bool> = (0..20).map(|i| i < 5).collect();
    let b: Vec<bool> = (0..20).map(|i| i >= 5).collect();
    let test = mcnemar(&a, &b).map_err(|e| e.to_string())?;
    let choose = |n: u64, k: u64| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let tail: f64 = (0..=5).map(|i| choose(20, i)).sum::<f64>() / 2f64.powi(20);
    check((test.p_value - 2.0 * tail).abs() < 1e-6 && (test.p_value - 0.0414).abs() < 5e-5, || {
        format!("mcnemar p {} vs oracle {}", test.p_value, 2.0 * tail)
    })?;
    check(test.significant, || "b=5, c=15 should be significant".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let results: Vec<EvalResult> = (0..300)
        .map(|i| {
            let g = StanceLabel::ALL[rng.gen_range(0..3)];
            let p = if rng.gen_bool(0.7) { g } else { StanceLabel::ALL[rng.gen_range(0..3)] };
            result(g, p, i)
        })
        .collect();
    let ci = bootstrap_ci(&results, 2000, 0.95, 123).map_err(|e| e.to_string())?;
    let full = macro_f1(&results).map_err(|e| e.to_string())?;
    check(ci.point == full, || format!("bootstrap point {} vs macro-F1 {full}", ci.point))?;
    let (lo, pt, hi) = bootstrap_oracle(&results, 2000, 0.95, 123);
    check(
        (ci.lower - lo).abs() < 1e-9 && (ci.point - pt).abs() < 1e-9 && (ci.upper - hi).abs() < 1e-9,
        || format!("bootstrap {ci:?} vs oracle ({lo}, {pt}, {hi})"),
    )?;
    Ok(format!(
        "macro {m:.4}, kappa {k:.4}, p {:.6}, CI [{:.4}, {:.4}, {:.4}]",
        test.p_value, ci.lower, ci.point, ci.upper
    ))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let run = common::run_synthetic(&SynthSpec::default(), 10, 20);
    let elapsed = start.elapsed();
    let ext = &run.results["extractive"];
    let users: BTreeSet<&String> = ext.iter().map(|r| &r.user_id).collect();
    let statements: BTreeSet<&String> = ext.iter().map(|r| &r.statement_id).collect();
    check(users.len() == 20 && statements.len() == 15 && ext.len() == 300, || {
        format!("{} users x {} statements, {} results", users.len(), statements.len(), ext.len())
    })?;
    let f1 = macro_f1(ext).map_err(|e| e.to_string())?;
    check(f1 == 1.0, || format!("extractive macro-F1 {f1}"))?;
    let violations: usize = run.bundles.iter().map(|b| b.groundedness.violations()).sum();
    check(violations == 0, || format!("{violations} groundedness violations"))?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("extractive macro-F1 {f1}, 0 violations, {} calls, {elapsed:.2?}", run.gateway_calls))
}

fn full_scale() -> Outcome {
    let run = common::run_synthetic(&SynthSpec::full_scale(), 50, 100);
    let cfg = PoolingConfig::default();
    check(run.sample.split.profile.len() == 100, || {
        format!("{} profiled users", run.sample.split.profile.len())
    })?;
    check(run.statements.curated.len() == 15, || format!("{} statements", run.statements.curated.len()))?;
    for (method, results) in &run.results {
        let pairs: BTreeSet<(&String, &String)> = results.iter().map(|r| (&r.user_id, &r.statement_id)).collect();
        check(results.len() == 1500 && pairs.len() == 1500, || format!("{method}: {} pairs", pairs.len()))?;
    }
    let largest = run.profile_pools.iter().map(|p| p.tweet_ids.len()).max().unwrap_or(0);
    check(largest <= 4 * cfg.n_select, || format!("pool of {largest}"))?;
    let cap_users = run
        .profile_pools
        .iter()
        .filter(|p| p.provenance.values().all(|m| !m.is_empty()))
        .count();
    check(cap_users == 100, || "pool provenance incomplete".into())?;
    Ok(format!(
        "{} sampled, 100 profiled, 1500 pairs per method, largest pool {largest}",
        run.sample.sampled.len()
    ))
}

fn scale_smoke() -> Outcome {
    let fixture = distance_fixture(&FixtureShape {
        groups: 20,
        chunks_per_group: 10,
        near: 30_000,
        mid: 10_000,
        far: 60_000,
        seed: 3,
    })
    .map_err(|e| e.to_string())?;
    let tweets: Vec<pillar::corpus::Tweet> = fixture
        .tweets
        .iter()
        .map(|(id, text, _)| pillar::corpus::Tweet {
            id: id.clone(),
            user_id: "u".into(),
            text: text.clone(),
            created_at: chrono::DateTime::UNIX_EPOCH,
            retweet_count: 0,
            like_count: 0,
        })
        .collect();
    let start = Instant::now();
    let embedder = HashingEmbedder::new(256).unwrap();
    let items = embed_tweets(&tweets, &embedder).map_err(|e| e.to_string())?;
    let chunk_texts: Vec<&str> = fixture.chunks.iter().map(|(_, t)| t.as_str()).collect();
    let chunk_vecs = embedder.embed_batch(&chunk_texts).map_err(|e| e.to_string())?;
    let index = VectorIndex::build(fixture.chunks.iter().map(|(id, _)| id.clone()).zip(chunk_vecs).collect())
        .map_err(|e| e.to_string())?;
    let labels = label_all(&items, &index, &FilterConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(labels.len() == 100_000, || format!("{} labels", labels.len()))?;
    within(elapsed, Duration::from_secs(60))?;
    let counts: HashMap<String, usize> = labels.iter().fold(HashMap::new(), |mut m, l| {
        *m.entry(format!("{:?}", l.label)).or_insert(0) += 1;
        m
    });
    Ok(format!("100000 tweets labeled in {elapsed:.2?} ({counts:?})"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("distance labeling matches brute-force oracle", distance_oracle),
        ("bm25 and dense ranking match exhaustive oracles", retrieval_oracles),
        ("louvain on planted 4-block graph", louvain_planted),
        ("pooling oracles, quotas, provenance, determinism", pooling_contracts),
        ("statistics worked examples and bootstrap oracle", statistics),
        ("end-to-end synthetic run, 20 users x 15 statements", end_to_end),
        ("full-scale run, 1500 pairs and pools <= 80", full_scale),
        ("scale smoke, 100k tweets filtered", scale_smoke),
    ];
    let mut failures = Vec::new();
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}  [{detail}]"),
            Err(why) => {
                println!("FAIL  {name}  [{why}]");
                failures.push(name);
            }
        }
    }
    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
