use pillar::embedding::{cosine_distance, Embedder, HashingEmbedder, Vector, VectorIndex};
use pillar::filter::{build_training_set, extract_borderline, DomainLabel, FilterConfig};
use pillar::synth::{distance_fixture, FixtureShape, PlantedBand};
use pillar::Error;

struct Embedded {
    chunks: VectorIndex,
    chunk_vecs: Vec<Vector>,
    tweets: Vec<(String, Vector)>,
    bands: Vec<PlantedBand>,
}

fn embed(near: usize, mid: usize, far: usize, seed: u64) -> Embedded {
    let f = distance_fixture(&FixtureShape {
        groups: 20,
        chunks_per_group: 10,
        near,
        mid,
        far,
        seed,
    })
    .unwrap();
    let e = HashingEmbedder::new(512).unwrap();
    let chunk_items: Vec<(String, Vector)> = f.chunks.iter().map(|(id, t)| (id.clone(), e.embed(t).unwrap())).collect();
    Embedded {
        chunk_vecs: chunk_items.iter().map(|(_, v)| v.clone()).collect(),
        chunks: VectorIndex::build(chunk_items).unwrap(),
        tweets: f.tweets.iter().map(|(id, t, _)| (id.clone(), e.embed(t).unwrap())).collect(),
        bands: f.tweets.iter().map(|(_, _, b)| *b).collect(),
    }
}

#[test]
fn planted_thirty_seventy_split_is_recovered() {
    let f = embed(300, 0, 700, 21);
    let (labeled, report) = build_training_set(&f.tweets, &f.chunks, &FilterConfig::default()).unwrap();
    let pct = report.domain_percent();
    assert!((pct - 30.0).abs() <= 3.0, "domain share {pct}");
    for l in &labeled {
        let i = f.tweets.iter().position(|(id, _)| *id == l.tweet_id).unwrap();
        let want = if f.bands[i] == PlantedBand::Near {
            DomainLabel::Domain
        } else {
            DomainLabel::NonDomain
        };
        assert_eq!(l.label, want, "{}", l.tweet_id);
    }
}

#[test]
fn borderline_membership_matches_brute_force() {
    let f = embed(100, 150, 100, 4);
    let cfg = FilterConfig::default();
    let got = extract_borderline(&f.tweets, &f.chunks, &cfg, usize::MAX).unwrap();
    let mut want: Vec<(String, f64)> = Vec::new();
    for (id, v) in &f.tweets {
        let mut d: Vec<f64> = f.chunk_vecs.iter().map(|c| cosine_distance(v, c).unwrap()).collect();
        d.sort_by(f64::total_cmp);
        let mean = d[..cfg.k].iter().sum::<f64>() / cfg.k as f64;
        if mean > 1.0 - cfg.theta && mean < cfg.theta {
            want.push((id.clone(), mean));
        }
    }
    want.sort_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()).then_with(|| a.0.cmp(&b.0)));
    let got_ids: Vec<&String> = got.iter().map(|l| &l.tweet_id).collect();
    let want_ids: Vec<&String> = want.iter().map(|(id, _)| id).collect();
    assert_eq!(got_ids, want_ids);
    assert!(want.len() >= 100);
}

#[test]
fn verbatim_chunk_copies_are_all_domain() {
    let f = embed(0, 0, 0, 1);
    let copies: Vec<(String, Vector)> = f
        .chunk_vecs
        .iter()
        .take(10)
        .enumerate()
        .map(|(i, v)| (format!("copy{i}"), v.clone()))
        .collect();
    let (labeled, report) = build_training_set(&copies, &f.chunks, &FilterConfig::default()).unwrap();
    assert_eq!(labeled.len(), 10);
    assert_eq!(report.domain_percent(), 100.0);
}

#[test]
fn strict_theta_leaves_nothing_to_train_on() {
    let f = embed(50, 50, 0, 2);
    let cfg = FilterConfig::new(0.95, 10).unwrap();
    let err = build_training_set(&f.tweets, &f.chunks, &cfg).unwrap_err();
    assert!(matches!(err, Error::AllBorderline), "{err}");
}
