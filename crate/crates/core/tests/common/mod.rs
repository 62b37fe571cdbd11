#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use pillar::community::SampleSpec;
use pillar::corpus::RetweetGraph;
use pillar::embedding::{Embedder, HashingEmbedder, Vector};
use pillar::evaluation::{EvalResult, GoldLabels};
use pillar::filter::{FilterConfig, TrainParams};
use pillar::knowledge::ChunkParams;
use pillar::llm::{templates, AuditedGateway, MockGateway};
use pillar::pipeline::*;
use pillar::pooling::{PoolingConfig, UserPool};
use pillar::profiling::{statement_id, StanceStatement, RAG_TOP};
use pillar::retrieval::AspectSpec;
use pillar::synth::{self, SynthSpec, World};

pub const DIM: usize = 1024;

pub struct Run {
    pub world: World,
    pub filter: FilterOutcome,
    pub sample: SampleOutcome,
    pub profile_pools: Vec<UserPool>,
    pub statements: StatementsOutcome,
    pub bundles: Vec<ProfileBundle>,
    pub results: BTreeMap<String, Vec<EvalResult>>,
    pub gateway_calls: usize,
}

pub fn kb_settings(world: &World) -> KbSettings {
    KbSettings {
        seeds: world.seed_entities.clone(),
        edge_types: BTreeSet::from(["main_subject".to_string(), "position_held".to_string()]),
        depth: 2,
        chunking: ChunkParams::default(),
    }
}

/// Every stage in memory with the scripted gateway and default constants.
pub fn run_synthetic(spec: &SynthSpec, n_statement: usize, n_profile: usize) -> Run {
    let world = synth::generate(spec).unwrap();
    let embedder = HashingEmbedder::new(DIM).unwrap();
    let kb = build_knowledge_base(&world.kg, &kb_settings(&world), &embedder).unwrap();
    let index = chunk_index(&kb.chunks).unwrap();
    let items = embed_tweets(&world.tweets, &embedder).unwrap();
    let filter = run_filter(&items, &index, &FilterConfig::default(), &TrainParams::default()).unwrap();
    let vectors: HashMap<String, Vector> = items.into_iter().collect();
    let texts: HashMap<String, String> = world.tweets.iter().map(|t| (t.id.clone(), t.text.clone())).collect();
    let domain_items = domain_items_by_user(&world.tweets, &vectors, &filter.domain).unwrap();

    let graph = RetweetGraph::new(world.users.iter().cloned(), world.edges.clone()).unwrap();
    let sample = run_sample(
        &graph,
        &domain_items,
        &SampleSettings {
            resolution: 1.0,
            spec: SampleSpec::default(),
            n_statement,
            n_profile,
        },
    )
    .unwrap();

    let pooling = PoolingConfig::default();
    let statement_pools = run_pools(&sample.split.statement, &domain_items, &pooling).unwrap();
    let profile_pools = run_pools(&sample.split.profile, &domain_items, &pooling).unwrap();

    let gateway = AuditedGateway::new(MockGateway::new(world.rules.clone()).unwrap());
    let selection: Vec<String> = (0..synth::TOPICS.len()).map(statement_id).collect();
    let generate_tpl = templates::generate();
    let statements = run_statements(
        &statement_pools,
        &texts,
        &gateway,
        &embedder,
        &StatementSettings {
            template: &generate_tpl,
            model: "mock",
            sim_threshold: 0.85,
            curation: Curation::Ids(&selection),
        },
    )
    .unwrap();
    let with_vectors: Vec<(StanceStatement, Vector)> = statements
        .curated
        .iter()
        .map(|s| (s.clone(), embedder.embed(&s.text).unwrap()))
        .collect();

    let (profile_tpl, summarize_tpl) = (templates::profile(), templates::summarize());
    let bundles = run_profiles(
        &profile_pools,
        &texts,
        &vectors,
        &with_vectors,
        &ProfileTemplates {
            profile: &profile_tpl,
            summarize: &summarize_tpl,
        },
        &gateway,
        "mock",
        RAG_TOP,
        4,
    )
    .unwrap();

    let gold: GoldLabels = world
        .gold()
        .into_iter()
        .map(|g| ((g.user_id, g.statement_id), g.label))
        .collect();
    let aspects: Vec<AspectSpec> = World::aspects()
        .into_iter()
        .map(|(sid, kw)| AspectSpec::new(sid, kw).unwrap())
        .collect();
    let inputs = ContextInputs {
        bundles: &bundles,
        statements: &with_vectors,
        domain_items: &domain_items,
        texts: &texts,
        aspects: &aspects,
        seed: 123,
    };
    let methods: Vec<String> = METHODS.iter().map(|m| m.to_string()).collect();
    let results = run_evaluation(&methods, &inputs, &gold, &templates::evaluate(), &gateway, "mock", 4).unwrap();
    let gateway_calls = gateway.call_count();
    Run {
        world,
        filter,
        sample,
        profile_pools,
        statements,
        bundles,
        results,
        gateway_calls,
    }
}
