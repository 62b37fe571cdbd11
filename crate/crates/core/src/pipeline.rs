//! Stage functions shared by the command-line driver and end-to-end tests.
//! Each takes in-memory inputs and returns the artifacts of one stage; file
//! formats and manifests are the driver's business.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::{louvain, sample_users, split_population, Partition, PopulationSplit, SampleSpec};
use crate::corpus::{RetweetGraph, Tweet};
use crate::embedding::{Embedder, Vector, VectorIndex};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_method, EvalResult, GoldLabels};
use crate::filter::{
    label_all, train_classifier, DistanceLabel, DistanceReport, DomainLabel, FilterConfig, TrainParams,
    TrainedClassifier,
};
use crate::knowledge::{build_chunks, ChunkParams, KgSnapshot, KnowledgeChunk};
use crate::llm::{map_bounded, Gateway, PromptTemplate};
use crate::pooling::{assemble_pool, pool_random, PoolingConfig, UserPool};
use crate::profiling::{
    amazon_baseline, batch_texts, curate_statements, dedup_statements, format_tweets, generate_statements,
    profile_user, AbstractiveProfile, GenerationOutput, GroundednessReport, StanceStatement, SummaryVariant,
    UserProfile, GENERATION_BATCH,
};
use crate::retrieval::{bm25_rank, dense_rank, semae_select, AspectSpec, Bm25Index, Bm25Params};

pub type Embedded = Vec<(String, Vector)>;

pub fn embed_tweets(tweets: &[Tweet], embedder: &dyn Embedder) -> Result<Embedded> {
    let texts: Vec<&str> = tweets.iter().map(|t| t.text.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    Ok(tweets.iter().map(|t| t.id.clone()).zip(vectors).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbSettings {
    pub seeds: Vec<String>,
    pub edge_types: BTreeSet<String>,
    pub depth: usize,
    pub chunking: ChunkParams,
}

pub struct KbOutcome {
    pub entities: BTreeSet<String>,
    pub missing: Vec<String>,
    pub chunks: Vec<KnowledgeChunk>,
}

pub fn build_knowledge_base(kg: &KgSnapshot, settings: &KbSettings, embedder: &dyn Embedder) -> Result<KbOutcome> {
    let entities = kg.expand_entities(&settings.seeds, &settings.edge_types, settings.depth)?;
    let docs = kg.extract_documents(&entities);
    if docs.documents.is_empty() {
        return Err(Error::Empty("knowledge base documents".into()));
    }
    let chunks = build_chunks(&docs.documents, settings.chunking, embedder)?;
    Ok(KbOutcome {
        entities,
        missing: docs.missing,
        chunks,
    })
}

pub fn chunk_index(chunks: &[KnowledgeChunk]) -> Result<VectorIndex> {
    VectorIndex::build(chunks.iter().map(|c| (c.chunk_id.clone(), c.embedding.clone())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub tweet_id: String,
    pub label: DomainLabel,
    pub score: f64,
}

pub struct FilterOutcome {
    pub labels: Vec<DistanceLabel>,
    pub report: DistanceReport,
    pub classifier: TrainedClassifier,
    /// Classifier output for every tweet, in input order.
    pub decisions: Vec<Decision>,
    pub domain: BTreeSet<String>,
}

/// Distance labels, a classifier distilled from the confident ones, and the
/// classifier's verdict over the whole corpus.
pub fn run_filter(
    items: &[(String, Vector)],
    chunks: &VectorIndex,
    cfg: &FilterConfig,
    train: &TrainParams,
) -> Result<FilterOutcome> {
    let labels = label_all(items, chunks, cfg)?;
    let report = DistanceReport::from_labels(&labels);
    let examples: Vec<(Vector, bool)> = items
        .iter()
        .zip(&labels)
        .filter(|(_, l)| l.label != DomainLabel::Borderline)
        .map(|((_, v), l)| (v.clone(), l.label == DomainLabel::Domain))
        .collect();
    if examples.is_empty() {
        return Err(Error::AllBorderline);
    }
    let classifier = train_classifier(&examples, train)?;
    let decisions: Vec<Decision> = items
        .par_iter()
        .map(|(id, v)| {
            classifier.model.classify(v).map(|(label, score)| Decision {
                tweet_id: id.clone(),
                label,
                score,
            })
        })
        .collect::<Result<_>>()?;
    let domain = decisions
        .iter()
        .filter(|d| d.label == DomainLabel::Domain)
        .map(|d| d.tweet_id.clone())
        .collect();
    Ok(FilterOutcome {
        labels,
        report,
        classifier,
        decisions,
        domain,
    })
}

/// Domain tweets grouped by author, each list in corpus order.
pub fn domain_items_by_user(
    tweets: &[Tweet],
    vectors: &HashMap<String, Vector>,
    domain: &BTreeSet<String>,
) -> Result<BTreeMap<String, Embedded>> {
    let mut out: BTreeMap<String, Embedded> = BTreeMap::new();
    for t in tweets.iter().filter(|t| domain.contains(&t.id)) {
        let v = vectors.get(&t.id).ok_or_else(|| Error::UnknownId(t.id.clone()))?;
        out.entry(t.user_id.clone()).or_default().push((t.id.clone(), v.clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSettings {
    pub resolution: f64,
    pub spec: SampleSpec,
    pub n_statement: usize,
    pub n_profile: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub partition: Partition,
    pub sampled: Vec<String>,
    /// Sampled users without any domain tweet; they cannot be pooled.
    pub dropped: Vec<String>,
    pub split: PopulationSplit,
}

/// Community detection, community-weighted sampling, then the stratified
/// statement/profile split over users' mean domain embeddings.
pub fn run_sample(
    graph: &RetweetGraph,
    domain_items: &BTreeMap<String, Embedded>,
    settings: &SampleSettings,
) -> Result<SampleOutcome> {
    let partition = louvain(&graph.undirected(), settings.resolution, settings.spec.seed)?;
    let sampled = sample_users(&partition, &settings.spec)?;
    let mut user_vectors = HashMap::new();
    let mut eligible = Vec::new();
    let mut dropped = Vec::new();
    for u in &sampled {
        match domain_items.get(u).filter(|items| !items.is_empty()) {
            Some(items) => {
                user_vectors.insert(u.clone(), Vector::mean(items.iter().map(|(_, v)| v))?);
                eligible.push(u.clone());
            }
            None => dropped.push(u.clone()),
        }
    }
    let split = split_population(
        &eligible,
        &user_vectors,
        settings.n_statement,
        settings.n_profile,
        settings.spec.seed,
    )?;
    Ok(SampleOutcome {
        partition,
        sampled,
        dropped,
        split,
    })
}

pub fn run_pools(
    users: &[String],
    domain_items: &BTreeMap<String, Embedded>,
    cfg: &PoolingConfig,
) -> Result<Vec<UserPool>> {
    users
        .par_iter()
        .map(|u| {
            let items = domain_items.get(u).ok_or_else(|| Error::UnknownId(u.clone()))?;
            assemble_pool(u, items, cfg)
        })
        .collect()
}

pub struct StatementsOutcome {
    pub generation: GenerationOutput,
    pub deduped: Vec<StanceStatement>,
    pub curated: Vec<StanceStatement>,
}

/// Which deduplicated statements survive curation.
#[derive(Debug, Clone, Copy)]
pub enum Curation<'a> {
    /// Ids picked by a domain expert, in the order given.
    Ids(&'a [String]),
    /// The first `n` in generation order.
    First(usize),
}

pub struct StatementSettings<'a> {
    pub template: &'a PromptTemplate,
    pub model: &'a str,
    pub sim_threshold: f64,
    pub curation: Curation<'a>,
}

/// Generates claims from the statement split's pooled tweets in batches,
/// removes near duplicates and keeps the curated selection.
pub fn run_statements(
    pools: &[UserPool],
    texts: &HashMap<String, String>,
    gateway: &dyn Gateway,
    embedder: &dyn Embedder,
    settings: &StatementSettings,
) -> Result<StatementsOutcome> {
    if pools.is_empty() {
        return Err(Error::Empty("statement split".into()));
    }
    let mut pooled = Vec::new();
    for p in pools {
        for id in &p.tweet_ids {
            let text = texts.get(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
            pooled.push((id.clone(), text.clone()));
        }
    }
    let batches = batch_texts(&pooled, GENERATION_BATCH);
    let generation = generate_statements(&batches, settings.template, gateway, settings.model)?;
    if generation.raw.is_empty() {
        return Err(Error::Empty("generated statements".into()));
    }
    let deduped = dedup_statements(&generation.raw, embedder, settings.sim_threshold)?;
    let first: Vec<String>;
    let selection = match settings.curation {
        Curation::Ids(ids) => ids,
        Curation::First(n) => {
            if deduped.len() < n {
                return Err(Error::InvalidArgument(format!(
                    "asked for {n} statements but only {} survive deduplication",
                    deduped.len()
                )));
            }
            first = deduped[..n].iter().map(|s| s.id.clone()).collect();
            &first
        }
    };
    let curated = curate_statements(&deduped, selection)?;
    Ok(StatementsOutcome {
        generation,
        deduped,
        curated,
    })
}

/// Everything the profiling stage produces for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBundle {
    pub profile: UserProfile,
    pub groundedness: GroundednessReport,
    pub amazon_whole: AbstractiveProfile,
    pub amazon_rag: AbstractiveProfile,
}

pub struct ProfileTemplates<'a> {
    pub profile: &'a PromptTemplate,
    pub summarize: &'a PromptTemplate,
}

#[allow(clippy::too_many_arguments)]
pub fn run_profiles(
    pools: &[UserPool],
    texts: &HashMap<String, String>,
    vectors: &HashMap<String, Vector>,
    statements: &[(StanceStatement, Vector)],
    templates: &ProfileTemplates,
    gateway: &dyn Gateway,
    model: &str,
    rag_top: usize,
    max_in_flight: usize,
) -> Result<Vec<ProfileBundle>> {
    let plain: Vec<StanceStatement> = statements.iter().map(|(s, _)| s.clone()).collect();
    map_bounded(pools, max_in_flight, |pool| {
        let out = profile_user(pool, texts, &plain, templates.profile, gateway, model)?;
        let summary = |variant| {
            amazon_baseline(
                pool,
                texts,
                vectors,
                variant,
                statements,
                templates.summarize,
                gateway,
                model,
                rag_top,
            )
        };
        Ok(ProfileBundle {
            profile: UserProfile::new(out.abstractive, out.extractive),
            groundedness: out.groundedness,
            amazon_whole: summary(SummaryVariant::WholeHistory)?,
            amazon_rag: summary(SummaryVariant::Rag)?,
        })
    })
    .into_iter()
    .collect()
}

pub const METHODS: [&str; 8] = [
    "extractive",
    "abstractive",
    "random",
    "bm25",
    "dense",
    "semae",
    "amazon_whole",
    "amazon_rag",
];

pub struct ContextInputs<'a> {
    pub bundles: &'a [ProfileBundle],
    pub statements: &'a [(StanceStatement, Vector)],
    pub domain_items: &'a BTreeMap<String, Embedded>,
    pub texts: &'a HashMap<String, String>,
    pub aspects: &'a [AspectSpec],
    pub seed: u64,
}

fn tweets_context(ids: &[String], texts: &HashMap<String, String>) -> String {
    format_tweets(ids.iter().map(|id| (id.as_str(), texts.get(id).map_or("", String::as_str))))
}

fn push_unique(out: &mut Vec<String>, ids: impl IntoIterator<Item = String>) {
    for id in ids {
        if !out.contains(&id) {
            out.push(id);
        }
    }
}

/// Evaluation context of one method for every profiled user. Retrieval
/// baselines take the single best tweet per statement from the user's
/// domain tweets; the random baseline draws one tweet per statement.
pub fn method_contexts(method: &str, inputs: &ContextInputs) -> Result<BTreeMap<String, String>> {
    let plain: Vec<StanceStatement> = inputs.statements.iter().map(|(s, _)| s.clone()).collect();
    let n = plain.len();
    let mut out = BTreeMap::new();
    for b in inputs.bundles {
        let user = &b.profile.user_id;
        let items = inputs
            .domain_items
            .get(user)
            .ok_or_else(|| Error::UnknownId(user.clone()))?;
        let ctx = match method {
            "extractive" => {
                let mut ids = Vec::new();
                for s in &plain {
                    push_unique(&mut ids, b.profile.extractive.get(&s.id).cloned().unwrap_or_default());
                }
                tweets_context(&ids, inputs.texts)
            }
            "abstractive" => AbstractiveProfile {
                user_id: user.clone(),
                entries: b.profile.abstractive.clone(),
            }
            .render_context(&plain),
            "amazon_whole" => b.amazon_whole.render_context(&plain),
            "amazon_rag" => b.amazon_rag.render_context(&plain),
            "random" => {
                let ids: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
                tweets_context(&pool_random(&ids, n, inputs.seed), inputs.texts)
            }
            "bm25" => {
                let docs: Vec<(&str, &str)> = items
                    .iter()
                    .map(|(id, _)| (id.as_str(), inputs.texts.get(id).map_or("", String::as_str)))
                    .collect();
                let index = Bm25Index::build(docs, Bm25Params::default());
                let mut ids = Vec::new();
                for s in &plain {
                    push_unique(&mut ids, bm25_rank(&index, &s.text, 1)?.into_iter().map(|r| r.id));
                }
                tweets_context(&ids, inputs.texts)
            }
            "dense" => {
                let index = VectorIndex::build(items.clone())?;
                let mut ids = Vec::new();
                for (_, v) in inputs.statements {
                    push_unique(&mut ids, dense_rank(&index, v, 1)?.into_iter().map(|r| r.id));
                }
                tweets_context(&ids, inputs.texts)
            }
            "semae" => {
                let tweets: Vec<(String, String, Vector)> = items
                    .iter()
                    .map(|(id, v)| (id.clone(), inputs.texts.get(id).cloned().unwrap_or_default(), v.clone()))
                    .collect();
                let mut ids = Vec::new();
                for s in &plain {
                    if let Some(aspect) = inputs.aspects.iter().find(|a| a.statement_id == s.id) {
                        push_unique(&mut ids, semae_select(&tweets, aspect, 1)?.tweet_ids);
                    }
                }
                tweets_context(&ids, inputs.texts)
            }
            other => return Err(Error::InvalidArgument(format!("unknown method {other}"))),
        };
        out.insert(user.clone(), ctx);
    }
    Ok(out)
}

/// Gold restricted to profiled users and curated statements; every such
/// pair must be present.
pub fn gold_for(gold: &GoldLabels, users: &[String], statements: &[StanceStatement]) -> Result<GoldLabels> {
    let mut out = GoldLabels::new();
    let mut missing = Vec::new();
    for u in users {
        for s in statements {
            match gold.get(&(u.clone(), s.id.clone())) {
                Some(l) => {
                    out.insert((u.clone(), s.id.clone()), *l);
                }
                None => missing.push(format!("{u}/{}", s.id)),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "gold labels missing for {} pairs, first {}",
            missing.len(),
            missing[0]
        )));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn run_evaluation(
    methods: &[String],
    inputs: &ContextInputs,
    gold: &GoldLabels,
    template: &PromptTemplate,
    gateway: &dyn Gateway,
    model: &str,
    max_in_flight: usize,
) -> Result<BTreeMap<String, Vec<EvalResult>>> {
    let plain: Vec<StanceStatement> = inputs.statements.iter().map(|(s, _)| s.clone()).collect();
    let users: Vec<String> = inputs.bundles.iter().map(|b| b.profile.user_id.clone()).collect();
    let gold = gold_for(gold, &users, &plain)?;
    let mut out = BTreeMap::new();
    for m in methods {
        let contexts = method_contexts(m, inputs)?;
        let results = evaluate_method(m, &contexts, &plain, &gold, template, gateway, model, max_in_flight)?;
        out.insert(m.clone(), results);
    }
    Ok(out)
}
