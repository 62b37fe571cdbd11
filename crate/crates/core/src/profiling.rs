//! Stance statements and per-user profiles.
//!
//! Statements are generated from batches of pooled tweets, deduplicated by
//! embedding similarity and curated by hand. Each profiled user then gets,
//! per statement, a cited factual summary (abstractive entry) and the set of
//! cited tweets that exist in the pool (extractive entry).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, Embedder, Vector, VectorIndex};
use crate::error::{Error, Result};
use crate::llm::{CompletionRequest, Gateway, PromptTemplate};
use crate::pooling::UserPool;
use crate::retrieval::dense_rank;
use crate::text;

/// Marker a model returns when the pool holds nothing relevant.
pub const NO_EVIDENCE: &str = "NO_EVIDENCE";
/// Summary text stored for entries without evidence.
pub const NO_EVIDENCE_SUMMARY: &str = "No evidence found.";
/// Pooled tweets per generation prompt.
pub const GENERATION_BATCH: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementSource {
    Generated,
    Curated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceStatement {
    pub id: String,
    pub text: String,
    pub source: StatementSource,
}

pub fn statement_id(index: usize) -> String {
    format!("s{:03}", index + 1)
}

/// Renders tweets as `[T<id>] text` lines, one per tweet.
pub fn format_tweets<'a>(tweets: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut out = String::new();
    for (id, body) in tweets {
        out.push_str("[T");
        out.push_str(id);
        out.push_str("] ");
        out.push_str(&body.split_whitespace().collect::<Vec<_>>().join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub raw: Vec<String>,
    pub calls: usize,
    pub skipped_batches: Vec<usize>,
}

static LIST_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*\u{2022}]\s+|\d+[.)]\s+)?").expect("valid regex"));

fn parse_statement_lines(response: &str) -> Vec<String> {
    response
        .lines()
        .map(|l| LIST_MARKER.replace(l, "").trim().to_owned())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Splits tweet texts into prompts of at most `batch` tweets.
pub fn batch_texts(texts: &[(String, String)], batch: usize) -> Vec<&[(String, String)]> {
    texts.chunks(batch.max(1)).collect()
}

/// One gateway call per batch; responses are read one statement per line.
/// Empty responses and failed calls skip their batch.
pub fn generate_statements(
    batches: &[&[(String, String)]],
    tpl: &PromptTemplate,
    gateway: &dyn Gateway,
    model: &str,
) -> Result<GenerationOutput> {
    if batches.is_empty() {
        return Err(Error::Empty("no tweet batches for statement generation".into()));
    }
    let mut out = GenerationOutput::default();
    for (i, batch) in batches.iter().enumerate() {
        let tweets = format_tweets(batch.iter().map(|(id, t)| (id.as_str(), t.as_str())));
        let prompt = tpl.render(&BTreeMap::from([("tweets", tweets)]))?;
        out.calls += 1;
        match gateway.complete(&CompletionRequest::new(prompt, model)?) {
            Ok(c) => {
                let lines = parse_statement_lines(&c.text);
                if lines.is_empty() {
                    log::warn!("statement batch {i}: empty response, skipped");
                    out.skipped_batches.push(i);
                } else {
                    out.raw.extend(lines);
                }
            }
            Err(e) => {
                log::warn!("statement batch {i}: {e}, skipped");
                out.skipped_batches.push(i);
            }
        }
    }
    Ok(out)
}

/// Greedy near-duplicate removal in input order. Survivors get ids
/// `s001, s002, ...` in order.
pub fn dedup_statements(
    raw: &[String],
    embedder: &dyn Embedder,
    sim_threshold: f64,
) -> Result<Vec<StanceStatement>> {
    if raw.is_empty() {
        return Err(Error::Empty("no statements to deduplicate".into()));
    }
    if !(sim_threshold > 0.0 && sim_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "similarity threshold must lie in (0, 1), got {sim_threshold}"
        )));
    }
    let refs: Vec<&str> = raw.iter().map(String::as_str).collect();
    let vectors = embedder.embed_batch(&refs)?;
    let mut seen = HashSet::new();
    let mut kept: Vec<(usize, &Vector)> = Vec::new();
    'outer: for (i, v) in vectors.iter().enumerate() {
        if !seen.insert(text::normalize(&raw[i])) {
            continue;
        }
        for (_, k) in &kept {
            if cosine_similarity(v, k)? >= sim_threshold {
                continue 'outer;
            }
        }
        kept.push((i, v));
    }
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(n, (i, _))| StanceStatement {
            id: statement_id(n),
            text: raw[i].trim().to_owned(),
            source: StatementSource::Generated,
        })
        .collect())
}

/// The hand-picked subset, in selection order.
pub fn curate_statements(deduped: &[StanceStatement], selection: &[String]) -> Result<Vec<StanceStatement>> {
    if selection.is_empty() {
        return Err(Error::Empty("statement selection".into()));
    }
    let by_id: HashMap<&str, &StanceStatement> = deduped.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut seen = HashSet::new();
    selection
        .iter()
        .map(|id| {
            if !seen.insert(id) {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    line: 0,
                });
            }
            let s = by_id.get(id.as_str()).ok_or_else(|| Error::UnknownId(id.clone()))?;
            Ok(StanceStatement {
                source: StatementSource::Curated,
                ..(*s).clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Cited,
    /// The model reported that nothing in the pool is relevant.
    NoEvidence,
    /// A summary came back without any usable citation.
    Uncited,
    /// The gateway call failed.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractiveEntry {
    pub summary: String,
    pub citations: Vec<String>,
    pub status: EntryStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractiveProfile {
    pub user_id: String,
    pub entries: BTreeMap<String, AbstractiveEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractiveProfile {
    pub user_id: String,
    pub entries: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCitation {
    pub statement_id: String,
    pub tweet_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundednessReport {
    pub user_id: String,
    pub calls: usize,
    /// Cited ids that are not in the pool; dropped from the profile.
    pub dropped: Vec<DroppedCitation>,
    /// Statements whose entry has no citation.
    pub flagged: Vec<String>,
    pub failed: Vec<String>,
}

impl GroundednessReport {
    pub fn violations(&self) -> usize {
        self.dropped.len()
    }
}

/// Profile file contents for one user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub abstractive: BTreeMap<String, AbstractiveEntry>,
    pub extractive: BTreeMap<String, Vec<String>>,
}

impl UserProfile {
    pub fn new(a: AbstractiveProfile, e: ExtractiveProfile) -> Self {
        UserProfile {
            user_id: a.user_id,
            abstractive: a.entries,
            extractive: e.entries,
        }
    }
}

static CITATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[T([^\[\]\s]+)\]").expect("valid regex"));

/// Tweet ids cited as `[T<id>]`, first occurrence order, no repeats.
pub fn parse_citations(response: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    CITATION
        .captures_iter(response)
        .map(|c| c[1].to_owned())
        .filter(|id| seen.insert(id.clone()))
        .collect()
}

/// Text lookup for a pool; every pooled id must resolve.
fn pool_text<'a>(pool: &'a UserPool, texts: &'a HashMap<String, String>) -> Result<Vec<(&'a str, &'a str)>> {
    pool.tweet_ids
        .iter()
        .map(|id| {
            texts
                .get(id)
                .map(|t| (id.as_str(), t.as_str()))
                .ok_or_else(|| Error::UnknownId(id.clone()))
        })
        .collect()
}

pub struct ProfileOutput {
    pub abstractive: AbstractiveProfile,
    pub extractive: ExtractiveProfile,
    pub groundedness: GroundednessReport,
}

/// One gateway call per statement with the whole pool as context.
pub fn profile_user(
    pool: &UserPool,
    texts: &HashMap<String, String>,
    statements: &[StanceStatement],
    tpl: &PromptTemplate,
    gateway: &dyn Gateway,
    model: &str,
) -> Result<ProfileOutput> {
    if pool.tweet_ids.is_empty() {
        return Err(Error::Empty(format!("pool of user {}", pool.user_id)));
    }
    if statements.is_empty() {
        return Err(Error::Empty("statements".into()));
    }
    let tweets = format_tweets(pool_text(pool, texts)?);
    let members: HashSet<&str> = pool.tweet_ids.iter().map(String::as_str).collect();
    let mut abstractive = BTreeMap::new();
    let mut extractive = BTreeMap::new();
    let mut report = GroundednessReport {
        user_id: pool.user_id.clone(),
        ..GroundednessReport::default()
    };
    for s in statements {
        let prompt = tpl.render(&BTreeMap::from([
            ("statement", s.text.clone()),
            ("tweets", tweets.clone()),
        ]))?;
        report.calls += 1;
        let response = gateway.complete(&CompletionRequest::new(prompt, model)?);
        let (entry, kept) = match response {
            Err(e) => {
                log::warn!("profile {} / {}: {e}", pool.user_id, s.id);
                report.failed.push(s.id.clone());
                let entry = AbstractiveEntry {
                    summary: String::new(),
                    citations: Vec::new(),
                    status: EntryStatus::Failed,
                };
                (entry, Vec::new())
            }
            Ok(c) if c.text.contains(NO_EVIDENCE) => {
                report.flagged.push(s.id.clone());
                let entry = AbstractiveEntry {
                    summary: NO_EVIDENCE_SUMMARY.into(),
                    citations: Vec::new(),
                    status: EntryStatus::NoEvidence,
                };
                (entry, Vec::new())
            }
            Ok(c) => {
                let mut kept = Vec::new();
                for id in parse_citations(&c.text) {
                    if members.contains(id.as_str()) {
                        kept.push(id);
                    } else {
                        report.dropped.push(DroppedCitation {
                            statement_id: s.id.clone(),
                            tweet_id: id,
                        });
                    }
                }
                let status = if kept.is_empty() {
                    report.flagged.push(s.id.clone());
                    EntryStatus::Uncited
                } else {
                    EntryStatus::Cited
                };
                let entry = AbstractiveEntry {
                    summary: c.text.trim().to_owned(),
                    citations: kept.clone(),
                    status,
                };
                (entry, kept)
            }
        };
        abstractive.insert(s.id.clone(), entry);
        extractive.insert(s.id.clone(), kept);
    }
    Ok(ProfileOutput {
        abstractive: AbstractiveProfile {
            user_id: pool.user_id.clone(),
            entries: abstractive,
        },
        extractive: ExtractiveProfile {
            user_id: pool.user_id.clone(),
            entries: extractive,
        },
        groundedness: report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryVariant {
    WholeHistory,
    Rag,
}

pub const WHOLE_HISTORY_FOCUS: &str = "the user's views across all topics";
pub const RAG_TOP: usize = 5;

/// Summarization baseline over a pool.
///
/// `WholeHistory` makes one call and shares its summary across statements;
/// `Rag` retrieves the `rag_top` pooled tweets nearest each statement and
/// summarizes them separately.
#[allow(clippy::too_many_arguments)]
pub fn amazon_baseline(
    pool: &UserPool,
    texts: &HashMap<String, String>,
    vectors: &HashMap<String, Vector>,
    variant: SummaryVariant,
    statements: &[(StanceStatement, Vector)],
    tpl: &PromptTemplate,
    gateway: &dyn Gateway,
    model: &str,
    rag_top: usize,
) -> Result<AbstractiveProfile> {
    if pool.tweet_ids.is_empty() {
        return Err(Error::Empty(format!("pool of user {}", pool.user_id)));
    }
    if statements.is_empty() {
        return Err(Error::Empty("statements".into()));
    }
    let call = |focus: &str, tweets: String| -> AbstractiveEntry {
        let prompt = tpl.render(&BTreeMap::from([("focus", focus.to_owned()), ("tweets", tweets)]));
        let result = prompt
            .and_then(|p| CompletionRequest::new(p, model))
            .and_then(|r| gateway.complete(&r));
        match result {
            Ok(c) => AbstractiveEntry {
                summary: c.text.trim().to_owned(),
                citations: Vec::new(),
                status: EntryStatus::Uncited,
            },
            Err(e) => {
                log::warn!("summary for {}: {e}", pool.user_id);
                AbstractiveEntry {
                    summary: String::new(),
                    citations: Vec::new(),
                    status: EntryStatus::Failed,
                }
            }
        }
    };
    let mut entries = BTreeMap::new();
    match variant {
        SummaryVariant::WholeHistory => {
            let entry = call(WHOLE_HISTORY_FOCUS, format_tweets(pool_text(pool, texts)?));
            for (s, _) in statements {
                entries.insert(s.id.clone(), entry.clone());
            }
        }
        SummaryVariant::Rag => {
            let index = pool_index(pool, vectors)?;
            for (s, v) in statements {
                let ids = rag_retrieve(&index, v, rag_top)?;
                let tweets = format_tweets(ids.iter().map(|id| (id.as_str(), texts.get(id).map_or("", String::as_str))));
                entries.insert(s.id.clone(), call(&s.text, tweets));
            }
        }
    }
    Ok(AbstractiveProfile {
        user_id: pool.user_id.clone(),
        entries,
    })
}

pub fn pool_index(pool: &UserPool, vectors: &HashMap<String, Vector>) -> Result<VectorIndex> {
    VectorIndex::build(
        pool.tweet_ids
            .iter()
            .map(|id| {
                vectors
                    .get(id)
                    .cloned()
                    .map(|v| (id.clone(), v))
                    .ok_or_else(|| Error::UnknownId(id.clone()))
            })
            .collect::<Result<_>>()?,
    )
}

/// Tweet ids the RAG variant summarizes for one statement.
pub fn rag_retrieve(index: &VectorIndex, statement_vec: &Vector, top: usize) -> Result<Vec<String>> {
    Ok(dense_rank(index, statement_vec, top)?.into_iter().map(|n| n.id).collect())
}

impl AbstractiveProfile {
    /// Evaluation context: one line per statement with its summary.
    pub fn render_context(&self, statements: &[StanceStatement]) -> String {
        let mut out = String::new();
        let mut seen_summaries = BTreeSet::new();
        for s in statements {
            if let Some(e) = self.entries.get(&s.id) {
                if e.status == EntryStatus::Failed || !seen_summaries.insert(e.summary.as_str()) {
                    continue;
                }
                out.push_str(&format!("- {}: {}\n", s.text, e.summary));
            }
        }
        out
    }
}

impl ExtractiveProfile {
    /// Every cited tweet across all statements, first-citation order.
    pub fn cited_ids(&self, statements: &[StanceStatement]) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for s in statements {
            for id in self.entries.get(&s.id).into_iter().flatten() {
                if seen.insert(id.as_str()) {
                    out.push(id.clone());
                }
            }
        }
        out
    }
}
