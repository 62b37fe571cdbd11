//! Tweet corpus ingestion, persistence and corpus-level reports.
//!
//! The canonical on-disk form is json-lines, one [`Tweet`] per line, ordered by
//! `(user_id, created_at, id)`. CSV is accepted at ingest only.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub user_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub retweet_count: u64,
    #[serde(default)]
    pub like_count: u64,
}

/// A user's tweets, sorted by `created_at` then id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub tweet_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    JsonLines,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::JsonLines,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub tweets: usize,
    pub users: usize,
    /// Records whose text was empty after normalization.
    pub dropped_empty: usize,
}

/// Immutable, thread-shareable view of an ingested corpus.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    tweets: Vec<Tweet>,
    by_id: HashMap<String, usize>,
    users: BTreeMap<String, UserRecord>,
    dropped_empty: usize,
}

impl Corpus {
    /// Builds a corpus from records, rejecting duplicate ids and dropping
    /// records with empty normalized text. `line` numbers in errors are the
    /// 1-based position in `tweets`.
    pub fn from_tweets(tweets: Vec<Tweet>) -> Result<Self> {
        let mut seen: HashMap<String, usize> = HashMap::with_capacity(tweets.len());
        let mut kept = Vec::with_capacity(tweets.len());
        let mut dropped = 0;
        for (i, t) in tweets.into_iter().enumerate() {
            if seen.insert(t.id.clone(), i + 1).is_some() {
                return Err(Error::DuplicateId {
                    id: t.id,
                    line: i + 1,
                });
            }
            if text::normalize(&t.text).is_empty() {
                dropped += 1;
                continue;
            }
            kept.push(t);
        }
        let mut corpus = Self::assemble(kept);
        corpus.dropped_empty = dropped;
        Ok(corpus)
    }

    fn assemble(mut tweets: Vec<Tweet>) -> Self {
        tweets.sort_by(|a, b| {
            (&a.user_id, a.created_at, &a.id).cmp(&(&b.user_id, b.created_at, &b.id))
        });
        let by_id = tweets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        let mut users: BTreeMap<String, UserRecord> = BTreeMap::new();
        for t in &tweets {
            users
                .entry(t.user_id.clone())
                .or_insert_with(|| UserRecord {
                    user_id: t.user_id.clone(),
                    tweet_ids: Vec::new(),
                })
                .tweet_ids
                .push(t.id.clone());
        }
        Corpus {
            tweets,
            by_id,
            users,
            dropped_empty: 0,
        }
    }

    pub fn ingest(path: &Path, format: InputFormat) -> Result<Self> {
        let tweets = match format {
            InputFormat::JsonLines => read_jsonl_tweets(path)?,
            InputFormat::Csv => read_csv_tweets(path)?,
        };
        if tweets.is_empty() {
            return Err(Error::Empty(format!("{} holds no records", path.display())));
        }
        let corpus = Self::from_tweets(tweets)?;
        if corpus.dropped_empty > 0 {
            log::warn!(
                "{}: dropped {} tweet(s) with empty text",
                path.display(),
                corpus.dropped_empty
            );
        }
        Ok(corpus)
    }

    /// Writes the canonical json-lines form.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in &self.tweets {
            let line = serde_json::to_string(t).expect("tweet serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn stats(&self) -> IngestStats {
        IngestStats {
            tweets: self.tweets.len(),
            users: self.users.len(),
            dropped_empty: self.dropped_empty,
        }
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn get(&self, id: &str) -> Option<&Tweet> {
        self.by_id.get(id).map(|&i| &self.tweets[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn user(&self, user_id: &str) -> Option<&UserRecord> {
        self.users.get(user_id)
    }

    pub fn user_tweets(&self, user_id: &str) -> Vec<&Tweet> {
        self.users
            .get(user_id)
            .map(|u| u.tweet_ids.iter().filter_map(|id| self.get(id)).collect())
            .unwrap_or_default()
    }

    /// Sub-corpus with only the tweets accepted by `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&Tweet) -> bool) -> Corpus {
        Self::assemble(self.tweets.iter().filter(|t| keep(t)).cloned().collect())
    }
}

fn read_jsonl_tweets(path: &Path) -> Result<Vec<Tweet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let tweet: Tweet = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(tweet.id.clone()) {
            return Err(Error::DuplicateId {
                id: tweet.id,
                line: i + 1,
            });
        }
        out.push(tweet);
    }
    Ok(out)
}

fn read_csv_tweets(path: &Path) -> Result<Vec<Tweet>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 1,
            message: format!("{other:?}"),
        },
    })?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut record = csv::StringRecord::new();
    let headers = reader.headers().cloned().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    loop {
        let line = reader.position().line() as usize;
        let more = reader.read_record(&mut record).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(line);
        let tweet: Tweet = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(tweet.id.clone()) {
            return Err(Error::DuplicateId { id: tweet.id, line });
        }
        out.push(tweet);
    }
    Ok(out)
}

/// Weighted retweet edge; `weight` counts retweets from `source` of `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetweetEdge {
    pub source: String,
    pub target: String,
    pub weight: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetweetGraph {
    pub nodes: BTreeSet<String>,
    pub edges: Vec<RetweetEdge>,
}

/// Undirected, index-based view for community detection. Parallel and
/// reciprocal edges are merged by summing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct UndirectedGraph {
    pub names: Vec<String>,
    /// `(u, v, w)` with `u <= v`, sorted and unique.
    pub edges: Vec<(usize, usize, f64)>,
}

impl UndirectedGraph {
    pub fn node_count(&self) -> usize {
        self.names.len()
    }
}

impl RetweetGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = String>,
        edges: Vec<RetweetEdge>,
    ) -> Result<Self> {
        let mut nodes: BTreeSet<String> = nodes.into_iter().collect();
        for e in &edges {
            if e.weight == 0 {
                return Err(Error::InvalidArgument(format!(
                    "edge {} -> {} has zero weight",
                    e.source, e.target
                )));
            }
            nodes.insert(e.source.clone());
            nodes.insert(e.target.clone());
        }
        Ok(RetweetGraph { nodes, edges })
    }

    /// Reads `{source, target, weight}` json-lines.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut edges = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let edge: RetweetEdge = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if edge.weight == 0 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "weight must be >= 1".into(),
                });
            }
            edges.push(edge);
        }
        Self::new(std::iter::empty(), edges)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.edges {
            writeln!(w, "{}", serde_json::to_string(e).expect("edge serializes"))
                .map_err(|err| Error::io(path, err))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn undirected(&self) -> UndirectedGraph {
        let names: Vec<String> = self.nodes.iter().cloned().collect();
        let index: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in &self.edges {
            let a = index[e.source.as_str()];
            let b = index[e.target.as_str()];
            let key = if a <= b { (a, b) } else { (b, a) };
            *merged.entry(key).or_insert(0.0) += e.weight as f64;
        }
        UndirectedGraph {
            names,
            edges: merged.into_iter().map(|((a, b), w)| (a, b, w)).collect(),
        }
    }
}

/// Tweet counts per Venn region over a family of keyword sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub set_count: usize,
    /// Indexed by bitmask of matched sets; entry 0 counts tweets matching none.
    pub regions: Vec<usize>,
}

impl OverlapCounts {
    /// Count for the region where exactly the sets in `members` match.
    pub fn region(&self, members: &[usize]) -> usize {
        let mask = members.iter().fold(0usize, |m, &i| m | (1 << i));
        self.regions[mask]
    }

    pub fn matched_any(&self) -> usize {
        self.regions.iter().skip(1).sum()
    }
}

pub fn candidate_overlap(corpus: &Corpus, name_sets: &[Vec<String>]) -> Result<OverlapCounts> {
    if name_sets.len() < 2 {
        return Err(Error::InvalidArgument(
            "overlap needs at least two name sets".into(),
        ));
    }
    if name_sets.len() > 16 {
        return Err(Error::InvalidArgument("at most 16 name sets".into()));
    }
    let normalized: Vec<Vec<String>> = name_sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let words: Vec<String> = set
                .iter()
                .map(|k| text::normalize(k))
                .filter(|k| !k.is_empty())
                .collect();
            if words.is_empty() {
                Err(Error::Empty(format!("name set {i} has no keywords")))
            } else {
                Ok(words)
            }
        })
        .collect::<Result<_>>()?;

    let mut regions = vec![0usize; 1 << name_sets.len()];
    for t in corpus.tweets() {
        let hay = text::normalize(&t.text);
        let mask = normalized
            .iter()
            .enumerate()
            .filter(|(_, set)| set.iter().any(|k| hay.contains(k.as_str())))
            .fold(0usize, |m, (i, _)| m | (1 << i));
        regions[mask] += 1;
    }
    Ok(OverlapCounts {
        set_count: name_sets.len(),
        regions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupKeywords {
    pub name: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub total_tweets: f64,
    pub total_users: f64,
    pub avg_tweets_per_user: f64,
    pub avg_text_len: f64,
    pub median_text_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub group: String,
    pub before: GroupStats,
    pub after: GroupStats,
    /// Percentage change per metric, in the same order as [`GroupStats`].
    pub total_tweets_pct: f64,
    pub total_users_pct: f64,
    pub avg_tweets_per_user_pct: f64,
    pub avg_text_len_pct: f64,
    pub median_text_len_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub groups: Vec<GroupDelta>,
}

impl DeltaReport {
    /// Aligned text table with one column per group.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16}", "");
        for g in &self.groups {
            out.push_str(&format!("{:>14}", format!("{} (%)", g.group)));
        }
        out.push('\n');
        let rows: [(&str, fn(&GroupDelta) -> f64); 5] = [
            ("Total Twts", |g| g.total_tweets_pct),
            ("Total Users", |g| g.total_users_pct),
            ("Avg Twt/User", |g| g.avg_tweets_per_user_pct),
            ("Avg Twt Len", |g| g.avg_text_len_pct),
            ("Median Twt Len", |g| g.median_text_len_pct),
        ];
        for (label, f) in rows {
            out.push_str(&format!("{label:<16}"));
            for g in &self.groups {
                out.push_str(&format!("{:>14.2}", f(g)));
            }
            out.push('\n');
        }
        out
    }
}

fn group_stats<'a>(tweets: impl Iterator<Item = &'a Tweet>) -> GroupStats {
    let mut users = BTreeSet::new();
    let mut lens = Vec::new();
    for t in tweets {
        users.insert(t.user_id.as_str());
        lens.push(t.text.chars().count() as f64);
    }
    let n = lens.len() as f64;
    let u = users.len() as f64;
    lens.sort_by(f64::total_cmp);
    let median = match lens.len() {
        0 => 0.0,
        l if l % 2 == 1 => lens[l / 2],
        l => (lens[l / 2 - 1] + lens[l / 2]) / 2.0,
    };
    GroupStats {
        total_tweets: n,
        total_users: u,
        avg_tweets_per_user: if u > 0.0 { n / u } else { 0.0 },
        avg_text_len: if n > 0.0 { lens.iter().sum::<f64>() / n } else { 0.0 },
        median_text_len: median,
    }
}

fn pct_change(before: f64, after: f64) -> f64 {
    if before == 0.0 {
        0.0
    } else {
        (after - before) / before * 100.0
    }
}

/// Percentage change of per-group corpus statistics after filtering.
pub fn filter_deltas(
    before: &Corpus,
    after: &Corpus,
    groups: &[GroupKeywords],
) -> Result<DeltaReport> {
    if let Some(stray) = after.tweets().iter().find(|t| !before.contains(&t.id)) {
        return Err(Error::InvalidArgument(format!(
            "tweet {} is in the filtered corpus but not the original",
            stray.id
        )));
    }
    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        let keys: Vec<String> = group
            .keywords
            .iter()
            .map(|k| text::normalize(k))
            .filter(|k| !k.is_empty())
            .collect();
        if keys.is_empty() {
            return Err(Error::Empty(format!("group {} has no keywords", group.name)));
        }
        let matches = |t: &&Tweet| {
            let hay = text::normalize(&t.text);
            keys.iter().any(|k| hay.contains(k.as_str()))
        };
        let b = group_stats(before.tweets().iter().filter(matches));
        if b.total_tweets == 0.0 {
            return Err(Error::Empty(format!(
                "group {} has no tweets before filtering",
                group.name
            )));
        }
        let a = group_stats(after.tweets().iter().filter(matches));
        out.push(GroupDelta {
            group: group.name.clone(),
            total_tweets_pct: pct_change(b.total_tweets, a.total_tweets),
            total_users_pct: pct_change(b.total_users, a.total_users),
            avg_tweets_per_user_pct: pct_change(b.avg_tweets_per_user, a.avg_tweets_per_user),
            avg_text_len_pct: pct_change(b.avg_text_len, a.avg_text_len),
            median_text_len_pct: pct_change(b.median_text_len, a.median_text_len),
            before: b,
            after: a,
        });
    }
    Ok(DeltaReport { groups: out })
}
