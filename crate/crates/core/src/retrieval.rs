//! Baseline tweet selectors: Okapi BM25, dense nearest-neighbour retrieval and
//! keyword-aspect selection.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_distance, Neighbor, Vector, VectorIndex};
use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    /// term -> (doc index, term frequency)
    postings: HashMap<String, Vec<(usize, u32)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: String,
    pub score: f64,
}

impl Bm25Index {
    pub fn build<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>, params: Bm25Params) -> Self {
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (i, (id, body)) in docs.into_iter().enumerate() {
            let tokens = text::tokenize(body);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_insert(0) += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push((i, n));
            }
            doc_ids.push(id.to_owned());
            doc_lengths.push(tokens.len());
        }
        let avg_doc_length = if doc_ids.is_empty() {
            0.0
        } else {
            doc_lengths.iter().sum::<usize>() as f64 / doc_ids.len() as f64
        };
        Bm25Index {
            params,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Scores for every document with at least one query term.
    fn score_all(&self, query: &str) -> Result<HashMap<usize, f64>> {
        let mut terms = text::tokenize(query);
        if terms.is_empty() {
            return Err(Error::InvalidArgument("query has no terms".into()));
        }
        terms.sort();
        terms.dedup();
        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(d, tf) in list {
                let tf = tf as f64;
                let norm = 1.0 - b + b * self.doc_lengths[d] as f64 / self.avg_doc_length;
                *scores.entry(d).or_insert(0.0) += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        Ok(scores)
    }

    /// Score of one document; 0 when it shares no term with the query.
    pub fn score(&self, query: &str, doc_id: &str) -> Result<f64> {
        let d = self
            .doc_ids
            .iter()
            .position(|id| id == doc_id)
            .ok_or_else(|| Error::UnknownId(doc_id.to_owned()))?;
        Ok(self.score_all(query)?.get(&d).copied().unwrap_or(0.0))
    }
}

/// Top documents by BM25 score, descending, ties by id. Zero scores are
/// dropped.
pub fn bm25_rank(index: &Bm25Index, query: &str, top: usize) -> Result<Vec<Scored>> {
    let scores = index.score_all(query)?;
    let mut out: Vec<Scored> = scores
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(d, score)| Scored {
            id: index.doc_ids[d].clone(),
            score,
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    out.truncate(top);
    Ok(out)
}

/// Nearest tweets to a statement embedding.
pub fn dense_rank(index: &VectorIndex, statement_vec: &Vector, top: usize) -> Result<Vec<Neighbor>> {
    index.top_k(statement_vec, top)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectSpec {
    pub statement_id: String,
    pub keywords: Vec<String>,
}

impl AspectSpec {
    pub fn new(statement_id: impl Into<String>, keywords: Vec<String>) -> Result<Self> {
        let spec = AspectSpec {
            statement_id: statement_id.into(),
            keywords,
        };
        if spec.keywords.iter().all(|k| text::normalize(k).is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "aspect {} has no keywords",
                spec.statement_id
            )));
        }
        Ok(spec)
    }
}

/// Reads `{statement_id: [keywords]}`.
pub fn load_aspects(path: &Path) -> Result<Vec<AspectSpec>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, Vec<String>> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    map.into_iter().map(|(id, kws)| AspectSpec::new(id, kws)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSelection {
    pub tweet_ids: Vec<String>,
    pub matched: usize,
    pub warning: Option<String>,
}

/// Tweets containing an aspect keyword, nearest the mean of the matching
/// tweets' embeddings first.
pub fn semae_select(
    tweets: &[(String, String, Vector)],
    aspect: &AspectSpec,
    n: usize,
) -> Result<AspectSelection> {
    let keywords: Vec<String> = aspect
        .keywords
        .iter()
        .map(|k| text::normalize(k))
        .filter(|k| !k.is_empty())
        .collect();
    if keywords.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "aspect {} has no keywords",
            aspect.statement_id
        )));
    }
    let matched: Vec<&(String, String, Vector)> = tweets
        .iter()
        .filter(|(_, body, _)| {
            let norm = text::normalize(body);
            keywords.iter().any(|k| text::contains_normalized(&norm, k))
        })
        .collect();
    if matched.is_empty() {
        let warning = format!("no tweet matches aspect {}", aspect.statement_id);
        log::debug!("{warning}");
        return Ok(AspectSelection {
            tweet_ids: Vec::new(),
            matched: 0,
            warning: Some(warning),
        });
    }
    let mean = Vector::mean(matched.iter().map(|(_, _, v)| v))?;
    let mut ranked: Vec<(f64, &String)> = if mean.norm() == 0.0 {
        matched.iter().map(|(id, _, _)| (0.0, id)).collect()
    } else {
        matched
            .iter()
            .map(|(id, _, v)| cosine_distance(v, &mean).map(|d| (d, id)))
            .collect::<Result<_>>()?
    };
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    Ok(AspectSelection {
        tweet_ids: ranked.into_iter().take(n).map(|(_, id)| id.clone()).collect(),
        matched: matched.len(),
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedder, HashingEmbedder};

    fn index(docs: &[(&str, &str)]) -> Bm25Index {
        Bm25Index::build(docs.iter().copied(), Bm25Params::default())
    }

    #[test]
    fn no_shared_terms_is_empty() {
        let idx = index(&[("a", "cats and dogs"), ("b", "birds")]);
        assert!(bm25_rank(&idx, "economy", 10).unwrap().is_empty());
        assert_eq!(idx.score("economy", "a").unwrap(), 0.0);
    }

    #[test]
    fn empty_query_errors() {
        let idx = index(&[("a", "x")]);
        assert!(bm25_rank(&idx, "  ...  ", 3).is_err());
    }

    #[test]
    fn single_doc_ranked_first() {
        let idx = index(&[("only", "sanctions hurt the economy")]);
        let r = bm25_rank(&idx, "economy", 5).unwrap();
        assert_eq!(r[0].id, "only");
        assert!(r[0].score > 0.0);
    }

    #[test]
    fn toy_corpus_hand_value() {
        // d1: 4 tokens, d2: 2 tokens, d3: 3 tokens; avgdl = 3.
        let idx = index(&[("d1", "oil price oil tax"), ("d2", "price rise"), ("d3", "tax the rich")]);
        let (k1, b, avg) = (1.2, 0.75, 3.0);
        let idf = |df: f64| ((3.0 - df + 0.5) / (df + 0.5) + 1.0f64).ln();
        let term = |tf: f64, len: f64, df: f64| {
            idf(df) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg))
        };
        let r = bm25_rank(&idx, "oil price", 3).unwrap();
        let d1 = term(2.0, 4.0, 1.0) + term(1.0, 4.0, 2.0);
        let d2 = term(1.0, 2.0, 2.0);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].id, "d1");
        assert!((r[0].score - d1).abs() < 1e-12);
        assert!((r[1].score - d2).abs() < 1e-12);
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let idx = index(&[("a", "oil tax"), ("b", "tax")]);
        let once = bm25_rank(&idx, "oil", 2).unwrap();
        let twice = bm25_rank(&idx, "oil oil", 2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn tf_monotone() {
        let mut prev = 0.0;
        for tf in 1..8 {
            let body = vec!["oil"; tf].join(" ") + " filler words";
            let idx = index(&[("a", &body), ("b", "other stuff here"), ("c", "more text")]);
            let s = idx.score("oil", "a").unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn dense_identical_text_first() {
        let e = HashingEmbedder::new(64).unwrap();
        let items = vec![
            ("t1".to_string(), e.embed("we must lift the sanctions").unwrap()),
            ("t2".to_string(), e.embed("the weather is fine").unwrap()),
        ];
        let idx = VectorIndex::build(items).unwrap();
        let r = dense_rank(&idx, &e.embed("we must lift the sanctions").unwrap(), 1).unwrap();
        assert_eq!(r[0].id, "t1");
        assert!(r[0].distance.abs() < 1e-12);
    }

    fn tweets(texts: &[&str]) -> Vec<(String, String, Vector)> {
        let e = HashingEmbedder::new(64).unwrap();
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("t{i}"), t.to_string(), e.embed(t).unwrap()))
            .collect()
    }

    #[test]
    fn semae_no_match_warns() {
        let a = AspectSpec::new("s1", vec!["Sanctions".into()]).unwrap();
        let r = semae_select(&tweets(&["hello world"]), &a, 5).unwrap();
        assert!(r.tweet_ids.is_empty());
        assert!(r.warning.is_some());
    }

    #[test]
    fn semae_single_match() {
        let a = AspectSpec::new("s1", vec!["SANCTIONS".into()]).unwrap();
        let r = semae_select(&tweets(&["hello", "the sanctions bite", "bye"]), &a, 5).unwrap();
        assert_eq!(r.tweet_ids, vec!["t1"]);
    }

    #[test]
    fn aspect_needs_keywords() {
        assert!(AspectSpec::new("s", vec![]).is_err());
        assert!(AspectSpec::new("s", vec!["  ".into()]).is_err());
    }
}
