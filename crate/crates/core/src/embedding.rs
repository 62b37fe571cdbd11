//! Text embeddings, cosine distance and an exact top-k vector index.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// Dense embedding. Entries are finite; length is the dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("vector must have dim > 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("vector has non-finite entries".into()));
        }
        Ok(Vector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Unit-L2 copy; fails on the zero vector.
    pub fn normalized(&self) -> Result<Vector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Vector(self.0.iter().map(|v| v / n).collect()))
    }

    /// Arithmetic mean of equally sized vectors (not renormalized).
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a Vector>) -> Result<Vector> {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::Empty("mean of zero vectors".into()))?;
        let mut acc = first.0.clone();
        let mut n = 1usize;
        for v in iter {
            check_dims(acc.len(), v.dim())?;
            for (a, b) in acc.iter_mut().zip(&v.0) {
                *a += b;
            }
            n += 1;
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        Ok(Vector(acc))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nonzero entries in index order, or `None` when the vector is dense
/// enough that skipping zeros would not pay off.
///
/// Summing only these terms in index order gives the same float result as
/// [`dot`], since adding a zero product never changes a nonzero partial sum.
pub(crate) fn sparse_terms(values: &[f64]) -> Option<Vec<(usize, f64)>> {
    let nz: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    (nz.len() * 4 <= values.len()).then_some(nz)
}

pub(crate) fn sparse_dot(terms: &[(usize, f64)], dense: &[f64]) -> f64 {
    terms.iter().map(|&(i, v)| dense[i] * v).sum()
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &Vector, b: &Vector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(distance_from_parts(dot(&a.0, &b.0), na, nb))
}

pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64> {
    cosine_distance(a, b).map(|d| 1.0 - d)
}

#[inline]
fn distance_from_parts(dot: f64, na: f64, nb: f64) -> f64 {
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub provider: Provider,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_dim() -> usize {
    256
}
fn default_timeout_secs() -> u64 {
    30
}
fn default_retries() -> usize {
    3
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            provider: Provider::Hashing,
            dim: default_dim(),
            endpoint: None,
            model_name: None,
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
        }
    }
}

impl EmbedderConfig {
    pub fn hashing(dim: usize) -> Self {
        EmbedderConfig {
            dim,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::InvalidArgument(format!(
                "embedder dim must be >= 8, got {}",
                self.dim
            )));
        }
        if self.provider == Provider::Remote && self.endpoint.is_none() {
            return Err(Error::InvalidArgument(
                "remote embedder requires an endpoint".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        self.validate()?;
        match self.provider {
            Provider::Hashing => Ok(Box::new(HashingEmbedder::new(self.dim)?)),
            #[cfg(feature = "remote")]
            Provider::Remote => Ok(Box::new(remote::RemoteEmbedder::new(self)?)),
            #[cfg(not(feature = "remote"))]
            Provider::Remote => Err(Error::InvalidArgument(
                "built without the `remote` feature".into(),
            )),
        }
    }
}

/// Produces unit-L2 vectors of a fixed dimension.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vector>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Convenience wrapper: build the configured embedder and embed one text.
pub fn embed_text(text: &str, cfg: &EmbedderConfig) -> Result<Vector> {
    cfg.build()?.embed(text)
}

/// Signed feature hashing over normalized word tokens.
///
/// Each token adds `±1` to bucket `h % dim`, where `h` is the token's FNV-1a
/// hash and the sign is the top bit of `h`. The result is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(Error::InvalidArgument(format!(
                "embedder dim must be >= 8, got {dim}"
            )));
        }
        Ok(HashingEmbedder { dim })
    }

    /// Bucket and sign for one token.
    pub fn feature(&self, token: &str) -> (usize, f64) {
        let h = text::fnv1a64(token.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }

    fn accumulate<'a>(&self, tokens: impl Iterator<Item = &'a str>) -> Vec<f64> {
        let mut values = vec![0.0; self.dim];
        for tok in tokens {
            let (bucket, sign) = self.feature(tok);
            values[bucket] += sign;
        }
        values
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, input: &str) -> Result<Vector> {
        let normalized = text::normalize(input);
        if normalized.is_empty() {
            return Err(Error::Empty("cannot embed empty text".into()));
        }
        let tokens = text::tokenize(&normalized);
        let mut values = if tokens.is_empty() {
            // Punctuation or emoji only: fall back to characters.
            let chars: Vec<String> = normalized
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect();
            self.accumulate(chars.iter().map(String::as_str))
        } else {
            self.accumulate(tokens.iter().map(String::as_str))
        };
        if values.iter().all(|v| *v == 0.0) {
            // Signed collisions cancelled every feature; hash the whole text.
            let (bucket, sign) = self.feature(&normalized);
            values[bucket] = sign;
        }
        Vector(values).normalized()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>> {
        texts.par_iter().map(|t| self.embed(t)).collect()
    }
}

#[cfg(feature = "remote")]
pub mod remote {
    //! HTTP embedding provider: `POST {model, texts[]}` returning `{vectors[][]}`.

    use serde::{Deserialize, Serialize};

    use super::{Embedder, EmbedderConfig, Vector};
    use crate::error::{Error, Result};
    use crate::http::JsonClient;

    #[derive(Serialize)]
    struct EmbedRequest<'a> {
        model: &'a str,
        texts: &'a [&'a str],
    }

    #[derive(Deserialize)]
    struct EmbedResponse {
        vectors: Vec<Vec<f64>>,
    }

    pub struct RemoteEmbedder {
        client: JsonClient,
        model: String,
        dim: usize,
    }

    impl RemoteEmbedder {
        pub fn new(cfg: &EmbedderConfig) -> Result<Self> {
            let endpoint = cfg.endpoint.clone().ok_or_else(|| {
                Error::InvalidArgument("remote embedder requires an endpoint".into())
            })?;
            Ok(RemoteEmbedder {
                client: JsonClient::new(endpoint, cfg.timeout_secs, cfg.retries, None),
                model: cfg.model_name.clone().unwrap_or_default(),
                dim: cfg.dim,
            })
        }
    }

    impl Embedder for RemoteEmbedder {
        fn dim(&self) -> usize {
            self.dim
        }

        fn embed(&self, text: &str) -> Result<Vector> {
            let mut v = self.embed_batch(&[text])?;
            Ok(v.remove(0))
        }

        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>> {
            if texts.iter().any(|t| t.trim().is_empty()) {
                return Err(Error::Empty("cannot embed empty text".into()));
            }
            let body = EmbedRequest {
                model: &self.model,
                texts,
            };
            let resp: EmbedResponse = self.client.post(&body)?;
            if resp.vectors.len() != texts.len() {
                return Err(Error::Transport {
                    attempts: 1,
                    message: format!(
                        "asked for {} vectors, received {}",
                        texts.len(),
                        resp.vectors.len()
                    ),
                });
            }
            resp.vectors
                .into_iter()
                .map(|values| {
                    if values.len() != self.dim {
                        return Err(Error::DimensionMismatch {
                            expected: self.dim,
                            actual: values.len(),
                        });
                    }
                    Vector::new(values)?.normalized()
                })
                .collect()
        }
    }
}

/// Exact nearest-neighbour index under cosine distance.
///
/// Immutable after [`VectorIndex::build`]; queries may run concurrently.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

impl VectorIndex {
    pub fn build(items: Vec<(String, Vector)>) -> Result<Self> {
        let Some(dim) = items.first().map(|(_, v)| v.dim()) else {
            return Ok(VectorIndex::default());
        };
        let mut seen = std::collections::HashSet::with_capacity(items.len());
        let mut ids = Vec::with_capacity(items.len());
        let mut data = Vec::with_capacity(items.len() * dim);
        let mut norms = Vec::with_capacity(items.len());
        for (id, v) in items {
            check_dims(dim, v.dim())?;
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId { id, line: ids.len() + 1 });
            }
            let n = v.norm();
            if n == 0.0 {
                return Err(Error::ZeroVector);
            }
            norms.push(n);
            data.extend_from_slice(v.values());
            ids.push(id);
        }
        Ok(VectorIndex { ids, dim, data, norms })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn distances(&self, query: &Vector) -> Result<Vec<f64>> {
        check_dims(self.dim, query.dim())?;
        let qn = query.norm();
        if qn == 0.0 {
            return Err(Error::ZeroVector);
        }
        let q = query.values();
        let rows = self.data.chunks_exact(self.dim).zip(&self.norms);
        Ok(match sparse_terms(q) {
            Some(terms) => rows
                .map(|(row, &n)| distance_from_parts(sparse_dot(&terms, row), n, qn))
                .collect(),
            None => rows.map(|(row, &n)| distance_from_parts(dot(row, q), n, qn)).collect(),
        })
    }

    /// The `k` nearest items, ascending by distance with ties broken by id.
    pub fn top_k(&self, query: &Vector, k: usize) -> Result<Vec<Neighbor>> {
        if self.is_empty() || k == 0 {
            if !self.is_empty() {
                check_dims(self.dim, query.dim())?;
            }
            return Ok(Vec::new());
        }
        let dist = self.distances(query)?;
        let mut order: Vec<usize> = (0..dist.len()).collect();
        let cmp = |a: &usize, b: &usize| -> Ordering {
            dist[*a]
                .total_cmp(&dist[*b])
                .then_with(|| self.ids[*a].cmp(&self.ids[*b]))
        };
        let k = k.min(order.len());
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(cmp);
        Ok(order
            .into_iter()
            .map(|i| Neighbor {
                id: self.ids[i].clone(),
                distance: dist[i],
            })
            .collect())
    }

    /// Mean distance to the `k` nearest items, without materializing ids.
    pub fn mean_top_k_distance(&self, query: &Vector, k: usize) -> Result<f64> {
        if k == 0 || self.len() < k {
            return Err(Error::IndexTooSmall { size: self.len(), k });
        }
        let mut dist = self.distances(query)?;
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, f64::total_cmp);
        }
        Ok(dist[..k].iter().sum::<f64>() / k as f64)
    }
}
