//! Semi-supervised domain filtering.
//!
//! A tweet's mean cosine distance to its `k` nearest knowledge chunks places
//! it in one of three bands:
//!
//! ```text
//!   [0, 1-theta)      domain
//!   [1-theta, theta]  borderline (boundary points included)
//!   (theta, 2]        non-domain
//! ```
//!
//! The confidently labeled tweets train a logistic-regression classifier over
//! the same embedding space, which then filters the full corpus.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, sparse_dot, sparse_terms, Vector, VectorIndex};
use crate::error::{Error, Result};
use crate::metrics::{self, ConfusionReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub theta: f64,
    pub k: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { theta: 0.7, k: 10 }
    }
}

impl FilterConfig {
    pub fn new(theta: f64, k: usize) -> Result<Self> {
        let cfg = FilterConfig { theta, k };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.5 && self.theta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "theta must lie in (0.5, 1), got {}",
                self.theta
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        Ok(())
    }

    pub fn band(&self, mean_distance: f64) -> DomainLabel {
        if mean_distance < 1.0 - self.theta {
            DomainLabel::Domain
        } else if mean_distance > self.theta {
            DomainLabel::NonDomain
        } else {
            DomainLabel::Borderline
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainLabel {
    Domain,
    NonDomain,
    Borderline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceLabel {
    pub tweet_id: String,
    pub mean_distance: f64,
    pub label: DomainLabel,
}

pub fn label_by_distance(
    tweet_id: &str,
    tweet_vec: &Vector,
    chunks: &VectorIndex,
    cfg: &FilterConfig,
) -> Result<DistanceLabel> {
    let mean_distance = chunks.mean_top_k_distance(tweet_vec, cfg.k)?;
    Ok(DistanceLabel {
        tweet_id: tweet_id.to_owned(),
        mean_distance,
        label: cfg.band(mean_distance),
    })
}

/// Labels every item in parallel; output order follows `items`.
pub fn label_all(
    items: &[(String, Vector)],
    chunks: &VectorIndex,
    cfg: &FilterConfig,
) -> Result<Vec<DistanceLabel>> {
    cfg.validate()?;
    if chunks.len() < cfg.k {
        return Err(Error::IndexTooSmall {
            size: chunks.len(),
            k: cfg.k,
        });
    }
    items
        .par_iter()
        .map(|(id, v)| label_by_distance(id, v, chunks, cfg))
        .collect()
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;
pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub bin_width: f64,
    /// Counts over `[0, 2]`; bin `i` covers `[i*w, (i+1)*w)`, the last bin is
    /// closed on the right.
    pub histogram: Vec<usize>,
    pub domain: usize,
    pub non_domain: usize,
    pub borderline: usize,
}

impl DistanceReport {
    pub fn from_labels(labels: &[DistanceLabel]) -> Self {
        let mut histogram = vec![0usize; HISTOGRAM_BINS];
        let (mut domain, mut non_domain, mut borderline) = (0, 0, 0);
        for l in labels {
            let bin = ((l.mean_distance / HISTOGRAM_BIN_WIDTH).floor() as usize)
                .min(HISTOGRAM_BINS - 1);
            histogram[bin] += 1;
            match l.label {
                DomainLabel::Domain => domain += 1,
                DomainLabel::NonDomain => non_domain += 1,
                DomainLabel::Borderline => borderline += 1,
            }
        }
        DistanceReport {
            bin_width: HISTOGRAM_BIN_WIDTH,
            histogram,
            domain,
            non_domain,
            borderline,
        }
    }

    /// Percentage of domain among confidently labeled tweets.
    pub fn domain_percent(&self) -> f64 {
        let labeled = self.domain + self.non_domain;
        if labeled == 0 {
            0.0
        } else {
            100.0 * self.domain as f64 / labeled as f64
        }
    }

    /// Text histogram, one row per non-empty bin.
    pub fn to_text(&self) -> String {
        let max = self.histogram.iter().copied().max().unwrap_or(0).max(1);
        let mut out = String::new();
        for (i, &c) in self.histogram.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let lo = i as f64 * self.bin_width;
            let bar = "#".repeat((c * 50).div_ceil(max));
            out.push_str(&format!("{lo:>5.2}-{:<5.2} {c:>8} {bar}\n", lo + self.bin_width));
        }
        out.push_str(&format!(
            "domain {} / non-domain {} / borderline {} ({:.1}% domain among labeled)\n",
            self.domain,
            self.non_domain,
            self.borderline,
            self.domain_percent()
        ));
        out
    }
}

/// Distance-labels `items` and keeps the confidently labeled ones.
pub fn build_training_set(
    items: &[(String, Vector)],
    chunks: &VectorIndex,
    cfg: &FilterConfig,
) -> Result<(Vec<DistanceLabel>, DistanceReport)> {
    let labels = label_all(items, chunks, cfg)?;
    let report = DistanceReport::from_labels(&labels);
    let kept: Vec<DistanceLabel> = labels
        .into_iter()
        .filter(|l| l.label != DomainLabel::Borderline)
        .collect();
    if kept.is_empty() {
        return Err(Error::AllBorderline);
    }
    Ok((kept, report))
}

/// Up to `n` tweets strictly inside `(1-theta, theta)`, closest to 0.5 first.
pub fn extract_borderline(
    items: &[(String, Vector)],
    chunks: &VectorIndex,
    cfg: &FilterConfig,
    n: usize,
) -> Result<Vec<DistanceLabel>> {
    let labels = label_all(items, chunks, cfg)?;
    Ok(select_borderline(labels, cfg, n))
}

pub fn select_borderline(
    labels: Vec<DistanceLabel>,
    cfg: &FilterConfig,
    n: usize,
) -> Vec<DistanceLabel> {
    let lo = 1.0 - cfg.theta;
    let mut inside: Vec<DistanceLabel> = labels
        .into_iter()
        .filter(|l| l.mean_distance > lo && l.mean_distance < cfg.theta)
        .collect();
    inside.sort_by(|a, b| {
        (a.mean_distance - 0.5)
            .abs()
            .total_cmp(&(b.mean_distance - 0.5).abs())
            .then_with(|| a.tweet_id.cmp(&b.tweet_id))
    });
    inside.truncate(n);
    inside
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lr: 1.0,
            epochs: 300,
            l2: 1e-4,
            seed: 123,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub model: LinearClassifier,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub validation: ConfusionReport,
    pub train_size: usize,
    pub validation_size: usize,
}

const GRADIENT_BLOCK: usize = 512;

/// Training input in whichever layout is cheaper to scan. Both layouts give
/// identical float results.
enum Features<'a> {
    Dense(&'a [f64]),
    Sparse(Vec<(usize, f64)>),
}

impl<'a> Features<'a> {
    fn new(values: &'a [f64]) -> Self {
        match sparse_terms(values) {
            Some(terms) => Features::Sparse(terms),
            None => Features::Dense(values),
        }
    }

    fn dot(&self, w: &[f64]) -> f64 {
        match self {
            Features::Dense(x) => dot(w, x),
            Features::Sparse(t) => sparse_dot(t, w),
        }
    }

    fn add_scaled(&self, scale: f64, acc: &mut [f64]) {
        match self {
            Features::Dense(x) => {
                for (g, xi) in acc.iter_mut().zip(x.iter()) {
                    *g += scale * xi;
                }
            }
            Features::Sparse(t) => {
                for &(i, xi) in t {
                    acc[i] += scale * xi;
                }
            }
        }
    }
}

pub const MIN_TRAINING_EXAMPLES: usize = 20;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on L2-regularized logistic loss.
///
/// A stratified, seeded 80/20 split holds out the validation set; the
/// result is a pure function of `(examples, params)`.
pub fn train_classifier(
    examples: &[(Vector, bool)],
    params: &TrainParams,
) -> Result<TrainedClassifier> {
    if examples.len() < MIN_TRAINING_EXAMPLES {
        return Err(Error::TooFewExamples {
            needed: MIN_TRAINING_EXAMPLES,
            got: examples.len(),
        });
    }
    let dim = examples[0].0.dim();
    if let Some((v, _)) = examples.iter().find(|(v, _)| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.dim(),
        });
    }
    let mut pos: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].1).collect();
    let mut neg: Vec<usize> = (0..examples.len()).filter(|&i| !examples[i].1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let hold = |n: usize| (n / 5).min(n.saturating_sub(1));
    let (pv, pt) = pos.split_at(hold(pos.len()));
    let (nv, nt) = neg.split_at(hold(neg.len()));
    let train: Vec<usize> = pt.iter().chain(nt).copied().collect();
    let valid: Vec<usize> = pv.iter().chain(nv).copied().collect();

    let features: Vec<Features> = examples.iter().map(|(v, _)| Features::new(v.values())).collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let n = train.len() as f64;
    for _ in 0..params.epochs {
        // Fixed-size blocks summed in order keep the float result independent
        // of thread scheduling.
        let partials: Vec<(Vec<f64>, f64)> = train
            .par_chunks(GRADIENT_BLOCK)
            .map(|block| {
                let mut gw = vec![0.0; dim];
                let mut gb = 0.0;
                for &i in block {
                    let x = &features[i];
                    let err = sigmoid(x.dot(&w) + b) - if examples[i].1 { 1.0 } else { 0.0 };
                    x.add_scaled(err, &mut gw);
                    gb += err;
                }
                (gw, gb)
            })
            .collect();
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (pw, pb) in partials {
            for (x, y) in gw.iter_mut().zip(&pw) {
                *x += y;
            }
            gb += pb;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= params.lr * (g / n + params.l2 * *wi);
        }
        b -= params.lr * gb / n;
    }

    let model = LinearClassifier {
        weights: w,
        bias: b,
        threshold: params.threshold,
    };
    let accuracy = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return 0.0;
        }
        let hits = idx
            .iter()
            .filter(|&&i| model.predict(examples[i].0.values()) == examples[i].1)
            .count();
        hits as f64 / idx.len() as f64
    };
    let train_accuracy = accuracy(&train);
    let validation_accuracy = accuracy(&valid);
    let vpred: Vec<usize> = valid
        .iter()
        .map(|&i| usize::from(model.predict(examples[i].0.values())))
        .collect();
    let vgold: Vec<usize> = valid.iter().map(|&i| usize::from(examples[i].1)).collect();
    let validation = metrics::confusion(&vpred, &vgold, &["non_domain", "domain"])?;
    Ok(TrainedClassifier {
        model,
        train_accuracy,
        validation_accuracy,
        validation,
        train_size: train.len(),
        validation_size: valid.len(),
    })
}

impl LinearClassifier {
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, x) + self.bias)
    }

    fn predict(&self, x: &[f64]) -> bool {
        self.score(x) >= self.threshold
    }

    /// Domain iff the sigmoid score reaches the threshold.
    pub fn classify(&self, tweet_vec: &Vector) -> Result<(DomainLabel, f64)> {
        if tweet_vec.dim() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: tweet_vec.dim(),
            });
        }
        let s = self.score(tweet_vec.values());
        let label = if s >= self.threshold {
            DomainLabel::Domain
        } else {
            DomainLabel::NonDomain
        };
        Ok((label, s))
    }
}

/// Binary confusion metrics with class 0 = non-domain, 1 = domain.
pub fn confusion_metrics(pred: &[bool], gold: &[bool]) -> Result<ConfusionReport> {
    let p: Vec<usize> = pred.iter().map(|&b| usize::from(b)).collect();
    let g: Vec<usize> = gold.iter().map(|&b| usize::from(b)).collect();
    metrics::confusion(&p, &g, &["non_domain", "domain"])
}
