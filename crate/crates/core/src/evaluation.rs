//! Open-book stance QA and the statistics used to compare profiling methods.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::llm::{map_bounded, CompletionRequest, Gateway, PromptTemplate};
use crate::metrics;
use crate::profiling::StanceStatement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StanceLabel {
    True,
    False,
    CannotAnswer,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::True, StanceLabel::False, StanceLabel::CannotAnswer];
    pub const NAMES: [&'static str; 3] = ["True", "False", "CannotAnswer"];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        Self::NAMES[self.index()]
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = Error;

    /// Exact label names, case-insensitive; also accepts "Cannot be answered".
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(StanceLabel::True),
            "false" => Ok(StanceLabel::False),
            "cannotanswer" | "cannot be answered" | "cannot_answer" => Ok(StanceLabel::CannotAnswer),
            other => Err(Error::InvalidArgument(format!("unknown stance label `{other}`"))),
        }
    }
}

static LABEL_PATTERNS: LazyLock<[(StanceLabel, Regex); 3]> = LazyLock::new(|| {
    let re = |p: &str| Regex::new(p).expect("valid regex");
    [
        (StanceLabel::True, re(r"(?i)\btrue\b")),
        (StanceLabel::False, re(r"(?i)\bfalse\b")),
        (
            StanceLabel::CannotAnswer,
            re(r"(?i)\bcannot\s*(?:be\s+)?answer(?:ed)?\b|\bcan'?t\s+be\s+answered\b|\bcannot_answer\b"),
        ),
    ]
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLabel {
    pub label: StanceLabel,
    pub warning: Option<String>,
}

/// Finds a label token in a model reply; True is searched first, then False,
/// then CannotAnswer. No token falls back to CannotAnswer with a warning.
pub fn parse_label(text: &str) -> ParsedLabel {
    for (label, re) in LABEL_PATTERNS.iter() {
        if re.is_match(text) {
            return ParsedLabel {
                label: *label,
                warning: None,
            };
        }
    }
    let mut excerpt: String = text.chars().take(60).collect();
    if excerpt.len() < text.len() {
        excerpt.push_str("...");
    }
    let warning = format!("no label token in reply `{excerpt}`");
    log::warn!("{warning}");
    ParsedLabel {
        label: StanceLabel::CannotAnswer,
        warning: Some(warning),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub label: StanceLabel,
    pub warning: Option<String>,
    pub transport_error: bool,
}

pub const EMPTY_CONTEXT: &str = "(no content)";

/// Asks the judge whether `statement` holds given `context`.
pub fn detect_stance(
    context: &str,
    statement: &StanceStatement,
    tpl: &PromptTemplate,
    gateway: &dyn Gateway,
    model: &str,
) -> Result<Detection> {
    let context = if context.trim().is_empty() { EMPTY_CONTEXT } else { context };
    let prompt = tpl.render(&BTreeMap::from([
        ("context", context.to_owned()),
        ("statement", statement.text.clone()),
    ]))?;
    match gateway.complete(&CompletionRequest::new(prompt, model)?) {
        Ok(c) => {
            let p = parse_label(&c.text);
            Ok(Detection {
                label: p.label,
                warning: p.warning,
                transport_error: false,
            })
        }
        Err(e) => Ok(Detection {
            label: StanceLabel::CannotAnswer,
            warning: Some(e.to_string()),
            transport_error: true,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub user_id: String,
    pub statement_id: String,
    pub method: String,
    pub predicted: StanceLabel,
    pub gold: StanceLabel,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub transport_error: bool,
}

impl EvalResult {
    pub fn correct(&self) -> bool {
        self.predicted == self.gold
    }
}

pub type GoldLabels = BTreeMap<(String, String), StanceLabel>;

/// Judges every (user, statement) pair in `gold` that belongs to a user with
/// a context. Results come back sorted by (user, statement).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_method(
    method: &str,
    contexts: &BTreeMap<String, String>,
    statements: &[StanceStatement],
    gold: &GoldLabels,
    tpl: &PromptTemplate,
    gateway: &dyn Gateway,
    model: &str,
    max_in_flight: usize,
) -> Result<Vec<EvalResult>> {
    let by_id: BTreeMap<&str, &StanceStatement> = statements.iter().map(|s| (s.id.as_str(), s)).collect();
    let pairs: Vec<(&String, &StanceStatement, StanceLabel, &String)> = gold
        .iter()
        .filter_map(|((u, s), g)| contexts.get(u).map(|c| (u, s, *g, c)))
        .map(|(u, s, g, c)| {
            by_id
                .get(s.as_str())
                .map(|st| (u, *st, g, c))
                .ok_or_else(|| Error::UnknownId(s.clone()))
        })
        .collect::<Result<_>>()?;
    let detections = map_bounded(&pairs, max_in_flight, |(_, st, _, ctx)| {
        detect_stance(ctx, st, tpl, gateway, model)
    });
    pairs
        .iter()
        .zip(detections)
        .map(|((u, st, g, _), d)| {
            let d = d?;
            Ok(EvalResult {
                user_id: (*u).clone(),
                statement_id: st.id.clone(),
                method: method.to_owned(),
                predicted: d.label,
                gold: *g,
                transport_error: d.transport_error,
            })
        })
        .collect()
}

/// Unweighted mean F1 over the stance labels present in gold or predictions.
pub fn macro_f1(results: &[EvalResult]) -> Result<f64> {
    confusion(results).map(|r| r.macro_f1)
}

pub fn confusion(results: &[EvalResult]) -> Result<metrics::ConfusionReport> {
    if results.is_empty() {
        return Err(Error::Empty("no evaluation results".into()));
    }
    let pred: Vec<usize> = results.iter().map(|r| r.predicted.index()).collect();
    let gold: Vec<usize> = results.iter().map(|r| r.gold.index()).collect();
    metrics::confusion(&pred, &gold, &StanceLabel::NAMES)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub point: f64,
    pub upper: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const CI_LEVEL: f64 = 0.95;

/// Nearest-rank percentile of a sorted sample, `q` in `[0, 1]`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Percentile bootstrap of macro-F1 over result pairs.
///
/// Resample `r` draws `n` indices with `gen_range(0..n)` from a ChaCha8
/// stream seeded by `seed`, in order. Bounds are nearest-rank percentiles,
/// widened if needed so the interval contains the full-sample point.
pub fn bootstrap_ci(results: &[EvalResult], resamples: usize, level: f64, seed: u64) -> Result<ConfidenceInterval> {
    let point = macro_f1(results)?;
    if resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be positive".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let n = results.len();
    let pred: Vec<usize> = results.iter().map(|r| r.predicted.index()).collect();
    let gold: Vec<usize> = results.iter().map(|r| r.gold.index()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(resamples);
    let (mut p, mut g) = (vec![0; n], vec![0; n]);
    for _ in 0..resamples {
        for j in 0..n {
            let i = rng.gen_range(0..n);
            p[j] = pred[i];
            g[j] = gold[i];
        }
        stats.push(metrics::confusion(&p, &g, &StanceLabel::NAMES)?.macro_f1);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        lower: nearest_rank(&stats, alpha).min(point),
        point,
        upper: nearest_rank(&stats, 1.0 - alpha).max(point),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquareCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// Pairs A got right and B got wrong.
    pub b: usize,
    /// Pairs A got wrong and B got right.
    pub c: usize,
    pub p_value: f64,
    pub significant: bool,
    pub method: McNemarMethod,
}

pub const SIGNIFICANCE: f64 = 0.05;
pub const EXACT_BELOW: usize = 25;

/// Paired McNemar test on per-pair correctness.
pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<McNemar> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired lists differ in length: {} vs {}",
            correct_a.len(),
            correct_b.len()
        )));
    }
    let b = correct_a.iter().zip(correct_b).filter(|(a, b)| **a && !**b).count();
    let c = correct_a.iter().zip(correct_b).filter(|(a, b)| !**a && **b).count();
    let n = b + c;
    let (p_value, method) = if n == 0 {
        (1.0, McNemarMethod::ExactBinomial)
    } else if n < EXACT_BELOW {
        let dist = Binomial::new(0.5, n as u64).expect("valid binomial");
        let tail = dist.cdf(b.min(c) as u64);
        ((2.0 * tail).min(1.0), McNemarMethod::ExactBinomial)
    } else {
        let diff = (b as f64 - c as f64).abs();
        let stat = (diff - 1.0).max(0.0).powi(2) / n as f64;
        (erfc((stat / 2.0).sqrt()), McNemarMethod::ChiSquareCorrected)
    };
    Ok(McNemar {
        b,
        c,
        p_value,
        significant: p_value < SIGNIFICANCE,
        method,
    })
}

/// Unweighted Cohen's kappa over the three stance labels.
pub fn cohens_kappa(ann1: &[StanceLabel], ann2: &[StanceLabel]) -> Result<f64> {
    if ann1.len() != ann2.len() {
        return Err(Error::InvalidArgument(format!(
            "annotation lists differ in length: {} vs {}",
            ann1.len(),
            ann2.len()
        )));
    }
    if ann1.is_empty() {
        return Err(Error::Empty("no annotations".into()));
    }
    let n = ann1.len() as f64;
    let mut m1 = [0.0; 3];
    let mut m2 = [0.0; 3];
    let mut agree = 0.0;
    for (a, b) in ann1.iter().zip(ann2) {
        m1[a.index()] += 1.0;
        m2[b.index()] += 1.0;
        if a == b {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = m1.iter().zip(&m2).map(|(x, y)| (x / n) * (y / n)).sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(if po == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((po - pe) / (1.0 - pe))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    pub pairs: usize,
    pub macro_f1: f64,
    pub ci: ConfidenceInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub method_a: String,
    pub method_b: String,
    pub test: McNemar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub methods: Vec<MethodScore>,
    pub pairwise: Vec<PairwiseTest>,
}

fn sorted_pairs(results: &[EvalResult], method: &str) -> Result<Vec<EvalResult>> {
    let mut r = results.to_vec();
    r.sort_by(|a, b| (&a.user_id, &a.statement_id).cmp(&(&b.user_id, &b.statement_id)));
    if let Some(w) = r.windows(2).find(|w| w[0].user_id == w[1].user_id && w[0].statement_id == w[1].statement_id) {
        return Err(Error::DuplicateId {
            id: format!("{method}:{}/{}", w[0].user_id, w[0].statement_id),
            line: 0,
        });
    }
    Ok(r)
}

/// Macro-F1 with a bootstrap interval for each method, plus McNemar tests
/// for every method pair. All methods must cover the same pairs.
pub fn compare_methods(
    all: &BTreeMap<String, Vec<EvalResult>>,
    resamples: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    if all.is_empty() {
        return Err(Error::Empty("no methods to compare".into()));
    }
    let mut aligned: Vec<(&String, Vec<EvalResult>)> = Vec::new();
    for (method, results) in all {
        aligned.push((method, sorted_pairs(results, method)?));
    }
    let key = |r: &EvalResult| (r.user_id.clone(), r.statement_id.clone());
    let reference: BTreeSet<(String, String)> = aligned[0].1.iter().map(key).collect();
    for (method, r) in &aligned[1..] {
        let keys: BTreeSet<(String, String)> = r.iter().map(key).collect();
        if keys != reference {
            return Err(Error::PairSetMismatch {
                method: (*method).clone(),
                reference: aligned[0].0.clone(),
            });
        }
    }
    let methods = aligned
        .iter()
        .map(|(m, r)| {
            Ok(MethodScore {
                method: (*m).clone(),
                pairs: r.len(),
                macro_f1: macro_f1(r)?,
                ci: bootstrap_ci(r, resamples, CI_LEVEL, seed)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut pairwise = Vec::new();
    for i in 0..aligned.len() {
        for j in i + 1..aligned.len() {
            let a: Vec<bool> = aligned[i].1.iter().map(EvalResult::correct).collect();
            let b: Vec<bool> = aligned[j].1.iter().map(EvalResult::correct).collect();
            pairwise.push(PairwiseTest {
                method_a: aligned[i].0.clone(),
                method_b: aligned[j].0.clone(),
                test: mcnemar(&a, &b)?,
            });
        }
    }
    Ok(ComparisonReport { methods, pairwise })
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let w = self
            .methods
            .iter()
            .map(|m| m.method.len())
            .max()
            .unwrap_or(6)
            .max(8);
        let mut out = format!("{:<w$} {:>6} {:>9} {:>19}\n", "Method", "Pairs", "Macro-F1", "95% CI");
        for m in &self.methods {
            out.push_str(&format!(
                "{:<w$} {:>6} {:>9.4}   [{:.4}, {:.4}]\n",
                m.method, m.pairs, m.macro_f1, m.ci.lower, m.ci.upper
            ));
        }
        if !self.pairwise.is_empty() {
            out.push('\n');
            out.push_str(&format!(
                "{:<w$} {:<w$} {:>5} {:>5} {:>10} {:>18}\n",
                "Method A", "Method B", "b", "c", "p-value", "Significance (Y/N)"
            ));
            for p in &self.pairwise {
                out.push_str(&format!(
                    "{:<w$} {:<w$} {:>5} {:>5} {:>10.3e} {:>18}\n",
                    p.method_a,
                    p.method_b,
                    p.test.b,
                    p.test.c,
                    p.test.p_value,
                    if p.test.significant { "Y" } else { "N" }
                ));
            }
        }
        out
    }
}
