//! The single declarative config file. Every default here is the value the
//! method was run with; a config only needs to name its input files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use pillar::community::SampleSpec;
use pillar::corpus::GroupKeywords;
use pillar::embedding::EmbedderConfig;
use pillar::filter::{FilterConfig, TrainParams};
use pillar::knowledge::ChunkParams;
use pillar::llm::GatewayConfig;
use pillar::pipeline::METHODS;
use pillar::pooling::PoolingConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub graph: PathBuf,
    pub kg: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Gold stance labels, json-lines {user_id, statement_id, label}.
    #[serde(default)]
    pub gold: Option<PathBuf>,
    /// Keyword lists per statement id for the aspect baseline.
    #[serde(default)]
    pub aspects: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    /// Name sets whose co-mention overlap is counted at ingest.
    pub candidate_names: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbConfig {
    pub seeds: Vec<String>,
    pub edge_types: BTreeSet<String>,
    pub depth: usize,
    pub target_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for KbConfig {
    fn default() -> Self {
        let chunking = ChunkParams::default();
        KbConfig {
            seeds: Vec::new(),
            edge_types: BTreeSet::new(),
            depth: 3,
            target_tokens: chunking.target_tokens,
            overlap_tokens: chunking.overlap_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub theta: f64,
    pub k: usize,
    /// Borderline tweets exported for manual review.
    pub borderline: usize,
    pub train: TrainParams,
    /// Keyword groups for the before/after corpus comparison.
    pub groups: Vec<GroupKeywords>,
}

impl Default for FilterSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        FilterSection {
            theta: f.theta,
            k: f.k,
            borderline: 2000,
            train: TrainParams::default(),
            groups: Vec::new(),
        }
    }
}

impl FilterSection {
    pub fn config(&self) -> FilterConfig {
        FilterConfig {
            theta: self.theta,
            k: self.k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub resolution: f64,
    pub top_community_fraction: f64,
    pub user_fraction: f64,
    pub seed: u64,
    pub n_statement: usize,
    pub n_profile: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        let s = SampleSpec::default();
        SampleSection {
            resolution: 1.0,
            top_community_fraction: s.top_community_fraction,
            user_fraction: s.user_fraction,
            seed: s.seed,
            n_statement: 50,
            n_profile: 100,
        }
    }
}

impl SampleSection {
    pub fn spec(&self) -> SampleSpec {
        SampleSpec {
            top_community_fraction: self.top_community_fraction,
            user_fraction: self.user_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatementSection {
    pub sim_threshold: f64,
    /// How many statements to keep when no selection file is given.
    pub count: usize,
    /// Json list of statement ids picked by a domain expert.
    pub selection: Option<PathBuf>,
}

impl Default for StatementSection {
    fn default() -> Self {
        StatementSection {
            sim_threshold: 0.85,
            count: 15,
            selection: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptFiles {
    pub generate: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub summarize: Option<PathBuf>,
    pub evaluate: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub methods: Vec<String>,
    pub seed: u64,
    pub resamples: usize,
    pub rag_top: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            methods: METHODS.iter().map(|m| m.to_string()).collect(),
            seed: 123,
            resamples: pillar::evaluation::BOOTSTRAP_RESAMPLES,
            rag_top: pillar::profiling::RAG_TOP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSection {
    /// Json file with bearer tokens, see the annotation crate.
    pub access: Option<PathBuf>,
    /// Journal directory; defaults to `<output>/annotation`.
    pub journal: Option<PathBuf>,
    pub bind: String,
    pub batch: String,
    pub primaries: [String; 2],
    pub adjudicator: String,
    pub daily_cap: usize,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        AnnotationSection {
            access: None,
            journal: None,
            bind: "127.0.0.1:8080".into(),
            batch: "main".into(),
            primaries: ["annotator_1".into(), "annotator_2".into()],
            adjudicator: "annotator_3".into(),
            daily_cap: pillar_annotate::DAILY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub corpus: CorpusSettings,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub kb: KbConfig,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub pooling: PoolingConfig,
    #[serde(default)]
    pub statements: StatementSection,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub prompts: PromptFiles,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub annotation: AnnotationSection,
}

/// A parsed config plus the directory its relative paths resolve against.
pub struct Loaded {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output(&self) -> PathBuf {
        self.resolve(&self.config.paths.output)
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let config: PipelineConfig = toml::from_str(&raw).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    let loaded = Loaded { config, base };
    validate(&loaded)?;
    Ok(loaded)
}

fn validate(l: &Loaded) -> Result<(), CliError> {
    let c = &l.config;
    let check = |r: pillar::Result<()>| r.map_err(|e| invalid(e.to_string()));
    check(c.embedder.validate())?;
    check(c.filter.config().validate())?;
    check(c.sample.spec().validate())?;
    check(c.pooling.validate())?;
    check(c.gateway.validate())?;
    if c.kb.seeds.is_empty() {
        return Err(invalid("kb.seeds is empty"));
    }
    if c.kb.target_tokens == 0 || c.kb.overlap_tokens >= c.kb.target_tokens {
        return Err(invalid("kb.overlap_tokens must be below kb.target_tokens"));
    }
    if !(c.sample.resolution > 0.0) {
        return Err(invalid("sample.resolution must be positive"));
    }
    if c.sample.n_statement == 0 || c.sample.n_profile == 0 {
        return Err(invalid("sample.n_statement and sample.n_profile must be positive"));
    }
    if !(c.statements.sim_threshold > 0.0 && c.statements.sim_threshold < 1.0) {
        return Err(invalid("statements.sim_threshold must lie in (0, 1)"));
    }
    if c.statements.count == 0 {
        return Err(invalid("statements.count must be positive"));
    }
    if c.evaluation.methods.is_empty() {
        return Err(invalid("evaluation.methods is empty"));
    }
    for m in &c.evaluation.methods {
        if !METHODS.contains(&m.as_str()) {
            return Err(invalid(format!("unknown evaluation method `{m}`; known: {}", METHODS.join(", "))));
        }
    }
    if c.evaluation.resamples == 0 {
        return Err(invalid("evaluation.resamples must be positive"));
    }
    let a = &c.annotation;
    if a.primaries[0] == a.primaries[1] || a.primaries.contains(&a.adjudicator) {
        return Err(invalid("annotation.primaries and annotation.adjudicator must be distinct"));
    }
    Ok(())
}

/// Fails with a validation error when a configured input file is absent.
pub fn require_file(l: &Loaded, p: &Path, what: &str) -> Result<PathBuf, CliError> {
    let full = l.resolve(p);
    if !full.is_file() {
        return Err(invalid(format!("{what} file {} does not exist", full.display())));
    }
    Ok(full)
}
