//! Stage bodies and the runner that decides whether a stage is up to date.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pillar::corpus::{candidate_overlap, filter_deltas, Corpus, InputFormat, RetweetGraph, Tweet};
use pillar::embedding::{Embedder, Vector};
use pillar::evaluation::{compare_methods, confusion, EvalResult, GoldLabels};
use pillar::filter::select_borderline;
use pillar::knowledge::{read_chunks, write_chunks, ChunkParams, KgSnapshot};
use pillar::llm::{templates, AuditedGateway, Gateway, PromptTemplate};
use pillar::pipeline::*;
use pillar::pooling::UserPool;
use pillar::profiling::StanceStatement;
use pillar::retrieval::{load_aspects, AspectSpec};
use pillar::synth::GoldRecord;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{require_file, Loaded};
use crate::error::{io_err, CliError};
use crate::manifest::{sha256_bytes, sha256_file, FileDigest, Manifest};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Kb,
    Filter,
    Sample,
    Pool,
    Statements,
    Profile,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Kb,
        Stage::Filter,
        Stage::Sample,
        Stage::Pool,
        Stage::Statements,
        Stage::Profile,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Kb => "kb",
            Stage::Filter => "filter",
            Stage::Sample => "sample",
            Stage::Pool => "pool",
            Stage::Statements => "statements",
            Stage::Profile => "profile",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Stages whose artifacts this one reads, in pipeline order.
    pub fn requires(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Ingest | Kb => &[],
            Filter => &[Ingest, Kb],
            Sample => &[Ingest, Filter],
            Pool => &[Filter, Sample],
            Statements => &[Filter, Pool],
            Profile => &[Filter, Pool, Statements],
            Evaluate => &[Filter, Statements, Profile],
            Report => &[Filter, Evaluate],
        }
    }
}

pub enum Status {
    Ran(String),
    Skipped,
}

struct Produced {
    files: Vec<String>,
    summary: String,
}

pub struct Runner<'a> {
    pub loaded: &'a Loaded,
    pub out: PathBuf,
    pub force: bool,
}

fn rt<T>(r: pillar::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, body).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| io_err(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| CliError::Runtime(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let body = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&body).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitFile {
    sampled: Vec<String>,
    dropped: Vec<String>,
    statement: Vec<String>,
    profile: Vec<String>,
    clusters: usize,
}

/// Domain tweets with their texts and embeddings.
pub struct Domain {
    pub texts: HashMap<String, String>,
    pub vectors: HashMap<String, Vector>,
    pub by_user: BTreeMap<String, Embedded>,
}

impl<'a> Runner<'a> {
    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    fn artifact(&self, stage: Stage, file: &str) -> PathBuf {
        self.stage_dir(stage).join(file)
    }

    /// The first required stage without a manifest, if any.
    pub fn missing_upstream(&self, stage: Stage) -> Option<Stage> {
        stage
            .requires()
            .iter()
            .copied()
            .find(|r| Manifest::read(&self.stage_dir(*r)).is_none())
    }

    fn settings(&self, stage: Stage) -> Value {
        let c = &self.loaded.config;
        match stage {
            Stage::Ingest => json!({"corpus": c.corpus}),
            Stage::Kb => json!({"embedder": c.embedder, "kb": c.kb}),
            Stage::Filter => json!({"embedder": c.embedder, "filter": c.filter}),
            Stage::Sample => json!({"embedder": c.embedder, "sample": c.sample}),
            Stage::Pool => json!({"embedder": c.embedder, "pooling": c.pooling}),
            Stage::Statements => json!({"embedder": c.embedder, "statements": c.statements, "gateway": c.gateway}),
            Stage::Profile => json!({
                "embedder": c.embedder,
                "gateway": c.gateway,
                "rag_top": c.evaluation.rag_top,
                "prompts": c.prompts,
            }),
            Stage::Evaluate => json!({
                "embedder": c.embedder,
                "gateway": c.gateway,
                "methods": c.evaluation.methods,
                "seed": c.evaluation.seed,
                "prompts": c.prompts,
            }),
            Stage::Report => json!({"resamples": c.evaluation.resamples, "seed": c.evaluation.seed}),
        }
    }

    /// Raw files a stage reads, keyed by the path as written in the config.
    fn raw_inputs(&self, stage: Stage) -> Result<Vec<(String, PathBuf)>, CliError> {
        let c = &self.loaded.config;
        let mut out = Vec::new();
        let mut add = |p: &Path, what: &str| -> Result<(), CliError> {
            let full = require_file(self.loaded, p, what)?;
            out.push((p.display().to_string(), full));
            Ok(())
        };
        let rules = c.gateway.rule_file.clone();
        match stage {
            Stage::Ingest => {
                add(&c.paths.corpus, "corpus")?;
                add(&c.paths.graph, "retweet graph")?;
            }
            Stage::Kb => add(&c.paths.kg, "knowledge graph")?,
            Stage::Statements => {
                if let Some(p) = &c.statements.selection {
                    add(p, "statement selection")?;
                }
                if let Some(p) = &c.prompts.generate {
                    add(p, "generation prompt")?;
                }
                if let Some(p) = &rules {
                    add(p, "mock rule")?;
                }
            }
            Stage::Profile => {
                for p in [&c.prompts.profile, &c.prompts.summarize].into_iter().flatten() {
                    add(p, "prompt")?;
                }
                if let Some(p) = &rules {
                    add(p, "mock rule")?;
                }
            }
            Stage::Evaluate => {
                let gold = c
                    .paths
                    .gold
                    .as_ref()
                    .ok_or_else(|| CliError::Validation("evaluate needs paths.gold".into()))?;
                add(gold, "gold label")?;
                if let Some(p) = &c.paths.aspects {
                    add(p, "aspect")?;
                }
                if let Some(p) = &c.prompts.evaluate {
                    add(p, "evaluation prompt")?;
                }
                if let Some(p) = &rules {
                    add(p, "mock rule")?;
                }
            }
            Stage::Filter | Stage::Sample | Stage::Pool | Stage::Report => {}
        }
        Ok(out)
    }

    pub fn run(&self, stage: Stage) -> Result<Status, CliError> {
        if let Some(req) = self.missing_upstream(stage) {
            return Err(CliError::Upstream {
                stage: stage.name().into(),
                requires: req.name().into(),
            });
        }
        let mut inputs = Vec::new();
        for (shown, full) in self.raw_inputs(stage)? {
            inputs.push(FileDigest {
                path: shown,
                sha256: sha256_file(&full)?,
            });
        }
        for req in stage.requires() {
            let dir = self.stage_dir(*req);
            let m = Manifest::read(&dir).expect("checked above");
            for f in m.outputs {
                inputs.push(FileDigest {
                    path: format!("{}/{}", req.name(), f.path),
                    sha256: sha256_file(&dir.join(&f.path))?,
                });
            }
        }
        let settings = json!({"stage": stage.name(), "version": VERSION, "settings": self.settings(stage)});
        let config_sha256 = sha256_bytes(settings.to_string().as_bytes());

        let dir = self.stage_dir(stage);
        if !self.force {
            if let Some(m) = Manifest::read(&dir) {
                if m.config_sha256 == config_sha256 && m.inputs == inputs && m.version == VERSION && m.outputs_intact(&dir) {
                    return Ok(Status::Skipped);
                }
            }
        }
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

        let produced = match stage {
            Stage::Ingest => self.ingest(&dir)?,
            Stage::Kb => self.kb(&dir)?,
            Stage::Filter => self.filter(&dir)?,
            Stage::Sample => self.sample(&dir)?,
            Stage::Pool => self.pool(&dir)?,
            Stage::Statements => self.statements(&dir)?,
            Stage::Profile => self.profile(&dir)?,
            Stage::Evaluate => self.evaluate(&dir)?,
            Stage::Report => self.report(&dir)?,
        };
        let mut outputs = Vec::new();
        for f in produced.files {
            outputs.push(FileDigest {
                sha256: sha256_file(&dir.join(&f))?,
                path: f,
            });
        }
        Manifest {
            stage: stage.name().into(),
            version: VERSION.into(),
            config_sha256,
            inputs,
            outputs,
        }
        .write(&dir)?;
        Ok(Status::Ran(produced.summary))
    }

    fn embedder(&self) -> Result<Box<dyn Embedder>, CliError> {
        rt(self.loaded.config.embedder.build())
    }

    fn gateway(&self) -> Result<AuditedGateway<Box<dyn Gateway>>, CliError> {
        let inner = self
            .loaded
            .config
            .gateway
            .build(&self.loaded.base)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(AuditedGateway::new(inner))
    }

    fn template(&self, file: &Option<PathBuf>, bundled: fn() -> PromptTemplate, vars: &[&str]) -> Result<PromptTemplate, CliError> {
        match file {
            Some(p) => PromptTemplate::load(&self.loaded.resolve(p), vars).map_err(|e| CliError::Validation(e.to_string())),
            None => Ok(bundled()),
        }
    }

    pub fn load_domain(&self, embedder: &dyn Embedder) -> Result<Domain, CliError> {
        let tweets: Vec<Tweet> = read_jsonl(&self.artifact(Stage::Filter, "domain.jsonl"))?;
        let items = rt(embed_tweets(&tweets, embedder))?;
        let vectors: HashMap<String, Vector> = items.into_iter().collect();
        let ids: BTreeSet<String> = tweets.iter().map(|t| t.id.clone()).collect();
        let by_user = rt(domain_items_by_user(&tweets, &vectors, &ids))?;
        let texts = tweets.iter().map(|t| (t.id.clone(), t.text.clone())).collect();
        Ok(Domain {
            texts,
            vectors,
            by_user,
        })
    }

    fn ingest(&self, dir: &Path) -> Result<Produced, CliError> {
        let c = &self.loaded.config;
        let corpus_path = self.loaded.resolve(&c.paths.corpus);
        let corpus = rt(Corpus::ingest(&corpus_path, InputFormat::from_path(&corpus_path)))?;
        let graph = rt(RetweetGraph::load(&self.loaded.resolve(&c.paths.graph)))?;
        rt(corpus.write_jsonl(&dir.join("tweets.jsonl")))?;
        rt(graph.write_jsonl(&dir.join("graph.jsonl")))?;
        let stats = corpus.stats();
        let mut files = vec!["tweets.jsonl".to_string(), "graph.jsonl".to_string(), "stats.json".to_string()];
        write_json(
            &dir.join("stats.json"),
            &json!({
                "corpus": stats,
                "graph": {"nodes": graph.nodes.len(), "edges": graph.edges.len()},
            }),
        )?;
        if c.corpus.candidate_names.len() >= 2 {
            let overlap = rt(candidate_overlap(&corpus, &c.corpus.candidate_names))?;
            write_json(&dir.join("overlap.json"), &overlap)?;
            files.push("overlap.json".into());
        }
        Ok(Produced {
            files,
            summary: format!(
                "{} tweets, {} users, {} retweet edges",
                stats.tweets,
                stats.users,
                graph.edges.len()
            ),
        })
    }

    fn kb(&self, dir: &Path) -> Result<Produced, CliError> {
        let c = &self.loaded.config;
        let kg = rt(KgSnapshot::load(&self.loaded.resolve(&c.paths.kg)))?;
        let embedder = self.embedder()?;
        let settings = KbSettings {
            seeds: c.kb.seeds.clone(),
            edge_types: c.kb.edge_types.clone(),
            depth: c.kb.depth,
            chunking: ChunkParams {
                target_tokens: c.kb.target_tokens,
                overlap_tokens: c.kb.overlap_tokens,
            },
        };
        let kb = rt(build_knowledge_base(&kg, &settings, embedder.as_ref()))?;
        rt(write_chunks(&dir.join("chunks.jsonl"), &kb.chunks))?;
        let stats = kg.stats();
        write_json(
            &dir.join("entities.json"),
            &json!({
                "snapshot": stats,
                "entities": kb.entities,
                "without_document": kb.missing,
                "chunks": kb.chunks.len(),
            }),
        )?;
        Ok(Produced {
            files: vec!["chunks.jsonl".into(), "entities.json".into()],
            summary: format!(
                "{} entities, {} chunks (snapshot: {stats})",
                kb.entities.len(),
                kb.chunks.len()
            ),
        })
    }

    fn filter(&self, dir: &Path) -> Result<Produced, CliError> {
        let c = &self.loaded.config;
        let tweets: Vec<Tweet> = read_jsonl(&self.artifact(Stage::Ingest, "tweets.jsonl"))?;
        let chunks = rt(read_chunks(&self.artifact(Stage::Kb, "chunks.jsonl")))?;
        let index = rt(chunk_index(&chunks))?;
        let embedder = self.embedder()?;
        let items = rt(embed_tweets(&tweets, embedder.as_ref()))?;
        let cfg = c.filter.config();
        let f = rt(run_filter(&items, &index, &cfg, &c.filter.train))?;

        write_jsonl(&dir.join("labels.jsonl"), &f.labels)?;
        let borderline = select_borderline(f.labels.clone(), &cfg, c.filter.borderline);
        write_jsonl(&dir.join("borderline.jsonl"), &borderline)?;
        write_json(&dir.join("distance_report.json"), &f.report)?;
        write_text(&dir.join("distance_report.txt"), &f.report.to_text())?;
        write_json(&dir.join("classifier.json"), &f.classifier)?;
        let cls = &f.classifier;
        write_text(
            &dir.join("classifier.txt"),
            &format!(
                "train examples {}, accuracy {:.4}\nvalidation examples {}, accuracy {:.4}\n\n{}",
                cls.train_size,
                cls.train_accuracy,
                cls.validation_size,
                cls.validation_accuracy,
                cls.validation.to_table()
            ),
        )?;
        write_jsonl(&dir.join("decisions.jsonl"), &f.decisions)?;
        let domain: Vec<&Tweet> = tweets.iter().filter(|t| f.domain.contains(&t.id)).collect();
        write_jsonl(&dir.join("domain.jsonl"), domain.iter().copied())?;

        let mut files: Vec<String> = [
            "labels.jsonl",
            "borderline.jsonl",
            "distance_report.json",
            "distance_report.txt",
            "classifier.json",
            "classifier.txt",
            "decisions.jsonl",
            "domain.jsonl",
        ]
        .map(String::from)
        .to_vec();
        if !c.filter.groups.is_empty() {
            let before = rt(Corpus::from_tweets(tweets.clone()))?;
            let after = before.retain(|t| f.domain.contains(&t.id));
            let deltas = rt(filter_deltas(&before, &after, &c.filter.groups))?;
            write_json(&dir.join("deltas.json"), &deltas)?;
            write_text(&dir.join("deltas.txt"), &deltas.to_table())?;
            files.extend(["deltas.json".to_string(), "deltas.txt".to_string()]);
        }
        Ok(Produced {
            files,
            summary: format!(
                "{} domain / {} non-domain / {} borderline by distance; classifier keeps {} of {} tweets",
                f.report.domain,
                f.report.non_domain,
                f.report.borderline,
                f.domain.len(),
                tweets.len()
            ),
        })
    }

    fn sample(&self, dir: &Path) -> Result<Produced, CliError> {
        let c = &self.loaded.config;
        let graph = rt(RetweetGraph::load(&self.artifact(Stage::Ingest, "graph.jsonl")))?;
        let embedder = self.embedder()?;
        let domain = self.load_domain(embedder.as_ref())?;
        let s = rt(run_sample(
            &graph,
            &domain.by_user,
            &SampleSettings {
                resolution: c.sample.resolution,
                spec: c.sample.spec(),
                n_statement: c.sample.n_statement,
                n_profile: c.sample.n_profile,
            },
        ))?;
        write_json(&dir.join("partition.json"), &s.partition)?;
        let split = SplitFile {
            sampled: s.sampled.clone(),
            dropped: s.dropped.clone(),
            statement: s.split.statement.clone(),
            profile: s.split.profile.clone(),
            clusters: s.split.clusters,
        };
        write_json(&dir.join("split.json"), &split)?;
        Ok(Produced {
            files: vec!["partition.json".into(), "split.json".into()],
            summary: format!(
                "{} communities (modularity {:.4}); {} sampled, {} without domain tweets; {} statement / {} profile users",
                s.partition.community_count(),
                s.partition.modularity,
                s.sampled.len(),
                s.dropped.len(),
                s.split.statement.len(),
                s.split.profile.len()
            ),
        })
    }

    fn pool(&self, dir: &Path) -> Result<Produced, CliError> {
        let split: SplitFile = read_json(&self.artifact(Stage::Sample, "split.json"))?;
        let embedder = self.embedder()?;
        let domain = self.load_domain(embedder.as_ref())?;
        let cfg = &self.loaded.config.pooling;
        let statement = rt(run_pools(&split.statement, &domain.by_user, cfg))?;
        let profile = rt(run_pools(&split.profile, &domain.by_user, cfg))?;
        write_jsonl(&dir.join("statement_pools.jsonl"), &statement)?;
        write_jsonl(&dir.join("profile_pools.jsonl"), &profile)?;
        let largest = statement.iter().chain(&profile).map(|p| p.tweet_ids.len()).max().unwrap_or(0);
        Ok(Produced {
            files: vec!["statement_pools.jsonl".into(), "profile_pools.jsonl".into()],
            summary: format!(
                "{} statement pools, {} profile pools, largest {largest} tweets",
                statement.len(),
                profile.len()
            ),
        })
    }

    fn statements(&self, dir: &Path) -> Result<Produced, CliError> {
        let c = &self.loaded.config;
        let pools: Vec<UserPool> = read_jsonl(&self.artifact(Stage::Pool, "statement_pools.jsonl"))?;
        let embedder = self.embedder()?;
        let domain = self.load_domain(embedder.as_ref())?;
        let gateway = self.gateway()?;
        let template = self.template(&c.prompts.generate, templates::generate, templates::GENERATE_VARS)?;
        let selection: Option<Vec<String>> = match &c.statements.selection {
            Some(p) => Some(read_json(&self.loaded.resolve(p))?),
            None => None,
        };
        let curation = match &selection {
            Some(ids) => Curation::Ids(ids),
            None => Curation::First(c.statements.count),
        };
        let out = rt(run_statements(
            &pools,
            &domain.texts,
            &gateway,
            embedder.as_ref(),
            &StatementSettings {
                template: &template,
                model: &c.gateway.model,
                sim_threshold: c.statements.sim_threshold,
                curation,
            },
        ))?;
        write_json(
            &dir.join("generated.json"),
            &json!({
                "raw": out.generation.raw,
                "calls": out.generation.calls,
                "skipped_batches": out.generation.skipped_batches,
            }),
        )?;
        write_json(&dir.join("deduped.json"), &out.deduped)?;
        write_json(&dir.join("statements.json"), &out.curated)?;
        rt(gateway.write_jsonl(&dir.join("audit.jsonl")))?;
        Ok(Produced {
            files: vec![
                "generated.json".into(),
                "deduped.json".into(),
                "statements.json".into(),
                "audit.jsonl".into(),
            ],
            summary: format!(
                "{} raw claims from {} calls, {} after dedup, {} kept",
                out.generation.raw.len(),
                out.generation.calls,
                out.deduped.len(),
                out.curated.len()
            ),
        })
    }

    fn statement_vectors(&self, embedder: &dyn Embedder) -> Result<Vec<(StanceStatement, Vector)>, CliError> {
        let statements: Vec<StanceStatement> = read_json(&self.artifact(Stage::Statements, "statements.json"))?;
        statements
            .into_iter()
            .map(|s| {
                let v = rt(embedder.embed(&s.text))?;
                Ok((s, v))
            })
            .collect()
    }

    fn profile(&self, dir: &Path) -> Result<Produced, CliError> {
        let c = &self.loaded.config;
        let pools: Vec<UserPool> = read_jsonl(&self.artifact(Stage::Pool, "profile_pools.jsonl"))?;
        let embedder = self.embedder()?;
        let domain = self.load_domain(embedder.as_ref())?;
        let statements = self.statement_vectors(embedder.as_ref())?;
        let gateway = self.gateway()?;
        let profile_tpl = self.template(&c.prompts.profile, templates::profile, templates::PROFILE_VARS)?;
        let summarize_tpl = self.template(&c.prompts.summarize, templates::summarize, templates::SUMMARIZE_VARS)?;
        let bundles = rt(run_profiles(
            &pools,
            &domain.texts,
            &domain.vectors,
            &statements,
            &ProfileTemplates {
                profile: &profile_tpl,
                summarize: &summarize_tpl,
            },
            &gateway,
            &c.gateway.model,
            c.evaluation.rag_top,
            c.gateway.max_in_flight,
        ))?;
        write_jsonl(&dir.join("profiles.jsonl"), &bundles)?;
        let violations: usize = bundles.iter().map(|b| b.groundedness.violations()).sum();
        let flagged: usize = bundles.iter().map(|b| b.groundedness.flagged.len()).sum();
        let failed: usize = bundles.iter().map(|b| b.groundedness.failed.len()).sum();
        write_json(
            &dir.join("groundedness.json"),
            &json!({
                "users": bundles.len(),
                "dropped_citations": violations,
                "entries_without_citation": flagged,
                "failed_calls": failed,
                "per_user": bundles.iter().map(|b| &b.groundedness).collect::<Vec<_>>(),
            }),
        )?;
        rt(gateway.write_jsonl(&dir.join("audit.jsonl")))?;
        Ok(Produced {
            files: vec!["profiles.jsonl".into(), "groundedness.json".into(), "audit.jsonl".into()],
            summary: format!(
                "{} users x {} statements; {violations} dropped citations, {flagged} entries without evidence, {} gateway calls",
                bundles.len(),
                statements.len(),
                gateway.call_count()
            ),
        })
    }

    fn evaluate(&self, dir: &Path) -> Result<Produced, CliError> {
        let c = &self.loaded.config;
        let bundles: Vec<ProfileBundle> = read_jsonl(&self.artifact(Stage::Profile, "profiles.jsonl"))?;
        let embedder = self.embedder()?;
        let domain = self.load_domain(embedder.as_ref())?;
        let statements = self.statement_vectors(embedder.as_ref())?;
        let aspects: Vec<AspectSpec> = match &c.paths.aspects {
            Some(p) => rt(load_aspects(&self.loaded.resolve(p)))?,
            None => Vec::new(),
        };
        let gold_path = self.loaded.resolve(c.paths.gold.as_ref().expect("checked in raw_inputs"));
        let gold: GoldLabels = read_jsonl::<GoldRecord>(&gold_path)?
            .into_iter()
            .map(|g| ((g.user_id, g.statement_id), g.label))
            .collect();
        let gateway = self.gateway()?;
        let template = self.template(&c.prompts.evaluate, templates::evaluate, templates::EVALUATE_VARS)?;
        let inputs = ContextInputs {
            bundles: &bundles,
            statements: &statements,
            domain_items: &domain.by_user,
            texts: &domain.texts,
            aspects: &aspects,
            seed: c.evaluation.seed,
        };
        let results = rt(run_evaluation(
            &c.evaluation.methods,
            &inputs,
            &gold,
            &template,
            &gateway,
            &c.gateway.model,
            c.gateway.max_in_flight,
        ))?;
        let expected = bundles.len() * statements.len();
        for (m, r) in &results {
            if r.len() != expected {
                return Err(CliError::Runtime(format!(
                    "method {m} covers {} of {expected} pairs",
                    r.len()
                )));
            }
        }
        write_jsonl(&dir.join("results.jsonl"), results.values().flatten())?;
        rt(gateway.write_jsonl(&dir.join("audit.jsonl")))?;
        let transport: usize = results.values().flatten().filter(|r| r.transport_error).count();
        Ok(Produced {
            files: vec!["results.jsonl".into(), "audit.jsonl".into()],
            summary: format!(
                "{} methods x {expected} pairs, {transport} transport errors",
                results.len()
            ),
        })
    }

    fn report(&self, dir: &Path) -> Result<Produced, CliError> {
        let c = &self.loaded.config;
        let results: Vec<EvalResult> = read_jsonl(&self.artifact(Stage::Evaluate, "results.jsonl"))?;
        let mut by_method: BTreeMap<String, Vec<EvalResult>> = BTreeMap::new();
        for r in results {
            by_method.entry(r.method.clone()).or_default().push(r);
        }
        let cmp = rt(compare_methods(&by_method, c.evaluation.resamples, c.evaluation.seed))?;
        write_text(&dir.join("comparison.json"), &(cmp.to_json() + "\n"))?;
        write_text(&dir.join("comparison.txt"), &cmp.to_table())?;
        let mut confusions = String::new();
        for (m, r) in &by_method {
            confusions.push_str(&format!("== {m}\n{}\n", rt(confusion(r))?.to_table()));
        }
        write_text(&dir.join("confusion.txt"), &confusions)?;

        let read = |f: &str| fs::read_to_string(self.artifact(Stage::Filter, f)).map_err(|e| io_err(Path::new(f), e));
        let summary = format!(
            "Domain filter: mean distance to nearest chunks\n\n{}\nDistilled classifier\n\n{}\nStance QA\n\n{}",
            read("distance_report.txt")?,
            read("classifier.txt")?,
            cmp.to_table()
        );
        write_text(&dir.join("summary.txt"), &summary)?;
        let best = cmp
            .methods
            .iter()
            .max_by(|a, b| a.macro_f1.total_cmp(&b.macro_f1).then_with(|| b.method.cmp(&a.method)))
            .expect("at least one method");
        Ok(Produced {
            files: vec![
                "comparison.json".into(),
                "comparison.txt".into(),
                "confusion.txt".into(),
                "summary.txt".into(),
            ],
            summary: format!("best macro-F1 {:.4} ({})", best.macro_f1, best.method),
        })
    }
}
