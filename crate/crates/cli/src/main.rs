//! `pipeline`: run the profiling pipeline one stage at a time.

mod config;
mod error;
mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use pillar::corpus::Tweet;
use pillar::pooling::UserPool;
use pillar::profiling::StanceStatement;
use pillar::synth::{self, SynthSpec};
use pillar_annotate::{router, AccessConfig, AppState, PoolTweet, Store, SystemClock};

use crate::config::Loaded;
use crate::error::{io_err, CliError};
use crate::stages::{read_json, read_jsonl, write_json, Runner, Stage, Status};

#[derive(Parser)]
#[command(name = "pipeline", version, about = "Domain-filtered stance profiling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Rerun even when inputs and settings are unchanged.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize the corpus and retweet graph.
    Ingest(StageArgs),
    /// Expand the seed entities and chunk their documents.
    Kb(StageArgs),
    /// Label tweets by distance to the knowledge base and train the classifier.
    Filter(StageArgs),
    /// Detect communities and sample statement and profile users.
    Sample(StageArgs),
    /// Build each sampled user's tweet pool.
    Pool(StageArgs),
    /// Generate, deduplicate and curate stance statements.
    Statements(StageArgs),
    /// Write grounded profiles for the profile users.
    Profile(StageArgs),
    /// Answer every (user, statement) pair with each context method.
    Evaluate(StageArgs),
    /// Compare methods with bootstrap intervals.
    Report(StageArgs),
    /// Run every stage in order, skipping those already up to date.
    All {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Serve the annotation API for the profile users and curated statements.
    ServeAnnotation {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `annotation.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Write the adjudicated gold labels of a finished batch.
    ExportGold {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<output>/gold.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic corpus, knowledge graph and ready-to-run config.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        /// A larger world: 100 profiled users, 15 statements, full pools.
        #[arg(long)]
        full_scale: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => single(Stage::Ingest, a),
        Command::Kb(a) => single(Stage::Kb, a),
        Command::Filter(a) => single(Stage::Filter, a),
        Command::Sample(a) => single(Stage::Sample, a),
        Command::Pool(a) => single(Stage::Pool, a),
        Command::Statements(a) => single(Stage::Statements, a),
        Command::Profile(a) => single(Stage::Profile, a),
        Command::Evaluate(a) => single(Stage::Evaluate, a),
        Command::Report(a) => single(Stage::Report, a),
        Command::All { config, force } => {
            let loaded = config::load(&config)?;
            run_stages(&loaded, &Stage::ALL, force)
        }
        Command::ServeAnnotation { config, bind } => {
            let loaded = config::load(&config)?;
            serve_annotation(&loaded, bind)
        }
        Command::ExportGold { config, out } => {
            let loaded = config::load(&config)?;
            export_gold(&loaded, out)
        }
        Command::Synth { dir, full_scale } => write_synth(&dir, full_scale),
    }
}

fn single(stage: Stage, args: StageArgs) -> Result<(), CliError> {
    let loaded = config::load(&args.config)?;
    run_stages(&loaded, &[stage], args.force)
}

fn run_stages(loaded: &Loaded, stages: &[Stage], force: bool) -> Result<(), CliError> {
    let runner = Runner {
        loaded,
        out: loaded.output(),
        force,
    };
    for stage in stages {
        match runner.run(*stage)? {
            Status::Ran(summary) => println!("{}: done ({summary})", stage.name()),
            Status::Skipped => println!("{}: skipped (up to date)", stage.name()),
        }
    }
    Ok(())
}

fn journal_dir(loaded: &Loaded) -> PathBuf {
    match &loaded.config.annotation.journal {
        Some(p) => loaded.resolve(p),
        None => loaded.output().join("annotation"),
    }
}

fn open_store(loaded: &Loaded) -> Result<Store, CliError> {
    Ok(Store::open(&journal_dir(loaded), loaded.config.annotation.daily_cap)?)
}

fn serve_annotation(loaded: &Loaded, bind: Option<String>) -> Result<(), CliError> {
    let a = &loaded.config.annotation;
    let access_path = a
        .access
        .as_ref()
        .ok_or_else(|| CliError::Validation("serve-annotation needs annotation.access".into()))?;
    let access = AccessConfig::load(&config::require_file(loaded, access_path, "annotation access")?)
        .map_err(|e| CliError::Validation(e.to_string()))?;

    let mut store = open_store(loaded)?;
    if !store.batches().contains(&a.batch) {
        let runner = Runner {
            loaded,
            out: loaded.output(),
            force: false,
        };
        if let Some(missing) = runner.missing_upstream(Stage::Profile) {
            return Err(CliError::Upstream {
                stage: "serve-annotation".into(),
                requires: missing.name().into(),
            });
        }
        let out = loaded.output();
        let tweets: Vec<Tweet> = read_jsonl(&out.join("filter").join("domain.jsonl"))?;
        let by_id: BTreeMap<&str, &Tweet> = tweets.iter().map(|t| (t.id.as_str(), t)).collect();
        let user_pools: Vec<UserPool> = read_jsonl(&out.join("pool").join("profile_pools.jsonl"))?;
        let statements: Vec<StanceStatement> = read_json(&out.join("statements").join("statements.json"))?;
        let mut pools = BTreeMap::new();
        let mut pairs = Vec::new();
        for p in &user_pools {
            let pool = p
                .tweet_ids
                .iter()
                .map(|id| {
                    let t = by_id
                        .get(id.as_str())
                        .ok_or_else(|| CliError::Runtime(format!("pool tweet {id} is not a domain tweet")))?;
                    Ok(PoolTweet {
                        id: t.id.clone(),
                        text: t.text.clone(),
                        created_at: t.created_at,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            pools.insert(p.user_id.clone(), pool);
            for s in &statements {
                pairs.push((p.user_id.clone(), s.clone()));
            }
        }
        let primaries = [a.primaries[0].as_str(), a.primaries[1].as_str()];
        let tasks = store.create_batch(&a.batch, &pairs, &pools, primaries, &a.adjudicator)?;
        println!("created batch {} with {} pairs, {} tasks", a.batch, pairs.len(), tasks.len());
    }

    let addr = bind.unwrap_or_else(|| a.bind.clone());
    let ui_dir = access.ui_dir.as_ref().map(|p| loaded.resolve(p));
    let state = AppState::new(store, access.tokens, Arc::new(SystemClock));
    let app = router(state, ui_dir.as_deref());
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("listening on http://{local}");
        pillar_annotate::serve(listener, app)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

fn export_gold(loaded: &Loaded, out: Option<PathBuf>) -> Result<(), CliError> {
    let store = open_store(loaded)?;
    let report = store.export_gold(&loaded.config.annotation.batch)?;
    let path = out.unwrap_or_else(|| loaded.output().join("gold.jsonl"));
    fs::write(&path, report.gold_jsonl()).map_err(|e| io_err(&path, e))?;
    println!(
        "{} pairs, {} agreements, {} adjudicated, kappa {:.4}; wrote {}",
        report.pairs,
        report.agreements,
        report.adjudicated,
        report.kappa,
        path.display()
    );
    Ok(())
}

fn write_synth(dir: &Path, full_scale: bool) -> Result<(), CliError> {
    let spec = if full_scale { SynthSpec::full_scale() } else { SynthSpec::default() };
    let (n_statement, n_profile) = if full_scale { (50, 100) } else { (10, 20) };
    let world = synth::generate(&spec)?;
    world.write(dir)?;
    let seeds = world
        .seed_entities
        .iter()
        .map(|s| format!("\"{s}\""))
        .collect::<Vec<_>>()
        .join(", ");
    let toml = format!(
        r#"[paths]
corpus = "tweets.jsonl"
graph = "retweets.jsonl"
kg = "kg.jsonl"
output = "out"
gold = "gold.jsonl"
aspects = "aspects.json"

[embedder]
provider = "hashing"
dim = 1024

[kb]
seeds = [{seeds}]
edge_types = ["main_subject", "position_held"]
depth = 2

[sample]
n_statement = {n_statement}
n_profile = {n_profile}

[statements]
selection = "selection.json"

[gateway]
provider = "mock"
model = "mock"
rule_file = "mock_rules.json"

[annotation]
access = "annotators.json"
"#
    );
    let path = dir.join("pipeline.toml");
    fs::write(&path, toml).map_err(|e| io_err(&path, e))?;
    let tokens: BTreeMap<&str, &str> = [
        ("demo-token-1", "annotator_1"),
        ("demo-token-2", "annotator_2"),
        ("demo-token-3", "annotator_3"),
    ]
    .into();
    write_json(&dir.join("annotators.json"), &serde_json::json!({ "tokens": tokens }))?;
    println!(
        "wrote {} tweets from {} users to {}",
        world.tweets.len(),
        world.users.len(),
        dir.display()
    );
    Ok(())
}
