//! Task state, the label journal and the agreement rules.
//!
//! Every mutation is first validated, then appended to `journal.jsonl`, then
//! applied. Opening a directory loads `snapshot.json` when it is present and
//! consistent with the journal and replays the remaining events. A torn last
//! line (a crash mid-append) is dropped and truncated away.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Days, NaiveDate, Utc};
use pillar::evaluation::{cohens_kappa, StanceLabel};
use pillar::profiling::StanceStatement;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AnnotateError, Result};

/// Largest pool an annotator is asked to read.
pub const MAX_POOL: usize = 100;
/// Labels one annotator may submit per UTC day.
pub const DAILY_CAP: usize = 300;
/// Events between snapshot rewrites.
const SNAPSHOT_EVERY: usize = 200;

const JOURNAL: &str = "journal.jsonl";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Labeled,
    Adjudication,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskRole {
    Primary,
    Adjudication,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTweet {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

/// A task as handed to an annotator. Adjudication tasks carry no primary labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub batch: String,
    pub user_id: String,
    pub statement: StanceStatement,
    pub pool_tweets: Vec<PoolTweet>,
    pub assigned_to: String,
    pub role: TaskRole,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub annotator_id: String,
    pub label: StanceLabel,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRow {
    pub user_id: String,
    pub statement_id: String,
    pub label: StanceLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportReport {
    pub batch: String,
    pub pairs: usize,
    pub agreements: usize,
    pub adjudicated: usize,
    /// Between the two primaries, before adjudication.
    pub kappa: f64,
    pub gold: Vec<GoldRow>,
}

impl ExportReport {
    pub fn gold_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.gold {
            out.push_str(&serde_json::to_string(row).expect("gold rows serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubmitOutcome {
    pub task_id: String,
    pub task_status: TaskStatus,
    pub pair_status: TaskStatus,
    pub final_label: Option<StanceLabel>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AnnotatorProgress {
    pub assigned: usize,
    pub labeled: usize,
    pub pending: usize,
    pub today: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub pairs: usize,
    pub final_pairs: usize,
    pub awaiting_primary: usize,
    pub awaiting_adjudication: usize,
    pub annotators: BTreeMap<String, AnnotatorProgress>,
}

/// Daily quota seen by one annotator at a point in time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Quota {
    pub used: usize,
    pub cap: usize,
    pub remaining: usize,
    pub resets_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PairSpec {
    user_id: String,
    statement: StanceStatement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Batch {
        batch: String,
        primaries: [String; 2],
        adjudicator: String,
        pairs: Vec<PairSpec>,
        pools: BTreeMap<String, Vec<PoolTweet>>,
    },
    Label(AnnotationRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Task {
    task_id: String,
    pair: usize,
    assigned_to: String,
    role: TaskRole,
    status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Pair {
    batch: String,
    user_id: String,
    statement: StanceStatement,
    primary_tasks: [String; 2],
    adjudicator: String,
    adjudication_task: Option<String>,
    final_label: Option<StanceLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct BatchPools {
    batch: String,
    pools: BTreeMap<String, Vec<PoolTweet>>,
}

/// Everything derivable from the journal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct State {
    pairs: Vec<Pair>,
    tasks: BTreeMap<String, Task>,
    records: BTreeMap<String, AnnotationRecord>,
    batches: Vec<BatchPools>,
    /// Pair indices per (user, statement id), in lexicographic order.
    #[serde(skip)]
    order: BTreeMap<(String, String), usize>,
    #[serde(skip)]
    daily: BTreeMap<(String, NaiveDate), usize>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    events: usize,
    state: State,
}

struct Journal {
    dir: PathBuf,
    file: File,
    events: usize,
    since_snapshot: usize,
}

pub struct Store {
    state: State,
    journal: Option<Journal>,
    daily_cap: usize,
}

/// Stable id for one annotator's task on one pair.
pub fn task_id(batch: &str, user_id: &str, statement_id: &str, annotator: &str, role: TaskRole) -> String {
    let role = match role {
        TaskRole::Primary => "primary",
        TaskRole::Adjudication => "adjudication",
    };
    let mut h = Sha256::new();
    for part in [batch, user_id, statement_id, annotator, role] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..12])
}

fn next_midnight(now: DateTime<Utc>) -> DateTime<Utc> {
    let tomorrow = now.date_naive().checked_add_days(Days::new(1)).expect("date in range");
    tomorrow.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
}

impl State {
    fn reindex(&mut self) {
        self.order = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.user_id.clone(), p.statement.id.clone()), i))
            .collect();
        self.daily.clear();
        for r in self.records.values() {
            *self.daily.entry((r.annotator_id.clone(), r.timestamp.date_naive())).or_default() += 1;
        }
    }

    fn used_on(&self, annotator: &str, day: NaiveDate) -> usize {
        self.daily.get(&(annotator.to_string(), day)).copied().unwrap_or(0)
    }

    fn check(&self, event: &Event, daily_cap: usize) -> Result<()> {
        match event {
            Event::Batch {
                batch,
                primaries,
                adjudicator,
                pairs,
                pools,
            } => {
                if batch.trim().is_empty() {
                    return Err(AnnotateError::InvalidBatch("batch name is empty".into()));
                }
                if primaries[0] == primaries[1] || primaries.contains(adjudicator) {
                    return Err(AnnotateError::InvalidBatch(format!(
                        "annotators must be three distinct ids, got {}, {} and {adjudicator}",
                        primaries[0], primaries[1]
                    )));
                }
                if primaries.iter().chain([adjudicator]).any(|a| a.trim().is_empty()) {
                    return Err(AnnotateError::InvalidBatch("annotator id is empty".into()));
                }
                let mut seen = BTreeSet::new();
                for p in pairs {
                    let key = (p.user_id.clone(), p.statement.id.clone());
                    if self.order.contains_key(&key) || !seen.insert(key) {
                        return Err(AnnotateError::DuplicatePair {
                            user_id: p.user_id.clone(),
                            statement_id: p.statement.id.clone(),
                        });
                    }
                    let pool = pools
                        .get(&p.user_id)
                        .ok_or_else(|| AnnotateError::MissingPool(p.user_id.clone()))?;
                    if pool.len() > MAX_POOL {
                        return Err(AnnotateError::PoolTooLarge {
                            user_id: p.user_id.clone(),
                            size: pool.len(),
                        });
                    }
                }
                Ok(())
            }
            Event::Label(record) => {
                let task = self
                    .tasks
                    .get(&record.task_id)
                    .ok_or_else(|| AnnotateError::UnknownTask(record.task_id.clone()))?;
                if task.assigned_to != record.annotator_id {
                    return Err(AnnotateError::WrongAnnotator {
                        task_id: record.task_id.clone(),
                        annotator: record.annotator_id.clone(),
                    });
                }
                if task.status != TaskStatus::Pending {
                    return Err(AnnotateError::AlreadyLabeled(record.task_id.clone()));
                }
                let used = self.used_on(&record.annotator_id, record.timestamp.date_naive());
                if used >= daily_cap {
                    return Err(AnnotateError::DailyCap {
                        annotator: record.annotator_id.clone(),
                        cap: daily_cap,
                        resets_at: next_midnight(record.timestamp),
                    });
                }
                Ok(())
            }
        }
    }

    /// Applies a checked event.
    fn apply(&mut self, event: Event) {
        match event {
            Event::Batch {
                batch,
                primaries,
                adjudicator,
                pairs,
                pools,
            } => {
                for p in pairs {
                    let index = self.pairs.len();
                    let primary_tasks = primaries
                        .clone()
                        .map(|a| task_id(&batch, &p.user_id, &p.statement.id, &a, TaskRole::Primary));
                    for (id, annotator) in primary_tasks.iter().zip(&primaries) {
                        self.tasks.insert(
                            id.clone(),
                            Task {
                                task_id: id.clone(),
                                pair: index,
                                assigned_to: annotator.clone(),
                                role: TaskRole::Primary,
                                status: TaskStatus::Pending,
                            },
                        );
                    }
                    self.order.insert((p.user_id.clone(), p.statement.id.clone()), index);
                    self.pairs.push(Pair {
                        batch: batch.clone(),
                        user_id: p.user_id,
                        statement: p.statement,
                        primary_tasks,
                        adjudicator: adjudicator.clone(),
                        adjudication_task: None,
                        final_label: None,
                    });
                }
                self.batches.push(BatchPools { batch, pools });
            }
            Event::Label(record) => {
                let pair_index = self.tasks[&record.task_id].pair;
                let day = record.timestamp.date_naive();
                *self.daily.entry((record.annotator_id.clone(), day)).or_default() += 1;
                let role = self.tasks[&record.task_id].role;
                let label = record.label;
                self.records.insert(record.task_id.clone(), record.clone());
                self.set_status(&record.task_id, TaskStatus::Labeled);
                match role {
                    TaskRole::Adjudication => self.finalize(pair_index, label),
                    TaskRole::Primary => {
                        let pair = &self.pairs[pair_index];
                        let labels: Vec<StanceLabel> = pair
                            .primary_tasks
                            .iter()
                            .filter_map(|t| self.records.get(t).map(|r| r.label))
                            .collect();
                        if let [a, b] = labels[..] {
                            if a == b {
                                self.finalize(pair_index, a);
                            } else {
                                self.open_adjudication(pair_index);
                            }
                        }
                    }
                }
            }
        }
    }

    fn set_status(&mut self, task: &str, status: TaskStatus) {
        if let Some(t) = self.tasks.get_mut(task) {
            t.status = status;
        }
    }

    fn finalize(&mut self, pair_index: usize, label: StanceLabel) {
        let pair = &mut self.pairs[pair_index];
        pair.final_label = Some(label);
        let ids: Vec<String> = pair
            .primary_tasks
            .iter()
            .cloned()
            .chain(pair.adjudication_task.clone())
            .collect();
        for id in ids {
            self.set_status(&id, TaskStatus::Final);
        }
    }

    fn open_adjudication(&mut self, pair_index: usize) {
        let pair = &mut self.pairs[pair_index];
        let id = task_id(
            &pair.batch,
            &pair.user_id,
            &pair.statement.id,
            &pair.adjudicator,
            TaskRole::Adjudication,
        );
        pair.adjudication_task = Some(id.clone());
        let primaries = pair.primary_tasks.clone();
        self.tasks.insert(
            id.clone(),
            Task {
                task_id: id,
                pair: pair_index,
                assigned_to: pair.adjudicator.clone(),
                role: TaskRole::Adjudication,
                status: TaskStatus::Pending,
            },
        );
        for t in primaries {
            self.set_status(&t, TaskStatus::Adjudication);
        }
    }

    fn view(&self, task: &Task) -> AnnotationTask {
        let pair = &self.pairs[task.pair];
        let pool_tweets = self
            .batches
            .iter()
            .find(|b| b.batch == pair.batch)
            .and_then(|b| b.pools.get(&pair.user_id))
            .cloned()
            .unwrap_or_default();
        AnnotationTask {
            task_id: task.task_id.clone(),
            batch: pair.batch.clone(),
            user_id: pair.user_id.clone(),
            statement: pair.statement.clone(),
            pool_tweets,
            assigned_to: task.assigned_to.clone(),
            role: task.role,
            status: task.status,
        }
    }

    fn tasks_of_pair<'a>(&'a self, pair: &'a Pair) -> impl Iterator<Item = &'a Task> + 'a {
        pair.primary_tasks
            .iter()
            .chain(pair.adjudication_task.iter())
            .filter_map(|id| self.tasks.get(id))
    }
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory(daily_cap: usize) -> Self {
        Store {
            state: State::default(),
            journal: None,
            daily_cap,
        }
    }

    /// Opens or creates a journaled store in `dir`.
    pub fn open(dir: &Path, daily_cap: usize) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| AnnotateError::io(dir, e))?;
        let journal_path = dir.join(JOURNAL);
        let events = read_journal(&journal_path)?;

        let mut state = State::default();
        let mut start = 0;
        if let Some(snap) = read_snapshot(&dir.join(SNAPSHOT)) {
            if snap.events <= events.len() {
                state = snap.state;
                start = snap.events;
            }
        }
        state.reindex();
        for (line, event) in events.iter().enumerate().skip(start) {
            state.check(event, usize::MAX).map_err(|e| AnnotateError::Journal {
                line: line + 1,
                message: e.to_string(),
            })?;
            state.apply(event.clone());
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| AnnotateError::io(&journal_path, e))?;
        let mut store = Store {
            state,
            journal: Some(Journal {
                dir: dir.to_path_buf(),
                file,
                events: events.len(),
                since_snapshot: events.len() - start,
            }),
            daily_cap,
        };
        if events.len() > start {
            store.write_snapshot()?;
        }
        Ok(store)
    }

    pub fn daily_cap(&self) -> usize {
        self.daily_cap
    }

    fn commit(&mut self, event: Event) -> Result<()> {
        self.state.check(&event, self.daily_cap)?;
        if let Some(j) = &mut self.journal {
            let mut line = serde_json::to_string(&event).expect("events serialize");
            line.push('\n');
            let path = j.dir.join(JOURNAL);
            j.file.write_all(line.as_bytes()).map_err(|e| AnnotateError::io(&path, e))?;
            j.file.sync_data().map_err(|e| AnnotateError::io(&path, e))?;
            j.events += 1;
            j.since_snapshot += 1;
        }
        let is_batch = matches!(event, Event::Batch { .. });
        self.state.apply(event);
        let due = self
            .journal
            .as_ref()
            .is_some_and(|j| is_batch || j.since_snapshot >= SNAPSHOT_EVERY);
        if due {
            self.write_snapshot()?;
        }
        Ok(())
    }

    /// Rewrites the snapshot so that it covers every journaled event.
    pub fn write_snapshot(&mut self) -> Result<()> {
        let Some(j) = &mut self.journal else {
            return Ok(());
        };
        let snap = Snapshot {
            events: j.events,
            state: self.state.clone(),
        };
        let tmp = j.dir.join("snapshot.json.tmp");
        let body = serde_json::to_vec(&snap).expect("snapshot serializes");
        fs::write(&tmp, body).map_err(|e| AnnotateError::io(&tmp, e))?;
        let target = j.dir.join(SNAPSHOT);
        fs::rename(&tmp, &target).map_err(|e| AnnotateError::io(&target, e))?;
        j.since_snapshot = 0;
        Ok(())
    }

    /// Creates two primary tasks per (user, statement) pair. Pools are keyed
    /// by user id and hold at most [`MAX_POOL`] tweets.
    pub fn create_batch(
        &mut self,
        batch: &str,
        pairs: &[(String, StanceStatement)],
        pools: &BTreeMap<String, Vec<PoolTweet>>,
        primaries: [&str; 2],
        adjudicator: &str,
    ) -> Result<Vec<String>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        if self.state.batches.iter().any(|b| b.batch == batch) {
            return Err(AnnotateError::InvalidBatch(format!("batch `{batch}` already exists")));
        }
        let users: BTreeSet<&String> = pairs.iter().map(|(u, _)| u).collect();
        let event = Event::Batch {
            batch: batch.to_string(),
            primaries: primaries.map(str::to_string),
            adjudicator: adjudicator.to_string(),
            pairs: pairs
                .iter()
                .map(|(u, s)| PairSpec {
                    user_id: u.clone(),
                    statement: s.clone(),
                })
                .collect(),
            pools: pools
                .iter()
                .filter(|(u, _)| users.contains(u))
                .map(|(u, p)| (u.clone(), p.clone()))
                .collect(),
        };
        self.commit(event)?;
        let mut ids = Vec::with_capacity(pairs.len() * 2);
        for (u, s) in pairs {
            for a in primaries {
                ids.push(task_id(batch, u, &s.id, a, TaskRole::Primary));
            }
        }
        Ok(ids)
    }

    pub fn quota(&self, annotator: &str, now: DateTime<Utc>) -> Quota {
        let used = self.state.used_on(annotator, now.date_naive());
        Quota {
            used,
            cap: self.daily_cap,
            remaining: self.daily_cap.saturating_sub(used),
            resets_at: next_midnight(now),
        }
    }

    fn ensure_quota(&self, annotator: &str, now: DateTime<Utc>) -> Result<()> {
        let q = self.quota(annotator, now);
        if q.remaining == 0 {
            return Err(AnnotateError::DailyCap {
                annotator: annotator.to_string(),
                cap: q.cap,
                resets_at: q.resets_at,
            });
        }
        Ok(())
    }

    fn next_of_role(&self, annotator: &str, role: TaskRole, now: DateTime<Utc>) -> Result<Option<AnnotationTask>> {
        self.ensure_quota(annotator, now)?;
        for &index in self.state.order.values() {
            let pair = &self.state.pairs[index];
            let found = self
                .state
                .tasks_of_pair(pair)
                .find(|t| t.role == role && t.assigned_to == annotator && t.status == TaskStatus::Pending);
            if let Some(t) = found {
                return Ok(Some(self.state.view(t)));
            }
        }
        Ok(None)
    }

    /// Lowest (user, statement) primary task still pending for `annotator`.
    pub fn next_task(&self, annotator: &str, now: DateTime<Utc>) -> Result<Option<AnnotationTask>> {
        self.next_of_role(annotator, TaskRole::Primary, now)
    }

    /// Lowest (user, statement) disagreement waiting on `annotator`.
    pub fn next_adjudication(&self, annotator: &str, now: DateTime<Utc>) -> Result<Option<AnnotationTask>> {
        self.next_of_role(annotator, TaskRole::Adjudication, now)
    }

    pub fn task(&self, task_id: &str) -> Option<AnnotationTask> {
        self.state.tasks.get(task_id).map(|t| self.state.view(t))
    }

    pub fn submit_label(
        &mut self,
        task_id: &str,
        annotator: &str,
        label: StanceLabel,
        now: DateTime<Utc>,
    ) -> Result<SubmitOutcome> {
        self.commit(Event::Label(AnnotationRecord {
            task_id: task_id.to_string(),
            annotator_id: annotator.to_string(),
            label,
            timestamp: now,
        }))?;
        let task = &self.state.tasks[task_id];
        let pair = &self.state.pairs[task.pair];
        let pair_status = match (pair.final_label, &pair.adjudication_task) {
            (Some(_), _) => TaskStatus::Final,
            (None, Some(_)) => TaskStatus::Adjudication,
            (None, None) => TaskStatus::Pending,
        };
        Ok(SubmitOutcome {
            task_id: task_id.to_string(),
            task_status: task.status,
            pair_status,
            final_label: pair.final_label,
        })
    }

    pub fn records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.state.records.values()
    }

    pub fn batches(&self) -> Vec<String> {
        self.state.batches.iter().map(|b| b.batch.clone()).collect()
    }

    pub fn progress(&self, now: DateTime<Utc>) -> Progress {
        let mut p = Progress {
            pairs: self.state.pairs.len(),
            ..Progress::default()
        };
        for pair in &self.state.pairs {
            match (pair.final_label, &pair.adjudication_task) {
                (Some(_), _) => p.final_pairs += 1,
                (None, Some(_)) => p.awaiting_adjudication += 1,
                (None, None) => p.awaiting_primary += 1,
            }
        }
        for t in self.state.tasks.values() {
            let a = p.annotators.entry(t.assigned_to.clone()).or_default();
            a.assigned += 1;
            if t.status == TaskStatus::Pending {
                a.pending += 1;
            } else {
                a.labeled += 1;
            }
        }
        for (name, a) in p.annotators.iter_mut() {
            a.today = self.state.used_on(name, now.date_naive());
        }
        p
    }

    /// Gold labels for a finished batch and the agreement between primaries.
    pub fn export_gold(&self, batch: &str) -> Result<ExportReport> {
        if !self.state.batches.iter().any(|b| b.batch == batch) {
            return Err(AnnotateError::UnknownBatch(batch.to_string()));
        }
        let pairs: Vec<&Pair> = self
            .state
            .order
            .values()
            .map(|&i| &self.state.pairs[i])
            .filter(|p| p.batch == batch)
            .collect();
        let unfinished: Vec<(String, String)> = pairs
            .iter()
            .filter(|p| p.final_label.is_none())
            .map(|p| (p.user_id.clone(), p.statement.id.clone()))
            .collect();
        if !unfinished.is_empty() {
            return Err(AnnotateError::Unfinished(unfinished));
        }
        let (mut first, mut second) = (Vec::new(), Vec::new());
        let mut gold = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let [a, b] = p.primary_tasks.clone().map(|t| self.state.records[&t].label);
            first.push(a);
            second.push(b);
            gold.push(GoldRow {
                user_id: p.user_id.clone(),
                statement_id: p.statement.id.clone(),
                label: p.final_label.expect("checked above"),
            });
        }
        let kappa = cohens_kappa(&first, &second).map_err(|e| AnnotateError::InvalidBatch(e.to_string()))?;
        Ok(ExportReport {
            batch: batch.to_string(),
            pairs: pairs.len(),
            agreements: first.iter().zip(&second).filter(|(a, b)| a == b).count(),
            adjudicated: pairs.iter().filter(|p| p.adjudication_task.is_some()).count(),
            kappa,
            gold,
        })
    }
}

fn read_journal(path: &Path) -> Result<Vec<Event>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(AnnotateError::io(path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut good_bytes = 0u64;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| AnnotateError::io(path, e))?;
        if n == 0 {
            break;
        }
        if !buf.ends_with('\n') {
            // Torn append: the event never committed.
            let f = OpenOptions::new().write(true).open(path).map_err(|e| AnnotateError::io(path, e))?;
            f.set_len(good_bytes).map_err(|e| AnnotateError::io(path, e))?;
            break;
        }
        let event: Event = serde_json::from_str(buf.trim_end()).map_err(|e| AnnotateError::Journal {
            line: events.len() + 1,
            message: e.to_string(),
        })?;
        events.push(event);
        good_bytes += n as u64;
    }
    Ok(events)
}

fn read_snapshot(path: &Path) -> Option<Snapshot> {
    let body = fs::read(path).ok()?;
    serde_json::from_slice(&body).ok()
}
