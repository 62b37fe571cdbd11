//! Planted synthetic world: a knowledge-graph snapshot, a tweet corpus with
//! known stances, a retweet graph with known communities and a mock rule
//! script that answers every prompt the pipeline sends.
//!
//! Users tweet `I support the <topic>` or `I oppose the <topic>` once per
//! topic they hold a stance on, plus unrelated chatter. The statement for a
//! topic is `The user supports the <topic>.`, so the gold label is True for
//! supporters, False for opponents and CannotAnswer otherwise.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{RetweetEdge, Tweet};
use crate::error::{Error, Result};
use crate::evaluation::StanceLabel;
use crate::knowledge::{KgEdge, KgNode, KgSnapshot};
use crate::llm::MockRule;
use crate::profiling::statement_id;

pub const TOPICS: [&str; 15] = [
    "nuclear agreement",
    "hijab law",
    "fuel subsidy",
    "internet filtering",
    "election boycott",
    "economic sanctions",
    "stadium ban",
    "currency redenomination",
    "death penalty",
    "militia funding",
    "university quota",
    "wheat tariff",
    "satellite jamming",
    "morality police",
    "prisoner amnesty",
];

const SUFFIXES: [&str; 8] = [
    "",
    "today",
    "without doubt",
    "and always will",
    "more than ever",
    "as I said before",
    "no matter what",
    "for real",
];

const PEOPLE: [&str; 8] = ["Sara", "Omid", "Lena", "Kian", "Mina", "Arash", "Nora", "Dariush"];
const FOODS: [&str; 8] = ["pizza", "kebab", "noodles", "salad", "soup", "tacos", "rice", "dumplings"];
const HOBBIES: [&str; 8] = ["guitar", "chess", "cycling", "painting", "hiking", "baking", "yoga", "knitting"];
const CITIES: [&str; 6] = ["Shiraz", "Tabriz", "Rasht", "Yazd", "Kerman", "Ahvaz"];
const MOODS: [&str; 6] = ["sunny", "rainy", "windy", "lovely", "gloomy", "chilly"];

pub fn statement_text(topic: &str) -> String {
    format!("The user supports the {topic}.")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Users per planted community.
    pub communities: Vec<usize>,
    /// Retweet edges each user sends inside its community.
    pub intra_degree: usize,
    /// Probability that a user also retweets someone outside its community.
    pub cross_prob: f64,
    /// Probability of holding a stance on a topic (split evenly for/against).
    pub stance_prob: f64,
    pub tweets_per_stance: usize,
    pub chatter_per_user: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            communities: vec![100, 100, 100, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5],
            intra_degree: 12,
            cross_prob: 0.05,
            stance_prob: 0.7,
            tweets_per_stance: 1,
            chatter_per_user: 8,
            seed: 123,
        }
    }
}

impl SynthSpec {
    /// Large enough that default sampling yields 150+ users, with more
    /// domain tweets per user than a pool can hold.
    pub fn full_scale() -> Self {
        SynthSpec {
            communities: [vec![520, 520, 520], vec![5; 12]].concat(),
            stance_prob: 0.9,
            tweets_per_stance: 7,
            chatter_per_user: 2,
            ..SynthSpec::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Support,
    Oppose,
    None,
}

impl Stance {
    pub fn gold(self) -> StanceLabel {
        match self {
            Stance::Support => StanceLabel::True,
            Stance::Oppose => StanceLabel::False,
            Stance::None => StanceLabel::CannotAnswer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub user_id: String,
    pub statement_id: String,
    pub label: StanceLabel,
}

pub struct World {
    pub tweets: Vec<Tweet>,
    pub users: Vec<String>,
    pub community_of: BTreeMap<String, usize>,
    pub edges: Vec<RetweetEdge>,
    pub stances: BTreeMap<String, Vec<Stance>>,
    /// Tweet id to (topic index, stance) for planted domain tweets.
    pub domain_tweets: BTreeMap<String, (usize, Stance)>,
    pub kg: KgSnapshot,
    pub seed_entities: Vec<String>,
    pub rules: Vec<MockRule>,
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 9, 1, 0, 0, 0).single().expect("valid date")
}

pub fn chatter(rng: &mut impl Rng) -> String {
    let p = PEOPLE.choose(rng).expect("nonempty");
    match rng.gen_range(0..4) {
        0 => format!("had {} for lunch with {p}", FOODS.choose(rng).expect("nonempty")),
        1 => format!("practicing {} with {p} tonight", HOBBIES.choose(rng).expect("nonempty")),
        2 => format!(
            "{} is {} this morning",
            CITIES.choose(rng).expect("nonempty"),
            MOODS.choose(rng).expect("nonempty")
        ),
        _ => format!(
            "cannot wait for {} and {} with {p}",
            HOBBIES.choose(rng).expect("nonempty"),
            FOODS.choose(rng).expect("nonempty")
        ),
    }
}

pub fn stance_tweet(topic: &str, stance: Stance, rng: &mut impl Rng) -> String {
    let verb = match stance {
        Stance::Support => "support",
        Stance::Oppose => "oppose",
        Stance::None => unreachable!("no tweet for an absent stance"),
    };
    let suffix = SUFFIXES.choose(rng).expect("nonempty");
    if suffix.is_empty() {
        format!("I {verb} the {topic}")
    } else {
        format!("I {verb} the {topic} {suffix}")
    }
}

/// Markdown article for one topic: one short section per phrasing a user
/// might tweet, so stance tweets sit close to many of its chunks.
pub fn topic_document(topic: &str) -> String {
    let title: String = topic
        .split(' ')
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect::<String>()).unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ");
    let mut doc = format!("# {title}\n\n");
    for verb in ["support", "oppose"] {
        for suffix in SUFFIXES {
            let line = format!("I {verb} the {topic} {suffix}");
            doc.push_str(&format!("## {title}\n\n{}\n\n", line.trim_end()));
        }
    }
    doc
}

fn escape(topic: &str) -> String {
    regex::escape(topic)
}

/// Mock script covering generation, profiling, judging and summaries.
pub fn mock_rules() -> Vec<MockRule> {
    let mut rules = Vec::new();
    let mut claims: Vec<String> = TOPICS.iter().map(|t| statement_text(t)).collect();
    claims.extend(TOPICS.iter().map(|t| format!("The user supports the {t}!")));
    rules.push(MockRule {
        pattern: r"List declarative stance claims".into(),
        response: claims.join("\n"),
    });
    for t in TOPICS {
        let t_re = escape(t);
        rules.push(MockRule {
            pattern: format!(
                r"Statement: The user supports the {t_re}\.\n.*\[T(?P<id>[^\]\s]+)\] I (?P<verb>support|oppose) the {t_re}\b"
            ),
            response: format!("The user says they ${{verb}} the {t}. [T${{id}}]"),
        });
    }
    rules.push(MockRule {
        pattern: r"Reference tweets:".into(),
        response: "NO_EVIDENCE".into(),
    });
    for t in TOPICS {
        let t_re = escape(t);
        for (verb, label) in [("support", "True"), ("oppose", "False")] {
            rules.push(MockRule {
                pattern: format!(
                    r"Context:\n.*\b(?:I|they) {verb} the {t_re}\b.*\nStatement: The user supports the {t_re}\."
                ),
                response: label.into(),
            });
        }
    }
    rules.push(MockRule {
        pattern: r"Context:\n.*\nStatement:".into(),
        response: "Cannot be answered".into(),
    });
    rules.push(MockRule {
        pattern: r"Focus: the user's views across all topics".into(),
        response: "The user tweets about daily life and politics.".into(),
    });
    rules.push(MockRule {
        pattern: r"Tweets:\n(?P<tweets>.*)\n\nWrite a concise".into(),
        response: "Retrieved posts:\n${tweets}".into(),
    });
    rules
}

pub fn generate(spec: &SynthSpec) -> Result<World> {
    if spec.communities.is_empty() || spec.communities.contains(&0) {
        return Err(Error::InvalidArgument("every community needs at least one user".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut users = Vec::new();
    let mut community_of = BTreeMap::new();
    let mut members: Vec<Vec<String>> = Vec::new();
    for (c, &size) in spec.communities.iter().enumerate() {
        let mut m = Vec::with_capacity(size);
        for _ in 0..size {
            let u = format!("u{:05}", users.len() + 1);
            community_of.insert(u.clone(), c);
            users.push(u.clone());
            m.push(u);
        }
        members.push(m);
    }

    let mut weights: BTreeMap<(String, String), u64> = BTreeMap::new();
    for (c, m) in members.iter().enumerate() {
        for u in m {
            if m.len() > 1 {
                for _ in 0..spec.intra_degree {
                    let v = &m[rng.gen_range(0..m.len())];
                    if v != u {
                        *weights.entry((u.clone(), v.clone())).or_insert(0) += 1;
                    }
                }
            }
            if members.len() > 1 && rng.gen_bool(spec.cross_prob) {
                let mut other = rng.gen_range(0..members.len() - 1);
                if other >= c {
                    other += 1;
                }
                let v = &members[other][rng.gen_range(0..members[other].len())];
                *weights.entry((u.clone(), v.clone())).or_insert(0) += 1;
            }
        }
    }
    let edges = weights
        .into_iter()
        .map(|((source, target), weight)| RetweetEdge { source, target, weight })
        .collect();

    let mut tweets = Vec::new();
    let mut stances = BTreeMap::new();
    let mut domain_tweets = BTreeMap::new();
    let mut next_id = 100_000u64;
    let start = epoch();
    for u in &users {
        let bias = if community_of[u] % 2 == 0 { 0.65 } else { 0.35 };
        let mut user_stances = Vec::with_capacity(TOPICS.len());
        let mut texts: Vec<(String, Option<(usize, Stance)>)> = Vec::new();
        for (ti, topic) in TOPICS.iter().enumerate() {
            let s = if rng.gen_bool(spec.stance_prob) {
                if rng.gen_bool(bias) {
                    Stance::Support
                } else {
                    Stance::Oppose
                }
            } else {
                Stance::None
            };
            user_stances.push(s);
            if s != Stance::None {
                for _ in 0..spec.tweets_per_stance {
                    texts.push((stance_tweet(topic, s, &mut rng), Some((ti, s))));
                }
            }
        }
        for _ in 0..spec.chatter_per_user {
            texts.push((chatter(&mut rng), None));
        }
        texts.shuffle(&mut rng);
        for (text, planted) in texts {
            next_id += 1;
            let id = next_id.to_string();
            if let Some(p) = planted {
                domain_tweets.insert(id.clone(), p);
            }
            tweets.push(Tweet {
                id,
                user_id: u.clone(),
                text,
                created_at: start + Duration::minutes(rng.gen_range(0..60 * 24 * 90)),
                retweet_count: rng.gen_range(0..50),
                like_count: rng.gen_range(0..200),
            });
        }
        stances.insert(u.clone(), user_stances);
    }

    let (kg, seed_entities) = knowledge_graph()?;
    Ok(World {
        tweets,
        users,
        community_of,
        edges,
        stances,
        domain_tweets,
        kg,
        seed_entities,
        rules: mock_rules(),
    })
}

/// A root entity linked to one article per topic (depth 1), a spokesperson
/// per topic (depth 2) and an unreachable off-topic article.
pub fn knowledge_graph() -> Result<(KgSnapshot, Vec<String>)> {
    let mut nodes = vec![KgNode {
        entity_id: "Q1".into(),
        label: "Domestic politics".into(),
        document: None,
    }];
    let mut edges = Vec::new();
    for (i, topic) in TOPICS.iter().enumerate() {
        let topic_id = format!("Q{}", 100 + i);
        let person_id = format!("Q{}", 200 + i);
        nodes.push(KgNode {
            entity_id: topic_id.clone(),
            label: topic.to_string(),
            document: Some(topic_document(topic)),
        });
        nodes.push(KgNode {
            entity_id: person_id.clone(),
            label: format!("Spokesperson {}", i + 1),
            document: Some(format!(
                "# Spokesperson {}\n\n## Position\n\nspokesperson who would support the {topic}\n",
                i + 1
            )),
        });
        edges.push(KgEdge {
            source: "Q1".into(),
            edge_type: "main_subject".into(),
            target: topic_id.clone(),
        });
        edges.push(KgEdge {
            source: person_id,
            edge_type: "position_held".into(),
            target: topic_id,
        });
    }
    nodes.push(KgNode {
        entity_id: "Q900".into(),
        label: "Cooking".into(),
        document: Some("# Cooking\n\npizza and noodles and soup\n".into()),
    });
    Ok((KgSnapshot::new(nodes, edges)?, vec!["Q1".into()]))
}

impl World {
    pub fn gold(&self) -> Vec<GoldRecord> {
        let mut out = Vec::new();
        for (u, s) in &self.stances {
            for (i, st) in s.iter().enumerate() {
                out.push(GoldRecord {
                    user_id: u.clone(),
                    statement_id: statement_id(i),
                    label: st.gold(),
                });
            }
        }
        out
    }

    /// `{statement_id: [topic]}` keyword file for aspect selection.
    pub fn aspects() -> BTreeMap<String, Vec<String>> {
        TOPICS
            .iter()
            .enumerate()
            .map(|(i, t)| (statement_id(i), vec![t.to_string()]))
            .collect()
    }

    /// Writes every input file the pipeline reads into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("tweets.jsonl"), &self.tweets)?;
        write_jsonl(&dir.join("retweets.jsonl"), &self.edges)?;
        write_jsonl(&dir.join("gold.jsonl"), &self.gold())?;
        self.kg.write_jsonl(&dir.join("kg.jsonl"))?;
        write_pretty(&dir.join("mock_rules.json"), &self.rules)?;
        write_pretty(&dir.join("aspects.json"), &World::aspects())?;
        let selection: Vec<String> = (0..TOPICS.len()).map(statement_id).collect();
        write_pretty(&dir.join("selection.json"), &selection)?;
        write_pretty(&dir.join("seeds.json"), &self.seed_entities)?;
        Ok(())
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut body = String::new();
    for item in items {
        body.push_str(&serde_json::to_string(item).expect("record serializes"));
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_pretty<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Where a fixture tweet was planted relative to the chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedBand {
    /// A chunk sentence with one word swapped.
    Near,
    /// Half chunk words, half unrelated words.
    Mid,
    /// Unrelated words only.
    Far,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceFixture {
    pub chunks: Vec<(String, String)>,
    pub tweets: Vec<(String, String, PlantedBand)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureShape {
    pub groups: usize,
    pub chunks_per_group: usize,
    pub near: usize,
    pub mid: usize,
    pub far: usize,
    pub seed: u64,
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "ze", "shi", "pa", "do", "ri", "gu", "fe", "ba", "xo",
];
const BASE_WORDS: usize = 8;

/// Chunks come in groups sharing one base sentence; near tweets reuse a base
/// sentence, far tweets draw from a disjoint vocabulary.
pub fn distance_fixture(shape: &FixtureShape) -> Result<DistanceFixture> {
    if shape.groups == 0 || shape.chunks_per_group == 0 {
        return Err(Error::InvalidArgument("fixture needs at least one chunk".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    let mut used = std::collections::HashSet::new();
    let mut word = |rng: &mut ChaCha8Rng| loop {
        let w: String = (0..3).map(|_| *SYLLABLES.choose(rng).expect("nonempty")).collect();
        if used.insert(w.clone()) {
            return w;
        }
    };
    let extras_per_group = shape.chunks_per_group + 2;
    let mut bases = Vec::with_capacity(shape.groups);
    let mut extras = Vec::with_capacity(shape.groups);
    for _ in 0..shape.groups {
        bases.push((0..BASE_WORDS).map(|_| word(&mut rng)).collect::<Vec<_>>());
        extras.push((0..extras_per_group).map(|_| word(&mut rng)).collect::<Vec<_>>());
    }
    let far_vocab: Vec<String> = (0..200).map(|_| word(&mut rng)).collect();

    let mut chunks = Vec::new();
    for g in 0..shape.groups {
        for j in 0..shape.chunks_per_group {
            chunks.push((format!("c{g:03}-{j:02}"), format!("{} {}", bases[g].join(" "), extras[g][j])));
        }
    }
    let mut planted = Vec::new();
    for _ in 0..shape.near {
        let g = rng.gen_range(0..shape.groups);
        let mut words = bases[g].clone();
        words.push(extras[g].choose(&mut rng).expect("nonempty").clone());
        planted.push((words.join(" "), PlantedBand::Near));
    }
    for _ in 0..shape.mid {
        let g = rng.gen_range(0..shape.groups);
        let mut words: Vec<String> = bases[g].choose_multiple(&mut rng, BASE_WORDS / 2).cloned().collect();
        words.extend(far_vocab.choose_multiple(&mut rng, BASE_WORDS / 2).cloned());
        planted.push((words.join(" "), PlantedBand::Mid));
    }
    for _ in 0..shape.far {
        let words: Vec<String> = far_vocab.choose_multiple(&mut rng, BASE_WORDS).cloned().collect();
        planted.push((words.join(" "), PlantedBand::Far));
    }
    planted.shuffle(&mut rng);
    let tweets = planted
        .into_iter()
        .enumerate()
        .map(|(i, (text, band))| (format!("t{i:05}"), text, band))
        .collect();
    Ok(DistanceFixture { chunks, tweets })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_is_deterministic() {
        let spec = SynthSpec {
            communities: vec![10, 10],
            ..SynthSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.tweets, b.tweets);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.users.len(), 20);
        assert_eq!(a.gold().len(), 20 * TOPICS.len());
    }

    #[test]
    fn planted_tweets_match_stances() {
        let w = generate(&SynthSpec {
            communities: vec![5],
            ..SynthSpec::default()
        })
        .unwrap();
        for t in &w.tweets {
            if let Some((ti, s)) = w.domain_tweets.get(&t.id) {
                assert_eq!(w.stances[&t.user_id][*ti], *s);
                assert!(t.text.contains(TOPICS[*ti]));
            }
        }
    }

    #[test]
    fn rules_compile() {
        crate::llm::MockGateway::new(mock_rules()).unwrap();
    }

    #[test]
    fn topics_do_not_nest() {
        for a in TOPICS {
            for b in TOPICS {
                if a != b {
                    assert!(!a.contains(b));
                }
            }
        }
    }
}
