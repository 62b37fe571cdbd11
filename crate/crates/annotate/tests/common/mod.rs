#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{DateTime, TimeZone, Utc};
use pillar::profiling::{statement_id, StanceStatement, StatementSource};
use pillar_annotate::PoolTweet;

pub const A: &str = "ann_a";
pub const B: &str = "ann_b";
pub const C: &str = "ann_c";

pub fn day(d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, d, 9, 0, 0).unwrap()
}

pub fn statement(i: usize) -> StanceStatement {
    StanceStatement {
        id: statement_id(i),
        text: format!("The user supports proposal {i}."),
        source: StatementSource::Curated,
    }
}

pub fn user(i: usize) -> String {
    format!("u{i:03}")
}

pub fn pools(users: usize, size: usize) -> BTreeMap<String, Vec<PoolTweet>> {
    (0..users)
        .map(|u| {
            let tweets = (0..size)
                .map(|t| PoolTweet {
                    id: format!("{u}-{t}"),
                    text: format!("tweet {t} of user {u} <b>bold</b>"),
                    created_at: day(1),
                })
                .collect();
            (user(u), tweets)
        })
        .collect()
}

pub fn pairs(users: usize, statements: usize) -> Vec<(String, StanceStatement)> {
    let mut out = Vec::new();
    for u in 0..users {
        for s in 0..statements {
            out.push((user(u), statement(s)));
        }
    }
    out
}
