use std::collections::BTreeSet;

use proptest::prelude::*;

use pillar::knowledge::{chunk_markdown, ChunkParams, KgEdge, KgNode, KgSnapshot};

fn node(id: &str, label: &str, doc: bool) -> KgNode {
    KgNode {
        entity_id: id.into(),
        label: label.into(),
        document: doc.then(|| format!("# {label}\n\n{label} is part of European football.\n")),
    }
}

fn edge(source: &str, edge_type: &str, target: &str) -> KgEdge {
    KgEdge {
        source: source.into(),
        edge_type: edge_type.into(),
        target: target.into(),
    }
}

/// Two competitions, three clubs, players and managers.
fn football() -> KgSnapshot {
    let nodes = vec![
        node("Q18756", "Champions League", true),
        node("Q9448", "Premier League", true),
        node("Q324867", "La Liga", true),
        node("C1", "Club One", true),
        node("C2", "Club Two", true),
        node("C3", "Club Three", true),
        node("P1", "Player One", true),
        node("P2", "Player Two", false),
        node("P3", "Player Three", true),
        node("M1", "Manager One", true),
        node("M3", "Manager Three", true),
        node("X1", "Striker", true),
    ];
    let edges = vec![
        edge("C1", "P1344", "Q18756"),
        edge("C1", "P1344", "Q9448"),
        edge("C2", "P1344", "Q9448"),
        edge("C3", "P1344", "Q324867"),
        edge("P1", "P54", "C1"),
        edge("P2", "P54", "C2"),
        edge("P2", "P54", "C3"),
        edge("P3", "P54", "C3"),
        edge("C1", "P286", "M1"),
        edge("C3", "P286", "M3"),
        edge("P1", "P413", "X1"),
    ];
    KgSnapshot::new(nodes, edges).unwrap()
}

fn set(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

#[test]
fn football_closure_by_hand() {
    let kg = football();
    let seeds = vec!["Q18756".to_string(), "Q9448".to_string()];

    // Player and coach edges never touch a competition directly.
    let people = set(&["P54", "P286"]);
    assert_eq!(kg.expand_entities(&seeds, &people, 2).unwrap(), set(&["Q18756", "Q9448"]));

    let with_participation = set(&["P1344", "P54", "P286"]);
    // Hop 1: clubs taking part (C1, C2). Hop 2: their players, coaches and
    // other competitions. C3 is three hops away through P2.
    assert_eq!(
        kg.expand_entities(&seeds, &with_participation, 1).unwrap(),
        set(&["Q18756", "Q9448", "C1", "C2"])
    );
    let two = kg.expand_entities(&seeds, &with_participation, 2).unwrap();
    assert_eq!(two, set(&["Q18756", "Q9448", "C1", "C2", "P1", "P2", "M1"]));
    let three = kg.expand_entities(&seeds, &with_participation, 3).unwrap();
    assert_eq!(three, set(&["Q18756", "Q9448", "C1", "C2", "P1", "P2", "M1", "C3"]));

    let docs = kg.extract_documents(&two);
    assert_eq!(docs.documents.len(), 6);
    assert_eq!(docs.missing, vec!["P2".to_string()]);
    let stats = kg.stats();
    assert_eq!((stats.nodes, stats.edges, stats.documents), (12, 11, 11));
}

#[test]
fn thousand_token_section_gives_five_overlapping_chunks() {
    let paragraphs: Vec<String> = (0..125)
        .map(|p| (0..8).map(|i| format!("w{:04}", p * 8 + i)).collect::<Vec<_>>().join(" "))
        .collect();
    let doc = paragraphs.join("\n\n");
    let frags = chunk_markdown(&doc, ChunkParams { target_tokens: 256, overlap_tokens: 32 }).unwrap();
    let spans: Vec<(usize, usize)> = frags
        .iter()
        .map(|f| {
            let words: Vec<usize> = f.text(&doc).split_whitespace().map(|w| w[1..].parse().unwrap()).collect();
            assert_eq!(words.len(), f.tokens);
            assert!(words.windows(2).all(|w| w[1] == w[0] + 1));
            (words[0], words[words.len() - 1] + 1)
        })
        .collect();
    assert_eq!(spans, vec![(0, 256), (224, 480), (448, 704), (672, 928), (896, 1000)]);
    for pair in spans.windows(2) {
        assert_eq!(pair[0].1 - pair[1].0, 32);
    }
}

fn markdown() -> impl Strategy<Value = String> {
    let line = prop_oneof![
        3 => proptest::collection::vec("[a-z]{1,6}", 1..12).prop_map(|w| w.join(" ")),
        1 => "[a-z]{1,8}".prop_map(|h| format!("## {h}")),
        1 => Just(String::new()),
    ];
    proptest::collection::vec(line, 1..60).prop_map(|lines| lines.join("\n"))
}

proptest! {
    #[test]
    fn chunks_are_contiguous_and_bounded(doc in markdown(), target in 8usize..40, overlap in 0usize..8) {
        prop_assume!(!doc.split_whitespace().next().is_none());
        let frags = chunk_markdown(&doc, ChunkParams { target_tokens: target, overlap_tokens: overlap }).unwrap();
        prop_assert!(!frags.is_empty());
        let mut last_start = 0;
        for f in &frags {
            let text = f.text(&doc);
            prop_assert_eq!(text, &doc[f.start..f.end]);
            prop_assert!(!text.trim().is_empty());
            prop_assert_eq!(text.split_whitespace().count(), f.tokens);
            prop_assert!(f.tokens <= target || f.oversized);
            prop_assert!(f.start >= last_start);
            last_start = f.start;
        }
    }

    #[test]
    fn expansion_is_monotone_in_depth(
        edges in proptest::collection::vec((0usize..12, 0usize..12, 0usize..3), 0..30),
        depth in 0usize..4,
    ) {
        let nodes = (0..12).map(|i| node(&format!("N{i}"), &format!("node {i}"), i % 3 != 0)).collect();
        let types = ["a", "b", "c"];
        let edges = edges
            .iter()
            .map(|(s, t, k)| edge(&format!("N{s}"), types[*k], &format!("N{t}")))
            .collect();
        let kg = KgSnapshot::new(nodes, edges).unwrap();
        let allowed = set(&["a", "b"]);
        let seeds = vec!["N0".to_string()];
        let small = kg.expand_entities(&seeds, &allowed, depth).unwrap();
        let large = kg.expand_entities(&seeds, &allowed, depth + 1).unwrap();
        prop_assert!(small.is_subset(&large));
        prop_assert!(small.contains("N0"));
    }
}
