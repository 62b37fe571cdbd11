//! Knowledge-graph snapshots: seed expansion, document extraction and
//! markdown-aware chunking.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedder, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgNode {
    pub entity_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgEdge {
    pub source: String,
    pub edge_type: String,
    pub target: String,
}

/// One line of a snapshot file: either a node or an edge record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum KgRecord {
    Edge(KgEdge),
    Node(KgNode),
}

#[derive(Debug, Clone, Default)]
pub struct KgSnapshot {
    nodes: BTreeMap<String, KgNode>,
    edges: Vec<KgEdge>,
    adjacency: HashMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgStats {
    pub nodes: usize,
    pub edges: usize,
    pub documents: usize,
}

impl std::fmt::Display for KgStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} nodes, {} edges, and {} documents",
            self.nodes, self.edges, self.documents
        )
    }
}

impl KgSnapshot {
    pub fn new(nodes: Vec<KgNode>, edges: Vec<KgEdge>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for n in nodes {
            if map.contains_key(&n.entity_id) {
                return Err(Error::DuplicateId {
                    id: n.entity_id,
                    line: map.len() + 1,
                });
            }
            map.insert(n.entity_id.clone(), n);
        }
        let mut adjacency: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            for end in [&e.source, &e.target] {
                if !map.contains_key(end) {
                    return Err(Error::UnknownId(end.clone()));
                }
            }
            adjacency.entry(e.source.clone()).or_default().push(i);
            if e.target != e.source {
                adjacency.entry(e.target.clone()).or_default().push(i);
            }
        }
        Ok(KgSnapshot {
            nodes: map,
            edges,
            adjacency,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<KgRecord>(&line) {
                Ok(KgRecord::Node(n)) => nodes.push(n),
                Ok(KgRecord::Edge(e)) => edges.push(e),
                Err(e) => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Self::new(nodes, edges)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for n in self.nodes.values() {
            writeln!(w, "{}", serde_json::to_string(n).expect("node serializes"))
                .map_err(|e| Error::io(path, e))?;
        }
        for e in &self.edges {
            writeln!(w, "{}", serde_json::to_string(e).expect("edge serializes"))
                .map_err(|err| Error::io(path, err))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn node(&self, id: &str) -> Option<&KgNode> {
        self.nodes.get(id)
    }

    pub fn stats(&self) -> KgStats {
        KgStats {
            nodes: self.nodes.len(),
            edges: self.edges.len(),
            documents: self.nodes.values().filter(|n| n.document.is_some()).count(),
        }
    }

    /// Breadth-first closure from `seeds` over edges whose type is in
    /// `edge_types`, walking edges in both directions, up to `depth` hops.
    pub fn expand_entities(
        &self,
        seeds: &[String],
        edge_types: &BTreeSet<String>,
        depth: usize,
    ) -> Result<BTreeSet<String>> {
        if edge_types.is_empty() && depth > 0 {
            return Err(Error::InvalidArgument(
                "edge type set is empty but depth > 0".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        for s in seeds {
            if !self.nodes.contains_key(s) {
                return Err(Error::UnknownId(s.clone()));
            }
            if seen.insert(s.clone()) {
                queue.push_back((s.clone(), 0usize));
            }
        }
        while let Some((id, d)) = queue.pop_front() {
            if d == depth {
                continue;
            }
            for &ei in self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
                let e = &self.edges[ei];
                if !edge_types.contains(&e.edge_type) {
                    continue;
                }
                let other = if e.source == id { &e.target } else { &e.source };
                if seen.insert(other.clone()) {
                    queue.push_back((other.clone(), d + 1));
                }
            }
        }
        Ok(seen)
    }

    /// Documents for `entities`; ids without a document (or unknown to the
    /// snapshot) land in `missing`.
    pub fn extract_documents(&self, entities: &BTreeSet<String>) -> ExtractedDocuments {
        let mut out = ExtractedDocuments::default();
        for id in entities {
            match self.nodes.get(id).and_then(|n| n.document.as_ref()) {
                Some(doc) if !doc.trim().is_empty() => out.documents.push(EntityDocument {
                    entity_id: id.clone(),
                    document: doc.clone(),
                }),
                _ => out.missing.push(id.clone()),
            }
        }
        for id in &out.missing {
            log::warn!("entity {id} has no document");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDocument {
    pub entity_id: String,
    pub document: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractedDocuments {
    pub documents: Vec<EntityDocument>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub target_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            target_tokens: 256,
            overlap_tokens: 32,
        }
    }
}

/// A contiguous span of the source document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub start: usize,
    pub end: usize,
    pub tokens: usize,
    /// Set when one paragraph alone exceeded the budget and was kept whole.
    pub oversized: bool,
}

impl Fragment {
    pub fn text<'a>(&self, doc: &'a str) -> &'a str {
        &doc[self.start..self.end]
    }
}

/// Byte span of one whitespace-delimited token.
#[derive(Debug, Clone, Copy)]
struct Token {
    start: usize,
    end: usize,
}

struct Section {
    tokens: Vec<Token>,
    /// Token indices where a paragraph ends (exclusive), ascending; the last
    /// entry equals `tokens.len()`.
    para_ends: Vec<usize>,
}

fn is_heading(line: &str) -> bool {
    let trimmed = line.trim_start_matches(' ');
    if line.len() - trimmed.len() > 3 {
        return false;
    }
    let hashes = trimmed.bytes().take_while(|b| *b == b'#').count();
    (1..=6).contains(&hashes)
        && trimmed[hashes..]
            .chars()
            .next()
            .is_none_or(char::is_whitespace)
}

fn is_fence(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("```") || t.starts_with("~~~")
}

/// Splits the document into heading-delimited sections of paragraphs.
/// Headings inside fenced code blocks are ignored.
fn sections(doc: &str) -> Vec<Section> {
    let mut out: Vec<Section> = Vec::new();
    let mut current = Section {
        tokens: Vec::new(),
        para_ends: Vec::new(),
    };
    let mut in_fence = false;
    let mut offset = 0;

    let close_para = |s: &mut Section| {
        let n = s.tokens.len();
        if n > 0 && s.para_ends.last() != Some(&n) {
            s.para_ends.push(n);
        }
    };

    for raw_line in doc.split_inclusive('\n') {
        let line_start = offset;
        offset += raw_line.len();
        let line = raw_line.trim_end_matches(['\n', '\r']);
        if is_fence(line) {
            in_fence = !in_fence;
        }
        if !in_fence && is_heading(line) && !current.tokens.is_empty() {
            close_para(&mut current);
            out.push(std::mem::replace(
                &mut current,
                Section {
                    tokens: Vec::new(),
                    para_ends: Vec::new(),
                },
            ));
        }
        if line.trim().is_empty() {
            if !in_fence {
                close_para(&mut current);
            }
            continue;
        }
        let mut pos = 0;
        for word in line.split_whitespace() {
            let rel = line[pos..].find(word).expect("word is in line") + pos;
            current.tokens.push(Token {
                start: line_start + rel,
                end: line_start + rel + word.len(),
            });
            pos = rel + word.len();
        }
        if !in_fence && is_heading(line) {
            // A heading line is its own paragraph.
            close_para(&mut current);
        }
    }
    close_para(&mut current);
    if !current.tokens.is_empty() {
        out.push(current);
    }
    out
}

/// Splits at heading boundaries, then greedily packs whole paragraphs into
/// fragments of at most `target_tokens` whitespace tokens. Inside a section
/// each fragment after the first starts with the last `overlap_tokens` tokens
/// of its predecessor. A paragraph longer than the budget is kept whole and
/// flagged.
pub fn chunk_markdown(doc: &str, params: ChunkParams) -> Result<Vec<Fragment>> {
    let ChunkParams {
        target_tokens: target,
        overlap_tokens: overlap,
    } = params;
    if target == 0 {
        return Err(Error::InvalidArgument("target_tokens must be > 0".into()));
    }
    if overlap >= target {
        return Err(Error::InvalidArgument(format!(
            "overlap ({overlap}) must be smaller than target ({target})"
        )));
    }
    if doc.trim().is_empty() {
        return Err(Error::Empty("document is empty".into()));
    }

    let mut out = Vec::new();
    for section in sections(doc) {
        let toks = &section.tokens;
        let mut emit = |s: usize, e: usize, oversized: bool| {
            out.push(Fragment {
                start: toks[s].start,
                end: toks[e - 1].end,
                tokens: e - s,
                oversized,
            });
        };

        // Index into para_ends of the next paragraph not yet covered.
        let mut next_para = 0;
        // Token where fresh (non-overlap) content of the next fragment starts.
        let mut fresh: usize = 0;
        let mut first = true;
        while next_para < section.para_ends.len() {
            let start = if first { fresh } else { fresh.saturating_sub(overlap) };
            let mut end = None;
            let mut p = next_para;
            while p < section.para_ends.len() && section.para_ends[p] - start <= target {
                end = Some(section.para_ends[p]);
                p += 1;
            }
            match end {
                Some(e) => {
                    emit(start, e, false);
                    fresh = e;
                    next_para = p;
                }
                None if start < fresh => {
                    // The carried overlap leaves no room for the next
                    // paragraph; retry without it.
                    first = true;
                    continue;
                }
                None => {
                    let e = section.para_ends[next_para];
                    emit(start, e, true);
                    fresh = e;
                    next_para += 1;
                }
            }
            first = false;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub chunk_id: String,
    pub entity_id: String,
    pub text: String,
    pub embedding: Vector,
    #[serde(default)]
    pub oversized: bool,
}

/// Chunks and embeds every document. Chunk ids are `<entity>#<n>`.
pub fn build_chunks(
    docs: &[EntityDocument],
    params: ChunkParams,
    embedder: &dyn Embedder,
) -> Result<Vec<KnowledgeChunk>> {
    let mut pending = Vec::new();
    for d in docs {
        for (i, frag) in chunk_markdown(&d.document, params)?.into_iter().enumerate() {
            pending.push((
                format!("{}#{i}", d.entity_id),
                d.entity_id.clone(),
                frag.text(&d.document).to_owned(),
                frag.oversized,
            ));
        }
    }
    let texts: Vec<&str> = pending.iter().map(|p| p.2.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    Ok(pending
        .into_iter()
        .zip(vectors)
        .map(|((chunk_id, entity_id, text, oversized), embedding)| KnowledgeChunk {
            chunk_id,
            entity_id,
            text,
            embedding,
            oversized,
        })
        .collect())
}

pub fn write_chunks(path: &Path, chunks: &[KnowledgeChunk]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in chunks {
        writeln!(w, "{}", serde_json::to_string(c).expect("chunk serializes"))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_chunks(path: &Path) -> Result<Vec<KnowledgeChunk>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, doc: Option<&str>) -> KgNode {
        KgNode {
            entity_id: id.into(),
            label: id.into(),
            document: doc.map(str::to_owned),
        }
    }

    fn edge(s: &str, t: &str, ty: &str) -> KgEdge {
        KgEdge {
            source: s.into(),
            edge_type: ty.into(),
            target: t.into(),
        }
    }

    fn types(ts: &[&str]) -> BTreeSet<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    fn chain() -> KgSnapshot {
        KgSnapshot::new(
            vec![node("A", Some("a")), node("B", None), node("C", Some("c"))],
            vec![edge("A", "B", "P1"), edge("B", "C", "P1")],
        )
        .unwrap()
    }

    #[test]
    fn expansion_depths() {
        let kg = chain();
        let seeds = vec!["A".to_string()];
        assert_eq!(
            kg.expand_entities(&seeds, &types(&["P1"]), 0).unwrap(),
            types(&["A"])
        );
        assert_eq!(
            kg.expand_entities(&seeds, &types(&["P1"]), 1).unwrap(),
            types(&["A", "B"])
        );
        // Edges are walked backwards too.
        assert_eq!(
            kg.expand_entities(&["C".to_string()], &types(&["P1"]), 2).unwrap(),
            types(&["A", "B", "C"])
        );
        assert_eq!(
            kg.expand_entities(&seeds, &types(&["P2"]), 3).unwrap(),
            types(&["A"])
        );
    }

    #[test]
    fn expansion_errors() {
        let kg = chain();
        assert!(matches!(
            kg.expand_entities(&["Z".to_string()], &types(&["P1"]), 1),
            Err(Error::UnknownId(_))
        ));
        assert!(kg.expand_entities(&["A".to_string()], &types(&[]), 1).is_err());
        assert!(kg.expand_entities(&["A".to_string()], &types(&[]), 0).is_ok());
    }

    #[test]
    fn snapshot_rejects_dangling_edge() {
        assert!(KgSnapshot::new(vec![node("A", None)], vec![edge("A", "B", "P")]).is_err());
    }

    #[test]
    fn missing_documents_are_warnings() {
        let kg = chain();
        let all = types(&["A", "B", "C"]);
        let out = kg.extract_documents(&all);
        assert_eq!(out.documents.len(), 2);
        assert_eq!(out.missing, vec!["B"]);
        assert_eq!(kg.stats().to_string(), "3 nodes, 2 edges, and 2 documents");
    }

    #[test]
    fn snapshot_file_round_trip() {
        let kg = chain();
        let f = tempfile::NamedTempFile::new().unwrap();
        kg.write_jsonl(f.path()).unwrap();
        let back = KgSnapshot::load(f.path()).unwrap();
        assert_eq!(back.stats(), kg.stats());
        assert_eq!(back.node("A"), kg.node("A"));
    }

    #[test]
    fn short_doc_is_one_chunk() {
        let doc = "Just a short paragraph\nwith two lines.";
        let frags = chunk_markdown(doc, ChunkParams::default()).unwrap();
        assert_eq!(frags.len(), 1);
        assert_eq!(frags[0].text(doc), doc);
    }

    #[test]
    fn headings_split_sections() {
        let doc = "## First\n\nalpha beta gamma\n\n## Second\n\ndelta epsilon\n";
        let frags = chunk_markdown(doc, ChunkParams::default()).unwrap();
        assert_eq!(frags.len(), 2);
        assert_eq!(frags[0].text(doc), "## First\n\nalpha beta gamma");
        assert_eq!(frags[1].text(doc), "## Second\n\ndelta epsilon");
    }

    #[test]
    fn fenced_hash_is_not_a_heading() {
        let doc = "intro words\n\n```\n# not a heading\n```\n\nmore";
        let frags = chunk_markdown(doc, ChunkParams::default()).unwrap();
        assert_eq!(frags.len(), 1);
    }

    #[test]
    fn oversized_paragraph_kept_whole() {
        let big: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let doc = format!("small para\n\n{}\n\ntail", big.join(" "));
        let params = ChunkParams {
            target_tokens: 8,
            overlap_tokens: 2,
        };
        let frags = chunk_markdown(&doc, params).unwrap();
        let flagged: Vec<_> = frags.iter().filter(|f| f.oversized).collect();
        assert_eq!(flagged.len(), 1);
        assert_eq!(flagged[0].tokens, 20);
        for f in frags.iter().filter(|f| !f.oversized) {
            assert!(f.tokens <= 8);
        }
    }

    #[test]
    fn chunk_errors() {
        assert!(chunk_markdown("  \n", ChunkParams::default()).is_err());
        let bad = ChunkParams {
            target_tokens: 4,
            overlap_tokens: 4,
        };
        assert!(chunk_markdown("a b", bad).is_err());
    }
}
