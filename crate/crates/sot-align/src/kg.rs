//! Knowledge-graph data model and TSV ingestion.
//!
//! A [`KnowledgeGraph`] holds one side of an alignment problem: entities with
//! dense integer ids, relation triples over those ids, and an undirected
//! adjacency derived from the triples. Ids are assigned in first-appearance
//! order of the names file so that every downstream matrix can index entities
//! by position.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SotError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    /// Dense index within this KG, contiguous `0..|E|`.
    pub id: usize,
    /// Opaque unique identifier from the input files.
    pub external_key: String,
    /// Human-readable (possibly pre-translated) name.
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationTriple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub entities: Vec<Entity>,
    pub relation_names: Vec<String>,
    pub triples: Vec<RelationTriple>,
    /// Per-entity `(neighbor, relation)` lists: the undirected closure of
    /// `triples`, sorted and deduplicated per entity.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entity_id(&self, external_key: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.external_key == external_key)
    }

    /// Distinct neighbor ids of `id`, ascending, ignoring relation types.
    pub fn neighbors(&self, id: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.adjacency[id].iter().map(|&(n, _)| n).collect();
        out.dedup();
        out
    }

    /// Build a graph from in-memory parts, deriving adjacency and validating
    /// ids. Used by loaders and the synthetic generator.
    pub fn from_parts(
        entities: Vec<Entity>,
        relation_names: Vec<String>,
        triples: Vec<RelationTriple>,
    ) -> Result<Self> {
        let n = entities.len();
        for (i, e) in entities.iter().enumerate() {
            if e.id != i {
                return Err(SotError::Shape(format!(
                    "entity ids must be contiguous: found id {} at position {}",
                    e.id, i
                )));
            }
        }
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for t in &triples {
            if t.head >= n || t.tail >= n {
                return Err(SotError::Shape(format!(
                    "triple ({}, {}, {}) references entity outside 0..{}",
                    t.head, t.relation, t.tail, n
                )));
            }
            if t.relation >= relation_names.len() {
                return Err(SotError::Shape(format!(
                    "triple relation index {} outside 0..{}",
                    t.relation,
                    relation_names.len()
                )));
            }
            adjacency[t.head].push((t.tail, t.relation));
            if t.head != t.tail {
                adjacency[t.tail].push((t.head, t.relation));
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(KnowledgeGraph {
            entities,
            relation_names,
            triples,
            adjacency,
        })
    }

    /// Write the names file back out in the loader's TSV format.
    pub fn write_names(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for e in &self.entities {
            buf.push_str(&e.external_key);
            buf.push('\t');
            buf.push_str(&e.name);
            buf.push('\n');
        }
        write_file(path, buf.as_bytes())
    }

    /// Write the triples file back out in the loader's TSV format.
    pub fn write_triples(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for t in &self.triples {
            buf.push_str(&self.entities[t.head].external_key);
            buf.push('\t');
            buf.push_str(&self.relation_names[t.relation]);
            buf.push('\t');
            buf.push_str(&self.entities[t.tail].external_key);
            buf.push('\n');
        }
        write_file(path, buf.as_bytes())
    }
}

/// Gold alignment between two loaded KGs: one-to-one entity pairs plus the
/// per-side dangling sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldStandard {
    /// `(id in KG1, id in KG2)` pairs; injective on both sides.
    pub pairs: Vec<(usize, usize)>,
    pub dangling1: Vec<usize>,
    pub dangling2: Vec<usize>,
}

impl GoldStandard {
    pub fn dangling1_contains(&self, id: usize) -> bool {
        self.dangling1.binary_search(&id).is_ok()
    }

    pub fn dangling2_contains(&self, id: usize) -> bool {
        self.dangling2.binary_search(&id).is_ok()
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| SotError::io(path, e))?;
    f.write_all(bytes).map_err(|e| SotError::io(path, e))
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| SotError::io(path, e))
}

/// Load a KG from a names TSV (`entity_key<TAB>entity_name`) and a triples
/// TSV (`head_key<TAB>relation_name<TAB>tail_key`). Entity ids are assigned
/// in first-appearance order of the names file; relation indices in
/// first-appearance order of the triples file.
pub fn load_kg(triples_path: &Path, names_path: &Path) -> Result<KnowledgeGraph> {
    let names_text = read_to_string(names_path)?;
    let mut entities = Vec::new();
    let mut key_to_id: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in names_text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let key = parts.next().unwrap_or("");
        let name = parts.next().ok_or_else(|| {
            SotError::parse(
                names_path,
                lineno + 1,
                format!("expected 2 tab-separated columns, got 1: {line:?}"),
            )
        })?;
        if key.is_empty() {
            return Err(SotError::parse(names_path, lineno + 1, "empty entity key"));
        }
        if key_to_id.contains_key(key) {
            return Err(SotError::Duplicate {
                what: "entity key".into(),
                key: key.to_string(),
            });
        }
        let id = entities.len();
        key_to_id.insert(key.to_string(), id);
        entities.push(Entity {
            id,
            external_key: key.to_string(),
            name: name.to_string(),
        });
    }

    let triples_text = read_to_string(triples_path)?;
    let mut relation_names = Vec::new();
    let mut relation_to_id: HashMap<String, usize> = HashMap::new();
    let mut triples = Vec::new();
    for (lineno, line) in triples_text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(SotError::parse(
                triples_path,
                lineno + 1,
                format!("expected 3 tab-separated columns, got {}", cols.len()),
            ));
        }
        let head = *key_to_id.get(cols[0]).ok_or_else(|| SotError::Referential {
            key: cols[0].to_string(),
            context: format!("as triple head at {}:{}", triples_path.display(), lineno + 1),
        })?;
        let tail = *key_to_id.get(cols[2]).ok_or_else(|| SotError::Referential {
            key: cols[2].to_string(),
            context: format!("as triple tail at {}:{}", triples_path.display(), lineno + 1),
        })?;
        let relation = *relation_to_id.entry(cols[1].to_string()).or_insert_with(|| {
            relation_names.push(cols[1].to_string());
            relation_names.len() - 1
        });
        triples.push(RelationTriple {
            head,
            relation,
            tail,
        });
    }

    KnowledgeGraph::from_parts(entities, relation_names, triples)
}

/// Load a gold standard from a pairs TSV (`kg1_key<TAB>kg2_key`). When no
/// explicit dangling files are given, each side's dangling set is the
/// complement of its paired entities.
pub fn load_gold(
    pairs_path: &Path,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    dangling1_path: Option<&Path>,
    dangling2_path: Option<&Path>,
) -> Result<GoldStandard> {
    let text = read_to_string(pairs_path)?;
    let mut pairs = Vec::new();
    let mut seen1 = vec![false; kg1.num_entities()];
    let mut seen2 = vec![false; kg2.num_entities()];
    let key_to_id1: HashMap<&str, usize> = kg1
        .entities
        .iter()
        .map(|e| (e.external_key.as_str(), e.id))
        .collect();
    let key_to_id2: HashMap<&str, usize> = kg2
        .entities
        .iter()
        .map(|e| (e.external_key.as_str(), e.id))
        .collect();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(SotError::parse(
                pairs_path,
                lineno + 1,
                format!("expected 2 tab-separated columns, got {}", cols.len()),
            ));
        }
        let id1 = *key_to_id1.get(cols[0]).ok_or_else(|| SotError::Referential {
            key: cols[0].to_string(),
            context: "in gold pairs (KG1 side)".into(),
        })?;
        let id2 = *key_to_id2.get(cols[1]).ok_or_else(|| SotError::Referential {
            key: cols[1].to_string(),
            context: "in gold pairs (KG2 side)".into(),
        })?;
        if seen1[id1] {
            return Err(SotError::Duplicate {
                what: "KG1 entity in gold pairs".into(),
                key: cols[0].to_string(),
            });
        }
        if seen2[id2] {
            return Err(SotError::Duplicate {
                what: "KG2 entity in gold pairs".into(),
                key: cols[1].to_string(),
            });
        }
        seen1[id1] = true;
        seen2[id2] = true;
        pairs.push((id1, id2));
    }

    let dangling1 = match dangling1_path {
        Some(p) => load_dangling(p, &key_to_id1, &seen1)?,
        None => complement(&seen1),
    };
    let dangling2 = match dangling2_path {
        Some(p) => load_dangling(p, &key_to_id2, &seen2)?,
        None => complement(&seen2),
    };

    Ok(GoldStandard {
        pairs,
        dangling1,
        dangling2,
    })
}

fn complement(seen: &[bool]) -> Vec<usize> {
    seen.iter()
        .enumerate()
        .filter(|(_, &s)| !s)
        .map(|(i, _)| i)
        .collect()
}

fn load_dangling(
    path: &Path,
    key_to_id: &HashMap<&str, usize>,
    paired: &[bool],
) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let key = line.trim();
        if key.is_empty() {
            continue;
        }
        let id = *key_to_id.get(key).ok_or_else(|| SotError::Referential {
            key: key.to_string(),
            context: "in dangling file".into(),
        })?;
        if paired[id] {
            return Err(SotError::Duplicate {
                what: "entity both paired and dangling".into(),
                key: key.to_string(),
            });
        }
        out.push(id);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
