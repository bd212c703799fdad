//! Princeton WordNet noun taxonomy.
//!
//! [`Taxonomy::from_dir`] loads `index.noun` and `data.noun` from a WordNet
//! 3.x dictionary directory and resolves the hypernym graph (`@` and `@i`
//! pointers alike). The result is immutable; all queries take `&self` and the
//! type is `Sync`, so one taxonomy can serve any number of reader threads.
//!
//! Depth counts nodes: the root has depth 1. Distances count edges.

mod grind;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use grind::{DataRecord, IndexRecord};

#[derive(Debug, Error)]
pub enum WordNetError {
    #[error("missing WordNet file {0}")]
    MissingFile(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    MalformedLine {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate synset offset {0}")]
    DuplicateSynset(SynsetId),
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
    #[error("taxonomy has no root synset")]
    NoRoot,
}

impl WordNetError {
    pub fn is_io(&self) -> bool {
        matches!(self, WordNetError::MissingFile(_) | WordNetError::Io { .. })
    }
}

/// Synset byte offset in `data.noun`; the numeric part of an ImageNet wnid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynsetId(pub u32);

impl SynsetId {
    /// Parses `n01440764`, `01440764` or `1440764`.
    pub fn parse_wnid(text: &str) -> Option<Self> {
        let digits = text.strip_prefix('n').unwrap_or(text);
        if digits.is_empty() || digits.len() > 8 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok().map(SynsetId)
    }

    /// `n`-prefixed eight-digit form used by ImageNet.
    pub fn wnid(self) -> String {
        format!("n{:08}", self.0)
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}", self.0)
    }
}

impl FromStr for SynsetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SynsetId::parse_wnid(s).ok_or_else(|| format!("invalid synset id {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Synset {
    pub offset: SynsetId,
    pub lemmas: Vec<String>,
    pub gloss: String,
    pub hypernyms: Vec<SynsetId>,
    lex_filenum: u8,
}

/// Problems repaired while resolving the hypernym graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoadWarning {
    DanglingHypernym { synset: SynsetId, target: SynsetId },
    DanglingIndexEntry { lemma: String, target: SynsetId },
    CycleEdgeRemoved { synset: SynsetId, target: SynsetId },
    AttachedToRoot(SynsetId),
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadWarning::DanglingHypernym { synset, target } => {
                write!(f, "synset {synset}: hypernym {target} does not exist; edge dropped")
            }
            LoadWarning::DanglingIndexEntry { lemma, target } => {
                write!(f, "index entry {lemma:?} cites missing synset {target}; sense dropped")
            }
            LoadWarning::CycleEdgeRemoved { synset, target } => {
                write!(f, "hypernym edge {synset} -> {target} closes a cycle; edge dropped")
            }
            LoadWarning::AttachedToRoot(s) => {
                write!(f, "synset {s} does not reach the root; attached under it")
            }
        }
    }
}

/// Normalises a label for lemma lookup: trimmed, lowercased, inner
/// whitespace runs replaced by `_`.
pub fn normalize_lemma(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Taxonomy {
    // sorted by offset, so index order is offset order
    synsets: Vec<Synset>,
    position: HashMap<SynsetId, u32>,
    parents: Vec<Vec<u32>>,
    depth: Vec<u32>,
    lemma_index: HashMap<String, Vec<SynsetId>>,
    index_order: Vec<String>,
    root: u32,
    warnings: Vec<LoadWarning>,
}

/// Parses a WordNet dictionary directory.
pub fn parse_wordnet(dict_dir: impl AsRef<Path>) -> Result<Taxonomy, WordNetError> {
    Taxonomy::from_dir(dict_dir)
}

fn open(path: PathBuf) -> Result<BufReader<File>, WordNetError> {
    if !path.is_file() {
        return Err(WordNetError::MissingFile(path));
    }
    File::open(&path)
        .map(BufReader::new)
        .map_err(|source| WordNetError::Io { path, source })
}

impl Taxonomy {
    pub fn from_dir(dict_dir: impl AsRef<Path>) -> Result<Self, WordNetError> {
        let dir = dict_dir.as_ref();
        let index = open(dir.join("index.noun"))?;
        let data = open(dir.join("data.noun"))?;
        Self::from_readers(index, data)
    }

    pub fn from_readers(index: impl BufRead, data: impl BufRead) -> Result<Self, WordNetError> {
        let data = grind::parse_data(data)?;
        let index = grind::parse_index(index)?;
        Self::build(data, index)
    }

    fn build(mut data: Vec<DataRecord>, index: Vec<IndexRecord>) -> Result<Self, WordNetError> {
        data.sort_by_key(|r| r.offset);
        if let Some(w) = data.windows(2).find(|w| w[0].offset == w[1].offset) {
            return Err(WordNetError::DuplicateSynset(w[0].offset));
        }
        let position: HashMap<SynsetId, u32> = data
            .iter()
            .enumerate()
            .map(|(i, r)| (r.offset, i as u32))
            .collect();
        let mut warnings = Vec::new();

        let mut parents: Vec<Vec<u32>> = data
            .iter()
            .map(|r| {
                r.hypernyms
                    .iter()
                    .filter_map(|h| match position.get(h) {
                        Some(&p) => Some(p),
                        None => {
                            warnings.push(LoadWarning::DanglingHypernym {
                                synset: r.offset,
                                target: *h,
                            });
                            None
                        }
                    })
                    .collect()
            })
            .collect();

        break_cycles(&mut parents, &data, &mut warnings);

        let root = pick_root(&data, &parents).ok_or(WordNetError::NoRoot)?;
        for (i, p) in parents.iter_mut().enumerate() {
            if p.is_empty() && i as u32 != root {
                warnings.push(LoadWarning::AttachedToRoot(data[i].offset));
                p.push(root);
            }
        }
        let depth = node_depths(&parents, root);

        let mut lemma_index = HashMap::with_capacity(index.len());
        let mut index_order = Vec::with_capacity(index.len());
        for rec in index {
            let senses: Vec<SynsetId> = rec
                .offsets
                .into_iter()
                .filter(|o| {
                    let known = position.contains_key(o);
                    if !known {
                        warnings.push(LoadWarning::DanglingIndexEntry {
                            lemma: rec.lemma.clone(),
                            target: *o,
                        });
                    }
                    known
                })
                .collect();
            if !lemma_index.contains_key(&rec.lemma) {
                index_order.push(rec.lemma.clone());
            }
            lemma_index.insert(rec.lemma, senses);
        }

        for w in &warnings {
            log::warn!("{w}");
        }

        let offsets: Vec<SynsetId> = data.iter().map(|r| r.offset).collect();
        let synsets = data
            .into_iter()
            .zip(&parents)
            .map(|(r, ps)| Synset {
                offset: r.offset,
                lemmas: r.lemmas,
                gloss: r.gloss,
                hypernyms: ps.iter().map(|&p| offsets[p as usize]).collect(),
                lex_filenum: r.lex_filenum,
            })
            .collect();
        Ok(Taxonomy {
            synsets,
            position,
            parents,
            depth,
            lemma_index,
            index_order,
            root,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn root(&self) -> SynsetId {
        self.synsets[self.root as usize].offset
    }

    pub fn warnings(&self) -> &[LoadWarning] {
        &self.warnings
    }

    pub fn synset(&self, id: SynsetId) -> Option<&Synset> {
        self.position.get(&id).map(|&i| &self.synsets[i as usize])
    }

    pub fn contains(&self, id: SynsetId) -> bool {
        self.position.contains_key(&id)
    }

    pub fn synsets(&self) -> impl Iterator<Item = &Synset> {
        self.synsets.iter()
    }

    /// Sense-ordered synsets for a lemma; empty when the lemma is unknown.
    pub fn lookup(&self, lemma: &str) -> &[SynsetId] {
        self.lemma_index
            .get(&normalize_lemma(lemma))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn node(&self, id: SynsetId) -> Result<u32, WordNetError> {
        self.position
            .get(&id)
            .copied()
            .ok_or(WordNetError::UnknownSynset(id))
    }

    /// Node count of the shortest hypernym chain from `id` to the root.
    pub fn depth(&self, id: SynsetId) -> Result<u32, WordNetError> {
        Ok(self.depth[self.node(id)? as usize])
    }

    /// Every hypernym ancestor of `id` (itself included at distance 0) with
    /// its minimum edge distance, ordered by offset.
    pub fn ancestors(&self, id: SynsetId) -> Result<Ancestors, WordNetError> {
        Ok(self.ancestors_of(self.node(id)?))
    }

    pub(crate) fn ancestors_of(&self, start: u32) -> Ancestors {
        let mut seen: HashMap<u32, u32> = HashMap::new();
        let mut queue = VecDeque::from([(start, 0u32)]);
        seen.insert(start, 0);
        while let Some((n, d)) = queue.pop_front() {
            for &p in &self.parents[n as usize] {
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(p) {
                    e.insert(d + 1);
                    queue.push_back((p, d + 1));
                }
            }
        }
        let mut nodes: Vec<(u32, u32)> = seen.into_iter().collect();
        nodes.sort_unstable();
        Ancestors { nodes }
    }

    /// Minimum `steps(a→h) + steps(b→h)` over common ancestors `h`, and the
    /// minimising ancestor (smallest offset on ties).
    pub fn shortest_hypernym_distance(
        &self,
        a: SynsetId,
        b: SynsetId,
    ) -> Result<(u32, SynsetId), WordNetError> {
        let aa = self.ancestors(a)?;
        let bb = self.ancestors(b)?;
        let m = aa.meet(&bb);
        Ok((m.distance, self.synsets[m.lcs as usize].offset))
    }

    pub(crate) fn depth_of(&self, node: u32) -> u32 {
        self.depth[node as usize]
    }

    /// Serialises the taxonomy back to grind format as `(index.noun, data.noun)`.
    ///
    /// Offsets are written as identifiers, not recomputed byte positions.
    pub fn to_grind(&self) -> (String, String) {
        let mut data = String::new();
        for s in &self.synsets {
            grind::write_data_line(
                &mut data,
                &DataRecord {
                    offset: s.offset,
                    lex_filenum: s.lex_filenum,
                    lemmas: s.lemmas.clone(),
                    hypernyms: s.hypernyms.clone(),
                    gloss: s.gloss.clone(),
                },
            );
        }
        let mut index = String::new();
        for lemma in &self.index_order {
            grind::write_index_line(
                &mut index,
                &IndexRecord {
                    lemma: lemma.clone(),
                    offsets: self.lemma_index[lemma].clone(),
                },
            );
        }
        (index, data)
    }

    /// Writes `index.noun` and `data.noun` into `dir`.
    pub fn write_dict(&self, dir: impl AsRef<Path>) -> Result<(), WordNetError> {
        let dir = dir.as_ref();
        let (index, data) = self.to_grind();
        for (name, body) in [("index.noun", index), ("data.noun", data)] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| WordNetError::Io { path, source })?;
        }
        Ok(())
    }
}

/// Ancestor closure of one synset: `(node, distance)` sorted by node.
#[derive(Clone, Debug)]
pub struct Ancestors {
    nodes: Vec<(u32, u32)>,
}

pub(crate) struct Meet {
    pub distance: u32,
    pub lcs: u32,
}

impl Ancestors {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Merge-join of two closures. Both contain the root, so a meet exists.
    pub(crate) fn meet(&self, other: &Ancestors) -> Meet {
        let (mut i, mut j) = (0, 0);
        let mut best: Option<(u32, u32)> = None;
        while i < self.nodes.len() && j < other.nodes.len() {
            let (na, da) = self.nodes[i];
            let (nb, db) = other.nodes[j];
            match na.cmp(&nb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let d = da + db;
                    // nodes ascend, so the first hit at a distance has the smallest offset
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, na));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        let (distance, lcs) = best.expect("ancestor closures share the root");
        Meet { distance, lcs }
    }
}

fn pick_root(data: &[DataRecord], parents: &[Vec<u32>]) -> Option<u32> {
    let tops: Vec<u32> = (0..data.len() as u32)
        .filter(|&i| parents[i as usize].is_empty())
        .collect();
    tops.iter()
        .copied()
        .find(|&i| data[i as usize].lemmas.iter().any(|l| l == "entity"))
        .or_else(|| tops.first().copied())
}

/// Removes hypernym edges that close a cycle (iterative DFS, back edges).
fn break_cycles(parents: &mut [Vec<u32>], data: &[DataRecord], warnings: &mut Vec<LoadWarning>) {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = parents.len();
    let mut mark = vec![Mark::New; n];
    for start in 0..n {
        if mark[start] != Mark::New {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        mark[start] = Mark::Active;
        while let Some(&mut (node, ref mut edge)) = stack.last_mut() {
            if *edge < parents[node].len() {
                let target = parents[node][*edge] as usize;
                match mark[target] {
                    Mark::New => {
                        *edge += 1;
                        mark[target] = Mark::Active;
                        stack.push((target, 0));
                    }
                    Mark::Active => {
                        warnings.push(LoadWarning::CycleEdgeRemoved {
                            synset: data[node].offset,
                            target: data[target].offset,
                        });
                        parents[node].remove(*edge);
                    }
                    Mark::Done => *edge += 1,
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
}

/// Breadth-first depths from the root along hyponym edges (root = 1).
fn node_depths(parents: &[Vec<u32>], root: u32) -> Vec<u32> {
    let mut children: Vec<Vec<u32>> = vec![Vec::new(); parents.len()];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p as usize].push(c as u32);
        }
    }
    let mut depth = vec![0u32; parents.len()];
    depth[root as usize] = 1;
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        for &c in &children[n as usize] {
            if depth[c as usize] == 0 {
                depth[c as usize] = depth[n as usize] + 1;
                queue.push_back(c);
            }
        }
    }
    depth
}
