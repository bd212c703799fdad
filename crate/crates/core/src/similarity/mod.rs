//! Label-to-label semantic similarity and the similarity matrix built from it.
//!
//! Two families are supported: WordNet measures (Path and Wu-Palmer) over a
//! [`Taxonomy`], and clamped cosine over precomputed word vectors
//! ([`EmbeddingTable`]). Labels missing from WordNet must carry an `alias`
//! naming a replacement synset (typically a hypernym); labels missing from an
//! embedding table get a seeded random vector.

mod embedding;
mod matrix;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embedding::{clamped_cosine, embedding_similarity, EmbeddingTable};
pub use matrix::{population_stats, MatrixStats, SimilarityMatrix};

use crate::wordnet::{Ancestors, SynsetId, Taxonomy, WordNetError};
use crate::CategoryId;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("labels cannot be resolved to WordNet synsets (supply a wnid or alias): {}", .0.join(", "))]
    UnresolvableLabel(Vec<String>),
    #[error("embedding line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding line {line}: {reason}")]
    Embedding { line: usize, reason: String },
    #[error("duplicate label id {0}")]
    DuplicateLabelId(CategoryId),
    #[error("invalid similarity matrix: {0}")]
    InvalidMatrix(String),
    #[error("similarity matrix lacks categories: {}", .0.join(", "))]
    MissingCategories(Vec<String>),
    #[error("malformed similarity matrix file: {0}")]
    Parse(String),
    #[error("method {0} needs a {1} backend")]
    BackendMismatch(Method, &'static str),
    #[error(transparent)]
    WordNet(#[from] WordNetError),
}

/// One entry of an ordered label set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    pub id: CategoryId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wnid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
}

impl LabelSpec {
    pub fn named(id: CategoryId, name: &str) -> Self {
        LabelSpec {
            name: name.to_string(),
            id,
            wnid: None,
            alias: None,
        }
    }

    pub fn with_wnid(mut self, wnid: &str) -> Self {
        self.wnid = Some(wnid.to_string());
        self
    }

    pub fn with_alias(mut self, alias: &str) -> Self {
        self.alias = Some(alias.to_string());
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Path,
    #[serde(rename = "wup")]
    WuPalmer,
    Embedding,
    Identity,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Path => "path",
            Method::WuPalmer => "wup",
            Method::Embedding => "embedding",
            Method::Identity => "identity",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(Method::Path),
            "wup" | "wu-palmer" | "wupalmer" => Ok(Method::WuPalmer),
            "embedding" | "cosine" => Ok(Method::Embedding),
            "identity" => Ok(Method::Identity),
            other => Err(format!("unknown similarity method {other:?}")),
        }
    }
}

/// How a label with several WordNet senses is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensePolicy {
    /// Maximum over all pairs of resolved senses.
    #[default]
    MaxSense,
    /// First listed sense of each label only.
    FirstSense,
}

impl FromStr for SensePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" | "max-sense" | "max_sense" => Ok(SensePolicy::MaxSense),
            "first" | "first-sense" | "first_sense" => Ok(SensePolicy::FirstSense),
            other => Err(format!("unknown sense policy {other:?}")),
        }
    }
}

/// `1 / (1 + d)` with `d` the shortest hypernym-path distance.
pub fn path_similarity(t: &Taxonomy, a: SynsetId, b: SynsetId) -> Result<f64, WordNetError> {
    let (d, _) = t.shortest_hypernym_distance(a, b)?;
    Ok(path_from_distance(d))
}

/// `2·D / (da + db + 2·D)` where `D` is the depth of the lowest common
/// subsumer (root depth 1) and `da`, `db` the edge counts up to it.
pub fn wup_similarity(t: &Taxonomy, a: SynsetId, b: SynsetId) -> Result<f64, WordNetError> {
    let (d, lcs) = t.shortest_hypernym_distance(a, b)?;
    Ok(wup_from_parts(d, t.depth(lcs)?))
}

#[inline]
fn path_from_distance(d: u32) -> f64 {
    1.0 / (1.0 + d as f64)
}

#[inline]
fn wup_from_parts(distance: u32, lcs_depth: u32) -> f64 {
    let dl = 2.0 * lcs_depth as f64;
    dl / (distance as f64 + dl)
}

/// Synsets a label stands for: its `wnid`, else its `alias` (an offset or a
/// lemma), else the senses of its normalised name.
pub fn resolve_label(t: &Taxonomy, label: &LabelSpec) -> Vec<SynsetId> {
    if let Some(w) = &label.wnid {
        return SynsetId::parse_wnid(w)
            .filter(|id| t.contains(*id))
            .into_iter()
            .collect();
    }
    if let Some(alias) = &label.alias {
        if let Some(id) = SynsetId::parse_wnid(alias) {
            return if t.contains(id) { vec![id] } else { Vec::new() };
        }
        return t.lookup(alias).to_vec();
    }
    t.lookup(&label.name).to_vec()
}

fn senses_for(t: &Taxonomy, label: &LabelSpec, policy: SensePolicy) -> Result<Vec<SynsetId>, SimilarityError> {
    let mut senses = resolve_label(t, label);
    if senses.is_empty() {
        return Err(SimilarityError::UnresolvableLabel(vec![label.name.clone()]));
    }
    if policy == SensePolicy::FirstSense {
        senses.truncate(1);
    }
    Ok(senses)
}

/// Similarity of two labels under a WordNet method.
pub fn label_similarity(
    t: &Taxonomy,
    a: &LabelSpec,
    b: &LabelSpec,
    method: Method,
    policy: SensePolicy,
) -> Result<f64, SimilarityError> {
    let sa = senses_for(t, a, policy)?;
    let sb = senses_for(t, b, policy)?;
    let mut best = 0.0f64;
    for &x in &sa {
        for &y in &sb {
            let v = match method {
                Method::Path => path_similarity(t, x, y)?,
                Method::WuPalmer => wup_similarity(t, x, y)?,
                Method::Identity => f64::from(u8::from(x == y)),
                Method::Embedding => return Err(SimilarityError::BackendMismatch(method, "embedding")),
            };
            best = best.max(v);
        }
    }
    Ok(best)
}

/// Source of pairwise similarities for [`build_matrix`].
#[derive(Clone, Copy)]
pub enum Backend<'a> {
    WordNet(&'a Taxonomy),
    Embedding(&'a EmbeddingTable),
}

/// Builds the full matrix. Pairs are evaluated on the rayon pool; every
/// entry is a pure function of its pair, so the result does not depend on
/// scheduling.
pub fn build_matrix(
    labels: &[LabelSpec],
    backend: Backend<'_>,
    method: Method,
    policy: SensePolicy,
) -> Result<SimilarityMatrix, SimilarityError> {
    let n = labels.len();
    let upper: Vec<Vec<f64>> = match (backend, method) {
        (Backend::WordNet(t), Method::Path | Method::WuPalmer | Method::Identity) => {
            wordnet_rows(t, labels, method, policy)?
        }
        (Backend::Embedding(e), Method::Embedding) => {
            let vectors: Vec<Vec<f64>> = labels.par_iter().map(|l| e.label_vector(&l.name)).collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (i + 1..n)
                        .map(|j| clamped_cosine(&vectors[i], &vectors[j]))
                        .collect()
                })
                .collect()
        }
        (Backend::WordNet(_), m) => return Err(SimilarityError::BackendMismatch(m, "embedding")),
        (Backend::Embedding(_), m) => return Err(SimilarityError::BackendMismatch(m, "WordNet")),
    };
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        values[i * n + i] = 1.0;
        for (k, &v) in row.iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    SimilarityMatrix::new(labels.to_vec(), method, values)
}

fn wordnet_rows(
    t: &Taxonomy,
    labels: &[LabelSpec],
    method: Method,
    policy: SensePolicy,
) -> Result<Vec<Vec<f64>>, SimilarityError> {
    let mut senses = Vec::with_capacity(labels.len());
    let mut unresolved = Vec::new();
    for l in labels {
        match senses_for(t, l, policy) {
            Ok(s) => senses.push(s),
            Err(_) => unresolved.push(l.name.clone()),
        }
    }
    if !unresolved.is_empty() {
        return Err(SimilarityError::UnresolvableLabel(unresolved));
    }

    let mut distinct: Vec<SynsetId> = senses.iter().flatten().copied().collect();
    distinct.sort_unstable();
    distinct.dedup();
    let closures: HashMap<SynsetId, Ancestors> = distinct
        .par_iter()
        .map(|&s| Ok((s, t.ancestors(s)?)))
        .collect::<Result<_, WordNetError>>()?;

    let pair = |a: SynsetId, b: SynsetId| -> f64 {
        if a == b {
            return 1.0;
        }
        match method {
            Method::Identity => 0.0,
            _ => {
                let m = closures[&a].meet(&closures[&b]);
                if method == Method::Path {
                    path_from_distance(m.distance)
                } else {
                    wup_from_parts(m.distance, t.depth_of(m.lcs))
                }
            }
        }
    };

    let n = labels.len();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    senses[i]
                        .iter()
                        .flat_map(|&a| senses[j].iter().map(move |&b| (a, b)))
                        .map(|(a, b)| pair(a, b))
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect())
}
