use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LabelSpec, Method, SimilarityError};
use crate::CategoryId;

/// Square label-similarity matrix over an ordered label set.
///
/// Entries lie in `[0, 1]`, the diagonal is exactly 1 and mirrored entries
/// are bit-identical. Construction validates all three.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    labels: Vec<LabelSpec>,
    method: Method,
    values: Vec<f64>,
    by_id: HashMap<CategoryId, usize>,
}

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    labels: Vec<LabelSpec>,
    method: Method,
    values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixStats {
    pub mean: f64,
    pub std: f64,
}

fn id_index(labels: &[LabelSpec]) -> Result<HashMap<CategoryId, usize>, SimilarityError> {
    let mut by_id = HashMap::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        if by_id.insert(l.id, i).is_some() {
            return Err(SimilarityError::DuplicateLabelId(l.id));
        }
    }
    Ok(by_id)
}

impl SimilarityMatrix {
    pub fn new(labels: Vec<LabelSpec>, method: Method, values: Vec<f64>) -> Result<Self, SimilarityError> {
        let n = labels.len();
        let invalid = |msg: String| Err(SimilarityError::InvalidMatrix(msg));
        if values.len() != n * n {
            return invalid(format!("{} values for {n} labels", values.len()));
        }
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return invalid(format!("diagonal entry {i} is {}", values[i * n + i]));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return invalid(format!("entry ({i},{j}) = {v} outside [0,1]"));
                }
                if v.to_bits() != values[j * n + i].to_bits() {
                    return invalid(format!("entries ({i},{j}) and ({j},{i}) differ"));
                }
            }
        }
        let by_id = id_index(&labels)?;
        Ok(SimilarityMatrix {
            labels,
            method,
            values,
            by_id,
        })
    }

    pub fn identity(labels: Vec<LabelSpec>) -> Result<Self, SimilarityError> {
        let n = labels.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self::new(labels, Method::Identity, values)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[LabelSpec] {
        &self.labels
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Row-major entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.labels.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.labels.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn index_of(&self, id: CategoryId) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    /// Re-indexes the matrix to the given category order. Every id must be
    /// present; labels not listed are dropped.
    pub fn aligned_to(&self, ids: &[CategoryId]) -> Result<SimilarityMatrix, SimilarityError> {
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !self.by_id.contains_key(id))
            .map(|id| id.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(SimilarityError::MissingCategories(missing));
        }
        let idx: Vec<usize> = ids.iter().map(|id| self.by_id[id]).collect();
        let n = idx.len();
        let mut values = Vec::with_capacity(n * n);
        for &i in &idx {
            for &j in &idx {
                values.push(self.get(i, j));
            }
        }
        let labels = idx.iter().map(|&i| self.labels[i].clone()).collect();
        Self::new(labels, self.method, values)
    }

    /// Population mean and standard deviation over every entry, diagonal
    /// included.
    pub fn stats(&self) -> MatrixStats {
        population_stats(self.values.iter().copied())
    }

    /// Same as [`stats`](Self::stats) but over off-diagonal entries only.
    pub fn stats_off_diagonal(&self) -> MatrixStats {
        let n = self.labels.len();
        population_stats(
            self.values
                .iter()
                .enumerate()
                .filter(|(k, _)| k / n != k % n)
                .map(|(_, v)| *v),
        )
    }

    pub fn to_json(&self) -> String {
        let file = MatrixFile {
            labels: self.labels.clone(),
            method: self.method,
            values: self.values.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("matrix serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SimilarityError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: MatrixFile = serde_path_to_error::deserialize(de)
            .map_err(|e| SimilarityError::Parse(format!("{}: {}", e.path(), e.inner())))?;
        Self::new(file.labels, file.method, file.values)
    }

    /// CSV export with a header row and column of label names.
    pub fn to_csv(&self) -> String {
        fn field(s: &str) -> String {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        }
        let mut out = String::new();
        for l in &self.labels {
            out.push(',');
            out.push_str(&field(&l.name));
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&field(&l.name));
            for v in self.row(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical JSON serialisation, hex-encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

pub fn population_stats(values: impl Iterator<Item = f64> + Clone) -> MatrixStats {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        return MatrixStats { mean: 0.0, std: 0.0 };
    }
    let mean = sum / count as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    MatrixStats {
        mean,
        std: var.sqrt(),
    }
}
