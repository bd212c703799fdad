//! Metric reports: a deterministic JSON document plus a terminal table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use super::DataError;
use crate::similarity::Method;
use crate::{CategoryId, Mode};

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityRef {
    pub method: Method,
    pub digest: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    /// Input name to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassRow {
    pub id: CategoryId,
    pub name: String,
    pub values: BTreeMap<String, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    task: String,
    mode: Mode,
    similarity: Option<SimilarityRef>,
    pub summary: BTreeMap<String, Option<f64>>,
    pub per_class: Vec<ClassRow>,
    pub provenance: Provenance,
}

impl MetricReport {
    /// Open-mode reports must name the similarity matrix they were computed
    /// with.
    pub fn new(task: &str, mode: Mode, similarity: Option<SimilarityRef>) -> Result<Self, DataError> {
        if mode == Mode::Open && similarity.as_ref().map_or(true, |s| s.digest.is_empty()) {
            return Err(DataError::MissingSimilarityDigest);
        }
        Ok(MetricReport {
            task: task.to_string(),
            mode,
            similarity,
            summary: BTreeMap::new(),
            per_class: Vec::new(),
            provenance: Provenance {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                ..Provenance::default()
            },
        })
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn similarity(&self) -> Option<&SimilarityRef> {
        self.similarity.as_ref()
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied().flatten()
    }

    pub fn to_value(&self) -> Value {
        let per_class: Vec<Value> = self
            .per_class
            .iter()
            .map(|row| {
                let mut m = Map::new();
                m.insert("id".into(), json!(row.id));
                m.insert("name".into(), json!(row.name));
                for (k, v) in &row.values {
                    m.insert(k.clone(), number(*v));
                }
                Value::Object(m)
            })
            .collect();
        let summary: Map<String, Value> = self
            .summary
            .iter()
            .map(|(k, v)| (k.clone(), number(*v)))
            .collect();
        let similarity = match &self.similarity {
            Some(s) => json!({"method": s.method.to_string(), "digest": s.digest}),
            None => Value::Null,
        };
        json!({
            "task": self.task,
            "mode": self.mode.to_string(),
            "similarity": similarity,
            "summary": summary,
            "per_class": per_class,
            "provenance": {
                "inputs": self.provenance.inputs,
                "tool_version": self.provenance.tool_version,
                "seed": self.provenance.seed,
            },
        })
    }

    /// Pretty JSON with sorted keys and 6-significant-digit numbers.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("report serialises");
        s.push('\n');
        s
    }

    /// Plain-text table: one row per class, then the column means.
    pub fn render_table(&self) -> String {
        let columns: BTreeSet<&str> = self
            .per_class
            .iter()
            .flat_map(|r| r.values.keys().map(String::as_str))
            .collect();
        let columns: Vec<&str> = columns.into_iter().collect();
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["id".to_string(), "class".to_string()];
        header.extend(columns.iter().map(|c| c.to_string()));
        rows.push(header);
        for r in &self.per_class {
            let mut row = vec![r.id.to_string(), r.name.clone()];
            for c in &columns {
                row.push(cell(r.values.get(*c).copied().flatten()));
            }
            rows.push(row);
        }
        let mut last = vec![String::new(), "mean".to_string()];
        for c in &columns {
            let vals: Vec<f64> = self
                .per_class
                .iter()
                .filter_map(|r| r.values.get(*c).copied().flatten())
                .collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            last.push(cell(mean));
        }
        rows.push(last);

        let widths: Vec<usize> = (0..rows[0].len())
            .map(|k| rows.iter().map(|r| r[k].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    if k == 1 {
                        format!("{s:<w$}", w = widths[k])
                    } else {
                        format!("{s:>w$}", w = widths[k])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.4}", x),
        None => "-".into(),
    }
}

/// Rounds to 6 significant digits; non-finite values become null.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn number(v: Option<f64>) -> Value {
    match v {
        Some(x) if x.is_finite() => json!(round_sig(x)),
        _ => Value::Null,
    }
}
