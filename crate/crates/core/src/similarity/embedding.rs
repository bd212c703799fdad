//! Word-vector tables in the plain-text `word v1 v2 … vd` layout.

use std::collections::HashMap;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{LabelSpec, SimilarityError};
use crate::wordnet::normalize_lemma;

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    rng_seed: u64,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, rng_seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dimension,
            vectors: HashMap::new(),
            rng_seed,
        }
    }

    /// Reads one vector per line. A leading `count dim` header line (word2vec
    /// text format) is accepted and skipped.
    pub fn from_reader(reader: impl BufRead, rng_seed: u64) -> Result<Self, SimilarityError> {
        let mut dimension = 0usize;
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| SimilarityError::Embedding {
                line: i + 1,
                reason: e.to_string(),
            })?;
            let mut toks = line.split(' ').filter(|t| !t.is_empty());
            let Some(word) = toks.next() else { continue };
            let rest: Vec<&str> = toks.collect();
            if i == 0 && rest.len() == 1 && word.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok() {
                continue;
            }
            let vector = rest
                .iter()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| SimilarityError::Embedding {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if vector.is_empty() {
                return Err(SimilarityError::Embedding {
                    line: i + 1,
                    reason: "word without components".into(),
                });
            }
            if dimension == 0 {
                dimension = vector.len();
            } else if vector.len() != dimension {
                return Err(SimilarityError::DimensionMismatch {
                    line: i + 1,
                    expected: dimension,
                    found: vector.len(),
                });
            }
            vectors.insert(word.to_lowercase(), vector);
        }
        if dimension == 0 {
            return Err(SimilarityError::Embedding {
                line: 0,
                reason: "no vectors".into(),
            });
        }
        Ok(EmbeddingTable {
            dimension,
            vectors,
            rng_seed,
        })
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<(), SimilarityError> {
        if vector.len() != self.dimension {
            return Err(SimilarityError::DimensionMismatch {
                line: 0,
                expected: self.dimension,
                found: vector.len(),
            });
        }
        self.vectors.insert(word.to_lowercase(), vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Stand-in vector for an out-of-vocabulary word: i.i.d. uniform(−0.5, 0.5)
    /// components from a generator keyed by `(rng_seed, word)`.
    pub fn synthesize(&self, word: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.rng_seed.to_le_bytes());
        hasher.update(word.as_bytes());
        let seed: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dimension).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    fn word_vector(&self, word: &str) -> Vec<f64> {
        match self.vectors.get(word) {
            Some(v) => v.clone(),
            None => self.synthesize(word),
        }
    }

    /// Vector for a label: the whole phrase if the table has it, otherwise
    /// the mean of its word vectors.
    pub fn label_vector(&self, text: &str) -> Vec<f64> {
        let phrase = normalize_lemma(text);
        if let Some(v) = self.vectors.get(&phrase) {
            return v.clone();
        }
        let words: Vec<&str> = phrase
            .split(['_', '-'])
            .filter(|w| !w.is_empty())
            .collect();
        if words.len() <= 1 {
            return self.word_vector(&phrase);
        }
        let mut mean = vec![0.0; self.dimension];
        for w in &words {
            for (m, x) in mean.iter_mut().zip(self.word_vector(w)) {
                *m += x;
            }
        }
        let n = words.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Cosine similarity clamped to `[0, 1]`; zero vectors give 0.
pub fn clamped_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

pub fn embedding_similarity(table: &EmbeddingTable, a: &LabelSpec, b: &LabelSpec) -> f64 {
    clamped_cosine(&table.label_vector(&a.name), &table.label_vector(&b.name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} != {b}");
    }

    fn table() -> EmbeddingTable {
        let text = "sea 1 0 0\nlion 0 1 0\nleft 1 0 0\nright -1 0 0\n";
        EmbeddingTable::from_reader(text.as_bytes(), 42).unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let t = table();
        let a = LabelSpec::named(1, "lion");
        assert_close(embedding_similarity(&t, &a, &a), 1.0);
    }

    #[test]
    fn negative_cosine_clamps_to_zero() {
        let t = table();
        let s = embedding_similarity(&t, &LabelSpec::named(1, "left"), &LabelSpec::named(2, "right"));
        assert_eq!(s, 0.0);
    }

    #[test]
    fn multiword_labels_average_their_words() {
        let t = table();
        let s = embedding_similarity(&t, &LabelSpec::named(1, "sea lion"), &LabelSpec::named(2, "lion"));
        assert_close(s, 0.5f64.sqrt());
        assert!((s - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn unknown_words_are_deterministic() {
        let t = table();
        let a = t.synthesize("zebra");
        assert_eq!(a, table().synthesize("zebra"));
        assert_ne!(a, t.synthesize("zebrb"));
        assert!(a.iter().all(|x| (-0.5..0.5).contains(x)));
        let other_seed = EmbeddingTable::from_reader("x 1 2 3\n".as_bytes(), 43).unwrap();
        assert_ne!(a, other_seed.synthesize("zebra"));
    }

    #[test]
    fn rejects_ragged_tables() {
        let err = EmbeddingTable::from_reader("a 1 2 3\nb 1 2\n".as_bytes(), 0).unwrap_err();
        assert!(matches!(
            err,
            SimilarityError::DimensionMismatch { line: 2, expected: 3, found: 2 }
        ));
    }

    #[test]
    fn skips_word2vec_header() {
        let t = EmbeddingTable::from_reader("2 3\na 1 2 3\nb 3 2 1\n".as_bytes(), 0).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dimension(), 3);
    }
}
