//! Token-embedding similarity in the BERTScore style: every token is matched
//! greedily to its most similar counterpart in the other text by cosine
//! similarity, giving precision over candidate tokens, recall over
//! reference tokens, and their F1.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::tokenize;

pub const DEFAULT_OOV_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("{0} text has no tokens")]
    EmptyText(&'static str),
    #[error("embedding file: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedding file line {line}: {reason}")]
    BadEmbedding { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub trait SimilarityScorer: Send + Sync {
    fn score(&self, candidate: &str, reference: &str) -> Result<SimilarityScore, SimilarityError>;
}

/// Token to unit vector. Tokens outside the table get a fixed
/// pseudo-random unit vector derived from their bytes, so unrelated unknown
/// words land near orthogonal while identical words still match exactly.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

impl EmbeddingTable {
    /// An empty table: every token uses its hashed vector.
    pub fn hashed(dim: usize) -> Self {
        EmbeddingTable {
            dim: dim.max(1),
            vectors: HashMap::new(),
        }
    }

    /// Builds a table from explicit vectors, normalizing each one.
    pub fn from_vectors<I, S>(entries: I) -> Result<Self, SimilarityError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, (token, v)) in entries.into_iter().enumerate() {
            let line = i + 1;
            if *dim.get_or_insert(v.len()) != v.len() || v.is_empty() {
                return Err(SimilarityError::BadEmbedding {
                    line,
                    reason: "inconsistent dimension".into(),
                });
            }
            let v = normalize(v).ok_or(SimilarityError::BadEmbedding {
                line,
                reason: "zero or non-finite vector".into(),
            })?;
            vectors.insert(token.into(), v);
        }
        Ok(EmbeddingTable {
            dim: dim.unwrap_or(DEFAULT_OOV_DIM),
            vectors,
        })
    }

    /// Reads whitespace-separated `token v1 .. vn` lines.
    pub fn load(path: &Path) -> Result<Self, SimilarityError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let v: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let v = v.map_err(|e| SimilarityError::BadEmbedding {
                line: i + 1,
                reason: e.to_string(),
            })?;
            entries.push((token.to_lowercase(), v));
        }
        Self::from_vectors(entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.vectors.get(token) {
            return v.clone();
        }
        let digest = Sha256::digest(token.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Some(v) = normalize(v) {
                return v;
            }
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// F1 of precision and recall. When either is not positive the harmonic
/// mean is undefined or misleading, so the smaller of the two is used.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        precision.min(recall)
    }
}

/// Greedy-matching scorer over an [`EmbeddingTable`].
#[derive(Debug, Clone)]
pub struct TokenEmbeddingScorer {
    table: EmbeddingTable,
}

impl TokenEmbeddingScorer {
    pub fn new(table: EmbeddingTable) -> Self {
        TokenEmbeddingScorer { table }
    }
}

impl Default for TokenEmbeddingScorer {
    fn default() -> Self {
        TokenEmbeddingScorer::new(EmbeddingTable::hashed(DEFAULT_OOV_DIM))
    }
}

impl SimilarityScorer for TokenEmbeddingScorer {
    fn score(&self, candidate: &str, reference: &str) -> Result<SimilarityScore, SimilarityError> {
        let embed = |text: &str, which| {
            let tokens = tokenize(text);
            if tokens.is_empty() {
                return Err(SimilarityError::EmptyText(which));
            }
            Ok(tokens.iter().map(|t| self.table.vector(t)).collect::<Vec<_>>())
        };
        let cand = embed(candidate, "candidate")?;
        let refs = embed(reference, "reference")?;
        let sims: Vec<Vec<f64>> = cand
            .iter()
            .map(|c| refs.iter().map(|r| cosine(c, r)).collect())
            .collect();
        let best_max = |xs: &mut dyn Iterator<Item = f64>| xs.fold(f64::NEG_INFINITY, f64::max);
        let precision = sims.iter().map(|row| best_max(&mut row.iter().copied())).sum::<f64>() / cand.len() as f64;
        let recall = (0..refs.len())
            .map(|j| best_max(&mut sims.iter().map(|row| row[j])))
            .sum::<f64>()
            / refs.len() as f64;
        Ok(SimilarityScore {
            precision,
            recall,
            f1: f1(precision, recall),
        })
    }
}

/// F1 similarity between a candidate reply and a reference reply.
pub fn score_semantic_similarity(
    scorer: &dyn SimilarityScorer,
    candidate: &str,
    reference: &str,
) -> Result<f64, SimilarityError> {
    scorer.score(candidate, reference).map(|s| s.f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy() -> TokenEmbeddingScorer {
        TokenEmbeddingScorer::new(
            EmbeddingTable::from_vectors([
                ("cat", vec![1.0, 0.0]),
                ("dog", vec![0.6, 0.8]),
                ("car", vec![0.0, 1.0]),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn toy_table_by_hand() {
        // cat vs {dog, car}: best match for cat is dog (0.6) -> P = 0.6.
        // dog's best is cat (0.6), car's best is cat (0.0) -> R = 0.3.
        // F1 = 2 * 0.18 / 0.9 = 0.4.
        let s = toy().score("cat", "dog car").unwrap();
        assert_relative_eq!(s.precision, 0.6, epsilon = 1e-12);
        assert_relative_eq!(s.recall, 0.3, epsilon = 1e-12);
        assert_relative_eq!(s.f1, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn identical_text_scores_one() {
        let scorer = TokenEmbeddingScorer::default();
        let s = scorer
            .score("switching Master Bedroom state", "switching master bedroom state")
            .unwrap();
        assert_relative_eq!(s.f1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_text_is_an_error() {
        let scorer = toy();
        assert!(matches!(
            scorer.score("", "cat"),
            Err(SimilarityError::EmptyText("candidate"))
        ));
        assert!(matches!(
            scorer.score("cat", " ,. "),
            Err(SimilarityError::EmptyText("reference"))
        ));
    }

    #[test]
    fn vectors_are_normalized_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "Cat 3 4\ndog 0 2\n").unwrap();
        let table = EmbeddingTable::load(&path).unwrap();
        assert_eq!(table.vector("cat"), vec![0.6, 0.8]);
        assert_eq!(table.vector("dog"), vec![0.0, 1.0]);
        std::fs::write(&path, "cat 1 0\ndog 1\n").unwrap();
        assert!(matches!(
            EmbeddingTable::load(&path),
            Err(SimilarityError::BadEmbedding { line: 2, .. })
        ));
        std::fs::write(&path, "cat 0 0\n").unwrap();
        assert!(EmbeddingTable::load(&path).is_err());
    }

    #[test]
    fn oov_vectors_are_deterministic_units() {
        let t = EmbeddingTable::hashed(16);
        let v = t.vector("blinds");
        assert_eq!(v, t.vector("blinds"));
        assert_ne!(v, t.vector("blind"));
        assert_relative_eq!(v.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn f1_edge_rule() {
        assert_relative_eq!(f1(0.5, 0.5), 0.5);
        assert_eq!(f1(0.0, 0.7), 0.0);
        assert_eq!(f1(-0.2, 0.7), -0.2);
    }

    proptest! {
        #[test]
        fn score_is_bounded_and_symmetric_in_roles(
            a in "[a-e]{1,3}( [a-e]{1,3}){0,5}",
            b in "[a-e]{1,3}( [a-e]{1,3}){0,5}",
        ) {
            let scorer = TokenEmbeddingScorer::new(EmbeddingTable::hashed(8));
            let ab = scorer.score(&a, &b).unwrap();
            let ba = scorer.score(&b, &a).unwrap();
            for x in [ab.precision, ab.recall, ab.f1] {
                prop_assert!((-1.0..=1.0).contains(&x));
            }
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert_eq!(ab.recall, ba.precision);
            let same = scorer.score(&a, &a).unwrap();
            prop_assert!((same.f1 - 1.0).abs() < 1e-12);
        }
    }
}
