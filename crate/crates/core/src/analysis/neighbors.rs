use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::corpus::{Vocabulary, PAD, UNK};
use crate::ndgrad::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub query: String,
    pub neighbor: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborReport {
    pub entries: Vec<Neighbor>,
}

fn is_real(index: usize) -> bool {
    index != PAD && index != UNK
}

/// Closest other real word by Euclidean distance between embedding rows.
///
/// Padding and unknown markers are neither valid queries nor candidates.
/// Equal distances go to the lexicographically smaller word.
pub fn nearest_neighbor(word: &str, embedding: &Tensor, vocab: &Vocabulary) -> Result<Neighbor, AnalysisError> {
    let q = vocab
        .get(word)
        .filter(|&i| is_real(i))
        .ok_or_else(|| AnalysisError::UnknownWord(word.to_string()))?;
    if embedding.rows() != vocab.len() {
        return Err(AnalysisError::DimMismatch {
            what: "embedding rows",
            expected: vocab.len(),
            got: embedding.rows(),
        });
    }
    let qv = embedding.row(q);
    let mut best: Option<(f64, &str)> = None;
    for i in (0..vocab.len()).filter(|&i| is_real(i) && i != q) {
        let d = qv
            .iter()
            .zip(embedding.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let w = vocab.word(i);
        let closer = match best {
            None => true,
            Some((bd, bw)) => d < bd || (d == bd && w < bw),
        };
        if closer {
            best = Some((d, w));
        }
    }
    let (distance, neighbor) = best.ok_or(AnalysisError::NoCandidates)?;
    Ok(Neighbor {
        query: word.to_string(),
        neighbor: neighbor.to_string(),
        distance,
    })
}

/// Neighbors of every query; unknown words are an error.
pub fn neighbor_report(queries: &[&str], embedding: &Tensor, vocab: &Vocabulary) -> Result<NeighborReport, AnalysisError> {
    let entries = queries
        .iter()
        .map(|q| nearest_neighbor(q, embedding, vocab))
        .collect::<Result<_, _>>()?;
    Ok(NeighborReport { entries })
}
