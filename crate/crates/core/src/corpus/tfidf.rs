use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{SparseVector, Vocabulary, PAD, UNK};
use crate::note_parser::ParsedNote;

/// TF-IDF featurizer fitted on one set of notes (normally the training split).
///
/// Features are the `dim` vocabulary words with the highest document
/// frequency in the fitting notes (ties: lower vocabulary index first).
/// Entry value is `count · max(0, ln(N / (1 + df)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    /// Vocabulary index of each feature, in feature order.
    pub features: Vec<usize>,
    pub idf: Vec<f64>,
    /// Number of notes the statistics were computed on.
    pub num_docs: usize,
}

impl TfidfVectorizer {
    pub fn fit(notes: &[ParsedNote], vocab: &Vocabulary, dim: usize) -> Self {
        let mut df = vec![0usize; vocab.len()];
        for note in notes {
            let seen: HashSet<usize> = note.tokens.iter().filter_map(|t| vocab.get(t)).collect();
            for i in seen {
                df[i] += 1;
            }
        }
        let mut candidates: Vec<usize> = (0..vocab.len()).filter(|&i| i != PAD && i != UNK).collect();
        candidates.sort_by(|&a, &b| df[b].cmp(&df[a]).then(a.cmp(&b)));
        candidates.truncate(dim);
        let n = notes.len() as f64;
        let idf = candidates
            .iter()
            .map(|&i| (n / (1.0 + df[i] as f64)).ln().max(0.0))
            .collect();
        Self {
            features: candidates,
            idf,
            num_docs: notes.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// Sparse vector with strictly increasing feature indices; zero-valued
    /// entries are omitted.
    pub fn transform(&self, note: &ParsedNote, vocab: &Vocabulary) -> SparseVector {
        let feature_of: BTreeMap<usize, usize> = self.features.iter().enumerate().map(|(f, &v)| (v, f)).collect();
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for tok in &note.tokens {
            if let Some(f) = vocab.get(tok).and_then(|v| feature_of.get(&v)) {
                *counts.entry(*f).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .map(|(f, c)| (f, c as f64 * self.idf[f]))
            .filter(|&(_, v)| v > 0.0)
            .collect()
    }
}

/// Fits on `notes` and transforms the same notes.
pub fn vectorize_tfidf(notes: &[ParsedNote], vocab: &Vocabulary, dim: usize) -> (TfidfVectorizer, Vec<SparseVector>) {
    let vec = TfidfVectorizer::fit(notes, vocab, dim);
    let out = notes.iter().map(|n| vec.transform(n, vocab)).collect();
    (vec, out)
}

/// Expands a sparse vector to a dense one of length `dim`.
pub fn densify(v: &SparseVector, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for &(i, x) in v {
        out[i] = x;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn note(tokens: &[&str]) -> ParsedNote {
        ParsedNote {
            visit_id: "v".into(),
            sections: Default::default(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            admission_meds: Default::default(),
            labels: vec![1, 0, 0, 0, 0, 0, 0, 0],
        }
    }

    /// Dense reference: scans every note for every word.
    fn oracle(notes: &[ParsedNote], words: &[&str]) -> Vec<Vec<f64>> {
        let n = notes.len() as f64;
        notes
            .iter()
            .map(|note| {
                words
                    .iter()
                    .map(|w| {
                        let tf = note.tokens.iter().filter(|t| t == w).count() as f64;
                        let df = notes.iter().filter(|d| d.tokens.iter().any(|t| t == w)).count() as f64;
                        (tf * (n / (1.0 + df)).ln()).max(0.0)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn toy_corpus_matches_oracle() {
        let notes = vec![
            note(&["cough", "fever", "cough"]),
            note(&["fever", "rash"]),
            note(&["edema", "cough", "fever"]),
            note(&["fever"]),
            note(&["rash", "rash", "edema", "fever"]),
        ];
        let vocab = Vocabulary::build(&notes, 1).unwrap();
        let (vec, out) = vectorize_tfidf(&notes, &vocab, 4);
        let words: Vec<&str> = vec.features.iter().map(|&i| vocab.word(i)).collect();
        // fever appears in all five notes, so it leads and is clamped to zero
        assert_eq!(words[0], "fever");
        assert_eq!(vec.idf[0], 0.0);
        let expect = oracle(&notes, &words);
        for (got, want) in out.iter().zip(&expect) {
            assert_eq!(&densify(got, 4), want);
        }
    }

    #[test]
    fn single_note_is_clamped_to_zero() {
        let notes = vec![note(&["a", "a", "a"])];
        let vocab = Vocabulary::build(&notes, 1).unwrap();
        let (_, out) = vectorize_tfidf(&notes, &vocab, 1);
        assert!(out[0].is_empty());
    }

    #[test]
    fn absent_word_is_zero() {
        let notes = vec![note(&["a"]), note(&["b"]), note(&["b"]), note(&["c"])];
        let vocab = Vocabulary::build(&notes, 1).unwrap();
        let (vec, out) = vectorize_tfidf(&notes, &vocab, 3);
        let a = vec.features.iter().position(|&i| vocab.word(i) == "a").unwrap();
        assert_eq!(densify(&out[1], 3)[a], 0.0);
        assert!((densify(&out[0], 3)[a] - 2f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn matches_oracle_on_small_corpora(
            docs in proptest::collection::vec(proptest::collection::vec("[a-f]", 1..12), 1..=10),
            dim in 1usize..8,
        ) {
            let notes: Vec<ParsedNote> = docs.iter().map(|d| {
                let r: Vec<&str> = d.iter().map(String::as_str).collect();
                note(&r)
            }).collect();
            let vocab = Vocabulary::build(&notes, 1).unwrap();
            let (vec, out) = vectorize_tfidf(&notes, &vocab, dim);
            let words: Vec<&str> = vec.features.iter().map(|&i| vocab.word(i)).collect();
            let expect = oracle(&notes, &words);
            for (got, want) in out.iter().zip(&expect) {
                let dense = densify(got, vec.dim());
                prop_assert_eq!(&dense, want);
                prop_assert!(dense.iter().all(|&x| x >= 0.0));
            }
        }
    }
}
