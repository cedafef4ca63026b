//! Model-ready datasets built from parsed notes.

mod split;
mod synthetic;
mod tfidf;
mod vocab;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::note_parser::{ParseError, ParsedNote};

pub use split::{split_dataset, split_sizes, DatasetSplit, MIN_SPLIT_EXAMPLES};
pub use synthetic::{
    filler_words, generate_synthetic_corpus, generate_synthetic_raw, MedicationSpec, PairSpec, SyntheticSpec,
};
pub use tfidf::{densify, vectorize_tfidf, TfidfVectorizer};
pub use vocab::{encode_tokens, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// `(feature index, value)` pairs with increasing indices.
pub type SparseVector = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("corpus has no notes")]
    EmptyCorpus,
    #[error("need at least {MIN_SPLIT_EXAMPLES} examples to split, got {0}")]
    TooFewExamples(usize),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("malformed vocabulary file: {0}")]
    BadVocabulary(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub visit_id: String,
    pub token_indices: Vec<usize>,
    pub tfidf: SparseVector,
    pub labels: Vec<u8>,
    pub admission_med_vector: Vec<u8>,
}

impl EncodedExample {
    pub fn label_vector(&self) -> Vec<f64> {
        self.labels.iter().map(|&b| f64::from(b)).collect()
    }

    /// Number of leading non-padding positions.
    pub fn valid_len(&self) -> usize {
        self.token_indices.iter().position(|&i| i == PAD).unwrap_or(self.token_indices.len())
    }
}

/// Sorted distinct admission-medication strings seen in `notes`.
pub fn build_med_vocab(notes: &[ParsedNote]) -> Vec<String> {
    let set: BTreeSet<&String> = notes.iter().flat_map(|n| &n.admission_meds).collect();
    set.into_iter().cloned().collect()
}

/// Bit `j` is set iff `med_vocab[j]` was listed on admission.
pub fn admission_med_vector(note: &ParsedNote, med_vocab: &[String]) -> Vec<u8> {
    med_vocab.iter().map(|m| u8::from(note.admission_meds.contains(m))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Padded/truncated token sequence length.
    pub seq_len: usize,
    pub min_count: usize,
    pub tfidf_dim: usize,
    /// Notes with fewer tokens than this are dropped before splitting.
    pub min_tokens: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seq_len: 500,
            min_count: 5,
            tfidf_dim: 2500,
            min_tokens: 5,
        }
    }
}

/// Everything the models need, fitted on the training notes only.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub tfidf: TfidfVectorizer,
    pub med_vocab: Vec<String>,
    pub split: DatasetSplit<EncodedExample>,
    pub config: CorpusConfig,
    /// Notes removed for being shorter than `min_tokens`.
    pub dropped: usize,
}

impl Dataset {
    /// Splits `notes`, then fits vocabulary, TF-IDF and admission-med
    /// vocabulary on the training part and encodes every split.
    pub fn build(notes: Vec<ParsedNote>, config: &CorpusConfig, seed: u64) -> Result<Self, CorpusError> {
        if notes.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let before = notes.len();
        let notes: Vec<ParsedNote> = notes.into_iter().filter(|n| n.tokens.len() >= config.min_tokens).collect();
        let dropped = before - notes.len();
        let split = split_dataset(notes, seed)?;
        let vocab = Vocabulary::build(&split.train, config.min_count)?;
        let tfidf = TfidfVectorizer::fit(&split.train, &vocab, config.tfidf_dim.min(vocab.len()));
        let med_vocab = build_med_vocab(&split.train);
        let split = split.map(|n| encode_example(&n, &vocab, &tfidf, &med_vocab, config.seq_len));
        Ok(Self {
            vocab,
            tfidf,
            med_vocab,
            split,
            config: config.clone(),
            dropped,
        })
    }

    pub fn encode(&self, note: &ParsedNote) -> EncodedExample {
        encode_example(note, &self.vocab, &self.tfidf, &self.med_vocab, self.config.seq_len)
    }
}

pub fn encode_example(
    note: &ParsedNote,
    vocab: &Vocabulary,
    tfidf: &TfidfVectorizer,
    med_vocab: &[String],
    seq_len: usize,
) -> EncodedExample {
    EncodedExample {
        visit_id: note.visit_id.clone(),
        token_indices: encode_tokens(note, vocab, seq_len),
        tfidf: tfidf.transform(note, vocab),
        labels: note.labels.clone(),
        admission_med_vector: admission_med_vector(note, med_vocab),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note_parser::NoteParser;

    fn with_meds(meds: &[&str]) -> ParsedNote {
        ParsedNote {
            visit_id: "v".into(),
            sections: Default::default(),
            tokens: vec![],
            admission_meds: meds.iter().map(|s| s.to_string()).collect(),
            labels: vec![1, 0, 0, 0, 0, 0, 0, 0],
        }
    }

    #[test]
    fn admission_vector_cases() {
        let vocab = vec!["asa".to_string(), "lisinopril".to_string()];
        assert_eq!(admission_med_vector(&with_meds(&[]), &vocab), vec![0, 0]);
        assert_eq!(admission_med_vector(&with_meds(&["lisinopril"]), &vocab), vec![0, 1]);
        assert_eq!(admission_med_vector(&with_meds(&["zestril"]), &vocab), vec![0, 0]);
    }

    #[test]
    fn med_vocab_is_sorted_and_distinct() {
        let notes = [with_meds(&["b", "a"]), with_meds(&["a", "c"])];
        assert_eq!(build_med_vocab(&notes), vec!["a", "b", "c"]);
    }

    #[test]
    fn dataset_invariants() {
        let parser = NoteParser::default();
        let spec = SyntheticSpec {
            num_notes: 120,
            ..SyntheticSpec::default()
        };
        let notes = generate_synthetic_corpus(&spec, &parser, 3).unwrap();
        let config = CorpusConfig {
            seq_len: 60,
            min_count: 2,
            tfidf_dim: 50,
            min_tokens: 5,
        };
        let ds = Dataset::build(notes, &config, 11).unwrap();
        assert_eq!(ds.split.sizes(), (96, 12, 12));
        for ex in ds.split.train.iter().chain(&ds.split.validation).chain(&ds.split.test) {
            assert_eq!(ex.token_indices.len(), 60);
            assert!(ex.token_indices.iter().all(|&i| i < ds.vocab.len()));
            assert!(ex.tfidf.iter().all(|&(i, v)| i < ds.tfidf.dim() && v >= 0.0));
            assert_eq!(ex.admission_med_vector.len(), ds.med_vocab.len());
            assert_eq!(ex.labels.len(), 8);
        }
    }
}
