use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::CorpusError;
use crate::note_parser::ParsedNote;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Word ↔ index map. Index 0 is padding and index 1 stands for unknown words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
}

impl Vocabulary {
    /// Keeps every token whose total count reaches `min_count`, ordered by
    /// count descending then lexicographically.
    pub fn build(notes: &[ParsedNote], min_count: usize) -> Result<Self, CorpusError> {
        if notes.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for note in notes {
            let mut seen = HashSet::new();
            for tok in &note.tokens {
                let entry = counts.entry(tok.as_str()).or_default();
                entry.0 += 1;
                if seen.insert(tok.as_str()) {
                    entry.1 += 1;
                }
            }
        }
        let mut kept: Vec<(&str, usize, usize)> = counts
            .into_iter()
            .filter(|(w, (c, _))| *c >= min_count.max(1) && *w != PAD_TOKEN && *w != UNK_TOKEN)
            .map(|(w, (c, df))| (w, c, df))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut words = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut doc_freq = vec![0, 0];
        for (w, _, df) in kept {
            words.push(w.to_string());
            doc_freq.push(df);
        }
        Ok(Self::from_parts(words, doc_freq))
    }

    fn from_parts(words: Vec<String>, doc_freq: Vec<usize>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index, doc_freq }
    }

    /// Total entries including pad and unk.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 2
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn index_or_unk(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK)
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    /// `word<TAB>index<TAB>df` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, w) in self.words.iter().enumerate() {
            let _ = writeln!(out, "{w}\t{i}\t{}", self.doc_freq[i]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let mut words = Vec::new();
        let mut doc_freq = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let bad = || CorpusError::BadVocabulary(format!("line {}", line_no + 1));
            let mut parts = line.split('\t');
            let (Some(w), Some(i), Some(df), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad());
            };
            if i.parse::<usize>().map_err(|_| bad())? != words.len() {
                return Err(bad());
            }
            words.push(w.to_string());
            doc_freq.push(df.parse().map_err(|_| bad())?);
        }
        if words.len() < 2 || words[PAD] != PAD_TOKEN || words[UNK] != UNK_TOKEN {
            return Err(CorpusError::BadVocabulary("missing pad/unk entries".into()));
        }
        Ok(Self::from_parts(words, doc_freq))
    }

    /// SHA-256 of [`Vocabulary::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Maps tokens to indices, truncating to `len` and right-padding with [`PAD`].
pub fn encode_tokens(note: &ParsedNote, vocab: &Vocabulary, len: usize) -> Vec<usize> {
    let mut out: Vec<usize> = note.tokens.iter().take(len).map(|t| vocab.index_or_unk(t)).collect();
    out.resize(len, PAD);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn note_with(tokens: &[&str]) -> ParsedNote {
        ParsedNote {
            visit_id: "v".into(),
            sections: Default::default(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            admission_meds: Default::default(),
            labels: vec![1, 0, 0, 0, 0, 0, 0, 0],
        }
    }

    #[test]
    fn min_count_filters() {
        let notes = [note_with(&["a", "a", "b"])];
        let v = Vocabulary::build(&notes, 2).unwrap();
        assert_eq!(v.words(), &["<pad>", "<unk>", "a"]);
        let v = Vocabulary::build(&notes, 1).unwrap();
        assert_eq!(v.words(), &["<pad>", "<unk>", "a", "b"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(Vocabulary::build(&[], 1), Err(CorpusError::EmptyCorpus));
    }

    #[test]
    fn ordering_and_doc_freq() {
        let notes = [note_with(&["b", "c", "c"]), note_with(&["b", "a", "c"])];
        let v = Vocabulary::build(&notes, 1).unwrap();
        assert_eq!(v.words(), &["<pad>", "<unk>", "c", "b", "a"]);
        assert_eq!(v.doc_freq(v.get("c").unwrap()), 2);
        assert_eq!(v.doc_freq(v.get("a").unwrap()), 1);
    }

    #[test]
    fn encode_pad_truncate_unk() {
        let v = Vocabulary::build(&[note_with(&["a"])], 1).unwrap();
        assert_eq!(encode_tokens(&note_with(&["a"]), &v, 3), vec![2, 0, 0]);
        let long: Vec<String> = (0..400).map(|_| "a".to_string()).collect();
        let long_refs: Vec<&str> = long.iter().map(String::as_str).collect();
        let enc = encode_tokens(&note_with(&long_refs), &v, 350);
        assert_eq!(enc, vec![2; 350]);
        assert_eq!(encode_tokens(&note_with(&["zzz"]), &v, 1), vec![UNK]);
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::build(&[note_with(&["x", "y", "y"])], 1).unwrap();
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::from_text("a\t0\t1\n").is_err());
        assert_eq!(v.hash().len(), 64);
    }

    proptest! {
        #[test]
        fn encoded_length_is_exact(tokens in proptest::collection::vec("[a-d]{1,2}", 0..30), len in 1usize..40) {
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            let n = note_with(&refs);
            let v = Vocabulary::build(std::slice::from_ref(&n), 1).unwrap();
            let enc = encode_tokens(&n, &v, len);
            prop_assert_eq!(enc.len(), len);
            prop_assert!(enc.iter().all(|&i| i < v.len()));
        }

        #[test]
        fn build_is_permutation_invariant(
            docs in proptest::collection::vec(proptest::collection::vec("[a-e]", 0..8), 1..6).prop_shuffle()
        ) {
            let notes: Vec<ParsedNote> = docs.iter().map(|d| {
                let r: Vec<&str> = d.iter().map(String::as_str).collect();
                note_with(&r)
            }).collect();
            let mut reversed = notes.clone();
            reversed.reverse();
            prop_assert_eq!(Vocabulary::build(&notes, 1).unwrap(), Vocabulary::build(&reversed, 1).unwrap());
        }
    }
}
