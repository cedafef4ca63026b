//! Synthetic discharge notes with controlled label structure.
//!
//! Notes are rendered as raw text (headings, bullet lists, brand names) and
//! then run through [`NoteParser`], so the parser is exercised on every
//! generated record.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::note_parser::{Medication, NoteParser, ParsedNote, RawNote, NUM_MEDICATIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedicationSpec {
    /// Marginal probability of the label (for a pair, of either member).
    pub base_rate: f64,
    /// Tokens that may be planted in the history when the label is on.
    /// They never appear otherwise.
    pub triggers: Vec<String>,
    /// Chance a labelled note receives one of the triggers.
    #[serde(default = "one")]
    pub trigger_prob: f64,
}

/// Two medications drawn jointly: with probability `a`'s base rate at least
/// one of them is on, and given that, both are on with probability `together`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub a: usize,
    pub b: usize,
    pub together: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_notes: usize,
    pub medications: Vec<MedicationSpec>,
    pub pairs: Vec<PairSpec>,
    /// Number of distinct filler pseudo-words.
    pub filler_vocab: usize,
    /// Inclusive range of filler words in the history section.
    pub history_words: (usize, usize),
    /// Chance a discharge medication is also listed on admission.
    pub admission_overlap: f64,
    /// Non-antihypertensive drugs that may appear on the admission list.
    pub admission_pool: Vec<String>,
    pub admission_pool_rate: f64,
    /// Chance a discharge medication is written by brand name when it has one.
    pub brand_rate: f64,
}

fn one() -> f64 {
    1.0
}

const TRIGGERS: [&str; NUM_MEDICATIONS] = ["alphax", "betax", "gammax", "deltax", "epsilonx", "zetax", "etax", "thetax"];
const BASE_RATES: [f64; NUM_MEDICATIONS] = [0.40, 0.35, 0.30, 0.28, 0.25, 0.22, 0.20, 0.18];

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_notes: 2000,
            medications: TRIGGERS
                .iter()
                .zip(BASE_RATES)
                .map(|(t, r)| MedicationSpec {
                    base_rate: r,
                    triggers: vec![t.to_string()],
                    trigger_prob: 1.0,
                })
                .collect(),
            pairs: Vec::new(),
            filler_vocab: 300,
            history_words: (40, 80),
            admission_overlap: 0.5,
            admission_pool: ["aspirin", "atorvastatin", "metformin", "omeprazole", "insulin", "warfarin", "simvastatin", "levothyroxine"]
                .map(String::from)
                .to_vec(),
            admission_pool_rate: 0.3,
            brand_rate: 0.3,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self, parser: &NoteParser) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if self.medications.len() != NUM_MEDICATIONS {
            return bad(format!("expected {NUM_MEDICATIONS} medications, got {}", self.medications.len()));
        }
        for (name, p) in [
            ("admission_overlap", self.admission_overlap),
            ("admission_pool_rate", self.admission_pool_rate),
            ("brand_rate", self.brand_rate),
        ] {
            if !prob_ok(p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.medications.iter().all(|m| m.base_rate == 0.0) && self.num_notes > 0 {
            return bad("every base rate is zero, no note can be labelled".into());
        }
        let filler: HashSet<String> = filler_words(self.filler_vocab, parser).into_iter().collect();
        for (i, m) in self.medications.iter().enumerate() {
            if !prob_ok(m.base_rate) || !prob_ok(m.trigger_prob) {
                return bad(format!("medication {i}: rates must lie in [0, 1]"));
            }
            for t in &m.triggers {
                if parser.normalize_tokens(t) != [t.as_str()] || filler.contains(t) {
                    return bad(format!("trigger `{t}` is not a distinct normalized token"));
                }
            }
            if m.trigger_prob > 0.0 && m.triggers.is_empty() {
                return bad(format!("medication {i}: trigger_prob set without triggers"));
            }
        }
        let mut seen = HashSet::new();
        for p in &self.pairs {
            if !prob_ok(p.together) {
                return bad(format!("pair ({}, {}): together = {} is not a probability", p.a, p.b, p.together));
            }
            if p.a == p.b || p.a >= NUM_MEDICATIONS || p.b >= NUM_MEDICATIONS || !seen.insert(p.a) || !seen.insert(p.b) {
                return bad(format!("pair ({}, {}) must name two distinct, unpaired medications", p.a, p.b));
            }
        }
        if self.history_words.0 > self.history_words.1 || self.filler_vocab == 0 {
            return bad("history_words must be an ordered range and filler_vocab positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        serde_json::from_str(text).map_err(|e| CorpusError::InvalidSpec(e.to_string()))
    }
}

const SYLLABLES_C: &[u8] = b"bdgklmnprstvz";
const SYLLABLES_V: &[u8] = b"aeiou";

/// Deterministic pronounceable pseudo-words of two or more syllables.
pub fn filler_words(count: usize, parser: &NoteParser) -> Vec<String> {
    let base = SYLLABLES_C.len() * SYLLABLES_V.len();
    let mut out = Vec::with_capacity(count);
    let mut i = 0usize;
    while out.len() < count {
        let mut n = i + base;
        let mut w = String::new();
        while n > 0 {
            let s = n % base;
            w.push(SYLLABLES_C[s / SYLLABLES_V.len()] as char);
            w.push(SYLLABLES_V[s % SYLLABLES_V.len()] as char);
            n /= base;
        }
        if !parser.is_stopword(&w) && !TRIGGERS.contains(&w.as_str()) {
            out.push(w);
        }
        i += 1;
    }
    out
}

fn draw_labels(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<u8> {
    loop {
        let mut labels = vec![0u8; NUM_MEDICATIONS];
        let mut paired = [false; NUM_MEDICATIONS];
        for p in &spec.pairs {
            paired[p.a] = true;
            paired[p.b] = true;
            if rng.random::<f64>() < spec.medications[p.a].base_rate {
                if rng.random::<f64>() < p.together {
                    labels[p.a] = 1;
                    labels[p.b] = 1;
                } else if rng.random::<bool>() {
                    labels[p.a] = 1;
                } else {
                    labels[p.b] = 1;
                }
            }
        }
        for (i, m) in spec.medications.iter().enumerate() {
            if !paired[i] && rng.random::<f64>() < m.base_rate {
                labels[i] = 1;
            }
        }
        if labels.contains(&1) {
            return labels;
        }
    }
}

fn brand(med: Medication) -> Option<&'static str> {
    match med {
        Medication::Metoprolol => Some("Lopressor"),
        Medication::Furosemide => Some("Lasix"),
        Medication::Amlodipine => Some("Norvasc"),
        Medication::Hctz => Some("Hydrochlorothiazide"),
        _ => None,
    }
}

fn filler_run(words: &[String], n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..n).map(|_| words.choose(rng).expect("filler vocabulary is non-empty").clone()).collect()
}

fn render_note(spec: &SyntheticSpec, words: &[String], labels: &[u8], rng: &mut ChaCha8Rng) -> String {
    let (lo, hi) = spec.history_words;
    let mut history = filler_run(words, rng.random_range(lo..=hi), rng);
    for (i, m) in spec.medications.iter().enumerate() {
        if labels[i] == 1 && !m.triggers.is_empty() && rng.random::<f64>() < m.trigger_prob {
            let pos = rng.random_range(0..=history.len());
            history.insert(pos, m.triggers.choose(rng).expect("non-empty").clone());
        }
    }

    let mut admission: Vec<String> = Vec::new();
    for med in Medication::ALL {
        if labels[med.index()] == 1 && rng.random::<f64>() < spec.admission_overlap {
            admission.push(med.name().to_string());
        }
    }
    for drug in &spec.admission_pool {
        if rng.random::<f64>() < spec.admission_pool_rate {
            admission.push(drug.clone());
        }
    }

    let mut text = String::new();
    let _ = writeln!(text, "Chief Complaint:\n{}", filler_run(words, 3, rng).join(" "));
    let _ = writeln!(text, "History of Present Illness:\n{}", history.join(" "));
    let _ = writeln!(text, "Past Medical History:\n{}", filler_run(words, 8, rng).join(" "));
    text.push_str("Medications on Admission:\n");
    for (n, drug) in admission.iter().enumerate() {
        let _ = writeln!(text, "{}. {} {} mg PO daily", n + 1, drug, 5 * rng.random_range(1..=20));
    }
    let _ = writeln!(text, "Brief Hospital Course:\n{}", filler_run(words, 12, rng).join(" "));
    text.push_str("Discharge Medications:\n");
    let mut n = 0;
    for med in Medication::ALL {
        if labels[med.index()] == 1 {
            n += 1;
            let name = match brand(med) {
                Some(b) if rng.random::<f64>() < spec.brand_rate => b,
                _ => med.display_name(),
            };
            let _ = writeln!(text, "{n}. {name} {} mg PO BID", 5 * rng.random_range(1..=20));
        }
    }
    text
}

/// Raw note texts plus the labels they were rendered from.
pub fn generate_synthetic_raw(
    spec: &SyntheticSpec,
    parser: &NoteParser,
    seed: u64,
) -> Result<Vec<(RawNote, Vec<u8>)>, CorpusError> {
    spec.validate(parser)?;
    let words = filler_words(spec.filler_vocab, parser);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.num_notes)
        .map(|i| {
            let labels = draw_labels(spec, &mut rng);
            let text = render_note(spec, &words, &labels, &mut rng);
            let raw = RawNote {
                visit_id: format!("synth-{i:06}"),
                text,
            };
            (raw, labels)
        })
        .collect())
}

/// Generates and parses a synthetic corpus.
pub fn generate_synthetic_corpus(
    spec: &SyntheticSpec,
    parser: &NoteParser,
    seed: u64,
) -> Result<Vec<ParsedNote>, CorpusError> {
    generate_synthetic_raw(spec, parser, seed)?
        .into_iter()
        .map(|(raw, labels)| {
            let note = parser
                .parse_note(&raw)?
                .ok_or_else(|| CorpusError::InvalidSpec(format!("{} parsed without labels", raw.visit_id)))?;
            if note.labels != labels {
                return Err(CorpusError::InvalidSpec(format!("{} labels changed on parsing", raw.visit_id)));
            }
            Ok(note)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SyntheticSpec {
        SyntheticSpec {
            num_notes: n,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let p = NoteParser::default();
        let a = generate_synthetic_corpus(&small(50), &p, 9).unwrap();
        let b = generate_synthetic_corpus(&small(50), &p, 9).unwrap();
        let c = generate_synthetic_corpus(&small(50), &p, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn trigger_implies_label() {
        let p = NoteParser::default();
        let notes = generate_synthetic_corpus(&small(300), &p, 1).unwrap();
        let mut with_trigger = 0;
        for n in &notes {
            if n.tokens.iter().any(|t| t == "alphax") {
                with_trigger += 1;
                assert_eq!(n.labels[0], 1);
            }
            // deterministic triggers: the converse holds as well
            for (i, t) in TRIGGERS.iter().enumerate() {
                assert_eq!(n.tokens.iter().any(|x| x == t), n.labels[i] == 1);
            }
        }
        assert!(with_trigger > 0);
    }

    #[test]
    fn pair_co_rate() {
        let p = NoteParser::default();
        let spec = SyntheticSpec {
            num_notes: 5000,
            pairs: vec![PairSpec { a: 2, b: 3, together: 0.9 }],
            ..SyntheticSpec::default()
        };
        let raw = generate_synthetic_raw(&spec, &p, 4).unwrap();
        let either = raw.iter().filter(|(_, l)| l[2] == 1 || l[3] == 1).count() as f64;
        let both = raw.iter().filter(|(_, l)| l[2] == 1 && l[3] == 1).count() as f64;
        assert!((both / either - 0.9).abs() < 0.05, "co-rate {}", both / either);
    }

    #[test]
    fn invalid_probabilities() {
        let p = NoteParser::default();
        let mut spec = small(10);
        spec.medications[0].base_rate = 1.5;
        assert!(matches!(spec.validate(&p), Err(CorpusError::InvalidSpec(_))));
        let mut spec = small(10);
        spec.pairs.push(PairSpec { a: 0, b: 1, together: -0.1 });
        assert!(matches!(spec.validate(&p), Err(CorpusError::InvalidSpec(_))));
        let mut spec = small(10);
        spec.medications[3].triggers = vec!["the".into()];
        assert!(matches!(spec.validate(&p), Err(CorpusError::InvalidSpec(_))));
    }

    #[test]
    fn filler_words_are_distinct_tokens() {
        let p = NoteParser::default();
        let w = filler_words(500, &p);
        let set: HashSet<&String> = w.iter().collect();
        assert_eq!(set.len(), 500);
        assert!(w.iter().all(|x| p.normalize_tokens(x) == [x.as_str()]));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SyntheticSpec::default();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(SyntheticSpec::from_json(&text).unwrap(), spec);
        assert!(SyntheticSpec::from_json(r#"{"num_notes": 3, "bogus": 1}"#).is_err());
    }
}
