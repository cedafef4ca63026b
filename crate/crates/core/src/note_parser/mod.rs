//! Discharge-note parsing: section segmentation, heading classification,
//! medication label extraction and token normalization.
//!
//! The heading, medication and stopword tables are plain-text data files. The
//! defaults are compiled in from `data/`; [`NoteParser::from_tables`] accepts
//! replacements.

mod tables;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tables::{parse_medication_table, parse_section_table, parse_stopwords};

/// Number of medication classes.
pub const NUM_MEDICATIONS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("note {0} has empty text")]
    MalformedNote(String),
    #[error("table line {line}: {msg}")]
    BadTable { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionType {
    Allergy,
    ChiefComplaint,
    HistoryPresentIllness,
    PastMedicalHistory,
    SocialHistory,
    FamilyHistory,
    InitialExam,
    AdmissionMedications,
    DischargeMedications,
    Other,
}

impl SectionType {
    /// The eight admission-time section types, in admission-note order.
    pub const ADMISSION: [SectionType; 8] = [
        SectionType::Allergy,
        SectionType::ChiefComplaint,
        SectionType::HistoryPresentIllness,
        SectionType::PastMedicalHistory,
        SectionType::SocialHistory,
        SectionType::FamilyHistory,
        SectionType::InitialExam,
        SectionType::AdmissionMedications,
    ];

    pub const ALL: [SectionType; 10] = [
        SectionType::Allergy,
        SectionType::ChiefComplaint,
        SectionType::HistoryPresentIllness,
        SectionType::PastMedicalHistory,
        SectionType::SocialHistory,
        SectionType::FamilyHistory,
        SectionType::InitialExam,
        SectionType::AdmissionMedications,
        SectionType::DischargeMedications,
        SectionType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionType::Allergy => "allergy",
            SectionType::ChiefComplaint => "chief_complaint",
            SectionType::HistoryPresentIllness => "history_present_illness",
            SectionType::PastMedicalHistory => "past_medical_history",
            SectionType::SocialHistory => "social_history",
            SectionType::FamilyHistory => "family_history",
            SectionType::InitialExam => "initial_exam",
            SectionType::AdmissionMedications => "admission_medications",
            SectionType::DischargeMedications => "discharge_medications",
            SectionType::Other => "other",
        }
    }
}

impl FromStr for SectionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SectionType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown section type `{s}`"))
    }
}

/// The eight antihypertensive classes, indexed by descending corpus frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Medication {
    Metoprolol,
    Furosemide,
    Lisinopril,
    Amlodipine,
    Atenolol,
    Hctz,
    Diltiazem,
    Carvedilol,
}

impl Medication {
    pub const ALL: [Medication; NUM_MEDICATIONS] = [
        Medication::Metoprolol,
        Medication::Furosemide,
        Medication::Lisinopril,
        Medication::Amlodipine,
        Medication::Atenolol,
        Medication::Hctz,
        Medication::Diltiazem,
        Medication::Carvedilol,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Medication> {
        Medication::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Medication::Metoprolol => "metoprolol",
            Medication::Furosemide => "furosemide",
            Medication::Lisinopril => "lisinopril",
            Medication::Amlodipine => "amlodipine",
            Medication::Atenolol => "atenolol",
            Medication::Hctz => "hctz",
            Medication::Diltiazem => "diltiazem",
            Medication::Carvedilol => "carvedilol",
        }
    }

    /// Capitalized name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Medication::Metoprolol => "Metoprolol",
            Medication::Furosemide => "Furosemide",
            Medication::Lisinopril => "Lisinopril",
            Medication::Amlodipine => "Amlodipine",
            Medication::Atenolol => "Atenolol",
            Medication::Hctz => "Hctz",
            Medication::Diltiazem => "Diltiazem",
            Medication::Carvedilol => "Carvedilol",
        }
    }
}

impl fmt::Display for Medication {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Medication {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Medication::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown medication `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNote {
    pub visit_id: String,
    pub text: String,
}

/// One heading-delimited block of a note. `heading` is lowercased and trimmed;
/// it is empty for text that precedes the first recognized heading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSection {
    pub heading: String,
    pub body: String,
}

impl RawSection {
    fn new(heading: &str, body: &str) -> Self {
        Self {
            heading: heading.to_string(),
            body: body.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedNote {
    pub visit_id: String,
    pub sections: BTreeMap<SectionType, String>,
    pub tokens: Vec<String>,
    pub admission_meds: BTreeSet<String>,
    /// Discharge-medication indicator per [`Medication`] index.
    pub labels: Vec<u8>,
}

impl ParsedNote {
    pub fn has_label(&self, med: Medication) -> bool {
        self.labels.get(med.index()).is_some_and(|&b| b == 1)
    }

    pub fn label_vector(&self) -> Vec<f64> {
        self.labels.iter().map(|&b| f64::from(b)).collect()
    }
}

/// Holds the alias and stopword tables; all parsing methods are pure.
#[derive(Debug, Clone)]
pub struct NoteParser {
    section_aliases: HashMap<String, SectionType>,
    med_patterns: Vec<Regex>,
    stopwords: HashSet<String>,
}

const DEFAULT_SECTIONS: &str = include_str!("../../data/section_aliases.tsv");
const DEFAULT_MEDICATIONS: &str = include_str!("../../data/medication_aliases.tsv");
const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

impl Default for NoteParser {
    fn default() -> Self {
        Self::from_tables(DEFAULT_SECTIONS, DEFAULT_MEDICATIONS, DEFAULT_STOPWORDS)
            .expect("bundled tables are well-formed")
    }
}

impl NoteParser {
    pub fn from_tables(sections: &str, medications: &str, stopwords: &str) -> Result<Self, ParseError> {
        let section_aliases = parse_section_table(sections)?;
        let med_aliases = parse_medication_table(medications)?;
        let mut by_med: Vec<Vec<String>> = vec![Vec::new(); NUM_MEDICATIONS];
        for (alias, med) in med_aliases {
            by_med[med.index()].push(regex::escape(&alias));
        }
        let med_patterns = by_med
            .into_iter()
            .map(|aliases| {
                let alt = if aliases.is_empty() {
                    // never matches
                    r"[^\s\S]".to_string()
                } else {
                    aliases.join("|")
                };
                Regex::new(&format!(r"(?i)\b(?:{alt})\b")).expect("escaped aliases form a valid pattern")
            })
            .collect();
        Ok(Self {
            section_aliases,
            med_patterns,
            stopwords: parse_stopwords(stopwords),
        })
    }

    pub fn section_aliases(&self) -> impl Iterator<Item = (&str, SectionType)> {
        self.section_aliases.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Segments a note at recognized heading lines.
    pub fn split_sections(&self, text: &str) -> Vec<RawSection> {
        let mut sections = Vec::new();
        let mut heading: Option<String> = None;
        let mut body = String::new();
        let flush = |heading: &Option<String>, body: &mut String, out: &mut Vec<RawSection>| {
            let trimmed = body.trim();
            match heading {
                Some(h) => out.push(RawSection::new(h, trimmed)),
                None if !trimmed.is_empty() => out.push(RawSection::new("", trimmed)),
                None => {}
            }
            body.clear();
        };
        for line in text.lines() {
            if let Some((head, rest)) = line.split_once(':') {
                let key = head.trim().to_lowercase();
                if self.section_aliases.contains_key(&key) {
                    flush(&heading, &mut body, &mut sections);
                    heading = Some(key);
                    body.push_str(rest);
                    body.push('\n');
                    continue;
                }
            }
            body.push_str(line);
            body.push('\n');
        }
        flush(&heading, &mut body, &mut sections);
        sections
    }

    /// Exact lookup of a lowercased, trimmed heading.
    pub fn classify_heading(&self, heading: &str) -> Option<SectionType> {
        self.section_aliases.get(heading).copied()
    }

    /// Indicator vector of antihypertensives named anywhere in `body`.
    pub fn extract_discharge_meds(&self, body: &str) -> Vec<u8> {
        self.med_patterns.iter().map(|re| u8::from(re.is_match(body))).collect()
    }

    /// Medication names from a bulleted admission list, dosage stripped.
    pub fn extract_admission_meds(&self, body: &str) -> BTreeSet<String> {
        body.lines().filter_map(admission_med_name).collect()
    }

    /// Lowercased alphanumeric tokens with stopwords removed.
    pub fn normalize_tokens(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !self.stopwords.contains(*t))
            .map(str::to_string)
            .collect()
    }

    /// Full note → admission-note record; `Ok(None)` when no antihypertensive
    /// is prescribed at discharge.
    pub fn parse_note(&self, raw: &RawNote) -> Result<Option<ParsedNote>, ParseError> {
        if raw.text.trim().is_empty() {
            return Err(ParseError::MalformedNote(raw.visit_id.clone()));
        }
        let mut sections: BTreeMap<SectionType, String> = BTreeMap::new();
        for sec in self.split_sections(&raw.text) {
            let kind = if sec.heading.is_empty() {
                SectionType::Other
            } else {
                self.classify_heading(&sec.heading).unwrap_or(SectionType::Other)
            };
            let entry = sections.entry(kind).or_default();
            if !entry.is_empty() {
                entry.push('\n');
            }
            entry.push_str(&sec.body);
        }
        let labels = sections
            .get(&SectionType::DischargeMedications)
            .map(|b| self.extract_discharge_meds(b))
            .unwrap_or_else(|| vec![0; NUM_MEDICATIONS]);
        if labels.iter().all(|&b| b == 0) {
            return Ok(None);
        }
        let tokens = SectionType::ADMISSION
            .iter()
            .filter_map(|t| sections.get(t))
            .flat_map(|body| self.normalize_tokens(body))
            .collect();
        let admission_meds = sections
            .get(&SectionType::AdmissionMedications)
            .map(|b| self.extract_admission_meds(b))
            .unwrap_or_default();
        Ok(Some(ParsedNote {
            visit_id: raw.visit_id.clone(),
            sections,
            tokens,
            admission_meds,
            labels,
        }))
    }
}

/// Leading run of purely alphabetic words after any bullet marker.
fn admission_med_name(line: &str) -> Option<String> {
    let line = line.trim_start();
    let line = line.trim_start_matches(['-', '*', '•']);
    let line = match line.find(|c: char| !c.is_ascii_digit()) {
        Some(i) if i > 0 && line[i..].starts_with(['.', ')']) => &line[i + 1..],
        _ => line,
    };
    let words: Vec<String> = line
        .split_whitespace()
        .take_while(|w| w.chars().all(char::is_alphabetic))
        .map(str::to_lowercase)
        .collect();
    (!words.is_empty()).then(|| words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parser() -> NoteParser {
        NoteParser::default()
    }

    fn labels_of(meds: &[Medication]) -> Vec<u8> {
        let mut v = vec![0; NUM_MEDICATIONS];
        for m in meds {
            v[m.index()] = 1;
        }
        v
    }

    #[test]
    fn split_empty() {
        assert!(parser().split_sections("").is_empty());
    }

    #[test]
    fn split_two_sections() {
        let got = parser().split_sections("Chief Complaint:\nchest pain\nHPI:\nworsening dyspnea");
        assert_eq!(
            got,
            vec![
                RawSection::new("chief complaint", "chest pain"),
                RawSection::new("hpi", "worsening dyspnea"),
            ]
        );
    }

    #[test]
    fn split_without_headings_is_other() {
        let text = "just some text\nwith: an unknown heading";
        assert_eq!(parser().split_sections(text), vec![RawSection::new("", text)]);
    }

    #[test]
    fn split_keeps_inline_body_and_preamble() {
        let got = parser().split_sections("Admission Date: 2101\nAllergies: Penicillins\nmore\n");
        assert_eq!(
            got,
            vec![
                RawSection::new("", "Admission Date: 2101"),
                RawSection::new("allergies", "Penicillins\nmore"),
            ]
        );
    }

    #[test]
    fn classify_examples() {
        let p = parser();
        assert_eq!(p.classify_heading("hpi"), Some(SectionType::HistoryPresentIllness));
        assert_eq!(p.classify_heading("meds on discharge"), Some(SectionType::DischargeMedications));
        assert_eq!(p.classify_heading("operative report"), None);
    }

    #[test]
    fn classify_covers_known_heading_list() {
        let p = parser();
        let expected = [
            ("allergies", SectionType::Allergy),
            ("chief complaint", SectionType::ChiefComplaint),
            ("history of present illness", SectionType::HistoryPresentIllness),
            ("hpi", SectionType::HistoryPresentIllness),
            ("past medical history", SectionType::PastMedicalHistory),
            ("major surgical or invasive procedure", SectionType::PastMedicalHistory),
            ("social history", SectionType::SocialHistory),
            ("history", SectionType::SocialHistory),
            ("family history", SectionType::FamilyHistory),
            ("family hx", SectionType::FamilyHistory),
            ("admission labs", SectionType::InitialExam),
            ("physical exam", SectionType::InitialExam),
            ("admission medications", SectionType::AdmissionMedications),
            ("meds on admission", SectionType::AdmissionMedications),
            ("discharge medications", SectionType::DischargeMedications),
            ("meds on discharge", SectionType::DischargeMedications),
        ];
        for (alias, kind) in expected {
            assert_eq!(p.classify_heading(alias), Some(kind), "{alias}");
        }
    }

    #[test]
    fn duplicate_alias_in_table_is_rejected() {
        let err = NoteParser::from_tables("hpi\tallergy\nhpi\tchief_complaint\n", DEFAULT_MEDICATIONS, "");
        assert!(matches!(err, Err(ParseError::BadTable { line: 2, .. })));
    }

    #[test]
    fn discharge_meds_examples() {
        let p = parser();
        assert_eq!(p.extract_discharge_meds("1. Lasix 40mg PO daily"), labels_of(&[Medication::Furosemide]));
        assert_eq!(
            p.extract_discharge_meds("1. Lopressor 25mg BID\n2. Norvasc 5mg"),
            labels_of(&[Medication::Metoprolol, Medication::Amlodipine])
        );
        assert_eq!(p.extract_discharge_meds("1. aspirin 81mg"), vec![0; 8]);
        assert_eq!(
            p.extract_discharge_meds("HydroCHLOROthiazide 25 mg; HCTZ"),
            labels_of(&[Medication::Hctz])
        );
    }

    #[test]
    fn discharge_meds_need_whole_words() {
        let p = parser();
        assert_eq!(p.extract_discharge_meds("lasixx and prelisinopril"), vec![0; 8]);
        assert_eq!(p.extract_discharge_meds("Metoprolol-XL"), labels_of(&[Medication::Metoprolol]));
    }

    #[test]
    fn admission_meds_examples() {
        let p = parser();
        assert!(p.extract_admission_meds("").is_empty());
        assert_eq!(
            p.extract_admission_meds("1. Metoprolol 50mg PO BID"),
            BTreeSet::from(["metoprolol".to_string()])
        );
        assert_eq!(
            p.extract_admission_meds("1. ASA 81mg\n2. lisinopril 10mg"),
            BTreeSet::from(["asa".to_string(), "lisinopril".to_string()])
        );
        assert_eq!(
            p.extract_admission_meds("- Metoprolol Tartrate 25 mg PO BID\n* 40 units insulin"),
            BTreeSet::from(["metoprolol tartrate".to_string()])
        );
    }

    #[test]
    fn normalize_examples() {
        let p = parser();
        assert_eq!(p.normalize_tokens("The patient HAS hypertension."), vec!["patient", "hypertension"]);
        assert!(p.normalize_tokens("").is_empty());
        assert_eq!(p.normalize_tokens("ESRD/HD"), vec!["esrd", "hd"]);
    }

    fn note(text: &str) -> RawNote {
        RawNote {
            visit_id: "v1".into(),
            text: text.into(),
        }
    }

    #[test]
    fn parse_note_end_to_end() {
        let parsed = parser()
            .parse_note(&note(
                "HPI:\nWorsening dyspnea and edema.\nMeds on Admission:\n1. Metoprolol 25mg\nDischarge Medications:\n1. Lasix 40mg daily\n",
            ))
            .unwrap()
            .unwrap();
        assert_eq!(parsed.labels, labels_of(&[Medication::Furosemide]));
        assert_eq!(parsed.tokens, vec!["worsening", "dyspnea", "edema", "1", "metoprolol", "25mg"]);
        assert_eq!(parsed.admission_meds, BTreeSet::from(["metoprolol".to_string()]));
        assert!(parsed.sections.contains_key(&SectionType::DischargeMedications));
    }

    #[test]
    fn parse_note_discard_rules() {
        let p = parser();
        assert_eq!(p.parse_note(&note("HPI:\nchest pain\n")).unwrap(), None);
        assert_eq!(
            p.parse_note(&note("Admission Medications:\n1. lisinopril 10mg\nDischarge Medications:\n1. aspirin\n"))
                .unwrap(),
            None
        );
        assert_eq!(
            p.parse_note(&note("  \n")).unwrap_err(),
            ParseError::MalformedNote("v1".into())
        );
    }

    #[test]
    fn admission_tokens_follow_section_order() {
        let parsed = parser()
            .parse_note(&note(
                "Family History:\nfamilyword\nChief Complaint:\nccword\nAllergies:\nallergyword\nDischarge Medications:\ncarvedilol\n",
            ))
            .unwrap()
            .unwrap();
        assert_eq!(parsed.tokens, vec!["allergyword", "ccword", "familyword"]);
    }

    fn squash(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    #[test]
    fn section_bodies_reassemble_the_note() {
        let p = parser();
        let text = "Admission Date: x\n\nChief Complaint: fever\nHPI:\n  line one\nline two\nSocial History:\nnone\nDischarge Medications:\n1. Lasix";
        let rebuilt: String = p.split_sections(text).into_iter().map(|s| s.body).collect();
        let expected: String = text
            .lines()
            .map(|l| match l.split_once(':') {
                Some((h, rest)) if p.classify_heading(&h.trim().to_lowercase()).is_some() => rest,
                _ => l,
            })
            .collect();
        assert_eq!(squash(&rebuilt), squash(&expected));
    }

    proptest! {
        #[test]
        fn label_extraction_is_order_independent(perm in Just(vec![
            "1. Lasix 20mg", "2. aspirin", "3. Norvasc 5 mg", "4. carvedilol 3.125", "5. docusate",
        ]).prop_shuffle()) {
            let p = parser();
            let body = perm.join("\n");
            let labels = p.extract_discharge_meds(&body);
            prop_assert_eq!(&labels, &labels_of(&[Medication::Furosemide, Medication::Amlodipine, Medication::Carvedilol]));
            prop_assert_eq!(p.extract_discharge_meds(&body), labels);
        }

        #[test]
        fn normalize_is_idempotent(text in "[A-Za-z0-9 ,./()-]{0,80}") {
            let p = parser();
            let once = p.normalize_tokens(&text);
            prop_assert_eq!(p.normalize_tokens(&once.join(" ")), once.clone());
            prop_assert!(once.iter().all(|t| !t.chars().any(char::is_uppercase) && !p.is_stopword(t)));
        }
    }
}
