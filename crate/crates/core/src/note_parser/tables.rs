use std::collections::{HashMap, HashSet};

use super::{Medication, ParseError, SectionType};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn split_pair(line_no: usize, line: &str) -> Result<(String, &str), ParseError> {
    let (alias, target) = line.split_once('\t').ok_or_else(|| ParseError::BadTable {
        line: line_no,
        msg: "expected `alias<TAB>value`".into(),
    })?;
    Ok((alias.trim().to_lowercase(), target.trim()))
}

/// `alias<TAB>section_type` lines; every alias must map to exactly one type.
pub fn parse_section_table(text: &str) -> Result<HashMap<String, SectionType>, ParseError> {
    let mut map = HashMap::new();
    for (line_no, line) in data_lines(text) {
        let (alias, target) = split_pair(line_no, line)?;
        let kind: SectionType = target.parse().map_err(|msg| ParseError::BadTable { line: line_no, msg })?;
        if map.insert(alias.clone(), kind).is_some() {
            return Err(ParseError::BadTable {
                line: line_no,
                msg: format!("alias `{alias}` listed twice"),
            });
        }
    }
    Ok(map)
}

/// `alias<TAB>medication` lines, in file order.
pub fn parse_medication_table(text: &str) -> Result<Vec<(String, Medication)>, ParseError> {
    data_lines(text)
        .map(|(line_no, line)| {
            let (alias, target) = split_pair(line_no, line)?;
            let med: Medication = target.parse().map_err(|msg| ParseError::BadTable { line: line_no, msg })?;
            Ok((alias, med))
        })
        .collect()
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    data_lines(text).map(|(_, l)| l.trim().to_lowercase()).collect()
}
