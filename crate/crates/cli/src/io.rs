//! File formats: raw-note inputs, parsed-note JSON lines, and small helpers
//! for writing JSON/CSV artifacts.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rxpredict_core::{ParsedNote, RawNote};
use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::error::CliError;

/// Raw-note input counts before parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReadStats {
    pub records: usize,
    /// CSV rows that are not discharge-summary reports (or are flagged errors).
    pub skipped_category: usize,
    /// CSV rows with an admission id already seen.
    pub duplicates: usize,
}

/// Reads raw notes. Files ending in `.csv` are read as a note-events table
/// (`HADM_ID`, `CATEGORY`, `DESCRIPTION`, `TEXT`, optional `ISERROR`):
/// only `Discharge summary` / `Report` rows are kept, the first per admission.
/// Anything else is JSON lines of `{"visit_id", "text"}`.
pub fn read_raw_notes(path: &Path) -> Result<(Vec<RawNote>, RawReadStats), CliError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_note_events(path)
    } else {
        let notes: Vec<RawNote> = read_jsonl(path)?;
        let stats = RawReadStats {
            records: notes.len(),
            ..Default::default()
        };
        Ok((notes, stats))
    }
}

fn read_note_events(path: &Path) -> Result<(Vec<RawNote>, RawReadStats), CliError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let need = |name: &str| col(name).ok_or_else(|| CliError::Data(format!("{}: no `{name}` column", path.display())));
    let (hadm, category, description, text) = (need("HADM_ID")?, need("CATEGORY")?, need("DESCRIPTION")?, need("TEXT")?);
    let is_error = col("ISERROR");

    let mut stats = RawReadStats::default();
    let mut seen = HashSet::new();
    let mut notes = Vec::new();
    for row in rd.records() {
        let row = row?;
        stats.records += 1;
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let flagged = is_error.is_some_and(|i| field(i) == "1");
        if !field(category).eq_ignore_ascii_case("discharge summary")
            || !field(description).eq_ignore_ascii_case("report")
            || field(hadm).is_empty()
            || flagged
        {
            stats.skipped_category += 1;
            continue;
        }
        let id = field(hadm).to_string();
        if !seen.insert(id.clone()) {
            stats.duplicates += 1;
            continue;
        }
        notes.push(RawNote {
            visit_id: id,
            text: row.get(text).unwrap_or("").to_string(),
        });
    }
    Ok((notes, stats))
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_parsed_notes(path: &Path) -> Result<Vec<ParsedNote>, CliError> {
    read_jsonl(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Buffered writer, creating parent directories.
pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn note_events_keep_first_discharge_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("NOTEEVENTS.csv");
        std::fs::write(
            &path,
            "ROW_ID,HADM_ID,CATEGORY,DESCRIPTION,ISERROR,TEXT\n\
             1,100,Discharge summary,Report,,\"first\ntext\"\n\
             2,100,Discharge summary,Report,,second\n\
             3,100,Discharge summary,Addendum,,addendum\n\
             4,101,Nursing,Report,,nursing\n\
             5,102,Discharge summary,Report,1,flagged\n\
             6,,Discharge summary,Report,,no admission\n\
             7,103,Discharge summary,Report,,third\n",
        )
        .unwrap();
        let (notes, stats) = read_raw_notes(&path).unwrap();
        let ids: Vec<_> = notes.iter().map(|n| n.visit_id.as_str()).collect();
        assert_eq!(ids, ["100", "103"]);
        assert_eq!(notes[0].text, "first\ntext");
        assert_eq!(
            stats,
            RawReadStats {
                records: 7,
                skipped_category: 4,
                duplicates: 1
            }
        );
    }

    #[test]
    fn jsonl_round_trip_skips_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.jsonl");
        let notes = vec![
            RawNote {
                visit_id: "a".into(),
                text: "x".into(),
            },
            RawNote {
                visit_id: "b".into(),
                text: "y\nz".into(),
            },
        ];
        write_jsonl(&path, &notes).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("\n\n");
        std::fs::write(&path, text).unwrap();
        let (back, stats) = read_raw_notes(&path).unwrap();
        assert_eq!(back, notes);
        assert_eq!(stats.records, 2);
    }

    #[test]
    fn bad_json_line_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.jsonl");
        std::fs::write(&path, "{\"visit_id\":\"a\",\"text\":\"x\"}\nnot json\n").unwrap();
        let err = read_raw_notes(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
