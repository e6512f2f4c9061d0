//! JSON Lines reading and writing for cases and literature.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::dataset::{Dataset, RawCase, RawLiterature};
use crate::error::{Error, Result};

pub const CASES_FILE: &str = "cases.jsonl";
pub const LITERATURE_FILE: &str = "literature.jsonl";

/// Parses JSON Lines text. Blank lines are ignored; line numbers are 1-based.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn load_dataset(cases: &Path, literature: &Path) -> Result<Dataset> {
    let raw_literature: Vec<RawLiterature> = read_jsonl(literature)?;
    let raw_cases: Vec<RawCase> = read_jsonl(cases)?;
    Dataset::new(raw_literature, raw_cases)
}

/// Loads `cases.jsonl` and `literature.jsonl` from one directory.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    load_dataset(&dir.join(CASES_FILE), &dir.join(LITERATURE_FILE))
}

pub fn save_dataset(dataset: &Dataset, cases: &Path, literature: &Path) -> Result<()> {
    write_file(cases, &to_jsonl(&dataset.raw_cases)?)?;
    write_file(literature, &to_jsonl(&dataset.raw_literature)?)?;
    Ok(())
}

pub fn save_dataset_dir(dataset: &Dataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let cases = dir.join(CASES_FILE);
    let literature = dir.join(LITERATURE_FILE);
    save_dataset(dataset, &cases, &literature)?;
    Ok((cases, literature))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIT: &str = r#"{"toxin":"ethanol","symptoms":["ataxia","vomiting"]}
{"toxin":"cocaine","symptoms":["tachycardia"]}
"#;

    const CASE: &str = r#"{"id":"c1","symptoms":["ataxia"],"meta":{"age_group":"adult","gender":"male","aetiology":"abuse","point_of_entry":"oral","weekday":5,"year":2004},"label":"ethanol"}"#;

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{CASE}\n{{\"id\": 3\n");
        match parse_jsonl::<RawCase>(&text, "cases.jsonl") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LITERATURE_FILE), LIT).unwrap();
        fs::write(dir.path().join(CASES_FILE), format!("{CASE}\n")).unwrap();
        let ds = load_dataset_dir(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        save_dataset_dir(&ds, out.path()).unwrap();
        assert_eq!(fs::read_to_string(out.path().join(LITERATURE_FILE)).unwrap(), LIT);
        assert_eq!(
            fs::read_to_string(out.path().join(CASES_FILE)).unwrap(),
            format!("{CASE}\n")
        );
        let again = load_dataset_dir(out.path()).unwrap();
        assert_eq!(again.raw_cases, ds.raw_cases);
        assert_eq!(again.encoder, ds.encoder);
    }

    #[test]
    fn null_label_round_trips() {
        let text = CASE.replace("\"ethanol\"", "null");
        let cases: Vec<RawCase> = parse_jsonl(&text, "x").unwrap();
        assert_eq!(cases[0].label, None);
        assert_eq!(to_jsonl(&cases).unwrap(), format!("{text}\n"));
    }
}
