//! Multiple-choice examples stored as JSON Lines.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_file, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub question: String,
    pub candidates: Vec<String>,
    pub gold: usize,
}

/// Parses and validates a dataset; order is preserved.
pub fn parse_dataset(text: &str, source: &str) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example =
            serde_json::from_str(line).map_err(|e| Error::load(source, line_no, e.to_string()))?;
        if ex.candidates.len() < 2 {
            return Err(Error::load(
                source,
                line_no,
                format!("{}: needs at least 2 candidates", ex.id),
            ));
        }
        if ex.gold >= ex.candidates.len() {
            return Err(Error::load(
                source,
                line_no,
                format!(
                    "{}: gold {} out of range for {} candidates",
                    ex.id,
                    ex.gold,
                    ex.candidates.len()
                ),
            ));
        }
        if !seen.insert(ex.id.clone()) {
            return Err(Error::load(
                source,
                line_no,
                format!("duplicate id {:?}", ex.id),
            ));
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Example>> {
    parse_dataset(&read_to_string(path)?, &path.display().to_string())
}

pub fn dataset_to_string(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex).expect("examples serialize"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, examples: &[Example]) -> Result<()> {
    write_file(path, dataset_to_string(examples))
}
