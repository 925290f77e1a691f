//! Line-delimited artifact files with versioned headers. Every writer is
//! deterministic: same inputs, byte-identical output.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use clockflow_core::ingest::Document;
use clockflow_core::timex::{HourCountTable, TimeExpression};

pub const SENTENCES_HEADER: &str = "clockflow-sentences\tv1";
pub const EXPRESSIONS_HEADER: &str = "clockflow-expressions\tv1";
pub const HOUR_COUNTS_HEADER: &str = "clockflow-hour-counts\tv1";
pub const EVAL_HEADER: &str = "clockflow-eval\tv1";
pub const TRACKS_HEADER: &str = "clockflow-tracks\tv1";
pub const SEGMENTS_HEADER: &str = "clockflow-segments\tv1";
pub const COHORTS_HEADER: &str = "clockflow-cohorts\tv1";
pub const SCORES_HEADER: &str = "clockflow-scores\tv1";

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_lines(path: &Path, expected_header: &str) -> Result<Vec<String>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut lines = raw.lines();
    match lines.next() {
        Some(h) if h == expected_header => {}
        other => bail!(
            "{}: expected header {expected_header:?}, found {other:?}",
            path.display()
        ),
    }
    Ok(lines.map(str::to_string).collect())
}

pub fn sentences_to_lines(documents: &[Document]) -> Vec<String> {
    let mut lines = vec![SENTENCES_HEADER.to_string()];
    for doc in documents {
        for (p, s) in doc.sentence_indices() {
            let tokens: Vec<&str> = doc.sentence(p, s).iter().map(|t| t.text.as_str()).collect();
            lines.push(format!("{}\t{p}\t{s}\t{}", doc.meta.id, tokens.join(" ")));
        }
    }
    lines
}

pub type SentenceRecord = (String, usize, usize, Vec<String>);

pub fn read_sentences(path: &Path) -> Result<Vec<SentenceRecord>> {
    let mut out = Vec::new();
    for line in read_lines(path, SENTENCES_HEADER)? {
        let fields: Vec<&str> = line.split('\t').collect();
        let [doc_id, p, s, tokens] = fields.as_slice() else {
            bail!("{}: malformed sentence record {line:?}", path.display());
        };
        out.push((
            doc_id.to_string(),
            p.parse().with_context(|| line.clone())?,
            s.parse().with_context(|| line.clone())?,
            tokens.split(' ').map(str::to_string).collect(),
        ));
    }
    Ok(out)
}

pub fn expressions_to_lines(expressions: &[TimeExpression]) -> Vec<String> {
    let mut lines = vec![EXPRESSIONS_HEADER.to_string()];
    lines.extend(expressions.iter().map(TimeExpression::to_record));
    lines
}

pub fn read_expressions(path: &Path) -> Result<Vec<TimeExpression>> {
    read_lines(path, EXPRESSIONS_HEADER)?
        .iter()
        .map(|line| TimeExpression::from_record(line).map_err(Into::into))
        .collect()
}

pub fn hour_counts_to_lines(table: &HourCountTable) -> Vec<String> {
    let mut lines = vec![HOUR_COUNTS_HEADER.to_string()];
    for h in 0..12 {
        lines.push(format!(
            "{h}\t{}\t{}\t{}",
            table.am[h], table.pm[h], table.ambiguous[h]
        ));
    }
    lines
}

/// Per-window external hour scores: doc_id, window index, 24 scores.
pub fn read_external_scores(path: &Path) -> Result<BTreeMap<(String, usize), [f64; 24]>> {
    let mut out = BTreeMap::new();
    for line in read_lines(path, SCORES_HEADER)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 26 {
            bail!("{}: expected 26 fields in {line:?}", path.display());
        }
        let mut scores = [0.0f64; 24];
        for (h, field) in fields[2..].iter().enumerate() {
            scores[h] = field.parse().with_context(|| line.clone())?;
        }
        let window: usize = fields[1].parse().with_context(|| line.clone())?;
        out.insert((fields[0].to_string(), window), scores);
    }
    Ok(out)
}
