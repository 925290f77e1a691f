use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use clockflow_core::ingest::{clean_text, deduplicate, segment_document, Corpus, Document};
use clockflow_core::{BookMeta, Source};

/// Parse the metadata table: id, title, author, author_birth_year, source.
/// A `-` birth year means unknown. Lines starting with `#` are skipped.
pub fn load_metadata(path: &Path) -> Result<Vec<BookMeta>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading metadata {}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, title, author, birth, source] = fields.as_slice() else {
            bail!("metadata line {}: expected 5 fields", lineno + 1);
        };
        let author_birth_year = match *birth {
            "-" => None,
            y => Some(
                y.parse::<i32>()
                    .with_context(|| format!("metadata line {}: bad year {y:?}", lineno + 1))?,
            ),
        };
        let source = Source::parse(source)
            .with_context(|| format!("metadata line {}: bad source {source:?}", lineno + 1))?;
        out.push(BookMeta {
            id: id.to_string(),
            title: title.to_string(),
            author: author.to_string(),
            author_birth_year,
            source,
        });
    }
    if out.is_empty() {
        bail!("metadata table {} lists no books", path.display());
    }
    Ok(out)
}

fn read_book(corpus_dir: &Path, meta: &BookMeta) -> Result<String> {
    match meta.source {
        Source::Gutenberg => {
            let path = corpus_dir.join(format!("{}.txt", meta.id));
            std::fs::read_to_string(&path)
                .with_context(|| format!("reading book {}", path.display()))
        }
        Source::PageFolder => {
            // One file per page, concatenated in filename order.
            let dir = corpus_dir.join(&meta.id);
            let mut pages: Vec<_> = std::fs::read_dir(&dir)
                .with_context(|| format!("reading page folder {}", dir.display()))?
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .collect();
            pages.sort();
            let mut body = String::new();
            for page in pages {
                body.push_str(
                    &std::fs::read_to_string(&page)
                        .with_context(|| format!("reading page {}", page.display()))?,
                );
                body.push('\n');
            }
            Ok(body)
        }
    }
}

/// Read, clean, and sentence-split every book in the metadata table, then
/// deduplicate. Document order follows the metadata table.
pub fn load_corpus(
    corpus_dir: &Path,
    metadata_path: &Path,
    dedup_threshold: f64,
) -> Result<Corpus> {
    let metas = load_metadata(metadata_path)?;
    let documents: Vec<Document> = metas
        .into_par_iter()
        .map(|meta| {
            let raw = read_book(corpus_dir, &meta)?;
            let body = clean_text(&raw, meta.source)
                .with_context(|| format!("cleaning book {}", meta.id))?;
            Ok(segment_document(&body, meta))
        })
        .collect::<Result<_>>()?;
    Ok(deduplicate(Corpus { documents }, dedup_threshold))
}

/// Rebuild documents from a sentence dump, reattaching metadata. Books
/// missing from the dump (for example dedup casualties) are dropped.
pub fn corpus_from_sentences(
    records: &[(String, usize, usize, Vec<String>)],
    metadata_path: &Path,
) -> Result<Vec<Document>> {
    let metas: BTreeMap<String, BookMeta> = load_metadata(metadata_path)?
        .into_iter()
        .map(|m| (m.id.clone(), m))
        .collect();
    let mut grouped: Vec<(String, Vec<(usize, usize, Vec<String>)>)> = Vec::new();
    for (doc_id, p, s, tokens) in records {
        match grouped.last_mut() {
            Some((id, rows)) if id == doc_id => rows.push((*p, *s, tokens.clone())),
            _ => grouped.push((doc_id.clone(), vec![(*p, *s, tokens.clone())])),
        }
    }
    let mut out = Vec::new();
    for (doc_id, rows) in grouped {
        let meta = metas
            .get(&doc_id)
            .with_context(|| format!("book {doc_id} is not in the metadata table"))?
            .clone();
        out.push(Document::from_sentence_records(meta, &rows));
    }
    Ok(out)
}
