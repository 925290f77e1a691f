//! Loading, cleaning, and tokenizing raw book text, plus corpus-level
//! deduplication by title/author similarity.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is not valid text in a supported encoding")]
    UnsupportedEncoding,
    #[error("book body is empty after cleaning")]
    EmptyBody,
}

/// Where a book's raw text came from; controls which cleaning rules apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Single text file with boilerplate start/end delimiter lines.
    Gutenberg,
    /// Folder of page files, concatenated in filename order before cleaning.
    PageFolder,
}

impl Source {
    pub fn parse(s: &str) -> Option<Source> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gutenberg" | "gutenberg-style" => Some(Source::Gutenberg),
            "pages" | "page-folder" | "page-folder-style" => Some(Source::PageFolder),
            _ => None,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Gutenberg => write!(f, "gutenberg"),
            Source::PageFolder => write!(f, "page-folder"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BookMeta {
    pub id: String,
    pub title: String,
    pub author: String,
    pub author_birth_year: Option<i32>,
    pub source: Source,
}

/// One token of the cleaned body, with character offsets back into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub type Sentence = Vec<Token>;
pub type Paragraph = Vec<Sentence>;

#[derive(Debug, Clone)]
pub struct Document {
    pub meta: BookMeta,
    pub body: String,
    pub paragraphs: Vec<Paragraph>,
}

impl Document {
    /// Sentences in document order as (paragraph, sentence) index pairs.
    pub fn sentence_indices(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (pi, para) in self.paragraphs.iter().enumerate() {
            for si in 0..para.len() {
                out.push((pi, si));
            }
        }
        out
    }

    pub fn sentence(&self, para: usize, sent: usize) -> &Sentence {
        &self.paragraphs[para][sent]
    }

    pub fn sentence_count(&self) -> usize {
        self.paragraphs.iter().map(|p| p.len()).sum()
    }

    /// Rebuild a document from dumped sentence records (tokens only).
    ///
    /// The body is synthesized by joining tokens with single spaces and
    /// paragraphs with blank lines, so offset invariants still hold.
    pub fn from_sentence_records(meta: BookMeta, records: &[(usize, usize, Vec<String>)]) -> Document {
        let mut body = String::new();
        let mut paragraphs: Vec<Paragraph> = Vec::new();
        for (pi, si, tokens) in records {
            while paragraphs.len() <= *pi {
                paragraphs.push(Vec::new());
            }
            let para = &mut paragraphs[*pi];
            debug_assert_eq!(para.len(), *si, "sentence records out of order");
            let _ = si;
            if !body.is_empty() {
                body.push_str(if para.is_empty() { "\n\n" } else { " " });
            }
            let mut sentence = Vec::new();
            for tok in tokens {
                if !sentence.is_empty() {
                    body.push(' ');
                }
                let start = body.len();
                body.push_str(tok);
                sentence.push(Token {
                    text: tok.clone(),
                    start,
                    end: body.len(),
                });
            }
            if !sentence.is_empty() {
                para.push(sentence);
            }
        }
        paragraphs.retain(|p| !p.is_empty());
        Document {
            meta,
            body,
            paragraphs,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

const START_DELIMITERS: &[&str] = &["*** START OF", "***START OF", "*END*THE SMALL PRINT"];
const END_DELIMITERS: &[&str] = &[
    "*** END OF",
    "***END OF",
    "END OF THE PROJECT GUTENBERG",
    "END OF PROJECT GUTENBERG",
];

/// How deep into the body the first-chapter-heading heuristic may reach.
const CHAPTER_SCAN_LINES: usize = 50;

fn is_chapter_heading(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("CHAPTER ") || t.starts_with("Chapter ") || t == "CHAPTER" || t == "PROLOGUE"
}

/// Strip boilerplate headers and footers, returning the body text.
///
/// Gutenberg-style inputs are cut at the recognized start/end delimiter
/// lines; both source kinds then advance to the first chapter heading when
/// one appears near the top. Cleaning an already-clean text is a no-op.
pub fn clean_text(raw: &str, source: Source) -> Result<String, IngestError> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut start = 0usize;
    let mut end = lines.len();

    if source == Source::Gutenberg {
        for (i, line) in lines.iter().enumerate() {
            let upper = line.to_ascii_uppercase();
            if START_DELIMITERS.iter().any(|d| upper.contains(d)) {
                start = i + 1;
            }
        }
        for (i, line) in lines.iter().enumerate().skip(start) {
            let upper = line.to_ascii_uppercase();
            if END_DELIMITERS.iter().any(|d| upper.contains(d)) {
                end = i;
                break;
            }
        }
    }

    // Front matter often survives the delimiter cut; jump to the first
    // chapter heading if one shows up near the top of the body.
    let mut nonblank = 0usize;
    for (i, line) in lines[start..end].iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if is_chapter_heading(line) {
            if i > 0 {
                start += i;
            }
            break;
        }
        nonblank += 1;
        if nonblank >= CHAPTER_SCAN_LINES {
            break;
        }
    }

    let body = lines[start..end].join("\n");
    let body = body.trim();
    if body.is_empty() {
        return Err(IngestError::EmptyBody);
    }
    Ok(body.to_string())
}

fn is_word_char(bytes: &[u8], i: usize) -> bool {
    let c = bytes[i] as char;
    if c.is_ascii_alphanumeric() {
        return true;
    }
    // Apostrophes bind into words ("o'clock") but quotes stand alone.
    if c == '\'' {
        let prev = i > 0 && (bytes[i - 1] as char).is_ascii_alphanumeric();
        let next = i + 1 < bytes.len() && (bytes[i + 1] as char).is_ascii_alphanumeric();
        return prev && next;
    }
    false
}

fn tokenize_region(body: &str, start: usize, end: usize, out: &mut Vec<Token>) {
    let bytes = body.as_bytes();
    let mut i = start;
    while i < end {
        let c = bytes[i] as char;
        if c.is_whitespace() || !c.is_ascii() {
            // Non-ASCII bytes are skipped rather than mis-tokenized.
            i += 1;
            continue;
        }
        if is_word_char(bytes, i) {
            let tok_start = i;
            while i < end && is_word_char(bytes, i) {
                i += 1;
            }
            out.push(Token {
                text: body[tok_start..i].to_string(),
                start: tok_start,
                end: i,
            });
        } else {
            out.push(Token {
                text: body[i..i + 1].to_string(),
                start: i,
                end: i + 1,
            });
            i += 1;
        }
    }
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "st", "prof", "rev", "col", "gen", "capt", "lt", "sgt", "jr", "sr",
    "vs", "etc", "vol", "dept", "fig", "hon", "messrs", "mme", "mlle",
];

fn guards_period(prev: Option<&Token>) -> bool {
    match prev {
        Some(tok) => {
            let lower = tok.text.to_ascii_lowercase();
            ABBREVIATIONS.contains(&lower.as_str())
                || (tok.text.len() == 1 && tok.text.chars().all(|c| c.is_ascii_alphabetic()))
        }
        None => false,
    }
}

fn split_sentences(tokens: Vec<Token>) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut current: Sentence = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i].clone();
        let is_terminal = matches!(tok.text.as_str(), "." | "!" | "?");
        let guarded = tok.text == "." && guards_period(current.last());
        current.push(tok);
        if is_terminal && !guarded {
            // Absorb trailing terminal runs ("...") and closing quotes.
            while i + 1 < tokens.len()
                && matches!(tokens[i + 1].text.as_str(), "." | "!" | "?" | "\"" | "'")
            {
                i += 1;
                current.push(tokens[i].clone());
            }
            sentences.push(std::mem::take(&mut current));
        }
        i += 1;
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

/// Split a cleaned body into paragraphs, sentences, and offset-carrying tokens.
pub fn segment_document(body: &str, meta: BookMeta) -> Document {
    let mut paragraphs = Vec::new();
    let mut offset = 0usize;
    let mut para_start: Option<usize> = None;
    let mut para_end = 0usize;

    let flush = |start: Option<usize>, end: usize, paragraphs: &mut Vec<Paragraph>| {
        if let Some(s) = start {
            let mut tokens = Vec::new();
            tokenize_region(body, s, end, &mut tokens);
            let sentences = split_sentences(tokens);
            if !sentences.is_empty() {
                paragraphs.push(sentences);
            }
        }
    };

    for line in body.split_inclusive('\n') {
        let content = line.trim_end_matches('\n');
        if content.trim().is_empty() {
            flush(para_start.take(), para_end, &mut paragraphs);
        } else {
            if para_start.is_none() {
                para_start = Some(offset);
            }
            para_end = offset + content.len();
        }
        offset += line.len();
    }
    flush(para_start.take(), para_end, &mut paragraphs);

    Document {
        meta,
        body: body.to_string(),
        paragraphs,
    }
}

fn normalize(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalized `title|surname` key used for duplicate detection.
pub fn dedup_key(meta: &BookMeta) -> String {
    let title = normalize(&meta.title);
    let author = normalize(&meta.author);
    let surname = author.split_whitespace().last().unwrap_or("");
    format!("{title}|{surname}")
}

fn key_tokens(key: &str) -> BTreeSet<String> {
    key.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

/// Drop every document whose dedup key is at least `similarity_threshold`
/// Jaccard-similar to an earlier document's key. Input order is preserved.
pub fn deduplicate(corpus: Corpus, similarity_threshold: f64) -> Corpus {
    let keys: Vec<BTreeSet<String>> = corpus
        .documents
        .iter()
        .map(|d| key_tokens(&dedup_key(&d.meta)))
        .collect();
    let mut keep = vec![true; keys.len()];
    for i in 0..keys.len() {
        for j in 0..i {
            if jaccard(&keys[i], &keys[j]) >= similarity_threshold {
                keep[i] = false;
                break;
            }
        }
    }
    let documents = corpus
        .documents
        .into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect();
    Corpus { documents }
}
