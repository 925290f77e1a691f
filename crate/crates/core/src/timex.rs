//! Rule-based extraction of clock-time expressions and day-part tags.
//!
//! The grammar is an ordered rule list applied left-to-right within each
//! sentence, longest match first:
//!
//! 1. `noon` | `midday` -> clock, hour 12; `midnight` -> clock, hour 0.
//! 2. optional prefix `half past` | `quarter past` | `quarter to`, then an
//!    hour word (`one`..`twelve` or digit `1`..`12`); `quarter to` names the
//!    bucket before the spoken hour, the others keep it. Minutes are
//!    discarded, only the hour bucket is kept.
//! 3. digit hours may carry `:MM` minutes (`9:30` -> hour 9).
//! 4. optional `o'clock`.
//! 5. optional meridiem marker `am` | `pm` | `a.m.` | `p.m.` (periods
//!    optional), which resolves the hour to the 24-hour clock.
//! 6. otherwise an optional day-part attachment resolves it: `in the
//!    morning` -> AM; `in the afternoon` | `in the evening` -> PM;
//!    `at night` -> PM except that `twelve at night` is midnight.
//! 7. a bare hour word with none of the cues above is NOT a time
//!    expression ("two dogs" stays untouched).
//! 8. standalone `morning` | `afternoon` | `evening` | `night` -> day-part tag.

use std::fmt;

use thiserror::Error;

use crate::ingest::Document;

#[derive(Debug, Error)]
pub enum TimexError {
    #[error("malformed expression record: {0}")]
    Parse(String),
    #[error("hour table has no entries outside hour 0")]
    EmptyTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Meridiem {
    Am,
    Pm,
    Unknown,
}

impl fmt::Display for Meridiem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Meridiem::Am => write!(f, "am"),
            Meridiem::Pm => write!(f, "pm"),
            Meridiem::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Daypart {
    Morning,
    Afternoon,
    Evening,
    Night,
}

impl Daypart {
    pub fn parse(s: &str) -> Option<Daypart> {
        match s {
            "morning" => Some(Daypart::Morning),
            "afternoon" => Some(Daypart::Afternoon),
            "evening" => Some(Daypart::Evening),
            "night" => Some(Daypart::Night),
            _ => None,
        }
    }
}

impl fmt::Display for Daypart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Daypart::Morning => write!(f, "morning"),
            Daypart::Afternoon => write!(f, "afternoon"),
            Daypart::Evening => write!(f, "evening"),
            Daypart::Night => write!(f, "night"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimexPayload {
    /// A clock-hour reference. `hour12` is the spoken hour mod 12 (so
    /// "twelve" is 0); `hour24` is present only when the meridiem resolved.
    Clock {
        hour12: u8,
        meridiem: Meridiem,
        hour24: Option<u8>,
    },
    Daypart(Daypart),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeExpression {
    pub doc_id: String,
    pub paragraph_index: usize,
    pub sentence_index: usize,
    /// Token span within the sentence, end-exclusive.
    pub span: (usize, usize),
    pub surface: String,
    pub payload: TimexPayload,
}

impl TimeExpression {
    pub fn is_clock(&self) -> bool {
        matches!(self.payload, TimexPayload::Clock { .. })
    }

    pub fn hour24(&self) -> Option<u8> {
        match self.payload {
            TimexPayload::Clock { hour24, .. } => hour24,
            TimexPayload::Daypart(_) => None,
        }
    }

    pub fn hour12(&self) -> Option<u8> {
        match self.payload {
            TimexPayload::Clock { hour12, .. } => Some(hour12),
            TimexPayload::Daypart(_) => None,
        }
    }

    pub fn daypart(&self) -> Option<Daypart> {
        match self.payload {
            TimexPayload::Daypart(d) => Some(d),
            TimexPayload::Clock { .. } => None,
        }
    }
}

const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve",
];

fn hour_word(tok: &str) -> Option<u8> {
    if let Some(pos) = NUMBER_WORDS.iter().position(|w| *w == tok) {
        return Some(pos as u8 + 1);
    }
    match tok.parse::<u8>() {
        Ok(n) if (1..=12).contains(&n) => Some(n),
        _ => None,
    }
}

fn is_digit_token(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| c.is_ascii_digit())
}

struct MeridiemMatch {
    len: usize,
    meridiem: Meridiem,
}

fn match_meridiem(toks: &[String], i: usize) -> Option<MeridiemMatch> {
    let first = toks.get(i)?.as_str();
    let meridiem = match first {
        "am" | "a" => Meridiem::Am,
        "pm" | "p" => Meridiem::Pm,
        _ => return None,
    };
    if first.len() == 2 {
        return Some(MeridiemMatch { len: 1, meridiem });
    }
    // "a . m" with an optional trailing period, as tokenized from "a.m."
    if toks.get(i + 1).map(String::as_str) == Some(".")
        && toks.get(i + 2).map(String::as_str) == Some("m")
    {
        let len = if toks.get(i + 3).map(String::as_str) == Some(".") {
            4
        } else {
            3
        };
        return Some(MeridiemMatch { len, meridiem });
    }
    None
}

fn match_daypart_attachment(toks: &[String], i: usize) -> Option<(usize, Daypart)> {
    match toks.get(i).map(String::as_str) {
        Some("in") => {
            if toks.get(i + 1).map(String::as_str) == Some("the") {
                match toks.get(i + 2).map(String::as_str) {
                    Some("morning") => Some((3, Daypart::Morning)),
                    Some("afternoon") => Some((3, Daypart::Afternoon)),
                    Some("evening") => Some((3, Daypart::Evening)),
                    _ => None,
                }
            } else {
                None
            }
        }
        Some("at") => {
            if toks.get(i + 1).map(String::as_str) == Some("night") {
                Some((2, Daypart::Night))
            } else {
                None
            }
        }
        _ => None,
    }
}

struct ClockMatch {
    len: usize,
    hour12: u8,
    meridiem: Meridiem,
    hour24: Option<u8>,
}

fn match_clock(toks: &[String], start: usize) -> Option<ClockMatch> {
    match toks.get(start)?.as_str() {
        "noon" | "midday" => {
            return Some(ClockMatch {
                len: 1,
                hour12: 0,
                meridiem: Meridiem::Pm,
                hour24: Some(12),
            })
        }
        "midnight" => {
            return Some(ClockMatch {
                len: 1,
                hour12: 0,
                meridiem: Meridiem::Am,
                hour24: Some(0),
            })
        }
        _ => {}
    }

    let mut i = start;
    let mut cue = false;
    let mut to_prefix = false;
    let mut prefixed = false;

    match (
        toks.get(i).map(String::as_str),
        toks.get(i + 1).map(String::as_str),
    ) {
        (Some("half"), Some("past")) => {
            i += 2;
            prefixed = true;
        }
        (Some("quarter"), Some("past")) => {
            i += 2;
            prefixed = true;
        }
        (Some("quarter"), Some("to")) => {
            i += 2;
            prefixed = true;
            to_prefix = true;
        }
        _ => {}
    }
    cue |= prefixed;

    let spoken = hour_word(toks.get(i)?)?;
    let digit_hour = is_digit_token(&toks[i]);
    i += 1;

    if digit_hour
        && toks.get(i).map(String::as_str) == Some(":")
        && toks
            .get(i + 1)
            .is_some_and(|t| is_digit_token(t) && t.parse::<u8>().map_or(false, |m| m < 60))
    {
        i += 2;
        cue = true;
    }

    if toks.get(i).map(String::as_str) == Some("o'clock") {
        i += 1;
        cue = true;
    }

    let mut meridiem = Meridiem::Unknown;
    let mut night_attach = false;
    if let Some(m) = match_meridiem(toks, i) {
        i += m.len;
        meridiem = m.meridiem;
    } else if let Some((len, part)) = match_daypart_attachment(toks, i) {
        i += len;
        cue = true;
        meridiem = match part {
            Daypart::Morning => Meridiem::Am,
            Daypart::Afternoon | Daypart::Evening => Meridiem::Pm,
            Daypart::Night => {
                night_attach = true;
                Meridiem::Pm
            }
        };
    }

    if meridiem == Meridiem::Unknown && !cue {
        return None;
    }

    let spoken = if to_prefix {
        // "quarter to five" falls in the hour-4 bucket
        if spoken == 1 {
            12
        } else {
            spoken - 1
        }
    } else {
        spoken
    };
    let mut hour12 = spoken % 12;
    let mut meridiem = meridiem;
    if night_attach && spoken == 12 {
        // "twelve at night" is midnight
        meridiem = Meridiem::Am;
        hour12 = 0;
    }
    let hour24 = match meridiem {
        Meridiem::Am => Some(hour12),
        Meridiem::Pm => Some(hour12 + 12),
        Meridiem::Unknown => None,
    };

    Some(ClockMatch {
        len: i - start,
        hour12,
        meridiem,
        hour24,
    })
}

/// Extract all clock and day-part expressions from a segmented document,
/// in document order with pairwise-disjoint spans.
pub fn extract_expressions(doc: &Document) -> Vec<TimeExpression> {
    let mut out = Vec::new();
    for (pi, para) in doc.paragraphs.iter().enumerate() {
        for (si, sentence) in para.iter().enumerate() {
            let lower: Vec<String> = sentence
                .iter()
                .map(|t| t.text.to_ascii_lowercase())
                .collect();
            let mut i = 0;
            while i < lower.len() {
                if let Some(m) = match_clock(&lower, i) {
                    let surface = sentence[i..i + m.len]
                        .iter()
                        .map(|t| t.text.as_str())
                        .collect::<Vec<_>>()
                        .join(" ");
                    out.push(TimeExpression {
                        doc_id: doc.meta.id.clone(),
                        paragraph_index: pi,
                        sentence_index: si,
                        span: (i, i + m.len),
                        surface,
                        payload: TimexPayload::Clock {
                            hour12: m.hour12,
                            meridiem: m.meridiem,
                            hour24: m.hour24,
                        },
                    });
                    i += m.len;
                } else if let Some(part) = Daypart::parse(&lower[i]) {
                    out.push(TimeExpression {
                        doc_id: doc.meta.id.clone(),
                        paragraph_index: pi,
                        sentence_index: si,
                        span: (i, i + 1),
                        surface: sentence[i].text.clone(),
                        payload: TimexPayload::Daypart(part),
                    });
                    i += 1;
                } else {
                    i += 1;
                }
            }
        }
    }
    out
}

/// Drop bare "1 am" clock matches that look like an OCR misread of "I am".
///
/// The filter fires only on the surface `1 am` / `1 AM` with an unpunctuated
/// meridiem and no adjacent clock cue (a preceding "at", minutes, or
/// "o'clock" all rescue the match).
pub fn filter_ocr_artifacts(
    expressions: Vec<TimeExpression>,
    doc: &Document,
) -> Vec<TimeExpression> {
    expressions
        .into_iter()
        .filter(|e| !is_ocr_artifact(e, doc))
        .collect()
}

fn is_ocr_artifact(expr: &TimeExpression, doc: &Document) -> bool {
    if !expr.is_clock() {
        return false;
    }
    let lower = expr.surface.to_ascii_lowercase();
    if lower != "1 am" {
        return false;
    }
    let sentence = doc.sentence(expr.paragraph_index, expr.sentence_index);
    let preceded_by_at = expr.span.0 > 0
        && sentence[expr.span.0 - 1]
            .text
            .eq_ignore_ascii_case("at");
    !preceded_by_at
}

/// Resolved-expression counts per (hour12, meridiem) cell plus a per-hour
/// column of meridiem-unknown counts. Midnight lands in (0, AM) and noon in
/// (0, PM). Only clock expressions are counted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HourCountTable {
    pub am: [u64; 12],
    pub pm: [u64; 12],
    pub ambiguous: [u64; 12],
}

impl HourCountTable {
    pub fn resolved_total(&self) -> u64 {
        self.am.iter().sum::<u64>() + self.pm.iter().sum::<u64>()
    }

    pub fn ambiguous_total(&self) -> u64 {
        self.ambiguous.iter().sum()
    }
}

pub fn tabulate_hours<'a, I>(expressions: I) -> HourCountTable
where
    I: IntoIterator<Item = &'a TimeExpression>,
{
    let mut table = HourCountTable::default();
    for expr in expressions {
        if let TimexPayload::Clock { hour12, hour24, .. } = expr.payload {
            match hour24 {
                Some(h) if h < 12 => table.am[(h % 12) as usize] += 1,
                Some(h) => table.pm[(h % 12) as usize] += 1,
                None => table.ambiguous[hour12 as usize] += 1,
            }
        }
    }
    table
}

/// Fraction of expressions outside hour 0 whose meridiem resolved.
///
/// Hour 0 is excluded because noon and midnight resolve by definition.
pub fn resolution_rate(table: &HourCountTable) -> Result<f64, TimexError> {
    let resolved: u64 = table.am[1..].iter().sum::<u64>() + table.pm[1..].iter().sum::<u64>();
    let unresolved: u64 = table.ambiguous[1..].iter().sum();
    let total = resolved + unresolved;
    if total == 0 {
        return Err(TimexError::EmptyTable);
    }
    Ok(resolved as f64 / total as f64)
}

fn opt_field<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl TimeExpression {
    /// Tab-separated dump record: doc_id, para, sent, span_start, span_end,
    /// surface, kind, hour12, meridiem, hour24, daypart.
    pub fn to_record(&self) -> String {
        match &self.payload {
            TimexPayload::Clock {
                hour12,
                meridiem,
                hour24,
            } => format!(
                "{}\t{}\t{}\t{}\t{}\t{}\tclock\t{}\t{}\t{}\t-",
                self.doc_id,
                self.paragraph_index,
                self.sentence_index,
                self.span.0,
                self.span.1,
                self.surface,
                hour12,
                meridiem,
                opt_field(*hour24),
            ),
            TimexPayload::Daypart(part) => format!(
                "{}\t{}\t{}\t{}\t{}\t{}\tdaypart\t-\t-\t-\t{}",
                self.doc_id,
                self.paragraph_index,
                self.sentence_index,
                self.span.0,
                self.span.1,
                self.surface,
                part,
            ),
        }
    }

    pub fn from_record(line: &str) -> Result<TimeExpression, TimexError> {
        let bad = || TimexError::Parse(line.to_string());
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 11 {
            return Err(bad());
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let payload = match fields[6] {
            "clock" => {
                let hour12 = fields[7].parse::<u8>().map_err(|_| bad())?;
                let meridiem = match fields[8] {
                    "am" => Meridiem::Am,
                    "pm" => Meridiem::Pm,
                    "unknown" => Meridiem::Unknown,
                    _ => return Err(bad()),
                };
                let hour24 = match fields[9] {
                    "-" => None,
                    s => Some(s.parse::<u8>().map_err(|_| bad())?),
                };
                TimexPayload::Clock {
                    hour12,
                    meridiem,
                    hour24,
                }
            }
            "daypart" => TimexPayload::Daypart(Daypart::parse(fields[10]).ok_or_else(bad)?),
            _ => return Err(bad()),
        };
        Ok(TimeExpression {
            doc_id: fields[0].to_string(),
            paragraph_index: parse_usize(fields[1])?,
            sentence_index: parse_usize(fields[2])?,
            span: (parse_usize(fields[3])?, parse_usize(fields[4])?),
            surface: fields[5].to_string(),
            payload,
        })
    }
}
