//! Word/hour association: per-hour bags of words from context windows and
//! the binomial-tail scoring function.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::ingest::Document;
use crate::timex::TimeExpression;

#[derive(Debug, Error)]
pub enum AssociationError {
    #[error("word {0:?} never occurs in the corpus; its background probability is undefined")]
    WordUnseenGlobally(String),
    #[error("malformed bag file: {0}")]
    Parse(String),
}

/// Per-hour token counts built from +/-`half_window`-sentence contexts of
/// resolved time references, after merging each hour's bag with its two
/// neighbors (mod 24).
#[derive(Debug, Clone)]
pub struct HourBags {
    merged: Vec<HashMap<String, u64>>,
    totals: [u64; 24],
    global: HashMap<String, u64>,
    global_total: u64,
}

impl HourBags {
    pub fn total(&self, hour: u8) -> u64 {
        self.totals[hour as usize]
    }

    pub fn count(&self, word: &str, hour: u8) -> u64 {
        self.merged[hour as usize].get(word).copied().unwrap_or(0)
    }

    pub fn global_count(&self, word: &str) -> u64 {
        self.global.get(word).copied().unwrap_or(0)
    }

    pub fn global_total(&self) -> u64 {
        self.global_total
    }

    /// Words present in any merged bag, sorted.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self
            .merged
            .iter()
            .flat_map(|bag| bag.keys().map(String::as_str))
            .collect();
        words.sort_unstable();
        words.dedup();
        words
    }
}

/// Build hour bags from the resolved expressions of a corpus.
///
/// Each resolved expression contributes the lowercased tokens of sentences
/// `[i - half_window, i + half_window]` (clipped at document bounds) to its
/// hour's raw bag; the neighbor merge is applied once afterwards. The
/// global table counts every token of every document exactly once.
pub fn build_hour_bags(
    documents: &[Document],
    expressions: &[TimeExpression],
    half_window: usize,
) -> HourBags {
    let by_id: HashMap<&str, &Document> = documents
        .iter()
        .map(|d| (d.meta.id.as_str(), d))
        .collect();

    let mut raw: Vec<HashMap<String, u64>> = vec![HashMap::new(); 24];
    for expr in expressions {
        let Some(hour) = expr.hour24() else { continue };
        let Some(doc) = by_id.get(expr.doc_id.as_str()) else {
            continue;
        };
        let order = doc.sentence_indices();
        let Some(flat) = order
            .iter()
            .position(|&(p, s)| p == expr.paragraph_index && s == expr.sentence_index)
        else {
            continue;
        };
        let lo = flat.saturating_sub(half_window);
        let hi = (flat + half_window).min(order.len().saturating_sub(1));
        let bag = &mut raw[hour as usize];
        for &(p, s) in &order[lo..=hi] {
            for tok in doc.sentence(p, s) {
                *bag.entry(tok.text.to_ascii_lowercase()).or_insert(0) += 1;
            }
        }
    }

    let mut merged: Vec<HashMap<String, u64>> = vec![HashMap::new(); 24];
    let mut totals = [0u64; 24];
    for h in 0..24usize {
        for offset in [23usize, 0, 1] {
            let src = &raw[(h + offset) % 24];
            for (word, count) in src {
                *merged[h].entry(word.clone()).or_insert(0) += count;
            }
        }
        totals[h] = merged[h].values().sum();
    }

    let mut global = HashMap::new();
    let mut global_total = 0u64;
    for doc in documents {
        for para in &doc.paragraphs {
            for sent in para {
                for tok in sent {
                    *global.entry(tok.text.to_ascii_lowercase()).or_insert(0) += 1;
                    global_total += 1;
                }
            }
        }
    }

    HourBags {
        merged,
        totals,
        global,
        global_total,
    }
}

/// How over-represented `word` is at `hour`: the binomial CDF at the
/// observed bag count `k` with parameters `(N_h, p[w])`.
pub fn score(word: &str, hour: u8, bags: &HourBags) -> Result<f64, AssociationError> {
    let global = bags.global_count(word);
    if global == 0 {
        return Err(AssociationError::WordUnseenGlobally(word.to_string()));
    }
    let p = global as f64 / bags.global_total as f64;
    let n = bags.total(hour);
    let k = bags.count(word, hour).min(n);
    Ok(binomial_cdf(k, n, p))
}

/// Hours ranked by descending association score, ties broken toward the
/// lower hour; at most `min(m, 24)` entries.
pub fn top_hours(word: &str, bags: &HourBags, m: usize) -> Result<Vec<u8>, AssociationError> {
    let mut scored: Vec<(u8, f64)> = (0u8..24)
        .map(|h| score(word, h, bags).map(|s| (h, s)))
        .collect::<Result<_, _>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(m.min(24)).map(|(h, _)| h).collect())
}

/// Past this trial count the sum has too many terms; switch to the
/// regularized-incomplete-beta identity.
const BETA_SWITCH: u64 = 1_000_000;

/// P(X <= k) for X ~ Binomial(n, p), numerically stable.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return 1.0;
    }
    if k >= n {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0; // k < n here
    }
    if n <= BETA_SWITCH {
        binomial_cdf_sum(k, n, p)
    } else {
        binomial_cdf_beta(k, n, p)
    }
}

/// Direct summation of the CDF with log-space accumulation.
pub fn binomial_cdf_sum(k: u64, n: u64, p: f64) -> f64 {
    let log_p = p.ln();
    let log_q = (-p).ln_1p();
    let mut log_term = n as f64 * log_q;
    let mut log_acc = log_term;
    for i in 1..=k {
        log_term += ((n - i + 1) as f64).ln() - (i as f64).ln() + log_p - log_q;
        log_acc = log_add_exp(log_acc, log_term);
    }
    log_acc.exp().min(1.0)
}

/// CDF via the identity P(X <= k) = I_{1-p}(n - k, k + 1).
pub fn binomial_cdf_beta(k: u64, n: u64, p: f64) -> f64 {
    regularized_beta((n - k) as f64, k as f64 + 1.0, 1.0 - p)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

// Lanczos approximation, g = 7.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta function I_x(a, b) by continued fraction.
fn regularized_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cont_frac(a, b, x) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_cont_frac(b, a, 1.0 - x) / b).clamp(0.0, 1.0)
    }
}

fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

const BAGS_FORMAT: &str = "clockflow-bags\tv1";

impl HourBags {
    /// Serialize to the versioned count-table format, deterministically.
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines = vec![BAGS_FORMAT.to_string(), format!("total\t{}", self.global_total)];
        for h in 0..24usize {
            lines.push(format!("n\t{h}\t{}", self.totals[h]));
        }
        let global: BTreeMap<&String, &u64> = self.global.iter().collect();
        for (word, count) in global {
            lines.push(format!("g\t{word}\t{count}"));
        }
        for h in 0..24usize {
            let bag: BTreeMap<&String, &u64> = self.merged[h].iter().collect();
            for (word, count) in bag {
                lines.push(format!("h\t{h}\t{word}\t{count}"));
            }
        }
        lines
    }

    pub fn from_lines<'a, I>(lines: I) -> Result<HourBags, AssociationError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut iter = lines.into_iter();
        let header = iter.next().unwrap_or("");
        if header != BAGS_FORMAT {
            return Err(AssociationError::Parse(format!(
                "unexpected header {header:?}"
            )));
        }
        let mut bags = HourBags {
            merged: vec![HashMap::new(); 24],
            totals: [0; 24],
            global: HashMap::new(),
            global_total: 0,
        };
        for line in iter {
            let bad = || AssociationError::Parse(line.to_string());
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["total", t] => bags.global_total = t.parse().map_err(|_| bad())?,
                ["n", h, t] => {
                    let h: usize = h.parse().map_err(|_| bad())?;
                    bags.totals[h] = t.parse().map_err(|_| bad())?;
                }
                ["g", word, count] => {
                    bags.global
                        .insert(word.to_string(), count.parse().map_err(|_| bad())?);
                }
                ["h", h, word, count] => {
                    let h: usize = h.parse().map_err(|_| bad())?;
                    bags.merged[h].insert(word.to_string(), count.parse().map_err(|_| bad())?);
                }
                _ => return Err(bad()),
            }
        }
        Ok(bags)
    }
}
