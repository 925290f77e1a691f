//! Aggregation of predicted window hours into author-birth-year cohorts.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrendsError {
    #[error("no books with known author birth years")]
    NoKnownYears,
}

/// Birth-year buckets: everything up to 1800, then 20-year intervals up to
/// 1900, then 1901 and beyond. Missing years map to `Unknown` and are
/// excluded from share aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Cohort {
    UpTo1800,
    Range(i32, i32),
    From1901,
    Unknown,
}

pub const COHORT_EDGES: &[(i32, i32)] = &[
    (1801, 1820),
    (1821, 1840),
    (1841, 1860),
    (1861, 1880),
    (1881, 1900),
];

impl Cohort {
    pub fn label(&self) -> String {
        match self {
            Cohort::UpTo1800 => "<=1800".to_string(),
            Cohort::Range(lo, hi) => format!("{lo}-{hi}"),
            Cohort::From1901 => ">=1901".to_string(),
            Cohort::Unknown => "unknown".to_string(),
        }
    }

    pub fn year_bounds(&self) -> (Option<i32>, Option<i32>) {
        match self {
            Cohort::UpTo1800 => (None, Some(1800)),
            Cohort::Range(lo, hi) => (Some(*lo), Some(*hi)),
            Cohort::From1901 => (Some(1901), None),
            Cohort::Unknown => (None, None),
        }
    }
}

/// Bucket an author birth year; boundaries are right-inclusive.
pub fn assign_cohort(birth_year: Option<i32>) -> Cohort {
    let Some(year) = birth_year else {
        return Cohort::Unknown;
    };
    if year <= 1800 {
        return Cohort::UpTo1800;
    }
    for &(lo, hi) in COHORT_EDGES {
        if year >= lo && year <= hi {
            return Cohort::Range(lo, hi);
        }
    }
    Cohort::From1901
}

/// Hours counted as "late night": past 10 P.M. through pre-dawn.
pub const LATE_NIGHT_HOURS: &[u8] = &[22, 23, 0, 1, 2, 3, 4];

#[derive(Debug, Clone)]
pub struct CohortRow {
    pub cohort: Cohort,
    pub book_count: usize,
    /// Fraction of the cohort's windows assigned each hour; sums to 1.
    pub shares: [f64; 24],
}

#[derive(Debug, Clone)]
pub struct CohortTable {
    pub rows: Vec<CohortRow>,
}

/// Aggregate per-book hour tracks into per-cohort activity shares.
pub fn cohort_shares(
    books: &[(Option<i32>, Vec<u8>)],
) -> Result<CohortTable, TrendsError> {
    let mut grouped: BTreeMap<Cohort, (usize, [u64; 24])> = BTreeMap::new();
    for (birth_year, track) in books {
        let cohort = assign_cohort(*birth_year);
        if cohort == Cohort::Unknown {
            continue;
        }
        let entry = grouped.entry(cohort).or_insert((0, [0; 24]));
        entry.0 += 1;
        for &hour in track {
            entry.1[hour as usize] += 1;
        }
    }
    grouped.retain(|_, (_, counts)| counts.iter().sum::<u64>() > 0);
    if grouped.is_empty() {
        return Err(TrendsError::NoKnownYears);
    }
    let rows = grouped
        .into_iter()
        .map(|(cohort, (book_count, counts))| {
            let total: u64 = counts.iter().sum();
            let mut shares = [0.0; 24];
            for h in 0..24 {
                shares[h] = counts[h] as f64 / total as f64;
            }
            CohortRow {
                cohort,
                book_count,
                shares,
            }
        })
        .collect();
    Ok(CohortTable { rows })
}

/// Sum of shares over `hours` (defaults to [`LATE_NIGHT_HOURS`]) per cohort.
pub fn late_night_fraction(table: &CohortTable, hours: &[u8]) -> Vec<(Cohort, f64)> {
    table
        .rows
        .iter()
        .map(|row| {
            let frac: f64 = hours.iter().map(|&h| row.shares[h as usize]).sum();
            (row.cohort, frac)
        })
        .collect()
}
