//! Whole-book time-flow inference: per-window hour distributions, tag
//! priors, and the optimal k-segment partition by dynamic programming.

use thiserror::Error;

use crate::ingest::Document;
use crate::timex::{Daypart, TimeExpression};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("segment count {k} is out of range for {n} windows")]
    BadSegmentCount { k: usize, n: usize },
    #[error("no reference annotations to evaluate against")]
    EmptyReference,
}

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A normalized 24-vector of per-hour weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HourDistribution(pub [f64; 24]);

impl HourDistribution {
    pub fn uniform() -> HourDistribution {
        HourDistribution([1.0 / 24.0; 24])
    }

    /// Normalize nonnegative weights to sum 1; all-zero input goes uniform.
    pub fn normalized(weights: [f64; 24]) -> HourDistribution {
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return HourDistribution::uniform();
        }
        let mut out = weights;
        for w in &mut out {
            *w /= sum;
        }
        HourDistribution(out)
    }

    pub fn is_normalized(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        (sum - 1.0).abs() <= NORMALIZATION_TOLERANCE && self.0.iter().all(|w| *w >= 0.0)
    }
}

/// A fixed-size block of consecutive sentences used for book inference.
#[derive(Debug, Clone)]
pub struct BookWindow {
    pub index: usize,
    /// Flattened sentence range, end-exclusive.
    pub sentence_range: (usize, usize),
    pub model: Option<HourDistribution>,
    pub tag: Option<HourDistribution>,
    pub merged: Option<HourDistribution>,
}

#[derive(Debug, Clone)]
pub struct WindowSequence {
    pub doc_id: String,
    pub windows: Vec<BookWindow>,
}

impl WindowSequence {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn merged_distributions(&self) -> Vec<&HourDistribution> {
        self.windows
            .iter()
            .map(|w| w.merged.as_ref().expect("merged distribution not set"))
            .collect()
    }
}

/// Tile a book's sentences into consecutive non-overlapping blocks of
/// `window_sentences`; the final block may be short.
pub fn book_windows(doc: &Document, window_sentences: usize) -> WindowSequence {
    assert!(window_sentences > 0);
    let n_sentences = doc.sentence_count();
    let mut windows = Vec::new();
    let mut start = 0;
    let mut index = 0;
    while start < n_sentences {
        let end = (start + window_sentences).min(n_sentences);
        windows.push(BookWindow {
            index,
            sentence_range: (start, end),
            model: None,
            tag: None,
            merged: None,
        });
        start = end;
        index += 1;
    }
    WindowSequence {
        doc_id: doc.meta.id.clone(),
        windows,
    }
}

/// Min-max normalize raw scores, smooth circularly with the two neighbor
/// hours, and renormalize. All-equal scores yield the uniform distribution.
pub fn model_distribution(scores: &[f64; 24]) -> HourDistribution {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 0.0 {
        return HourDistribution::uniform();
    }
    let mut norm = [0.0; 24];
    for h in 0..24 {
        norm[h] = (scores[h] - min) / (max - min);
    }
    let mut smoothed = [0.0; 24];
    for h in 0..24 {
        smoothed[h] = (norm[(h + 23) % 24] + norm[h] + norm[(h + 1) % 24]) / 3.0;
    }
    HourDistribution::normalized(smoothed)
}

/// Hours covered by a day-part tag. Night wraps around midnight.
pub fn daypart_hours(part: Daypart) -> &'static [u8] {
    match part {
        Daypart::Morning => &[6, 7, 8, 9, 10, 11],
        Daypart::Afternoon => &[12, 13, 14, 15, 16],
        Daypart::Evening => &[17, 18, 19, 20],
        Daypart::Night => &[21, 22, 23, 0, 1, 2, 3, 4, 5],
    }
}

/// Uniform distribution over the union of the tags' hour ranges, or `None`
/// when the window carries no tag.
pub fn tag_distribution(tags: &[Daypart]) -> Option<HourDistribution> {
    if tags.is_empty() {
        return None;
    }
    let mut support = [false; 24];
    for tag in tags {
        for &h in daypart_hours(*tag) {
            support[h as usize] = true;
        }
    }
    let n = support.iter().filter(|s| **s).count() as f64;
    let mut weights = [0.0; 24];
    for h in 0..24 {
        if support[h] {
            weights[h] = 1.0 / n;
        }
    }
    Some(HourDistribution(weights))
}

/// Windows without a tag inherit the most recent preceding tag
/// distribution; windows before the first tag get the uniform distribution.
pub fn forward_fill(tags: &[Option<HourDistribution>]) -> Vec<HourDistribution> {
    let mut out = Vec::with_capacity(tags.len());
    let mut last: Option<&HourDistribution> = None;
    for tag in tags {
        if let Some(d) = tag {
            last = Some(d);
        }
        out.push(last.cloned().unwrap_or_else(HourDistribution::uniform));
    }
    out
}

/// Elementwise mean of two normalized distributions (renormalized as a
/// numerical guard).
pub fn merge_distributions(model: &HourDistribution, tag: &HourDistribution) -> HourDistribution {
    let mut weights = [0.0; 24];
    for h in 0..24 {
        weights[h] = (model.0[h] + tag.0[h]) / 2.0;
    }
    HourDistribution::normalized(weights)
}

/// A k-segment partition of a window sequence with one hour per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub k: usize,
    /// 1-based start indices of each segment; the first is always 1.
    pub starts: Vec<usize>,
    pub hours: Vec<u8>,
    pub objective: f64,
}

impl Segmentation {
    /// Expand to a per-window hour list of length `n`.
    pub fn hour_track(&self, n: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(n);
        for (si, &start) in self.starts.iter().enumerate() {
            let end = self
                .starts
                .get(si + 1)
                .map(|next| next - 1)
                .unwrap_or(n);
            for _ in start..=end {
                out.push(self.hours[si]);
            }
        }
        debug_assert_eq!(out.len(), n);
        out
    }

    /// Segment id (0-based) per window.
    pub fn segment_ids(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        for (si, &start) in self.starts.iter().enumerate() {
            let end = self
                .starts
                .get(si + 1)
                .map(|next| next - 1)
                .unwrap_or(n);
            for _ in start..=end {
                out.push(si);
            }
        }
        out
    }
}

fn check_k(k: usize, n: usize) -> Result<(), SegmentError> {
    if k < 1 || k > n {
        return Err(SegmentError::BadSegmentCount { k, n });
    }
    Ok(())
}

/// Best hour for the window range `[a, b)` via per-hour prefix sums, ties
/// toward the lower hour. Returns (score, hour).
fn segment_score(prefix: &[[f64; 24]], a: usize, b: usize) -> (f64, u8) {
    let mut best = f64::NEG_INFINITY;
    let mut best_hour = 0u8;
    for h in 0..24usize {
        let s = prefix[b][h] - prefix[a][h];
        if s > best {
            best = s;
            best_hour = h as u8;
        }
    }
    (best, best_hour)
}

/// Maximize the sum over segments of `max_h sum_j p_h[j]` across exactly
/// `k` contiguous non-empty segments covering all windows.
///
/// O(n^2 k) time with O(24) segment evaluation after O(24 n) prefix-sum
/// precomputation; ties break toward later break positions, then lower hours.
pub fn dp_partition(
    distributions: &[&HourDistribution],
    k: usize,
) -> Result<Segmentation, SegmentError> {
    let n = distributions.len();
    check_k(k, n)?;

    let mut prefix = vec![[0.0f64; 24]; n + 1];
    for (j, dist) in distributions.iter().enumerate() {
        for h in 0..24 {
            prefix[j + 1][h] = prefix[j][h] + dist.0[h];
        }
    }

    // f[m][i]: best objective for the first i windows in m segments
    let neg = f64::NEG_INFINITY;
    let mut f = vec![vec![neg; n + 1]; k + 1];
    let mut back = vec![vec![0usize; n + 1]; k + 1];
    f[0][0] = 0.0;
    for m in 1..=k {
        for i in m..=n {
            let mut best = neg;
            let mut best_j = m - 1;
            for j in (m - 1)..i {
                if f[m - 1][j] == neg {
                    continue;
                }
                let (score, _) = segment_score(&prefix, j, i);
                let cand = f[m - 1][j] + score;
                // >= keeps the later break on ties
                if cand >= best {
                    best = cand;
                    best_j = j;
                }
            }
            f[m][i] = best;
            back[m][i] = best_j;
        }
    }

    let mut bounds = Vec::with_capacity(k + 1);
    let mut i = n;
    for m in (1..=k).rev() {
        bounds.push(i);
        i = back[m][i];
    }
    bounds.push(0);
    bounds.reverse(); // 0 = b_0 < b_1 < ... < b_k = n

    let mut starts = Vec::with_capacity(k);
    let mut hours = Vec::with_capacity(k);
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (_, hour) = segment_score(&prefix, a, b);
        starts.push(a + 1);
        hours.push(hour);
    }
    Ok(Segmentation {
        k,
        starts,
        hours,
        objective: f[k][n],
    })
}

/// Equal-size contiguous partitions (remainder spread over the leading
/// partitions), each assigned the argmax of its summed distribution.
pub fn max_hour_baseline(
    distributions: &[&HourDistribution],
    k: usize,
) -> Result<Segmentation, SegmentError> {
    let n = distributions.len();
    check_k(k, n)?;

    let mut prefix = vec![[0.0f64; 24]; n + 1];
    for (j, dist) in distributions.iter().enumerate() {
        for h in 0..24 {
            prefix[j + 1][h] = prefix[j][h] + dist.0[h];
        }
    }

    let base = n / k;
    let extra = n % k;
    let mut starts = Vec::with_capacity(k);
    let mut hours = Vec::with_capacity(k);
    let mut objective = 0.0;
    let mut pos = 0usize;
    for s in 0..k {
        let size = base + usize::from(s < extra);
        let (score, hour) = segment_score(&prefix, pos, pos + size);
        starts.push(pos + 1);
        hours.push(hour);
        objective += score;
        pos += size;
    }
    Ok(Segmentation {
        k,
        starts,
        hours,
        objective,
    })
}

/// One segment, fixed at noon.
pub fn noon_baseline(n: usize) -> Segmentation {
    assert!(n >= 1);
    Segmentation {
        k: 1,
        starts: vec![1],
        hours: vec![12],
        objective: 0.0,
    }
}

/// k = max(1, round(n / ratio)), half-up.
pub fn choose_k(n: usize, ratio: f64) -> usize {
    assert!(n >= 1 && ratio > 0.0);
    ((n as f64 / ratio).round() as usize).max(1)
}

use crate::classify::hour_error;

/// Per-window reference hours induced by explicit resolved time phrases.
#[derive(Debug, Clone)]
pub struct ReferenceTrack {
    /// Candidate hours per window; empty means unannotated.
    pub hours: Vec<Vec<u8>>,
    /// Whether the book qualifies for evaluation (at least two resolved
    /// references including one beyond noon/midnight).
    pub eligible: bool,
}

/// Mean over annotated windows of the minimum circular error against any
/// reference candidate at that window.
pub fn evaluate_track(
    predicted: &[u8],
    references: &[&ReferenceTrack],
) -> Result<f64, SegmentError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &pred) in predicted.iter().enumerate() {
        let candidates: Vec<u8> = references
            .iter()
            .flat_map(|r| r.hours.get(i).into_iter().flatten().copied())
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let err = candidates
            .iter()
            .map(|&h| hour_error(pred, h))
            .min()
            .unwrap();
        sum += err as f64;
        count += 1;
    }
    if count == 0 {
        return Err(SegmentError::EmptyReference);
    }
    Ok(sum / count as f64)
}

/// Annotate windows containing resolved expressions with those hours.
pub fn build_pseudo_truth(
    doc: &Document,
    expressions: &[TimeExpression],
    window_sentences: usize,
) -> ReferenceTrack {
    let order = doc.sentence_indices();
    let n_windows = doc.sentence_count().div_ceil(window_sentences).max(1);
    let mut hours: Vec<Vec<u8>> = vec![Vec::new(); n_windows];
    let mut resolved = 0usize;
    let mut beyond_noon_midnight = 0usize;
    for expr in expressions {
        let Some(hour) = expr.hour24() else { continue };
        let Some(flat) = order
            .iter()
            .position(|&(p, s)| p == expr.paragraph_index && s == expr.sentence_index)
        else {
            continue;
        };
        let w = flat / window_sentences;
        if !hours[w].contains(&hour) {
            hours[w].push(hour);
        }
        resolved += 1;
        if hour != 12 && hour != 0 {
            beyond_noon_midnight += 1;
        }
    }
    ReferenceTrack {
        hours,
        eligible: resolved >= 2 && beyond_noon_midnight >= 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{segment_document, BookMeta, Source};
    use crate::timex::extract_expressions;

    fn doc(text: &str) -> Document {
        segment_document(
            text,
            BookMeta {
                id: "b".to_string(),
                title: "t".to_string(),
                author: "a".to_string(),
                author_birth_year: None,
                source: Source::Gutenberg,
            },
        )
    }

    fn sentences(n: usize) -> String {
        (0..n)
            .map(|i| format!("Sentence number {i} here."))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn book_window_sizes() {
        let d = doc(&sentences(20));
        let seq = book_windows(&d, 7);
        let sizes: Vec<usize> = seq
            .windows
            .iter()
            .map(|w| w.sentence_range.1 - w.sentence_range.0)
            .collect();
        assert_eq!(sizes, [7, 7, 6]);
        assert_eq!(book_windows(&doc(&sentences(3)), 7).len(), 1);
        assert_eq!(book_windows(&doc(&sentences(14)), 7).len(), 2);
    }

    #[test]
    fn model_distribution_rules() {
        let uniform = model_distribution(&[3.5; 24]);
        assert_eq!(uniform, HourDistribution::uniform());

        let mut scores = [0.0; 24];
        scores[12] = 1.0;
        let d = model_distribution(&scores);
        for h in 0..24 {
            if (11..=13).contains(&h) {
                assert!((d.0[h] - 1.0 / 3.0).abs() < 1e-12);
            } else {
                assert_eq!(d.0[h], 0.0);
            }
        }
        assert!(d.is_normalized());
    }

    #[test]
    fn tag_distribution_supports() {
        let morning = tag_distribution(&[Daypart::Morning]).unwrap();
        for h in 0..24u8 {
            let expect = if (6..=11).contains(&h) { 1.0 / 6.0 } else { 0.0 };
            assert_eq!(morning.0[h as usize], expect);
        }
        let night = tag_distribution(&[Daypart::Night]).unwrap();
        for h in [21, 22, 23, 0, 1, 2, 3, 4, 5] {
            assert_eq!(night.0[h], 1.0 / 9.0);
        }
        let both = tag_distribution(&[Daypart::Morning, Daypart::Afternoon]).unwrap();
        for h in 6..=16usize {
            assert!((both.0[h] - 1.0 / 11.0).abs() < 1e-12);
        }
        assert!(tag_distribution(&[]).is_none());
    }

    #[test]
    fn forward_fill_inherits() {
        let morning = tag_distribution(&[Daypart::Morning]).unwrap();
        let night = tag_distribution(&[Daypart::Night]).unwrap();
        let tags = vec![
            None,
            Some(morning.clone()),
            None,
            None,
            Some(night.clone()),
            None,
            None,
        ];
        let filled = forward_fill(&tags);
        assert_eq!(filled[0], HourDistribution::uniform());
        assert_eq!(filled[2], morning);
        assert_eq!(filled[3], morning);
        assert_eq!(filled[5], night);
        assert_eq!(filled[6], night);

        let empty = forward_fill(&[None, None]);
        assert!(empty.iter().all(|d| *d == HourDistribution::uniform()));
    }

    #[test]
    fn merge_examples() {
        let u = HourDistribution::uniform();
        let same = merge_distributions(&u, &u);
        for h in 0..24 {
            assert!((same.0[h] - u.0[h]).abs() < 1e-12);
        }

        let mut one_hot = [0.0; 24];
        one_hot[12] = 1.0;
        let model = HourDistribution(one_hot);
        let tag = tag_distribution(&[Daypart::Afternoon]).unwrap();
        let merged = merge_distributions(&model, &tag);
        assert!((merged.0[12] - 0.6).abs() < 1e-12);
        for h in 13..=16 {
            assert!((merged.0[h] - 0.1).abs() < 1e-12);
        }
    }

    fn one_hot(h: usize) -> HourDistribution {
        let mut w = [0.0; 24];
        w[h] = 1.0;
        HourDistribution(w)
    }

    #[test]
    fn dp_base_cases() {
        let dists = vec![one_hot(3), one_hot(3), one_hot(20), one_hot(20)];
        let refs: Vec<&HourDistribution> = dists.iter().collect();

        let one = dp_partition(&refs, 1).unwrap();
        assert_eq!(one.starts, [1]);
        assert_eq!(one.objective, 2.0);

        let all = dp_partition(&refs, 4).unwrap();
        assert_eq!(all.starts, [1, 2, 3, 4]);
        assert_eq!(all.hours, [3, 3, 20, 20]);
        assert_eq!(all.objective, 4.0);

        let two = dp_partition(&refs, 2).unwrap();
        assert_eq!(two.starts, [1, 3]);
        assert_eq!(two.hours, [3, 20]);
        assert_eq!(two.objective, 4.0);

        assert!(dp_partition(&refs, 5).is_err());
        assert!(dp_partition(&refs, 0).is_err());
    }

    #[test]
    fn max_hour_partition_sizes() {
        let dists: Vec<HourDistribution> = (0..10).map(|_| HourDistribution::uniform()).collect();
        let refs: Vec<&HourDistribution> = dists.iter().collect();
        let seg = max_hour_baseline(&refs, 3).unwrap();
        assert_eq!(seg.starts, [1, 5, 8]); // sizes 4, 3, 3

        let dp1 = dp_partition(&refs[..4], 1).unwrap();
        let mh1 = max_hour_baseline(&refs[..4], 1).unwrap();
        assert_eq!(dp1, mh1);
    }

    #[test]
    fn noon_baseline_and_track() {
        let seg = noon_baseline(3);
        assert_eq!(seg.hour_track(3), [12, 12, 12]);

        let seg = Segmentation {
            k: 2,
            starts: vec![1, 3],
            hours: vec![9, 21],
            objective: 0.0,
        };
        assert_eq!(seg.hour_track(3), [9, 9, 21]);
        assert_eq!(seg.segment_ids(3), [0, 0, 1]);
    }

    #[test]
    fn choose_k_rounding() {
        assert_eq!(choose_k(80, 8.0), 10);
        assert_eq!(choose_k(4, 8.0), 1);
        assert_eq!(choose_k(12, 8.0), 2); // round(1.5) half-up
    }

    #[test]
    fn evaluate_track_min_rule() {
        let refs = ReferenceTrack {
            hours: vec![vec![12, 16], vec![]],
            eligible: true,
        };
        let err = evaluate_track(&[14, 3], &[&refs]).unwrap();
        assert_eq!(err, 2.0);

        let exact = ReferenceTrack {
            hours: vec![vec![5], vec![9]],
            eligible: true,
        };
        assert_eq!(evaluate_track(&[5, 9], &[&exact]).unwrap(), 0.0);

        let empty = ReferenceTrack {
            hours: vec![vec![], vec![]],
            eligible: false,
        };
        assert!(matches!(
            evaluate_track(&[5, 9], &[&empty]),
            Err(SegmentError::EmptyReference)
        ));
    }

    #[test]
    fn pseudo_truth_eligibility() {
        let noon_only = doc("At noon he rose. At noon he ate. At noon he slept.");
        let exprs = extract_expressions(&noon_only);
        let truth = build_pseudo_truth(&noon_only, &exprs, 7);
        assert!(!truth.eligible);

        let mixed = doc("At noon he rose. He left at three in the afternoon.");
        let exprs = extract_expressions(&mixed);
        let truth = build_pseudo_truth(&mixed, &exprs, 1);
        assert!(truth.eligible);
        let annotated: usize = truth.hours.iter().filter(|h| !h.is_empty()).count();
        assert_eq!(annotated, 2);
    }
}
