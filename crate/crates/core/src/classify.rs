//! Windowed hour-of-day classification: 12 binary AM/PM disambiguators,
//! a 24-class hour model, baselines, and evaluation metrics.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::Document;
use crate::timex::{Meridiem, TimeExpression};

/// Reserved mask symbol; angle brackets cannot appear in natural tokens.
pub const MASK_TOKEN: &str = "<time>";

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no training windows for hour {0}")]
    NoTrainingDataForHour(u8),
    #[error("no training windows")]
    NoTrainingData,
    #[error("hour training data covers fewer than 2 classes")]
    SingleClass,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("prediction and annotation lists differ in length")]
    LengthMismatch,
    #[error("test window {0:?} appeared in training")]
    TrainTestOverlap(String),
    #[error("test window is missing a label")]
    UnlabeledTestWindow,
    #[error("malformed model file: {0}")]
    Parse(String),
}

/// Identifies a window by its anchor position for train/test discipline.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WindowKey {
    pub doc_id: String,
    pub paragraph: usize,
    pub sentence: usize,
    pub span: (usize, usize),
}

/// A masked +/-3-sentence context around one clock expression.
#[derive(Debug, Clone)]
pub struct SentenceWindow {
    pub doc_id: String,
    pub anchor_paragraph: usize,
    pub anchor_sentence: usize,
    pub anchor_span: (usize, usize),
    /// Lowercased tokens with every time-phrase token replaced by [`MASK_TOKEN`].
    pub tokens: Vec<String>,
    /// Spoken hour mod 12 of the anchor, known even when unresolved.
    pub anchor_hour12: u8,
    /// Resolved (or imputed) 24-hour label, when available.
    pub label_hour24: Option<u8>,
}

impl SentenceWindow {
    pub fn key(&self) -> WindowKey {
        WindowKey {
            doc_id: self.doc_id.clone(),
            paragraph: self.anchor_paragraph,
            sentence: self.anchor_sentence,
            span: self.anchor_span,
        }
    }

    pub fn label_meridiem(&self) -> Option<Meridiem> {
        self.label_hour24
            .map(|h| if h < 12 { Meridiem::Am } else { Meridiem::Pm })
    }

    fn feature_tokens(&self) -> BTreeSet<&str> {
        self.tokens
            .iter()
            .map(String::as_str)
            .filter(|t| *t != MASK_TOKEN)
            .collect()
    }
}

/// Build one window per clock expression, masking every time phrase
/// (anchor and bystanders) that falls inside the window.
pub fn make_windows(
    doc: &Document,
    expressions: &[TimeExpression],
    half_window: usize,
) -> Vec<SentenceWindow> {
    let order = doc.sentence_indices();
    let flat_of = |p: usize, s: usize| order.iter().position(|&(op, os)| op == p && os == s);

    // Token ranges to mask, grouped by sentence.
    let mut masked: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for expr in expressions {
        masked
            .entry((expr.paragraph_index, expr.sentence_index))
            .or_default()
            .push(expr.span);
    }

    let mut windows = Vec::new();
    for expr in expressions {
        if !expr.is_clock() {
            continue;
        }
        let Some(flat) = flat_of(expr.paragraph_index, expr.sentence_index) else {
            continue;
        };
        let lo = flat.saturating_sub(half_window);
        let hi = (flat + half_window).min(order.len() - 1);
        let mut tokens = Vec::new();
        for &(p, s) in &order[lo..=hi] {
            let spans = masked.get(&(p, s));
            for (ti, tok) in doc.sentence(p, s).iter().enumerate() {
                let is_masked = spans
                    .map(|v| v.iter().any(|&(a, b)| ti >= a && ti < b))
                    .unwrap_or(false);
                if is_masked {
                    tokens.push(MASK_TOKEN.to_string());
                } else {
                    tokens.push(tok.text.to_ascii_lowercase());
                }
            }
        }
        windows.push(SentenceWindow {
            doc_id: expr.doc_id.clone(),
            anchor_paragraph: expr.paragraph_index,
            anchor_sentence: expr.sentence_index,
            anchor_span: expr.span,
            tokens,
            anchor_hour12: expr.hour12().unwrap_or(0),
            label_hour24: expr.hour24(),
        });
    }
    windows
}

/// Multinomial Naive Bayes over binary (presence) bag-of-words features,
/// with additive smoothing on both likelihoods and priors.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    classes: Vec<u8>,
    class_window_counts: Vec<u64>,
    token_counts: BTreeMap<String, Vec<u64>>,
    class_token_totals: Vec<u64>,
    alpha: f64,
}

impl NaiveBayesModel {
    /// Train over (window, class) pairs. `classes` fixes the class list so
    /// unobserved classes still receive smoothed mass.
    pub fn train<'a, I>(items: I, classes: Vec<u8>, alpha: f64) -> Result<NaiveBayesModel, ClassifyError>
    where
        I: IntoIterator<Item = (&'a SentenceWindow, u8)>,
    {
        let index: BTreeMap<u8, usize> = classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut class_window_counts = vec![0u64; classes.len()];
        let mut token_counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        let mut class_token_totals = vec![0u64; classes.len()];
        let mut any = false;
        for (window, class) in items {
            any = true;
            let ci = *index.get(&class).expect("label outside class list");
            class_window_counts[ci] += 1;
            for tok in window.feature_tokens() {
                let row = token_counts
                    .entry(tok.to_string())
                    .or_insert_with(|| vec![0; classes.len()]);
                row[ci] += 1;
                class_token_totals[ci] += 1;
            }
        }
        if !any {
            return Err(ClassifyError::NoTrainingData);
        }
        Ok(NaiveBayesModel {
            classes,
            class_window_counts,
            token_counts,
            class_token_totals,
            alpha,
        })
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn observed_class_count(&self) -> usize {
        self.class_window_counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn log_priors(&self) -> Vec<f64> {
        let total: u64 = self.class_window_counts.iter().sum();
        let c = self.classes.len() as f64;
        self.class_window_counts
            .iter()
            .map(|&n| ((n as f64 + self.alpha) / (total as f64 + self.alpha * c)).ln())
            .collect()
    }

    /// Posterior log-score per class for a masked window.
    pub fn log_scores(&self, window: &SentenceWindow) -> Vec<f64> {
        let vocab = self.token_counts.len() as f64;
        let mut scores = self.log_priors();
        for tok in window.feature_tokens() {
            let counts = self.token_counts.get(tok);
            for (ci, score) in scores.iter_mut().enumerate() {
                let count = counts.map(|row| row[ci]).unwrap_or(0) as f64;
                let denom = self.class_token_totals[ci] as f64 + self.alpha * (vocab + 1.0);
                *score += ((count + self.alpha) / denom).ln();
            }
        }
        scores
    }
}

pub trait MeridiemScorer {
    /// AM/PM decision with the (am, pm) score pair; ties resolve to PM.
    fn predict(
        &self,
        window: &SentenceWindow,
        hour12: u8,
    ) -> Result<(Meridiem, (f64, f64)), ClassifyError>;

    fn training_keys(&self) -> &HashSet<WindowKey>;
}

const AM_CLASS: u8 = 0;
const PM_CLASS: u8 = 1;

/// Twelve binary AM/PM models, one per hour, each trained on its own and
/// its neighbor hours' windows.
#[derive(Debug, Clone)]
pub struct MeridiemPredictor {
    models: Vec<Option<NaiveBayesModel>>,
    train_keys: HashSet<WindowKey>,
    pub alpha: f64,
}

impl MeridiemPredictor {
    pub fn from_models(models: Vec<Option<NaiveBayesModel>>, alpha: f64) -> MeridiemPredictor {
        assert_eq!(models.len(), 12);
        MeridiemPredictor {
            models,
            train_keys: HashSet::new(),
            alpha,
        }
    }

    pub fn models(&self) -> &[Option<NaiveBayesModel>] {
        &self.models
    }
}

/// Train the 12 binary disambiguators from labeled windows. Model `h`
/// sees windows labeled `h-1`, `h`, `h+1` (mod 12) with an AM/PM target.
pub fn train_meridiem(windows: &[SentenceWindow], alpha: f64) -> MeridiemPredictor {
    let mut models = Vec::with_capacity(12);
    let mut train_keys = HashSet::new();
    for hour in 0u8..12 {
        let neighbors = [(hour + 11) % 12, hour, (hour + 1) % 12];
        let items: Vec<(&SentenceWindow, u8)> = windows
            .iter()
            .filter_map(|w| {
                let h24 = w.label_hour24?;
                let h12 = h24 % 12;
                if neighbors.contains(&h12) {
                    let class = if h24 < 12 { AM_CLASS } else { PM_CLASS };
                    Some((w, class))
                } else {
                    None
                }
            })
            .collect();
        if items.is_empty() {
            models.push(None);
        } else {
            models.push(Some(
                NaiveBayesModel::train(items, vec![AM_CLASS, PM_CLASS], alpha)
                    .expect("non-empty training set"),
            ));
        }
    }
    for w in windows {
        if w.label_hour24.is_some() {
            train_keys.insert(w.key());
        }
    }
    MeridiemPredictor {
        models,
        train_keys,
        alpha,
    }
}

impl MeridiemScorer for MeridiemPredictor {
    fn predict(
        &self,
        window: &SentenceWindow,
        hour12: u8,
    ) -> Result<(Meridiem, (f64, f64)), ClassifyError> {
        let model = self.models[hour12 as usize]
            .as_ref()
            .ok_or(ClassifyError::NoTrainingDataForHour(hour12))?;
        let scores = model.log_scores(window);
        let (am, pm) = (scores[0], scores[1]);
        let label = if pm >= am { Meridiem::Pm } else { Meridiem::Am };
        Ok((label, (am, pm)))
    }

    fn training_keys(&self) -> &HashSet<WindowKey> {
        &self.train_keys
    }
}

/// Predicts each hour's training-majority meridiem unconditionally.
#[derive(Debug, Clone)]
pub struct MajorityBaseline {
    majority: Vec<Option<Meridiem>>,
    train_keys: HashSet<WindowKey>,
}

pub fn majority_baseline(windows: &[SentenceWindow]) -> MajorityBaseline {
    let mut am = [0u64; 12];
    let mut pm = [0u64; 12];
    let mut train_keys = HashSet::new();
    for w in windows {
        if let Some(h24) = w.label_hour24 {
            let h12 = (h24 % 12) as usize;
            if h24 < 12 {
                am[h12] += 1;
            } else {
                pm[h12] += 1;
            }
            train_keys.insert(w.key());
        }
    }
    let majority = (0..12)
        .map(|h| {
            if am[h] + pm[h] == 0 {
                None
            } else if am[h] > pm[h] {
                Some(Meridiem::Am)
            } else {
                Some(Meridiem::Pm) // ties resolve to PM
            }
        })
        .collect();
    MajorityBaseline {
        majority,
        train_keys,
    }
}

impl MeridiemScorer for MajorityBaseline {
    fn predict(
        &self,
        _window: &SentenceWindow,
        hour12: u8,
    ) -> Result<(Meridiem, (f64, f64)), ClassifyError> {
        let label = self.majority[hour12 as usize]
            .ok_or(ClassifyError::NoTrainingDataForHour(hour12))?;
        let pair = match label {
            Meridiem::Am => (0.0, -1.0),
            _ => (-1.0, 0.0),
        };
        Ok((label, pair))
    }

    fn training_keys(&self) -> &HashSet<WindowKey> {
        &self.train_keys
    }
}

pub trait HourScorer {
    /// One finite score per hour, higher meaning more likely.
    fn hour_scores(&self, window: &SentenceWindow) -> [f64; 24];

    fn training_keys(&self) -> &HashSet<WindowKey>;
}

/// One 24-class hour-of-day model.
#[derive(Debug, Clone)]
pub struct HourPredictor {
    pub model: NaiveBayesModel,
    train_keys: HashSet<WindowKey>,
}

impl HourPredictor {
    pub fn from_model(model: NaiveBayesModel) -> HourPredictor {
        HourPredictor {
            model,
            train_keys: HashSet::new(),
        }
    }
}

/// Train the 24-class model; requires at least two distinct observed hours.
pub fn train_hour(windows: &[SentenceWindow], alpha: f64) -> Result<HourPredictor, ClassifyError> {
    let items: Vec<(&SentenceWindow, u8)> = windows
        .iter()
        .filter_map(|w| w.label_hour24.map(|h| (w, h)))
        .collect();
    if items.is_empty() {
        return Err(ClassifyError::NoTrainingData);
    }
    let model = NaiveBayesModel::train(items.iter().copied(), (0u8..24).collect(), alpha)?;
    if model.observed_class_count() < 2 {
        return Err(ClassifyError::SingleClass);
    }
    let train_keys = items.iter().map(|(w, _)| w.key()).collect();
    Ok(HourPredictor { model, train_keys })
}

impl HourScorer for HourPredictor {
    fn hour_scores(&self, window: &SentenceWindow) -> [f64; 24] {
        let scores = self.model.log_scores(window);
        let mut out = [0.0; 24];
        out.copy_from_slice(&scores);
        out
    }

    fn training_keys(&self) -> &HashSet<WindowKey> {
        &self.train_keys
    }
}

pub fn predict_hour_scores(pred: &impl HourScorer, window: &SentenceWindow) -> [f64; 24] {
    pred.hour_scores(window)
}

/// Argmax hour of the score vector, ties toward the lower hour.
pub fn argmax_hour(scores: &[f64; 24]) -> u8 {
    let mut best = 0u8;
    for h in 1..24u8 {
        if scores[h as usize] > scores[best as usize] {
            best = h;
        }
    }
    best
}

/// Circular distance between two hours on the 24-hour clock, at most 12.
pub fn hour_error(predicted: u8, truth: u8) -> u8 {
    debug_assert!(predicted < 24 && truth < 24);
    let d = predicted.abs_diff(truth);
    d.min(24 - d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeridiemMetrics {
    pub accuracy: f64,
    pub am_f1: f64,
    pub pm_f1: f64,
}

#[derive(Debug, Clone)]
pub struct MeridiemEval {
    /// Per-hour metrics with the number of test examples, for hours present.
    pub per_hour: Vec<(u8, MeridiemMetrics, usize)>,
    pub micro: MeridiemMetrics,
    pub macro_: MeridiemMetrics,
}

#[derive(Debug, Clone, Copy, Default)]
struct BinaryCounts {
    correct: u64,
    total: u64,
    // per-class tp/fp/fn indexed am=0, pm=1
    tp: [u64; 2],
    fp: [u64; 2],
    fnn: [u64; 2],
}

impl BinaryCounts {
    fn add(&mut self, predicted: Meridiem, truth: Meridiem) {
        let p = usize::from(predicted == Meridiem::Pm);
        let t = usize::from(truth == Meridiem::Pm);
        self.total += 1;
        if p == t {
            self.correct += 1;
            self.tp[p] += 1;
        } else {
            self.fp[p] += 1;
            self.fnn[t] += 1;
        }
    }

    fn f1(&self, class: usize) -> f64 {
        let tp = self.tp[class] as f64;
        let denom_p = tp + self.fp[class] as f64;
        let denom_r = tp + self.fnn[class] as f64;
        if denom_p == 0.0 || denom_r == 0.0 {
            return 0.0;
        }
        let p = tp / denom_p;
        let r = tp / denom_r;
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn metrics(&self) -> MeridiemMetrics {
        MeridiemMetrics {
            accuracy: self.correct as f64 / self.total as f64,
            am_f1: self.f1(0),
            pm_f1: self.f1(1),
        }
    }
}

fn check_discipline(
    keys: &HashSet<WindowKey>,
    test: &[SentenceWindow],
) -> Result<(), ClassifyError> {
    if test.is_empty() {
        return Err(ClassifyError::EmptyTestSet);
    }
    for w in test {
        if keys.contains(&w.key()) {
            return Err(ClassifyError::TrainTestOverlap(w.doc_id.clone()));
        }
    }
    Ok(())
}

/// Micro metrics pool all test examples; macro metrics are the unweighted
/// mean of the per-hour rows.
pub fn evaluate_meridiem<S: MeridiemScorer>(
    scorer: &S,
    test: &[SentenceWindow],
) -> Result<MeridiemEval, ClassifyError> {
    check_discipline(scorer.training_keys(), test)?;
    let mut per_hour: BTreeMap<u8, BinaryCounts> = BTreeMap::new();
    let mut pooled = BinaryCounts::default();
    for w in test {
        let truth = w.label_meridiem().ok_or(ClassifyError::UnlabeledTestWindow)?;
        let hour12 = w.anchor_hour12;
        let (predicted, _) = scorer.predict(w, hour12)?;
        per_hour.entry(hour12).or_default().add(predicted, truth);
        pooled.add(predicted, truth);
    }
    let rows: Vec<(u8, MeridiemMetrics, usize)> = per_hour
        .iter()
        .map(|(h, c)| (*h, c.metrics(), c.total as usize))
        .collect();
    let k = rows.len() as f64;
    let macro_ = MeridiemMetrics {
        accuracy: rows.iter().map(|(_, m, _)| m.accuracy).sum::<f64>() / k,
        am_f1: rows.iter().map(|(_, m, _)| m.am_f1).sum::<f64>() / k,
        pm_f1: rows.iter().map(|(_, m, _)| m.pm_f1).sum::<f64>() / k,
    };
    Ok(MeridiemEval {
        per_hour: rows,
        micro: pooled.metrics(),
        macro_,
    })
}

#[derive(Debug, Clone)]
pub struct HourEval {
    /// (true hour, mean error, n) for each hour present in the test set.
    pub per_hour: Vec<(u8, f64, usize)>,
    /// Example-weighted overall mean error.
    pub overall: f64,
}

pub fn evaluate_hour<S: HourScorer>(
    scorer: &S,
    test: &[SentenceWindow],
) -> Result<HourEval, ClassifyError> {
    check_discipline(scorer.training_keys(), test)?;
    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for w in test {
        let truth = w.label_hour24.ok_or(ClassifyError::UnlabeledTestWindow)?;
        let predicted = argmax_hour(&scorer.hour_scores(w));
        let err = hour_error(predicted, truth) as f64;
        let entry = sums.entry(truth).or_insert((0.0, 0));
        entry.0 += err;
        entry.1 += 1;
        total += err;
    }
    let per_hour = sums
        .iter()
        .map(|(h, (sum, n))| (*h, sum / *n as f64, *n))
        .collect();
    Ok(HourEval {
        per_hour,
        overall: total / test.len() as f64,
    })
}

/// Exact-match fraction between aligned prediction and annotation lists.
pub fn agreement<T: PartialEq>(predictions: &[T], annotations: &[T]) -> Result<f64, ClassifyError> {
    if predictions.len() != annotations.len() {
        return Err(ClassifyError::LengthMismatch);
    }
    if predictions.is_empty() {
        return Err(ClassifyError::EmptyTestSet);
    }
    let matches = predictions
        .iter()
        .zip(annotations)
        .filter(|(a, b)| a == b)
        .count();
    Ok(matches as f64 / predictions.len() as f64)
}

/// Deterministic seeded split, stratified by label. Returns (rest, held_out)
/// index lists; `held_fraction` of each label group is held out (rounded).
pub fn stratified_split(
    labels: &[u8],
    held_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut groups: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rest = Vec::new();
    let mut held = Vec::new();
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let n_held = ((idx.len() as f64) * held_fraction).round() as usize;
        let n_held = n_held.min(idx.len());
        held.extend_from_slice(&idx[..n_held]);
        rest.extend_from_slice(&idx[n_held..]);
    }
    rest.sort_unstable();
    held.sort_unstable();
    (rest, held)
}

const MODEL_FORMAT_VERSION: &str = "v1";

/// Serialize a set of Naive Bayes models with a versioned header.
pub fn models_to_lines(
    kind: &str,
    alpha: f64,
    seed: u64,
    models: &[(usize, &NaiveBayesModel)],
) -> Vec<String> {
    let mut lines = vec![
        format!("clockflow-model\t{MODEL_FORMAT_VERSION}\t{kind}"),
        format!("alpha\t{alpha}"),
        format!("seed\t{seed}"),
    ];
    for (idx, model) in models {
        let classes: Vec<String> = model.classes.iter().map(|c| c.to_string()).collect();
        lines.push(format!("model\t{idx}\t{}", classes.join(",")));
        let windows: Vec<String> = model
            .class_window_counts
            .iter()
            .map(|c| c.to_string())
            .collect();
        lines.push(format!("windows\t{}", windows.join(",")));
        for (word, counts) in &model.token_counts {
            let counts: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            lines.push(format!("tok\t{word}\t{}", counts.join(",")));
        }
    }
    lines
}

/// Parse a model file; returns (kind, alpha, seed, indexed models).
#[allow(clippy::type_complexity)]
pub fn models_from_lines<'a, I>(
    lines: I,
) -> Result<(String, f64, u64, Vec<(usize, NaiveBayesModel)>), ClassifyError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut iter = lines.into_iter();
    let header = iter.next().unwrap_or("");
    let mut parts = header.split('\t');
    if parts.next() != Some("clockflow-model") || parts.next() != Some(MODEL_FORMAT_VERSION) {
        return Err(ClassifyError::Parse(format!("unexpected header {header:?}")));
    }
    let kind = parts
        .next()
        .ok_or_else(|| ClassifyError::Parse(header.to_string()))?
        .to_string();

    let mut alpha = 1.0;
    let mut seed = 0u64;
    let mut models: Vec<(usize, NaiveBayesModel)> = Vec::new();
    for line in iter {
        let bad = || ClassifyError::Parse(line.to_string());
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["alpha", a] => alpha = a.parse().map_err(|_| bad())?,
            ["seed", s] => seed = s.parse().map_err(|_| bad())?,
            ["model", idx, classes] => {
                let idx: usize = idx.parse().map_err(|_| bad())?;
                let classes: Vec<u8> = classes
                    .split(',')
                    .map(|c| c.parse().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?;
                let n = classes.len();
                models.push((
                    idx,
                    NaiveBayesModel {
                        classes,
                        class_window_counts: vec![0; n],
                        token_counts: BTreeMap::new(),
                        class_token_totals: vec![0; n],
                        alpha,
                    },
                ));
            }
            ["windows", counts] => {
                let model = &mut models.last_mut().ok_or_else(bad)?.1;
                model.class_window_counts = counts
                    .split(',')
                    .map(|c| c.parse().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?;
            }
            ["tok", word, counts] => {
                let model = &mut models.last_mut().ok_or_else(bad)?.1;
                let counts: Vec<u64> = counts
                    .split(',')
                    .map(|c| c.parse().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?;
                for (ci, c) in counts.iter().enumerate() {
                    model.class_token_totals[ci] += c;
                }
                model.token_counts.insert(word.to_string(), counts);
            }
            _ => return Err(bad()),
        }
    }
    Ok((kind, alpha, seed, models))
}
