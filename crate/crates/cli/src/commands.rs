use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use clockflow_core::association::{build_hour_bags, score, top_hours};
use clockflow_core::classify::{
    evaluate_hour, evaluate_meridiem, majority_baseline, make_windows, models_from_lines,
    models_to_lines, stratified_split, train_hour, train_meridiem, HourPredictor, HourScorer,
    MeridiemScorer, NaiveBayesModel, SentenceWindow, MASK_TOKEN,
};
use clockflow_core::ingest::Document;
use clockflow_core::segment::{
    book_windows, build_pseudo_truth, choose_k, dp_partition, evaluate_track, forward_fill,
    max_hour_baseline, merge_distributions, model_distribution, noon_baseline, tag_distribution,
    HourDistribution, Segmentation,
};
use clockflow_core::timex::{extract_expressions, filter_ocr_artifacts, tabulate_hours};
use clockflow_core::trends::{cohort_shares, late_night_fraction, LATE_NIGHT_HOURS};
use clockflow_core::{Meridiem, TimeExpression};

use crate::artifacts::{
    expressions_to_lines, hour_counts_to_lines, read_expressions, read_external_scores,
    read_lines, read_sentences, sentences_to_lines, write_lines, COHORTS_HEADER, EVAL_HEADER,
    SEGMENTS_HEADER, TRACKS_HEADER,
};
use crate::config::PipelineConfig;
use crate::corpus::{corpus_from_sentences, load_corpus, load_metadata};

const SENTENCES_FILE: &str = "sentences.tsv";
const EXPRESSIONS_FILE: &str = "expressions.tsv";
const HOUR_COUNTS_FILE: &str = "hour_counts.tsv";
const BAGS_FILE: &str = "bags.tsv";
const MERIDIEM_MODEL_FILE: &str = "models/meridiem.tsv";
const HOUR_MODEL_FILE: &str = "models/hour.tsv";
const EVAL_FILE: &str = "eval.tsv";
const TRACKS_FILE: &str = "tracks.tsv";
const SEGMENTS_FILE: &str = "segments.tsv";
const COHORTS_FILE: &str = "cohorts.tsv";

/// Run ingest and extraction, dumping sentences, expressions, and the
/// hour-count table, and print a per-hour summary.
pub fn cmd_extract(config: &PipelineConfig) -> Result<()> {
    let corpus = load_corpus(&config.corpus_dir, &config.metadata_path, config.dedup_threshold)?;
    if corpus.documents.is_empty() {
        bail!("corpus is empty after deduplication");
    }

    let per_doc: Vec<Vec<TimeExpression>> = corpus
        .documents
        .par_iter()
        .map(|doc| filter_ocr_artifacts(extract_expressions(doc), doc))
        .collect();
    let expressions: Vec<TimeExpression> = per_doc.into_iter().flatten().collect();

    write_lines(
        &config.artifact(SENTENCES_FILE),
        &sentences_to_lines(&corpus.documents),
    )?;
    write_lines(
        &config.artifact(EXPRESSIONS_FILE),
        &expressions_to_lines(&expressions),
    )?;
    let table = tabulate_hours(&expressions);
    write_lines(&config.artifact(HOUR_COUNTS_FILE), &hour_counts_to_lines(&table))?;

    println!("books\t{}", corpus.documents.len());
    println!("expressions\t{}", expressions.len());
    println!("hour12\tam\tpm\tambiguous");
    for h in 0..12 {
        println!("{h}\t{}\t{}\t{}", table.am[h], table.pm[h], table.ambiguous[h]);
    }
    println!(
        "resolved\t{}\tambiguous\t{}",
        table.resolved_total(),
        table.ambiguous_total()
    );
    Ok(())
}

fn load_windows(config: &PipelineConfig) -> Result<Vec<SentenceWindow>> {
    let records = read_sentences(&config.artifact(SENTENCES_FILE))?;
    let documents = corpus_from_sentences(&records, &config.metadata_path)?;
    let expressions = read_expressions(&config.artifact(EXPRESSIONS_FILE))?;
    let mut by_doc: BTreeMap<&str, Vec<TimeExpression>> = BTreeMap::new();
    for expr in &expressions {
        by_doc.entry(expr.doc_id.as_str()).or_default().push(expr.clone());
    }
    let mut windows = Vec::new();
    for doc in &documents {
        if let Some(doc_exprs) = by_doc.get(doc.meta.id.as_str()) {
            windows.extend(make_windows(doc, doc_exprs, config.train_window));
        }
    }
    Ok(windows)
}

fn select<T: Clone>(items: &[T], indices: &[usize]) -> Vec<T> {
    indices.iter().map(|&i| items[i].clone()).collect()
}

fn fmt_metric(v: f64) -> String {
    format!("{v}")
}

/// Train the meridiem disambiguators, impute unresolved windows, train the
/// hour model, and write models plus the evaluation report.
pub fn cmd_train(config: &PipelineConfig) -> Result<()> {
    let windows = load_windows(config)?;
    let resolved: Vec<SentenceWindow> = windows
        .iter()
        .filter(|w| w.label_hour24.is_some())
        .cloned()
        .collect();
    let unresolved: Vec<&SentenceWindow> =
        windows.iter().filter(|w| w.label_hour24.is_none()).collect();
    if resolved.is_empty() {
        bail!("no resolved windows to train on; run extract first");
    }

    let labels: Vec<u8> = resolved.iter().map(|w| w.label_hour24.unwrap()).collect();
    let (train_idx, test_idx) = stratified_split(&labels, 0.3, config.seed);
    let train_pool = select(&resolved, &train_idx);
    let test = select(&resolved, &test_idx);
    let pool_labels: Vec<u8> = train_pool.iter().map(|w| w.label_hour24.unwrap()).collect();
    let (fit_idx, val_idx) = stratified_split(&pool_labels, 0.1, config.seed.wrapping_add(1));
    let fit = select(&train_pool, &fit_idx);
    let validation = select(&train_pool, &val_idx);

    let predictor = train_meridiem(&fit, config.alpha);
    let baseline = majority_baseline(&fit);
    let test_eval = evaluate_meridiem(&predictor, &test).context("evaluating meridiem models")?;
    let base_eval = evaluate_meridiem(&baseline, &test).context("evaluating majority baseline")?;
    let val_eval = if validation.is_empty() {
        None
    } else {
        Some(evaluate_meridiem(&predictor, &validation).context("evaluating on validation")?)
    };

    // Two-step: the meridiem models label the unresolved windows, and the
    // union trains the 24-class hour model.
    let mut hour_train = fit.clone();
    let mut imputed = 0usize;
    for w in &unresolved {
        let Ok((label, _)) = predictor.predict(w, w.anchor_hour12) else {
            continue; // no model for this hour; leave the window out
        };
        let mut labeled = (*w).clone();
        let hour24 = w.anchor_hour12 + if label == Meridiem::Pm { 12 } else { 0 };
        labeled.label_hour24 = Some(hour24);
        hour_train.push(labeled);
        imputed += 1;
    }
    let hour_predictor = train_hour(&hour_train, config.alpha).context("training hour model")?;
    let hour_eval = evaluate_hour(&hour_predictor, &test).context("evaluating hour model")?;

    let meridiem_models: Vec<(usize, &NaiveBayesModel)> = predictor
        .models()
        .iter()
        .enumerate()
        .filter_map(|(h, m)| m.as_ref().map(|m| (h, m)))
        .collect();
    write_lines(
        &config.artifact(MERIDIEM_MODEL_FILE),
        &models_to_lines("meridiem", config.alpha, config.seed, &meridiem_models),
    )?;
    write_lines(
        &config.artifact(HOUR_MODEL_FILE),
        &models_to_lines(
            "hour",
            config.alpha,
            config.seed,
            &[(0, &hour_predictor.model)],
        ),
    )?;

    let mut report = vec![EVAL_HEADER.to_string()];
    report.push(format!("split\ttrain\tn\t{}", fit.len()));
    report.push(format!("split\tvalidation\tn\t{}", validation.len()));
    report.push(format!("split\ttest\tn\t{}", test.len()));
    report.push(format!("impute\tunresolved\tn\t{}", unresolved.len()));
    report.push(format!("impute\timputed\tn\t{imputed}"));
    for (section, eval) in [("meridiem", &test_eval), ("majority", &base_eval)] {
        for (scope, m) in [("micro", &eval.micro), ("macro", &eval.macro_)] {
            report.push(format!("{section}\t{scope}\taccuracy\t{}", fmt_metric(m.accuracy)));
            report.push(format!("{section}\t{scope}\tam_f1\t{}", fmt_metric(m.am_f1)));
            report.push(format!("{section}\t{scope}\tpm_f1\t{}", fmt_metric(m.pm_f1)));
        }
        for (h, m, n) in &eval.per_hour {
            report.push(format!("{section}\thour-{h}\taccuracy\t{}", fmt_metric(m.accuracy)));
            report.push(format!("{section}\thour-{h}\tn\t{n}"));
        }
    }
    if let Some(eval) = &val_eval {
        report.push(format!(
            "meridiem-validation\tmicro\taccuracy\t{}",
            fmt_metric(eval.micro.accuracy)
        ));
    }
    report.push(format!("hour\toverall\tmean_error\t{}", fmt_metric(hour_eval.overall)));
    for (h, err, n) in &hour_eval.per_hour {
        report.push(format!("hour\thour-{h}\tmean_error\t{}", fmt_metric(*err)));
        report.push(format!("hour\thour-{h}\tn\t{n}"));
    }
    write_lines(&config.artifact(EVAL_FILE), &report)?;

    println!("meridiem micro accuracy\t{}", fmt_metric(test_eval.micro.accuracy));
    println!("majority micro accuracy\t{}", fmt_metric(base_eval.micro.accuracy));
    println!("hour mean error\t{}", fmt_metric(hour_eval.overall));
    Ok(())
}

/// Per-book outcome of segmentation.
struct BookSegmentation {
    doc_id: String,
    windows: Vec<(usize, usize)>,
    dp: Segmentation,
    /// Mean circular errors (dp, max-hour, noon) when pseudo truth exists.
    errors: Option<(f64, f64, f64)>,
}

pub struct SegmentOptions {
    pub books: Vec<String>,
    pub window_sentences: Option<usize>,
    pub ratio: Option<f64>,
    pub k: Option<usize>,
    pub model_path: Option<PathBuf>,
    pub scores_path: Option<PathBuf>,
}

fn load_hour_model(path: &Path, alpha: f64) -> Result<HourPredictor> {
    let lines = read_lines_raw(path)?;
    let (kind, file_alpha, _seed, mut models) =
        models_from_lines(lines.iter().map(String::as_str))
            .with_context(|| format!("parsing model file {}", path.display()))?;
    if kind != "hour" {
        bail!("{}: expected an hour model, found kind {kind:?}", path.display());
    }
    if (file_alpha - alpha).abs() > 1e-12 {
        bail!("{}: model alpha {file_alpha} differs from configured {alpha}", path.display());
    }
    let Some((_, model)) = models.pop() else {
        bail!("{}: model file holds no model", path.display());
    };
    Ok(HourPredictor::from_model(model))
}

fn read_lines_raw(path: &Path) -> Result<Vec<String>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(raw.lines().map(str::to_string).collect())
}

/// Masked lowercased tokens for each book window of a document.
fn window_tokens(
    doc: &Document,
    expressions: &[TimeExpression],
    ranges: &[(usize, usize)],
) -> Vec<Vec<String>> {
    let order = doc.sentence_indices();
    let mut masked: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for expr in expressions {
        masked
            .entry((expr.paragraph_index, expr.sentence_index))
            .or_default()
            .push(expr.span);
    }
    ranges
        .iter()
        .map(|&(lo, hi)| {
            let mut tokens = Vec::new();
            for &(p, s) in &order[lo..hi] {
                let spans = masked.get(&(p, s));
                for (ti, tok) in doc.sentence(p, s).iter().enumerate() {
                    let hit = spans
                        .map(|v| v.iter().any(|&(a, b)| ti >= a && ti < b))
                        .unwrap_or(false);
                    if hit {
                        tokens.push(MASK_TOKEN.to_string());
                    } else {
                        tokens.push(tok.text.to_ascii_lowercase());
                    }
                }
            }
            tokens
        })
        .collect()
}

fn segment_book(
    doc: &Document,
    expressions: &[TimeExpression],
    scorer: &dyn Fn(&str, usize, &[String]) -> Result<[f64; 24]>,
    window_sentences: usize,
    explicit_k: Option<usize>,
    ratio: f64,
) -> Result<BookSegmentation> {
    let seq = book_windows(doc, window_sentences);
    let ranges: Vec<(usize, usize)> = seq.windows.iter().map(|w| w.sentence_range).collect();
    let tokens = window_tokens(doc, expressions, &ranges);
    let order = doc.sentence_indices();

    let mut models = Vec::with_capacity(ranges.len());
    for (idx, toks) in tokens.iter().enumerate() {
        let scores = scorer(&doc.meta.id, idx, toks)?;
        models.push(model_distribution(&scores));
    }

    // Day-part tags falling inside each window, forward-filled.
    let flat_of = |p: usize, s: usize| order.iter().position(|&(op, os)| op == p && os == s);
    let mut tags: Vec<Option<HourDistribution>> = vec![None; ranges.len()];
    for (wi, &(lo, hi)) in ranges.iter().enumerate() {
        let parts: Vec<_> = expressions
            .iter()
            .filter_map(|e| {
                let part = e.daypart()?;
                let flat = flat_of(e.paragraph_index, e.sentence_index)?;
                (flat >= lo && flat < hi).then_some(part)
            })
            .collect();
        tags[wi] = tag_distribution(&parts);
    }
    let filled = forward_fill(&tags);

    let merged: Vec<HourDistribution> = models
        .iter()
        .zip(&filled)
        .map(|(m, t)| merge_distributions(m, t))
        .collect();
    let refs: Vec<&HourDistribution> = merged.iter().collect();
    let n = refs.len();
    let k = explicit_k.unwrap_or_else(|| choose_k(n, ratio)).clamp(1, n);

    let dp = dp_partition(&refs, k)?;
    let max_hour = max_hour_baseline(&refs, k)?;
    let noon = noon_baseline(n);

    let truth = build_pseudo_truth(doc, expressions, window_sentences);
    let errors = if truth.eligible {
        let dp_err = evaluate_track(&dp.hour_track(n), &[&truth])?;
        let mh_err = evaluate_track(&max_hour.hour_track(n), &[&truth])?;
        let noon_err = evaluate_track(&noon.hour_track(n), &[&truth])?;
        Some((dp_err, mh_err, noon_err))
    } else {
        None
    };

    Ok(BookSegmentation {
        doc_id: doc.meta.id.clone(),
        windows: ranges,
        dp,
        errors,
    })
}

/// Infer per-window hour tracks for the selected books (default: all),
/// writing the track and summary files.
pub fn cmd_segment(config: &PipelineConfig, options: &SegmentOptions) -> Result<()> {
    let records = read_sentences(&config.artifact(SENTENCES_FILE))?;
    let documents = corpus_from_sentences(&records, &config.metadata_path)?;
    let expressions = read_expressions(&config.artifact(EXPRESSIONS_FILE))?;
    let mut by_doc: BTreeMap<&str, Vec<TimeExpression>> = BTreeMap::new();
    for expr in &expressions {
        by_doc.entry(expr.doc_id.as_str()).or_default().push(expr.clone());
    }

    let selected: Vec<&Document> = if options.books.is_empty() {
        documents.iter().collect()
    } else {
        options
            .books
            .iter()
            .map(|id| {
                documents
                    .iter()
                    .find(|d| &d.meta.id == id)
                    .with_context(|| format!("unknown book id {id:?}"))
            })
            .collect::<Result<_>>()?
    };

    let scores_path = options
        .scores_path
        .clone()
        .or_else(|| config.external_scores_path.clone());
    let external = scores_path.as_deref().map(read_external_scores).transpose()?;
    let model = if external.is_none() {
        let path = options
            .model_path
            .clone()
            .unwrap_or_else(|| config.artifact(HOUR_MODEL_FILE));
        Some(load_hour_model(&path, config.alpha)?)
    } else {
        None
    };
    let scorer = |doc_id: &str, window: usize, tokens: &[String]| -> Result<[f64; 24]> {
        if let Some(map) = &external {
            return map
                .get(&(doc_id.to_string(), window))
                .copied()
                .with_context(|| format!("no external scores for {doc_id} window {window}"));
        }
        let w = SentenceWindow {
            doc_id: doc_id.to_string(),
            anchor_paragraph: 0,
            anchor_sentence: window,
            anchor_span: (0, 0),
            tokens: tokens.to_vec(),
            anchor_hour12: 0,
            label_hour24: None,
        };
        Ok(model.as_ref().expect("model loaded").hour_scores(&w))
    };

    let window_sentences = options
        .window_sentences
        .unwrap_or(config.book_window_sentences);
    let explicit_k = options.k.or(config.segment_k);
    let ratio = options.ratio.unwrap_or(config.segment_ratio);
    let empty = Vec::new();
    let results: Vec<BookSegmentation> = selected
        .iter()
        .map(|doc| {
            let doc_exprs = by_doc.get(doc.meta.id.as_str()).unwrap_or(&empty);
            segment_book(doc, doc_exprs, &scorer, window_sentences, explicit_k, ratio)
        })
        .collect::<Result<_>>()?;

    let mut track_lines = vec![TRACKS_HEADER.to_string()];
    let mut segment_lines = vec![SEGMENTS_HEADER.to_string()];
    let mut sums = (0.0, 0.0, 0.0);
    let mut evaluated = 0usize;
    for book in &results {
        let n = book.windows.len();
        let hours = book.dp.hour_track(n);
        let ids = book.dp.segment_ids(n);
        for (wi, &(lo, hi)) in book.windows.iter().enumerate() {
            track_lines.push(format!(
                "{}\t{wi}\t{lo}\t{hi}\t{}\t{}",
                book.doc_id, hours[wi], ids[wi]
            ));
        }
        match book.errors {
            Some((dp, mh, noon)) => {
                segment_lines.push(format!(
                    "{}\t{n}\t{}\t{}\tevaluated\t{}\t{}\t{}",
                    book.doc_id,
                    book.dp.k,
                    fmt_metric(book.dp.objective),
                    fmt_metric(dp),
                    fmt_metric(mh),
                    fmt_metric(noon),
                ));
                sums.0 += dp;
                sums.1 += mh;
                sums.2 += noon;
                evaluated += 1;
            }
            None => segment_lines.push(format!(
                "{}\t{n}\t{}\t{}\texcluded\t-\t-\t-",
                book.doc_id,
                book.dp.k,
                fmt_metric(book.dp.objective),
            )),
        }
    }
    write_lines(&config.artifact(TRACKS_FILE), &track_lines)?;
    write_lines(&config.artifact(SEGMENTS_FILE), &segment_lines)?;

    println!("books\t{}\tevaluated\t{evaluated}", results.len());
    if evaluated > 0 {
        let n = evaluated as f64;
        println!("mean_error\tdp\t{}", fmt_metric(sums.0 / n));
        println!("mean_error\tmax_hour\t{}", fmt_metric(sums.1 / n));
        println!("mean_error\tnoon\t{}", fmt_metric(sums.2 / n));
    }
    Ok(())
}

/// Aggregate hour tracks into birth-year cohort activity shares.
pub fn cmd_trends(config: &PipelineConfig) -> Result<()> {
    let metas = load_metadata(&config.metadata_path)?;
    let years: BTreeMap<&str, Option<i32>> = metas
        .iter()
        .map(|m| (m.id.as_str(), m.author_birth_year))
        .collect();

    let mut tracks: Vec<(String, Vec<u8>)> = Vec::new();
    for line in read_lines(&config.artifact(TRACKS_FILE), TRACKS_HEADER)? {
        let fields: Vec<&str> = line.split('\t').collect();
        let [doc_id, _w, _lo, _hi, hour, _seg] = fields.as_slice() else {
            bail!("malformed track record {line:?}");
        };
        let hour: u8 = hour.parse().with_context(|| line.clone())?;
        match tracks.last_mut() {
            Some((id, hours)) if id == doc_id => hours.push(hour),
            _ => tracks.push((doc_id.to_string(), vec![hour])),
        }
    }
    let books: Vec<(Option<i32>, Vec<u8>)> = tracks
        .into_iter()
        .map(|(id, hours)| {
            let year = years
                .get(id.as_str())
                .copied()
                .with_context(|| format!("book {id} is not in the metadata table"))?;
            Ok((year, hours))
        })
        .collect::<Result<_>>()?;

    let table = cohort_shares(&books).context("aggregating cohorts")?;
    let late = late_night_fraction(&table, LATE_NIGHT_HOURS);

    let mut lines = vec![COHORTS_HEADER.to_string()];
    for (row, (_, frac)) in table.rows.iter().zip(&late) {
        let (lo, hi) = row.cohort.year_bounds();
        let shares: Vec<String> = row.shares.iter().map(|s| fmt_metric(*s)).collect();
        lines.push(format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            row.cohort.label(),
            lo.map_or_else(|| "-".to_string(), |y| y.to_string()),
            hi.map_or_else(|| "-".to_string(), |y| y.to_string()),
            row.book_count,
            fmt_metric(*frac),
            shares.join("\t"),
        ));
    }
    write_lines(&config.artifact(COHORTS_FILE), &lines)?;

    println!("cohort\tbooks\tlate_night");
    for (row, (_, frac)) in table.rows.iter().zip(&late) {
        println!("{}\t{}\t{}", row.cohort.label(), row.book_count, fmt_metric(*frac));
    }
    Ok(())
}

/// Score word-hour association over the extracted corpus and print
/// (word, hour, score) rows for the requested words' top hours.
pub fn cmd_score_words(config: &PipelineConfig, words: &[String], top: usize) -> Result<()> {
    let records = read_sentences(&config.artifact(SENTENCES_FILE))?;
    let documents = corpus_from_sentences(&records, &config.metadata_path)?;
    let expressions = read_expressions(&config.artifact(EXPRESSIONS_FILE))?;
    let bags = build_hour_bags(&documents, &expressions, config.train_window);
    write_lines(&config.artifact(BAGS_FILE), &bags.to_lines())?;

    let chosen: Vec<String> = if words.is_empty() {
        bags.vocabulary().iter().map(|w| w.to_string()).collect()
    } else {
        words.to_vec()
    };
    for word in &chosen {
        let hours = top_hours(word, &bags, top)
            .with_context(|| format!("scoring word {word:?}"))?;
        for hour in hours {
            let s = score(word, hour, &bags)?;
            println!("{word}\t{hour}\t{}", fmt_metric(s));
        }
    }
    Ok(())
}
