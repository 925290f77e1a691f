//! Acceptance suite: one test and one printed pass/fail line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clockflow_core::association::{binomial_cdf, build_hour_bags, top_hours};
use clockflow_core::classify::{
    evaluate_hour, evaluate_meridiem, hour_error, majority_baseline, make_windows,
    train_meridiem, HourScorer, SentenceWindow, WindowKey, MASK_TOKEN,
};
use clockflow_core::ingest::{clean_text, segment_document, Document};
use clockflow_core::segment::{dp_partition, daypart_hours, tag_distribution, HourDistribution};
use clockflow_core::timex::extract_expressions;
use clockflow_core::trends::{cohort_shares, late_night_fraction, LATE_NIGHT_HOURS};
use clockflow_core::{BookMeta, Daypart, Source};

fn criterion(number: u32, name: &str, body: impl FnOnce()) {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    match &outcome {
        Ok(()) => println!("ACCEPTANCE {number} {name}: pass"),
        Err(_) => println!("ACCEPTANCE {number} {name}: FAIL"),
    }
    if let Err(payload) = outcome {
        std::panic::resume_unwind(payload);
    }
}

// ---------------------------------------------------------------- pipeline

fn testdata() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/corpus")
}

fn run_pipeline(dir: &Path, seed: u64) {
    let corpus = testdata();
    let config = dir.join("cfg.toml");
    std::fs::write(
        &config,
        format!(
            "corpus_dir = {corpus:?}\nmetadata_path = {meta:?}\noutput_dir = {out:?}\nseed = {seed}\n",
            corpus = corpus,
            meta = corpus.join("metadata.tsv"),
            out = dir.join("out"),
        ),
    )
    .unwrap();
    for sub in ["extract", "train", "segment", "trends"] {
        let out = Command::new(env!("CARGO_BIN_EXE_clockflow"))
            .arg("--config")
            .arg(&config)
            .arg(sub)
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "{sub} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

/// One shared pipeline run over the bundled corpus, reused by the
/// corpus-level criteria.
fn shared_run() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        run_pipeline(&dir, 42);
        dir
    })
}

fn bundled_documents() -> Vec<Document> {
    let corpus = testdata();
    let raw = std::fs::read_to_string(corpus.join("metadata.tsv")).unwrap();
    let mut docs = Vec::new();
    for line in raw.lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let fields: Vec<&str> = line.split('\t').collect();
        let source = Source::parse(fields[4]).unwrap();
        let body = match source {
            Source::Gutenberg => {
                std::fs::read_to_string(corpus.join(format!("{}.txt", fields[0]))).unwrap()
            }
            Source::PageFolder => {
                let mut pages: Vec<PathBuf> = std::fs::read_dir(corpus.join(fields[0]))
                    .unwrap()
                    .map(|e| e.unwrap().path())
                    .collect();
                pages.sort();
                let mut body = String::new();
                for page in pages {
                    body.push_str(&std::fs::read_to_string(page).unwrap());
                    body.push('\n');
                }
                body
            }
        };
        let meta = BookMeta {
            id: fields[0].to_string(),
            title: fields[1].to_string(),
            author: fields[2].to_string(),
            author_birth_year: fields[3].parse().ok(),
            source,
        };
        docs.push(segment_document(&clean_text(&body, source).unwrap(), meta));
    }
    docs
}

// ------------------------------------------------------------ criterion 1

fn brute_force_objective(distributions: &[HourDistribution], k: usize) -> f64 {
    let n = distributions.len();
    let mut prefix = vec![[0.0f64; 24]; n + 1];
    for (j, d) in distributions.iter().enumerate() {
        for h in 0..24 {
            prefix[j + 1][h] = prefix[j][h] + d.0[h];
        }
    }
    let seg = |a: usize, b: usize| -> f64 {
        (0..24)
            .map(|h| prefix[b][h] - prefix[a][h])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = f64::NEG_INFINITY;
    let mut breaks: Vec<usize> = (1..k).collect();
    loop {
        let mut bounds = vec![0];
        bounds.extend_from_slice(&breaks);
        bounds.push(n);
        let obj: f64 = bounds.windows(2).map(|w| seg(w[0], w[1])).sum();
        best = best.max(obj);
        let mut i = breaks.len();
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if breaks[i] < n - (breaks.len() - i) {
                breaks[i] += 1;
                for j in i + 1..breaks.len() {
                    breaks[j] = breaks[j - 1] + 1;
                }
                break;
            }
        }
    }
}

#[test]
fn criterion_01_dp_oracle_equivalence() {
    criterion(1, "dp-oracle-equivalence", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = rng.gen_range(1..=12);
            let k = rng.gen_range(1..=n.min(4));
            let dists: Vec<HourDistribution> = (0..n)
                .map(|_| {
                    let mut w = [0.0; 24];
                    for v in &mut w {
                        *v = rng.gen_range(0.0..1.0);
                    }
                    HourDistribution::normalized(w)
                })
                .collect();
            let refs: Vec<&HourDistribution> = dists.iter().collect();
            let dp = dp_partition(&refs, k).unwrap();
            let oracle = brute_force_objective(&dists, k);
            assert_eq!(dp.objective, oracle, "n={n} k={k}");
        }
        assert!(started.elapsed().as_secs() < 10, "oracle sweep too slow");
    });
}

// ------------------------------------------------------------ criterion 2

fn read_segment_errors(dir: &Path) -> Vec<(f64, f64, f64)> {
    let raw = std::fs::read_to_string(dir.join("out/segments.tsv")).unwrap();
    raw.lines()
        .skip(1)
        .filter(|l| l.split('\t').nth(4) == Some("evaluated"))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (
                f[5].parse().unwrap(),
                f[6].parse().unwrap(),
                f[7].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn criterion_02_dp_dominance_ordering() {
    criterion(2, "dp-dominance-table7-ordering", || {
        let errors = read_segment_errors(shared_run());
        assert!(!errors.is_empty(), "no evaluated books");
        for &(dp, max_hour, noon) in &errors {
            assert!(dp <= max_hour + 1e-12, "dp {dp} > max-hour {max_hour}");
            assert!(max_hour <= noon + 1e-12, "max-hour {max_hour} > noon {noon}");
        }
        let n = errors.len() as f64;
        let dp: f64 = errors.iter().map(|e| e.0).sum::<f64>() / n;
        let noon: f64 = errors.iter().map(|e| e.2).sum::<f64>() / n;
        assert!(
            noon - dp >= 1.5,
            "noon-to-dp gap {:.3} below 1.5 hours",
            noon - dp
        );
    });
}

// ------------------------------------------------------------ criterion 3

#[test]
fn criterion_03_circular_metric() {
    criterion(3, "circular-hour-metric", || {
        for a in 0u8..24 {
            for b in 0u8..24 {
                let d = hour_error(a, b);
                assert!(d <= 12);
                assert_eq!(d, hour_error(b, a));
                assert_eq!(d == 0, a == b);
                for c in 0u8..24 {
                    assert!(hour_error(a, c) <= hour_error(a, b) + hour_error(b, c));
                }
            }
        }
        assert_eq!(hour_error(0, 12), 12);
    });
}

// ------------------------------------------------------------ criterion 4

/// Direct summation with exact power-of-two rescaling against underflow.
fn direct_cdf(k: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    let scale_down = (2.0f64).powi(-512);
    let scale_up = (2.0f64).powi(512);
    let mut m = 1.0f64;
    let mut e = 0i64;
    let renorm = |m: &mut f64, e: &mut i64| {
        while *m < scale_down && *m > 0.0 {
            *m *= scale_up;
            *e -= 1;
        }
        while *m >= 1.0 {
            *m *= scale_down;
            *e += 1;
        }
    };
    for _ in 0..n {
        m *= q;
        renorm(&mut m, &mut e);
    }
    let add = |sum: &mut f64, m: f64, e: i64| match e {
        0 => *sum += m,
        -1 => *sum += m * scale_down,
        _ => {}
    };
    let mut sum = 0.0f64;
    add(&mut sum, m, e);
    for i in 1..=k {
        m *= (n - i + 1) as f64 / i as f64 * (p / q);
        renorm(&mut m, &mut e);
        add(&mut sum, m, e);
    }
    sum.min(1.0)
}

#[test]
fn criterion_04_binomial_score() {
    criterion(4, "binomial-score-oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let n = rng.gen_range(1u64..=1000);
            let k = rng.gen_range(0..=n);
            let p: f64 = rng.gen_range(0.001..0.999);
            let expected = direct_cdf(k, n, p);
            let got = binomial_cdf(k, n, p);
            if expected > 1e-280 {
                let rel = ((got - expected) / expected).abs();
                assert!(rel < 1e-9, "k={k} n={n} p={p}: {got} vs {expected}");
            }
        }
        // monotone in k, and exactly 1 at k = n
        for &(n, p) in &[(50u64, 0.3f64), (200, 0.73), (999, 0.05)] {
            let mut prev = 0.0;
            for k in 0..=n {
                let s = binomial_cdf(k, n, p);
                assert!(s >= prev - 1e-15);
                prev = s;
            }
            assert_eq!(binomial_cdf(n, n, p), 1.0);
        }
    });
}

// ------------------------------------------------------------ criterion 5

/// One tiny book per hour; the anchor window plants `w<h>` twice plus one
/// copy of each neighbor hour's word, so the merged bags peak at hour h.
fn planted_corpus() -> (Vec<Document>, Vec<clockflow_core::TimeExpression>) {
    let word = |h: i32| format!("w{:02}", h.rem_euclid(24));
    let mut docs = Vec::new();
    let mut exprs = Vec::new();
    for h in 0i32..24 {
        let phrase = match h {
            0 => "at midnight".to_string(),
            12 => "at noon".to_string(),
            1..=11 => format!("at {h} am"),
            _ => format!("at {} pm", h - 12),
        };
        let body = format!(
            "The stone gate stood open. Something happened {phrase} by the wall. \
             The {me} sign and the {me} mark and the {prev} trace and the {next} trace held fast. \
             The stone gate closed again.",
            me = word(h),
            prev = word(h - 1),
            next = word(h + 1),
        );
        let doc = segment_document(
            &body,
            BookMeta {
                id: format!("p{h:02}"),
                title: format!("planted {h}"),
                author: "nobody".to_string(),
                author_birth_year: None,
                source: Source::Gutenberg,
            },
        );
        exprs.extend(extract_expressions(&doc));
        docs.push(doc);
    }
    (docs, exprs)
}

#[test]
fn criterion_05_word_hour_sanity() {
    criterion(5, "planted-word-top-hours", || {
        let (docs, exprs) = planted_corpus();
        let resolved = exprs.iter().filter(|e| e.hour24().is_some()).count();
        assert_eq!(resolved, 24, "one resolved expression per hour");
        let bags = build_hour_bags(&docs, &exprs, 3);
        for h in 0u8..24 {
            let word = format!("w{h:02}");
            let top = top_hours(&word, &bags, 3).unwrap();
            assert_eq!(top[0], h, "top hour for {word}: {top:?}");
        }
    });
}

// ------------------------------------------------------------ criterion 6

fn window(doc: &str, sent: usize, tokens: &[&str], label: u8) -> SentenceWindow {
    SentenceWindow {
        doc_id: doc.to_string(),
        anchor_paragraph: 0,
        anchor_sentence: sent,
        anchor_span: (0, 1),
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
        anchor_hour12: label % 12,
        label_hour24: Some(label),
    }
}

#[test]
fn criterion_06_meridiem_learning() {
    criterion(6, "meridiem-learning-over-baseline", || {
        // fully separable: one cue token decides am/pm at every hour
        let mut train = Vec::new();
        let mut test = Vec::new();
        for h12 in 0u8..12 {
            for i in 0..10usize {
                let am = window(&format!("am{h12}"), i, &["sunrise", "calm", "field"], h12);
                let pm = window(&format!("pm{h12}"), i, &["sunset", "dim", "field"], h12 + 12);
                if i < 7 {
                    train.push(am);
                    train.push(pm);
                } else {
                    test.push(am);
                    test.push(pm);
                }
            }
        }
        let model = train_meridiem(&train, 1.0);
        let eval = evaluate_meridiem(&model, &test).unwrap();
        assert_eq!(eval.micro.accuracy, 1.0, "separable corpus not solved");

        // 10% label flips: learned model must beat the majority baseline
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for h12 in 0u8..12 {
            for i in 0..40usize {
                let truly_pm = i % 2 == 1;
                let flip = rng.gen_range(0..10) == 0;
                let observed_pm = truly_pm != flip;
                let cue = if truly_pm { "sunset" } else { "sunrise" };
                let label = h12 + if observed_pm { 12 } else { 0 };
                let w = window(&format!("noisy{h12}"), i, &[cue, "field"], label);
                if i < 30 {
                    train.push(w);
                } else {
                    test.push(w);
                }
            }
        }
        let model = train_meridiem(&train, 1.0);
        let baseline = majority_baseline(&train);
        let nb = evaluate_meridiem(&model, &test).unwrap().micro.accuracy;
        let base = evaluate_meridiem(&baseline, &test).unwrap().micro.accuracy;
        assert!(
            nb - base >= 0.15,
            "nb {nb:.3} does not beat baseline {base:.3} by 0.15"
        );
    });
}

// ------------------------------------------------------------ criterion 7

struct ConstantNoon {
    keys: std::collections::HashSet<WindowKey>,
}

impl HourScorer for ConstantNoon {
    fn hour_scores(&self, _window: &SentenceWindow) -> [f64; 24] {
        let mut scores = [0.0; 24];
        scores[12] = 1.0;
        scores
    }

    fn training_keys(&self) -> &std::collections::HashSet<WindowKey> {
        &self.keys
    }
}

#[test]
fn criterion_07_constant_noon_error() {
    criterion(7, "constant-noon-expected-error", || {
        let test: Vec<SentenceWindow> = (0..240usize)
            .map(|i| window("uniform", i, &["pad"], (i % 24) as u8))
            .collect();
        let scorer = ConstantNoon {
            keys: std::collections::HashSet::new(),
        };
        let eval = evaluate_hour(&scorer, &test).unwrap();
        assert!(
            (eval.overall - 6.0).abs() <= 0.1,
            "mean error {} not 6.0 +/- 0.1",
            eval.overall
        );
    });
}

// ------------------------------------------------------------ criterion 8

#[test]
fn criterion_08_masking_completeness() {
    criterion(8, "masking-completeness", || {
        let mut windows_scanned = 0usize;
        for doc in bundled_documents() {
            let exprs = extract_expressions(&doc);
            let surfaces: Vec<Vec<String>> = exprs
                .iter()
                .map(|e| {
                    e.surface
                        .split(' ')
                        .map(|t| t.to_ascii_lowercase())
                        .collect()
                })
                .collect();
            for w in make_windows(&doc, &exprs, 3) {
                assert!(w.tokens.iter().any(|t| t == MASK_TOKEN), "anchor unmasked");
                for surface in &surfaces {
                    let hit = w
                        .tokens
                        .windows(surface.len())
                        .any(|run| run.iter().zip(surface).all(|(a, b)| a == b));
                    assert!(!hit, "unmasked phrase {surface:?} in a window of {}", w.doc_id);
                }
                windows_scanned += 1;
            }
        }
        assert!(windows_scanned > 300, "scan unexpectedly small");
    });
}

// ------------------------------------------------------------ criterion 9

#[test]
fn criterion_09_tag_distributions() {
    criterion(9, "daypart-tag-supports", || {
        let cases = [
            (Daypart::Morning, (6u8..=11).collect::<Vec<u8>>()),
            (Daypart::Afternoon, (12..=16).collect()),
            (Daypart::Evening, (17..=20).collect()),
            (Daypart::Night, vec![21, 22, 23, 0, 1, 2, 3, 4, 5]),
        ];
        for (part, hours) in cases {
            assert_eq!(daypart_hours(part), hours.as_slice());
            let dist = tag_distribution(&[part]).unwrap();
            let weight = 1.0 / hours.len() as f64;
            for h in 0u8..24 {
                let expect = if hours.contains(&h) { weight } else { 0.0 };
                assert_eq!(dist.0[h as usize], expect, "{part:?} hour {h}");
            }
        }
    });
}

// ----------------------------------------------------------- criterion 10

#[test]
fn criterion_10_end_to_end_determinism() {
    criterion(10, "end-to-end-determinism", || {
        let first = shared_run();
        let second = tempfile::tempdir().unwrap();
        run_pipeline(second.path(), 42);
        let mut compared = 0usize;
        for name in [
            "sentences.tsv",
            "expressions.tsv",
            "hour_counts.tsv",
            "models/meridiem.tsv",
            "models/hour.tsv",
            "eval.tsv",
            "tracks.tsv",
            "segments.tsv",
            "cohorts.tsv",
        ] {
            let a = std::fs::read(first.join("out").join(name)).unwrap();
            let b = std::fs::read(second.path().join("out").join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between runs");
            compared += 1;
        }
        assert_eq!(compared, 9);
    });
}

// ----------------------------------------------------------- criterion 11

#[test]
fn criterion_11_cohort_trends() {
    criterion(11, "cohort-shares-and-late-night", || {
        let raw = std::fs::read_to_string(shared_run().join("out/cohorts.tsv")).unwrap();
        let rows: Vec<&str> = raw.lines().skip(1).collect();
        assert_eq!(rows.len(), 7, "bundled corpus spans 7 cohorts");
        for row in rows {
            let fields: Vec<&str> = row.split('\t').collect();
            assert_eq!(fields.len(), 5 + 24);
            let shares: f64 = fields[5..].iter().map(|s| s.parse::<f64>().unwrap()).sum();
            assert!((shares - 1.0).abs() < 1e-9, "shares sum {shares} in {row:?}");
        }

        let table = cohort_shares(&[(Some(1850), vec![23; 40])]).unwrap();
        let late = late_night_fraction(&table, LATE_NIGHT_HOURS);
        assert_eq!(late.len(), 1);
        assert_eq!(late[0].1, 1.0);
    });
}
