//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion, and exits nonzero if any failed.

use std::process::ExitCode;
use std::time::Instant;

use chrono::NaiveDate;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stresslens::aggregate::{self, AssembleConfig, FeatureMatrix, RowMeta, REFERENCE_FEATURES};
use stresslens::entropy::{miller_madow, shannon_ml, CountDistribution};
use stresslens::eval::{self, ConfusionMatrix, MultiConfusion, PipelineConfig, SplitScheme};
use stresslens::features::{self, FeatureConfig, LabelScheme};
use stresslens::forest::{self, ForestConfig};
use stresslens::ingest::{self, IngestOptions, LogPaths};
use stresslens::matrix::Matrix;
use stresslens::selection::{self, RankConfig};
use stresslens::synth::{self, CohortConfig};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

/// Entropy by direct evaluation of the plug-in sum plus the (m - 1) / 2N term.
fn brute_miller_madow(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut h = 0.0;
    let mut m = 0u64;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n as f64;
            h -= p * p.ln();
            m += 1;
        }
    }
    h + (m as f64 - 1.0) / (2.0 * n as f64)
}

fn entropy_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut mm_below_ml = 0;
    let mut empty_ok = true;
    for _ in 0..1000 {
        let len = rng.random_range(1..=50);
        let counts: Vec<u64> = (0..len).map(|_| rng.random_range(0..=100)).collect();
        let d = CountDistribution::new(counts.clone());
        if counts.iter().all(|&c| c == 0) {
            empty_ok &= miller_madow(&d).is_err();
            continue;
        }
        let mm = miller_madow(&d).unwrap();
        let ml = shannon_ml(&d).unwrap();
        worst = worst.max((mm - brute_miller_madow(&counts)).abs());
        if mm < ml {
            mm_below_ml += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && mm_below_ml == 0 && empty_ok && secs < 1.0,
        format!("max |MM - oracle| = {worst:.2e}, MM < ML in {mm_below_ml} cases, {secs:.3}s"),
    )
}

/// Kappa as (P(A) - P(E)) / (1 - P(E)) with P(E) from marginal products.
fn brute_kappa(counts: &[Vec<u64>]) -> Option<f64> {
    let k = counts.len();
    let n: f64 = counts.iter().flatten().map(|&c| c as f64).sum();
    let pa = (0..k).map(|i| counts[i][i] as f64).sum::<f64>() / n;
    let pe: f64 = (0..k)
        .map(|i| {
            let row: f64 = counts[i].iter().map(|&c| c as f64).sum();
            let col: f64 = counts.iter().map(|r| r[i] as f64).sum();
            (row / n) * (col / n)
        })
        .sum();
    (pe < 1.0).then(|| (pa - pe) / (1.0 - pe))
}

fn kappa_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut constant_nonzero = 0;
    let mut identity_fail = 0;
    for trial in 0..1000 {
        let k = if trial % 2 == 0 { 2 } else { rng.random_range(2..=4) };
        let counts: Vec<Vec<u64>> = (0..k)
            .map(|_| (0..k).map(|_| rng.random_range(0..200)).collect())
            .collect();
        if counts.iter().flatten().all(|&c| c == 0) {
            continue;
        }
        let cm = MultiConfusion {
            classes: (0..k as i32).collect(),
            counts: counts.clone(),
        };
        let r = eval::metrics_multi(&cm).unwrap();
        match (r.kappa, brute_kappa(&counts)) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => worst = f64::INFINITY,
        }

        // constant predictor: every row predicted as class c
        let c = rng.random_range(0..k);
        let mut constant = vec![vec![0u64; k]; k];
        for (i, row) in counts.iter().enumerate() {
            constant[i][c] = row.iter().sum();
        }
        let total: u64 = constant.iter().flatten().sum();
        if constant[c][c] != total && eval::kappa(&constant) != Some(0.0) {
            constant_nonzero += 1;
        }

        if k == 2 {
            let b = ConfusionMatrix {
                tn: counts[0][0],
                fp: counts[0][1],
                fn_: counts[1][0],
                tp: counts[1][1],
            };
            let (pos, neg) = (b.tp + b.fn_, b.tn + b.fp);
            if pos > 0 && neg > 0 {
                let n = Ratio::new(b.total() as i64, 1);
                let acc = Ratio::new((b.tp + b.tn) as i64, 1) / n;
                let sens = Ratio::new(b.tp as i64, pos as i64);
                let specificity = Ratio::new(b.tn as i64, neg as i64);
                let prev = Ratio::new(pos as i64, 1) / n;
                let rhs = sens * prev + specificity * (Ratio::from_integer(1) - prev);
                let report = eval::metrics(&b).unwrap();
                let float_acc = *acc.numer() as f64 / *acc.denom() as f64;
                if acc != rhs || report.accuracy != float_acc {
                    identity_fail += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-12 && constant_nonzero == 0 && identity_fail == 0,
        format!(
            "max |kappa - oracle| = {worst:.2e}, nonzero constant-predictor kappas {constant_nonzero}, decomposition failures {identity_fail}"
        ),
    )
}

fn meta_with_scores(scores: &[u8], subjects: usize) -> Vec<RowMeta> {
    let d0 = NaiveDate::from_ymd_opt(2011, 1, 1).unwrap();
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| RowMeta {
            subject_id: format!("s{:03}", i % subjects),
            date: d0 + chrono::Days::new((i / subjects) as u64),
            score: s,
        })
        .collect()
}

fn score_matrix(scores: &[u8], subjects: usize) -> FeatureMatrix {
    FeatureMatrix {
        columns: vec!["weather.Pressure".into()],
        rows: meta_with_scores(scores, subjects),
        values: Matrix::zeros(scores.len(), 1),
        scaling: None,
    }
}

fn majority_baseline() -> Outcome {
    // the reported class sizes: 6384 not stressed, 3616 stressed
    let scores: Vec<u8> = (0..10_000).map(|i| if i < 6384 { 2 } else { 6 }).collect();
    let m = score_matrix(&scores, 111);
    let all: Vec<usize> = (0..m.n_rows()).collect();
    let r = eval::majority_baseline(&m, &all, &all, LabelScheme::Binary)
        .unwrap()
        .report;
    let mut ok = r.accuracy == 0.6384 && r.kappa == Some(0.0);
    let headline = format!("accuracy {:.4}, kappa {:?}", r.accuracy, r.kappa);

    // arbitrary datasets: accuracy equals the majority prevalence, kappa 0
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut failures = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..400);
        let p: f64 = rng.random();
        let scores: Vec<u8> = (0..n).map(|_| if rng.random::<f64>() < p { 7 } else { 1 }).collect();
        let m = score_matrix(&scores, 5);
        let all: Vec<usize> = (0..n).collect();
        let r = eval::majority_baseline(&m, &all, &all, LabelScheme::Binary)
            .unwrap()
            .report;
        let pos = scores.iter().filter(|&&s| s > 4).count();
        let pi = pos.max(n - pos) as f64 / n as f64;
        let kappa_ok = r.kappa == Some(0.0) || (pos == 0 || pos == n) && r.kappa.is_none();
        if r.accuracy != pi || !kappa_ok {
            failures += 1;
        }
    }
    ok &= failures == 0;
    outcome(ok, format!("{headline}; {failures} failures over 200 random datasets"))
}

struct Cohort {
    matrix: FeatureMatrix,
    n_columns: usize,
}

fn build_cohort() -> Cohort {
    let cfg = CohortConfig::default();
    let ds = synth::generate(&cfg).unwrap();
    let roster = ingest::validate_coverage(&ds, ingest::DEFAULT_MIN_CONSECUTIVE_DAYS).unwrap();
    let daily = features::extract_daily(&ds, &roster, &FeatureConfig::default());
    let (matrix, report) = aggregate::assemble(&daily, &ds, &AssembleConfig::default()).unwrap();
    Cohort {
        n_columns: report.n_columns,
        matrix,
    }
}

fn ablation(c: &Cohort) -> Outcome {
    let start = Instant::now();
    let seed = CohortConfig::default().seed;
    let plan = eval::make_split(&c.matrix.rows, SplitScheme::Random, seed).unwrap();
    let table = eval::ablation_suite(&c.matrix, &plan, &PipelineConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let all = table.row("all").unwrap().report.accuracy;
    let mut margin = f64::INFINITY;
    let mut cells = Vec::new();
    for row in table.rows.iter().filter(|r| r.model != "all") {
        margin = margin.min(all - row.report.accuracy);
        cells.push(format!("{} {:.4}", row.model, row.report.accuracy));
    }
    outcome(
        margin >= 0.05 && secs < 300.0,
        format!(
            "all {all:.4}; {}; smallest gap {margin:.4}; {secs:.1}s",
            cells.join(", ")
        ),
    )
}

fn feature_budget(c: &Cohort) -> Outcome {
    let missing: Vec<&str> = REFERENCE_FEATURES
        .iter()
        .copied()
        .filter(|n| c.matrix.column_index(n).is_none())
        .collect();
    let seed = CohortConfig::default().seed;
    let plan = eval::make_split(&c.matrix.rows, SplitScheme::Random, seed).unwrap();
    let train = &plan.folds[0].train;
    let normalized =
        aggregate::normalize_fit_transform(&c.matrix.select_rows(train), &(0..train.len()).collect::<Vec<_>>())
            .unwrap();
    let labels = normalized.binary_labels();
    let cfg = RankConfig {
        permutation: false,
        ..RankConfig::default()
    };
    let ranked = selection::rank_features(&normalized, &labels, &cfg).unwrap();
    let selected = selection::select_top(&ranked, selection::DEFAULT_K).unwrap();
    outcome(
        (400..=600).contains(&c.n_columns)
            && c.matrix.n_cols() == c.n_columns
            && selected.len() == 32
            && missing.is_empty(),
        format!(
            "{} columns, {} selected, missing reference names {:?}",
            c.n_columns,
            selected.len(),
            missing
        ),
    )
}

fn accuracy(pred: &[i32], truth: &[i32]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn forest_correctness() -> Outcome {
    let (x, y) = synth::planted_table(2000, 12, 11);
    let (x_test, y_test) = synth::planted_table(20_000, 12, 12);
    // column 12: constant, never split on
    let mut data = Vec::new();
    for r in x.rows() {
        data.extend_from_slice(r);
        data.push(0.5);
    }
    let x = Matrix::new(x.n_rows(), 13, data);
    let mut data = Vec::new();
    for r in x_test.rows() {
        data.extend_from_slice(r);
        data.push(0.5);
    }
    let x_test = Matrix::new(x_test.n_rows(), 13, data);

    let cfg = ForestConfig {
        seed: 5,
        ..ForestConfig::default()
    };
    let f = forest::fit_forest(&x, &y, &cfg).unwrap();
    let again = forest::fit_forest(&x, &y, &cfg).unwrap();
    let imp = forest::importances(&f, &x, &y).unwrap();
    let imp_again = forest::importances(&again, &x, &y).unwrap();
    let reproducible = f == again && imp == imp_again;

    let oob = f.oob_accuracy().unwrap();
    let held_out = accuracy(&f.predict_matrix(&x_test).unwrap(), &y_test);
    let big = forest::fit_forest(
        &x,
        &y,
        &ForestConfig {
            n_trees: forest::MAX_TREES,
            ..cfg.clone()
        },
    )
    .unwrap();
    let err_112 = 1.0 - oob;
    let err_2048 = 1.0 - big.oob_accuracy().unwrap();

    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
            .0
    };
    let planted_first = argmax(&imp.mean_decrease_gini) == 0 && argmax(&imp.mean_decrease_accuracy) == 0;
    let unused_zero = imp.mean_decrease_gini[12] == 0.0;

    outcome(
        reproducible && (oob - held_out).abs() <= 0.02 && (err_2048 - err_112).abs() < 0.02 && unused_zero && planted_first,
        format!(
            "reproducible {reproducible}; OOB {oob:.4} vs held-out {held_out:.4}; err112 {err_112:.4} err2048 {err_2048:.4}; unused MDG {}; planted first {planted_first}",
            imp.mean_decrease_gini[12]
        ),
    )
}

fn cv_stability(c: &Cohort) -> Outcome {
    let start = Instant::now();
    let seed = CohortConfig::default().seed;
    let plan = eval::make_split(&c.matrix.rows, SplitScheme::Kfold, seed).unwrap();
    let cv = eval::cross_validate(&c.matrix, &plan, &PipelineConfig::default()).unwrap();
    let failed = cv.folds.iter().filter(|f| f.failure.is_some()).count();
    let (Some(a), Some(k)) = (cv.accuracy, cv.kappa) else {
        return outcome(false, "no successful folds");
    };
    outcome(
        plan.folds.len() == 10 && failed == 0 && a.spread() < 0.10,
        format!(
            "accuracy min {:.4} q1 {:.4} median {:.4} mean {:.4} q3 {:.4} max {:.4} (spread {:.4}); kappa median {:.4}; {:.1}s",
            a.min,
            a.q1,
            a.median,
            a.mean,
            a.q3,
            a.max,
            a.spread(),
            k.median,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn split_hygiene(c: &Cohort) -> Outcome {
    let rows = &c.matrix.rows;
    let mut leaks = 0;
    let mut uncovered = 0;
    for seed in 0..100u64 {
        for scheme in [SplitScheme::Random, SplitScheme::Kfold, SplitScheme::Loso] {
            let plan = eval::make_split(rows, scheme, seed).unwrap();
            for f in &plan.folds {
                let train: std::collections::HashSet<&str> =
                    f.train.iter().map(|&i| rows[i].subject_id.as_str()).collect();
                if f.test.iter().any(|&i| train.contains(rows[i].subject_id.as_str())) {
                    leaks += 1;
                }
            }
            if scheme != SplitScheme::Random && plan.test_fold_of_rows(rows.len()).iter().any(Option::is_none) {
                uncovered += 1;
            }
        }
    }
    outcome(
        leaks == 0 && uncovered == 0,
        format!("300 plans, {leaks} leaking folds, {uncovered} plans with untested rows"),
    )
}

fn round_trip() -> Outcome {
    let cfg = CohortConfig::default();
    let ds = synth::generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    synth::emit_cohort(&cfg, &ds, dir.path()).unwrap();
    let opts = IngestOptions {
        window: Some(cfg.window()),
        ..IngestOptions::default()
    };
    let (back, report) = ingest::parse_logs(&LogPaths::in_dir(dir.path()), &opts).unwrap();
    let dropped: usize = report.streams.iter().map(|s| s.dropped()).sum();
    let records: usize = report.streams.iter().map(|s| s.rows_stored).sum();
    outcome(
        back == ds && dropped == 0,
        format!(
            "{records} records across six streams, {dropped} dropped, equal {}",
            back == ds
        ),
    )
}

/// Runs one criterion; a panic counts as a failure.
fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("entropy oracle", guarded(entropy_oracle)),
        ("kappa oracle", guarded(kappa_oracle)),
        ("majority baseline", guarded(majority_baseline)),
    ];
    let cohort = build_cohort();
    results.push(("ablation structure", guarded(|| ablation(&cohort))));
    results.push(("feature-pool budget", guarded(|| feature_budget(&cohort))));
    results.push(("forest correctness", guarded(forest_correctness)));
    results.push(("cv stability", guarded(|| cv_stability(&cohort))));
    results.push(("split hygiene", guarded(|| split_hygiene(&cohort))));
    results.push(("round trip", guarded(round_trip)));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.ok);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
