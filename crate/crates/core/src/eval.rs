//! Metrics, split plans, cross-validation, and the feature-family ablation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{apply_scaling, fit_scaling, Family, FeatureMatrix, RowMeta};
use crate::error::{Error, Result};
use crate::features::LabelScheme;
use crate::forest::{self, ForestConfig};
use crate::selection::{self, RankConfig, DEFAULT_K};
use crate::stats;

pub const CONFIDENCE: f64 = 0.95;

/// Binary confusion counts with "stressed" (label 1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[i32], pred: &[i32]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::invalid("truth and prediction lengths differ"));
        }
        let mut cm = Self::default();
        for (&t, &p) in truth.iter().zip(pred) {
            match (t, p) {
                (1, 1) => cm.tp += 1,
                (0, 1) => cm.fp += 1,
                (0, 0) => cm.tn += 1,
                (1, 0) => cm.fn_ += 1,
                _ => return Err(Error::invalid(format!("non-binary label pair ({t}, {p})"))),
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn to_multi(&self) -> MultiConfusion {
        MultiConfusion {
            classes: vec![0, 1],
            counts: vec![vec![self.tn, self.fp], vec![self.fn_, self.tp]],
        }
    }
}

/// `counts[truth][predicted]` over `classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiConfusion {
    pub classes: Vec<i32>,
    pub counts: Vec<Vec<u64>>,
}

impl MultiConfusion {
    pub fn empty(classes: Vec<i32>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_predictions(classes: &[i32], truth: &[i32], pred: &[i32]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::invalid("truth and prediction lengths differ"));
        }
        let mut m = Self::empty(classes.to_vec());
        let idx = |v: i32| {
            classes
                .iter()
                .position(|&c| c == v)
                .ok_or_else(|| Error::invalid(format!("label {v} outside {classes:?}")))
        };
        for (&t, &p) in truth.iter().zip(pred) {
            m.counts[idx(t)?][idx(p)?] += 1;
        }
        Ok(m)
    }

    pub fn add(&mut self, other: &MultiConfusion) -> Result<()> {
        if self.classes != other.classes {
            return Err(Error::invalid("confusion matrices over different classes"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Binary view when the classes are exactly `[0, 1]`.
    pub fn binary(&self) -> Option<ConfusionMatrix> {
        (self.classes == [0, 1]).then(|| ConfusionMatrix {
            tn: self.counts[0][0],
            fp: self.counts[0][1],
            fn_: self.counts[1][0],
            tp: self.counts[1][1],
        })
    }
}

/// Cohen's kappa from a square count table, in exact integer arithmetic:
/// `(n * agree - sum row_i col_i) / (n^2 - sum row_i col_i)`.
/// `None` when the denominator is zero.
pub fn kappa(counts: &[Vec<u64>]) -> Option<f64> {
    let k = counts.len();
    let n: i128 = counts.iter().flatten().map(|&c| c as i128).sum();
    let agree: i128 = (0..k).map(|i| counts[i][i] as i128).sum();
    let chance: i128 = (0..k)
        .map(|i| {
            let row: i128 = counts[i].iter().map(|&c| c as i128).sum();
            let col: i128 = counts.iter().map(|r| r[i] as i128).sum();
            row * col
        })
        .sum();
    let den = n * n - chance;
    (den != 0).then(|| (n * agree - chance) as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub kappa: Option<f64>,
    /// Binary only.
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    /// No-information rate: prevalence of the largest true class.
    pub nir: f64,
    /// One-sided exact binomial `P[X >= correct | p = nir]`.
    pub p_value: f64,
    pub confusion: MultiConfusion,
}

fn rate(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy, kappa, CI, NIR and p-value for any number of classes; the
/// binary rates are filled in when the classes are `[0, 1]`.
pub fn metrics_multi(cm: &MultiConfusion) -> Result<MetricsReport> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::invalid("metrics of an empty confusion matrix"));
    }
    let correct = cm.correct();
    let largest = cm.counts.iter().map(|r| r.iter().sum::<u64>()).max().unwrap_or(0);
    let nir = largest as f64 / n as f64;
    let (ci_low, ci_high) = stats::clopper_pearson(correct, n, CONFIDENCE);
    let b = cm.binary();
    Ok(MetricsReport {
        n,
        correct,
        accuracy: correct as f64 / n as f64,
        kappa: kappa(&cm.counts),
        sensitivity: b.and_then(|b| rate(b.tp, b.tp + b.fn_)),
        specificity: b.and_then(|b| rate(b.tn, b.tn + b.fp)),
        f1: b.and_then(|b| rate(2 * b.tp, 2 * b.tp + b.fp + b.fn_)),
        ci_low,
        ci_high,
        nir,
        p_value: stats::binomial_upper_tail(correct, n, nir),
        confusion: cm.clone(),
    })
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    metrics_multi(&cm.to_multi())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitScheme {
    /// Whole subjects until the training side holds about 80% of rows.
    Random,
    /// Subject-disjoint folds with bootstrap-resampled training rows.
    Kfold,
    /// Leave one subject out.
    Loso,
}

impl FromStr for SplitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "kfold" => Ok(Self::Kfold),
            "loso" => Ok(Self::Loso),
            _ => Err(Error::invalid(format!("unknown split scheme {s:?}"))),
        }
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Kfold => "kfold",
            Self::Loso => "loso",
        })
    }
}

pub const TRAIN_SHARE: f64 = 0.8;
pub const KFOLD: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Training row indices; may repeat under bootstrap resampling.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    /// Fold in which each row is tested; `None` for rows never tested.
    pub fn test_fold_of_rows(&self, n_rows: usize) -> Vec<Option<usize>> {
        let mut a = vec![None; n_rows];
        for (i, f) in self.folds.iter().enumerate() {
            for &r in &f.test {
                a[r] = Some(i);
            }
        }
        a
    }
}

fn subject_rows(rows: &[RowMeta]) -> BTreeMap<&str, Vec<usize>> {
    let mut by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by.entry(r.subject_id.as_str()).or_default().push(i);
    }
    by
}

fn collect_rows(groups: &[&Vec<usize>]) -> Vec<usize> {
    let mut v: Vec<usize> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    v.sort_unstable();
    v
}

/// Subject-disjoint split of `rows` under `scheme`.
pub fn make_split(rows: &[RowMeta], scheme: SplitScheme, seed: u64) -> Result<SplitPlan> {
    let by = subject_rows(rows);
    if by.len() < 2 {
        return Err(Error::invalid(format!(
            "{} subject(s): subject-disjoint splits need at least 2",
            by.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<&Vec<usize>> = by.values().collect();
    let folds = match scheme {
        SplitScheme::Loso => (0..groups.len())
            .map(|i| {
                let rest: Vec<&Vec<usize>> = groups
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, g)| *g)
                    .collect();
                Fold {
                    train: collect_rows(&rest),
                    test: groups[i].clone(),
                }
            })
            .collect(),
        SplitScheme::Random => {
            let mut order = groups.clone();
            order.shuffle(&mut rng);
            let target = TRAIN_SHARE * rows.len() as f64;
            let mut train: Vec<&Vec<usize>> = Vec::new();
            let mut test: Vec<&Vec<usize>> = Vec::new();
            let mut held = 0usize;
            for g in order {
                let with = (held + g.len()) as f64;
                if train.is_empty() || (with - target).abs() < (held as f64 - target).abs() {
                    held += g.len();
                    train.push(g);
                } else {
                    test.push(g);
                }
            }
            if test.is_empty() {
                let g = train.pop().expect("at least two subjects");
                test.push(g);
            }
            vec![Fold {
                train: collect_rows(&train),
                test: collect_rows(&test),
            }]
        }
        SplitScheme::Kfold => {
            let k = KFOLD.min(groups.len());
            let mut order = groups.clone();
            order.shuffle(&mut rng);
            (0..k)
                .map(|f| {
                    let test: Vec<&Vec<usize>> = order.iter().skip(f).step_by(k).copied().collect();
                    let rest: Vec<&Vec<usize>> = order
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i % k != f)
                        .map(|(_, g)| *g)
                        .collect();
                    let pool = collect_rows(&rest);
                    let mut train: Vec<usize> =
                        (0..pool.len()).map(|_| pool[rng.random_range(0..pool.len())]).collect();
                    train.sort_unstable();
                    Fold {
                        train,
                        test: collect_rows(&test),
                    }
                })
                .collect()
        }
    };
    Ok(SplitPlan { scheme, seed, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub labels: LabelScheme,
    /// Restrict candidate columns to these families; all columns when unset.
    pub families: Option<Vec<Family>>,
    /// Forest used to rank features on the training side.
    pub rank: RankConfig,
    /// Forest trained on the selected features.
    pub forest: ForestConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            labels: LabelScheme::Binary,
            families: None,
            rank: RankConfig {
                forest: ForestConfig::default(),
                permutation: false,
            },
            forest: ForestConfig::default(),
        }
    }
}

fn label_classes(scheme: LabelScheme) -> Vec<i32> {
    match scheme {
        LabelScheme::Binary => vec![0, 1],
        LabelScheme::Ternary => vec![-1, 0, 1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub selected: Vec<String>,
    pub truth: Vec<i32>,
    pub predicted: Vec<i32>,
    pub confusion: MultiConfusion,
    pub report: MetricsReport,
}

fn restrict(m: &FeatureMatrix, families: Option<&[Family]>) -> Result<Option<FeatureMatrix>> {
    let Some(fams) = families else {
        return Ok(None);
    };
    let cols = m.family_columns(fams);
    if cols.is_empty() {
        return Err(Error::invalid(format!("no columns for families {fams:?}")));
    }
    Ok(Some(m.select_columns(&cols)))
}

/// Normalizes, ranks, selects and fits on `train`, then predicts `test`.
/// Every fitted quantity sees training rows only.
pub fn run_pipeline(m: &FeatureMatrix, train: &[usize], test: &[usize], cfg: &PipelineConfig) -> Result<FoldResult> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("pipeline needs training and test rows"));
    }
    let restricted = restrict(m, cfg.families.as_deref())?;
    let m = restricted.as_ref().unwrap_or(m);
    let labels: Vec<i32> = m.labels(cfg.labels).into_iter().map(i32::from).collect();
    let y_train: Vec<i32> = train.iter().map(|&i| labels[i]).collect();
    let y_train_i8: Vec<i8> = y_train.iter().map(|&v| v as i8).collect();

    let scaling = fit_scaling(&m.values, train)?;
    let train_m = FeatureMatrix {
        columns: m.columns.clone(),
        rows: train.iter().map(|&i| m.rows[i].clone()).collect(),
        values: apply_scaling(&m.values.select_rows(train), &scaling),
        scaling: Some(scaling.clone()),
    };
    let ranked = selection::rank_features(&train_m, &y_train_i8, &cfg.rank)?;
    let selected = selection::select_top(&ranked, cfg.k.min(m.n_cols()))?;
    let cols: Vec<usize> = selected
        .iter()
        .map(|n| train_m.column_index(n).expect("ranked names are columns"))
        .collect();
    let x_train = train_m.values.select_cols(&cols);
    drop(train_m);
    let f = forest::fit_forest(&x_train, &y_train, &cfg.forest)?;

    let sel_scaling: Vec<_> = cols.iter().map(|&j| scaling[j].clone()).collect();
    let x_test = apply_scaling(&m.values.select_rows(test).select_cols(&cols), &sel_scaling);
    let predicted = f.predict_matrix(&x_test)?;
    let truth: Vec<i32> = test.iter().map(|&i| labels[i]).collect();
    let confusion = MultiConfusion::from_predictions(&label_classes(cfg.labels), &truth, &predicted)?;
    let report = metrics_multi(&confusion)?;
    Ok(FoldResult {
        selected,
        truth,
        predicted,
        confusion,
        report,
    })
}

/// Majority class of `train` (ties toward the lowest label) predicted for
/// every test row.
pub fn majority_baseline(
    m: &FeatureMatrix,
    train: &[usize],
    test: &[usize],
    scheme: LabelScheme,
) -> Result<FoldResult> {
    let labels: Vec<i32> = m.labels(scheme).into_iter().map(i32::from).collect();
    let classes = label_classes(scheme);
    let mut counts = vec![0usize; classes.len()];
    for &i in train {
        counts[classes.iter().position(|&c| c == labels[i]).expect("known label")] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .fold((0usize, 0usize), |b, (i, &c)| if c > b.1 { (i, c) } else { b })
        .0;
    let truth: Vec<i32> = test.iter().map(|&i| labels[i]).collect();
    let predicted = vec![classes[best]; test.len()];
    let confusion = MultiConfusion::from_predictions(&classes, &truth, &predicted)?;
    let report = metrics_multi(&confusion)?;
    Ok(FoldResult {
        selected: Vec::new(),
        truth,
        predicted,
        confusion,
        report,
    })
}

/// Min, quartiles (type 7), mean and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Summary {
            min: s[0],
            q1: stats::type7_quantile(&s, 0.25),
            median: stats::type7_quantile(&s, 0.5),
            mean: stats::mean(&s),
            q3: stats::type7_quantile(&s, 0.75),
            max: s[s.len() - 1],
        })
    }

    pub fn spread(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub selected: Vec<String>,
    pub report: Option<MetricsReport>,
    /// Why the fold was excluded from the summary.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub scheme: SplitScheme,
    pub seed: u64,
    pub folds: Vec<FoldOutcome>,
    pub accuracy: Option<Summary>,
    pub kappa: Option<Summary>,
    /// Sum of the successful folds' confusion matrices.
    pub pooled: MultiConfusion,
}

/// Runs the pipeline on every fold of `plan`. A fold whose training side
/// has a single class is reported as failed and left out of the summary.
pub fn cross_validate(m: &FeatureMatrix, plan: &SplitPlan, cfg: &PipelineConfig) -> Result<CvReport> {
    let results: Vec<Result<FoldOutcome>> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let base = FoldOutcome {
                fold: i,
                n_train: fold.train.len(),
                n_test: fold.test.len(),
                selected: Vec::new(),
                report: None,
                failure: None,
            };
            match run_pipeline(m, &fold.train, &fold.test, cfg) {
                Ok(r) => Ok(FoldOutcome {
                    selected: r.selected,
                    report: Some(r.report),
                    ..base
                }),
                Err(Error::SingleClass) => Ok(FoldOutcome {
                    failure: Some("training side has a single class".into()),
                    ..base
                }),
                Err(e) => Err(e),
            }
        })
        .collect();
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut pooled = MultiConfusion::empty(label_classes(cfg.labels));
    let mut acc = Vec::new();
    let mut kap = Vec::new();
    for r in folds.iter().filter_map(|f| f.report.as_ref()) {
        pooled.add(&r.confusion)?;
        acc.push(r.accuracy);
        if let Some(k) = r.kappa {
            kap.push(k);
        }
    }
    Ok(CvReport {
        scheme: plan.scheme,
        seed: plan.seed,
        folds,
        accuracy: Summary::of(&acc),
        kappa: Summary::of(&kap),
        pooled,
    })
}

/// Model rows of the family ablation, in table order.
pub const ABLATION_ROWS: [(&str, &[Family]); 8] = [
    ("all", &[Family::Weather, Family::Personality, Family::Phone]),
    ("baseline", &[]),
    ("weather", &[Family::Weather]),
    ("personality", &[Family::Personality]),
    ("phone", &[Family::Phone]),
    ("personality+weather", &[Family::Personality, Family::Weather]),
    ("personality+phone", &[Family::Personality, Family::Phone]),
    ("weather+phone", &[Family::Weather, Family::Phone]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub families: Vec<Family>,
    /// Metrics over the pooled test predictions of every fold.
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, model: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.model == model)
    }
}

fn pooled_run(
    plan: &SplitPlan,
    run: impl Fn(&Fold) -> Result<FoldResult> + Sync + Send,
    classes: Vec<i32>,
) -> Result<MetricsReport> {
    let parts = plan.folds.par_iter().map(run).collect::<Result<Vec<_>>>()?;
    let mut pooled = MultiConfusion::empty(classes);
    for p in &parts {
        pooled.add(&p.confusion)?;
    }
    metrics_multi(&pooled)
}

/// One full train/evaluate cycle per family restriction on the same plan,
/// plus the training-majority baseline.
pub fn ablation_suite(m: &FeatureMatrix, plan: &SplitPlan, cfg: &PipelineConfig) -> Result<AblationTable> {
    let rows = ABLATION_ROWS
        .par_iter()
        .map(|(name, fams)| {
            let classes = label_classes(cfg.labels);
            let report = if fams.is_empty() {
                pooled_run(plan, |f| majority_baseline(m, &f.train, &f.test, cfg.labels), classes)?
            } else {
                let c = PipelineConfig {
                    families: Some(fams.to_vec()),
                    ..cfg.clone()
                };
                pooled_run(plan, |f| run_pipeline(m, &f.train, &f.test, &c), classes)?
            };
            Ok(AblationRow {
                model: name.to_string(),
                families: fams.to_vec(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

/// Three-class evaluation (not stressed / neutral / stressed) pooled over
/// the plan's folds; sensitivity and specificity are left unset.
pub fn ternary_evaluate(m: &FeatureMatrix, plan: &SplitPlan, cfg: &PipelineConfig) -> Result<MetricsReport> {
    let labels = m.ternary_labels();
    for f in &plan.folds {
        let mut seen: Vec<i8> = f.train.iter().map(|&i| labels[i]).collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() < 3 {
            return Err(Error::invalid(format!(
                "ternary evaluation needs 3 classes in training, found {}",
                seen.len()
            )));
        }
    }
    let c = PipelineConfig {
        labels: LabelScheme::Ternary,
        ..cfg.clone()
    };
    pooled_run(
        plan,
        |f| run_pipeline(m, &f.train, &f.test, &c),
        label_classes(LabelScheme::Ternary),
    )
}

/// Config digest and seed stamped into every written report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, body: &T, prov: &Provenance) -> Result<()> {
    let text = serde_json::to_string_pretty(&Stamped { provenance: prov, body })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

const METRIC_HEADER: [&str; 11] = [
    "accuracy",
    "kappa",
    "sensitivity",
    "specificity",
    "f1",
    "ci_low",
    "ci_high",
    "nir",
    "p_value",
    "config_hash",
    "seed",
];

fn metric_cells(r: &MetricsReport, prov: &Provenance) -> Vec<String> {
    vec![
        format!("{:.6}", r.accuracy),
        fmt_opt(r.kappa),
        fmt_opt(r.sensitivity),
        fmt_opt(r.specificity),
        fmt_opt(r.f1),
        format!("{:.6}", r.ci_low),
        format!("{:.6}", r.ci_high),
        format!("{:.6}", r.nir),
        format!("{:e}", r.p_value),
        prov.config_hash.clone(),
        prov.seed.to_string(),
    ]
}

/// Writes `label,<metrics...>,config_hash,seed` rows.
pub fn write_metrics_csv(path: &Path, rows: &[(String, &MetricsReport)], prov: &Provenance) -> Result<()> {
    let mut w = csv_writer(path)?;
    let csv_err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    let mut header = vec!["model"];
    header.extend(METRIC_HEADER);
    w.write_record(&header).map_err(csv_err)?;
    for (label, r) in rows {
        let mut rec = vec![label.clone()];
        rec.extend(metric_cells(r, prov));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
