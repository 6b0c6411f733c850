use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stresslens::aggregate::{self, ColumnScaling, FeatureMatrix};
use stresslens::eval::{self, CvReport, MetricsReport, MultiConfusion, SplitPlan, SplitScheme};
use stresslens::features::{self, LabelScheme};
use stresslens::forest::{self, Forest, FOREST_FORMAT, FOREST_VERSION};
use stresslens::ingest::{self, IngestOptions, IngestReport, LogPaths};
use stresslens::selection::{self, RankedFeatures};
use stresslens::synth;

use crate::artifacts::{read_json, stamp_csv, Stage, Workspace};
use crate::config::RunConfig;
use crate::error::CliError;

pub const VALIDATE_FILE: &str = "validate.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const FEATURIZE_FILE: &str = "featurize.json";
pub const SPLIT_FILE: &str = "split.json";
pub const RANKING_FILE: &str = "ranking.json";
pub const RANKING_CSV: &str = "ranking.csv";
pub const SELECTED_FILE: &str = "selected.json";
pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const CV_FILE: &str = "cv.json";
pub const ABLATION_FILE: &str = "ablation.json";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const REPORT_FILE: &str = "report.md";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateArtifact {
    pub roster: Vec<String>,
    pub ingest: IngestReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedArtifact {
    pub labels: LabelScheme,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub labels: LabelScheme,
    pub selected: Vec<String>,
    /// Aligned with `selected`; fitted on training rows.
    pub scaling: Vec<ColumnScaling>,
    pub forest: Forest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub scheme: SplitScheme,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: MultiConfusion,
    pub report: MetricsReport,
}

fn create_out(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Input(format!("{}: {e}", cfg.out.display())))
}

fn write_json<T: Serialize>(ws: &Workspace, stage: Stage, name: &str, body: &T) -> Result<PathBuf, CliError> {
    let path = ws.path(name);
    eval::write_json(&path, body, &ws.provenance(stage)?).map_err(CliError::pipeline)?;
    Ok(path)
}

fn log_paths(cfg: &RunConfig) -> LogPaths {
    LogPaths::in_dir(cfg.logs_dir())
}

pub fn synth(cfg: &RunConfig) -> Result<String, CliError> {
    create_out(cfg)?;
    let ws = Workspace { cfg };
    let cohort = cfg.cohort();
    cohort.validate().map_err(CliError::Data)?;
    let ds = synth::generate(&cohort).map_err(CliError::pipeline)?;
    let dir = cfg.out.join("logs");
    let m = synth::emit_cohort(&cohort, &ds, &dir).map_err(CliError::pipeline)?;
    let mut outputs: Vec<PathBuf> = m.outputs.keys().map(|k| dir.join(k)).collect();
    outputs.push(dir.join(synth::COHORT_MANIFEST_FILE));
    ws.finish(Stage::Synth, &[], &outputs)?;
    Ok(format!(
        "synth: {} subjects x {} days (seed {}) -> {}",
        cohort.n_subjects,
        cohort.n_days,
        cohort.seed,
        dir.display()
    ))
}

pub fn validate(cfg: &RunConfig) -> Result<String, CliError> {
    create_out(cfg)?;
    let ws = Workspace { cfg };
    let paths = log_paths(cfg);
    if cfg.input.is_none() {
        ws.require(Stage::Synth)?;
    }
    for p in paths.all() {
        if !p.exists() {
            return Err(match cfg.input {
                None => CliError::MissingStage {
                    stage: Stage::Synth.name(),
                    path: p.to_path_buf(),
                },
                Some(_) => CliError::Input(format!("{}: input log not found", p.display())),
            });
        }
    }
    let (ds, report) = ingest::parse_logs(&paths, &IngestOptions::default()).map_err(CliError::Data)?;
    let roster = ingest::validate_coverage(&ds, cfg.min_consecutive_days).map_err(CliError::Data)?;
    let n = roster.len();
    let out = write_json(
        &ws,
        Stage::Validate,
        VALIDATE_FILE,
        &ValidateArtifact { roster, ingest: report },
    )?;
    let inputs: Vec<PathBuf> = paths.all().iter().map(|p| p.to_path_buf()).collect();
    ws.finish(Stage::Validate, &inputs, &[out])?;
    Ok(format!("validate: {n} of {} subjects eligible", ds.subjects.len()))
}

pub fn featurize(cfg: &RunConfig) -> Result<String, CliError> {
    let ws = Workspace { cfg };
    let vm = ws.require(Stage::Validate)?;
    let v: ValidateArtifact = read_json(&ws.path(VALIDATE_FILE))?;
    let paths = log_paths(cfg);
    let (ds, _) = ingest::parse_logs(&paths, &IngestOptions::default()).map_err(CliError::Data)?;
    let daily = features::extract_daily(&ds, &v.roster, &cfg.features);
    let (m, report) = aggregate::assemble(&daily, &ds, &cfg.assemble).map_err(CliError::pipeline)?;
    let prov = ws.provenance(Stage::Featurize)?;
    let fpath = ws.path(FEATURES_FILE);
    m.write_csv(&fpath).map_err(CliError::pipeline)?;
    stamp_csv(&fpath, &prov)?;
    let rpath = write_json(&ws, Stage::Featurize, FEATURIZE_FILE, &report)?;
    let mut inputs = ws.outputs_of(&vm);
    inputs.extend(paths.all().iter().map(|p| p.to_path_buf()));
    ws.finish(Stage::Featurize, &inputs, &[fpath, rpath])?;
    Ok(format!(
        "featurize: {} rows x {} candidate columns ({} rows dropped)",
        m.n_rows(),
        m.n_cols(),
        report.dropped.len()
    ))
}

fn load_features(ws: &Workspace) -> Result<FeatureMatrix, CliError> {
    FeatureMatrix::read_csv(&ws.path(FEATURES_FILE)).map_err(CliError::Data)
}

fn restrict(m: FeatureMatrix, cfg: &RunConfig) -> Result<FeatureMatrix, CliError> {
    let Some(fams) = &cfg.families else {
        return Ok(m);
    };
    let cols = m.family_columns(fams);
    if cols.is_empty() {
        return Err(CliError::Input(format!("no candidate columns for families {fams:?}")));
    }
    Ok(m.select_columns(&cols))
}

fn labels_of(m: &FeatureMatrix, scheme: LabelScheme, rows: &[usize]) -> Vec<i32> {
    let all = m.labels(scheme);
    rows.iter().map(|&i| i32::from(all[i])).collect()
}

pub fn select(cfg: &RunConfig) -> Result<String, CliError> {
    let ws = Workspace { cfg };
    let fm = ws.require(Stage::Featurize)?;
    let m = restrict(load_features(&ws)?, cfg)?;
    let plan = eval::make_split(&m.rows, cfg.scheme, cfg.seed).map_err(CliError::pipeline)?;
    let train = &plan.folds[0].train;
    let norm = aggregate::normalize_fit_transform(&m, train).map_err(CliError::pipeline)?;
    let y: Vec<i8> = labels_of(&m, cfg.labels, train).into_iter().map(|v| v as i8).collect();
    let ranked = selection::rank_features(&norm.select_rows(train), &y, &cfg.rank(true)).map_err(CliError::pipeline)?;
    let selected = selection::select_top(&ranked, cfg.k.min(m.n_cols())).map_err(CliError::pipeline)?;
    let prov = ws.provenance(Stage::Select)?;
    let csv = ws.path(RANKING_CSV);
    ranked.write_csv(&csv).map_err(CliError::pipeline)?;
    stamp_csv(&csv, &prov)?;
    let outputs = vec![
        write_json(&ws, Stage::Select, SPLIT_FILE, &plan)?,
        write_json(&ws, Stage::Select, RANKING_FILE, &ranked)?,
        csv,
        write_json(
            &ws,
            Stage::Select,
            SELECTED_FILE,
            &SelectedArtifact {
                labels: cfg.labels,
                selected: selected.clone(),
            },
        )?,
    ];
    ws.finish(Stage::Select, &ws.outputs_of(&fm), &outputs)?;
    Ok(format!(
        "select: top {} of {} columns; first {}",
        selected.len(),
        m.n_cols(),
        selected[0]
    ))
}

struct Selection {
    m: FeatureMatrix,
    plan: SplitPlan,
    selected: Vec<String>,
}

fn load_selection(ws: &Workspace) -> Result<(Selection, Vec<PathBuf>), CliError> {
    let sm = ws.require(Stage::Select)?;
    let fm = ws.require(Stage::Featurize)?;
    let m = load_features(ws)?;
    let plan: SplitPlan = read_json(&ws.path(SPLIT_FILE))?;
    let s: SelectedArtifact = read_json(&ws.path(SELECTED_FILE))?;
    let mut inputs = ws.outputs_of(&fm);
    inputs.extend(ws.outputs_of(&sm));
    let sub = m.select_columns_by_name(&s.selected).map_err(CliError::Data)?;
    Ok((
        Selection {
            m: sub,
            plan,
            selected: s.selected,
        },
        inputs,
    ))
}

pub fn train(cfg: &RunConfig) -> Result<String, CliError> {
    let ws = Workspace { cfg };
    let (s, inputs) = load_selection(&ws)?;
    let train = &s.plan.folds[0].train;
    let scaling = aggregate::fit_scaling(&s.m.values, train).map_err(CliError::pipeline)?;
    let x = aggregate::apply_scaling(&s.m.values.select_rows(train), &scaling);
    let y = labels_of(&s.m, cfg.labels, train);
    let f = forest::fit_forest(&x, &y, &cfg.forest()).map_err(CliError::pipeline)?;
    let oob = f.oob_accuracy();
    let model = ModelArtifact {
        labels: cfg.labels,
        selected: s.selected,
        scaling,
        forest: f,
    };
    let out = write_json(&ws, Stage::Train, MODEL_FILE, &model)?;
    ws.finish(Stage::Train, &inputs, &[out])?;
    Ok(format!(
        "train: {} trees on {} rows x {} features; OOB accuracy {}",
        model.forest.trees.len(),
        train.len(),
        model.selected.len(),
        oob.map_or("n/a".into(), |a| format!("{a:.4}"))
    ))
}

fn load_model(ws: &Workspace) -> Result<ModelArtifact, CliError> {
    let path = ws.path(MODEL_FILE);
    let model: ModelArtifact = read_json(&path)?;
    if model.forest.format != FOREST_FORMAT || model.forest.version != FOREST_VERSION {
        return Err(CliError::Input(format!(
            "{}: unsupported forest format {} v{}",
            path.display(),
            model.forest.format,
            model.forest.version
        )));
    }
    Ok(model)
}

pub fn evaluate(cfg: &RunConfig) -> Result<String, CliError> {
    let ws = Workspace { cfg };
    let (s, mut inputs) = load_selection(&ws)?;
    let tm = ws.require(Stage::Train)?;
    inputs.extend(ws.outputs_of(&tm));
    let model = load_model(&ws)?;
    let fold = &s.plan.folds[0];
    let x = aggregate::apply_scaling(&s.m.values.select_rows(&fold.test), &model.scaling);
    let predicted = model.forest.predict_matrix(&x).map_err(CliError::pipeline)?;
    let truth = labels_of(&s.m, model.labels, &fold.test);
    let confusion =
        MultiConfusion::from_predictions(&model.forest.classes, &truth, &predicted).map_err(CliError::pipeline)?;
    let report = eval::metrics_multi(&confusion).map_err(CliError::pipeline)?;
    let prov = ws.provenance(Stage::Evaluate)?;

    let pred_path = ws.path(PREDICTIONS_CSV);
    write_predictions(&pred_path, &s.m, &fold.test, &truth, &predicted)?;
    stamp_csv(&pred_path, &prov)?;
    let csv = ws.path(METRICS_CSV);
    eval::write_metrics_csv(&csv, &[("model".to_string(), &report)], &prov).map_err(CliError::pipeline)?;
    let mut outputs = vec![
        write_json(
            &ws,
            Stage::Evaluate,
            METRICS_FILE,
            &MetricsArtifact {
                scheme: s.plan.scheme,
                n_train: fold.train.len(),
                n_test: fold.test.len(),
                confusion,
                report: report.clone(),
            },
        )?,
        csv,
        pred_path,
    ];
    let mut line = format!(
        "evaluate: accuracy {:.4} kappa {} on {} test rows",
        report.accuracy,
        report.kappa.map_or("NA".into(), |k| format!("{k:.4}")),
        report.n
    );
    if cfg.scheme != SplitScheme::Random {
        let full = load_features(&ws)?;
        let cv = eval::cross_validate(&full, &s.plan, &cfg.pipeline()).map_err(CliError::pipeline)?;
        if let Some(a) = &cv.accuracy {
            line.push_str(&format!(
                "; {} folds, accuracy {:.4}..{:.4}",
                cv.folds.len(),
                a.min,
                a.max
            ));
        }
        outputs.push(write_json(&ws, Stage::Evaluate, CV_FILE, &cv)?);
    } else {
        let stale = ws.path(CV_FILE);
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| CliError::Input(format!("{}: {e}", stale.display())))?;
        }
    }
    ws.finish(Stage::Evaluate, &inputs, &outputs)?;
    Ok(line)
}

fn write_predictions(
    path: &std::path::Path,
    m: &FeatureMatrix,
    rows: &[usize],
    truth: &[i32],
    predicted: &[i32],
) -> Result<(), CliError> {
    let mut text = String::from("subject_id,date,truth,predicted\n");
    for ((&i, t), p) in rows.iter().zip(truth).zip(predicted) {
        let r = &m.rows[i];
        text.push_str(&format!("{},{},{t},{p}\n", r.subject_id, r.date));
    }
    crate::artifacts::write_text(path, &text)
}

pub fn ablate(cfg: &RunConfig) -> Result<String, CliError> {
    let ws = Workspace { cfg };
    let fm = ws.require(Stage::Featurize)?;
    let m = load_features(&ws)?;
    let plan = eval::make_split(&m.rows, cfg.scheme, cfg.seed).map_err(CliError::pipeline)?;
    let pc = eval::PipelineConfig {
        families: None,
        ..cfg.pipeline()
    };
    let table = eval::ablation_suite(&m, &plan, &pc).map_err(CliError::pipeline)?;
    let prov = ws.provenance(Stage::Ablate)?;
    let csv = ws.path(ABLATION_CSV);
    let rows: Vec<(String, &MetricsReport)> = table.rows.iter().map(|r| (r.model.clone(), &r.report)).collect();
    eval::write_metrics_csv(&csv, &rows, &prov).map_err(CliError::pipeline)?;
    let json = write_json(&ws, Stage::Ablate, ABLATION_FILE, &table)?;
    ws.finish(Stage::Ablate, &ws.outputs_of(&fm), &[json, csv])?;
    let all = table.row("all").map_or(f64::NAN, |r| r.report.accuracy);
    Ok(format!(
        "ablate: {} models; all-features accuracy {all:.4}",
        table.rows.len()
    ))
}

pub fn report(cfg: &RunConfig) -> Result<String, CliError> {
    let ws = Workspace { cfg };
    let sm = ws.require(Stage::Select)?;
    let em = ws.require(Stage::Evaluate)?;
    let mut inputs = ws.outputs_of(&sm);
    inputs.extend(ws.outputs_of(&em));
    let ranked: RankedFeatures = read_json(&ws.path(RANKING_FILE))?;
    let selected: SelectedArtifact = read_json(&ws.path(SELECTED_FILE))?;
    let metrics: MetricsArtifact = read_json(&ws.path(METRICS_FILE))?;
    let cv: Option<CvReport> = em
        .outputs
        .contains_key(CV_FILE)
        .then(|| read_json(&ws.path(CV_FILE)))
        .transpose()?;
    let ablation = if ws.has_run(Stage::Ablate) {
        let am = ws.require(Stage::Ablate)?;
        inputs.extend(ws.outputs_of(&am));
        Some(read_json(&ws.path(ABLATION_FILE))?)
    } else {
        None
    };
    let prov = ws.provenance(Stage::Report)?;
    let text = crate::report::render(
        &prov,
        &ranked,
        &selected.selected,
        &metrics,
        cv.as_ref(),
        ablation.as_ref(),
    );
    let path = ws.path(REPORT_FILE);
    crate::artifacts::write_text(&path, &text)?;
    ws.finish(Stage::Report, &inputs, std::slice::from_ref(&path))?;
    Ok(format!("report: {}", path.display()))
}
