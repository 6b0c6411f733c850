use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stresslens::aggregate::FeatureMatrix;
use stresslens::eval::{self, PipelineConfig, SplitScheme, ABLATION_ROWS};
use stresslens::forest::ForestConfig;
use stresslens::selection::RankConfig;

const CHAIN: [&str; 6] = ["synth", "validate", "featurize", "select", "train", "evaluate"];

const SMALL: &str = r#"
rank_trees = 40
ntree = 40

[cohort]
n_subjects = 30
n_days = 60
"#;

struct Run {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Run {
    fn new(config: &str) -> Run {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, config).unwrap();
        let out = dir.path().join("out");
        Run {
            _dir: dir,
            config: path,
            out,
        }
    }

    fn cmd(&self, stage: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_stresslens"))
            .arg(stage)
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(&self.out)
            .args(extra)
            .output()
            .unwrap()
    }

    fn ok(&self, stage: &str, extra: &[&str]) -> String {
        let o = self.cmd(stage, extra);
        assert!(
            o.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    fn chain(&self, extra: &[&str]) {
        for s in CHAIN {
            self.ok(s, extra);
        }
    }

    fn json(&self, name: &str) -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(files_under(&p));
        } else {
            v.push(p);
        }
    }
    v.sort();
    v
}

#[test]
fn staged_chain_emits_a_metrics_report() {
    let run = Run::new(SMALL);
    run.chain(&[]);
    let m = run.json("metrics.json");
    let acc = m["report"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(m["report"]["kappa"].as_f64().is_some());
    assert_eq!(m["report"]["n"].as_u64().unwrap(), m["n_test"].as_u64().unwrap());

    // the staged path reproduces the in-memory pipeline on the same split
    let fm = FeatureMatrix::read_csv(&run.out.join("features.csv")).unwrap();
    let plan = eval::make_split(&fm.rows, SplitScheme::Random, 2011).unwrap();
    let cfg = PipelineConfig {
        rank: RankConfig {
            forest: ForestConfig {
                n_trees: 40,
                ..ForestConfig::default()
            },
            permutation: false,
        },
        forest: ForestConfig {
            n_trees: 40,
            ..ForestConfig::default()
        },
        ..PipelineConfig::default()
    };
    let direct = eval::run_pipeline(&fm, &plan.folds[0].train, &plan.folds[0].test, &cfg).unwrap();
    assert_eq!(direct.report.accuracy, acc);
    let selected: Vec<String> = serde_json::from_value(run.json("selected.json")["selected"].clone()).unwrap();
    assert_eq!(direct.selected, selected);
}

#[test]
fn ablate_emits_the_eight_model_rows() {
    let run = Run::new(SMALL);
    for s in ["synth", "validate", "featurize", "ablate"] {
        run.ok(s, &[]);
    }
    let t = run.json("ablation.json");
    let models: Vec<&str> = t["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["model"].as_str().unwrap())
        .collect();
    let expected: Vec<&str> = ABLATION_ROWS.iter().map(|(n, _)| *n).collect();
    assert_eq!(models, expected);
    assert_eq!(models.len(), 8);
    let baseline = &t["rows"][1]["report"];
    assert_eq!(baseline["kappa"].as_f64(), Some(0.0));
    let csv = std::fs::read_to_string(run.out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn rerun_with_same_config_is_byte_identical() {
    let a = Run::new(SMALL);
    let b = Run::new(SMALL);
    for run in [&a, &b] {
        run.chain(&["--scheme", "kfold"]);
        run.ok("ablate", &["--scheme", "kfold"]);
        run.ok("report", &["--scheme", "kfold"]);
    }
    let fa = files_under(&a.out);
    let fb = files_under(&b.out);
    assert_eq!(
        fa.iter().map(|p| p.strip_prefix(&a.out).unwrap()).collect::<Vec<_>>(),
        fb.iter().map(|p| p.strip_prefix(&b.out).unwrap()).collect::<Vec<_>>()
    );
    for (x, y) in fa.iter().zip(&fb) {
        assert!(
            std::fs::read(x).unwrap() == std::fs::read(y).unwrap(),
            "{} differs",
            x.display()
        );
    }
    let report = std::fs::read_to_string(a.out.join("report.md")).unwrap();
    for heading in [
        "Selected features ranked by mean decrease in accuracy",
        "Test-set performance",
        "Cross-validation metrics",
        "Model metrics for feature subsets",
    ] {
        assert!(report.contains(heading), "missing {heading}");
    }
    assert!(report.contains("1st Qu.") && report.contains("3rd Qu."));
}

#[test]
fn every_stage_output_carries_its_config_hash() {
    let run = Run::new(SMALL);
    run.chain(&[]);
    run.ok("report", &[]);
    for stage in ["validate", "featurize", "select", "train", "evaluate", "report"] {
        let m = run.json(&format!("{stage}.manifest.json"));
        let hash = m["config_hash"].as_str().unwrap().to_string();
        for name in m["outputs"].as_object().unwrap().keys() {
            let text = std::fs::read_to_string(run.out.join(name)).unwrap();
            assert!(text.contains(&hash), "{name} lacks the {stage} hash");
        }
    }
}

#[test]
fn missing_predecessor_names_the_stage() {
    let run = Run::new(SMALL);
    let o = run.cmd("train", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stresslens select"), "{}", stderr(&o));
    let o = run.cmd("validate", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stresslens synth"), "{}", stderr(&o));
}

#[test]
fn changed_config_or_edited_artifact_is_stale() {
    let run = Run::new(SMALL);
    for s in ["synth", "validate", "featurize", "select"] {
        run.ok(s, &[]);
    }
    // a different k invalidates the selection the model would be trained on
    let o = run.cmd("train", &["--k", "8"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stale artifact"), "{}", stderr(&o));
    // a different seed reaches back to the generated cohort
    let o = run.cmd("featurize", &["--seed", "5"]);
    assert!(stderr(&o).contains("stale artifact"), "{}", stderr(&o));

    let path = run.out.join("features.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    let last = text.lines().last().unwrap().to_string();
    text.push_str(&last);
    text.push('\n');
    std::fs::write(&path, text).unwrap();
    let o = run.cmd("train", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stale artifact"), "{}", stderr(&o));
}

#[test]
fn input_and_pipeline_errors_have_distinct_exit_codes() {
    let run = Run::new(SMALL);
    assert_eq!(run.cmd("select", &["--scheme", "holdout"]).status.code(), Some(2));
    assert_eq!(run.cmd("select", &["--families", "gps"]).status.code(), Some(2));
    assert_eq!(run.cmd("select", &["--k", "0"]).status.code(), Some(2));
    let bad = Run::new("ntree = 3\nunknown = 1\n");
    assert_eq!(bad.cmd("synth", &[]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_stresslens"))
        .args(["synth", "--config"])
        .arg(&run.config)
        .arg("--out")
        .arg(&run.out)
        .env("STRESSLENS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    // external logs in which nobody reports stress above 4
    let src = Run::new(SMALL);
    src.ok("synth", &[]);
    let logs = src.out.join("logs");
    let stress = logs.join("stress.csv");
    let text = std::fs::read_to_string(&stress).unwrap();
    let calm: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                l.to_string()
            } else {
                let (head, _) = l.rsplit_once(',').unwrap();
                format!("{head},3")
            }
        })
        .collect();
    std::fs::write(&stress, calm.join("\n") + "\n").unwrap();
    let one_class = Run::new(SMALL);
    let input = logs.to_str().unwrap();
    for s in ["validate", "featurize"] {
        one_class.ok(s, &["--input", input]);
    }
    let o = one_class.cmd("select", &["--input", input]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("single class"), "{}", stderr(&o));
}

#[test]
fn thread_cap_does_not_change_results() {
    let a = Run::new(SMALL);
    let b = Run::new(SMALL);
    a.chain(&[]);
    for s in CHAIN {
        let o = Command::new(env!("CARGO_BIN_EXE_stresslens"))
            .arg(s)
            .arg("--config")
            .arg(&b.config)
            .arg("--out")
            .arg(&b.out)
            .env("STRESSLENS_THREADS", "1")
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        std::fs::read(a.out.join("metrics.json")).unwrap(),
        std::fs::read(b.out.join("metrics.json")).unwrap()
    );
}
