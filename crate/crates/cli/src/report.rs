//! Plain-text rendering of stored results.

use std::fmt::Write;

use stresslens::eval::{AblationTable, CvReport, Provenance, Summary};
use stresslens::selection::RankedFeatures;

use crate::stages::MetricsArtifact;

type Pick = fn(&Summary) -> f64;

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{:.2}", 100.0 * x))
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"))
}

fn class_name(c: i32) -> &'static str {
    match c {
        -1 => "not stressed",
        0 => "not stressed / neutral",
        _ => "stressed",
    }
}

pub fn render(
    prov: &Provenance,
    ranked: &RankedFeatures,
    selected: &[String],
    metrics: &MetricsArtifact,
    cv: Option<&CvReport>,
    ablation: Option<&AblationTable>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "<!-- config_hash={} seed={} -->", prov.config_hash, prov.seed);
    let _ = writeln!(s, "# Stress recognition report\n");

    let _ = writeln!(s, "## Selected features ranked by mean decrease in accuracy\n");
    let mut header = "| Rank | Feature |".to_string();
    let mut rule = "|---:|:---|".to_string();
    for c in &ranked.classes {
        let _ = write!(header, " {c} |");
        rule.push_str("---:|");
    }
    let _ = writeln!(s, "{header} Mean Decrease in Accuracy | Mean Decrease in Gini |");
    let _ = writeln!(s, "{rule}---:|---:|");
    let chosen: Vec<_> = ranked
        .by_accuracy()
        .into_iter()
        .filter(|f| selected.contains(&f.name))
        .collect();
    for (i, f) in chosen.iter().enumerate() {
        let _ = write!(s, "| {} | {} |", i + 1, f.name);
        for v in &f.mean_decrease_accuracy_by_class {
            let _ = write!(s, " {v:.4} |");
        }
        let _ = writeln!(s, " {:.4} | {:.4} |", f.mean_decrease_accuracy, f.mean_decrease_gini);
    }

    let r = &metrics.report;
    let _ = writeln!(s, "\n## Test-set performance\n");
    let _ = writeln!(s, "| Metric | Value |\n|---:|:---|");
    let _ = writeln!(s, "| Accuracy | {:.4} |", r.accuracy);
    let _ = writeln!(s, "| 95% CI | ({:.4}, {:.4}) |", r.ci_low, r.ci_high);
    let _ = writeln!(s, "| No Information Rate | {:.4} |", r.nir);
    let _ = writeln!(s, "| P-Value [Acc > NIR] | {:.3e} |", r.p_value);
    let _ = writeln!(s, "| Kappa | {} |", num(r.kappa));
    let _ = writeln!(s, "| Sensitivity | {} |", num(r.sensitivity));
    let _ = writeln!(s, "| Specificity | {} |", num(r.specificity));
    let positive = metrics.confusion.classes.last().copied().unwrap_or(1);
    let _ = writeln!(s, "| 'Positive' Class | {} |", class_name(positive));
    let _ = writeln!(
        s,
        "\n{} training rows, {} test rows, {} split.\n",
        metrics.n_train, metrics.n_test, metrics.scheme
    );
    let _ = writeln!(s, "Confusion matrix (rows: truth, columns: prediction)\n");
    let mut head = "| |".to_string();
    let mut line = "|---:|".to_string();
    for c in &metrics.confusion.classes {
        let _ = write!(head, " {c} |");
        line.push_str("---:|");
    }
    let _ = writeln!(s, "{head}\n{line}");
    for (c, row) in metrics.confusion.classes.iter().zip(&metrics.confusion.counts) {
        let _ = write!(s, "| {c} |");
        for v in row {
            let _ = write!(s, " {v} |");
        }
        s.push('\n');
    }

    if let Some(cv) = cv {
        let _ = writeln!(
            s,
            "\n## Cross-validation metrics ({}, {} folds)\n",
            cv.scheme,
            cv.folds.len()
        );
        let failed = cv.folds.iter().filter(|f| f.failure.is_some()).count();
        if failed > 0 {
            let _ = writeln!(s, "{failed} folds had a single training class and are excluded.\n");
        }
        match (&cv.accuracy, &cv.kappa) {
            (Some(a), k) => {
                let _ = writeln!(s, "| | Accuracy | Kappa |\n|---:|:---|:---|");
                let k = k.as_ref();
                let rows: [(&str, Pick); 6] = [
                    ("Min.", |x| x.min),
                    ("1st Qu.", |x| x.q1),
                    ("Median", |x| x.median),
                    ("Mean", |x| x.mean),
                    ("3rd Qu.", |x| x.q3),
                    ("Max.", |x| x.max),
                ];
                for (name, get) in rows {
                    let _ = writeln!(s, "| {name} | {:.4} | {} |", get(a), num(k.map(get)));
                }
            }
            (None, _) => {
                let _ = writeln!(s, "No fold completed.");
            }
        }
    }

    if let Some(t) = ablation {
        let _ = writeln!(s, "\n## Model metrics for feature subsets\n");
        let _ = writeln!(s, "| Model | Accuracy | Kappa | Sensitivity | Specificity | F1 |");
        let _ = writeln!(s, "|:---|---:|---:|---:|---:|---:|");
        for row in &t.rows {
            let r = &row.report;
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                row.model,
                pct(Some(r.accuracy)),
                pct(r.kappa),
                pct(r.sensitivity),
                pct(r.specificity),
                pct(r.f1)
            );
        }
        let _ = writeln!(
            s,
            "\nSensitivity and specificity take \"stressed\" as the positive class, so the \
             majority predictor scores sensitivity 0 and specificity 100."
        );
    }
    s
}
