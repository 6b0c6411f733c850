//! Feature ranking by forest importance and top-k subset selection.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregate::FeatureMatrix;
use crate::error::{Error, Result};
use crate::forest::{self, ForestConfig};

pub const DEFAULT_K: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub forest: ForestConfig,
    /// Compute permutation importances too. Selection only needs Gini.
    pub permutation: bool,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            permutation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub mean_decrease_accuracy: f64,
    /// Aligned with `RankedFeatures::classes`.
    pub mean_decrease_accuracy_by_class: Vec<f64>,
    pub mean_decrease_gini: f64,
}

/// Every candidate column, ordered by mean decrease Gini (descending, ties
/// by name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeatures {
    pub classes: Vec<i32>,
    pub features: Vec<RankedFeature>,
}

fn descending(a: f64, b: f64, an: &str, bn: &str) -> Ordering {
    b.total_cmp(&a).then_with(|| an.cmp(bn))
}

impl RankedFeatures {
    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// The reporting view: ordered by mean decrease accuracy.
    pub fn by_accuracy(&self) -> Vec<&RankedFeature> {
        let mut v: Vec<&RankedFeature> = self.features.iter().collect();
        v.sort_by(|a, b| descending(a.mean_decrease_accuracy, b.mean_decrease_accuracy, &a.name, &b.name));
        v
    }

    /// 1-based position of `name` in the Gini ordering.
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name).map(|i| i + 1)
    }

    /// Writes the accuracy-ordered table with columns
    /// `Rank,Feature,<class...>,MeanDecreaseAccuracy,MeanDecreaseGini`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let mut header = vec!["Rank".to_string(), "Feature".to_string()];
        header.extend(self.classes.iter().map(|c| c.to_string()));
        header.extend(["MeanDecreaseAccuracy".to_string(), "MeanDecreaseGini".to_string()]);
        let csv_err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
        w.write_record(&header).map_err(csv_err)?;
        for (i, f) in self.by_accuracy().into_iter().enumerate() {
            let mut rec = vec![(i + 1).to_string(), f.name.clone()];
            rec.extend(f.mean_decrease_accuracy_by_class.iter().map(|v| v.to_string()));
            rec.push(f.mean_decrease_accuracy.to_string());
            rec.push(f.mean_decrease_gini.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Fits a ranking forest on `train` (already normalized, training rows only)
/// and ranks every column.
pub fn rank_features(train: &FeatureMatrix, labels: &[i8], cfg: &RankConfig) -> Result<RankedFeatures> {
    let y: Vec<i32> = labels.iter().map(|&l| l as i32).collect();
    let f = forest::fit_forest(&train.values, &y, &cfg.forest)?;
    let p = train.n_cols();
    let k = f.classes.len();
    let (mdg, mda, by_class) = if cfg.permutation {
        let imp = forest::importances(&f, &train.values, &y)?;
        (
            imp.mean_decrease_gini,
            imp.mean_decrease_accuracy,
            imp.mean_decrease_accuracy_by_class,
        )
    } else {
        (f.mean_decrease_gini(), vec![0.0; p], vec![vec![0.0; p]; k])
    };
    let mut features: Vec<RankedFeature> = (0..p)
        .map(|j| RankedFeature {
            name: train.columns[j].clone(),
            mean_decrease_accuracy: mda[j],
            mean_decrease_accuracy_by_class: (0..k).map(|c| by_class[c][j]).collect(),
            mean_decrease_gini: mdg[j],
        })
        .collect();
    features.sort_by(|a, b| descending(a.mean_decrease_gini, b.mean_decrease_gini, &a.name, &b.name));
    Ok(RankedFeatures {
        classes: f.classes,
        features,
    })
}

/// Names of the first `k` features in the Gini ordering.
pub fn select_top(r: &RankedFeatures, k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if k > r.features.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds {} ranked columns",
            r.features.len()
        )));
    }
    Ok(r.features[..k].iter().map(|f| f.name.clone()).collect())
}
