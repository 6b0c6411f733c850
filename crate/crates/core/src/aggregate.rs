//! Candidate feature matrix: second-order statistics over intra-day sample
//! sets, backward-moving-window statistics over daily scalars, context
//! scalars, and train-fitted imputation plus z-scoring.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{context_features, label_stress, DailyBasicFeatures, LabelScheme, StatStyle};
use crate::ingest::SubjectDataset;
use crate::matrix::Matrix;
use crate::stats;

/// Quantile levels reported by every [`StatSet`].
pub const QUANTILE_LEVELS: [f64; 6] = [0.50, 0.68, 0.75, 0.90, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stat {
    Mean,
    Median,
    Min,
    Max,
    Variance,
    Std,
    Q50,
    Q68,
    Q75,
    Q90,
    Q95,
    Q99,
}

impl Stat {
    pub const ALL: [Stat; 12] = [
        Stat::Mean,
        Stat::Median,
        Stat::Min,
        Stat::Max,
        Stat::Variance,
        Stat::Std,
        Stat::Q50,
        Stat::Q68,
        Stat::Q75,
        Stat::Q90,
        Stat::Q95,
        Stat::Q99,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stat::Mean => "Mean",
            Stat::Median => "Median",
            Stat::Min => "Min",
            Stat::Max => "Max",
            Stat::Variance => "Variance",
            Stat::Std => "Std",
            Stat::Q50 => "Q50",
            Stat::Q68 => "Q68",
            Stat::Q75 => "Q75",
            Stat::Q90 => "Q90",
            Stat::Q95 => "Q95",
            Stat::Q99 => "Q99",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSet {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub variance: f64,
    pub std: f64,
    /// Nearest-rank quantiles at [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 6],
}

impl StatSet {
    pub fn get(&self, s: Stat) -> f64 {
        match s {
            Stat::Mean => self.mean,
            Stat::Median => self.median,
            Stat::Min => self.min,
            Stat::Max => self.max,
            Stat::Variance => self.variance,
            Stat::Std => self.std,
            Stat::Q50 => self.quantiles[0],
            Stat::Q68 => self.quantiles[1],
            Stat::Q75 => self.quantiles[2],
            Stat::Q90 => self.quantiles[3],
            Stat::Q95 => self.quantiles[4],
            Stat::Q99 => self.quantiles[5],
        }
    }
}

/// Second-order statistics of a sample set; `None` for an empty input.
pub fn second_order(samples: &[f64]) -> Option<StatSet> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let variance = stats::variance(&sorted);
    Some(StatSet {
        mean: stats::mean(&sorted),
        median: stats::sorted_median(&sorted),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        variance,
        std: variance.sqrt(),
        quantiles: QUANTILE_LEVELS.map(|q| stats::nearest_rank(&sorted, q)),
    })
}

/// Backward-moving-window statistics: entry `t` summarizes the present values
/// among days `t - w + 1 ..= t`.
pub fn windowed(series: &[Option<f64>], w: usize) -> Vec<Option<StatSet>> {
    assert!(w >= 1, "window must cover at least one day");
    (0..series.len())
        .map(|t| {
            let from = (t + 1).saturating_sub(w);
            let vals: Vec<f64> = series[from..=t].iter().flatten().copied().collect();
            second_order(&vals)
        })
        .collect()
}

/// The 32 feature names of the reference selection; every one must be a
/// column of the assembled matrix.
pub const REFERENCE_FEATURES: [&str; 32] = [
    "personality.Conscientiousness",
    "personality.Agreeableness",
    "personality.Neuroticism",
    "personality.Openness",
    "personality.Extraversion",
    "weather.MeanTemperature",
    "sms.RepliedEvents.Latency.Median",
    "weather.Humidity",
    "sms.AllEventsPerDay",
    "bluetooth.Q95TimeForWhichIdSeen",
    "bluetooth.MaxTimeForWhichIdSeen",
    "sms.IncomingAndOutgoingPerDay",
    "weather.Visibility",
    "weather.WindSpeed",
    "bluetooth.Q90TimeForWhichIdSeen",
    "bluetooth.TotalEntropyShannon",
    "call.EntropyMillerMadowOutgoingTotal",
    "call.EntropyShannonOutgoingAndIncomingTotal",
    "bluetooth.TotalEntropyMillerMadow",
    "bluetooth.IdsMoreThan09TimeSlotsSeen",
    "bluetooth.IdsMoreThan04TimeSlotsSeen",
    "call.EntropyShannonMissedOutgoingTotal",
    "bluetooth.IdsMoreThan19TimeSlotsSeen",
    "call.EntropyShannonOutgoingTotal",
    "bluetooth.Q75TimeForWhichIdSeen",
    "call.EntropyMillerMadowMissedOutgoingTotal",
    "call.EntropyMillerMadowOutgoingAndIncomingTotal",
    "sms.OutgoingAndIncomingTotalEntropyMillerMadow",
    "sms.OutgoingTotalEntropyMillerMadow",
    "bluetooth.Q50TimeForWhichIdSeen",
    "bluetooth.Q68TimeForWhichIdSeen",
    "sms.OutgoingTotalEntropyShannon",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Weather,
    Personality,
    Phone,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Weather, Family::Personality, Family::Phone];

    pub fn name(self) -> &'static str {
        match self {
            Family::Weather => "weather",
            Family::Personality => "personality",
            Family::Phone => "phone",
        }
    }

    /// Family of a canonical column name, from the prefix before the first dot.
    pub fn of(column: &str) -> Option<Family> {
        match column.split('.').next()? {
            "weather" => Some(Family::Weather),
            "personality" => Some(Family::Personality),
            "call" | "sms" | "bluetooth" | "phone" => Some(Family::Phone),
            _ => None,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weather" => Ok(Family::Weather),
            "personality" => Ok(Family::Personality),
            "phone" => Ok(Family::Phone),
            other => Err(Error::invalid(format!("unknown feature family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembleConfig {
    /// Backward window lengths in days.
    pub window_days: Vec<usize>,
    /// Statistics emitted per daily scalar and window.
    pub window_stats: Vec<Stat>,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self {
            window_days: vec![2, 3],
            window_stats: vec![Stat::Mean, Stat::Min, Stat::Max, Stat::Std],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub subject_id: String,
    pub date: NaiveDate,
    /// Self-reported stress on the 1..7 scale.
    pub score: u8,
}

/// Per-column imputation value and z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub impute: f64,
    pub center: f64,
    /// Zero marks a constant column, which maps to 0.
    pub scale: f64,
}

/// Subject-day rows by named feature columns. Missing cells are `NaN` until
/// normalization imputes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<RowMeta>,
    pub values: Matrix,
    pub scaling: Option<Vec<ColumnScaling>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self, scheme: LabelScheme) -> Vec<i8> {
        self.rows
            .iter()
            .map(|r| label_stress(r.score, scheme).expect("scores validated at ingest"))
            .collect()
    }

    pub fn binary_labels(&self) -> Vec<i8> {
        self.labels(LabelScheme::Binary)
    }

    pub fn ternary_labels(&self) -> Vec<i8> {
        self.labels(LabelScheme::Ternary)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Column indices belonging to any of `families`, in column order.
    pub fn family_columns(&self, families: &[Family]) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| Family::of(c).is_some_and(|f| families.contains(&f)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            rows: self.rows.clone(),
            values: self.values.select_cols(cols),
            scaling: self
                .scaling
                .as_ref()
                .map(|s| cols.iter().map(|&j| s[j].clone()).collect()),
        }
    }

    pub fn select_columns_by_name(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::invalid(format!("unknown feature column {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&idx))
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            values: self.values.select_rows(idx),
            scaling: self.scaling.clone(),
        }
    }

    /// Writes `subject_id,date,label,stress_score,<features...>` with the
    /// binary label; missing cells are written as `NA`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(f));
        let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut header = vec!["subject_id", "date", "label", "stress_score"];
        header.extend(self.columns.iter().map(String::as_str));
        w.write_record(&header).map_err(wrap)?;
        let labels = self.binary_labels();
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for (i, meta) in self.rows.iter().enumerate() {
            rec.clear();
            rec.push(meta.subject_id.clone());
            rec.push(meta.date.to_string());
            rec.push(labels[i].to_string());
            rec.push(meta.score.to_string());
            rec.extend(
                self.values
                    .row(i)
                    .iter()
                    .map(|v| if v.is_nan() { "NA".to_string() } else { v.to_string() }),
            );
            w.write_record(&rec).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let file = path.display().to_string();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        // `#` lines carry provenance stamps
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(std::io::BufReader::new(f));
        let parse_err = |line: u64, message: String| Error::Parse {
            file: file.clone(),
            line,
            message,
        };
        let header = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let meta = ["subject_id", "date", "label", "stress_score"];
        if header.len() < meta.len() || header.iter().take(4).ne(meta.iter().copied()) {
            return Err(parse_err(
                1,
                "feature matrix header must start with subject_id,date,label,stress_score".into(),
            ));
        }
        let columns: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut data = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
                .map_err(|_| parse_err(line, format!("invalid date {:?}", &rec[1])))?;
            let score: u8 = rec[3]
                .parse()
                .map_err(|_| parse_err(line, format!("invalid stress score {:?}", &rec[3])))?;
            label_stress(score, LabelScheme::Binary).map_err(|e| parse_err(line, e.to_string()))?;
            rows.push(RowMeta {
                subject_id: rec[0].to_string(),
                date,
                score,
            });
            for v in rec.iter().skip(4) {
                data.push(if v == "NA" {
                    f64::NAN
                } else {
                    v.parse().map_err(|_| parse_err(line, format!("invalid value {v:?}")))?
                });
            }
        }
        let n = rows.len();
        Ok(FeatureMatrix {
            values: Matrix::new(n, columns.len(), data),
            columns,
            rows,
            scaling: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub subject_id: String,
    pub date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleReport {
    pub n_columns: usize,
    pub n_rows: usize,
    pub dropped: Vec<DroppedRow>,
}

/// Builds the candidate feature matrix from per-day basic features.
///
/// Columns, sorted by name: every daily scalar; the second-order expansion of
/// every intra-day sample set; windowed statistics of every daily scalar; and
/// the weather and personality scalars. One row per labeled subject-day.
pub fn assemble(
    daily: &[DailyBasicFeatures],
    dataset: &SubjectDataset,
    cfg: &AssembleConfig,
) -> Result<(FeatureMatrix, AssembleReport)> {
    let first = daily
        .first()
        .ok_or_else(|| Error::invalid("no subject-days to assemble"))?;
    let scalar_names: Vec<&String> = first.scalars.keys().collect();
    let sample_sets: Vec<(&String, StatStyle)> = first.samples.iter().map(|(k, s)| (k, s.style)).collect();

    let mut columns: Vec<String> = Vec::new();
    columns.extend(scalar_names.iter().map(|s| s.to_string()));
    for (set, style) in &sample_sets {
        columns.extend(Stat::ALL.iter().map(|s| style.name(set, s.name())));
    }
    for name in &scalar_names {
        for &w in &cfg.window_days {
            for s in &cfg.window_stats {
                columns.push(window_column(name, *s, w));
            }
        }
    }
    columns.extend(crate::features::WEATHER_FEATURES.iter().map(|s| s.to_string()));
    columns.extend(crate::features::PERSONALITY_FEATURES.iter().map(|s| s.to_string()));
    columns.sort();
    let before = columns.len();
    columns.dedup();
    if columns.len() != before {
        return Err(Error::invalid("feature names collide"));
    }
    let index: BTreeMap<&str, usize> = columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let p = columns.len();

    let mut rows = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let mut dropped = Vec::new();

    for subject in daily.chunk_by(|a, b| a.subject_id == b.subject_id) {
        let id = &subject[0].subject_id;
        let Some(rec) = dataset.subjects.get(id) else {
            continue;
        };
        let windows: Vec<Vec<Vec<Option<StatSet>>>> = scalar_names
            .iter()
            .map(|name| {
                let series: Vec<Option<f64>> = subject.iter().map(|d| d.scalar(name)).collect();
                cfg.window_days.iter().map(|&w| windowed(&series, w)).collect()
            })
            .collect();

        for (t, day) in subject.iter().enumerate() {
            let Some(date) = day.date else { continue };
            let Some(score) = rec.stress_on(date) else { continue };
            let context = match context_features(dataset.weather.get(&date), rec.personality.as_ref()) {
                Ok(c) => c,
                Err(e) => {
                    dropped.push(DroppedRow {
                        subject_id: id.clone(),
                        date,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let mut row = vec![f64::NAN; p];
            for (name, v) in &day.scalars {
                row[index[name.as_str()]] = v.unwrap_or(f64::NAN);
            }
            for (set, samples) in &day.samples {
                if let Some(st) = second_order(&samples.values) {
                    for s in Stat::ALL {
                        row[index[samples.style.name(set, s.name()).as_str()]] = st.get(s);
                    }
                }
            }
            for (k, name) in scalar_names.iter().enumerate() {
                for (wi, &w) in cfg.window_days.iter().enumerate() {
                    if let Some(st) = &windows[k][wi][t] {
                        for &s in &cfg.window_stats {
                            row[index[window_column(name, s, w).as_str()]] = st.get(s);
                        }
                    }
                }
            }
            for (name, v) in context {
                row[index[name.as_str()]] = v;
            }
            data.extend_from_slice(&row);
            rows.push(RowMeta {
                subject_id: id.clone(),
                date,
                score,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("no labeled subject-days with feature data"));
    }
    let report = AssembleReport {
        n_columns: p,
        n_rows: rows.len(),
        dropped,
    };
    let n = rows.len();
    Ok((
        FeatureMatrix {
            columns,
            rows,
            values: Matrix::new(n, p, data),
            scaling: None,
        },
        report,
    ))
}

fn window_column(scalar: &str, stat: Stat, w: usize) -> String {
    format!("{scalar}.{}.W{w}", stat.name())
}

/// Fits median imputation and z-score parameters on `train_rows`.
pub fn fit_scaling(values: &Matrix, train_rows: &[usize]) -> Result<Vec<ColumnScaling>> {
    if train_rows.is_empty() {
        return Err(Error::invalid("normalization needs at least one training row"));
    }
    Ok((0..values.n_cols())
        .map(|j| {
            let mut present: Vec<f64> = train_rows
                .iter()
                .map(|&i| values.get(i, j))
                .filter(|v| !v.is_nan())
                .collect();
            present.sort_by(f64::total_cmp);
            let impute = if present.is_empty() {
                0.0
            } else {
                stats::sorted_median(&present)
            };
            let filled: Vec<f64> = train_rows
                .iter()
                .map(|&i| {
                    let v = values.get(i, j);
                    if v.is_nan() {
                        impute
                    } else {
                        v
                    }
                })
                .collect();
            let center = stats::mean(&filled);
            let sd = stats::variance(&filled).sqrt();
            let scale = if sd > 1e-12 * center.abs().max(1.0) { sd } else { 0.0 };
            ColumnScaling { impute, center, scale }
        })
        .collect())
}

pub fn apply_scaling(values: &Matrix, scaling: &[ColumnScaling]) -> Matrix {
    assert_eq!(values.n_cols(), scaling.len());
    let mut out = values.clone();
    for i in 0..out.n_rows() {
        for (v, s) in out.row_mut(i).iter_mut().zip(scaling) {
            let x = if v.is_nan() { s.impute } else { *v };
            *v = if s.scale > 0.0 { (x - s.center) / s.scale } else { 0.0 };
        }
    }
    out
}

/// Imputes and z-scores every row with parameters fitted on `train_rows` only.
pub fn normalize_fit_transform(m: &FeatureMatrix, train_rows: &[usize]) -> Result<FeatureMatrix> {
    let scaling = fit_scaling(&m.values, train_rows)?;
    Ok(FeatureMatrix {
        columns: m.columns.clone(),
        rows: m.rows.clone(),
        values: apply_scaling(&m.values, &scaling),
        scaling: Some(scaling),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_stats() {
        let s = second_order(&[7.0]).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max, s.variance), (7.0, 7.0, 7.0, 7.0, 0.0));
        assert_eq!(s.get(Stat::Q95), 7.0);
        assert!(second_order(&[]).is_none());
    }

    #[test]
    fn hundred_values_nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = second_order(&xs).unwrap();
        assert_eq!(s.get(Stat::Q95), 95.0);
        assert_eq!(s.get(Stat::Q50), 50.0);
        assert_eq!(s.median, 50.5);
        assert_eq!(s.get(Stat::Q99), 99.0);
    }

    #[test]
    fn window_hand_values() {
        let series = [Some(2.0), Some(4.0), Some(6.0)];
        let w = windowed(&series, 2);
        let day3 = w[2].as_ref().unwrap();
        assert_eq!((day3.mean, day3.min, day3.max), (5.0, 4.0, 6.0));
        let w3 = windowed(&series, 3);
        assert_eq!(w3[0].as_ref().unwrap(), &second_order(&[2.0]).unwrap());
    }

    #[test]
    fn window_skips_missing_days() {
        let series = [Some(1.0), None, Some(5.0), None];
        let w = windowed(&series, 2);
        assert_eq!(w[1].as_ref().unwrap().mean, 1.0);
        assert_eq!(w[2].as_ref().unwrap().mean, 5.0);
        let w1 = windowed(&[None, None], 2);
        assert!(w1.iter().all(Option::is_none));
    }

    #[test]
    fn one_day_window_is_the_series() {
        let series = [Some(3.0), Some(-1.5), None, Some(8.0)];
        for (x, s) in series.iter().zip(windowed(&series, 1)) {
            assert_eq!(x.is_some(), s.is_some());
            if let (Some(x), Some(s)) = (x, s) {
                assert_eq!(s.mean, *x);
                assert_eq!(s.get(Stat::Q99), *x);
                assert_eq!(s.variance, 0.0);
            }
        }
    }

    #[test]
    fn constant_series_window() {
        for s in windowed(&[Some(4.0); 6], 3).into_iter().flatten() {
            assert_eq!(s.variance, 0.0);
            for st in Stat::ALL {
                if st != Stat::Variance && st != Stat::Std {
                    assert_eq!(s.get(st), 4.0);
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn stat_set_invariants(mut xs in proptest::collection::vec(-1e6f64..1e6, 1..80), rot in 0usize..80) {
            let s = second_order(&xs).unwrap();
            for q in s.quantiles {
                proptest::prop_assert!(s.min <= q && q <= s.max);
            }
            proptest::prop_assert!(s.variance >= 0.0);
            proptest::prop_assert_eq!(s.std, s.variance.sqrt());
            let r = rot % xs.len();
            xs.rotate_left(r);
            xs.reverse();
            let t = second_order(&xs).unwrap();
            proptest::prop_assert_eq!(s.quantiles, t.quantiles);
            proptest::prop_assert_eq!((s.min, s.max, s.median), (t.min, t.max, t.median));
            proptest::prop_assert!((s.mean - t.mean).abs() <= 1e-9 * s.mean.abs().max(1.0));
        }
    }

    fn tiny_matrix(col: &[f64]) -> FeatureMatrix {
        let n = col.len();
        FeatureMatrix {
            columns: vec!["x".into(), "c".into()],
            rows: (0..n)
                .map(|i| RowMeta {
                    subject_id: format!("s{i}"),
                    date: NaiveDate::from_ymd_opt(2011, 1, 1).unwrap(),
                    score: 3,
                })
                .collect(),
            values: Matrix::new(n, 2, col.iter().flat_map(|&v| [v, 5.0]).collect()),
            scaling: None,
        }
    }

    #[test]
    fn z_score_from_train_rows() {
        // train values 8 and 12: mean 10, population sd 2
        let m = tiny_matrix(&[8.0, 12.0, 14.0]);
        let z = normalize_fit_transform(&m, &[0, 1]).unwrap();
        assert_eq!(z.values.get(2, 0), 2.0);
        assert_eq!(z.values.get(0, 0), -1.0);
        // constant column maps to zero
        assert!(z.values.column(1).all(|v| v == 0.0));
        assert!(normalize_fit_transform(&m, &[]).is_err());
    }

    #[test]
    fn missing_values_get_train_median() {
        let m = tiny_matrix(&[1.0, 2.0, 9.0, f64::NAN, 100.0]);
        let s = fit_scaling(&m.values, &[0, 1, 2, 3]).unwrap();
        assert_eq!(s[0].impute, 2.0);
        let z = normalize_fit_transform(&m, &[0, 1, 2, 3]).unwrap();
        assert_eq!(z.values.get(3, 0), z.values.get(1, 0));
    }

    proptest::proptest! {
        #[test]
        fn train_columns_are_standardized(
            col in proptest::collection::vec(-100f64..100.0, 4..60),
            test_tail in proptest::collection::vec(-1e4f64..1e4, 0..10),
        ) {
            let n_train = col.len();
            let mut all = col.clone();
            all.extend(&test_tail);
            let m = tiny_matrix(&all);
            let train: Vec<usize> = (0..n_train).collect();
            let z = normalize_fit_transform(&m, &train).unwrap();
            // parameters depend on training rows only
            let alone = fit_scaling(&m.values.select_rows(&train), &train).unwrap();
            proptest::prop_assert_eq!(z.scaling.as_ref().unwrap(), &alone);
            let s = &alone[0];
            if s.scale > 0.0 {
                let zs: Vec<f64> = train.iter().map(|&i| z.values.get(i, 0)).collect();
                proptest::prop_assert!(stats::mean(&zs).abs() < 1e-9);
                proptest::prop_assert!((stats::variance(&zs).sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn families_from_prefix() {
        assert_eq!(Family::of("weather.Humidity"), Some(Family::Weather));
        assert_eq!(Family::of("personality.Openness"), Some(Family::Personality));
        assert_eq!(Family::of("bluetooth.Q50TimeForWhichIdSeen"), Some(Family::Phone));
        assert_eq!(Family::of("phone.InterEventTime.Mean"), Some(Family::Phone));
        assert_eq!(Family::of("other.X"), None);
    }
}
