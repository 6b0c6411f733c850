//! Seeded synthetic cohort with a planted stress signal.
//!
//! Daily latent stress is `z = w_p*P + w_w*W + w_b*B + noise*eps + bias`,
//! where `P` is a per-subject trait combination, `W` a per-day weather
//! combination and `B` a per-subject AR(1) activity level. The reported score
//! is `1 + min(6, floor(7 * logistic(z)))`, and `bias` is chosen so that the
//! configured share of reported scores exceeds 4.
//!
//! Call, SMS and Bluetooth volumes depend on `B` and extraversion only, and
//! extraversion does not enter `P`, so phone features carry stress signal
//! exactly when `w_b != 0`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::ingest::{
    emit_logs, BluetoothScan, CallDirection, CallRecord, LogPaths, PersonalityProfile, SmsDirection, SmsRecord,
    StressReport, StudyClock, StudyWindow, SubjectDataset, SubjectRecords, WeatherDay,
};
use crate::matrix::Matrix;
use crate::stats;

pub const COHORT_CONFIG_FILE: &str = "cohort.toml";
pub const COHORT_MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_subjects: usize,
    pub n_days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    pub personality_weight: f64,
    pub weather_weight: f64,
    pub behavior_weight: f64,
    pub noise: f64,
    /// Share of reported days scored above 4.
    pub stressed_share: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_subjects: 111,
            n_days: 180,
            start: NaiveDate::from_ymd_opt(2010, 11, 12).expect("valid date"),
            seed: 2011,
            personality_weight: 1.0,
            weather_weight: 1.3,
            behavior_weight: 1.3,
            noise: 0.35,
            stressed_share: 0.3616,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.personality_weight,
            self.weather_weight,
            self.behavior_weight,
            self.noise,
        ];
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cohort weights must be finite"));
        }
        if self.noise < 0.0 {
            return Err(Error::invalid("noise level must be nonnegative"));
        }
        if self.n_subjects < 2 {
            return Err(Error::invalid("a cohort needs at least 2 subjects"));
        }
        if self.n_days < REPORT_LEAD_IN {
            return Err(Error::invalid(format!("a cohort needs at least {REPORT_LEAD_IN} days")));
        }
        if !(self.stressed_share > 0.0 && self.stressed_share < 1.0) {
            return Err(Error::invalid("stressed share must be in (0, 1)"));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::NoSignal);
        }
        Ok(())
    }

    pub fn window(&self) -> StudyWindow {
        StudyWindow {
            start: self.start,
            end: self.start + Days::new(self.n_days as u64 - 1),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cohort config: {e}")))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::invalid(format!("cohort config: {e}")))
    }
}

/// Latent state of one subject-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTruth {
    pub subject_id: String,
    pub date: NaiveDate,
    pub reported: bool,
    /// Weighted channel contributions to the latent value.
    pub personality: f64,
    pub weather: f64,
    pub behavior: f64,
    pub noise: f64,
    /// `personality + weather + behavior + noise + bias`.
    pub latent: f64,
    /// `logistic(latent)`.
    pub stress: f64,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bias: f64,
    pub days: Vec<DayTruth>,
}

impl DayTruth {
    /// Channel with the largest absolute contribution.
    pub fn dominant_channel(&self) -> &'static str {
        [
            ("personality", self.personality),
            ("weather", self.weather),
            ("behavior", self.behavior),
        ]
        .into_iter()
        .fold(("personality", f64::NEG_INFINITY), |b, (n, v)| {
            if v.abs() > b.1 {
                (n, v.abs())
            } else {
                b
            }
        })
        .0
    }
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Stress score 1..=7 from a value in (0, 1).
pub fn discretize(s: f64) -> u8 {
    1 + (7.0 * s).floor().clamp(0.0, 6.0) as u8
}

const REPORT_LEAD_IN: usize = 14;
const REPORT_STOP: f64 = 0.08;
const REPORT_RESUME: f64 = 0.25;
const AR_RHO: f64 = 0.4;
const CONTACTS: u64 = 25;
const DEVICES: u64 = 40;
const TRAIT_STEP: f64 = 0.125;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn standardize(xs: &mut [f64]) {
    let m = stats::mean(xs);
    let sd = stats::variance(xs).sqrt();
    for x in xs.iter_mut() {
        *x = if sd > 0.0 { (*x - m) / sd } else { 0.0 };
    }
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

fn weather_series(cfg: &CohortConfig) -> (Vec<WeatherDay>, Vec<f64>) {
    let mut rng = stream(cfg.seed, 0);
    let mut anomaly = 0.0;
    let days: Vec<WeatherDay> = (0..cfg.n_days)
        .map(|d| {
            let date = cfg.start + Days::new(d as u64);
            let phase = 2.0 * std::f64::consts::PI * (date.ordinal() as f64 - 196.0) / 365.25;
            anomaly = 0.6 * anomaly + 0.8 * gauss(&mut rng);
            let temp = 12.0 + 9.0 * phase.cos() + 3.0 * anomaly;
            let pressure = 1013.0 - 6.0 * anomaly + 4.0 * gauss(&mut rng);
            let wet: f64 = rng.random();
            let precipitation = if wet < 0.35 {
                -8.0 * (1.0 - rng.random::<f64>()).ln()
            } else {
                0.0
            };
            let humidity = (72.0 + 8.0 * anomaly + 6.0 * gauss(&mut rng) + precipitation).clamp(20.0, 100.0);
            let visibility = (10.0 - 0.4 * precipitation + gauss(&mut rng)).clamp(0.5, 10.0);
            let wind_speed = (14.0 + 5.0 * anomaly.abs() + 4.0 * gauss(&mut rng)).max(0.0);
            WeatherDay {
                date,
                mean_temperature: round_to(temp, 0.1),
                pressure: round_to(pressure, 0.1),
                precipitation: round_to(precipitation, 0.1),
                humidity: round_to(humidity, 0.1),
                visibility: round_to(visibility, 0.1),
                wind_speed: round_to(wind_speed, 0.1),
            }
        })
        .collect();
    let mut cols: Vec<Vec<f64>> = vec![
        days.iter().map(|w| w.mean_temperature).collect(),
        days.iter().map(|w| w.pressure).collect(),
        days.iter().map(|w| w.precipitation).collect(),
        days.iter().map(|w| w.humidity).collect(),
        days.iter().map(|w| w.wind_speed).collect(),
    ];
    cols.iter_mut().for_each(|c| standardize(c));
    let weights = [-0.6, -0.5, 0.4, 0.3, 0.3];
    let mut w: Vec<f64> = (0..cfg.n_days)
        .map(|d| weights.iter().zip(&cols).map(|(a, c)| a * c[d]).sum())
        .collect();
    standardize(&mut w);
    (days, w)
}

fn subject_id(i: usize) -> String {
    format!("s{:03}", i + 1)
}

fn personality_profiles(cfg: &CohortConfig) -> (Vec<PersonalityProfile>, Vec<f64>, Vec<f64>) {
    let mut rng = stream(cfg.seed, 1);
    let trait_value = |rng: &mut ChaCha8Rng| round_to((3.0 + 0.7 * gauss(rng)).clamp(1.0, 5.0), TRAIT_STEP);
    let profiles: Vec<PersonalityProfile> = (0..cfg.n_subjects)
        .map(|i| PersonalityProfile {
            subject_id: subject_id(i),
            extraversion: trait_value(&mut rng),
            neuroticism: trait_value(&mut rng),
            agreeableness: trait_value(&mut rng),
            conscientiousness: trait_value(&mut rng),
            openness: trait_value(&mut rng),
        })
        .collect();
    let mut p: Vec<f64> = profiles
        .iter()
        .map(|t| 0.6 * t.neuroticism - 0.5 * t.conscientiousness - 0.4 * t.agreeableness + 0.1 * t.openness)
        .collect();
    standardize(&mut p);
    let mut e: Vec<f64> = profiles.iter().map(|t| t.extraversion).collect();
    standardize(&mut e);
    (profiles, p, e)
}

/// Everything drawn for one subject before the cohort-wide bias is known.
struct SubjectDraw {
    records: SubjectRecords,
    behavior: Vec<f64>,
    eps: Vec<f64>,
    reported: Vec<bool>,
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    Poisson::new(lambda.max(1e-9)).expect("positive rate").sample(rng) as usize
}

fn time_of_day(rng: &mut ChaCha8Rng) -> i64 {
    if rng.random::<f64>() < 0.1 {
        rng.random_range(0..7 * 3600)
    } else {
        rng.random_range(7 * 3600..86_400)
    }
}

fn draw_subject(cfg: &CohortConfig, i: usize, extraversion: f64, profile: PersonalityProfile) -> SubjectDraw {
    let mut rng = stream(cfg.seed, 2 + i as u64);
    let id = subject_id(i);
    let clock = StudyClock::default();
    let contacts = Zipf::new(CONTACTS as f64, 1.1).expect("valid zipf");
    let devices = Zipf::new(DEVICES as f64, 0.9).expect("valid zipf");
    let innov = (1.0 - AR_RHO * AR_RHO).sqrt();
    let window_end = clock.day_start(cfg.start + Days::new(cfg.n_days as u64));

    let mut behavior = Vec::with_capacity(cfg.n_days);
    let mut eps = Vec::with_capacity(cfg.n_days);
    let mut reported = Vec::with_capacity(cfg.n_days);
    let mut b = gauss(&mut rng);
    let mut on = true;
    let mut calls = BTreeMap::new();
    let mut sms = BTreeMap::new();
    let mut bluetooth = BTreeMap::new();

    for d in 0..cfg.n_days {
        if d > 0 {
            b = AR_RHO * b + innov * gauss(&mut rng);
        }
        behavior.push(b);
        eps.push(gauss(&mut rng));
        if d >= REPORT_LEAD_IN {
            let flip: f64 = rng.random();
            on = if on { flip >= REPORT_STOP } else { flip < REPORT_RESUME };
        }
        reported.push(on);

        let day0 = clock.day_start(cfg.start + Days::new(d as u64));
        let activity = |scale: f64, ext: f64| (scale * b + ext * extraversion).exp();

        for _ in 0..poisson(&mut rng, 4.0 * activity(0.8, 0.3)) {
            let u: f64 = rng.random();
            let direction = if u < 0.45 {
                CallDirection::Incoming
            } else if u < 0.85 {
                CallDirection::Outgoing
            } else {
                CallDirection::Missed
            };
            let duration = if direction == CallDirection::Missed {
                0.0
            } else {
                (-120.0 * (1.0 - rng.random::<f64>()).ln()).round() + 1.0
            };
            let peer = format!("{id}-c{:02}", contacts.sample(&mut rng) as u64);
            let ts = day0 + time_of_day(&mut rng);
            calls.entry((ts, peer.clone(), direction)).or_insert(CallRecord {
                subject_id: id.clone(),
                timestamp: ts,
                direction,
                peer_id: peer,
                duration,
            });
        }

        for _ in 0..poisson(&mut rng, 6.0 * activity(0.8, 0.3)) {
            let peer = format!("{id}-c{:02}", contacts.sample(&mut rng) as u64);
            let ts = day0 + time_of_day(&mut rng);
            let incoming = rng.random::<f64>() < 0.55;
            let direction = if incoming {
                SmsDirection::Incoming
            } else {
                SmsDirection::Outgoing
            };
            let mut push = |ts: i64, direction: SmsDirection, peer: &str| {
                sms.entry((ts, peer.to_string(), direction)).or_insert(SmsRecord {
                    subject_id: id.clone(),
                    timestamp: ts,
                    direction,
                    peer_id: peer.to_string(),
                });
            };
            push(ts, direction, &peer);
            if incoming && rng.random::<f64>() < 0.45 {
                let delay = (-900.0 * (1.0 - rng.random::<f64>()).ln()).round() as i64 + 1;
                if ts + delay < window_end {
                    push(ts + delay, SmsDirection::Outgoing, &peer);
                }
            }
        }

        for _ in 0..poisson(&mut rng, 25.0 * activity(0.7, 0.2)) {
            let seen = format!("{id}-d{:02}", devices.sample(&mut rng) as u64);
            let ts = day0 + rng.random_range(0..288) * 300 + rng.random_range(0..20);
            let rssi = rng.random_range(0..=100);
            bluetooth.entry((ts, seen.clone())).or_insert(BluetoothScan {
                subject_id: id.clone(),
                timestamp: ts,
                seen_id: seen,
                rssi,
            });
        }
    }

    SubjectDraw {
        records: SubjectRecords {
            calls: calls.into_values().collect(),
            sms: sms.into_values().collect(),
            bluetooth: bluetooth.into_values().collect(),
            personality: Some(profile),
            stress: Vec::new(),
        },
        behavior,
        eps,
        reported,
    }
}

fn simulate(cfg: &CohortConfig) -> Result<(SubjectDataset, GroundTruth)> {
    cfg.validate()?;
    let (weather, w) = weather_series(cfg);
    let (profiles, p, e) = personality_profiles(cfg);
    let draws: Vec<SubjectDraw> = profiles
        .into_par_iter()
        .enumerate()
        .map(|(i, prof)| draw_subject(cfg, i, e[i], prof))
        .collect();

    let mut days = Vec::with_capacity(cfg.n_subjects * cfg.n_days);
    for (i, dr) in draws.iter().enumerate() {
        #[allow(clippy::needless_range_loop)]
        for d in 0..cfg.n_days {
            let personality = cfg.personality_weight * p[i];
            let weather = cfg.weather_weight * w[d];
            let behavior = cfg.behavior_weight * dr.behavior[d];
            let noise = cfg.noise * dr.eps[d];
            days.push(DayTruth {
                subject_id: subject_id(i),
                date: cfg.start + Days::new(d as u64),
                reported: dr.reported[d],
                personality,
                weather,
                behavior,
                noise,
                latent: personality + weather + behavior + noise,
                stress: 0.0,
                score: 0,
            });
        }
    }

    // place the cut between scores 4 and 5 at the requested quantile of the
    // reported days' latent values
    let mut reported: Vec<f64> = days.iter().filter(|t| t.reported).map(|t| t.latent).collect();
    reported.sort_by(f64::total_cmp);
    let n_stressed = (cfg.stressed_share * reported.len() as f64).round() as usize;
    let cut_index = reported.len() - n_stressed.clamp(1, reported.len() - 1);
    let cut = 0.5 * (reported[cut_index - 1] + reported[cut_index]);
    let bias = (4.0f64 / 3.0).ln() - cut;
    for t in &mut days {
        t.latent += bias;
        t.stress = logistic(t.latent);
        t.score = discretize(t.stress);
    }

    let mut subjects = BTreeMap::new();
    for (i, mut dr) in draws.into_iter().enumerate() {
        dr.records.stress = days[i * cfg.n_days..(i + 1) * cfg.n_days]
            .iter()
            .filter(|t| t.reported)
            .map(|t| StressReport {
                subject_id: t.subject_id.clone(),
                date: t.date,
                score: t.score,
            })
            .collect();
        subjects.insert(subject_id(i), dr.records);
    }
    let mut dataset = SubjectDataset {
        window: cfg.window(),
        clock: StudyClock::default(),
        weather: weather.into_iter().map(|w| (w.date, w)).collect(),
        subjects,
    };
    dataset.canonicalize();
    Ok((dataset, GroundTruth { bias, days }))
}

/// Generates all six streams for the configured cohort.
pub fn generate(cfg: &CohortConfig) -> Result<SubjectDataset> {
    simulate(cfg).map(|(d, _)| d)
}

/// Latent values and channel contributions behind [`generate`] for the same
/// config.
pub fn ground_truth(cfg: &CohortConfig) -> Result<GroundTruth> {
    simulate(cfg).map(|(_, t)| t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

/// Writes the six CSV streams, the config as TOML and a manifest into `dir`.
pub fn emit_cohort(cfg: &CohortConfig, dataset: &SubjectDataset, dir: &Path) -> Result<CohortManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = LogPaths::in_dir(dir);
    emit_logs(dataset, &paths)?;
    let cfg_path = dir.join(COHORT_CONFIG_FILE);
    std::fs::write(&cfg_path, cfg.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;
    let mut outputs = BTreeMap::new();
    for p in paths.all().into_iter().chain([cfg_path.as_path()]) {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        outputs.insert(name, digest::file_digest(p)?);
    }
    let manifest = CohortManifest {
        stage: "synth".into(),
        seed: cfg.seed,
        config_hash: digest::config_digest(cfg)?,
        outputs,
    };
    let mpath = dir.join(COHORT_MANIFEST_FILE);
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

/// A labeled table where feature 0 carries most of the signal, feature 1 a
/// weaker share, and the remaining columns are independent noise.
pub fn planted_table(rows: usize, features: usize, seed: u64) -> (Matrix, Vec<i32>) {
    assert!(features >= 2, "planted table needs at least two features");
    let mut rng = stream(seed, 0);
    let mut data = Vec::with_capacity(rows * features);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let row: Vec<f64> = (0..features).map(|_| gauss(&mut rng)).collect();
        let z = 1.6 * row[0] + 0.6 * row[1] + 0.6 * gauss(&mut rng) - 0.4;
        y.push(i32::from(z > 0.0));
        data.extend(row);
    }
    (Matrix::new(rows, features, data), y)
}

/// Distinct subject ids appearing in the truth rows.
pub fn truth_subjects(t: &GroundTruth) -> BTreeSet<&str> {
    t.days.iter().map(|d| d.subject_id.as_str()).collect()
}
