//! Per subject-day basic features: call and SMS usage, diversity, active
//! behaviour and regularity; Bluetooth proximity; weather and personality.
//!
//! Feature names follow a dotted `family.BasicName` scheme. Scalars that
//! cannot be computed for a day (zero denominators, empty distributions) are
//! stored as `None` and imputed later; they are never silently zero.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{miller_madow, shannon_ml, CountDistribution};
use crate::error::{Error, Result};
use crate::ingest::{
    filter_bluetooth, BluetoothScan, CallDirection, CallRecord, PersonalityProfile, SmsDirection, SmsRecord,
    SubjectDataset, WeatherDay,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Local hour at which "night" starts (inclusive).
    pub night_start_hour: u32,
    /// Local hour at which "night" ends (exclusive).
    pub night_end_hour: u32,
    /// A sent text answers the last received one within this many seconds.
    pub reply_window_seconds: i64,
    /// Bluetooth scan slot length.
    pub slot_seconds: i64,
    /// Percentages for "IDs accounting for n% of sightings".
    pub coverage_percents: Vec<u32>,
    /// Thresholds for "IDs seen for more than k slots".
    pub slot_thresholds: Vec<u32>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            night_start_hour: 22,
            night_end_hour: 7,
            reply_window_seconds: 3600,
            slot_seconds: 300,
            coverage_percents: vec![50, 80, 95],
            slot_thresholds: vec![4, 9, 19, 49],
        }
    }
}

impl FeatureConfig {
    fn is_night(&self, second_of_day: i64) -> bool {
        let h = (second_of_day / 3600) as u32;
        if self.night_start_hour > self.night_end_hour {
            h >= self.night_start_hour || h < self.night_end_hour
        } else {
            h >= self.night_start_hour && h < self.night_end_hour
        }
    }
}

/// How second-order statistic names are attached to a sample set's name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatStyle {
    /// `family.Basic.Stat`, e.g. `sms.RepliedEvents.Latency.Median`
    Suffix,
    /// `family.StatBasic`, e.g. `bluetooth.Q95TimeForWhichIdSeen`
    Prefix,
}

impl StatStyle {
    pub fn name(self, set: &str, stat: &str) -> String {
        match self {
            StatStyle::Suffix => format!("{set}.{stat}"),
            StatStyle::Prefix => match set.split_once('.') {
                Some((family, basic)) => format!("{family}.{stat}{basic}"),
                None => format!("{stat}{set}"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub style: StatStyle,
    pub values: Vec<f64>,
}

impl SampleSet {
    fn suffix(values: Vec<f64>) -> Self {
        Self {
            style: StatStyle::Suffix,
            values,
        }
    }
}

/// Basic features of one subject-day.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DailyBasicFeatures {
    pub subject_id: String,
    pub date: Option<NaiveDate>,
    pub scalars: BTreeMap<String, Option<f64>>,
    pub samples: BTreeMap<String, SampleSet>,
}

impl DailyBasicFeatures {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied().flatten()
    }

    fn put(&mut self, name: &str, v: Option<f64>) {
        let prev = self.scalars.insert(name.to_string(), v);
        debug_assert!(prev.is_none(), "duplicate scalar {name}");
    }

    fn count(&mut self, name: &str, n: usize) {
        self.put(name, Some(n as f64));
    }

    fn merge(&mut self, other: DailyBasicFeatures) {
        for (k, v) in other.scalars {
            self.put(&k, v);
        }
        self.samples.extend(other.samples);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplyStats {
    /// Fraction of received texts that were answered; `None` if none arrived.
    pub response_rate: Option<f64>,
    /// Seconds between each answered text and its reply.
    pub latencies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    #[default]
    Binary,
    Ternary,
}

/// Maps a 1..7 stress score to a class label.
///
/// Binary: `<= 4` is 0 ("not stressed"), `> 4` is 1. Ternary: `< 4` is -1,
/// `4` is 0 ("neutral"), `> 4` is 1.
pub fn label_stress(score: u8, scheme: LabelScheme) -> Result<i8> {
    if !(1..=7).contains(&score) {
        return Err(Error::invalid(format!("stress score {score} outside 1..7")));
    }
    Ok(match scheme {
        LabelScheme::Binary => i8::from(score > 4),
        LabelScheme::Ternary => (score as i8 - 4).signum(),
    })
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn percent(num: usize, den: usize) -> Option<f64> {
    ratio(num, den).map(|r| 100.0 * r)
}

fn entropies(d: &CountDistribution) -> (Option<f64>, Option<f64>) {
    (shannon_ml(d).ok(), miller_madow(d).ok())
}

fn inter_event(times: &mut [i64]) -> Vec<f64> {
    times.sort_unstable();
    times.windows(2).map(|w| (w[1] - w[0]) as f64).collect()
}

fn unique<'a>(peers: impl Iterator<Item = &'a str>) -> usize {
    peers.collect::<BTreeSet<_>>().len()
}

/// Greedy reply matching: a sent text answers the most recent text received
/// from the same peer if it follows within the reply window and that text
/// has not been answered yet. `history` holds texts before the day (used only
/// to find the "last received" text); statistics cover texts received in `day`.
pub fn sms_reply_stats(day: &[SmsRecord], history: &[SmsRecord], reply_window_seconds: i64) -> ReplyStats {
    // per peer: (received at, received today, already answered)
    let mut pending: HashMap<&str, (i64, bool, bool)> = HashMap::new();
    let mut received = 0usize;
    let mut answered = 0usize;
    let mut latencies = Vec::new();

    let mut events: Vec<(&SmsRecord, bool)> = history
        .iter()
        .map(|m| (m, false))
        .chain(day.iter().map(|m| (m, true)))
        .collect();
    events.sort_by_key(|(m, _)| (m.timestamp, m.direction));

    for (m, today) in events {
        match m.direction {
            SmsDirection::Incoming => {
                pending.insert(&m.peer_id, (m.timestamp, today, false));
                if today {
                    received += 1;
                }
            }
            SmsDirection::Outgoing => {
                if let Some((t, rx_today, done)) = pending.get_mut(m.peer_id.as_str()) {
                    let lag = m.timestamp - *t;
                    if !*done && lag <= reply_window_seconds {
                        *done = true;
                        if *rx_today {
                            answered += 1;
                            latencies.push(lag as f64);
                        }
                    }
                }
            }
        }
    }
    ReplyStats {
        response_rate: ratio(answered, received),
        latencies,
    }
}

/// One subject-day of phone events.
#[derive(Clone, Copy)]
pub struct DayEvents<'a> {
    pub calls: &'a [CallRecord],
    pub sms: &'a [SmsRecord],
    /// Texts preceding the day, at least the trailing reply window.
    pub sms_history: &'a [SmsRecord],
    /// Local second-of-day for a UTC timestamp.
    pub second_of_day: &'a dyn Fn(i64) -> i64,
}

/// Call and SMS basic features for one subject-day.
pub fn call_sms_basic(ev: DayEvents<'_>, cfg: &FeatureConfig) -> DailyBasicFeatures {
    let mut f = DailyBasicFeatures::default();
    let by = |d: CallDirection| ev.calls.iter().filter(move |c| c.direction == d);
    let n_in = by(CallDirection::Incoming).count();
    let n_out = by(CallDirection::Outgoing).count();
    let n_missed = by(CallDirection::Missed).count();
    let n_calls = ev.calls.len();

    f.count("call.AllEventsPerDay", n_calls);
    f.count("call.IncomingAndOutgoingPerDay", n_in + n_out);
    f.count("call.IncomingPerDay", n_in);
    f.count("call.OutgoingPerDay", n_out);
    f.count("call.MissedPerDay", n_missed);

    let answered = || ev.calls.iter().filter(|c| c.direction != CallDirection::Missed);
    let n_unique_answered = unique(answered().map(|c| c.peer_id.as_str()));
    f.count(
        "call.UniqueContactsOutgoing",
        unique(by(CallDirection::Outgoing).map(|c| c.peer_id.as_str())),
    );
    f.count(
        "call.UniqueContactsIncoming",
        unique(by(CallDirection::Incoming).map(|c| c.peer_id.as_str())),
    );
    f.count("call.UniqueContactsOutgoingAndIncoming", n_unique_answered);
    f.count(
        "call.UniqueContactsMissed",
        unique(by(CallDirection::Missed).map(|c| c.peer_id.as_str())),
    );

    let call_dists = [
        (
            "Outgoing",
            CountDistribution::from_keys(by(CallDirection::Outgoing).map(|c| &c.peer_id)),
        ),
        (
            "Incoming",
            CountDistribution::from_keys(by(CallDirection::Incoming).map(|c| &c.peer_id)),
        ),
        (
            "OutgoingAndIncoming",
            CountDistribution::from_keys(answered().map(|c| &c.peer_id)),
        ),
        (
            "MissedOutgoing",
            CountDistribution::from_keys(
                ev.calls
                    .iter()
                    .filter(|c| c.direction != CallDirection::Incoming)
                    .map(|c| &c.peer_id),
            ),
        ),
    ];
    for (name, d) in &call_dists {
        let (ml, mm) = entropies(d);
        f.put(&format!("call.EntropyShannon{name}Total"), ml);
        f.put(&format!("call.EntropyMillerMadow{name}Total"), mm);
    }
    f.put(
        "call.ContactsToInteractionsRatio",
        ratio(n_unique_answered, n_in + n_out),
    );
    f.put("call.OutgoingToIncomingRatio", ratio(n_out, n_in));
    f.put("call.MissedToIncomingAndOutgoingRatio", ratio(n_missed, n_in + n_out));
    let n_night = ev
        .calls
        .iter()
        .filter(|c| cfg.is_night((ev.second_of_day)(c.timestamp)))
        .count();
    f.put("call.PercentDuringNight", percent(n_night, n_calls));
    f.put("call.PercentInitiated", percent(n_out, n_calls));

    let sms_by = |d: SmsDirection| ev.sms.iter().filter(move |m| m.direction == d);
    let s_in = sms_by(SmsDirection::Incoming).count();
    let s_out = sms_by(SmsDirection::Outgoing).count();
    f.count("sms.AllEventsPerDay", ev.sms.len());
    f.count("sms.IncomingAndOutgoingPerDay", s_in + s_out);
    f.count("sms.IncomingPerDay", s_in);
    f.count("sms.OutgoingPerDay", s_out);
    f.count(
        "sms.UniqueContactsIncoming",
        unique(sms_by(SmsDirection::Incoming).map(|m| m.peer_id.as_str())),
    );
    f.count(
        "sms.UniqueContactsOutgoing",
        unique(sms_by(SmsDirection::Outgoing).map(|m| m.peer_id.as_str())),
    );
    let sms_dists = [
        (
            "Outgoing",
            CountDistribution::from_keys(sms_by(SmsDirection::Outgoing).map(|m| &m.peer_id)),
        ),
        (
            "Incoming",
            CountDistribution::from_keys(sms_by(SmsDirection::Incoming).map(|m| &m.peer_id)),
        ),
        (
            "OutgoingAndIncoming",
            CountDistribution::from_keys(ev.sms.iter().map(|m| &m.peer_id)),
        ),
    ];
    for (name, d) in &sms_dists {
        let (ml, mm) = entropies(d);
        f.put(&format!("sms.{name}TotalEntropyShannon"), ml);
        f.put(&format!("sms.{name}TotalEntropyMillerMadow"), mm);
    }
    f.put(
        "sms.ContactsToInteractionsRatio",
        ratio(unique(ev.sms.iter().map(|m| m.peer_id.as_str())), ev.sms.len()),
    );
    f.put("sms.OutgoingToIncomingRatio", ratio(s_out, s_in));
    f.put("sms.PercentInitiated", percent(s_out, ev.sms.len()));

    let replies = sms_reply_stats(ev.sms, ev.sms_history, cfg.reply_window_seconds);
    f.put("sms.ResponseRate", replies.response_rate);
    f.samples
        .insert("sms.RepliedEvents.Latency".into(), SampleSet::suffix(replies.latencies));

    let mut call_t: Vec<i64> = ev.calls.iter().map(|c| c.timestamp).collect();
    let mut sms_t: Vec<i64> = ev.sms.iter().map(|m| m.timestamp).collect();
    let mut all_t: Vec<i64> = call_t.iter().chain(&sms_t).copied().collect();
    f.samples.insert(
        "call.InterEventTime".into(),
        SampleSet::suffix(inter_event(&mut call_t)),
    );
    f.samples
        .insert("sms.InterEventTime".into(), SampleSet::suffix(inter_event(&mut sms_t)));
    f.samples.insert(
        "phone.InterEventTime".into(),
        SampleSet::suffix(inter_event(&mut all_t)),
    );
    f
}

/// Bluetooth proximity features for one subject-day of RSSI-filtered scans.
///
/// The day is cut into `slot_seconds` slots starting at `day_start`; an ID
/// seen several times within one slot counts as a single sighting.
pub fn bluetooth_basic(scans: &[BluetoothScan], day_start: i64, cfg: &FeatureConfig) -> DailyBasicFeatures {
    let slots_per_day = 86_400 / cfg.slot_seconds;
    let mut seen: BTreeMap<&str, BTreeSet<i64>> = BTreeMap::new();
    for s in scans {
        let slot = ((s.timestamp - day_start).div_euclid(cfg.slot_seconds)).clamp(0, slots_per_day - 1);
        seen.entry(&s.seen_id).or_default().insert(slot);
    }
    let mut counts: Vec<u64> = seen.values().map(|v| v.len() as u64).collect();
    let total: u64 = counts.iter().sum();

    let mut f = DailyBasicFeatures::default();
    f.count("bluetooth.NumberOfIds", counts.len());
    f.put(
        "bluetooth.MostCommonIdHits",
        Some(counts.iter().copied().max().unwrap_or(0) as f64),
    );
    let dist = CountDistribution::new(counts.clone());
    let (ml, mm) = entropies(&dist);
    f.put("bluetooth.TotalEntropyShannon", ml);
    f.put("bluetooth.TotalEntropyMillerMadow", mm);
    f.put(
        "bluetooth.ContactsToInteractionsRatio",
        ratio(counts.len(), total as usize),
    );

    for &k in &cfg.slot_thresholds {
        let n = counts.iter().filter(|&&c| c > k as u64).count();
        f.count(&format!("bluetooth.IdsMoreThan{k:02}TimeSlotsSeen"), n);
    }

    counts.sort_unstable_by(|a, b| b.cmp(a));
    for &pct in &cfg.coverage_percents {
        let mut cum = 0u64;
        let mut needed = 0usize;
        if total > 0 {
            for &c in &counts {
                cum += c;
                needed += 1;
                if 100 * cum >= pct as u64 * total {
                    break;
                }
            }
        }
        f.count(&format!("bluetooth.IdsAccountingFor{pct}PercentOfSightings"), needed);
    }

    f.samples.insert(
        "bluetooth.TimeForWhichIdSeen".into(),
        SampleSet {
            style: StatStyle::Prefix,
            values: counts.iter().map(|&c| c as f64).collect(),
        },
    );
    let mut times: Vec<i64> = scans.iter().map(|s| s.timestamp).collect();
    times.sort_unstable();
    times.dedup();
    f.samples.insert(
        "bluetooth.InterEventTime".into(),
        SampleSet::suffix(times.windows(2).map(|w| (w[1] - w[0]) as f64).collect()),
    );
    f
}

pub const WEATHER_FEATURES: [&str; 6] = [
    "weather.MeanTemperature",
    "weather.Pressure",
    "weather.Precipitation",
    "weather.Humidity",
    "weather.Visibility",
    "weather.WindSpeed",
];

pub const PERSONALITY_FEATURES: [&str; 5] = [
    "personality.Extraversion",
    "personality.Neuroticism",
    "personality.Agreeableness",
    "personality.Conscientiousness",
    "personality.Openness",
];

/// Same-day weather and the subject's trait scores as named scalars.
pub fn context_features(
    weather: Option<&WeatherDay>,
    traits: Option<&PersonalityProfile>,
) -> Result<BTreeMap<String, f64>> {
    let w = weather.ok_or_else(|| Error::invalid("no weather record for the day"))?;
    let p = traits.ok_or_else(|| Error::invalid("no personality profile for the subject"))?;
    let values = [
        w.mean_temperature,
        w.pressure,
        w.precipitation,
        w.humidity,
        w.visibility,
        w.wind_speed,
        p.extraversion,
        p.neuroticism,
        p.agreeableness,
        p.conscientiousness,
        p.openness,
    ];
    Ok(WEATHER_FEATURES
        .iter()
        .chain(PERSONALITY_FEATURES.iter())
        .zip(values)
        .map(|(k, v)| (k.to_string(), v))
        .collect())
}

fn day_slice<T>(records: &[T], ts: impl Fn(&T) -> i64, from: i64, to: i64) -> &[T] {
    let lo = records.partition_point(|r| ts(r) < from);
    let hi = records.partition_point(|r| ts(r) < to);
    &records[lo..hi]
}

/// Phone and proximity basic features for every roster subject and every day
/// of the study window, in (subject, date) order.
pub fn extract_daily(dataset: &SubjectDataset, roster: &[String], cfg: &FeatureConfig) -> Vec<DailyBasicFeatures> {
    let clock = dataset.clock;
    let days: Vec<NaiveDate> = dataset.window.days().collect();
    let second_of_day = move |ts: i64| clock.second_of_day(ts);
    roster
        .par_iter()
        .filter_map(|id| dataset.subjects.get(id).map(|rec| (id, rec)))
        .flat_map_iter(|(id, rec)| {
            let bt = filter_bluetooth(&rec.bluetooth);
            days.iter()
                .map(|&date| {
                    let start = clock.day_start(date);
                    let end = start + 86_400;
                    let ev = DayEvents {
                        calls: day_slice(&rec.calls, |c| c.timestamp, start, end),
                        sms: day_slice(&rec.sms, |m| m.timestamp, start, end),
                        sms_history: day_slice(&rec.sms, |m| m.timestamp, start - cfg.reply_window_seconds, start),
                        second_of_day: &second_of_day,
                    };
                    let mut f = call_sms_basic(ev, cfg);
                    f.merge(bluetooth_basic(day_slice(&bt, |b| b.timestamp, start, end), start, cfg));
                    f.subject_id = id.clone();
                    f.date = Some(date);
                    f
                })
                .collect::<Vec<_>>()
        })
        .collect()
}
