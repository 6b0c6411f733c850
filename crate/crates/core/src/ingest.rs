//! Parsing, validation and indexing of the six input CSV streams.
//!
//! Every stream has a fixed header. Records are grouped per subject and kept
//! in a canonical order (by timestamp, then identifiers) so that two datasets
//! holding the same record multisets compare equal.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CALLS_HEADER: [&str; 5] = ["subject_id", "timestamp", "direction", "peer_id", "duration"];
pub const SMS_HEADER: [&str; 4] = ["subject_id", "timestamp", "direction", "peer_id"];
pub const BLUETOOTH_HEADER: [&str; 4] = ["subject_id", "timestamp", "seen_id", "rssi"];
pub const WEATHER_HEADER: [&str; 7] = [
    "date",
    "mean_temperature",
    "pressure",
    "precipitation",
    "humidity",
    "visibility",
    "wind_speed",
];
pub const PERSONALITY_HEADER: [&str; 6] = [
    "subject_id",
    "extraversion",
    "neuroticism",
    "agreeableness",
    "conscientiousness",
    "openness",
];
pub const STRESS_HEADER: [&str; 3] = ["subject_id", "date", "score"];

/// Scans with a signal value below this are discarded.
pub const RSSI_FLOOR: i32 = 0;

/// Default number of consecutive reported days a subject needs.
pub const DEFAULT_MIN_CONSECUTIVE_DAYS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallDirection {
    Incoming,
    Outgoing,
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmsDirection {
    Incoming,
    Outgoing,
}

impl CallDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            CallDirection::Incoming => "incoming",
            CallDirection::Outgoing => "outgoing",
            CallDirection::Missed => "missed",
        }
    }
}

impl SmsDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            SmsDirection::Incoming => "incoming",
            SmsDirection::Outgoing => "outgoing",
        }
    }
}

impl FromStr for CallDirection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "incoming" => Ok(Self::Incoming),
            "outgoing" => Ok(Self::Outgoing),
            "missed" => Ok(Self::Missed),
            other => Err(format!("unknown call direction {other:?}")),
        }
    }
}

impl FromStr for SmsDirection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "incoming" => Ok(Self::Incoming),
            "outgoing" => Ok(Self::Outgoing),
            other => Err(format!("unknown sms direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub subject_id: String,
    pub timestamp: i64,
    pub direction: CallDirection,
    pub peer_id: String,
    /// Seconds; zero for missed calls.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsRecord {
    pub subject_id: String,
    pub timestamp: i64,
    pub direction: SmsDirection,
    pub peer_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BluetoothScan {
    pub subject_id: String,
    pub timestamp: i64,
    pub seen_id: String,
    pub rssi: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    pub mean_temperature: f64,
    pub pressure: f64,
    pub precipitation: f64,
    pub humidity: f64,
    pub visibility: f64,
    pub wind_speed: f64,
}

/// Big Five trait scores, each the mean of the (reverse-keyed where needed)
/// Likert items on a 1..5 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalityProfile {
    pub subject_id: String,
    pub extraversion: f64,
    pub neuroticism: f64,
    pub agreeableness: f64,
    pub conscientiousness: f64,
    pub openness: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StressReport {
    pub subject_id: String,
    pub date: NaiveDate,
    pub score: u8,
}

/// Inclusive range of calendar days covered by the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take_while(move |d| *d <= self.end)
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start).num_days() + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps UTC timestamps to study-local calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StudyClock {
    pub utc_offset_seconds: i32,
}

impl StudyClock {
    pub fn local_seconds(&self, ts: i64) -> i64 {
        ts + self.utc_offset_seconds as i64
    }

    pub fn local_date(&self, ts: i64) -> NaiveDate {
        let days = self.local_seconds(ts).div_euclid(86_400);
        epoch() + Duration::days(days)
    }

    /// Seconds since local midnight.
    pub fn second_of_day(&self, ts: i64) -> i64 {
        self.local_seconds(ts).rem_euclid(86_400)
    }

    /// UTC timestamp of local midnight starting `date`.
    pub fn day_start(&self, date: NaiveDate) -> i64 {
        (date - epoch()).num_days() * 86_400 - self.utc_offset_seconds as i64
    }
}

fn epoch() -> NaiveDate {
    DateTime::UNIX_EPOCH.date_naive()
}

/// All records of one subject, each list in canonical order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubjectRecords {
    pub calls: Vec<CallRecord>,
    pub sms: Vec<SmsRecord>,
    pub bluetooth: Vec<BluetoothScan>,
    pub personality: Option<PersonalityProfile>,
    pub stress: Vec<StressReport>,
}

impl SubjectRecords {
    pub fn stress_on(&self, date: NaiveDate) -> Option<u8> {
        self.stress
            .binary_search_by(|r| r.date.cmp(&date))
            .ok()
            .map(|i| self.stress[i].score)
    }
}

/// Immutable per-subject index of every input stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectDataset {
    pub window: StudyWindow,
    pub clock: StudyClock,
    pub weather: BTreeMap<NaiveDate, WeatherDay>,
    pub subjects: BTreeMap<String, SubjectRecords>,
}

impl SubjectDataset {
    pub fn roster(&self) -> Vec<String> {
        self.subjects.keys().cloned().collect()
    }

    /// Sorts every record list into canonical order. Generators that build a
    /// dataset by hand call this once before handing it out.
    pub fn canonicalize(&mut self) {
        for rec in self.subjects.values_mut() {
            rec.calls
                .sort_by(|a, b| call_key(a).cmp(&call_key(b)).then(a.duration.total_cmp(&b.duration)));
            rec.sms.sort_by(|a, b| sms_key(a).cmp(&sms_key(b)));
            rec.bluetooth
                .sort_by(|a, b| bt_key(a).cmp(&bt_key(b)).then(a.rssi.cmp(&b.rssi)));
            rec.stress.sort_by_key(|r| r.date);
        }
    }
}

fn call_key(r: &CallRecord) -> (&str, i64, &str, CallDirection) {
    (&r.subject_id, r.timestamp, &r.peer_id, r.direction)
}

fn sms_key(r: &SmsRecord) -> (&str, i64, &str, SmsDirection) {
    (&r.subject_id, r.timestamp, &r.peer_id, r.direction)
}

fn bt_key(r: &BluetoothScan) -> (&str, i64, &str) {
    (&r.subject_id, r.timestamp, &r.seen_id)
}

/// Locations of the six input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogPaths {
    pub calls: PathBuf,
    pub sms: PathBuf,
    pub bluetooth: PathBuf,
    pub weather: PathBuf,
    pub personality: PathBuf,
    pub stress: PathBuf,
}

impl LogPaths {
    /// The conventional file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            calls: d.join("calls.csv"),
            sms: d.join("sms.csv"),
            bluetooth: d.join("bluetooth.csv"),
            weather: d.join("weather.csv"),
            personality: d.join("personality.csv"),
            stress: d.join("stress.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 6] {
        [
            &self.calls,
            &self.sms,
            &self.bluetooth,
            &self.weather,
            &self.personality,
            &self.stress,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Records outside an explicit window are rejected. When absent the
    /// window spans the earliest to the latest day seen in any stream.
    pub window: Option<StudyWindow>,
    pub clock: StudyClock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamReport {
    pub stream: String,
    pub rows_read: usize,
    pub rows_stored: usize,
    pub duplicates_removed: usize,
}

impl StreamReport {
    pub fn dropped(&self) -> usize {
        self.rows_read - self.rows_stored
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub streams: Vec<StreamReport>,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.streams {
            writeln!(
                f,
                "{:<12} read {:>8}  stored {:>8}  dropped {:>6} (duplicates)",
                s.stream,
                s.rows_read,
                s.rows_stored,
                s.dropped()
            )?;
        }
        Ok(())
    }
}

struct Parsed<T> {
    file: String,
    rows: Vec<(u64, T)>,
}

fn read_stream<T>(
    path: &Path,
    header: &[&str],
    parse_row: impl Fn(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Parsed<T>> {
    let file = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(f));
    let found = rdr.headers().map_err(|e| csv_error(&file, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            file,
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let line = rec.position().map_or(0, |p| p.line());
                let value = parse_row(&rec).map_err(|message| Error::Parse {
                    file: file.clone(),
                    line,
                    message,
                })?;
                rows.push((line, value));
            }
            Err(e) => return Err(csv_error(&file, e)),
        }
    }
    Ok(Parsed { file, rows })
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        file: file.to_string(),
        line,
        message: e.to_string(),
    }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, name: &str) -> std::result::Result<&'a str, String> {
    match rec.get(i) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(format!("missing field {name}")),
    }
}

fn number<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<T, String> {
    let s = field(rec, i, name)?;
    s.parse::<T>().map_err(|_| format!("invalid {name} {s:?}"))
}

fn real(rec: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
    let v: f64 = number(rec, i, name)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {name}"))
    }
}

fn date(rec: &csv::StringRecord, i: usize) -> std::result::Result<NaiveDate, String> {
    let s = field(rec, i, "date")?;
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("invalid date {s:?}"))
}

fn parse_call(rec: &csv::StringRecord) -> std::result::Result<CallRecord, String> {
    let direction: CallDirection = field(rec, 2, "direction")?.parse()?;
    let duration = real(rec, 4, "duration")?;
    if duration < 0.0 {
        return Err("negative duration".into());
    }
    if direction == CallDirection::Missed && duration != 0.0 {
        return Err("missed call with nonzero duration".into());
    }
    Ok(CallRecord {
        subject_id: field(rec, 0, "subject_id")?.to_string(),
        timestamp: number(rec, 1, "timestamp")?,
        direction,
        peer_id: field(rec, 3, "peer_id")?.to_string(),
        duration,
    })
}

fn parse_sms(rec: &csv::StringRecord) -> std::result::Result<SmsRecord, String> {
    Ok(SmsRecord {
        subject_id: field(rec, 0, "subject_id")?.to_string(),
        timestamp: number(rec, 1, "timestamp")?,
        direction: field(rec, 2, "direction")?.parse()?,
        peer_id: field(rec, 3, "peer_id")?.to_string(),
    })
}

fn parse_bluetooth(rec: &csv::StringRecord) -> std::result::Result<BluetoothScan, String> {
    Ok(BluetoothScan {
        subject_id: field(rec, 0, "subject_id")?.to_string(),
        timestamp: number(rec, 1, "timestamp")?,
        seen_id: field(rec, 2, "seen_id")?.to_string(),
        rssi: number(rec, 3, "rssi")?,
    })
}

fn parse_weather(rec: &csv::StringRecord) -> std::result::Result<WeatherDay, String> {
    let w = WeatherDay {
        date: date(rec, 0)?,
        mean_temperature: real(rec, 1, "mean_temperature")?,
        pressure: real(rec, 2, "pressure")?,
        precipitation: real(rec, 3, "precipitation")?,
        humidity: real(rec, 4, "humidity")?,
        visibility: real(rec, 5, "visibility")?,
        wind_speed: real(rec, 6, "wind_speed")?,
    };
    if !(0.0..=100.0).contains(&w.humidity) {
        return Err(format!("humidity {} outside [0,100]", w.humidity));
    }
    if w.precipitation < 0.0 {
        return Err("negative precipitation".into());
    }
    if w.wind_speed < 0.0 {
        return Err("negative wind speed".into());
    }
    Ok(w)
}

fn parse_personality(rec: &csv::StringRecord) -> std::result::Result<PersonalityProfile, String> {
    let trait_score = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let v = real(rec, i, name)?;
        if (1.0..=5.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("{name} {v} outside [1,5]"))
        }
    };
    Ok(PersonalityProfile {
        subject_id: field(rec, 0, "subject_id")?.to_string(),
        extraversion: trait_score(1, "extraversion")?,
        neuroticism: trait_score(2, "neuroticism")?,
        agreeableness: trait_score(3, "agreeableness")?,
        conscientiousness: trait_score(4, "conscientiousness")?,
        openness: trait_score(5, "openness")?,
    })
}

fn parse_stress(rec: &csv::StringRecord) -> std::result::Result<StressReport, String> {
    let score: u8 = number(rec, 2, "score")?;
    if !(1..=7).contains(&score) {
        return Err(format!("stress score {score} outside 1..7"));
    }
    Ok(StressReport {
        subject_id: field(rec, 0, "subject_id")?.to_string(),
        date: date(rec, 1)?,
        score,
    })
}

/// Sorts by key, removes identical duplicates and rejects conflicting ones.
fn dedup<T: PartialEq, K: Ord>(
    parsed: &mut Parsed<T>,
    key: impl Fn(&T) -> K,
    identical_allowed: bool,
) -> Result<usize> {
    parsed
        .rows
        .sort_by(|a, b| key(&a.1).cmp(&key(&b.1)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(u64, T)> = Vec::with_capacity(parsed.rows.len());
    let mut removed = 0;
    for (line, row) in parsed.rows.drain(..) {
        if let Some((_, prev)) = kept.last() {
            if key(prev) == key(&row) {
                if identical_allowed && *prev == row {
                    removed += 1;
                    continue;
                }
                return Err(Error::Parse {
                    file: parsed.file.clone(),
                    line,
                    message: "conflicting duplicate record".into(),
                });
            }
        }
        kept.push((line, row));
    }
    parsed.rows = kept;
    Ok(removed)
}

/// Parses and indexes all six streams.
pub fn parse_logs(paths: &LogPaths, opts: &IngestOptions) -> Result<(SubjectDataset, IngestReport)> {
    let (calls, sms, bluetooth, weather, personality, stress) = std::thread::scope(|s| {
        let calls = s.spawn(|| read_stream(&paths.calls, &CALLS_HEADER, parse_call));
        let sms = s.spawn(|| read_stream(&paths.sms, &SMS_HEADER, parse_sms));
        let bt = s.spawn(|| read_stream(&paths.bluetooth, &BLUETOOTH_HEADER, parse_bluetooth));
        let weather = read_stream(&paths.weather, &WEATHER_HEADER, parse_weather);
        let personality = read_stream(&paths.personality, &PERSONALITY_HEADER, parse_personality);
        let stress = read_stream(&paths.stress, &STRESS_HEADER, parse_stress);
        (
            calls.join().expect("calls parser panicked"),
            sms.join().expect("sms parser panicked"),
            bt.join().expect("bluetooth parser panicked"),
            weather,
            personality,
            stress,
        )
    });
    let mut calls = calls?;
    let mut sms = sms?;
    let mut bluetooth = bluetooth?;
    let mut weather = weather?;
    let mut personality = personality?;
    let mut stress = stress?;

    let read = [
        calls.rows.len(),
        sms.rows.len(),
        bluetooth.rows.len(),
        weather.rows.len(),
        personality.rows.len(),
        stress.rows.len(),
    ];
    let dups = [
        dedup(
            &mut calls,
            |r| (r.subject_id.clone(), r.timestamp, r.peer_id.clone()),
            true,
        )?,
        dedup(
            &mut sms,
            |r| (r.subject_id.clone(), r.timestamp, r.peer_id.clone(), r.direction),
            true,
        )?,
        dedup(
            &mut bluetooth,
            |r| (r.subject_id.clone(), r.timestamp, r.seen_id.clone()),
            true,
        )?,
        dedup(&mut weather, |r| r.date, true)?,
        dedup(&mut personality, |r| r.subject_id.clone(), true)?,
        dedup(&mut stress, |r| (r.subject_id.clone(), r.date), false)?,
    ];

    let clock = opts.clock;
    let window = match opts.window {
        Some(w) => w,
        None => infer_window(&calls, &sms, &bluetooth, &weather, &stress, clock)
            .ok_or_else(|| Error::invalid("input streams contain no dated records"))?,
    };

    let mut subjects: BTreeMap<String, SubjectRecords> = BTreeMap::new();
    for (_, p) in personality.rows.drain(..) {
        let id = p.subject_id.clone();
        subjects.entry(id).or_default().personality = Some(p);
    }
    for (line, s) in stress.rows.drain(..) {
        check_date(&stress.file, line, s.date, &window)?;
        subjects.entry(s.subject_id.clone()).or_default().stress.push(s);
    }

    let mut weather_map = BTreeMap::new();
    for (line, w) in weather.rows.drain(..) {
        check_date(&weather.file, line, w.date, &window)?;
        weather_map.insert(w.date, w);
    }

    for (line, c) in calls.rows.drain(..) {
        check_date(&calls.file, line, clock.local_date(c.timestamp), &window)?;
        subject_mut(&mut subjects, &c.subject_id, &calls.file, line)?
            .calls
            .push(c);
    }
    for (line, m) in sms.rows.drain(..) {
        check_date(&sms.file, line, clock.local_date(m.timestamp), &window)?;
        subject_mut(&mut subjects, &m.subject_id, &sms.file, line)?.sms.push(m);
    }
    for (line, b) in bluetooth.rows.drain(..) {
        check_date(&bluetooth.file, line, clock.local_date(b.timestamp), &window)?;
        subject_mut(&mut subjects, &b.subject_id, &bluetooth.file, line)?
            .bluetooth
            .push(b);
    }

    let mut dataset = SubjectDataset {
        window,
        clock,
        weather: weather_map,
        subjects,
    };
    dataset.canonicalize();

    let names = ["calls", "sms", "bluetooth", "weather", "personality", "stress"];
    let streams = names
        .iter()
        .zip(read)
        .zip(dups)
        .map(|((name, read), dup)| StreamReport {
            stream: name.to_string(),
            rows_read: read,
            rows_stored: read - dup,
            duplicates_removed: dup,
        })
        .collect();
    Ok((dataset, IngestReport { streams }))
}

fn subject_mut<'a>(
    subjects: &'a mut BTreeMap<String, SubjectRecords>,
    id: &str,
    file: &str,
    line: u64,
) -> Result<&'a mut SubjectRecords> {
    subjects.get_mut(id).ok_or_else(|| Error::Parse {
        file: file.to_string(),
        line,
        message: format!("subject {id:?} has no personality or stress records"),
    })
}

fn check_date(file: &str, line: u64, d: NaiveDate, window: &StudyWindow) -> Result<()> {
    if window.contains(d) {
        Ok(())
    } else {
        Err(Error::Parse {
            file: file.to_string(),
            line,
            message: format!("date {d} outside study window {}..{}", window.start, window.end),
        })
    }
}

fn infer_window(
    calls: &Parsed<CallRecord>,
    sms: &Parsed<SmsRecord>,
    bt: &Parsed<BluetoothScan>,
    weather: &Parsed<WeatherDay>,
    stress: &Parsed<StressReport>,
    clock: StudyClock,
) -> Option<StudyWindow> {
    let dates = calls
        .rows
        .iter()
        .map(|(_, r)| clock.local_date(r.timestamp))
        .chain(sms.rows.iter().map(|(_, r)| clock.local_date(r.timestamp)))
        .chain(bt.rows.iter().map(|(_, r)| clock.local_date(r.timestamp)))
        .chain(weather.rows.iter().map(|(_, r)| r.date))
        .chain(stress.rows.iter().map(|(_, r)| r.date));
    let (mut lo, mut hi): (Option<NaiveDate>, Option<NaiveDate>) = (None, None);
    for d in dates {
        lo = Some(lo.map_or(d, |l| l.min(d)));
        hi = Some(hi.map_or(d, |h| h.max(d)));
    }
    Some(StudyWindow { start: lo?, end: hi? })
}

fn create_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn write_all<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = create_writer(path)?;
    let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the dataset as the six CSV streams (inverse of [`parse_logs`]).
pub fn emit_logs(dataset: &SubjectDataset, paths: &LogPaths) -> Result<()> {
    let subj = || dataset.subjects.values();
    write_all(
        &paths.calls,
        &CALLS_HEADER,
        subj().flat_map(|s| &s.calls).map(|c| {
            [
                c.subject_id.clone(),
                c.timestamp.to_string(),
                c.direction.as_str().to_string(),
                c.peer_id.clone(),
                c.duration.to_string(),
            ]
        }),
    )?;
    write_all(
        &paths.sms,
        &SMS_HEADER,
        subj().flat_map(|s| &s.sms).map(|m| {
            [
                m.subject_id.clone(),
                m.timestamp.to_string(),
                m.direction.as_str().to_string(),
                m.peer_id.clone(),
            ]
        }),
    )?;
    write_all(
        &paths.bluetooth,
        &BLUETOOTH_HEADER,
        subj().flat_map(|s| &s.bluetooth).map(|b| {
            [
                b.subject_id.clone(),
                b.timestamp.to_string(),
                b.seen_id.clone(),
                b.rssi.to_string(),
            ]
        }),
    )?;
    write_all(
        &paths.weather,
        &WEATHER_HEADER,
        dataset.weather.values().map(|w| {
            [
                w.date.to_string(),
                w.mean_temperature.to_string(),
                w.pressure.to_string(),
                w.precipitation.to_string(),
                w.humidity.to_string(),
                w.visibility.to_string(),
                w.wind_speed.to_string(),
            ]
        }),
    )?;
    write_all(
        &paths.personality,
        &PERSONALITY_HEADER,
        subj().filter_map(|s| s.personality.as_ref()).map(|p| {
            [
                p.subject_id.clone(),
                p.extraversion.to_string(),
                p.neuroticism.to_string(),
                p.agreeableness.to_string(),
                p.conscientiousness.to_string(),
                p.openness.to_string(),
            ]
        }),
    )?;
    write_all(
        &paths.stress,
        &STRESS_HEADER,
        subj()
            .flat_map(|s| &s.stress)
            .map(|r| [r.subject_id.clone(), r.date.to_string(), r.score.to_string()]),
    )?;
    Ok(())
}

/// Keeps scans whose signal value is at least [`RSSI_FLOOR`], in input order.
pub fn filter_bluetooth(scans: &[BluetoothScan]) -> Vec<BluetoothScan> {
    scans.iter().filter(|s| s.rssi >= RSSI_FLOOR).cloned().collect()
}

/// Longest run of consecutive calendar days in a sorted, deduplicated list.
pub fn longest_consecutive_run(dates: &[NaiveDate]) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut prev: Option<NaiveDate> = None;
    for &d in dates {
        run = match prev {
            Some(p) if d - p == Duration::days(1) => run + 1,
            _ => 1,
        };
        best = best.max(run);
        prev = Some(d);
    }
    best
}

/// Subjects with at least `min_consecutive_days` consecutive days that each
/// carry a stress report.
pub fn validate_coverage(dataset: &SubjectDataset, min_consecutive_days: usize) -> Result<Vec<String>> {
    if min_consecutive_days == 0 {
        return Err(Error::invalid("min_consecutive_days must be at least 1"));
    }
    let roster: Vec<String> = dataset
        .subjects
        .iter()
        .filter(|(_, rec)| {
            let dates: Vec<NaiveDate> = rec.stress.iter().map(|r| r.date).collect();
            longest_consecutive_run(&dates) >= min_consecutive_days
        })
        .map(|(id, _)| id.clone())
        .collect();
    if roster.is_empty() {
        return Err(Error::NoEligibleSubjects);
    }
    Ok(roster)
}
