//! Hourly trace ingestion: CSV parsing, gap filling, window alignment and
//! a seeded synthetic workload generator.
//!
//! Files are UTF-8 CSV with header `timestamp,value`; timestamps are UTC in
//! the form `YYYY-MM-DDTHH:00:00Z`.

use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest run of missing hours that is filled by interpolation.
pub const MAX_INTERPOLATED_GAP: i64 = 3;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Price,
    Temperature,
    Workload,
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesKind::Price => "price",
            SeriesKind::Temperature => "temperature",
            SeriesKind::Workload => "workload",
        })
    }
}

/// Hours since the Unix epoch.
pub fn hour_index(ts: &DateTime<Utc>) -> i64 {
    ts.timestamp().div_euclid(3600)
}

pub fn from_hour_index(hour: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(hour * 3600, 0).expect("hour index within chrono range")
}

pub fn format_hour(hour: i64) -> String {
    from_hour_index(hour)
        .format("%Y-%m-%dT%H:00:00Z")
        .to_string()
}

/// Parses a strict `YYYY-MM-DDTHH:00:00Z` timestamp into an hour index.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let naive = chrono::NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()?;
    if naive.minute() != 0 || naive.second() != 0 {
        return None;
    }
    Some(hour_index(&naive.and_utc()))
}

/// A gap-free hourly series. Element `i` is the value at hour `start + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    kind: SeriesKind,
    start: i64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(kind: SeriesKind, start: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries { kind });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "{kind} series contains non-finite value {v}"
            )));
        }
        if kind == SeriesKind::Workload {
            if let Some(v) = values.iter().find(|v| **v < 0.0 || v.fract() != 0.0) {
                return Err(Error::invalid(format!(
                    "workload values must be non-negative integers, got {v}"
                )));
            }
        }
        Ok(Self {
            kind,
            start,
            values,
        })
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    /// Hour index of the first sample.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Hour index one past the last sample.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (self.start..self.end()).map(from_hour_index)
    }

    /// `(hour index, value)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.start + i as i64, v))
    }

    pub fn get(&self, hour: i64) -> Option<f64> {
        if hour < self.start {
            return None;
        }
        self.values.get((hour - self.start) as usize).copied()
    }

    pub fn slice(&self, window: &Window) -> Result<Vec<f64>> {
        if window.start < self.start || window.end > self.end() {
            return Err(Error::Coverage {
                kind: self.kind,
                needed: window.to_string(),
                available: format!("{}..{}", format_hour(self.start), format_hour(self.end())),
            });
        }
        let lo = (window.start - self.start) as usize;
        let hi = (window.end - self.start) as usize;
        Ok(self.values[lo..hi].to_vec())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 32);
        out.push_str("timestamp,value\n");
        for (h, v) in self.points() {
            out.push_str(&format_hour(h));
            out.push(',');
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Parses CSV text into a sorted, de-duplicated, gap-filled series.
///
/// Duplicate timestamps keep the first row. Runs of up to
/// [`MAX_INTERPOLATED_GAP`] missing hours are linearly interpolated (rounded
/// for workload series); longer runs are rejected.
pub fn parse_series(text: &str, kind: SeriesKind) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows: Vec<(i64, f64, u64)> = Vec::new();
    let mut seen_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if !seen_header {
            let header: Vec<&str> = record.iter().collect();
            let first = header.first().map(|s| s.trim_start_matches('\u{feff}'));
            if header.len() != 2 || first != Some("timestamp") || header[1] != "value" {
                return Err(Error::MalformedRow {
                    line,
                    message: "expected header `timestamp,value`".into(),
                });
            }
            seen_header = true;
            continue;
        }
        if record.len() != 2 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let hour = parse_timestamp(&record[0]).ok_or_else(|| Error::MalformedRow {
            line,
            message: format!(
                "bad timestamp {:?}, expected YYYY-MM-DDTHH:00:00Z",
                &record[0]
            ),
        })?;
        let raw = &record[1];
        let value: f64 = raw.parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("bad value {raw:?}"),
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                line,
                value: raw.to_string(),
            });
        }
        if kind == SeriesKind::Workload && (value < 0.0 || value.fract() != 0.0) {
            return Err(Error::MalformedRow {
                line,
                message: format!("workload value {raw:?} is not a non-negative integer"),
            });
        }
        rows.push((hour, value, line));
    }
    if rows.is_empty() {
        return Err(Error::EmptySeries { kind });
    }

    rows.sort_by_key(|&(h, _, line)| (h, line));
    rows.dedup_by_key(|r| r.0);

    let start = rows[0].0;
    let mut values = Vec::with_capacity(rows.len());
    values.push(rows[0].1);
    for pair in rows.windows(2) {
        let (h0, v0, _) = pair[0];
        let (h1, v1, _) = pair[1];
        let missing = h1 - h0 - 1;
        if missing > MAX_INTERPOLATED_GAP {
            return Err(Error::Gap {
                kind,
                after: format_hour(h0),
                before: format_hour(h1),
                missing,
            });
        }
        for k in 1..=missing {
            let w = k as f64 / (missing + 1) as f64;
            let v = v0 + (v1 - v0) * w;
            values.push(if kind == SeriesKind::Workload {
                v.round()
            } else {
                v
            });
        }
        values.push(v1);
    }
    TimeSeries::new(kind, start, values)
}

pub fn load_series(path: impl AsRef<Path>, kind: SeriesKind) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series(&text, kind)
}

/// Half-open hour range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: i64,
    pub end: i64,
}

impl Window {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end <= start {
            return Err(Error::invalid(format!("empty window {start}..{end}")));
        }
        Ok(Self { start, end })
    }

    /// Whole days from `first` through `last`, inclusive.
    pub fn days(first: NaiveDate, last: NaiveDate) -> Result<Self> {
        let start = hour_index(&first.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
        let end = hour_index(&last.and_hms_opt(0, 0, 0).expect("midnight").and_utc()) + 24;
        Self::new(start, end)
    }

    /// June 1 00:00 through August 31 23:00.
    pub fn summer(year: i32) -> Result<Self> {
        let first = NaiveDate::from_ymd_opt(year, 6, 1)
            .ok_or_else(|| Error::invalid(format!("year {year} out of range")))?;
        let last = NaiveDate::from_ymd_opt(year, 8, 31).expect("Aug 31 exists when Jun 1 does");
        Self::days(first, last)
    }

    pub fn hours(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn label(&self) -> String {
        format!("{}..{}", format_hour(self.start), format_hour(self.end))
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Price, outdoor temperature and workload restricted to one window.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub window: Window,
    pub price: Vec<f64>,
    pub temperature: Vec<f64>,
    pub workload: Vec<f64>,
}

impl AlignedDataset {
    pub fn new(
        window: Window,
        price: Vec<f64>,
        temperature: Vec<f64>,
        workload: Vec<f64>,
    ) -> Result<Self> {
        let n = window.hours();
        if price.len() != n || temperature.len() != n || workload.len() != n {
            return Err(Error::Dimension(format!(
                "window has {n} hours but vectors have lengths {}/{}/{}",
                price.len(),
                temperature.len(),
                workload.len()
            )));
        }
        if n % 24 != 0 {
            return Err(Error::invalid(format!(
                "window length {n} h is not a whole number of days"
            )));
        }
        Ok(Self {
            window,
            price,
            temperature,
            workload,
        })
    }

    pub fn len(&self) -> usize {
        self.price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.price.is_empty()
    }

    pub fn cycle_length(&self) -> usize {
        self.len()
    }

    pub fn hour_index(&self, t: usize) -> i64 {
        self.window.start + t as i64
    }
}

pub fn align(
    price: &TimeSeries,
    temperature: &TimeSeries,
    workload: &TimeSeries,
    window: Window,
) -> Result<AlignedDataset> {
    let check = |s: &TimeSeries, want: SeriesKind| {
        if s.kind() != want {
            Err(Error::invalid(format!(
                "expected a {want} series, got {}",
                s.kind()
            )))
        } else {
            Ok(())
        }
    };
    check(price, SeriesKind::Price)?;
    check(temperature, SeriesKind::Temperature)?;
    check(workload, SeriesKind::Workload)?;
    AlignedDataset::new(
        window,
        price.slice(&window)?,
        temperature.slice(&window)?,
        workload.slice(&window)?,
    )
}

/// Diurnal core-count generator: `base * (1 + amplitude * cos(2pi (hour - 14) / 24))`
/// times uniform multiplicative noise in `[1 - noise, 1 + noise]`, clamped at
/// zero and rounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSynth {
    pub base_cores: u64,
    pub amplitude: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    0.05
}

/// Hour of day (UTC) at which synthetic load peaks.
pub const WORKLOAD_PEAK_HOUR: f64 = 14.0;

impl WorkloadSynth {
    pub fn new(base_cores: u64, amplitude: f64) -> Self {
        Self {
            base_cores,
            amplitude,
            noise: default_noise(),
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = 0.0;
        self
    }

    pub fn generate(&self, seed: u64, start: i64, n_hours: usize) -> Result<TimeSeries> {
        if !(0.0..=1.0).contains(&self.amplitude) {
            return Err(Error::invalid(format!(
                "amplitude {} outside [0, 1]",
                self.amplitude
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::invalid(format!(
                "noise {} outside [0, 1]",
                self.noise
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = self.base_cores as f64;
        let values = (0..n_hours)
            .map(|i| {
                let hod = (start + i as i64).rem_euclid(24) as f64;
                let shape = 1.0
                    + self.amplitude
                        * (2.0 * std::f64::consts::PI * (hod - WORKLOAD_PEAK_HOUR) / 24.0).cos();
                let jitter = if self.noise > 0.0 {
                    1.0 + self.noise * rng.gen_range(-1.0..=1.0)
                } else {
                    1.0
                };
                (base * shape * jitter).max(0.0).round()
            })
            .collect();
        TimeSeries::new(SeriesKind::Workload, start, values)
    }
}

/// Convenience wrapper over [`WorkloadSynth::generate`] with default noise.
pub fn synth_workload(
    seed: u64,
    start: i64,
    n_hours: usize,
    base_cores: u64,
    amplitude: f64,
) -> Result<TimeSeries> {
    WorkloadSynth::new(base_cores, amplitude).generate(seed, start, n_hours)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(s: &str) -> i64 {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn parses_identity_rows() {
        let s = parse_series(
            "timestamp,value\n2024-07-15T00:00:00Z,50.0\n2024-07-15T01:00:00Z,60.0\n",
            SeriesKind::Price,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.values(), &[50.0, 60.0]);
        assert_eq!(s.start(), h("2024-07-15T00:00:00Z"));
    }

    #[test]
    fn interpolates_one_hour_gap() {
        let s = parse_series(
            "timestamp,value\n2024-07-15T00:00:00Z,50.0\n2024-07-15T02:00:00Z,70.0\n",
            SeriesKind::Price,
        )
        .unwrap();
        assert_eq!(s.values(), &[50.0, 60.0, 70.0]);
    }

    #[test]
    fn three_hour_gap_is_filled_four_is_rejected() {
        let ok = parse_series(
            "timestamp,value\n2024-07-15T00:00:00Z,0\n2024-07-15T04:00:00Z,40\n",
            SeriesKind::Temperature,
        )
        .unwrap();
        assert_eq!(ok.values(), &[0.0, 10.0, 20.0, 30.0, 40.0]);
        let err = parse_series(
            "timestamp,value\n2024-07-15T00:00:00Z,0\n2024-07-15T05:00:00Z,40\n",
            SeriesKind::Temperature,
        )
        .unwrap_err();
        match err {
            Error::Gap {
                missing,
                after,
                before,
                ..
            } => {
                assert_eq!(missing, 4);
                assert_eq!(after, "2024-07-15T00:00:00Z");
                assert_eq!(before, "2024-07-15T05:00:00Z");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_value_names_its_line() {
        let err = parse_series(
            "timestamp,value\n2024-07-15T01:00:00Z,abc\n",
            SeriesKind::Price,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_non_finite_and_bad_headers() {
        let err = parse_series(
            "timestamp,value\n2024-07-15T01:00:00Z,NaN\n",
            SeriesKind::Price,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { line: 2, .. }));
        let err =
            parse_series("time,price\n2024-07-15T01:00:00Z,1\n", SeriesKind::Price).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 1, .. }));
        let err = parse_series("timestamp,value\n", SeriesKind::Price).unwrap_err();
        assert!(matches!(err, Error::EmptySeries { .. }));
    }

    #[test]
    fn rejects_sub_hourly_and_fractional_workload() {
        assert!(parse_series(
            "timestamp,value\n2024-07-15T01:30:00Z,1\n",
            SeriesKind::Price
        )
        .is_err());
        let err = parse_series(
            "timestamp,value\n2024-07-15T01:00:00Z,1.5\n",
            SeriesKind::Workload,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn sorts_and_deduplicates() {
        let s = parse_series(
            "timestamp,value\n2024-07-15T01:00:00Z,2\n2024-07-15T00:00:00Z,1\n2024-07-15T01:00:00Z,9\n",
            SeriesKind::Price,
        )
        .unwrap();
        assert_eq!(s.values(), &[1.0, 2.0]);
    }

    #[test]
    fn workload_gap_interpolation_stays_integral() {
        let s = parse_series(
            "timestamp,value\n2024-07-15T00:00:00Z,10\n2024-07-15T03:00:00Z,21\n",
            SeriesKind::Workload,
        )
        .unwrap();
        assert_eq!(s.values(), &[10.0, 14.0, 17.0, 21.0]);
    }

    fn constant(kind: SeriesKind, start: i64, n: usize) -> TimeSeries {
        TimeSeries::new(kind, start, vec![1.0; n]).unwrap()
    }

    #[test]
    fn summer_window_is_2208_hours() {
        let w = Window::summer(2024).unwrap();
        assert_eq!(w.hours(), 2208);
        let start = w.start - 48;
        let n = w.hours() + 96;
        let ds = align(
            &constant(SeriesKind::Price, start, n),
            &constant(SeriesKind::Temperature, start, n),
            &constant(SeriesKind::Workload, start, n),
            w,
        )
        .unwrap();
        assert_eq!(ds.cycle_length(), 2208);
    }

    #[test]
    fn one_day_window_and_coverage_error() {
        let day = NaiveDate::from_ymd_opt(2024, 7, 15).unwrap();
        let w = Window::days(day, day).unwrap();
        assert_eq!(w.hours(), 24);
        let ds = align(
            &constant(SeriesKind::Price, w.start, 24),
            &constant(SeriesKind::Temperature, w.start, 24),
            &constant(SeriesKind::Workload, w.start, 24),
            w,
        )
        .unwrap();
        assert_eq!(ds.len(), 24);

        let summer = Window::summer(2024).unwrap();
        let n = summer.hours();
        let err = align(
            &constant(SeriesKind::Price, summer.start, n - 24),
            &constant(SeriesKind::Temperature, summer.start, n),
            &constant(SeriesKind::Workload, summer.start, n),
            summer,
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::Coverage {
                    kind: SeriesKind::Price,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn partial_day_window_is_rejected() {
        let w = Window::new(0, 30).unwrap();
        let err = align(
            &constant(SeriesKind::Price, 0, 30),
            &constant(SeriesKind::Temperature, 0, 30),
            &constant(SeriesKind::Workload, 0, 30),
            w,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn synth_without_amplitude_or_noise_is_constant() {
        let s = WorkloadSynth::new(50_000, 0.0)
            .without_noise()
            .generate(7, 0, 48)
            .unwrap();
        assert!(s.values().iter().all(|&v| v == 50_000.0));
    }

    #[test]
    fn synth_is_deterministic_and_peaks_mid_afternoon() {
        let a = synth_workload(3, 0, 240, 50_000, 0.4).unwrap();
        let b = synth_workload(3, 0, 240, 50_000, 0.4).unwrap();
        assert_eq!(a, b);
        let clean = WorkloadSynth::new(50_000, 0.4)
            .without_noise()
            .generate(3, 0, 24)
            .unwrap();
        let peak = clean
            .values()
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap()
            .0;
        assert_eq!(peak, 14);
        assert!(WorkloadSynth::new(1, 1.5).generate(0, 0, 1).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let s = TimeSeries::new(
            SeriesKind::Price,
            400_000,
            vec![0.1, -3.25e-7, 1e300, 12345.678901234567],
        )
        .unwrap();
        let back = parse_series(&s.to_csv_string(), SeriesKind::Price).unwrap();
        assert_eq!(s, back);
        for (a, b) in s.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
