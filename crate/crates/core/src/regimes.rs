//! Time-inhomogeneous Markov chain over price regimes.
//!
//! Transitions are pooled into buckets keyed by hour of day and a month
//! group; each bucket holds one row-stochastic matrix estimated by smoothed
//! maximum likelihood.

use std::collections::BTreeMap;
use std::fmt;

use chrono::Datelike;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::from_hour_index;

/// Tolerance on row sums of every stored matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MonthGrouping {
    /// One group per calendar month.
    #[default]
    Monthly,
    /// Meteorological seasons: DJF, MAM, JJA, SON.
    Seasonal,
    /// A single group for the whole year.
    Annual,
}

const MONTHS: [&str; 12] = [
    "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
];
const SEASONS: [&str; 4] = ["djf", "mam", "jja", "son"];

impl MonthGrouping {
    pub fn group_count(self) -> usize {
        match self {
            MonthGrouping::Monthly => 12,
            MonthGrouping::Seasonal => 4,
            MonthGrouping::Annual => 1,
        }
    }

    /// Group of a calendar month (`1..=12`).
    pub fn group_of_month(self, month: u32) -> usize {
        let m0 = (month - 1) as usize;
        match self {
            MonthGrouping::Monthly => m0,
            MonthGrouping::Seasonal => ((m0 + 1) % 12) / 3,
            MonthGrouping::Annual => 0,
        }
    }

    pub fn label(self, group: usize) -> &'static str {
        match self {
            MonthGrouping::Monthly => MONTHS[group],
            MonthGrouping::Seasonal => SEASONS[group],
            MonthGrouping::Annual => "all",
        }
    }

    fn parse_label(self, label: &str) -> Option<usize> {
        match self {
            MonthGrouping::Monthly => MONTHS.iter().position(|&m| m == label),
            MonthGrouping::Seasonal => SEASONS.iter().position(|&s| s == label),
            MonthGrouping::Annual => (label == "all").then_some(0),
        }
    }

    pub fn bucket_of(self, hour: i64) -> Bucket {
        let ts = from_hour_index(hour);
        Bucket {
            hour_of_day: hour.rem_euclid(24) as u8,
            group: self.group_of_month(ts.month()) as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bucket {
    pub hour_of_day: u8,
    pub group: u8,
}

impl Bucket {
    pub fn key(&self, grouping: MonthGrouping) -> String {
        format!(
            "{:02}-{}",
            self.hour_of_day,
            grouping.label(self.group as usize)
        )
    }
}

/// Dense square matrix whose rows are probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    size: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn from_rows(size: usize, data: Vec<f64>) -> Result<Self> {
        if size == 0 || data.len() != size * size {
            return Err(Error::Dimension(format!(
                "{} entries do not form a {size}x{size} matrix",
                data.len()
            )));
        }
        let m = Self { size, data };
        m.check()?;
        Ok(m)
    }

    pub fn identity(size: usize) -> Self {
        let mut data = vec![0.0; size * size];
        for i in 0..size {
            data[i * size + i] = 1.0;
        }
        Self { size, data }
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            size,
            data: vec![1.0 / size as f64; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.size + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.size..(from + 1) * self.size]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Worst row-sum deviation from one.
    pub fn max_row_error(&self) -> f64 {
        (0..self.size)
            .map(|p| (self.row(p).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn check(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "transition probabilities must be finite and non-negative",
            ));
        }
        let err = self.max_row_error();
        if err > ROW_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "row sums deviate from 1 by {err:.3e}"
            )));
        }
        Ok(())
    }

    /// Inverse-CDF draw of the successor of `from` given `u` in `[0, 1)`.
    pub fn sample_next(&self, from: usize, u: f64) -> usize {
        let mut acc = 0.0;
        let row = self.row(from);
        for (q, &w) in row.iter().enumerate() {
            acc += w;
            if u < acc {
                return q;
            }
        }
        // Round-off in the row sum; fall back to the last supported state.
        row.iter().rposition(|&w| w > 0.0).unwrap_or(self.size - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    regimes: usize,
    alpha: f64,
    grouping: MonthGrouping,
    matrices: BTreeMap<Bucket, StochasticMatrix>,
}

/// Smoothed maximum-likelihood estimate of the bucketed transition matrices.
///
/// `classified` holds `(hour index, regime)` pairs in time order. Only pairs
/// of consecutive entries exactly one hour apart count as transitions, which
/// drops the jumps across gaps between observation seasons. A transition
/// from hour `h` to `h + 1` is attributed to the bucket of `h`.
///
/// Entry `(p, q)` of a bucket is `(n_pq + alpha) / (n_p + M alpha)`; with
/// `alpha = 0` this is the plain MLE and every row must have been observed.
pub fn estimate(
    classified: &[(i64, usize)],
    regimes: usize,
    alpha: f64,
    grouping: MonthGrouping,
) -> Result<TransitionModel> {
    let counts = count_transitions(classified, regimes, alpha, grouping)?;
    let mut matrices = BTreeMap::new();
    for (bucket, table) in counts {
        let matrix = normalize_counts(&table, regimes, alpha, || bucket.key(grouping))?;
        matrices.insert(bucket, matrix);
    }
    Ok(TransitionModel {
        regimes,
        alpha,
        grouping,
        matrices,
    })
}

/// The same estimator with every bucket pooled into one matrix: the MLE of
/// a time-homogeneous chain.
pub fn estimate_homogeneous(
    classified: &[(i64, usize)],
    regimes: usize,
    alpha: f64,
) -> Result<StochasticMatrix> {
    let counts = count_transitions(classified, regimes, alpha, MonthGrouping::Annual)?;
    let mut pooled = vec![0.0; regimes * regimes];
    for table in counts.values() {
        for (acc, n) in pooled.iter_mut().zip(table) {
            *acc += n;
        }
    }
    normalize_counts(&pooled, regimes, alpha, || "pooled".to_string())
}

fn count_transitions(
    classified: &[(i64, usize)],
    regimes: usize,
    alpha: f64,
    grouping: MonthGrouping,
) -> Result<BTreeMap<Bucket, Vec<f64>>> {
    if regimes == 0 {
        return Err(Error::invalid("regime count must be positive"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "smoothing alpha {alpha} must be finite and >= 0"
        )));
    }
    if let Some(&(_, p)) = classified.iter().find(|&&(_, p)| p >= regimes) {
        return Err(Error::invalid(format!(
            "regime {p} out of range for {regimes} regimes"
        )));
    }
    let mut counts: BTreeMap<Bucket, Vec<f64>> = BTreeMap::new();
    let mut transitions = 0usize;
    for pair in classified.windows(2) {
        let (h0, p0) = pair[0];
        let (h1, p1) = pair[1];
        if h1 != h0 + 1 {
            continue;
        }
        let table = counts
            .entry(grouping.bucket_of(h0))
            .or_insert_with(|| vec![0.0; regimes * regimes]);
        table[p0 * regimes + p1] += 1.0;
        transitions += 1;
    }
    if transitions == 0 {
        return Err(Error::InsufficientData(
            "no consecutive hourly observations to count transitions from".into(),
        ));
    }
    Ok(counts)
}

fn normalize_counts(
    table: &[f64],
    regimes: usize,
    alpha: f64,
    bucket: impl Fn() -> String,
) -> Result<StochasticMatrix> {
    let m = regimes as f64;
    let mut data = vec![0.0; regimes * regimes];
    for p in 0..regimes {
        let row = &table[p * regimes..(p + 1) * regimes];
        let total: f64 = row.iter().sum();
        if total + m * alpha <= 0.0 {
            return Err(Error::ZeroCountRow {
                bucket: bucket(),
                regime: p,
            });
        }
        for q in 0..regimes {
            data[p * regimes + q] = (row[q] + alpha) / (total + m * alpha);
        }
    }
    StochasticMatrix::from_rows(regimes, data)
}

impl TransitionModel {
    pub fn new(
        regimes: usize,
        alpha: f64,
        grouping: MonthGrouping,
        matrices: BTreeMap<Bucket, StochasticMatrix>,
    ) -> Result<Self> {
        if matrices.values().any(|m| m.size() != regimes) {
            return Err(Error::Dimension(format!(
                "every matrix must be {regimes}x{regimes}"
            )));
        }
        if matrices
            .keys()
            .any(|b| b.hour_of_day > 23 || b.group as usize >= grouping.group_count())
        {
            return Err(Error::invalid("bucket out of range for grouping"));
        }
        Ok(Self {
            regimes,
            alpha,
            grouping,
            matrices,
        })
    }

    /// The same matrix in every bucket of `grouping`.
    pub fn constant(matrix: StochasticMatrix, grouping: MonthGrouping) -> Self {
        let regimes = matrix.size();
        let mut matrices = BTreeMap::new();
        for hour_of_day in 0..24u8 {
            for group in 0..grouping.group_count() as u8 {
                matrices.insert(Bucket { hour_of_day, group }, matrix.clone());
            }
        }
        Self {
            regimes,
            alpha: 0.0,
            grouping,
            matrices,
        }
    }

    pub fn regimes(&self) -> usize {
        self.regimes
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grouping(&self) -> MonthGrouping {
        self.grouping
    }

    pub fn buckets(&self) -> impl Iterator<Item = (&Bucket, &StochasticMatrix)> {
        self.matrices.iter()
    }

    pub fn bucket_count(&self) -> usize {
        self.matrices.len()
    }

    /// Matrix governing the transition from `hour` to `hour + 1`.
    pub fn matrix_at(&self, hour: i64) -> Result<&StochasticMatrix> {
        let bucket = self.grouping.bucket_of(hour);
        self.matrices
            .get(&bucket)
            .ok_or_else(|| Error::UncoveredBucket(bucket.key(self.grouping)))
    }

    /// Regime path of length `n_hours` starting in `start_regime` at `start_hour`.
    pub fn sample_path(
        &self,
        start_regime: usize,
        start_hour: i64,
        n_hours: usize,
        seed: u64,
    ) -> Result<Vec<usize>> {
        if start_regime >= self.regimes {
            return Err(Error::invalid(format!(
                "start regime {start_regime} out of range for {} regimes",
                self.regimes
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut path = Vec::with_capacity(n_hours);
        let mut current = start_regime;
        for i in 0..n_hours {
            path.push(current);
            if i + 1 < n_hours {
                let u: f64 = rng.gen();
                current = self
                    .matrix_at(start_hour + i as i64)?
                    .sample_next(current, u);
            }
        }
        Ok(path)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TransitionDoc {
            format: TRANSITION_FORMAT.into(),
            regimes: self.regimes,
            alpha: self.alpha,
            grouping: self.grouping,
            matrices: self
                .matrices
                .iter()
                .map(|(b, m)| (b.key(self.grouping), m.as_slice().to_vec()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TransitionDoc = serde_json::from_str(text)?;
        if doc.format != TRANSITION_FORMAT {
            return Err(Error::invalid(format!(
                "unexpected document format {:?}",
                doc.format
            )));
        }
        if doc.regimes == 0 || doc.regimes > 64 {
            return Err(Error::invalid(format!(
                "regime count {} out of range",
                doc.regimes
            )));
        }
        let mut matrices = BTreeMap::new();
        for (key, data) in doc.matrices {
            let bucket = parse_bucket_key(&key, doc.grouping)
                .ok_or_else(|| Error::invalid(format!("bad bucket key {key:?}")))?;
            matrices.insert(bucket, StochasticMatrix::from_rows(doc.regimes, data)?);
        }
        Self::new(doc.regimes, doc.alpha, doc.grouping, matrices)
    }
}

fn parse_bucket_key(key: &str, grouping: MonthGrouping) -> Option<Bucket> {
    let (h, label) = key.split_once('-')?;
    if h.len() != 2 {
        return None;
    }
    let hour_of_day: u8 = h.parse().ok()?;
    if hour_of_day > 23 {
        return None;
    }
    let group = grouping.parse_label(label)? as u8;
    Some(Bucket { hour_of_day, group })
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}/{}", self.hour_of_day, self.group)
    }
}

const TRANSITION_FORMAT: &str = "chillplan/transition-model/v1";

#[derive(Serialize, Deserialize)]
struct TransitionDoc {
    format: String,
    regimes: usize,
    alpha: f64,
    grouping: MonthGrouping,
    /// Bucket key (`HH-group`) to row-major matrix entries.
    matrices: BTreeMap<String, Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;

    fn july(day: u32, hour: u32) -> i64 {
        parse_timestamp(&format!("2024-07-{day:02}T{hour:02}:00:00Z")).unwrap()
    }

    #[test]
    fn seasonal_groups() {
        let g = MonthGrouping::Seasonal;
        assert_eq!(g.label(g.group_of_month(12)), "djf");
        assert_eq!(g.label(g.group_of_month(1)), "djf");
        assert_eq!(g.label(g.group_of_month(3)), "mam");
        assert_eq!(g.label(g.group_of_month(8)), "jja");
        assert_eq!(g.label(g.group_of_month(11)), "son");
    }

    #[test]
    fn deterministic_alternation_in_one_bucket() {
        // Every other day at 07:00 -> 08:00, alternating regimes 0 and 1.
        let mut seq = Vec::new();
        for d in 1..=20 {
            seq.push((july(d, 7), 0));
            seq.push((july(d, 8), 1));
            seq.push((july(d, 10), 1));
            seq.push((july(d, 11), 0));
        }
        let model = estimate(&seq, 2, 0.0, MonthGrouping::Monthly);
        // Bucket 07 only sees 0 -> 1; row 1 has no counts, so alpha = 0 fails.
        assert!(matches!(model, Err(Error::ZeroCountRow { regime: 1, .. })));

        let mut seq = Vec::new();
        for d in 1..=20 {
            seq.push((july(d, 7), (d % 2) as usize));
            seq.push((july(d, 8), ((d + 1) % 2) as usize));
        }
        let model = estimate(&seq, 2, 0.0, MonthGrouping::Monthly).unwrap();
        let m = model.matrix_at(july(3, 7)).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 1.0);
        assert_eq!(model.bucket_count(), 1);
        assert!(matches!(
            model.matrix_at(july(3, 9)),
            Err(Error::UncoveredBucket(_))
        ));
    }

    #[test]
    fn laplace_smoothing_formula() {
        let n = 37usize;
        let seq: Vec<(i64, usize)> = (0..=n as i64).map(|i| (july(10, 5) + 24 * i, 0)).collect();
        // Daily spacing: no hourly transitions at all.
        assert!(estimate(&seq, 4, 1.0, MonthGrouping::Annual).is_err());

        let seq: Vec<(i64, usize)> = (0..=n as i64).map(|i| (july(10, 0) + i, 0)).collect();
        let model = estimate(&seq, 4, 1.0, MonthGrouping::Annual).unwrap();
        // Transitions from hour h land in bucket h mod 24.
        let per_bucket: Vec<usize> = (0..24)
            .map(|h| (0..n).filter(|i| i % 24 == h).count())
            .collect();
        for (h, &k) in per_bucket.iter().enumerate() {
            let m = model.matrix_at(july(10, h as u32)).unwrap();
            let kf = k as f64;
            assert!((m.get(0, 0) - (kf + 1.0) / (kf + 4.0)).abs() < 1e-15);
            for q in 1..4 {
                assert!((m.get(0, q) - 1.0 / (kf + 4.0)).abs() < 1e-15);
            }
            for p in 1..4 {
                assert!(m.row(p).iter().all(|&v| (v - 0.25).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn buckets_repeat_daily_and_respect_month_edges() {
        let mut seq = Vec::new();
        let start = parse_timestamp("2024-06-25T00:00:00Z").unwrap();
        for i in 0..(24 * 12) {
            let h = start + i;
            let r = if from_hour_index(h).month() == 6 {
                0
            } else {
                1
            };
            seq.push((h, r));
        }
        let model = estimate(&seq, 2, 0.5, MonthGrouping::Monthly).unwrap();
        let a = model.matrix_at(july(2, 9)).unwrap();
        let b = model.matrix_at(july(3, 9)).unwrap();
        assert_eq!(a, b);
        let june_last = parse_timestamp("2024-06-30T23:00:00Z").unwrap();
        assert_eq!(MonthGrouping::Monthly.bucket_of(june_last).group, 5);
        assert_eq!(MonthGrouping::Monthly.bucket_of(june_last + 1).group, 6);
        // June 23:00 only ever saw regime 0 -> 0, except the final hop into July.
        let june = model.matrix_at(june_last).unwrap();
        let july_23 = model.matrix_at(july(1, 23)).unwrap();
        assert!(june.get(0, 1) > 0.0 && june.get(0, 1) < june.get(0, 0));
        assert!(july_23.get(1, 1) > july_23.get(1, 0));
        assert_ne!(june, july_23);
    }

    #[test]
    fn heavy_smoothing_tends_to_uniform() {
        let seq: Vec<(i64, usize)> = (0..500)
            .map(|i| (july(1, 0) + i, (i % 3) as usize))
            .collect();
        let mut prev = f64::INFINITY;
        for alpha in [0.1, 1.0, 10.0, 1e3, 1e6] {
            let model = estimate(&seq, 3, alpha, MonthGrouping::Annual).unwrap();
            let dev = model
                .buckets()
                .flat_map(|(_, m)| {
                    m.as_slice()
                        .iter()
                        .map(|v| (v - 1.0 / 3.0).abs())
                        .collect::<Vec<_>>()
                })
                .fold(0.0, f64::max);
            assert!(dev <= prev);
            prev = dev;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn identity_chain_paths_are_constant_and_seeded() {
        let model = TransitionModel::constant(StochasticMatrix::identity(4), MonthGrouping::Annual);
        let path = model.sample_path(2, july(1, 0), 200, 9).unwrap();
        assert!(path.iter().all(|&p| p == 2));
        let chain = TransitionModel::constant(StochasticMatrix::uniform(4), MonthGrouping::Annual);
        assert_eq!(
            chain.sample_path(0, 0, 300, 5).unwrap(),
            chain.sample_path(0, 0, 300, 5).unwrap()
        );
        assert_ne!(
            chain.sample_path(0, 0, 300, 5).unwrap(),
            chain.sample_path(0, 0, 300, 6).unwrap()
        );
        assert!(chain.sample_path(4, 0, 3, 5).is_err());
    }

    #[test]
    fn json_round_trip() {
        let seq: Vec<(i64, usize)> = (0..2000)
            .map(|i| (july(1, 0) + i, ((i / 7) % 3) as usize))
            .collect();
        let model = estimate(&seq, 3, 0.5, MonthGrouping::Seasonal).unwrap();
        let text = model.to_json().unwrap();
        assert!(text.contains("\"00-jja\""));
        let back = TransitionModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert!(TransitionModel::from_json(&text.replace("00-jja", "24-jja")).is_err());
    }
}
