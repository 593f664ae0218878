//! Synthetic weather and market traces for tests, demos and sampled-summer
//! experiments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{from_hour_index, SeriesKind, TimeSeries};
use crate::mdp::{CostSpec, MdpProblem, ThetaGrid};
use crate::qfr::RegimeModel;
use crate::regimes::{StochasticMatrix, TransitionModel};
use crate::thermal::Plant;

use chrono::{Datelike, Timelike};

/// Outdoor temperature: a daily cosine peaking in mid-afternoon on top of a
/// seasonal cosine peaking in late July, plus uniform noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiurnalTemperature {
    pub mean: f64,
    pub daily_amplitude: f64,
    pub peak_hour: f64,
    pub seasonal_amplitude: f64,
    /// Half-width of the uniform noise, °C.
    pub noise: f64,
}

impl Default for DiurnalTemperature {
    fn default() -> Self {
        Self {
            mean: 24.0,
            daily_amplitude: 5.0,
            peak_hour: 15.0,
            seasonal_amplitude: 8.0,
            noise: 1.0,
        }
    }
}

/// Day of year around which the seasonal cosine peaks.
const WARMEST_DAY: f64 = 200.0;

impl DiurnalTemperature {
    pub fn value(&self, hour: i64, jitter: f64) -> f64 {
        let ts = from_hour_index(hour);
        let hod = ts.hour() as f64;
        let doy = ts.ordinal0() as f64;
        self.mean
            + self.seasonal_amplitude * (2.0 * PI * (doy - WARMEST_DAY) / 365.0).cos()
            + self.daily_amplitude * (2.0 * PI * (hod - self.peak_hour) / 24.0).cos()
            + self.noise * jitter
    }

    pub fn generate(&self, seed: u64, start: i64, n_hours: usize) -> Result<TimeSeries> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n_hours)
            .map(|k| self.value(start + k as i64, rng.gen_range(-1.0..=1.0)))
            .collect();
        TimeSeries::new(SeriesKind::Temperature, start, values)
    }
}

/// Hourly prices with a daily swing, an expensive evening window and
/// occasional spikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakPriceMarket {
    /// $/MWh
    pub base: f64,
    pub daily_amplitude: f64,
    /// Local hour the expensive window opens (inclusive).
    pub peak_start: u32,
    /// Local hour the expensive window closes (exclusive).
    pub peak_end: u32,
    pub peak_premium: f64,
    /// Half-width of the uniform noise, $/MWh.
    pub noise: f64,
    pub spike_probability: f64,
    pub spike_size: f64,
}

impl Default for PeakPriceMarket {
    fn default() -> Self {
        Self {
            base: 35.0,
            daily_amplitude: 8.0,
            peak_start: 16,
            peak_end: 19,
            peak_premium: 60.0,
            noise: 10.0,
            spike_probability: 0.01,
            spike_size: 150.0,
        }
    }
}

impl PeakPriceMarket {
    pub fn generate(&self, seed: u64, start: i64, n_hours: usize) -> Result<TimeSeries> {
        if !(0.0..=1.0).contains(&self.spike_probability) {
            return Err(Error::invalid("spike_probability must lie in [0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n_hours)
            .map(|k| {
                let hour = start + k as i64;
                let hod = hour.rem_euclid(24) as u32;
                let mut price = self.base
                    + self.daily_amplitude * (2.0 * PI * (hod as f64 - 14.0) / 24.0).cos();
                if (self.peak_start..self.peak_end).contains(&hod) {
                    price += self.peak_premium;
                }
                price += self.noise * rng.gen_range(-1.0..=1.0);
                if rng.gen::<f64>() < self.spike_probability {
                    price += self.spike_size;
                }
                price
            })
            .collect();
        TimeSeries::new(SeriesKind::Price, start, values)
    }
}

/// Samples a regime path from `chain` and prices it at the regime model's
/// representative levels, so the planner's model of the market is exact.
pub fn sample_regime_prices(
    regime_model: &RegimeModel,
    chain: &TransitionModel,
    start: i64,
    n_hours: usize,
    start_regime: usize,
    seed: u64,
) -> Result<(Vec<usize>, TimeSeries)> {
    let path = chain.sample_path(start_regime, start, n_hours, seed)?;
    let prices = path
        .iter()
        .enumerate()
        .map(|(k, &p)| regime_model.representative_price(start + k as i64, p))
        .collect();
    Ok((path, TimeSeries::new(SeriesKind::Price, start, prices)?))
}

/// Per-phase mean: entry `t` averages every value whose index is congruent
/// to `t` modulo `cycle`.
pub fn cycle_profile(values: &[f64], cycle: usize) -> Result<Vec<f64>> {
    if cycle == 0 || values.len() < cycle {
        return Err(Error::InsufficientData(format!(
            "{} values cannot fill a cycle of {cycle}",
            values.len()
        )));
    }
    let mut sums = vec![0.0; cycle];
    let mut counts = vec![0usize; cycle];
    for (k, v) in values.iter().enumerate() {
        sums[k % cycle] += v;
        counts[k % cycle] += 1;
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect())
}

/// A small, fully specified planning instance: one summer day with a hot
/// afternoon, a workload peak at 14:00 and a persistent price chain whose
/// prices jump during an expensive evening window.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskInstance {
    pub horizon: usize,
    pub grid: ThetaGrid,
    pub regimes: usize,
    pub plant: Plant,
    pub cost: CostSpec,
    /// Probability of staying in the current regime.
    pub persistence: f64,
    /// Price of regime `p` outside the evening is `base + step * p`, $/MWh.
    pub price_base: f64,
    pub price_step: f64,
    /// Evening window `[start, end)` and its price multiplier.
    pub evening: (usize, usize),
    pub evening_factor: f64,
}

impl Default for DeskInstance {
    fn default() -> Self {
        Self {
            horizon: 24,
            grid: ThetaGrid::new(18.0, 30.0, 1.0).expect("static grid"),
            regimes: 4,
            plant: Plant::default(),
            cost: CostSpec::default(),
            persistence: 0.7,
            price_base: 20.0,
            price_step: 15.0,
            evening: (16, 19),
            evening_factor: 2.5,
        }
    }
}

impl DeskInstance {
    pub fn t_out(&self) -> Vec<f64> {
        let n = self.horizon as f64;
        (0..self.horizon)
            .map(|t| 27.0 + 5.0 * (2.0 * PI * (t as f64 - 15.0) / n).cos())
            .collect()
    }

    pub fn heat_load(&self) -> Vec<f64> {
        let n = self.horizon as f64;
        (0..self.horizon)
            .map(|t| {
                let cores = 50_000.0 * (1.0 + 0.4 * (2.0 * PI * (t as f64 - 14.0) / n).cos());
                crate::thermal::heat_load(&self.plant.heat_load, cores)
            })
            .collect()
    }

    pub fn prices(&self) -> Vec<Vec<f64>> {
        (0..self.horizon)
            .map(|t| {
                let factor = if (self.evening.0..self.evening.1).contains(&t) {
                    self.evening_factor
                } else {
                    1.0
                };
                (0..self.regimes)
                    .map(|p| factor * (self.price_base + self.price_step * p as f64))
                    .collect()
            })
            .collect()
    }

    pub fn chain(&self) -> Result<StochasticMatrix> {
        let m = self.regimes;
        if m == 1 {
            return Ok(StochasticMatrix::identity(1));
        }
        let off = (1.0 - self.persistence) / (m - 1) as f64;
        let data = (0..m * m)
            .map(|k| {
                if k / m == k % m {
                    self.persistence
                } else {
                    off
                }
            })
            .collect();
        StochasticMatrix::from_rows(m, data)
    }

    pub fn build(&self) -> Result<MdpProblem> {
        let chain = self.chain()?;
        MdpProblem::physical(
            0,
            self.grid,
            self.cost,
            &self.plant,
            self.t_out(),
            self.heat_load(),
            self.prices(),
            vec![chain; self.horizon],
        )
    }
}
