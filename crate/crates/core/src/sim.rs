//! Trace-driven rollouts, cost accounting and cross-controller comparison.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{Controller, Observation};
use crate::error::{Error, Result};
use crate::ingest::{format_hour, parse_timestamp, AlignedDataset, Window};
use crate::mdp::{CostSpec, ThetaGrid};
use crate::qfr::RegimeModel;
use crate::thermal::{cooling_energy, heat_load, Plant};

/// Everything a rollout needs besides the controller and the traces.
#[derive(Debug, Clone)]
pub struct SimSettings {
    pub plant: Plant,
    pub cost: CostSpec,
    /// Grid used for the recorded `theta_index` column.
    pub grid: ThetaGrid,
    /// Offset of local time from UTC, hours; drives the fixed rule's clock.
    pub utc_offset_hours: i32,
    /// When set, every record is annotated with the realized price regime,
    /// whichever controller is running.
    pub regime_model: Option<RegimeModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    #[serde(rename = "timestamp", with = "timestamp")]
    pub hour: i64,
    pub theta: f64,
    pub theta_index: usize,
    pub regime: Option<usize>,
    pub price: f64,
    pub t_out: f64,
    pub heat_load: f64,
    pub action: usize,
    pub theta_next: f64,
    pub energy_kwh: f64,
    pub energy_cost: f64,
    pub violation_under: f64,
    pub violation_over: f64,
}

mod timestamp {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(hour: &i64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_hour(*hour))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<i64, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_timestamp(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {text:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub controller: String,
    pub window: Window,
    pub records: Vec<StepRecord>,
}

/// Simulates `controller` hour by hour over `dataset`.
///
/// The temperature evolves continuously; it is quantized only for the
/// policy lookup and the recorded grid index. Costs use realized prices.
pub fn rollout(
    controller: &Controller,
    dataset: &AlignedDataset,
    settings: &SimSettings,
    initial_theta: f64,
    seed: u64,
) -> Result<Trajectory> {
    settings.plant.validate()?;
    settings.cost.validate()?;
    if !(initial_theta.is_finite()
        && initial_theta >= settings.grid.min()
        && initial_theta <= settings.grid.max())
    {
        return Err(Error::invalid(format!(
            "initial temperature {initial_theta} is outside the grid [{}, {}]",
            settings.grid.min(),
            settings.grid.max()
        )));
    }
    let plant = &settings.plant;
    let thermal = plant.thermal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = initial_theta;
    let mut records = Vec::with_capacity(dataset.len());
    for t in 0..dataset.len() {
        let hour = dataset.hour_index(t);
        let q = heat_load(&plant.heat_load, dataset.workload[t]);
        let obs = Observation {
            step: t,
            hour,
            local_hour: local_hour(hour, settings.utc_offset_hours),
            theta,
            t_out: dataset.temperature[t],
            heat_load: q,
            price: dataset.price[t],
        };
        let u: f64 = rng.gen();
        let (action, regime) = controller.act(&obs, plant, &settings.cost, u);
        let regime = regime.or_else(|| {
            settings
                .regime_model
                .as_ref()
                .map(|m| m.classify(hour, obs.price))
        });
        let next = thermal.successor(theta, obs.t_out, q, action);
        let energy = cooling_energy(&plant.chiller, action, obs.t_out, thermal.dt);
        records.push(StepRecord {
            t,
            hour,
            theta,
            theta_index: settings.grid.quantize(theta),
            regime,
            price: obs.price,
            t_out: obs.t_out,
            heat_load: q,
            action,
            theta_next: next,
            energy_kwh: energy,
            energy_cost: energy * obs.price / 1000.0,
            violation_under: settings.cost.violation_under(next),
            violation_over: settings.cost.violation_over(next),
        });
        theta = next;
    }
    Ok(Trajectory {
        controller: controller.name().to_string(),
        window: dataset.window,
        records,
    })
}

pub fn local_hour(hour: i64, utc_offset_hours: i32) -> u32 {
    (hour + utc_offset_hours as i64).rem_euclid(24) as u32
}

impl Trajectory {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            writer.serialize(r)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_str(controller: &str, text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let records = reader
            .deserialize()
            .collect::<std::result::Result<Vec<StepRecord>, _>>()?;
        let (first, last) = match (records.first(), records.last()) {
            (Some(f), Some(l)) => (f.hour, l.hour),
            _ => {
                return Err(Error::InsufficientData(format!(
                    "trajectory for {controller} has no rows"
                )))
            }
        };
        Ok(Self {
            controller: controller.to_string(),
            window: Window::new(first, last + 1)?,
            records,
        })
    }

    pub fn read_csv(controller: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(controller, &text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub controller: String,
    pub window: String,
    pub hours: usize,
    pub total_energy_kwh: f64,
    pub total_energy_cost: f64,
    pub violation_under_degree_hours: f64,
    pub violation_over_degree_hours: f64,
    pub total_violation_degree_hours: f64,
    /// Penalty-weighted violations, $.
    pub penalty_cost: f64,
    pub max_theta: f64,
    pub min_theta: f64,
}

impl CostReport {
    pub fn total_cost(&self) -> f64 {
        self.total_energy_cost + self.penalty_cost
    }
}

/// Column sums and extremes of a trajectory. Temperatures include both the
/// starting and the final state.
pub fn summarize(trajectory: &Trajectory, cost: &CostSpec) -> Result<CostReport> {
    let records = &trajectory.records;
    if records.is_empty() {
        return Err(Error::InsufficientData(format!(
            "trajectory for {} is empty",
            trajectory.controller
        )));
    }
    let sum = |f: fn(&StepRecord) -> f64| records.iter().map(f).sum::<f64>();
    let under = sum(|r| r.violation_under);
    let over = sum(|r| r.violation_over);
    let temps = records.iter().flat_map(|r| [r.theta, r.theta_next]);
    let (min_theta, max_theta) = temps.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    Ok(CostReport {
        controller: trajectory.controller.clone(),
        window: trajectory.window.label(),
        hours: records.len(),
        total_energy_kwh: sum(|r| r.energy_kwh),
        total_energy_cost: sum(|r| r.energy_cost),
        violation_under_degree_hours: under,
        violation_over_degree_hours: over,
        total_violation_degree_hours: under + over,
        penalty_cost: cost.lambda_under * under + cost.lambda_over * over,
        max_theta,
        min_theta,
    })
}

/// Which cost a comparison ranks controllers by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostBasis {
    /// Electricity cost only.
    Energy,
    /// Electricity cost plus violation penalties.
    #[default]
    Total,
}

impl CostBasis {
    pub fn of(self, report: &CostReport) -> f64 {
        match self {
            CostBasis::Energy => report.total_energy_cost,
            CostBasis::Total => report.total_cost(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerEntry {
    pub cost: f64,
    pub energy_cost: f64,
    /// `(baseline - cost) / baseline`; absent when the baseline cost is zero.
    pub improvement: Option<f64>,
    pub violation_degree_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub window: String,
    /// Keyed by controller name.
    pub entries: BTreeMap<String, ControllerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub basis: CostBasis,
    pub controllers: Vec<String>,
    /// One row per window, ordered as the windows first appear.
    pub rows: Vec<ComparisonRow>,
    /// Mean cost per controller over all windows.
    pub mean_cost: BTreeMap<String, f64>,
}

pub fn compare(
    reports: &[CostReport],
    baseline: &str,
    basis: CostBasis,
) -> Result<ComparisonTable> {
    let mut windows: Vec<String> = Vec::new();
    let mut controllers: Vec<String> = Vec::new();
    let mut by_key: BTreeMap<(String, String), &CostReport> = BTreeMap::new();
    for r in reports {
        if !windows.contains(&r.window) {
            windows.push(r.window.clone());
        }
        if !controllers.contains(&r.controller) {
            controllers.push(r.controller.clone());
        }
        if by_key
            .insert((r.window.clone(), r.controller.clone()), r)
            .is_some()
        {
            return Err(Error::invalid(format!(
                "two reports for {} in window {}",
                r.controller, r.window
            )));
        }
    }
    if !controllers.iter().any(|c| c == baseline) {
        return Err(Error::MissingBaseline(baseline.to_string()));
    }
    let mut rows = Vec::with_capacity(windows.len());
    let mut totals: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for w in &windows {
        let base = by_key
            .get(&(w.clone(), baseline.to_string()))
            .ok_or_else(|| Error::MissingBaseline(format!("{baseline} (window {w})")))?;
        let base_cost = basis.of(base);
        let mut entries = BTreeMap::new();
        for c in &controllers {
            let Some(r) = by_key.get(&(w.clone(), c.clone())) else {
                continue;
            };
            let cost = basis.of(r);
            let improvement = (base_cost != 0.0).then(|| (base_cost - cost) / base_cost);
            entries.insert(
                c.clone(),
                ControllerEntry {
                    cost,
                    energy_cost: r.total_energy_cost,
                    improvement,
                    violation_degree_hours: r.total_violation_degree_hours,
                },
            );
            let acc = totals.entry(c.clone()).or_insert((0.0, 0));
            acc.0 += cost;
            acc.1 += 1;
        }
        rows.push(ComparisonRow {
            window: w.clone(),
            entries,
        });
    }
    let mean_cost = totals
        .into_iter()
        .map(|(c, (s, k))| (c, s / k as f64))
        .collect();
    Ok(ComparisonTable {
        baseline: baseline.to_string(),
        basis,
        controllers,
        rows,
        mean_cost,
    })
}

impl ComparisonTable {
    /// Wide CSV: one row per window, four columns per controller.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["window".to_string()];
        for c in &self.controllers {
            for suffix in [
                "cost",
                "energy_cost",
                "improvement",
                "violation_degree_hours",
            ] {
                header.push(format!("{c}_{suffix}"));
            }
        }
        writer.write_record(&header)?;
        for row in &self.rows {
            let mut fields = vec![row.window.clone()];
            for c in &self.controllers {
                match row.entries.get(c) {
                    Some(e) => {
                        fields.push(e.cost.to_string());
                        fields.push(e.energy_cost.to_string());
                        fields.push(e.improvement.map(|v| v.to_string()).unwrap_or_default());
                        fields.push(e.violation_degree_hours.to_string());
                    }
                    None => fields.extend(std::iter::repeat(String::new()).take(4)),
                }
            }
            writer.write_record(&fields)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(controller: &str, window: &str, cost: f64) -> CostReport {
        CostReport {
            controller: controller.into(),
            window: window.into(),
            hours: 24,
            total_energy_kwh: 0.0,
            total_energy_cost: cost,
            violation_under_degree_hours: 0.0,
            violation_over_degree_hours: 0.0,
            total_violation_degree_hours: 0.0,
            penalty_cost: 0.0,
            max_theta: 25.0,
            min_theta: 20.0,
        }
    }

    #[test]
    fn comparison_arithmetic() {
        let reports = vec![report("greedy", "w", 100.0), report("qfr-mdp", "w", 80.0)];
        let table = compare(&reports, "greedy", CostBasis::Energy).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.entries["greedy"].improvement, Some(0.0));
        assert!((row.entries["qfr-mdp"].improvement.unwrap() - 0.2).abs() < 1e-12);
        assert!(matches!(
            compare(&reports, "fixed-rule", CostBasis::Energy),
            Err(Error::MissingBaseline(_))
        ));
    }

    #[test]
    fn one_row_per_window() {
        let mut reports = Vec::new();
        for year in 2011..=2024 {
            let w = format!("summer-{year}");
            reports.push(report("greedy", &w, 100.0));
            reports.push(report("qfr-mdp", &w, 90.0));
        }
        let table = compare(&reports, "greedy", CostBasis::Total).unwrap();
        assert_eq!(table.rows.len(), 14);
        let csv = table.to_csv_string().unwrap();
        assert_eq!(csv.lines().count(), 15);
    }

    fn record(t: usize, action: usize, energy: f64, price: f64, over: f64) -> StepRecord {
        StepRecord {
            t,
            hour: 400_000 + t as i64,
            theta: 25.0,
            theta_index: 0,
            regime: None,
            price,
            t_out: 30.0,
            heat_load: 1.5e6,
            action,
            theta_next: 27.0 + over,
            energy_kwh: energy,
            energy_cost: energy * price / 1000.0,
            violation_under: 0.0,
            violation_over: over,
        }
    }

    #[test]
    fn summaries_are_column_sums() {
        let records = vec![
            record(0, 0, 0.0, 40.0, 0.0),
            record(1, 2, 625.0, 40.0, 0.5),
            record(2, 1, 300.0, 80.0, 0.0),
        ];
        let mut traj = Trajectory {
            controller: "greedy".into(),
            window: Window::new(400_000, 400_003).unwrap(),
            records,
        };
        let cost = CostSpec::default();
        let rep = summarize(&traj, &cost).unwrap();
        assert_eq!(rep.total_energy_kwh, 925.0);
        assert!((rep.total_energy_cost - (25.0 + 24.0)).abs() < 1e-12);
        assert_eq!(rep.total_violation_degree_hours, 0.5);
        assert_eq!(rep.penalty_cost, 500.0);
        assert_eq!(rep.max_theta, 27.5);

        traj.records.reverse();
        let shuffled = summarize(&traj, &cost).unwrap();
        assert_eq!(shuffled.total_energy_kwh, rep.total_energy_kwh);
        assert!((shuffled.total_energy_cost - rep.total_energy_cost).abs() < 1e-12);

        let idle = Trajectory {
            controller: "idle".into(),
            window: traj.window,
            records: vec![record(0, 0, 0.0, 40.0, 0.0); 3],
        };
        assert_eq!(summarize(&idle, &cost).unwrap().total_energy_cost, 0.0);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let traj = Trajectory {
            controller: "greedy".into(),
            window: Window::new(400_000, 400_002).unwrap(),
            records: vec![
                record(0, 1, 312.5, 41.3, 0.0),
                record(1, 0, 0.0, 17.25, 0.1),
            ],
        };
        let text = traj.to_csv_string().unwrap();
        assert!(text.starts_with("t,timestamp,theta,theta_index,regime,price,"));
        let back = Trajectory::from_csv_str("greedy", &text).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn local_clock() {
        assert_eq!(local_hour(24 * 1000 + 3, 0), 3);
        assert_eq!(local_hour(24 * 1000 + 3, -5), 22);
        assert_eq!(local_hour(24 * 1000 + 23, 2), 1);
    }
}
