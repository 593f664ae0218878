//! The run configuration: one TOML file, overridable from the environment.
//!
//! Any key can be overridden with `CHILLPLAN__<SECTION>__<KEY>=<value>`, for
//! example `CHILLPLAN__QFR__REGIMES=8` or `CHILLPLAN__PLANT__CHILLER__A_MAX=5`.
//! Values are parsed as TOML literals when possible and as strings otherwise.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chillplan_core::controllers::{FixedRule, Sampling};
use chillplan_core::ingest::{Window, WorkloadSynth};
use chillplan_core::mdp::{CostSpec, ThetaGrid};
use chillplan_core::qfr::FourierDesign;
use chillplan_core::regimes::MonthGrouping;
use chillplan_core::sim::CostBasis;
use chillplan_core::thermal::Plant;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "CHILLPLAN__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Local time minus UTC, hours. Drives the fixed rule's clock.
    #[serde(default)]
    pub utc_offset_hours: i32,
    pub data: DataConfig,
    #[serde(default)]
    pub workload: WorkloadConfig,
    pub qfr: QfrConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub plant: Plant,
    #[serde(default)]
    pub cost: CostSpec,
    pub mdp: MdpConfig,
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub fixed_rule: FixedRule,
    #[serde(default)]
    pub export: ExportConfig,
}

fn default_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub price: PathBuf,
    pub temperature: PathBuf,
    /// Active-core counts; synthesized from `[workload]` when absent.
    #[serde(default)]
    pub workload: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    pub base_cores: u64,
    pub amplitude: f64,
    pub noise: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            base_cores: 50_000,
            amplitude: 0.4,
            noise: 0.05,
        }
    }
}

impl WorkloadConfig {
    pub fn synth(&self) -> WorkloadSynth {
        WorkloadSynth {
            base_cores: self.base_cores,
            amplitude: self.amplitude,
            noise: self.noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QfrConfig {
    pub regimes: usize,
    #[serde(default = "default_daily")]
    pub daily_harmonics: usize,
    #[serde(default = "default_seasonal")]
    pub seasonal_harmonics: usize,
    /// First and last day (inclusive) of the training span.
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    /// Keep only June–August hours of the training span.
    #[serde(default = "yes")]
    pub summers_only: bool,
}

fn default_daily() -> usize {
    3
}

fn default_seasonal() -> usize {
    2
}

fn yes() -> bool {
    true
}

impl QfrConfig {
    pub fn design(&self) -> FourierDesign {
        FourierDesign::new(self.daily_harmonics, self.seasonal_harmonics)
    }

    pub fn train_window(&self) -> Result<Window> {
        Ok(Window::days(self.train_start, self.train_end)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub alpha: f64,
    pub grouping: MonthGrouping,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            grouping: MonthGrouping::Monthly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpConfig {
    #[serde(default = "default_theta_min")]
    pub theta_min: f64,
    #[serde(default = "default_theta_max")]
    pub theta_max: f64,
    #[serde(default = "default_theta_step")]
    pub theta_step: f64,
    /// Planning cycle length in hours.
    #[serde(default = "default_cycle")]
    pub cycle_hours: usize,
    /// First day of the planning cycle; its regime prices and transition
    /// matrices are the ones planned against.
    pub anchor: NaiveDate,
    /// Days (inclusive) whose outdoor temperature and load are averaged, per
    /// position in the cycle, into the planning profile.
    pub profile_start: NaiveDate,
    pub profile_end: NaiveDate,
    /// Shrinks the planning comfort band on both sides; defaults to half a
    /// grid step.
    #[serde(default)]
    pub safety_margin: Option<f64>,
    /// Also solve with relative value iteration and compare the gains.
    #[serde(default)]
    pub verify: bool,
    /// Write the full occupancy measure next to the policy.
    #[serde(default)]
    pub dump_occupancy: bool,
}

fn default_theta_min() -> f64 {
    15.0
}

fn default_theta_max() -> f64 {
    32.0
}

fn default_theta_step() -> f64 {
    0.5
}

fn default_cycle() -> usize {
    24
}

impl MdpConfig {
    pub fn grid(&self) -> Result<ThetaGrid> {
        Ok(ThetaGrid::new(
            self.theta_min,
            self.theta_max,
            self.theta_step,
        )?)
    }

    pub fn margin(&self) -> f64 {
        self.safety_margin.unwrap_or(self.theta_step / 2.0)
    }

    pub fn cycle_window(&self) -> Result<Window> {
        let start = Window::days(self.anchor, self.anchor)?.start;
        Ok(Window::new(start, start + self.cycle_hours as i64)?)
    }

    pub fn profile_window(&self) -> Result<Window> {
        Ok(Window::days(self.profile_start, self.profile_end)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Whole summers (June 1 – August 31) to simulate.
    #[serde(default)]
    pub summers: Vec<i32>,
    /// Additional day ranges (inclusive) to simulate.
    #[serde(default)]
    pub windows: Vec<DayRange>,
    #[serde(default = "default_controllers")]
    pub controllers: Vec<String>,
    /// Starting indoor temperature; defaults to the middle of the band.
    #[serde(default)]
    pub initial_theta: Option<f64>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default = "default_baseline")]
    pub baseline: String,
    #[serde(default)]
    pub cost_basis: CostBasis,
}

pub const CONTROLLERS: [&str; 3] = ["qfr-mdp", "greedy", "fixed-rule"];

fn default_controllers() -> Vec<String> {
    CONTROLLERS.iter().map(|s| s.to_string()).collect()
}

fn default_baseline() -> String {
    "greedy".into()
}

impl SimulateConfig {
    pub fn windows(&self) -> Result<Vec<Window>> {
        let mut out = Vec::new();
        for &y in &self.summers {
            out.push(Window::summer(y)?);
        }
        for r in &self.windows {
            out.push(Window::days(r.start, r.end)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// Day shown in the policy and trace exports; defaults to the planning
    /// anchor.
    #[serde(default)]
    pub day: Option<NaiveDate>,
    /// Days of regime bands around `day` in the band export.
    #[serde(default = "default_band_days")]
    pub band_days: u32,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            day: None,
            band_days: 7,
        }
    }
}

fn default_band_days() -> u32 {
    7
}

impl RunConfig {
    /// Reads `path`, applies environment overrides and resolves relative data
    /// paths against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let vars: Vec<(String, String)> = std::env::vars()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        let mut cfg = Self::parse_with_overrides(&text, &vars)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().context("config is not valid TOML")?;
        for (key, value) in overrides {
            apply_override(&mut doc, key, value)?;
        }
        dates_to_strings(&mut doc);
        let cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .context("invalid config")?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.price);
        fix(&mut self.data.temperature);
        if let Some(w) = self.data.workload.as_mut() {
            fix(w);
        }
        fix(&mut self.out_dir);
    }

    /// Checks numeric invariants without touching the filesystem.
    pub fn validate_values(&self) -> Result<()> {
        self.plant.validate()?;
        self.cost.validate()?;
        self.fixed_rule.validate()?;
        self.workload.synth().generate(0, 0, 1)?;
        self.qfr.design().validate()?;
        self.qfr.train_window()?;
        if !(chillplan_core::qfr::MIN_REGIMES..=chillplan_core::qfr::MAX_REGIMES)
            .contains(&self.qfr.regimes)
        {
            bail!(
                "qfr.regimes must be between {} and {}",
                chillplan_core::qfr::MIN_REGIMES,
                chillplan_core::qfr::MAX_REGIMES
            );
        }
        if !(self.chain.alpha >= 0.0 && self.chain.alpha.is_finite()) {
            bail!("chain.alpha must be finite and non-negative");
        }
        let grid = self.mdp.grid()?;
        let planning = self.cost.tightened(self.mdp.margin())?;
        chillplan_core::mdp::StateSpace::new(grid, self.qfr.regimes, self.plant.chiller.a_max)?
            .validate_band(&planning)?;
        if self.mdp.cycle_hours == 0 {
            bail!("mdp.cycle_hours must be positive");
        }
        let profile = self.mdp.profile_window()?;
        if profile.hours() < self.mdp.cycle_hours {
            bail!(
                "the profile window has {} hours, fewer than one {}-hour cycle",
                profile.hours(),
                self.mdp.cycle_hours
            );
        }
        let windows = self.simulate.windows()?;
        if windows.is_empty() {
            bail!("simulate needs at least one summer or window");
        }
        if self.simulate.controllers.is_empty() {
            bail!("simulate.controllers is empty");
        }
        for c in &self.simulate.controllers {
            if !CONTROLLERS.contains(&c.as_str()) {
                bail!("unknown controller {c:?}; expected one of {CONTROLLERS:?}");
            }
        }
        if !self.simulate.controllers.contains(&self.simulate.baseline) {
            bail!(
                "baseline {:?} is not among the simulated controllers",
                self.simulate.baseline
            );
        }
        let theta0 = self.initial_theta();
        if !(theta0 >= grid.min() && theta0 <= grid.max()) {
            bail!("simulate.initial_theta {theta0} is outside the temperature grid");
        }
        Ok(())
    }

    /// Full validation: values plus the existence of every input file.
    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        for p in [
            Some(&self.data.price),
            Some(&self.data.temperature),
            self.data.workload.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn initial_theta(&self) -> f64 {
        self.simulate
            .initial_theta
            .unwrap_or(0.5 * (self.cost.t_min + self.cost.t_max))
    }

    pub fn export_day(&self) -> NaiveDate {
        self.export.day.unwrap_or(self.mdp.anchor)
    }
}

/// Sets the value addressed by `CHILLPLAN__A__B__C` in the TOML tree.
fn apply_override(doc: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let path: Vec<String> = key
        .strip_prefix(ENV_PREFIX)
        .unwrap_or(key)
        .split("__")
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if path.iter().any(|s| s.is_empty()) {
        bail!("malformed override {key}");
    }
    let parsed = parse_literal(value);
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for name in parents {
        let entry = table
            .entry(name.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override {key}: {name} is not a section"),
        };
    }
    table.insert(last.clone(), parsed);
    Ok(())
}

/// TOML date literals become plain strings, which is what the config's
/// date fields deserialize from.
fn dates_to_strings(table: &mut toml::Table) {
    fn visit(v: &mut toml::Value) {
        match v {
            toml::Value::Datetime(d) => *v = toml::Value::String(d.to_string()),
            toml::Value::Table(t) => t.iter_mut().for_each(|(_, v)| visit(v)),
            toml::Value::Array(a) => a.iter_mut().for_each(visit),
            _ => {}
        }
    }
    table.iter_mut().for_each(|(_, v)| visit(v));
}

fn parse_literal(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}
