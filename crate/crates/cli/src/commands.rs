//! One function per subcommand. Each reads what earlier stages wrote under
//! the output directory and writes its own files there.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chillplan_core::ingest::{format_hour, Window};
use chillplan_core::mdp::Policy;
use chillplan_core::qfr::RegimeModel;
use chillplan_core::regimes::TransitionModel;
use chillplan_core::sim::{compare, ComparisonTable, CostReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::pipeline;

pub const REGIME_MODEL: &str = "regime_model.json";
pub const BOUNDARIES: &str = "qfr_boundaries.csv";
pub const TRANSITION_MODEL: &str = "transition_model.json";
pub const POLICY: &str = "policy.json";
pub const PLAN: &str = "plan.json";
pub const OCCUPANCY: &str = "occupancy.json";
pub const TRAJECTORIES: &str = "trajectories";
pub const REPORTS_JSON: &str = "reports.json";
pub const REPORTS_CSV: &str = "reports.csv";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const PLOTS: &str = "plots";

/// Where artifacts live; model and policy locations can be overridden.
#[derive(Debug, Clone)]
pub struct Paths {
    pub out: PathBuf,
    pub regime_model: PathBuf,
    pub transition_model: PathBuf,
    pub policy: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Self {
        Self {
            out: out.to_path_buf(),
            regime_model: out.join(REGIME_MODEL),
            transition_model: out.join(TRANSITION_MODEL),
            policy: out.join(POLICY),
        }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {} (has the earlier stage run?)", path.display()))
}

fn read_regime_model(paths: &Paths) -> Result<RegimeModel> {
    RegimeModel::from_json(&read(&paths.regime_model)?)
        .with_context(|| format!("parsing {}", paths.regime_model.display()))
}

fn read_transition_model(paths: &Paths) -> Result<TransitionModel> {
    TransitionModel::from_json(&read(&paths.transition_model)?)
        .with_context(|| format!("parsing {}", paths.transition_model.display()))
}

fn read_policy(paths: &Paths) -> Result<Policy> {
    Policy::from_json(&read(&paths.policy)?)
        .with_context(|| format!("parsing {}", paths.policy.display()))
}

fn read_reports(paths: &Paths) -> Result<Vec<CostReport>> {
    let path = paths.file(REPORTS_JSON);
    let reports: Vec<CostReport> = serde_json::from_str(&read(&path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    if reports.is_empty() {
        bail!("{} holds no simulation results", path.display());
    }
    Ok(reports)
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn records_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Header and one row per training hour: price, regime, then every level.
fn level_table(
    model: &RegimeModel,
    points: impl IntoIterator<Item = (i64, f64)>,
) -> (Vec<String>, Vec<Vec<String>>) {
    let m = model.regimes;
    let mut header = vec!["timestamp".to_string(), "price".into(), "regime".into()];
    header.extend((1..m).map(|k| format!("boundary_{k}")));
    header.extend((0..m).map(|p| format!("representative_{p}")));
    let rows = points
        .into_iter()
        .map(|(h, price)| {
            let levels = model.levels(h);
            let mut row = vec![
                format_hour(h),
                price.to_string(),
                model.classify(h, price).to_string(),
            ];
            row.extend(levels.boundaries.iter().map(f64::to_string));
            row.extend(levels.representatives.iter().map(f64::to_string));
            row
        })
        .collect();
    (header, rows)
}

pub fn fit_qfr(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let price = pipeline::load_price(cfg)?;
    let model = pipeline::fit(cfg, &price)?;
    let obs = pipeline::training_observations(cfg, &price)?;
    write(&paths.regime_model, model.to_json()?)?;
    let (header, rows) = level_table(&model, obs);
    write(&paths.file(BOUNDARIES), records_csv(&header, rows)?)?;
    println!(
        "fit-qfr: {} regimes, {} boundary fits, {} representative fits",
        model.regimes,
        model.boundary_fits.len(),
        model.representative_fits.len()
    );
    Ok(())
}

pub fn estimate_chain(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let price = pipeline::load_price(cfg)?;
    let model = read_regime_model(paths)?;
    let chain = pipeline::estimate_chain(cfg, &price, &model)?;
    write(&paths.transition_model, chain.to_json()?)?;
    let worst = chain
        .buckets()
        .map(|(_, m)| m.max_row_error())
        .fold(0.0, f64::max);
    println!(
        "estimate-chain: {} buckets of {}x{} matrices, max row-sum error {worst:.1e}",
        chain.bucket_count(),
        chain.regimes(),
        chain.regimes()
    );
    Ok(())
}

pub fn plan(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let inputs = pipeline::load_inputs(cfg)?;
    let model = read_regime_model(paths)?;
    let chain = read_transition_model(paths)?;
    let problem = pipeline::build_problem(cfg, &inputs, &model, &chain)?;
    let out = pipeline::plan(cfg, &problem)?;
    write(&paths.policy, out.policy.to_json()?)?;
    write(
        &paths.file(PLAN),
        serde_json::to_string_pretty(&out.summary)?,
    )?;
    if cfg.mdp.dump_occupancy {
        write(&paths.file(OCCUPANCY), out.occupancy.to_json()?)?;
    }
    match out.summary.dp_gain {
        Some(g) => println!(
            "plan: objective {:.9} $/h (value iteration {g:.9})",
            out.summary.objective
        ),
        None => println!("plan: objective {:.9} $/h", out.summary.objective),
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let inputs = pipeline::load_inputs(cfg)?;
    let model = read_regime_model(paths)?;
    let needs_policy = cfg.simulate.controllers.iter().any(|c| c == "qfr-mdp");
    let policy = if needs_policy {
        Some(read_policy(paths)?)
    } else {
        None
    };
    let controllers = pipeline::controllers(cfg, &model, policy.as_ref())?;
    let settings = pipeline::settings(cfg, Some(&model))?;
    let windows = cfg.simulate.windows()?;
    let runs = pipeline::simulate(cfg, &inputs, &windows, &controllers, &settings)?;
    let dir = paths.file(TRAJECTORIES);
    for run in &runs {
        let name = format!(
            "{}_{}.csv",
            pipeline::window_slug(&windows[run.window_index]),
            run.trajectory.controller
        );
        write(&dir.join(name), run.trajectory.to_csv_string()?)?;
    }
    let reports: Vec<&CostReport> = runs.iter().map(|r| &r.report).collect();
    write(
        &paths.file(REPORTS_JSON),
        serde_json::to_string_pretty(&reports)?,
    )?;
    write(&paths.file(REPORTS_CSV), csv_string(&reports)?)?;
    for r in &reports {
        println!(
            "simulate: {} {:<10} energy ${:.2} penalty ${:.2} theta [{:.2}, {:.2}]",
            r.window, r.controller, r.total_energy_cost, r.penalty_cost, r.min_theta, r.max_theta
        );
    }
    Ok(())
}

fn comparison(cfg: &RunConfig, paths: &Paths) -> Result<ComparisonTable> {
    let reports = read_reports(paths)?;
    Ok(compare(
        &reports,
        &cfg.simulate.baseline,
        cfg.simulate.cost_basis,
    )?)
}

pub fn compare_cmd(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let table = comparison(cfg, paths)?;
    write(&paths.file(COMPARISON_CSV), table.to_csv_string()?)?;
    write(&paths.file(COMPARISON_JSON), table.to_json()?)?;
    for (c, mean) in &table.mean_cost {
        println!("compare: {c:<10} mean cost ${mean:.2}");
    }
    Ok(())
}

/// Plot-ready CSVs: regime bands, the daily policy, 24-hour traces and the
/// per-window cost comparison.
pub fn export_plot_data(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let table = comparison(cfg, paths)?;
    let inputs = pipeline::load_inputs(cfg)?;
    let model = read_regime_model(paths)?;
    let policy = read_policy(paths)?;
    let day = Window::days(cfg.export_day(), cfg.export_day())?;
    let dir = paths.file(PLOTS);

    let bands = Window::new(
        day.start,
        day.start + 24 * i64::from(cfg.export.band_days.max(1)),
    )?;
    let points: Vec<(i64, f64)> = inputs
        .price
        .points()
        .filter(|&(h, _)| h >= bands.start && h < bands.end)
        .collect();
    if points.is_empty() {
        bail!("no prices around the export day {}", cfg.export_day());
    }
    let (header, rows) = level_table(&model, points);
    write(&dir.join("fig1_regimes.csv"), records_csv(&header, rows)?)?;

    write(
        &dir.join("fig2_policy.csv"),
        policy_table(&policy, day.start)?,
    )?;

    let controllers = pipeline::controllers(cfg, &model, Some(&policy))?;
    let settings = pipeline::settings(cfg, Some(&model))?;
    let runs = pipeline::simulate(cfg, &inputs, &[day], &controllers, &settings)?;
    let header: Vec<String> = [
        "controller",
        "timestamp",
        "theta",
        "action",
        "theta_next",
        "price",
        "regime",
        "t_out",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for run in &runs {
        for r in &run.trajectory.records {
            rows.push(vec![
                run.trajectory.controller.clone(),
                format_hour(r.hour),
                r.theta.to_string(),
                r.action.to_string(),
                r.theta_next.to_string(),
                r.price.to_string(),
                r.regime.map(|p| p.to_string()).unwrap_or_default(),
                r.t_out.to_string(),
            ]);
        }
    }
    write(&dir.join("fig3_traces.csv"), records_csv(&header, rows)?)?;

    let header: Vec<String> = ["window", "controller", "cost", "energy_cost", "improvement"]
        .map(String::from)
        .to_vec();
    let rows = table.rows.iter().flat_map(|row| {
        row.entries.iter().map(move |(c, e)| {
            vec![
                row.window.clone(),
                c.clone(),
                e.cost.to_string(),
                e.energy_cost.to_string(),
                e.improvement.map(|v| v.to_string()).unwrap_or_default(),
            ]
        })
    });
    write(&dir.join("fig4_costs.csv"), records_csv(&header, rows)?)?;
    println!("export-plot-data: 4 tables in {}", dir.display());
    Ok(())
}

/// One row per (hour, regime, temperature) of the cycle starting at `start`.
fn policy_table(policy: &Policy, start: i64) -> Result<String> {
    let shape = policy.shape();
    let mut header = vec![
        "timestamp".to_string(),
        "t".into(),
        "regime".into(),
        "theta".into(),
        "expected_action".into(),
        "argmax_action".into(),
        "fallback".into(),
    ];
    header.extend((0..shape.actions).map(|a| format!("p_{a}")));
    let grid = policy.grid();
    let mut rows = Vec::with_capacity(shape.horizon * shape.regimes * shape.temps);
    for t in 0..shape.horizon {
        for p in 0..shape.regimes {
            for i in 0..shape.temps {
                let mut row = vec![
                    format_hour(start + t as i64),
                    t.to_string(),
                    p.to_string(),
                    grid.value(i).to_string(),
                    policy.expected_action(t, i, p).to_string(),
                    policy.argmax_action(t, i, p).to_string(),
                    policy.is_fallback(t, i, p).to_string(),
                ];
                row.extend(policy.probabilities(t, i, p).iter().map(f64::to_string));
                rows.push(row);
            }
        }
    }
    records_csv(&header, rows)
}
