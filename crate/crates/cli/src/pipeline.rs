//! The stages behind the commands, as plain functions over loaded inputs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chillplan_core::controllers::{Controller, MdpController};
use chillplan_core::ingest::{align, from_hour_index, load_series, SeriesKind, TimeSeries, Window};
use chillplan_core::mdp::{
    build_lp, dp_oracle, extract_policy, solve_occupancy, MdpProblem, OccupancyMeasure, Policy,
};
use chillplan_core::qfr::{fit_regimes, RegimeModel};
use chillplan_core::regimes::{estimate, TransitionModel};
use chillplan_core::scenario::cycle_profile;
use chillplan_core::sim::{rollout, summarize, CostReport, SimSettings, Trajectory};
use chillplan_core::thermal::heat_load;
use chrono::Datelike;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Streams of the run seed, one per consumer.
const STREAM_WORKLOAD: u64 = 1;
const STREAM_ROLLOUT: u64 = 2;

/// A seed for `index` within `stream`, derived from the run seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 16);
    rng.next_u64()
}

#[derive(Debug, Clone)]
pub struct Inputs {
    pub price: TimeSeries,
    pub temperature: TimeSeries,
    pub workload: TimeSeries,
}

pub fn load_price(cfg: &RunConfig) -> Result<TimeSeries> {
    load_series(&cfg.data.price, SeriesKind::Price)
        .with_context(|| format!("loading {}", cfg.data.price.display()))
}

/// Loads every trace. Without a workload file, one is synthesized over the
/// span covered by prices and temperatures.
pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let price = load_price(cfg)?;
    let temperature = load_series(&cfg.data.temperature, SeriesKind::Temperature)
        .with_context(|| format!("loading {}", cfg.data.temperature.display()))?;
    let workload = match &cfg.data.workload {
        Some(path) => load_series(path, SeriesKind::Workload)
            .with_context(|| format!("loading {}", path.display()))?,
        None => {
            let start = price.start().min(temperature.start());
            let end = price.end().max(temperature.end());
            cfg.workload.synth().generate(
                derive_seed(cfg.seed, STREAM_WORKLOAD, 0),
                start,
                (end - start) as usize,
            )?
        }
    };
    Ok(Inputs {
        price,
        temperature,
        workload,
    })
}

/// Price observations inside the training span, optionally summer months only.
pub fn training_observations(cfg: &RunConfig, price: &TimeSeries) -> Result<Vec<(i64, f64)>> {
    let window = cfg.qfr.train_window()?;
    let obs: Vec<(i64, f64)> = price
        .points()
        .filter(|&(h, _)| h >= window.start && h < window.end)
        .filter(|&(h, _)| !cfg.qfr.summers_only || (6..=8).contains(&from_hour_index(h).month()))
        .collect();
    if obs.is_empty() {
        bail!("no price observations in the training span {window}");
    }
    Ok(obs)
}

pub fn fit(cfg: &RunConfig, price: &TimeSeries) -> Result<RegimeModel> {
    let obs = training_observations(cfg, price)?;
    let started = Instant::now();
    let model = fit_regimes(&obs, cfg.qfr.regimes, &cfg.qfr.design())?;
    log::info!(
        "fitted {} regimes on {} observations in {:.2?}",
        cfg.qfr.regimes,
        obs.len(),
        started.elapsed()
    );
    Ok(model)
}

pub fn estimate_chain(
    cfg: &RunConfig,
    price: &TimeSeries,
    model: &RegimeModel,
) -> Result<TransitionModel> {
    let obs = training_observations(cfg, price)?;
    let classified: Vec<(i64, usize)> = obs
        .iter()
        .map(|&(h, p)| (h, model.classify(h, p)))
        .collect();
    Ok(estimate(
        &classified,
        model.regimes,
        cfg.chain.alpha,
        cfg.chain.grouping,
    )?)
}

/// The planning instance: cycle-averaged weather and load over the profile
/// window, regime prices and matrices from the cycle anchored at `mdp.anchor`.
pub fn build_problem(
    cfg: &RunConfig,
    inputs: &Inputs,
    model: &RegimeModel,
    chain: &TransitionModel,
) -> Result<MdpProblem> {
    let n = cfg.mdp.cycle_hours;
    let profile = cfg.mdp.profile_window()?;
    let t_out = cycle_profile(&inputs.temperature.slice(&profile)?, n)?;
    let q = cycle_profile(&inputs.workload.slice(&profile)?, n)?
        .into_iter()
        .map(|cores| heat_load(&cfg.plant.heat_load, cores))
        .collect();
    let planning_cost = cfg.cost.tightened(cfg.mdp.margin())?;
    let cycle = cfg.mdp.cycle_window()?;
    Ok(MdpProblem::from_models(
        cycle.start,
        cfg.mdp.grid()?,
        planning_cost,
        &cfg.plant,
        t_out,
        q,
        model,
        chain,
    )?)
}

/// What `plan` reports besides the policy. Deliberately free of timings so
/// reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub cycle_start: String,
    pub horizon: usize,
    pub temperatures: usize,
    pub regimes: usize,
    pub actions: usize,
    pub variables: usize,
    pub constraints: usize,
    /// Optimal average cost, $ per hour.
    pub objective: f64,
    pub normalization_residual: f64,
    pub flow_residual: f64,
    pub fallback_states: usize,
    pub safety_margin: f64,
    /// Relative value iteration gain, when verification was requested.
    pub dp_gain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub policy: Policy,
    pub occupancy: OccupancyMeasure,
    pub summary: PlanSummary,
}

/// Gains must agree to this relative tolerance when verifying.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

pub fn plan(cfg: &RunConfig, problem: &MdpProblem) -> Result<PlanOutput> {
    let started = Instant::now();
    let lp = build_lp(problem)?;
    let occupancy = solve_occupancy(&lp)?;
    log::info!(
        "solved occupancy LP ({} vars, {} rows) in {:.2?}",
        lp.program.num_vars(),
        lp.program.num_rows(),
        started.elapsed()
    );
    let residuals = occupancy.residuals(problem)?;
    if !residuals.within(VERIFY_TOLERANCE) {
        bail!("occupancy measure violates its constraints: {residuals:?}");
    }
    let policy = extract_policy(problem, &occupancy)?;
    let dp_gain = if cfg.mdp.verify {
        let started = Instant::now();
        let dp = dp_oracle(problem)?;
        log::info!(
            "value iteration: {} sweeps in {:.2?}",
            dp.sweeps,
            started.elapsed()
        );
        let rel = (dp.gain - occupancy.objective).abs() / dp.gain.abs().max(1e-12);
        if rel > VERIFY_TOLERANCE {
            bail!(
                "LP objective {} and value-iteration gain {} differ by {rel:.2e} relative",
                occupancy.objective,
                dp.gain
            );
        }
        Some(dp.gain)
    } else {
        None
    };
    let shape = problem.shape();
    let summary = PlanSummary {
        cycle_start: chillplan_core::ingest::format_hour(problem.cycle_start()),
        horizon: shape.horizon,
        temperatures: shape.temps,
        regimes: shape.regimes,
        actions: shape.actions,
        variables: lp.program.num_vars(),
        constraints: lp.program.num_rows(),
        objective: occupancy.objective,
        normalization_residual: residuals.normalization,
        flow_residual: residuals.flow,
        fallback_states: policy.fallback_count(),
        safety_margin: cfg.mdp.margin(),
        dp_gain,
    };
    Ok(PlanOutput {
        policy,
        occupancy,
        summary,
    })
}

pub fn settings(cfg: &RunConfig, model: Option<&RegimeModel>) -> Result<SimSettings> {
    Ok(SimSettings {
        plant: cfg.plant,
        cost: cfg.cost,
        grid: cfg.mdp.grid()?,
        utc_offset_hours: cfg.utc_offset_hours,
        regime_model: model.cloned(),
    })
}

pub fn controllers(
    cfg: &RunConfig,
    model: &RegimeModel,
    policy: Option<&Policy>,
) -> Result<Vec<Controller>> {
    cfg.simulate
        .controllers
        .iter()
        .map(|name| {
            Ok(match name.as_str() {
                "qfr-mdp" => {
                    let policy = policy.context("the qfr-mdp controller needs a policy")?;
                    Controller::QfrMdp(Box::new(MdpController::new(
                        policy.clone(),
                        model.clone(),
                        cfg.simulate.sampling,
                    )?))
                }
                "greedy" => Controller::Greedy,
                "fixed-rule" => Controller::FixedRule(cfg.fixed_rule),
                other => bail!("unknown controller {other:?}"),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub window_index: usize,
    pub trajectory: Trajectory,
    pub report: CostReport,
}

/// Rolls every controller out over every window, in parallel. Each window
/// has its own seed, shared by all controllers; results come back ordered by
/// window, then controller.
pub fn simulate(
    cfg: &RunConfig,
    inputs: &Inputs,
    windows: &[Window],
    controllers: &[Controller],
    settings: &SimSettings,
) -> Result<Vec<SimulationRun>> {
    let datasets = windows
        .iter()
        .map(|w| {
            align(&inputs.price, &inputs.temperature, &inputs.workload, *w)
                .with_context(|| format!("window {w}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..windows.len())
        .flat_map(|w| (0..controllers.len()).map(move |c| (w, c)))
        .collect();
    let theta0 = cfg.initial_theta();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len())
        .max(1);
    let mut results: Vec<Option<Result<SimulationRun>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&(w, c)) = jobs.get(k) else { break };
                        let seed = derive_seed(cfg.seed, STREAM_ROLLOUT, w as u64);
                        let run = rollout(&controllers[c], &datasets[w], settings, theta0, seed)
                            .map_err(anyhow::Error::from)
                            .and_then(|trajectory| {
                                let report = summarize(&trajectory, &settings.cost)?;
                                Ok(SimulationRun {
                                    window_index: w,
                                    trajectory,
                                    report,
                                })
                            });
                        done.push((k, run));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (k, run) in h.join().expect("rollout worker panicked") {
                results[k] = Some(run);
            }
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// A filesystem-friendly name for a window: first day and length.
pub fn window_slug(window: &Window) -> String {
    format!(
        "{}_{}h",
        from_hour_index(window.start).format("%Y%m%d"),
        window.hours()
    )
}
