//! Runtime action rules: the planned policy and the two baselines.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{CostSpec, Policy};
use crate::qfr::RegimeModel;
use crate::thermal::Plant;

/// Smallest number of chillers that keeps the next-hour temperature at or
/// below `t_max`; all of them if none does.
pub fn greedy_action(theta: f64, t_out: f64, q: f64, plant: &Plant, cost: &CostSpec) -> usize {
    let thermal = plant.thermal();
    (0..=plant.chiller.a_max)
        .find(|&a| thermal.successor(theta, t_out, q, a) <= cost.t_max)
        .unwrap_or(plant.chiller.a_max)
}

/// Peak abstinence with scheduled night pre-cooling, blind to prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedRule {
    /// Local hour at which cooling stops (inclusive).
    pub peak_start: u32,
    /// Local hour at which cooling resumes (exclusive end of the peak).
    pub peak_end: u32,
    pub precool_start: u32,
    pub precool_end: u32,
}

impl Default for FixedRule {
    fn default() -> Self {
        Self {
            peak_start: 16,
            peak_end: 19,
            precool_start: 2,
            precool_end: 4,
        }
    }
}

impl FixedRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_start < self.peak_end && self.peak_end <= 24) {
            return Err(Error::invalid(format!(
                "fixed rule peak window [{}, {}) must satisfy start < end <= 24",
                self.peak_start, self.peak_end
            )));
        }
        if !(self.precool_start <= self.precool_end && self.precool_end <= 24) {
            return Err(Error::invalid(format!(
                "fixed rule pre-cool window [{}, {}) must satisfy start <= end <= 24",
                self.precool_start, self.precool_end
            )));
        }
        Ok(())
    }

    pub fn in_peak(&self, local_hour: u32) -> bool {
        (self.peak_start..self.peak_end).contains(&local_hour)
    }

    pub fn in_precool(&self, local_hour: u32) -> bool {
        (self.precool_start..self.precool_end).contains(&local_hour)
    }
}

/// Fixed-rule action at `local_hour`: nothing during the peak; during the
/// pre-cool window the most chillers that do not push the next-hour
/// temperature below `t_min` (never fewer than Greedy); Greedy otherwise.
pub fn fixed_rule_action(
    rule: &FixedRule,
    local_hour: u32,
    theta: f64,
    t_out: f64,
    q: f64,
    plant: &Plant,
    cost: &CostSpec,
) -> usize {
    if rule.in_peak(local_hour) {
        return 0;
    }
    let greedy = greedy_action(theta, t_out, q, plant, cost);
    if rule.in_precool(local_hour) {
        let thermal = plant.thermal();
        let deepest = (0..=plant.chiller.a_max)
            .rev()
            .find(|&a| thermal.successor(theta, t_out, q, a) >= cost.t_min)
            .unwrap_or(0);
        return deepest.max(greedy);
    }
    greedy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Draw from the policy's action distribution.
    #[default]
    Sample,
    /// Take the most probable action.
    Argmax,
}

/// Looks up the planned policy for the observed temperature and price regime.
#[derive(Debug)]
pub struct MdpController {
    policy: Policy,
    regime_model: RegimeModel,
    sampling: Sampling,
    uncovered: AtomicUsize,
}

impl Clone for MdpController {
    fn clone(&self) -> Self {
        Self {
            policy: self.policy.clone(),
            regime_model: self.regime_model.clone(),
            sampling: self.sampling,
            uncovered: AtomicUsize::new(0),
        }
    }
}

impl MdpController {
    pub fn new(policy: Policy, regime_model: RegimeModel, sampling: Sampling) -> Result<Self> {
        if policy.regimes() != regime_model.regimes {
            return Err(Error::Dimension(format!(
                "policy has {} regimes but the regime model has {}",
                policy.regimes(),
                regime_model.regimes
            )));
        }
        Ok(Self {
            policy,
            regime_model,
            sampling,
            uncovered: AtomicUsize::new(0),
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn regime_model(&self) -> &RegimeModel {
        &self.regime_model
    }

    pub fn sampling(&self) -> Sampling {
        self.sampling
    }

    /// Number of lookups that fell outside the policy's temperature grid.
    pub fn uncovered_count(&self) -> usize {
        self.uncovered.load(Ordering::Relaxed)
    }

    /// Returns `(action, regime)`. `step` counts hours from the start of the
    /// simulated window and is reduced modulo the policy's cycle; `u` is a
    /// uniform draw in `[0, 1)` used only by stochastic entries. Temperatures
    /// outside the grid fall back to `fallback`.
    pub fn decide(
        &self,
        step: usize,
        hour: i64,
        theta: f64,
        price: f64,
        u: f64,
        fallback: impl FnOnce() -> usize,
    ) -> (usize, usize) {
        let regime = self.regime_model.classify(hour, price);
        let grid = self.policy.grid();
        if !theta.is_finite() || !grid.covers(theta) {
            if self.uncovered.fetch_add(1, Ordering::Relaxed) == 0 {
                log::warn!(
                    "temperature {theta:.3} °C is outside the policy grid [{}, {}]; using the greedy rule",
                    grid.min(),
                    grid.max()
                );
            }
            return (fallback(), regime);
        }
        let t = step % self.policy.horizon();
        let i = grid.quantize(theta);
        let a = match self.sampling {
            Sampling::Sample => self.policy.sample_action(t, i, regime, u),
            Sampling::Argmax => self.policy.argmax_action(t, i, regime),
        };
        (a, regime)
    }
}

/// Convenience form of [`MdpController::decide`] for a single lookup.
#[allow(clippy::too_many_arguments)]
pub fn mdp_action(
    policy: &Policy,
    regime_model: &RegimeModel,
    step: usize,
    hour: i64,
    theta: f64,
    price: f64,
    u: f64,
    sampling: Sampling,
) -> Option<usize> {
    let regime = regime_model.classify(hour, price);
    let grid = policy.grid();
    if !grid.covers(theta) || regime >= policy.regimes() {
        return None;
    }
    let t = step % policy.horizon();
    let i = grid.quantize(theta);
    Some(match sampling {
        Sampling::Sample => policy.sample_action(t, i, regime, u),
        Sampling::Argmax => policy.argmax_action(t, i, regime),
    })
}

/// What a controller sees at the start of an hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Hours since the start of the simulated window.
    pub step: usize,
    /// Absolute hour index (UTC).
    pub hour: i64,
    pub local_hour: u32,
    pub theta: f64,
    pub t_out: f64,
    /// W
    pub heat_load: f64,
    /// Realized price, $/MWh.
    pub price: f64,
}

#[derive(Debug, Clone)]
pub enum Controller {
    QfrMdp(Box<MdpController>),
    Greedy,
    FixedRule(FixedRule),
}

impl Controller {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::QfrMdp(_) => "qfr-mdp",
            Controller::Greedy => "greedy",
            Controller::FixedRule(_) => "fixed-rule",
        }
    }

    /// Returns `(action, regime)`; the regime is only known to the planned
    /// controller.
    pub fn act(
        &self,
        obs: &Observation,
        plant: &Plant,
        cost: &CostSpec,
        u: f64,
    ) -> (usize, Option<usize>) {
        match self {
            Controller::Greedy => (
                greedy_action(obs.theta, obs.t_out, obs.heat_load, plant, cost),
                None,
            ),
            Controller::FixedRule(rule) => (
                fixed_rule_action(
                    rule,
                    obs.local_hour,
                    obs.theta,
                    obs.t_out,
                    obs.heat_load,
                    plant,
                    cost,
                ),
                None,
            ),
            Controller::QfrMdp(c) => {
                let (a, p) = c.decide(obs.step, obs.hour, obs.theta, obs.price, u, || {
                    greedy_action(obs.theta, obs.t_out, obs.heat_load, plant, cost)
                });
                (a, Some(p))
            }
        }
    }
}
