//! Cyclostationary MDP over (indoor temperature, price regime) states.
//!
//! The problem is stored as dense tables indexed by cycle step `t`, grid
//! level `i`, regime `p` and action `a`:
//!
//! * `successor(t, i, a)` — the continuous next temperature from grid level `i`,
//!   and its quantized grid index;
//! * `cost(t, i, p, a)` — the immediate cost;
//! * `transition(t)` — the regime matrix applied when leaving step `t`
//!   (step `N-1` feeds step `0`).

mod dp;
mod occupancy;
mod policy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qfr::RegimeModel;
use crate::regimes::{StochasticMatrix, TransitionModel};
use crate::thermal::{cooling_energy, Plant};

pub use dp::{dp_oracle, dp_oracle_with, DpOptions, DpSolution};
pub use occupancy::{
    build_lp, solve_occupancy, solve_occupancy_with, OccupancyLp, OccupancyMeasure, Residuals,
};
pub use policy::{extract_policy, Policy, VISIT_THRESHOLD};

/// Uniform temperature grid `min, min + step, ..., min + (len - 1) step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    min: f64,
    step: f64,
    len: usize,
}

impl ThetaGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite() && step > 0.0 && max > min) {
            return Err(Error::invalid(format!(
                "temperature grid needs finite min < max and step > 0 (got {min}, {max}, {step})"
            )));
        }
        let spans = (max - min) / step;
        let rounded = spans.round();
        if (spans - rounded).abs() > 1e-9 * spans.max(1.0) {
            return Err(Error::invalid(format!(
                "grid step {step} does not divide [{min}, {max}]"
            )));
        }
        Self::with_len(min, step, rounded as usize + 1)
    }

    pub fn with_len(min: f64, step: f64, len: usize) -> Result<Self> {
        if !(min.is_finite() && step.is_finite() && step > 0.0) || len == 0 {
            return Err(Error::invalid(
                "temperature grid needs a positive step and at least one level",
            ));
        }
        Ok(Self { min, step, len })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.value(self.len - 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, index: usize) -> f64 {
        self.min + index as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.value(i)).collect()
    }

    /// Nearest level, clamped to the grid; exact midpoints round up.
    pub fn quantize(&self, theta: f64) -> usize {
        let pos = ((theta - self.min) / self.step + 0.5).floor();
        if pos.is_nan() || pos <= 0.0 {
            0
        } else if pos >= (self.len - 1) as f64 {
            self.len - 1
        } else {
            pos as usize
        }
    }

    /// Whether `theta` lies within half a step of the grid range.
    pub fn covers(&self, theta: f64) -> bool {
        theta >= self.min - 0.5 * self.step && theta <= self.max() + 0.5 * self.step
    }
}

pub fn quantize(theta: f64, grid: &ThetaGrid) -> usize {
    grid.quantize(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSpec {
    pub t_min: f64,
    pub t_max: f64,
    /// $ per °C below `t_min`.
    pub lambda_under: f64,
    /// $ per °C above `t_max`.
    pub lambda_over: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self {
            t_min: 18.0,
            t_max: 27.0,
            lambda_under: 1000.0,
            lambda_over: 1000.0,
        }
    }
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min.is_finite() && self.t_max.is_finite() && self.t_min < self.t_max) {
            return Err(Error::invalid(format!(
                "comfort band needs t_min < t_max (got {} and {})",
                self.t_min, self.t_max
            )));
        }
        if !(self.lambda_under >= 0.0 && self.lambda_over >= 0.0)
            || !self.lambda_under.is_finite()
            || !self.lambda_over.is_finite()
        {
            return Err(Error::invalid(
                "violation penalties must be finite and non-negative",
            ));
        }
        Ok(())
    }

    /// Penalty for landing at `theta`.
    pub fn violation_cost(&self, theta: f64) -> f64 {
        self.lambda_over * (theta - self.t_max).max(0.0)
            + self.lambda_under * (self.t_min - theta).max(0.0)
    }

    /// The band shrunk by `margin` on both sides, with the same penalties.
    ///
    /// Planning against `tightened(step / 2)` keeps continuous rollouts inside
    /// the original band: a rollout is never more than half a grid step from
    /// the level the policy looked up, and one step of the thermal model
    /// shrinks that offset.
    pub fn tightened(&self, margin: f64) -> Result<Self> {
        let spec = Self {
            t_min: self.t_min + margin,
            t_max: self.t_max - margin,
            ..*self
        };
        if margin.is_nan() || margin < 0.0 {
            return Err(Error::invalid(format!(
                "safety margin {margin} must be non-negative"
            )));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn violation_over(&self, theta: f64) -> f64 {
        (theta - self.t_max).max(0.0)
    }

    pub fn violation_under(&self, theta: f64) -> f64 {
        (self.t_min - theta).max(0.0)
    }
}

/// Temperature grid × regimes × actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub grid: ThetaGrid,
    pub regimes: usize,
    pub a_max: usize,
}

impl StateSpace {
    pub fn new(grid: ThetaGrid, regimes: usize, a_max: usize) -> Result<Self> {
        if regimes == 0 {
            return Err(Error::invalid("state space needs at least one regime"));
        }
        Ok(Self {
            grid,
            regimes,
            a_max,
        })
    }

    pub fn validate_band(&self, cost: &CostSpec) -> Result<()> {
        let eps = 1e-9 * self.grid.step;
        if cost.t_min < self.grid.min() - eps || cost.t_max > self.grid.max() + eps {
            return Err(Error::invalid(format!(
                "comfort band [{}, {}] is not inside the temperature grid [{}, {}]",
                cost.t_min,
                cost.t_max,
                self.grid.min(),
                self.grid.max()
            )));
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.grid.len() * self.regimes
    }

    pub fn actions(&self) -> usize {
        self.a_max + 1
    }

    pub fn state_index(&self, theta_index: usize, regime: usize) -> usize {
        theta_index * self.regimes + regime
    }
}

/// Table dimensions shared by problems, occupancies and policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub horizon: usize,
    pub temps: usize,
    pub regimes: usize,
    pub actions: usize,
}

impl Shape {
    pub fn states(&self) -> usize {
        self.temps * self.regimes
    }

    /// Flat index of `(t, i, p)`.
    pub fn state_at(&self, t: usize, i: usize, p: usize) -> usize {
        (t * self.temps + i) * self.regimes + p
    }

    /// Flat index of `(t, i, p, a)`.
    pub fn var(&self, t: usize, i: usize, p: usize, a: usize) -> usize {
        self.state_at(t, i, p) * self.actions + a
    }

    pub fn vars(&self) -> usize {
        self.horizon * self.states() * self.actions
    }
}

/// Exogenous per-step inputs of a physically derived problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Exogenous {
    pub t_out: Vec<f64>,
    /// W
    pub heat_load: Vec<f64>,
    /// `prices[t][p]`, $/MWh
    pub prices: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MdpProblem {
    shape: Shape,
    grid: ThetaGrid,
    cost_spec: CostSpec,
    cycle_start: i64,
    /// `[t][i][a]`
    successor_temp: Vec<f64>,
    successor_index: Vec<usize>,
    /// `[t][i][p][a]`
    cost: Vec<f64>,
    transitions: Vec<StochasticMatrix>,
    exogenous: Option<Exogenous>,
}

impl MdpProblem {
    /// Builds the problem from physics: per-step outdoor temperature, heat load
    /// and regime prices, one regime matrix per step.
    #[allow(clippy::too_many_arguments)]
    pub fn physical(
        cycle_start: i64,
        grid: ThetaGrid,
        cost_spec: CostSpec,
        plant: &Plant,
        t_out: Vec<f64>,
        heat_load: Vec<f64>,
        prices: Vec<Vec<f64>>,
        transitions: Vec<StochasticMatrix>,
    ) -> Result<Self> {
        plant.validate()?;
        cost_spec.validate()?;
        let n = t_out.len();
        if n == 0 {
            return Err(Error::Dimension("planning cycle is empty".into()));
        }
        if heat_load.len() != n || prices.len() != n || transitions.len() != n {
            return Err(Error::Dimension(format!(
                "exogenous cycles differ in length: t_out {n}, heat load {}, prices {}, transitions {}",
                heat_load.len(),
                prices.len(),
                transitions.len()
            )));
        }
        let m = prices[0].len();
        if m == 0 || prices.iter().any(|row| row.len() != m) {
            return Err(Error::Dimension(
                "price table rows must all have the regime count".into(),
            ));
        }
        if let Some(v) = t_out
            .iter()
            .chain(&heat_load)
            .chain(prices.iter().flatten())
            .find(|v| !v.is_finite())
        {
            return Err(Error::invalid(format!("non-finite exogenous input {v}")));
        }
        StateSpace::new(grid, m, plant.chiller.a_max)?.validate_band(&cost_spec)?;
        let chiller = &plant.chiller;
        let thermal = plant.thermal();
        let shape = Shape {
            horizon: n,
            temps: grid.len(),
            regimes: m,
            actions: chiller.actions(),
        };
        let mut successor_temp = Vec::with_capacity(n * shape.temps * shape.actions);
        for t in 0..n {
            for i in 0..shape.temps {
                for a in 0..shape.actions {
                    successor_temp.push(thermal.successor(
                        grid.value(i),
                        t_out[t],
                        heat_load[t],
                        a,
                    ));
                }
            }
        }
        let mut cost = Vec::with_capacity(shape.vars());
        for t in 0..n {
            let energy: Vec<f64> = (0..shape.actions)
                .map(|a| cooling_energy(chiller, a, t_out[t], thermal.dt))
                .collect();
            for i in 0..shape.temps {
                for p in 0..m {
                    for a in 0..shape.actions {
                        let next = successor_temp[(t * shape.temps + i) * shape.actions + a];
                        cost.push(
                            energy[a] * prices[t][p] / 1000.0 + cost_spec.violation_cost(next),
                        );
                    }
                }
            }
        }
        let mut problem = Self::assemble(
            shape,
            grid,
            cost_spec,
            cycle_start,
            successor_temp,
            cost,
            transitions,
        )?;
        problem.exogenous = Some(Exogenous {
            t_out,
            heat_load,
            prices,
        });
        Ok(problem)
    }

    /// Builds the problem from fitted models: regime prices are the
    /// representative prices at each hour of the cycle and the regime matrix is
    /// the one for that hour's bucket.
    #[allow(clippy::too_many_arguments)]
    pub fn from_models(
        cycle_start: i64,
        grid: ThetaGrid,
        cost_spec: CostSpec,
        plant: &Plant,
        t_out: Vec<f64>,
        heat_load: Vec<f64>,
        regime_model: &RegimeModel,
        transition_model: &TransitionModel,
    ) -> Result<Self> {
        if regime_model.regimes != transition_model.regimes() {
            return Err(Error::Dimension(format!(
                "regime model has {} regimes but the transition model has {}",
                regime_model.regimes,
                transition_model.regimes()
            )));
        }
        let n = t_out.len();
        let mut prices = Vec::with_capacity(n);
        let mut transitions = Vec::with_capacity(n);
        for t in 0..n {
            let hour = cycle_start + t as i64;
            prices.push(regime_model.levels(hour).representatives);
            transitions.push(transition_model.matrix_at(hour)?.clone());
        }
        Self::physical(
            cycle_start,
            grid,
            cost_spec,
            plant,
            t_out,
            heat_load,
            prices,
            transitions,
        )
    }

    /// Builds a problem from explicit tables. `successor_temp` is `[t][i][a]`
    /// and is quantized onto `grid`; `cost` is `[t][i][p][a]`.
    pub fn from_tables(
        grid: ThetaGrid,
        cost_spec: CostSpec,
        regimes: usize,
        actions: usize,
        successor_temp: Vec<f64>,
        cost: Vec<f64>,
        transitions: Vec<StochasticMatrix>,
    ) -> Result<Self> {
        cost_spec.validate()?;
        if actions == 0 || regimes == 0 {
            return Err(Error::Dimension(
                "need at least one regime and one action".into(),
            ));
        }
        let n = transitions.len();
        if n == 0 {
            return Err(Error::Dimension("planning cycle is empty".into()));
        }
        let shape = Shape {
            horizon: n,
            temps: grid.len(),
            regimes,
            actions,
        };
        Self::assemble(shape, grid, cost_spec, 0, successor_temp, cost, transitions)
    }

    fn assemble(
        shape: Shape,
        grid: ThetaGrid,
        cost_spec: CostSpec,
        cycle_start: i64,
        successor_temp: Vec<f64>,
        cost: Vec<f64>,
        transitions: Vec<StochasticMatrix>,
    ) -> Result<Self> {
        let expected = shape.horizon * shape.temps * shape.actions;
        if successor_temp.len() != expected {
            return Err(Error::Dimension(format!(
                "successor table has {} entries, expected {expected}",
                successor_temp.len()
            )));
        }
        if cost.len() != shape.vars() {
            return Err(Error::Dimension(format!(
                "cost table has {} entries, expected {}",
                cost.len(),
                shape.vars()
            )));
        }
        if let Some(v) = cost.iter().chain(&successor_temp).find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite MDP table entry {v}")));
        }
        if let Some((t, m)) = transitions
            .iter()
            .enumerate()
            .find(|(_, m)| m.size() != shape.regimes)
        {
            return Err(Error::Dimension(format!(
                "regime matrix at step {t} is {0}x{0}, expected {1}x{1}",
                m.size(),
                shape.regimes
            )));
        }
        let successor_index = successor_temp.iter().map(|&v| grid.quantize(v)).collect();
        Ok(Self {
            shape,
            grid,
            cost_spec,
            cycle_start,
            successor_temp,
            successor_index,
            cost,
            transitions,
            exogenous: None,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn horizon(&self) -> usize {
        self.shape.horizon
    }

    pub fn grid(&self) -> &ThetaGrid {
        &self.grid
    }

    pub fn cost_spec(&self) -> &CostSpec {
        &self.cost_spec
    }

    pub fn cycle_start(&self) -> i64 {
        self.cycle_start
    }

    pub fn exogenous(&self) -> Option<&Exogenous> {
        self.exogenous.as_ref()
    }

    pub fn transition(&self, t: usize) -> &StochasticMatrix {
        &self.transitions[t]
    }

    /// Continuous successor temperature from grid level `i`.
    pub fn successor_temp(&self, t: usize, i: usize, a: usize) -> f64 {
        self.successor_temp[(t * self.shape.temps + i) * self.shape.actions + a]
    }

    /// Quantized successor level from grid level `i`.
    pub fn successor(&self, t: usize, i: usize, a: usize) -> usize {
        self.successor_index[(t * self.shape.temps + i) * self.shape.actions + a]
    }

    pub fn cost(&self, t: usize, i: usize, p: usize, a: usize) -> f64 {
        self.cost[self.shape.var(t, i, p, a)]
    }

    /// Immediate cost at an arbitrary (off-grid) temperature. Only available
    /// for physically derived problems.
    pub fn immediate_cost(
        &self,
        plant: &Plant,
        t: usize,
        theta: f64,
        p: usize,
        a: usize,
    ) -> Result<f64> {
        let exo = self.exogenous.as_ref().ok_or_else(|| {
            Error::invalid("problem was built from tables; no physics to evaluate")
        })?;
        if t >= self.shape.horizon || p >= self.shape.regimes || a >= self.shape.actions {
            return Err(Error::Dimension(format!(
                "index (t={t}, p={p}, a={a}) is out of range"
            )));
        }
        Ok(immediate_cost(
            plant,
            &self.cost_spec,
            theta,
            exo.t_out[t],
            exo.heat_load[t],
            exo.prices[t][p],
            a,
        ))
    }

    /// Fallback action for a state: the smallest `a` whose quantized successor
    /// is at or below `t_max`, else the largest action.
    pub fn fallback_action(&self, t: usize, i: usize) -> usize {
        let limit = self.cost_spec.t_max + 1e-9 * self.grid.step;
        (0..self.shape.actions)
            .find(|&a| self.grid.value(self.successor(t, i, a)) <= limit)
            .unwrap_or(self.shape.actions - 1)
    }
}

/// Energy cost of `a` chillers at price `price` ($/MWh) plus the violation
/// penalty of the continuous successor of `theta`.
pub fn immediate_cost(
    plant: &Plant,
    cost_spec: &CostSpec,
    theta: f64,
    t_out: f64,
    heat_load: f64,
    price: f64,
    a: usize,
) -> f64 {
    let thermal = plant.thermal();
    let next = thermal.successor(theta, t_out, heat_load, a);
    cooling_energy(&plant.chiller, a, t_out, thermal.dt) * price / 1000.0
        + cost_spec.violation_cost(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rules() {
        let g = ThetaGrid::new(15.0, 32.0, 0.5).unwrap();
        assert_eq!(g.len(), 35);
        assert_eq!(g.value(g.quantize(22.5)), 22.5);
        assert_eq!(g.value(g.quantize(22.26)), 22.5);
        assert_eq!(g.value(g.quantize(22.24)), 22.0);
        assert_eq!(g.value(g.quantize(22.25)), 22.5);
        assert_eq!(g.quantize(37.0), g.len() - 1);
        assert_eq!(g.quantize(-40.0), 0);
        assert_eq!(g.quantize(f64::NAN), 0);
    }

    #[test]
    fn grid_must_divide_range() {
        assert!(ThetaGrid::new(15.0, 32.0, 0.7).is_err());
        assert!(ThetaGrid::new(18.0, 30.0, 1.0).is_ok());
        assert!(ThetaGrid::new(30.0, 18.0, 1.0).is_err());
    }

    #[test]
    fn immediate_cost_examples() {
        let plant = Plant::default();
        let cost = CostSpec::default();
        let thermal = plant.thermal();
        // Pick theta so that two chillers land inside the band.
        let q = 1.5e6;
        let t_out = 25.0;
        let theta = 22.0;
        let next = thermal.successor(theta, t_out, q, 2);
        assert!(next > cost.t_min && next < cost.t_max, "{next}");
        let c = immediate_cost(&plant, &cost, theta, t_out, q, 40.0, 2);
        assert!((c - 25.0).abs() < 1e-9, "{c}");

        // Idle with a successor inside the band costs nothing.
        let next0 = thermal.successor(20.0, t_out, q, 0);
        assert!(next0 < cost.t_max);
        assert_eq!(immediate_cost(&plant, &cost, 20.0, t_out, q, 40.0, 0), 0.0);

        let spec = CostSpec {
            lambda_over: 100.0,
            ..cost
        };
        assert!((spec.violation_cost(spec.t_max + 2.0) - 200.0).abs() < 1e-12);
    }

    #[test]
    fn band_must_sit_inside_grid() {
        let space = StateSpace::new(ThetaGrid::new(20.0, 30.0, 1.0).unwrap(), 2, 4).unwrap();
        assert!(space.validate_band(&CostSpec::default()).is_err());
        let space = StateSpace::new(ThetaGrid::new(18.0, 30.0, 1.0).unwrap(), 2, 4).unwrap();
        assert!(space.validate_band(&CostSpec::default()).is_ok());
        assert_eq!(space.states(), 26);
    }

    #[test]
    fn inverted_band_rejected() {
        let bad = CostSpec {
            t_min: 28.0,
            ..CostSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
