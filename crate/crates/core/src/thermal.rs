//! Lumped-capacitance facility model: thermal mass, IT heat load, chiller
//! COP and the exponential indoor-temperature update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per planning step.
pub const STEP_SECONDS: f64 = 3600.0;
const JOULES_PER_KWH: f64 = 3.6e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FacilitySpec {
    /// m²
    pub floor_area: f64,
    /// m
    pub ceiling_height: f64,
    /// m
    pub slab_thickness: f64,
    /// kg/m³
    pub rho_air: f64,
    /// J/(kg·°C)
    pub cp_air: f64,
    /// kg/m³
    pub rho_concrete: f64,
    /// J/(kg·°C)
    pub cp_concrete: f64,
    /// J/°C
    pub c_equipment: f64,
    /// Envelope heat-transfer coefficient, W/°C.
    pub gamma_env: f64,
}

impl Default for FacilitySpec {
    fn default() -> Self {
        Self {
            floor_area: 3000.0,
            ceiling_height: 4.0,
            slab_thickness: 0.2,
            rho_air: 1.204,
            cp_air: 1005.0,
            rho_concrete: 2300.0,
            cp_concrete: 880.0,
            c_equipment: 4.0e7,
            gamma_env: 1.0e4,
        }
    }
}

impl FacilitySpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("floor_area", self.floor_area),
            ("ceiling_height", self.ceiling_height),
            ("slab_thickness", self.slab_thickness),
            ("rho_air", self.rho_air),
            ("cp_air", self.cp_air),
            ("rho_concrete", self.rho_concrete),
            ("cp_concrete", self.cp_concrete),
            ("c_equipment", self.c_equipment),
            ("gamma_env", self.gamma_env),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "facility.{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn air_capacitance(&self) -> f64 {
        self.rho_air * self.cp_air * self.floor_area * self.ceiling_height
    }

    pub fn slab_capacitance(&self) -> f64 {
        self.floor_area * self.slab_thickness * self.rho_concrete * self.cp_concrete
    }
}

/// Total effective thermal capacitance, J/°C: air + slab + equipment.
pub fn capacitance(spec: &FacilitySpec) -> f64 {
    spec.air_capacitance() + spec.slab_capacitance() + spec.c_equipment
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChillerSpec {
    pub a_max: usize,
    /// Heat removal per active chiller, W (thermal).
    pub eta: f64,
    pub cop_lo_temp: f64,
    pub cop_hi_temp: f64,
    pub cop_lo: f64,
    pub cop_hi: f64,
}

impl Default for ChillerSpec {
    fn default() -> Self {
        Self {
            a_max: 4,
            eta: 1.25e6,
            cop_lo_temp: 15.0,
            cop_hi_temp: 40.0,
            cop_lo: 5.0,
            cop_hi: 2.5,
        }
    }
}

impl ChillerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.a_max < 1 {
            return Err(Error::invalid("chiller.a_max must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!(
                "chiller.eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.cop_lo > self.cop_hi && self.cop_hi > 0.0 && self.cop_lo.is_finite()) {
            return Err(Error::invalid(
                "chiller COP must satisfy cop_lo > cop_hi > 0",
            ));
        }
        if !(self.cop_lo_temp < self.cop_hi_temp
            && self.cop_hi_temp.is_finite()
            && self.cop_lo_temp.is_finite())
        {
            return Err(Error::invalid(
                "chiller COP temperatures must satisfy cop_lo_temp < cop_hi_temp",
            ));
        }
        Ok(())
    }

    pub fn actions(&self) -> usize {
        self.a_max + 1
    }
}

/// Coefficient of performance at outdoor temperature `t_out`: linear between
/// the two anchor points, clamped outside them.
pub fn cop(spec: &ChillerSpec, t_out: f64) -> f64 {
    if t_out <= spec.cop_lo_temp {
        spec.cop_lo
    } else if t_out >= spec.cop_hi_temp {
        spec.cop_hi
    } else {
        let slope = (spec.cop_lo - spec.cop_hi) / (spec.cop_hi_temp - spec.cop_lo_temp);
        spec.cop_lo - (t_out - spec.cop_lo_temp) * slope
    }
}

/// Electricity drawn by `a` chillers over `dt` seconds, kWh.
pub fn cooling_energy(spec: &ChillerSpec, a: usize, t_out: f64, dt: f64) -> f64 {
    spec.eta * a as f64 / cop(spec, t_out) * dt / JOULES_PER_KWH
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatLoadSpec {
    /// Idle IT heat, W.
    pub q_base: f64,
    /// Heat per active core, W.
    pub phi: f64,
}

impl Default for HeatLoadSpec {
    fn default() -> Self {
        Self {
            q_base: 1.0e6,
            phi: 10.0,
        }
    }
}

impl HeatLoadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_base >= 0.0
            && self.phi >= 0.0
            && self.q_base.is_finite()
            && self.phi.is_finite())
        {
            return Err(Error::invalid(
                "heat_load.q_base and heat_load.phi must be non-negative",
            ));
        }
        Ok(())
    }
}

/// IT heat load in W for `cores` active cores.
pub fn heat_load(spec: &HeatLoadSpec, cores: f64) -> f64 {
    spec.q_base + spec.phi * cores
}

/// One step of the exponential heat-balance model.
///
/// The indoor temperature relaxes toward the equilibrium
/// `t_out + (q - eta a) / gamma_env` with time constant `c_heat / gamma_env`.
#[allow(clippy::too_many_arguments)]
pub fn step_temperature(
    theta: f64,
    t_out: f64,
    q: f64,
    a: usize,
    eta: f64,
    gamma_env: f64,
    c_heat: f64,
    dt: f64,
) -> f64 {
    let equilibrium = t_out + (q - eta * a as f64) / gamma_env;
    equilibrium + (theta - equilibrium) * (-gamma_env * dt / c_heat).exp()
}

/// The parameters of [`step_temperature`] that are fixed for a facility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalModel {
    pub c_heat: f64,
    pub gamma_env: f64,
    pub eta: f64,
    pub dt: f64,
}

impl ThermalModel {
    pub fn new(facility: &FacilitySpec, chiller: &ChillerSpec) -> Self {
        Self {
            c_heat: capacitance(facility),
            gamma_env: facility.gamma_env,
            eta: chiller.eta,
            dt: STEP_SECONDS,
        }
    }

    pub fn successor(&self, theta: f64, t_out: f64, q: f64, a: usize) -> f64 {
        step_temperature(
            theta,
            t_out,
            q,
            a,
            self.eta,
            self.gamma_env,
            self.c_heat,
            self.dt,
        )
    }

    /// Per-step retention factor `exp(-gamma dt / C)`.
    pub fn retention(&self) -> f64 {
        (-self.gamma_env * self.dt / self.c_heat).exp()
    }
}

/// Everything physical about the site in one place.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plant {
    #[serde(default)]
    pub facility: FacilitySpec,
    #[serde(default)]
    pub chiller: ChillerSpec,
    #[serde(default)]
    pub heat_load: HeatLoadSpec,
}

impl Plant {
    pub fn validate(&self) -> Result<()> {
        self.facility.validate()?;
        self.chiller.validate()?;
        self.heat_load.validate()
    }

    pub fn thermal(&self) -> ThermalModel {
        ThermalModel::new(&self.facility, &self.chiller)
    }
}
