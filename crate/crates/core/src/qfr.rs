//! Quantile Fourier regression: smooth time-of-day and time-of-year price
//! quantile curves, and the regime bands they delimit.
//!
//! Each curve is a linear combination of an intercept and sine/cosine pairs at
//! daily and seasonal periods, fit by minimizing the pinball loss as a linear
//! program. A [`RegimeModel`] with `M` regimes fits `2M - 1` curves at levels
//! `k / 2M`: even `k` are band boundaries (`j / M`) and odd `k` are band
//! mid-points (`(p + 0.5) / M`) used as representative prices.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LinearProgram;

pub const HOURS_PER_DAY: u32 = 24;
pub const HOURS_PER_YEAR: u32 = 8760;
pub const MIN_REGIMES: usize = 2;
pub const MAX_REGIMES: usize = 16;
/// Observations required per design feature.
pub const MIN_OBS_PER_FEATURE: usize = 10;

const MAX_DAILY_HARMONICS: usize = 11;
const MAX_SEASONAL_HARMONICS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierDesign {
    pub daily_harmonics: usize,
    pub seasonal_harmonics: usize,
    #[serde(default = "default_daily_period")]
    pub period_daily: u32,
    #[serde(default = "default_seasonal_period")]
    pub period_seasonal: u32,
}

fn default_daily_period() -> u32 {
    HOURS_PER_DAY
}

fn default_seasonal_period() -> u32 {
    HOURS_PER_YEAR
}

impl Default for FourierDesign {
    fn default() -> Self {
        Self::new(3, 2)
    }
}

impl FourierDesign {
    pub fn new(daily_harmonics: usize, seasonal_harmonics: usize) -> Self {
        Self {
            daily_harmonics,
            seasonal_harmonics,
            period_daily: HOURS_PER_DAY,
            period_seasonal: HOURS_PER_YEAR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.daily_harmonics > MAX_DAILY_HARMONICS {
            return Err(Error::invalid(format!(
                "{} daily harmonics exceed the hourly Nyquist limit of {MAX_DAILY_HARMONICS}",
                self.daily_harmonics
            )));
        }
        if self.seasonal_harmonics > MAX_SEASONAL_HARMONICS {
            return Err(Error::invalid(format!(
                "at most {MAX_SEASONAL_HARMONICS} seasonal harmonics are supported, got {}",
                self.seasonal_harmonics
            )));
        }
        if self.period_daily == 0 || self.period_seasonal == 0 {
            return Err(Error::invalid("Fourier periods must be positive"));
        }
        Ok(())
    }

    /// Number of features: intercept plus one sine/cosine pair per harmonic.
    pub fn len(&self) -> usize {
        1 + 2 * self.daily_harmonics + 2 * self.seasonal_harmonics
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Least common multiple of the two periods; every fitted curve repeats
    /// exactly with this period.
    pub fn common_period(&self) -> u64 {
        let (a, b) = (self.period_daily as u64, self.period_seasonal as u64);
        let mut x = a;
        let mut y = b;
        while y != 0 {
            (x, y) = (y, x % y);
        }
        a / x * b
    }

    pub fn features_into(&self, hour: i64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        // Reducing the phase exactly before the trig call keeps the features
        // bit-for-bit periodic.
        let hd = hour.rem_euclid(self.period_daily as i64) as f64;
        let hs = hour.rem_euclid(self.period_seasonal as i64) as f64;
        out[0] = 1.0;
        let mut i = 1;
        for k in 1..=self.daily_harmonics {
            let w = 2.0 * PI * k as f64 * hd / self.period_daily as f64;
            out[i] = w.sin();
            out[i + 1] = w.cos();
            i += 2;
        }
        for k in 1..=self.seasonal_harmonics {
            let w = 2.0 * PI * k as f64 * hs / self.period_seasonal as f64;
            out[i] = w.sin();
            out[i + 1] = w.cos();
            i += 2;
        }
    }
}

/// Feature vector `[1, sin, cos (daily k = 1..), sin, cos (seasonal k = 1..)]`.
pub fn build_design(hour: i64, design: &FourierDesign) -> Vec<f64> {
    let mut out = vec![0.0; design.len()];
    design.features_into(hour, &mut out);
    out
}

/// `rho_tau(u) = u * (tau - 1[u < 0])`.
pub fn pinball_loss(residual: f64, tau: f64) -> f64 {
    if residual < 0.0 {
        residual * (tau - 1.0)
    } else {
        residual * tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub coefficients: Vec<f64>,
}

impl QuantileFit {
    pub fn eval(&self, design: &FourierDesign, hour: i64) -> f64 {
        let mut feats = vec![0.0; design.len()];
        design.features_into(hour, &mut feats);
        dot(&feats, &self.coefficients)
    }

    pub fn mean_loss(&self, design: &FourierDesign, obs: &[(i64, f64)]) -> f64 {
        let mut feats = vec![0.0; design.len()];
        let total: f64 = obs
            .iter()
            .map(|&(h, y)| {
                design.features_into(h, &mut feats);
                pinball_loss(y - dot(&feats, &self.coefficients), self.tau)
            })
            .sum();
        total / obs.len() as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the mean pinball loss over the design's coefficients.
///
/// Solved as the standard quantile-regression LP with residuals split into
/// non-negative parts, `X b + u - v = y`. Prices are centered and scaled
/// first; the pinball loss is equivariant under both, so the coefficients are
/// mapped back exactly.
pub fn fit_quantile(obs: &[(i64, f64)], tau: f64, design: &FourierDesign) -> Result<QuantileFit> {
    design.validate()?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!(
            "quantile level {tau} outside (0, 1)"
        )));
    }
    let p = design.len();
    let needed = MIN_OBS_PER_FEATURE * p;
    if obs.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{} observations for {p} features; need at least {needed}",
            obs.len()
        )));
    }
    if let Some(&(_, y)) = obs.iter().find(|(_, y)| !y.is_finite()) {
        return Err(Error::invalid(format!("non-finite price {y}")));
    }

    let first = obs[0].1;
    if obs.iter().all(|&(_, y)| y == first) {
        let mut coefficients = vec![0.0; p];
        coefficients[0] = first;
        return Ok(QuantileFit { tau, coefficients });
    }

    let mut ys: Vec<f64> = obs.iter().map(|&(_, y)| y).collect();
    ys.sort_by(f64::total_cmp);
    let center = ys[ys.len() / 2];
    let mut scale = ys.iter().map(|y| (y - center).abs()).sum::<f64>() / ys.len() as f64;
    if scale <= 0.0 {
        scale = ys.iter().map(|y| (y - center).abs()).fold(0.0, f64::max);
    }

    let n = obs.len();
    let inv_n = 1.0 / n as f64;
    let mut lp = LinearProgram::new();
    let beta: Vec<usize> = (0..p).map(|_| lp.add_var(0.0, false)).collect();
    let mut feats = vec![0.0; p];
    for &(h, y) in obs {
        let u = lp.add_var(tau * inv_n, true);
        let v = lp.add_var((1.0 - tau) * inv_n, true);
        design.features_into(h, &mut feats);
        let mut row: Vec<(usize, f64)> = beta.iter().zip(&feats).map(|(&j, &f)| (j, f)).collect();
        row.push((u, 1.0));
        row.push((v, -1.0));
        lp.add_equality(row, (y - center) / scale);
    }
    let sol = lp.solve()?;
    let mut coefficients: Vec<f64> = beta.iter().map(|&j| sol.x[j] * scale).collect();
    coefficients[0] += center;
    Ok(QuantileFit { tau, coefficients })
}

/// Fitted regime bands. Regime `p` (zero-based) spans prices in
/// `(boundary[p - 1], boundary[p]]`, with the outer bands unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    pub regimes: usize,
    pub design: FourierDesign,
    pub boundary_fits: Vec<QuantileFit>,
    pub representative_fits: Vec<QuantileFit>,
}

/// Quantile levels of the `M - 1` boundaries and `M` representatives.
pub fn regime_levels(m: usize) -> (Vec<f64>, Vec<f64>) {
    let boundaries = (1..m).map(|j| j as f64 / m as f64).collect();
    let reps = (0..m).map(|p| (p as f64 + 0.5) / m as f64).collect();
    (boundaries, reps)
}

pub fn fit_regimes(obs: &[(i64, f64)], m: usize, design: &FourierDesign) -> Result<RegimeModel> {
    if !(MIN_REGIMES..=MAX_REGIMES).contains(&m) {
        return Err(Error::invalid(format!(
            "regime count {m} outside {MIN_REGIMES}..={MAX_REGIMES}"
        )));
    }
    let (b_levels, r_levels) = regime_levels(m);
    let levels: Vec<f64> = b_levels.iter().chain(&r_levels).copied().collect();
    let fits: Vec<Result<QuantileFit>> = std::thread::scope(|scope| {
        let handles: Vec<_> = levels
            .iter()
            .map(|&tau| scope.spawn(move || fit_quantile(obs, tau, design)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("quantile fit thread panicked"))
            .collect()
    });
    let mut fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
    let representative_fits = fits.split_off(m - 1);
    let model = RegimeModel {
        regimes: m,
        design: *design,
        boundary_fits: fits,
        representative_fits,
    };
    Ok(model)
}

/// Band boundaries and representative prices at one hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourLevels {
    pub boundaries: Vec<f64>,
    pub representatives: Vec<f64>,
}

impl RegimeModel {
    /// Evaluates every curve at `hour` and applies monotone rearrangement.
    ///
    /// All `2M - 1` curves are sorted jointly in level order, so boundaries
    /// are non-decreasing, representatives are non-decreasing, and each
    /// representative lies inside its own band.
    pub fn levels(&self, hour: i64) -> HourLevels {
        let m = self.regimes;
        let mut feats = vec![0.0; self.design.len()];
        self.design.features_into(hour, &mut feats);
        let mut all = Vec::with_capacity(2 * m - 1);
        for p in 0..m {
            all.push(dot(&feats, &self.representative_fits[p].coefficients));
            if p + 1 < m {
                all.push(dot(&feats, &self.boundary_fits[p].coefficients));
            }
        }
        all.sort_by(f64::total_cmp);
        HourLevels {
            boundaries: all.iter().skip(1).step_by(2).copied().collect(),
            representatives: all.iter().step_by(2).copied().collect(),
        }
    }

    pub fn boundaries(&self, hour: i64) -> Vec<f64> {
        self.levels(hour).boundaries
    }

    /// Zero-based regime of `price` at `hour`: the smallest `p` whose upper
    /// boundary is at or above the price (ties go to the lower band), or
    /// `M - 1` above the top boundary.
    pub fn classify(&self, hour: i64, price: f64) -> usize {
        classify_with(&self.levels(hour).boundaries, price)
    }

    pub fn representative_price(&self, hour: i64, regime: usize) -> f64 {
        assert!(
            regime < self.regimes,
            "regime {regime} out of range 0..{}",
            self.regimes
        );
        self.levels(hour).representatives[regime]
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.regimes;
        if !(MIN_REGIMES..=MAX_REGIMES).contains(&m) {
            return Err(Error::invalid(format!("regime count {m} out of range")));
        }
        self.design.validate()?;
        if self.boundary_fits.len() != m - 1 || self.representative_fits.len() != m {
            return Err(Error::Dimension(format!(
                "{m} regimes need {} boundary and {m} representative fits, found {} and {}",
                m - 1,
                self.boundary_fits.len(),
                self.representative_fits.len()
            )));
        }
        let p = self.design.len();
        for fit in self.boundary_fits.iter().chain(&self.representative_fits) {
            if fit.coefficients.len() != p {
                return Err(Error::Dimension(format!(
                    "fit at tau={} has {} coefficients, design has {p} features",
                    fit.tau,
                    fit.coefficients.len()
                )));
            }
            if !(fit.tau > 0.0 && fit.tau < 1.0) || fit.coefficients.iter().any(|c| !c.is_finite())
            {
                return Err(Error::invalid(format!(
                    "fit at tau={} is not finite/valid",
                    fit.tau
                )));
            }
        }
        if self.boundary_fits.windows(2).any(|w| w[0].tau >= w[1].tau) {
            return Err(Error::invalid(
                "boundary quantile levels must be increasing",
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RegimeModelDoc {
            format: REGIME_MODEL_FORMAT.into(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RegimeModelDoc = serde_json::from_str(text)?;
        if doc.format != REGIME_MODEL_FORMAT {
            return Err(Error::invalid(format!(
                "unexpected document format {:?}",
                doc.format
            )));
        }
        doc.model.validate()?;
        Ok(doc.model)
    }
}

pub(crate) fn classify_with(boundaries: &[f64], price: f64) -> usize {
    boundaries
        .iter()
        .position(|&b| price <= b)
        .unwrap_or(boundaries.len())
}

const REGIME_MODEL_FORMAT: &str = "chillplan/regime-model/v1";

#[derive(Serialize, Deserialize)]
struct RegimeModelDoc {
    format: String,
    #[serde(flatten)]
    model: RegimeModel,
}
