//! Scenario configuration: strict TOML with per-section defaults and
//! shipped presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, DistanceModel, SPEED_OF_LIGHT};
use crate::objective::{Limits, NoiseModel, ObjectiveWeights};
use crate::optimizers::{Algorithm, OptimizerConfig, model::DEFAULT_PENALTY};

/// `P[W] = 10^((dBm − 30)/10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub mx: usize,
    pub my: usize,
    pub spacing_over_lambda: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub distance_model: DistanceChoice,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            mx: 8,
            my: 8,
            spacing_over_lambda: 0.25,
            carrier_hz: 100e9,
            bandwidth_hz: 2e9,
            distance_model: DistanceChoice::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceChoice {
    Exact,
    Fresnel,
}

impl From<DistanceChoice> for DistanceModel {
    fn from(d: DistanceChoice) -> Self {
        match d {
            DistanceChoice::Exact => DistanceModel::Exact,
            DistanceChoice::Fresnel => DistanceModel::Fresnel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSection {
    pub users: usize,
    pub targets: usize,
    pub groups: usize,
}

impl Default for PopulationSection {
    fn default() -> Self {
        Self {
            users: 8,
            targets: 2,
            groups: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowersSection {
    pub p_max_dbm: f64,
    pub sigma_n_dbm: f64,
    pub sigma_s_dbm: f64,
}

impl Default for PowersSection {
    fn default() -> Self {
        Self {
            p_max_dbm: 50.0,
            sigma_n_dbm: -90.0,
            sigma_s_dbm: -85.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub paths: usize,
    /// Weight of a channel component shared by all users.
    pub user_correlation: f64,
    pub theta_max_deg: f64,
    pub range_min_fraction: f64,
    pub range_max_fraction: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            paths: 3,
            user_correlation: 0.0,
            theta_max_deg: 60.0,
            range_min_fraction: 0.1,
            range_max_fraction: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetsSection {
    pub rcs_min: f64,
    pub rcs_max: f64,
    pub theta_max_deg: f64,
    pub range_min_fraction: f64,
    pub range_max_fraction: f64,
}

impl Default for TargetsSection {
    fn default() -> Self {
        Self {
            rcs_min: 0.1,
            rcs_max: 1.0,
            theta_max_deg: 60.0,
            range_min_fraction: 0.1,
            range_max_fraction: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpairmentsSection {
    pub phase_noise_dbc: Option<f64>,
    pub irr_db: Option<f64>,
    pub coupling_kappa: f64,
    pub coupling_decay: f64,
    pub csi_eps: f64,
}

impl Default for ImpairmentsSection {
    fn default() -> Self {
        Self {
            phase_noise_dbc: None,
            irr_db: None,
            coupling_kappa: 0.0,
            coupling_decay: 0.5,
            csi_eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub alpha: [f64; 4],
    /// Divide each component by its value at the initial point.
    pub normalize: bool,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self {
            alpha: [0.5, 0.5, 0.0, 0.0],
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsSection {
    pub r_min: f64,
    pub p_d_min: f64,
    pub crlb_max: f64,
    pub p_fa: f64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self {
            r_min: 1.0,
            p_d_min: 0.9,
            crlb_max: 1e-6,
            p_fa: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub max_iters: usize,
    pub epsilon: f64,
    pub inner_steps: usize,
    pub step_size: f64,
    pub backtrack: f64,
    pub adaptive_weights: bool,
    pub penalty: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let c = OptimizerConfig::default();
        Self {
            max_iters: c.max_iters,
            epsilon: c.epsilon,
            inner_steps: c.inner_steps,
            step_size: c.step_size,
            backtrack: c.backtrack,
            adaptive_weights: c.adaptive_weights,
            penalty: DEFAULT_PENALTY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    None,
    Alpha,
    Antennas,
    #[serde(alias = "impairment")]
    PhaseNoise,
    Irr,
    CsiEps,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Antennas => "antennas",
            SweepAxis::PhaseNoise => "phase_noise",
            SweepAxis::Irr => "irr",
            SweepAxis::CsiEps => "csi_eps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SweepAxis::None),
            "alpha" => Ok(SweepAxis::Alpha),
            "antennas" => Ok(SweepAxis::Antennas),
            "phase_noise" | "impairment" => Ok(SweepAxis::PhaseNoise),
            "irr" => Ok(SweepAxis::Irr),
            "csi_eps" => Ok(SweepAxis::CsiEps),
            other => Err(Error::config(
                "experiment.sweep_axis",
                format!("unknown axis `{other}` (expected none, alpha, antennas, phase_noise, irr or csi_eps)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub trials: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 1,
            algorithms: Algorithm::ALL.to_vec(),
            sweep_axis: SweepAxis::None,
            sweep_values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub geometry: GeometrySection,
    pub population: PopulationSection,
    pub powers: PowersSection,
    pub channel: ChannelSection,
    pub targets: TargetsSection,
    pub impairments: ImpairmentsSection,
    pub weights: WeightsSection,
    pub limits: LimitsSection,
    pub optimizer: OptimizerSection,
    pub experiment: ExperimentSection,
}

pub const PRESETS: [&str; 3] = ["desk_small", "desk_correlated", "full_scale"];

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be finite, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be at least {min}, got {v}")))
    }
}

fn fraction(key: &str, v: f64, lo_open: bool) -> Result<()> {
    let ok = if lo_open { v > 0.0 && v < 1.0 } else { (0.0..1.0).contains(&v) };
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, format!("must lie in {}0, 1), got {v}", if lo_open { "(" } else { "[" })))
    }
}

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Self::default();
        match name {
            "desk_small" => {}
            "desk_correlated" => {
                c.population.users = 4;
                c.population.groups = 2;
                c.channel.user_correlation = 0.7;
            }
            "full_scale" => {
                c.geometry.mx = 32;
                c.geometry.my = 32;
                c.population.users = 64;
                c.population.targets = 8;
                c.population.groups = 32;
                c.impairments.phase_noise_dbc = Some(-35.0);
                c.impairments.irr_db = Some(30.0);
                c.impairments.coupling_kappa = 0.1;
                c.experiment.trials = 5000;
            }
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
                ))
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::config(error_key(&e), e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        at_least("geometry.mx", g.mx, 1)?;
        at_least("geometry.my", g.my, 1)?;
        positive("geometry.spacing_over_lambda", g.spacing_over_lambda)?;
        positive("geometry.carrier_hz", g.carrier_hz)?;
        positive("geometry.bandwidth_hz", g.bandwidth_hz)?;
        let p = &self.population;
        at_least("population.users", p.users, 1)?;
        at_least("population.groups", p.groups, 1)?;
        if p.groups > p.users {
            return Err(Error::config("population.groups", format!("{} groups exceed {} users", p.groups, p.users)));
        }
        finite("powers.p_max_dbm", self.powers.p_max_dbm)?;
        finite("powers.sigma_n_dbm", self.powers.sigma_n_dbm)?;
        finite("powers.sigma_s_dbm", self.powers.sigma_s_dbm)?;
        let ch = &self.channel;
        at_least("channel.paths", ch.paths, 1)?;
        fraction("channel.user_correlation", ch.user_correlation, false)?;
        positive("channel.theta_max_deg", ch.theta_max_deg)?;
        positive("channel.range_min_fraction", ch.range_min_fraction)?;
        positive("channel.range_max_fraction", ch.range_max_fraction)?;
        let t = &self.targets;
        positive("targets.rcs_min", t.rcs_min)?;
        positive("targets.rcs_max", t.rcs_max)?;
        if t.rcs_max < t.rcs_min {
            return Err(Error::config("targets.rcs_max", "must not be below targets.rcs_min"));
        }
        positive("targets.theta_max_deg", t.theta_max_deg)?;
        positive("targets.range_min_fraction", t.range_min_fraction)?;
        positive("targets.range_max_fraction", t.range_max_fraction)?;
        let im = &self.impairments;
        if let Some(v) = im.phase_noise_dbc {
            finite("impairments.phase_noise_dbc", v)?;
        }
        if let Some(v) = im.irr_db {
            positive("impairments.irr_db", v)?;
        }
        if !(im.coupling_kappa.abs() < crate::impairments::KAPPA_LIMIT) {
            return Err(Error::config("impairments.coupling_kappa", format!("|kappa| must be below {}", crate::impairments::KAPPA_LIMIT)));
        }
        if !(im.coupling_decay >= 0.0 && im.coupling_decay.is_finite()) {
            return Err(Error::config("impairments.coupling_decay", "must be non-negative"));
        }
        if !(im.csi_eps >= 0.0 && im.csi_eps.is_finite()) {
            return Err(Error::config("impairments.csi_eps", "must be non-negative"));
        }
        ObjectiveWeights::from_array(self.weights.alpha).map_err(|e| Error::config("weights.alpha", e.to_string()))?;
        let l = &self.limits;
        if !(l.r_min >= 0.0 && l.r_min.is_finite()) {
            return Err(Error::config("limits.r_min", "must be non-negative"));
        }
        fraction("limits.p_fa", l.p_fa, true)?;
        if !(l.p_d_min > 0.0 && l.p_d_min < 1.0) {
            return Err(Error::config("limits.p_d_min", "must lie in (0, 1)"));
        }
        if !(l.crlb_max > 0.0) {
            return Err(Error::config("limits.crlb_max", "must be positive (inf disables it)"));
        }
        self.optimizer_config(0).validate().map_err(|e| Error::config("optimizer", e.to_string()))?;
        if !(self.optimizer.penalty >= 0.0 && self.optimizer.penalty.is_finite()) {
            return Err(Error::config("optimizer.penalty", "must be non-negative"));
        }
        let e = &self.experiment;
        at_least("experiment.trials", e.trials, 2)?;
        if e.algorithms.is_empty() {
            return Err(Error::config("experiment.algorithms", "need at least one algorithm"));
        }
        if e.sweep_axis != SweepAxis::None && e.sweep_values.is_empty() {
            return Err(Error::config("experiment.sweep_values", "sweep grid must not be empty"));
        }
        for v in &e.sweep_values {
            finite("experiment.sweep_values", *v)?;
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.geometry.carrier_hz
    }

    pub fn array_geometry(&self) -> Result<ArrayGeometry> {
        let lam = self.wavelength();
        let d = self.geometry.spacing_over_lambda * lam;
        ArrayGeometry::new(self.geometry.mx, self.geometry.my, d, d, lam)
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            sigma_n2: dbm_to_watts(self.powers.sigma_n_dbm),
            sigma_s2: dbm_to_watts(self.powers.sigma_s_dbm),
        }
    }

    pub fn limits(&self) -> Limits {
        Limits {
            p_max: dbm_to_watts(self.powers.p_max_dbm),
            r_min: self.limits.r_min,
            p_d_min: self.limits.p_d_min,
            crlb_max: self.limits.crlb_max,
            p_fa: self.limits.p_fa,
        }
    }

    pub fn weights(&self) -> Result<ObjectiveWeights> {
        ObjectiveWeights::from_array(self.weights.alpha)
    }

    pub fn optimizer_config(&self, seed: u64) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            max_iters: o.max_iters,
            epsilon: o.epsilon,
            inner_steps: o.inner_steps,
            step_size: o.step_size,
            backtrack: o.backtrack,
            adaptive_weights: o.adaptive_weights,
            seed,
        }
    }

    /// Copy with one sweep axis set to `value`.
    pub fn with_sweep_value(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match axis {
            SweepAxis::None => {}
            SweepAxis::Alpha => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::config("experiment.sweep_values", format!("alpha value {value} outside [0, 1]")));
                }
                let rest: f64 = c.weights.alpha[1..].iter().sum();
                let scale = if rest > 0.0 { (1.0 - value) / rest } else { 0.0 };
                c.weights.alpha[0] = value;
                for a in &mut c.weights.alpha[1..] {
                    *a *= scale;
                }
            }
            SweepAxis::Antennas => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config("experiment.sweep_values", format!("array side {value} is not a positive integer")));
                }
                c.geometry.mx = value as usize;
                c.geometry.my = value as usize;
            }
            SweepAxis::PhaseNoise => c.impairments.phase_noise_dbc = Some(value),
            SweepAxis::Irr => c.impairments.irr_db = Some(value),
            SweepAxis::CsiEps => c.impairments.csi_eps = value,
        }
        c.validate()?;
        Ok(c)
    }
}

/// Dotted key path for a TOML error, recovered from its message where possible.
fn error_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    if let Some(start) = msg.find("unknown field `") {
        let rest = &msg[start + 15..];
        if let Some(end) = rest.find('`') {
            return rest[..end].to_string();
        }
    }
    "config".to_string()
}
