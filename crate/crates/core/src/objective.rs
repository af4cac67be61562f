//! Composite objective, auxiliary metrics, constraint report and the
//! analytic bounds used as runtime checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::rates::{rate_breakdown, RsNomaSolution};
use crate::sensing::{evaluate_sensing, TargetModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub alpha: [f64; 4],
}

impl ObjectiveWeights {
    /// Weights are normalized to sum to one.
    pub fn new(a1: f64, a2: f64, a3: f64, a4: f64) -> Result<Self> {
        Self::from_array([a1, a2, a3, a4])
    }

    pub fn from_array(alpha: [f64; 4]) -> Result<Self> {
        if alpha.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::invalid("objective weights must be non-negative"));
        }
        let s: f64 = alpha.iter().sum();
        if !(s > 0.0) {
            return Err(Error::invalid("objective weights must not all be zero"));
        }
        Ok(Self {
            alpha: alpha.map(|a| a / s),
        })
    }
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self::new(0.5, 0.3, 0.1, 0.1).expect("valid defaults")
    }
}

/// Per-component divisors applied before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentScales(pub [f64; 4]);

impl ComponentScales {
    pub const UNIT: Self = Self([1.0; 4]);

    /// Scales taken from a reference evaluation; near-zero components keep scale 1.
    pub fn from_reference(c: &Components) -> Self {
        Self(c.as_array().map(|v| if v.abs() > 1e-12 { v.abs() } else { 1.0 }))
    }
}

impl Default for ComponentScales {
    fn default() -> Self {
        Self::UNIT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_n2: f64,
    pub sigma_s2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub p_max: f64,
    pub r_min: f64,
    pub p_d_min: f64,
    pub crlb_max: f64,
    pub p_fa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Components {
    pub sum_rate: f64,
    pub sensing_utility: f64,
    pub energy_efficiency: f64,
    pub fairness: f64,
}

impl Components {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sum_rate, self.sensing_utility, self.energy_efficiency, self.fairness]
    }

    pub fn weighted(&self, w: &ObjectiveWeights, s: &ComponentScales) -> f64 {
        let c = self.as_array();
        (0..4).map(|i| w.alpha[i] * c[i] / s.0[i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub components: Components,
    pub composite: f64,
}

/// `log2(1 + γ)`.
pub fn sensing_utility(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

pub fn energy_efficiency(sum_rate: f64, total_power: f64) -> Result<f64> {
    if total_power > 0.0 {
        return Ok(sum_rate / total_power);
    }
    if sum_rate == 0.0 {
        return Ok(0.0);
    }
    Err(Error::DivisionByZero("energy efficiency with zero transmit power".into()))
}

/// Jain's index `(Σr)²/(K·Σr²)`.
pub fn jain_fairness(rates: &[f64]) -> Result<f64> {
    let s: f64 = rates.iter().sum();
    let q: f64 = rates.iter().map(|r| r * r).sum();
    if rates.is_empty() || !(q > 0.0) {
        return Err(Error::UndefinedFairness);
    }
    Ok(s * s / (rates.len() as f64 * q))
}

pub fn components(
    solution: &RsNomaSolution,
    channels: &[CVec],
    targets: &[TargetModel],
    noise: &NoiseModel,
) -> Result<Components> {
    let rates = rate_breakdown(solution, channels, noise.sigma_n2);
    let sum_rate = rates.sum_rate();
    let sinr = crate::sensing::sinr_from_energies(&crate::sensing::echo_energies(targets, solution), noise.sigma_s2);
    Ok(Components {
        sum_rate,
        sensing_utility: sinr.iter().map(|&g| sensing_utility(g)).sum(),
        energy_efficiency: energy_efficiency(sum_rate, solution.total_power())?,
        fairness: jain_fairness(&rates.total_rates())?,
    })
}

/// `α₁ΣR_k + α₂ΣU_s(Γ_l) + α₃·EE + α₄·J`, with optional per-component scales.
pub fn composite_objective(
    solution: &RsNomaSolution,
    channels: &[CVec],
    targets: &[TargetModel],
    weights: &ObjectiveWeights,
    noise: &NoiseModel,
    scales: Option<&ComponentScales>,
) -> Result<ObjectiveValue> {
    let c = components(solution, channels, targets, noise)?;
    let composite = c.weighted(weights, scales.unwrap_or(&ComponentScales::UNIT));
    Ok(ObjectiveValue {
        components: c,
        composite,
    })
}

pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `P_max − Σ_j ‖w_j‖²·P_j` in watts.
    pub power_margin: f64,
    pub rate_slack: Vec<f64>,
    pub detection_slack: Vec<f64>,
    pub crlb_slack: Vec<f64>,
    pub rho_in_bounds: Vec<bool>,
    /// `|‖w_j‖ − 1|` per stream.
    pub unit_norm_residual: Vec<f64>,
    pub feasible: bool,
}

impl ConstraintReport {
    /// Sum of squared negative slacks; zero when feasible.
    pub fn violation(&self) -> f64 {
        let neg = |x: &f64| x.min(0.0).powi(2);
        neg(&self.power_margin)
            + self.rate_slack.iter().map(neg).sum::<f64>()
            + self.detection_slack.iter().map(neg).sum::<f64>()
            + self.crlb_slack.iter().map(neg).sum::<f64>()
    }
}

pub fn check_constraints(
    solution: &RsNomaSolution,
    channels: &[CVec],
    targets: &[TargetModel],
    limits: &Limits,
    noise: &NoiseModel,
) -> Result<ConstraintReport> {
    let powers = solution.powers();
    let used: f64 = (0..solution.num_streams())
        .map(|j| linalg::norm_sqr(solution.beam(j)) * powers[j])
        .sum();
    let rates = rate_breakdown(solution, channels, noise.sigma_n2);
    let sens = evaluate_sensing(targets, solution, noise.sigma_s2, limits.p_fa, limits.p_max)?;
    let power_margin = limits.p_max - used;
    let rate_slack: Vec<f64> = rates.users.iter().map(|u| u.total_rate - limits.r_min).collect();
    let detection_slack: Vec<f64> = sens.targets.iter().map(|t| t.detection_prob - limits.p_d_min).collect();
    let crlb_slack: Vec<f64> = sens
        .targets
        .iter()
        .map(|t| {
            if limits.crlb_max == f64::INFINITY {
                f64::INFINITY
            } else {
                limits.crlb_max - t.crlb
            }
        })
        .collect();
    let rho_in_bounds: Vec<bool> = solution.rho.iter().map(|r| (0.0..=1.0).contains(r)).collect();
    let unit_norm_residual: Vec<f64> = (0..solution.num_streams())
        .map(|j| (linalg::norm_sqr(solution.beam(j)).sqrt() - 1.0).abs())
        .collect();
    let ok = |x: &f64| *x >= -FEASIBILITY_TOL;
    let feasible = ok(&power_margin)
        && rate_slack.iter().all(ok)
        && detection_slack.iter().all(ok)
        && crlb_slack.iter().all(ok)
        && rho_in_bounds.iter().all(|b| *b)
        && unit_norm_residual.iter().all(|r| *r <= FEASIBILITY_TOL);
    Ok(ConstraintReport {
        power_margin,
        rate_slack,
        detection_slack,
        crlb_slack,
        rho_in_bounds,
        unit_norm_residual,
        feasible,
    })
}

/// `min(Σ_k log2(1 + P_max‖h_k‖²/σ²), M·log2(1 + P_max·λ_max(H^H H)/(K·σ²)))`.
pub fn sum_rate_upper_bound(channels: &[CVec], p_max: f64, sigma_n2: f64) -> Result<f64> {
    if channels.is_empty() {
        return Ok(0.0);
    }
    if !(sigma_n2 > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    let k = channels.len();
    let m = channels[0].len();
    let per_user: f64 = channels
        .iter()
        .map(|h| (1.0 + p_max * linalg::norm_sqr(h) / sigma_n2).log2())
        .sum();
    let h = CMat::from_columns(channels);
    let gram = h.adjoint() * &h;
    let lmax = linalg::hermitian_eigenvalues(&gram).last().copied().unwrap_or(0.0).max(0.0);
    let dof = m as f64 * (1.0 + p_max * lmax / (k as f64 * sigma_n2)).log2();
    Ok(per_user.min(dof))
}

/// `1 − 1/√K`.
pub fn critical_correlation(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("need at least one user"));
    }
    Ok(1.0 - 1.0 / (k as f64).sqrt())
}

/// `log2(1 + ρ_c²·P_c·‖h̄‖²/((1 − ρ_c²)·σ²))`.
pub fn rs_gain_lower_bound(rho_c: f64, p_c: f64, mean_channel: &CVec, sigma_n2: f64) -> Result<f64> {
    if rho_c == 1.0 {
        return Err(Error::DivisionByZero("correlation of exactly one".into()));
    }
    if !(0.0..1.0).contains(&rho_c) {
        return Err(Error::invalid(format!("correlation must lie in [0, 1), got {rho_c}")));
    }
    if !(sigma_n2 > 0.0 && p_c >= 0.0) {
        return Err(Error::invalid("gain bound needs sigma_n2 > 0 and p_c >= 0"));
    }
    let r2 = rho_c * rho_c;
    Ok((1.0 + r2 * p_c * linalg::norm_sqr(mean_channel) / ((1.0 - r2) * sigma_n2)).log2())
}
