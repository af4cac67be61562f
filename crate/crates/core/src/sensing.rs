//! Sensing metrics: echo SINR, Neyman-Pearson detection and angle CRLB.
//!
//! For target `l` with steering `a_l` and the power-weighted covariance
//! `W = Σ_j P_j w_j w_j^H`, `tr(H_l W) = amp_l·e^{jφ_l}·Σ_j P_j |a_l^H w_j|²`,
//! which is what [`TargetModel`] evaluates without forming `W`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{array_response, element_distance, sensing_channel, ArrayGeometry, DistanceModel, SensingTarget};
use crate::linalg::{self, CMat, CVec};
use crate::rates::RsNomaSolution;
use crate::special::{q_function, q_inverse};

/// Central-difference step used for steering derivatives.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    #[default]
    FiniteDifference,
    Analytic,
}

/// `Σ_j P_j w_j w_j^H` over every stream.
pub fn total_covariance(solution: &RsNomaSolution) -> CMat {
    let m = solution.antennas();
    let mut w = CMat::zeros(m, m);
    for (j, p) in solution.powers().into_iter().enumerate() {
        if p != 0.0 {
            w += linalg::outer(solution.beam(j)) * Complex64::new(p, 0.0);
        }
    }
    w
}

/// `∂a/∂θ` by central differences with an explicit step.
pub fn steering_derivative_fd(geom: &ArrayGeometry, theta: f64, phi: f64, r: f64, step: f64) -> Result<CVec> {
    let plus = array_response(geom, theta + step, phi, r, DistanceModel::Exact)?;
    let minus = array_response(geom, theta - step, phi, r, DistanceModel::Exact)?;
    Ok((plus - minus).unscale(2.0 * step))
}

/// Chain rule through `r_mn(θ)`.
fn steering_derivative_analytic(geom: &ArrayGeometry, theta: f64, phi: f64, r: f64) -> Result<CVec> {
    let min = geom.min_range();
    if !(r >= min) {
        return Err(Error::NearSingularity { range: r, min });
    }
    let scale = 1.0 / (geom.m_total() as f64).sqrt();
    let k0 = geom.k0();
    let mut out = CVec::zeros(geom.m_total());
    for m in 0..geom.mx {
        for n in 0..geom.my {
            let rmn = element_distance(geom, m, n, theta, phi, r)?;
            let (x, y) = (geom.dx * m as f64, geom.dy * n as f64);
            let drdt = -r * theta.cos() * (x * phi.cos() + y * phi.sin()) / rmn;
            let e = Complex64::from_polar(scale, k0 * rmn);
            out[geom.flat_index(m, n)] = e * Complex64::new(-1.0 / (rmn * rmn), k0 / rmn) * drdt;
        }
    }
    Ok(out)
}

pub fn steering_derivative(geom: &ArrayGeometry, theta: f64, phi: f64, r: f64, mode: DerivativeMode) -> Result<CVec> {
    match mode {
        DerivativeMode::FiniteDifference => steering_derivative_fd(geom, theta, phi, r, FD_STEP),
        DerivativeMode::Analytic => steering_derivative_analytic(geom, theta, phi, r),
    }
}

/// Per-target quantities that do not depend on the beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub target: SensingTarget,
    pub steering: CVec,
    pub amplitude: f64,
    pub phase: f64,
    /// `‖∂a/∂θ‖²` from the analytic derivative.
    pub derivative_norm2: f64,
}

impl TargetModel {
    pub fn new(geom: &ArrayGeometry, target: &SensingTarget) -> Result<Self> {
        target.validate()?;
        let steering = target.steering(geom)?;
        let d = steering_derivative(geom, target.theta, target.phi, target.range, DerivativeMode::Analytic)?;
        Ok(Self {
            target: *target,
            steering,
            amplitude: target.amplitude(geom.wavelength),
            phase: target.phase(geom.wavelength),
            derivative_norm2: linalg::norm_sqr(&d),
        })
    }

    /// `|tr(H_l W)|` given `b_j = a^H w_j` and stream powers.
    pub fn illumination(&self, b: &[Complex64], powers: &[f64]) -> f64 {
        self.amplitude * b.iter().zip(powers).map(|(z, p)| p * z.norm_sqr()).sum::<f64>()
    }

    pub fn projections(&self, solution: &RsNomaSolution) -> Vec<Complex64> {
        (0..solution.num_streams())
            .map(|j| linalg::inner(&self.steering, solution.beam(j)))
            .collect()
    }
}

pub fn target_models(geom: &ArrayGeometry, targets: &[SensingTarget]) -> Result<Vec<TargetModel>> {
    targets.iter().map(|t| TargetModel::new(geom, t)).collect()
}

/// Echo energies `σ_l·|tr(H_l W)|²` for every target.
pub fn echo_energies(models: &[TargetModel], solution: &RsNomaSolution) -> Vec<f64> {
    let powers = solution.powers();
    models
        .iter()
        .map(|t| {
            let s = t.illumination(&t.projections(solution), &powers);
            t.target.rcs * s * s
        })
        .collect()
}

/// `Γ_l = E_l/(Σ_{l'≠l} E_{l'} + σ_s²)`.
pub fn sinr_from_energies(energies: &[f64], sigma_s2: f64) -> Vec<f64> {
    let total: f64 = energies.iter().sum();
    energies
        .iter()
        .map(|&e| {
            let clutter = (total - e).max(0.0);
            e / (clutter + sigma_s2)
        })
        .collect()
}

pub fn sensing_sinr(
    target_idx: usize,
    solution: &RsNomaSolution,
    targets: &[SensingTarget],
    geom: &ArrayGeometry,
    sigma_s2: f64,
) -> Result<f64> {
    if !(sigma_s2 > 0.0) {
        return Err(Error::invalid("sensing noise power must be positive"));
    }
    if target_idx >= targets.len() {
        return Err(Error::invalid(format!("target {target_idx} out of range")));
    }
    let models = target_models(geom, targets)?;
    Ok(sinr_from_energies(&echo_energies(&models, solution), sigma_s2)[target_idx])
}

/// `P_d = Q(Q⁻¹(P_fa) − √(2γ))`.
pub fn detection_probability(gamma: f64, p_fa: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!("SINR must be non-negative, got {gamma}")));
    }
    let t = q_inverse(p_fa)?;
    Ok(q_function(t - (2.0 * gamma).sqrt()))
}

/// Smallest SINR meeting a detection target: `(Q⁻¹(P_fa) − Q⁻¹(P_d))²/2`.
pub fn required_sinr(p_d_min: f64, p_fa: f64) -> Result<f64> {
    let gap = q_inverse(p_fa)? - q_inverse(p_d_min)?;
    Ok(if gap > 0.0 { 0.5 * gap * gap } else { 0.0 })
}

/// `J(θ) = (2/σ_s²)·‖∂μ/∂θ‖²` with `μ(θ) = sqrt(σ_l·P_s)·a(θ)` and the
/// derivative taken numerically.
pub fn fisher_information(
    target: &SensingTarget,
    solution: &RsNomaSolution,
    geom: &ArrayGeometry,
    sigma_s2: f64,
) -> Result<f64> {
    if !(sigma_s2 > 0.0) {
        return Err(Error::invalid("sensing noise power must be positive"));
    }
    target.validate()?;
    let d = steering_derivative(geom, target.theta, target.phi, target.range, DerivativeMode::FiniteDifference)?;
    let gain = target.rcs * solution.p_sensing;
    Ok(2.0 / sigma_s2 * gain * linalg::norm_sqr(&d))
}

fn crlb_with_power(derivative_norm2: f64, rcs: f64, power: f64, sigma_s2: f64) -> Result<f64> {
    if !(derivative_norm2 > 0.0) {
        return Err(Error::DegenerateGeometry("steering derivative vanishes".into()));
    }
    if power <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(sigma_s2 / (2.0 * power * rcs * derivative_norm2))
}

/// `σ_s²/(2·P_s·σ_l·‖∂a/∂θ‖²)`.
pub fn crlb_closed_form(
    target: &SensingTarget,
    solution: &RsNomaSolution,
    geom: &ArrayGeometry,
    sigma_s2: f64,
) -> Result<f64> {
    let m = TargetModel::new(geom, target)?;
    crlb_with_power(m.derivative_norm2, target.rcs, solution.p_sensing, sigma_s2)
}

/// Same expression with the total transmit power in place of `P_s`.
pub fn crlb_total_power(
    target: &SensingTarget,
    solution: &RsNomaSolution,
    geom: &ArrayGeometry,
    sigma_s2: f64,
) -> Result<f64> {
    let m = TargetModel::new(geom, target)?;
    crlb_with_power(m.derivative_norm2, target.rcs, solution.total_power(), sigma_s2)
}

/// `σ_s²/(2·P_max·σ_l·‖∂a/∂θ‖²)`.
pub fn crlb_lower_bound(target: &SensingTarget, geom: &ArrayGeometry, sigma_s2: f64, p_max: f64) -> Result<f64> {
    let m = TargetModel::new(geom, target)?;
    crlb_with_power(m.derivative_norm2, target.rcs, p_max, sigma_s2)
}

/// Sensing power needed for `crlb <= crlb_max` on every target.
pub fn power_for_crlb(models: &[TargetModel], sigma_s2: f64, crlb_max: f64) -> f64 {
    if !(crlb_max.is_finite() && crlb_max > 0.0) {
        return 0.0;
    }
    models
        .iter()
        .map(|t| sigma_s2 / (2.0 * crlb_max * t.target.rcs * t.derivative_norm2))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub sinr: f64,
    pub sinr_db: f64,
    pub detection_prob: f64,
    pub crlb: f64,
    pub crlb_lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingEvaluation {
    pub targets: Vec<TargetMetrics>,
}

impl SensingEvaluation {
    pub fn mean_detection(&self) -> f64 {
        mean(self.targets.iter().map(|t| t.detection_prob))
    }

    pub fn mean_crlb(&self) -> f64 {
        mean(self.targets.iter().map(|t| t.crlb))
    }
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len();
    if n == 0 {
        return 0.0;
    }
    it.sum::<f64>() / n as f64
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn evaluate_sensing(
    models: &[TargetModel],
    solution: &RsNomaSolution,
    sigma_s2: f64,
    p_fa: f64,
    p_max: f64,
) -> Result<SensingEvaluation> {
    let sinr = sinr_from_energies(&echo_energies(models, solution), sigma_s2);
    let mut targets = Vec::with_capacity(models.len());
    for (t, &g) in models.iter().zip(&sinr) {
        targets.push(TargetMetrics {
            sinr: g,
            sinr_db: to_db(g),
            detection_prob: detection_probability(g, p_fa)?,
            crlb: crlb_with_power(t.derivative_norm2, t.target.rcs, solution.p_sensing, sigma_s2)?,
            crlb_lower_bound: crlb_with_power(t.derivative_norm2, t.target.rcs, p_max, sigma_s2)?,
        });
    }
    Ok(SensingEvaluation { targets })
}

/// Dense `tr(H_l W)` used as a cross-check of [`TargetModel::illumination`].
pub fn trace_dense(geom: &ArrayGeometry, target: &SensingTarget, solution: &RsNomaSolution) -> Result<Complex64> {
    let h = sensing_channel(geom, target)?;
    Ok((h.matrix * total_covariance(solution)).trace())
}
