//! Beamforming, power and rate-splitting optimizers.
//!
//! * [`hao_sca`]: block-coordinate ascent (beams, powers, splitting ratios)
//!   on the penalized merit of [`model::Problem`].
//! * [`wmmse`]: weighted-MMSE iteration with a sensing-power line search.
//! * [`fp`]: quadratic-transform fractional programming on private streams.

pub mod fp;
pub mod hao_sca;
pub mod model;
pub mod wmmse;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::complex_gaussian;
use crate::linalg::{self, CVec};
use crate::rates::RsNomaSolution;

pub use fp::run_fp;
pub use hao_sca::{run_conv_noma, run_hao_sca, run_hao_sca_from, sca_surrogate_gamma};
pub use model::Problem;
pub use wmmse::run_e_wmmse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub epsilon: f64,
    pub inner_steps: usize,
    pub step_size: f64,
    pub backtrack: f64,
    pub adaptive_weights: bool,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            epsilon: 1e-4,
            inner_steps: 20,
            step_size: 0.5,
            backtrack: 0.5,
            adaptive_weights: false,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid("backtrack must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Per-iteration history of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// Objective at the starting point.
    pub initial: f64,
    /// Objective after each iteration.
    pub objective: Vec<f64>,
    pub violation: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub monotone: bool,
}

/// Relative slack allowed when judging a trace monotone.
pub const MONOTONE_SLACK: f64 = 1e-9;

impl ConvergenceTrace {
    pub fn new(initial: f64) -> Self {
        Self {
            initial,
            objective: Vec::new(),
            violation: Vec::new(),
            iterations: 0,
            converged: false,
            monotone: true,
        }
    }

    pub fn push(&mut self, value: f64, violation: f64) {
        let prev = self.objective.last().copied().unwrap_or(self.initial);
        if value < prev - MONOTONE_SLACK * prev.abs().max(1.0) {
            self.monotone = false;
        }
        self.objective.push(value);
        self.violation.push(violation);
        self.iterations = self.objective.len();
    }

    pub fn last(&self) -> f64 {
        self.objective.last().copied().unwrap_or(self.initial)
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        let mut prev = self.initial;
        for &v in &self.objective {
            if v < prev - slack * prev.abs().max(1.0) {
                return false;
            }
            prev = v;
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    HaoSca,
    EWmmse,
    Fp,
    ConvNoma,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::HaoSca, Algorithm::EWmmse, Algorithm::Fp, Algorithm::ConvNoma];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::HaoSca => "hao_sca",
            Algorithm::EWmmse => "e_wmmse",
            Algorithm::Fp => "fp",
            Algorithm::ConvNoma => "conv_noma",
        }
    }

    pub fn run(&self, problem: &Problem, config: &OptimizerConfig) -> Result<(RsNomaSolution, ConvergenceTrace)> {
        match self {
            Algorithm::HaoSca => run_hao_sca(problem, config),
            Algorithm::EWmmse => run_e_wmmse(problem, config),
            Algorithm::Fp => run_fp(problem, config),
            Algorithm::ConvNoma => run_conv_noma(problem, config),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm `{s}` (expected hao_sca, e_wmmse, fp or conv_noma)")))
    }
}

/// Unit vector along `v`, or a seeded random unit vector when `v` vanishes.
pub(crate) fn unit_or_random(v: &CVec, seed: u64, salt: u64) -> CVec {
    if let Some(u) = linalg::normalized(v) {
        return u;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let r = CVec::from_fn(v.len(), |_, _| complex_gaussian(&mut rng, 1.0));
    linalg::normalized(&r).expect("gaussian draw is nonzero")
}

/// `(Σ_{i≠k} h_i h_i^H + δI)^{-1} h_k` via the Woodbury identity.
pub(crate) fn regularized_beam(channels: &[CVec], k: usize, delta: f64) -> Result<CVec> {
    let m = channels[k].len();
    let others: Vec<&CVec> = channels.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, h)| h).collect();
    let hk = &channels[k];
    if others.is_empty() {
        return Ok(hk.unscale(delta));
    }
    let r = others.len();
    let mut gram = DMatrix::<Complex64>::zeros(r, r);
    let mut rhs = CVec::zeros(r);
    for (a, ha) in others.iter().enumerate() {
        rhs[a] = linalg::inner(ha, hk);
        for (b, hb) in others.iter().enumerate() {
            gram[(a, b)] = linalg::inner(ha, hb);
        }
        gram[(a, a)] += Complex64::new(delta, 0.0);
    }
    let coef = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("regularized inverse in initialization"))?;
    let mut out = hk.clone();
    for (a, ha) in others.iter().enumerate() {
        out.axpy(-coef[a], ha, Complex64::new(1.0, 0.0));
    }
    let out = out.unscale(delta);
    if !linalg::all_finite(&out) || out.len() != m {
        return Err(Error::numerical("regularized inverse in initialization"));
    }
    Ok(out)
}

/// Eigenbeamforming initialization: group-mean common beams, regularized
/// private beams with `δ = σ_n²/P_max`, RCS-weighted sensing beam, equal
/// powers and `ρ = 0.5`.
pub fn init_hao_sca(problem: &Problem, config: &OptimizerConfig) -> Result<RsNomaSolution> {
    let m = problem.antennas();
    let g_count = problem.num_groups();
    let k_count = problem.num_users();
    let mut w_common = Vec::with_capacity(g_count);
    for (g, members) in problem.grouping.sic_order.iter().enumerate() {
        let mut mean = CVec::zeros(m);
        for &k in members {
            mean += &problem.channels[k];
        }
        w_common.push(unit_or_random(&mean, config.seed, g as u64));
    }
    let delta = problem.noise.sigma_n2 / problem.limits.p_max;
    let mut w_private = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let v = regularized_beam(&problem.channels, k, delta)?;
        w_private.push(unit_or_random(&v, config.seed, 1000 + k as u64));
    }
    let mut sens = CVec::zeros(m);
    for t in &problem.targets {
        sens.axpy(Complex64::new(t.target.rcs, 0.0), &t.steering, Complex64::new(1.0, 0.0));
    }
    let w_sensing = unit_or_random(&sens, config.seed, 7777);
    let has_targets = !problem.targets.is_empty();
    let streams = g_count + k_count + usize::from(has_targets);
    let p = problem.limits.p_max / streams as f64;
    Ok(RsNomaSolution {
        w_common,
        w_private,
        w_sensing,
        p_common: vec![p; g_count],
        p_private: vec![p; k_count],
        p_sensing: if has_targets { p } else { 0.0 },
        rho: vec![0.5; k_count],
        grouping: problem.grouping.clone(),
    })
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
