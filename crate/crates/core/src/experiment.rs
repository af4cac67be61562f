//! Monte Carlo experiment driver.
//!
//! One work unit is a (sweep point, trial) pair. It draws the scenario once
//! and runs every requested algorithm on it, so comparisons are paired.
//! Beams are designed on the estimated channels; metrics are measured on
//! the true channels after the hardware transform `A·w`.

use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, SweepAxis};
use crate::error::{Error, Result};
use crate::geometry::{channel_from_paths, generate_user_channel, sample_paths, LargeScale, PathSampler, SensingTarget};
use crate::impairments::{
    coupling_matrix, inject_csi_error, phase_noise_step, solve_iq_for_irr, ImpairmentChain, IqImbalance, PhaseNoiseState,
};
use crate::linalg::{CMat, CVec};
use crate::objective::{check_constraints, sum_rate_upper_bound, ComponentScales};
use crate::optimizers::{init_hao_sca, Algorithm, ConvergenceTrace, Problem};
use crate::par::{self, Execution};
use crate::rates::{default_grouping, rate_breakdown, RsNomaSolution};
use crate::rng::{scenario_stream, stream, Purpose};
use crate::sensing::{evaluate_sensing, target_models, TargetModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub config: ScenarioConfig,
    pub algorithms: Vec<Algorithm>,
    pub num_trials: usize,
    pub master_seed: u64,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
}

impl ExperimentPlan {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        let e = &config.experiment;
        Self {
            config: config.clone(),
            algorithms: e.algorithms.clone(),
            num_trials: e.trials,
            master_seed: e.seed,
            sweep_axis: e.sweep_axis,
            sweep_values: e.sweep_values.clone(),
        }
    }

    /// Grid points; an unswept plan has the single point `NaN`.
    pub fn grid(&self) -> Vec<f64> {
        if self.sweep_axis == SweepAxis::None {
            vec![f64::NAN]
        } else {
            self.sweep_values.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trials < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.num_trials,
            });
        }
        if self.algorithms.is_empty() {
            return Err(Error::invalid("plan needs at least one algorithm"));
        }
        if self.sweep_axis != SweepAxis::None && self.sweep_values.is_empty() {
            return Err(Error::invalid("sweep grid must not be empty"));
        }
        self.config.validate()?;
        for v in self.grid() {
            if self.sweep_axis != SweepAxis::None {
                self.config.with_sweep_value(self.sweep_axis, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub schema_version: u32,
    pub sweep_axis: String,
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub channel_hash: u64,
    pub failed: bool,
    pub sum_rate: f64,
    pub sinr_db: Vec<f64>,
    pub mean_detection_prob: f64,
    pub mean_crlb: f64,
    pub energy_efficiency: f64,
    pub fairness: f64,
    pub objective: f64,
    pub upper_bound: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub converged: bool,
    pub monotone: bool,
}

impl TrialResult {
    /// Canonical ordering key.
    pub fn key(&self) -> (usize, usize, usize) {
        let a = Algorithm::ALL.iter().position(|x| *x == self.algorithm).unwrap_or(usize::MAX);
        (self.sweep_index, a, self.trial)
    }
}

/// Everything drawn for one trial at one sweep point.
#[derive(Debug, Clone)]
pub struct TrialScenario {
    pub channels: Vec<CVec>,
    pub estimates: Vec<CVec>,
    pub targets: Vec<TargetModel>,
    pub hardware: Option<CMat>,
    pub problem: Problem,
    pub optimizer_seed: u64,
}

/// FNV-1a over the bit patterns of all channel entries.
pub fn channel_hash(channels: &[CVec]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in channels {
        for z in c.iter() {
            for bits in [z.re.to_bits(), z.im.to_bits()] {
                for b in bits.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
    }
    h
}

fn draw_channels(cfg: &ScenarioConfig, master: u64, trial: usize) -> Result<Vec<CVec>> {
    let geom = cfg.array_geometry()?;
    let ch = &cfg.channel;
    let sampler = PathSampler::with_range_fractions(&geom, ch.theta_max_deg.to_radians(), ch.range_min_fraction, ch.range_max_fraction);
    let mut rng = scenario_stream(master, trial as u64, Purpose::Channel);
    let shared = channel_from_paths(&geom, 1.0, sample_paths(ch.paths, &sampler, &mut rng)?)?;
    let rho = ch.user_correlation;
    let own = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(cfg.population.users);
    for _ in 0..cfg.population.users {
        let u = generate_user_channel(&geom, LargeScale::FreeSpace, ch.paths, &sampler, &mut rng)?;
        let h = if rho > 0.0 {
            &u.h * Complex64::new(own, 0.0) + &shared.h * Complex64::new(rho * u.beta.sqrt(), 0.0)
        } else {
            u.h
        };
        out.push(h);
    }
    Ok(out)
}

fn draw_targets(cfg: &ScenarioConfig, master: u64, trial: usize) -> Result<Vec<TargetModel>> {
    let geom = cfg.array_geometry()?;
    let t = &cfg.targets;
    let sampler = PathSampler::with_range_fractions(&geom, t.theta_max_deg.to_radians(), t.range_min_fraction, t.range_max_fraction);
    let mut rng = scenario_stream(master, trial as u64, Purpose::Targets);
    let mut targets = Vec::with_capacity(cfg.population.targets);
    for _ in 0..cfg.population.targets {
        let (theta, phi, range) = sampler.sample(&mut rng);
        let rcs = t.rcs_min + (t.rcs_max - t.rcs_min) * rng.random::<f64>();
        targets.push(SensingTarget::new(theta, phi, range, rcs)?);
    }
    target_models(&geom, &targets)
}

fn draw_hardware(cfg: &ScenarioConfig, master: u64, sweep: usize, trial: usize) -> Result<Option<CMat>> {
    let geom = cfg.array_geometry()?;
    let m = geom.m_total();
    let im = &cfg.impairments;
    let mut rng = stream(master, sweep as u64, trial as u64, Purpose::Impairments);
    let mut chain = ImpairmentChain::identity();
    if im.coupling_kappa != 0.0 {
        chain.coupling = Some(coupling_matrix(&geom, &[im.coupling_kappa], im.coupling_decay)?);
    }
    if let Some(dbc) = im.phase_noise_dbc {
        let state = PhaseNoiseState::from_dbc(m, dbc, 1.0 / cfg.geometry.bandwidth_hz)?;
        chain.phase = Some(phase_noise_step(state, &mut rng));
    }
    if let Some(irr) = im.irr_db {
        let (psi, g) = solve_iq_for_irr(irr)?;
        chain.iq = Some(IqImbalance::with_random_signs(m, psi, g, &mut rng));
    }
    if chain.is_identity() {
        Ok(None)
    } else {
        chain.transform(m).map(Some)
    }
}

pub fn build_scenario(cfg: &ScenarioConfig, master: u64, sweep: usize, trial: usize) -> Result<TrialScenario> {
    let channels = draw_channels(cfg, master, trial)?;
    let targets = draw_targets(cfg, master, trial)?;
    let hardware = draw_hardware(cfg, master, sweep, trial)?;
    let mut csi = stream(master, sweep as u64, trial as u64, Purpose::Csi);
    let estimates = channels
        .iter()
        .map(|h| inject_csi_error(h, cfg.impairments.csi_eps, &mut csi))
        .collect::<Result<Vec<_>>>()?;
    let grouping = default_grouping(&estimates, cfg.population.groups)?;
    let mut problem = Problem::new(estimates.clone(), targets.clone(), grouping, cfg.noise(), cfg.limits(), cfg.weights()?)?;
    problem.penalty = cfg.optimizer.penalty;
    let optimizer_seed = stream(master, sweep as u64, trial as u64, Purpose::Optimizer).next_u64();
    if cfg.weights.normalize {
        let init = init_hao_sca(&problem, &cfg.optimizer_config(optimizer_seed))?;
        problem.scales = ComponentScales::from_reference(&problem.evaluate(&init).components);
    }
    Ok(TrialScenario {
        channels,
        estimates,
        targets,
        hardware,
        problem,
        optimizer_seed,
    })
}

/// Metrics of `sol` on the true channels after the hardware transform.
pub fn realized_metrics(
    scenario: &TrialScenario,
    sol: &RsNomaSolution,
    trace: &ConvergenceTrace,
) -> Result<TrialMetrics> {
    let p = &scenario.problem;
    let real = match &scenario.hardware {
        Some(a) => sol.transformed(a),
        None => sol.clone(),
    };
    let rates = rate_breakdown(&real, &scenario.channels, p.noise.sigma_n2);
    let sum_rate = rates.sum_rate();
    let sens = evaluate_sensing(&scenario.targets, &real, p.noise.sigma_s2, p.limits.p_fa, p.limits.p_max)?;
    let truth = Problem {
        channels: scenario.channels.clone(),
        ..p.clone()
    };
    let ev = truth.evaluate(&real);
    let report = check_constraints(&real, &scenario.channels, &scenario.targets, &p.limits, &p.noise)?;
    Ok(TrialMetrics {
        sum_rate,
        sinr_db: sens.targets.iter().map(|t| t.sinr_db).collect(),
        mean_detection_prob: if sens.targets.is_empty() { f64::NAN } else { sens.mean_detection() },
        mean_crlb: if sens.targets.is_empty() { f64::NAN } else { sens.mean_crlb() },
        energy_efficiency: ev.components.energy_efficiency,
        fairness: ev.components.fairness,
        objective: ev.composite,
        feasible: report.feasible,
        iterations: trace.iterations,
        converged: trace.converged,
        monotone: trace.monotone,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub sum_rate: f64,
    pub sinr_db: Vec<f64>,
    pub mean_detection_prob: f64,
    pub mean_crlb: f64,
    pub energy_efficiency: f64,
    pub fairness: f64,
    pub objective: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub converged: bool,
    pub monotone: bool,
}

fn run_unit(plan: &ExperimentPlan, sweep: usize, value: f64, trial: usize) -> Vec<TrialResult> {
    let cfg = if plan.sweep_axis == SweepAxis::None {
        plan.config.clone()
    } else {
        match plan.config.with_sweep_value(plan.sweep_axis, value) {
            Ok(c) => c,
            Err(_) => return failed_rows(plan, sweep, value, trial, 0, f64::NAN),
        }
    };
    let scenario = match build_scenario(&cfg, plan.master_seed, sweep, trial) {
        Ok(s) => s,
        Err(_) => return failed_rows(plan, sweep, value, trial, 0, f64::NAN),
    };
    let hash = channel_hash(&scenario.channels);
    let bound = sum_rate_upper_bound(&scenario.channels, scenario.problem.limits.p_max, scenario.problem.noise.sigma_n2)
        .unwrap_or(f64::NAN);
    let ocfg = cfg.optimizer_config(scenario.optimizer_seed);
    plan.algorithms
        .iter()
        .map(|&alg| {
            let outcome = alg
                .run(&scenario.problem, &ocfg)
                .and_then(|(sol, trace)| realized_metrics(&scenario, &sol, &trace));
            match outcome {
                Ok(m) => TrialResult {
                    schema_version: SCHEMA_VERSION,
                    sweep_axis: plan.sweep_axis.name().to_string(),
                    sweep_index: sweep,
                    sweep_value: value,
                    algorithm: alg,
                    trial,
                    channel_hash: hash,
                    failed: false,
                    sum_rate: m.sum_rate,
                    sinr_db: m.sinr_db,
                    mean_detection_prob: m.mean_detection_prob,
                    mean_crlb: m.mean_crlb,
                    energy_efficiency: m.energy_efficiency,
                    fairness: m.fairness,
                    objective: m.objective,
                    upper_bound: bound,
                    feasible: m.feasible,
                    iterations: m.iterations,
                    converged: m.converged,
                    monotone: m.monotone,
                },
                Err(_) => failed_row(plan, sweep, value, trial, alg, hash, bound),
            }
        })
        .collect()
}

fn failed_row(plan: &ExperimentPlan, sweep: usize, value: f64, trial: usize, alg: Algorithm, hash: u64, bound: f64) -> TrialResult {
    TrialResult {
        schema_version: SCHEMA_VERSION,
        sweep_axis: plan.sweep_axis.name().to_string(),
        sweep_index: sweep,
        sweep_value: value,
        algorithm: alg,
        trial,
        channel_hash: hash,
        failed: true,
        sum_rate: f64::NAN,
        sinr_db: Vec::new(),
        mean_detection_prob: f64::NAN,
        mean_crlb: f64::NAN,
        energy_efficiency: f64::NAN,
        fairness: f64::NAN,
        objective: f64::NAN,
        upper_bound: bound,
        feasible: false,
        iterations: 0,
        converged: false,
        monotone: false,
    }
}

fn failed_rows(plan: &ExperimentPlan, sweep: usize, value: f64, trial: usize, hash: u64, bound: f64) -> Vec<TrialResult> {
    plan.algorithms
        .iter()
        .map(|&a| failed_row(plan, sweep, value, trial, a, hash, bound))
        .collect()
}

/// Run every (sweep point, trial) unit and return rows in canonical order.
pub fn run_experiment(plan: &ExperimentPlan, exec: Execution) -> Result<Vec<TrialResult>> {
    plan.validate()?;
    let grid = plan.grid();
    let units: Vec<(usize, f64, usize)> = grid
        .iter()
        .enumerate()
        .flat_map(|(s, &v)| (0..plan.num_trials).map(move |t| (s, v, t)))
        .collect();
    let nested = par::map(exec, &units, |&(s, v, t)| run_unit(plan, s, v, t))?;
    let mut rows: Vec<TrialResult> = nested.into_iter().flatten().collect();
    rows.sort_by_key(TrialResult::key);
    Ok(rows)
}
