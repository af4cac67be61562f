//! Fractional programming (Lagrangian dual plus quadratic transform) on the
//! private streams, with the sensing stream parked at the smallest power
//! that meets the sensing requirements.

use num_complex::Complex64;

use super::model::Problem;
use super::wmmse::{assign_stream, solve_power_constrained, StreamSystem};
use super::{init_hao_sca, ConvergenceTrace, OptimizerConfig};
use crate::error::Result;
use crate::linalg::{self, CVec};
use crate::rates::{breakdown_from_gains, GainTable, RsNomaSolution};
use crate::sensing::sinr_from_energies;

#[derive(Debug, Clone, PartialEq)]
pub struct FpOutcome {
    pub solution: RsNomaSolution,
    pub trace: ConvergenceTrace,
    /// Dual weights `λ_k = 1 + α_k` from the last update.
    pub lambdas: Vec<f64>,
}

/// Smallest sensing power meeting the detection and CRLB requirements with
/// the sensing stream alone, capped at half the budget. A detection target
/// that the cap cannot reach is dropped, leaving only the CRLB floor.
pub fn minimal_sensing_power(problem: &Problem, w_sensing: &CVec) -> f64 {
    if problem.targets.is_empty() {
        return 0.0;
    }
    let cap = 0.5 * problem.limits.p_max;
    let meets = |p: f64| {
        let energies: Vec<f64> = problem
            .targets
            .iter()
            .map(|t| {
                let s = t.amplitude * p * linalg::inner(&t.steering, w_sensing).norm_sqr();
                t.target.rcs * s * s
            })
            .collect();
        sinr_from_energies(&energies, problem.noise.sigma_s2)
            .iter()
            .all(|g| *g >= problem.gamma_min)
    };
    let p_det = if problem.gamma_min <= 0.0 || !meets(cap) {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, cap);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if meets(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        hi
    };
    p_det.max(problem.p_s_min).min(cap)
}

/// Private-stream SINRs and the denominator powers `Σ_{T_k}|h_k^H v|² + σ²`.
fn private_state(problem: &Problem, sol: &RsNomaSolution) -> (Vec<f64>, Vec<f64>, Vec<Complex64>) {
    let table = GainTable::new(sol, &problem.channels);
    let powers = sol.powers();
    let b = breakdown_from_gains(&table, &powers, &problem.grouping, &sol.rho, problem.noise.sigma_n2);
    let g_count = problem.num_groups();
    let mut gamma = Vec::new();
    let mut total = Vec::new();
    let mut y = Vec::new();
    for (k, u) in b.users.iter().enumerate() {
        let j = g_count + k;
        let signal = table.inner[k][j] * powers[j].sqrt();
        gamma.push(u.private_sinr);
        total.push(signal.norm_sqr() + u.private_interference + problem.noise.sigma_n2);
        y.push(signal);
    }
    (gamma, total, y)
}

fn private_sum_rate(problem: &Problem, sol: &RsNomaSolution) -> f64 {
    private_state(problem, sol).0.iter().map(|g| (1.0 + g).log2()).sum()
}

pub fn run_fp(problem: &Problem, config: &OptimizerConfig) -> Result<(RsNomaSolution, ConvergenceTrace)> {
    run_fp_detailed(problem, config).map(|o| (o.solution, o.trace))
}

pub fn run_fp_detailed(problem: &Problem, config: &OptimizerConfig) -> Result<FpOutcome> {
    config.validate()?;
    let g_count = problem.num_groups();
    let k_count = problem.num_users();
    let s_idx = problem.sensing_index();
    let mut sol = init_hao_sca(problem, config)?;
    sol.rho.iter_mut().for_each(|r| *r = 0.0);
    let p_s = minimal_sensing_power(problem, &sol.w_sensing);
    let each = (problem.limits.p_max - p_s) / k_count as f64;
    let mut powers = vec![0.0; problem.num_streams()];
    for p in &mut powers[g_count..s_idx] {
        *p = each;
    }
    powers[s_idx] = p_s;
    sol.set_powers(&powers);

    let pos = problem.grouping.positions();
    let mut prev = private_sum_rate(problem, &sol);
    let mut trace = ConvergenceTrace::new(prev);
    let mut lambdas = vec![1.0; k_count];
    for _ in 0..config.max_iters {
        let (gamma, total, signal) = private_state(problem, &sol);
        lambdas = gamma.iter().map(|g| 1.0 + g).collect();
        let y: Vec<Complex64> = (0..k_count)
            .map(|k| signal[k] * lambdas[k].sqrt() / total[k])
            .collect();
        let mut systems: Vec<StreamSystem> = (0..k_count)
            .map(|k| StreamSystem {
                terms: Vec::new(),
                rhs: &problem.channels[k] * (y[k] * lambdas[k].sqrt()),
            })
            .collect();
        for i in 0..k_count {
            let gi = problem.grouping.group_of(i);
            let c = y[i].norm_sqr();
            for (k, sys) in systems.iter_mut().enumerate() {
                if k == i || problem.grouping.group_of(k) != gi || pos[k] > pos[i] {
                    sys.terms.push((c, i));
                }
            }
        }
        let vs = solve_power_constrained(&systems, &problem.channels, problem.limits.p_max - p_s)?;
        for (k, v) in vs.iter().enumerate() {
            assign_stream(&mut sol, g_count + k, v);
        }
        let value = private_sum_rate(problem, &sol);
        trace.push(value, problem.evaluate(&sol).violation);
        let done = (value - prev).abs() < config.epsilon;
        prev = value;
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok(FpOutcome {
        solution: sol,
        trace,
        lambdas,
    })
}
