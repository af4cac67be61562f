//! Weighted-MMSE beamforming extended with a sensing-power line search.
//!
//! Each iteration fixes the MMSE receivers and their weights, picks the
//! sensing power by a one-dimensional search, then solves the weighted-MSE
//! transmit problem for every communication stream under the remaining
//! budget with a single shared multiplier.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::model::Problem;
use super::{golden_max, init_hao_sca, ConvergenceTrace, OptimizerConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, CVec};
use crate::rates::{breakdown_from_gains, GainTable, RsNomaSolution};

/// Weight on normalized sensing power in the line search.
pub const SENSING_POWER_COST: f64 = 1.0;
/// Weight on the sensing penalties in the line search.
pub const SENSING_PENALTY_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MmseReceivers {
    pub u_common: Vec<Complex64>,
    pub u_private: Vec<Complex64>,
    pub omega_common: Vec<f64>,
    pub omega_private: Vec<f64>,
}

/// MMSE weight `1/e` for a receiver with desired power `s` and total power `t`.
pub fn mse_weight(desired: f64, total: f64) -> f64 {
    total / (total - desired)
}

/// Scalar MMSE receivers `u = (h^H v)*/(|h^H v|² + I + σ²)` and weights `1/MSE`.
pub fn receive_filters(problem: &Problem, sol: &RsNomaSolution) -> MmseReceivers {
    let table = GainTable::new(sol, &problem.channels);
    let powers = sol.powers();
    let sigma = problem.noise.sigma_n2;
    let b = breakdown_from_gains(&table, &powers, &problem.grouping, &sol.rho, sigma);
    let g_count = problem.num_groups();
    let k_count = problem.num_users();
    let mut out = MmseReceivers {
        u_common: Vec::with_capacity(k_count),
        u_private: Vec::with_capacity(k_count),
        omega_common: Vec::with_capacity(k_count),
        omega_private: Vec::with_capacity(k_count),
    };
    for k in 0..k_count {
        let gk = problem.grouping.group_of(k);
        let u = &b.users[k];
        let yc = table.inner[k][gk] * powers[gk].sqrt();
        let tc = yc.norm_sqr() + u.common_interference + sigma;
        out.u_common.push(yc.conj() / tc);
        out.omega_common.push(mse_weight(yc.norm_sqr(), tc));
        let j = g_count + k;
        let yp = table.inner[k][j] * powers[j].sqrt();
        let tp = yp.norm_sqr() + u.private_interference + sigma;
        out.u_private.push(yp.conj() / tp);
        out.omega_private.push(mse_weight(yp.norm_sqr(), tp));
    }
    out
}

/// One stream's quadratic `(Σ_i c_i h_i h_i^H + (δ+μ)I) v = rhs`.
#[derive(Debug, Clone)]
pub(crate) struct StreamSystem {
    pub terms: Vec<(f64, usize)>,
    pub rhs: CVec,
}

/// Eigen decomposition of a low-rank Gram operator, restricted to its range.
struct Spectral {
    lambdas: Vec<f64>,
    vecs: Vec<CVec>,
    coords: Vec<Complex64>,
    null: CVec,
    null_norm2: f64,
    delta: f64,
}

impl Spectral {
    fn new(sys: &StreamSystem, channels: &[CVec]) -> Self {
        let terms: Vec<(f64, &CVec)> = sys
            .terms
            .iter()
            .filter(|(c, _)| *c > 0.0)
            .map(|(c, i)| (*c, &channels[*i]))
            .collect();
        let r = terms.len();
        let mut lambdas = Vec::new();
        let mut vecs = Vec::new();
        if r > 0 {
            let gram = DMatrix::<Complex64>::from_fn(r, r, |a, b| {
                Complex64::new((terms[a].0 * terms[b].0).sqrt(), 0.0) * linalg::inner(terms[a].1, terms[b].1)
            });
            let eig = gram.symmetric_eigen();
            let top = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(*x));
            for i in 0..r {
                let lam = eig.eigenvalues[i];
                if !(lam > 1e-12 * top) {
                    continue;
                }
                let mut v = CVec::zeros(sys.rhs.len());
                for (a, (c, h)) in terms.iter().enumerate() {
                    v.axpy(eig.eigenvectors[(a, i)] * c.sqrt(), h, Complex64::new(1.0, 0.0));
                }
                v.unscale_mut(lam.sqrt());
                lambdas.push(lam);
                vecs.push(v);
            }
        }
        let trace: f64 = lambdas.iter().sum();
        let delta = if trace > 0.0 { 1e-9 * trace } else { 1e-12 };
        let coords: Vec<Complex64> = vecs.iter().map(|v| linalg::inner(v, &sys.rhs)).collect();
        let mut null = sys.rhs.clone();
        for (v, c) in vecs.iter().zip(&coords) {
            null.axpy(-*c, v, Complex64::new(1.0, 0.0));
        }
        let null_norm2 = linalg::norm_sqr(&null);
        Self {
            lambdas,
            vecs,
            coords,
            null,
            null_norm2,
            delta,
        }
    }

    fn norm2(&self, mu: f64) -> f64 {
        let d = mu.max(self.delta);
        let mut s = self.null_norm2 / (d * d);
        for (l, c) in self.lambdas.iter().zip(&self.coords) {
            s += c.norm_sqr() / ((l + d) * (l + d));
        }
        s
    }

    fn solve(&self, mu: f64) -> CVec {
        let d = mu.max(self.delta);
        let mut out = self.null.unscale(d);
        for ((l, c), v) in self.lambdas.iter().zip(&self.coords).zip(&self.vecs) {
            out.axpy(*c / (l + d), v, Complex64::new(1.0, 0.0));
        }
        out
    }
}

/// Solve all stream systems with one multiplier so that `Σ‖v_j‖² ≤ budget`.
pub(crate) fn solve_power_constrained(systems: &[StreamSystem], channels: &[CVec], budget: f64) -> Result<Vec<CVec>> {
    if !(budget > 0.0) {
        return Ok(systems.iter().map(|s| CVec::zeros(s.rhs.len())).collect());
    }
    let spectra: Vec<Spectral> = systems.iter().map(|s| Spectral::new(s, channels)).collect();
    let total = |mu: f64| spectra.iter().map(|s| s.norm2(mu)).sum::<f64>();
    let mu = if total(0.0) <= budget {
        0.0
    } else {
        let rhs2: f64 = systems.iter().map(|s| linalg::norm_sqr(&s.rhs)).sum();
        let (mut lo, mut hi) = (0.0, (rhs2 / budget).sqrt());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        hi
    };
    let out: Vec<CVec> = spectra.iter().map(|s| s.solve(mu)).collect();
    if out.iter().all(linalg::all_finite) {
        Ok(out)
    } else {
        Err(Error::numerical("weighted MMSE transmit update"))
    }
}

/// Write `v_j` back as unit beam and power; a vanishing `v_j` keeps its beam.
pub(crate) fn assign_stream(sol: &mut RsNomaSolution, j: usize, v: &CVec) {
    let p = linalg::norm_sqr(v);
    let mut powers = sol.powers();
    match linalg::normalized(v) {
        Some(w) if p > 0.0 => {
            *sol.beam_mut(j) = w;
            powers[j] = p;
        }
        _ => powers[j] = 0.0,
    }
    sol.set_powers(&powers);
}

/// Sensing power trading normalized power against the sensing penalties.
fn sensing_power_search(problem: &Problem, sol: &RsNomaSolution) -> f64 {
    let p_max = problem.limits.p_max;
    if problem.targets.is_empty() {
        return 0.0;
    }
    let s_idx = problem.sensing_index();
    let table = GainTable::new(sol, &problem.channels);
    let proj = problem.projections(sol);
    let base = sol.powers();
    let comm: f64 = base[..s_idx].iter().sum();
    let cost = |p: f64| {
        let mut powers = base.clone();
        let scale = if comm > p_max - p { (p_max - p) / comm } else { 1.0 };
        for x in &mut powers[..s_idx] {
            *x *= scale;
        }
        powers[s_idx] = p;
        let ev = problem.evaluate_parts(table.clone(), proj.clone(), &powers, &sol.rho);
        let mut pen = 0.0;
        if problem.gamma_min > 0.0 {
            pen += ev.sinr.iter().map(|g| (1.0 - g / problem.gamma_min).max(0.0).powi(2)).sum::<f64>();
        }
        if problem.p_s_min > 0.0 {
            pen += (1.0 - p / problem.p_s_min).max(0.0).powi(2);
        }
        SENSING_POWER_COST * p / p_max + SENSING_PENALTY_WEIGHT * pen
    };
    let (x, _) = golden_max(|t| -cost(t.exp()), (p_max * 1e-12).ln(), (0.5 * p_max).ln(), 80);
    x.exp()
}

/// Transmit systems for all communication streams given fixed receivers.
fn transmit_systems(problem: &Problem, rx: &MmseReceivers) -> Vec<StreamSystem> {
    let g_count = problem.num_groups();
    let k_count = problem.num_users();
    let pos = problem.grouping.positions();
    let mut systems: Vec<StreamSystem> = (0..g_count + k_count)
        .map(|_| StreamSystem {
            terms: Vec::new(),
            rhs: CVec::zeros(problem.antennas()),
        })
        .collect();
    for k in 0..k_count {
        let gk = problem.grouping.group_of(k);
        let h = &problem.channels[k];
        let rw = 1.0 / problem.grouping.sic_order[gk].len() as f64;
        // common receiver sees every stream
        let cc = rw * rx.omega_common[k] * rx.u_common[k].norm_sqr();
        for sys in systems.iter_mut() {
            sys.terms.push((cc, k));
        }
        systems[gk]
            .rhs
            .axpy(rx.u_common[k].conj() * rw * rx.omega_common[k], h, Complex64::new(1.0, 0.0));
        // private receiver after SIC
        let cp = rx.omega_private[k] * rx.u_private[k].norm_sqr();
        for (g, sys) in systems.iter_mut().enumerate().take(g_count) {
            if g != gk {
                sys.terms.push((cp, k));
            }
        }
        for i in 0..k_count {
            if i == k || problem.grouping.group_of(i) != gk || pos[i] > pos[k] {
                systems[g_count + i].terms.push((cp, k));
            }
        }
        systems[g_count + k]
            .rhs
            .axpy(rx.u_private[k].conj() * rx.omega_private[k], h, Complex64::new(1.0, 0.0));
    }
    systems
}

pub fn run_e_wmmse(problem: &Problem, config: &OptimizerConfig) -> Result<(RsNomaSolution, ConvergenceTrace)> {
    config.validate()?;
    let mut sol = init_hao_sca(problem, config)?;
    let s_idx = problem.sensing_index();
    let mut prev = problem.merit(&sol);
    let mut trace = ConvergenceTrace::new(prev);
    for _ in 0..config.max_iters {
        let rx = receive_filters(problem, &sol);
        let p_s = sensing_power_search(problem, &sol);
        let systems = transmit_systems(problem, &rx);
        let vs = solve_power_constrained(&systems, &problem.channels, problem.limits.p_max - p_s)?;
        let mut powers = sol.powers();
        powers[s_idx] = p_s;
        sol.set_powers(&powers);
        for (j, v) in vs.iter().enumerate() {
            assign_stream(&mut sol, j, v);
        }
        let ev = problem.evaluate(&sol);
        trace.push(ev.merit, ev.violation);
        let done = (ev.merit - prev).abs() < config.epsilon;
        prev = ev.merit;
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((sol, trace))
}
