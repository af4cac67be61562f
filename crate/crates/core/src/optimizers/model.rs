//! Penalized merit function shared by the optimizers, with its analytic
//! gradient with respect to beamformers and stream powers.
//!
//! The merit is the composite objective minus
//! `μ·[Σ_k (1 − R_k/R_min)₊² + Σ_l (1 − Γ_l/Γ_min)₊² + (1 − P_s/P_s,min)₊²]`.

use std::f64::consts::LN_2;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CVec};
use crate::objective::{ComponentScales, Components, Limits, NoiseModel, ObjectiveWeights};
use crate::rates::{breakdown_from_gains, split_weights, GainTable, Grouping, RateBreakdown, RsNomaSolution};
use crate::sensing::{power_for_crlb, required_sinr, sinr_from_energies, TargetModel};

pub const DEFAULT_PENALTY: f64 = 10.0;

/// Everything an optimizer needs to know about one problem instance.
#[derive(Debug, Clone)]
pub struct Problem {
    /// Channels as seen by the transmitter (possibly with CSI error).
    pub channels: Vec<CVec>,
    pub targets: Vec<TargetModel>,
    pub grouping: Grouping,
    pub noise: NoiseModel,
    pub limits: Limits,
    pub weights: ObjectiveWeights,
    pub scales: ComponentScales,
    pub penalty: f64,
    /// SINR needed to reach `p_d_min`.
    pub gamma_min: f64,
    /// Sensing power needed to reach `crlb_max`.
    pub p_s_min: f64,
}

impl Problem {
    pub fn new(
        channels: Vec<CVec>,
        targets: Vec<TargetModel>,
        grouping: Grouping,
        noise: NoiseModel,
        limits: Limits,
        weights: ObjectiveWeights,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("need at least one user"));
        }
        let m = channels[0].len();
        if channels.iter().any(|h| h.len() != m) || targets.iter().any(|t| t.steering.len() != m) {
            return Err(Error::invalid("channel and steering lengths differ"));
        }
        if grouping.num_users() != channels.len() {
            return Err(Error::DimensionMismatch {
                expected: channels.len(),
                got: grouping.num_users(),
            });
        }
        grouping.validate()?;
        if !(noise.sigma_n2 > 0.0 && noise.sigma_s2 > 0.0 && limits.p_max > 0.0) {
            return Err(Error::invalid("noise powers and P_max must be positive"));
        }
        let gamma_min = if targets.is_empty() {
            0.0
        } else {
            required_sinr(limits.p_d_min, limits.p_fa)?
        };
        let p_s_min = power_for_crlb(&targets, noise.sigma_s2, limits.crlb_max);
        Ok(Self {
            channels,
            targets,
            grouping,
            noise,
            limits,
            weights,
            scales: ComponentScales::UNIT,
            penalty: DEFAULT_PENALTY,
            gamma_min,
            p_s_min,
        })
    }

    pub fn antennas(&self) -> usize {
        self.channels[0].len()
    }

    pub fn num_users(&self) -> usize {
        self.channels.len()
    }

    pub fn num_groups(&self) -> usize {
        self.grouping.num_groups()
    }

    pub fn num_streams(&self) -> usize {
        self.num_groups() + self.num_users() + 1
    }

    pub fn sensing_index(&self) -> usize {
        self.num_groups() + self.num_users()
    }

    pub fn evaluate(&self, sol: &RsNomaSolution) -> Evaluation {
        let table = GainTable::new(sol, &self.channels);
        let proj = self.projections(sol);
        self.evaluate_parts(table, proj, &sol.powers(), &sol.rho)
    }

    pub fn projections(&self, sol: &RsNomaSolution) -> Vec<Vec<Complex64>> {
        self.targets.iter().map(|t| t.projections(sol)).collect()
    }

    pub fn merit(&self, sol: &RsNomaSolution) -> f64 {
        self.evaluate(sol).merit
    }

    /// Evaluate from cached inner products; used when only powers or ρ change.
    pub fn evaluate_parts(
        &self,
        table: GainTable,
        proj: Vec<Vec<Complex64>>,
        powers: &[f64],
        rho: &[f64],
    ) -> Evaluation {
        let rates = breakdown_from_gains(&table, powers, &self.grouping, rho, self.noise.sigma_n2);
        let illumination: Vec<f64> = self
            .targets
            .iter()
            .zip(&proj)
            .map(|(t, b)| t.illumination(b, powers))
            .collect();
        let energies: Vec<f64> = self
            .targets
            .iter()
            .zip(&illumination)
            .map(|(t, s)| t.target.rcs * s * s)
            .collect();
        let sinr = sinr_from_energies(&energies, self.noise.sigma_s2);
        let sum_rate = rates.sum_rate();
        let total_power: f64 = powers.iter().sum();
        let totals = rates.total_rates();
        let q: f64 = totals.iter().map(|r| r * r).sum();
        let fairness = if q > 0.0 {
            sum_rate * sum_rate / (totals.len() as f64 * q)
        } else {
            0.0
        };
        let components = Components {
            sum_rate,
            sensing_utility: sinr.iter().map(|g| (1.0 + g).log2()).sum(),
            energy_efficiency: if total_power > 0.0 { sum_rate / total_power } else { 0.0 },
            fairness,
        };
        let p_s = powers[powers.len() - 1];
        let mut violation = 0.0;
        if self.limits.r_min > 0.0 {
            for r in &totals {
                violation += (1.0 - r / self.limits.r_min).max(0.0).powi(2);
            }
        }
        if self.gamma_min > 0.0 {
            for g in &sinr {
                violation += (1.0 - g / self.gamma_min).max(0.0).powi(2);
            }
        }
        if self.p_s_min > 0.0 {
            violation += (1.0 - p_s / self.p_s_min).max(0.0).powi(2);
        }
        let composite = components.weighted(&self.weights, &self.scales);
        Evaluation {
            merit: composite - self.penalty * violation,
            composite,
            violation,
            components,
            rates,
            table,
            proj,
            illumination,
            energies,
            sinr,
            total_power,
        }
    }

    /// Gradient of the merit: `beams[j]` is `∂f/∂w_j*` and `powers[j]` is `∂f/∂P_j`.
    pub fn gradient(&self, sol: &RsNomaSolution, ev: &Evaluation) -> Gradient {
        let g_count = self.num_groups();
        let k_count = self.num_users();
        let n = self.num_streams();
        let s_idx = self.sensing_index();
        let powers = sol.powers();
        let pos = self.grouping.positions();
        let [a1, a2, a3, a4] = self.weights.alpha;
        let [s1, s2, s3, s4] = self.scales.0;
        let (w1, w2, w3, w4) = (a1 / s1, a2 / s2, a3 / s3, a4 / s4);
        let sr = ev.components.sum_rate;
        let ptot = ev.total_power;
        let totals = ev.rates.total_rates();
        let q: f64 = totals.iter().map(|r| r * r).sum();
        let kf = k_count as f64;

        // ∂f/∂R_k
        let mut d_r = vec![w1; k_count];
        for (k, d) in d_r.iter_mut().enumerate() {
            if ptot > 0.0 {
                *d += w3 / ptot;
            }
            if q > 0.0 {
                *d += w4 * (2.0 * sr / (kf * q) - 2.0 * sr * sr * totals[k] / (kf * q * q));
            }
            if self.limits.r_min > 0.0 {
                *d += 2.0 * self.penalty / self.limits.r_min * (1.0 - totals[k] / self.limits.r_min).max(0.0);
            }
        }

        // ∂f/∂γ for private and (bottleneck) common SINRs
        let users = &ev.rates.users;
        let mut e_private = vec![0.0; k_count];
        let mut e_common = vec![0.0; k_count];
        for k in 0..k_count {
            e_private[k] = d_r[k] / ((1.0 + users[k].private_sinr) * LN_2);
        }
        for (g, members) in self.grouping.sic_order.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let split = split_weights(members, &sol.rho);
            let d_c: f64 = members.iter().zip(&split).map(|(&k, w)| d_r[k] * w).sum();
            let b = ev.rates.group_bottleneck[g];
            e_common[b] = d_c / ((1.0 + users[b].common_sinr) * LN_2);
        }

        // a[k][j] = ∂f/∂(|h_k^H w_j|²·P_j)
        let mut a = vec![vec![0.0; n]; k_count];
        for k in 0..k_count {
            let gk = self.grouping.group_of(k);
            let row = &mut a[k];
            let dp = users[k].private_interference + self.noise.sigma_n2;
            let dc = users[k].common_interference + self.noise.sigma_n2;
            let ep = e_private[k];
            let ec = e_common[k];
            let ip = ep * users[k].private_sinr / dp;
            let ic = ec * users[k].common_sinr / dc;
            row[g_count + k] += ep / dp;
            row[gk] += ec / dc;
            for g in 0..g_count {
                if g != gk {
                    row[g] -= ip + ic;
                }
            }
            for i in 0..k_count {
                row[g_count + i] -= ic;
                if i != k && (self.grouping.group_of(i) != gk || pos[i] > pos[k]) {
                    row[g_count + i] -= ip;
                }
            }
            row[s_idx] -= ip + ic;
        }

        // sensing chain: Γ_l -> E_l -> |tr(H_l W)| -> P_j|b_lj|²
        let l_count = self.targets.len();
        let mut b_coef = vec![0.0; l_count];
        if l_count > 0 {
            let total_e: f64 = ev.energies.iter().sum();
            let denom: Vec<f64> = ev
                .energies
                .iter()
                .map(|e| (total_e - e).max(0.0) + self.noise.sigma_s2)
                .collect();
            let d_gamma: Vec<f64> = ev
                .sinr
                .iter()
                .map(|&g| {
                    let mut d = w2 / ((1.0 + g) * LN_2);
                    if self.gamma_min > 0.0 {
                        d += 2.0 * self.penalty / self.gamma_min * (1.0 - g / self.gamma_min).max(0.0);
                    }
                    d
                })
                .collect();
            for m in 0..l_count {
                let mut d_e = 0.0;
                for l in 0..l_count {
                    if l == m {
                        d_e += d_gamma[l] / denom[l];
                    } else {
                        d_e -= d_gamma[l] * ev.sinr[l] / denom[l];
                    }
                }
                let t = &self.targets[m];
                b_coef[m] = d_e * 2.0 * t.target.rcs * ev.illumination[m] * t.amplitude;
            }
        }

        let mut beams = Vec::with_capacity(n);
        let mut d_p = vec![0.0; n];
        let m = self.antennas();
        for j in 0..n {
            let mut gvec = CVec::zeros(m);
            for k in 0..k_count {
                let coef = a[k][j];
                if coef != 0.0 {
                    d_p[j] += coef * ev.table.gain[k][j];
                    gvec.axpy(Complex64::new(coef * powers[j], 0.0) * ev.table.inner[k][j], &self.channels[k], Complex64::new(1.0, 0.0));
                }
            }
            for l in 0..l_count {
                let b = ev.proj[l][j];
                d_p[j] += b_coef[l] * b.norm_sqr();
                gvec.axpy(Complex64::new(b_coef[l] * powers[j], 0.0) * b, &self.targets[l].steering, Complex64::new(1.0, 0.0));
            }
            if ptot > 0.0 {
                d_p[j] -= w3 * sr / (ptot * ptot);
            }
            beams.push(gvec);
        }
        if self.p_s_min > 0.0 {
            d_p[s_idx] += 2.0 * self.penalty / self.p_s_min * (1.0 - powers[s_idx] / self.p_s_min).max(0.0);
        }
        Gradient {
            beams,
            powers: d_p,
            user_coef: a,
            target_coef: b_coef,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub merit: f64,
    pub composite: f64,
    pub violation: f64,
    pub components: Components,
    pub rates: RateBreakdown,
    pub table: GainTable,
    pub proj: Vec<Vec<Complex64>>,
    pub illumination: Vec<f64>,
    pub energies: Vec<f64>,
    pub sinr: Vec<f64>,
    pub total_power: f64,
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub beams: Vec<CVec>,
    pub powers: Vec<f64>,
    /// `user_coef[k][j]` weighs `|h_k^H w_j|²` in `∂f/∂P_j`.
    pub user_coef: Vec<Vec<f64>>,
    /// `target_coef[l]` weighs `|a_l^H w_j|²` in `∂f/∂P_j`.
    pub target_coef: Vec<f64>,
}

impl Gradient {
    pub fn is_finite(&self) -> bool {
        self.powers.iter().all(|p| p.is_finite()) && self.beams.iter().all(linalg::all_finite)
    }
}

/// Scale onto `Σp ≤ p_max`, then clip negatives; applied twice.
pub fn project_powers(p: &mut [f64], p_max: f64, frozen: &[bool]) {
    for _ in 0..2 {
        for (x, f) in p.iter_mut().zip(frozen) {
            if *f {
                *x = 0.0;
            }
        }
        let s: f64 = p.iter().sum();
        if s > p_max {
            let c = p_max / s;
            p.iter_mut().for_each(|x| *x *= c);
        }
        p.iter_mut().for_each(|x| *x = x.max(0.0));
    }
}
