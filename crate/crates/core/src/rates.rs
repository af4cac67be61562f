//! RS-NOMA rate model: grouping, SIC order, interference terms and rates.
//!
//! Streams are laid out as `G` group-common streams, then `K` private
//! streams, then the dedicated sensing stream. [`GainTable`] caches the inner
//! products `h_k^H w_j` for that layout so that rate and gradient code share
//! one pass over the channels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    /// Group index for every user.
    pub assignment: Vec<usize>,
    /// Per group, members in decoding order (position 0 decoded first).
    pub sic_order: Vec<Vec<usize>>,
}

impl Grouping {
    /// Build a grouping from an assignment, ordering members by descending
    /// `strength` with ties broken by user index.
    pub fn from_assignment(assignment: Vec<usize>, num_groups: usize, strength: &[f64]) -> Result<Self> {
        if strength.len() != assignment.len() {
            return Err(Error::DimensionMismatch {
                expected: assignment.len(),
                got: strength.len(),
            });
        }
        let mut sic_order = vec![Vec::new(); num_groups];
        for (k, &g) in assignment.iter().enumerate() {
            if g >= num_groups {
                return Err(Error::invalid(format!("user {k} assigned to missing group {g}")));
            }
            sic_order[g].push(k);
        }
        for members in &mut sic_order {
            members.sort_by(|&a, &b| strength[b].total_cmp(&strength[a]).then(a.cmp(&b)));
        }
        Ok(Self {
            assignment,
            sic_order,
        })
    }

    pub fn num_groups(&self) -> usize {
        self.sic_order.len()
    }

    pub fn num_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn group_of(&self, k: usize) -> usize {
        self.assignment[k]
    }

    /// Decoding position of user `k` inside its group.
    pub fn position(&self, k: usize) -> usize {
        self.sic_order[self.assignment[k]]
            .iter()
            .position(|&u| u == k)
            .expect("grouping is consistent")
    }

    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.assignment.len()];
        for members in &self.sic_order {
            for (i, &k) in members.iter().enumerate() {
                pos[k] = i;
            }
        }
        pos
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.assignment.len()];
        for (g, members) in self.sic_order.iter().enumerate() {
            for &k in members {
                if k >= seen.len() || seen[k] || self.assignment[k] != g {
                    return Err(Error::invalid(format!("inconsistent SIC order for group {g}")));
                }
                seen[k] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("a user is missing from the SIC order"));
        }
        Ok(())
    }
}

/// Snake pairing of users ranked by `‖h_k‖`: rank `i` of `K` pairs with rank
/// `K−1−i` when `K = 2G`. Leftover users join the last group.
pub fn default_grouping(channels: &[CVec], num_groups: usize) -> Result<Grouping> {
    let k = channels.len();
    if num_groups == 0 {
        return Err(Error::invalid("need at least one group"));
    }
    if num_groups > k {
        return Err(Error::invalid(format!("{num_groups} groups for only {k} users")));
    }
    let norms: Vec<f64> = channels.iter().map(|h| linalg::norm_sqr(h).sqrt()).collect();
    let mut ranked: Vec<usize> = (0..k).collect();
    ranked.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let full = (k / num_groups) * num_groups;
    let mut assignment = vec![0; k];
    for (rank, &user) in ranked.iter().enumerate() {
        assignment[user] = if rank >= full {
            num_groups - 1
        } else {
            let round = rank / num_groups;
            let slot = rank % num_groups;
            if round.is_multiple_of(2) {
                slot
            } else {
                num_groups - 1 - slot
            }
        };
    }
    Grouping::from_assignment(assignment, num_groups, &norms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsNomaSolution {
    pub w_common: Vec<CVec>,
    pub w_private: Vec<CVec>,
    pub w_sensing: CVec,
    pub p_common: Vec<f64>,
    pub p_private: Vec<f64>,
    pub p_sensing: f64,
    pub rho: Vec<f64>,
    pub grouping: Grouping,
}

impl RsNomaSolution {
    pub fn num_users(&self) -> usize {
        self.w_private.len()
    }

    pub fn num_groups(&self) -> usize {
        self.w_common.len()
    }

    pub fn num_streams(&self) -> usize {
        self.num_groups() + self.num_users() + 1
    }

    pub fn antennas(&self) -> usize {
        self.w_sensing.len()
    }

    /// Beam of stream `j` in the common/private/sensing layout.
    pub fn beam(&self, j: usize) -> &CVec {
        let g = self.num_groups();
        let k = self.num_users();
        if j < g {
            &self.w_common[j]
        } else if j < g + k {
            &self.w_private[j - g]
        } else {
            &self.w_sensing
        }
    }

    pub fn beam_mut(&mut self, j: usize) -> &mut CVec {
        let g = self.num_groups();
        let k = self.num_users();
        if j < g {
            &mut self.w_common[j]
        } else if j < g + k {
            &mut self.w_private[j - g]
        } else {
            &mut self.w_sensing
        }
    }

    pub fn powers(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_streams());
        p.extend_from_slice(&self.p_common);
        p.extend_from_slice(&self.p_private);
        p.push(self.p_sensing);
        p
    }

    pub fn set_powers(&mut self, p: &[f64]) {
        let g = self.num_groups();
        let k = self.num_users();
        self.p_common.copy_from_slice(&p[..g]);
        self.p_private.copy_from_slice(&p[g..g + k]);
        self.p_sensing = p[g + k];
    }

    pub fn total_power(&self) -> f64 {
        self.p_common.iter().sum::<f64>() + self.p_private.iter().sum::<f64>() + self.p_sensing
    }

    /// Largest `|‖w‖ − 1|` over every beam.
    pub fn unit_norm_residual(&self) -> f64 {
        (0..self.num_streams())
            .map(|j| (linalg::norm_sqr(self.beam(j)).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_users();
        let g = self.num_groups();
        let m = self.antennas();
        if self.p_private.len() != k || self.rho.len() != k || self.grouping.num_users() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.p_private.len().min(self.rho.len()),
            });
        }
        if self.p_common.len() != g || self.grouping.num_groups() != g {
            return Err(Error::DimensionMismatch {
                expected: g,
                got: self.p_common.len(),
            });
        }
        for j in 0..self.num_streams() {
            if self.beam(j).len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: self.beam(j).len(),
                });
            }
        }
        if self.powers().iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("powers must be non-negative"));
        }
        if self.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::invalid("splitting ratios must lie in [0, 1]"));
        }
        self.grouping.validate()
    }

    /// Copy with every beam replaced by `A·w` (used for hardware impairments).
    pub fn transformed(&self, a: &CMat) -> Self {
        let mut out = self.clone();
        for j in 0..self.num_streams() {
            let w = a * self.beam(j);
            *out.beam_mut(j) = w;
        }
        out
    }
}

/// Pure private NOMA with SIC: common powers and splitting ratios zeroed.
pub fn conventional_noma_view(solution: &RsNomaSolution) -> RsNomaSolution {
    let mut out = solution.clone();
    out.p_common.iter_mut().for_each(|p| *p = 0.0);
    out.rho.iter_mut().for_each(|r| *r = 0.0);
    out
}

/// `inner[k][j] = h_k^H w_j` and `gain[k][j] = |h_k^H w_j|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub inner: Vec<Vec<Complex64>>,
    pub gain: Vec<Vec<f64>>,
}

impl GainTable {
    pub fn new(solution: &RsNomaSolution, channels: &[CVec]) -> Self {
        let n = solution.num_streams();
        let mut inner = Vec::with_capacity(channels.len());
        let mut gain = Vec::with_capacity(channels.len());
        for h in channels {
            let row: Vec<Complex64> = (0..n).map(|j| linalg::inner(h, solution.beam(j))).collect();
            gain.push(row.iter().map(|z| z.norm_sqr()).collect());
            inner.push(row);
        }
        Self { inner, gain }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserRates {
    pub common_sinr: f64,
    pub private_sinr: f64,
    pub common_rate: f64,
    pub private_rate: f64,
    pub allocated_common: f64,
    pub total_rate: f64,
    pub common_interference: f64,
    pub private_interference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub users: Vec<UserRates>,
    pub group_common_rate: Vec<f64>,
    /// Member whose common rate sets each group's capacity.
    pub group_bottleneck: Vec<usize>,
}

impl RateBreakdown {
    pub fn sum_rate(&self) -> f64 {
        self.users.iter().map(|u| u.total_rate).sum()
    }

    pub fn total_rates(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.total_rate).collect()
    }
}

/// Normalized splitting weights of one group; uniform if every ρ is zero.
pub fn split_weights(members: &[usize], rho: &[f64]) -> Vec<f64> {
    let total: f64 = members.iter().map(|&k| rho[k]).sum();
    if total > 0.0 {
        members.iter().map(|&k| rho[k] / total).collect()
    } else {
        vec![1.0 / members.len() as f64; members.len()]
    }
}

/// Rate evaluation from a precomputed gain table and stream powers.
pub fn breakdown_from_gains(
    table: &GainTable,
    powers: &[f64],
    grouping: &Grouping,
    rho: &[f64],
    sigma_n2: f64,
) -> RateBreakdown {
    let g_count = grouping.num_groups();
    let k_count = grouping.num_users();
    let sensing = g_count + k_count;
    let pos = grouping.positions();
    let mut users = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let row = &table.gain[k];
        let gk = grouping.group_of(k);
        let mut other_common = 0.0;
        for g in 0..g_count {
            if g != gk {
                other_common += row[g] * powers[g];
            }
        }
        let sens = row[sensing] * powers[sensing];
        let mut all_private = 0.0;
        let mut residual_private = 0.0;
        for i in 0..k_count {
            if i == k {
                continue;
            }
            let term = row[g_count + i] * powers[g_count + i];
            all_private += term;
            if grouping.group_of(i) != gk || pos[i] > pos[k] {
                residual_private += term;
            }
        }
        let ic = other_common + all_private + row[g_count + k] * powers[g_count + k] + sens;
        let ip = other_common + residual_private + sens;
        let common_sinr = row[gk] * powers[gk] / (ic + sigma_n2);
        let private_sinr = row[g_count + k] * powers[g_count + k] / (ip + sigma_n2);
        users.push(UserRates {
            common_sinr,
            private_sinr,
            common_rate: (1.0 + common_sinr).log2(),
            private_rate: (1.0 + private_sinr).log2(),
            allocated_common: 0.0,
            total_rate: 0.0,
            common_interference: ic,
            private_interference: ip,
        });
    }
    let mut group_common_rate = vec![0.0; g_count];
    let mut group_bottleneck = vec![0; g_count];
    for (g, members) in grouping.sic_order.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut best = members[0];
        for &k in members {
            if users[k].common_rate < users[best].common_rate {
                best = k;
            }
        }
        let cap = users[best].common_rate;
        group_common_rate[g] = cap;
        group_bottleneck[g] = best;
        for (&k, w) in members.iter().zip(split_weights(members, rho)) {
            users[k].allocated_common = w * cap;
        }
    }
    for u in &mut users {
        u.total_rate = u.allocated_common + u.private_rate;
    }
    RateBreakdown {
        users,
        group_common_rate,
        group_bottleneck,
    }
}

pub fn rate_breakdown(solution: &RsNomaSolution, channels: &[CVec], sigma_n2: f64) -> RateBreakdown {
    let table = GainTable::new(solution, channels);
    breakdown_from_gains(&table, &solution.powers(), &solution.grouping, &solution.rho, sigma_n2)
}

fn check_user(k: usize, solution: &RsNomaSolution, channels: &[CVec]) -> Result<()> {
    if channels.len() != solution.num_users() {
        return Err(Error::DimensionMismatch {
            expected: solution.num_users(),
            got: channels.len(),
        });
    }
    if k >= channels.len() {
        return Err(Error::invalid(format!("user {k} out of range")));
    }
    Ok(())
}

pub fn common_interference(k: usize, solution: &RsNomaSolution, channels: &[CVec]) -> Result<f64> {
    check_user(k, solution, channels)?;
    Ok(rate_breakdown(solution, channels, 1.0).users[k].common_interference)
}

pub fn private_interference(k: usize, solution: &RsNomaSolution, channels: &[CVec]) -> Result<f64> {
    check_user(k, solution, channels)?;
    Ok(rate_breakdown(solution, channels, 1.0).users[k].private_interference)
}

pub fn common_rate(k: usize, solution: &RsNomaSolution, channels: &[CVec], sigma_n2: f64) -> Result<f64> {
    check_user(k, solution, channels)?;
    check_noise(sigma_n2)?;
    Ok(rate_breakdown(solution, channels, sigma_n2).users[k].common_rate)
}

pub fn private_rate(k: usize, solution: &RsNomaSolution, channels: &[CVec], sigma_n2: f64) -> Result<f64> {
    check_user(k, solution, channels)?;
    check_noise(sigma_n2)?;
    Ok(rate_breakdown(solution, channels, sigma_n2).users[k].private_rate)
}

/// Common-rate portions `(user, c_k)` of group `g`; they sum to the group capacity.
pub fn group_common_allocation(
    g: usize,
    solution: &RsNomaSolution,
    channels: &[CVec],
    sigma_n2: f64,
) -> Result<Vec<(usize, f64)>> {
    check_noise(sigma_n2)?;
    if g >= solution.num_groups() {
        return Err(Error::invalid(format!("group {g} out of range")));
    }
    let b = rate_breakdown(solution, channels, sigma_n2);
    Ok(solution.grouping.sic_order[g]
        .iter()
        .map(|&k| (k, b.users[k].allocated_common))
        .collect())
}

pub fn user_total_rate(k: usize, solution: &RsNomaSolution, channels: &[CVec], sigma_n2: f64) -> Result<f64> {
    check_user(k, solution, channels)?;
    check_noise(sigma_n2)?;
    Ok(rate_breakdown(solution, channels, sigma_n2).users[k].total_rate)
}

pub fn sum_rate(solution: &RsNomaSolution, channels: &[CVec], sigma_n2: f64) -> Result<f64> {
    check_noise(sigma_n2)?;
    if channels.len() != solution.num_users() {
        return Err(Error::DimensionMismatch {
            expected: solution.num_users(),
            got: channels.len(),
        });
    }
    Ok(rate_breakdown(solution, channels, sigma_n2).sum_rate())
}

fn check_noise(sigma_n2: f64) -> Result<()> {
    if !(sigma_n2 > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    Ok(())
}
