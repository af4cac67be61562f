//! Hybrid alternating optimization with successive convex approximation.
//!
//! Each outer iteration re-points idle beams, then runs a power block, a
//! beamforming block, a rate-splitting block and an optional weight
//! adaptation. The beam and
//! power blocks take steps along the gradient of the SCA surrogate anchored
//! at the current point; since the surrogate is tight to first order at its
//! anchor this is the gradient of the true merit, and every step is accepted
//! only if the true merit improves.

use num_complex::Complex64;

use super::model::{project_powers, Problem};
use super::{golden_max, init_hao_sca, ConvergenceTrace, OptimizerConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, CVec};
use crate::objective::{ComponentScales, Components, ObjectiveWeights};
use crate::rates::{GainTable, RsNomaSolution};

/// Concave lower bound of `|h^H w|²/(I + σ²)` anchored at `w0`.
pub fn sca_surrogate_gamma(w: &CVec, w_anchor: &CVec, h: &CVec, interference: f64, sigma_n2: f64) -> f64 {
    let d = interference + sigma_n2;
    let a = linalg::inner(h, w_anchor);
    let b = linalg::inner(h, w);
    (2.0 * (a.conj() * b).re - a.norm_sqr()) / d
}

/// Which parts of the solution the optimizer may change.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMask {
    pub frozen_power: Vec<bool>,
    pub optimize_rho: bool,
}

impl BlockMask {
    pub fn full(problem: &Problem) -> Self {
        let mut frozen_power = vec![false; problem.num_streams()];
        frozen_power[problem.sensing_index()] = problem.targets.is_empty();
        Self {
            frozen_power,
            optimize_rho: true,
        }
    }

    /// No common streams and no splitting.
    pub fn private_only(problem: &Problem) -> Self {
        let mut m = Self::full(problem);
        for f in m.frozen_power.iter_mut().take(problem.num_groups()) {
            *f = true;
        }
        m.optimize_rho = false;
        m
    }
}

fn check_gradient_finite(ok: bool, block: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite gradient in {block} block")))
    }
}

/// Riemannian gradient steps on the unit spheres of the active beams. Each
/// stream has its own backtracking step: gradient scales differ by many
/// orders of magnitude between streams, so a joint step stalls on the
/// stiffest one.
pub fn beamforming_update(
    problem: &Problem,
    sol: &RsNomaSolution,
    config: &OptimizerConfig,
    mask: &BlockMask,
) -> Result<RsNomaSolution> {
    let mut cur = sol.clone();
    let mut ev = problem.evaluate(&cur);
    let mut steps = vec![config.step_size; cur.num_streams()];
    for _ in 0..config.inner_steps {
        let mut moved_any = false;
        for j in 0..cur.num_streams() {
            if mask.frozen_power[j] || cur.powers()[j] == 0.0 {
                continue;
            }
            let grad = problem.gradient(&cur, &ev);
            check_gradient_finite(grad.is_finite(), "beamforming")?;
            let w = cur.beam(j).clone();
            let g = &grad.beams[j];
            let radial = linalg::inner(&w, g).re;
            let r = g - &w * Complex64::new(radial, 0.0);
            let n = linalg::norm_sqr(&r).sqrt();
            if !(n > 0.0) {
                continue;
            }
            let dir = r / Complex64::new(n, 0.0);
            let mut t = steps[j];
            while t > 1e-12 * config.step_size {
                let mut cand = cur.clone();
                *cand.beam_mut(j) = linalg::normalized(&(&w + &dir * Complex64::new(t, 0.0))).unwrap_or_else(|| w.clone());
                let cev = problem.evaluate(&cand);
                if cev.merit > ev.merit {
                    cur = cand;
                    ev = cev;
                    moved_any = true;
                    break;
                }
                t *= config.backtrack;
            }
            steps[j] = (t / config.backtrack).min(config.step_size);
        }
        if !moved_any {
            break;
        }
    }
    Ok(cur)
}

/// Re-points every idle beam (zero power, not frozen) along the top
/// eigenvector of the form `w ↦ ∂f/∂P_j`. The merit is unchanged; the next
/// power step switches the stream back on when its best direction gains.
pub fn reactivate_idle_streams(problem: &Problem, sol: &RsNomaSolution, mask: &BlockMask) -> Result<RsNomaSolution> {
    let powers = sol.powers();
    let idle: Vec<usize> = (0..powers.len()).filter(|&j| powers[j] == 0.0 && !mask.frozen_power[j]).collect();
    if idle.is_empty() {
        return Ok(sol.clone());
    }
    let ev = problem.evaluate(sol);
    let grad = problem.gradient(sol, &ev);
    check_gradient_finite(grad.is_finite(), "reactivation")?;
    let mut out = sol.clone();
    let mut vectors: Vec<&CVec> = problem.channels.iter().collect();
    vectors.extend(problem.targets.iter().map(|t| &t.steering));
    for j in idle {
        let mut coefs: Vec<f64> = grad.user_coef.iter().map(|row| row[j]).collect();
        coefs.extend(&grad.target_coef);
        if let Some((lambda, w)) = linalg::low_rank_top_eigen(&vectors, &coefs) {
            if lambda > 0.0 && linalg::all_finite(&w) {
                *out.beam_mut(j) = w;
            }
        }
    }
    Ok(out)
}

/// Projected gradient ascent on the stream powers, one coordinate at a time.
/// A decreasing coordinate may step all the way to zero; an increasing one
/// moves by a fraction of the budget, then the budget projection applies.
pub fn power_update(
    problem: &Problem,
    sol: &RsNomaSolution,
    config: &OptimizerConfig,
    mask: &BlockMask,
) -> Result<RsNomaSolution> {
    let mut cur = sol.clone();
    let p_max = problem.limits.p_max;
    let table = GainTable::new(&cur, &problem.channels);
    let proj = problem.projections(&cur);
    let mut powers = cur.powers();
    project_powers(&mut powers, p_max, &mask.frozen_power);
    let mut ev = problem.evaluate_parts(table.clone(), proj.clone(), &powers, &cur.rho);
    let start = problem.evaluate(sol);
    if ev.merit < start.merit {
        // projection of an infeasible entry point can lose merit; keep entry powers
        powers = sol.powers();
        ev = start;
    }
    let n = powers.len();
    let mut up = vec![config.step_size; n];
    let mut down = vec![1.0; n];
    for _ in 0..config.inner_steps {
        let mut moved_any = false;
        for j in 0..n {
            if mask.frozen_power[j] {
                continue;
            }
            cur.set_powers(&powers);
            let grad = problem.gradient(&cur, &ev);
            check_gradient_finite(grad.is_finite(), "power")?;
            let g = grad.powers[j];
            if g == 0.0 || (g < 0.0 && powers[j] == 0.0) {
                continue;
            }
            let step = if g > 0.0 { &mut up[j] } else { &mut down[j] };
            let mut t = *step;
            let floor = if g > 0.0 { 1e-12 * config.step_size } else { 1e-12 };
            while t > floor {
                let mut cand = powers.clone();
                cand[j] = if g > 0.0 { cand[j] + t * p_max } else { cand[j] * (1.0 - t) };
                project_powers(&mut cand, p_max, &mask.frozen_power);
                let cev = problem.evaluate_parts(table.clone(), proj.clone(), &cand, &cur.rho);
                if cev.merit > ev.merit {
                    powers = cand;
                    ev = cev;
                    moved_any = true;
                    break;
                }
                t *= config.backtrack;
            }
            let cap = if g > 0.0 { config.step_size } else { 1.0 };
            *step = (t / config.backtrack).min(cap);
        }
        if !moved_any {
            break;
        }
    }
    cur.set_powers(&powers);
    Ok(cur)
}

/// Coordinate-wise golden-section search over each `ρ_k ∈ [0, 1]`.
pub fn rho_update(problem: &Problem, sol: &RsNomaSolution) -> RsNomaSolution {
    let mut cur = sol.clone();
    let table = GainTable::new(&cur, &problem.channels);
    let proj = problem.projections(&cur);
    let powers = cur.powers();
    let eval = |rho: &[f64]| problem.evaluate_parts(table.clone(), proj.clone(), &powers, rho).merit;
    let mut best = eval(&cur.rho);
    for members in &problem.grouping.sic_order {
        if members.len() < 2 {
            continue;
        }
        for &k in members {
            let mut trial = cur.rho.clone();
            let (x, fx) = golden_max(
                |r| {
                    trial[k] = r;
                    eval(&trial)
                },
                0.0,
                1.0,
                50,
            );
            if fx > best {
                cur.rho[k] = x;
                best = fx;
            }
        }
    }
    cur
}

/// `α_i ← α_i·exp(η·(target_i − share_i))`, renormalized; identity when disabled.
pub fn adaptive_weights(
    weights: &ObjectiveWeights,
    target: &ObjectiveWeights,
    components: &Components,
    scales: &ComponentScales,
    enabled: bool,
) -> ObjectiveWeights {
    const ETA: f64 = 0.1;
    if !enabled {
        return *weights;
    }
    let c = components.as_array();
    let contrib: Vec<f64> = (0..4).map(|i| weights.alpha[i] * c[i] / scales.0[i]).collect();
    let total: f64 = contrib.iter().sum();
    if !(total > 0.0) {
        return *weights;
    }
    let mut alpha = weights.alpha;
    for i in 0..4 {
        alpha[i] *= (ETA * (target.alpha[i] - contrib[i] / total)).exp();
    }
    ObjectiveWeights::from_array(alpha).unwrap_or(*weights)
}

pub fn run_hao_sca(problem: &Problem, config: &OptimizerConfig) -> Result<(RsNomaSolution, ConvergenceTrace)> {
    let init = init_hao_sca(problem, config)?;
    run_hao_sca_from(problem, init, config, &BlockMask::full(problem))
}

/// HAO-SCA with the common streams switched off (private NOMA with SIC).
pub fn run_conv_noma(problem: &Problem, config: &OptimizerConfig) -> Result<(RsNomaSolution, ConvergenceTrace)> {
    let mut init = init_hao_sca(problem, config)?;
    let mask = BlockMask::private_only(problem);
    let active = mask.frozen_power.iter().filter(|f| !**f).count();
    let p = problem.limits.p_max / active as f64;
    let powers: Vec<f64> = mask.frozen_power.iter().map(|f| if *f { 0.0 } else { p }).collect();
    init.set_powers(&powers);
    init.rho.iter_mut().for_each(|r| *r = 0.0);
    run_hao_sca_from(problem, init, config, &mask)
}

pub fn run_hao_sca_from(
    problem: &Problem,
    init: RsNomaSolution,
    config: &OptimizerConfig,
    mask: &BlockMask,
) -> Result<(RsNomaSolution, ConvergenceTrace)> {
    config.validate()?;
    init.validate()?;
    let mut work = problem.clone();
    let target = problem.weights;
    let mut sol = init;
    let mut prev = work.merit(&sol);
    let mut trace = ConvergenceTrace::new(prev);
    for _ in 0..config.max_iters {
        sol = reactivate_idle_streams(&work, &sol, mask)?;
        sol = power_update(&work, &sol, config, mask)?;
        sol = beamforming_update(&work, &sol, config, mask)?;
        if mask.optimize_rho {
            sol = rho_update(&work, &sol);
        }
        let ev = work.evaluate(&sol);
        trace.push(ev.merit, ev.violation);
        let done = (ev.merit - prev).abs() < config.epsilon;
        prev = ev.merit;
        if config.adaptive_weights {
            work.weights = adaptive_weights(&work.weights, &target, &ev.components, &work.scales, true);
            prev = work.evaluate(&sol).merit;
        }
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((sol, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::complex_gaussian;
    use crate::objective::{Limits, NoiseModel};
    use crate::optimizers::model::tests::scene;
    use crate::rates::{default_grouping, rate_breakdown};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rv(m: usize, rng: &mut ChaCha8Rng) -> CVec {
        CVec::from_fn(m, |_, _| complex_gaussian(rng, 1.0))
    }

    #[test]
    fn surrogate_tight_at_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = rv(8, &mut rng);
        let w = rv(8, &mut rng);
        let s = sca_surrogate_gamma(&w, &w, &h, 0.7, 0.3);
        let truth = linalg::inner(&h, &w).norm_sqr() / 1.0;
        assert!((s - truth).abs() <= 1e-12 * truth);
    }

    #[test]
    fn surrogate_can_go_negative() {
        let h = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let w0 = h.clone();
        let w = CVec::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        assert!(sca_surrogate_gamma(&w, &w0, &h, 0.0, 1.0) < 0.0);
    }

    #[test]
    fn surrogate_is_minorant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = rv(6, &mut rng);
        let w0 = rv(6, &mut rng);
        for _ in 0..1000 {
            let w = &w0 + rv(6, &mut rng) * Complex64::new(0.1, 0.0);
            let s = sca_surrogate_gamma(&w, &w0, &h, 0.4, 0.2);
            let truth = linalg::inner(&h, &w).norm_sqr() / 0.6;
            assert!(s <= truth + 1e-9);
        }
    }

    #[test]
    fn zero_inner_steps_keep_beams() {
        let (p, sol) = scene(1, 4, 2);
        let cfg = OptimizerConfig {
            inner_steps: 0,
            ..Default::default()
        };
        let out = beamforming_update(&p, &sol, &cfg, &BlockMask::full(&p)).unwrap();
        assert_eq!(out, sol);
    }

    #[test]
    fn beam_block_monotone_and_unit_norm() {
        for seed in 0..10 {
            let (p, sol) = scene(seed, 2, 1);
            let f0 = p.merit(&sol);
            let out = beamforming_update(&p, &sol, &OptimizerConfig::default(), &BlockMask::full(&p)).unwrap();
            assert!(p.merit(&out) >= f0 - 1e-9);
            assert!(out.unit_norm_residual() < 1e-9);
        }
    }

    #[test]
    fn power_block_feasible() {
        for seed in 0..10 {
            let (p, mut sol) = scene(seed, 4, 2);
            let n = sol.num_streams();
            sol.set_powers(&vec![p.limits.p_max / n as f64; n]);
            let f0 = p.merit(&sol);
            let out = power_update(&p, &sol, &OptimizerConfig::default(), &BlockMask::full(&p)).unwrap();
            assert!(out.total_power() <= p.limits.p_max + 1e-9);
            assert!(out.powers().iter().all(|x| *x >= 0.0));
            assert!(p.merit(&out) >= f0 - 1e-9);
        }
    }

    #[test]
    fn reactivation_keeps_merit_and_maximizes_marginal_gain() {
        for seed in 0..5 {
            let (p, mut sol) = scene(seed, 4, 2);
            let mut powers = sol.powers();
            powers[0] = 0.0;
            sol.set_powers(&powers);
            let out = reactivate_idle_streams(&p, &sol, &BlockMask::full(&p)).unwrap();
            assert_eq!(p.merit(&out), p.merit(&sol));
            for j in 1..sol.num_streams() {
                assert_eq!(out.beam(j), sol.beam(j));
            }
            // the new beam should beat random directions on dF/dP_0
            let d_p0 = |s: &RsNomaSolution| p.gradient(s, &p.evaluate(s)).powers[0];
            let best = d_p0(&out);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let mut cand = sol.clone();
                *cand.beam_mut(0) = linalg::normalized(&rv(4, &mut rng)).unwrap();
                assert!(d_p0(&cand) <= best + 1e-9 * best.abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_user_private_takes_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = rv(4, &mut rng);
        let grouping = default_grouping(std::slice::from_ref(&h), 1).unwrap();
        let noise = NoiseModel {
            sigma_n2: 1.0,
            sigma_s2: 1.0,
        };
        let limits = Limits {
            p_max: 10.0,
            r_min: 0.0,
            p_d_min: 0.5,
            crlb_max: f64::INFINITY,
            p_fa: 0.1,
        };
        let w = ObjectiveWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let p = Problem::new(vec![h], vec![], grouping, noise, limits, w).unwrap();
        let (sol, _) = run_conv_noma(&p, &OptimizerConfig::default()).unwrap();
        assert!(sol.p_private[0] >= 0.99 * 10.0, "{}", sol.p_private[0]);
    }

    #[test]
    fn rho_block_matches_grid() {
        for seed in 0..5 {
            let (p, mut sol) = scene(seed, 2, 1);
            sol.rho = vec![0.5, 0.5];
            let members = &p.grouping.sic_order[0];
            let k = members[0];
            let out = rho_update(&p, &sol);
            assert!(out.rho.iter().all(|r| (0.0..=1.0).contains(r)));
            // one coordinate search on the first member, checked against a grid
            let grid_best = (0..=1000)
                .map(|i| {
                    let mut s = sol.clone();
                    s.rho[k] = i as f64 / 1000.0;
                    (i as f64 / 1000.0, p.merit(&s))
                })
                .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            let mut s = sol.clone();
            s.rho[k] = out.rho[k];
            let f_golden = p.merit(&s);
            if p.merit(&sol) < grid_best.1 - 1e-9 {
                assert!(f_golden >= grid_best.1 - 1e-6, "seed {seed}");
                let mut g = sol.clone();
                g.rho[k] = grid_best.0;
                assert!((out.rho[k] - grid_best.0).abs() < 1e-3 || (p.merit(&g) - f_golden).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rho_flat_for_single_member_groups() {
        let (p, mut sol) = scene(4, 2, 2);
        sol.rho = vec![0.3, 0.8];
        assert_eq!(rho_update(&p, &sol).rho, vec![0.3, 0.8]);
    }

    #[test]
    fn adaptive_weight_rules() {
        let w = ObjectiveWeights::default();
        let c = Components {
            sum_rate: 100.0,
            sensing_utility: 1.0,
            energy_efficiency: 1.0,
            fairness: 1.0,
        };
        assert_eq!(adaptive_weights(&w, &w, &c, &ComponentScales::UNIT, false), w);
        let balanced = ComponentScales::from_reference(&c);
        let same = adaptive_weights(&w, &w, &c, &balanced, true);
        for i in 0..4 {
            assert!((same.alpha[i] - w.alpha[i]).abs() < 1e-15);
        }
        let moved = adaptive_weights(&w, &w, &c, &ComponentScales::UNIT, true);
        assert!(moved.alpha[0] < w.alpha[0]);
    }

    #[test]
    fn huge_epsilon_stops_after_one_iteration() {
        let (p, sol) = scene(5, 4, 2);
        let cfg = OptimizerConfig {
            epsilon: 1e9,
            ..Default::default()
        };
        let (_, tr) = run_hao_sca_from(&p, sol, &cfg, &BlockMask::full(&p)).unwrap();
        assert_eq!(tr.iterations, 1);
        assert!(tr.converged);
    }

    #[test]
    fn run_is_monotone_and_deterministic() {
        let (p, _) = scene(6, 4, 2);
        let cfg = OptimizerConfig::default();
        let (a, ta) = run_hao_sca(&p, &cfg).unwrap();
        let (b, tb) = run_hao_sca(&p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert!(ta.monotone);
        assert!(a.total_power() <= p.limits.p_max + 1e-9);
        assert!(a.unit_norm_residual() < 1e-9);
    }

    #[test]
    fn warm_start_from_noma_never_loses() {
        for seed in 0..5 {
            let (p, _) = scene(seed, 4, 2);
            let cfg = OptimizerConfig::default();
            let (noma, _) = run_conv_noma(&p, &cfg).unwrap();
            let f_noma = p.merit(&noma);
            let (rs, _) = run_hao_sca_from(&p, noma.clone(), &cfg, &BlockMask::full(&p)).unwrap();
            assert!(p.merit(&rs) >= f_noma - 1e-9);
            let b = rate_breakdown(&noma, &p.channels, p.noise.sigma_n2);
            assert!(b.users.iter().all(|u| u.common_rate == 0.0));
        }
    }
}
