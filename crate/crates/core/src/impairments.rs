//! Hardware impairments: mutual coupling, Wiener phase noise, I/Q imbalance
//! and CSI error injection.
//!
//! The composed transform applied to a transmit vector is `D_PN · D_IQ · C`.
//! A stage set to `None` on [`ImpairmentChain`] acts as the identity.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{complex_gaussian, ArrayGeometry};
use crate::linalg::{self, CMat, CVec};

/// Coupling coefficients at or above this magnitude are rejected outright.
pub const KAPPA_LIMIT: f64 = 0.5;
/// Smallest singular value accepted for the coupling matrix.
pub const MIN_COUPLING_SINGULAR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingModel {
    pub kappa: Vec<f64>,
    pub decay: f64,
    pub matrix: CMat,
}

/// `C = I + Σ_p κ_p·e^{−decay·(p−1)}·T_p`, where `T_p` links element pairs at
/// Chebyshev grid distance `p`.
pub fn coupling_matrix(geom: &ArrayGeometry, kappa: &[f64], decay: f64) -> Result<CouplingModel> {
    if let Some(bad) = kappa.iter().find(|k| !(k.abs() < KAPPA_LIMIT)) {
        return Err(Error::invalid(format!(
            "coupling coefficient {bad} must satisfy |kappa| < {KAPPA_LIMIT}"
        )));
    }
    if !(decay >= 0.0 && decay.is_finite()) {
        return Err(Error::invalid("coupling decay must be non-negative"));
    }
    let m = geom.m_total();
    let mut real = DMatrix::<f64>::identity(m, m);
    for a in 0..m {
        let (am, an) = (a / geom.my, a % geom.my);
        for b in (a + 1)..m {
            let (bm, bn) = (b / geom.my, b % geom.my);
            let p = am.abs_diff(bm).max(an.abs_diff(bn));
            if p == 0 || p > kappa.len() {
                continue;
            }
            let w = kappa[p - 1] * (-decay * (p - 1) as f64).exp();
            real[(a, b)] = w;
            real[(b, a)] = w;
        }
    }
    if kappa.iter().any(|&k| k != 0.0) {
        let ev = linalg::symmetric_eigenvalues(&real);
        let min_singular = ev.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
        if min_singular < MIN_COUPLING_SINGULAR {
            return Err(Error::Conditioning { min_singular });
        }
    }
    Ok(CouplingModel {
        kappa: kappa.to_vec(),
        decay,
        matrix: real.map(|x| Complex64::new(x, 0.0)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoiseState {
    pub phases: Vec<f64>,
    pub c0: f64,
    /// White floor of the PSD; not used by the time-domain recursion.
    pub c2: f64,
    pub ts: f64,
}

impl PhaseNoiseState {
    pub fn new(m: usize, c0: f64, ts: f64) -> Result<Self> {
        if !(c0 >= 0.0 && ts > 0.0) {
            return Err(Error::invalid("phase noise needs c0 >= 0 and ts > 0"));
        }
        Ok(Self {
            phases: vec![0.0; m],
            c0,
            c2: 0.0,
            ts,
        })
    }

    /// Per-step increment variance `10^(dBc/10)` rad², solved back into `c0`.
    pub fn from_dbc(m: usize, dbc: f64, ts: f64) -> Result<Self> {
        if !dbc.is_finite() {
            return Err(Error::invalid("phase noise level must be finite"));
        }
        let var = 10f64.powf(dbc / 10.0);
        Self::new(m, var / (4.0 * PI * PI * ts), ts)
    }

    pub fn increment_variance(&self) -> f64 {
        4.0 * PI * PI * self.c0 * self.ts
    }

    pub fn coefficients(&self) -> CVec {
        CVec::from_iterator(
            self.phases.len(),
            self.phases.iter().map(|&p| Complex64::from_polar(1.0, p)),
        )
    }
}

/// One Wiener step: every phase receives an independent `N(0, 4π²·c0·ts)` increment.
pub fn phase_noise_step<R: Rng + ?Sized>(state: PhaseNoiseState, rng: &mut R) -> PhaseNoiseState {
    let sd = state.increment_variance().sqrt();
    if sd == 0.0 {
        return state;
    }
    let normal = Normal::new(0.0, sd).expect("finite standard deviation");
    let phases = state.phases.iter().map(|p| p + normal.sample(rng)).collect();
    PhaseNoiseState { phases, ..state }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqImbalance {
    pub psi: Vec<f64>,
    pub g: Vec<f64>,
}

impl IqImbalance {
    pub fn uniform(m: usize, psi: f64, g: f64) -> Self {
        Self {
            psi: vec![psi; m],
            g: vec![g; m],
        }
    }

    /// Same magnitudes on every antenna with independent random signs on ψ and g.
    /// The image rejection ratio is unchanged by either sign flip.
    pub fn with_random_signs<R: Rng + ?Sized>(m: usize, psi: f64, g: f64, rng: &mut R) -> Self {
        let mut out = Self::uniform(m, psi, g);
        for i in 0..m {
            if rng.random::<bool>() {
                out.psi[i] = -psi;
            }
            if rng.random::<bool>() {
                out.g[i] = -g;
            }
        }
        out
    }
}

/// `ε = (1+g)/(1−g)`.
pub fn iq_epsilon(g: f64) -> Result<f64> {
    if g == 1.0 {
        return Err(Error::DivisionByZero("I/Q gain mismatch g = 1".into()));
    }
    if !(g.abs() < 1.0) {
        return Err(Error::invalid(format!("I/Q gain mismatch must satisfy |g| < 1, got {g}")));
    }
    Ok((1.0 + g) / (1.0 - g))
}

/// `μ_m = cos ψ_m + j·ε_m·sin ψ_m`.
pub fn iq_coefficients(iq: &IqImbalance) -> Result<CVec> {
    if iq.psi.len() != iq.g.len() {
        return Err(Error::DimensionMismatch {
            expected: iq.psi.len(),
            got: iq.g.len(),
        });
    }
    let mut out = Vec::with_capacity(iq.psi.len());
    for (&psi, &g) in iq.psi.iter().zip(&iq.g) {
        let eps = iq_epsilon(g)?;
        out.push(Complex64::new(psi.cos(), eps * psi.sin()));
    }
    Ok(CVec::from_vec(out))
}

/// Image rejection ratio in dB; `+∞` when the denominator vanishes.
pub fn irr_db(psi: f64, eps: f64) -> f64 {
    let c = (2.0 * psi).cos();
    let num = 1.0 + 2.0 * eps * c + eps * eps;
    let den = 1.0 - 2.0 * eps * c + eps * eps;
    if den <= 1e-300 {
        return f64::INFINITY;
    }
    10.0 * (num / den).log10()
}

/// Find `(ψ, g)` with `ψ = g` reaching the requested IRR by bisection on `g`.
pub fn solve_iq_for_irr(target_db: f64) -> Result<(f64, f64)> {
    if target_db == f64::INFINITY {
        return Ok((0.0, 0.0));
    }
    if !(target_db > 0.0) {
        return Err(Error::invalid(format!("IRR target must be positive, got {target_db}")));
    }
    let irr_at = |x: f64| irr_db(x, (1.0 + x) / (1.0 - x));
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    if irr_at(hi) > target_db {
        return Err(Error::SearchFailure(format!(
            "IRR of {target_db} dB is below the reachable floor {:.3} dB",
            irr_at(hi)
        )));
    }
    // irr_at is decreasing in x
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if irr_at(mid) > target_db {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    if (irr_at(x) - target_db).abs() > 0.01 {
        return Err(Error::SearchFailure(format!("IRR bisection stalled near {target_db} dB")));
    }
    Ok((x, x))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImpairmentChain {
    pub coupling: Option<CouplingModel>,
    pub phase: Option<PhaseNoiseState>,
    pub iq: Option<IqImbalance>,
}

impl ImpairmentChain {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.coupling.is_none() && self.phase.is_none() && self.iq.is_none()
    }

    /// Dense `D_PN · D_IQ · C`.
    pub fn transform(&self, m: usize) -> Result<CMat> {
        let mut out = match &self.coupling {
            Some(c) => {
                check_len(m, c.matrix.nrows())?;
                c.matrix.clone()
            }
            None => CMat::identity(m, m),
        };
        let mut diag = CVec::from_element(m, Complex64::new(1.0, 0.0));
        if let Some(iq) = &self.iq {
            let mu = iq_coefficients(iq)?;
            check_len(m, mu.len())?;
            diag.component_mul_assign(&mu);
        }
        if let Some(pn) = &self.phase {
            let d = pn.coefficients();
            check_len(m, d.len())?;
            diag.component_mul_assign(&d);
        }
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= diag[i];
        }
        Ok(out)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn apply_impairments(x: &CVec, chain: &ImpairmentChain) -> Result<CVec> {
    let m = x.len();
    let mut y = match &chain.coupling {
        Some(c) => {
            check_len(m, c.matrix.nrows())?;
            &c.matrix * x
        }
        None => x.clone(),
    };
    if let Some(iq) = &chain.iq {
        let mu = iq_coefficients(iq)?;
        check_len(m, mu.len())?;
        y.component_mul_assign(&mu);
    }
    if let Some(pn) = &chain.phase {
        let d = pn.coefficients();
        check_len(m, d.len())?;
        y.component_mul_assign(&d);
    }
    Ok(y)
}

/// `ĥ = h + e` with `e` complex Gaussian rescaled so `‖e‖/‖h‖ = eps` exactly.
pub fn inject_csi_error<R: Rng + ?Sized>(h: &CVec, eps: f64, rng: &mut R) -> Result<CVec> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("CSI error must be non-negative, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(h.clone());
    }
    let hn = linalg::norm_sqr(h).sqrt();
    if hn == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    let mut e = CVec::from_fn(h.len(), |_, _| complex_gaussian(rng, 1.0));
    let mut en = linalg::norm_sqr(&e).sqrt();
    while en == 0.0 {
        e = CVec::from_fn(h.len(), |_, _| complex_gaussian(rng, 1.0));
        en = linalg::norm_sqr(&e).sqrt();
    }
    e *= Complex64::new(eps * hn / en, 0.0);
    Ok(h + e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(side: usize) -> ArrayGeometry {
        ArrayGeometry::square(side, 0.00075, 0.003).unwrap()
    }

    #[test]
    fn zero_coupling_is_identity() {
        let c = coupling_matrix(&geom(3), &[0.0, 0.0], 0.3).unwrap();
        assert_eq!(c.matrix, CMat::identity(9, 9));
    }

    #[test]
    fn coupling_two_by_two_by_hand() {
        let c = coupling_matrix(&geom(2), &[0.1], 0.0).unwrap();
        // flat order (0,0) (0,1) (1,0) (1,1); all pairs are Chebyshev neighbours
        let expect = [
            [1.0, 0.1, 0.1, 0.1],
            [0.1, 1.0, 0.1, 0.1],
            [0.1, 0.1, 1.0, 0.1],
            [0.1, 0.1, 0.1, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(c.matrix[(i, j)], Complex64::new(expect[i][j], 0.0));
            }
        }
    }

    #[test]
    fn coupling_rings_and_decay() {
        let c = coupling_matrix(&geom(3), &[0.1, 0.2], 1.0).unwrap();
        // (0,0) -> (0,2) is ring 2
        assert_relative_eq!(c.matrix[(0, 2)].re, 0.2 * (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(c.matrix[(0, 4)].re, 0.1, max_relative = 1e-15);
        assert_eq!(c.matrix.transpose(), c.matrix);
    }

    #[test]
    fn coupling_rejects_large_kappa() {
        assert!(coupling_matrix(&geom(2), &[0.5], 0.0).is_err());
        assert!(matches!(
            coupling_matrix(&geom(4), &[-0.4, -0.4], 0.0),
            Err(Error::Conditioning { .. })
        ));
    }

    #[test]
    fn phase_noise_zero_c0_is_static() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = PhaseNoiseState::new(5, 0.0, 1e-9).unwrap();
        let t = phase_noise_step(s.clone(), &mut rng);
        assert_eq!(s, t);
    }

    #[test]
    fn phase_noise_increment_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = PhaseNoiseState::from_dbc(100_000, -35.0, 1e-9).unwrap();
        let var = s.increment_variance();
        assert_relative_eq!(var, 10f64.powf(-3.5), max_relative = 1e-12);
        let t = phase_noise_step(s, &mut rng);
        let n = t.phases.len() as f64;
        let mean = t.phases.iter().sum::<f64>() / n;
        let sv = t.phases.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((sv / var - 1.0).abs() < 0.03, "ratio {}", sv / var);
    }

    #[test]
    fn phase_noise_wiener_growth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = PhaseNoiseState::new(10_000, 1e6, 1e-9).unwrap();
        let var = s.increment_variance();
        for _ in 0..100 {
            s = phase_noise_step(s, &mut rng);
        }
        let ms = s.phases.iter().map(|p| p * p).sum::<f64>() / s.phases.len() as f64;
        assert!((ms / (100.0 * var) - 1.0).abs() < 0.05);
    }

    #[test]
    fn iq_coefficient_values() {
        let mu = iq_coefficients(&IqImbalance::uniform(2, 0.0, 0.3)).unwrap();
        assert_eq!(mu[0], Complex64::new(1.0, 0.0));
        let mu = iq_coefficients(&IqImbalance::uniform(1, 0.4, 0.0)).unwrap();
        assert_relative_eq!(mu[0].re, 0.4f64.cos());
        assert_relative_eq!(mu[0].im, 0.4f64.sin());
        let mu = iq_coefficients(&IqImbalance::uniform(1, 0.1, 0.05)).unwrap();
        assert_relative_eq!(mu[0].re, 0.995_004_165_278_025_8, max_relative = 1e-14);
        assert_relative_eq!(mu[0].im, 0.110_342_197_346_494_28, max_relative = 1e-14);
        assert!(matches!(
            iq_coefficients(&IqImbalance::uniform(1, 0.1, 1.0)),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn irr_values() {
        assert_eq!(irr_db(0.3, 0.0), 0.0);
        assert_eq!(irr_db(0.0, 1.0), f64::INFINITY);
        assert_relative_eq!(irr_db(0.02, 1.02), 33.026_518_300_755_91, max_relative = 1e-12);
    }

    #[test]
    fn irr_decreasing_in_eps() {
        let mut prev = f64::INFINITY;
        for i in 1..200 {
            let v = irr_db(0.0, 1.0 + 0.01 * i as f64);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn irr_solver_round_trip() {
        assert_eq!(solve_iq_for_irr(f64::INFINITY).unwrap(), (0.0, 0.0));
        for target in [30.0, 26.0, 10.0, 45.0] {
            let (psi, g) = solve_iq_for_irr(target).unwrap();
            assert_eq!(psi, g);
            let eps = (1.0 + g) / (1.0 - g);
            assert!((irr_db(psi, eps) - target).abs() < 0.01);
        }
        assert!(matches!(solve_iq_for_irr(1.0), Err(Error::SearchFailure(_))));
    }

    #[test]
    fn random_signs_keep_irr() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let iq = IqImbalance::with_random_signs(16, 0.02, 0.02, &mut rng);
        let base = irr_db(0.02, iq_epsilon(0.02).unwrap());
        for (&p, &g) in iq.psi.iter().zip(&iq.g) {
            assert_relative_eq!(irr_db(p, iq_epsilon(g).unwrap()), base, max_relative = 1e-9);
        }
    }

    fn random_vec(m: usize, rng: &mut ChaCha8Rng) -> CVec {
        CVec::from_fn(m, |_, _| complex_gaussian(rng, 1.0))
    }

    #[test]
    fn identity_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_vec(9, &mut rng);
        assert_eq!(apply_impairments(&x, &ImpairmentChain::identity()).unwrap(), x);
    }

    #[test]
    fn phase_only_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_vec(9, &mut rng);
        let pn = phase_noise_step(PhaseNoiseState::new(9, 1e7, 1e-9).unwrap(), &mut rng);
        let chain = ImpairmentChain {
            phase: Some(pn),
            ..Default::default()
        };
        let y = apply_impairments(&x, &chain).unwrap();
        assert_relative_eq!(y.norm(), x.norm(), max_relative = 1e-12);
    }

    #[test]
    fn full_chain_matches_dense_product() {
        let g = geom(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_vec(9, &mut rng);
        let pn = phase_noise_step(PhaseNoiseState::new(9, 1e7, 1e-9).unwrap(), &mut rng);
        let iq = IqImbalance::with_random_signs(9, 0.03, 0.02, &mut rng);
        let c = coupling_matrix(&g, &[0.1, 0.05], 0.5).unwrap();
        let d_pn = CMat::from_diagonal(&pn.coefficients());
        let d_iq = CMat::from_diagonal(&iq_coefficients(&iq).unwrap());
        let dense = &d_pn * &d_iq * &c.matrix * &x;
        let chain = ImpairmentChain {
            coupling: Some(c),
            phase: Some(pn),
            iq: Some(iq),
        };
        let y = apply_impairments(&x, &chain).unwrap();
        assert!((&y - &dense).norm() < 1e-12 * dense.norm());
        let t = chain.transform(9).unwrap();
        assert!((&t * &x - dense).norm() < 1e-12 * y.norm());
    }

    #[test]
    fn chain_dimension_mismatch() {
        let c = coupling_matrix(&geom(2), &[0.1], 0.0).unwrap();
        let chain = ImpairmentChain {
            coupling: Some(c),
            ..Default::default()
        };
        let x = CVec::zeros(3);
        assert!(matches!(
            apply_impairments(&x, &chain),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn csi_error_exact_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_vec(16, &mut rng);
        assert_eq!(inject_csi_error(&h, 0.0, &mut rng).unwrap(), h);
        for eps in [0.01, 0.2, 1.5] {
            let hh = inject_csi_error(&h, eps, &mut rng).unwrap();
            assert!(((&hh - &h).norm() / h.norm() - eps).abs() < 1e-12);
        }
        assert!(matches!(
            inject_csi_error(&CVec::zeros(4), 0.1, &mut rng),
            Err(Error::UndefinedNormalization)
        ));
    }

    #[test]
    fn csi_error_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_vec(8, &mut rng);
        let hn = h.norm();
        let mut acc = Complex64::new(0.0, 0.0);
        let n = 10_000;
        for _ in 0..n {
            let e = inject_csi_error(&h, 0.3, &mut rng).unwrap() - &h;
            acc += linalg::inner(&h, &e) / (hn * e.norm());
        }
        assert!((acc / n as f64).norm() < 0.05);
    }
}
