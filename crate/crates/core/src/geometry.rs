//! Holographic planar-array geometry and near-field propagation.
//!
//! Elements are indexed `(m, n)` with `0 <= m < mx`, `0 <= n < my`, laid out
//! row-major with `n` fastest, so the flat index is `m * my + n`. Element
//! `(0, 0)` sits at the origin and the array spans the positive x/y quadrant;
//! no centering offset is applied.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ranges closer than this multiple of the element pitch are rejected.
pub const NEAR_SINGULARITY_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mx: usize,
    pub my: usize,
    pub dx: f64,
    pub dy: f64,
    pub wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(mx: usize, my: usize, dx: f64, dy: f64, wavelength: f64) -> Result<Self> {
        if mx == 0 || my == 0 {
            return Err(Error::invalid("array needs at least one element per axis"));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::invalid("element spacing must be positive"));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid("wavelength must be positive"));
        }
        Ok(Self {
            mx,
            my,
            dx,
            dy,
            wavelength,
        })
    }

    /// Square `side x side` array with isotropic spacing.
    pub fn square(side: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        Self::new(side, side, spacing, spacing, wavelength)
    }

    pub fn m_total(&self) -> usize {
        self.mx * self.my
    }

    /// Wavenumber `2π/λ`.
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Aperture `sqrt(mx·my)·max(dx, dy)`.
    pub fn aperture(&self) -> f64 {
        ((self.mx * self.my) as f64).sqrt() * self.dx.max(self.dy)
    }

    pub fn rayleigh_distance(&self) -> f64 {
        rayleigh_distance(self)
    }

    /// Smallest range accepted by [`array_response`].
    pub fn min_range(&self) -> f64 {
        NEAR_SINGULARITY_FACTOR * self.dx.max(self.dy)
    }

    pub fn flat_index(&self, m: usize, n: usize) -> usize {
        m * self.my + n
    }
}

/// `2·D²/λ`, the near-field / far-field boundary.
pub fn rayleigh_distance(geom: &ArrayGeometry) -> f64 {
    let d = geom.aperture();
    2.0 * d * d / geom.wavelength
}

fn check_index(geom: &ArrayGeometry, m: usize, n: usize) -> Result<()> {
    if m >= geom.mx || n >= geom.my {
        return Err(Error::Domain {
            m,
            n,
            msg: format!("index outside {}x{} array", geom.mx, geom.my),
        });
    }
    Ok(())
}

/// Exact spherical distance from element `(m, n)` to the point `(r, θ, φ)`.
pub fn element_distance(
    geom: &ArrayGeometry,
    m: usize,
    n: usize,
    theta: f64,
    phi: f64,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("range must be positive, got {r}")));
    }
    check_index(geom, m, n)?;
    let (xm, yn) = (geom.dx * m as f64, geom.dy * n as f64);
    let st = theta.sin();
    let radicand =
        r * r + xm * xm + yn * yn - 2.0 * r * xm * st * phi.cos() - 2.0 * r * yn * st * phi.sin();
    if radicand < 0.0 || !radicand.is_finite() {
        return Err(Error::Domain {
            m,
            n,
            msg: format!("negative radicand {radicand:e}"),
        });
    }
    Ok(radicand.sqrt())
}

/// Second-order (Fresnel) expansion of [`element_distance`].
pub fn fresnel_distance(
    geom: &ArrayGeometry,
    m: usize,
    n: usize,
    theta: f64,
    phi: f64,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("range must be positive, got {r}")));
    }
    check_index(geom, m, n)?;
    let (xm, yn) = (geom.dx * m as f64, geom.dy * n as f64);
    let st = theta.sin();
    Ok(r - xm * st * phi.cos() - yn * st * phi.sin() + (xm * xm + yn * yn) / (2.0 * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceModel {
    #[default]
    Exact,
    Fresnel,
}

/// Holographic array response: element `(m,n)` is `exp(j·k0·r_mn)/(sqrt(M)·r_mn)`.
pub fn array_response(
    geom: &ArrayGeometry,
    theta: f64,
    phi: f64,
    r: f64,
    mode: DistanceModel,
) -> Result<CVec> {
    let min = geom.min_range();
    if !(r >= min) {
        return Err(Error::NearSingularity { range: r, min });
    }
    let scale = 1.0 / (geom.m_total() as f64).sqrt();
    let k0 = geom.k0();
    let mut out = DVector::from_element(geom.m_total(), Complex64::new(0.0, 0.0));
    for m in 0..geom.mx {
        for n in 0..geom.my {
            let rmn = match mode {
                DistanceModel::Exact => element_distance(geom, m, n, theta, phi, r)?,
                DistanceModel::Fresnel => fresnel_distance(geom, m, n, theta, phi, r)?,
            };
            out[geom.flat_index(m, n)] = Complex64::from_polar(scale / rmn, k0 * rmn);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Multipath user channels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub gain: Complex64,
    /// Power fraction of this path; fractions of one channel sum to one.
    pub sigma2: f64,
    pub theta: f64,
    pub phi: f64,
    pub range: f64,
}

/// Uniform sampler over angles and range for path or target positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSampler {
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub range_min: f64,
    pub range_max: f64,
}

impl PathSampler {
    /// θ ∈ [−π/3, π/3], φ ∈ [−π, π), r ∈ [0.1·R, 2·R] with R the Rayleigh
    /// distance; the lower range is lifted to twice the near-singularity bound.
    pub fn for_geometry(geom: &ArrayGeometry) -> Self {
        Self::with_range_fractions(geom, PI / 3.0, 0.1, 2.0)
    }

    pub fn with_range_fractions(
        geom: &ArrayGeometry,
        theta_max: f64,
        min_fraction: f64,
        max_fraction: f64,
    ) -> Self {
        let rr = geom.rayleigh_distance();
        let floor = 2.0 * geom.min_range();
        let range_min = (min_fraction * rr).max(floor);
        let range_max = (max_fraction * rr).max(range_min);
        Self {
            theta_min: -theta_max,
            theta_max,
            phi_min: -PI,
            phi_max: PI,
            range_min,
            range_max,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64, f64) {
        let theta = uniform(rng, self.theta_min, self.theta_max);
        let phi = uniform(rng, self.phi_min, self.phi_max);
        let range = uniform(rng, self.range_min, self.range_max);
        (theta, phi, range)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

/// Circularly-symmetric complex Gaussian with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LargeScale {
    Fixed(f64),
    /// `(λ/(4π·r))²` evaluated at the first path's range.
    FreeSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub beta: f64,
    pub paths: Vec<PathComponent>,
    pub h: CVec,
}

/// Assemble `h = sqrt(β)·Σ α_p·a(θ_p, φ_p, r_p)` from explicit paths.
pub fn channel_from_paths(
    geom: &ArrayGeometry,
    beta: f64,
    paths: Vec<PathComponent>,
) -> Result<UserChannel> {
    if paths.is_empty() {
        return Err(Error::invalid("a channel needs at least one path"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid("large-scale gain must be positive"));
    }
    let mut h = DVector::from_element(geom.m_total(), Complex64::new(0.0, 0.0));
    for p in &paths {
        let a = array_response(geom, p.theta, p.phi, p.range, DistanceModel::Exact)?;
        h.axpy(p.gain, &a, Complex64::new(1.0, 0.0));
    }
    h *= Complex64::new(beta.sqrt(), 0.0);
    if !linalg::all_finite(&h) {
        return Err(Error::numerical("user channel synthesis"));
    }
    Ok(UserChannel { beta, paths, h })
}

/// Draw path geometry, Dirichlet power fractions and complex gains, then
/// synthesize the channel.
pub fn sample_paths<R: Rng + ?Sized>(
    num_paths: usize,
    sampler: &PathSampler,
    rng: &mut R,
) -> Result<Vec<PathComponent>> {
    if num_paths == 0 {
        return Err(Error::invalid("num_paths must be at least 1"));
    }
    let raw: Vec<f64> = (0..num_paths)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e.max(1e-12)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let mut paths = Vec::with_capacity(num_paths);
    for w in raw {
        let sigma2 = w / total;
        let (theta, phi, range) = sampler.sample(rng);
        let gain = complex_gaussian(rng, sigma2);
        paths.push(PathComponent {
            gain,
            sigma2,
            theta,
            phi,
            range,
        });
    }
    Ok(paths)
}

pub fn generate_user_channel<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    large_scale: LargeScale,
    num_paths: usize,
    sampler: &PathSampler,
    rng: &mut R,
) -> Result<UserChannel> {
    let paths = sample_paths(num_paths, sampler, rng)?;
    let beta = match large_scale {
        LargeScale::Fixed(b) => b,
        LargeScale::FreeSpace => {
            let r = paths[0].range;
            (geom.wavelength / (4.0 * PI * r)).powi(2)
        }
    };
    channel_from_paths(geom, beta, paths)
}

fn check_fractions(paths: &[PathComponent]) -> Result<()> {
    let s: f64 = paths.iter().map(|p| p.sigma2).sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "path power fractions sum to {s}, expected 1"
        )));
    }
    Ok(())
}

/// `Σ_p σ²_p a_p a_p^H`.
pub fn spatial_correlation(paths: &[PathComponent], geom: &ArrayGeometry) -> Result<CMat> {
    check_fractions(paths)?;
    let m = geom.m_total();
    let mut r = CMat::zeros(m, m);
    for p in paths {
        let a = array_response(geom, p.theta, p.phi, p.range, DistanceModel::Exact)?;
        r += linalg::outer(&a) * Complex64::new(p.sigma2, 0.0);
    }
    Ok(r)
}

/// `λ_max/λ_min` of a Hermitian PSD matrix; `+∞` when `λ_min ≤ 1e-14·λ_max`.
pub fn condition_number(matrix: &CMat) -> Result<f64> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.nrows(),
            got: matrix.ncols(),
        });
    }
    let scale = matrix.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let defect = linalg::hermitian_defect(matrix);
    if defect > 1e-9 * scale {
        return Err(Error::invalid(format!(
            "matrix is not Hermitian (defect {defect:e})"
        )));
    }
    let ev = linalg::hermitian_eigenvalues(matrix);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if lo <= 1e-14 * hi {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

// ---------------------------------------------------------------------------
// Sensing targets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingTarget {
    pub theta: f64,
    pub phi: f64,
    pub range: f64,
    pub rcs: f64,
    pub gain_tx: f64,
    pub gain_rx: f64,
}

impl SensingTarget {
    pub fn new(theta: f64, phi: f64, range: f64, rcs: f64) -> Result<Self> {
        let t = Self {
            theta,
            phi,
            range,
            rcs,
            gain_tx: 1.0,
            gain_rx: 1.0,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rcs > 0.0) {
            return Err(Error::invalid("target RCS must be positive"));
        }
        if !(self.range > 0.0) {
            return Err(Error::invalid("target range must be positive"));
        }
        if !(self.gain_tx > 0.0 && self.gain_rx > 0.0) {
            return Err(Error::invalid("antenna gains must be positive"));
        }
        Ok(())
    }

    /// Two-way radar amplitude `sqrt(σ·Gt·Gr·λ²/((4π)³·R⁴))`.
    pub fn amplitude(&self, wavelength: f64) -> f64 {
        (self.rcs * self.gain_tx * self.gain_rx * wavelength * wavelength
            / ((4.0 * PI).powi(3) * self.range.powi(4)))
        .sqrt()
    }

    /// Round-trip phase `−4πR/λ`.
    pub fn phase(&self, wavelength: f64) -> f64 {
        -4.0 * PI * self.range / wavelength
    }

    pub fn steering(&self, geom: &ArrayGeometry) -> Result<CVec> {
        array_response(geom, self.theta, self.phi, self.range, DistanceModel::Exact)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingChannelMatrix {
    pub matrix: CMat,
    pub amplitude: f64,
    pub phase: f64,
    pub steering: CVec,
}

pub fn sensing_channel(geom: &ArrayGeometry, target: &SensingTarget) -> Result<SensingChannelMatrix> {
    target.validate()?;
    let a = target.steering(geom)?;
    let amplitude = target.amplitude(geom.wavelength);
    let phase = target.phase(geom.wavelength);
    let matrix = linalg::outer(&a) * Complex64::from_polar(amplitude, phase);
    Ok(SensingChannelMatrix {
        matrix,
        amplitude,
        phase,
        steering: a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(side: usize) -> ArrayGeometry {
        let lambda = 0.003;
        ArrayGeometry::square(side, lambda / 4.0, lambda).unwrap()
    }

    #[test]
    fn distance_at_origin_is_range() {
        let g = geom(4);
        for &(t, p) in &[(0.0, 0.0), (0.7, -2.0), (-1.0, 3.0)] {
            assert_eq!(element_distance(&g, 0, 0, t, p, 5.0).unwrap(), 5.0);
            assert_eq!(fresnel_distance(&g, 0, 0, t, p, 5.0).unwrap(), 5.0);
        }
    }

    #[test]
    fn broadside_distance() {
        let g = ArrayGeometry::new(4, 4, 0.001, 0.001, 0.003).unwrap();
        let d = element_distance(&g, 2, 3, 0.0, 0.4, 10.0).unwrap();
        assert_relative_eq!(d, (100.0f64 + 4e-6 + 9e-6).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn oblique_distance_hand_value() {
        let g = ArrayGeometry::new(2, 1, 0.00075, 0.00075, 0.003).unwrap();
        let d = element_distance(&g, 1, 0, PI / 4.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(d, 0.999_469_810_613_717_3, max_relative = 1e-14);
    }

    #[test]
    fn fresnel_broadside() {
        let g = geom(8);
        let d = fresnel_distance(&g, 4, 0, 0.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(d, 2.0 + 9e-6 / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn index_out_of_range_is_domain_error() {
        let g = geom(2);
        assert!(matches!(
            element_distance(&g, 2, 0, 0.0, 0.0, 1.0),
            Err(Error::Domain { m: 2, n: 0, .. })
        ));
    }

    #[test]
    fn single_element_response() {
        let g = geom(1);
        let a = array_response(&g, 0.3, 0.2, 1.0, DistanceModel::Exact).unwrap();
        assert_eq!(a.len(), 1);
        let expect = Complex64::from_polar(1.0, g.k0());
        assert_relative_eq!(a[0].re, expect.re, epsilon = 1e-12);
        assert_relative_eq!(a[0].im, expect.im, epsilon = 1e-12);
    }

    #[test]
    fn origin_phase_is_k0_r() {
        let g = geom(6);
        let r = 0.37;
        let a = array_response(&g, -0.4, 1.1, r, DistanceModel::Fresnel).unwrap();
        let expect = (g.k0() * r).rem_euclid(2.0 * PI);
        let got = a[0].arg().rem_euclid(2.0 * PI);
        assert_relative_eq!(got, expect, epsilon = 1e-9);
    }

    #[test]
    fn response_matches_elementwise_formula() {
        let g = geom(8);
        let (t, p, r) = (0.3, 0.1, 5.0);
        let a = array_response(&g, t, p, r, DistanceModel::Exact).unwrap();
        let m_total = 64.0f64;
        for m in 0..8 {
            for n in 0..8 {
                // recompute from scratch from the geometry
                let x = 0.00075 * m as f64;
                let y = 0.00075 * n as f64;
                let px = r * t.sin() * p.cos();
                let py = r * t.sin() * p.sin();
                let pz = r * t.cos();
                let rmn = ((px - x).powi(2) + (py - y).powi(2) + pz * pz).sqrt();
                let e = Complex64::from_polar(1.0 / (m_total.sqrt() * rmn), 2.0 * PI / 0.003 * rmn);
                let got = a[m * 8 + n];
                assert!((got - e).norm() < 1e-9 * e.norm(), "({m},{n})");
            }
        }
    }

    #[test]
    fn response_magnitudes_follow_inverse_distance() {
        let g = geom(5);
        let a = array_response(&g, 0.5, -0.3, 0.2, DistanceModel::Exact).unwrap();
        for m in 0..5 {
            for n in 0..5 {
                let r = element_distance(&g, m, n, 0.5, -0.3, 0.2).unwrap();
                assert_relative_eq!(a[m * 5 + n].norm(), 1.0 / (5.0 * r), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn near_singularity_guard() {
        let g = geom(4);
        let err = array_response(&g, 0.0, 0.0, 0.5 * g.min_range(), DistanceModel::Exact);
        assert!(matches!(err, Err(Error::NearSingularity { .. })));
    }

    #[test]
    fn rayleigh_distance_values() {
        let g = ArrayGeometry::square(32, 0.003 / 4.0, 0.003).unwrap();
        assert_relative_eq!(g.rayleigh_distance(), 0.384, max_relative = 1e-12);
        let one = ArrayGeometry::square(1, 0.001, 0.003).unwrap();
        assert_relative_eq!(one.rayleigh_distance(), 2.0 * 1e-6 / 0.003, max_relative = 1e-12);
        let small = ArrayGeometry::square(4, 0.001, 0.003).unwrap();
        let big = ArrayGeometry::square(8, 0.001, 0.003).unwrap();
        assert_relative_eq!(big.rayleigh_distance(), 4.0 * small.rayleigh_distance(), max_relative = 1e-12);
    }

    #[test]
    fn single_unit_path_is_scaled_steering() {
        let g = geom(4);
        let path = PathComponent {
            gain: Complex64::new(1.0, 0.0),
            sigma2: 1.0,
            theta: 0.2,
            phi: 0.4,
            range: 0.05,
        };
        let ch = channel_from_paths(&g, 1.0, vec![path]).unwrap();
        let a = array_response(&g, 0.2, 0.4, 0.05, DistanceModel::Exact).unwrap();
        assert_eq!(ch.h, a);
        let ch4 = channel_from_paths(&g, 4.0, vec![path]).unwrap();
        assert!((ch4.h.clone() - a * Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let g = geom(4);
        let s = PathSampler::for_geometry(&g);
        let mk = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            generate_user_channel(&g, LargeScale::FreeSpace, 6, &s, &mut rng).unwrap()
        };
        let (a, b) = (mk(), mk());
        assert_eq!(a.h, b.h);
        let total: f64 = a.paths.iter().map(|p| p.sigma2).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_single_path_is_rank_one() {
        let g = geom(3);
        let path = PathComponent {
            gain: Complex64::new(0.3, 0.1),
            sigma2: 1.0,
            theta: 0.1,
            phi: 0.2,
            range: 0.05,
        };
        let r = spatial_correlation(&[path], &g).unwrap();
        let a = array_response(&g, 0.1, 0.2, 0.05, DistanceModel::Exact).unwrap();
        assert!((r - linalg::outer(&a)).norm() < 1e-12);
    }

    #[test]
    fn correlation_rejects_unnormalized_paths() {
        let g = geom(3);
        let path = PathComponent {
            gain: Complex64::new(1.0, 0.0),
            sigma2: 0.7,
            theta: 0.1,
            phi: 0.2,
            range: 0.05,
        };
        assert!(matches!(spatial_correlation(&[path], &g), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn correlation_trace_and_psd() {
        let g = geom(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let paths = sample_paths(3, &PathSampler::for_geometry(&g), &mut rng).unwrap();
        let r = spatial_correlation(&paths, &g).unwrap();
        let expect: f64 = paths
            .iter()
            .map(|p| {
                let a = array_response(&g, p.theta, p.phi, p.range, DistanceModel::Exact).unwrap();
                p.sigma2 * linalg::norm_sqr(&a)
            })
            .sum();
        assert_relative_eq!(r.trace().re, expect, max_relative = 1e-12);
        assert!(linalg::hermitian_defect(&r) < 1e-12 * expect);
        let ev = linalg::hermitian_eigenvalues(&r);
        assert!(ev[0] >= -1e-10 * ev[ev.len() - 1]);
    }

    #[test]
    fn condition_number_cases() {
        let eye = CMat::identity(3, 3);
        assert_relative_eq!(condition_number(&eye).unwrap(), 1.0, max_relative = 1e-12);
        let mut d = CMat::zeros(2, 2);
        d[(0, 0)] = Complex64::new(4.0, 0.0);
        d[(1, 1)] = Complex64::new(1.0, 0.0);
        assert_relative_eq!(condition_number(&d).unwrap(), 4.0, max_relative = 1e-12);

        let g = geom(2);
        let a = array_response(&g, 0.3, 0.3, 0.05, DistanceModel::Exact).unwrap();
        let m = linalg::outer(&a) + CMat::identity(4, 4) * Complex64::new(0.01, 0.0);
        let expect = (linalg::norm_sqr(&a) + 0.01) / 0.01;
        assert_relative_eq!(condition_number(&m).unwrap(), expect, max_relative = 1e-9);

        assert_eq!(condition_number(&linalg::outer(&a)).unwrap(), f64::INFINITY);

        let mut skew = CMat::identity(2, 2);
        skew[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(condition_number(&skew).is_err());
    }

    #[test]
    fn sensing_channel_structure() {
        let g = geom(4);
        let t = SensingTarget::new(0.2, 0.1, 0.1, 0.5).unwrap();
        let s = sensing_channel(&g, &t).unwrap();
        let a2 = linalg::norm_sqr(&s.steering);
        assert_relative_eq!(s.matrix.norm(), s.amplitude * a2, max_relative = 1e-12);
        let ev = linalg::hermitian_eigenvalues(&(s.matrix.adjoint() * &s.matrix));
        assert!(ev[ev.len() - 2].abs() < 1e-12 * ev[ev.len() - 1]);
    }

    #[test]
    fn sensing_amplitude_hand_value() {
        let t = SensingTarget::new(0.0, 0.0, 10.0, 1.0).unwrap();
        assert_relative_eq!(t.amplitude(0.003), 6.734_517_079_693_747e-7, max_relative = 1e-12);
        let half = SensingTarget::new(0.0, 0.0, 0.0015, 1.0).unwrap();
        let z = Complex64::from_polar(1.0, half.phase(0.003));
        assert_relative_eq!(z.re, 1.0, epsilon = 1e-12);
        assert!(z.im.abs() < 1e-12);
    }
}
