//! Confidence intervals, t-tests, one-way ANOVA and effect sizes.

pub mod dist;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use dist::{f_cdf, f_sf, t_cdf, t_quantile, t_sf};

/// p-values below this are printed as the `<1e-300` sentinel.
pub const P_FLOOR: f64 = 1e-300;

/// Standard errors at or below this fraction of the mean difference are treated as zero.
pub const DEGENERATE_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    PairedT,
    WelchT,
    PooledT,
    Anova,
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::PairedT => "paired_t",
            TestKind::WelchT => "welch_t",
            TestKind::PooledT => "pooled_t",
            TestKind::Anova => "anova",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: f64,
    /// Denominator degrees of freedom (ANOVA only).
    pub df2: Option<f64>,
    pub p_value: f64,
    /// Cohen's d for t-tests, η² for ANOVA.
    pub effect_size: f64,
    /// Interval for the mean difference (t-tests only).
    pub ci: Option<(f64, f64)>,
    pub confidence: f64,
}

pub fn format_p(p: f64) -> String {
    if p < P_FLOOR {
        "<1e-300".to_string()
    } else {
        format!("{p:e}")
    }
}

fn need(n: usize, min: usize) -> Result<()> {
    if n < min {
        Err(Error::InsufficientSamples { needed: min, got: n })
    } else {
        Ok(())
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn check_confidence(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("confidence must lie in (0, 1), got {c}")))
    }
}

/// `mean ± t_{n−1,(1+c)/2}·s/√n`.
pub fn mean_ci(samples: &[f64], confidence: f64) -> Result<(f64, f64, f64)> {
    need(samples.len(), 2)?;
    check_confidence(confidence)?;
    let n = samples.len() as f64;
    let m = mean(samples);
    let s = variance(samples).sqrt();
    let half = t_quantile(0.5 * (1.0 + confidence), n - 1.0)? * s / n.sqrt();
    Ok((m, m - half, m + half))
}

/// Pooled-variance effect size; `±∞` when both samples are constant and differ.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    need(a.len(), 2)?;
    need(b.len(), 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0)).sqrt();
    let diff = mean(a) - mean(b);
    if pooled > 0.0 {
        Ok(diff / pooled)
    } else if diff == 0.0 {
        Ok(0.0)
    } else {
        Ok(f64::INFINITY.copysign(diff))
    }
}

/// Degenerate outcome of a t-test whose standard error vanishes.
fn degenerate(kind: TestKind, diff: f64, df: f64, effect: f64, confidence: f64) -> StatTestResult {
    let (statistic, p_value) = if diff == 0.0 {
        (0.0, 1.0)
    } else {
        (f64::INFINITY.copysign(diff), 0.0)
    };
    StatTestResult {
        kind,
        statistic,
        df,
        df2: None,
        p_value,
        effect_size: effect,
        ci: Some((diff, diff)),
        confidence,
    }
}

fn t_result(kind: TestKind, diff: f64, se: f64, df: f64, effect: f64, confidence: f64) -> Result<StatTestResult> {
    // differences that agree to rounding count as exactly constant
    if !(se > DEGENERATE_RELATIVE * diff.abs()) {
        return Ok(degenerate(kind, diff, df, effect, confidence));
    }
    let t = diff / se;
    let p = dist::t_two_sided(t, df)?;
    let q = t_quantile(0.5 * (1.0 + confidence), df)?;
    Ok(StatTestResult {
        kind,
        statistic: t,
        df,
        df2: None,
        p_value: p,
        effect_size: effect,
        ci: Some((diff - q * se, diff + q * se)),
        confidence,
    })
}

/// Paired t-test on `a − b` at 95% confidence for the interval.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<StatTestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    need(a.len(), 2)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let se = (variance(&d) / n).sqrt();
    t_result(TestKind::PairedT, mean(&d), se, n - 1.0, cohens_d(a, b)?, 0.95)
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<StatTestResult> {
    need(a.len(), 2)?;
    need(b.len(), 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let se2 = va + vb;
    let df = if se2 > 0.0 {
        se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0))
    } else {
        na + nb - 2.0
    };
    t_result(TestKind::WelchT, mean(a) - mean(b), se2.sqrt(), df, cohens_d(a, b)?, 0.95)
}

/// Student's equal-variance two-sample t-test.
pub fn pooled_t_test(a: &[f64], b: &[f64]) -> Result<StatTestResult> {
    need(a.len(), 2)?;
    need(b.len(), 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let sp2 = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / df;
    let se = (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    t_result(TestKind::PooledT, mean(a) - mean(b), se, df, cohens_d(a, b)?, 0.95)
}

/// One-way ANOVA; the effect size is η² = SS_between/SS_total.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<StatTestResult> {
    need(groups.len(), 2)?;
    for g in groups {
        need(g.len(), 2)?;
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let d1 = (k - 1) as f64;
    let d2 = (n - k) as f64;
    let total = ss_between + ss_within;
    let eta2 = if total > 0.0 { ss_between / total } else { 0.0 };
    let (f, p) = if ss_within > 0.0 {
        let f = (ss_between / d1) / (ss_within / d2);
        (f, f_sf(f, d1, d2)?)
    } else if ss_between > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(StatTestResult {
        kind: TestKind::Anova,
        statistic: f,
        df: d1,
        df2: Some(d2),
        p_value: p,
        effect_size: eta2,
        ci: None,
        confidence: 0.95,
    })
}

/// `min(1, m·p)` for each p-value.
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid("Bonferroni family size must be at least 1"));
    }
    Ok(p_values.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

/// Kolmogorov–Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_uniform(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let lo = x - i as f64 / n;
        let hi = (i + 1) as f64 / n - x;
        d.max(lo).max(hi)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn ci_constant_samples() {
        let (m, lo, hi) = mean_ci(&[3.0; 5], 0.95).unwrap();
        assert_eq!((m, lo, hi), (3.0, 3.0, 3.0));
    }

    #[test]
    fn ci_one_two_three() {
        let (m, lo, hi) = mean_ci(&[1.0, 2.0, 3.0], 0.95).unwrap();
        // t_{2,0.975} from the df=2 closed form
        let t = 0.95 * (2.0f64 / (1.0 - 0.95 * 0.95)).sqrt();
        assert!((t - 4.302_652_729_749_464).abs() < 1e-12);
        assert_eq!(m, 2.0);
        assert!((hi - m - t / 3f64.sqrt()).abs() < 1e-9);
        assert!((m - lo - t / 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ci_needs_two_samples() {
        assert!(matches!(mean_ci(&[1.0], 0.95), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn paired_ties_and_certainty() {
        let a = [1.0, 2.0, 5.0];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let r = paired_t_test(&b, &a).unwrap();
        assert_eq!(r.statistic, f64::INFINITY);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(format_p(r.p_value), "<1e-300");
    }

    #[test]
    fn paired_hand_computation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 3.0, 4.0, 6.0];
        let r = paired_t_test(&a, &b).unwrap();
        // d = (-1,-1,-1,-2): mean -1.25, s = 0.5, t = -1.25/(0.5/2) = -5
        assert!((r.statistic + 5.0).abs() < 1e-12);
        assert_eq!(r.df, 3.0);
        // two-sided p for t=5, df=3 from the closed-form df=3 CDF
        let t: f64 = 5.0;
        let th = (t / 3f64.sqrt()).atan();
        let cdf = 0.5 + (th + th.sin() * th.cos()) / std::f64::consts::PI;
        assert!((r.p_value - 2.0 * (1.0 - cdf)).abs() < 1e-12);
    }

    #[test]
    fn welch_df_formula() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let b = [2.0, 2.5, 3.0];
        let r = welch_t_test(&a, &b).unwrap();
        let (va, vb) = (variance(&a) / 4.0, variance(&b) / 3.0);
        let df = (va + vb).powi(2) / (va * va / 3.0 + vb * vb / 2.0);
        assert!((r.df - df).abs() < 1e-12);
        assert!((r.statistic - (3.5 - 2.5) / (va + vb).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn anova_two_groups_is_t_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = normals(&mut rng, 12);
        let b: Vec<f64> = normals(&mut rng, 9).iter().map(|x| x + 0.4).collect();
        let f = one_way_anova(&[a.clone(), b.clone()]).unwrap();
        let t = pooled_t_test(&a, &b).unwrap();
        assert!((f.statistic - t.statistic * t.statistic).abs() < 1e-9 * f.statistic.max(1.0));
        assert!((f.p_value - t.p_value).abs() < 1e-9);
    }

    #[test]
    fn anova_separated_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = normals(&mut rng, 10);
        let b: Vec<f64> = normals(&mut rng, 10).iter().map(|x| x + 1000.0).collect();
        let c = normals(&mut rng, 10);
        assert!(one_way_anova(&[a, b, c]).unwrap().p_value < 1e-10);
    }

    #[test]
    fn anova_degenerate_within() {
        let r = one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (f64::INFINITY, 0.0));
        let r = one_way_anova(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn anova_permutation_null_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pool = normals(&mut rng, 60);
        let ps: Vec<f64> = (0..1000)
            .map(|_| {
                pool.shuffle(&mut rng);
                let groups: Vec<Vec<f64>> = pool.chunks(20).map(<[f64]>::to_vec).collect();
                one_way_anova(&groups).unwrap().p_value
            })
            .collect();
        assert!(ks_uniform(&ps) < 0.05);
    }

    #[test]
    fn paired_null_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ps: Vec<f64> = (0..1000)
            .map(|_| {
                let a = normals(&mut rng, 50);
                let b = normals(&mut rng, 50);
                paired_t_test(&a, &b).unwrap().p_value
            })
            .collect();
        assert!(ks_uniform(&ps) < 0.05);
    }

    #[test]
    fn cohens_d_cases() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(cohens_d(&a, &a).unwrap(), 0.0);
        let b = [2.0, 3.0, 4.0];
        // pooled sd = 1, means differ by 1
        assert!((cohens_d(&b, &a).unwrap() - 1.0).abs() < 1e-15);
        // hand arithmetic: means 5 and 3, variances 2.5 and 1, pooled sqrt((4·2.5+4·1)/8)
        let x = [3.0, 4.0, 5.0, 6.0, 7.0];
        let y = [2.0, 2.0, 3.0, 4.0, 4.0];
        let want = 2.0 / (14.0f64 / 8.0).sqrt();
        assert!((cohens_d(&x, &y).unwrap() - want).abs() < 1e-12);
        assert_eq!(cohens_d(&[2.0, 2.0], &[1.0, 1.0]).unwrap(), f64::INFINITY);
        assert_eq!(cohens_d(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn bonferroni_cases() {
        assert_eq!(bonferroni(&[0.01, 0.5], 3).unwrap(), vec![0.03, 1.0]);
        assert_eq!(bonferroni(&[0.2], 1).unwrap(), vec![0.2]);
        assert!(bonferroni(&[0.2], 0).is_err());
    }

    proptest! {
        #[test]
        fn p_values_in_unit_interval(a in prop::collection::vec(-1e3f64..1e3, 2..20), shift in -5.0f64..5.0) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x + shift + (i as f64).sin()).collect();
            for r in [paired_t_test(&a, &b).unwrap(), welch_t_test(&a, &b).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&r.p_value));
                let (lo, hi) = r.ci.unwrap();
                prop_assert!(lo <= hi);
            }
        }

        #[test]
        fn wider_confidence_contains_narrower(a in prop::collection::vec(-100f64..100.0, 2..30)) {
            let (_, lo95, hi95) = mean_ci(&a, 0.95).unwrap();
            let (_, lo99, hi99) = mean_ci(&a, 0.99).unwrap();
            prop_assert!(lo99 <= lo95 && hi95 <= hi99);
        }

        #[test]
        fn constant_shift_is_certain(a in prop::collection::vec(-10f64..10.0, 2..20), c in 0.5f64..10.0) {
            let b: Vec<f64> = a.iter().map(|x| x + c).collect();
            let r = paired_t_test(&b, &a).unwrap();
            prop_assert_eq!(r.p_value, 0.0);
            prop_assert_eq!(r.statistic, f64::INFINITY);
        }
    }
}
