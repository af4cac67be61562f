//! Student t and Fisher F distributions via the regularized incomplete beta.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const MAX_ITERS: usize = 500;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Continued fraction for `I_x(a, b)` (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITERS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::numerical(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// `I_x(a, b)` given both `x` and `y = 1 − x`, so callers can pass an
/// accurately computed complement.
pub fn beta_reg_pair(a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!("beta parameters must be positive, got ({a}, {b})")));
    }
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::invalid(format!("beta argument outside [0, 1]: {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, y)? / b)
    }
}

pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    beta_reg_pair(a, b, x, 1.0 - x)
}

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("degrees of freedom must be positive, got {df}")))
    }
}

/// Upper tail `P(T > x)` of Student's t.
pub fn t_sf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x.is_nan() {
        return Err(Error::invalid("t statistic is NaN"));
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    if x == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    let x2 = x * x;
    let tail = 0.5 * beta_reg_pair(0.5 * df, 0.5, df / (df + x2), x2 / (df + x2))?;
    Ok(if x >= 0.0 { tail } else { 1.0 - tail })
}

pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x == 0.0 {
        return Ok(0.5);
    }
    t_sf(-x, df)
}

/// Two-sided p-value `P(|T| ≥ |t|)`.
pub fn t_two_sided(t: f64, df: f64) -> Result<f64> {
    Ok((2.0 * t_sf(t.abs(), df)?).min(1.0))
}

/// Quantile of Student's t by bisection on [`t_cdf`].
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while t_cdf(hi, df)? < p.max(1.0 - p) {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::SearchFailure("t quantile bracket overflow".into()));
        }
    }
    let (mut lo, mut up) = (0.0, hi);
    let target = p.max(1.0 - p);
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if t_cdf(mid, df)? < target {
            lo = mid;
        } else {
            up = mid;
        }
        if up - lo <= 1e-15 * up {
            break;
        }
    }
    let q = 0.5 * (lo + up);
    Ok(if p > 0.5 { q } else { -q })
}

pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_df(d1)?;
    check_df(d2)?;
    if x.is_nan() {
        return Err(Error::invalid("F statistic is NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let s = d1 * x + d2;
    beta_reg_pair(0.5 * d1, 0.5 * d2, d1 * x / s, d2 / s)
}

/// Upper tail `P(F > x)`.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_df(d1)?;
    check_df(d2)?;
    if x.is_nan() {
        return Err(Error::invalid("F statistic is NaN"));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    let s = d1 * x + d2;
    beta_reg_pair(0.5 * d2, 0.5 * d1, d2 / s, d1 * x / s)
}
