//! Small statistics toolkit: moments, Pearson correlation, paired t-tests and
//! the Student t distribution via the regularized incomplete beta function.

use serde::Serialize;

use crate::error::StatsError;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_err(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of a difference of two independent means.
pub fn pooled_se(se_a: f64, se_b: f64) -> f64 {
    (se_a * se_a + se_b * se_b).sqrt()
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
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
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * reg_inc_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value of a t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided, from the t transform with `n - 2` degrees of freedom.
    pub p: f64,
    pub n: usize,
}

pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<Correlation, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::Length(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(StatsError::TooFew { needed: 3, got: n });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 { 0.0 } else { t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df) };
    Ok(Correlation { r, p, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
    /// One-sided p for the alternative `mean(xs - ys) > 0`.
    pub p_greater: f64,
    /// One-sided p for the alternative `mean(xs - ys) < 0`.
    pub p_less: f64,
}

pub fn paired_t(xs: &[f64], ys: &[f64]) -> Result<TTest, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::Length(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let diffs: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let sd = variance(&diffs).sqrt();
    if sd == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = mean(&diffs) / (sd / (n as f64).sqrt());
    let df = (n - 1) as f64;
    let cdf = student_t_cdf(t, df);
    Ok(TTest { t, df, p_two_sided: t_two_sided_p(t, df), p_greater: 1.0 - cdf, p_less: cdf })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_examples() {
        let c = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((c.r - 0.981_980_506_061_965_7).abs() < 1e-12);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().r, 1.0);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap().r, -1.0);
        assert_eq!(pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::ZeroVariance));
    }

    #[test]
    fn paired_examples() {
        let t = paired_t(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((t.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((t.p_greater + t.p_less - 1.0).abs() < 1e-12);
        assert!((t.p_two_sided - 2.0 * t.p_greater).abs() < 1e-12);
        assert_eq!(paired_t(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::ZeroVariance));
        assert_eq!(paired_t(&[3.0, 4.0, 5.0], &[1.0, 2.0, 3.0]), Err(StatsError::ZeroVariance));
    }

    #[test]
    fn tabulated_critical_values() {
        // two-sided 5% critical values of Student's t
        for (t, df) in [(12.706_204_736, 1.0), (2.228_138_852, 10.0), (1.983_971_519, 100.0)] {
            assert!((t_two_sided_p(t, df) - 0.05).abs() < 1e-8, "df {df}");
        }
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((reg_inc_beta(2.0, 3.0, 0.4) - 0.5248).abs() < 1e-12);
    }
}
