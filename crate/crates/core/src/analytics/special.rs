//! Special functions behind the t distribution.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
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
    for m in 1..=CF_MAX_ITER {
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
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn betainc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    // the fraction converges fastest below the mean of the distribution
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Lower tail `P(T <= -|t|)` of Student's t with `df` degrees of freedom.
fn lower_tail(t: f64, df: f64) -> f64 {
    let t2 = t * t;
    // I_{df/(df+t²)}(df/2, 1/2), computed on whichever side keeps precision
    let tail = if t2 < df {
        1.0 - betainc(0.5, 0.5 * df, t2 / (df + t2))
    } else {
        betainc(0.5 * df, 0.5, df / (df + t2))
    };
    0.5 * tail
}

/// CDF of Student's t distribution.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t.is_nan() {
        return f64::NAN;
    }
    if t == 0.0 {
        return 0.5;
    }
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    let lo = lower_tail(t, df);
    if t < 0.0 {
        lo
    } else {
        1.0 - lo
    }
}

/// Upper tail `P(T > t)`, accurate for large `t`.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    student_t_cdf(-t, df)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_at_integers() {
        for (n, fact) in [(1.0, 1.0f64), (2.0, 1.0), (5.0, 24.0), (10.0, 362_880.0)] {
            assert!((ln_gamma(n) - fact.ln()).abs() < 1e-12);
        }
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn betainc_closed_forms() {
        // I_x(1, 1) = x ; I_x(a, 1) = x^a
        for x in [0.1, 0.37, 0.9] {
            assert!((betainc(1.0, 1.0, x) - x).abs() < 1e-14);
            assert!((betainc(3.0, 1.0, x) - x.powi(3)).abs() < 1e-14);
        }
    }

    #[test]
    fn t_cdf_landmarks() {
        assert_eq!(student_t_cdf(0.0, 3.0), 0.5);
        assert_eq!(student_t_cdf(f64::INFINITY, 3.0), 1.0);
        assert!((student_t_cdf(2.086, 20.0) - 0.975).abs() < 1e-3);
        // df = 1 is Cauchy: F(t) = 1/2 + atan(t)/pi
        for t in [-7.0, -1.0, 0.3, 4.0] {
            let cauchy = 0.5 + f64::atan(t) / PI;
            assert!((student_t_cdf(t, 1.0) - cauchy).abs() < 1e-13);
        }
        // df = 2: F(t) = 1/2 + t / (2 sqrt(2 + t²))
        for t in [-3.0f64, 0.5, 12.0] {
            let exact = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((student_t_cdf(t, 2.0) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetry_identity() {
        for df in [1.0, 2.5, 7.0, 69.0, 520.0, 1e5] {
            for t in [0.01, 0.5, 1.7, 3.3, 10.0, 40.0] {
                let s = student_t_cdf(t, df) + student_t_cdf(-t, df);
                assert!((s - 1.0).abs() <= 1e-10, "df={df} t={t} sum={s}");
            }
        }
    }
}
