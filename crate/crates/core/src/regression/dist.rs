//! Tail probabilities for t and normal statistics.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

const MAX_ITER: usize = 500;
const EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;

/// Continued fraction for the incomplete beta function (modified Lentz).
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
    for m in 1..=MAX_ITER {
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

/// Regularized incomplete beta function I_x(a, b).
pub fn betainc(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "betainc requires positive shape parameters");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
pub fn t_two_sided(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    betainc(dof / 2.0, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Upper critical value t such that the two-sided p-value equals `alpha`.
pub fn t_critical(alpha: f64, dof: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while t_two_sided(hi, dof) > alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_two_sided(mid, dof) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn betainc_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a; I_x(1, b) = 1 - (1-x)^b
        for x in [0.05, 0.3, 0.5, 0.77, 0.99] {
            assert_abs_diff_eq!(betainc(1.0, 1.0, x), x, epsilon = 1e-14);
            assert_abs_diff_eq!(betainc(3.5, 1.0, x), x.powf(3.5), epsilon = 1e-13);
            assert_abs_diff_eq!(betainc(1.0, 2.5, x), 1.0 - (1.0 - x).powf(2.5), epsilon = 1e-13);
        }
        assert_eq!(betainc(2.0, 3.0, 0.0), 0.0);
        assert_eq!(betainc(2.0, 3.0, 1.0), 1.0);
    }

    #[test]
    fn t_matches_reference_distribution() {
        for dof in [1.0, 2.0, 5.0, 30.0, 992.0, 250_000.0] {
            let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
            for t in [0.0, 0.1, 0.7, 1.5, 1.96, 3.0, 6.0] {
                let want = 2.0 * dist.cdf(-t);
                assert_abs_diff_eq!(t_two_sided(t, dof), want, epsilon = 1e-10);
                assert_abs_diff_eq!(t_two_sided(-t, dof), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cauchy_and_normal_limits() {
        // one degree of freedom is Cauchy: p = 1 - 2 atan(t) / pi
        assert_abs_diff_eq!(t_two_sided(1.0, 1.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_two_sided(1.959963984540054), 0.05, epsilon = 1e-10);
        assert_abs_diff_eq!(t_two_sided(1.959963984540054, 1e7), 0.05, epsilon = 1e-6);
        assert_abs_diff_eq!(t_critical(0.05, 1e7), 1.959963984540054, epsilon = 1e-5);
        assert_abs_diff_eq!(t_critical(0.05, 10.0), 2.2281388519649385, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn p_decreases_with_abs_t(a in 0.0f64..20.0, b in 0.0f64..20.0, dof in 1.0f64..5000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(t_two_sided(hi, dof) <= t_two_sided(lo, dof) + 1e-15);
        }
    }
}
