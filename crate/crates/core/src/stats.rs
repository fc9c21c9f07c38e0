//! Statistical primitives behind the maliciousness scorers: Poisson pmf and
//! two-sided tails, Gaussian density and tails, Beta density and the
//! regularized incomplete Beta function.
//!
//! Everything here is plain f64 with classical algorithms (Lanczos log-gamma,
//! incomplete-gamma series/continued fraction, incomplete-beta continued
//! fraction). The acceptance suite checks each function against independent
//! brute-force oracles (series summation, adaptive quadrature).

const MAX_ITER: usize = 500;
const EPS: f64 = 1e-15;

/// Lanczos g=7, n=9 coefficients.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the Gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x), by series expansion.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = a;
    for _ in 0..MAX_ITER {
        n += 1.0;
        term *= x / n;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x), by Lentz continued fraction.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p domain: a > 0, x >= 0");
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0");
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Complementary error function via the incomplete gamma route.
pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        2.0 - erfc(-x)
    }
}

// ---------------------------------------------------------------------------
// Poisson
// ---------------------------------------------------------------------------

/// Poisson pmf, evaluated in log space to dodge factorial overflow.
pub fn poisson_pmf(count: u64, lambda: f64) -> f64 {
    assert!(lambda > 0.0, "poisson_pmf requires lambda > 0");
    let k = count as f64;
    (k * lambda.ln() - lambda - ln_gamma(k + 1.0)).exp()
}

/// Two-sided Poisson tail: P(|X - lambda| >= |count - lambda|) by exact pmf
/// summation. The observed count always belongs to the tail set.
pub fn poisson_two_sided_tail(count: u64, lambda: f64) -> f64 {
    assert!(lambda > 0.0, "poisson tail requires lambda > 0");
    let k = count as f64;
    // Mirror point 2*lambda - k, built so `count` lands exactly on its own
    // side of the split.
    let mirror = 2.0 * lambda - k;
    let (lower_end, upper_start) = if k >= lambda {
        (mirror.floor(), k)
    } else {
        (k, mirror.ceil())
    };

    let mut tail = 0.0;
    if lower_end >= 0.0 {
        let end = lower_end as u64;
        let mut term = (-lambda).exp();
        // Iterate pmf(0..=end) by the recurrence pmf(k) = pmf(k-1) * λ/k.
        for i in 0..=end {
            if i > 0 {
                term *= lambda / i as f64;
            }
            tail += term;
        }
    }
    {
        let start = upper_start.max(0.0) as u64;
        let mut term = poisson_pmf(start, lambda);
        let mut i = start;
        loop {
            tail += term;
            i += 1;
            term *= lambda / i as f64;
            if i as f64 > lambda && term < EPS * tail.max(1e-12) {
                break;
            }
        }
    }
    tail.min(1.0)
}

// ---------------------------------------------------------------------------
// Gaussian
// ---------------------------------------------------------------------------

/// Normal density with mean `mu` and variance `var`.
pub fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    assert!(var > 0.0, "normal_pdf requires var > 0");
    let z = x - mu;
    (-z * z / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Two-sided Gaussian tail 2*(1 - Phi(|z|)) for z = (x - mu)/sigma.
pub fn normal_two_sided_tail(x: f64, mu: f64, var: f64) -> f64 {
    assert!(var > 0.0, "normal tail requires var > 0");
    let z = (x - mu).abs() / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Beta
// ---------------------------------------------------------------------------

/// Natural log of the Beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Beta density at x in (0,1).
pub fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta_pdf requires a, b > 0");
    assert!(x > 0.0 && x < 1.0, "beta_pdf requires x in (0,1)");
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp()
}

/// Continued fraction for the incomplete beta (Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let tiny = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete Beta I_x(a, b).
pub fn inc_beta_reg(x: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "inc_beta_reg requires a, b > 0");
    assert!((0.0..=1.0).contains(&x), "inc_beta_reg requires x in [0,1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// Mode of a Beta(a, b), with the degenerate shapes pinned to a sensible
/// reference point for tail-mass scoring.
pub fn beta_mode(a: f64, b: f64) -> f64 {
    if a > 1.0 && b > 1.0 {
        (a - 1.0) / (a + b - 2.0)
    } else if a <= 1.0 && b > 1.0 {
        0.0
    } else if a > 1.0 && b <= 1.0 {
        1.0
    } else {
        // Uniform or bathtub-shaped: fall back to the mean.
        a / (a + b)
    }
}

/// Two-sided Beta tail mass P(|X - mode| >= |r - mode|).
pub fn beta_two_sided_tail(r: f64, a: f64, b: f64) -> f64 {
    let mode = beta_mode(a, b);
    let d = (r - mode).abs();
    let mut tail = 0.0;
    let lo = mode - d;
    if lo > 0.0 {
        tail += inc_beta_reg(lo, a, b);
    }
    let hi = mode + d;
    if hi < 1.0 {
        tail += 1.0 - inc_beta_reg(hi, a, b);
    }
    tail.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        // Γ(1) = Γ(2) = 1, Γ(5) = 24, Γ(0.5) = sqrt(pi)
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!(ln_gamma(2.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn poisson_pmf_closed_form() {
        // λ=2, k=2: 2^2 e^-2 / 2! = 2 e^-2
        let expected = 2.0 * (-2.0f64).exp();
        assert!((poisson_pmf(2, 2.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn poisson_tail_includes_observation_and_caps_at_one() {
        // count at the mode: essentially the whole mass qualifies.
        let t = poisson_two_sided_tail(2, 2.0);
        assert!(t > 0.5 && t <= 1.0);
        // Far count: tiny tail.
        let t = poisson_two_sided_tail(20, 1.0);
        assert!(t < 1e-6);
    }

    #[test]
    fn erfc_reference_points() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-14);
        // erfc(1) = 0.15729920705028513...
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-12);
        assert!((erfc(-1.0) - (2.0 - 0.157_299_207_050_285_13)).abs() < 1e-12);
    }

    #[test]
    fn normal_density_peak_is_one_at_var_inv_two_pi() {
        let var = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((normal_pdf(3.0, 3.0, var) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normal_two_sided_tail_quantiles() {
        // |z| = 1.959964 leaves 5% outside.
        let t = normal_two_sided_tail(1.959_964, 0.0, 1.0);
        assert!((t - 0.05).abs() < 1e-5);
        // 3σ leaves 0.26998% outside.
        let t = normal_two_sided_tail(3.0, 0.0, 1.0);
        assert!((t - 0.002_699_796_063).abs() < 1e-9);
    }

    #[test]
    fn beta_uniform_density_is_one() {
        for x in [0.1, 0.4, 0.9] {
            assert!((beta_pdf(x, 1.0, 1.0) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn inc_beta_symmetric_midpoint() {
        assert!((inc_beta_reg(0.5, 2.0, 2.0) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn beta_tail_is_zero_at_mode() {
        let t = beta_two_sided_tail(beta_mode(3.0, 5.0), 3.0, 5.0);
        assert!((t - 1.0).abs() < 1e-9, "full mass qualifies at the mode, got {t}");
    }
}
