//! Small special-function helpers shared by the distribution layer.

/// Error function to near machine precision: Maclaurin series for small
/// arguments, Lentz-evaluated continued fraction for erfc beyond.
pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 2.5 {
        erf_series(x)
    } else {
        let tail = erfc_cf(ax);
        let value = 1.0 - tail;
        if x < 0.0 {
            -value
        } else {
            value
        }
    }
}

fn erf_series(x: f64) -> f64 {
    // 2/sqrt(pi) * sum (-1)^n x^{2n+1} / (n! (2n+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x2 / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// erfc(x) for x >= 2.5 via the continued fraction
/// erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...)))).
fn erfc_cf(x: f64) -> f64 {
    if x > 27.0 {
        return 0.0; // below f64 underflow of exp(-x^2)
    }
    let tiny = 1e-300;
    let mut f = x.max(tiny);
    let mut c = f;
    let mut d = 0.0f64;
    for k in 1..300 {
        let a = k as f64 / 2.0;
        // continued fraction step: b = x, a_k = k/2
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * f)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Kolmogorov survival function Q(lambda) = 2 sum_{j>=1} (-1)^{j-1}
/// exp(-2 j^2 lambda^2); the asymptotic KS p-value.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// (2q - 1)!! with the empty product for q = 0.
pub fn double_factorial_odd(q: u32) -> f64 {
    (0..q).map(|k| (2 * k + 1) as f64).product()
}
