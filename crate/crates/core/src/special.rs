//! Median of the Gamma distribution and its derivative in the shape.
//!
//! The median has no closed form. `gamma_median(k)` solves P(k, x) = 1/2 for
//! the regularized lower incomplete gamma P by bracketing and bisection; the
//! shape derivative follows from implicit differentiation,
//! dQ/dk = -(dP/dk) / (dP/dx).

use statrs::function::gamma::{digamma, ln_gamma};

const REL_TOL: f64 = 1e-12;

/// Series for the regularized lower incomplete gamma and its shape derivative:
/// P = sum_n t_n, t_n = x^(k+n) e^(-x) / Gamma(k+n+1),
/// dP/dk = sum_n t_n (ln x - psi(k+n+1)).
fn lower_series(k: f64, x: f64) -> (f64, f64) {
    let ln_x = x.ln();
    let mut t = (k * ln_x - x - ln_gamma(k + 1.0)).exp();
    let mut psi = digamma(k + 1.0);
    let mut p = 0.0;
    let mut dp = 0.0;
    let mut n = 0.0;
    loop {
        p += t;
        dp += t * (ln_x - psi);
        n += 1.0;
        psi += 1.0 / (k + n);
        t *= x / (k + n);
        if t < 1e-17 * p && n > x - k {
            break;
        }
        if n > 100_000.0 {
            break;
        }
    }
    (p, dp)
}

/// Regularized lower incomplete gamma P(k, x).
pub fn gamma_p(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        lower_series(k, x).0
    }
}

/// Median of Gamma(shape k, rate 1).
pub fn gamma_median(k: f64) -> f64 {
    assert!(k > 0.0 && k.is_finite(), "gamma shape must be positive, got {k}");
    // k - 1/3 is close for k >= 1; bracket outward from it
    let guess = (k - 1.0 / 3.0).max(1e-3);
    let mut lo = guess;
    let mut hi = guess;
    while gamma_p(k, lo) > 0.5 {
        lo *= 0.5;
    }
    while gamma_p(k, hi) < 0.5 {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if gamma_p(k, mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= REL_TOL * hi * 0.5 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Median of Gamma(k, 1) and its derivative with respect to k.
pub fn gamma_median_with_grad(k: f64) -> (f64, f64) {
    let q = gamma_median(k);
    let (_, dp_dk) = lower_series(k, q);
    let ln_density = (k - 1.0) * q.ln() - q - ln_gamma(k);
    (q, -dp_dk / ln_density.exp())
}
