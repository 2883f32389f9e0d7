//! Scalar kernels: Gaussian tail and its inverse, regularized incomplete
//! gamma functions, and the binomial mass in log domain.
//!
//! Everything here is pure and reentrant.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::{Error, Result};

/// Switch point between the erfc route and the continued-fraction tail.
const TAIL_SWITCH: f64 = 8.0;
/// Depth of the backward Laplace continued fraction for `x > TAIL_SWITCH`.
const TAIL_CF_TERMS: usize = 80;
const GAMMA_MAX_ITER: usize = 100_000;
const GAMMA_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// Standard Gaussian upper tail `Q(x) = P(Z > x)`.
///
/// Saturates to 0 / 1 beyond the range of `f64`.
pub fn q_function(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > TAIL_SWITCH {
        upper_tail_cf(x)
    } else if x < -TAIL_SWITCH {
        1.0 - upper_tail_cf(-x)
    } else {
        0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    }
}

/// `ln Q(x)`, finite well past the point where `Q(x)` underflows.
pub fn ln_q_function(x: f64) -> f64 {
    if x > TAIL_SWITCH {
        ln_upper_tail_cf(x)
    } else {
        q_function(x).ln()
    }
}

fn tail_cf_denominator(x: f64) -> f64 {
    // Q(x) = phi(x) / (x + 1/(x + 2/(x + 3/(x + ...))))
    let mut t = 0.0;
    for k in (1..=TAIL_CF_TERMS).rev() {
        t = k as f64 / (x + t);
    }
    x + t
}

fn ln_upper_tail_cf(x: f64) -> f64 {
    if x.is_infinite() {
        return f64::NEG_INFINITY;
    }
    -0.5 * x * x - 0.5 * (2.0 * PI).ln() - tail_cf_denominator(x).ln()
}

fn upper_tail_cf(x: f64) -> f64 {
    ln_upper_tail_cf(x).exp()
}

/// Inverse of [`q_function`] on the open interval (0, 1).
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("q_inverse needs p in (0,1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Q(x) = Phi(-x); start from Acklam's rational approximation of Phi^-1.
    let mut x = -acklam_normal_quantile(p);
    for _ in 0..4 {
        let e = q_function(x) - p;
        if e == 0.0 {
            break;
        }
        let phi = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        if phi == 0.0 {
            break;
        }
        let u = e / phi;
        // Halley step for f(x) = Q(x) - p.
        x += u / (1.0 - 0.5 * x * u);
    }
    Ok(x)
}

fn acklam_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Regularized lower incomplete gamma `P(a, x) = γ(a, x) / Γ(a)`, the CDF of a
/// unit-scale Gamma(a) variate at `x`.
pub fn reg_lower_gamma(shape: f64, x: f64) -> f64 {
    reg_gamma_pair(shape, x).0
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn reg_upper_gamma(shape: f64, x: f64) -> f64 {
    reg_gamma_pair(shape, x).1
}

/// Both halves at once. The smaller one is computed directly so that neither
/// side loses relative accuracy to cancellation.
pub fn reg_gamma_pair(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let ln_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let p = (ln_prefactor + lower_series(a, x).ln()).exp();
        (p, 1.0 - p)
    } else {
        let q = (ln_prefactor + upper_cf(a, x).ln()).exp();
        (1.0 - q, q)
    }
}

/// Σ x^n / (a (a+1) ... (a+n)), so that γ(a,x) = x^a e^-x · series.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum
}

/// Modified Lentz evaluation of the continued fraction for Γ(a,x) / (x^a e^-x).
fn upper_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    h
}

/// `ln[C(n,k) p^k (1-p)^(n-k)]`, with exact handling of `p ∈ {0, 1}`.
pub fn log_binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (nf, kf) = (n as f64, k as f64);
    ln_binomial_coefficient(n, k) + kf * p.ln() + (nf - kf) * (-p).ln_1p()
}

/// ln C(n, k).
pub fn ln_binomial_coefficient(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    if k < 30 {
        // short products are more accurate than a difference of large lgammas
        let mut acc = 0.0;
        for i in 0..k {
            acc += ((n - i) as f64 / (i + 1) as f64).ln();
        }
        return acc;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Gamma(shape, scale) density at `x`.
pub fn gamma_pdf(shape: f64, scale: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if shape == 1.0 {
            1.0 / scale
        } else if shape < 1.0 {
            f64::INFINITY
        } else {
            0.0
        };
    }
    ((shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()).exp()
}

/// Upper quantile of a unit-scale Gamma(shape): the `x` with `Q(shape, x) = tail`.
pub fn gamma_upper_quantile(shape: f64, tail: f64) -> f64 {
    let mut hi = shape + 10.0 * shape.sqrt() + 10.0;
    while reg_upper_gamma(shape, hi) > tail {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reg_upper_gamma(shape, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    hi
}
