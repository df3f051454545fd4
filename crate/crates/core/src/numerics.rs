//! Scalar special functions: normal and chi-square tails, the folded-normal
//! moments, and the Benjamini–Hochberg step-up cutoff.
//!
//! Everything here is a pure function of its arguments.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{invalid, Error, Result};

/// ln √(2π)
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Relative stopping tolerance of the incomplete-gamma series and continued fraction.
const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 100_000;

/// A value in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(invalid(format!("probability {value} outside [0, 1]")))
        }
    }

    /// Clamp a computed value into `[0, 1]`, absorbing last-bit rounding.
    pub(crate) fn saturating(value: f64) -> Self {
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Self(1.0 - self.0)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

/// Standard normal density φ(x).
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Upper tail P(Z > x) of the standard normal.
pub fn std_normal_sf(x: f64) -> Probability {
    Probability::saturating(0.5 * libm::erfc(x * FRAC_1_SQRT_2))
}

/// Lower tail Φ(x) = P(Z ≤ x).
pub fn std_normal_cdf(x: f64) -> Probability {
    std_normal_sf(-x)
}

/// lnΓ(a) − [(a − ½) ln a − a + ln √(2π)], the Stirling remainder.
fn stirling_remainder(a: f64) -> f64 {
    if a > 15.0 {
        let inv = 1.0 / a;
        let inv2 = inv * inv;
        inv * (1.0 / 12.0
            - inv2
                * (1.0 / 360.0
                    - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))))
    } else {
        libm::lgamma(a) - ((a - 0.5) * a.ln() - a + LN_SQRT_2PI)
    }
}

/// t − 1 − ln t evaluated at t = 1 + u without cancellation for small u.
fn log1p_gap(u: f64) -> f64 {
    if u.abs() < 0.1 {
        // u²/2 − u³/3 + u⁴/4 − …
        let mut sum = 0.0;
        let mut power = u * u;
        let mut k = 2.0;
        loop {
            let term = power / k;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
            power *= -u;
            k += 1.0;
        }
        sum
    } else {
        u - u.ln_1p()
    }
}

/// ln[x^a e^{−x} / Γ(a)], arranged so large `a` with `x ≈ a` keeps full precision.
fn ln_gamma_prefactor(a: f64, x: f64) -> f64 {
    let u = (x - a) / a;
    -a * log1p_gap(u) + 0.5 * a.ln() - LN_SQRT_2PI - stirling_remainder(a)
}

/// Regularized incomplete gamma pair (P(a, x), Q(a, x)).
///
/// The series branch (x < a + 1) computes P directly and the continued
/// fraction branch computes Q directly, so the smaller of the two is the
/// accurate one.
pub(crate) fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let prefactor = ln_gamma_prefactor(a, x).exp();
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..GAMMA_MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term < sum * GAMMA_EPS {
                break;
            }
        }
        let p = (sum * prefactor).min(1.0);
        (p, 1.0 - p)
    } else {
        // Modified Lentz evaluation of the Legendre continued fraction.
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let fi = i as f64;
            let an = -fi * (fi - a);
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
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        let q = (prefactor * h).min(1.0);
        (1.0 - q, q)
    }
}

/// Survival function P(χ²_dof > x).
pub fn chisq_sf(x: f64, dof: u32) -> Result<Probability> {
    check_chisq_args(x, dof)?;
    Ok(Probability::saturating(
        regularized_gamma(0.5 * dof as f64, 0.5 * x).1,
    ))
}

/// Distribution function P(χ²_dof ≤ x).
pub fn chisq_cdf(x: f64, dof: u32) -> Result<Probability> {
    check_chisq_args(x, dof)?;
    Ok(Probability::saturating(
        regularized_gamma(0.5 * dof as f64, 0.5 * x).0,
    ))
}

fn check_chisq_args(x: f64, dof: u32) -> Result<()> {
    if dof == 0 {
        return Err(invalid("chi-square degrees of freedom must be at least 1"));
    }
    if x.is_nan() || x < 0.0 {
        return Err(invalid(format!("chi-square argument {x} must be nonnegative")));
    }
    Ok(())
}

/// Survival function of the noncentral chi-square, P(χ²_dof(λ) > x).
///
/// Sums Poisson(λ/2)-weighted central tails outward from the Poisson mode
/// until the neglected weight is below 1e-14 of the accumulated sum.
pub fn noncentral_chisq_sf(x: f64, dof: u32, noncentrality: f64) -> Result<Probability> {
    check_chisq_args(x, dof)?;
    if !(noncentrality >= 0.0) || !noncentrality.is_finite() {
        return Err(invalid(format!(
            "noncentrality {noncentrality} must be finite and nonnegative"
        )));
    }
    if noncentrality == 0.0 {
        return chisq_sf(x, dof);
    }
    let half_lambda = 0.5 * noncentrality;
    let half_x = 0.5 * x;
    let base = 0.5 * dof as f64;
    let log_weight =
        |j: f64| -half_lambda + j * half_lambda.ln() - libm::lgamma(j + 1.0);
    let mode = half_lambda.floor();

    let mut total = 0.0;
    // Upward from the mode, including it.
    let mut j = mode;
    loop {
        let w = log_weight(j).exp();
        let tail = regularized_gamma(base + j, half_x).1;
        total += w * tail;
        // Tails increase with j, so the neglected upper mass bounds the error.
        if w < 1e-16 && j > mode + 1.0 {
            break;
        }
        j += 1.0;
        if j > mode + 1e7 {
            break;
        }
    }
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let w = log_weight(j).exp();
        let tail = regularized_gamma(base + j, half_x).1;
        let contribution = w * tail;
        total += contribution;
        if w < 1e-16 || contribution < 1e-14 * total {
            break;
        }
        j -= 1.0;
    }
    Ok(Probability::saturating(total))
}

/// Folded-normal mean u(h) = E|Z + h| for Z ~ N(0, 1).
pub fn folded_mean(h: f64) -> Result<f64> {
    check_shift(h)?;
    Ok((2.0 / PI).sqrt() * (-0.5 * h * h).exp() + h * (1.0 - 2.0 * std_normal_sf(h).value()))
}

/// Folded-normal variance σ²(h) = 1 + h² − u(h)².
pub fn folded_var(h: f64) -> Result<f64> {
    let u = folded_mean(h)?;
    Ok(1.0 + h * h - u * u)
}

fn check_shift(h: f64) -> Result<()> {
    if h.is_nan() || h < 0.0 {
        Err(invalid(format!("folded-normal shift {h} must be nonnegative")))
    } else {
        Ok(())
    }
}

/// Benjamini–Hochberg step-up cutoff: the largest k with p₍ₖ₎ ≤ k·level/m,
/// or 0 when no p-value passes. Ties keep their input order.
pub fn bh_threshold(pvalues: &[f64], fdr_level: f64) -> Result<usize> {
    if pvalues.is_empty() {
        return Err(invalid("BH needs at least one p-value"));
    }
    if !(fdr_level > 0.0 && fdr_level < 1.0) {
        return Err(invalid(format!("FDR level {fdr_level} must lie in (0, 1)")));
    }
    if let Some(bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("p-value {bad} outside [0, 1]")));
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .filter(|&(i, &p)| p <= (i + 1) as f64 * fdr_level / m)
        .map(|(i, _)| i + 1)
        .last()
        .unwrap_or(0))
}
