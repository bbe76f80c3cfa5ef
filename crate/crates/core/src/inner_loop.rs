//! Inertial Krasnoselskii-Mann inner loop.
//!
//! Starting from `v_1 = v_0`, each step computes
//!
//! ```text
//! z_k     = v_k + tau (v_k - v_{k-1})
//! v_{k+1} = (1 - theta) z_k + theta T(z_k)
//! ```
//!
//! and stops at the first `k` with `||v_{k+1} - z_k|| <= epsilon`.

use crate::encodings::Encoding;
use crate::error::{invalid, Error, Result};
use crate::vectorspace::Point;

/// Iteration cap used when no a priori bound is available.
pub const FALLBACK_HARD_CAP: usize = 1_000_000;

/// Anything `km_solve` can iterate.
pub trait FixedPointMap {
    fn apply_map(&self, z: &Point) -> Result<Point>;
}

impl FixedPointMap for Encoding {
    fn apply_map(&self, z: &Point) -> Result<Point> {
        self.apply(z)
    }
}

impl<F> FixedPointMap for F
where
    F: Fn(&Point) -> Point,
{
    fn apply_map(&self, z: &Point) -> Result<Point> {
        Ok(self(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmParams {
    pub tau: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub hard_cap: usize,
}

impl KmParams {
    pub fn check(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(invalid(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.hard_cap == 0 {
            return Err(invalid("hard_cap must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmResult {
    pub v_final: Point,
    /// `K(epsilon)`, the number of `(z_k, v_{k+1})` pairs computed.
    pub iterations: usize,
    pub stopped_by_criterion: bool,
    /// Last `||v_{k+1} - z_k||`.
    pub residual: f64,
    /// `||v_{k+1} - z_k||` for every step.
    pub residuals: Vec<f64>,
}

pub fn km_solve<T: FixedPointMap + ?Sized>(v0: &Point, map: &T, params: &KmParams) -> Result<KmResult> {
    params.check()?;
    let KmParams {
        tau,
        theta,
        epsilon,
        hard_cap,
    } = *params;
    let mut prev = v0.clone();
    let mut cur = v0.clone();
    let mut residuals = Vec::new();
    for k in 1..=hard_cap {
        let z = if tau == 0.0 {
            cur.clone()
        } else {
            cur.lincomb(1.0 + tau, -tau, &prev)
        };
        let next = z.lincomb(1.0 - theta, theta, &map.apply_map(&z)?);
        let residual = next.dist(&z);
        if !residual.is_finite() {
            return Err(Error::NonFinite("inner loop"));
        }
        residuals.push(residual);
        prev = std::mem::replace(&mut cur, next);
        if residual <= epsilon {
            return Ok(KmResult {
                v_final: cur,
                iterations: k,
                stopped_by_criterion: true,
                residual,
                residuals,
            });
        }
    }
    let residual = residuals.last().copied().unwrap_or(f64::INFINITY);
    Ok(KmResult {
        v_final: cur,
        iterations: hard_cap,
        stopped_by_criterion: false,
        residual,
        residuals,
    })
}

/// `e = (epsilon / theta) ((1 - theta) + q / (1 - q))`.
pub fn tracking_error_bound(epsilon: f64, theta_bar: f64, q_bar: f64) -> Result<f64> {
    if !(theta_bar > 0.0 && theta_bar < 1.0) {
        return Err(invalid(format!("theta must lie in (0, 1), got {theta_bar}")));
    }
    if !(0.0..1.0).contains(&q_bar) {
        return Err(invalid(format!(
            "tracking bound needs q in [0, 1), got {q_bar}"
        )));
    }
    Ok(epsilon / theta_bar * ((1.0 - theta_bar) + q_bar / (1.0 - q_bar)))
}

/// `Q = 1 - theta (1 - q^2)`.
pub fn q_rate(theta: f64, q: f64) -> f64 {
    1.0 - theta * (1.0 - q * q)
}

/// Left-hand side of the admissibility inequality; admissible iff negative.
pub fn km_quadratic(tau: f64, theta: f64, q: f64) -> f64 {
    let (a, b, c) = quadratic_coefficients(theta, q);
    a * tau * tau + b * tau + c
}

fn quadratic_coefficients(theta: f64, q: f64) -> (f64, f64, f64) {
    let s = 1.0 - q * q;
    let a = -(1.0 - 2.0 * theta + theta * theta * s);
    let b = 2.0 - (2.0 - q * q) * theta;
    let c = -(1.0 - s * theta) * (1.0 - theta);
    (a, b, c)
}

pub fn validate_km_params(tau: f64, theta: f64, q: f64) -> bool {
    (0.0..1.0).contains(&tau)
        && theta > 0.0
        && theta < 1.0
        && q > 0.0
        && q <= 1.0
        && km_quadratic(tau, theta, q) < 0.0
        && q_rate(theta, q) < 1.0
}

/// Supremum of admissible momentum parameters at constant `(theta, q)`.
///
/// This is the root of the admissibility quadratic in `(0, 1)`; admissible
/// `tau` form `[0, tau_bar)`. Returns `0` when the quadratic has no real root.
pub fn max_tau(theta: f64, q: f64) -> f64 {
    let (a, b, c) = quadratic_coefficients(theta, q);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return 0.0;
    }
    // -2c / (b + sqrt(disc)) avoids cancellation and is the root in (0, 1)
    // for either sign of the leading coefficient.
    let denom = b + disc.sqrt();
    if denom <= 0.0 {
        return 0.0;
    }
    (-2.0 * c / denom).max(0.0)
}

/// `C = 2 (1 + tau) / sqrt(Q (1 - tau)(1 - theta)) * D_M`.
pub fn cap_constant(tau_bar: f64, theta_bar: f64, q_bar_cap: f64, diameter: f64) -> f64 {
    2.0 * (1.0 + tau_bar) / (q_bar_cap * (1.0 - tau_bar) * (1.0 - theta_bar)).sqrt() * diameter
}

/// `ceil(2 log(C / epsilon) / log(1 / Q))`, at least 1.
pub fn iteration_cap(c_const: f64, epsilon: f64, q_bar_cap: f64) -> Result<usize> {
    if !(q_bar_cap > 0.0 && q_bar_cap < 1.0) {
        return Err(invalid(format!("Q must lie in (0, 1), got {q_bar_cap}")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !c_const.is_finite() {
        return Err(invalid("iteration cap needs a finite constant"));
    }
    if epsilon >= c_const {
        return Ok(1);
    }
    let k = (2.0 * (c_const / epsilon).ln() / (1.0 / q_bar_cap).ln()).ceil();
    Ok((k as usize).max(1))
}

/// Default cap: ten times the a priori bound when it exists.
pub fn default_hard_cap(tau: f64, theta: f64, q: f64, epsilon: f64, diameter: f64) -> usize {
    let big_q = q_rate(theta, q);
    if q >= 1.0 || !diameter.is_finite() || !(big_q < 1.0) {
        return FALLBACK_HARD_CAP;
    }
    let c = cap_constant(tau, theta, big_q, diameter);
    match iteration_cap(c, epsilon, big_q) {
        Ok(k) => k.saturating_mul(10).min(FALLBACK_HARD_CAP),
        Err(_) => FALLBACK_HARD_CAP,
    }
}

/// Total inner iteration bound over an outer run, taken literally:
///
/// `[N (2 log C + log Q) + 2 sum_{n=1}^{N} log(1 / eps_n)] / log(1 / Q)`
///
/// where `eps` holds `eps_1, ..., eps_N`.
pub fn combined_complexity_bound(c_const: f64, q_bar_cap: f64, eps: &[f64]) -> f64 {
    let n = eps.len() as f64;
    let tail: f64 = eps.iter().map(|e| (1.0 / e).ln()).sum();
    (n * (2.0 * c_const.ln() + q_bar_cap.ln()) + 2.0 * tail) / (1.0 / q_bar_cap).ln()
}
