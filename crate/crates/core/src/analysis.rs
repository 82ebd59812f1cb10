//! Post-hoc guarantees: variance bounds on the consensus value, worst-case
//! deviation of the residual mean, the geometric detection law, and a
//! Wasserstein-1 comparison between the empirical compensation target and
//! the node's recorded error distribution.

use thiserror::Error;

use crate::adversary::{error_cdf, std_normal_cdf, GmmSpec, StochasticErrorModel};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("integration failed to converge (last delta {0})")]
    NoConvergence(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Variance contribution of an isolated malicious node:
/// `(k_iso - M)(1 + (k_iso - M)/M) sigma_eps^2`. With no stored detections
/// nothing was compensated, so the bound is infinite.
pub fn variance_bound_malicious(k_iso: u64, m: u64, sigma_eps_sq: f64) -> f64 {
    if m == 0 {
        return f64::INFINITY;
    }
    let gap = k_iso.saturating_sub(m) as f64;
    gap * (1.0 + gap / m as f64) * sigma_eps_sq
}

/// Variance contribution of a non-isolated faulty node active on rounds
/// `[k0, k1]`:
/// `((1-p)/p^2)(sigma_eps^2/M + theta^2 mu^2) + (k1-k0)(1 + (k1-k0)/M) sigma_eps^2`.
pub fn variance_bound_faulty(
    p: f64,
    k0: u64,
    k1: u64,
    m: u64,
    sigma_eps_sq: f64,
    theta: f64,
    mu: f64,
) -> f64 {
    if m == 0 {
        return f64::INFINITY;
    }
    let mf = m as f64;
    let span = (k1 - k0) as f64;
    let loss = (1.0 - p) / (p * p) * (sigma_eps_sq / mf + theta * theta * mu * mu);
    loss + span * (1.0 + span / mf) * sigma_eps_sq
}

/// Worst-case deviation of the residual mean from the true average:
/// `(n alpha_max) rho_max |V_m| / ((1 - rho_max) |V_r|)`.
pub fn deviation_bound(alpha_max: f64, rho_max: f64, n: usize, v_m: usize, v_r: usize) -> f64 {
    assert!(v_r > 0 && rho_max < 1.0);
    (n as f64 * alpha_max) * rho_max * v_m as f64 / ((1.0 - rho_max) * v_r as f64)
}

/// Probability that a stochastic attacker draws at least one detection in
/// the first `k` rounds under delivery probability `p`: `1 - (1 - p theta)^k`.
pub fn detection_probability(p: f64, theta: f64, k: u64) -> f64 {
    1.0 - (1.0 - p * theta).powi(k as i32)
}

/// Mean number of rounds until the first detection, `1 / (p theta)`.
pub fn mean_rounds_to_detection(p: f64, theta: f64) -> f64 {
    1.0 / (p * theta)
}

pub fn normal_cdf(x: f64, mean: f64, std: f64) -> f64 {
    std_normal_cdf((x - mean) / std)
}

/// Upper bound on `E|Y|` for a GMM `Y`:
/// `sum a_l { sqrt(2/pi) sigma_l exp(-mu_l^2 / 2 sigma_l^2)
///          + mu_l (1 - 2 Phi(-mu_l / sigma_l)) }`.
pub fn folded_mean_bound(gmm: &GmmSpec) -> f64 {
    gmm.components
        .iter()
        .map(|c| {
            let s = c.variance.sqrt();
            let folded = (2.0 / std::f64::consts::PI).sqrt()
                * s
                * (-c.mean * c.mean / (2.0 * c.variance)).exp();
            folded + c.mean * (1.0 - 2.0 * std_normal_cdf(-c.mean / s))
        })
        .sum()
}

/// Interval that carries essentially all mass of both the error
/// distribution and the normal approximation built from `m` detections.
pub fn support_interval(model: &StochasticErrorModel, m: u64) -> (f64, f64) {
    let (mu, _) = model.attack_moments();
    let se = model.error_variance().sqrt();
    let approx_std = if m > 0 { se / (m as f64).sqrt() } else { se };
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    let mut widen = |center: f64, spread: f64| {
        lo = lo.min(center - 10.0 * spread);
        hi = hi.max(center + 10.0 * spread);
    };
    widen(model.theta * mu, se.max(approx_std));
    for c in &model.gmm.components {
        widen(c.mean, c.variance.sqrt());
    }
    (lo, hi)
}

/// Wasserstein-1 distance between two distributions given by their CDFs:
/// the integral of `|F - G|` over `[lo, hi]`, split at `breakpoints`.
///
/// Composite midpoint rule per segment with doubling until the refinement
/// delta drops below `tol`; midpoints never land on a breakpoint, so jump
/// discontinuities placed there are harmless.
pub fn wasserstein_1d(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    tol: f64,
) -> Result<f64, AnalysisError> {
    if !(hi > lo) {
        return Err(AnalysisError::Invalid("empty support interval".into()));
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .chain([lo, hi])
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();

    let midpoint_sum = |a: f64, b: f64, n: usize| -> f64 {
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| {
                let x = a + (i as f64 + 0.5) * h;
                (f(x) - g(x)).abs()
            })
            .sum::<f64>()
            * h
    };

    let mut total = 0.0;
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let mut n = 64usize;
        let mut prev = midpoint_sum(a, b, n);
        let mut converged = None;
        for _ in 0..18 {
            n *= 2;
            let cur = midpoint_sum(a, b, n);
            let delta = (cur - prev).abs();
            prev = cur;
            if delta < tol {
                converged = Some(cur);
                break;
            }
        }
        match converged {
            Some(v) => total += v,
            None => return Err(AnalysisError::NoConvergence(prev)),
        }
    }
    Ok(total)
}

/// W1 distance between the node's error distribution (point mass `1-theta`
/// at zero plus the scaled mixture) and the normal approximation
/// `N(theta mu, sigma_eps^2 / M)` that `m` stored detections support.
pub fn wasserstein_error_vs_normal(
    model: &StochasticErrorModel,
    m: u64,
) -> Result<f64, AnalysisError> {
    if m == 0 {
        return Err(AnalysisError::Invalid("need at least one detection".into()));
    }
    let (mu, _) = model.attack_moments();
    let mean = model.theta * mu;
    let std = model.error_variance().sqrt() / (m as f64).sqrt();
    let (lo, hi) = support_interval(model, m);
    wasserstein_1d(
        |x| error_cdf(model, x),
        |x| normal_cdf(x, mean, std),
        lo,
        hi,
        &[0.0, mean],
        1e-7,
    )
}

/// Closed-form upper bound on [`wasserstein_error_vs_normal`]:
/// `(1-theta) E|Y| + sum a_l (|theta mu - mu_l| + |sigma_eps/sqrt(M) - sigma_l|)`.
pub fn wasserstein_bound(model: &StochasticErrorModel, m: u64) -> f64 {
    assert!(m > 0);
    let (mu, _) = model.attack_moments();
    let target_mean = model.theta * mu;
    let target_std = model.error_variance().sqrt() / (m as f64).sqrt();
    let atom_term = (1.0 - model.theta) * folded_mean_bound(&model.gmm);
    let mixture_term: f64 = model
        .gmm
        .components
        .iter()
        .map(|c| {
            c.weight * ((target_mean - c.mean).abs() + (target_std - c.variance.sqrt()).abs())
        })
        .sum();
    atom_term + mixture_term
}

/// Grid of `(x, F_error(x), F_normal(x))` rows for plotting the comparison
/// behind [`wasserstein_error_vs_normal`].
pub fn cdf_comparison_grid(
    model: &StochasticErrorModel,
    m: u64,
    points: usize,
) -> Vec<(f64, f64, f64)> {
    assert!(points >= 2 && m > 0);
    let (mu, _) = model.attack_moments();
    let mean = model.theta * mu;
    let std = model.error_variance().sqrt() / (m as f64).sqrt();
    let (lo, hi) = support_interval(model, m);
    (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            (x, error_cdf(model, x), normal_cdf(x, mean, std))
        })
        .collect()
}
