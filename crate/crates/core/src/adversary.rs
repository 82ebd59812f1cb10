//! Error inputs of misbehaving nodes.
//!
//! Deterministic parametric families drive the D-DCC experiments; the
//! Bernoulli(theta) x GMM process drives S-DCC. GMM moment and CDF helpers
//! feed the analysis layer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("mixture weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("negative mixture weight {0}")]
    NegativeWeight(f64),
    #[error("component variance {0} must be > 0")]
    NonPositiveVariance(f64),
    #[error("theta {0} outside [0, 1]")]
    InvalidTheta(f64),
    #[error("empty mixture")]
    EmptyMixture,
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Convex combination of Gaussian components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub components: Vec<GmmComponent>,
}

impl GmmSpec {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self, AdversaryError> {
        if components.is_empty() {
            return Err(AdversaryError::EmptyMixture);
        }
        let mut total = 0.0;
        for c in &components {
            if c.weight < 0.0 {
                return Err(AdversaryError::NegativeWeight(c.weight));
            }
            if c.variance <= 0.0 {
                return Err(AdversaryError::NonPositiveVariance(c.variance));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(AdversaryError::WeightsNotNormalized(total));
        }
        Ok(GmmSpec { components })
    }

    /// Reference two-component attack mixture: 0.5 N(0.05, 0.05) + 0.5 N(0.15, 0.2).
    pub fn two_component_example() -> Self {
        GmmSpec::new(vec![
            GmmComponent { weight: 0.5, mean: 0.05, variance: 0.05 },
            GmmComponent { weight: 0.5, mean: 0.15, variance: 0.2 },
        ])
        .unwrap()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                idx = i;
                break;
            }
        }
        let c = &self.components[idx];
        Normal::new(c.mean, c.variance.sqrt()).unwrap().sample(rng)
    }
}

/// `(mean, variance)` of the mixture: `sum a_l mu_l` and
/// `sum a_l (sigma_l^2 + mu_l^2) - mean^2`.
pub fn mixture_moments(gmm: &GmmSpec) -> (f64, f64) {
    let mean: f64 = gmm.components.iter().map(|c| c.weight * c.mean).sum();
    let second: f64 = gmm
        .components
        .iter()
        .map(|c| c.weight * (c.variance + c.mean * c.mean))
        .sum();
    (mean, second - mean * mean)
}

/// Mixture of standard-normal CDFs.
pub fn gmm_cdf(gmm: &GmmSpec, x: f64) -> f64 {
    gmm.components
        .iter()
        .map(|c| c.weight * std_normal_cdf((x - c.mean) / c.variance.sqrt()))
        .sum()
}

/// Round window (inclusive) outside which an error model emits 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: u64,
    pub end: u64,
}

impl Window {
    pub fn contains(&self, k: u64) -> bool {
        k >= self.start && k <= self.end
    }
}

/// Error = X * Y with X ~ Bernoulli(theta), Y ~ GMM, independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticErrorModel {
    pub theta: f64,
    pub gmm: GmmSpec,
    pub window: Option<Window>,
}

impl StochasticErrorModel {
    pub fn new(theta: f64, gmm: GmmSpec, window: Option<Window>) -> Result<Self, AdversaryError> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(AdversaryError::InvalidTheta(theta));
        }
        Ok(StochasticErrorModel { theta, gmm, window })
    }

    /// Mixture moments `(mu_i, sigma_i^2)` of the attack variable Y.
    pub fn attack_moments(&self) -> (f64, f64) {
        mixture_moments(&self.gmm)
    }

    /// `sigma_eps^2 = theta sigma^2 + (1 - theta) theta mu^2`.
    pub fn error_variance(&self) -> f64 {
        let (mu, var) = self.attack_moments();
        self.theta * var + (1.0 - self.theta) * self.theta * mu * mu
    }

    /// `E[eps] = theta mu`.
    pub fn error_mean(&self) -> f64 {
        self.theta * self.attack_moments().0
    }
}

/// Draws `X * Y`; returns 0 without consuming the stream outside the window.
pub fn sample_error<R: Rng>(model: &StochasticErrorModel, k: u64, rng: &mut R) -> f64 {
    if let Some(w) = model.window {
        if !w.contains(k) {
            return 0.0;
        }
    }
    let attacked = rng.gen::<f64>() < model.theta;
    if attacked {
        model.gmm.sample(rng)
    } else {
        0.0
    }
}

/// CDF of `X * Y`: a point mass of `1 - theta` at zero plus the scaled GMM.
pub fn error_cdf(model: &StochasticErrorModel, x: f64) -> f64 {
    let fy = gmm_cdf(&model.gmm, x);
    if x < 0.0 {
        model.theta * fy
    } else {
        1.0 - model.theta + model.theta * fy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ErrorFamily {
    /// `a * cos(b * k)`
    Cosine { a: f64, b: f64 },
    /// `a * r^k`
    Geometric { a: f64, r: f64 },
    Constant { c: f64 },
    /// Explicit `(k, value)` pairs; zero elsewhere.
    Table(Vec<(u64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicErrorModel {
    pub family: ErrorFamily,
    pub window: Option<Window>,
}

pub fn deterministic_error(model: &DeterministicErrorModel, k: u64) -> f64 {
    if let Some(w) = model.window {
        if !w.contains(k) {
            return 0.0;
        }
    }
    match &model.family {
        ErrorFamily::Cosine { a, b } => a * (b * k as f64).cos(),
        ErrorFamily::Geometric { a, r } => a * r.powi(k as i32),
        ErrorFamily::Constant { c } => *c,
        ErrorFamily::Table(rows) => rows
            .iter()
            .find(|(kk, _)| *kk == k)
            .map(|(_, v)| *v)
            .unwrap_or(0.0),
    }
}

/// Per-node error process, deterministic or stochastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ErrorModel {
    Deterministic(DeterministicErrorModel),
    Stochastic(StochasticErrorModel),
}

impl ErrorModel {
    pub fn sample<R: Rng>(&self, k: u64, rng: &mut R) -> f64 {
        match self {
            ErrorModel::Deterministic(m) => deterministic_error(m, k),
            ErrorModel::Stochastic(m) => sample_error(m, k, rng),
        }
    }
}
