//! Gumbel (type I extreme value) distribution: reference law of the test
//! statistics, quantiles, and maximum-likelihood fitting.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location `mu` and scale `beta > 0` of `F(y) = exp(-exp(-(y - mu) / beta))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelParams {
    pub mu: f64,
    pub beta: f64,
}

impl GumbelParams {
    pub fn new(mu: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Gumbel parameters need finite mu and beta > 0, got mu={mu} beta={beta}"
            )));
        }
        Ok(Self { mu, beta })
    }

    /// Limit law of the normalized maximum deviation: `mu = -2 log(2 sqrt(pi))`, `beta = 2`.
    /// Its CDF is `exp(-e^{-y/2} / (2 sqrt(pi)))`.
    pub fn reference() -> Self {
        Self {
            mu: -2.0 * (2.0 * PI.sqrt()).ln(),
            beta: 2.0,
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        (-(-(y - self.mu) / self.beta).exp()).exp()
    }

    /// `1 - cdf(y)` without cancellation in the upper tail.
    pub fn sf(&self, y: f64) -> f64 {
        -(-(-(y - self.mu) / self.beta).exp()).exp_m1()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let z = (y - self.mu) / self.beta;
        (-(z + (-z).exp())).exp() / self.beta
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "quantile level {p} is outside (0, 1)"
            )));
        }
        Ok(self.mu - self.beta * (-p.ln()).ln())
    }

    /// Inverse-CDF draw from a uniform `u` in (0, 1).
    pub fn from_uniform(&self, u: f64) -> f64 {
        self.mu - self.beta * (-u.ln()).ln()
    }
}

pub fn gumbel_cdf(y: f64, params: &GumbelParams) -> f64 {
    params.cdf(y)
}

pub fn gumbel_quantile(p: f64, params: &GumbelParams) -> Result<f64> {
    params.quantile(p)
}

pub fn reference_gumbel() -> GumbelParams {
    GumbelParams::reference()
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and `params`.
pub fn ks_distance(samples: &[f64], params: &GumbelParams) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = params.cdf(x);
            (f - i as f64 / n)
                .abs()
                .max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max)
}

const MLE_MAX_ITERATIONS: usize = 200;
const MLE_TOLERANCE: f64 = 1e-10;

/// Maximum-likelihood Gumbel fit.
///
/// The scale solves the profile equation
/// `beta = mean(t) - Σ t_i e^{-t_i/beta} / Σ e^{-t_i/beta}`, whose left-minus-right
/// side is strictly increasing in `beta`. Newton steps start from the moment
/// estimate `sd * sqrt(6) / pi` and fall back to bisection whenever they leave
/// the current bracket. Location follows as `-beta log(mean e^{-t_i/beta})`.
pub fn fit_mle(samples: &[f64]) -> Result<GumbelParams> {
    if samples.len() < 2 || samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "Gumbel fit needs at least two finite samples".into(),
        ));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Err(Error::DegenerateSample);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;

    // Shifting by the minimum keeps every weight e^{-(t - min)/beta} in (0, 1].
    let centered: Vec<f64> = samples.iter().map(|x| x - min).collect();
    let mean_c = mean - min;
    // g(beta) = beta - mean + E_w[t], g'(beta) = 1 + Var_w[t] / beta^2
    let profile = |beta: f64| -> (f64, f64) {
        let (mut sw, mut stw, mut st2w) = (0.0, 0.0, 0.0);
        for &t in &centered {
            let w = (-t / beta).exp();
            sw += w;
            stw += t * w;
            st2w += t * t * w;
        }
        let m1 = stw / sw;
        let m2 = st2w / sw;
        (
            beta - mean_c + m1,
            1.0 + (m2 - m1 * m1).max(0.0) / (beta * beta),
        )
    };

    let mut lo = 0.0f64;
    let mut hi = (max - min).max(var.sqrt()) * 2.0 + 1e-12;
    while profile(hi).0 < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut beta = (var.sqrt() * 6f64.sqrt() / PI).clamp(lo + (hi - lo) * 1e-6, hi);
    let mut converged = false;
    for _ in 0..MLE_MAX_ITERATIONS {
        let (g, dg) = profile(beta);
        if g == 0.0 {
            converged = true;
            break;
        }
        if g < 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let mut next = beta - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - beta).abs();
        beta = next;
        if step < MLE_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MLE_MAX_ITERATIONS,
        });
    }
    let mean_w = centered.iter().map(|&t| (-t / beta).exp()).sum::<f64>() / n;
    let mu = min - beta * mean_w.ln();
    GumbelParams::new(mu, beta)
}
