//! Alternative distance distributions, kept only to score them against the normal fit.

use serde::Serialize;
use statrs::distribution::{Binomial, Continuous, Discrete, Geometric, Normal, Poisson, Weibull};
use statrs::function::gamma::gamma;

use super::fit_normal;
use crate::error::{Error, Result};
use crate::graph::DistanceHistogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Normal,
    Weibull,
    Poisson,
    Geometric,
    Binomial,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineFit {
    pub kind: BaselineKind,
    pub params: Vec<f64>,
    /// Point-wise sum of squared errors against the empirical mass over distances >= 1.
    pub sse: f64,
    /// Model mass at distances `1..=max_distance`, renormalized over that range.
    pub mass: Vec<f64>,
}

fn weibull_shape_for_cv(cv: f64) -> f64 {
    let target = cv * cv;
    let excess = |c: f64| gamma(1.0 + 2.0 / c) / gamma(1.0 + 1.0 / c).powi(2) - 1.0;
    let (mut lo, mut hi) = (0.2, 200.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn degenerate(e: impl std::fmt::Display) -> Error {
    Error::DegenerateFit(e.to_string())
}

fn renormalized(values: Vec<f64>) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.into_iter().map(|v| v / total).collect()
    } else {
        values
    }
}

/// Fits each candidate family to the histogram (distances >= 1) and scores it.
pub fn compare_baselines(h: &DistanceHistogram) -> Result<Vec<BaselineFit>> {
    let normal = fit_normal(h)?;
    let max_d = h.counts.len() - 1;
    let support: Vec<f64> = (1..=max_d).map(|d| d as f64).collect();
    let total: f64 = h.counts.iter().skip(1).map(|&c| c as f64).sum();
    let empirical: Vec<f64> = h.counts.iter().skip(1).map(|&c| c as f64 / total).collect();
    let mean = normal.mu;

    let mut fits = Vec::new();
    let mut push = |kind, params, raw: Vec<f64>| {
        let mass = renormalized(raw);
        let sse = mass.iter().zip(&empirical).map(|(m, e)| (m - e).powi(2)).sum();
        fits.push(BaselineFit { kind, params, sse, mass });
    };

    let nd = Normal::new(normal.mu, normal.sigma).map_err(degenerate)?;
    push(
        BaselineKind::Normal,
        vec![normal.mu, normal.sigma],
        support.iter().map(|&x| nd.pdf(x)).collect(),
    );

    let shape = weibull_shape_for_cv(normal.sigma / mean);
    let scale = mean / gamma(1.0 + 1.0 / shape);
    let wd = Weibull::new(shape, scale).map_err(degenerate)?;
    push(
        BaselineKind::Weibull,
        vec![shape, scale],
        support.iter().map(|&x| wd.pdf(x)).collect(),
    );

    let pd = Poisson::new(mean).map_err(degenerate)?;
    push(
        BaselineKind::Poisson,
        vec![mean],
        (1..=max_d as u64).map(|d| pd.pmf(d)).collect(),
    );

    let p = (1.0 / mean).min(1.0);
    let gd = Geometric::new(p).map_err(degenerate)?;
    push(
        BaselineKind::Geometric,
        vec![p],
        (1..=max_d as u64).map(|d| gd.pmf(d)).collect(),
    );

    let trials = max_d as u64;
    let bp = (mean / trials as f64).clamp(0.0, 1.0);
    let bd = Binomial::new(bp, trials).map_err(degenerate)?;
    push(
        BaselineKind::Binomial,
        vec![trials as f64, bp],
        (1..=max_d as u64).map(|d| bd.pmf(d)).collect(),
    );

    Ok(fits)
}
