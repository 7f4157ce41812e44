//! Shortest-path distance distributions of k-growing graphs.
//!
//! Distances are modelled by a normal distribution whose parameters are
//! predicted from `(n, k)` by closed-form estimators. The normal is then
//! discretized onto hop counts `0..=t_max`, with the masses at distance 0
//! and 1 fixed analytically.

mod baselines;
mod estimator;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::{self, DistanceHistogram, SourceSample};

pub use baselines::{compare_baselines, BaselineFit, BaselineKind};
pub use estimator::{
    estimate_mu, estimate_sigma, fit_model_constants, model_bias_report, BiasReport, FitOptions,
    FitResult, ModelConstants, ModelId,
};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl NormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::param(format!("normal needs finite mu and sigma > 0, got ({mu}, {sigma})")));
        }
        Ok(NormalParams { mu, sigma })
    }

    /// Parameters predicted by the estimator models for a k-growing graph.
    pub fn estimate(n: usize, k: usize, mu_model: &ModelConstants, sigma_model: &ModelConstants) -> Result<Self> {
        Self::new(estimate_mu(n, k, mu_model)?, estimate_sigma(n, k, sigma_model)?)
    }

    pub fn normal(&self) -> Normal {
        Normal::new(self.mu, self.sigma).expect("validated at construction")
    }
}

/// Maximum-likelihood normal fit to the distances of a histogram, ignoring distance 0.
pub fn fit_normal(h: &DistanceHistogram) -> Result<NormalParams> {
    let bins: Vec<(f64, f64)> = h
        .counts
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &c)| c > 0)
        .map(|(d, &c)| (d as f64, c as f64))
        .collect();
    if bins.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least two distinct positive distances, found {}",
            bins.len()
        )));
    }
    let total: f64 = bins.iter().map(|(_, c)| c).sum();
    let mu = bins.iter().map(|(d, c)| d * c).sum::<f64>() / total;
    let var = bins.iter().map(|(d, c)| c * (d - mu).powi(2)).sum::<f64>() / total;
    NormalParams::new(mu, var.sqrt())
}

/// Probability mass over hop distances `0..=t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    mass: Vec<f64>,
    n: usize,
    k: usize,
    epsilon: f64,
}

impl DiscreteDistribution {
    /// Wraps an arbitrary non-negative mass vector, normalizing it to sum 1.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::param("weights must be finite, non-negative and non-empty"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::param("weights sum to zero"));
        }
        Ok(DiscreteDistribution {
            mass: weights.iter().map(|w| w / total).collect(),
            n: 0,
            k: 0,
            epsilon: 0.0,
        })
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn t_max(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mode(&self) -> usize {
        self.mass
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &m)| if m > best.1 { (i, m) } else { best })
            .0
    }
}

/// Expected fraction of ordered pairs at distance one: `k(2n-k-1)/n^2`.
pub fn unit_distance_mass(n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    k * (2.0 * n - k - 1.0) / (n * n)
}

/// Discretizes a fitted normal onto hop counts.
///
/// `t_max` is the smallest integer with `1 - CDF(t_max) <= epsilon` (at least 2).
/// `mass[0] = 1/n`, `mass[1] = k(2n-k-1)/n^2`, and the remaining mass is shared
/// across `2..=t_max` proportionally to the density at each integer.
pub fn discretize(p: NormalParams, n: usize, k: usize, epsilon: f64) -> Result<DiscreteDistribution> {
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(Error::param(format!("epsilon must lie in (0, 0.1], got {epsilon}")));
    }
    if n < 2 || k < 1 {
        return Err(Error::param(format!("need n >= 2 and k >= 1, got n = {n}, k = {k}")));
    }
    let f0 = 1.0 / n as f64;
    let f1 = unit_distance_mass(n, k);
    if f0 + f1 >= 1.0 {
        return Err(Error::InfeasibleDiscretization(format!(
            "closed-form masses at distance 0 and 1 already sum to {:.6}",
            f0 + f1
        )));
    }
    let normal = p.normal();
    let mut t_max = p.mu.max(0.0).ceil() as usize;
    while normal.sf(t_max as f64) > epsilon {
        t_max += 1;
    }
    // Walk back to the smallest t that satisfies the tail bound.
    while t_max > 0 && normal.sf((t_max - 1) as f64) <= epsilon {
        t_max -= 1;
    }
    let t_max = t_max.max(2);

    let density: Vec<f64> = (2..=t_max).map(|x| normal.pdf(x as f64)).collect();
    let density_total: f64 = density.iter().sum();
    if !(density_total > 0.0) || !density_total.is_finite() {
        return Err(Error::InfeasibleDiscretization(
            "normal density underflows at every distance >= 2".into(),
        ));
    }
    let rest = 1.0 - f0 - f1;
    let mut mass = Vec::with_capacity(t_max + 1);
    mass.push(f0);
    mass.push(f1);
    mass.extend(density.iter().map(|d| rest * d / density_total));
    Ok(DiscreteDistribution {
        mass,
        n,
        k,
        epsilon,
    })
}

/// One row of the fitting dataset: the normal fit of one generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub n: usize,
    pub k: usize,
    pub mu_hat: f64,
    pub sigma_hat: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDataset {
    pub rows: Vec<FitRow>,
}

impl FitDataset {
    pub fn new(rows: Vec<FitRow>) -> Result<Self> {
        for r in &rows {
            if r.n < 2 || r.k < 1 || !(r.sigma_hat > 0.0) {
                return Err(Error::param(format!("invalid dataset row {r:?}")));
            }
        }
        Ok(FitDataset { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<FitRow>, _>>()?;
        FitDataset::new(rows)
    }
}

/// Generates one k-growing graph and fits a normal to its pooled distances.
pub fn measure_graph(n: usize, k: usize, seed: u64) -> Result<FitRow> {
    let g = graph::generate_k_growing(n, k, seed)?;
    let h = graph::pooled_histogram(&g, SourceSample::default_for(n))?;
    let p = fit_normal(&h)?;
    Ok(FitRow {
        n,
        k,
        mu_hat: p.mu,
        sigma_hat: p.sigma,
    })
}

/// Measures every `(n, k)` cell of a grid for each seed, in parallel.
pub fn measure_grid(cells: &[(usize, usize)], seeds: &[u64]) -> Result<FitDataset> {
    use rayon::prelude::*;
    let jobs: Vec<(usize, usize, u64)> = cells
        .iter()
        .flat_map(|&(n, k)| seeds.iter().map(move |&s| (n, k, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(n, k, s)| measure_graph(n, k, s))
        .collect::<Result<Vec<_>>>()?;
    FitDataset::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::HistogramSource;

    fn hist(counts: &[u64]) -> DistanceHistogram {
        DistanceHistogram {
            source: HistogramSource::Pooled,
            counts: counts.to_vec(),
        }
    }

    #[test]
    fn two_equal_masses() {
        let p = fit_normal(&hist(&[0, 4, 4])).unwrap();
        assert!((p.mu - 1.5).abs() < 1e-12);
        assert!((p.sigma - 0.5).abs() < 1e-12);
    }

    #[test]
    fn self_pairs_are_ignored() {
        let a = fit_normal(&hist(&[0, 4, 4])).unwrap();
        let b = fit_normal(&hist(&[100, 4, 4])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spike_is_degenerate() {
        assert!(matches!(fit_normal(&hist(&[10, 0, 7])), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_normal(&hist(&[1])), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn closed_form_low_masses() {
        let p = NormalParams::new(3.33, 0.65).unwrap();
        let d = discretize(p, 2000, 6, DEFAULT_EPSILON).unwrap();
        assert_eq!(d.mass()[0], 1.0 / 2000.0);
        assert_eq!(d.mass()[1], 6.0 * 3993.0 / (2000.0 * 2000.0));
        assert!((d.mass()[1] - 0.0059895).abs() < 1e-15);
        assert!((d.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(d.mode(), 3);
    }

    #[test]
    fn tail_rule_picks_smallest_t() {
        let p = NormalParams::new(3.33, 0.65).unwrap();
        let d = discretize(p, 2000, 6, 1e-6).unwrap();
        let normal = Normal::new(3.33, 0.65).unwrap();
        let t = d.t_max();
        assert!(normal.sf(t as f64) <= 1e-6);
        assert!(normal.sf((t - 1) as f64) > 1e-6);
    }

    #[test]
    fn discretize_rejects_bad_inputs() {
        let p = NormalParams::new(3.0, 0.5).unwrap();
        assert!(discretize(p, 2000, 6, 0.0).is_err());
        assert!(discretize(p, 2000, 6, 0.2).is_err());
        assert!(discretize(p, 1, 1, 1e-6).is_err());
        // n = 2, k = 1: 1/2 + 1*(4-2)/4 = 1 leaves no mass for distance >= 2.
        assert!(matches!(
            discretize(p, 2, 1, 1e-6),
            Err(Error::InfeasibleDiscretization(_))
        ));
        let far = NormalParams::new(-200.0, 0.5).unwrap();
        assert!(matches!(
            discretize(far, 2000, 6, 1e-6),
            Err(Error::InfeasibleDiscretization(_))
        ));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let ds = FitDataset::new(vec![
            FitRow { n: 500, k: 2, mu_hat: 4.5, sigma_hat: 1.1 },
            FitRow { n: 2000, k: 6, mu_hat: 3.3, sigma_hat: 0.65 },
        ])
        .unwrap();
        let text = ds.to_csv().unwrap();
        assert!(text.starts_with("n,k,mu_hat,sigma_hat\n"));
        assert_eq!(FitDataset::from_csv(&text).unwrap(), ds);
        assert!(FitDataset::new(vec![FitRow { n: 1, k: 1, mu_hat: 1.0, sigma_hat: 1.0 }]).is_err());
    }
}
