//! Closed-form `(n, k) -> mu / sigma` estimator models and their least-squares fit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::FitDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    /// The sigma estimator.
    S,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [ModelId::M1, ModelId::M2, ModelId::M3, ModelId::M4, ModelId::S];

    pub fn names(self) -> &'static [&'static str] {
        match self {
            ModelId::M1 => &["alpha", "beta", "gamma", "delta", "epsilon"],
            ModelId::M2 => &["alpha", "beta", "gamma", "delta", "eta", "zeta", "epsilon"],
            ModelId::M3 => &["alpha", "beta", "gamma", "epsilon"],
            ModelId::M4 => &[
                "alpha", "beta", "gamma", "delta", "zeta", "eta", "theta", "iota", "kappa",
                "lambda", "nu", "xi",
            ],
            ModelId::S => &["a", "b", "c", "d", "e"],
        }
    }

    pub fn arity(self) -> usize {
        self.names().len()
    }

    /// Constants that sit inside a logarithm or a power base and must stay positive.
    fn positive_slots(self) -> &'static [usize] {
        match self {
            ModelId::M1 | ModelId::M3 | ModelId::S => &[1],
            ModelId::M2 => &[1, 4],
            ModelId::M4 => &[1, 7, 8, 11],
        }
    }

    /// Whether this model predicts sigma rather than mu.
    pub fn predicts_sigma(self) -> bool {
        self == ModelId::S
    }

    fn eval(self, c: &[f64], n: f64, k: f64) -> f64 {
        match self {
            ModelId::M1 => c[0] * (c[1] * n).ln() + c[2] * (-c[3] * k).exp() + c[4],
            ModelId::M2 => {
                let decay = (-c[2] * k).exp();
                c[0] * (c[1] * n).ln() * decay + c[3] * (c[4] * n).ln() + c[5] * decay + c[6]
            }
            ModelId::M3 => c[0] * (c[1] * n).ln() * (-c[2] * k).exp() + c[3],
            ModelId::M4 => {
                let decay = (-c[2] * k).exp();
                c[0] * (c[1] * n).ln() * decay - c[0] * c[3] * k * decay
                    + c[4] * (-c[5] * k).exp()
                    + m4_power_term(c[6], c[7], c[8], c[9], n)
                    + c[10] * (c[11] * n).ln()
            }
            ModelId::S => c[0] * (c[1] * n).ln() + c[2] * (-c[3] * k).exp() + c[4],
        }
    }
}

/// `theta * ln(iota n) / (kappa n)^(lambda n)`, evaluated in log space.
fn m4_power_term(theta: f64, iota: f64, kappa: f64, lambda: f64, n: f64) -> f64 {
    let numerator = theta * (iota * n).ln();
    if numerator == 0.0 {
        return 0.0;
    }
    let log_mag = numerator.abs().ln() - lambda * n * (kappa * n).ln();
    numerator.signum() * log_mag.exp()
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(ModelId::M1),
            "M2" => Ok(ModelId::M2),
            "M3" => Ok(ModelId::M3),
            "M4" => Ok(ModelId::M4),
            "S" => Ok(ModelId::S),
            _ => Err(Error::param(format!("unknown model {s:?} (expected M1..M4 or S)"))),
        }
    }
}

/// Constants of one estimator model, in the model's canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConstants {
    model: ModelId,
    values: Vec<f64>,
}

impl ModelConstants {
    pub fn new(model: ModelId, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.arity() {
            return Err(Error::param(format!(
                "{model} takes {} constants, got {}",
                model.arity(),
                values.len()
            )));
        }
        Ok(ModelConstants { model, values })
    }

    /// Published mu estimator (model M2).
    pub fn published_mu() -> Self {
        ModelConstants {
            model: ModelId::M2,
            values: vec![0.595, 2.135, 0.314, 0.341, 1.626, 0.241, -0.224],
        }
    }

    /// Published sigma estimator.
    pub fn published_sigma() -> Self {
        ModelConstants {
            model: ModelId::S,
            values: vec![0.0345, 0.925, 1.222, 0.301, 0.189],
        }
    }

    /// Default starting point for a fit: the published constants where they exist, ones otherwise.
    pub fn default_for(model: ModelId) -> Self {
        match model {
            ModelId::M2 => Self::published_mu(),
            ModelId::S => Self::published_sigma(),
            m => ModelConstants {
                model: m,
                values: vec![1.0; m.arity()],
            },
        }
    }

    pub fn model(&self) -> ModelId {
        self.model
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let idx = self.model.names().iter().position(|&x| x == name)?;
        Some(self.values[idx])
    }

    pub fn evaluate(&self, n: usize, k: usize) -> f64 {
        self.model.eval(&self.values, n as f64, k as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ConstantsDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ConstantsDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct ConstantsDoc {
    model: ModelId,
    constants: BTreeMap<String, f64>,
}

impl From<&ModelConstants> for ConstantsDoc {
    fn from(c: &ModelConstants) -> Self {
        ConstantsDoc {
            model: c.model,
            constants: c
                .model
                .names()
                .iter()
                .zip(&c.values)
                .map(|(n, v)| (n.to_string(), *v))
                .collect(),
        }
    }
}

impl TryFrom<ConstantsDoc> for ModelConstants {
    type Error = Error;

    fn try_from(doc: ConstantsDoc) -> Result<Self> {
        if doc.constants.len() != doc.model.arity() {
            return Err(Error::Parse(format!(
                "{} expects {} constants, document has {}",
                doc.model,
                doc.model.arity(),
                doc.constants.len()
            )));
        }
        let values = doc
            .model
            .names()
            .iter()
            .map(|name| {
                doc.constants
                    .get(*name)
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("missing constant {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ModelConstants::new(doc.model, values)
    }
}

impl Serialize for ModelConstants {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConstantsDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelConstants {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ConstantsDoc::deserialize(d)?;
        doc.try_into().map_err(serde::de::Error::custom)
    }
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if n < 2 || k < 1 {
        return Err(Error::param(format!("need n >= 2 and k >= 1, got n = {n}, k = {k}")));
    }
    Ok(())
}

/// Predicted mean shortest-path distance. Pass `ModelConstants::published_mu()` for the published model.
pub fn estimate_mu(n: usize, k: usize, c: &ModelConstants) -> Result<f64> {
    check_nk(n, k)?;
    Ok(c.evaluate(n, k))
}

/// Predicted shortest-path standard deviation. Pass `ModelConstants::published_sigma()` for the published model.
pub fn estimate_sigma(n: usize, k: usize, c: &ModelConstants) -> Result<f64> {
    check_nk(n, k)?;
    Ok(c.evaluate(n, k))
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Starting constants; `None` uses `ModelConstants::default_for`.
    pub initial: Option<ModelConstants>,
    /// Residual-evaluation budget, in multiples of `(arity + 1)`.
    pub patience: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            initial: None,
            patience: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub constants: ModelConstants,
    pub residual_ss: f64,
    /// Root-mean-square residual, in hops.
    pub residual_std: f64,
    pub evaluations: usize,
    pub rows: usize,
}

struct Problem<'a> {
    model: ModelId,
    data: &'a [(f64, f64, f64)],
    /// Internal parameters: positive slots are stored as logarithms.
    params: DVector<f64>,
}

impl Problem<'_> {
    fn to_constants(model: ModelId, internal: &DVector<f64>) -> Vec<f64> {
        let mut c: Vec<f64> = internal.iter().copied().collect();
        for &i in model.positive_slots() {
            c[i] = c[i].exp();
        }
        c
    }

    fn residuals_at(&self, internal: &DVector<f64>) -> DVector<f64> {
        let c = Self::to_constants(self.model, internal);
        DVector::from_iterator(
            self.data.len(),
            self.data.iter().map(|&(n, k, y)| self.model.eval(&c, n, k) - y),
        )
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.params.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.params.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        // Overflowing trial steps get a large finite penalty so the solver backs off.
        Some(self.residuals_at(&self.params).map(|v| if v.is_finite() { v } else { 1e8 }))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let m = self.data.len();
        let p = self.params.len();
        let mut jac = DMatrix::zeros(m, p);
        for j in 0..p {
            let h = 1e-6 * self.params[j].abs().max(1.0);
            let mut up = self.params.clone();
            let mut down = self.params.clone();
            up[j] += h;
            down[j] -= h;
            let col = (self.residuals_at(&up) - self.residuals_at(&down)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

/// Least-squares fit of an estimator model to a dataset of fitted graphs.
///
/// Mu models are fitted against `mu_hat`, the sigma model against `sigma_hat`.
pub fn fit_model_constants(data: &FitDataset, model: ModelId, opts: &FitOptions) -> Result<FitResult> {
    let start = opts
        .initial
        .clone()
        .unwrap_or_else(|| ModelConstants::default_for(model));
    if start.model != model {
        return Err(Error::param(format!(
            "initial constants are for {}, not {model}",
            start.model
        )));
    }
    let points: Vec<(f64, f64, f64)> = data
        .rows
        .iter()
        .map(|r| {
            let y = if model.predicts_sigma() { r.sigma_hat } else { r.mu_hat };
            (r.n as f64, r.k as f64, y)
        })
        .collect();
    let start_ss = {
        let c = &start.values;
        points.iter().map(|&(n, k, y)| (model.eval(c, n, k) - y).powi(2)).sum::<f64>()
    };
    if points.len() < 2 * model.arity() {
        return Err(Error::FitFailure {
            reason: format!(
                "{model} has {} constants and needs at least {} rows, dataset has {}",
                model.arity(),
                2 * model.arity(),
                points.len()
            ),
            best: start.values.clone(),
            residual_ss: start_ss,
        });
    }
    let mut internal: Vec<f64> = start.values.clone();
    for &i in model.positive_slots() {
        if !(internal[i] > 0.0) {
            return Err(Error::param(format!(
                "constant {} of {model} must be positive",
                model.names()[i]
            )));
        }
        internal[i] = internal[i].ln();
    }
    let problem = Problem {
        model,
        data: &points,
        params: DVector::from_vec(internal),
    };
    let (solved, report) = LevenbergMarquardt::new()
        .with_patience(opts.patience)
        .minimize(problem);
    let values = Problem::to_constants(model, &solved.params);
    let residual_ss = solved
        .residuals_at(&solved.params)
        .iter()
        .map(|r| r * r)
        .sum::<f64>();
    let converged = matches!(
        report.termination,
        TerminationReason::ResidualsZero
            | TerminationReason::Orthogonal
            | TerminationReason::Converged { .. }
            | TerminationReason::NoImprovementPossible(_)
    );
    if !converged || !residual_ss.is_finite() {
        return Err(Error::FitFailure {
            reason: format!("{:?}", report.termination),
            best: values,
            residual_ss,
        });
    }
    Ok(FitResult {
        constants: ModelConstants { model, values },
        residual_ss,
        residual_std: (residual_ss / points.len() as f64).sqrt(),
        evaluations: report.number_of_evaluations,
        rows: points.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub model: ModelId,
    /// `model(n_i, k_i) - observed_i`, in dataset order.
    pub residuals: Vec<f64>,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max_abs: f64,
    pub median_abs: f64,
    pub mean: f64,
}

impl BiasReport {
    pub fn to_csv(&self, data: &FitDataset) -> String {
        let mut s = String::from("n,k,observed,predicted,bias\n");
        for (row, r) in data.rows.iter().zip(&self.residuals) {
            let observed = if self.model.predicts_sigma() { row.sigma_hat } else { row.mu_hat };
            s.push_str(&format!("{},{},{},{},{}\n", row.n, row.k, observed, observed + r, r));
        }
        s
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn model_bias_report(data: &FitDataset, c: &ModelConstants) -> Result<BiasReport> {
    if data.is_empty() {
        return Err(Error::param("bias report needs at least one row"));
    }
    let residuals: Vec<f64> = data
        .rows
        .iter()
        .map(|r| {
            let observed = if c.model.predicts_sigma() { r.sigma_hat } else { r.mu_hat };
            c.evaluate(r.n, r.k) - observed
        })
        .collect();
    let mut sorted = residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    Ok(BiasReport {
        model: c.model,
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max_abs: *abs.last().expect("non-empty"),
        median_abs: quantile(&abs, 0.5),
        mean: residuals.iter().sum::<f64>() / residuals.len() as f64,
        residuals,
    })
}
