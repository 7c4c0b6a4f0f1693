//! Isotropic Gaussian-mixture data model with exact noise predictions.
//!
//! Under the forward process `x_t = sqrt(a) x0 + sqrt(1 - a) eps` each component
//! `N(mu_k, sigma_k^2 I)` has marginal `N(sqrt(a) mu_k, (a sigma_k^2 + 1 - a) I)`, so the
//! posterior mean `E[x0 | x_t]` and hence the optimal noise prediction are closed-form.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::schedule::NoiseSchedule;

const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub class: String,
}

/// What the prediction is conditioned on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Unconditional,
    Class(String),
}

/// Serialized form: `{"components": [{weight, mean, sigma, class}, ...], "null_class": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub components: Vec<Component>,
    /// When set, `Condition::Unconditional` is restricted to this class instead of the
    /// full mixture. Lets a model pair two single Gaussians so both predictors are affine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelConfig", into = "ModelConfig")]
pub struct MixtureModel {
    dim: usize,
    components: Vec<Component>,
    classes: BTreeMap<String, Vec<usize>>,
    null_class: Option<String>,
}

impl TryFrom<ModelConfig> for MixtureModel {
    type Error = Error;

    fn try_from(cfg: ModelConfig) -> Result<Self> {
        let model = Self::new(cfg.components)?;
        match cfg.null_class {
            Some(label) => model.with_null_class(label),
            None => Ok(model),
        }
    }
}

impl From<MixtureModel> for ModelConfig {
    fn from(m: MixtureModel) -> Self {
        ModelConfig {
            components: m.components,
            null_class: m.null_class,
        }
    }
}

impl MixtureModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidModel("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::InvalidModel(
                "component means must be non-empty".into(),
            ));
        }
        let mut total = 0.0;
        let mut classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (k, c) in components.iter().enumerate() {
            check_dim(dim, c.mean.len())?;
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "component {k}: sigma must be positive, got {}",
                    c.sigma
                )));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "component {k}: weight must be positive, got {}",
                    c.weight
                )));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "component {k}: non-finite mean"
                )));
            }
            total += c.weight;
            classes.entry(c.class.clone()).or_default().push(k);
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidModel(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            dim,
            components,
            classes,
            null_class: None,
        })
    }

    pub fn with_null_class(mut self, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if !self.classes.contains_key(&label) {
            return Err(Error::UnknownClass(label));
        }
        self.null_class = Some(label);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    /// Indices of the components a condition restricts to.
    pub fn members(&self, cond: &Condition) -> Result<Vec<usize>> {
        let label = match cond {
            Condition::Class(label) => Some(label),
            Condition::Unconditional => self.null_class.as_ref(),
        };
        match label {
            Some(label) => self
                .classes
                .get(label)
                .cloned()
                .ok_or_else(|| Error::UnknownClass(label.clone())),
            None => Ok((0..self.components.len()).collect()),
        }
    }

    pub fn validate_condition(&self, cond: &Condition) -> Result<()> {
        self.members(cond).map(|_| ())
    }

    /// Exact `E[x0 | x_t = x]` at noise level `alpha_bar`.
    pub fn posterior_mean_at(
        &self,
        x: &[f64],
        alpha_bar: f64,
        cond: &Condition,
    ) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_alpha(alpha_bar)?;
        let members = self.members(cond)?;
        let sa = alpha_bar.sqrt();
        let d = self.dim as f64;

        let mut log_r = Vec::with_capacity(members.len());
        for &k in &members {
            let c = &self.components[k];
            let v = alpha_bar * c.sigma * c.sigma + 1.0 - alpha_bar;
            let sq: f64 = x
                .iter()
                .zip(&c.mean)
                .map(|(xi, mi)| (xi - sa * mi).powi(2))
                .sum();
            log_r.push(c.weight.ln() - 0.5 * sq / v - 0.5 * d * v.ln());
        }
        let max = log_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let resp: Vec<f64> = log_r.iter().map(|l| (l - max).exp()).collect();
        let norm: f64 = resp.iter().sum();

        let mut mean = vec![0.0; self.dim];
        for (&k, r) in members.iter().zip(&resp) {
            let c = &self.components[k];
            let v = alpha_bar * c.sigma * c.sigma + 1.0 - alpha_bar;
            let gain = sa * c.sigma * c.sigma / v;
            let r = r / norm;
            for ((m, xi), mi) in mean.iter_mut().zip(x).zip(&c.mean) {
                *m += r * (mi + gain * (xi - sa * mi));
            }
        }
        Ok(mean)
    }

    /// Optimal noise prediction at noise level `alpha_bar in (0, 1)`.
    pub fn eps_at(&self, x: &[f64], alpha_bar: f64, cond: &Condition) -> Result<Vec<f64>> {
        let mean = self.posterior_mean_at(x, alpha_bar, cond)?;
        let sa = alpha_bar.sqrt();
        let sn = (1.0 - alpha_bar).sqrt();
        Ok(x.iter()
            .zip(&mean)
            .map(|(xi, mi)| (xi - sa * mi) / sn)
            .collect())
    }

    pub fn eps_predict(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
        cond: &Condition,
    ) -> Result<Vec<f64>> {
        let (a, _) = schedule.step_pair(t)?;
        self.eps_at(x, a, cond)
    }

    /// Self-normalized importance estimate of `E[x0 | x_t = x]`: draws `x0` from the
    /// conditioned mixture and weights by the forward kernel `N(x; sqrt(a) x0, (1 - a) I)`.
    pub fn mc_posterior_mean(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
        cond: &Condition,
        n: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let (a, _) = schedule.step_pair(t)?;
        self.mc_posterior_mean_at(x, a, cond, n, seed)
    }

    pub fn mc_posterior_mean_at(
        &self,
        x: &[f64],
        alpha_bar: f64,
        cond: &Condition,
        n: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_alpha(alpha_bar)?;
        if n == 0 {
            return Err(Error::InvalidRange(
                "sample count must be at least 1".into(),
            ));
        }
        let members = self.members(cond)?;
        let picker = WeightedIndex::new(members.iter().map(|&k| self.components[k].weight))
            .map_err(|e| Error::InvalidModel(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sa = alpha_bar.sqrt();
        let inv_var = 1.0 / (1.0 - alpha_bar);

        let mut x0 = vec![0.0; self.dim];
        let mut acc = vec![0.0; self.dim];
        let mut total = 0.0;
        let mut log_scale = f64::NEG_INFINITY;
        for _ in 0..n {
            let c = &self.components[members[picker.sample(&mut rng)]];
            for (v, m) in x0.iter_mut().zip(&c.mean) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = m + c.sigma * z;
            }
            let sq: f64 = x
                .iter()
                .zip(&x0)
                .map(|(xi, vi)| (xi - sa * vi).powi(2))
                .sum();
            let lw = -0.5 * sq * inv_var;
            if lw > log_scale {
                let rescale = (log_scale - lw).exp();
                total *= rescale;
                acc.iter_mut().for_each(|s| *s *= rescale);
                log_scale = lw;
            }
            let w = (lw - log_scale).exp();
            total += w;
            for (s, v) in acc.iter_mut().zip(&x0) {
                *s += w * v;
            }
        }
        Ok(acc.into_iter().map(|s| s / total).collect())
    }

    /// Sigma-normalized distance from `x0_hat` to the nearest component mean.
    pub fn manifold_offset(&self, x0_hat: &[f64]) -> Result<f64> {
        check_dim(self.dim, x0_hat.len())?;
        Ok(self
            .components
            .iter()
            .map(|c| crate::vector::distance(x0_hat, &c.mean) / c.sigma)
            .fold(f64::INFINITY, f64::min))
    }
}

fn check_alpha(alpha_bar: f64) -> Result<()> {
    if alpha_bar > 0.0 && alpha_bar < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRange(format!(
            "noise predictions need alpha_bar in (0, 1), got {alpha_bar}"
        )))
    }
}

/// Two equal-weight classes at `(+-3, 0)` with `sigma = 0.5`: the reference curved model.
pub fn reference_mixture() -> MixtureModel {
    MixtureModel::new(vec![
        Component {
            weight: 0.5,
            mean: vec![3.0, 0.0],
            sigma: 0.5,
            class: "right".into(),
        },
        Component {
            weight: 0.5,
            mean: vec![-3.0, 0.0],
            sigma: 0.5,
            class: "left".into(),
        },
    ])
    .expect("reference mixture is valid")
}
