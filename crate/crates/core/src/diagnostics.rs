//! Per-step error quantities for zig-zag loops.
//!
//! A cycle at timestep `t` starts from `x_t`, denoises to `x'_{t-1}` and inverts back
//! to the revisit `x~_t`. The *matched* revisit repeats the inversion with its
//! predictions evaluated at `(x_t, t)` instead of `(x'_{t-1}, t-1)`. Then
//!
//! * semantic gain `tau1 = x_t - matched`: what the guidance gap moves, exactly
//!   proportional to the zig/zag weight difference;
//! * approximation error `tau2 = revisit - matched`: what evaluating the inversion at
//!   the displaced point costs. Zero whenever the inversion is exact.
//!
//! `tau2` is further split against an on-manifold reference: the same mismatch term
//! computed at a fine-substep, conditional-only solution `x_{t-1}^on` from `x_t`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sampler::{denoise_ab, invert_ab};
use crate::schedule::NoiseSchedule;
use crate::scoremodel::{Condition, MixtureModel};
use crate::vector::sub;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: usize,
    /// Whether a zig-zag cycle ran at this step. Norms of idle steps are zero.
    pub cycled: bool,
    pub tau1_norm: f64,
    pub tau2_norm: f64,
    pub tau_local_norm: f64,
    pub tau_manifold_norm: f64,
    /// Manifold offset of the clean-sample estimate at this step (of `x_0` itself at `t = 0`).
    pub offset: f64,
    pub cumulative_tau2: f64,
    pub lambda2: Option<f64>,
    /// `||x_t - x~_t||` with the realized revisit.
    pub tau1_literal_norm: f64,
    /// `||x~_t - x~_{t+1}||` between consecutive revisits; mixes noise levels, kept for reference.
    pub tau2_literal_norm: Option<f64>,
}

impl DiagnosticsRecord {
    pub fn idle(t: usize) -> Self {
        Self {
            t,
            cycled: false,
            tau1_norm: 0.0,
            tau2_norm: 0.0,
            tau_local_norm: 0.0,
            tau_manifold_norm: 0.0,
            offset: 0.0,
            cumulative_tau2: 0.0,
            lambda2: None,
            tau1_literal_norm: 0.0,
            tau2_literal_norm: None,
        }
    }
}

pub fn semantic_gain(x_t: &[f64], x_tilde_t: &[f64]) -> Result<Vec<f64>> {
    check_dim(x_t.len(), x_tilde_t.len())?;
    Ok(sub(x_t, x_tilde_t))
}

/// Realized revisit minus the matched reference revisit of the same timestep.
pub fn approx_error(x_tilde_t: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    check_dim(reference.len(), x_tilde_t.len())?;
    Ok(sub(x_tilde_t, reference))
}

/// Both inversions of the on-manifold point `x_{t-1}^on` back to `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnManifoldPair {
    pub t: usize,
    pub point: Vec<f64>,
    /// Inversion with the prediction at `(x_{t-1}^on, t-1)`.
    pub inverted: Vec<f64>,
    /// Inversion with the prediction at `(x_t, t)`.
    pub inverted_matched: Vec<f64>,
}

/// Solves the conditional probability-flow step `t -> t-1` from `x_t` with `resolution`
/// DDIM substeps (log-linear alpha-bar in between) and inverts the result with a single
/// coarse step, as the sampler does.
pub fn on_manifold_pair(
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    x_t: &[f64],
    t: usize,
    cond: &Condition,
    resolution: usize,
) -> Result<OnManifoldPair> {
    if t < 2 || t > schedule.steps() {
        return Err(Error::TimestepOutOfRange {
            t,
            min: 2,
            max: schedule.steps(),
        });
    }
    if resolution == 0 {
        return Err(Error::InvalidRange(
            "reference resolution must be positive".into(),
        ));
    }
    check_dim(model.dim(), x_t.len())?;
    let (a_t, a_prev) = (schedule.alpha_bar(t)?, schedule.alpha_bar(t - 1)?);

    let mut x = x_t.to_vec();
    for j in 0..resolution {
        let s_hi = t as f64 - j as f64 / resolution as f64;
        let s_lo = t as f64 - (j + 1) as f64 / resolution as f64;
        let (a_hi, a_lo) = (schedule.alpha_bar_at(s_hi)?, schedule.alpha_bar_at(s_lo)?);
        let eps = model.eps_at(&x, a_hi, cond)?;
        x = denoise_ab(&x, &eps, a_hi, a_lo);
    }

    let eps_here = model.eps_at(&x, a_prev, cond)?;
    let eps_start = model.eps_at(x_t, a_t, cond)?;
    Ok(OnManifoldPair {
        t,
        inverted: invert_ab(&x, &eps_here, a_t, a_prev),
        inverted_matched: invert_ab(&x, &eps_start, a_t, a_prev),
        point: x,
    })
}

/// Splits `tau2` into `(tau_local, tau_manifold)`; the two sum to `tau2`.
pub fn decompose_error(
    tau2: &[f64],
    t: usize,
    reference: &OnManifoldPair,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if reference.t != t {
        return Err(Error::MisalignedReference(format!(
            "reference is for t = {}, error for t = {t}",
            reference.t
        )));
    }
    check_dim(tau2.len(), reference.inverted.len())?;
    check_dim(tau2.len(), reference.inverted_matched.len())?;
    let local = sub(&reference.inverted, &reference.inverted_matched);
    let manifold = sub(tau2, &local);
    Ok((local, manifold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceStats {
    /// Least-squares slope of cumulative tau2 against cycle index over the last half.
    pub slope: f64,
    /// Final cumulative tau2 over its value after 20% of the cycles.
    pub late_ratio: f64,
}

/// Summary growth statistics over a sequence of cycle records.
pub fn divergence_stats(records: &[DiagnosticsRecord]) -> DivergenceStats {
    let n = records.len();
    if n == 0 {
        return DivergenceStats {
            slope: 0.0,
            late_ratio: 1.0,
        };
    }
    let tail = &records[n / 2..];
    let slope = if tail.len() < 2 {
        0.0
    } else {
        let m = tail.len() as f64;
        let xs: Vec<f64> = (n / 2..n).map(|i| i as f64).collect();
        let x_mean = xs.iter().sum::<f64>() / m;
        let y_mean = tail.iter().map(|r| r.cumulative_tau2).sum::<f64>() / m;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, r) in xs.iter().zip(tail) {
            sxy += (x - x_mean) * (r.cumulative_tau2 - y_mean);
            sxx += (x - x_mean) * (x - x_mean);
        }
        sxy / sxx
    };
    let early = ((0.2 * n as f64).round() as usize).max(1);
    let (first, last) = (
        records[early - 1].cumulative_tau2,
        records[n - 1].cumulative_tau2,
    );
    let late_ratio = if first == 0.0 {
        if last == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        last / first
    };
    DivergenceStats { slope, late_ratio }
}
