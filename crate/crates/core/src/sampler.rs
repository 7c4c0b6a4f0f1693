//! DDIM and guided-path step operators plus the three sampling loops.
//!
//! Inversion evaluates its noise prediction at the state being inverted,
//! `(x_{t-1}, t-1)`, so a zig-zag cycle does not return to its start even when both
//! halves use the same guidance. Each cycle also computes the revisit it *would* reach
//! with predictions evaluated at the cycle's start `(x_t, t)`; that reference splits the
//! realized displacement into semantic gain and approximation error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{check_dim, Error, Result};
use crate::guidance::{combine_weighted, GuidanceSpec};
use crate::lambda_schedule::ScheduleSpec;
use crate::schedule::NoiseSchedule;
use crate::scoremodel::{Condition, MixtureModel};
use crate::vector::{self, norm};

pub const DEFAULT_REFERENCE_RESOLUTION: usize = 10;

pub(crate) fn denoise_ab(x: &[f64], eps: &[f64], a_t: f64, a_prev: f64) -> Vec<f64> {
    split_denoise_ab(x, eps, eps, a_t, a_prev)
}

pub(crate) fn invert_ab(x_prev: &[f64], eps: &[f64], a_t: f64, a_prev: f64) -> Vec<f64> {
    split_invert_ab(x_prev, eps, eps, a_t, a_prev)
}

fn split_denoise_ab(x: &[f64], eps_x0: &[f64], eps_dir: &[f64], a_t: f64, a_prev: f64) -> Vec<f64> {
    let (st, sp) = (a_t.sqrt(), a_prev.sqrt());
    let (nt, np) = ((1.0 - a_t).sqrt(), (1.0 - a_prev).sqrt());
    x.iter()
        .zip(eps_x0)
        .zip(eps_dir)
        .map(|((xi, e0), ed)| sp * ((xi - nt * e0) / st) + np * ed)
        .collect()
}

fn split_invert_ab(
    x_prev: &[f64],
    eps_x0: &[f64],
    eps_dir: &[f64],
    a_t: f64,
    a_prev: f64,
) -> Vec<f64> {
    let (st, sp) = (a_t.sqrt(), a_prev.sqrt());
    let (nt, np) = ((1.0 - a_t).sqrt(), (1.0 - a_prev).sqrt());
    x_prev
        .iter()
        .zip(eps_x0)
        .zip(eps_dir)
        .map(|((xi, e0), ed)| st * ((xi - np * e0) / sp) + nt * ed)
        .collect()
}

/// DDIM denoise `x_t -> x_{t-1}` with the same `eps` in the clean-estimate and
/// direction terms.
pub fn ddim_denoise(
    x_t: &[f64],
    eps: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_dim(x_t.len(), eps.len())?;
    let (a_t, a_prev) = schedule.step_pair(t)?;
    Ok(denoise_ab(x_t, eps, a_t, a_prev))
}

/// DDIM inversion `x_{t-1} -> x_t`; the exact inverse of [`ddim_denoise`] given the same `eps`.
pub fn ddim_invert(
    x_prev: &[f64],
    eps: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_dim(x_prev.len(), eps.len())?;
    let (a_t, a_prev) = schedule.step_pair(t)?;
    Ok(invert_ab(x_prev, eps, a_t, a_prev))
}

/// Guided-path denoise: interpolated estimate in the clean-sample term, unconditional
/// estimate in the direction term.
pub fn gps_denoise(
    x_t: &[f64],
    eps_lambda: &[f64],
    eps_uncond: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_dim(x_t.len(), eps_lambda.len())?;
    check_dim(x_t.len(), eps_uncond.len())?;
    let (a_t, a_prev) = schedule.step_pair(t)?;
    Ok(split_denoise_ab(x_t, eps_lambda, eps_uncond, a_t, a_prev))
}

/// Guided-path inversion, mirroring [`gps_denoise`] with `sqrt(alpha_bar_t)` leading.
/// Not an exact inverse of [`gps_denoise`] unless the two predictions coincide.
pub fn gps_invert(
    x_prev: &[f64],
    eps_lambda: &[f64],
    eps_uncond: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_dim(x_prev.len(), eps_lambda.len())?;
    check_dim(x_prev.len(), eps_uncond.len())?;
    let (a_t, a_prev) = schedule.step_pair(t)?;
    Ok(split_invert_ab(x_prev, eps_lambda, eps_uncond, a_t, a_prev))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Standard { guidance: GuidanceSpec },
    Zigzag { omega_h: f64, omega_l: f64 },
    Gps { lambda1: f64, lambda2: ScheduleSpec },
}

/// Time axis of the inversion-weight schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaDomain {
    /// Progress over the whole run, `t = T..1`.
    #[default]
    Full,
    /// Progress over the zig-zag window only, `t = T..T-K+1`.
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: Method,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "K", default)]
    pub reflections: usize,
    pub cond: Condition,
    #[serde(default)]
    pub seed: u64,
    /// Zig-zag cycles per timestep inside the window.
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default, rename = "lambda2_domain")]
    pub lambda_domain: LambdaDomain,
    /// Substeps per step of the on-manifold reference path.
    #[serde(default = "default_resolution")]
    pub reference_resolution: usize,
}

fn one() -> usize {
    1
}

fn default_resolution() -> usize {
    DEFAULT_REFERENCE_RESOLUTION
}

impl SamplerConfig {
    pub fn new(
        method: Method,
        steps: usize,
        reflections: usize,
        cond: Condition,
        seed: u64,
    ) -> Self {
        Self {
            method,
            steps,
            reflections,
            cond,
            seed,
            repeats: 1,
            lambda_domain: LambdaDomain::Full,
            reference_resolution: DEFAULT_REFERENCE_RESOLUTION,
        }
    }

    pub fn validate(&self, model: &MixtureModel, schedule: &NoiseSchedule) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.steps == 0 {
            return bad("T must be at least 1".into());
        }
        if self.steps != schedule.steps() {
            return bad(format!(
                "T = {} does not match the noise schedule's {} steps",
                self.steps,
                schedule.steps()
            ));
        }
        if self.reflections > self.steps - 1 {
            return bad(format!(
                "K = {} exceeds T - 1 = {}",
                self.reflections,
                self.steps - 1
            ));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.reference_resolution < DEFAULT_REFERENCE_RESOLUTION {
            return bad(format!(
                "reference resolution must be at least {DEFAULT_REFERENCE_RESOLUTION}, got {}",
                self.reference_resolution
            ));
        }
        model.validate_condition(&self.cond)?;
        match self.method {
            Method::Standard { guidance } => {
                if self.reflections != 0 {
                    return bad("standard sampling has no zig-zag window; K must be 0".into());
                }
                // Re-run the range check for hand-built enum values.
                match guidance {
                    GuidanceSpec::Extrapolate(w) => GuidanceSpec::extrapolate(w).map(|_| ()),
                    GuidanceSpec::Interpolate(w) => GuidanceSpec::interpolate(w).map(|_| ()),
                }
            }
            Method::Zigzag { omega_h, omega_l } => {
                GuidanceSpec::extrapolate(omega_h)?;
                GuidanceSpec::extrapolate(omega_l)?;
                if omega_h < omega_l {
                    return bad(format!(
                        "zigzag needs omega_h >= omega_l, got {omega_h} < {omega_l}"
                    ));
                }
                Ok(())
            }
            Method::Gps { lambda1, lambda2 } => {
                GuidanceSpec::interpolate(lambda1)?;
                let span = match self.lambda_domain {
                    LambdaDomain::Full => self.steps,
                    LambdaDomain::Window => self.reflections,
                };
                if self.reflections > 0 {
                    lambda2.eval(span, span)?;
                }
                Ok(())
            }
        }
    }

    fn lambda2_at(&self, spec: &ScheduleSpec, t: usize) -> Result<f64> {
        match self.lambda_domain {
            LambdaDomain::Full => spec.eval(t, self.steps),
            LambdaDomain::Window => {
                let start = self.steps - self.reflections;
                spec.eval(t - start, self.reflections)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: usize,
    pub x: Vec<f64>,
}

/// One zig-zag revisit of timestep `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub t: usize,
    pub repeat: usize,
    /// `x_t` before the cycle.
    pub start: Vec<f64>,
    /// `x'_{t-1}` after the zig (denoise) half.
    pub zig: Vec<f64>,
    /// `x~_t` after the zag (inversion) half; replaces `x_t`.
    pub revisit: Vec<f64>,
    /// Revisit with inversion predictions evaluated at `(start, t)`.
    pub reference: Vec<f64>,
    pub lambda2: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub denoise: usize,
    pub invert: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Main path, `t = T, ..., 0`. Each `x_t` is the state actually denoised, i.e. after
    /// any zig-zag replacement.
    pub states: Vec<State>,
    pub cycles: Vec<Cycle>,
    /// One record per main-path state, aligned with `states`.
    pub records: Vec<DiagnosticsRecord>,
    pub calls: CallCounts,
}

impl Trajectory {
    pub fn final_sample(&self) -> &[f64] {
        &self
            .states
            .last()
            .expect("trajectory has a terminal state")
            .x
    }

    pub fn cycle_records(&self) -> Vec<DiagnosticsRecord> {
        self.records.iter().filter(|r| r.cycled).cloned().collect()
    }

    pub fn cumulative_tau2(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_tau2)
    }

    pub fn final_offset(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.offset)
    }
}

/// Model evaluations shared by every step operator.
struct Oracle<'a> {
    model: &'a MixtureModel,
    cond: &'a Condition,
}

impl Oracle<'_> {
    fn pair(&self, x: &[f64], a: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.model.eps_at(x, a, &Condition::Unconditional)?;
        let c = match self.cond {
            Condition::Unconditional => u.clone(),
            cond => self.model.eps_at(x, a, cond)?,
        };
        Ok((u, c))
    }
}

struct Step {
    next: Vec<f64>,
    eps_x0: Vec<f64>,
}

/// Per-method step operators.
trait Operators {
    fn denoise(&self, o: &Oracle, x: &[f64], a_t: f64, a_prev: f64) -> Result<Step>;
    /// Inversion of `zig` back to `t`, with predictions evaluated at `(at, a_eval)`.
    #[allow(clippy::too_many_arguments)]
    fn invert(
        &self,
        o: &Oracle,
        zig: &[f64],
        at: &[f64],
        a_eval: f64,
        lambda2: f64,
        a_t: f64,
        a_prev: f64,
    ) -> Result<Vec<f64>>;
}

struct Ddim {
    zig: f64,
    zag: f64,
}

impl Operators for Ddim {
    fn denoise(&self, o: &Oracle, x: &[f64], a_t: f64, a_prev: f64) -> Result<Step> {
        let (u, c) = o.pair(x, a_t)?;
        let eps = combine_weighted(self.zig, &u, &c)?;
        Ok(Step {
            next: denoise_ab(x, &eps, a_t, a_prev),
            eps_x0: eps,
        })
    }

    fn invert(
        &self,
        o: &Oracle,
        zig: &[f64],
        at: &[f64],
        a_eval: f64,
        _: f64,
        a_t: f64,
        a_prev: f64,
    ) -> Result<Vec<f64>> {
        let (u, c) = o.pair(at, a_eval)?;
        let eps = combine_weighted(self.zag, &u, &c)?;
        Ok(invert_ab(zig, &eps, a_t, a_prev))
    }
}

struct GuidedPath {
    lambda1: f64,
}

impl Operators for GuidedPath {
    fn denoise(&self, o: &Oracle, x: &[f64], a_t: f64, a_prev: f64) -> Result<Step> {
        let (u, c) = o.pair(x, a_t)?;
        let eps = combine_weighted(self.lambda1, &u, &c)?;
        Ok(Step {
            next: split_denoise_ab(x, &eps, &u, a_t, a_prev),
            eps_x0: eps,
        })
    }

    fn invert(
        &self,
        o: &Oracle,
        zig: &[f64],
        at: &[f64],
        a_eval: f64,
        lambda2: f64,
        a_t: f64,
        a_prev: f64,
    ) -> Result<Vec<f64>> {
        let (u, c) = o.pair(at, a_eval)?;
        let eps = combine_weighted(lambda2, &u, &c)?;
        Ok(split_invert_ab(zig, &eps, &u, a_t, a_prev))
    }
}

pub fn initial_noise(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn run_standard(
    cfg: &SamplerConfig,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
) -> Result<Trajectory> {
    match cfg.method {
        Method::Standard { .. } => run(cfg, model, schedule),
        _ => Err(Error::InvalidConfig(
            "run_standard needs a standard method".into(),
        )),
    }
}

pub fn run_zigzag(
    cfg: &SamplerConfig,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
) -> Result<Trajectory> {
    match cfg.method {
        Method::Zigzag { .. } => run(cfg, model, schedule),
        _ => Err(Error::InvalidConfig(
            "run_zigzag needs a zigzag method".into(),
        )),
    }
}

pub fn run_gps(
    cfg: &SamplerConfig,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
) -> Result<Trajectory> {
    match cfg.method {
        Method::Gps { .. } => run(cfg, model, schedule),
        _ => Err(Error::InvalidConfig("run_gps needs a gps method".into())),
    }
}

/// Runs any configured method from seeded `x_T ~ N(0, I)`.
pub fn run(
    cfg: &SamplerConfig,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
) -> Result<Trajectory> {
    cfg.validate(model, schedule)?;
    let x_t = initial_noise(model.dim(), cfg.seed);
    match cfg.method {
        Method::Standard { guidance } => {
            let ops = Ddim {
                zig: guidance.weight(),
                zag: guidance.weight(),
            };
            drive(cfg, model, schedule, &ops, None, x_t)
        }
        Method::Zigzag { omega_h, omega_l } => {
            let ops = Ddim {
                zig: omega_h,
                zag: omega_l,
            };
            drive(cfg, model, schedule, &ops, None, x_t)
        }
        Method::Gps { lambda1, lambda2 } => {
            let ops = GuidedPath { lambda1 };
            drive(cfg, model, schedule, &ops, Some(lambda2), x_t)
        }
    }
}

fn drive(
    cfg: &SamplerConfig,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    ops: &dyn Operators,
    lambda2: Option<ScheduleSpec>,
    mut x: Vec<f64>,
) -> Result<Trajectory> {
    let oracle = Oracle {
        model,
        cond: &cfg.cond,
    };
    let total = cfg.steps;
    let window_start = total - cfg.reflections;
    let mut states = Vec::with_capacity(total + 1);
    let mut cycles = Vec::new();
    let mut records = Vec::with_capacity(total + 1);
    let mut calls = CallCounts::default();
    let mut cumulative = 0.0;
    let mut last_revisit: Option<Vec<f64>> = None;

    for t in (1..=total).rev() {
        let (a_t, a_prev) = schedule.step_pair(t)?;
        let mut record = DiagnosticsRecord::idle(t);

        if t > window_start {
            let weight2 = match &lambda2 {
                Some(spec) => Some(cfg.lambda2_at(spec, t)?),
                None => None,
            };
            for repeat in 0..cfg.repeats {
                let start = x.clone();
                let zig = ops.denoise(&oracle, &start, a_t, a_prev)?.next;
                calls.denoise += 1;
                let l2 = weight2.unwrap_or(0.0);
                let revisit = ops.invert(&oracle, &zig, &zig, a_prev, l2, a_t, a_prev)?;
                calls.invert += 1;
                let matched = ops.invert(&oracle, &zig, &start, a_t, l2, a_t, a_prev)?;

                let tau1 = diagnostics::semantic_gain(&start, &matched)?;
                let tau2 = diagnostics::approx_error(&revisit, &matched)?;
                let pair = diagnostics::on_manifold_pair(
                    model,
                    schedule,
                    &start,
                    t,
                    &cfg.cond,
                    cfg.reference_resolution,
                )?;
                let (local, manifold) = diagnostics::decompose_error(&tau2, t, &pair)?;

                record.cycled = true;
                record.tau1_norm += norm(&tau1);
                record.tau2_norm += norm(&tau2);
                record.tau_local_norm += norm(&local);
                record.tau_manifold_norm += norm(&manifold);
                record.tau1_literal_norm += vector::distance(&start, &revisit);
                if let Some(prev) = &last_revisit {
                    let lit = vector::distance(&revisit, prev);
                    *record.tau2_literal_norm.get_or_insert(0.0) += lit;
                }
                last_revisit = Some(revisit.clone());

                cycles.push(Cycle {
                    t,
                    repeat,
                    start,
                    zig,
                    revisit: revisit.clone(),
                    reference: matched,
                    lambda2: weight2,
                });
                x = revisit;
            }
            record.lambda2 = weight2;
        }

        let step = ops.denoise(&oracle, &x, a_t, a_prev)?;
        calls.denoise += 1;
        let x0_hat: Vec<f64> = {
            let (st, nt) = (a_t.sqrt(), (1.0 - a_t).sqrt());
            x.iter()
                .zip(&step.eps_x0)
                .map(|(xi, e)| (xi - nt * e) / st)
                .collect()
        };
        record.offset = model.manifold_offset(&x0_hat)?;
        cumulative += record.tau2_norm;
        record.cumulative_tau2 = cumulative;
        records.push(record);
        states.push(State { t, x });
        x = step.next;
    }

    let mut terminal = DiagnosticsRecord::idle(0);
    terminal.offset = model.manifold_offset(&x)?;
    terminal.cumulative_tau2 = cumulative;
    records.push(terminal);
    states.push(State { t: 0, x });

    Ok(Trajectory {
        states,
        cycles,
        records,
        calls,
    })
}
