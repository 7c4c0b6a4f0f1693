//! Forward-process noise schedule.
//!
//! `alpha_bars[t] = prod_{i=1..t} (1 - beta_i)` is stored for `t = 0..=T`, with
//! `alpha_bars[0] = 1`. Denoising runs `t = T, ..., 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Serialized form of a linear-beta schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
}

fn default_beta_start() -> f64 {
    DEFAULT_BETA_START
}

fn default_beta_end() -> f64 {
    DEFAULT_BETA_END
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    config: ScheduleConfig,
}

impl NoiseSchedule {
    /// Linearly spaced betas from `beta_start` to `beta_end` inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidRange(
                "schedule needs at least one step".into(),
            ));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidRange(format!(
                "need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
            )));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            let span = (beta_end - beta_start) / (steps - 1) as f64;
            (0..steps).map(|i| beta_start + span * i as f64).collect()
        };
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        for beta in &betas {
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * (1.0 - beta));
        }
        Ok(Self {
            betas,
            alpha_bars,
            config: ScheduleConfig {
                steps,
                beta_start,
                beta_end,
            },
        })
    }

    pub fn default_linear(steps: usize) -> Result<Self> {
        Self::linear(steps, DEFAULT_BETA_START, DEFAULT_BETA_END)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or(Error::TimestepOutOfRange {
                t,
                min: 0,
                max: self.steps(),
            })
    }

    /// `(alpha_bar[t], alpha_bar[t-1])` for a denoising step out of `t`.
    pub(crate) fn step_pair(&self, t: usize) -> Result<(f64, f64)> {
        if t == 0 || t > self.steps() {
            return Err(Error::TimestepOutOfRange {
                t,
                min: 1,
                max: self.steps(),
            });
        }
        Ok((self.alpha_bars[t], self.alpha_bars[t - 1]))
    }

    /// Log-linear interpolation of alpha-bar at a fractional timestep `s in [0, T]`.
    pub fn alpha_bar_at(&self, s: f64) -> Result<f64> {
        let max = self.steps();
        if !(0.0..=max as f64).contains(&s) {
            return Err(Error::TimestepOutOfRange {
                t: s.max(0.0).ceil() as usize,
                min: 0,
                max,
            });
        }
        let lo = s.floor() as usize;
        let frac = s - lo as f64;
        if frac == 0.0 {
            return Ok(self.alpha_bars[lo]);
        }
        let (a, b) = (self.alpha_bars[lo].ln(), self.alpha_bars[lo + 1].ln());
        Ok((a + (b - a) * frac).exp())
    }
}
