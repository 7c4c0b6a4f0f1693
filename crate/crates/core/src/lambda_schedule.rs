//! Time-varying interpolation weight for the inversion half of a guided-path cycle.
//!
//! Progress runs `p = (T - t) / (T - 1)`, so `p = 0` at the first (noisiest) step and
//! `p = 1` at `t = 1`. "Up" kinds therefore strengthen as denoising proceeds.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIGMOID_SHARPNESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Linear,
    CosineUp,
    CosineDown,
    Sigmoid,
    CosineUpDown,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 6] = [
        ScheduleKind::Constant,
        ScheduleKind::Linear,
        ScheduleKind::CosineUp,
        ScheduleKind::CosineDown,
        ScheduleKind::Sigmoid,
        ScheduleKind::CosineUpDown,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    lo: f64,
    hi: f64,
    sharpness: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawSchedule {
    kind: ScheduleKind,
    lo: f64,
    #[serde(default)]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sharpness: Option<f64>,
}

impl TryFrom<RawSchedule> for ScheduleSpec {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        let hi = raw.hi.unwrap_or(raw.lo);
        let spec = Self::new(raw.kind, raw.lo, hi)?;
        match raw.sharpness {
            Some(s) => spec.with_sharpness(s),
            None => Ok(spec),
        }
    }
}

impl From<ScheduleSpec> for RawSchedule {
    fn from(s: ScheduleSpec) -> Self {
        RawSchedule {
            kind: s.kind,
            lo: s.lo,
            hi: Some(s.hi),
            sharpness: (s.kind == ScheduleKind::Sigmoid).then_some(s.sharpness),
        }
    }
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, lo: f64, hi: f64) -> Result<Self> {
        let hi = if kind == ScheduleKind::Constant {
            hi.max(lo)
        } else {
            hi
        };
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidRange(format!(
                "schedule needs 0 <= lo <= hi <= 1, got lo={lo}, hi={hi}"
            )));
        }
        Ok(Self {
            kind,
            lo,
            hi,
            sharpness: DEFAULT_SIGMOID_SHARPNESS,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, value, value)
    }

    pub fn with_sharpness(mut self, sharpness: f64) -> Result<Self> {
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(Error::InvalidRange(format!(
                "sigmoid sharpness must be positive, got {sharpness}"
            )));
        }
        self.sharpness = sharpness;
        Ok(self)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    /// Weight at timestep `t` of a run with `total` steps.
    pub fn eval(&self, t: usize, total: usize) -> Result<f64> {
        if t == 0 || t > total {
            return Err(Error::TimestepOutOfRange {
                t,
                min: 1,
                max: total,
            });
        }
        if self.kind == ScheduleKind::Constant {
            return Ok(self.lo);
        }
        if total < 2 {
            return Err(Error::InvalidRange(format!(
                "{:?} schedule needs at least 2 steps, got {total}",
                self.kind
            )));
        }
        let p = (total - t) as f64 / (total - 1) as f64;
        Ok(self.at_progress(p))
    }

    /// Weight at progress `p in [0, 1]`.
    pub fn at_progress(&self, p: f64) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        let span = hi - lo;
        // Endpoints are returned exactly; the cosine forms do not hit them in floating point.
        let v = match self.kind {
            ScheduleKind::Constant => return lo,
            ScheduleKind::Linear => lo + span * p,
            ScheduleKind::CosineUp => lo + span * (1.0 - (PI * p).cos()) / 2.0,
            ScheduleKind::CosineDown => hi - span * (1.0 - (PI * p).cos()) / 2.0,
            ScheduleKind::Sigmoid => {
                let s = |q: f64| 1.0 / (1.0 + (-self.sharpness * (q - 0.5)).exp());
                let (s0, s1) = (s(0.0), s(1.0));
                lo + span * (s(p) - s0) / (s1 - s0)
            }
            ScheduleKind::CosineUpDown => lo + span * (1.0 - (2.0 * PI * p).cos()) / 2.0,
        };
        let (start, end) = self.endpoints();
        if p <= 0.0 {
            start
        } else if p >= 1.0 {
            end
        } else {
            v.clamp(lo, hi)
        }
    }

    /// Scheduled values at the first and last step.
    pub fn endpoints(&self) -> (f64, f64) {
        match self.kind {
            ScheduleKind::Constant => (self.lo, self.lo),
            ScheduleKind::CosineDown => (self.hi, self.lo),
            ScheduleKind::CosineUpDown => (self.lo, self.lo),
            _ => (self.lo, self.hi),
        }
    }

    /// The seven inversion schedules of the scheduler ablation, labelled as in the
    /// usual table rows.
    pub fn ablation_family(lo: f64, hi: f64) -> Result<Vec<(String, ScheduleSpec)>> {
        Ok(vec![
            (format!("constant({lo})"), Self::constant(lo)?),
            (format!("constant({hi})"), Self::constant(hi)?),
            (
                format!("sigmoid({lo}->{hi})"),
                Self::new(ScheduleKind::Sigmoid, lo, hi)?,
            ),
            (
                format!("linear({lo}->{hi})"),
                Self::new(ScheduleKind::Linear, lo, hi)?,
            ),
            (
                format!("cosine_up({lo}->{hi})"),
                Self::new(ScheduleKind::CosineUp, lo, hi)?,
            ),
            (
                format!("cosine_down({hi}->{lo})"),
                Self::new(ScheduleKind::CosineDown, lo, hi)?,
            ),
            (
                format!("cosine_up_down({lo}->{hi}->{lo})"),
                Self::new(ScheduleKind::CosineUpDown, lo, hi)?,
            ),
        ])
    }
}
