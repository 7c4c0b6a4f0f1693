//! Combining unconditional and conditional noise predictions.
//!
//! Both modes compute `(1 - w) * eps_uncond + w * eps_cond`. Extrapolation (classic
//! classifier-free guidance) accepts any `w >= 0`; interpolation keeps the estimate in
//! the convex hull of the two predictions and rejects `w` outside `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGuidance", into = "RawGuidance")]
pub enum GuidanceSpec {
    Extrapolate(f64),
    Interpolate(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GuidanceMode {
    Extrapolate,
    Interpolate,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawGuidance {
    mode: GuidanceMode,
    weight: f64,
}

impl TryFrom<RawGuidance> for GuidanceSpec {
    type Error = Error;

    fn try_from(raw: RawGuidance) -> Result<Self> {
        match raw.mode {
            GuidanceMode::Extrapolate => Self::extrapolate(raw.weight),
            GuidanceMode::Interpolate => Self::interpolate(raw.weight),
        }
    }
}

impl From<GuidanceSpec> for RawGuidance {
    fn from(g: GuidanceSpec) -> Self {
        match g {
            GuidanceSpec::Extrapolate(weight) => RawGuidance {
                mode: GuidanceMode::Extrapolate,
                weight,
            },
            GuidanceSpec::Interpolate(weight) => RawGuidance {
                mode: GuidanceMode::Interpolate,
                weight,
            },
        }
    }
}

impl GuidanceSpec {
    pub fn extrapolate(omega: f64) -> Result<Self> {
        if omega >= 0.0 && omega.is_finite() {
            Ok(Self::Extrapolate(omega))
        } else {
            Err(Error::InvalidRange(format!(
                "extrapolation scale must be finite and >= 0, got {omega}"
            )))
        }
    }

    pub fn interpolate(lambda: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(Self::Interpolate(lambda))
        } else {
            Err(Error::InvalidRange(format!(
                "interpolation weight must lie in [0, 1], got {lambda}"
            )))
        }
    }

    pub fn weight(&self) -> f64 {
        match *self {
            Self::Extrapolate(w) | Self::Interpolate(w) => w,
        }
    }

    pub fn combine(&self, eps_uncond: &[f64], eps_cond: &[f64]) -> Result<Vec<f64>> {
        combine_weighted(self.weight(), eps_uncond, eps_cond)
    }
}

/// `(1 - w) * eps_uncond + w * eps_cond` without range checks on `w`.
pub(crate) fn combine_weighted(w: f64, eps_uncond: &[f64], eps_cond: &[f64]) -> Result<Vec<f64>> {
    check_dim(eps_uncond.len(), eps_cond.len())?;
    let inside = (0.0..=1.0).contains(&w);
    Ok(eps_uncond
        .iter()
        .zip(eps_cond)
        .map(|(&u, &c)| {
            let v = (1.0 - w) * u + w * c;
            // Rounding can step a few ulps outside the hull of the two inputs.
            if inside {
                v.clamp(u.min(c), u.max(c))
            } else {
                v
            }
        })
        .collect())
}

/// The semantic direction `eps_cond - eps_uncond`.
pub fn guidance_gap(eps_uncond: &[f64], eps_cond: &[f64]) -> Result<Vec<f64>> {
    check_dim(eps_uncond.len(), eps_cond.len())?;
    Ok(crate::vector::sub(eps_cond, eps_uncond))
}
