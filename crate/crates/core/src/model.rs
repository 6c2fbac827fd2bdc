//! Game models: drift, rewards and diffusion shared by the PDE solver and
//! the finite-player simulator.
//!
//! The drift never depends on the population measure; only the rewards do.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::StateMeasure;

/// Coefficients of a one-dimensional graphon game with constant diffusion.
pub trait GameModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn drift(&self, t: f64, x: f64, a: f64) -> f64;

    fn running_reward(&self, t: f64, x: f64, m: &dyn StateMeasure, a: f64) -> f64;

    fn terminal_reward(&self, x: f64, m: &dyn StateMeasure) -> f64;

    fn sigma(&self) -> f64;

    fn horizon(&self) -> f64;

    /// Whether either reward reads the measure argument.
    fn uses_measure(&self) -> bool;

    /// Whether the running reward reads the measure argument.
    fn running_uses_measure(&self) -> bool {
        self.uses_measure()
    }
}

/// Built-in model registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `b = a`, `f = -a^2/2`, `g = -(c/2)(x - mean(m))^2` with the raw mean.
    LqTruncated {
        c: f64,
        #[serde(rename = "T")]
        horizon: f64,
        sigma: f64,
    },
    /// `b = a`, `f = -a^2/2 - kappa m([x - h, x + h])`, `g = -(c/2)(x - z)^2`.
    CrowdAversion {
        kappa: f64,
        h: f64,
        c: f64,
        z: f64,
        #[serde(rename = "T")]
        horizon: f64,
        sigma: f64,
    },
    /// Tracking of a frozen target: `g = -(c/2)(x - z0)^2`, no interaction.
    DecoupledTest {
        c: f64,
        z0: f64,
        #[serde(rename = "T")]
        horizon: f64,
        sigma: f64,
    },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let (c, horizon, sigma) = match self {
            ModelSpec::LqTruncated { c, horizon, sigma } => (*c, *horizon, *sigma),
            ModelSpec::CrowdAversion { kappa, h, c, horizon, sigma, z } => {
                if !(*kappa >= 0.0) || !(*h >= 0.0) || !z.is_finite() {
                    return Err(Error::invalid("model", "crowd aversion needs kappa >= 0, h >= 0, finite z"));
                }
                (*c, *horizon, *sigma)
            }
            ModelSpec::DecoupledTest { c, z0, horizon, sigma } => {
                if !z0.is_finite() {
                    return Err(Error::invalid("z0", "target must be finite"));
                }
                (*c, *horizon, *sigma)
            }
        };
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::invalid("c", format!("must be positive, got {c}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("T", format!("must be positive, got {horizon}")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("sigma", format!("must be nonnegative, got {sigma}")));
        }
        Ok(())
    }

    /// Terminal tracking weight `c`.
    pub fn c(&self) -> f64 {
        match self {
            ModelSpec::LqTruncated { c, .. }
            | ModelSpec::CrowdAversion { c, .. }
            | ModelSpec::DecoupledTest { c, .. } => *c,
        }
    }
}

impl GameModel for ModelSpec {
    fn name(&self) -> &'static str {
        match self {
            ModelSpec::LqTruncated { .. } => "lq_truncated",
            ModelSpec::CrowdAversion { .. } => "crowd_aversion",
            ModelSpec::DecoupledTest { .. } => "decoupled_test",
        }
    }

    fn drift(&self, _t: f64, _x: f64, a: f64) -> f64 {
        a
    }

    fn running_reward(&self, _t: f64, x: f64, m: &dyn StateMeasure, a: f64) -> f64 {
        match self {
            ModelSpec::CrowdAversion { kappa, h, .. } => -0.5 * a * a - kappa * m.mass_within(x - h, x + h),
            _ => -0.5 * a * a,
        }
    }

    fn terminal_reward(&self, x: f64, m: &dyn StateMeasure) -> f64 {
        let (c, target) = match self {
            ModelSpec::LqTruncated { c, .. } => (*c, m.raw_mean()),
            ModelSpec::CrowdAversion { c, z, .. } => (*c, *z),
            ModelSpec::DecoupledTest { c, z0, .. } => (*c, *z0),
        };
        -0.5 * c * (x - target) * (x - target)
    }

    fn sigma(&self) -> f64 {
        match self {
            ModelSpec::LqTruncated { sigma, .. }
            | ModelSpec::CrowdAversion { sigma, .. }
            | ModelSpec::DecoupledTest { sigma, .. } => *sigma,
        }
    }

    fn horizon(&self) -> f64 {
        match self {
            ModelSpec::LqTruncated { horizon, .. }
            | ModelSpec::CrowdAversion { horizon, .. }
            | ModelSpec::DecoupledTest { horizon, .. } => *horizon,
        }
    }

    fn uses_measure(&self) -> bool {
        !matches!(self, ModelSpec::DecoupledTest { .. })
    }

    fn running_uses_measure(&self) -> bool {
        matches!(self, ModelSpec::CrowdAversion { .. })
    }
}
