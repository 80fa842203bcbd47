//! Default parameters and the pipeline configuration.

use serde::{Deserialize, Serialize};

use crate::dp::SplitScheme;
use crate::error::{Error, Result};

pub const DEFAULT_RAYS: usize = 36;
pub const DEFAULT_POSITIONS: usize = 22;
pub const DEFAULT_SIGMA: usize = 1;
/// Radius of position 1, in pixels.
pub const DEFAULT_RAY_OFFSET: f64 = 17.0;
/// Distance between consecutive positions, in pixels.
pub const DEFAULT_RAY_SPACING: f64 = 3.0;
pub const DEFAULT_THETA_PRE: f64 = 2.0;
pub const DEFAULT_THETA_CLS: f64 = -1.5;
pub const DEFAULT_C: f64 = 10.0;
pub const DEFAULT_STRIDE: usize = 10;
pub const DEFAULT_NMS_RADIUS: f64 = 100.0;
pub const DEFAULT_MATCH_RADIUS: f64 = 100.0;

/// Every tunable of the detection pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub rays: usize,
    pub positions: usize,
    pub sigma: usize,
    pub ray_offset: f64,
    pub ray_spacing: f64,
    pub theta_pre: f64,
    pub theta_cls: f64,
    pub stride: usize,
    pub nms_radius: f64,
    pub match_radius: f64,
    pub scheme: SplitScheme,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rays: DEFAULT_RAYS,
            positions: DEFAULT_POSITIONS,
            sigma: DEFAULT_SIGMA,
            ray_offset: DEFAULT_RAY_OFFSET,
            ray_spacing: DEFAULT_RAY_SPACING,
            theta_pre: DEFAULT_THETA_PRE,
            theta_cls: DEFAULT_THETA_CLS,
            stride: DEFAULT_STRIDE,
            nms_radius: DEFAULT_NMS_RADIUS,
            match_radius: DEFAULT_MATCH_RADIUS,
            scheme: SplitScheme::Adap,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rays < 3 {
            return Err(Error::invalid(format!(
                "need at least 3 rays, got {}",
                self.rays
            )));
        }
        if self.positions == 0 || self.sigma == 0 || self.stride == 0 {
            return Err(Error::invalid(
                "positions, sigma and stride must be positive",
            ));
        }
        let finite_pos = [self.ray_spacing, self.nms_radius, self.match_radius];
        if finite_pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("spacing and radii must be positive"));
        }
        if !(self.ray_offset.is_finite() && self.ray_offset >= 0.0) {
            return Err(Error::invalid("ray offset must be non-negative"));
        }
        if self.theta_pre.is_nan() || self.theta_cls.is_nan() {
            return Err(Error::invalid("thresholds must not be NaN"));
        }
        Ok(())
    }

    /// Parses a TOML table; absent keys keep their defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(s).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_toml_overrides() {
        let cfg = PipelineConfig::from_toml_str("theta_cls = 0.25\nscheme = \"half\"\n").unwrap();
        assert_eq!(cfg.theta_cls, 0.25);
        assert_eq!(cfg.scheme, SplitScheme::Half);
        assert_eq!(cfg.rays, DEFAULT_RAYS);
        assert!(PipelineConfig::from_toml_str("rays = 2").is_err());
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
    }
}
