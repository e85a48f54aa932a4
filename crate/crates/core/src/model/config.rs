//! JSON model configuration.
//!
//! ```json
//! {
//!   "model":    { "family": "auction",
//!                 "params": { "v": 0.5, "comp_hi": 0.3, "kappa": 0.5,
//!                             "r0": 0.15, "noise_half_width": 0.1 } },
//!   "noise":    { "nodes": 41 },
//!   "controls": { "lo": 0.0, "step": 0.01, "count": 301 },
//!   "domain":   { "x_lo": -0.5, "x_hi": 3.0, "T": 1.0 }
//! }
//! ```
//!
//! `noise.kind` may be `"uniform"` (default) or `"two_point"` with `noise.c`.
//! The `"generic"` family takes explicit `drift`, `diffusion` and `reward`
//! coefficient families instead of auction parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AuctionParams, ControlGrid, Domain, Drift, ModelSpec, Noise, NoiseQuadrature, Reward};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSection {
    Auction {
        #[serde(default)]
        params: AuctionParams,
    },
    Generic {
        drift: Drift,
        diffusion: Noise,
        reward: Reward,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform,
    TwoPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_kind")]
    pub kind: NoiseKind,
    /// Half-width for a generic uniform law; the auction family takes it from its params.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Scale of the two-point law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

fn default_nodes() -> usize {
    41
}

fn default_kind() -> NoiseKind {
    NoiseKind::Uniform
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            nodes: default_nodes(),
            kind: default_kind(),
            half_width: None,
            c: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlsConfig {
    pub lo: f64,
    pub step: f64,
    pub count: usize,
}

impl Default for ControlsConfig {
    fn default() -> Self {
        Self {
            lo: 0.0,
            step: 0.01,
            count: 301,
        }
    }
}

fn default_domain() -> Domain {
    Domain {
        x_lo: -0.5,
        x_hi: 3.0,
        horizon: 1.0,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub controls: ControlsConfig,
    #[serde(default = "default_domain")]
    pub domain: Domain,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::Auction {
                params: AuctionParams::default(),
            },
            noise: NoiseConfig::default(),
            controls: ControlsConfig::default(),
            domain: default_domain(),
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let controls =
            ControlGrid::even(self.controls.lo, self.controls.step, self.controls.count)?;
        self.domain.check()?;
        let (drift, noise, reward, uniform_half_width) = match &self.model {
            ModelSection::Auction { params } => {
                params.validate()?;
                (
                    Drift::MeanReverting {
                        kappa: params.kappa,
                        r0: params.r0,
                    },
                    Noise::Additive { scale: 1.0 },
                    Reward::Auction {
                        v: params.v,
                        comp_hi: params.comp_hi,
                    },
                    Some(params.noise_half_width),
                )
            }
            ModelSection::Generic {
                drift,
                diffusion,
                reward,
            } => (drift.clone(), diffusion.clone(), reward.clone(), None),
        };
        let quadrature = match self.noise.kind {
            NoiseKind::Uniform => {
                let h = self
                    .noise
                    .half_width
                    .or(uniform_half_width)
                    .ok_or_else(|| Error::config("uniform noise needs noise.half_width"))?;
                NoiseQuadrature::uniform(h, self.noise.nodes)?
            }
            NoiseKind::TwoPoint => {
                let c = self
                    .noise
                    .c
                    .ok_or_else(|| Error::config("two-point noise needs noise.c"))?;
                NoiseQuadrature::two_point(c)?
            }
        };
        ModelSpec::new(drift, noise, reward, quadrature, controls, self.domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_layout() {
        let text = r#"{
            "model": {"family": "auction",
                      "params": {"v": 0.5, "comp_hi": 0.3, "kappa": 0.5, "r0": 0.15, "noise_half_width": 0.1}},
            "noise": {"nodes": 41},
            "controls": {"lo": 0.0, "step": 0.01, "count": 301},
            "domain": {"x_lo": -0.5, "x_hi": 3.0, "T": 1.0}
        }"#;
        let m = ModelConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(m.quadrature.len(), 41);
        assert_eq!(m.controls.len(), 301);
        assert_eq!(m.domain.horizon, 1.0);
    }

    #[test]
    fn generic_family_and_two_point_noise() {
        let text = r#"{
            "model": {"family": "generic",
                      "drift": {"family": "constant", "value": 0.0},
                      "diffusion": {"family": "additive", "scale": 1.0},
                      "reward": {"family": "constant", "value": 1.0}},
            "noise": {"kind": "two_point", "c": 0.1},
            "controls": {"lo": 0.0, "step": 1.0, "count": 1},
            "domain": {"x_lo": -1.0, "x_hi": 1.0, "T": 2.0}
        }"#;
        let m = ModelConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(m.quadrature.len(), 2);
        assert_eq!(m.reward(0.3, 0.0), 1.0);
    }

    #[test]
    fn missing_scale_is_a_config_error() {
        let text = r#"{"model": {"family": "auction"}, "noise": {"kind": "two_point"}}"#;
        let err = ModelConfig::from_json(text).unwrap().build().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
