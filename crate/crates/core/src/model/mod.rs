//! Problem instances for the controlled pure-jump process
//!
//! ```text
//! X  <-  X + ε·b1(X, a, e) + √ε·b2(X, a, e)     at each jump of a Poisson clock of rate 1/ε
//! ```
//!
//! with mark `e ~ ν` and a per-jump reward `r(X, a)`. The diffusive limit of
//! this process is driven by the aggregated coefficients
//! `μ(x, a) = ∫ b1 dν` and `σ(x, a) = (∫ b2² dν)^½`.

mod auction;
mod config;
mod quadrature;
mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use auction::{auction_reward, make_auction_model, make_skewed_auction_model, AuctionParams};
pub use config::{ControlsConfig, ModelConfig, ModelSection, NoiseConfig};
pub use quadrature::{
    make_two_point_quadrature, make_uniform_quadrature, ContinuousLaw, NoiseQuadrature,
};
pub use validate::{validate_model, validate_model_on, ValidationReport};

/// Numeric hook for coefficient functions of `(x, a, e)`.
#[derive(Clone)]
pub struct CoefficientFn(pub Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>);

impl fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CoefficientFn(..)")
    }
}

/// Numeric hook for reward functions of `(x, a)`.
#[derive(Clone)]
pub struct RewardFn(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl fmt::Debug for RewardFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RewardFn(..)")
    }
}

/// Drift family `b1(x, a, e)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Drift {
    Zero,
    Constant {
        value: f64,
    },
    /// `κ·a + (1 − κ)·r0 − x`
    MeanReverting {
        kappa: f64,
        r0: f64,
    },
    /// `Σ_k coeffs[k]·x^k`
    Polynomial {
        coeffs: Vec<f64>,
    },
    #[serde(skip)]
    Custom(CoefficientFn),
}

/// Noise family `b2(x, a, e)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Noise {
    Zero,
    /// `scale·e`
    Additive {
        scale: f64,
    },
    /// `e + shift`; only centred when `shift == 0`.
    Shifted {
        shift: f64,
    },
    /// `(c0 + c1·x)·e`
    StateScaled {
        c0: f64,
        c1: f64,
    },
    #[serde(skip)]
    Custom(CoefficientFn),
}

/// Reward family `r(x, a)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Reward {
    Constant {
        value: f64,
    },
    /// Expected payoff of a lazy second-price auction with reserve `x` and
    /// competition uniform on `(0, comp_hi)`.
    Auction {
        v: f64,
        comp_hi: f64,
    },
    #[serde(skip)]
    Custom(RewardFn),
}

impl Drift {
    #[inline]
    pub fn eval(&self, x: f64, a: f64, e: f64) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Constant { value } => *value,
            Drift::MeanReverting { kappa, r0 } => kappa * a + (1.0 - kappa) * r0 - x,
            Drift::Polynomial { coeffs } => horner(coeffs, x),
            Drift::Custom(f) => (f.0)(x, a, e),
        }
    }

    /// True when the drift does not depend on the noise mark.
    pub fn is_mark_free(&self) -> bool {
        !matches!(self, Drift::Custom(_))
    }
}

impl Noise {
    #[inline]
    pub fn eval(&self, x: f64, a: f64, e: f64) -> f64 {
        match self {
            Noise::Zero => 0.0,
            Noise::Additive { scale } => scale * e,
            Noise::Shifted { shift } => e + shift,
            Noise::StateScaled { c0, c1 } => (c0 + c1 * x) * e,
            Noise::Custom(f) => (f.0)(x, a, e),
        }
    }

    /// True when `b2` depends on the mark only.
    pub fn is_state_free(&self) -> bool {
        matches!(
            self,
            Noise::Zero | Noise::Additive { .. } | Noise::Shifted { .. }
        )
    }
}

impl Reward {
    #[inline]
    pub fn eval(&self, x: f64, a: f64) -> f64 {
        match self {
            Reward::Constant { value } => *value,
            Reward::Auction { v, comp_hi } => auction::payoff(*v, *comp_hi, x, a),
            Reward::Custom(f) => (f.0)(x, a),
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Evenly spaced admissible controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    values: Vec<f64>,
}

impl ControlGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("control grid is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("control grid contains non-finite values"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("control values must be strictly increasing"));
        }
        if values.len() > 2 {
            let step = values[1] - values[0];
            let uneven = values
                .windows(2)
                .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0));
            if uneven {
                return Err(Error::config("control values must be evenly spaced"));
            }
        }
        if values.len() > u16::MAX as usize {
            return Err(Error::config("control grid larger than 65535 values"));
        }
        Ok(Self { values })
    }

    /// `{lo + k·step : k = 0..count}`.
    pub fn even(lo: f64, step: f64, count: usize) -> Result<Self> {
        if count == 0 || (count > 1 && !(step > 0.0)) {
            return Err(Error::config(format!(
                "invalid control grid (lo={lo}, step={step}, count={count})"
            )));
        }
        Self::new((0..count).map(|k| lo + k as f64 * step).collect())
    }

    pub fn singleton(value: f64) -> Self {
        Self {
            values: vec![value],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }
}

/// Spatial truncation and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_lo: f64,
    pub x_hi: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Domain {
    pub fn new(x_lo: f64, x_hi: f64, horizon: f64) -> Result<Self> {
        let d = Self {
            x_lo,
            x_hi,
            horizon,
        };
        d.check()?;
        Ok(d)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.x_lo < self.x_hi) || !self.x_lo.is_finite() || !self.x_hi.is_finite() {
            return Err(Error::config(format!(
                "domain bounds must satisfy x_lo < x_hi (got {}, {})",
                self.x_lo, self.x_hi
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::config(format!(
                "horizon must be > 0 (got {})",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub drift: Drift,
    pub noise: Noise,
    pub reward: Reward,
    pub quadrature: NoiseQuadrature,
    pub controls: ControlGrid,
    pub domain: Domain,
}

impl ModelSpec {
    pub fn new(
        drift: Drift,
        noise: Noise,
        reward: Reward,
        quadrature: NoiseQuadrature,
        controls: ControlGrid,
        domain: Domain,
    ) -> Result<Self> {
        domain.check()?;
        Ok(Self {
            drift,
            noise,
            reward,
            quadrature,
            controls,
            domain,
        })
    }

    #[inline]
    pub fn b1(&self, x: f64, a: f64, e: f64) -> f64 {
        self.drift.eval(x, a, e)
    }

    #[inline]
    pub fn b2(&self, x: f64, a: f64, e: f64) -> f64 {
        self.noise.eval(x, a, e)
    }

    #[inline]
    pub fn reward(&self, x: f64, a: f64) -> f64 {
        self.reward.eval(x, a)
    }

    /// Jump size `ε·b1 + √ε·b2`.
    #[inline]
    pub fn jump(&self, epsilon: f64, x: f64, a: f64, e: f64) -> f64 {
        epsilon * self.b1(x, a, e) + epsilon.sqrt() * self.b2(x, a, e)
    }

    /// `μ(x, a) = Σ_k w_k b1(x, a, e_k)`.
    pub fn mu(&self, x: f64, a: f64) -> f64 {
        if self.drift.is_mark_free() {
            return self.b1(x, a, 0.0);
        }
        self.quadrature.expect(|e| self.b1(x, a, e))
    }

    /// `σ²(x, a) = Σ_k w_k b2(x, a, e_k)²`.
    pub fn sigma2(&self, x: f64, a: f64) -> f64 {
        self.quadrature.expect(|e| {
            let b = self.b2(x, a, e);
            b * b
        })
    }

    pub fn sigma(&self, x: f64, a: f64) -> f64 {
        self.sigma2(x, a).sqrt()
    }

    /// `Σ_k w_k b2(x, a, e_k)³`.
    pub fn noise_third_moment(&self, x: f64, a: f64) -> f64 {
        self.quadrature.expect(|e| self.b2(x, a, e).powi(3))
    }

    /// `Σ_k w_k b1(x, a, e_k)·b2(x, a, e_k)`.
    pub fn drift_noise_covariance(&self, x: f64, a: f64) -> f64 {
        self.quadrature
            .expect(|e| self.b1(x, a, e) * self.b2(x, a, e))
    }

    /// Copy of the model with `b1 ≡ 0` and `b2 ≡ 0`.
    pub fn without_dynamics(&self) -> Self {
        Self {
            drift: Drift::Zero,
            noise: Noise::Zero,
            ..self.clone()
        }
    }
}

/// `μ(x, a)` for a model.
pub fn aggregate_drift(model: &ModelSpec, x: f64, a: f64) -> f64 {
    model.mu(x, a)
}

/// `σ(x, a)` for a model.
pub fn aggregate_volatility(model: &ModelSpec, x: f64, a: f64) -> f64 {
    model.sigma(x, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(drift: Drift, noise: Noise, q: NoiseQuadrature) -> ModelSpec {
        ModelSpec::new(
            drift,
            noise,
            Reward::Constant { value: 1.0 },
            q,
            ControlGrid::singleton(0.0),
            Domain::new(-1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_drift_aggregates_to_zero() {
        let m = fixture(
            Drift::Zero,
            Noise::Additive { scale: 1.0 },
            NoiseQuadrature::uniform(0.1, 11).unwrap(),
        );
        assert_eq!(aggregate_drift(&m, 0.3, 0.0), 0.0);
    }

    #[test]
    fn symmetric_pair_volatility_is_exact() {
        let c = 0.125;
        let q = NoiseQuadrature::new(vec![-c, c], vec![0.5, 0.5]).unwrap();
        let m = fixture(Drift::Zero, Noise::Additive { scale: 1.0 }, q);
        assert_eq!(aggregate_volatility(&m, 0.2, 0.0), c);
    }

    #[test]
    fn two_point_volatility() {
        let m = fixture(
            Drift::Zero,
            Noise::Additive { scale: 1.0 },
            NoiseQuadrature::two_point(0.1).unwrap(),
        );
        assert!((aggregate_volatility(&m, 0.0, 0.0) - 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn polynomial_drift_uses_ascending_coefficients() {
        let d = Drift::Polynomial {
            coeffs: vec![1.0, -2.0, 0.5],
        };
        assert!((d.eval(2.0, 0.0, 0.0) - (1.0 - 4.0 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn control_grid_invariants() {
        let g = ControlGrid::even(0.0, 0.01, 301).unwrap();
        assert_eq!(g.len(), 301);
        assert!((g.values()[300] - 3.0).abs() < 1e-12);
        assert!(ControlGrid::new(vec![]).is_err());
        assert!(ControlGrid::new(vec![0.0, 0.0]).is_err());
        assert!(ControlGrid::new(vec![0.0, 0.1, 0.3]).is_err());
        assert!(Domain::new(1.0, 0.0, 1.0).is_err());
        assert!(Domain::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn families_round_trip_through_json() {
        let m = fixture(
            Drift::MeanReverting {
                kappa: 0.5,
                r0: 0.15,
            },
            Noise::Additive { scale: 1.0 },
            NoiseQuadrature::uniform(0.1, 5).unwrap(),
        );
        let json = serde_json::to_string(&m).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.b1(0.1, 0.2, 0.0), m.b1(0.1, 0.2, 0.0));
        let custom = Drift::Custom(CoefficientFn(Arc::new(|x, _, _| x)));
        assert!(serde_json::to_string(&custom).is_err());
    }
}
