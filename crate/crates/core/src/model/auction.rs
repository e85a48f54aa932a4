//! Repeated lazy second-price auction with a mean-reverting reserve price.
//!
//! The state is the reserve price `x`, the control is the bid `a`. The seller
//! moves the reserve toward `κ·a + (1 − κ)·r0` at every auction, with additive
//! uniform noise.

use serde::{Deserialize, Serialize};

use super::{ControlGrid, Domain, Drift, ModelSpec, Noise, NoiseQuadrature, Reward};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionParams {
    /// Value of the ad slot to the bidder.
    pub v: f64,
    /// Competition bids are uniform on `(0, comp_hi)`.
    pub comp_hi: f64,
    /// How aggressively the seller tracks the bid.
    pub kappa: f64,
    /// Minimum-reserve anchor.
    pub r0: f64,
    pub noise_half_width: f64,
}

impl Default for AuctionParams {
    fn default() -> Self {
        Self {
            v: 0.5,
            comp_hi: 0.3,
            kappa: 0.5,
            r0: 0.15,
            noise_half_width: 0.1,
        }
    }
}

impl AuctionParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.v,
            self.comp_hi,
            self.kappa,
            self.r0,
            self.noise_half_width,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("auction parameters must be finite"));
        }
        if !(self.comp_hi > 0.0 && self.comp_hi < self.v) {
            return Err(Error::config(format!(
                "auction parameters need 0 < comp_hi < v (got comp_hi={}, v={})",
                self.comp_hi, self.v
            )));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::config(format!(
                "kappa must lie in [0, 1] (got {})",
                self.kappa
            )));
        }
        if !(self.r0 > 0.0) {
            return Err(Error::config(format!("r0 must be > 0 (got {})", self.r0)));
        }
        if !(self.noise_half_width > 0.0) {
            return Err(Error::config(format!(
                "noise half-width must be > 0 (got {})",
                self.noise_half_width
            )));
        }
        Ok(())
    }
}

/// `∫_0^y F_B(b) db` for the clamped uniform CDF on `(0, h)`.
#[inline]
fn integrated_cdf(h: f64, y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y <= h {
        0.5 * y * y / h
    } else {
        0.5 * h + (y - h)
    }
}

#[inline]
pub(super) fn payoff(v: f64, comp_hi: f64, x: f64, a: f64) -> f64 {
    if a < x {
        return 0.0;
    }
    let gross = if a >= comp_hi {
        // (v − a) + h/2 + (a − h), written so it is exactly flat in a
        v - 0.5 * comp_hi
    } else if a > 0.0 {
        (v - a) * a / comp_hi + integrated_cdf(comp_hi, a)
    } else {
        0.0
    };
    gross - integrated_cdf(comp_hi, x)
}

/// Expected payoff `1{a ≥ x}·((v − a)F_B(a) + ∫_x^a F_B(b) db)`.
pub fn auction_reward(params: &AuctionParams, x: f64, a: f64) -> f64 {
    payoff(params.v, params.comp_hi, x, a)
}

fn auction_controls_and_domain() -> Result<(ControlGrid, Domain)> {
    Ok((
        ControlGrid::even(0.0, 0.01, 301)?,
        Domain::new(-0.5, 3.0, 1.0)?,
    ))
}

/// The mean-reverting reserve-price model with a midpoint quadrature of the
/// uniform noise.
pub fn make_auction_model(params: &AuctionParams, n_noise_nodes: usize) -> Result<ModelSpec> {
    params.validate()?;
    let quadrature = NoiseQuadrature::uniform(params.noise_half_width, n_noise_nodes)?;
    let (controls, domain) = auction_controls_and_domain()?;
    ModelSpec::new(
        Drift::MeanReverting {
            kappa: params.kappa,
            r0: params.r0,
        },
        Noise::Additive { scale: 1.0 },
        Reward::Auction {
            v: params.v,
            comp_hi: params.comp_hi,
        },
        quadrature,
        controls,
        domain,
    )
}

/// Same dynamics and reward, but with the skewed two-point noise `{-c, 2c}`.
/// `noise_half_width` is ignored.
pub fn make_skewed_auction_model(params: &AuctionParams, c: f64) -> Result<ModelSpec> {
    params.validate()?;
    let (controls, domain) = auction_controls_and_domain()?;
    ModelSpec::new(
        Drift::MeanReverting {
            kappa: params.kappa,
            r0: params.r0,
        },
        Noise::Additive { scale: 1.0 },
        Reward::Auction {
            v: params.v,
            comp_hi: params.comp_hi,
        },
        NoiseQuadrature::two_point(c)?,
        controls,
        domain,
    )
}
