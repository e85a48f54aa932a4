use serde::{Deserialize, Serialize};

use super::ModelSpec;

pub const CENTERING_TOLERANCE: f64 = 1e-10;
pub const ELLIPTICITY_FLOOR: f64 = 1e-12;

/// Numerical check of the standing assumptions on a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `max |Σ_k w_k b2(x, a, e_k)|` over the grid.
    pub max_centering_defect: f64,
    /// `min Σ_k w_k b2(x, a, e_k)²` over the grid.
    pub min_ellipticity: f64,
    pub lipschitz_mu: f64,
    pub lipschitz_sigma: f64,
    pub lipschitz_reward: f64,
    pub sup_b1: f64,
    pub sup_b2: f64,
    pub sup_b1_b2: f64,
    pub sup_reward: f64,
    pub non_finite: usize,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validates on a 351-node state grid spanning the domain.
pub fn validate_model(model: &ModelSpec) -> ValidationReport {
    validate_model_on(model, 351)
}

/// Validates on `n_x` evenly spaced state nodes (at least 2). Never fails:
/// problems end up in [`ValidationReport::violations`].
pub fn validate_model_on(model: &ModelSpec, n_x: usize) -> ValidationReport {
    let n_x = n_x.max(2);
    let dx = model.domain.width() / (n_x - 1) as f64;
    let xs: Vec<f64> = (0..n_x)
        .map(|i| model.domain.x_lo + i as f64 * dx)
        .collect();

    let mut centering: f64 = 0.0;
    let mut ellipticity = f64::INFINITY;
    let (mut sup_b1, mut sup_b2, mut sup_b1b2, mut sup_r) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut non_finite = 0usize;
    let (mut lip_mu, mut lip_sigma, mut lip_r) = (0.0f64, 0.0f64, 0.0f64);

    for &a in model.controls.values() {
        let mut prev: Option<(f64, f64, f64)> = None;
        for &x in &xs {
            for e in model.quadrature.nodes().iter().copied() {
                let b1 = model.b1(x, a, e);
                let b2 = model.b2(x, a, e);
                if !b1.is_finite() || !b2.is_finite() {
                    non_finite += 1;
                    continue;
                }
                sup_b1 = sup_b1.max(b1.abs());
                sup_b2 = sup_b2.max(b2.abs());
                sup_b1b2 = sup_b1b2.max((b1 * b2).abs());
            }
            let mean_b2 = model.quadrature.expect(|e| model.b2(x, a, e));
            if mean_b2.is_finite() {
                centering = centering.max(mean_b2.abs());
            }
            let s2 = model.sigma2(x, a);
            ellipticity = ellipticity.min(s2);
            let r = model.reward(x, a);
            if !r.is_finite() {
                non_finite += 1;
            } else {
                sup_r = sup_r.max(r.abs());
            }
            let cur = (model.mu(x, a), s2.sqrt(), r);
            if let Some(p) = prev {
                lip_mu = lip_mu.max((cur.0 - p.0).abs() / dx);
                lip_sigma = lip_sigma.max((cur.1 - p.1).abs() / dx);
                if cur.2.is_finite() && p.2.is_finite() {
                    lip_r = lip_r.max((cur.2 - p.2).abs() / dx);
                }
            }
            prev = Some(cur);
        }
    }

    let mut violations = Vec::new();
    if centering > CENTERING_TOLERANCE {
        violations.push(format!(
            "centering: max |∫b2 dν| = {centering:e} exceeds {CENTERING_TOLERANCE:e}"
        ));
    }
    if !(ellipticity >= ELLIPTICITY_FLOOR) {
        violations.push(format!(
            "ellipticity: min ∫b2² dν = {ellipticity:e} below {ELLIPTICITY_FLOOR:e}"
        ));
    }
    if non_finite > 0 {
        violations.push(format!("{non_finite} non-finite coefficient evaluations"));
    }

    ValidationReport {
        max_centering_defect: centering,
        min_ellipticity: ellipticity,
        lipschitz_mu: lip_mu,
        lipschitz_sigma: lip_sigma,
        lipschitz_reward: lip_r,
        sup_b1,
        sup_b2,
        sup_b1_b2: sup_b1b2,
        sup_reward: sup_r,
        non_finite,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_auction_model, AuctionParams, Noise, NoiseQuadrature};

    #[test]
    fn auction_model_is_valid() {
        let m = make_auction_model(&AuctionParams::default(), 41).unwrap();
        let rep = validate_model(&m);
        assert!(rep.is_valid(), "{:?}", rep.violations);
        assert!(rep.max_centering_defect < 1e-16);
        assert!((rep.min_ellipticity - 0.01 / 3.0).abs() < 1e-4);
        // r(x, a) = v - x once x >= comp_hi and a >= x, so the sup sits at x = 3
        assert!((rep.sup_reward - 2.5).abs() < 1e-12, "{}", rep.sup_reward);
        assert!((rep.lipschitz_mu - 1.0).abs() < 1e-9);
        assert!(rep.lipschitz_sigma < 1e-12);
    }

    #[test]
    fn degenerate_noise_flagged() {
        let mut m = make_auction_model(&AuctionParams::default(), 41).unwrap();
        m.noise = Noise::Zero;
        let rep = validate_model(&m);
        assert!(!rep.is_valid());
        assert!(rep.violations.iter().any(|v| v.starts_with("ellipticity")));
    }

    #[test]
    fn shifted_noise_flagged() {
        let mut m = make_auction_model(&AuctionParams::default(), 41).unwrap();
        m.noise = Noise::Shifted { shift: 0.01 };
        m.quadrature = NoiseQuadrature::uniform(0.1, 40).unwrap();
        let rep = validate_model(&m);
        assert!(rep.violations.iter().any(|v| v.starts_with("centering")));
    }
}
