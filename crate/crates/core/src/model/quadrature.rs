use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous noise law a quadrature was derived from, kept so the
/// simulator can optionally sample it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ContinuousLaw {
    Uniform { half_width: f64 },
}

/// Discrete probability law standing in for the jump-mark distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    law: Option<ContinuousLaw>,
}

impl NoiseQuadrature {
    /// Builds a quadrature from explicit nodes and weights.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::config(format!(
                "quadrature needs matching non-empty nodes/weights (got {} and {})",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::config("quadrature contains non-finite values"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "quadrature nodes must be strictly increasing",
            ));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::config("quadrature weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "quadrature weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            nodes,
            weights,
            law: None,
        })
    }

    /// Midpoint rule for `Unif(-h, h)` with `n` equal cells.
    pub fn uniform(half_width: f64, n_nodes: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::config(format!(
                "uniform quadrature half-width must be > 0 (got {half_width})"
            )));
        }
        if n_nodes < 2 {
            return Err(Error::config(format!(
                "uniform quadrature needs at least 2 nodes (got {n_nodes})"
            )));
        }
        let width = 2.0 * half_width / n_nodes as f64;
        let mut nodes: Vec<f64> = (0..n_nodes)
            .map(|k| -half_width + (k as f64 + 0.5) * width)
            .collect();
        // Mirror the upper half onto the lower half so the first moment is exactly 0.
        for k in 0..n_nodes / 2 {
            let mirrored = -nodes[n_nodes - 1 - k];
            nodes[k] = mirrored;
        }
        if n_nodes % 2 == 1 {
            nodes[n_nodes / 2] = 0.0;
        }
        let weights = vec![1.0 / n_nodes as f64; n_nodes];
        let mut q = Self::new(nodes, weights)?;
        q.law = Some(ContinuousLaw::Uniform { half_width });
        Ok(q)
    }

    /// Skewed two-point law: `-c` with weight 2/3 and `+2c` with weight 1/3.
    pub fn two_point(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::config(format!(
                "two-point quadrature scale must be > 0 (got {c})"
            )));
        }
        Self::new(vec![-c, 2.0 * c], vec![2.0 / 3.0, 1.0 / 3.0])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn law(&self) -> Option<ContinuousLaw> {
        self.law
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// `Σ_k w_k f(e_k)`, adding mirrored terms `k` and `n − 1 − k` first so
    /// odd functions of a symmetric law integrate to exactly zero.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.nodes.len();
        let term = |k: usize| self.weights[k] * f(self.nodes[k]);
        let mut total = 0.0;
        for k in 0..n / 2 {
            total += term(k) + term(n - 1 - k);
        }
        if n % 2 == 1 {
            total += term(n / 2);
        }
        total
    }

    /// `Σ_k w_k e_k^p`.
    pub fn moment(&self, p: i32) -> f64 {
        self.expect(|e| e.powi(p))
    }
}

/// Free-function form of [`NoiseQuadrature::uniform`].
pub fn make_uniform_quadrature(half_width: f64, n_nodes: usize) -> Result<NoiseQuadrature> {
    NoiseQuadrature::uniform(half_width, n_nodes)
}

/// Free-function form of [`NoiseQuadrature::two_point`].
pub fn make_two_point_quadrature(c: f64) -> Result<NoiseQuadrature> {
    NoiseQuadrature::two_point(c)
}
