//! Residual of the jump generator against its diffusion approximation, the
//! Hölder regularity of `∂²ₓₓV̄` and the resulting error constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correction::SourceField;
use super::stencil::{centered_first, centered_second, second_derivative, third_derivative};
use crate::error::{Error, Result};
use crate::mesh::{SpaceMesh, TimeMesh};
use crate::model::ModelSpec;
use crate::surface::{interpolate_slice, ValueSurface};

/// Nodes excluded at each end when estimating `K` and `‖∂²ₓₓV̄‖∞`.
pub const BOUNDARY_MARGIN: usize = 3;

/// Upper bound on stored residual entries (slices × nodes × controls).
const RESIDUAL_ENTRY_CAP: usize = 1 << 27;

/// `∫δr^ε(t, x, a, e) ν(de)` on selected time slices, indexed `(slice, node, control)`.
/// Boundary nodes hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub epsilon: f64,
    pub time: TimeMesh,
    pub space: SpaceMesh,
    pub controls: Vec<f64>,
    /// Time-slice indices of the surface the field was computed on.
    pub slices: Vec<usize>,
    values: Vec<f64>,
}

impl ResidualField {
    #[inline]
    pub fn value(&self, row: usize, i: usize, m: usize) -> f64 {
        let nm = self.controls.len();
        self.values[(row * self.space.n + i) * nm + m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Residual on every time slice of `surface`.
pub fn compute_delta_r(
    model: &ModelSpec,
    surface: &ValueSurface,
    epsilon: f64,
) -> Result<ResidualField> {
    let all: Vec<usize> = (0..surface.n_slices()).collect();
    compute_delta_r_at(model, surface, epsilon, &all)
}

/// Residual on the listed time slices only.
pub fn compute_delta_r_at(
    model: &ModelSpec,
    surface: &ValueSurface,
    epsilon: f64,
    slices: &[usize],
) -> Result<ResidualField> {
    crate::jump::check_epsilon(epsilon)?;
    if let Some(&k) = slices.iter().find(|&&k| k >= surface.n_slices()) {
        return Err(Error::config(format!(
            "slice {k} out of range (surface has {})",
            surface.n_slices()
        )));
    }
    let space = surface.space;
    let n = space.n;
    let controls = model.controls.values().to_vec();
    let nm = controls.len();
    let entries = slices.len() * n * nm;
    if entries > RESIDUAL_ENTRY_CAP {
        return Err(Error::Resource {
            nodes: entries,
            bytes: entries as u64 * 8,
            cap: RESIDUAL_ENTRY_CAP,
        });
    }

    let sqrt_eps = epsilon.sqrt();
    let dx = space.dx;
    let mut values = vec![0.0; entries];
    for (row, &k) in slices.iter().enumerate() {
        let v = surface.slice(k);
        values[row * n * nm..(row + 1) * n * nm]
            .par_chunks_mut(nm)
            .enumerate()
            .filter(|(i, _)| *i > 0 && *i + 1 < n)
            .for_each(|(i, out)| {
                let x = space.x(i);
                let d1 = centered_first(v, i, dx);
                let d2 = centered_second(v, i, dx);
                for (m, slot) in out.iter_mut().enumerate() {
                    let a = controls[m];
                    let jump_mean = model.quadrature.expect(|e| {
                        let y = x + epsilon * model.b1(x, a, e) + sqrt_eps * model.b2(x, a, e);
                        interpolate_slice(v, &space, y) - v[i]
                    });
                    *slot =
                        jump_mean / epsilon - model.mu(x, a) * d1 - 0.5 * model.sigma2(x, a) * d2;
                }
            });
    }
    Ok(ResidualField {
        epsilon,
        time: surface.time,
        space,
        controls,
        slices: slices.to_vec(),
        values,
    })
}

/// Hölder exponent and constant of `∂²ₓₓV̄` in space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub beta: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

/// `K = max |D²V(t, x_{i+1}) − D²V(t, x_i)| / dx^β` over all slices, both
/// nodes at least [`BOUNDARY_MARGIN`] away from the boundary.
pub fn estimate_holder_constant(surface: &ValueSurface, beta: f64) -> Result<HolderEstimate> {
    check_beta(beta)?;
    let n = surface.space.n;
    if n < 3 * BOUNDARY_MARGIN {
        return Err(Error::config(format!(
            "Hölder estimate needs at least {} space nodes (got {n})",
            3 * BOUNDARY_MARGIN
        )));
    }
    let dx = surface.space.dx;
    let scale = dx.powf(beta);
    let lo = BOUNDARY_MARGIN;
    let hi = n - 1 - BOUNDARY_MARGIN;
    let k = (0..surface.n_slices())
        .into_par_iter()
        .map(|k| {
            let v = surface.slice(k);
            let mut worst = 0.0f64;
            let mut prev = centered_second(v, lo, dx);
            for i in lo + 1..=hi {
                let cur = centered_second(v, i, dx);
                worst = worst.max((cur - prev).abs());
                prev = cur;
            }
            worst / scale
        })
        .reduce(|| 0.0, f64::max);
    Ok(HolderEstimate { beta, k })
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::config(format!(
            "beta must lie in (0, 1] (got {beta})"
        )));
    }
    Ok(())
}

/// Error constant `C^ε_K` and the bounds derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub epsilon: f64,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub t: f64,
    pub sup_b1: f64,
    pub sup_b2: f64,
    pub sup_b1_b2: f64,
    pub sup_vxx: f64,
    #[serde(rename = "C_eps_K")]
    pub c_eps_k: f64,
    /// `C^ε_K·ε^{β/2}`, a bound on the residual.
    pub bound: f64,
    /// `(T − t)·C^ε_K·ε^{β/2}`, a bound on `|V^ε − V̄|(t, ·)`.
    pub value_bound: f64,
    /// `½(T − t)·K·‖b2‖^{2+β}`.
    pub asymptotic: f64,
}

/// Sup norms of `b1`, `b2` and `b1·b2` over the mesh nodes, controls and marks.
fn coefficient_norms(model: &ModelSpec, space: &SpaceMesh) -> (f64, f64, f64) {
    let (mut s1, mut s2, mut s12) = (0.0f64, 0.0f64, 0.0f64);
    for x in space.nodes() {
        for &a in model.controls.values() {
            for &e in model.quadrature.nodes() {
                let b1 = model.b1(x, a, e);
                let b2 = model.b2(x, a, e);
                s1 = s1.max(b1.abs());
                s2 = s2.max(b2.abs());
                s12 = s12.max((b1 * b2).abs());
            }
        }
    }
    (s1, s2, s12)
}

fn sup_second_derivative(surface: &ValueSurface) -> f64 {
    let n = surface.space.n;
    let dx = surface.space.dx;
    (0..surface.n_slices())
        .into_par_iter()
        .map(|k| {
            let v = surface.slice(k);
            (BOUNDARY_MARGIN..n - BOUNDARY_MARGIN)
                .map(|i| centered_second(v, i, dx).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

pub fn compute_error_bound(
    model: &ModelSpec,
    est: &HolderEstimate,
    surface: &ValueSurface,
    epsilon: f64,
    t: f64,
) -> Result<ErrorBound> {
    crate::jump::check_epsilon(epsilon)?;
    check_beta(est.beta)?;
    if surface.space.n < 3 * BOUNDARY_MARGIN {
        return Err(Error::config("surface mesh too small for an error bound"));
    }
    let (b1, b2, b12) = coefficient_norms(model, &surface.space);
    let vxx = sup_second_derivative(surface);
    let beta = est.beta;
    let k = est.k;
    let se = epsilon.sqrt();
    let c = 0.5
        * (epsilon.powf(1.0 - beta / 2.0) * b1 * b1 + 2.0 * epsilon.powf((1.0 - beta) / 2.0) * b12)
        * (vxx + k * (epsilon * b1 + se * b2).powf(beta))
        + 0.5 * k * (se * b1 + b2).powf(2.0 + beta);
    let remaining = (surface.time.horizon - t).max(0.0);
    let bound = c * epsilon.powf(beta / 2.0);
    Ok(ErrorBound {
        epsilon,
        beta,
        k,
        t,
        sup_b1: b1,
        sup_b2: b2,
        sup_b1_b2: b12,
        sup_vxx: vxx,
        c_eps_k: c,
        bound,
        value_bound: remaining * bound,
        asymptotic: 0.5 * remaining * k * b2.powf(2.0 + beta),
    })
}

/// First-order source `r¹ = ∫b1·b2 dν·∂²ₓₓV̄ + (1/6)·∫b2³ dν·∂³ₓₓₓV̄` from the
/// next Taylor term of the jump generator. Moments are signed; a term whose
/// moment vanishes on the whole grid is dropped, so symmetric laws give
/// `r¹ ≡ 0` exactly.
pub fn estimate_r1(model: &ModelSpec, surface: &ValueSurface) -> Result<SourceField> {
    let space = surface.space;
    if space.n < 5 {
        return Err(Error::config(format!(
            "third-derivative stencil needs at least 5 space nodes (got {})",
            space.n
        )));
    }
    let nm = model.controls.len();
    let mut third = Vec::with_capacity(space.n * nm);
    let mut cross = Vec::with_capacity(space.n * nm);
    for x in space.nodes() {
        for &a in model.controls.values() {
            third.push(model.noise_third_moment(x, a) / 6.0);
            cross.push(model.drift_noise_covariance(x, a));
        }
    }
    let dx = space.dx;
    let mut field = SourceField::zero(surface.time, space, nm);
    if cross.iter().any(|&c| c != 0.0) {
        let profile = profile_of(surface, |v| second_derivative(v, dx));
        field.push_term(cross, Some(profile))?;
    }
    if third.iter().any(|&c| c != 0.0) {
        let profile = profile_of(surface, |v| third_derivative(v, dx));
        field.push_term(third, Some(profile))?;
    }
    Ok(field)
}

fn profile_of(surface: &ValueSurface, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Vec<f64> {
    (0..surface.n_slices())
        .into_par_iter()
        .flat_map_iter(|k| f(surface.slice(k)))
        .collect()
}
