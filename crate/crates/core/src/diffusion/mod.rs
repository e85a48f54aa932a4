//! Explicit upwind scheme for the diffusive-limit HJB equation
//!
//! ```text
//! ∂ₜV̄ + max_a ( μ(x,a)·∂ₓV̄ + ½σ²(x,a)·∂²ₓₓV̄ + r(x,a) ) = 0,   V̄(T,·) = 0,
//! ```
//!
//! with Dirichlet zero at both ends of the mesh, plus the tools built on top of
//! its solution: the limit feedback, the residual against the jump generator,
//! the Hölder-based error bound and the first-order correction.

mod correction;
mod feedback;
mod residual;
mod stencil;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{SpaceMesh, TimeMesh};
use crate::model::{Domain, ModelSpec};
use crate::surface::{PolicySurface, SurfaceKind, ValueSurface};

pub use correction::{corrected_value, solve_correction_pde, SourceField};
pub use feedback::LimitFeedback;
pub use residual::{
    compute_delta_r, compute_delta_r_at, compute_error_bound, estimate_holder_constant,
    estimate_r1, ErrorBound, HolderEstimate, ResidualField, BOUNDARY_MARGIN,
};

use stencil::{hamiltonian, local_diffs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMeshes {
    pub space: SpaceMesh,
    pub time: TimeMesh,
}

impl DiffusionMeshes {
    pub fn new(domain: &Domain, dx: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            space: SpaceMesh::covering(domain, dx)?,
            time: TimeMesh::covering(domain.horizon, dt)?,
        })
    }

    /// `dx = 10⁻²`, `dt = dx²`.
    pub fn default_for(domain: &Domain) -> Result<Self> {
        Self::new(domain, 1e-2, 1e-4)
    }
}

/// `μ`, `½σ²` and `r` tabulated on `(node, control)`.
#[derive(Debug, Clone)]
pub(crate) struct CoefficientTables {
    pub n_controls: usize,
    pub mu: Vec<f64>,
    pub half_sig2: Vec<f64>,
    pub reward: Vec<f64>,
}

impl CoefficientTables {
    pub fn new(model: &ModelSpec, space: &SpaceMesh) -> Self {
        let controls = model.controls.values();
        let cap = space.n * controls.len();
        let (mut mu, mut half_sig2, mut reward) = (
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
        );
        for x in space.nodes() {
            for &a in controls {
                mu.push(model.mu(x, a));
                half_sig2.push(0.5 * model.sigma2(x, a));
                reward.push(model.reward(x, a));
            }
        }
        Self {
            n_controls: controls.len(),
            mu,
            half_sig2,
            reward,
        }
    }

    #[inline]
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        i * self.n_controls..(i + 1) * self.n_controls
    }

    /// Worst `dt·(σ²/dx² + |μ|/dx)` and where it occurs.
    pub fn cfl(&self, space: &SpaceMesh, dt: f64) -> (f64, usize, usize) {
        let dx = space.dx;
        let mut worst = (0.0, 0, 0);
        for i in 0..space.n {
            for m in 0..self.n_controls {
                let j = i * self.n_controls + m;
                let c = dt * (2.0 * self.half_sig2[j] / (dx * dx) + self.mu[j].abs() / dx);
                if c > worst.0 {
                    worst = (c, i, m);
                }
            }
        }
        worst
    }
}

pub(crate) fn check_stability(
    model: &ModelSpec,
    tables: &CoefficientTables,
    meshes: &DiffusionMeshes,
) -> Result<f64> {
    let (cfl, i, m) = tables.cfl(&meshes.space, meshes.time.dt);
    if !(cfl <= 1.0) {
        return Err(Error::SchemeStability(format!(
            "explicit diffusion step has CFL number {cfl:.4} > 1 at x = {}, a = {} (dx = {}, dt = {})",
            meshes.space.x(i),
            model.controls.value(m),
            meshes.space.dx,
            meshes.time.dt
        )));
    }
    Ok(cfl)
}

pub(crate) fn check_finite(slice: &[f64], k: usize) -> Result<()> {
    if let Some(i) = slice.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            slice: k,
            detail: format!("non-finite value at node {i}"),
        });
    }
    Ok(())
}

/// Maximiser of the Hamiltonian at interior node `i` given the later slice `v`;
/// ties go to the smallest control index.
#[inline]
fn best_control(tables: &CoefficientTables, v: &[f64], i: usize, dx: f64) -> (f64, usize) {
    let d = local_diffs(v, i, dx);
    let r = tables.range(i);
    let (mu, hs, rw) = (
        &tables.mu[r.clone()],
        &tables.half_sig2[r.clone()],
        &tables.reward[r],
    );
    let mut best = f64::NEG_INFINITY;
    let mut best_m = 0;
    for m in 0..tables.n_controls {
        let h = hamiltonian(mu[m], hs[m], &d, rw[m]);
        if h > best {
            best = h;
            best_m = m;
        }
    }
    (best, best_m)
}

/// Backward explicit solve; returns `V̄` and its argmax policy.
pub fn solve_diffusion_hjb(
    model: &ModelSpec,
    meshes: &DiffusionMeshes,
) -> Result<(ValueSurface, PolicySurface)> {
    let tables = CoefficientTables::new(model, &meshes.space);
    check_stability(model, &tables, meshes)?;
    let n = meshes.space.n;
    let dx = meshes.space.dx;
    let mut values = ValueSurface::zeros(SurfaceKind::Diffusion, None, meshes.time, meshes.space);
    let mut policy = PolicySurface::zeros(meshes.time, meshes.space);

    for k in (0..meshes.time.n_steps).rev() {
        let dt = meshes.time.step(k);
        let (cur, next) = values.step_pair(k);
        let row = policy.row_mut(k);
        cur[1..n - 1]
            .par_iter_mut()
            .zip(row[1..n - 1].par_iter_mut())
            .enumerate()
            .with_min_len(64)
            .for_each(|(off, (out, choice))| {
                let i = off + 1;
                let (best, m) = best_control(&tables, next, i, dx);
                *out = next[i] + dt * best;
                *choice = m as u16;
            });
        check_finite(values.slice(k), k)?;
    }
    Ok((values, policy))
}

/// Argmax feedback of the limit Hamiltonian, evaluated with the solver's own
/// stencils (row `k` uses slice `k + 1`, as in the backward step).
pub fn extract_limit_policy(model: &ModelSpec, surface: &ValueSurface) -> PolicySurface {
    let tables = CoefficientTables::new(model, &surface.space);
    let n = surface.space.n;
    let dx = surface.space.dx;
    let mut policy = PolicySurface::zeros(surface.time, surface.space);
    for k in 0..surface.time.n_steps {
        let next = surface.slice(k + 1);
        let row = policy.row_mut(k);
        for (i, choice) in row.iter_mut().enumerate().take(n - 1).skip(1) {
            *choice = best_control(&tables, next, i, dx).1 as u16;
        }
    }
    policy
}

/// Per-node sets of near-maximising controls, stored as bitsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgmaxSet {
    pub time: TimeMesh,
    pub space: SpaceMesh,
    n_controls: usize,
    words: usize,
    bits: Vec<u64>,
}

impl ArgmaxSet {
    fn empty(time: TimeMesh, space: SpaceMesh, n_controls: usize) -> Self {
        let words = n_controls.div_ceil(64);
        Self {
            time,
            space,
            n_controls,
            words,
            bits: vec![0; time.n_steps * space.n * words],
        }
    }

    /// Every control admissible at every node.
    pub fn full(time: TimeMesh, space: SpaceMesh, n_controls: usize) -> Self {
        let mut s = Self::empty(time, space, n_controls);
        for node in 0..time.n_steps * space.n {
            for m in 0..n_controls {
                s.insert_at(node, m);
            }
        }
        s
    }

    #[inline]
    fn insert_at(&mut self, node: usize, m: usize) {
        self.bits[node * self.words + m / 64] |= 1u64 << (m % 64);
    }

    #[inline]
    fn node(&self, k: usize, i: usize) -> usize {
        k * self.space.n + i
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn contains(&self, k: usize, i: usize, m: usize) -> bool {
        let node = self.node(k, i);
        self.bits[node * self.words + m / 64] & (1u64 << (m % 64)) != 0
    }

    pub fn len(&self, k: usize, i: usize) -> usize {
        let node = self.node(k, i);
        self.bits[node * self.words..(node + 1) * self.words]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn is_empty(&self, k: usize, i: usize) -> bool {
        self.len(k, i) == 0
    }

    /// Control indices in the set at `(k, i)`, ascending.
    pub fn iter(&self, k: usize, i: usize) -> impl Iterator<Item = usize> + '_ {
        let node = self.node(k, i);
        let words = &self.bits[node * self.words..(node + 1) * self.words];
        words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(w * 64 + b)
                }
            })
        })
    }
}

/// Controls whose Hamiltonian lies within `tol·(1 + |max|)` of the maximum.
/// Boundary nodes carry the singleton `{0}`.
pub fn extract_argmax_set(
    model: &ModelSpec,
    surface: &ValueSurface,
    tol: f64,
) -> Result<ArgmaxSet> {
    if !(tol >= 0.0) {
        return Err(Error::config(format!(
            "argmax tolerance must be >= 0 (got {tol})"
        )));
    }
    let tables = CoefficientTables::new(model, &surface.space);
    let n = surface.space.n;
    let dx = surface.space.dx;
    let mut set = ArgmaxSet::empty(surface.time, surface.space, tables.n_controls);
    let mut h = vec![0.0; tables.n_controls];
    for k in 0..surface.time.n_steps {
        let next = surface.slice(k + 1);
        for i in 0..n {
            let node = set.node(k, i);
            if i == 0 || i == n - 1 {
                set.insert_at(node, 0);
                continue;
            }
            let d = local_diffs(next, i, dx);
            let r = tables.range(i);
            let mut best = f64::NEG_INFINITY;
            for (m, j) in r.enumerate() {
                h[m] = hamiltonian(tables.mu[j], tables.half_sig2[j], &d, tables.reward[j]);
                best = best.max(h[m]);
            }
            let floor = best - tol * (1.0 + best.abs());
            for (m, &hm) in h.iter().enumerate() {
                if hm >= floor {
                    set.insert_at(node, m);
                }
            }
        }
    }
    Ok(set)
}
