//! First-order correction: the argmax-restricted linear PDE driven by `r¹`.

use rayon::prelude::*;

use super::stencil::{hamiltonian, local_diffs};
use super::{check_finite, check_stability, ArgmaxSet, CoefficientTables, DiffusionMeshes};
use crate::error::{Error, Result};
use crate::mesh::{SpaceMesh, TimeMesh};
use crate::model::ModelSpec;
use crate::surface::{SurfaceKind, ValueSurface};

#[derive(Debug, Clone, PartialEq)]
struct SourceTerm {
    /// Indexed `(node, control)`.
    coeff: Vec<f64>,
    /// Indexed `(slice, node)`; `None` means 1.
    profile: Option<Vec<f64>>,
}

/// A source over `(t, x, a)` written as a sum of separable terms
/// `c(x, a)·p(t, x)`. An empty sum is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField {
    pub time: TimeMesh,
    pub space: SpaceMesh,
    n_controls: usize,
    terms: Vec<SourceTerm>,
}

impl SourceField {
    pub fn zero(time: TimeMesh, space: SpaceMesh, n_controls: usize) -> Self {
        Self {
            time,
            space,
            n_controls,
            terms: Vec::new(),
        }
    }

    pub fn constant(time: TimeMesh, space: SpaceMesh, n_controls: usize, value: f64) -> Self {
        let mut s = Self::zero(time, space, n_controls);
        s.terms.push(SourceTerm {
            coeff: vec![value; space.n * n_controls],
            profile: None,
        });
        s
    }

    /// The model's reward as a time-independent source.
    pub fn from_reward(model: &ModelSpec, time: TimeMesh, space: SpaceMesh) -> Self {
        let tables = CoefficientTables::new(model, &space);
        let mut s = Self::zero(time, space, tables.n_controls);
        s.terms.push(SourceTerm {
            coeff: tables.reward,
            profile: None,
        });
        s
    }

    pub(crate) fn push_term(&mut self, coeff: Vec<f64>, profile: Option<Vec<f64>>) -> Result<()> {
        if coeff.len() != self.space.n * self.n_controls {
            return Err(Error::config("source coefficient table has the wrong size"));
        }
        if let Some(p) = &profile {
            if p.len() != self.time.n_slices() * self.space.n {
                return Err(Error::config("source profile has the wrong size"));
            }
        }
        self.terms.push(SourceTerm { coeff, profile });
        Ok(())
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    /// True when the field has no terms, i.e. vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn value(&self, k: usize, i: usize, m: usize) -> f64 {
        let c = i * self.n_controls + m;
        let p = k * self.space.n + i;
        let term = |t: &SourceTerm| match &t.profile {
            Some(profile) => t.coeff[c] * profile[p],
            None => t.coeff[c],
        };
        match self.terms.split_first() {
            None => 0.0,
            Some((first, rest)) => rest.iter().fold(term(first), |acc, t| acc + term(t)),
        }
    }

    /// Sup norm over every `(t, x, a)`.
    pub fn sup_norm(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.time.n_slices() {
            for i in 0..self.space.n {
                for m in 0..self.n_controls {
                    worst = worst.max(self.value(k, i, m).abs());
                }
            }
        }
        worst
    }
}

/// Backward explicit solve of the correction equation: same stencils as the
/// limit HJB, maximum taken over the node's argmax set, source `r1` read on
/// the later slice.
pub fn solve_correction_pde(
    model: &ModelSpec,
    surface: &ValueSurface,
    argmax: &ArgmaxSet,
    r1: &SourceField,
    meshes: &DiffusionMeshes,
) -> Result<ValueSurface> {
    if surface.time != meshes.time || surface.space != meshes.space {
        return Err(Error::config(
            "correction meshes differ from the limit surface",
        ));
    }
    if argmax.time != meshes.time || argmax.space != meshes.space {
        return Err(Error::config("argmax set was built on different meshes"));
    }
    if r1.time != meshes.time || r1.space != meshes.space {
        return Err(Error::config("source field was built on different meshes"));
    }
    let nm = model.controls.len();
    if argmax.n_controls() != nm || r1.n_controls() != nm {
        return Err(Error::config(
            "control count differs between model, argmax set and source",
        ));
    }
    let tables = CoefficientTables::new(model, &meshes.space);
    check_stability(model, &tables, meshes)?;

    let n = meshes.space.n;
    let dx = meshes.space.dx;
    let mut out = ValueSurface::zeros(SurfaceKind::Correction, None, meshes.time, meshes.space);
    for k in (0..meshes.time.n_steps).rev() {
        let dt = meshes.time.step(k);
        let (cur, next) = out.step_pair(k);
        let failed = cur[1..n - 1]
            .par_iter_mut()
            .enumerate()
            .with_min_len(64)
            .map(|(off, slot)| {
                let i = off + 1;
                let d = local_diffs(next, i, dx);
                let r = tables.range(i);
                let (mu, hs) = (&tables.mu[r.clone()], &tables.half_sig2[r]);
                let mut best = f64::NEG_INFINITY;
                for m in argmax.iter(k, i) {
                    let h = hamiltonian(mu[m], hs[m], &d, r1.value(k + 1, i, m));
                    if h > best {
                        best = h;
                    }
                }
                *slot = next[i] + dt * best;
                best == f64::NEG_INFINITY
            })
            .any(|empty| empty);
        if failed {
            return Err(Error::Numerical {
                slice: k,
                detail: "empty argmax set at an interior node".into(),
            });
        }
        check_finite(out.slice(k), k)?;
    }
    Ok(out)
}

/// `V̄ + ε^{β/2}·δV̄¹`.
pub fn corrected_value(
    surface: &ValueSurface,
    correction: &ValueSurface,
    epsilon: f64,
    beta: f64,
) -> Result<ValueSurface> {
    if !surface.same_mesh(correction) {
        return Err(Error::config("corrected value needs matching meshes"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::config(format!(
            "epsilon must be > 0 (got {epsilon})"
        )));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::config(format!(
            "beta must lie in (0, 1] (got {beta})"
        )));
    }
    let scale = epsilon.powf(beta / 2.0);
    let values = surface
        .values()
        .iter()
        .zip(correction.values())
        .map(|(v, c)| v + scale * c)
        .collect();
    ValueSurface::from_values(
        surface.kind,
        Some(epsilon),
        surface.time,
        surface.space,
        values,
    )
}
