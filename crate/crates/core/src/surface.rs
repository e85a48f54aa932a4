//! Value and policy samples on a time × space grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{SpaceMesh, TimeMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Jump,
    Diffusion,
    Correction,
}

impl SurfaceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SurfaceKind::Jump => "jump",
            SurfaceKind::Diffusion => "diffusion",
            SurfaceKind::Correction => "correction",
        }
    }
}

impl std::str::FromStr for SurfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jump" => Ok(SurfaceKind::Jump),
            "diffusion" => Ok(SurfaceKind::Diffusion),
            "correction" => Ok(SurfaceKind::Correction),
            other => Err(Error::config(format!("unknown surface kind {other:?}"))),
        }
    }
}

/// Row-major `(time slice, space node)` samples; slice `n_steps` is the terminal one.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub kind: SurfaceKind,
    /// `None` for ε-free surfaces (diffusive limit and its correction).
    pub epsilon: Option<f64>,
    pub time: TimeMesh,
    pub space: SpaceMesh,
    values: Vec<f64>,
}

impl ValueSurface {
    pub fn zeros(
        kind: SurfaceKind,
        epsilon: Option<f64>,
        time: TimeMesh,
        space: SpaceMesh,
    ) -> Self {
        Self {
            kind,
            epsilon,
            time,
            space,
            values: vec![0.0; time.n_slices() * space.n],
        }
    }

    pub fn from_values(
        kind: SurfaceKind,
        epsilon: Option<f64>,
        time: TimeMesh,
        space: SpaceMesh,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != time.n_slices() * space.n {
            return Err(Error::config(format!(
                "surface has {} values, mesh needs {}",
                values.len(),
                time.n_slices() * space.n
            )));
        }
        Ok(Self {
            kind,
            epsilon,
            time,
            space,
            values,
        })
    }

    /// Samples `f(t, x)` on every node, terminal slice included.
    pub fn from_fn(
        kind: SurfaceKind,
        time: TimeMesh,
        space: SpaceMesh,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut s = Self::zeros(kind, None, time, space);
        for k in 0..time.n_slices() {
            let t = time.t(k);
            for (i, v) in s.slice_mut(k).iter_mut().enumerate() {
                *v = f(t, space.x(i));
            }
        }
        s
    }

    #[inline]
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.space.n;
        &self.values[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.space.n;
        &mut self.values[k * n..(k + 1) * n]
    }

    /// Mutable slice `k` together with read-only slice `k + 1`.
    pub(crate) fn step_pair(&mut self, k: usize) -> (&mut [f64], &[f64]) {
        let n = self.space.n;
        let (head, tail) = self.values.split_at_mut((k + 1) * n);
        (&mut head[k * n..], &tail[..n])
    }

    #[inline]
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.space.n + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> &[f64] {
        self.slice(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.slice(self.time.n_steps)
    }

    pub fn n_slices(&self) -> usize {
        self.time.n_slices()
    }

    /// Linear interpolation of slice `k` at `x`; zero outside the mesh.
    pub fn interpolate(&self, k: usize, x: f64) -> f64 {
        interpolate_slice(self.slice(k), &self.space, x)
    }

    /// Sup norm over all slices.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn same_mesh(&self, other: &ValueSurface) -> bool {
        self.time == other.time && self.space == other.space
    }
}

#[inline]
pub(crate) fn interpolate_slice(slice: &[f64], space: &SpaceMesh, x: f64) -> f64 {
    match space.bracket(x) {
        Some(b) => {
            let l = slice[b.left];
            l + b.frac * (slice[b.left + 1] - l)
        }
        None => 0.0,
    }
}

/// Control index at every `(step, node)`; row `k` applies on `(t_k, t_{k+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySurface {
    pub time: TimeMesh,
    pub space: SpaceMesh,
    indices: Vec<u16>,
}

impl PolicySurface {
    pub fn zeros(time: TimeMesh, space: SpaceMesh) -> Self {
        Self {
            time,
            space,
            indices: vec![0; time.n_steps * space.n],
        }
    }

    pub fn from_indices(time: TimeMesh, space: SpaceMesh, indices: Vec<u16>) -> Result<Self> {
        if indices.len() != time.n_steps * space.n {
            return Err(Error::config(format!(
                "policy has {} entries, mesh needs {}",
                indices.len(),
                time.n_steps * space.n
            )));
        }
        Ok(Self {
            time,
            space,
            indices,
        })
    }

    /// Same control index everywhere.
    pub fn constant(time: TimeMesh, space: SpaceMesh, index: u16) -> Self {
        Self {
            time,
            space,
            indices: vec![index; time.n_steps * space.n],
        }
    }

    #[inline]
    pub fn index(&self, k: usize, i: usize) -> usize {
        self.indices[k * self.space.n + i] as usize
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[u16] {
        let n = self.space.n;
        &self.indices[k * n..(k + 1) * n]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, k: usize) -> &mut [u16] {
        let n = self.space.n;
        &mut self.indices[k * n..(k + 1) * n]
    }

    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    pub fn max_index(&self) -> usize {
        self.indices.iter().copied().max().unwrap_or(0) as usize
    }
}
