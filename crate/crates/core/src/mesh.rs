//! Uniform space and time meshes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Domain;

/// Nodes `x_lo + i·dx`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceMesh {
    pub x_lo: f64,
    pub dx: f64,
    pub n: usize,
}

/// Where a point falls on a [`SpaceMesh`]: left bracketing node and the
/// linear weight of the right one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub left: usize,
    pub frac: f64,
}

impl SpaceMesh {
    pub fn new(x_lo: f64, dx: f64, n: usize) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() || !x_lo.is_finite() {
            return Err(Error::config(format!("invalid space step dx={dx}")));
        }
        if n < 3 {
            return Err(Error::config(format!(
                "space mesh needs at least 3 nodes (got {n})"
            )));
        }
        Ok(Self { x_lo, dx, n })
    }

    /// Largest mesh with step `dx` starting at `x_lo` that stays inside the domain.
    pub fn covering(domain: &Domain, dx: f64) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::config(format!("invalid space step dx={dx}")));
        }
        let cells = (domain.width() / dx + 1e-9).floor();
        if cells > 1e12 {
            return Err(Error::config(format!(
                "space step {dx} too small for the domain"
            )));
        }
        Self::new(domain.x_lo, dx, cells as usize + 1)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx
    }

    pub fn x_hi(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.x(i))
    }

    /// Bracketing nodes of `y`, or `None` when `y` lies outside the mesh.
    #[inline]
    pub fn bracket(&self, y: f64) -> Option<Bracket> {
        let pos = (y - self.x_lo) / self.dx;
        bracket_position(pos, self.n)
    }

    /// Index of the nearest node, clamped to the mesh.
    #[inline]
    pub fn nearest(&self, y: f64) -> usize {
        let pos = ((y - self.x_lo) / self.dx).round();
        if pos <= 0.0 || pos.is_nan() {
            0
        } else {
            (pos as usize).min(self.n - 1)
        }
    }

    /// Indices of the nodes lying in `[a, b]`.
    pub fn window(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let lo = ((a - self.x_lo) / self.dx - 1e-9).ceil().max(0.0) as usize;
        let hi = (((b - self.x_lo) / self.dx + 1e-9).floor() + 1.0).max(0.0) as usize;
        lo.min(self.n)..hi.min(self.n)
    }
}

/// Bracket from a fractional node position; positions outside `[0, n − 1]` are absorbed.
#[inline]
pub(crate) fn bracket_position(pos: f64, n: usize) -> Option<Bracket> {
    let last = (n - 1) as f64;
    if !(pos >= 0.0 && pos <= last) {
        return None;
    }
    let left = (pos.floor() as usize).min(n - 2);
    Some(Bracket {
        left,
        frac: pos - left as f64,
    })
}

/// `n_steps` steps of size `dt`; the last one is shortened to land on the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    pub horizon: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeMesh {
    pub fn covering(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !(horizon > 0.0) {
            return Err(Error::config(format!(
                "invalid time mesh (horizon={horizon}, dt={dt})"
            )));
        }
        let steps = (horizon / dt - 1e-9).ceil().max(1.0);
        if steps > 1e10 {
            return Err(Error::config(format!("time step {dt} too small")));
        }
        Ok(Self {
            horizon,
            dt,
            n_steps: steps as usize,
        })
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    /// Length of step `k`, i.e. `t(k + 1) − t(k)`.
    #[inline]
    pub fn step(&self, k: usize) -> f64 {
        self.t(k + 1) - self.t(k)
    }

    pub fn n_slices(&self) -> usize {
        self.n_steps + 1
    }

    /// Index of the latest step start `t(k) ≤ t`, clamped to `0..n_steps`.
    #[inline]
    pub fn step_at(&self, t: f64) -> usize {
        let k = (t / self.dt + 1e-9).floor();
        if k <= 0.0 || k.is_nan() {
            0
        } else {
            (k as usize).min(self.n_steps - 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_mesh_lands_on_domain_edge() {
        let d = Domain::new(-0.5, 3.0, 1.0).unwrap();
        let m = SpaceMesh::covering(&d, 0.01).unwrap();
        assert_eq!(m.n, 351);
        assert!((m.x_hi() - 3.0).abs() < 1e-12);
        let m = SpaceMesh::covering(&d, 5e-4).unwrap();
        assert_eq!(m.n, 7001);
    }

    #[test]
    fn bracket_and_absorption() {
        let m = SpaceMesh::new(0.0, 0.5, 5).unwrap();
        assert_eq!(m.bracket(-0.1), None);
        assert_eq!(m.bracket(2.1), None);
        let b = m.bracket(0.75).unwrap();
        assert_eq!(b.left, 1);
        assert!((b.frac - 0.5).abs() < 1e-15);
        let b = m.bracket(2.0).unwrap();
        assert_eq!((b.left, b.frac), (3, 1.0));
        assert_eq!(m.nearest(10.0), 4);
        assert_eq!(m.nearest(-3.0), 0);
    }

    #[test]
    fn window_indices() {
        let m = SpaceMesh::new(-0.5, 0.1, 36).unwrap();
        let w = m.window(-0.2, 1.0);
        assert!((m.x(w.start) + 0.2).abs() < 1e-12);
        assert!((m.x(w.end - 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shortened_last_step() {
        let t = TimeMesh::covering(1.0, 0.3).unwrap();
        assert_eq!(t.n_steps, 4);
        assert!((t.step(3) - 0.1).abs() < 1e-12);
        assert_eq!(t.t(4), 1.0);
        assert_eq!(t.step_at(0.65), 2);
        assert_eq!(t.step_at(1.0), 3);
        let exact = TimeMesh::covering(1.0, 0.25).unwrap();
        assert_eq!(exact.n_steps, 4);
    }
}
