//! Finite-difference stencils on a uniform mesh.

/// Forward, backward and centred-second differences at an interior node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalDiffs {
    pub forward: f64,
    pub backward: f64,
    pub second: f64,
}

#[inline]
pub(crate) fn local_diffs(v: &[f64], i: usize, dx: f64) -> LocalDiffs {
    let (l, c, r) = (v[i - 1], v[i], v[i + 1]);
    LocalDiffs {
        forward: (r - c) / dx,
        backward: (c - l) / dx,
        second: (r - 2.0 * c + l) / (dx * dx),
    }
}

/// `μ·δᵘV + ½σ²·δ²V + source`, upwinded on the sign of `μ`.
#[inline]
pub(crate) fn hamiltonian(mu: f64, half_sig2: f64, d: &LocalDiffs, source: f64) -> f64 {
    let slope = if mu >= 0.0 { d.forward } else { d.backward };
    mu * slope + half_sig2 * d.second + source
}

#[inline]
pub(crate) fn centered_first(v: &[f64], i: usize, dx: f64) -> f64 {
    (v[i + 1] - v[i - 1]) / (2.0 * dx)
}

#[inline]
pub(crate) fn centered_second(v: &[f64], i: usize, dx: f64) -> f64 {
    (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx)
}

/// Third derivative: five-point centred stencil inside, four-point one-sided
/// stencils on the two outermost nodes at each end. Needs `v.len() >= 5`.
pub(crate) fn third_derivative(v: &[f64], dx: f64) -> Vec<f64> {
    let n = v.len();
    let dx3 = dx * dx * dx;
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (-v[i - 2] + 2.0 * v[i - 1] - 2.0 * v[i + 1] + v[i + 2]) / (2.0 * dx3)
            } else if i < 2 {
                (-v[i] + 3.0 * v[i + 1] - 3.0 * v[i + 2] + v[i + 3]) / dx3
            } else {
                (v[i] - 3.0 * v[i - 1] + 3.0 * v[i - 2] - v[i - 3]) / dx3
            }
        })
        .collect()
}

/// Centred second derivative with zero at the two boundary nodes.
pub(crate) fn second_derivative(v: &[f64], dx: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                0.0
            } else {
                centered_second(v, i, dx)
            }
        })
        .collect()
}
