//! Feedback rules mapping `(t, x)` to a control index.

use crate::surface::PolicySurface;

/// A Markovian feedback control. Implementations must be total on
/// `[0, T] × ℝ`; indices refer to the model's [`ControlGrid`](crate::model::ControlGrid).
pub trait FeedbackPolicy: Sync {
    fn control_index(&self, t: f64, x: f64) -> usize;
}

/// Grid lookup: latest step start `≤ t`, nearest space node (clamped).
impl FeedbackPolicy for PolicySurface {
    #[inline]
    fn control_index(&self, t: f64, x: f64) -> usize {
        self.index(self.time.step_at(t), self.space.nearest(x))
    }
}

/// The same control everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantPolicy(pub usize);

impl FeedbackPolicy for ConstantPolicy {
    #[inline]
    fn control_index(&self, _t: f64, _x: f64) -> usize {
        self.0
    }
}

/// Wraps a closure as a policy.
pub struct FnPolicy<F>(pub F);

impl<F> FeedbackPolicy for FnPolicy<F>
where
    F: Fn(f64, f64) -> usize + Sync,
{
    #[inline]
    fn control_index(&self, t: f64, x: f64) -> usize {
        (self.0)(t, x)
    }
}

impl<P: FeedbackPolicy + ?Sized> FeedbackPolicy for &P {
    #[inline]
    fn control_index(&self, t: f64, x: f64) -> usize {
        (**self).control_index(t, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{SpaceMesh, TimeMesh};

    #[test]
    fn grid_lookup_uses_latest_step_and_nearest_node() {
        let time = TimeMesh::covering(1.0, 0.5).unwrap();
        let space = SpaceMesh::new(0.0, 1.0, 3).unwrap();
        let idx = vec![0, 1, 2, 3, 4, 5];
        let p = PolicySurface::from_indices(time, space, idx).unwrap();
        assert_eq!(p.control_index(0.0, 0.0), 0);
        assert_eq!(p.control_index(0.49, 1.4), 1);
        assert_eq!(p.control_index(0.5, 1.6), 5);
        assert_eq!(p.control_index(0.99, 10.0), 5);
        assert_eq!(p.control_index(1.0, -4.0), 3);
    }
}
