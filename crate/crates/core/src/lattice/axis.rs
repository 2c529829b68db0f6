use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::LatticeError;

/// Boundary condition of one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Field vanishes one spacing outside both ends.
    Dirichlet,
    /// The last point neighbours the first.
    Periodic,
}

/// One coordinate axis of the product grid.
///
/// Dirichlet axes place `count` interior points on `(min, max)` with
/// spacing `(max - min) / (count + 1)`. Periodic axes place them on
/// `[min, max)` with spacing `(max - min) / count`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub boundary: Boundary,
    /// Mass (or moment of inertia for angular axes) in the kinetic term.
    pub mass: f64,
}

/// Smallest accepted number of points per axis.
pub const MIN_POINTS: usize = 8;

impl Axis {
    pub fn new(
        label: impl Into<String>,
        count: usize,
        min: f64,
        max: f64,
        boundary: Boundary,
        mass: f64,
    ) -> Result<Self, LatticeError> {
        let axis = Axis { label: label.into(), count, min, max, boundary, mass };
        axis.validate()?;
        Ok(axis)
    }

    /// A periodic angle on `[0, 2pi)` with moment of inertia `inertia`.
    pub fn angular(
        label: impl Into<String>,
        count: usize,
        inertia: f64,
    ) -> Result<Self, LatticeError> {
        Self::new(label, count, 0.0, TAU, Boundary::Periodic, inertia)
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        let bad = |m: String| Err(LatticeError::InvalidGrid(format!("axis `{}`: {m}", self.label)));
        if self.label.is_empty() {
            return Err(LatticeError::InvalidGrid("axis label is empty".into()));
        }
        if self.count < MIN_POINTS {
            return bad(format!("{} points, need at least {MIN_POINTS}", self.count));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return bad(format!("range [{}, {}] is empty or not finite", self.min, self.max));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return bad(format!("mass {} must be positive", self.mass));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::Dirichlet => (self.max - self.min) / (self.count as f64 + 1.0),
            Boundary::Periodic => (self.max - self.min) / self.count as f64,
        }
    }

    pub fn point(&self, j: usize) -> f64 {
        let h = self.spacing();
        match self.boundary {
            Boundary::Dirichlet => self.min + (j as f64 + 1.0) * h,
            Boundary::Periodic => self.min + j as f64 * h,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.point(j)).collect()
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    /// Periodic with a span of exactly one turn.
    pub fn is_angular(&self) -> bool {
        self.is_periodic() && ((self.max - self.min) - TAU).abs() < 1e-12
    }

    /// Bracket `q` between two grid points for linear interpolation.
    ///
    /// Returns `(lower, upper, fraction)` with `q = (1-f) x[lower] + f x[upper]`.
    /// On Dirichlet axes positions outside `[x_0, x_{N-1}]` give `None`;
    /// periodic axes wrap.
    pub fn locate(&self, q: f64) -> Option<(usize, usize, f64)> {
        if !q.is_finite() {
            return None;
        }
        let h = self.spacing();
        match self.boundary {
            Boundary::Dirichlet => {
                let s = (q - self.point(0)) / h;
                let last = (self.count - 1) as f64;
                // Allow roundoff at the ends.
                if s < -1e-12 || s > last + 1e-12 {
                    return None;
                }
                let s = s.clamp(0.0, last);
                let lower = (s.floor() as usize).min(self.count - 2);
                Some((lower, lower + 1, s - lower as f64))
            }
            Boundary::Periodic => {
                let span = self.max - self.min;
                let mut s = (q - self.min).rem_euclid(span) / h;
                if s >= self.count as f64 {
                    s -= self.count as f64;
                }
                let lower = (s.floor() as usize).min(self.count - 1);
                Some((lower, (lower + 1) % self.count, s - lower as f64))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_points_exclude_walls() {
        let a = Axis::new("x", 9, 0.0, 1.0, Boundary::Dirichlet, 1.0).unwrap();
        assert!((a.spacing() - 0.1).abs() < 1e-15);
        assert!((a.point(0) - 0.1).abs() < 1e-15);
        assert!((a.point(8) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn periodic_points_include_origin() {
        let a = Axis::angular("phi", 16, 2.0).unwrap();
        assert_eq!(a.point(0), 0.0);
        assert!((a.spacing() * 16.0 - TAU).abs() < 1e-14);
        assert!(a.is_angular());
    }

    #[test]
    fn rejects_small_and_massless_axes() {
        assert!(Axis::new("x", 7, 0.0, 1.0, Boundary::Dirichlet, 1.0).is_err());
        assert!(Axis::new("x", 8, 0.0, 1.0, Boundary::Dirichlet, 0.0).is_err());
        assert!(Axis::new("x", 8, 1.0, 1.0, Boundary::Dirichlet, 1.0).is_err());
    }

    #[test]
    fn locate_wraps_on_periodic_axes() {
        let a = Axis::angular("phi", 8, 1.0).unwrap();
        let h = a.spacing();
        let (lo, hi, f) = a.locate(TAU - 0.5 * h).unwrap();
        assert_eq!((lo, hi), (7, 0));
        assert!((f - 0.5).abs() < 1e-12);
        let (lo, _, f) = a.locate(-0.25 * h).unwrap();
        assert_eq!(lo, 7);
        assert!((f - 0.75).abs() < 1e-12);
    }

    #[test]
    fn locate_rejects_outside_dirichlet() {
        let a = Axis::new("x", 8, 0.0, 9.0, Boundary::Dirichlet, 1.0).unwrap();
        assert!(a.locate(0.5).is_none());
        assert_eq!(a.locate(8.0).unwrap(), (6, 7, 1.0));
        let (lo, hi, f) = a.locate(2.5).unwrap();
        assert_eq!((lo, hi), (1, 2));
        assert!((f - 0.5).abs() < 1e-14);
    }
}
