use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::axis::Axis;
use crate::error::LatticeError;

/// Most axes allowed per partition.
pub const MAX_AXES: usize = 2;

/// Names one axis of a [`ProductGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisId {
    System(usize),
    Clock(usize),
}

/// Tensor-product grid over system axes `x` and clock axes `R`.
///
/// Flat index of a point is `s + n_system * c`, where `s` and `c` are the
/// row-major indices inside each partition (first axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductGrid {
    pub system: Vec<Axis>,
    pub clock: Vec<Axis>,
}

impl ProductGrid {
    pub fn new(system: Vec<Axis>, clock: Vec<Axis>) -> Result<Self, LatticeError> {
        let g = ProductGrid { system, clock };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        for (name, axes) in [("system", &self.system), ("clock", &self.clock)] {
            if axes.is_empty() || axes.len() > MAX_AXES {
                return Err(LatticeError::InvalidGrid(format!(
                    "{name} partition needs 1 to {MAX_AXES} axes, got {}",
                    axes.len()
                )));
            }
        }
        let mut seen = HashSet::new();
        for a in self.system.iter().chain(&self.clock) {
            a.validate()?;
            if !seen.insert(a.label.as_str()) {
                return Err(LatticeError::InvalidGrid(format!("duplicate axis label `{}`", a.label)));
            }
        }
        Ok(())
    }

    pub fn system_len(&self) -> usize {
        self.system.iter().map(|a| a.count).product()
    }

    pub fn clock_len(&self) -> usize {
        self.clock.iter().map(|a| a.count).product()
    }

    pub fn len(&self) -> usize {
        self.system_len() * self.clock_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of one system cell.
    pub fn system_weight(&self) -> f64 {
        self.system.iter().map(|a| a.spacing()).product()
    }

    /// Quadrature weight of one clock cell.
    pub fn clock_weight(&self) -> f64 {
        self.clock.iter().map(|a| a.spacing()).product()
    }

    pub fn weight(&self) -> f64 {
        self.system_weight() * self.clock_weight()
    }

    pub fn flat(&self, sys: usize, clk: usize) -> usize {
        sys + self.system_len() * clk
    }

    pub fn axis(&self, id: AxisId) -> &Axis {
        match id {
            AxisId::System(i) => &self.system[i],
            AxisId::Clock(i) => &self.clock[i],
        }
    }

    pub fn find(&self, label: &str) -> Option<AxisId> {
        if let Some(i) = self.system.iter().position(|a| a.label == label) {
            return Some(AxisId::System(i));
        }
        self.clock.iter().position(|a| a.label == label).map(AxisId::Clock)
    }

    pub fn axes(&self) -> impl Iterator<Item = AxisId> + '_ {
        (0..self.system.len())
            .map(AxisId::System)
            .chain((0..self.clock.len()).map(AxisId::Clock))
    }

    /// Distance in the flat array between neighbours along `id`.
    pub fn stride(&self, id: AxisId) -> usize {
        match id {
            AxisId::System(i) => self.system[..i].iter().map(|a| a.count).product(),
            AxisId::Clock(i) => {
                self.system_len() * self.clock[..i].iter().map(|a| a.count).product::<usize>()
            }
        }
    }

    /// Stride of clock axis `i` inside a clock-only array.
    pub fn clock_stride(&self, i: usize) -> usize {
        self.clock[..i].iter().map(|a| a.count).product()
    }

    /// Stride of system axis `i` inside a system-only array.
    pub fn system_stride(&self, i: usize) -> usize {
        self.stride(AxisId::System(i))
    }

    /// Per-axis indices of clock point `clk`.
    pub fn clock_multi(&self, clk: usize) -> Vec<usize> {
        multi_index(&self.clock, clk)
    }

    /// Per-axis indices of system point `sys`.
    pub fn system_multi(&self, sys: usize) -> Vec<usize> {
        multi_index(&self.system, sys)
    }

    pub fn clock_coords(&self, clk: usize) -> Vec<f64> {
        self.clock_multi(clk).iter().zip(&self.clock).map(|(&j, a)| a.point(j)).collect()
    }

    pub fn system_coords(&self, sys: usize) -> Vec<f64> {
        self.system_multi(sys).iter().zip(&self.system).map(|(&j, a)| a.point(j)).collect()
    }

    /// Clock point with the given per-axis indices.
    pub fn clock_index(&self, multi: &[usize]) -> usize {
        multi.iter().enumerate().map(|(i, &j)| j * self.clock_stride(i)).sum()
    }

    /// Neighbour of clock point `clk` shifted by `offset` along clock axis
    /// `axis`, or `None` past a Dirichlet wall.
    pub fn clock_neighbour(&self, clk: usize, axis: usize, offset: isize) -> Option<usize> {
        let a = &self.clock[axis];
        let mut multi = self.clock_multi(clk);
        let j = multi[axis] as isize + offset;
        let n = a.count as isize;
        let j = if a.is_periodic() {
            j.rem_euclid(n)
        } else if (0..n).contains(&j) {
            j
        } else {
            return None;
        };
        multi[axis] = j as usize;
        Some(self.clock_index(&multi))
    }

    /// Stable 64-bit FNV-1a digest of the grid layout, as hex.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (tag, axes) in [(b"S", &self.system), (b"C", &self.clock)] {
            for a in axes.iter() {
                eat(tag);
                eat(a.label.as_bytes());
                eat(&(a.count as u64).to_le_bytes());
                eat(&a.min.to_le_bytes());
                eat(&a.max.to_le_bytes());
                eat(&[a.is_periodic() as u8]);
                eat(&a.mass.to_le_bytes());
            }
        }
        format!("{h:016x}")
    }
}

fn multi_index(axes: &[Axis], mut flat: usize) -> Vec<usize> {
    axes.iter()
        .map(|a| {
            let j = flat % a.count;
            flat /= a.count;
            j
        })
        .collect()
}
