use std::ops::{AddAssign, Mul};

use serde::{Deserialize, Serialize};

use crate::error::LatticeError;

/// Accuracy order of the finite-difference stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum FdOrder {
    Second,
    Fourth,
}

impl TryFrom<u8> for FdOrder {
    type Error = LatticeError;
    fn try_from(v: u8) -> Result<Self, LatticeError> {
        match v {
            2 => Ok(FdOrder::Second),
            4 => Ok(FdOrder::Fourth),
            _ => Err(LatticeError::Config(format!("fd_order must be 2 or 4, got {v}"))),
        }
    }
}

impl From<FdOrder> for u8 {
    fn from(o: FdOrder) -> u8 {
        match o {
            FdOrder::Second => 2,
            FdOrder::Fourth => 4,
        }
    }
}

const D2_2: [(isize, f64); 3] = [(-1, 1.0), (0, -2.0), (1, 1.0)];
const D2_4: [(isize, f64); 5] = [
    (-2, -1.0 / 12.0),
    (-1, 16.0 / 12.0),
    (0, -30.0 / 12.0),
    (1, 16.0 / 12.0),
    (2, -1.0 / 12.0),
];
const D1_2: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
const D1_4: [(isize, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];

impl FdOrder {
    /// Second-derivative weights; multiply by `1/h^2`.
    pub fn second_derivative(self) -> &'static [(isize, f64)] {
        match self {
            FdOrder::Second => &D2_2,
            FdOrder::Fourth => &D2_4,
        }
    }

    /// First-derivative weights; multiply by `1/h`.
    pub fn first_derivative(self) -> &'static [(isize, f64)] {
        match self {
            FdOrder::Second => &D1_2,
            FdOrder::Fourth => &D1_4,
        }
    }

    /// Largest stencil offset.
    pub fn half_width(self) -> usize {
        match self {
            FdOrder::Second => 1,
            FdOrder::Fourth => 2,
        }
    }
}

/// `out += scale * D input` along one axis of a row-major array.
///
/// `len` and `stride` describe the axis; the array may hold any number of
/// outer and inner dimensions.
pub(crate) fn add_axis_stencil<T>(
    input: &[T],
    out: &mut [T],
    len: usize,
    stride: usize,
    periodic: bool,
    stencil: &[(isize, f64)],
    scale: f64,
) where
    T: Copy + AddAssign + Mul<f64, Output = T>,
{
    debug_assert_eq!(input.len(), out.len());
    let block = len * stride;
    let n = len as isize;
    for base in (0..input.len()).step_by(block) {
        for j in 0..len {
            let row = base + j * stride;
            for &(o, c) in stencil {
                let jj = j as isize + o;
                let jj = if periodic {
                    jj.rem_euclid(n)
                } else if (0..n).contains(&jj) {
                    jj
                } else {
                    continue;
                };
                let w = c * scale;
                let src = base + jj as usize * stride;
                for s in 0..stride {
                    out[row + s] += input[src + s] * w;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_derivative_of_quadratic_is_exact() {
        let h = 0.1;
        let xs: Vec<f64> = (0..20).map(|j| j as f64 * h).collect();
        let f: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        for order in [FdOrder::Second, FdOrder::Fourth] {
            let mut out = vec![0.0; 20];
            add_axis_stencil(&f, &mut out, 20, 1, false, order.second_derivative(), 1.0 / (h * h));
            for v in &out[2..18] {
                assert!((v - 6.0).abs() < 1e-9, "{v}");
            }
        }
    }

    #[test]
    fn fourth_order_first_derivative_of_cubic_is_exact() {
        let h = 0.05;
        let f: Vec<f64> = (0..16).map(|j| (j as f64 * h).powi(3)).collect();
        let mut out = vec![0.0; 16];
        add_axis_stencil(&f, &mut out, 16, 1, false, FdOrder::Fourth.first_derivative(), 1.0 / h);
        for j in 2..14 {
            let x = j as f64 * h;
            assert!((out[j] - 3.0 * x * x).abs() < 1e-11);
        }
    }

    #[test]
    fn periodic_stencil_annihilates_constants() {
        let f = vec![2.5; 12];
        let mut out = vec![0.0; 12];
        add_axis_stencil(&f, &mut out, 12, 1, true, FdOrder::Fourth.second_derivative(), 7.0);
        assert!(out.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn strided_axis_matches_contiguous() {
        // 3 x 8 array, apply along the slow axis.
        let f: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64).collect();
        let mut strided = vec![0.0; 24];
        add_axis_stencil(&f, &mut strided, 8, 3, true, FdOrder::Second.second_derivative(), 1.0);
        for s in 0..3 {
            let col: Vec<f64> = (0..8).map(|j| f[s + 3 * j]).collect();
            let mut out = vec![0.0; 8];
            add_axis_stencil(&col, &mut out, 8, 1, true, FdOrder::Second.second_derivative(), 1.0);
            for j in 0..8 {
                assert_eq!(out[j], strided[s + 3 * j]);
            }
        }
    }
}
