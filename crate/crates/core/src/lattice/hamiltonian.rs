use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{AxisId, ProductGrid};
use super::potential::{Partition, PotentialSpec, ResolvedTerm};
use super::stencil::{add_axis_stencil, FdOrder};
use crate::error::LatticeError;
use crate::linalg::Scalar;

/// Potential terms of each block of `H = H_S + H_C + H_I`; terms in one
/// list are summed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTerms {
    #[serde(default)]
    pub system: Vec<PotentialSpec>,
    #[serde(default)]
    pub clock: Vec<PotentialSpec>,
    #[serde(default)]
    pub interaction: Vec<PotentialSpec>,
}

/// Discretized `H = H_S(x) + H_C(R) + H_I(x, R)`, applied matrix-free.
#[derive(Clone, Debug)]
pub struct CompositeHamiltonian {
    grid: ProductGrid,
    fd_order: FdOrder,
    terms: HamiltonianTerms,
    interaction_terms: Vec<ResolvedTerm>,
    v_system: Vec<f64>,
    v_clock: Vec<f64>,
    v_interaction: Vec<f64>,
}

/// Assemble the Hamiltonian on `grid`, evaluating every potential at every
/// grid point.
pub fn build_hamiltonian(
    grid: &ProductGrid,
    terms: &HamiltonianTerms,
    fd_order: FdOrder,
) -> Result<CompositeHamiltonian, LatticeError> {
    grid.validate()?;
    let resolve = |list: &[PotentialSpec], part| {
        list.iter().map(|s| s.resolve(grid, part)).collect::<Result<Vec<_>, _>>()
    };
    let sys_terms = resolve(&terms.system, Partition::System)?;
    let clk_terms = resolve(&terms.clock, Partition::Clock)?;
    let int_terms = resolve(&terms.interaction, Partition::Interaction)?;

    let ns = grid.system_len();
    let nc = grid.clock_len();
    let no_r = vec![0.0; grid.clock.len()];
    let no_x = vec![0.0; grid.system.len()];
    let mut v_system = vec![0.0; ns];
    for (s, v) in v_system.iter_mut().enumerate() {
        let x = grid.system_coords(s);
        for t in &sys_terms {
            *v += t.value(&x, &no_r);
        }
    }
    let mut v_clock = vec![0.0; nc];
    for (c, v) in v_clock.iter_mut().enumerate() {
        let r = grid.clock_coords(c);
        for t in &clk_terms {
            *v += t.value(&no_x, &r);
        }
    }
    let mut v_interaction = Vec::new();
    if !int_terms.is_empty() {
        v_interaction = vec![0.0; ns * nc];
        let xs: Vec<Vec<f64>> = (0..ns).map(|s| grid.system_coords(s)).collect();
        for c in 0..nc {
            let r = grid.clock_coords(c);
            for (s, x) in xs.iter().enumerate() {
                v_interaction[s + ns * c] = int_terms.iter().map(|t| t.value(x, &r)).sum();
            }
        }
    }

    let check = |vals: &[f64], names: &[ResolvedTerm], scale: usize| {
        match vals.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(LatticeError::NonFinite {
                term: names.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join("+"),
                index: i * scale,
                value: vals[i],
            }),
            None => Ok(()),
        }
    };
    check(&v_system, &sys_terms, 1)?;
    check(&v_clock, &clk_terms, ns)?;
    check(&v_interaction, &int_terms, 1)?;

    Ok(CompositeHamiltonian {
        grid: grid.clone(),
        fd_order,
        terms: terms.clone(),
        interaction_terms: int_terms,
        v_system,
        v_clock,
        v_interaction,
    })
}

impl CompositeHamiltonian {
    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn fd_order(&self) -> FdOrder {
        self.fd_order
    }

    pub fn terms(&self) -> &HamiltonianTerms {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn v_system(&self) -> &[f64] {
        &self.v_system
    }

    pub fn v_clock(&self) -> &[f64] {
        &self.v_clock
    }

    /// `V_I` on the full grid, or `None` when there is no interaction.
    pub fn v_interaction(&self) -> Option<&[f64]> {
        (!self.v_interaction.is_empty()).then_some(self.v_interaction.as_slice())
    }

    pub fn has_interaction(&self) -> bool {
        !self.v_interaction.is_empty()
    }

    /// Total potential at a flat index.
    pub fn potential(&self, flat: usize) -> f64 {
        let ns = self.grid.system_len();
        let mut v = self.v_system[flat % ns] + self.v_clock[flat / ns];
        if !self.v_interaction.is_empty() {
            v += self.v_interaction[flat];
        }
        v
    }

    pub fn potential_min(&self) -> f64 {
        (0..self.len()).map(|i| self.potential(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn potential_max(&self) -> f64 {
        (0..self.len()).map(|i| self.potential(i)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `V_S(x) + V_I(x, R_c) + V_C(R_c)` on the system grid.
    pub fn local_potential(&self, clk: usize) -> Vec<f64> {
        let ns = self.grid.system_len();
        let vc = self.v_clock[clk];
        (0..ns)
            .map(|s| {
                let vi = if self.v_interaction.is_empty() { 0.0 } else { self.v_interaction[s + ns * clk] };
                self.v_system[s] + vi + vc
            })
            .collect()
    }

    /// `V_I(x, r)` on the system grid at an arbitrary clock position.
    pub fn interaction_at(&self, r: &[f64]) -> Vec<f64> {
        let ns = self.grid.system_len();
        (0..ns)
            .map(|s| {
                let x = self.grid.system_coords(s);
                self.interaction_terms.iter().map(|t| t.value(&x, r)).sum()
            })
            .collect()
    }

    /// Prefactor `-1/(2 m h^2)` of the second-difference stencil on an axis.
    pub fn kinetic_scale(&self, id: AxisId) -> f64 {
        let a = self.grid.axis(id);
        let h = a.spacing();
        -0.5 / (a.mass * h * h)
    }

    fn add_kinetic<T: Scalar>(&self, id: AxisId, input: &[T], out: &mut [T], stride: usize) {
        let a = self.grid.axis(id);
        add_axis_stencil(
            input,
            out,
            a.count,
            stride,
            a.is_periodic(),
            self.fd_order.second_derivative(),
            self.kinetic_scale(id),
        );
    }

    /// `out = H input` on the full grid.
    pub fn apply_into<T: Scalar>(&self, input: &[T], out: &mut [T]) {
        assert_eq!(input.len(), self.len());
        assert_eq!(out.len(), self.len());
        for (i, (o, v)) in out.iter_mut().zip(input).enumerate() {
            *o = *v * self.potential(i);
        }
        for id in self.grid.axes().collect::<Vec<_>>() {
            self.add_kinetic(id, input, out, self.grid.stride(id));
        }
    }

    /// `H field`, checking the length.
    pub fn apply(&self, field: &[Complex64]) -> Result<Vec<Complex64>, LatticeError> {
        self.check_len(field.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
        self.apply_into(field, &mut out);
        Ok(out)
    }

    fn check_len(&self, got: usize) -> Result<(), LatticeError> {
        if got != self.len() {
            return Err(LatticeError::DimensionMismatch { expected: self.len(), got });
        }
        Ok(())
    }

    /// `T_C field`: clock kinetic energy summed over clock axes.
    pub fn partial_apply_clock_kinetic(&self, field: &[Complex64]) -> Result<Vec<Complex64>, LatticeError> {
        self.check_len(field.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
        for c in 0..self.grid.clock.len() {
            let id = AxisId::Clock(c);
            self.add_kinetic(id, field, &mut out, self.grid.stride(id));
        }
        Ok(out)
    }

    /// `P_n field = -i d/dR_n field` along clock axis `n`.
    pub fn partial_apply_clock_momentum(
        &self,
        axis: usize,
        field: &[Complex64],
    ) -> Result<Vec<Complex64>, LatticeError> {
        self.check_len(field.len())?;
        if axis >= self.grid.clock.len() {
            return Err(LatticeError::Config(format!("no clock axis {axis}")));
        }
        let id = AxisId::Clock(axis);
        let mut d = vec![Complex64::new(0.0, 0.0); field.len()];
        self.add_first_derivative(id, field, &mut d, self.grid.stride(id));
        Ok(d.into_iter().map(|z| Complex64::new(z.im, -z.re)).collect())
    }

    pub(crate) fn add_first_derivative<T: Scalar>(&self, id: AxisId, input: &[T], out: &mut [T], stride: usize) {
        let a = self.grid.axis(id);
        add_axis_stencil(
            input,
            out,
            a.count,
            stride,
            a.is_periodic(),
            self.fd_order.first_derivative(),
            1.0 / a.spacing(),
        );
    }

    /// `T_C` applied to a clock-only array.
    pub fn apply_clock_kinetic_only<T: Scalar>(&self, input: &[T], out: &mut [T]) {
        for c in 0..self.grid.clock.len() {
            self.add_kinetic(AxisId::Clock(c), input, out, self.grid.clock_stride(c));
        }
    }

    /// `d/dR_n` applied to a clock-only array.
    pub fn clock_derivative_only<T: Scalar>(&self, axis: usize, input: &[T], out: &mut [T]) {
        self.add_first_derivative(AxisId::Clock(axis), input, out, self.grid.clock_stride(axis));
    }

    /// `out = T_S slice` on a system-only array.
    pub fn apply_system_kinetic<T: Scalar>(&self, input: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for s in 0..self.grid.system.len() {
            self.add_kinetic(AxisId::System(s), input, out, self.grid.system_stride(s));
        }
    }

    /// `out = (T_S + V_S + extra) slice` on a system-only array.
    pub fn apply_system<T: Scalar>(&self, input: &[T], extra: Option<&[f64]>, out: &mut [T]) {
        self.apply_system_kinetic(input, out);
        for (s, o) in out.iter_mut().enumerate() {
            let v = self.v_system[s] + extra.map_or(0.0, |e| e[s]);
            *o += input[s] * v;
        }
    }

    /// `d/dx_n` applied to a system-only array.
    pub fn system_derivative_only<T: Scalar>(&self, axis: usize, input: &[T], out: &mut [T]) {
        self.add_first_derivative(AxisId::System(axis), input, out, self.grid.system_stride(axis));
    }

    fn axis_couplings(&self, id: AxisId, stride: usize, index: usize, mut f: impl FnMut(usize, f64)) {
        let a = self.grid.axis(id);
        let n = a.count as isize;
        let j = ((index / stride) % a.count) as isize;
        let scale = self.kinetic_scale(id);
        for &(o, c) in self.fd_order.second_derivative() {
            if o == 0 {
                continue;
            }
            let jj = j + o;
            let jj = if a.is_periodic() {
                jj.rem_euclid(n)
            } else if (0..n).contains(&jj) {
                jj
            } else {
                continue;
            };
            let col = (index as isize + (jj - j) * stride as isize) as usize;
            f(col, c * scale);
        }
    }

    fn diagonal_kinetic(&self, ids: impl Iterator<Item = AxisId>) -> f64 {
        let c0 = self
            .fd_order
            .second_derivative()
            .iter()
            .find(|(o, _)| *o == 0)
            .map(|(_, c)| *c)
            .unwrap_or(0.0);
        ids.map(|id| c0 * self.kinetic_scale(id)).sum()
    }

    /// Visit every nonzero `(row, col, value)` of the full matrix; each
    /// row's diagonal comes first.
    pub fn for_each_entry(&self, mut f: impl FnMut(usize, usize, f64)) {
        let ids: Vec<AxisId> = self.grid.axes().collect();
        let kd = self.diagonal_kinetic(ids.iter().copied());
        for row in 0..self.len() {
            f(row, row, self.potential(row) + kd);
            for &id in &ids {
                self.axis_couplings(id, self.grid.stride(id), row, |col, v| f(row, col, v));
            }
        }
    }

    /// Nonzeros of `T_S + V_S + extra` on the system grid.
    pub fn for_each_system_entry(&self, extra: Option<&[f64]>, mut f: impl FnMut(usize, usize, f64)) {
        let kd = self.diagonal_kinetic((0..self.grid.system.len()).map(AxisId::System));
        for row in 0..self.grid.system_len() {
            f(row, row, self.v_system[row] + extra.map_or(0.0, |e| e[row]) + kd);
            for s in 0..self.grid.system.len() {
                let id = AxisId::System(s);
                self.axis_couplings(id, self.grid.system_stride(s), row, |col, v| f(row, col, v));
            }
        }
    }

    /// Nonzeros of `T_C` on the clock grid.
    pub fn for_each_clock_kinetic_entry(&self, mut f: impl FnMut(usize, usize, f64)) {
        let kd = self.diagonal_kinetic((0..self.grid.clock.len()).map(AxisId::Clock));
        for row in 0..self.grid.clock_len() {
            f(row, row, kd);
            for c in 0..self.grid.clock.len() {
                let id = AxisId::Clock(c);
                self.axis_couplings(id, self.grid.clock_stride(c), row, |col, v| f(row, col, v));
            }
        }
    }

    /// Dense `n x n` matrix of `H` (real symmetric), row-major.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.len();
        let mut m = vec![0.0; n * n];
        self.for_each_entry(|r, c, v| m[r * n + c] += v);
        m
    }
}
