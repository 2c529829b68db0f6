//! Exact factorization `Phi(x, R) = X(R) Psi(x|R)` and the quantities
//! derived from it.
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::FactorizationError;
use crate::lattice::{AxisId, CompositeHamiltonian, ProductGrid};
use crate::linalg::{cdot, norm_sqr};
use crate::spectral::JointEigenstate;

/// Relative node threshold used when none is given.
pub const DEFAULT_NODE_THRESHOLD: f64 = 1e-14;
/// Largest tolerated fraction of masked clock points.
pub const MAX_MASKED_FRACTION: f64 = 0.05;
/// Imaginary parts of real quantities above this are flagged.
pub const IMAG_WARNING: f64 = 1e-8;

/// Phase convention for the marginal amplitude.
#[derive(Clone, Debug, PartialEq)]
pub enum Gauge {
    /// `X(R) = |Phi(R)|`, real and nonnegative.
    ZeroPhase,
    /// `X(R) = exp(i alpha(R)) |Phi(R)|` for the given clock field.
    Prescribed(Vec<f64>),
}

/// Marginal, conditional, gauge phase and node mask of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedState {
    pub grid: ProductGrid,
    /// `X(R)` on the clock grid.
    pub marginal: Vec<Complex64>,
    /// `Psi(x|R)` on the product grid; zero at masked `R`.
    pub conditional: Vec<Complex64>,
    /// `alpha(R)`.
    pub gauge_phase: Vec<f64>,
    /// True where `rho_mar` is below the node threshold.
    pub node_mask: Vec<bool>,
}

/// Joint, marginal and conditional probability densities.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub joint: Vec<f64>,
    pub marginal: Vec<f64>,
    pub conditional: Vec<f64>,
}

/// Split `state` into marginal and conditional amplitudes.
///
/// `node_threshold` is relative to `max rho_mar`; clock points below it
/// are masked and carry `Psi = 0`.
pub fn factorize(
    grid: &ProductGrid,
    state: &JointEigenstate,
    gauge: &Gauge,
    node_threshold: f64,
) -> Result<FactorizedState, FactorizationError> {
    let (ns, nc) = (grid.system_len(), grid.clock_len());
    if state.amplitudes.len() != ns * nc {
        return Err(FactorizationError::Invalid(format!(
            "state has {} points, grid has {}",
            state.amplitudes.len(),
            ns * nc
        )));
    }
    if !(node_threshold >= 0.0) {
        return Err(FactorizationError::Invalid("node threshold must be nonnegative".into()));
    }
    let alpha = match gauge {
        Gauge::ZeroPhase => vec![0.0; nc],
        Gauge::Prescribed(a) => {
            if a.len() != nc || a.iter().any(|v| !v.is_finite()) {
                return Err(FactorizationError::Invalid("gauge phase must be a finite clock field".into()));
            }
            a.clone()
        }
    };
    let norm = state.norm_sqr(grid);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(FactorizationError::Invalid(format!("state norm {norm} is not 1")));
    }
    let wx = grid.system_weight();
    let rho: Vec<f64> = (0..nc).map(|c| norm_sqr(&state.amplitudes[c * ns..(c + 1) * ns]) * wx).collect();
    let cut = node_threshold * rho.iter().cloned().fold(0.0, f64::max);
    let node_mask: Vec<bool> = rho.iter().map(|&r| r < cut || r == 0.0).collect();
    let masked = node_mask.iter().filter(|&&m| m).count();
    if masked as f64 > MAX_MASKED_FRACTION * nc as f64 {
        return Err(FactorizationError::NodeSet { masked, total: nc });
    }
    let mut marginal = Vec::with_capacity(nc);
    let mut conditional = vec![Complex64::new(0.0, 0.0); ns * nc];
    for c in 0..nc {
        let amp = rho[c].sqrt();
        let ph = Complex64::from_polar(1.0, alpha[c]);
        marginal.push(ph * amp);
        if node_mask[c] {
            continue;
        }
        let k = ph.conj() / amp;
        for s in 0..ns {
            conditional[c * ns + s] = state.amplitudes[c * ns + s] * k;
        }
    }
    Ok(FactorizedState { grid: grid.clone(), marginal, conditional, gauge_phase: alpha, node_mask })
}

impl FactorizedState {
    /// Build from separately computed parts; `X` is normalized over the
    /// clock grid and each unmasked `Psi(R)` locally.
    pub fn from_parts(
        grid: &ProductGrid,
        mut marginal: Vec<Complex64>,
        mut conditional: Vec<Complex64>,
    ) -> Result<Self, FactorizationError> {
        let (ns, nc) = (grid.system_len(), grid.clock_len());
        if marginal.len() != nc || conditional.len() != ns * nc {
            return Err(FactorizationError::Invalid("part sizes do not match the grid".into()));
        }
        let xn = (norm_sqr(&marginal) * grid.clock_weight()).sqrt();
        if !(xn > 0.0) {
            return Err(FactorizationError::Invalid("marginal is zero".into()));
        }
        marginal.iter_mut().for_each(|x| *x /= xn);
        let wx = grid.system_weight();
        let mut node_mask = vec![false; nc];
        for c in 0..nc {
            let col = &mut conditional[c * ns..(c + 1) * ns];
            let n = (norm_sqr(col) * wx).sqrt();
            if n > 0.0 && marginal[c].norm() > 0.0 {
                col.iter_mut().for_each(|z| *z /= n);
            } else {
                node_mask[c] = true;
                col.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            }
        }
        let gauge_phase = marginal.iter().map(|x| x.arg()).collect();
        Ok(FactorizedState { grid: grid.clone(), marginal, conditional, gauge_phase, node_mask })
    }

    pub fn system_len(&self) -> usize {
        self.grid.system_len()
    }

    pub fn clock_len(&self) -> usize {
        self.grid.clock_len()
    }

    /// `Psi(.|R_c)`.
    pub fn conditional_slice(&self, c: usize) -> &[Complex64] {
        let ns = self.system_len();
        &self.conditional[c * ns..(c + 1) * ns]
    }

    pub fn is_masked(&self, c: usize) -> bool {
        self.node_mask[c]
    }

    pub fn masked_count(&self) -> usize {
        self.node_mask.iter().filter(|&&m| m).count()
    }

    /// `rho_mar(R) = |X(R)|^2`.
    pub fn marginal_density(&self) -> Vec<f64> {
        self.marginal.iter().map(|x| x.norm_sqr()).collect()
    }

    /// `X Psi` on the product grid; masked clock points give zero.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        let ns = self.system_len();
        let mut out = vec![Complex64::new(0.0, 0.0); self.conditional.len()];
        for c in 0..self.clock_len() {
            if self.node_mask[c] {
                continue;
            }
            for s in 0..ns {
                out[c * ns + s] = self.marginal[c] * self.conditional[c * ns + s];
            }
        }
        out
    }

    /// `X -> exp(i gamma) X`, `Psi -> exp(-i gamma) Psi`.
    pub fn gauge_shift(&self, gamma: &[f64]) -> Result<FactorizedState, FactorizationError> {
        let nc = self.clock_len();
        if gamma.len() != nc || gamma.iter().any(|g| !g.is_finite()) {
            return Err(FactorizationError::Invalid("gamma must be a finite clock field".into()));
        }
        let ns = self.system_len();
        let mut out = self.clone();
        for c in 0..nc {
            let ph = Complex64::from_polar(1.0, gamma[c]);
            out.marginal[c] *= ph;
            out.gauge_phase[c] += gamma[c];
            for z in &mut out.conditional[c * ns..(c + 1) * ns] {
                *z *= ph.conj();
            }
        }
        Ok(out)
    }

    pub fn densities(&self) -> DensityReport {
        let ns = self.system_len();
        let marginal = self.marginal_density();
        let conditional: Vec<f64> = self.conditional.iter().map(|z| z.norm_sqr()).collect();
        let joint = conditional.iter().enumerate().map(|(i, p)| p * marginal[i / ns]).collect();
        DensityReport { joint, marginal, conditional }
    }

    /// Clock points where a centred stencil of half width `hw` along every
    /// clock axis stays on the grid and off the mask.
    pub fn stencil_interior(&self, hw: usize) -> Vec<bool> {
        let g = &self.grid;
        (0..self.clock_len())
            .map(|c| {
                if self.node_mask[c] {
                    return false;
                }
                (0..g.clock.len()).all(|a| {
                    (1..=hw as isize).all(|o| {
                        [o, -o].iter().all(|&d| matches!(g.clock_neighbour(c, a, d), Some(nb) if !self.node_mask[nb]))
                    })
                })
            })
            .collect()
    }
}

/// A user-supplied operator on the system grid.
#[derive(Clone)]
pub struct CustomObservable {
    pub name: String,
    /// Axis labels the operator acts on.
    pub axes: Vec<String>,
    pub apply: Arc<dyn Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync>,
}

impl fmt::Debug for CustomObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomObservable").field("name", &self.name).field("axes", &self.axes).finish()
    }
}

/// System observables for [`conditional_expectation`].
#[derive(Clone, Debug)]
pub enum Observable {
    Identity,
    /// Coordinate along the named system axis.
    Position(String),
    /// `-i d/dx` along the named system axis.
    Momentum(String),
    /// `T_S + V_S`.
    SystemEnergy,
    Custom(CustomObservable),
}

/// Local and global expectation values of a system observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalExpectation {
    /// `<A_S(R)>`, `None` at masked points.
    pub local: Vec<Option<f64>>,
    /// `integral dR rho_mar <A_S(R)>`.
    pub global: f64,
    /// Largest `|Im <A_S(R)>|`.
    pub max_imag: f64,
}

fn system_axis(grid: &ProductGrid, label: &str) -> Result<usize, FactorizationError> {
    match grid.find(label) {
        Some(AxisId::System(i)) => Ok(i),
        Some(AxisId::Clock(_)) => Err(FactorizationError::Domain(format!("`{label}` is a clock axis"))),
        None => Err(FactorizationError::Domain(format!("unknown axis `{label}`"))),
    }
}

/// `<Psi(R)|A_S|Psi(R)>` at each unmasked `R` and its `rho_mar`-weighted
/// average.
pub fn conditional_expectation(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
    observable: &Observable,
) -> Result<ConditionalExpectation, FactorizationError> {
    let g = &f.grid;
    let ns = g.system_len();
    let op: Box<dyn Fn(&[Complex64]) -> Vec<Complex64>> = match observable {
        Observable::Identity => Box::new(|p: &[Complex64]| p.to_vec()),
        Observable::Position(label) => {
            let i = system_axis(g, label)?;
            let xs: Vec<f64> = (0..ns).map(|s| g.system_coords(s)[i]).collect();
            Box::new(move |p: &[Complex64]| p.iter().zip(&xs).map(|(z, x)| z * x).collect())
        }
        Observable::Momentum(label) => {
            let i = system_axis(g, label)?;
            Box::new(move |p: &[Complex64]| {
                let mut d = vec![Complex64::new(0.0, 0.0); ns];
                h.system_derivative_only(i, p, &mut d);
                d.into_iter().map(|z| Complex64::new(z.im, -z.re)).collect()
            })
        }
        Observable::SystemEnergy => Box::new(|p: &[Complex64]| {
            let mut out = vec![Complex64::new(0.0, 0.0); ns];
            h.apply_system(p, None, &mut out);
            out
        }),
        Observable::Custom(c) => {
            for label in &c.axes {
                system_axis(g, label)?;
            }
            let apply = c.apply.clone();
            Box::new(move |p: &[Complex64]| apply(p))
        }
    };
    let wx = g.system_weight();
    let wr = g.clock_weight();
    let mut local = Vec::with_capacity(f.clock_len());
    let (mut global, mut max_imag) = (0.0, 0.0f64);
    for c in 0..f.clock_len() {
        if f.node_mask[c] {
            local.push(None);
            continue;
        }
        let psi = f.conditional_slice(c);
        let a = op(psi);
        if a.len() != ns {
            return Err(FactorizationError::Invalid("custom observable changed the field size".into()));
        }
        let v = cdot(psi, &a) * wx;
        max_imag = max_imag.max(v.im.abs());
        global += f.marginal[c].norm_sqr() * v.re * wr;
        local.push(Some(v.re));
    }
    Ok(ConditionalExpectation { local, global, max_imag })
}

/// `U_C(R) = <Psi(R)|H|Psi(R)>` at interior clock points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockPotential {
    pub values: Vec<Option<f64>>,
    pub max_imag: f64,
    /// Imaginary contamination exceeded [`IMAG_WARNING`].
    pub warning: bool,
}

/// `T_C Psi` on the product grid, evaluated only where the clock stencil is
/// interior; other columns are left zero.
pub(crate) fn clock_kinetic_of_conditional(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
) -> Result<(Vec<Complex64>, Vec<bool>), FactorizationError> {
    let interior = f.stencil_interior(h.fd_order().half_width());
    let t = h.partial_apply_clock_kinetic(&f.conditional)?;
    Ok((t, interior))
}

/// Effective clock potential including the clock kinetic term acting on
/// `Psi`.
pub fn effective_clock_potential(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
) -> Result<ClockPotential, FactorizationError> {
    check_grid(f, h)?;
    let (tc, interior) = clock_kinetic_of_conditional(f, h)?;
    let ns = f.system_len();
    let wx = f.grid.system_weight();
    let mut values = Vec::with_capacity(f.clock_len());
    let mut max_imag = 0.0f64;
    let mut hs = vec![Complex64::new(0.0, 0.0); ns];
    for c in 0..f.clock_len() {
        if !interior[c] {
            values.push(None);
            continue;
        }
        let psi = f.conditional_slice(c);
        let vloc = h.local_potential(c);
        h.apply_system_kinetic(psi, &mut hs);
        let mut acc = Complex64::new(0.0, 0.0);
        for s in 0..ns {
            let hpsi = hs[s] + psi[s] * vloc[s] + tc[c * ns + s];
            acc += psi[s].conj() * hpsi;
        }
        acc *= wx;
        max_imag = max_imag.max(acc.im.abs());
        values.push(Some(acc.re));
    }
    Ok(ClockPotential { values, max_imag, warning: max_imag > IMAG_WARNING })
}

/// `Re <Psi(R)| m^-1 P_n |Psi(R)>` along clock axis `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldMomentum {
    pub values: Vec<Option<f64>>,
    /// Largest imaginary part dropped from the expectation.
    pub max_imag: f64,
}

pub fn mean_field_momentum(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
    axis: usize,
) -> Result<MeanFieldMomentum, FactorizationError> {
    check_grid(f, h)?;
    if axis >= f.grid.clock.len() {
        return Err(FactorizationError::Invalid(format!("no clock axis {axis}")));
    }
    let interior = f.stencil_interior(h.fd_order().half_width());
    let p = h.partial_apply_clock_momentum(axis, &f.conditional)?;
    let m = f.grid.clock[axis].mass;
    let ns = f.system_len();
    let wx = f.grid.system_weight();
    let mut values = Vec::with_capacity(f.clock_len());
    let mut max_imag = 0.0f64;
    for c in 0..f.clock_len() {
        if !interior[c] {
            values.push(None);
            continue;
        }
        let v = cdot(f.conditional_slice(c), &p[c * ns..(c + 1) * ns]) * (wx / m);
        max_imag = max_imag.max(v.im.abs());
        values.push(Some(v.re));
    }
    Ok(MeanFieldMomentum { values, max_imag })
}

pub(crate) fn check_grid(f: &FactorizedState, h: &CompositeHamiltonian) -> Result<(), FactorizationError> {
    if &f.grid != h.grid() {
        return Err(FactorizationError::Invalid("state and Hamiltonian live on different grids".into()));
    }
    Ok(())
}
