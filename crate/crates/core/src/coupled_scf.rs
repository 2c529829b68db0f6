//! Residuals of the coupled marginal/conditional equations and their
//! self-consistent solution.
//!
//! Two discretizations of the equations are provided. [`ResidualForm::Expanded`]
//! evaluates every term (mean field, `[P X/X]`, `[T_C X/X]`, `T_C Psi`) with
//! its own stencil, so an exact eigenstate leaves an `O(h^p)` residual.
//! [`ResidualForm::Compact`] uses the grid identity
//! `T_C(X Psi) = sum_{R'} t_{RR'} X_{R'} Psi_{R'}`, which makes both
//! equations exact on the lattice: an exact discrete eigenstate has zero
//! residual and the residuals are exactly gauge covariant.
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ScfError;
use crate::factorization::{check_grid, FactorizedState, IMAG_WARNING};
use crate::lattice::CompositeHamiltonian;
use crate::linalg::{cdot, norm_sqr};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualForm {
    Expanded,
    Compact,
}

/// Residual fields of both equations for one factorized state.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledResiduals {
    pub form: ResidualForm,
    /// LHS - RHS of the marginal equation on the clock grid.
    pub marginal_residual: Vec<Complex64>,
    /// LHS - RHS of the conditional equation on the product grid.
    pub conditional_residual: Vec<Complex64>,
    pub epsilon: f64,
    /// `lambda(R) / rho_mar(R)`.
    pub local_energy: Vec<Option<f64>>,
    /// Clock points where the residuals were evaluated.
    pub valid: Vec<bool>,
    /// `sqrt(integral dR |r_X|^2)`.
    pub marginal_norm: f64,
    /// `sqrt(integral dR rho_mar <r_Psi|r_Psi>)`.
    pub conditional_norm: f64,
}

/// Lagrange multipliers and the defects of their sum rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub epsilon: f64,
    pub epsilon_imag: f64,
    pub lambda_over_rho: Vec<Option<f64>>,
    /// Largest `|Im lambda/rho|` at valid points.
    pub lambda_imag: f64,
    pub integral_lambda: f64,
    /// `<Phi|H|Phi> / <Phi|Phi>` of the reconstructed state.
    pub energy: f64,
    /// `|epsilon - energy|`.
    pub epsilon_defect: f64,
    /// `|integral lambda - energy|`.
    pub lambda_defect: f64,
    /// Same quantities from the expanded stencils.
    pub expanded_epsilon: f64,
    pub expanded_integral_lambda: f64,
    pub expanded_lambda_over_rho: Vec<Option<f64>>,
    /// Imaginary contamination above [`IMAG_WARNING`].
    pub warning: bool,
}

/// Clock points with every in-grid stencil neighbour unmasked.
fn compact_valid(f: &FactorizedState, hw: usize) -> Vec<bool> {
    let g = &f.grid;
    (0..f.clock_len())
        .map(|c| {
            !f.node_mask[c]
                && (0..g.clock.len()).all(|a| {
                    (1..=hw as isize).all(|o| {
                        [o, -o].iter().all(|&d| g.clock_neighbour(c, a, d).is_none_or(|nb| !f.node_mask[nb]))
                    })
                })
        })
        .collect()
}

/// Stencil-by-stencil pieces of both equations.
struct Expanded {
    interior: Vec<bool>,
    /// `T_C X` and `Re <Psi|m^-1 P_n Psi> P_n X + U X` pieces on the clock grid.
    tcx: Vec<Complex64>,
    px: Vec<Vec<Complex64>>,
    mean_field: Vec<Vec<f64>>,
    /// `U_C(R)`; includes `<Psi|T_C Psi>`.
    u: Vec<Complex64>,
    /// `(H_S + H_I + V_C + T_C) Psi + sum_n [m^-1 P_n X/X] P_n Psi + [T_C X/X] Psi`.
    lhs_psi: Vec<Complex64>,
}

fn expanded_terms(f: &FactorizedState, h: &CompositeHamiltonian) -> Result<Expanded, ScfError> {
    let g = &f.grid;
    let (ns, nc) = (g.system_len(), g.clock_len());
    let wx = g.system_weight();
    let interior = f.stencil_interior(h.fd_order().half_width());
    let mi = |z: Complex64| Complex64::new(z.im, -z.re); // multiply by -i
    let mut tcx = vec![C0; nc];
    h.apply_clock_kinetic_only(&f.marginal, &mut tcx);
    let tc_psi = h.partial_apply_clock_kinetic(&f.conditional)?;
    let mut px = Vec::new();
    let mut p_psi = Vec::new();
    for n in 0..g.clock.len() {
        let mut d = vec![C0; nc];
        h.clock_derivative_only(n, &f.marginal, &mut d);
        px.push(d.into_iter().map(mi).collect::<Vec<_>>());
        p_psi.push(h.partial_apply_clock_momentum(n, &f.conditional)?);
    }
    let mut mean_field = vec![vec![0.0; nc]; g.clock.len()];
    let mut u = vec![C0; nc];
    let mut lhs_psi = vec![C0; ns * nc];
    let mut hs = vec![C0; ns];
    for c in 0..nc {
        if !interior[c] {
            continue;
        }
        let psi = f.conditional_slice(c);
        let vloc = h.local_potential(c);
        h.apply_system_kinetic(psi, &mut hs);
        let x = f.marginal[c];
        let tcx_over_x = tcx[c] / x;
        let row = &mut lhs_psi[c * ns..(c + 1) * ns];
        for s in 0..ns {
            row[s] = hs[s] + psi[s] * vloc[s] + tc_psi[c * ns + s];
        }
        u[c] = cdot(psi, row) * wx;
        for s in 0..ns {
            row[s] += psi[s] * tcx_over_x;
        }
        for n in 0..g.clock.len() {
            let m = g.clock[n].mass;
            let pp = &p_psi[n][c * ns..(c + 1) * ns];
            mean_field[n][c] = (cdot(psi, pp) * (wx / m)).re;
            let k = px[n][c] / (x * m);
            for s in 0..ns {
                row[s] += pp[s] * k;
            }
        }
    }
    Ok(Expanded { interior, tcx, px, mean_field, u, lhs_psi })
}

/// `[H (X Psi)](x, R)` with masked columns treated as zero.
fn h_phi(f: &FactorizedState, h: &CompositeHamiltonian) -> Result<Vec<Complex64>, ScfError> {
    Ok(h.apply(&f.reconstruct())?)
}

/// Residual of the marginal equation for multiplier `epsilon`.
pub fn marginal_residual(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
    epsilon: f64,
    form: ResidualForm,
) -> Result<(Vec<Complex64>, Vec<bool>), ScfError> {
    check_grid(f, h)?;
    let g = &f.grid;
    let (ns, nc) = (g.system_len(), g.clock_len());
    let mut r = vec![C0; nc];
    let valid = match form {
        ResidualForm::Compact => {
            let valid = compact_valid(f, h.fd_order().half_width());
            let hp = h_phi(f, h)?;
            let wx = g.system_weight();
            for c in (0..nc).filter(|&c| valid[c]) {
                r[c] = cdot(f.conditional_slice(c), &hp[c * ns..(c + 1) * ns]) * wx - f.marginal[c] * epsilon;
            }
            valid
        }
        ResidualForm::Expanded => {
            let e = expanded_terms(f, h)?;
            for c in (0..nc).filter(|&c| e.interior[c]) {
                let mut v = e.tcx[c] + e.u[c] * f.marginal[c] - f.marginal[c] * epsilon;
                for n in 0..g.clock.len() {
                    v += e.px[n][c] * e.mean_field[n][c];
                }
                r[c] = v;
            }
            e.interior
        }
    };
    if !valid.iter().any(|&v| v) {
        return Err(ScfError::Mask("no clock point has an unmasked stencil".into()));
    }
    Ok((r, valid))
}

/// Residual of the conditional equation for local energies `lambda/rho`.
pub fn conditional_residual(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
    lambda_over_rho: &[Option<f64>],
    form: ResidualForm,
) -> Result<(Vec<Complex64>, Vec<bool>), ScfError> {
    check_grid(f, h)?;
    let g = &f.grid;
    let (ns, nc) = (g.system_len(), g.clock_len());
    if lambda_over_rho.len() != nc {
        return Err(ScfError::Invalid("lambda/rho must be a clock field".into()));
    }
    let (lhs, valid) = match form {
        ResidualForm::Compact => {
            let valid = compact_valid(f, h.fd_order().half_width());
            let mut hp = h_phi(f, h)?;
            for c in 0..nc {
                let x = f.marginal[c];
                for z in &mut hp[c * ns..(c + 1) * ns] {
                    *z = if valid[c] { *z / x } else { C0 };
                }
            }
            (hp, valid)
        }
        ResidualForm::Expanded => {
            let e = expanded_terms(f, h)?;
            (e.lhs_psi, e.interior)
        }
    };
    let mut r = vec![C0; ns * nc];
    for c in (0..nc).filter(|&c| valid[c]) {
        let l = lambda_over_rho[c].ok_or_else(|| ScfError::Mask(format!("lambda/rho missing at clock point {c}")))?;
        let psi = f.conditional_slice(c);
        for s in 0..ns {
            r[c * ns + s] = lhs[c * ns + s] - psi[s] * l;
        }
    }
    if !valid.iter().any(|&v| v) {
        return Err(ScfError::Mask("no clock point has an unmasked stencil".into()));
    }
    Ok((r, valid))
}

/// `epsilon` by projection on `X`, `lambda/rho` by projection on `Psi(R)`.
pub fn extract_multipliers(f: &FactorizedState, h: &CompositeHamiltonian) -> Result<Multipliers, ScfError> {
    check_grid(f, h)?;
    let g = &f.grid;
    let (ns, nc) = (g.system_len(), g.clock_len());
    let (wx, wr) = (g.system_weight(), g.clock_weight());
    let phi = f.reconstruct();
    let hp = h.apply(&phi)?;
    let energy = cdot(&phi, &hp).re / norm_sqr(&phi);

    let valid = compact_valid(f, h.fd_order().half_width());
    let mut lor = vec![None; nc];
    let (mut eps, mut xx, mut integral, mut lambda_imag) = (C0, 0.0, 0.0, 0.0f64);
    for c in 0..nc {
        if f.node_mask[c] {
            continue;
        }
        let gc = cdot(f.conditional_slice(c), &hp[c * ns..(c + 1) * ns]) * wx;
        let x = f.marginal[c];
        eps += x.conj() * gc * wr;
        xx += x.norm_sqr() * wr;
        if valid[c] {
            let l = gc / x;
            lambda_imag = lambda_imag.max(l.im.abs());
            integral += x.norm_sqr() * l.re * wr;
            lor[c] = Some(l.re);
        }
    }
    let epsilon = eps.re / xx;
    let epsilon_imag = eps.im / xx;

    let e = expanded_terms(f, h)?;
    let (mut ee, mut exx, mut eint) = (C0, 0.0, 0.0);
    let mut elor = vec![None; nc];
    for c in (0..nc).filter(|&c| e.interior[c]) {
        let x = f.marginal[c];
        let mut lhs = e.tcx[c] + e.u[c] * x;
        for n in 0..g.clock.len() {
            lhs += e.px[n][c] * e.mean_field[n][c];
        }
        ee += x.conj() * lhs * wr;
        exx += x.norm_sqr() * wr;
        let l = cdot(f.conditional_slice(c), &e.lhs_psi[c * ns..(c + 1) * ns]) * wx;
        eint += x.norm_sqr() * l.re * wr;
        elor[c] = Some(l.re);
    }
    Ok(Multipliers {
        epsilon,
        epsilon_imag,
        lambda_over_rho: lor,
        lambda_imag,
        integral_lambda: integral,
        energy,
        epsilon_defect: (epsilon - energy).abs(),
        lambda_defect: (integral - energy).abs(),
        expanded_epsilon: ee.re / exx,
        expanded_integral_lambda: eint,
        expanded_lambda_over_rho: elor,
        warning: epsilon_imag.abs() > IMAG_WARNING || lambda_imag > IMAG_WARNING,
    })
}

/// Both residual fields and norms, with multipliers taken from the same
/// discretization.
pub fn residuals(f: &FactorizedState, h: &CompositeHamiltonian, form: ResidualForm) -> Result<CoupledResiduals, ScfError> {
    let m = extract_multipliers(f, h)?;
    let (epsilon, lor) = match form {
        ResidualForm::Compact => (m.epsilon, m.lambda_over_rho),
        ResidualForm::Expanded => (m.expanded_epsilon, m.expanded_lambda_over_rho),
    };
    let (rx, vx) = marginal_residual(f, h, epsilon, form)?;
    let (rp, vp) = conditional_residual(f, h, &lor, form)?;
    let valid: Vec<bool> = vx.iter().zip(&vp).map(|(a, b)| *a && *b).collect();
    let (mn, cn) = residual_norms(f, &rx, &rp, &valid);
    Ok(CoupledResiduals {
        form,
        marginal_residual: rx,
        conditional_residual: rp,
        epsilon,
        local_energy: lor,
        valid,
        marginal_norm: mn,
        conditional_norm: cn,
    })
}

/// `(sqrt(int |r_X|^2), sqrt(int rho_mar <r_Psi|r_Psi>))` over valid points.
pub fn residual_norms(f: &FactorizedState, rx: &[Complex64], rp: &[Complex64], valid: &[bool]) -> (f64, f64) {
    let g = &f.grid;
    let ns = g.system_len();
    let (wx, wr) = (g.system_weight(), g.clock_weight());
    let (mut a, mut b) = (0.0, 0.0);
    for c in (0..g.clock_len()).filter(|&c| valid[c]) {
        a += rx[c].norm_sqr() * wr;
        b += f.marginal[c].norm_sqr() * norm_sqr(&rp[c * ns..(c + 1) * ns]) * wx * wr;
    }
    (a.sqrt(), b.sqrt())
}

/// Starting conditional amplitude for [`scf_solve`].
#[derive(Clone, Debug, PartialEq)]
pub enum InitialGuess {
    /// Ground state of `H_S` at every `R`.
    SeparableProduct,
    /// Ground state of `H_S + H_I(R)` at each `R`.
    AdiabaticBo,
    /// Conditional amplitude of a given state (masked columns fall back to
    /// the adiabatic guess).
    Provided(FactorizedState),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScfConfig {
    pub max_iterations: usize,
    /// Linear mixing of the new conditional amplitude, in `(0, 1]`.
    pub mixing: f64,
    pub tolerance: f64,
    pub initial_guess: InitialGuess,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig { max_iterations: 200, mixing: 0.3, tolerance: 1e-8, initial_guess: InitialGuess::AdiabaticBo }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<(), ScfError> {
        if self.max_iterations == 0 {
            return Err(ScfError::Invalid("max_iterations must be at least 1".into()));
        }
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return Err(ScfError::Invalid(format!("mixing {} outside (0, 1]", self.mixing)));
        }
        if !(self.tolerance > 0.0) {
            return Err(ScfError::Invalid("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the iteration trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScfIteration {
    pub sweep: usize,
    pub marginal_norm: f64,
    pub conditional_norm: f64,
    pub epsilon: f64,
    pub mixing: f64,
    /// `|Phi_new - Phi_old|` in L2.
    pub change: f64,
}

#[derive(Clone, Debug)]
pub struct ScfOutcome {
    pub state: FactorizedState,
    /// Compact-form residuals of `state`.
    pub residuals: CoupledResiduals,
    pub trace: Vec<ScfIteration>,
    pub converged: bool,
    /// Mixing actually used after the stability cap.
    pub effective_mixing: f64,
    /// Residual norms never increased after the third sweep.
    pub monotone: bool,
}

/// Dense Hermitian eigen-decomposition, eigenvalues ascending.
fn hermitian_eigen(n: usize, m: Vec<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &m));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

fn system_matrix(h: &CompositeHamiltonian, extra: &[f64]) -> Vec<Complex64> {
    let ns = h.grid().system_len();
    let mut m = vec![C0; ns * ns];
    h.for_each_system_entry(Some(extra), |r, c, v| m[r * ns + c] += v);
    m
}

/// Lowest eigenvector of `H_S + extra`, normalized with system weights and
/// with a positive sum.
fn local_ground(h: &CompositeHamiltonian, extra: &[f64]) -> Vec<Complex64> {
    let ns = h.grid().system_len();
    let (_, v) = hermitian_eigen(ns, system_matrix(h, extra));
    let mut col: Vec<Complex64> = v.column(0).iter().copied().collect();
    let total: Complex64 = col.iter().sum();
    let ph = if total.norm() > 1e-12 { total.conj() / total.norm() } else { Complex64::new(1.0, 0.0) };
    let scale = ph / (norm_sqr(&col) * h.grid().system_weight()).sqrt();
    col.iter_mut().for_each(|z| *z *= scale);
    col
}

/// Conditional amplitude of the adiabatic (Born-Oppenheimer-like) guess.
pub fn adiabatic_conditional(h: &CompositeHamiltonian) -> Vec<Complex64> {
    let g = h.grid();
    let (ns, nc) = (g.system_len(), g.clock_len());
    let cols: Vec<Vec<Complex64>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let vi: Vec<f64> = match h.v_interaction() {
                Some(v) => v[c * ns..(c + 1) * ns].to_vec(),
                None => vec![0.0; ns],
            };
            local_ground(h, &vi)
        })
        .collect();
    cols.concat()
}

fn initial_conditional(h: &CompositeHamiltonian, guess: &InitialGuess) -> Result<Vec<Complex64>, ScfError> {
    let g = h.grid();
    let (ns, nc) = (g.system_len(), g.clock_len());
    Ok(match guess {
        InitialGuess::SeparableProduct => {
            let col = local_ground(h, &vec![0.0; ns]);
            (0..nc).flat_map(|_| col.iter().copied()).collect()
        }
        InitialGuess::AdiabaticBo => adiabatic_conditional(h),
        InitialGuess::Provided(f) => {
            check_grid(f, h)?;
            let mut psi = f.conditional.clone();
            if f.masked_count() > 0 {
                let fallback = adiabatic_conditional(h);
                for c in (0..nc).filter(|&c| f.node_mask[c]) {
                    psi[c * ns..(c + 1) * ns].copy_from_slice(&fallback[c * ns..(c + 1) * ns]);
                }
            }
            psi
        }
    })
}

/// Clock kinetic matrix as neighbour lists `(col, t)` per row.
fn clock_couplings(h: &CompositeHamiltonian) -> Vec<Vec<(usize, f64)>> {
    let mut rows = vec![Vec::new(); h.grid().clock_len()];
    h.for_each_clock_kinetic_entry(|r, c, v| rows[r].push((c, v)));
    rows
}

/// Step (a): lowest eigenvector of `H_X(R, R') = <Psi_R|H_{RR'}|Psi_R'>`.
fn solve_marginal(h: &CompositeHamiltonian, psi: &[Complex64], t: &[Vec<(usize, f64)>]) -> Vec<Complex64> {
    let g = h.grid();
    let (ns, nc) = (g.system_len(), g.clock_len());
    let wx = g.system_weight();
    let mut m = vec![C0; nc * nc];
    let mut hs = vec![C0; ns];
    for c in 0..nc {
        let p = &psi[c * ns..(c + 1) * ns];
        let vloc = h.local_potential(c);
        h.apply_system_kinetic(p, &mut hs);
        let mut d = C0;
        for s in 0..ns {
            d += p[s].conj() * (hs[s] + p[s] * vloc[s]);
        }
        m[c * nc + c] += d * wx;
        for &(c2, tv) in &t[c] {
            m[c * nc + c2] += cdot(p, &psi[c2 * ns..(c2 + 1) * ns]) * (wx * tv);
        }
    }
    // Symmetrize away roundoff.
    for r in 0..nc {
        for c in 0..r {
            let a = 0.5 * (m[r * nc + c] + m[c * nc + r].conj());
            m[r * nc + c] = a;
            m[c * nc + r] = a.conj();
        }
        m[r * nc + r] = Complex64::new(m[r * nc + r].re, 0.0);
    }
    let (_, v) = hermitian_eigen(nc, m);
    let mut x: Vec<Complex64> = v.column(0).iter().copied().collect();
    let total: Complex64 = x.iter().sum();
    let ph = if total.norm() > 1e-12 { total.conj() / total.norm() } else { Complex64::new(1.0, 0.0) };
    let scale = ph / (norm_sqr(&x) * g.clock_weight()).sqrt();
    x.iter_mut().for_each(|z| *z *= scale);
    x
}

/// Result of step (b) at one clock point.
struct LocalUpdate {
    psi: Vec<Complex64>,
    gap: f64,
    coupling: f64,
}

/// Step (b) at clock point `c`; see the module docs for the splitting.
fn update_conditional(
    h: &CompositeHamiltonian,
    x: &[Complex64],
    psi: &[Complex64],
    t: &[Vec<(usize, f64)>],
    c: usize,
) -> LocalUpdate {
    let g = h.grid();
    let ns = g.system_len();
    let wx = g.system_weight();
    let sw = wx.sqrt();
    let old = &psi[c * ns..(c + 1) * ns];
    let mut beta = C0;
    let mut coupling = 0.0;
    let mut s = vec![C0; ns];
    for &(c2, tv) in &t[c] {
        let ratio = x[c2] / x[c];
        let ratio = if ratio.is_finite() { ratio } else { C0 };
        beta += ratio * tv;
        if c2 != c {
            coupling += (ratio * tv).norm();
            let other = &psi[c2 * ns..(c2 + 1) * ns];
            for k in 0..ns {
                s[k] += (other[k] - old[k]) * ratio * tv;
            }
        }
    }
    for k in 0..ns {
        s[k] += old[k] * Complex64::new(0.0, beta.im);
    }
    let mut extra = h.local_potential(c);
    for (e, v) in extra.iter_mut().zip(h.v_system()) {
        *e += beta.re - v;
    }
    let mut m = system_matrix(h, &extra);
    // Orthonormal coordinates: u = sqrt(w) Psi.
    let u: Vec<Complex64> = old.iter().map(|z| z * sw).collect();
    let su: Vec<Complex64> = s.iter().map(|z| z * sw).collect();
    let cc = cdot(&u, &su).re;
    for r in 0..ns {
        for k in 0..ns {
            m[r * ns + k] += su[r] * u[k].conj() + u[r] * su[k].conj() - u[r] * u[k].conj() * cc;
        }
    }
    let (vals, vecs) = hermitian_eigen(ns, m);
    let mut best = 0;
    let mut best_ov = -1.0;
    let mut ovs = Vec::with_capacity(ns);
    for j in 0..ns {
        let ov: Complex64 = (0..ns).map(|k| u[k].conj() * vecs[(k, j)]).sum();
        ovs.push(ov);
        if ov.norm() > best_ov {
            best_ov = ov.norm();
            best = j;
        }
    }
    let ph = if best_ov > 0.0 { ovs[best].conj() / best_ov } else { Complex64::new(1.0, 0.0) };
    let new: Vec<Complex64> = (0..ns).map(|k| vecs[(k, best)] * ph / sw).collect();
    let gap = (0..ns)
        .filter(|&j| j != best)
        .map(|j| (vals[j] - vals[best]).abs())
        .fold(f64::INFINITY, f64::min);
    LocalUpdate { psi: new, gap, coupling }
}

/// One full sweep: steps (a) and (b) with mixing `alpha`.
///
/// Returns the new state and the stability estimate `a` such that mixing
/// above `2/(1+a)` amplifies grid-scale errors.
pub fn scf_sweep(
    h: &CompositeHamiltonian,
    f: &FactorizedState,
    alpha: f64,
) -> Result<(FactorizedState, f64), ScfError> {
    check_grid(f, h)?;
    let t = clock_couplings(h);
    sweep(h, &f.conditional, alpha, &t, None)
}

fn sweep(
    h: &CompositeHamiltonian,
    psi: &[Complex64],
    alpha: f64,
    t: &[Vec<(usize, f64)>],
    cap: Option<&mut f64>,
) -> Result<(FactorizedState, f64), ScfError> {
    let g = h.grid();
    let (ns, nc) = (g.system_len(), g.clock_len());
    let x = solve_marginal(h, psi, t);
    let updates: Vec<LocalUpdate> = (0..nc).into_par_iter().map(|c| update_conditional(h, &x, psi, t, c)).collect();
    let gap = updates.iter().map(|u| u.gap).fold(f64::INFINITY, f64::min);
    let coupling = updates.iter().map(|u| u.coupling).fold(0.0, f64::max);
    let a = 2.0 * coupling / gap.max(f64::MIN_POSITIVE);
    let alpha = match cap {
        Some(cap) => {
            *cap = cap.min(1.5 / (1.0 + a));
            alpha.min(*cap)
        }
        None => alpha,
    };
    let wx = g.system_weight();
    let mut new = vec![C0; ns * nc];
    for (c, u) in updates.iter().enumerate() {
        let old = &psi[c * ns..(c + 1) * ns];
        let col = &mut new[c * ns..(c + 1) * ns];
        for k in 0..ns {
            col[k] = old[k] * (1.0 - alpha) + u.psi[k] * alpha;
        }
        let n = (norm_sqr(col) * wx).sqrt();
        col.iter_mut().for_each(|z| *z /= n);
    }
    if new.iter().chain(&x).any(|z| !z.is_finite()) {
        return Err(ScfError::Divergence { sweep: 0, residual: f64::NAN });
    }
    let state = FactorizedState::from_parts(g, x, new)?;
    Ok((state, a))
}

/// Fixed-point solution of the coupled equations.
///
/// Sweeps until both compact residual norms fall below `cfg.tolerance`.
/// The mixing is capped at `1.5/(1+a)` from the stability estimate of the
/// first sweep. A non-converged run returns the best iterate with
/// `converged = false`.
pub fn scf_solve(h: &CompositeHamiltonian, cfg: &ScfConfig) -> Result<ScfOutcome, ScfError> {
    cfg.validate()?;
    let t = clock_couplings(h);
    let mut psi = initial_conditional(h, &cfg.initial_guess)?;
    let mut cap = f64::INFINITY;
    let mut trace = Vec::new();
    let mut best: Option<(f64, FactorizedState, CoupledResiduals)> = None;
    let mut prev_phi: Option<Vec<Complex64>> = None;
    let mut converged = false;
    for sweep_no in 1..=cfg.max_iterations {
        let (state, _) = sweep(h, &psi, cfg.mixing, &t, Some(&mut cap)).map_err(|e| match e {
            ScfError::Divergence { residual, .. } => ScfError::Divergence { sweep: sweep_no, residual },
            other => other,
        })?;
        let res = residuals(&state, h, ResidualForm::Compact)?;
        let phi = state.reconstruct();
        let change = prev_phi
            .as_ref()
            .map(|p| {
                let d: f64 = p.iter().zip(&phi).map(|(a, b)| (a - b).norm_sqr()).sum();
                (d * h.grid().weight()).sqrt()
            })
            .unwrap_or(f64::NAN);
        let score = res.marginal_norm.max(res.conditional_norm);
        if !score.is_finite() {
            return Err(ScfError::Divergence { sweep: sweep_no, residual: score });
        }
        trace.push(ScfIteration {
            sweep: sweep_no,
            marginal_norm: res.marginal_norm,
            conditional_norm: res.conditional_norm,
            epsilon: res.epsilon,
            mixing: cfg.mixing.min(cap),
            change,
        });
        psi = state.conditional.clone();
        prev_phi = Some(phi);
        let done = res.marginal_norm < cfg.tolerance && res.conditional_norm < cfg.tolerance;
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) || done {
            best = Some((score, state, res));
        }
        if done {
            converged = true;
            break;
        }
    }
    let monotone = trace.windows(2).skip(2).all(|w| {
        w[1].marginal_norm <= w[0].marginal_norm * (1.0 + 1e-9) + 1e-15
            && w[1].conditional_norm <= w[0].conditional_norm * (1.0 + 1e-9) + 1e-15
    });
    let (_, state, residuals) = best.expect("at least one sweep");
    Ok(ScfOutcome { state, residuals, trace, converged, effective_mixing: cfg.mixing.min(cap), monotone })
}
