//! Eigenpairs of the joint Hamiltonian and selection of the working state.
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SpectralError;
use crate::lattice::{AxisId, CompositeHamiltonian, ProductGrid};
use crate::linalg::{block_krylov, dot, ring_order, BandedLu, KrylovOptions};

/// Energies closer than this count as one degenerate level.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;

/// Default grid size below which the dense solver is used.
pub const DENSE_LIMIT: usize = 1024;

/// A stationary state of the whole system plus clock.
#[derive(Clone, Debug, PartialEq)]
pub struct JointEigenstate {
    /// `Phi(x, R)` on the flat grid, normalized with quadrature weights.
    pub amplitudes: Vec<Complex64>,
    pub energy: f64,
    /// `|H Phi - E Phi| / |Phi|`.
    pub residual: f64,
}

impl JointEigenstate {
    /// `integral |Phi|^2` on `grid`.
    pub fn norm_sqr(&self, grid: &ProductGrid) -> f64 {
        crate::linalg::norm_sqr(&self.amplitudes) * grid.weight()
    }
}

/// Which part of the spectrum to compute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Lowest,
    Nearest(f64),
}

/// Solver settings beyond the residual tolerance.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    /// Grids with fewer points are diagonalized densely.
    pub dense_limit: usize,
    pub krylov: KrylovOptions,
    /// Extra start vectors for the iterative path (e.g. a reference state).
    pub hints: Vec<Vec<Complex64>>,
}

impl SolverOptions {
    pub fn new(tol: f64) -> Self {
        SolverOptions { tol, dense_limit: DENSE_LIMIT, krylov: KrylovOptions::default(), hints: Vec::new() }
    }
}

/// How a solve was carried out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub method: String,
    pub sigma: Option<f64>,
    pub bandwidth: Option<usize>,
    pub expansions: usize,
}

/// `how_many` eigenpairs of `h`, sorted by energy.
pub fn solve_eigenpairs(
    h: &CompositeHamiltonian,
    how_many: usize,
    which: Which,
    tol: f64,
) -> Result<Vec<JointEigenstate>, SpectralError> {
    solve_eigenpairs_with(h, how_many, which, &SolverOptions::new(tol)).map(|(s, _)| s)
}

pub fn solve_eigenpairs_with(
    h: &CompositeHamiltonian,
    how_many: usize,
    which: Which,
    opts: &SolverOptions,
) -> Result<(Vec<JointEigenstate>, SolveStats), SpectralError> {
    let n = h.len();
    if how_many == 0 || how_many > n {
        return Err(SpectralError::InvalidRequest(format!("how_many = {how_many} for {n} points")));
    }
    if !(opts.tol > 0.0) {
        return Err(SpectralError::InvalidRequest(format!("tol = {} must be positive", opts.tol)));
    }
    if let Which::Nearest(t) = which {
        if !t.is_finite() {
            return Err(SpectralError::InvalidRequest("target energy is not finite".into()));
        }
    }
    let block = opts.krylov.block.max(2);
    let (vectors, stats) = if n < opts.dense_limit || how_many + block > n / 2 {
        (dense(h, how_many, which), SolveStats { method: "dense".into(), sigma: None, bandwidth: None, expansions: 0 })
    } else {
        shift_invert(h, how_many, which, opts)?
    };
    let mut states: Vec<JointEigenstate> =
        vectors.into_iter().map(|v| finish(h, v)).collect();
    states.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    if let Some(bad) = states.iter().find(|s| !(s.residual <= opts.tol)) {
        return Err(SpectralError::NoConvergence { best_residual: bad.residual, iterations: stats.expansions });
    }
    Ok((states, stats))
}

fn dense(h: &CompositeHamiltonian, how_many: usize, which: Which) -> Vec<Vec<f64>> {
    let n = h.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    h.for_each_entry(|r, c, v| m[(r, c)] += v);
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..n).collect();
    match which {
        Which::Lowest => idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])),
        Which::Nearest(t) => idx.sort_by(|&a, &b| {
            (eig.eigenvalues[a] - t).abs().total_cmp(&(eig.eigenvalues[b] - t).abs())
        }),
    }
    idx.iter().take(how_many).map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect()
}

/// Banded ordering: the periodic slowest axis is folded into a ring order.
fn band_permutation(grid: &ProductGrid) -> Option<Vec<usize>> {
    let last = grid.clock.len() - 1;
    let axis = &grid.clock[last];
    if !axis.is_periodic() {
        return None;
    }
    let stride = grid.stride(AxisId::Clock(last));
    let ring = ring_order(axis.count);
    Some((0..grid.len()).map(|i| i % stride + stride * ring[i / stride]).collect())
}

fn shift_invert(
    h: &CompositeHamiltonian,
    how_many: usize,
    which: Which,
    opts: &SolverOptions,
) -> Result<(Vec<Vec<f64>>, SolveStats), SpectralError> {
    let n = h.len();
    let mut sigma = match which {
        Which::Lowest => {
            let vmin = h.potential_min();
            vmin - 1e-3f64.max(1e-6 * vmin.abs())
        }
        Which::Nearest(t) => t,
    };
    let mut entries = Vec::with_capacity(n * 9);
    h.for_each_entry(|r, c, v| entries.push((r, c, v)));
    let diag: Vec<usize> = (0..entries.len()).filter(|&k| entries[k].0 == entries[k].1).collect();
    let perm = band_permutation(h.grid());
    let mut lu = None;
    for attempt in 0..4 {
        let mut shifted = entries.clone();
        for &k in &diag {
            shifted[k].2 -= sigma;
        }
        match BandedLu::factor(n, &shifted, perm.clone()) {
            Ok(f) => {
                lu = Some(f);
                break;
            }
            Err(_) => sigma += 1e-8 * (1.0 + sigma.abs()) * (attempt + 1) as f64,
        }
    }
    let lu = lu.ok_or(SpectralError::Singular(sigma))?;
    let bandwidth = lu.bandwidths().0.max(lu.bandwidths().1);

    let mut starts = Vec::new();
    for hint in &opts.hints {
        if hint.len() != n {
            return Err(SpectralError::InvalidRequest("hint length differs from grid".into()));
        }
        for part in [hint.iter().map(|z| z.re).collect::<Vec<f64>>(), hint.iter().map(|z| z.im).collect()] {
            if dot(&part, &part) > 0.0 {
                starts.push(part);
            }
        }
    }
    let tol = opts.tol;
    let mut work = vec![0.0; n];
    let outcome = block_krylov(
        n,
        |x, y| {
            y.copy_from_slice(x);
            lu.solve(y);
        },
        how_many,
        &starts,
        &opts.krylov,
        |v| {
            let r = residual_real(h, v, &mut work);
            (r <= tol, r)
        },
    )
    .map_err(|(best, it)| SpectralError::NoConvergence { best_residual: best, iterations: it })?;
    let stats = SolveStats {
        method: "shift_invert_krylov".into(),
        sigma: Some(sigma),
        bandwidth: Some(bandwidth),
        expansions: outcome.expansions,
    };
    Ok((outcome.pairs.into_iter().map(|p| p.vector).collect(), stats))
}

fn residual_real(h: &CompositeHamiltonian, v: &[f64], work: &mut [f64]) -> f64 {
    h.apply_into(v, work);
    let vv = dot(v, v);
    let e = dot(v, work) / vv;
    let r: f64 = work.iter().zip(v).map(|(a, b)| (a - e * b).powi(2)).sum();
    (r / vv).sqrt()
}

/// Normalize, fix the sign and promote a real eigenvector.
fn finish(h: &CompositeHamiltonian, mut v: Vec<f64>) -> JointEigenstate {
    let mut work = vec![0.0; v.len()];
    let residual = residual_real(h, &v, &mut work);
    let energy = dot(&v, &work) / dot(&v, &v);
    let mut big = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[big].abs() * (1.0 + 1e-12) {
            big = i;
        }
    }
    let scale = v[big].signum() / (dot(&v, &v) * h.grid().weight()).sqrt();
    v.iter_mut().for_each(|x| *x *= scale);
    JointEigenstate {
        amplitudes: v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
        energy,
        residual,
    }
}

/// `|H Phi - E Phi| / |Phi|` with `E` the Rayleigh quotient.
pub fn residual_of(h: &CompositeHamiltonian, field: &[Complex64]) -> Result<(f64, f64), SpectralError> {
    let hf = h.apply(field)?;
    let nn = crate::linalg::norm_sqr(field);
    let e = crate::linalg::cdot(field, &hf).re / nn;
    let r: f64 = hf.iter().zip(field).map(|(a, b)| (a - b * e).norm_sqr()).sum();
    Ok((e, (r / nn).sqrt()))
}

/// How to pick the working state from candidates.
#[derive(Clone, Copy, Debug)]
pub enum Selection<'a> {
    Ground,
    MaxOverlap(&'a [Complex64]),
    /// As `MaxOverlap`, projecting onto all candidates within the given
    /// energy window of the best one. The result is only stationary up to
    /// the window; its `residual` includes the energy spread.
    MaxOverlapWithin(&'a [Complex64], f64),
}

/// Groups of consecutive (energy-sorted) states closer than `threshold`.
pub fn degenerate_clusters(states: &[JointEigenstate], threshold: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.sort_by(|&a, &b| states[a].energy.total_cmp(&states[b].energy));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match out.last_mut() {
            Some(c) if (states[i].energy - states[*c.last().unwrap()].energy).abs() < threshold => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Pick the working eigenstate.
///
/// `Ground` refuses a degenerate lowest level. `MaxOverlap` takes the
/// candidate with the largest `|<c|ref>|` (ties go to lower energy); if that
/// candidate is degenerate with others the reference is projected onto the
/// whole degenerate subspace, which is again an eigenstate.
pub fn select_state(
    candidates: &[JointEigenstate],
    criterion: Selection<'_>,
) -> Result<JointEigenstate, SpectralError> {
    if candidates.is_empty() {
        return Err(SpectralError::InvalidRequest("no candidate states".into()));
    }
    let (criterion, window) = match criterion {
        Selection::MaxOverlapWithin(r, w) if w > 0.0 => (Selection::MaxOverlap(r), w),
        Selection::MaxOverlapWithin(..) => {
            return Err(SpectralError::InvalidRequest("degeneracy window must be positive".into()))
        }
        other => (other, DEGENERACY_THRESHOLD),
    };
    let clusters = degenerate_clusters(candidates, window);
    match criterion {
        Selection::Ground => {
            let lowest = &clusters[0];
            if lowest.len() > 1 {
                return Err(SpectralError::Degenerate { multiplicity: lowest.len() });
            }
            Ok(candidates[lowest[0]].clone())
        }
        Selection::MaxOverlap(reference) => {
            let n = candidates[0].amplitudes.len();
            if reference.len() != n {
                return Err(SpectralError::InvalidRequest("reference length differs from states".into()));
            }
            if reference.iter().all(|z| z.norm_sqr() == 0.0) {
                return Err(SpectralError::InvalidRequest("reference field is zero".into()));
            }
            let overlaps: Vec<Complex64> =
                candidates.iter().map(|c| crate::linalg::cdot(&c.amplitudes, reference)).collect();
            let mut best = None::<usize>;
            for i in 0..candidates.len() {
                best = Some(match best {
                    None => i,
                    Some(b) => {
                        let (ob, oi) = (overlaps[b].norm(), overlaps[i].norm());
                        let tie = (oi - ob).abs() <= 1e-12 * ob.max(oi);
                        if (!tie && oi > ob) || (tie && candidates[i].energy < candidates[b].energy) {
                            i
                        } else {
                            b
                        }
                    }
                });
            }
            let best = best.unwrap();
            let cluster = clusters.iter().find(|c| c.contains(&best)).unwrap();
            if cluster.len() == 1 {
                return Ok(candidates[best].clone());
            }
            // member norms are 1/weight in the plain sum
            let inv_w = crate::linalg::norm_sqr(&candidates[best].amplitudes);
            let mut phi = vec![Complex64::new(0.0, 0.0); n];
            let (mut total, mut e_acc, mut res) = (0.0, 0.0, 0.0f64);
            for &c in cluster {
                let a = overlaps[c] / inv_w;
                phi.iter_mut().zip(&candidates[c].amplitudes).for_each(|(p, x)| *p += a * x);
                total += a.norm_sqr();
                e_acc += a.norm_sqr() * candidates[c].energy;
                res = res.max(candidates[c].residual);
            }
            let energy = e_acc / total;
            let spread = cluster.iter().map(|&c| (candidates[c].energy - energy).abs()).fold(0.0, f64::max);
            let scale = 1.0 / (crate::linalg::norm_sqr(&phi) / inv_w).sqrt();
            phi.iter_mut().for_each(|p| *p *= scale);
            Ok(JointEigenstate { amplitudes: phi, energy, residual: res + spread })
        }
        Selection::MaxOverlapWithin(..) => unreachable!("normalized above"),
    }
}
