//! Time-dependent quantum mechanics read off a stationary state.
//!
//! The conditional amplitude is sliced along a classical clock trajectory,
//! moved to the frame where it should obey a first-order Schrodinger
//! equation, and compared with a direct Crank-Nicolson propagation of that
//! equation.
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clockwork::{marginal_ansatz, ClassicalTrajectory, ClockKind, ClockModel, Envelope, TickSchedule};
use crate::coupled_scf::{adiabatic_conditional, extract_multipliers};
use crate::error::EmergenceError;
use crate::factorization::{check_grid, FactorizedState};
use crate::lattice::{Boundary, CompositeHamiltonian, ProductGrid};
use crate::linalg::{cdot, norm_sqr, BandedLu};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `Psi(x | R(t))` at one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTimeSlice {
    pub time: f64,
    pub state: Vec<Complex64>,
    pub source: Vec<f64>,
    /// `|Psi_h - Psi_2h| / 3` from re-interpolating on every second clock node.
    pub interpolation_error: f64,
}

/// Corner indices and weights of the multilinear interpolant at `r`.
fn corners(grid: &ProductGrid, r: &[f64], coarse: bool) -> Option<Vec<(usize, f64)>> {
    let mut out = vec![(Vec::new(), 1.0)];
    for (a, axis) in grid.clock.iter().enumerate() {
        let (lo, _, frac) = axis.locate(r[a])?;
        let n = axis.count;
        let pts: [(usize, f64); 2] = if coarse {
            let s = lo as f64 + frac;
            let mut l = 2 * (lo / 2);
            if axis.boundary == Boundary::Dirichlet {
                l = l.min(n - 3);
            }
            let f = (s - l as f64) / 2.0;
            [(l, 1.0 - f), ((l + 2) % n, f)]
        } else {
            [(lo, 1.0 - frac), ((lo + 1) % n, frac)]
        };
        out = out
            .into_iter()
            .flat_map(|(idx, w)| pts.iter().map(move |&(i, wi)| ([idx.clone(), vec![i]].concat(), w * wi)))
            .collect();
    }
    Some(out.into_iter().map(|(m, w)| (grid.clock_index(&m), w)).filter(|&(_, w)| w != 0.0).collect())
}

fn interpolate(field: &[Complex64], ns: usize, pts: &[(usize, f64)]) -> Vec<Complex64> {
    let mut out = vec![C0; ns];
    for &(c, w) in pts {
        for (o, z) in out.iter_mut().zip(&field[c * ns..(c + 1) * ns]) {
            *o += z * w;
        }
    }
    out
}

fn unit(grid: &ProductGrid, mut v: Vec<Complex64>) -> Vec<Complex64> {
    let n = (norm_sqr(&v) * grid.system_weight()).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
    v
}

/// Interpolated conditional slices at every kept tick.
pub fn slice_conditional(
    f: &FactorizedState,
    ticks: &TickSchedule,
) -> Result<Vec<ConditionalTimeSlice>, EmergenceError> {
    let g = &f.grid;
    let ns = g.system_len();
    let wx = g.system_weight();
    let mut out = Vec::with_capacity(ticks.len());
    for (&t, r) in ticks.times.iter().zip(&ticks.positions) {
        if r.len() != g.clock.len() {
            return Err(EmergenceError::Invalid("tick position does not match the clock grid".into()));
        }
        let fine = corners(g, r, false).ok_or_else(|| EmergenceError::Range(r.clone()))?;
        if fine.iter().any(|&(c, _)| f.node_mask[c]) {
            return Err(EmergenceError::Mask(t));
        }
        let state = unit(g, interpolate(&f.conditional, ns, &fine));
        let interpolation_error = match corners(g, r, true) {
            Some(coarse) if coarse.iter().all(|&(c, _)| !f.node_mask[c]) => {
                let c = unit(g, interpolate(&f.conditional, ns, &coarse));
                let d: f64 = state.iter().zip(&c).map(|(a, b)| (a - b).norm_sqr()).sum();
                (d * wx).sqrt() / 3.0
            }
            _ => f64::NAN,
        };
        out.push(ConditionalTimeSlice { time: t, state, source: r.clone(), interpolation_error });
    }
    Ok(out)
}

/// Ticks at `-t_i` on the same trajectory, for time-reversal comparisons.
pub fn reflect_ticks(traj: &ClassicalTrajectory, ticks: &TickSchedule) -> TickSchedule {
    TickSchedule {
        times: ticks.times.iter().map(|t| -t).collect(),
        positions: ticks.times.iter().map(|t| traj.position(-t)).collect(),
        dropped: ticks.dropped.iter().map(|t| -t).collect(),
        min_speed: ticks.min_speed,
    }
}

/// Phase `theta(t)` with `Psi~ = exp(i theta) Psi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeFactor {
    pub times: Vec<f64>,
    pub phases: Vec<f64>,
    /// Clock kinetic energy used in the linear part.
    pub kinetic: f64,
    /// Ticks outside the envelope interior, where the phase is extrapolated.
    pub outside_envelope: Vec<f64>,
}

/// Clock kinetic energy of the model's plane wave on this grid (the exact
/// eigenvalue of the discrete clock kinetic operator).
pub fn discrete_clock_kinetic(h: &CompositeHamiltonian, model: &ClockModel) -> Result<f64, EmergenceError> {
    if model.kind == ClockKind::Harmonic {
        return Ok(model.kinetic_energy());
    }
    let x = marginal_ansatz(&model.clone().with_envelope(Envelope::Uniform), h.grid())?;
    let mut t = vec![C0; x.len()];
    h.apply_clock_kinetic_only(&x, &mut t);
    Ok(cdot(&x, &t).re / norm_sqr(&x))
}

/// Phase `KE t - int_0^t lambda/rho dt'` with the integral by trapezoid on
/// the tick times. `local_energy` is `lambda/rho` on the clock grid.
pub fn gauge_factor(
    h: &CompositeHamiltonian,
    model: &ClockModel,
    ticks: &TickSchedule,
    local_energy: &[Option<f64>],
) -> Result<GaugeFactor, EmergenceError> {
    let g = h.grid();
    if local_energy.len() != g.clock_len() {
        return Err(EmergenceError::Invalid("local energy must be a clock field".into()));
    }
    let kinetic = discrete_clock_kinetic(h, model)?;
    let mut lam = Vec::with_capacity(ticks.len());
    let mut outside = Vec::new();
    for (&t, r) in ticks.times.iter().zip(&ticks.positions) {
        let pts = corners(g, r, false).ok_or_else(|| EmergenceError::Range(r.clone()))?;
        let mut v = 0.0;
        for (c, w) in pts {
            v += w * local_energy[c].ok_or(EmergenceError::Mask(t))?;
        }
        lam.push(v);
        if !model.in_envelope(g, r) {
            outside.push(t);
        }
    }
    let mut phases = Vec::with_capacity(lam.len());
    let mut integral = 0.0;
    let t0 = ticks.times.first().copied().unwrap_or(0.0);
    for i in 0..lam.len() {
        if i > 0 {
            integral += 0.5 * (lam[i] + lam[i - 1]) * (ticks.times[i] - ticks.times[i - 1]);
        }
        phases.push(kinetic * (ticks.times[i] - t0) - integral);
    }
    Ok(GaugeFactor { times: ticks.times.clone(), phases, kinetic, outside_envelope: outside })
}

/// Multiply each slice by `exp(i theta(t))`.
pub fn gauge_to_tdse_frame(slices: &[ConditionalTimeSlice], gauge: &GaugeFactor) -> Vec<ConditionalTimeSlice> {
    slices
        .iter()
        .zip(&gauge.phases)
        .map(|(s, &p)| {
            let e = Complex64::from_polar(1.0, p);
            ConditionalTimeSlice { state: s.state.iter().map(|z| z * e).collect(), ..s.clone() }
        })
        .collect()
}

/// Crank-Nicolson propagation of `i dPsi/dt = (H_S + V_I(x, R(t))) Psi`
/// through the tick times (which may decrease), with at most `max_step`
/// per substep and the Hamiltonian taken at each substep midpoint.
pub fn tdse_propagate(
    h: &CompositeHamiltonian,
    traj: &ClassicalTrajectory,
    initial: &[Complex64],
    times: &[f64],
    max_step: f64,
) -> Result<Vec<Vec<Complex64>>, EmergenceError> {
    let g = h.grid();
    let ns = g.system_len();
    let wx = g.system_weight();
    if initial.len() != ns {
        return Err(EmergenceError::Invalid("initial state must live on the system grid".into()));
    }
    if !(max_step > 0.0) {
        return Err(EmergenceError::Invalid("substep must be positive".into()));
    }
    if ((norm_sqr(initial) * wx) - 1.0).abs() > 1e-8 {
        return Err(EmergenceError::Invalid("initial state is not normalized".into()));
    }
    let mut psi = initial.to_vec();
    let mut out = vec![psi.clone()];
    let mut hp = vec![C0; ns];
    let mut entries = Vec::new();
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let n = (span.abs() / max_step).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        for k in 0..n {
            let tm = w[0] + (k as f64 + 0.5) * dt;
            let vi = h.interaction_at(&traj.position(tm));
            let half = Complex64::new(0.0, 0.5 * dt);
            entries.clear();
            h.for_each_system_entry(Some(&vi), |r, c, v| {
                let d = if r == c { Complex64::new(1.0, 0.0) } else { C0 };
                entries.push((r, c, d + half * v));
            });
            h.apply_system(&psi, Some(&vi), &mut hp);
            for (p, q) in psi.iter_mut().zip(&hp) {
                *p -= half * q;
            }
            let lu = BandedLu::factor(ns, &entries, None)
                .map_err(|i| EmergenceError::Invalid(format!("Crank-Nicolson matrix singular at row {i}")))?;
            lu.solve(&mut psi);
        }
        out.push(psi.clone());
    }
    Ok(out)
}

/// Phase-optimized overlap `|<a|b>|` with system weights.
pub fn fidelity(grid: &ProductGrid, a: &[Complex64], b: &[Complex64]) -> f64 {
    cdot(a, b).norm() * grid.system_weight()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmergenceReport {
    pub clock_mass: f64,
    pub fidelity_curve: Vec<(f64, f64)>,
    pub min_fidelity: f64,
    /// `|Psi''| / (2 m |R'|^2)` along the trajectory.
    pub second_order_magnitude: Vec<(f64, f64)>,
    /// `|R''| |Psi'| / (2 m |R'|^3)` for harmonic clocks.
    pub harmonic_correction_magnitude: Option<Vec<(f64, f64)>>,
    /// `(clock mass, 1 - min fidelity)`; filled by [`mass_scaling`].
    pub mass_scaling: Vec<(f64, f64)>,
    pub mass_slope: Option<f64>,
    pub max_interpolation_error: f64,
    pub outside_envelope: Vec<f64>,
}

/// First and second time derivatives on a nonuniform grid; three-point
/// centered in the interior, the nearest three-point stencil at the ends.
fn time_derivatives(times: &[f64], fields: &[Vec<Complex64>]) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
    let n = times.len();
    (0..n)
        .map(|i| {
            let j = i.clamp(1, n - 2);
            let (t0, t1, t2) = (times[j - 1], times[j], times[j + 1]);
            let (a, b) = (t1 - t0, t2 - t1);
            let te = times[i];
            // Lagrange basis derivatives at te.
            let l0 = ((te - t1) + (te - t2)) / ((t0 - t1) * (t0 - t2));
            let l1 = ((te - t0) + (te - t2)) / ((t1 - t0) * (t1 - t2));
            let l2 = ((te - t0) + (te - t1)) / ((t2 - t0) * (t2 - t1));
            let s0 = 2.0 / (a * (a + b));
            let s1 = -2.0 / (a * b);
            let s2 = 2.0 / (b * (a + b));
            let (f0, f1, f2) = (&fields[j - 1], &fields[j], &fields[j + 1]);
            let d1 = (0..f0.len()).map(|k| f0[k] * l0 + f1[k] * l1 + f2[k] * l2).collect();
            let d2 = (0..f0.len()).map(|k| f0[k] * s0 + f1[k] * s1 + f2[k] * s2).collect();
            (d1, d2)
        })
        .collect()
}

/// Fidelity curve and neglected-term magnitudes for one clock.
///
/// `raw` are the ungauged slices (used for the derivative terms), `gauged`
/// and `tdse` share the tick schedule of `raw`.
pub fn emergence_compare(
    grid: &ProductGrid,
    traj: &ClassicalTrajectory,
    clock_mass: f64,
    raw: &[ConditionalTimeSlice],
    gauged: &[ConditionalTimeSlice],
    tdse: &[Vec<Complex64>],
    outside_envelope: Vec<f64>,
) -> Result<EmergenceReport, EmergenceError> {
    if raw.len() < 3 {
        return Err(EmergenceError::Invalid(format!("need at least 3 ticks, got {}", raw.len())));
    }
    if gauged.len() != raw.len() || tdse.len() != raw.len() {
        return Err(EmergenceError::Invalid("slices and propagation use different tick schedules".into()));
    }
    let wx = grid.system_weight();
    let fidelity_curve: Vec<(f64, f64)> =
        gauged.iter().zip(tdse).map(|(s, p)| (s.time, fidelity(grid, &s.state, p).min(1.0))).collect();
    let min_fidelity = fidelity_curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let times: Vec<f64> = raw.iter().map(|s| s.time).collect();
    let fields: Vec<Vec<Complex64>> = raw.iter().map(|s| s.state.clone()).collect();
    let ders = time_derivatives(&times, &fields);
    let mut second = Vec::with_capacity(raw.len());
    let mut harmonic = Vec::with_capacity(raw.len());
    for (i, (d1, d2)) in ders.iter().enumerate() {
        let t = times[i];
        let v2: f64 = traj.velocity(t).iter().map(|v| v * v).sum();
        let a = traj.acceleration(t)[0].abs();
        let n1 = (norm_sqr(d1) * wx).sqrt();
        let n2 = (norm_sqr(d2) * wx).sqrt();
        second.push((t, n2 / (2.0 * clock_mass * v2)));
        harmonic.push((t, a * n1 / (2.0 * clock_mass * v2 * v2.sqrt())));
    }
    Ok(EmergenceReport {
        clock_mass,
        min_fidelity,
        mass_scaling: vec![(clock_mass, 1.0 - min_fidelity)],
        mass_slope: None,
        fidelity_curve,
        second_order_magnitude: second,
        harmonic_correction_magnitude: (traj.kind == ClockKind::Harmonic).then_some(harmonic),
        max_interpolation_error: raw.iter().map(|s| s.interpolation_error).fold(0.0, f64::max),
        outside_envelope,
    })
}

/// Least-squares slope of `log(1 - min F)` against `log(mass)`, written
/// into every report.
pub fn mass_scaling(reports: &mut [EmergenceReport]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = reports.iter().map(|r| (r.clock_mass, 1.0 - r.min_fidelity)).collect();
    let logs: Vec<(f64, f64)> =
        pts.iter().filter(|(m, d)| *m > 0.0 && *d > 0.0).map(|(m, d)| (m.ln(), d.ln())).collect();
    let slope = if logs.len() >= 2 {
        let n = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    for r in reports.iter_mut() {
        r.mass_scaling = pts.clone();
        r.mass_slope = slope;
    }
    slope
}

/// `(v . grad) Psi` on the product grid, the chain-rule time derivative
/// along a straight configuration-space trajectory.
pub fn directional_field(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
    velocity: &[f64],
) -> Result<Vec<Complex64>, EmergenceError> {
    check_grid(f, h)?;
    if velocity.len() != f.grid.clock.len() {
        return Err(EmergenceError::Invalid("velocity must have one component per clock axis".into()));
    }
    let mut out = vec![C0; f.conditional.len()];
    for (n, &v) in velocity.iter().enumerate() {
        // P = -i d, so d = i P.
        let p = h.partial_apply_clock_momentum(n, &f.conditional)?;
        for (o, z) in out.iter_mut().zip(&p) {
            *o += Complex64::new(-z.im, z.re) * v;
        }
    }
    Ok(out)
}

/// Slices of `(v . grad) Psi` along a two-handle trajectory.
pub fn directional_derivative_2d(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
    traj: &ClassicalTrajectory,
    ticks: &TickSchedule,
) -> Result<Vec<ConditionalTimeSlice>, EmergenceError> {
    if f.grid.clock.len() != 2 || traj.kind != ClockKind::TwoHandle {
        return Err(EmergenceError::Invalid("directional slicing needs a two-handle clock".into()));
    }
    let field = directional_field(f, h, &traj.velocity(0.0))?;
    let ns = f.system_len();
    let interior = f.stencil_interior(h.fd_order().half_width());
    let mut out = Vec::with_capacity(ticks.len());
    for (&t, r) in ticks.times.iter().zip(&ticks.positions) {
        let pts = corners(&f.grid, r, false).ok_or_else(|| EmergenceError::Range(r.clone()))?;
        if pts.iter().any(|&(c, _)| !interior[c]) {
            return Err(EmergenceError::Mask(t));
        }
        out.push(ConditionalTimeSlice {
            time: t,
            state: interpolate(&field, ns, &pts),
            source: r.clone(),
            interpolation_error: f64::NAN,
        });
    }
    Ok(out)
}

/// The double-counted variant: every axis contributes a full along-path
/// time derivative, giving `dim * dPsi/dt`.
pub fn per_axis_sum(
    f: &FactorizedState,
    h: &CompositeHamiltonian,
    traj: &ClassicalTrajectory,
    ticks: &TickSchedule,
) -> Result<Vec<ConditionalTimeSlice>, EmergenceError> {
    let mut d = directional_derivative_2d(f, h, traj, ticks)?;
    let dim = f.grid.clock.len() as f64;
    for s in &mut d {
        s.state.iter_mut().for_each(|z| *z *= dim);
    }
    Ok(d)
}

/// Phase rate `Im <Psi|dPsi/dt> / <Psi|Psi>` of a slice and its derivative.
pub fn phase_rate(psi: &[Complex64], dpsi: &[Complex64]) -> f64 {
    (cdot(psi, dpsi) / norm_sqr(psi)).im
}

/// Clock ansatz times the adiabatic system ground state at each `R`,
/// normalized on the product grid. Used to pick moving-clock eigenstates.
pub fn adiabatic_reference(h: &CompositeHamiltonian, model: &ClockModel) -> Result<Vec<Complex64>, EmergenceError> {
    let g = h.grid();
    let ns = g.system_len();
    let x = marginal_ansatz(model, g)?;
    let mut r = adiabatic_conditional(h);
    for (c, xc) in x.iter().enumerate() {
        r[c * ns..(c + 1) * ns].iter_mut().for_each(|z| *z *= xc);
    }
    let n = (norm_sqr(&r) * g.weight()).sqrt();
    r.iter_mut().for_each(|z| *z /= n);
    Ok(r)
}

/// Gauge phase `alpha(R)` of the model's plane wave, for factorizing a
/// moving-clock state so that `Psi` varies slowly with `R`.
pub fn ansatz_phase(h: &CompositeHamiltonian, model: &ClockModel) -> Result<Vec<f64>, EmergenceError> {
    Ok(marginal_ansatz(model, h.grid())?.iter().map(|z| z.arg()).collect())
}

/// Slice, gauge, propagate and compare in one call.
pub fn emergence_pipeline(
    h: &CompositeHamiltonian,
    f: &FactorizedState,
    model: &ClockModel,
    traj: &ClassicalTrajectory,
    ticks: &TickSchedule,
    max_substep: f64,
) -> Result<EmergenceReport, EmergenceError> {
    check_grid(f, h)?;
    let raw = slice_conditional(f, ticks)?;
    let m = extract_multipliers(f, h)?;
    let gauge = gauge_factor(h, model, ticks, &m.lambda_over_rho)?;
    let gauged = gauge_to_tdse_frame(&raw, &gauge);
    let first = gauged.first().ok_or_else(|| EmergenceError::Invalid("no ticks".into()))?;
    let tdse = tdse_propagate(h, traj, &first.state, &ticks.times, max_substep)?;
    emergence_compare(h.grid(), traj, model.inertia, &raw, &gauged, &tdse, gauge.outside_envelope)
}
