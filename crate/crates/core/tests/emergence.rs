use std::f64::consts::PI;

use timeless_core::clockwork::{classical_trajectory, tick_schedule, ClassicalTrajectory, TickSchedule};
use timeless_core::coupled_scf::extract_multipliers;
use timeless_core::emergence::{
    adiabatic_reference, ansatz_phase, directional_derivative_2d, emergence_pipeline, fidelity, per_axis_sum,
    phase_rate, reflect_ticks,
};
use timeless_core::*;

/// Soft oscillator coupled by `k x cos(phi)` to a rotor turning at `speed`.
fn rotor(inertia: f64, n_phi: usize, k: f64, speed: f64) -> (CompositeHamiltonian, ClockModel) {
    let grid = ProductGrid::new(
        vec![Axis::new("x", 32, -45.0, 45.0, Boundary::Dirichlet, 1.0).unwrap()],
        vec![Axis::angular("phi", n_phi, inertia).unwrap()],
    )
    .unwrap();
    let terms = HamiltonianTerms {
        system: vec![PotentialSpec::new(PotentialKind::Harmonic, &["x"], &[("omega", 0.03)])],
        interaction: if k != 0.0 { vec![PotentialSpec::cosine("x", "phi", k)] } else { vec![] },
        ..Default::default()
    };
    let h = build_hamiltonian(&grid, &terms, FdOrder::Second).unwrap();
    (h, ClockModel::cyclic(inertia, (inertia * speed).round()))
}

fn rayleigh(h: &CompositeHamiltonian, v: &[Complex64]) -> f64 {
    let hv = h.apply(v).unwrap();
    v.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * h.grid().weight()
}

fn candidates(h: &CompositeHamiltonian, reference: &[Complex64]) -> Vec<JointEigenstate> {
    let mut opts = SolverOptions::new(1e-10);
    opts.hints = vec![reference.to_vec()];
    solve_eigenpairs_with(h, 6, Which::Nearest(rayleigh(h, reference)), &opts).unwrap().0
}

fn moving(
    h: &CompositeHamiltonian,
    model: &ClockModel,
    states: &[JointEigenstate],
) -> (FactorizedState, ClassicalTrajectory, TickSchedule) {
    let reference = adiabatic_reference(h, model).unwrap();
    let state = select_state(states, Selection::MaxOverlapWithin(&reference, 1e-3)).unwrap();
    let f = factorize(h.grid(), &state, &Gauge::Prescribed(ansatz_phase(h, model).unwrap()), 1e-14).unwrap();
    let omega = model.velocities()[0].abs();
    let traj = classical_trajectory(model, &[0.0], (0.0, 2.0 * PI / omega)).unwrap();
    let ticks = tick_schedule(&traj, h.grid().clock[0].spacing() / omega, 0.0).unwrap();
    (f, traj, ticks)
}

#[test]
fn light_rotor_loses_fidelity() {
    let (h, model) = rotor(100.0, 256, 1e-3, 0.01);
    let states = candidates(&h, &adiabatic_reference(&h, &model).unwrap());
    let (f, traj, ticks) = moving(&h, &model, &states);
    let r = emergence_pipeline(&h, &f, &model, &traj, &ticks, 0.5).unwrap();
    assert!(1.0 - r.min_fidelity > 1e-3 && 1.0 - r.min_fidelity < 1e-2, "{}", r.min_fidelity);
    assert!(r.fidelity_curve.iter().all(|p| p.1 >= 0.0 && p.1 <= 1.0));
}

#[test]
fn uncoupled_clock_gives_stationary_slices() {
    let (h, model) = rotor(1000.0, 128, 0.0, 0.01);
    let states = candidates(&h, &adiabatic_reference(&h, &model).unwrap());
    let (f, traj, ticks) = moving(&h, &model, &states);
    let r = emergence_pipeline(&h, &f, &model, &traj, &ticks, 0.5).unwrap();
    assert!(1.0 - r.min_fidelity < 1e-8, "{}", r.min_fidelity);

    // Undo the system phase: the gauged slices are then the same vector.
    let slices = slice_conditional(&f, &ticks).unwrap();
    let m = extract_multipliers(&f, &h).unwrap();
    let gauge = gauge_factor(&h, &model, &ticks, &m.lambda_over_rho).unwrap();
    let gauged = gauge_to_tdse_frame(&slices, &gauge);
    let es = m.integral_lambda - gauge.kinetic;
    let first = &gauged[0].state;
    let mut worst = 0.0f64;
    for s in &gauged {
        let e = Complex64::from_polar(1.0, es * s.time);
        for (a, b) in s.state.iter().zip(first) {
            worst = worst.max((a * e - b).norm());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn reversed_sense_mirrors_the_fidelity_curve() {
    let (h, plus) = rotor(1000.0, 512, 1e-3, 0.01);
    let minus = plus.clone().with_sense(Sense::Backward);
    let states = candidates(&h, &adiabatic_reference(&h, &plus).unwrap());
    let (fp, tp, kp) = moving(&h, &plus, &states);
    let (fm, tm, km) = moving(&h, &minus, &states);
    let back = reflect_ticks(&tp, &kp);
    let rp = emergence_pipeline(&h, &fp, &plus, &tp, &back, 0.5).unwrap();
    let rm = emergence_pipeline(&h, &fm, &minus, &tm, &km, 0.5).unwrap();
    for (a, b) in rp.fidelity_curve.iter().zip(&rm.fidelity_curve) {
        assert!((a.0 + b.0).abs() < 1e-9);
        assert!((a.1 - b.1).abs() < 1e-8, "t = {}: {} vs {}", b.0, a.1, b.1);
    }
}

#[test]
fn interpolation_error_falls_with_refinement() {
    let mut errs = Vec::new();
    for n in [128, 256] {
        let (h, model) = rotor(1000.0, n, 1e-3, 0.01);
        let states = candidates(&h, &adiabatic_reference(&h, &model).unwrap());
        let (f, traj, _) = moving(&h, &model, &states);
        let ticks = tick_schedule(&traj, 7.3, 0.0).unwrap();
        let s = slice_conditional(&f, &ticks).unwrap();
        errs.push(s.iter().map(|s| s.interpolation_error).fold(0.0, f64::max));
    }
    assert!(errs[0] / errs[1] >= 3.0, "{errs:?}");
}

fn two_handle(n: usize) -> (CompositeHamiltonian, ClockModel) {
    let inertia = 50.0;
    let grid = ProductGrid::new(
        vec![Axis::new("x", 12, -5.0, 5.0, Boundary::Dirichlet, 1.0).unwrap()],
        vec![Axis::angular("phi1", n, inertia).unwrap(), Axis::angular("phi2", n, inertia).unwrap()],
    )
    .unwrap();
    let terms = HamiltonianTerms {
        system: vec![PotentialSpec::harmonic("x", 1.0)],
        interaction: vec![PotentialSpec::cosine("x", "phi1", 0.05), PotentialSpec::cosine("x", "phi2", 0.05)],
        ..Default::default()
    };
    (build_hamiltonian(&grid, &terms, FdOrder::Second).unwrap(), ClockModel::two_handle(inertia, 3, 1.0))
}

/// Worst relative gap between the directional and the per-axis-sum
/// derivatives and centered differences along the path.
fn chain_rule_errors(n: usize) -> (f64, f64) {
    let (h, model) = two_handle(n);
    let g = h.grid();
    let (ns, nc) = (g.system_len(), g.clock_len());
    // Smooth test field: a packet displaced and dephased by both handles.
    let cond: Vec<Complex64> = (0..nc)
        .flat_map(|c| {
            let r = g.clock_coords(c);
            let shift = 0.8 * r[0].cos() + 0.5 * r[1].sin();
            let phase = r[0].cos() + (2.0 * r[1]).sin();
            (0..ns).map(move |s| {
                let x = g.system_coords(s)[0] - shift;
                Complex64::from_polar((-x * x / 2.0).exp(), phase + 0.3 * x)
            })
        })
        .collect();
    let f = FactorizedState::from_parts(g, vec![Complex64::new(1.0, 0.0); nc], cond).unwrap();
    let v = model.velocities();
    let hstep = h.grid().clock[0].spacing();
    let tau = hstep / v[1];
    let traj = classical_trajectory(&model, &[0.0, 0.0], (0.0, 2.0 * PI / v[1])).unwrap();
    let ticks = tick_schedule(&traj, tau, 0.0).unwrap();
    let slices = slice_conditional(&f, &ticks).unwrap();
    let dir = directional_derivative_2d(&f, &h, &traj, &ticks).unwrap();
    let sum = per_axis_sum(&f, &h, &traj, &ticks).unwrap();
    let w = h.grid().system_weight();
    let norm = |v: &[Complex64]| (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * w).sqrt();
    let (mut worst_dir, mut worst_sum) = (0.0f64, f64::INFINITY);
    for i in 1..slices.len() - 1 {
        let fd: Vec<Complex64> = slices[i + 1]
            .state
            .iter()
            .zip(&slices[i - 1].state)
            .map(|(a, b)| (a - b) / (2.0 * tau))
            .collect();
        let scale = norm(&fd);
        let e_dir: Vec<Complex64> = dir[i].state.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let e_sum: Vec<Complex64> = sum[i].state.iter().zip(&fd).map(|(a, b)| a - b).collect();
        worst_dir = worst_dir.max(norm(&e_dir) / scale);
        worst_sum = worst_sum.min(norm(&e_sum) / scale);
    }
    // The path closes after one slow cycle.
    let last = slices.last().unwrap();
    assert!((last.time - 2.0 * PI / v[1]).abs() < 1e-9);
    assert!(1.0 - fidelity(h.grid(), &slices[0].state, &last.state) < 1e-10);
    (worst_dir, worst_sum)
}

#[test]
fn two_handle_chain_rule_uses_one_directional_derivative() {
    let (coarse, sum) = chain_rule_errors(24);
    let (fine, _) = chain_rule_errors(48);
    assert!(coarse / fine > 3.0, "{coarse} {fine}");
    assert!(sum > 0.8 && fine < sum / 5.0, "{fine} {sum}");
}

#[test]
fn per_axis_sum_doubles_the_plane_wave_phase_rate() {
    let (h, model) = two_handle(24);
    let g = h.grid();
    let (ns, nc) = (g.system_len(), g.clock_len());
    let (q1, q2) = (1.0, 2.0);
    let cond: Vec<Complex64> = (0..nc)
        .flat_map(|c| {
            let r = g.clock_coords(c);
            (0..ns).map(move |s| {
                let x = g.system_coords(s)[0];
                Complex64::from_polar((-x * x / 2.0).exp(), q1 * r[0] + q2 * r[1])
            })
        })
        .collect();
    let f = FactorizedState::from_parts(g, vec![Complex64::new(1.0, 0.0); nc], cond).unwrap();
    let traj = classical_trajectory(&model, &[0.0, 0.0], (0.0, 10.0)).unwrap();
    let ticks = tick_schedule(&traj, 1.0, 0.0).unwrap();
    let slices = slice_conditional(&f, &ticks).unwrap();
    let dir = directional_derivative_2d(&f, &h, &traj, &ticks).unwrap();
    let sum = per_axis_sum(&f, &h, &traj, &ticks).unwrap();
    let v = model.velocities();
    let hs = g.clock[0].spacing();
    // Central differences see sin(q h)/h instead of q.
    let exact = v[0] * (q1 * hs).sin() / hs + v[1] * (q2 * hs).sin() / hs;
    let node = 0;
    let rd = phase_rate(&slices[node].state, &dir[node].state);
    let rs = phase_rate(&slices[node].state, &sum[node].state);
    assert!((rd - exact).abs() < 1e-10 * exact.abs(), "{rd} {exact}");
    assert!((rs / rd - 2.0).abs() < 1e-12);
}

#[test]
fn second_order_term_shrinks_with_clock_momentum() {
    let mut peaks = Vec::new();
    for inertia in [1000.0, 2000.0] {
        let (h, model) = rotor(inertia, 512, 1e-3, 0.01);
        let states = candidates(&h, &adiabatic_reference(&h, &model).unwrap());
        let (f, traj, ticks) = moving(&h, &model, &states);
        let r = emergence_pipeline(&h, &f, &model, &traj, &ticks, 0.5).unwrap();
        peaks.push(r.second_order_magnitude.iter().map(|p| p.1).fold(0.0, f64::max));
    }
    assert!(peaks[1] < peaks[0], "{peaks:?}");
}

/// Ground state of two coupled oscillators, the heavier one read as a
/// harmonic clock swinging out to 1.5 marginal widths.
#[test]
fn harmonic_correction_peaks_at_the_turning_points() {
    let (mass, spring) = (100.0, 1.0);
    let grid = ProductGrid::new(
        vec![Axis::new("x", 48, -6.0, 6.0, Boundary::Dirichlet, 1.0).unwrap()],
        vec![Axis::new("z", 64, -1.75, 1.75, Boundary::Dirichlet, mass).unwrap()],
    )
    .unwrap();
    let terms = HamiltonianTerms {
        system: vec![PotentialSpec::harmonic("x", 1.0)],
        clock: vec![PotentialSpec::harmonic("z", spring)],
        interaction: vec![PotentialSpec::bilinear("x", "z", 0.3)],
    };
    let h = build_hamiltonian(&grid, &terms, FdOrder::Second).unwrap();
    let s = solve_eigenpairs(&h, 1, Which::Lowest, 1e-11).unwrap().remove(0);
    let f = factorize(&grid, &s, &Gauge::ZeroPhase, 1e-14).unwrap();
    let sigma = (1.0 / (2.0 * (mass * spring).sqrt())).sqrt();
    let omega = (spring / mass).sqrt();
    let model = ClockModel::harmonic(mass, spring, mass * omega * 1.5 * sigma);
    let traj = classical_trajectory(&model, &[0.0], (0.0, 2.0 * PI / omega)).unwrap();
    let vmax = traj.speed(0.0);
    let ticks = tick_schedule(&traj, 0.25, 0.1 * vmax).unwrap();
    let r = emergence_pipeline(&h, &f, &model, &traj, &ticks, 0.5).unwrap();
    let corr = r.harmonic_correction_magnitude.unwrap();
    let (tmax, cmax) = corr.iter().cloned().fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let near = ticks.dropped.iter().map(|d| (d - tmax).abs()).fold(f64::INFINITY, f64::min);
    assert!(near <= 0.25 * 1.01, "largest at t = {tmax}, {near} from a dropped tick");
    for (t, c) in &corr {
        assert!(c.is_finite());
        if traj.speed(*t) >= 0.5 * vmax {
            assert!(*c < cmax / 10.0, "t = {t}: {c} vs {cmax}");
        }
    }
}
