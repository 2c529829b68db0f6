use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timeless_core::coupled_scf::residuals;
use timeless_core::factorization::DEFAULT_NODE_THRESHOLD;
use timeless_core::lattice::MIN_POINTS;
use timeless_core::*;

fn small(nx: usize, nr: usize, periodic: bool, order: FdOrder, k: f64) -> CompositeHamiltonian {
    let clock = if periodic {
        Axis::angular("phi", nr, 7.0).unwrap()
    } else {
        Axis::new("r", nr, -3.0, 3.0, Boundary::Dirichlet, 7.0).unwrap()
    };
    let cl = clock.label.clone();
    let grid =
        ProductGrid::new(vec![Axis::new("x", nx, -4.0, 4.0, Boundary::Dirichlet, 1.0).unwrap()], vec![clock]).unwrap();
    let terms = HamiltonianTerms {
        system: vec![PotentialSpec::harmonic("x", 1.0)],
        clock: if periodic { vec![] } else { vec![PotentialSpec::harmonic(&cl, 0.5)] },
        interaction: vec![if periodic { PotentialSpec::cosine("x", &cl, k) } else { PotentialSpec::bilinear("x", &cl, k) }],
    };
    build_hamiltonian(&grid, &terms, order).unwrap()
}

fn field(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    dot(a, a).re.sqrt()
}

/// A nodeless normalized joint field with an arbitrary phase.
fn joint_field(rng: &mut ChaCha8Rng, g: &ProductGrid) -> JointEigenstate {
    let mut amplitudes: Vec<Complex64> = (0..g.len())
        .map(|_| Complex64::from_polar(rng.random_range(0.2..1.0), rng.random_range(-3.2..3.2)))
        .collect();
    let n = (amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.weight()).sqrt();
    amplitudes.iter_mut().for_each(|z| *z /= n);
    JointEigenstate { amplitudes, energy: 0.0, residual: 0.0 }
}

fn order() -> impl Strategy<Value = FdOrder> {
    prop_oneof![Just(FdOrder::Second), Just(FdOrder::Fourth)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn axis_spacing_is_positive(count in MIN_POINTS..200, min in -50.0f64..50.0, len in 1e-3f64..100.0, periodic: bool) {
        let b = if periodic { Boundary::Periodic } else { Boundary::Dirichlet };
        let a = Axis::new("q", count, min, min + len, b, 1.0).unwrap();
        let expect = if periodic { len / count as f64 } else { len / (count + 1) as f64 };
        prop_assert!(a.spacing() > 0.0);
        prop_assert!((a.spacing() - expect).abs() <= 1e-12 * expect);
        prop_assert!(Axis::new("q", MIN_POINTS - 1, min, min + len, b, 1.0).is_err());
        prop_assert!(Axis::new("q", count, min, min - len, b, 1.0).is_err());
    }

    #[test]
    fn grid_size_is_the_product_of_counts(a in MIN_POINTS..20, b in MIN_POINTS..20, c in MIN_POINTS..20) {
        let ax = |l: &str, n| Axis::new(l, n, 0.0, 1.0, Boundary::Dirichlet, 1.0).unwrap();
        let g = ProductGrid::new(vec![ax("x", a), ax("y", b)], vec![ax("r", c)]).unwrap();
        prop_assert_eq!(g.len(), a * b * c);
        prop_assert_eq!(g.system_len() * g.clock_len(), g.len());
        prop_assert!(ProductGrid::new(vec![ax("x", a)], vec![ax("x", c)]).is_err());
    }

    #[test]
    fn hamiltonian_is_symmetric(seed: u64, periodic: bool, order in order(), k in -0.5f64..0.5) {
        let h = small(10, 12, periodic, order, k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (field(&mut rng, h.len()), field(&mut rng, h.len()));
        let (hu, hv) = (h.apply(&u).unwrap(), h.apply(&v).unwrap());
        let gap = (dot(&u, &hv) - dot(&hu, &v)).norm();
        prop_assert!(gap <= 1e-12 * norm(&u) * norm(&v), "{gap}");
        // Real in, real out.
        let re: Vec<Complex64> = u.iter().map(|z| Complex64::new(z.re, 0.0)).collect();
        prop_assert!(h.apply(&re).unwrap().iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn angular_apply_commutes_with_rotation(seed: u64, shift in 1usize..16, order in order()) {
        let h = small(8, 16, true, order, 0.0);
        let ns = h.grid().system_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = field(&mut rng, h.len());
        let rotate = |f: &[Complex64]| {
            let mut out = f.to_vec();
            out.rotate_right(shift * ns);
            out
        };
        prop_assert_eq!(h.apply(&rotate(&u)).unwrap(), rotate(&h.apply(&u).unwrap()));
    }

    #[test]
    fn factorization_round_trips(seed: u64, gauge: bool) {
        let h = small(9, 11, false, FdOrder::Second, 0.2);
        let g = h.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = joint_field(&mut rng, g);
        let gauge = if gauge {
            Gauge::Prescribed((0..g.clock_len()).map(|_| rng.random_range(-3.0..3.0)).collect())
        } else {
            Gauge::ZeroPhase
        };
        let f = factorize(g, &s, &gauge, DEFAULT_NODE_THRESHOLD).unwrap();
        for (a, b) in f.reconstruct().iter().zip(&s.amplitudes) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
        let xn: f64 = f.marginal_density().iter().sum::<f64>() * g.clock_weight();
        prop_assert!((xn - 1.0).abs() <= 1e-10);
        let d = f.densities();
        for c in 0..g.clock_len() {
            let local: f64 = d.conditional[c * g.system_len()..(c + 1) * g.system_len()].iter().sum();
            prop_assert!((local * g.system_weight() - 1.0).abs() <= 1e-10);
        }
        for (i, p) in d.joint.iter().enumerate() {
            prop_assert!(*p >= 0.0);
            prop_assert!((p - s.amplitudes[i].norm_sqr()).abs() <= 1e-12);
        }
    }

    #[test]
    fn gauge_shift_commutes_with_factorize(seed: u64) {
        let h = small(9, 11, false, FdOrder::Second, 0.2);
        let g = h.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = joint_field(&mut rng, g);
        let gamma: Vec<f64> = (0..g.clock_len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let plain = factorize(g, &s, &Gauge::ZeroPhase, DEFAULT_NODE_THRESHOLD).unwrap();
        let shifted = plain.gauge_shift(&gamma).unwrap();
        let direct = factorize(g, &s, &Gauge::Prescribed(gamma), DEFAULT_NODE_THRESHOLD).unwrap();
        for (a, b) in shifted.reconstruct().iter().zip(&direct.reconstruct()) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
        for a in shifted.conditional.iter().zip(&direct.conditional).map(|(a, b)| (a - b).norm()) {
            prop_assert!(a <= 1e-12);
        }
        let obs = Observable::Momentum("x".into());
        let (p, q) = (
            conditional_expectation(&shifted, &h, &obs).unwrap(),
            conditional_expectation(&plain, &h, &obs).unwrap(),
        );
        prop_assert!((p.global - q.global).abs() <= 1e-12);
    }

    #[test]
    fn residual_norms_are_gauge_invariant(seed: u64, theta in -3.2f64..3.2) {
        let h = small(9, 12, false, FdOrder::Second, 0.2);
        let g = h.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = factorize(g, &joint_field(&mut rng, g), &Gauge::ZeroPhase, DEFAULT_NODE_THRESHOLD).unwrap();
        let base = residuals(&f, &h, ResidualForm::Compact).unwrap();
        let gamma: Vec<f64> = (0..g.clock_len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        // Local gauge shift, then a global phase on the whole conditional.
        let mut moved = f.gauge_shift(&gamma).unwrap();
        let e = Complex64::from_polar(1.0, theta);
        moved.conditional.iter_mut().for_each(|z| *z *= e);
        moved.marginal.iter_mut().for_each(|z| *z *= e.conj());
        let r = residuals(&moved, &h, ResidualForm::Compact).unwrap();
        let tol = 1e-10 * (1.0 + base.marginal_norm + base.conditional_norm);
        prop_assert!((r.marginal_norm - base.marginal_norm).abs() <= tol);
        prop_assert!((r.conditional_norm - base.conditional_norm).abs() <= tol);
        // The marginal residual picks up the local phase exp(i gamma - i theta).
        for (c, (a, b)) in r.marginal_residual.iter().zip(&base.marginal_residual).enumerate() {
            let ph = Complex64::from_polar(1.0, gamma[c] - theta);
            prop_assert!((a - b * ph).norm() <= tol);
        }
    }

    #[test]
    fn real_conditional_has_no_mean_field(seed: u64) {
        let h = small(9, 14, false, FdOrder::Second, 0.2);
        let g = h.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = joint_field(&mut rng, g);
        let real = JointEigenstate {
            amplitudes: s.amplitudes.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect(),
            ..s
        };
        let f = factorize(g, &real, &Gauge::ZeroPhase, DEFAULT_NODE_THRESHOLD).unwrap();
        let m = mean_field_momentum(&f, &h, 0).unwrap();
        prop_assert!(m.values.iter().flatten().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn cyclic_ansatz_is_single_valued(n in 16usize..64, l in -40i32..40, backward: bool) {
        let g = ProductGrid::new(
            vec![Axis::new("x", 8, -1.0, 1.0, Boundary::Dirichlet, 1.0).unwrap()],
            vec![Axis::angular("phi", n, 30.0).unwrap()],
        )
        .unwrap();
        let sense = if backward { Sense::Backward } else { Sense::Forward };
        let model = ClockModel::cyclic(30.0, l as f64).with_sense(sense);
        let x = marginal_ansatz(&model, &g).unwrap();
        // Continuing the plane wave one step past the last node lands on node 0.
        let h = g.clock[0].spacing();
        let step = Complex64::from_polar(1.0, sense.sign() * l as f64 * h);
        prop_assert!((x[n - 1] * step - x[0]).norm() <= 1e-12 * x[0].norm());
    }

    #[test]
    fn dump_round_trips(values in prop::collection::vec((any::<f64>(), any::<f64>()), 0..40), energy: Option<f64>) {
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        let d = StateDump {
            kind: "marginal".into(),
            grid: "0123".into(),
            energy: energy.map(finite),
            residual: None,
            values: values.into_iter().map(|(a, b)| Complex64::new(finite(a), finite(b))).collect(),
        };
        prop_assert_eq!(StateDump::parse(&d.to_text()).unwrap(), d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn eigenstates_are_orthonormal_and_phase_free(k in -0.4f64..0.4, order in order()) {
        let h = small(12, 14, false, order, k);
        let g = h.grid();
        let states = solve_eigenpairs(&h, 4, Which::Lowest, 1e-10).unwrap();
        for (i, a) in states.iter().enumerate() {
            for (j, b) in states.iter().enumerate() {
                let gram = dot(&a.amplitudes, &b.amplitudes) * g.weight();
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram - id).norm() <= 1e-8);
            }
        }
        // The Krylov path agrees with the dense one on |Phi|^2.
        let mut opts = SolverOptions::new(1e-11);
        opts.dense_limit = 0;
        let (iter, _) = solve_eigenpairs_with(&h, 1, Which::Lowest, &opts).unwrap();
        prop_assert!(states[0].energy <= iter[0].energy + 1e-10);
        for (a, b) in states[0].amplitudes.iter().zip(&iter[0].amplitudes) {
            prop_assert!((a.norm_sqr() - b.norm_sqr()).abs() <= 1e-8);
        }
    }
}
