use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use timeless_core::linalg::BandedLu;
use timeless_core::*;

/// Coupled oscillator pair on an `n x n` grid.
fn oscillator(n: usize) -> CompositeHamiltonian {
    let grid = ProductGrid::new(
        vec![Axis::new("x", n, -6.0, 6.0, Boundary::Dirichlet, 1.0).unwrap()],
        vec![Axis::new("r", n, -1.75, 1.75, Boundary::Dirichlet, 100.0).unwrap()],
    )
    .unwrap();
    let terms = HamiltonianTerms {
        system: vec![PotentialSpec::harmonic("x", 1.0)],
        clock: vec![PotentialSpec::harmonic("r", 1.0)],
        interaction: vec![PotentialSpec::bilinear("x", "r", 0.3)],
    };
    build_hamiltonian(&grid, &terms, FdOrder::Second).unwrap()
}

fn field(n: usize) -> Vec<Complex64> {
    (0..n).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect()
}

fn apply(c: &mut Criterion) {
    for n in [64, 128] {
        let h = oscillator(n);
        let v = field(h.len());
        let mut out = vec![Complex64::new(0.0, 0.0); h.len()];
        c.bench_function(&format!("apply {n}x{n}"), |b| b.iter(|| h.apply_into(black_box(&v), &mut out)));
    }
}

fn banded(c: &mut Criterion) {
    let h = oscillator(64);
    let n = h.len();
    let mut entries = Vec::new();
    h.for_each_entry(|r, col, v| entries.push((r, col, v - if r == col { 0.4 } else { 0.0 })));
    c.bench_function("banded lu factor 64x64", |b| {
        b.iter(|| BandedLu::factor(n, black_box(&entries), None).unwrap())
    });
    let lu = BandedLu::factor(n, &entries, None).unwrap();
    let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    c.bench_function("banded lu solve 64x64", |b| {
        b.iter_batched(|| rhs.clone(), |mut x| lu.solve(&mut x), BatchSize::SmallInput)
    });
}

fn solve(c: &mut Criterion) {
    let h = oscillator(48);
    let mut g = c.benchmark_group("eigensolve");
    g.sample_size(10);
    g.bench_function("lowest 4 of 48x48", |b| b.iter(|| solve_eigenpairs(&h, 4, Which::Lowest, 1e-10).unwrap()));
    g.finish();
}

fn propagate(c: &mut Criterion) {
    let grid = ProductGrid::new(
        vec![Axis::new("x", 600, -30.0, 30.0, Boundary::Dirichlet, 1.0).unwrap()],
        vec![Axis::angular("phi", 8, 1.0).unwrap()],
    )
    .unwrap();
    let h = build_hamiltonian(&grid, &HamiltonianTerms::default(), FdOrder::Fourth).unwrap();
    let raw: Vec<f64> = (0..600).map(|s| (-grid.system_coords(s)[0].powi(2) / 4.0).exp()).collect();
    let norm = (raw.iter().map(|v| v * v).sum::<f64>() * grid.system_weight()).sqrt();
    let psi: Vec<Complex64> = raw.iter().map(|v| Complex64::new(v / norm, 0.0)).collect();
    let traj = classical_trajectory(&ClockModel::cyclic(1.0, 1.0), &[0.0], (0.0, 1.0)).unwrap();
    c.bench_function("crank-nicolson 100 steps, 600 points", |b| {
        b.iter(|| tdse_propagate(&h, &traj, black_box(&psi), &[0.0, 1.0], 0.01).unwrap())
    });
}

criterion_group!(benches, apply, banded, solve, propagate);
criterion_main!(benches);
