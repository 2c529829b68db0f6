use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dot;

/// Tuning of [`block_krylov`].
#[derive(Clone, Debug)]
pub struct KrylovOptions {
    /// Vectors added per expansion. At least 2 so degenerate pairs are
    /// resolved.
    pub block: usize,
    /// Basis size that triggers a thick restart.
    pub max_basis: usize,
    /// Expansions before giving up.
    pub max_expansions: usize,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { block: 4, max_basis: 96, max_expansions: 600, seed: 0x5eed }
    }
}

/// Eigenpair of the Krylov operator.
#[derive(Clone, Debug)]
pub struct RitzPair {
    pub value: f64,
    /// Unit Euclidean norm.
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    /// The accepted pairs, largest `|value|` first.
    pub pairs: Vec<RitzPair>,
    pub expansions: usize,
}

/// Thick-restart block Lanczos for the `want` eigenvalues of largest
/// magnitude of a real symmetric operator.
///
/// `accept` judges a unit Ritz vector and returns `(converged, residual)`;
/// this lets the caller test residuals of the original problem rather than
/// of the (shift-inverted) Krylov operator. On failure returns the best
/// residual seen among the wanted pairs and the expansion count.
pub fn block_krylov(
    n: usize,
    mut op: impl FnMut(&[f64], &mut [f64]),
    want: usize,
    starts: &[Vec<f64>],
    opts: &KrylovOptions,
    mut accept: impl FnMut(&[f64]) -> (bool, f64),
) -> Result<KrylovOutcome, (f64, usize)> {
    let block = opts.block.max(2);
    assert!(want >= 1 && want + block <= n, "Krylov space too small for the request");
    let max_basis = opts.max_basis.max(2 * (want + 2 * block)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() - 0.5).collect() };

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut t: Vec<Vec<f64>> = Vec::new();

    let mut pending: Vec<Vec<f64>> = starts.to_vec();
    while pending.len() < block {
        pending.push(random(&mut rng));
    }
    let mut best = f64::INFINITY;

    for expansion in 0..opts.max_expansions {
        // Orthonormalize the new block and extend V, AV and T = V^T A V.
        let mut added = 0;
        for mut q in pending.drain(..) {
            let mut accepted = false;
            for _attempt in 0..3 {
                let before = dot(&q, &q).sqrt();
                for _pass in 0..2 {
                    for v in &basis {
                        let c = dot(v, &q);
                        q.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
                    }
                }
                let norm = dot(&q, &q).sqrt();
                if norm > 1e-10 * before.max(f64::MIN_POSITIVE) && norm > 0.0 {
                    q.iter_mut().for_each(|a| *a /= norm);
                    accepted = true;
                    break;
                }
                q = random(&mut rng);
            }
            if !accepted || basis.len() >= n {
                continue;
            }
            let mut w = vec![0.0; n];
            op(&q, &mut w);
            let k = basis.len();
            let mut row = Vec::with_capacity(k + 1);
            for i in 0..k {
                row.push(0.5 * (dot(&basis[i], &w) + dot(&q, &images[i])));
            }
            row.push(dot(&q, &w));
            for (i, r) in t.iter_mut().enumerate() {
                r.push(row[i]);
            }
            t.push(row);
            basis.push(q);
            images.push(w);
            added += 1;
        }
        if added == 0 && basis.is_empty() {
            return Err((best, expansion));
        }

        let m = basis.len();
        let tm = DMatrix::from_fn(m, m, |i, j| t[i][j]);
        let eig = SymmetricEigen::new(tm);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs())
        });

        let combine = |set: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (i, v) in set.iter().enumerate() {
                let c = eig.eigenvectors[(i, col)];
                if c != 0.0 {
                    y.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
                }
            }
            y
        };

        let mut pairs = Vec::new();
        let mut residual_dirs = Vec::new();
        let mut all = true;
        let mut worst = 0.0f64;
        for &col in order.iter().take(want.min(m)) {
            let theta = eig.eigenvalues[col];
            let y = combine(&basis, col);
            let (ok, res) = accept(&y);
            worst = worst.max(res);
            if !ok {
                all = false;
                if residual_dirs.len() < block {
                    let ay = combine(&images, col);
                    residual_dirs.push(ay.iter().zip(&y).map(|(a, b)| a - theta * b).collect::<Vec<_>>());
                }
            }
            pairs.push(RitzPair { value: theta, vector: y });
        }
        if m >= want {
            best = best.min(worst);
        }
        if all && m >= want {
            return Ok(KrylovOutcome { pairs, expansions: expansion + 1 });
        }
        // Fill the block with residuals of the next Ritz pairs.
        for &col in order.iter().skip(want) {
            if residual_dirs.len() >= block {
                break;
            }
            let theta = eig.eigenvalues[col];
            let y = combine(&basis, col);
            let ay = combine(&images, col);
            residual_dirs.push(ay.iter().zip(&y).map(|(a, b)| a - theta * b).collect());
        }
        while residual_dirs.len() < block {
            residual_dirs.push(random(&mut rng));
        }

        if m + block > max_basis {
            let keep = (want + 2 * block).min(m);
            let cols: Vec<usize> = order[..keep].to_vec();
            let nb: Vec<Vec<f64>> = cols.iter().map(|&c| combine(&basis, c)).collect();
            let ni: Vec<Vec<f64>> = cols.iter().map(|&c| combine(&images, c)).collect();
            t = (0..keep)
                .map(|i| {
                    (0..keep)
                        .map(|j| if i == j { eig.eigenvalues[cols[i]] } else { 0.0 })
                        .collect()
                })
                .collect();
            basis = nb;
            images = ni;
        }
        pending = residual_dirs;
    }
    Err((best, opts.max_expansions))
}
