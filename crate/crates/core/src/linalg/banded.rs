use super::Scalar;

/// LU factorization with partial pivoting of a banded matrix, with an
/// optional symmetric reordering to shrink the band.
///
/// Storage follows the LAPACK `gbtrf` layout: column `j` holds rows
/// `j - kl - ku ..= j + kl`, leaving room for pivot fill.
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<T>,
    pivots: Vec<usize>,
    /// `perm[original] = banded position`.
    perm: Option<Vec<usize>>,
}

impl<T: Scalar> BandedLu<T> {
    /// Factor an `n x n` matrix given as `(row, col, value)` triples
    /// (duplicates are summed). `perm` maps each original index to its
    /// position in the banded ordering.
    pub fn factor(
        n: usize,
        entries: &[(usize, usize, T)],
        perm: Option<Vec<usize>>,
    ) -> Result<Self, usize> {
        let map = |i: usize| perm.as_ref().map_or(i, |p| p[i]);
        let (mut kl, mut ku) = (0usize, 0usize);
        for &(r, c, _) in entries {
            let (r, c) = (map(r), map(c));
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        let ld = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![T::zero(); ld * n];
        for &(r, c, v) in entries {
            let (r, c) = (map(r), map(c));
            ab[kv + r - c + c * ld] += v;
        }
        let mut lu = BandedLu { n, kl, ku, ab, pivots: vec![0; n], perm };
        lu.eliminate()?;
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `(kl, ku)` of the reordered matrix.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        let ld = 2 * self.kl + self.ku + 1;
        self.kl + self.ku + r - c + c * ld
    }

    fn eliminate(&mut self) -> Result<(), usize> {
        let n = self.n;
        let (kl, kv) = (self.kl, self.kl + self.ku);
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = -1.0;
            for r in 0..=km {
                let m = self.ab[self.at(j + r, j)].modulus();
                if m > best {
                    best = m;
                    jp = r;
                }
            }
            self.pivots[j] = j + jp;
            if best == 0.0 {
                return Err(j);
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (a, b) = (self.at(j, c), self.at(j + jp, c));
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[self.at(j, j)];
            for r in 1..=km {
                let i = self.at(j + r, j);
                self.ab[i] = self.ab[i] / piv;
            }
            for c in j + 1..=ju {
                let a = self.ab[self.at(j, c)];
                if a == T::zero() {
                    continue;
                }
                for r in 1..=km {
                    let l = self.ab[self.at(j + r, j)];
                    let i = self.at(j + r, c);
                    self.ab[i] -= l * a;
                }
            }
        }
        debug_assert!(kv >= self.ku);
        Ok(())
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let mut work;
        let x: &mut [T] = match &self.perm {
            Some(p) => {
                work = vec![T::zero(); self.n];
                for (i, &pi) in p.iter().enumerate() {
                    work[pi] = b[i];
                }
                &mut work
            }
            None => b,
        };
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let l = self.pivots[j];
            if l != j {
                x.swap(l, j);
            }
            let xj = x[j];
            if xj == T::zero() {
                continue;
            }
            for r in 1..=self.kl.min(n - 1 - j) {
                x[j + r] -= self.ab[self.at(j + r, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            x[j] = x[j] / self.ab[self.at(j, j)];
            let xj = x[j];
            for i in j.saturating_sub(kv)..j {
                x[i] -= self.ab[self.at(i, j)] * xj;
            }
        }
        if let Some(p) = &self.perm {
            let solved: Vec<T> = p.iter().map(|&pi| x[pi]).collect();
            b.copy_from_slice(&solved);
        }
    }
}

/// Ordering `0, n-1, 1, n-2, ...` that turns a periodic nearest-neighbour
/// ring into a band of width 2: `result[j]` is the position of ring index `j`.
pub fn ring_order(n: usize) -> Vec<usize> {
    let mut pos = vec![0; n];
    for j in 0..n {
        pos[j] = if 2 * j < n {
            2 * j
        } else {
            2 * (n - j) - 1
        };
    }
    pos
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;

    fn dense_solve(n: usize, entries: &[(usize, usize, f64)], b: &[f64]) -> Vec<f64> {
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        for &(r, c, v) in entries {
            a[(r, c)] += v;
        }
        let x = a.lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap();
        x.iter().copied().collect()
    }

    #[test]
    fn ring_order_is_a_permutation_with_short_hops() {
        for n in [8, 9, 16, 33] {
            let p = ring_order(n);
            let mut seen = p.clone();
            seen.sort();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            for j in 0..n {
                let k = (j + 1) % n;
                assert!(p[j].abs_diff(p[k]) <= 2, "n={n} j={j}");
            }
        }
    }

    #[test]
    fn matches_dense_solve_with_pivoting() {
        // Tridiagonal plus wrap-around corners, with a small diagonal that
        // forces row exchanges.
        let n = 12;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, if i % 3 == 0 { 1e-3 } else { 2.0 + i as f64 * 0.1 }));
            let j = (i + 1) % n;
            e.push((i, j, -1.0 + 0.05 * i as f64));
            e.push((j, i, -0.7));
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let expected = dense_solve(n, &e, &b);
        let lu = BandedLu::factor(n, &e, Some(ring_order(n))).unwrap();
        assert!(lu.bandwidths().0 <= 2);
        let mut x = b.clone();
        lu.solve(&mut x);
        for (p, q) in x.iter().zip(&expected) {
            assert!((p - q).abs() < 1e-10, "{p} {q}");
        }
    }

    #[test]
    fn complex_solve_round_trip() {
        let n = 10;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, Complex64::new(1.0, 0.5 * i as f64)));
            if i + 2 < n {
                e.push((i, i + 2, Complex64::new(0.3, -0.1)));
                e.push((i + 2, i, Complex64::new(-0.2, 0.4)));
            }
        }
        let x0: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        for &(r, c, v) in &e {
            b[r] += v * x0[c];
        }
        let lu = BandedLu::factor(n, &e, None).unwrap();
        lu.solve(&mut b);
        for (p, q) in b.iter().zip(&x0) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let e = vec![(0, 0, 1.0), (1, 1, 0.0), (0, 1, 0.0)];
        assert!(BandedLu::factor(2, &e, None).is_err());
    }
}
