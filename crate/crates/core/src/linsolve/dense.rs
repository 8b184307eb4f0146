//! Direct solvers: dense elimination for the small-grid oracle and a banded
//! LU factorization used as a preconditioner.

use crate::real::Real;

use super::SolveError;

/// Solves `a x = b` in place (`a` is `n x n` row-major and is destroyed).
pub fn lu_solve<T: Real>(a: &mut [T], b: &mut [T]) -> Result<(), SolveError> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix shape mismatch");
    let scale = a.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > tiny) {
            return Err(SolveError::Singular { column: col });
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                a[r * n + c] = a[r * n + c] - f * a[col * n + c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s = s - a[r * n + c] * b[c];
        }
        b[r] = s / a[r * n + r];
    }
    Ok(())
}

/// LU factorization with partial pivoting of a banded matrix with `kl` sub- and
/// `ku` super-diagonals. Row `i` stores columns `i - kl ..= i + kl + ku` to hold
/// the fill created by row interchanges.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    /// Assembles the matrix from `(row, col, value)` triplets (duplicates are
    /// summed) and factors it. Panics on an entry outside the band.
    pub fn factor(n: usize, kl: usize, ku: usize, entries: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self, SolveError> {
        let width = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, width, a: vec![T::zero(); n * width], piv: vec![0; n] };
        for (r, c, v) in entries {
            assert!(r < n && c < n && c + kl >= r && c <= r + ku, "entry ({r}, {c}) outside the band");
            let k = lu.idx(r, c);
            lu.a[k] = lu.a[k] + v;
        }
        let scale = lu.a.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.a[lu.idx(k, k)].abs();
            for r in k + 1..=last {
                let v = lu.a[lu.idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(SolveError::Singular { column: k });
            }
            lu.piv[k] = p;
            let cend = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=cend {
                    let (x, y) = (lu.idx(k, c), lu.idx(p, c));
                    lu.a.swap(x, y);
                }
            }
            let d = lu.a[lu.idx(k, k)];
            let len = cend - k;
            let rk = lu.idx(k, k);
            for r in k + 1..=last {
                let rr = lu.idx(r, k);
                let f = lu.a[rr] / d;
                lu.a[rr] = f;
                if f == T::zero() {
                    continue;
                }
                // rows are stored one after another, so the pivot row precedes row r
                let (head, tail) = lu.a.split_at_mut(rr);
                let src = &head[rk + 1..rk + 1 + len];
                for (x, &y) in tail[1..1 + len].iter_mut().zip(src) {
                    *x = *x - f * y;
                }
            }
        }
        Ok(lu)
    }

    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + col + self.kl - row
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs length mismatch");
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk == T::zero() {
                continue;
            }
            for r in k + 1..=(k + self.kl).min(n - 1) {
                b[r] = b[r] - self.a[self.idx(r, k)] * bk;
            }
        }
        for r in (0..n).rev() {
            let base = self.idx(r, r);
            let end = (r + self.kl + self.ku).min(n - 1);
            let row = &self.a[base + 1..base + 1 + end - r];
            let s = row.iter().zip(&b[r + 1..=end]).fold(b[r], |acc, (&a, &x)| acc - a * x);
            b[r] = s / self.a[base];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_permuted_system() {
        let mut a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let x = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|r| (0..3).map(|c| a[r * 3 + c] * x[c]).sum()).collect();
        lu_solve(&mut a, &mut b).unwrap();
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn banded_matches_dense() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n, kl, ku) = (40, 3, 5);
        let mut dense = vec![0.0f64; n * n];
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // weak diagonal forces row interchanges
                dense[i * n + j] = rng.gen_range(-1.0..1.0) * if i == j { 0.01 } else { 1.0 };
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..n).map(|r| (0..n).map(|c| dense[r * n + c] * x[c]).sum()).collect();
        let trip = (0..n * n).filter(|&k| dense[k] != 0.0).map(|k| (k / n, k % n, dense[k]));
        let lu = BandedLu::factor(n, kl, ku, trip).unwrap();
        let mut y = b.clone();
        lu.solve(&mut y);
        let mut a = dense.clone();
        let mut z = b.clone();
        lu_solve(&mut a, &mut z).unwrap();
        for i in 0..n {
            assert!((y[i] - x[i]).abs() < 1e-9, "{i}: {} vs {}", y[i], x[i]);
            assert!((y[i] - z[i]).abs() < 1e-9);
        }
        assert!(matches!(BandedLu::<f64>::factor(3, 1, 1, []), Err(SolveError::Singular { column: 0 })));
    }

    #[test]
    fn singular_is_reported() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 1.0];
        assert!(matches!(lu_solve(&mut a, &mut b), Err(SolveError::Singular { .. })));
    }
}
