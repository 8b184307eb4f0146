//! Fast diagonalization of constant-coefficient second differences.
//!
//! The 1D second-difference matrices produced by the MAC closures are
//! diagonalized by known cosine/sine bases; tensor products of those bases
//! invert shifted Laplacians exactly in `O(n^3)` for an `n x n` grid.

use crate::real::Real;

/// Boundary closure of a 1D second difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Cell-centered unknowns, zero flux at both ends (`n` unknowns).
    NeumannCell,
    /// Node unknowns with both end nodes pinned to zero (`n - 1` unknowns).
    DirichletNode,
    /// Cell-centered unknowns, odd reflection at both ends (`n` unknowns).
    DirichletCell,
}

/// Orthonormal eigenbasis of `-d^2/dx^2` for one closure.
#[derive(Debug, Clone)]
pub struct Basis1d<T> {
    m: usize,
    /// `q[k * m + i]`: mode `k` sampled at unknown `i`.
    q: Vec<T>,
    eig: Vec<T>,
}

impl<T: Real> Basis1d<T> {
    pub fn new(kind: BasisKind, n: usize, spacing: T) -> Self {
        let pi = T::PI();
        let nf = T::from_usize_lossy(n);
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let h2 = spacing * spacing;
        let lam = |k: usize| (two - two * (pi * T::from_usize_lossy(k) / nf).cos()) / h2;
        match kind {
            BasisKind::NeumannCell => {
                let m = n;
                let mut q = vec![T::zero(); m * m];
                let mut eig = vec![T::zero(); m];
                for k in 0..m {
                    let c = if k == 0 { (T::one() / nf).sqrt() } else { (two / nf).sqrt() };
                    for i in 0..m {
                        q[k * m + i] = c * (pi * T::from_usize_lossy(k) * (T::from_usize_lossy(i) + half) / nf).cos();
                    }
                    eig[k] = lam(k);
                }
                Self { m, q, eig }
            }
            BasisKind::DirichletNode => {
                let m = n - 1;
                let mut q = vec![T::zero(); m * m];
                let mut eig = vec![T::zero(); m];
                let c = (two / nf).sqrt();
                for k in 0..m {
                    for i in 0..m {
                        q[k * m + i] = c * (pi * T::from_usize_lossy(k + 1) * T::from_usize_lossy(i + 1) / nf).sin();
                    }
                    eig[k] = lam(k + 1);
                }
                Self { m, q, eig }
            }
            BasisKind::DirichletCell => {
                let m = n;
                let mut q = vec![T::zero(); m * m];
                let mut eig = vec![T::zero(); m];
                for k in 0..m {
                    let c = if k + 1 == n { (T::one() / nf).sqrt() } else { (two / nf).sqrt() };
                    for i in 0..m {
                        q[k * m + i] = c * (pi * T::from_usize_lossy(k + 1) * (T::from_usize_lossy(i) + half) / nf).sin();
                    }
                    eig[k] = lam(k + 1);
                }
                Self { m, q, eig }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eig
    }
}

/// Tensor-product basis on an `mx x my` row-major array.
#[derive(Debug, Clone)]
pub struct Separable<T> {
    bx: Basis1d<T>,
    by: Basis1d<T>,
}

impl<T: Real> Separable<T> {
    pub fn new(bx: Basis1d<T>, by: Basis1d<T>) -> Self {
        Self { bx, by }
    }

    pub fn len(&self) -> usize {
        self.bx.m * self.by.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transform(&self, x: &[T], inverse: bool) -> Vec<T> {
        let (mx, my) = (self.bx.m, self.by.m);
        let mut tmp = vec![T::zero(); mx * my];
        for j in 0..my {
            let row = &x[j * mx..(j + 1) * mx];
            for k in 0..mx {
                let mut s = T::zero();
                for (i, &xi) in row.iter().enumerate() {
                    let c = if inverse { self.bx.q[i * mx + k] } else { self.bx.q[k * mx + i] };
                    s = s + c * xi;
                }
                tmp[j * mx + k] = s;
            }
        }
        let mut out = vec![T::zero(); mx * my];
        for l in 0..my {
            for j in 0..my {
                let c = if inverse { self.by.q[j * my + l] } else { self.by.q[l * my + j] };
                if c == T::zero() {
                    continue;
                }
                let src = &tmp[j * mx..(j + 1) * mx];
                let dst = &mut out[l * mx..(l + 1) * mx];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + c * s;
                }
            }
        }
        out
    }

    /// Coefficients in the tensor basis.
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        self.transform(x, false)
    }

    /// Inverse of [`Separable::forward`].
    pub fn inverse(&self, xh: &[T]) -> Vec<T> {
        self.transform(xh, true)
    }

    /// `lambda_x + lambda_y` for every mode, in the layout of [`Separable::forward`].
    pub fn mode_eigenvalues(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for l in 0..self.by.m {
            for k in 0..self.bx.m {
                out.push(self.bx.eig[k] + self.by.eig[l]);
            }
        }
        out
    }

    /// Applies `f(lambda_x + lambda_y)` mode by mode, where `lambda` are the
    /// eigenvalues of `-d^2`.
    pub fn apply_spectral(&self, x: &[T], f: impl Fn(T) -> T) -> Vec<T> {
        let mut xh = self.transform(x, false);
        let (mx, my) = (self.bx.m, self.by.m);
        for l in 0..my {
            for k in 0..mx {
                let lam = self.bx.eig[k] + self.by.eig[l];
                xh[l * mx + k] = xh[l * mx + k] * f(lam);
            }
        }
        self.transform(&xh, true)
    }

    /// Solves `(shift + scale * (-Laplacian)) s = rhs`. A zero denominator
    /// (the Neumann constant mode with `shift = 0`) maps to zero.
    pub fn solve_shifted(&self, rhs: &[T], shift: T, scale: T) -> Vec<T> {
        self.apply_spectral(rhs, |lam| {
            let d = shift + scale * lam;
            if d == T::zero() {
                T::zero()
            } else {
                T::one() / d
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn second_difference(kind: BasisKind, x: &[f64], h: f64) -> Vec<f64> {
        let m = x.len();
        (0..m)
            .map(|i| {
                let (l, r) = match kind {
                    BasisKind::NeumannCell => (if i > 0 { x[i - 1] } else { x[0] }, if i + 1 < m { x[i + 1] } else { x[m - 1] }),
                    BasisKind::DirichletNode => (if i > 0 { x[i - 1] } else { 0.0 }, if i + 1 < m { x[i + 1] } else { 0.0 }),
                    BasisKind::DirichletCell => (if i > 0 { x[i - 1] } else { -x[0] }, if i + 1 < m { x[i + 1] } else { -x[m - 1] }),
                };
                (2.0 * x[i] - l - r) / (h * h)
            })
            .collect()
    }

    #[test]
    fn bases_are_orthonormal_eigenvectors() {
        for kind in [BasisKind::NeumannCell, BasisKind::DirichletNode, BasisKind::DirichletCell] {
            let b = Basis1d::<f64>::new(kind, 7, 0.3);
            let m = b.len();
            for k in 0..m {
                let v = &b.q[k * m..(k + 1) * m];
                let av = second_difference(kind, v, 0.3);
                for i in 0..m {
                    assert!((av[i] - b.eig[k] * v[i]).abs() < 1e-10, "{kind:?} mode {k}");
                }
                for l in 0..m {
                    let d: f64 = (0..m).map(|i| b.q[k * m + i] * b.q[l * m + i]).sum();
                    let e = if k == l { 1.0 } else { 0.0 };
                    assert!((d - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transform_round_trip() {
        let s = Separable::new(Basis1d::<f64>::new(BasisKind::NeumannCell, 5, 0.2), Basis1d::new(BasisKind::DirichletCell, 4, 0.25));
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let y = s.apply_spectral(&x, |_| 1.0);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
