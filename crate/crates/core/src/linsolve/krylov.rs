//! Matrix-free Krylov iterations on plain slices.

use crate::real::Real;

use super::SolveError;

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovReport<T> {
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||`.
    pub residual: T,
    /// Relative residual after every iteration (index 0 is the initial guess).
    pub history: Vec<T>,
    /// Square root of `r . M^{-1} r` per iteration (CG only).
    pub precond_history: Vec<T>,
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients for symmetric positive definite `apply`.
///
/// `x` holds the initial guess on entry and the solution on exit.
pub fn cg<T, A, P>(mut apply: A, mut precond: P, b: &[T], x: &mut [T], tol: T, max_iters: usize) -> Result<KrylovReport<T>, SolveError>
where
    T: Real,
    A: FnMut(&[T], &mut [T]),
    P: FnMut(&[T], &mut [T]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(KrylovReport { iterations: 0, residual: T::zero(), history: vec![T::zero()], precond_history: vec![T::zero()] });
    }
    let mut r = vec![T::zero(); n];
    apply(x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![T::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut history = vec![norm(&r) / bnorm];
    let mut precond_history = vec![rz.max(T::zero()).sqrt()];
    if history[0] <= tol {
        return Ok(KrylovReport { iterations: 0, residual: history[0], history, precond_history });
    }
    for it in 1..=max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(SolveError::Breakdown { iterations: it, residual: history[history.len() - 1].as_f64() });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        history.push(rel);
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        precond_history.push(rz_new.max(T::zero()).sqrt());
        if rel <= tol {
            return Ok(KrylovReport { iterations: it, residual: rel, history, precond_history });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NotConverged { iterations: max_iters, residual: history[history.len() - 1].as_f64() })
}

/// Restarted GMRES with right preconditioning, for general nonsingular `apply`.
pub fn gmres<T, A, P>(
    mut apply: A,
    mut precond: P,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iters: usize,
    restart: usize,
) -> Result<KrylovReport<T>, SolveError>
where
    T: Real,
    A: FnMut(&[T], &mut [T]),
    P: FnMut(&[T], &mut [T]),
{
    let n = b.len();
    let m = restart.max(1);
    let bnorm = norm(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(KrylovReport { iterations: 0, residual: T::zero(), history: vec![T::zero()], precond_history: Vec::new() });
    }
    let mut r = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut history = Vec::new();
    let mut total = 0usize;
    loop {
        apply(x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        let rel = beta / bnorm;
        if history.is_empty() {
            history.push(rel);
        }
        if rel <= tol {
            return Ok(KrylovReport { iterations: total, residual: rel, history, precond_history: Vec::new() });
        }
        if total >= max_iters {
            return Err(SolveError::NotConverged { iterations: total, residual: rel.as_f64() });
        }
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|&v| v / beta).collect());
        let mut hess = vec![vec![T::zero(); m]; m + 1];
        let mut cs = vec![T::zero(); m];
        let mut sn = vec![T::zero(); m];
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            for (i, vi) in basis.iter().enumerate() {
                let h = dot(&w, vi);
                hess[i][k] = h;
                for (wj, &vj) in w.iter_mut().zip(vi.iter()) {
                    *wj = *wj - h * vj;
                }
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + hess[k + 1][k] * hess[k + 1][k]).sqrt();
            if denom == T::zero() {
                cs[k] = T::one();
                sn[k] = T::zero();
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = cs[k] * hess[k][k] + sn[k] * hess[k + 1][k];
            hess[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            total += 1;
            k_used = k + 1;
            let rel = g[k + 1].abs() / bnorm;
            history.push(rel);
            if rel <= tol || total >= max_iters || hn == T::zero() {
                break;
            }
            basis.push(w.iter().map(|&v| v / hn).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s = s - hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![T::zero(); n];
        for (j, &yj) in y.iter().enumerate() {
            for (u, &v) in update.iter_mut().zip(&basis[j]) {
                *u = *u + yj * v;
            }
        }
        precond(&update, &mut z);
        for (xi, &zi) in x.iter_mut().zip(&z) {
            *xi = *xi + zi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], y: &mut [f64], skew: f64) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 4.0 * x[i] - (1.0 + skew) * l - (1.0 - skew) * r;
        }
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let rep = cg(|x, y| tridiag(x, y, 0.0), |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 200).unwrap();
        assert!(rep.residual <= 1e-12);
        let mut ax = vec![0.0; n];
        tridiag(&x, &mut ax, 0.0);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let n = 50;
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let err = cg(|x, y| tridiag(x, y, 0.0), |r, z| z.copy_from_slice(r), &b, &mut x, 1e-14, 2).unwrap_err();
        assert!(matches!(err, SolveError::NotConverged { iterations: 2, .. }));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 80;
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let mut x = vec![0.0; n];
        let rep = gmres(|x, y| tridiag(x, y, 0.6), |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 500, 10).unwrap();
        assert!(rep.residual <= 1e-12);
        let mut ax = vec![0.0; n];
        tridiag(&x, &mut ax, 0.6);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        // jacobi preconditioning keeps the same answer
        let mut x2 = vec![0.0; n];
        gmres(|x, y| tridiag(x, y, 0.6), |r, z| z.iter_mut().zip(r).for_each(|(z, r)| *z = r / 4.0), &b, &mut x2, 1e-12, 500, 10).unwrap();
        let diff: f64 = x.iter().zip(&x2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0; 5];
        cg(|x, y| tridiag(x, y, 0.0), |r, z| z.copy_from_slice(r), &[0.0; 5], &mut x, 1e-10, 10).unwrap();
        assert_eq!(x, vec![0.0; 5]);
    }
}
