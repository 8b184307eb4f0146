//! Linear solvers: zero-mean Neumann Poisson, variable-coefficient elliptic
//! solves and the discrete Leray projection, plus the Krylov and dense
//! kernels the time stepper builds on.

mod dense;
mod krylov;
mod spectral;

use thiserror::Error;

use crate::grid::{FaceField, Grid, ScalarField};
use crate::real::Real;

pub use dense::{lu_solve, BandedLu};
pub use krylov::{cg, gmres, KrylovReport};
pub use spectral::{Basis1d, BasisKind, Separable};


#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("linear solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("krylov breakdown at iteration {iterations} (relative residual {residual:e})")]
    Breakdown { iterations: usize, residual: f64 },
    #[error("singular matrix at column {column}")]
    Singular { column: usize },
    #[error("shift = 0 needs a mean-free right-hand side, got mean {mean:e}")]
    IncompatibleRhs { mean: f64 },
    #[error("coefficient must be positive, min is {min:e}")]
    NonPositiveCoefficient { min: f64 },
    #[error("invalid solver options: {0}")]
    InvalidOptions(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    /// Inverse of the operator diagonal (Jacobi).
    Diagonal,
    /// Exact inverse of the constant-coefficient operator via fast diagonalization.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub tol_rel: T,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self { tol_rel: T::lit(1e-10), max_iters: 10_000, preconditioner: Preconditioner::Diagonal }
    }
}

impl<T: Real> SolverOptions<T> {
    /// Defaults for variable-coefficient solves.
    pub fn elliptic() -> Self {
        Self { tol_rel: T::lit(1e-9), ..Self::default() }
    }

    /// Tight settings for Leray projections.
    pub fn projection() -> Self {
        Self { tol_rel: T::tol_floor(1e-13), max_iters: 200, preconditioner: Preconditioner::Spectral }
    }

    pub fn with_preconditioner(mut self, p: Preconditioner) -> Self {
        self.preconditioner = p;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol_rel > T::zero()) {
            return Err(SolveError::InvalidOptions("tol_rel must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(SolveError::InvalidOptions("max_iters must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution<T> {
    /// Zero-mean solution.
    pub solution: ScalarField<T>,
    /// Mean removed from the right-hand side before solving.
    pub mean_correction: T,
    pub report: KrylovReport<T>,
}

fn remove_mean<T: Real>(x: &mut [T]) {
    let m = x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len());
    x.iter_mut().for_each(|v| *v = *v - m);
}

/// Cell-centered Neumann solver bound to one grid. Holds the cosine bases so
/// repeated solves skip rebuilding them.
#[derive(Debug, Clone)]
pub struct NeumannSolver<T> {
    grid: Grid<T>,
    basis: Separable<T>,
}

impl<T: Real> NeumannSolver<T> {
    pub fn new(grid: &Grid<T>) -> Self {
        let basis = Separable::new(
            Basis1d::new(BasisKind::NeumannCell, grid.nx(), grid.dx()),
            Basis1d::new(BasisKind::NeumannCell, grid.ny(), grid.dy()),
        );
        Self { grid: *grid, basis }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn basis(&self) -> &Separable<T> {
        &self.basis
    }

    /// Applies `(shift - scale * laplace)^{-1}` exactly; the constant mode is
    /// dropped when `shift = 0`.
    pub fn apply_inverse(&self, rhs: &[T], shift: T, scale: T) -> Vec<T> {
        self.basis.solve_shifted(rhs, shift, scale)
    }

    /// Diagonal of `-div(c grad)` for face coefficients `c`.
    fn neg_div_coeff_grad_diag(&self, coeff: &FaceField<T>) -> Vec<T> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let idx2 = T::one() / (g.dx() * g.dx());
        let idy2 = T::one() / (g.dy() * g.dy());
        let mut d = vec![T::zero(); g.n_cells()];
        for j in 0..ny {
            for i in 0..nx {
                let mut s = T::zero();
                if i > 0 {
                    s = s + coeff.u[g.uface(i, j)] * idx2;
                }
                if i + 1 < nx {
                    s = s + coeff.u[g.uface(i + 1, j)] * idx2;
                }
                if j > 0 {
                    s = s + coeff.v[g.vface(i, j)] * idy2;
                }
                if j + 1 < ny {
                    s = s + coeff.v[g.vface(i, j + 1)] * idy2;
                }
                d[g.cell(i, j)] = s;
            }
        }
        d
    }

    /// Zero-mean `s` with `laplace(s) = rhs - mean(rhs)`.
    pub fn solve_poisson(&self, rhs: &ScalarField<T>, opts: &SolverOptions<T>) -> Result<PoissonSolution<T>, SolveError> {
        let ones = FaceField { u: vec![T::one(); self.grid.n_u()], v: vec![T::one(); self.grid.n_v()] };
        let mean = self.grid.mean(rhs);
        let mut b: Vec<T> = rhs.values.iter().map(|&r| mean - r).collect();
        remove_mean(&mut b);
        let (x, report) = self.solve_vc(&ones, T::zero(), T::one(), &b, opts)?;
        Ok(PoissonSolution { solution: ScalarField { values: x }, mean_correction: mean, report })
    }

    /// Solves `(shift - div(coeff_face grad)) s = rhs` by preconditioned CG.
    /// With `shift = 0` the solve runs on the zero-mean subspace and `rhs` must
    /// already be mean-free.
    fn solve_vc(
        &self,
        coeff: &FaceField<T>,
        shift: T,
        mean_coeff: T,
        b: &[T],
        opts: &SolverOptions<T>,
    ) -> Result<(Vec<T>, KrylovReport<T>), SolveError> {
        opts.validate()?;
        let g = self.grid;
        let singular = shift == T::zero();
        let apply = |x: &[T], y: &mut [T]| {
            let s = ScalarField { values: x.to_vec() };
            let l = g.div_coeff_grad(coeff, &s);
            for ((yi, &li), &xi) in y.iter_mut().zip(&l.values).zip(x) {
                *yi = shift * xi - li;
            }
        };
        let diag = self.neg_div_coeff_grad_diag(coeff);
        let precond = |r: &[T], z: &mut [T]| {
            match opts.preconditioner {
                Preconditioner::None => z.copy_from_slice(r),
                Preconditioner::Diagonal => {
                    for ((zi, &ri), &di) in z.iter_mut().zip(r).zip(&diag) {
                        *zi = ri / (shift + di);
                    }
                }
                Preconditioner::Spectral => z.copy_from_slice(&self.basis.solve_shifted(r, shift, mean_coeff)),
            }
            if singular {
                remove_mean(z);
            }
        };
        let mut x = vec![T::zero(); b.len()];
        let report = cg(apply, precond, b, &mut x, opts.tol_rel, opts.max_iters)?;
        if singular {
            remove_mean(&mut x);
        }
        Ok((x, report))
    }

    /// `(shift I - div(coeff grad)) s = rhs` with cell coefficients averaged to faces.
    pub fn solve_elliptic(
        &self,
        coeff: &ScalarField<T>,
        shift: T,
        rhs: &ScalarField<T>,
        opts: &SolverOptions<T>,
    ) -> Result<(ScalarField<T>, KrylovReport<T>), SolveError> {
        let min = coeff.values.iter().copied().fold(T::infinity(), T::min);
        if !(min > T::zero()) {
            return Err(SolveError::NonPositiveCoefficient { min: min.as_f64() });
        }
        if shift < T::zero() {
            return Err(SolveError::InvalidOptions("shift must be >= 0"));
        }
        if shift == T::zero() {
            let mean = self.grid.mean(rhs);
            let scale = rhs.max_abs().max(T::one());
            if mean.abs() > T::tol_floor(1e-12) * scale {
                return Err(SolveError::IncompatibleRhs { mean: mean.as_f64() });
            }
        }
        let cf = self.grid.face_average(coeff);
        let mean_coeff = self.grid.mean(coeff);
        let mut b = rhs.values.clone();
        if shift == T::zero() {
            remove_mean(&mut b);
        }
        let (x, report) = self.solve_vc(&cf, shift, mean_coeff, &b, opts)?;
        Ok((ScalarField { values: x }, report))
    }

    /// Discrete Leray projection `(f - grad p, p)` with `laplace p = div f`.
    /// Boundary-normal components of `f` are treated as zero.
    pub fn leray_project(&self, f: &FaceField<T>, opts: &SolverOptions<T>) -> Result<(FaceField<T>, ScalarField<T>), SolveError> {
        let mut out = f.clone();
        out.zero_boundary_normal(&self.grid);
        let rhs = self.grid.div(&out);
        let sol = self.solve_poisson(&rhs, opts)?;
        out.axpy(-T::one(), &self.grid.grad(&sol.solution));
        Ok((out, sol.solution))
    }
}

/// Zero-mean solution of `laplace(s) = rhs - mean(rhs)`.
pub fn solve_poisson_neumann<T: Real>(grid: &Grid<T>, rhs: &ScalarField<T>, opts: &SolverOptions<T>) -> Result<PoissonSolution<T>, SolveError> {
    NeumannSolver::new(grid).solve_poisson(rhs, opts)
}

pub fn leray_project<T: Real>(grid: &Grid<T>, f: &FaceField<T>, opts: &SolverOptions<T>) -> Result<(FaceField<T>, ScalarField<T>), SolveError> {
    NeumannSolver::new(grid).leray_project(f, opts)
}

/// Solves `(shift I - div(coeff grad)) s = rhs` with the Neumann closure.
pub fn solve_elliptic_vc<T: Real>(
    grid: &Grid<T>,
    coeff: &ScalarField<T>,
    shift: T,
    rhs: &ScalarField<T>,
    opts: &SolverOptions<T>,
) -> Result<ScalarField<T>, SolveError> {
    NeumannSolver::new(grid).solve_elliptic(coeff, shift, rhs, opts).map(|(s, _)| s)
}
