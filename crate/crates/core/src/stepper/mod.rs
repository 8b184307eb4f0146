//! One time step of the coupled scheme and the trajectory driver.
//!
//! A step solves, with all material coefficients frozen at the old level,
//! the magnetization equation, the Cahn-Hilliard pair and the momentum
//! equation, sweeping over the three blocks until the iterates stop moving.

mod residual;

use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::grid::{FaceField, Grid, MagField, ScalarField};
use crate::linsolve::{gmres, BandedLu, Basis1d, BasisKind, NeumannSolver, Preconditioner, Separable, SolveError, SolverOptions};
use crate::materials::{Params, EPS_SAT};
use crate::real::Real;
use crate::state::{dissipation, total_energy, Splitting, State, StepReport, NewtonCounts, mass};

pub(crate) use residual::Frozen;
pub use residual::{coupled_residual, CoupledResidual};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("invalid step options: {0}")]
    InvalidOptions(&'static str),
    #[error("order parameter left [-1, 1] (value {value})")]
    Saturation { value: f64 },
    #[error("{block} Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonFailed { block: &'static str, iterations: usize, residual: f64 },
    #[error("{block} linear solve failed: {source}")]
    Linear { block: &'static str, source: SolveError },
    #[error("Picard iteration did not converge in {iterations} sweeps (last relative change {residual:e})")]
    PicardFailed { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("energy violation {violation:e} exceeds tolerance {tolerance:e}")]
    EnergyViolation { violation: f64, tolerance: f64 },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("output sink failed: {0}")]
    Sink(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions<T> {
    pub h: T,
    /// Relative L2 change of `(v, M, phi, mu)` between sweeps.
    pub picard_tol: T,
    pub picard_max: usize,
    /// Absolute discrete L2 residual of each Newton block (residuals scaled by `h`).
    pub newton_tol: T,
    pub newton_max: usize,
    pub splitting: Splitting,
    pub strict_energy: bool,
    /// Relative energy tolerance: `tol_energy = energy_rel_tol * max(|E_old|, 1e-12)`.
    pub energy_rel_tol: T,
    /// Krylov controls for the inner linear systems.
    pub linear: SolverOptions<T>,
}

impl<T: Real> Default for StepOptions<T> {
    fn default() -> Self {
        Self {
            h: T::lit(1e-3),
            picard_tol: T::lit(1e-10),
            picard_max: 200,
            newton_tol: T::lit(1e-11),
            newton_max: 50,
            splitting: Splitting::Convex,
            strict_energy: false,
            energy_rel_tol: T::lit(1e-6),
            linear: SolverOptions { tol_rel: T::lit(1e-12), max_iters: 2000, preconditioner: Preconditioner::Spectral },
        }
    }
}

impl<T: Real> StepOptions<T> {
    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.h > T::zero() && self.h.is_finite()) {
            return Err(StepError::InvalidOptions("h must be > 0"));
        }
        if !(self.picard_tol > T::zero() && self.newton_tol > T::zero() && self.energy_rel_tol > T::zero()) {
            return Err(StepError::InvalidOptions("tolerances must be > 0"));
        }
        if self.picard_max == 0 || self.newton_max == 0 {
            return Err(StepError::InvalidOptions("iteration caps must be >= 1"));
        }
        self.linear.validate().map_err(|_| StepError::InvalidOptions("invalid linear solver options"))
    }

    /// `tol_energy` for a step starting from energy `e_old`.
    pub fn energy_tolerance(&self, e_old: T) -> T {
        self.energy_rel_tol * e_old.abs().max(T::lit(1e-12))
    }
}

fn flatten_mag<T: Real>(m: &MagField<T>) -> Vec<T> {
    m.comps.iter().flat_map(|c| c.values.iter().copied()).collect()
}

fn unflatten_mag<T: Real>(x: &[T]) -> MagField<T> {
    let n = x.len() / 3;
    MagField { comps: [0, 1, 2].map(|c| ScalarField { values: x[c * n..(c + 1) * n].to_vec() }) }
}

fn flatten_face<T: Real>(f: &FaceField<T>) -> Vec<T> {
    f.u.iter().chain(&f.v).copied().collect()
}

fn unflatten_face<T: Real>(x: &[T], nu: usize) -> FaceField<T> {
    FaceField { u: x[..nu].to_vec(), v: x[nu..].to_vec() }
}

/// GMRES budget with a stale Cahn-Hilliard factorization before refactoring.
const LAGGED_KRYLOV_MAX: usize = 30;


/// Last Cahn-Hilliard factorization, reused across sweeps and steps while it
/// still preconditions well. Cloning a stepper starts with an empty cache.
#[derive(Default)]
struct FactorCache<T>(Mutex<Option<Arc<BandedLu<T>>>>);

impl<T> Clone for FactorCache<T> {
    fn clone(&self) -> Self {
        Self(Mutex::new(None))
    }
}

impl<T> std::fmt::Debug for FactorCache<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("FactorCache")
    }
}

impl<T> FactorCache<T> {
    fn get(&self) -> Option<Arc<BandedLu<T>>> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn set(&self, lu: Arc<BandedLu<T>>) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) = Some(lu);
    }
}

/// Per-grid workspace: spectral bases for every preconditioner.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    grid: Grid<T>,
    neumann: NeumannSolver<T>,
    u_basis: Separable<T>,
    v_basis: Separable<T>,
    ch_cache: FactorCache<T>,
}

/// Inner iteration counts of one sub-solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveStats {
    pub newton: usize,
    pub krylov: usize,
    pub saturated: bool,
}

impl<T: Real> Stepper<T> {
    pub fn new(grid: &Grid<T>) -> Self {
        let (nx, ny, dx, dy) = (grid.nx(), grid.ny(), grid.dx(), grid.dy());
        Self {
            grid: *grid,
            neumann: NeumannSolver::new(grid),
            u_basis: Separable::new(Basis1d::new(BasisKind::DirichletNode, nx, dx), Basis1d::new(BasisKind::DirichletCell, ny, dy)),
            v_basis: Separable::new(Basis1d::new(BasisKind::DirichletCell, nx, dx), Basis1d::new(BasisKind::DirichletNode, ny, dy)),
            ch_cache: FactorCache(Mutex::new(None)),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    fn projection_opts(&self) -> SolverOptions<T> {
        SolverOptions::projection()
    }

    fn linear_tol(&self, opts: &StepOptions<T>, rnorm: T) -> T {
        (T::lit(0.01) * opts.newton_tol / rnorm).max(opts.linear.tol_rel).min(T::lit(1e-3))
    }

    fn project(&self, f: &FaceField<T>) -> Result<FaceField<T>, StepError> {
        self.neumann
            .leray_project(f, &self.projection_opts())
            .map(|(pf, _)| pf)
            .map_err(|source| StepError::Linear { block: "projection", source })
    }

    // -----------------------------------------------------------------
    // Magnetization
    // -----------------------------------------------------------------

    pub(crate) fn magnetization(
        &self,
        fz: &Frozen<T>,
        v: &FaceField<T>,
        m_init: &MagField<T>,
        opts: &StepOptions<T>,
    ) -> Result<(MagField<T>, SolveStats), StepError> {
        let g = &self.grid;
        let n = g.n_cells();
        let h = fz.h;
        let mut m = m_init.clone();
        let mut r = fz.mag_residual(v, &m);
        let mut rn = g.norm_mag(&r);
        let mut stats = SolveStats::default();
        let xi_mean = g.mean(&fz.xi_c);
        loop {
            if !rn.is_finite() {
                return Err(StepError::NonFinite("magnetization"));
            }
            if rn <= opts.newton_tol {
                return Ok((m, stats));
            }
            if stats.newton >= opts.newton_max {
                return Err(StepError::NewtonFailed { block: "magnetization", iterations: stats.newton, residual: rn.as_f64() });
            }
            stats.newton += 1;
            let mk: Vec<[T; 3]> = (0..n).map(|k| m.at(k)).collect();
            let naive = fz.splitting == Splitting::Naive;
            let two = T::lit(2.0);
            let apply = |x: &[T], y: &mut [T]| {
                let d = unflatten_mag(x);
                for c in 0..3 {
                    let adv = g.advect_advective(v, &d.comps[c]);
                    let dif = g.div_coeff_grad(&fz.xi_f, &d.comps[c]);
                    for k in 0..n {
                        y[c * n + k] = x[c * n + k] + h * (adv.values[k] - dif.values[k]);
                    }
                }
                for k in 0..n {
                    let a = mk[k];
                    let dk = [x[k], x[n + k], x[2 * n + k]];
                    let s = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
                    let ad = a[0] * dk[0] + a[1] * dk[1] + a[2] * dk[2];
                    for c in 0..3 {
                        let mut jc = s * dk[c] + two * ad * a[c];
                        if naive {
                            jc = jc - dk[c];
                        }
                        y[c * n + k] = y[c * n + k] + h * fz.sigma[k] * jc;
                    }
                }
            };
            let mut sbar = T::zero();
            for k in 0..n {
                let a = mk[k];
                let s = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
                let mut e = s * T::lit(5.0) / T::lit(3.0);
                if naive {
                    e = e - T::one();
                }
                sbar = sbar + fz.sigma[k] * e;
            }
            sbar = sbar / T::from_usize_lossy(n);
            let shift = (T::one() + h * sbar).max(T::lit(1e-2));
            let precond = |x: &[T], z: &mut [T]| {
                for c in 0..3 {
                    let out = self.neumann.apply_inverse(&x[c * n..(c + 1) * n], shift, h * xi_mean);
                    z[c * n..(c + 1) * n].copy_from_slice(&out);
                }
            };
            let b: Vec<T> = flatten_mag(&r).iter().map(|&x| -x).collect();
            let mut dx = vec![T::zero(); 3 * n];
            let tol = self.linear_tol(opts, rn);
            let rep = gmres(apply, precond, &b, &mut dx, tol, opts.linear.max_iters, 60)
                .map_err(|source| StepError::Linear { block: "magnetization", source })?;
            stats.krylov += rep.iterations;
            let delta = unflatten_mag(&dx);
            // backtracking on the residual norm
            let mut t = T::one();
            loop {
                let mut trial = m.clone();
                trial.axpy(t, &delta);
                let rt = fz.mag_residual(v, &trial);
                let rtn = g.norm_mag(&rt);
                if rtn < rn || t < T::lit(1e-3) {
                    m = trial;
                    r = rt;
                    rn = rtn;
                    break;
                }
                t = t * T::lit(0.5);
            }
        }
    }

    // -----------------------------------------------------------------
    // Cahn-Hilliard pair
    // -----------------------------------------------------------------

    /// Newton on `(w, mu)` with `phi = tanh(w)`: every iterate stays strictly
    /// inside `(-1, 1)` and the entropy part of `psi0'` becomes linear in `w`.
    pub(crate) fn cahn_hilliard(
        &self,
        fz: &Frozen<T>,
        v: &FaceField<T>,
        m: &MagField<T>,
        phi_init: &ScalarField<T>,
        mu_init: &ScalarField<T>,
        opts: &StepOptions<T>,
    ) -> Result<(ScalarField<T>, ScalarField<T>, SolveStats), StepError> {
        let g = &self.grid;
        let n = g.n_cells();
        let h = fz.h;
        let p = &fz.params;
        let half = T::lit(0.5);
        let limit = T::one() - T::lit(EPS_SAT);
        let w_max = half * (limit.ln_1p() - (-limit).ln_1p());
        let weight = fz.h0_weight(m);
        let mut stats = SolveStats::default();
        let phi_of = |w: &[T]| ScalarField { values: w.iter().map(|&x| x.tanh().max(-limit).min(limit)).collect() };
        let mut w: Vec<T> = phi_init
            .values
            .iter()
            .map(|&f| {
                let x = f.max(-limit).min(limit);
                half * (x.ln_1p() - (-x).ln_1p())
            })
            .collect();
        let mut phi = phi_of(&w);
        let mut mu = mu_init.clone();
        let (mut r1, mut r2) = fz.ch_residual(v, &weight, &phi, &mu)?;
        let norm2 = |a: &ScalarField<T>, b: &ScalarField<T>| (g.dot_cells(a, a) + g.dot_cells(b, b)).sqrt();
        let mut rn = norm2(&r1, &r2);
        loop {
            if !rn.is_finite() {
                return Err(StepError::NonFinite("cahn-hilliard"));
            }
            if rn <= opts.newton_tol {
                return Ok((phi, mu, stats));
            }
            if stats.newton >= opts.newton_max {
                return Err(StepError::NewtonFailed { block: "cahn-hilliard", iterations: stats.newton, residual: rn.as_f64() });
            }
            stats.newton += 1;
            // d phi / d w and the phi-column of the potential row
            let sech2: Vec<T> = w.iter().map(|&x| T::one() / (x.cosh() * x.cosh())).collect();
            let mut q = vec![T::zero(); n];
            for k in 0..n {
                let f = phi.values[k];
                let smooth = half * p.kappa - p.h0_da(f, fz.phi_k.values[k]) * weight.values[k] - (p.kappa - p.b);
                q[k] = smooth * sech2[k] - p.a;
            }
            let apply = |x: &[T], y: &mut [T]| {
                let dphi = ScalarField { values: (0..n).map(|k| sech2[k] * x[2 * k]).collect() };
                let dmu = ScalarField { values: (0..n).map(|k| x[2 * k + 1]).collect() };
                let lphi = g.laplace(&dphi);
                let lmu = g.laplace(&dmu);
                for k in 0..n {
                    y[2 * k] = dphi.values[k] - h * lmu.values[k];
                    y[2 * k + 1] = q[k] * x[2 * k] + p.eta * lphi.values[k] + dmu.values[k];
                }
            };
            let b: Vec<T> = (0..2 * n).map(|k| if k % 2 == 0 { -r1.values[k / 2] } else { -r2.values[k / 2] }).collect();
            let tol = self.linear_tol(opts, rn);
            // a lagged factorization is reused while GMRES converges quickly with it
            let mut attempt = None;
            if let Some(f) = self.ch_cache.get() {
                let mut dx = vec![T::zero(); 2 * n];
                let precond = |x: &[T], z: &mut [T]| {
                    z.copy_from_slice(x);
                    f.solve(z);
                };
                if let Ok(rep) = gmres(&apply, precond, &b, &mut dx, tol, LAGGED_KRYLOV_MAX, LAGGED_KRYLOV_MAX) {
                    attempt = Some((rep, dx));
                }
            }
            let (rep, dx) = match attempt {
                Some(done) => done,
                None => {
                    let f = self.ch_factor(&q, &sech2, h, p.eta)?;
                    let mut dx = vec![T::zero(); 2 * n];
                    let precond = |x: &[T], z: &mut [T]| {
                        z.copy_from_slice(x);
                        f.solve(z);
                    };
                    let rep = gmres(&apply, precond, &b, &mut dx, tol, opts.linear.max_iters, 60)
                        .map_err(|source| StepError::Linear { block: "cahn-hilliard", source })?;
                    self.ch_cache.set(Arc::new(f));
                    (rep, dx)
                }
            };
            stats.krylov += rep.iterations;
            // backtracking on the residual norm
            let mut t = T::one();
            loop {
                let mut clamped = false;
                let trial_w: Vec<T> = (0..n)
                    .map(|k| {
                        let x = w[k] + t * dx[2 * k];
                        if x.abs() > w_max {
                            clamped = true;
                            w_max.copysign(x)
                        } else {
                            x
                        }
                    })
                    .collect();
                let trial_phi = phi_of(&trial_w);
                let trial_mu = ScalarField { values: (0..n).map(|k| mu.values[k] + t * dx[2 * k + 1]).collect() };
                let (a, b) = fz.ch_residual(v, &weight, &trial_phi, &trial_mu)?;
                let tn = norm2(&a, &b);
                if tn < rn || t < T::lit(1e-4) {
                    stats.saturated |= clamped;
                    w = trial_w;
                    phi = trial_phi;
                    mu = trial_mu;
                    r1 = a;
                    r2 = b;
                    rn = tn;
                    break;
                }
                t = t * half;
            }
        }
    }

    /// Banded LU of the Cahn-Hilliard Jacobian in `(w, mu)`,
    /// `[[S, -h L], [diag(q) + eta L S, I]]` with `S = diag(sech2)`, in
    /// interleaved ordering.
    fn ch_factor(&self, q: &[T], sech2: &[T], h: T, eta: T) -> Result<BandedLu<T>, StepError> {
        let g = &self.grid;
        let n = g.n_cells();
        let band = 2 * g.nx() + 1;
        let mut trip = Vec::with_capacity(12 * n);
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let k = g.cell(i, j);
                trip.push((2 * k, 2 * k, sech2[k]));
                trip.push((2 * k + 1, 2 * k + 1, T::one()));
                trip.push((2 * k + 1, 2 * k, q[k]));
                for (c, wt) in g.laplace_stencil(i, j) {
                    trip.push((2 * k, 2 * c + 1, -h * wt));
                    trip.push((2 * k + 1, 2 * c, eta * wt * sech2[c]));
                }
            }
        }
        BandedLu::factor(2 * n, band, band, trip).map_err(|source| StepError::Linear { block: "cahn-hilliard", source })
    }

    // -----------------------------------------------------------------
    // Momentum
    // -----------------------------------------------------------------

    fn vector_inverse(&self, f: &FaceField<T>, shift: T, scale: T) -> FaceField<T> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let mut ui = Vec::with_capacity((nx - 1) * ny);
        for j in 0..ny {
            for i in 1..nx {
                ui.push(f.u[g.uface(i, j)]);
            }
        }
        let mut vi = Vec::with_capacity(nx * (ny - 1));
        for j in 1..ny {
            for i in 0..nx {
                vi.push(f.v[g.vface(i, j)]);
            }
        }
        let ui = self.u_basis.solve_shifted(&ui, shift, scale);
        let vi = self.v_basis.solve_shifted(&vi, shift, scale);
        let mut out = FaceField::zeros(g);
        for j in 0..ny {
            for i in 1..nx {
                out.u[g.uface(i, j)] = ui[j * (nx - 1) + i - 1];
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                out.v[g.vface(i, j)] = vi[(j - 1) * nx + i];
            }
        }
        out
    }

    pub(crate) fn momentum(
        &self,
        fz: &Frozen<T>,
        m: &MagField<T>,
        phi: &ScalarField<T>,
        mu: &ScalarField<T>,
        v_adv: &FaceField<T>,
        opts: &StepOptions<T>,
        tol: T,
    ) -> Result<(FaceField<T>, ScalarField<T>, SolveStats), StepError> {
        let g = &self.grid;
        let nu_len = g.n_u();
        let h = fz.h;
        let mass_f = fz.mass_matrix(phi);
        let flux = fz.momentum_flux(v_adv, mu);
        let b = fz.momentum_rhs(m, mu);
        let pb = self.project(&b)?;
        let mbar = mass_f.u.iter().chain(&mass_f.v).copied().sum::<T>() / T::from_usize_lossy(nu_len + g.n_v());
        let nubar = g.mean(&fz.nu);
        // GMRES runs inside the divergence-free subspace: `b` and the initial
        // guess are projected and both maps below end with a projection
        let mut failure: Option<StepError> = None;
        let apply = |x: &[T], y: &mut [T]| {
            let ax = fz.momentum_operator(&mass_f, &flux, &unflatten_face(x, nu_len));
            match self.project(&ax) {
                Ok(pax) => y.copy_from_slice(&flatten_face(&pax)),
                Err(e) => {
                    failure.get_or_insert(e);
                    y.iter_mut().for_each(|v| *v = T::zero());
                }
            }
        };
        let precond = |x: &[T], z: &mut [T]| {
            let w = self.vector_inverse(&unflatten_face(x, nu_len), mbar, h * nubar);
            match self.project(&w) {
                Ok(pw) => z.copy_from_slice(&flatten_face(&pw)),
                Err(_) => z.copy_from_slice(x),
            }
        };
        let pb_flat = flatten_face(&pb);
        let mut x = flatten_face(&self.project(v_adv)?);
        let rep = gmres(apply, precond, &pb_flat, &mut x, tol, opts.linear.max_iters, 60);
        if let Some(e) = failure {
            return Err(e);
        }
        let rep = rep.map_err(|source| StepError::Linear { block: "momentum", source })?;
        let v = self.project(&unflatten_face(&x, nu_len))?;
        // pressure from the gradient part of the remaining residual
        let mut r = b.clone();
        r.axpy(-T::one(), &fz.momentum_operator(&mass_f, &flux, &v));
        r.zero_boundary_normal(g);
        let sol = self
            .neumann
            .solve_poisson(&g.div(&r), &self.projection_opts())
            .map_err(|source| StepError::Linear { block: "pressure", source })?;
        let mut p = sol.solution;
        p.scale(T::one() / h);
        Ok((v, p, SolveStats { newton: 1, krylov: rep.iterations, saturated: false }))
    }

    // -----------------------------------------------------------------
    // Coupled step
    // -----------------------------------------------------------------

    pub fn step(&self, state_k: &State<T>, params: &Params<T>, opts: &StepOptions<T>) -> Result<(State<T>, StepReport<T>), StepError> {
        opts.validate()?;
        if !state_k.is_finite() {
            return Err(StepError::NonFinite("input state"));
        }
        let fz = Frozen::new(state_k, params, opts.h, opts.splitting);
        let mut it = state_k.clone();
        let mut counts = NewtonCounts::default();
        let mut saturated = false;
        let mut history = Vec::new();
        let mut converged = None;
        let mut mom_tol = T::lit(1e-6).max(opts.linear.tol_rel);
        for sweep in 1..=opts.picard_max {
            let (m, sm) = self.magnetization(&fz, &it.v, &it.m, opts)?;
            let (phi, mu, sc) = self.cahn_hilliard(&fz, &it.v, &m, &it.phi, &it.mu, opts)?;
            let (v, p, sv) = self.momentum(&fz, &m, &phi, &mu, &it.v, opts, mom_tol)?;
            counts.magnetization += sm.newton;
            counts.cahn_hilliard += sc.newton;
            counts.momentum += sv.krylov;
            saturated |= sc.saturated;
            let next = State { grid: self.grid, v, p, m, phi, mu };
            let change = next.distance(&it) / next.norm().max(T::min_positive_value());
            history.push(change.as_f64());
            // early sweeps need only a loose momentum solve
            mom_tol = (T::lit(1e-2) * change).max(opts.linear.tol_rel).min(T::lit(1e-6));
            it = next;
            if !it.is_finite() {
                return Err(StepError::NonFinite("picard iterate"));
            }
            if change <= opts.picard_tol {
                converged = Some((sweep, change));
                break;
            }
        }
        let Some((picard_iters, picard_residual)) = converged else {
            let residual = history.last().copied().unwrap_or(f64::NAN);
            return Err(StepError::PicardFailed { iterations: opts.picard_max, residual, history });
        };
        let energy_before = total_energy(state_k, params);
        let energy_after = total_energy(&it, params);
        let diss = dissipation(&it, state_k, params, opts.splitting);
        let violation = (energy_after.total + opts.h * diss.total() - energy_before.total).max(T::zero());
        let report = StepReport {
            picard_iters,
            picard_residual,
            newton_iters: counts,
            energy_before,
            energy_after,
            dissipation: diss,
            energy_violation: violation,
            saturation_flag: saturated,
            mass_drift: (mass(&self.grid, &it.phi) - mass(&self.grid, &state_k.phi)).abs(),
            max_div: it.max_div(),
        };
        let tol = opts.energy_tolerance(energy_before.total);
        if opts.strict_energy && violation > tol {
            return Err(StepError::EnergyViolation { violation: violation.as_f64(), tolerance: tol.as_f64() });
        }
        Ok((it, report))
    }
}

/// Magnetization sub-solve with the velocity iterate `v_it`.
pub fn solve_magnetization<T: Real>(
    state_k: &State<T>,
    v_it: &FaceField<T>,
    params: &Params<T>,
    opts: &StepOptions<T>,
) -> Result<MagField<T>, StepError> {
    opts.validate()?;
    let fz = Frozen::new(state_k, params, opts.h, opts.splitting);
    Stepper::new(&state_k.grid).magnetization(&fz, v_it, &state_k.m, opts).map(|(m, _)| m)
}

/// Cahn-Hilliard sub-solve returning `(phi, mu)`.
pub fn solve_cahn_hilliard<T: Real>(
    state_k: &State<T>,
    v_it: &FaceField<T>,
    m_it: &MagField<T>,
    params: &Params<T>,
    opts: &StepOptions<T>,
) -> Result<(ScalarField<T>, ScalarField<T>), StepError> {
    opts.validate()?;
    let fz = Frozen::new(state_k, params, opts.h, opts.splitting);
    Stepper::new(&state_k.grid)
        .cahn_hilliard(&fz, v_it, m_it, &state_k.phi, &state_k.mu, opts)
        .map(|(phi, mu, _)| (phi, mu))
}

/// Momentum sub-solve returning the divergence-free velocity and zero-mean pressure.
pub fn solve_momentum<T: Real>(
    state_k: &State<T>,
    m_it: &MagField<T>,
    phi_it: &ScalarField<T>,
    mu_it: &ScalarField<T>,
    v_prev_it: &FaceField<T>,
    params: &Params<T>,
    opts: &StepOptions<T>,
) -> Result<(FaceField<T>, ScalarField<T>), StepError> {
    opts.validate()?;
    let fz = Frozen::new(state_k, params, opts.h, opts.splitting);
    Stepper::new(&state_k.grid).momentum(&fz, m_it, phi_it, mu_it, v_prev_it, opts, opts.linear.tol_rel).map(|(v, p, _)| (v, p))
}

/// One coupled time step.
pub fn step<T: Real>(state_k: &State<T>, params: &Params<T>, opts: &StepOptions<T>) -> Result<(State<T>, StepReport<T>), StepError> {
    Stepper::new(&state_k.grid).step(state_k, params, opts)
}

/// Receives every accepted step of [`run`].
pub trait StepSink<T> {
    fn record(&mut self, step: usize, time: T, state: &State<T>, report: &StepReport<T>) -> Result<(), String>;

    /// Called once when the run ends, successfully or not.
    fn finish(&mut self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<T> {
    pub state: State<T>,
    pub steps: usize,
    /// `max_n (E(t_n) + sum_{k<n} h D_k - E(0))`.
    pub ledger_excess: T,
    /// Sum of the per-step energy tolerances.
    pub ledger_tolerance: T,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("n_steps must be >= 1")]
    NoSteps,
    #[error("step {step} failed: {source}")]
    Step { step: usize, source: StepError },
}

pub fn run<T: Real>(
    initial: &State<T>,
    params: &Params<T>,
    opts: &StepOptions<T>,
    n_steps: usize,
    sinks: &mut [&mut dyn StepSink<T>],
) -> Result<RunSummary<T>, RunError> {
    if n_steps == 0 {
        return Err(RunError::NoSteps);
    }
    let stepper = Stepper::new(&initial.grid);
    let mut state = initial.clone();
    let e0 = total_energy(initial, params).total;
    let mut dissipated = T::zero();
    let mut excess = T::neg_infinity();
    let mut tolerance = T::zero();
    let mut outcome = Ok(());
    for k in 1..=n_steps {
        match stepper.step(&state, params, opts) {
            Ok((next, report)) => {
                dissipated = dissipated + opts.h * report.dissipation.total();
                tolerance = tolerance + opts.energy_tolerance(report.energy_before.total);
                excess = excess.max(report.energy_after.total + dissipated - e0);
                let time = opts.h * T::from_usize_lossy(k);
                for s in sinks.iter_mut() {
                    if let Err(e) = s.record(k, time, &next, &report) {
                        outcome = Err(RunError::Step { step: k, source: StepError::Sink(e) });
                    }
                }
                state = next;
                if outcome.is_err() {
                    break;
                }
            }
            Err(source) => {
                outcome = Err(RunError::Step { step: k, source });
                break;
            }
        }
    }
    for s in sinks.iter_mut() {
        if let Err(e) = s.finish() {
            if outcome.is_ok() {
                outcome = Err(RunError::Step { step: n_steps, source: StepError::Sink(e) });
            }
        }
    }
    outcome?;
    Ok(RunSummary { state, steps: n_steps, ledger_excess: excess, ledger_tolerance: tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::solve_elliptic_vc;
    use crate::scenario::{build_initial_state, Scenario};

    fn setup(n: usize, params: &Params<f64>, sc: Scenario<f64>) -> State<f64> {
        let g = Grid::new(n, n, 1.0, 1.0).unwrap();
        build_initial_state(&g, params, &sc).unwrap()
    }

    fn uniform(c: f64) -> Scenario<f64> {
        Scenario::UniformEquilibrium { c, m: [0.6, 0.0, 0.8] }
    }

    fn random(seed: u64) -> Scenario<f64> {
        Scenario::RandomPerturbation { seed, c: 0.1, amplitude: 0.1, modes: 3 }
    }

    #[test]
    fn options_are_validated() {
        let s = setup(4, &Params::default(), uniform(0.2));
        for bad in [
            StepOptions { h: 0.0, ..StepOptions::default() },
            StepOptions { picard_tol: -1.0, ..StepOptions::default() },
            StepOptions { newton_max: 0, ..StepOptions::default() },
        ] {
            assert!(matches!(step(&s, &Params::default(), &bad), Err(StepError::InvalidOptions(_))));
        }
    }

    #[test]
    fn uniform_state_is_fixed_by_every_block() {
        let p = Params::default();
        let s = setup(8, &p, uniform(0.3));
        let opts = StepOptions::default();
        let m = solve_magnetization(&s, &FaceField::zeros(&s.grid), &p, &opts).unwrap();
        assert!(m.comps.iter().zip(&s.m.comps).all(|(a, b)| a == b));
        let (phi, mu) = solve_cahn_hilliard(&s, &FaceField::zeros(&s.grid), &s.m, &p, &opts).unwrap();
        let want = p.psi0_prime(0.3).unwrap().value - p.kappa * 0.3;
        assert!(phi.values.iter().all(|&f| (f - 0.3).abs() < 1e-14));
        assert!(mu.values.iter().all(|&x| (x - want).abs() < 1e-12));
        assert!((want - p.psi_prime(0.3).unwrap().value).abs() < 1e-15);
        let (v, pr) = solve_momentum(&s, &s.m, &s.phi, &s.mu, &s.v, &p, &opts).unwrap();
        assert_eq!(v.max_abs(), 0.0);
        assert!(pr.max_abs() < 1e-12);
    }

    #[test]
    fn zero_forcing_gives_rest() {
        let p = Params::default();
        let s = setup(6, &p, uniform(-0.4));
        let (v, pr) = solve_momentum(&s, &s.m, &s.phi, &s.mu, &FaceField::zeros(&s.grid), &p, &StepOptions::default()).unwrap();
        assert_eq!(v.max_abs(), 0.0);
        assert!(pr.max_abs() < 1e-12);
    }

    #[test]
    fn large_alpha_reduces_to_diffusion() {
        let p = Params { alpha: 1e6, ..Params::default() };
        let s = setup(16, &p, random(3));
        let opts = StepOptions { h: 1e-2, ..StepOptions::default() };
        let m = solve_magnetization(&s, &FaceField::zeros(&s.grid), &p, &opts).unwrap();
        let xi = s.phi.map(|f| p.xi(f));
        let lin = SolverOptions { tol_rel: 1e-13, ..SolverOptions::default() };
        for c in 0..3 {
            let mut rhs = s.m.comps[c].clone();
            rhs.scale(1.0 / opts.h);
            let want = solve_elliptic_vc(&s.grid, &xi, 1.0 / opts.h, &rhs, &lin).unwrap();
            let err = m.comps[c].values.iter().zip(&want.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "component {c}: {err:e}");
        }
    }

    #[test]
    fn cahn_hilliard_conserves_mass() {
        let p = Params::default();
        for seed in 0..4 {
            let s = setup(12, &p, random(seed));
            let other = setup(12, &p, random(seed + 100));
            let opts = StepOptions { h: 5e-3, ..StepOptions::default() };
            let (phi, _) = solve_cahn_hilliard(&s, &other.v, &other.m, &p, &opts).unwrap();
            let before = mass(&s.grid, &s.phi);
            let after = mass(&s.grid, &phi);
            assert!((after - before).abs() <= 1e-10 * before.abs().max(s.grid.volume()), "seed {seed}");
            assert!(phi.max_abs() <= 1.0 - EPS_SAT);
        }
    }

    #[test]
    fn matched_densities_drop_the_relative_flux() {
        let p = Params { rho1: 1.5, rho2: 1.5, ..Params::default() };
        let s = setup(8, &p, random(5));
        let fz = Frozen::new(&s, &p, 1e-2, Splitting::Convex);
        assert_eq!(fz.j_coef, 0.0);
        let flux = fz.momentum_flux(&s.v, &s.mu);
        let mut want = s.v.clone();
        want.scale(1.5);
        assert!(flux.u.iter().zip(&want.u).chain(flux.v.iter().zip(&want.v)).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn random_step_satisfies_energy_law() {
        let p = Params::default();
        for seed in [1, 2] {
            let s0 = setup(16, &p, random(seed));
            let opts = StepOptions { h: 1e-2, ..StepOptions::default() };
            let (s1, rep) = step(&s0, &p, &opts).unwrap();
            assert!(rep.energy_violation <= opts.energy_tolerance(rep.energy_before.total), "{rep:?}");
            assert!(rep.energy_after.total < rep.energy_before.total);
            assert!(rep.mass_drift <= 1e-10 * s0.grid.volume());
            assert!(s1.max_div() <= 1e-10 && rep.max_div == s1.max_div());
            assert!(rep.picard_residual <= opts.picard_tol);
            // the converged state solves the coupled system
            let r = coupled_residual(&s0, &s1, &p, opts.h, opts.splitting).unwrap();
            assert!(r.norm(&s0.grid) < 1e-8, "residual {:e}", r.norm(&s0.grid));
        }
    }

    #[test]
    fn naive_splitting_breaks_the_energy_law() {
        let p = Params::default();
        let sc = Scenario::MagneticStripes { width: 0.05, heavy_on_top: true, bands: 2, m_amp: 0.1 };
        let s0 = setup(16, &p, sc);
        let convex = StepOptions { h: 0.1, ..StepOptions::default() };
        let (_, rc) = step(&s0, &p, &convex).unwrap();
        assert!(rc.energy_violation <= convex.energy_tolerance(rc.energy_before.total));
        let naive = StepOptions { splitting: Splitting::Naive, ..convex };
        match step(&s0, &p, &naive) {
            Ok((_, rn)) => assert!(rn.energy_violation > 1e-3 * rn.energy_before.total, "{rn:?}"),
            Err(e) => assert!(matches!(e, StepError::NewtonFailed { .. } | StepError::Linear { .. }), "{e}"),
        }
        let strict = StepOptions { strict_energy: true, ..naive };
        assert!(step(&s0, &p, &strict).is_err());
    }

    #[derive(Default)]
    struct Collect {
        h: f64,
        reports: Vec<StepReport<f64>>,
        finished: bool,
    }

    impl StepSink<f64> for Collect {
        fn record(&mut self, step: usize, time: f64, _: &State<f64>, report: &StepReport<f64>) -> Result<(), String> {
            assert_eq!(step, self.reports.len() + 1);
            assert!((time - step as f64 * self.h).abs() < 1e-15);
            self.reports.push(report.clone());
            Ok(())
        }

        fn finish(&mut self) -> Result<(), String> {
            self.finished = true;
            Ok(())
        }
    }

    #[test]
    fn run_rejects_zero_steps() {
        let p = Params::default();
        let s = setup(4, &p, uniform(0.0));
        assert!(matches!(run(&s, &p, &StepOptions::default(), 0, &mut []), Err(RunError::NoSteps)));
    }

    #[test]
    fn uniform_run_is_stationary() {
        let p = Params::default();
        let s = setup(8, &p, uniform(0.3));
        let mut sink = Collect { h: 1e-3, ..Collect::default() };
        let out = run(&s, &p, &StepOptions::default(), 10, &mut [&mut sink]).unwrap();
        assert!(sink.finished);
        assert_eq!(sink.reports.len(), 10);
        for r in &sink.reports {
            assert!(r.energy_violation <= 1e-14 * r.energy_before.total.abs());
            assert!(r.mass_drift <= 1e-14);
        }
        assert!(out.state.distance(&s) <= 1e-10 * s.norm());
        assert!(out.ledger_excess <= out.ledger_tolerance);
    }

    #[test]
    fn runs_are_deterministic() {
        let p = Params::default();
        let s = setup(10, &p, random(9));
        let opts = StepOptions { h: 5e-3, ..StepOptions::default() };
        let mut a = Collect { h: opts.h, ..Collect::default() };
        let mut b = Collect { h: opts.h, ..Collect::default() };
        let ra = run(&s, &p, &opts, 3, &mut [&mut a]).unwrap();
        let rb = run(&s, &p, &opts, 3, &mut [&mut b]).unwrap();
        assert!(a.reports.iter().zip(&b.reports).all(|(x, y)| format!("{x:?}") == format!("{y:?}")));
        assert_eq!(ra.state, rb.state);
    }
}
