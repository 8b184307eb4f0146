//! Independent checks of the production path: a brute-force monolithic Newton
//! solve of one step, the splitting-inequality sweep, and operator suites
//! (summation by parts, manufactured solutions, projection idempotency).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{FaceField, Grid, ScalarField, Strain};
use crate::linsolve::{lu_solve, solve_elliptic_vc, NeumannSolver, Preconditioner, SolverOptions};
use crate::materials::{lemma41_gap, Params};
use crate::real::Real;
use crate::state::{Splitting, State};
use crate::stepper::{Frozen, StepError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions<T> {
    /// Target for the discrete L2 norm of the coupled residual.
    pub tol: T,
    pub max_iters: usize,
    /// Relative central-difference step for the Jacobian.
    pub fd_step: T,
    pub splitting: Splitting,
}

impl<T: Real> Default for OracleOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-11), max_iters: 40, fd_step: T::lit(1e-6), splitting: Splitting::Convex }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub converged: bool,
    pub state: State<T>,
    pub residual: T,
    pub newton_iters: usize,
}

/// Largest grid the dense oracle accepts (cells per axis).
pub const ORACLE_MAX_CELLS: usize = 8;

/// Flat layout of every unknown: interior u faces, interior v faces, p, M, phi, mu.
struct Layout<T> {
    grid: Grid<T>,
    us: Vec<usize>,
    vs: Vec<usize>,
}

impl<T: Real> Layout<T> {
    fn new(g: &Grid<T>) -> Self {
        let mut us = Vec::new();
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                us.push(g.uface(i, j));
            }
        }
        let mut vs = Vec::new();
        for j in 1..g.ny() {
            for i in 0..g.nx() {
                vs.push(g.vface(i, j));
            }
        }
        Layout { grid: *g, us, vs }
    }

    fn len(&self) -> usize {
        self.us.len() + self.vs.len() + 6 * self.grid.n_cells()
    }

    fn pack(&self, s: &State<T>) -> Vec<T> {
        let mut x: Vec<T> = self.us.iter().map(|&f| s.v.u[f]).collect();
        x.extend(self.vs.iter().map(|&f| s.v.v[f]));
        x.extend(&s.p.values);
        for c in 0..3 {
            x.extend(&s.m.comps[c].values);
        }
        x.extend(&s.phi.values);
        x.extend(&s.mu.values);
        x
    }

    fn unpack(&self, x: &[T]) -> State<T> {
        let g = &self.grid;
        let n = g.n_cells();
        let mut s = State::zeros(g);
        let mut at = 0;
        for &f in &self.us {
            s.v.u[f] = x[at];
            at += 1;
        }
        for &f in &self.vs {
            s.v.v[f] = x[at];
            at += 1;
        }
        let mut take = |dst: &mut Vec<T>| {
            dst.copy_from_slice(&x[at..at + n]);
            at += n;
        };
        take(&mut s.p.values);
        for c in 0..3 {
            take(&mut s.m.comps[c].values);
        }
        take(&mut s.phi.values);
        take(&mut s.mu.values);
        s
    }

    /// Residual vector with the first divergence row replaced by the pressure gauge.
    fn residual(&self, fz: &Frozen<T>, x: &[T]) -> Result<Vec<T>, StepError> {
        let s = self.unpack(x);
        let r = fz.coupled(&s)?;
        let mut out: Vec<T> = self.us.iter().map(|&f| r.momentum.u[f]).collect();
        out.extend(self.vs.iter().map(|&f| r.momentum.v[f]));
        let gauge_at = out.len();
        out.extend(&r.divergence.values);
        out[gauge_at] = s.p.values.iter().copied().sum();
        for c in 0..3 {
            out.extend(&r.magnetization.comps[c].values);
        }
        out.extend(&r.phase.values);
        out.extend(&r.potential.values);
        Ok(out)
    }

    fn norm(&self, r: &[T]) -> T {
        (r.iter().map(|&v| v * v).sum::<T>() * self.grid.cell_volume()).sqrt()
    }
}

/// Solves one coupled step with damped Newton on all unknowns at once, using a
/// dense central-difference Jacobian. Starts from `state_k`.
pub fn monolithic_step_oracle<T: Real>(
    state_k: &State<T>,
    params: &Params<T>,
    h: T,
    opts: &OracleOptions<T>,
) -> Result<OracleResult<T>, StepError> {
    let g = state_k.grid;
    if g.nx() > ORACLE_MAX_CELLS || g.ny() > ORACLE_MAX_CELLS {
        return Err(StepError::InvalidOptions("oracle grid must be at most 8x8"));
    }
    let fz = Frozen::new(state_k, params, h, opts.splitting);
    let lay = Layout::new(&g);
    let n = lay.len();
    let mut x = lay.pack(state_k);
    let mut r = lay.residual(&fz, &x)?;
    let mut rn = lay.norm(&r);
    let mut iters = 0;
    while rn > opts.tol && iters < opts.max_iters {
        iters += 1;
        let mut jac = vec![T::zero(); n * n];
        for c in 0..n {
            let e = opts.fd_step * x[c].abs().max(T::one());
            let mut xp = x.clone();
            xp[c] = x[c] + e;
            let mut xm = x.clone();
            xm[c] = x[c] - e;
            let rp = lay.residual(&fz, &xp)?;
            let rm = lay.residual(&fz, &xm)?;
            let inv = T::one() / (e + e);
            for row in 0..n {
                jac[row * n + c] = (rp[row] - rm[row]) * inv;
            }
        }
        let mut dx: Vec<T> = r.iter().map(|&v| -v).collect();
        lu_solve(&mut jac, &mut dx).map_err(|source| StepError::Linear { block: "oracle", source })?;
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<T> = x.iter().zip(&dx).map(|(&a, &d)| a + t * d).collect();
            if let Ok(rt) = lay.residual(&fz, &trial) {
                let tn = lay.norm(&rt);
                if tn < rn {
                    x = trial;
                    r = rt;
                    rn = tn;
                    accepted = true;
                    break;
                }
            }
            t = t * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    Ok(OracleResult { converged: rn <= opts.tol, state: lay.unpack(&x), residual: rn, newton_iters: iters })
}

/// Discrete L2 distance over every unknown including the pressure.
pub fn full_distance<T: Real>(a: &State<T>, b: &State<T>) -> T {
    let g = &a.grid;
    let mut dp = a.p.clone();
    dp.axpy(-T::one(), &b.p);
    let d = a.distance(b);
    (d * d + g.dot_cells(&dp, &dp)).sqrt()
}

/// Smallest splitting-inequality gap over `n` seeded pairs in `[-range, range]^3`.
pub fn lemma41_sweep(n: usize, range: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let mut v = [0.0; 3];
        for x in v.iter_mut() {
            *x = range * (2.0 * rng.gen::<f64>() - 1.0);
        }
        v
    };
    let mut worst = f64::INFINITY;
    for _ in 0..n {
        let a = draw();
        let b = draw();
        worst = worst.min(lemma41_gap(a, b));
    }
    worst
}

/// A named measured quantity and the bound it must respect.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `true` if `value >= bound` is required, otherwise `value <= bound`.
    pub at_least: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound, at_least: false }
    }

    fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound, at_least: true }
    }

    pub fn passed(&self) -> bool {
        if self.at_least {
            self.value >= self.bound
        } else {
            self.value <= self.bound
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }

    pub fn worst(&self, prefix: &str) -> Option<&Check> {
        let rank = |c: &&Check| if c.at_least { -c.value } else { c.value };
        self.checks.iter().filter(|c| c.name.starts_with(prefix)).max_by(|a, b| rank(a).total_cmp(&rank(b)))
    }
}

fn random_cells(g: &Grid<f64>, rng: &mut ChaCha8Rng) -> ScalarField<f64> {
    ScalarField { values: (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect() }
}

fn random_faces(g: &Grid<f64>, rng: &mut ChaCha8Rng) -> FaceField<f64> {
    let mut f = FaceField { u: (0..g.n_u()).map(|_| rng.gen_range(-1.0..1.0)).collect(), v: (0..g.n_v()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    f.zero_boundary_normal(g);
    f
}

fn relative(defect: f64, scale: f64) -> f64 {
    defect.abs() / scale.max(f64::MIN_POSITIVE)
}

/// Summation-by-parts identities of the grid operators on random data, as
/// defects relative to the size of the paired terms.
pub fn sbp_suite(sizes: &[(usize, usize)], seed: u64) -> SuiteReport {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::default();
    for &(nx, ny) in sizes {
        let g = Grid::new(nx, ny, 1.0, 1.5).expect("valid grid");
        let tag = format!("{nx}x{ny}");
        let s = random_cells(&g, &mut rng);
        let t = random_cells(&g, &mut rng);
        let f = random_faces(&g, &mut rng);
        let w = random_faces(&g, &mut rng);

        let gs = g.grad(&s);
        let a = g.dot_faces(&gs, &f);
        let b = g.dot_cells(&s, &g.div(&f));
        report.checks.push(Check::at_most(format!("sbp grad/div {tag}"), relative(a + b, a.abs() + b.abs()), TOL));

        let a = g.dot_cells(&g.laplace(&s), &t);
        let b = g.dot_cells(&s, &g.laplace(&t));
        report.checks.push(Check::at_most(format!("sbp laplace symmetry {tag}"), relative(a - b, a.abs() + b.abs()), TOL));

        let a = g.dot_cells(&g.advect_scalar(&w, &s), &t);
        let b = g.dot_faces(&g.advect_scalar_velocity_adjoint(&s, &t), &w);
        report.checks.push(Check::at_most(format!("sbp conservative advection {tag}"), relative(a - b, a.abs() + b.abs()), TOL));

        let a = g.dot_cells(&g.advect_advective(&w, &s), &t);
        let b = g.dot_faces(&g.advect_advective_velocity_adjoint(&s, &t), &w);
        report.checks.push(Check::at_most(format!("sbp advective form {tag}"), relative(a - b, a.abs() + b.abs()), TOL));

        let tau = Strain {
            exx: (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            eyy: (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            exy: (0..g.n_corners()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let a = g.dot_strain(&g.strain(&w), &tau);
        let b = g.dot_faces(&w, &g.strain_adjoint(&tau));
        report.checks.push(Check::at_most(format!("sbp strain {tag}"), relative(a - b, a.abs() + b.abs()), TOL));

        let tr = g.transport_skew(&f, &w);
        let a = g.dot_faces(&tr, &w);
        let scale = g.norm_faces(&tr) * g.norm_faces(&w);
        report.checks.push(Check::at_most(format!("sbp transport skew {tag}"), relative(a, scale), TOL));
    }
    report
}

fn order(errors: &[f64]) -> f64 {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
}

fn l2_error(g: &Grid<f64>, a: &ScalarField<f64>, b: &ScalarField<f64>) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    g.norm_cells(&d)
}

/// Manufactured-solution convergence of the Laplacian, the Neumann Poisson
/// solve and the variable-coefficient solve on 8, 16 and 32 cells per axis,
/// exactness on constants, and Leray projection idempotency.
pub fn manufactured_elliptic_suite() -> SuiteReport {
    let (lx, ly) = (1.0, 1.5);
    let pi = std::f64::consts::PI;
    let (kx, ky) = (pi / lx, pi / ly);
    let exact = |x: f64, y: f64| (kx * x).cos() * (ky * y).cos();
    let lap_exact = |x: f64, y: f64| -(kx * kx + ky * ky) * exact(x, y);
    let coeff = |x: f64, y: f64| 2.0 + x * y;
    // s - div(c grad s) with grad c = (y, x)
    let vc_rhs = |x: f64, y: f64| {
        let sx = -kx * (kx * x).sin() * (ky * y).cos();
        let sy = -ky * (kx * x).cos() * (ky * y).sin();
        exact(x, y) - (coeff(x, y) * lap_exact(x, y) + y * sx + x * sy)
    };
    let opts = SolverOptions { tol_rel: 1e-13, max_iters: 5000, preconditioner: Preconditioner::Spectral };
    let mut lap = Vec::new();
    let mut poisson = Vec::new();
    let mut vc = Vec::new();
    let mut report = SuiteReport::default();
    for n in [8, 16, 32] {
        let g = Grid::new(n, n, lx, ly).expect("valid grid");
        let s = ScalarField::from_fn(&g, exact);
        lap.push(l2_error(&g, &g.laplace(&s), &ScalarField::from_fn(&g, lap_exact)));

        let solver = NeumannSolver::new(&g);
        let mut want = s.clone();
        want.add_constant(-g.mean(&s));
        let sol = solver.solve_poisson(&ScalarField::from_fn(&g, lap_exact), &opts).expect("poisson solve");
        poisson.push(l2_error(&g, &sol.solution, &want));

        let c = ScalarField::from_fn(&g, coeff);
        let got = solve_elliptic_vc(&g, &c, 1.0, &ScalarField::from_fn(&g, vc_rhs), &opts).expect("elliptic solve");
        vc.push(l2_error(&g, &got, &s));

        let k = ScalarField::constant(&g, 0.7);
        report.checks.push(Check::at_most(format!("constant laplace {n}"), g.laplace(&k).max_abs(), 1e-14));
        let got = solve_elliptic_vc(&g, &c, 1.0, &k, &opts).expect("elliptic solve");
        let mut d = got;
        d.add_constant(-0.7);
        report.checks.push(Check::at_most(format!("constant elliptic {n}"), d.max_abs(), 1e-12));

        report.checks.push(Check::at_most(format!("leray idempotency {n}"), leray_idempotency_defect(&g, n as u64), 1e-9));
    }
    report.checks.push(Check::at_least("order laplace", order(&lap), 1.9));
    report.checks.push(Check::at_least("order poisson", order(&poisson), 1.9));
    report.checks.push(Check::at_least("order variable coefficient", order(&vc), 1.9));
    report
}

/// `max |P(P f) - P f|` for a seeded random face field.
pub fn leray_idempotency_defect(g: &Grid<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_faces(g, &mut rng);
    let opts = SolverOptions { tol_rel: 1e-13, max_iters: 2000, preconditioner: Preconditioner::Spectral };
    let solver = NeumannSolver::new(g);
    let (p1, _) = solver.leray_project(&f, &opts).expect("projection");
    let (mut p2, _) = solver.leray_project(&p1, &opts).expect("projection");
    p2.axpy(-1.0, &p1);
    p2.max_abs()
}
