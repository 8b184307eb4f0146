//! Initial conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{FaceField, Grid, MagField, ScalarField};
use crate::linsolve::{NeumannSolver, SolveError, SolverOptions};
use crate::materials::{Params, EPS_SAT};
use crate::real::Real;
use crate::state::{mag_gradient_density, penalty_density, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario<T> {
    /// Constant `phi = c`, uniform unit `M`, fluid at rest.
    UniformEquilibrium { c: T, m: [T; 3] },
    /// Horizontal `tanh` interface at mid-height.
    Stratified { width: T, heavy_on_top: bool },
    /// Stratified phases with `M = m_amp (cos kx, sin kx, 0)`, `k = pi bands / lx`,
    /// so the in-plane direction reverses across each of the vertical bands.
    MagneticStripes { width: T, heavy_on_top: bool, bands: usize, m_amp: T },
    /// Seeded smooth cosine perturbations of a uniform state.
    RandomPerturbation { seed: u64, c: T, amplitude: T, modes: usize },
}

impl<T: Real> Scenario<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::UniformEquilibrium { .. } => "uniform_equilibrium",
            Scenario::Stratified { .. } => "stratified",
            Scenario::MagneticStripes { .. } => "magnetic_stripes",
            Scenario::RandomPerturbation { .. } => "random_perturbation",
        }
    }
}

/// `tanh` profile across `y = ly / 2` between the two bulk equilibrium values;
/// positive (heavy when `rho2 > rho1`) on top if asked.
fn stratified_phi<T: Real>(grid: &Grid<T>, params: &Params<T>, width: T, heavy_on_top: bool) -> ScalarField<T> {
    let mid = T::lit(0.5) * grid.ly();
    let amp = params.binodal().unwrap_or_else(|| T::lit(0.9));
    let sign = if heavy_on_top { amp } else { -amp };
    let w = width * T::SQRT_2();
    ScalarField::from_fn(grid, |_, y| sign * ((y - mid) / w).tanh())
}

/// `mu = psi'(phi) - eta laplace(phi) + xi'(phi) (|grad M|^2/2 + (|M|^2-1)^2/(4 alpha^2))`.
pub fn consistent_mu<T: Real>(grid: &Grid<T>, phi: &ScalarField<T>, m: &MagField<T>, params: &Params<T>) -> ScalarField<T> {
    let lphi = grid.laplace(phi);
    let gm = mag_gradient_density(grid, m);
    let pen = penalty_density(m);
    let i4a2 = T::one() / (T::lit(4.0) * params.alpha * params.alpha);
    let half = T::lit(0.5);
    ScalarField {
        values: (0..grid.n_cells())
            .map(|k| {
                let f = phi.values[k];
                let dpsi = params.psi_prime(f).map(|c| c.value).unwrap_or_else(|_| T::nan());
                dpsi - params.eta * lphi.values[k] + params.xi_prime(f) * (half * gm.values[k] + i4a2 * pen.values[k])
            })
            .collect(),
    }
}

fn clamp_phi<T: Real>(phi: &mut ScalarField<T>) {
    let limit = T::one() - T::lit(EPS_SAT);
    for x in phi.values.iter_mut() {
        *x = x.max(-limit).min(limit);
    }
}

/// Builds the initial state. `v` is projected onto discretely divergence-free
/// no-slip fields and `phi` is clamped into `|phi| <= 1 - EPS_SAT`.
pub fn build_initial_state<T: Real>(grid: &Grid<T>, params: &Params<T>, scenario: &Scenario<T>) -> Result<State<T>, SolveError> {
    let mut s = State::zeros(grid);
    let (lx, ly) = (grid.lx(), grid.ly());
    let pi = T::PI();
    match *scenario {
        Scenario::UniformEquilibrium { c, m } => {
            s.phi = ScalarField::constant(grid, c);
            s.m = MagField::uniform(grid, m);
        }
        Scenario::Stratified { width, heavy_on_top } => {
            s.phi = stratified_phi(grid, params, width, heavy_on_top);
            s.m = MagField::uniform(grid, [T::one(), T::zero(), T::zero()]);
        }
        Scenario::MagneticStripes { width, heavy_on_top, bands, m_amp } => {
            s.phi = stratified_phi(grid, params, width, heavy_on_top);
            let k = pi * T::from_usize_lossy(bands) / lx;
            s.m.comps[0] = ScalarField::from_fn(grid, |x, _| m_amp * (k * x).cos());
            s.m.comps[1] = ScalarField::from_fn(grid, |x, _| m_amp * (k * x).sin());
        }
        Scenario::RandomPerturbation { seed, c, amplitude, modes } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let field = |rng: &mut ChaCha8Rng| {
                let mut coef = Vec::with_capacity(modes * modes);
                for _ in 0..modes * modes {
                    coef.push(T::lit(rng.gen_range(-1.0..1.0)));
                }
                let norm = T::from_usize_lossy(modes * modes).sqrt();
                ScalarField::from_fn(grid, |x, y| {
                    let mut acc = T::zero();
                    for a in 0..modes {
                        for b in 0..modes {
                            let w = coef[a * modes + b];
                            acc = acc
                                + w * (pi * T::from_usize_lossy(a + 1) * x / lx).cos() * (pi * T::from_usize_lossy(b) * y / ly).cos();
                        }
                    }
                    acc / norm
                })
            };
            let mut phi = field(&mut rng);
            phi.scale(amplitude);
            phi.add_constant(c);
            s.phi = phi;
            s.m = MagField::uniform(grid, [T::one(), T::zero(), T::zero()]);
            for comp in 0..3 {
                let mut d = field(&mut rng);
                d.scale(amplitude);
                s.m.comps[comp].axpy(T::one(), &d);
            }
            // a stream function vanishing on the walls gives a smooth no-slip flow
            let mut psi = field(&mut rng);
            for (k, x) in psi.values.iter_mut().enumerate() {
                let (i, j) = (k % grid.nx(), k / grid.nx());
                let bx = (pi * grid.xc(i) / lx).sin();
                let by = (pi * grid.yc(j) / ly).sin();
                *x = *x * amplitude * bx * bx * by * by;
            }
            let mut v = FaceField::zeros(grid);
            let (nx, ny) = (grid.nx(), grid.ny());
            let corner = |i: usize, j: usize| -> T {
                // stream function at corners by averaging, zero on the boundary
                if i == 0 || j == 0 || i == nx || j == ny {
                    return T::zero();
                }
                let c = |a: usize, b: usize| psi.values[grid.cell(a, b)];
                T::lit(0.25) * (c(i - 1, j - 1) + c(i, j - 1) + c(i - 1, j) + c(i, j))
            };
            for j in 0..ny {
                for i in 0..=nx {
                    v.u[grid.uface(i, j)] = (corner(i, j + 1) - corner(i, j)) / grid.dy();
                }
            }
            for j in 0..=ny {
                for i in 0..nx {
                    v.v[grid.vface(i, j)] = -(corner(i + 1, j) - corner(i, j)) / grid.dx();
                }
            }
            s.v = v;
        }
    }
    clamp_phi(&mut s.phi);
    let opts = SolverOptions::projection();
    let (v, _) = NeumannSolver::new(grid).leray_project(&s.v, &opts)?;
    s.v = v;
    s.mu = consistent_mu(grid, &s.phi, &s.m, params);
    Ok(s)
}
