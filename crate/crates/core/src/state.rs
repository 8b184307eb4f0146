//! Unknowns at one time level, the total energy and the per-step dissipation.

use crate::grid::{dot3, FaceField, Grid, MagField, ScalarField};
use crate::materials::{cubic_split, Params};
use crate::real::Real;

/// Treatment of the linear part of the penalty derivative `|M|^2 M - M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Splitting {
    /// `|M|^2 M - M_old`: the linear part lagged, unconditionally stable.
    #[default]
    Convex,
    /// `|M|^2 M - M`: fully implicit.
    Naive,
}

impl Splitting {
    pub fn cubic<T: Real>(self, m: [T; 3], m_old: [T; 3]) -> [T; 3] {
        match self {
            Splitting::Convex => cubic_split(m, m_old),
            Splitting::Naive => cubic_split(m, m),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Splitting::Convex => "convex",
            Splitting::Naive => "naive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub grid: Grid<T>,
    pub v: FaceField<T>,
    /// Pressure in the zero-mean gauge.
    pub p: ScalarField<T>,
    pub m: MagField<T>,
    pub phi: ScalarField<T>,
    pub mu: ScalarField<T>,
}

impl<T: Real> State<T> {
    /// Everything zero.
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self {
            grid: *grid,
            v: FaceField::zeros(grid),
            p: ScalarField::zeros(grid),
            m: MagField::zeros(grid),
            phi: ScalarField::zeros(grid),
            mu: ScalarField::zeros(grid),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.p.is_finite() && self.m.is_finite() && self.phi.is_finite() && self.mu.is_finite()
    }

    pub fn max_div(&self) -> T {
        self.grid.div(&self.v).max_abs()
    }

    /// Cell densities `rho(phi)`.
    pub fn rho(&self, params: &Params<T>) -> ScalarField<T> {
        self.phi.map(|p| params.rho(p))
    }

    /// Discrete L2 norm of the difference over all unknowns except pressure.
    pub fn distance(&self, other: &Self) -> T {
        let g = &self.grid;
        let mut dv = self.v.clone();
        dv.axpy(-T::one(), &other.v);
        let mut dm = self.m.clone();
        dm.axpy(-T::one(), &other.m);
        let mut dphi = self.phi.clone();
        dphi.axpy(-T::one(), &other.phi);
        let mut dmu = self.mu.clone();
        dmu.axpy(-T::one(), &other.mu);
        (g.dot_faces(&dv, &dv) + g.dot_mag(&dm, &dm) + g.dot_cells(&dphi, &dphi) + g.dot_cells(&dmu, &dmu)).sqrt()
    }

    /// Discrete L2 norm over the same unknowns as [`State::distance`].
    pub fn norm(&self) -> T {
        let g = &self.grid;
        (g.dot_faces(&self.v, &self.v) + g.dot_mag(&self.m, &self.m) + g.dot_cells(&self.phi, &self.phi) + g.dot_cells(&self.mu, &self.mu)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub kinetic: T,
    pub exchange: T,
    pub penalty: T,
    pub interface: T,
    pub mixing: T,
    pub total: T,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn to_f64(&self) -> EnergyBreakdown<f64> {
        EnergyBreakdown {
            kinetic: self.kinetic.as_f64(),
            exchange: self.exchange.as_f64(),
            penalty: self.penalty.as_f64(),
            interface: self.interface.as_f64(),
            mixing: self.mixing.as_f64(),
            total: self.total.as_f64(),
        }
    }
}

/// The three dissipation integrals of one step (without the factor `h`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dissipation<T> {
    pub viscous: T,
    pub chemical: T,
    pub magnetic: T,
}

impl<T: Real> Dissipation<T> {
    pub fn total(&self) -> T {
        self.viscous + self.chemical + self.magnetic
    }
}

/// Newton (or Krylov, for the momentum block) iteration counts summed over a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NewtonCounts {
    pub magnetization: usize,
    pub cahn_hilliard: usize,
    pub momentum: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    pub picard_iters: usize,
    pub picard_residual: T,
    pub newton_iters: NewtonCounts,
    pub energy_before: EnergyBreakdown<T>,
    pub energy_after: EnergyBreakdown<T>,
    pub dissipation: Dissipation<T>,
    /// `max(0, E_after + h * dissipation - E_before)`.
    pub energy_violation: T,
    /// Set when a Newton iterate had to be pulled back inside `|phi| < 1`.
    pub saturation_flag: bool,
    pub mass_drift: T,
    pub max_div: T,
}

/// Cell-volume weighted sum.
pub fn mass<T: Real>(grid: &Grid<T>, phi: &ScalarField<T>) -> T {
    grid.integrate(phi)
}

/// Cell density `sum_k |grad M_k|^2` (face gradients averaged to the center).
pub(crate) fn mag_gradient_density<T: Real>(grid: &Grid<T>, m: &MagField<T>) -> ScalarField<T> {
    let mut out = ScalarField::zeros(grid);
    for c in &m.comps {
        out.axpy(T::one(), &grid.cell_energy_density(&grid.grad(c)));
    }
    out
}

/// `(|M|^2 - 1)^2` per cell.
pub(crate) fn penalty_density<T: Real>(m: &MagField<T>) -> ScalarField<T> {
    ScalarField {
        values: (0..m.comps[0].len())
            .map(|k| {
                let a = m.at(k);
                let s = dot3(a, a) - T::one();
                s * s
            })
            .collect(),
    }
}

pub fn total_energy<T: Real>(s: &State<T>, params: &Params<T>) -> EnergyBreakdown<T> {
    let g = &s.grid;
    let half = T::lit(0.5);
    let vol = g.cell_volume();
    let v2 = g.cell_energy_density(&s.v);
    let kinetic = half * vol * s.phi.values.iter().zip(&v2.values).map(|(&p, &e)| params.rho(p) * e).sum::<T>();
    let gm = mag_gradient_density(g, &s.m);
    let exchange = half * vol * s.phi.values.iter().zip(&gm.values).map(|(&p, &e)| params.xi(p) * e).sum::<T>();
    let pen = penalty_density(&s.m);
    let four_a2 = T::lit(4.0) * params.alpha * params.alpha;
    let penalty = vol * s.phi.values.iter().zip(&pen.values).map(|(&p, &e)| params.xi(p) * e).sum::<T>() / four_a2;
    let gphi = g.grad(&s.phi);
    let interface = half * params.eta * g.dot_faces(&gphi, &gphi);
    let mixing = vol * s.phi.values.iter().map(|&p| params.psi(p).unwrap_or_else(|_| T::nan())).sum::<T>();
    EnergyBreakdown { kinetic, exchange, penalty, interface, mixing, total: kinetic + exchange + penalty + interface + mixing }
}

/// Cell viscosities `nu(phi)` and their corner averages.
pub(crate) fn viscosity_fields<T: Real>(grid: &Grid<T>, phi: &ScalarField<T>, params: &Params<T>) -> (ScalarField<T>, Vec<T>) {
    let nu = phi.map(|p| params.nu(p));
    let nc = grid.corner_average(&nu);
    (nu, nc)
}

/// `W = -div(xi(phi_old) grad M) + xi(phi_old)/alpha^2 * cubic(M, M_old)`, the
/// magnetic field whose squared norm is dissipated.
pub fn magnetic_residual<T: Real>(
    grid: &Grid<T>,
    m: &MagField<T>,
    m_old: &MagField<T>,
    phi_old: &ScalarField<T>,
    params: &Params<T>,
    splitting: Splitting,
) -> MagField<T> {
    let xi_c = phi_old.map(|p| params.xi(p));
    let xi_f = grid.face_average(&xi_c);
    let ia2 = T::one() / (params.alpha * params.alpha);
    let mut w = MagField::zeros(grid);
    for c in 0..3 {
        let d = grid.div_coeff_grad(&xi_f, &m.comps[c]);
        for (k, wk) in w.comps[c].values.iter_mut().enumerate() {
            *wk = -d.values[k];
        }
    }
    for k in 0..grid.n_cells() {
        let cub = splitting.cubic(m.at(k), m_old.at(k));
        let sigma = xi_c.values[k] * ia2;
        for (c, &cc) in cub.iter().enumerate() {
            w.comps[c].values[k] = w.comps[c].values[k] + sigma * cc;
        }
    }
    w
}

pub fn dissipation<T: Real>(s_new: &State<T>, s_old: &State<T>, params: &Params<T>, splitting: Splitting) -> Dissipation<T> {
    let g = &s_new.grid;
    let (nu, nc) = viscosity_fields(g, &s_old.phi, params);
    let viscous = g.viscous_dissipation(&nu, &nc, &s_new.v);
    let gmu = g.grad(&s_new.mu);
    let chemical = g.dot_faces(&gmu, &gmu);
    let w = magnetic_residual(g, &s_new.m, &s_old.m, &s_old.phi, params, splitting);
    let magnetic = g.dot_mag(&w, &w);
    Dissipation { viscous, chemical, magnetic }
}
