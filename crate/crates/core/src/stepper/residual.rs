//! Discrete residuals of the coupled step, shared by the Picard solver and the
//! monolithic oracle.

use crate::grid::{FaceField, Grid, MagField, ScalarField};
use crate::materials::Params;
use crate::real::Real;
use crate::state::{mag_gradient_density, penalty_density, viscosity_fields, Splitting, State};

use super::StepError;

/// Coefficients frozen at the old time level.
#[derive(Debug, Clone)]
pub(crate) struct Frozen<T> {
    pub grid: Grid<T>,
    pub params: Params<T>,
    pub h: T,
    pub splitting: Splitting,
    pub phi_k: ScalarField<T>,
    pub m_k: MagField<T>,
    pub v_k: FaceField<T>,
    pub rho_kf: FaceField<T>,
    pub phi_kf: FaceField<T>,
    pub xi_c: ScalarField<T>,
    pub xi_f: FaceField<T>,
    /// `xi(phi_k) / alpha^2` per cell.
    pub sigma: Vec<T>,
    pub nu: ScalarField<T>,
    pub nu_corner: Vec<T>,
    /// Prefactor of `J = j_coef * grad(mu)`.
    pub j_coef: T,
}

impl<T: Real> Frozen<T> {
    pub fn new(state_k: &State<T>, params: &Params<T>, h: T, splitting: Splitting) -> Self {
        let g = state_k.grid;
        let rho_k = state_k.phi.map(|p| params.rho(p));
        let xi_c = state_k.phi.map(|p| params.xi(p));
        let ia2 = T::one() / (params.alpha * params.alpha);
        let (nu, nu_corner) = viscosity_fields(&g, &state_k.phi, params);
        Self {
            grid: g,
            params: *params,
            h,
            splitting,
            phi_k: state_k.phi.clone(),
            m_k: state_k.m.clone(),
            v_k: state_k.v.clone(),
            rho_kf: g.face_average(&rho_k),
            phi_kf: g.face_average(&state_k.phi),
            xi_f: g.face_average(&xi_c),
            sigma: xi_c.values.iter().map(|&x| x * ia2).collect(),
            xi_c,
            nu,
            nu_corner,
            j_coef: -T::lit(0.5) * (params.rho2 - params.rho1),
        }
    }

    /// `W = -div(xi_k grad M) + sigma * cubic(M, M_k)`.
    pub fn w_field(&self, m: &MagField<T>) -> MagField<T> {
        let g = &self.grid;
        let mut w = MagField::zeros(g);
        for c in 0..3 {
            let d = g.div_coeff_grad(&self.xi_f, &m.comps[c]);
            for (wk, &dk) in w.comps[c].values.iter_mut().zip(&d.values) {
                *wk = -dk;
            }
        }
        for k in 0..g.n_cells() {
            let cub = self.splitting.cubic(m.at(k), self.m_k.at(k));
            for (c, &cc) in cub.iter().enumerate() {
                w.comps[c].values[k] = w.comps[c].values[k] + self.sigma[k] * cc;
            }
        }
        w
    }

    /// `(M - M_k) + h (B(v) M + W)`.
    pub fn mag_residual(&self, v: &FaceField<T>, m: &MagField<T>) -> MagField<T> {
        let g = &self.grid;
        let mut r = self.w_field(m);
        for c in 0..3 {
            let adv = g.advect_advective(v, &m.comps[c]);
            for (k, rk) in r.comps[c].values.iter_mut().enumerate() {
                *rk = m.comps[c].values[k] - self.m_k.comps[c].values[k] + self.h * (*rk + adv.values[k]);
            }
        }
        r
    }

    /// Cell coefficient of `H0` in the chemical-potential equation:
    /// `|grad M|^2 / 2 + (|M|^2 - 1)^2 / (4 alpha^2)`.
    pub fn h0_weight(&self, m: &MagField<T>) -> ScalarField<T> {
        let gm = mag_gradient_density(&self.grid, m);
        let pen = penalty_density(m);
        let half = T::lit(0.5);
        let i4a2 = T::one() / (T::lit(4.0) * self.params.alpha * self.params.alpha);
        ScalarField { values: gm.values.iter().zip(&pen.values).map(|(&a, &b)| half * a + i4a2 * b).collect() }
    }

    /// `r1 = (phi - phi_k) + h div(v phi_k) - h laplace(mu)` and
    /// `r2 = mu + kappa (phi + phi_k)/2 - H0(phi, phi_k) c + eta laplace(phi) - psi0'(phi)`.
    pub fn ch_residual(
        &self,
        v: &FaceField<T>,
        weight: &ScalarField<T>,
        phi: &ScalarField<T>,
        mu: &ScalarField<T>,
    ) -> Result<(ScalarField<T>, ScalarField<T>), StepError> {
        let g = &self.grid;
        let p = &self.params;
        let adv = g.advect_scalar(v, &self.phi_k);
        let lmu = g.laplace(mu);
        let lphi = g.laplace(phi);
        let half = T::lit(0.5);
        let n = g.n_cells();
        let mut r1 = ScalarField::zeros(g);
        let mut r2 = ScalarField::zeros(g);
        for k in 0..n {
            let f = phi.values[k];
            let fk = self.phi_k.values[k];
            r1.values[k] = f - fk + self.h * (adv.values[k] - lmu.values[k]);
            let dpsi = p.psi0_prime(f).map_err(|_| StepError::Saturation { value: f.as_f64() })?.value;
            r2.values[k] = mu.values[k] + p.kappa * half * (f + fk) - p.h0(f, fk) * weight.values[k] + p.eta * lphi.values[k] - dpsi;
        }
        Ok((r1, r2))
    }

    pub fn rho_face(&self, phi: &ScalarField<T>) -> FaceField<T> {
        self.grid.face_average(&phi.map(|x| self.params.rho(x)))
    }

    /// Mass matrix `(rho_f(phi) + rho_f(phi_k)) / 2` on faces.
    pub fn mass_matrix(&self, phi: &ScalarField<T>) -> FaceField<T> {
        let mut m = self.rho_face(phi);
        m.axpy(T::one(), &self.rho_kf);
        m.scale(T::lit(0.5));
        m
    }

    /// Mass flux `rho_k v_adv + J(mu)` advecting momentum.
    pub fn momentum_flux(&self, v_adv: &FaceField<T>, mu: &ScalarField<T>) -> FaceField<T> {
        let mut f = self.rho_kf.clone();
        f.mul_assign(v_adv);
        f.axpy(self.j_coef, &self.grid.grad(mu));
        f
    }

    /// Right-hand side `rho_k v_k - h (phi_k grad mu - B^T W)` of the momentum equation.
    pub fn momentum_rhs(&self, m: &MagField<T>, mu: &ScalarField<T>) -> FaceField<T> {
        let g = &self.grid;
        let mut b = self.rho_kf.clone();
        b.mul_assign(&self.v_k);
        let mut force = g.grad(mu);
        force.mul_assign(&self.phi_kf);
        let w = self.w_field(m);
        for c in 0..3 {
            force.axpy(-T::one(), &g.advect_advective_velocity_adjoint(&m.comps[c], &w.comps[c]));
        }
        b.axpy(-self.h, &force);
        b.zero_boundary_normal(g);
        b
    }

    /// `mass * v + h (S(flux) v + viscous(v))`, without the pressure.
    pub fn momentum_operator(&self, mass: &FaceField<T>, flux: &FaceField<T>, v: &FaceField<T>) -> FaceField<T> {
        let g = &self.grid;
        let mut out = v.clone();
        out.mul_assign(mass);
        out.axpy(self.h, &g.transport_skew(flux, v));
        out.axpy(self.h, &g.viscous(&self.nu, &self.nu_corner, v));
        out.zero_boundary_normal(g);
        out
    }
}

/// Residual blocks of the coupled system at a candidate new state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledResidual<T> {
    /// Momentum balance on interior faces (boundary-normal entries are zero).
    pub momentum: FaceField<T>,
    /// `div v`.
    pub divergence: ScalarField<T>,
    pub magnetization: MagField<T>,
    /// Order-parameter balance.
    pub phase: ScalarField<T>,
    /// Chemical-potential definition.
    pub potential: ScalarField<T>,
}

impl<T: Real> CoupledResidual<T> {
    /// Discrete L2 norm over all blocks.
    pub fn norm(&self, grid: &Grid<T>) -> T {
        (grid.dot_faces(&self.momentum, &self.momentum)
            + grid.dot_cells(&self.divergence, &self.divergence)
            + grid.dot_mag(&self.magnetization, &self.magnetization)
            + grid.dot_cells(&self.phase, &self.phase)
            + grid.dot_cells(&self.potential, &self.potential))
        .sqrt()
    }
}

impl<T: Real> Frozen<T> {
    /// Full residual with the advecting velocity equal to the unknown `v`.
    pub fn coupled(&self, s: &State<T>) -> Result<CoupledResidual<T>, StepError> {
        let g = &self.grid;
        let magnetization = self.mag_residual(&s.v, &s.m);
        let weight = self.h0_weight(&s.m);
        let (phase, potential) = self.ch_residual(&s.v, &weight, &s.phi, &s.mu)?;
        let mass = self.mass_matrix(&s.phi);
        let flux = self.momentum_flux(&s.v, &s.mu);
        let mut momentum = self.momentum_operator(&mass, &flux, &s.v);
        momentum.axpy(-T::one(), &self.momentum_rhs(&s.m, &s.mu));
        momentum.axpy(self.h, &g.grad(&s.p));
        momentum.zero_boundary_normal(g);
        Ok(CoupledResidual { momentum, divergence: g.div(&s.v), magnetization, phase, potential })
    }
}

/// Residual of the fully coupled step from `state_k` to the candidate `new`.
pub fn coupled_residual<T: Real>(
    state_k: &State<T>,
    new: &State<T>,
    params: &Params<T>,
    h: T,
    splitting: Splitting,
) -> Result<CoupledResidual<T>, StepError> {
    Frozen::new(state_k, params, h, splitting).coupled(new)
}
