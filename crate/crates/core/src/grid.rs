//! Uniform 2D staggered (MAC) grid on the rectangle `[0, lx] x [0, ly]`.
//!
//! Scalars (and the three magnetization components) live at cell centers,
//! the velocity lives on faces: `u` on vertical faces, `v` on horizontal
//! faces. Boundary-normal faces carry the no-slip zero. All discrete
//! inner products weight every cell and every face by `dx * dy`, which makes
//! [`Grid::grad`] and `-`[`Grid::div`] exact adjoints on fields with zero
//! boundary-normal values.

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 2 cells per axis, got nx = {nx}, ny = {ny}")]
    TooFewCells { nx: usize, ny: usize },
    #[error("domain edge lengths must be positive and finite, got lx = {lx}, ly = {ly}")]
    BadExtent { lx: f64, ly: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    nx: usize,
    ny: usize,
    lx: T,
    ly: T,
    dx: T,
    dy: T,
}

/// One real per cell center, row-major (`j * nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    pub values: Vec<T>,
}

/// Face-staggered vector field.
///
/// `u[j * (nx + 1) + i]` sits at `x = i dx`, `v[j * nx + i]` at `y = j dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
}

/// Three cell-centered components.
#[derive(Debug, Clone, PartialEq)]
pub struct MagField<T> {
    pub comps: [ScalarField<T>; 3],
}

/// Symmetric velocity gradient: diagonal parts at cell centers, shear at
/// cell corners (`(nx + 1) * (ny + 1)` points, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Strain<T> {
    pub exx: Vec<T>,
    pub eyy: Vec<T>,
    pub exy: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn new(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self, GridError> {
        if nx < 2 || ny < 2 {
            return Err(GridError::TooFewCells { nx, ny });
        }
        if !(lx > T::zero() && ly > T::zero() && lx.is_finite() && ly.is_finite()) {
            return Err(GridError::BadExtent { lx: lx.as_f64(), ly: ly.as_f64() });
        }
        let dx = lx / T::from_usize_lossy(nx);
        let dy = ly / T::from_usize_lossy(ny);
        Ok(Self { nx, ny, lx, ly, dx, dy })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> T {
        self.lx
    }
    pub fn ly(&self) -> T {
        self.ly
    }
    pub fn dx(&self) -> T {
        self.dx
    }
    pub fn dy(&self) -> T {
        self.dy
    }
    pub fn cell_volume(&self) -> T {
        self.dx * self.dy
    }
    pub fn volume(&self) -> T {
        self.lx * self.ly
    }
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }
    pub fn n_corners(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }
    #[inline]
    pub fn uface(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    #[inline]
    pub fn vface(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn corner(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn xc(&self, i: usize) -> T {
        (T::from_usize_lossy(i) + T::lit(0.5)) * self.dx
    }
    pub fn yc(&self, j: usize) -> T {
        (T::from_usize_lossy(j) + T::lit(0.5)) * self.dy
    }
    pub fn xf(&self, i: usize) -> T {
        T::from_usize_lossy(i) * self.dx
    }
    pub fn yf(&self, j: usize) -> T {
        T::from_usize_lossy(j) * self.dy
    }

    pub fn is_boundary_u(&self, i: usize) -> bool {
        i == 0 || i == self.nx
    }
    pub fn is_boundary_v(&self, j: usize) -> bool {
        j == 0 || j == self.ny
    }

    // ---------------------------------------------------------------
    // Inner products and norms
    // ---------------------------------------------------------------

    pub fn dot_cells(&self, a: &ScalarField<T>, b: &ScalarField<T>) -> T {
        a.values.iter().zip(&b.values).map(|(&x, &y)| x * y).sum::<T>() * self.cell_volume()
    }

    pub fn dot_faces(&self, a: &FaceField<T>, b: &FaceField<T>) -> T {
        let su: T = a.u.iter().zip(&b.u).map(|(&x, &y)| x * y).sum();
        let sv: T = a.v.iter().zip(&b.v).map(|(&x, &y)| x * y).sum();
        (su + sv) * self.cell_volume()
    }

    pub fn dot_mag(&self, a: &MagField<T>, b: &MagField<T>) -> T {
        (0..3).map(|c| self.dot_cells(&a.comps[c], &b.comps[c])).sum()
    }

    pub fn norm_cells(&self, a: &ScalarField<T>) -> T {
        self.dot_cells(a, a).sqrt()
    }
    pub fn norm_faces(&self, a: &FaceField<T>) -> T {
        self.dot_faces(a, a).sqrt()
    }
    pub fn norm_mag(&self, a: &MagField<T>) -> T {
        self.dot_mag(a, a).sqrt()
    }

    /// Cell-volume weighted integral.
    pub fn integrate(&self, s: &ScalarField<T>) -> T {
        s.values.iter().copied().sum::<T>() * self.cell_volume()
    }

    pub fn mean(&self, s: &ScalarField<T>) -> T {
        self.integrate(s) / self.volume()
    }

    // ---------------------------------------------------------------
    // First-order operators
    // ---------------------------------------------------------------

    /// Centered face gradient; boundary-normal faces are 0 (homogeneous Neumann).
    pub fn grad(&self, s: &ScalarField<T>) -> FaceField<T> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = FaceField::zeros(self);
        let idx = T::one() / self.dx;
        let idy = T::one() / self.dy;
        for j in 0..ny {
            for i in 1..nx {
                out.u[self.uface(i, j)] = (s.values[self.cell(i, j)] - s.values[self.cell(i - 1, j)]) * idx;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                out.v[self.vface(i, j)] = (s.values[self.cell(i, j)] - s.values[self.cell(i, j - 1)]) * idy;
            }
        }
        out
    }

    /// Cell-wise flux balance divided by the cell volume. Boundary face values
    /// are used as given, so the cell sum equals the net boundary flux.
    pub fn div(&self, f: &FaceField<T>) -> ScalarField<T> {
        let (nx, ny) = (self.nx, self.ny);
        let idx = T::one() / self.dx;
        let idy = T::one() / self.dy;
        let mut out = ScalarField::zeros(self);
        for j in 0..ny {
            for i in 0..nx {
                out.values[self.cell(i, j)] = (f.u[self.uface(i + 1, j)] - f.u[self.uface(i, j)]) * idx
                    + (f.v[self.vface(i, j + 1)] - f.v[self.vface(i, j)]) * idy;
            }
        }
        out
    }

    /// `div(grad s)` with the Neumann closure.
    pub fn laplace(&self, s: &ScalarField<T>) -> ScalarField<T> {
        self.div(&self.grad(s))
    }

    /// Nonzero entries `(cell, weight)` of row `(i, j)` of `laplace`, the
    /// diagonal last.
    pub fn laplace_stencil(&self, i: usize, j: usize) -> Vec<(usize, T)> {
        let ax = T::one() / (self.dx * self.dx);
        let ay = T::one() / (self.dy * self.dy);
        let mut out = Vec::with_capacity(5);
        let mut diag = T::zero();
        let mut push = |c: usize, w: T| {
            out.push((c, w));
            diag = diag - w;
        };
        if j > 0 {
            push(self.cell(i, j - 1), ay);
        }
        if i > 0 {
            push(self.cell(i - 1, j), ax);
        }
        if i + 1 < self.nx {
            push(self.cell(i + 1, j), ax);
        }
        if j + 1 < self.ny {
            push(self.cell(i, j + 1), ay);
        }
        out.push((self.cell(i, j), diag));
        out
    }

    /// `div(coeff grad s)` with face coefficients.
    pub fn div_coeff_grad(&self, coeff: &FaceField<T>, s: &ScalarField<T>) -> ScalarField<T> {
        let mut g = self.grad(s);
        g.mul_assign(coeff);
        self.div(&g)
    }

    /// Arithmetic average of the two adjacent cells on interior faces; boundary
    /// faces copy the single adjacent cell.
    pub fn face_average(&self, s: &ScalarField<T>) -> FaceField<T> {
        let (nx, ny) = (self.nx, self.ny);
        let half = T::lit(0.5);
        let mut out = FaceField::zeros(self);
        for j in 0..ny {
            for i in 0..=nx {
                out.u[self.uface(i, j)] = if i == 0 {
                    s.values[self.cell(0, j)]
                } else if i == nx {
                    s.values[self.cell(nx - 1, j)]
                } else {
                    half * (s.values[self.cell(i - 1, j)] + s.values[self.cell(i, j)])
                };
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                out.v[self.vface(i, j)] = if j == 0 {
                    s.values[self.cell(i, 0)]
                } else if j == ny {
                    s.values[self.cell(i, ny - 1)]
                } else {
                    half * (s.values[self.cell(i, j - 1)] + s.values[self.cell(i, j)])
                };
            }
        }
        out
    }

    /// Cell average of squared face values: `(f_w^2 + f_e^2)/2 + (f_s^2 + f_n^2)/2`.
    /// Its cell-volume weighted sum equals the face-weighted `|f|^2`.
    pub fn cell_energy_density(&self, f: &FaceField<T>) -> ScalarField<T> {
        let half = T::lit(0.5);
        let mut out = ScalarField::zeros(self);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let uw = f.u[self.uface(i, j)];
                let ue = f.u[self.uface(i + 1, j)];
                let vs = f.v[self.vface(i, j)];
                let vn = f.v[self.vface(i, j + 1)];
                out.values[self.cell(i, j)] = half * (uw * uw + ue * ue + vs * vs + vn * vn);
            }
        }
        out
    }

    // ---------------------------------------------------------------
    // Transport
    // ---------------------------------------------------------------

    /// Conservative `div(vel s_face)` with centered face interpolation and
    /// zero boundary flux.
    pub fn advect_scalar(&self, vel: &FaceField<T>, s: &ScalarField<T>) -> ScalarField<T> {
        let mut flux = self.face_average(s);
        flux.mul_assign(vel);
        flux.zero_boundary_normal(self);
        self.div(&flux)
    }

    /// Adjoint of [`Grid::advect_scalar`] in its velocity argument: the face field
    /// `f` with `<f, w> = <advect_scalar(w, s), t>` for every `w` with zero
    /// boundary-normal values. Equals `-s_face grad t`.
    pub fn advect_scalar_velocity_adjoint(&self, s: &ScalarField<T>, t: &ScalarField<T>) -> FaceField<T> {
        let mut out = self.grad(t);
        let sf = self.face_average(s);
        out.mul_assign(&sf);
        out.scale(-T::one());
        out
    }

    /// Advective form `(vel . grad) s`: each cell averages `vel_f * grad(s)_f`
    /// over its two x-faces and its two y-faces.
    pub fn advect_advective(&self, vel: &FaceField<T>, s: &ScalarField<T>) -> ScalarField<T> {
        let g = self.grad(s);
        let half = T::lit(0.5);
        let mut out = ScalarField::zeros(self);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let a = vel.u[self.uface(i, j)] * g.u[self.uface(i, j)]
                    + vel.u[self.uface(i + 1, j)] * g.u[self.uface(i + 1, j)]
                    + vel.v[self.vface(i, j)] * g.v[self.vface(i, j)]
                    + vel.v[self.vface(i, j + 1)] * g.v[self.vface(i, j + 1)];
                out.values[self.cell(i, j)] = half * a;
            }
        }
        out
    }

    /// Adjoint of [`Grid::advect_advective`] in the velocity: the face field
    /// `t_face * grad(s)` with `<f, w> = <advect_advective(w, s), t>`.
    pub fn advect_advective_velocity_adjoint(&self, s: &ScalarField<T>, t: &ScalarField<T>) -> FaceField<T> {
        let mut out = self.grad(s);
        let tf = self.face_average(t);
        out.mul_assign(&tf);
        out
    }

    /// Skew-symmetric transport of a face field `w` by a face mass flux `flux`:
    /// the discrete `(F . grad) w + div(F) w / 2`, built as the antisymmetric
    /// part of the centered flux-form `div(F (x) w)`. The pairing
    /// `<transport_skew(F, w), w>` vanishes identically.
    pub fn transport_skew(&self, flux: &FaceField<T>, w: &FaceField<T>) -> FaceField<T> {
        let (nx, ny) = (self.nx, self.ny);
        let q = T::lit(0.25);
        let idx = T::one() / self.dx;
        let idy = T::one() / self.dy;
        let mut out = FaceField::zeros(self);
        // u nodes: interior vertical faces
        for j in 0..ny {
            for i in 1..nx {
                let fe = flux.u[self.uface(i, j)] + flux.u[self.uface(i + 1, j)];
                let fw = flux.u[self.uface(i - 1, j)] + flux.u[self.uface(i, j)];
                let fnn = flux.v[self.vface(i - 1, j + 1)] + flux.v[self.vface(i, j + 1)];
                let fs = flux.v[self.vface(i - 1, j)] + flux.v[self.vface(i, j)];
                let we = if i + 1 < nx { w.u[self.uface(i + 1, j)] } else { T::zero() };
                let ww = if i > 1 { w.u[self.uface(i - 1, j)] } else { T::zero() };
                let wn = if j + 1 < ny { w.u[self.uface(i, j + 1)] } else { T::zero() };
                let ws = if j > 0 { w.u[self.uface(i, j - 1)] } else { T::zero() };
                out.u[self.uface(i, j)] = q * ((fe * we - fw * ww) * idx + (fnn * wn - fs * ws) * idy);
            }
        }
        // v nodes: interior horizontal faces
        for j in 1..ny {
            for i in 0..nx {
                let fnn = flux.v[self.vface(i, j)] + flux.v[self.vface(i, j + 1)];
                let fs = flux.v[self.vface(i, j - 1)] + flux.v[self.vface(i, j)];
                let fe = flux.u[self.uface(i + 1, j - 1)] + flux.u[self.uface(i + 1, j)];
                let fw = flux.u[self.uface(i, j - 1)] + flux.u[self.uface(i, j)];
                let wn = if j + 1 < ny { w.v[self.vface(i, j + 1)] } else { T::zero() };
                let ws = if j > 1 { w.v[self.vface(i, j - 1)] } else { T::zero() };
                let we = if i + 1 < nx { w.v[self.vface(i + 1, j)] } else { T::zero() };
                let ww = if i > 0 { w.v[self.vface(i - 1, j)] } else { T::zero() };
                out.v[self.vface(i, j)] = q * ((fe * we - fw * ww) * idx + (fnn * wn - fs * ws) * idy);
            }
        }
        out
    }

    /// Energy-neutral momentum advection: `div(rho w (x) v) - (w . grad rho) v / 2`
    /// in skew form, with the mass flux `rho_face * vel_adv`.
    pub fn advect_velocity(&self, rho_face: &FaceField<T>, vel_adv: &FaceField<T>, vel: &FaceField<T>) -> FaceField<T> {
        let mut flux = rho_face.clone();
        flux.mul_assign(vel_adv);
        self.transport_skew(&flux, vel)
    }

    // ---------------------------------------------------------------
    // Symmetric gradient and viscous operator
    // ---------------------------------------------------------------

    /// Quadrature weight of a corner relative to `dx dy`.
    fn corner_weight(&self, i: usize, j: usize) -> T {
        let ei = i == 0 || i == self.nx;
        let ej = j == 0 || j == self.ny;
        match (ei, ej) {
            (false, false) => T::one(),
            (true, true) => T::lit(0.25),
            _ => T::lit(0.5),
        }
    }

    /// Discrete `D(v)`. Tangential wall velocity is zero via odd reflection.
    pub fn strain(&self, vel: &FaceField<T>) -> Strain<T> {
        let (nx, ny) = (self.nx, self.ny);
        let idx = T::one() / self.dx;
        let idy = T::one() / self.dy;
        let half = T::lit(0.5);
        let mut exx = vec![T::zero(); self.n_cells()];
        let mut eyy = vec![T::zero(); self.n_cells()];
        for j in 0..ny {
            for i in 0..nx {
                exx[self.cell(i, j)] = (vel.u[self.uface(i + 1, j)] - vel.u[self.uface(i, j)]) * idx;
                eyy[self.cell(i, j)] = (vel.v[self.vface(i, j + 1)] - vel.v[self.vface(i, j)]) * idy;
            }
        }
        let mut exy = vec![T::zero(); self.n_corners()];
        for j in 0..=ny {
            for i in 0..=nx {
                let dudy = if i == 0 || i == nx {
                    T::zero()
                } else {
                    let above = if j < ny { vel.u[self.uface(i, j)] } else { -vel.u[self.uface(i, ny - 1)] };
                    let below = if j > 0 { vel.u[self.uface(i, j - 1)] } else { -vel.u[self.uface(i, 0)] };
                    (above - below) * idy
                };
                let dvdx = if j == 0 || j == ny {
                    T::zero()
                } else {
                    let right = if i < nx { vel.v[self.vface(i, j)] } else { -vel.v[self.vface(nx - 1, j)] };
                    let left = if i > 0 { vel.v[self.vface(i - 1, j)] } else { -vel.v[self.vface(0, j)] };
                    (right - left) * idx
                };
                exy[self.corner(i, j)] = half * (dudy + dvdx);
            }
        }
        Strain { exx, eyy, exy }
    }

    /// Weighted pairing `sum dxdy (a_xx b_xx + a_yy b_yy) + sum w_k dxdy 2 a_xy b_xy`.
    pub fn dot_strain(&self, a: &Strain<T>, b: &Strain<T>) -> T {
        let two = T::lit(2.0);
        let diag: T = a
            .exx
            .iter()
            .zip(&b.exx)
            .chain(a.eyy.iter().zip(&b.eyy))
            .map(|(&x, &y)| x * y)
            .sum();
        let mut shear = T::zero();
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                let k = self.corner(i, j);
                shear = shear + self.corner_weight(i, j) * two * a.exy[k] * b.exy[k];
            }
        }
        (diag + shear) * self.cell_volume()
    }

    /// Adjoint of [`Grid::strain`]: `<strain(w), tau> = <w, strain_adjoint(tau)>`
    /// for every `w` with zero boundary-normal values.
    pub fn strain_adjoint(&self, tau: &Strain<T>) -> FaceField<T> {
        let (nx, ny) = (self.nx, self.ny);
        let idx = T::one() / self.dx;
        let idy = T::one() / self.dy;
        let two = T::lit(2.0);
        let mut out = FaceField::zeros(self);
        for j in 0..ny {
            for i in 1..nx {
                let normal = (tau.exx[self.cell(i - 1, j)] - tau.exx[self.cell(i, j)]) * idx;
                let cb = if j == 0 { two } else { T::one() } * idy;
                let ca = -(if j + 1 == ny { two } else { T::one() }) * idy;
                let shear = self.corner_weight(i, j) * cb * tau.exy[self.corner(i, j)]
                    + self.corner_weight(i, j + 1) * ca * tau.exy[self.corner(i, j + 1)];
                out.u[self.uface(i, j)] = normal + shear;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let normal = (tau.eyy[self.cell(i, j - 1)] - tau.eyy[self.cell(i, j)]) * idy;
                let cl = if i == 0 { two } else { T::one() } * idx;
                let cr = -(if i + 1 == nx { two } else { T::one() }) * idx;
                let shear = self.corner_weight(i, j) * cl * tau.exy[self.corner(i, j)]
                    + self.corner_weight(i + 1, j) * cr * tau.exy[self.corner(i + 1, j)];
                out.v[self.vface(i, j)] = normal + shear;
            }
        }
        out
    }

    /// Corner values of a cell field by averaging the adjacent cells.
    pub fn corner_average(&self, s: &ScalarField<T>) -> Vec<T> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = vec![T::zero(); self.n_corners()];
        for j in 0..=ny {
            for i in 0..=nx {
                let mut acc = T::zero();
                let mut n = 0usize;
                for (ci, cj) in [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)] {
                    if ci < nx && cj < ny {
                        acc = acc + s.values[self.cell(ci, cj)];
                        n += 1;
                    }
                }
                out[self.corner(i, j)] = acc / T::from_usize_lossy(n);
            }
        }
        out
    }

    /// Stress `2 nu D(v)` with `nu` at cells and corner-averaged `nu` for the shear.
    pub fn viscous_stress(&self, nu: &ScalarField<T>, nu_corner: &[T], vel: &FaceField<T>) -> Strain<T> {
        let two = T::lit(2.0);
        let mut e = self.strain(vel);
        for (k, x) in e.exx.iter_mut().enumerate() {
            *x = two * nu.values[k] * *x;
        }
        for (k, x) in e.eyy.iter_mut().enumerate() {
            *x = two * nu.values[k] * *x;
        }
        for (k, x) in e.exy.iter_mut().enumerate() {
            *x = two * nu_corner[k] * *x;
        }
        e
    }

    /// `-div(2 nu D(v))` as `D^T (2 nu D v)`; `<viscous(v), v>` is the viscous dissipation.
    pub fn viscous(&self, nu: &ScalarField<T>, nu_corner: &[T], vel: &FaceField<T>) -> FaceField<T> {
        self.strain_adjoint(&self.viscous_stress(nu, nu_corner, vel))
    }

    /// `2 int nu |D v|^2`.
    pub fn viscous_dissipation(&self, nu: &ScalarField<T>, nu_corner: &[T], vel: &FaceField<T>) -> T {
        let e = self.strain(vel);
        let tau = self.viscous_stress(nu, nu_corner, vel);
        self.dot_strain(&e, &tau)
    }
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self { values: vec![T::zero(); grid.n_cells()] }
    }

    pub fn constant(grid: &Grid<T>, c: T) -> Self {
        Self { values: vec![c; grid.n_cells()] }
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: &Grid<T>, f: impl Fn(T, T) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(grid.xc(i), grid.yc(j)));
            }
        }
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn axpy(&mut self, a: T, x: &Self) {
        for (y, &xv) in self.values.iter_mut().zip(&x.values) {
            *y = *y + a * xv;
        }
    }

    pub fn scale(&mut self, a: T) {
        for y in &mut self.values {
            *y = *y * a;
        }
    }

    pub fn add_constant(&mut self, c: T) {
        for y in &mut self.values {
            *y = *y + c;
        }
    }
}

impl<T: Real> FaceField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self { u: vec![T::zero(); grid.n_u()], v: vec![T::zero(); grid.n_v()] }
    }

    /// Samples `(fu, fv)` at face midpoints.
    pub fn from_fn(grid: &Grid<T>, fu: impl Fn(T, T) -> T, fv: impl Fn(T, T) -> T) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny() {
            for i in 0..=grid.nx() {
                out.u[grid.uface(i, j)] = fu(grid.xf(i), grid.yc(j));
            }
        }
        for j in 0..=grid.ny() {
            for i in 0..grid.nx() {
                out.v[grid.vface(i, j)] = fv(grid.xc(i), grid.yf(j));
            }
        }
        out
    }

    pub fn zero_boundary_normal(&mut self, grid: &Grid<T>) {
        for j in 0..grid.ny() {
            self.u[grid.uface(0, j)] = T::zero();
            self.u[grid.uface(grid.nx(), j)] = T::zero();
        }
        for i in 0..grid.nx() {
            self.v[grid.vface(i, 0)] = T::zero();
            self.v[grid.vface(i, grid.ny())] = T::zero();
        }
    }

    pub fn max_abs(&self) -> T {
        self.u.iter().chain(&self.v).fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn mul_assign(&mut self, other: &Self) {
        for (a, &b) in self.u.iter_mut().zip(&other.u) {
            *a = *a * b;
        }
        for (a, &b) in self.v.iter_mut().zip(&other.v) {
            *a = *a * b;
        }
    }

    pub fn axpy(&mut self, a: T, x: &Self) {
        for (y, &xv) in self.u.iter_mut().zip(&x.u) {
            *y = *y + a * xv;
        }
        for (y, &xv) in self.v.iter_mut().zip(&x.v) {
            *y = *y + a * xv;
        }
    }

    pub fn scale(&mut self, a: T) {
        for y in self.u.iter_mut().chain(self.v.iter_mut()) {
            *y = *y * a;
        }
    }
}

impl<T: Real> MagField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Self { comps: [ScalarField::zeros(grid), ScalarField::zeros(grid), ScalarField::zeros(grid)] }
    }

    pub fn uniform(grid: &Grid<T>, m: [T; 3]) -> Self {
        Self { comps: m.map(|c| ScalarField::constant(grid, c)) }
    }

    #[inline]
    pub fn at(&self, k: usize) -> [T; 3] {
        [self.comps[0].values[k], self.comps[1].values[k], self.comps[2].values[k]]
    }

    #[inline]
    pub fn set(&mut self, k: usize, m: [T; 3]) {
        for (c, &x) in m.iter().enumerate() {
            self.comps[c].values[k] = x;
        }
    }

    pub fn max_norm(&self) -> T {
        let n = self.comps[0].len();
        (0..n).fold(T::zero(), |acc, k| acc.max(norm3(self.at(k))))
    }

    /// Discrete `L^r` norm of `|M|`, `r` finite.
    pub fn lr_norm(&self, grid: &Grid<T>, r: T) -> T {
        let n = self.comps[0].len();
        let s: T = (0..n).map(|k| norm3(self.at(k)).powf(r)).sum();
        (s * grid.cell_volume()).powf(T::one() / r)
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.is_finite())
    }

    pub fn axpy(&mut self, a: T, x: &Self) {
        for c in 0..3 {
            self.comps[c].axpy(a, &x.comps[c]);
        }
    }
}

#[inline]
pub fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<T: Real>(a: [T; 3]) -> T {
    dot3(a, a).sqrt()
}
