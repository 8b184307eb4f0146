//! Constitutive closures: exchange coefficient, viscosity, density, the
//! logarithmic mixing potential and its convex part, and the algebra of the
//! magnetization splitting.

use thiserror::Error;

use crate::grid::dot3;
use crate::real::Real;

/// Half-width of the band next to `|s| = 1` where potential derivatives are clamped.
pub const EPS_SAT: f64 = 1e-12;

/// Below this separation the difference quotient of `xi` switches to the derivative.
pub const DELTA_SWITCH: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("order parameter {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("parameter `{name}` must satisfy {constraint} (got {value})")]
    Invalid { name: &'static str, constraint: &'static str, value: f64 },
}

/// Physical constants of the mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params<T> {
    /// Interface energy coefficient.
    pub eta: T,
    /// Saturation penalty length.
    pub alpha: T,
    /// Entropic coefficient of the mixing potential.
    pub a: T,
    /// Demixing coefficient of the mixing potential.
    pub b: T,
    /// Convexification shift; the convex part is `psi + kappa s^2 / 2`.
    pub kappa: T,
    pub xi1: T,
    pub xi2: T,
    /// Width of the logistic blend used for `xi` and `nu`.
    pub eta_blend: T,
    pub nu1: T,
    pub nu2: T,
    pub rho1: T,
    pub rho2: T,
}

/// A potential derivative together with whether its argument had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped<T> {
    pub value: T,
    pub clamped: bool,
}

impl Default for Params<f64> {
    fn default() -> Self {
        Self {
            eta: 4e-3,
            alpha: 0.1,
            a: 1.0,
            b: 2.0,
            kappa: 2.0,
            xi1: 0.1,
            xi2: 0.12,
            eta_blend: 0.1,
            nu1: 0.1,
            nu2: 0.2,
            rho1: 1.0,
            rho2: 3.0,
        }
    }
}

impl<T: Real> Params<T> {
    pub fn cast<U: Real>(&self) -> Params<U> {
        let c = |x: T| U::lit(x.as_f64());
        Params {
            eta: c(self.eta),
            alpha: c(self.alpha),
            a: c(self.a),
            b: c(self.b),
            kappa: c(self.kappa),
            xi1: c(self.xi1),
            xi2: c(self.xi2),
            eta_blend: c(self.eta_blend),
            nu1: c(self.nu1),
            nu2: c(self.nu2),
            rho1: c(self.rho1),
            rho2: c(self.rho2),
        }
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        let positive = [
            ("eta", self.eta),
            ("alpha", self.alpha),
            ("a", self.a),
            ("b", self.b),
            ("xi1", self.xi1),
            ("xi2", self.xi2),
            ("eta_blend", self.eta_blend),
            ("nu1", self.nu1),
            ("nu2", self.nu2),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
        ];
        for (name, value) in positive {
            if !(value > T::zero() && value.is_finite()) {
                return Err(MaterialError::Invalid { name, constraint: "> 0", value: value.as_f64() });
            }
        }
        if !(self.kappa.is_finite() && self.kappa >= self.b - self.a) {
            return Err(MaterialError::Invalid { name: "kappa", constraint: ">= b - a", value: self.kappa.as_f64() });
        }
        Ok(())
    }

    /// `c1 = min(xi1, xi2)`.
    pub fn c1(&self) -> T {
        self.xi1.min(self.xi2)
    }

    /// `c2 = max(xi1, xi2)`.
    pub fn c2(&self) -> T {
        self.xi1.max(self.xi2)
    }

    /// `sup |xi'| = |xi2 - xi1| / (4 eta_blend)`.
    pub fn c3(&self) -> T {
        (self.xi2 - self.xi1).abs() / (T::lit(4.0) * self.eta_blend)
    }

    /// Growth rate `c2 / alpha^2` of the magnetization norm envelope.
    pub fn growth_rate(&self) -> T {
        self.c2() / (self.alpha * self.alpha)
    }

    fn heaviside(&self, x: T) -> T {
        T::one() / (T::one() + (-x / self.eta_blend).exp())
    }

    fn heaviside_prime(&self, x: T) -> T {
        let h = self.heaviside(x);
        h * (T::one() - h) / self.eta_blend
    }

    fn heaviside_second(&self, x: T) -> T {
        let h = self.heaviside(x);
        h * (T::one() - h) * (T::one() - h - h) / (self.eta_blend * self.eta_blend)
    }

    fn heaviside_third(&self, x: T) -> T {
        let h = self.heaviside(x);
        let h1 = self.heaviside_prime(x);
        let h2 = self.heaviside_second(x);
        (h2 * (T::one() - h - h) - T::lit(2.0) * h1 * h1) / self.eta_blend
    }

    pub fn xi(&self, phi: T) -> T {
        self.xi1 + (self.xi2 - self.xi1) * self.heaviside(phi)
    }

    pub fn xi_prime(&self, phi: T) -> T {
        (self.xi2 - self.xi1) * self.heaviside_prime(phi)
    }

    pub fn xi_second(&self, phi: T) -> T {
        (self.xi2 - self.xi1) * self.heaviside_second(phi)
    }

    /// Secant slope of `xi` between `a` and `b`; the derivative at the midpoint
    /// once the arguments are closer than [`DELTA_SWITCH`].
    fn xi_third(&self, phi: T) -> T {
        (self.xi2 - self.xi1) * self.heaviside_third(phi)
    }

    pub fn h0(&self, a: T, b: T) -> T {
        let d = a - b;
        if d.abs() < T::lit(DELTA_SWITCH) {
            return self.xi_prime(T::lit(0.5) * (a + b));
        }
        if d.abs() >= self.eta_blend {
            return (self.xi(a) - self.xi(b)) / d;
        }
        // H(a) - H(b) = sinh(p - q) / (2 cosh p cosh q) with p = a / (2 eta_blend),
        // free of the cancellation in the plain difference
        let two = T::lit(2.0);
        let p = a / (two * self.eta_blend);
        let q = b / (two * self.eta_blend);
        let (ep, eq) = ((-two * p.abs()).exp(), (-two * q.abs()).exp());
        let dh = two * (d / (two * self.eta_blend)).sinh() * (-p.abs() - q.abs()).exp() / ((T::one() + ep) * (T::one() + eq));
        (self.xi2 - self.xi1) * dh / d
    }

    /// Partial derivative of [`Params::h0`] in its first argument.
    pub fn h0_da(&self, a: T, b: T) -> T {
        let d = a - b;
        if d.abs() < T::lit(1e-5) {
            // Taylor branch avoids cancellation in the quotient below
            let m = T::lit(0.5) * (a + b);
            T::lit(0.5) * self.xi_second(m) + self.xi_third(m) * d / T::lit(12.0)
        } else {
            (self.xi_prime(a) - self.h0(a, b)) / d
        }
    }

    pub fn nu(&self, phi: T) -> T {
        self.nu1 + (self.nu2 - self.nu1) * self.heaviside(phi)
    }

    /// Mixture density, affine in the order parameter.
    pub fn rho(&self, phi: T) -> T {
        let half = T::lit(0.5);
        half * (self.rho1 + self.rho2) + half * (self.rho2 - self.rho1) * phi
    }

    /// Logarithmic mixing potential on `[-1, 1]`, with its limits at the endpoints.
    pub fn psi(&self, s: T) -> Result<T, MaterialError> {
        if !(s.abs() <= T::one()) {
            return Err(MaterialError::OutOfRange(s.as_f64()));
        }
        let xlnx = |x: T| if x > T::zero() { x * x.ln() } else { T::zero() };
        let half = T::lit(0.5);
        Ok(half * self.a * (xlnx(T::one() + s) + xlnx(T::one() - s)) - half * self.b * s * s)
    }

    /// Convex part `psi(s) + kappa s^2 / 2`.
    pub fn psi0(&self, s: T) -> Result<T, MaterialError> {
        Ok(self.psi(s)? + T::lit(0.5) * self.kappa * s * s)
    }

    fn saturate(&self, s: T) -> Result<Clamped<T>, MaterialError> {
        if !(s.abs() <= T::one()) {
            return Err(MaterialError::OutOfRange(s.as_f64()));
        }
        let limit = T::one() - T::lit(EPS_SAT);
        if s.abs() > limit {
            Ok(Clamped { value: limit.copysign(s), clamped: true })
        } else {
            Ok(Clamped { value: s, clamped: false })
        }
    }

    /// Derivative of the convex part: `a atanh(s) + (kappa - b) s`.
    pub fn psi0_prime(&self, s: T) -> Result<Clamped<T>, MaterialError> {
        let c = self.saturate(s)?;
        let x = c.value;
        // atanh via two log1p calls stays accurate right up to the endpoints
        let atanh = T::lit(0.5) * (x.ln_1p() - (-x).ln_1p());
        Ok(Clamped { value: self.a * atanh + (self.kappa - self.b) * x, clamped: c.clamped })
    }

    /// `a / (1 - s^2) + kappa - b`.
    pub fn psi0_second(&self, s: T) -> Result<Clamped<T>, MaterialError> {
        let c = self.saturate(s)?;
        let x = c.value;
        Ok(Clamped { value: self.a / (T::one() - x * x) + self.kappa - self.b, clamped: c.clamped })
    }

    /// `psi'(s) = a atanh(s) - b s` for `|s| < 1`.
    /// Positive root of `psi'` (the bulk equilibrium value), if the double well exists (`b > a`).
    pub fn binodal(&self) -> Option<T> {
        if self.b <= self.a {
            return None;
        }
        let f = |s: T| self.psi_prime(s).map(|c| c.value).unwrap_or_else(|_| T::zero());
        let (mut lo, mut hi) = (T::lit(1e-6), T::one() - T::lit(EPS_SAT));
        if f(lo) >= T::zero() {
            return None;
        }
        for _ in 0..200 {
            let mid = T::lit(0.5) * (lo + hi);
            if f(mid) < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(T::lit(0.5) * (lo + hi))
    }

    pub fn psi_prime(&self, s: T) -> Result<Clamped<T>, MaterialError> {
        let c = self.psi0_prime(s)?;
        let x = self.saturate(s)?.value;
        Ok(Clamped { value: c.value - self.kappa * x, clamped: c.clamped })
    }
}

/// `|m_new|^2 m_new - m_old`: the implicit cubic with the explicit linear part.
pub fn cubic_split<T: Real>(m_new: [T; 3], m_old: [T; 3]) -> [T; 3] {
    let s = dot3(m_new, m_new);
    [s * m_new[0] - m_old[0], s * m_new[1] - m_old[1], s * m_new[2] - m_old[2]]
}

/// `|m|^2 m - m`: the fully implicit cubic.
pub fn cubic_implicit<T: Real>(m: [T; 3]) -> [T; 3] {
    cubic_split(m, m)
}

/// Right side minus left side of the splitting inequality
///
/// `(|A|^2-1)^2/4 - (|B|^2-1)^2/4 + (|A|^2-|B|^2)^2/4 + |A.(A-B)|^2/2 + |A-B|^2/2
///   <= (A-B).(|A|^2 A - B)`.
pub fn lemma41_gap<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    let q = T::lit(0.25);
    let h = T::lit(0.5);
    let a2 = dot3(a, a);
    let b2 = dot3(b, b);
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let lhs = q * (a2 - T::one()).powi(2) - q * (b2 - T::one()).powi(2)
        + q * (a2 - b2).powi(2)
        + h * dot3(a, d).powi(2)
        + h * dot3(d, d);
    let rhs = dot3(d, cubic_split(a, b));
    rhs - lhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blend_params() -> Params<f64> {
        Params { xi1: 1.0, xi2: 2.0, eta_blend: 0.1, nu1: 1.0, nu2: 10.0, ..Params::default() }
    }

    #[test]
    fn xi_values() {
        let p = blend_params();
        assert!((p.xi(0.0) - 1.5).abs() < 1e-15);
        // 1 + 1 / (1 + e^-5)
        let expected = 1.0 + 1.0 / (1.0 + (-5.0f64).exp());
        assert!((p.xi(0.5) - expected).abs() < 1e-15);
        assert!((p.xi(0.5) - 1.993307).abs() < 1e-6);
        let flat = Params { xi1: 1.7, xi2: 1.7, ..p };
        for phi in [-3.0, -0.2, 0.0, 0.9] {
            assert_eq!(flat.xi(phi), 1.7);
            assert_eq!(flat.xi_prime(phi), 0.0);
            assert_eq!(flat.h0(phi, 0.3), 0.0);
        }
    }

    #[test]
    fn binodal_is_root_of_psi_prime() {
        let p = Params::<f64>::default();
        let s = p.binodal().unwrap();
        // ln((1+s)/(1-s)) = 4 s
        assert!(((1.0 + s) / (1.0 - s)).ln() - 4.0 * s < 1e-12);
        assert!(s > 0.95 && s < 0.97);
        assert!(Params { a: 2.0, ..p }.binodal().is_none());
    }

    #[test]
    fn xi_prime_matches_finite_difference() {
        let p = blend_params();
        for phi in [-0.4, -0.05, 0.0, 0.13, 0.6] {
            let e = 1e-6;
            let fd = (p.xi(phi + e) - p.xi(phi - e)) / (2.0 * e);
            assert!((fd - p.xi_prime(phi)).abs() < 1e-7);
            let fd2 = (p.xi_prime(phi + e) - p.xi_prime(phi - e)) / (2.0 * e);
            assert!((fd2 - p.xi_second(phi)).abs() < 1e-5);
        }
    }

    #[test]
    fn xi_bounds_dense_sample() {
        let p = blend_params();
        let c3 = p.c3();
        for k in 0..=20000 {
            let phi = -10.0 + 20.0 * k as f64 / 20000.0;
            let x = p.xi(phi);
            assert!(x >= p.c1() && x <= p.c2());
            assert!(p.xi_prime(phi) <= c3 + 1e-15);
            let n = p.nu(phi);
            assert!(n >= 1.0 && n <= 10.0);
        }
    }

    #[test]
    fn h0_branches() {
        let p = blend_params();
        for c in [-0.7, 0.0, 0.25] {
            assert_eq!(p.h0(c, c), p.xi_prime(c));
        }
        let expected = (p.xi(0.5) - p.xi(0.0)) / 0.5;
        assert!((p.h0(0.5, 0.0) - expected).abs() < 1e-15);
        assert!((p.h0(0.5, 0.0) - 0.986614).abs() < 1e-6);
        // continuity across the switch
        let near = p.h0(0.2 + 2e-10, 0.2);
        assert!((near - p.xi_prime(0.2)).abs() < 1e-5);
    }

    #[test]
    fn h0_small_differences_are_accurate() {
        let p = blend_params();
        for m in [-0.3, 0.0, 0.07, 0.5] {
            for d in [1e-9, 1e-7, 1e-5] {
                let (a, b) = (m + d / 2.0, m - d / 2.0);
                // the rounded arguments define the quotient
                let (d, m) = (a - b, 0.5 * (a + b));
                let taylor = p.xi_prime(m) + p.xi_third(m) * d * d / 24.0;
                assert!((p.h0(a, b) - taylor).abs() < 1e-13, "m {m} d {d}: {} vs {taylor}", p.h0(a, b));
            }
            let (a, b) = (m + 0.05, m - 0.02);
            let plain = (p.xi(a) - p.xi(b)) / (a - b);
            assert!((p.h0(a, b) - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn h0_symmetric_and_bounded() {
        let p = blend_params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b = if rng.gen_bool(0.1) { a + rng.gen_range(-1e-11..1e-11) } else { rng.gen_range(-1.0..1.0) };
            assert_eq!(p.h0(a, b), p.h0(b, a));
            let (lo, hi) = (a.min(b), a.max(b));
            let bound = (0..=200).map(|k| p.xi_prime(lo + (hi - lo) * k as f64 / 200.0).abs()).fold(0.0, f64::max);
            assert!(p.h0(a, b).abs() <= bound + 1e-10);
        }
    }

    #[test]
    fn h0_da_matches_finite_difference() {
        let p = blend_params();
        for (a, b) in [(0.3, -0.2), (0.1, 0.10005), (-0.5, 0.4)] {
            let e = 1e-6;
            let fd = (p.h0(a + e, b) - p.h0(a - e, b)) / (2.0 * e);
            assert!((fd - p.h0_da(a, b)).abs() < 1e-5, "{a} {b}: {fd} vs {}", p.h0_da(a, b));
        }
        // the Taylor and quotient branches agree across the switch
        for m in [-0.3, 0.0, 0.1] {
            let inside = p.h0_da(m + 0.99e-5, m);
            let outside = p.h0_da(m + 1.01e-5, m);
            assert!((inside - outside).abs() < 1e-4, "{m}: {inside} vs {outside}");
        }
    }

    #[test]
    fn nu_values() {
        let p = blend_params();
        assert!((p.nu(0.0) - 5.5).abs() < 1e-14);
        assert!((p.nu(0.5) - 9.9398).abs() < 1e-4);
        let flat = Params { nu1: 1.0, nu2: 1.0, ..p };
        assert_eq!(flat.nu(0.37), 1.0);
    }

    #[test]
    fn rho_values() {
        let p = Params { rho1: 1.0, rho2: 3.0, ..Params::default() };
        assert_eq!(p.rho(1.0), 3.0);
        assert_eq!(p.rho(-1.0), 1.0);
        assert_eq!(p.rho(0.0), 2.0);
        let matched = Params { rho1: 2.5, rho2: 2.5, ..p };
        assert_eq!(matched.rho(0.8), 2.5);
        for t in [0.0, 0.25, 0.5, 1.0] {
            let (x, y) = (0.5, -0.75);
            let lhs = p.rho(t * x + (1.0 - t) * y);
            let rhs = t * p.rho(x) + (1.0 - t) * p.rho(y);
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn potential_values() {
        let p = Params { a: 1.0, b: 2.0, kappa: 2.0, ..Params::default() };
        assert_eq!(p.psi(0.0).unwrap(), 0.0);
        assert_eq!(p.psi0_prime(0.0).unwrap().value, 0.0);
        assert!((p.psi0_prime(0.5).unwrap().value - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((p.psi0_prime(0.5).unwrap().value - 0.549306).abs() < 1e-6);
        // endpoint limits: (2 ln 2) / 2 - 1
        assert!((p.psi(1.0).unwrap() - (2f64.ln() - 1.0)).abs() < 1e-15);
        assert!(p.psi(1.0 + 1e-9).is_err());
        assert!(p.psi0_prime(-1.5).is_err());
        let sat = p.psi0_prime(1.0).unwrap();
        assert!(sat.clamped && sat.value.is_finite());
        assert!(!p.psi0_prime(0.999).unwrap().clamped);
    }

    #[test]
    fn convex_part_identity_and_monotonicity() {
        let p = Params { a: 1.3, b: 2.1, kappa: 2.1, ..Params::default() };
        let mut prev = f64::NEG_INFINITY;
        for k in 1..2000 {
            let s = -1.0 + 2.0 * k as f64 / 2000.0;
            let d = p.psi0_prime(s).unwrap().value;
            assert!(d > prev);
            prev = d;
            let analytic = 0.5 * p.a * ((1.0 + s) / (1.0 - s)).ln() - p.b * s;
            assert!((d - p.kappa * s - analytic).abs() < 1e-14 * d.abs().max(1.0), "s = {s}");
            assert!(p.psi0_second(s.clamp(-1.0 + 1e-6, 1.0 - 1e-6)).unwrap().value > 0.0);
        }
        // psi0' is the derivative of psi0
        for s in [-0.9, -0.3, 0.2, 0.7] {
            let e = 1e-6;
            let fd = (p.psi0(s + e).unwrap() - p.psi0(s - e).unwrap()) / (2.0 * e);
            assert!((fd - p.psi0_prime(s).unwrap().value).abs() < 1e-7);
        }
    }

    #[test]
    fn cubic_split_values() {
        assert_eq!(cubic_split([0.0, 1.0, 0.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 0.0]);
        assert_eq!(cubic_split([1.0, 0.0, 0.0], [0.0, 0.0, 0.0]), [1.0, 0.0, 0.0]);
        assert_eq!(cubic_split([2.0, 0.0, 0.0], [1.0, 1.0, 0.0]), [7.0, -1.0, 0.0]);
    }

    #[test]
    fn lemma41_gap_values() {
        let a = [0.3, -1.2, 0.8];
        assert_eq!(lemma41_gap(a, a), 0.0);
        assert!(lemma41_gap::<f64>([1.0, 0.0, 0.0], [0.0, 0.0, 0.0]).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100_000 {
            let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let b = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            assert!(lemma41_gap(a, b) >= -1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(Params::default().validate().is_ok());
        let bad = Params { alpha: -1.0, ..Params::default() };
        assert!(matches!(bad.validate(), Err(MaterialError::Invalid { name: "alpha", .. })));
        let bad = Params { kappa: 0.5, a: 1.0, b: 2.0, ..Params::default() };
        assert!(matches!(bad.validate(), Err(MaterialError::Invalid { name: "kappa", .. })));
    }
}
