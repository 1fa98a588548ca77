//! Small complex linear algebra used by the single-atom and register code.

use std::ops::Mul;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

pub type C<T> = Complex<T>;

#[inline]
pub fn c<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

/// `e^{iθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> C<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Row-major 2×2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Mat2<T> {
    pub m: [[C<T>; 2]; 2],
}

impl<T: Real> Mat2<T> {
    pub fn new(a: C<T>, b: C<T>, c_: C<T>, d: C<T>) -> Self {
        Self { m: [[a, b], [c_, d]] }
    }

    pub fn identity() -> Self {
        let (o, z) = (C::new(T::one(), T::zero()), C::new(T::zero(), T::zero()));
        Self::new(o, z, z, o)
    }

    pub fn pauli_x() -> Self {
        let (o, z) = (C::new(T::one(), T::zero()), C::new(T::zero(), T::zero()));
        Self::new(z, o, o, z)
    }

    pub fn pauli_y() -> Self {
        let z = C::new(T::zero(), T::zero());
        Self::new(z, C::new(T::zero(), -T::one()), C::new(T::zero(), T::one()), z)
    }

    pub fn pauli_z() -> Self {
        let (o, z) = (C::new(T::one(), T::zero()), C::new(T::zero(), T::zero()));
        Self::new(o, z, z, -o)
    }

    pub fn hadamard() -> Self {
        let s = C::new(T::one() / T::lit(2.0).sqrt(), T::zero());
        Self::new(s, s, s, -s)
    }

    /// `R(θ, φ) = exp(−iθ/2 (cos φ X + sin φ Y))`.
    pub fn rotation(theta: T, phi: T) -> Self {
        let half = theta / T::lit(2.0);
        let (co, si) = (half.cos(), half.sin());
        let diag = C::new(co, T::zero());
        // −i sin(θ/2) e^{∓iφ}
        let off_up = C::new(T::zero(), -si) * cis(-phi);
        let off_dn = C::new(T::zero(), -si) * cis(phi);
        Self::new(diag, off_up, off_dn, diag)
    }

    /// `Rz(θ) = diag(e^{−iθ/2}, e^{iθ/2})`.
    pub fn rz(theta: T) -> Self {
        let z = C::new(T::zero(), T::zero());
        let h = theta / T::lit(2.0);
        Self::new(cis(-h), z, z, cis(h))
    }

    pub fn diag(a: C<T>, d: C<T>) -> Self {
        let z = C::new(T::zero(), T::zero());
        Self::new(a, z, z, d)
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn apply(&self, v: [C<T>; 2]) -> [C<T>; 2] {
        let m = &self.m;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let m = &self.m;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(C::new(-T::one(), T::zero())))
    }

    /// Largest elementwise deviation from `o`.
    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - o.m[i][j]).norm());
            }
        }
        worst
    }

    /// Distance to `o` up to a global phase, `1 − |tr(A†B)|/2`.
    pub fn phase_insensitive_distance(&self, o: &Self) -> T {
        let p = self.adjoint() * *o;
        T::one() - (p.m[0][0] + p.m[1][1]).norm() / T::lit(2.0)
    }

    /// `exp(−iK)` for Hermitian `K` (the anti-Hermitian part of the input is ignored).
    pub fn exp_minus_i_hermitian(k: &Self) -> Self {
        let two = T::lit(2.0);
        let a0 = (k.m[0][0].re + k.m[1][1].re) / two;
        let az = (k.m[0][0].re - k.m[1][1].re) / two;
        let off = (k.m[1][0] + k.m[0][1].conj()) / two;
        let (ax, ay) = (off.re, off.im);
        let n = (ax * ax + ay * ay + az * az).sqrt();
        let (co, sn_over_n) = if n < T::lit(1e-30) { (T::one(), T::one()) } else { (n.cos(), n.sin() / n) };
        let mi = C::new(T::zero(), -sn_over_n);
        // cos n I − i sin n (a·σ)/n
        let m00 = C::new(co, T::zero()) + mi * C::new(az, T::zero());
        let m11 = C::new(co, T::zero()) - mi * C::new(az, T::zero());
        let m01 = mi * C::new(ax, -ay);
        let m10 = mi * C::new(ax, ay);
        Self::new(m00, m01, m10, m11).scale(cis(-a0))
    }
}

impl<T: Real> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rotation_about_x_and_y() {
        let x = Mat2::<f64>::rotation(PI, 0.0);
        let expect = Mat2::pauli_x().scale(c(0.0, -1.0));
        assert!(x.max_abs_diff(&expect) < 1e-15);
        let y = Mat2::<f64>::rotation(PI, PI / 2.0);
        let expect = Mat2::pauli_y().scale(c(0.0, -1.0));
        assert!(y.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn hermitian_exponential_matches_rotation() {
        // exp(−i θ/2 (cos φ X + sin φ Y))
        let (theta, phi) = (1.3f64, 0.4f64);
        let k = Mat2::pauli_x().scale(c(theta / 2.0 * phi.cos(), 0.0)).add(&Mat2::pauli_y().scale(c(theta / 2.0 * phi.sin(), 0.0)));
        let u = Mat2::exp_minus_i_hermitian(&k);
        assert!(u.max_abs_diff(&Mat2::rotation(theta, phi)) < 1e-14);
        let z = Mat2::exp_minus_i_hermitian(&Mat2::pauli_z().scale(c(0.7, 0.0)));
        assert!(z.max_abs_diff(&Mat2::rz(1.4)) < 1e-14);
    }
}
