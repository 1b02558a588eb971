//! Exact complex 2×2 linear algebra.
//!
//! Everything the two-level dynamics needs lives here: Pauli matrices,
//! normalized states, validated unitaries and the closed-form exponential of
//! a constant segment Hamiltonian `Δσx + εσz`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LzError, Result};

/// Unitarity tolerance applied when a [`Unitary2`] is constructed.
pub const UNITARY_TOL: f64 = 1e-10;
/// Normalization tolerance applied to [`State2`].
pub const NORM_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Dense complex 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex2x2 {
    pub m: [[Complex64; 2]; 2],
}

impl Complex2x2 {
    pub const fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub const fn zero() -> Self {
        Self::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    /// Hermitian matrix `[[d0, off], [conj(off), d1]]`, mirrored by construction.
    pub fn hermitian(d0: f64, d1: f64, off: Complex64) -> Self {
        Self::new(Complex64::new(d0, 0.0), off, off.conj(), Complex64::new(d1, 0.0))
    }

    /// Outer product `|a⟩⟨b|`.
    pub fn outer(a: &State2, b: &State2) -> Self {
        let (a, b) = (a.amps, b.amps);
        Self::new(
            a[0] * b[0].conj(),
            a[0] * b[1].conj(),
            a[1] * b[0].conj(),
            a[1] * b[1].conj(),
        )
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.m[row][col]
    }

    #[inline]
    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Self::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    #[inline]
    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    #[inline]
    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    #[inline]
    pub fn scale(&self, s: Complex64) -> Self {
        let m = &self.m;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    #[inline]
    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    #[inline]
    pub fn apply(&self, v: &State2) -> State2 {
        let m = &self.m;
        let [a, b] = v.amps;
        State2 {
            amps: [m[0][0] * a + m[0][1] * b, m[1][0] * a + m[1][1] * b],
        }
    }

    /// `Re tr(self · other)` without forming the product.
    #[inline]
    pub fn re_trace_product(&self, other: &Self) -> f64 {
        let (a, b) = (&self.m, &other.m);
        (a[0][0] * b[0][0] + a[0][1] * b[1][0] + a[1][0] * b[0][1] + a[1][1] * b[1][1]).re
    }

    /// `⟨a|self|b⟩`.
    #[inline]
    pub fn matrix_element(&self, a: &State2, b: &State2) -> Complex64 {
        a.inner(&self.apply(b))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        worst
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.approx_eq(&self.dagger(), tol)
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }
}

impl Mul for Complex2x2 {
    type Output = Self;

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Add for Complex2x2 {
    type Output = Self;

    #[inline]
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        Self::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl Sub for Complex2x2 {
    type Output = Self;

    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for Complex2x2 {
    type Output = Self;

    #[inline]
    fn neg(self) -> Self {
        self.scale_re(-1.0)
    }
}

impl fmt::Display for Complex2x2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]
        )
    }
}

/// Normalized two-level state vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State2 {
    amps: [Complex64; 2],
}

impl State2 {
    /// Accepts amplitudes that are already normalized within [`NORM_TOL`].
    pub fn new(a0: Complex64, a1: Complex64) -> Result<Self> {
        let norm = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        if !norm.is_finite() {
            return Err(LzError::NonFinite("state amplitudes"));
        }
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(LzError::NotNormalized { norm });
        }
        Ok(Self { amps: [a0, a1] })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(a0: Complex64, a1: Complex64) -> Result<Self> {
        let norm = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        if !norm.is_finite() {
            return Err(LzError::NonFinite("state amplitudes"));
        }
        if norm == 0.0 {
            return Err(LzError::NotNormalized { norm });
        }
        Ok(Self {
            amps: [a0 / norm, a1 / norm],
        })
    }

    /// Computational basis state `|0⟩` or `|1⟩`.
    pub fn basis(index: usize) -> Self {
        match index {
            0 => Self { amps: [ONE, ZERO] },
            _ => Self { amps: [ZERO, ONE] },
        }
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        self.amps
    }

    /// `⟨self|other⟩`.
    #[inline]
    pub fn inner(&self, other: &State2) -> Complex64 {
        self.amps[0].conj() * other.amps[0] + self.amps[1].conj() * other.amps[1]
    }

    pub fn norm(&self) -> f64 {
        (self.amps[0].norm_sqr() + self.amps[1].norm_sqr()).sqrt()
    }

    /// The state orthogonal to `self`, `(−b̄, ā)`.
    pub fn orthogonal_complement(&self) -> State2 {
        let [a, b] = self.amps;
        State2 {
            amps: [-b.conj(), a.conj()],
        }
    }

    pub fn with_phase(&self, phi: f64) -> State2 {
        let p = Complex64::from_polar(1.0, phi);
        State2 {
            amps: [self.amps[0] * p, self.amps[1] * p],
        }
    }

    /// Density matrix `|ψ⟩⟨ψ|`.
    pub fn projector(&self) -> Complex2x2 {
        Complex2x2::outer(self, self)
    }
}

/// A 2×2 matrix validated to be unitary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Unitary2(Complex2x2);

impl Unitary2 {
    pub fn new(m: Complex2x2) -> Result<Self> {
        if !m.is_finite() {
            return Err(LzError::NonFinite("unitary entries"));
        }
        let deviation = (m.dagger() * m).max_abs_diff(&Complex2x2::identity());
        let det_dev = (m.det().norm() - 1.0).abs();
        if deviation > UNITARY_TOL || det_dev > UNITARY_TOL {
            return Err(LzError::NotUnitary {
                deviation: deviation.max(det_dev),
            });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Complex2x2::identity())
    }

    /// Skips the unitarity check; used for products of validated factors.
    #[inline]
    pub(crate) fn from_trusted(m: Complex2x2) -> Self {
        Self(m)
    }

    #[inline]
    pub fn matrix(&self) -> &Complex2x2 {
        &self.0
    }

    #[inline]
    pub fn dagger(&self) -> Self {
        Self(self.0.dagger())
    }

    #[inline]
    pub fn apply(&self, v: &State2) -> State2 {
        // unitary action preserves the norm
        self.0.apply(v)
    }

    pub fn with_phase(&self, phi: f64) -> Self {
        Self(self.0.scale(Complex64::from_polar(1.0, phi)))
    }

    /// Named single-qubit gates.
    pub fn named(name: &str) -> Option<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let m = match name.to_ascii_lowercase().as_str() {
            "identity" | "id" | "i" => Complex2x2::identity(),
            "x" | "not" => pauli(Axis::X),
            "y" => pauli(Axis::Y),
            "z" => pauli(Axis::Z),
            "hadamard" | "h" => (pauli(Axis::X) + pauli(Axis::Z)).scale_re(h),
            "s" | "phase" => Complex2x2::new(ONE, ZERO, ZERO, I),
            "t" => Complex2x2::new(ONE, ZERO, ZERO, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)),
            _ => return None,
        };
        Some(Self(m))
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

impl<'de> Deserialize<'de> for Unitary2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Complex2x2::deserialize(d)?;
        Unitary2::new(m).map_err(serde::de::Error::custom)
    }
}

/// Standard Pauli matrix for the axis.
pub fn pauli(axis: Axis) -> Complex2x2 {
    match axis {
        Axis::X => Complex2x2::new(ZERO, ONE, ONE, ZERO),
        Axis::Y => Complex2x2::new(ZERO, -I, I, ZERO),
        Axis::Z => Complex2x2::new(ONE, ZERO, ZERO, -ONE),
    }
}

/// `exp(−iτ(Δσx + εσz)) = cos(rτ)𝕀 − i sin(rτ)(Δσx + εσz)/r`, `r = √(Δ² + ε²)`.
pub fn expm_su2(delta: f64, eps: f64, tau: f64) -> Result<Unitary2> {
    if !(delta.is_finite() && eps.is_finite() && tau.is_finite()) {
        return Err(LzError::NonFinite("segment exponential arguments"));
    }
    if delta <= 0.0 {
        return Err(LzError::InvalidParameter(format!(
            "coupling delta must be positive, got {delta}"
        )));
    }
    Ok(Unitary2(segment_propagator(delta, eps, tau)))
}

/// Unchecked kernel of [`expm_su2`]; `delta > 0` is the caller's contract.
#[inline]
pub(crate) fn segment_propagator(delta: f64, eps: f64, tau: f64) -> Complex2x2 {
    let r = delta.hypot(eps);
    let (s, c) = (r * tau).sin_cos();
    let sx = s * delta / r;
    let sz = s * eps / r;
    Complex2x2::new(
        Complex64::new(c, -sz),
        Complex64::new(0.0, -sx),
        Complex64::new(0.0, -sx),
        Complex64::new(c, sz),
    )
}

/// `U†AU`.
#[inline]
pub fn conjugate_by(u: &Unitary2, a: &Complex2x2) -> Complex2x2 {
    u.0.dagger() * *a * u.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    /// Independent exponential: Taylor series on a scaled-down argument, then repeated squaring.
    fn expm_taylor_squaring(a: &Complex2x2) -> Complex2x2 {
        let norm: f64 = a.m.iter().flatten().map(|z| z.norm()).sum();
        let squarings = (norm.max(1e-300).log2().ceil() + 4.0).max(0.0) as u32;
        let scaled = a.scale_re(0.5f64.powi(squarings as i32));
        let mut term = Complex2x2::identity();
        let mut sum = Complex2x2::identity();
        for k in 1..=30 {
            term = (term * scaled).scale_re(1.0 / k as f64);
            sum = sum + term;
        }
        for _ in 0..squarings {
            sum = sum * sum;
        }
        sum
    }

    fn generator(delta: f64, eps: f64, tau: f64) -> Complex2x2 {
        (pauli(Axis::X).scale_re(delta) + pauli(Axis::Z).scale_re(eps)).scale(Complex64::new(0.0, -tau))
    }

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (pauli(Axis::X), pauli(Axis::Y), pauli(Axis::Z));
        assert!((z * z).approx_eq(&Complex2x2::identity(), 0.0));
        assert!(x.commutator(&y).approx_eq(&z.scale(Complex64::new(0.0, 2.0)), 0.0));
        assert_eq!(y.trace(), ZERO);
        for p in [x, y, z] {
            assert!(p.is_hermitian(0.0));
            assert!((p * p).approx_eq(&Complex2x2::identity(), 0.0));
        }
    }

    #[test]
    fn expm_free_evolution() {
        let t = 0.83;
        let u = expm_su2(1.0, 0.0, t).unwrap();
        let expect = Complex2x2::identity().scale_re(t.cos()) - pauli(Axis::X).scale(Complex64::new(0.0, t.sin()));
        assert!(u.matrix().approx_eq(&expect, 1e-15));
        assert!(expm_su2(1.0, 0.0, 0.0)
            .unwrap()
            .matrix()
            .approx_eq(&Complex2x2::identity(), 0.0));
    }

    #[test]
    fn expm_matches_taylor_oracle() {
        let u = expm_su2(1.0, 3.0, 0.7).unwrap();
        let oracle = expm_taylor_squaring(&generator(1.0, 3.0, 0.7));
        assert!(
            u.matrix().max_abs_diff(&oracle) < 1e-12,
            "{}",
            u.matrix().max_abs_diff(&oracle)
        );
    }

    #[test]
    fn expm_rejects_bad_input() {
        assert!(matches!(expm_su2(1.0, f64::NAN, 1.0), Err(LzError::NonFinite(_))));
        assert!(matches!(expm_su2(1.0, 0.0, f64::INFINITY), Err(LzError::NonFinite(_))));
        assert!(matches!(expm_su2(0.0, 1.0, 1.0), Err(LzError::InvalidParameter(_))));
    }

    #[test]
    fn conjugation_examples() {
        let z = pauli(Axis::Z);
        assert!(conjugate_by(&Unitary2::identity(), &z).approx_eq(&z, 0.0));
        let t = 0.37;
        let u = expm_su2(1.0, 0.0, t).unwrap();
        let expect = z.scale_re((2.0 * t).cos()) + pauli(Axis::Y).scale_re((2.0 * t).sin());
        assert!(conjugate_by(&u, &z).approx_eq(&expect, 1e-15));
    }

    #[test]
    fn states() {
        let s = State2::normalized(Complex64::new(1.0, 0.5), Complex64::new(-0.3, 2.0)).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
        assert!(s.inner(&s.orthogonal_complement()).norm() < 1e-12);
        assert!(State2::new(ONE, ONE).is_err());
        assert!(State2::normalized(ZERO, ZERO).is_err());
        let plus = State2::new(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(FRAC_1_SQRT_2, 0.0)).unwrap();
        assert!((plus.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unitary_validation() {
        assert!(Unitary2::new(pauli(Axis::X).scale_re(1.1)).is_err());
        assert!(Unitary2::new(Complex2x2::zero()).is_err());
        for g in ["hadamard", "x", "y", "z", "s", "t", "identity"] {
            let u = Unitary2::named(g).unwrap();
            assert!(Unitary2::new(*u.matrix()).is_ok(), "{g}");
        }
        assert!(Unitary2::named("cnot").is_none());
    }

    fn complex() -> impl Strategy<Value = Complex64> {
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
    }

    proptest! {
        #[test]
        fn expm_unitary_and_matches_oracle(delta in 0.05..5.0f64, eps in -20.0..20.0f64, tau in 0.0..10.0f64) {
            let u = expm_su2(delta, eps, tau).unwrap();
            prop_assert!(Unitary2::new(*u.matrix()).is_ok());
            let oracle = expm_taylor_squaring(&generator(delta, eps, tau));
            prop_assert!(u.matrix().max_abs_diff(&oracle) < 1e-10);
        }

        #[test]
        fn expm_composition(delta in 0.05..5.0f64, eps in -10.0..10.0f64, t1 in 0.0..5.0f64, t2 in 0.0..5.0f64) {
            let a = expm_su2(delta, eps, t1).unwrap();
            let b = expm_su2(delta, eps, t2).unwrap();
            let ab = expm_su2(delta, eps, t1 + t2).unwrap();
            prop_assert!((a * b).matrix().max_abs_diff(ab.matrix()) < 1e-10);
        }

        #[test]
        fn conjugation_preserves_traceless_hermitian(
            delta in 0.05..5.0f64, eps in -10.0..10.0f64, tau in 0.0..10.0f64,
            d in -3.0..3.0f64, off in complex(),
            a in complex(), b in complex(), c in complex(), e in complex(),
        ) {
            let u = expm_su2(delta, eps, tau).unwrap();
            let h = Complex2x2::hermitian(d, -d, off);
            let out = conjugate_by(&u, &h);
            prop_assert!(out.trace().norm() < 1e-12);
            prop_assert!(out.is_hermitian(1e-12));
            let generic = Complex2x2::new(a, b, c, e);
            prop_assert!((conjugate_by(&u, &generic).trace() - generic.trace()).norm() < 1e-12);
        }
    }
}
