//! Dense complex linear algebra for one- and two-qubit operators.
//!
//! Only dimensions 2 and 4 are supported. Two-qubit operators use the basis
//! `|a d>` with the agent index major:
//! `(|0_A 0_D>, |0_A 1_D>, |1_A 0_D>, |1_A 1_D>)`, i.e. index `2 * a + d`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Hermiticity tolerance used by [`eig_hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues above this (but below zero) are clamped to zero by PSD operations.
pub const PSD_CLAMP: f64 = -1e-9;

/// One of the two qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Qubit {
    /// Agent, the major tensor factor.
    A,
    /// Demon, the minor tensor factor.
    D,
}

/// Square complex matrix of dimension 2 or 4, stored row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct CMat {
    dim: usize,
    data: [C64; 16],
}

/// Complex column vector of dimension 2 or 4.
#[derive(Clone, Copy, PartialEq)]
pub struct CVec {
    dim: usize,
    data: [C64; 4],
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 4 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 4, "unsupported dimension {dim}");
        CMat { dim, data: [ZERO; 16] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries; the length must be 4 or 16.
    pub fn from_rows(entries: &[C64]) -> Result<Self> {
        let dim = match entries.len() {
            4 => 2,
            16 => 4,
            n => return Err(Error::UnsupportedDimension(n)),
        };
        let mut m = Self::zeros(dim);
        m.data[..entries.len()].copy_from_slice(entries);
        Ok(m)
    }

    /// Real-valued convenience constructor.
    pub fn from_real(entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_rows(&c)
    }

    pub fn diag(values: &[C64]) -> Result<Self> {
        check_dim(values.len())?;
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = v;
        }
        Ok(m)
    }

    pub fn diag_real(values: &[f64]) -> Result<Self> {
        let c: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&c)
    }

    /// Outer product `|u><v|`.
    pub fn outer(u: &CVec, v: &CVec) -> Self {
        assert_eq!(u.dim, v.dim, "outer product dimension mismatch");
        let mut m = Self::zeros(u.dim);
        for i in 0..u.dim {
            for j in 0..u.dim {
                m.data[i * u.dim + j] = u.data[i] * v.data[j].conj();
            }
        }
        m
    }

    /// Pure-state projector `|psi><psi|`.
    pub fn projector(psi: &CVec) -> Self {
        Self::outer(psi, psi)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        debug_assert!(row < self.dim && col < self.dim);
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.data[row * self.dim + col] = value;
    }

    /// Row-major entries, length `dim * dim`.
    pub fn entries(&self) -> &[C64] {
        &self.data[..self.dim * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[j * self.dim + i] = self.data[i * self.dim + j].conj();
            }
        }
        m
    }

    /// Entry-wise complex conjugate.
    pub fn conj(&self) -> Self {
        let mut m = *self;
        for z in m.data.iter_mut() {
            *z = z.conj();
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[j * self.dim + i] = self.data[i * self.dim + j];
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        for z in m.data.iter_mut() {
            *z *= s;
        }
        m
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// Real parts of the diagonal.
    pub fn diagonal_real(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i).re).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry of `self - self†`.
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// Largest absolute entry of `U†U - I`.
    pub fn unitarity_error(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Self::identity(self.dim))
    }

    /// Hermitian part `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale_real(0.5)
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        assert_eq!(self.dim, v.dim, "dimension mismatch");
        let mut out = CVec::zeros(v.dim);
        for i in 0..self.dim {
            let mut acc = ZERO;
            for k in 0..self.dim {
                acc += self.data[i * self.dim + k] * v.data[k];
            }
            out.data[i] = acc;
        }
        out
    }

    /// `U M U†`.
    pub fn conjugate_by(&self, u: &CMat) -> Self {
        *u * *self * u.adjoint()
    }

    /// Removes the global phase that makes `other` closest to `self`, then
    /// returns the max-abs difference. Useful for gate equality up to phase.
    pub fn max_abs_diff_up_to_phase(&self, other: &CMat) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let overlap: C64 = self
            .entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| b.conj() * a)
            .sum();
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            ONE
        };
        self.max_abs_diff(&other.scale(phase))
    }
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self.get(i, j);
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mul for CMat {
    type Output = CMat;

    fn mul(self, rhs: CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim, "matrix product dimension mismatch");
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for CMat {
    type Output = CMat;

    fn add(self, rhs: CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim, "matrix sum dimension mismatch");
        let mut out = self;
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
        out
    }
}

impl Sub for CMat {
    type Output = CMat;

    fn sub(self, rhs: CMat) -> CMat {
        self + (-rhs)
    }
}

impl Neg for CMat {
    type Output = CMat;

    fn neg(self) -> CMat {
        self.scale_real(-1.0)
    }
}

impl CVec {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 4, "unsupported dimension {dim}");
        CVec { dim, data: [ZERO; 4] }
    }

    pub fn from_slice(entries: &[C64]) -> Result<Self> {
        check_dim(entries.len())?;
        let mut v = Self::zeros(entries.len());
        v.data[..entries.len()].copy_from_slice(entries);
        Ok(v)
    }

    pub fn from_real(entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_slice(&c)
    }

    /// Computational basis ket `|index>`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[index] = ONE;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data[..self.dim]
    }

    pub fn get(&self, i: usize) -> C64 {
        self.data[i]
    }

    pub fn inner(&self, other: &CVec) -> C64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.sqrt()
    }

    pub fn kron(&self, other: &CVec) -> Result<CVec> {
        if self.dim != 2 || other.dim != 2 {
            return Err(Error::DimensionMismatch {
                op: "kron",
                left: self.dim,
                right: other.dim,
            });
        }
        let mut out = CVec::zeros(4);
        for i in 0..2 {
            for j in 0..2 {
                out.data[2 * i + j] = self.data[i] * other.data[j];
            }
        }
        Ok(out)
    }
}

impl fmt::Debug for CVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries()).finish()
    }
}

/// Kronecker product of two single-qubit operators; `a` acts on the agent.
pub fn kron(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.dim != 2 || b.dim != 2 {
        return Err(Error::DimensionMismatch {
            op: "kron",
            left: a.dim,
            right: b.dim,
        });
    }
    let mut out = CMat::zeros(4);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out.data[(2 * i + j) * 4 + 2 * k + l] = a.get(i, k) * b.get(j, l);
                }
            }
        }
    }
    Ok(out)
}

/// Embeds a single-qubit operator on `target`, identity on the other qubit.
pub fn embed(op: &CMat, target: Qubit) -> Result<CMat> {
    let id = CMat::identity(2);
    match target {
        Qubit::A => kron(op, &id),
        Qubit::D => kron(&id, op),
    }
}

/// Reduced state of the `keep` qubit.
pub fn partial_trace(rho: &CMat, keep: Qubit) -> Result<CMat> {
    if rho.dim != 4 {
        return Err(Error::UnsupportedDimension(rho.dim));
    }
    let mut out = CMat::zeros(2);
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = ZERO;
            for k in 0..2 {
                acc += match keep {
                    Qubit::A => rho.get(2 * i + k, 2 * j + k),
                    Qubit::D => rho.get(2 * k + i, 2 * k + j),
                };
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone, Copy)]
pub struct HermitianEigen {
    /// Sorted descending.
    pub values: [f64; 4],
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: CMat,
    dim: usize,
}

impl HermitianEigen {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.dim]
    }

    pub fn reconstruct(&self) -> CMat {
        let lambda: Vec<f64> = self.values().to_vec();
        self.vectors * CMat::diag_real(&lambda).expect("dim checked") * self.vectors.adjoint()
    }
}

fn off_diagonal_norm(m: &CMat) -> f64 {
    let n = m.dim;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m.get(i, j).norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic complex Jacobi eigensolver for Hermitian 2x2 and 4x4 matrices.
pub fn eig_hermitian(h: &CMat) -> Result<HermitianEigen> {
    let herm_err = h.hermiticity_error();
    if herm_err > HERMITIAN_TOL {
        return Err(Error::NotHermitian(herm_err));
    }
    let n = h.dim;
    let mut a = h.hermitian_part();
    let mut v = CMat::identity(n);
    let scale = h.max_abs().max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        if off_diagonal_norm(&a) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                // Phase rotation makes the pivot real, then a real Jacobi rotation kills it.
                let phase = apq / mag;
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = tau.signum() / (tau.abs() + (tau * tau + 1.0).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let mut rot = CMat::identity(n);
                rot.set(p, p, C64::new(c, 0.0));
                rot.set(q, q, phase.conj() * c);
                rot.set(p, q, C64::new(s, 0.0));
                rot.set(q, p, -phase.conj() * s);
                a = rot.adjoint() * a * rot;
                // Kill rounding residue on the pivot.
                a.set(p, q, ZERO);
                a.set(q, p, ZERO);
                v = v * rot;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).re.total_cmp(&a.get(i, i).re));
    let mut values = [0.0; 4];
    let mut vectors = CMat::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        values[col] = a.get(src, src).re;
        for row in 0..n {
            vectors.set(row, col, v.get(row, src));
        }
    }
    Ok(HermitianEigen { values, vectors, dim: n })
}

/// Eigenvalues this small relative to the largest are treated as exact zeros.
const NUMERICAL_ZERO: f64 = 1e-14;

/// Clamps eigenvalues in `[PSD_CLAMP, 0)` to zero; rejects anything more
/// negative. Rounding-level eigenvalues are zeroed so that rank-deficient
/// inputs keep their rank under the square root.
fn clamped_spectrum(eig: &HermitianEigen) -> Result<Vec<f64>> {
    let floor = NUMERICAL_ZERO * eig.values().iter().fold(0.0f64, |m, l| m.max(l.abs()));
    eig.values()
        .iter()
        .map(|&l| {
            if l < PSD_CLAMP {
                Err(Error::NotPositiveSemidefinite(l))
            } else if l <= floor {
                Ok(0.0)
            } else {
                Ok(l)
            }
        })
        .collect()
}

/// Principal square root of a positive semidefinite Hermitian matrix.
pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    let eig = eig_hermitian(m)?;
    let roots: Vec<f64> = clamped_spectrum(&eig)?.iter().map(|l| l.sqrt()).collect();
    Ok(eig.vectors * CMat::diag_real(&roots)? * eig.vectors.adjoint())
}

/// Projects a Hermitian matrix onto the PSD cone by zeroing negative
/// eigenvalues, then rescales to unit trace. Returns `None` when nothing
/// positive is left.
pub fn clamp_to_state(m: &CMat) -> Result<Option<CMat>> {
    let eig = eig_hermitian(m)?;
    let clamped: Vec<f64> = eig.values().iter().map(|l| l.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    let scaled: Vec<f64> = clamped.iter().map(|l| l / total).collect();
    Ok(Some(
        eig.vectors * CMat::diag_real(&scaled)? * eig.vectors.adjoint(),
    ))
}

/// Single-qubit Pauli operators.
pub mod pauli {
    use super::{CMat, C64, I, ONE, ZERO};

    pub fn x() -> CMat {
        CMat::from_rows(&[ZERO, ONE, ONE, ZERO]).unwrap()
    }

    pub fn y() -> CMat {
        CMat::from_rows(&[ZERO, -I, I, ZERO]).unwrap()
    }

    pub fn z() -> CMat {
        CMat::from_rows(&[ONE, ZERO, ZERO, C64::new(-1.0, 0.0)]).unwrap()
    }

    pub fn id() -> CMat {
        CMat::identity(2)
    }

    /// `|k><k|` on one qubit.
    pub fn ket_bra(k: usize) -> CMat {
        let mut m = CMat::zeros(2);
        m.set(k, k, ONE);
        m
    }
}
