//! Validated two-qubit density matrices.

use crate::error::{Error, Result};
use crate::qlin::{eig_hermitian, partial_trace, CMat, CVec, Qubit, HERMITIAN_TOL, PSD_CLAMP};

const TRACE_TOL: f64 = 1e-10;

/// A two-qubit state: 4x4, Hermitian, unit trace, positive semidefinite
/// (eigenvalues down to `-1e-9` are tolerated as rounding).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
    trace: f64,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        if mat.dim() != 4 {
            return Err(Error::UnsupportedDimension(mat.dim()));
        }
        let herm = mat.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let trace = mat.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {trace}")));
        }
        let eig = eig_hermitian(&mat)?;
        let min = eig.values()[3];
        if min < PSD_CLAMP {
            return Err(Error::NotPositiveSemidefinite(min));
        }
        Ok(DensityMatrix { mat, trace })
    }

    /// Skips validation; for results of trace-preserving maps on valid states.
    pub(crate) fn from_trusted(mat: CMat) -> Self {
        debug_assert_eq!(mat.dim(), 4);
        DensityMatrix {
            trace: mat.trace().re,
            mat,
        }
    }

    pub fn pure(psi: &CVec) -> Result<Self> {
        if psi.dim() != 4 {
            return Err(Error::UnsupportedDimension(psi.dim()));
        }
        let n = psi.norm();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state vector norm {n}")));
        }
        Ok(Self::from_trusted(CMat::projector(psi)))
    }

    /// `|a d><a d|` for bits `a`, `d`.
    pub fn basis(agent: usize, demon: usize) -> Self {
        Self::from_trusted(CMat::projector(&CVec::basis(4, 2 * agent + demon)))
    }

    pub fn maximally_mixed() -> Self {
        Self::from_trusted(CMat::identity(4).scale_real(0.25))
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn purity(&self) -> f64 {
        (self.mat * self.mat).trace().re
    }

    pub fn reduced(&self, keep: Qubit) -> CMat {
        partial_trace(&self.mat, keep).expect("4x4 by construction")
    }

    /// Population of `|1>` on the demon qubit, i.e. its energy in units of ε.
    pub fn demon_excitation(&self) -> f64 {
        self.mat.get(1, 1).re + self.mat.get(3, 3).re
    }

    pub fn agent_excitation(&self) -> f64 {
        self.mat.get(2, 2).re + self.mat.get(3, 3).re
    }

    /// Computational-basis populations in `|a d>` order.
    pub fn populations(&self) -> [f64; 4] {
        let d = self.mat.diagonal_real();
        [d[0], d[1], d[2], d[3]]
    }
}
