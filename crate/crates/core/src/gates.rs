//! Native gates and the resource-preparation circuit.
//!
//! Native operations are single-qubit rotations
//! `R(θ, φ) = exp[-i θ/2 (cos φ X + sin φ Y)]` and the Ising block
//! `exp[-i π/8 Z⊗Z]`. Two such blocks with an `X⊗X` echo in between form the
//! composite controlled-Z π/2 gate `exp[-i π/4 Z⊗Z]`. The circuit contains
//! three composite gates, each with its own coherent phase deviation δΦ:
//!
//! | slot | gate            | used in                    |
//! |------|-----------------|----------------------------|
//! | 1    | `BellPrepCz`    | Bell-state preparation     |
//! | 2    | `CyCz1`         | first half of controlled-Y |
//! | 3    | `CyCz2`         | second half of controlled-Y|
//!
//! A composite gate with deviation δ has total two-qubit phase `π/2 + δ`, i.e.
//! it equals `exp[-i (π/4 + δ/2) Z⊗Z]`; each Ising block carries `δ/4`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlin::{embed, kron, pauli, CMat, Qubit, C64};
use crate::state::DensityMatrix;

/// What a gate is, for manifests and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateLabel {
    /// Composite controlled-Z π/2 in the Bell preparation (slot 1).
    BellPrepCz,
    /// First composite controlled-Z π/2 of the controlled-Y (slot 2).
    CyCz1,
    /// Second composite controlled-Z π/2 of the controlled-Y (slot 3).
    CyCz2,
    /// One `exp[-i (π/8 + δ/4) Z⊗Z]` block.
    ZzBlock,
    LocalRot,
    PauliX,
    PauliY,
    PauliZ,
    Swap,
    /// Whole Bell-preparation block.
    BellPrep,
    /// Whole parametric controlled-Y block.
    ControlledY,
}

/// Per-gate coherent phase deviations, radians, one per composite
/// controlled-Z π/2 gate (slots 1..=3).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseParams {
    pub delta_phi: [f64; 3],
}

impl NoiseParams {
    pub const fn zeros() -> Self {
        NoiseParams { delta_phi: [0.0; 3] }
    }

    pub fn new(delta_phi: [f64; 3]) -> Result<Self> {
        let n = NoiseParams { delta_phi };
        n.validate()?;
        Ok(n)
    }

    /// Best-fit deviations reported for the trapped-ion experiment:
    /// π/2 × (0.009, 0.068, 0.165).
    pub fn reported() -> Self {
        NoiseParams {
            delta_phi: [0.009 * FRAC_PI_2, 0.068 * FRAC_PI_2, 0.165 * FRAC_PI_2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.delta_phi.iter().enumerate() {
            if !d.is_finite() || d.abs() >= FRAC_PI_2 {
                return Err(Error::InvalidParameter(format!(
                    "delta_phi[{}] = {d} must satisfy |δΦ| < π/2",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Deviation for `slot` in 1..=3.
    pub fn slot(&self, slot: usize) -> Result<f64> {
        match slot {
            1..=3 => Ok(self.delta_phi[slot - 1]),
            s => Err(Error::SlotOutOfRange(s)),
        }
    }
}

/// A 4x4 unitary plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub matrix: CMat,
    pub label: GateLabel,
    pub target: Option<Qubit>,
    pub params: Vec<f64>,
    pub delta_phi_slot: Option<usize>,
}

/// Serializable description of a [`GateOp`], without the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub label: GateLabel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Qubit>,
    pub params: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_phi_slot: Option<usize>,
}

impl GateOp {
    fn new(matrix: CMat, label: GateLabel) -> Self {
        GateOp {
            matrix,
            label,
            target: None,
            params: Vec::new(),
            delta_phi_slot: None,
        }
    }

    pub fn record(&self) -> GateRecord {
        GateRecord {
            label: self.label,
            target: self.target,
            params: self.params.clone(),
            delta_phi_slot: self.delta_phi_slot,
        }
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.matrix.unitarity_error() <= tol
    }
}

/// 2x2 rotation `exp[-i θ/2 (cos φ X + sin φ Y)]`.
pub fn rotation_2x2(theta: f64, phi: f64) -> CMat {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    // -i s (cos φ X + sin φ Y) has off-diagonals -i s e^{-iφ} and -i s e^{iφ}
    let upper = C64::new(0.0, -s) * C64::from_polar(1.0, -phi);
    let lower = C64::new(0.0, -s) * C64::from_polar(1.0, phi);
    CMat::from_rows(&[C64::new(c, 0.0), upper, lower, C64::new(c, 0.0)]).expect("2x2")
}

pub fn local_rot(theta: f64, phi: f64, target: Qubit) -> GateOp {
    let mut g = GateOp::new(
        embed(&rotation_2x2(theta, phi), target).expect("2x2 embeds"),
        GateLabel::LocalRot,
    );
    g.target = Some(target);
    g.params = vec![theta, phi];
    g
}

/// Pauli gate on one qubit, or on both when `target` is `None`.
pub fn pauli_gate(label: GateLabel, target: Option<Qubit>) -> GateOp {
    let p = match label {
        GateLabel::PauliX => pauli::x(),
        GateLabel::PauliY => pauli::y(),
        GateLabel::PauliZ => pauli::z(),
        other => panic!("{other:?} is not a Pauli label"),
    };
    let matrix = match target {
        Some(q) => embed(&p, q),
        None => kron(&p, &p),
    }
    .expect("2x2 embeds");
    let mut g = GateOp::new(matrix, label);
    g.target = target;
    g
}

/// `exp[-i angle Z⊗Z]`.
pub fn zz_phase(angle: f64) -> CMat {
    let minus = C64::from_polar(1.0, -angle);
    let plus = C64::from_polar(1.0, angle);
    CMat::diag(&[minus, plus, plus, minus]).expect("4x4")
}

/// One Ising block `exp[-i (π/8 + δ/4) Z⊗Z]`, where `delta_phi` is the
/// deviation of the composite gate it belongs to.
pub fn u_zz(delta_phi: f64) -> GateOp {
    let mut g = GateOp::new(zz_phase(FRAC_PI_8 + delta_phi / 4.0), GateLabel::ZzBlock);
    g.params = vec![delta_phi];
    g
}

/// Composite controlled-Z π/2 gate: `u_zz · X⊗X · u_zz · X⊗X`.
pub fn cz_half(slot: usize, noise: &NoiseParams) -> Result<GateOp> {
    let delta = noise.slot(slot)?;
    let label = match slot {
        1 => GateLabel::BellPrepCz,
        2 => GateLabel::CyCz1,
        _ => GateLabel::CyCz2,
    };
    let block = u_zz(delta).matrix;
    let echo = pauli_gate(GateLabel::PauliX, None).matrix;
    let mut g = GateOp::new(block * echo * block * echo, label);
    g.params = vec![delta];
    g.delta_phi_slot = Some(slot);
    Ok(g)
}

/// Product of a gate sequence given in application order.
pub fn compose(seq: &[GateOp]) -> CMat {
    seq.iter()
        .fold(CMat::identity(4), |acc, g| g.matrix * acc)
}

/// Bell-state preparation in application order:
/// `R_A(π/2, π/2)`, `R_D(π/2, π/2)`, controlled-Z π/2 (slot 1), `R_D(3π/2, 0)`.
///
/// The two rotations take `|00>` to `|++>`; the entangler yields
/// `(1 ⊗ e^{iπ/4 X})|Φ+>` up to phase; the closing demon rotation equals
/// `X · e^{-iπ/4 X}` up to phase and lands on `|Ψ+> = (|01> + |10>)/√2`.
pub fn bell_prep_sequence(noise: &NoiseParams) -> Vec<GateOp> {
    vec![
        local_rot(FRAC_PI_2, FRAC_PI_2, Qubit::A),
        local_rot(FRAC_PI_2, FRAC_PI_2, Qubit::D),
        cz_half(1, noise).expect("slot 1 valid"),
        local_rot(3.0 * FRAC_PI_2, 0.0, Qubit::D),
    ]
}

pub fn bell_prep(noise: &NoiseParams) -> GateOp {
    let mut g = GateOp::new(compose(&bell_prep_sequence(noise)), GateLabel::BellPrep);
    g.params = vec![noise.delta_phi[0]];
    g.delta_phi_slot = Some(1);
    g
}

/// Controlled-Y built from two composite controlled-Z π/2 gates, in
/// application order:
/// `R_A(π, 0)`, cz (slot 2), `R_A(π + angle/2, 0)`, cz (slot 3), `R_A(angle/2, π/2)`.
///
/// With `U = exp[-iπ/4 Z⊗Z]` and `U† = X_A U X_A`, the middle three factors
/// give `U e^{-iβX_A} U† = e^{-iβ Y_A⊗Z_D}` with `β = angle/4`; the final
/// `e^{-iβ Y_A}` completes `e^{-i angle/2 Y_A}` on the `|0_D>` block and the
/// identity on `|1_D>`.
pub fn cy_sequence(angle: f64, noise: &NoiseParams) -> Vec<GateOp> {
    vec![
        local_rot(PI, 0.0, Qubit::A),
        cz_half(2, noise).expect("slot 2 valid"),
        local_rot(PI + angle / 2.0, 0.0, Qubit::A),
        cz_half(3, noise).expect("slot 3 valid"),
        local_rot(angle / 2.0, FRAC_PI_2, Qubit::A),
    ]
}

/// Parametric controlled-Y, `1_A ⊗ |1><1|_D + e^{-i angle/2 Y_A} ⊗ |0><0|_D`
/// up to global phase (exactly so when noise is zero).
pub fn cy(angle: f64, noise: &NoiseParams) -> GateOp {
    let mut g = GateOp::new(compose(&cy_sequence(angle, noise)), GateLabel::ControlledY);
    g.params = vec![angle, noise.delta_phi[1], noise.delta_phi[2]];
    g
}

/// Closed-form controlled-Y, for checking the decomposition.
pub fn cy_closed_form(angle: f64) -> CMat {
    let ry = rotation_2x2(angle, FRAC_PI_2);
    kron(&pauli::id(), &pauli::ket_bra(1)).expect("2x2")
        + kron(&ry, &pauli::ket_bra(0)).expect("2x2")
}

/// The full state-preparation circuit for resource angle `theta`.
///
/// The controlled-Y rotates the agent by `e^{-iθ Y}` (gate angle `2θ`), which
/// takes `|Ψ+>` to `(cos θ |1_A 0_D> + |0_A 1_D> - sin θ |0_A 0_D>)/√2`.
pub fn resource_circuit(theta: f64, noise: &NoiseParams) -> Vec<GateOp> {
    let mut seq = bell_prep_sequence(noise);
    seq.extend(cy_sequence(2.0 * theta, noise));
    seq
}

/// Builds the SWAP from its Pauli expansion `(II + XX + YY + ZZ)/2`.
pub fn swap() -> GateOp {
    let terms = [pauli::id(), pauli::x(), pauli::y(), pauli::z()];
    let m = terms
        .iter()
        .map(|p| kron(p, p).expect("2x2"))
        .fold(CMat::zeros(4), |acc, t| acc + t)
        .scale_real(0.5);
    GateOp::new(m, GateLabel::Swap)
}

pub fn identity() -> GateOp {
    let mut g = GateOp::new(CMat::identity(4), GateLabel::LocalRot);
    g.params = vec![0.0, 0.0];
    g
}

/// `U ρ U†`.
pub fn apply(u: &GateOp, rho: &DensityMatrix) -> DensityMatrix {
    DensityMatrix::from_trusted(rho.mat().conjugate_by(&u.matrix))
}
