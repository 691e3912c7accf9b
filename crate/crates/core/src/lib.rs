//! Exact and sampled simulation of a two-qubit measure-and-feedback energy
//! extraction protocol, with the analysis chain around it: Pauli tomography
//! with parametric bootstrap, concurrence and purity estimation, and
//! least-squares fitting of coherent gate-phase errors.
//!
//! Two-qubit operators use the basis `|a d>` with the agent qubit major:
//! `(|0_A 0_D>, |0_A 1_D>, |1_A 0_D>, |1_A 1_D>)`. `|1>` is the excited state;
//! energies are in units of the qubit splitting ε.

// NaN-rejecting `!(x > 0.0)` checks and index loops over tiny fixed arrays
// are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod gates;
pub mod noisefit;
pub mod protocol;
pub mod qlin;
pub mod rng;
pub mod state;
pub mod tomography;

pub use error::{Error, Result};
pub use gates::{GateLabel, GateOp, GateRecord, NoiseParams};
pub use protocol::{Energies, FeedbackPolicy, FeedbackWeights, OutcomeTable, ProtocolConfig, QndErrors};
pub use qlin::{CMat, CVec, Qubit, C64};
pub use state::DensityMatrix;
pub use tomography::{BootstrapSummary, PauliAxis, PauliSetting, Tomogram};
pub use noisefit::{CurveDataset, FitResult};
