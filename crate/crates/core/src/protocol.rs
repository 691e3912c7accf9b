//! The demon's measure-and-feedback protocol.
//!
//! Both qubits have the free Hamiltonian `H0 = ε |1><1|`; energies are in
//! units of ε throughout. The demon measures her qubit in the energy basis,
//! swaps the two qubits on outcome `0_D` and does nothing on `1_D`. The
//! protocol runs either exactly (density-matrix arithmetic) or shot by shot.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{self, compose, resource_circuit, GateOp, NoiseParams};
use crate::qlin::{kron, pauli, CMat, CVec, Qubit};
use crate::rng;
use crate::state::DensityMatrix;

/// Branches below this probability are unreachable and never acted on.
pub const BRANCH_EPS: f64 = 1e-12;

/// How the two feedback branches are weighted when forming ρ′.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackWeights {
    /// Weight each branch by its Born probability.
    #[default]
    Measured,
    /// Fixed ½ per branch, the ideal balanced case.
    Balanced,
}

/// Error rates of the emulated QND measurement (fluorescence detection,
/// re-initialization to `|0_D>`, conditional flip). Both default to 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QndErrors {
    /// Probability that the recorded outcome differs from the projected one.
    #[serde(default)]
    pub detection_flip: f64,
    /// Probability that the re-prepared demon state is flipped.
    #[serde(default)]
    pub reprep_flip: f64,
}

impl QndErrors {
    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("detection_flip", self.detection_flip),
            ("reprep_flip", self.reprep_flip),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Resource angle θ, radians, in [0, π/2].
    pub theta: f64,
    #[serde(default)]
    pub noise: NoiseParams,
    pub shots: u64,
    pub seed: u64,
    #[serde(default)]
    pub weights: FeedbackWeights,
    #[serde(default)]
    pub qnd: QndErrors,
}

impl ProtocolConfig {
    pub const DEFAULT_SHOTS: u64 = 3500;
    pub const DEFAULT_SEED: u64 = 0;

    pub fn ideal(theta: f64) -> Self {
        ProtocolConfig {
            theta,
            noise: NoiseParams::zeros(),
            shots: Self::DEFAULT_SHOTS,
            seed: Self::DEFAULT_SEED,
            weights: FeedbackWeights::Measured,
            qnd: QndErrors::default(),
        }
    }

    pub fn with_noise(mut self, noise: NoiseParams) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_shots(mut self, shots: u64, seed: u64) -> Self {
        self.shots = shots;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(0.0..=half_pi + 1e-12).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta = {} outside [0, π/2]",
                self.theta
            )));
        }
        if self.shots == 0 {
            return Err(Error::InvalidParameter("shots must be at least 1".into()));
        }
        self.noise.validate()?;
        self.qnd.validate()
    }
}

/// `(cos θ |1_A 0_D> + |0_A 1_D> - sin θ |0_A 0_D>)/√2`.
pub fn resource_state_vector(theta: f64) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_real(&[-theta.sin() * s, s, theta.cos() * s, 0.0]).expect("4 entries")
}

/// Runs the preparation circuit on `|0_A 0_D>`.
pub fn prepare_resource(cfg: &ProtocolConfig) -> Result<DensityMatrix> {
    cfg.validate()?;
    let psi = compose(&resource_circuit(cfg.theta, &cfg.noise)).apply(&CVec::basis(4, 0));
    Ok(DensityMatrix::from_trusted(CMat::projector(&psi)))
}

/// Demon-qubit projector `1_A ⊗ |d><d|`.
pub fn demon_projector(d: usize) -> CMat {
    kron(&pauli::id(), &pauli::ket_bra(d)).expect("2x2")
}

/// One outcome of the demon's energy measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub outcome: usize,
    pub probability: f64,
    /// `None` when the branch is unreachable (probability below 1e-12).
    pub post_state: Option<DensityMatrix>,
}

/// Projective measurement of the demon qubit in the energy basis.
pub fn measure_demon(rho: &DensityMatrix) -> Result<[Branch; 2]> {
    let make = |d: usize| {
        let proj = demon_projector(d);
        let unnorm = proj * *rho.mat() * proj;
        let p = unnorm.trace().re;
        Branch {
            outcome: d,
            probability: p,
            post_state: (p >= BRANCH_EPS)
                .then(|| DensityMatrix::from_trusted(unnorm.scale_real(1.0 / p))),
        }
    };
    let branches = [make(0), make(1)];
    let total = branches[0].probability + branches[1].probability;
    if total < BRANCH_EPS {
        return Err(Error::DegenerateMeasurement(total));
    }
    Ok(branches)
}

/// Outcome-conditioned unitaries: `on_zero` after `0_D`, `on_one` after `1_D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackPolicy {
    pub on_zero: GateOp,
    pub on_one: GateOp,
}

impl FeedbackPolicy {
    /// Swap on `0_D`, identity on `1_D`.
    pub fn conditional_swap() -> Self {
        FeedbackPolicy {
            on_zero: gates::swap(),
            on_one: gates::identity(),
        }
    }

    /// Identity on both branches: measurement only.
    pub fn passive() -> Self {
        FeedbackPolicy {
            on_zero: gates::identity(),
            on_one: gates::identity(),
        }
    }

    fn unitary(&self, d: usize) -> &GateOp {
        if d == 0 {
            &self.on_zero
        } else {
            &self.on_one
        }
    }
}

/// Named alternatives for brute-force policy comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyAction {
    Identity,
    Swap,
    FlipDemon,
    /// Swap first, then flip the demon.
    SwapThenFlip,
}

impl PolicyAction {
    pub const ALL: [PolicyAction; 4] = [
        PolicyAction::Identity,
        PolicyAction::Swap,
        PolicyAction::FlipDemon,
        PolicyAction::SwapThenFlip,
    ];

    pub fn gate(self) -> GateOp {
        let flip = gates::pauli_gate(gates::GateLabel::PauliX, Some(Qubit::D));
        match self {
            PolicyAction::Identity => gates::identity(),
            PolicyAction::Swap => gates::swap(),
            PolicyAction::FlipDemon => flip,
            PolicyAction::SwapThenFlip => GateOp {
                matrix: flip.matrix * gates::swap().matrix,
                ..flip
            },
        }
    }
}

/// ρ′ for the conditional-swap policy with measured branch weights.
pub fn apply_feedback(branches: &[Branch; 2]) -> Result<DensityMatrix> {
    apply_feedback_with(
        branches,
        &FeedbackPolicy::conditional_swap(),
        FeedbackWeights::Measured,
    )
}

/// `ρ′ = Σ_d w_d U_d ρ_d U_d†` over reachable branches.
pub fn apply_feedback_with(
    branches: &[Branch; 2],
    policy: &FeedbackPolicy,
    weights: FeedbackWeights,
) -> Result<DensityMatrix> {
    let total: f64 = branches.iter().map(|b| b.probability).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BranchNormalization(total));
    }
    let reachable: Vec<&Branch> = branches.iter().filter(|b| b.post_state.is_some()).collect();
    let mut acc = CMat::zeros(4);
    for b in &reachable {
        let w = match weights {
            FeedbackWeights::Measured => b.probability,
            FeedbackWeights::Balanced => 1.0 / reachable.len() as f64,
        };
        let post = b.post_state.as_ref().expect("filtered");
        acc = acc + gates::apply(policy.unitary(b.outcome), post).mat().scale_real(w);
    }
    Ok(DensityMatrix::from_trusted(acc))
}

/// `δW = Tr[(1_A ⊗ |1><1|)(ρ′ - ρ)]`, units of ε.
pub fn demonic_gain(rho: &DensityMatrix, rho_prime: &DensityMatrix) -> f64 {
    rho_prime.demon_excitation() - rho.demon_excitation()
}

/// Energy the demon gains net of what the feedback unitary injected:
/// `δW - Tr[(H_A + H_D)(ρ′ - ρ)]`, which equals the agent's energy loss.
/// For energy-conserving policies (identity, swap) this is `δW`.
pub fn net_extracted_energy(rho: &DensityMatrix, rho_prime: &DensityMatrix) -> f64 {
    rho.agent_excitation() - rho_prime.agent_excitation()
}

/// `|cos θ|`.
pub fn analytic_concurrence(theta: f64) -> f64 {
    theta.cos().abs()
}

/// `cos²θ / 2`.
pub fn analytic_gain(theta: f64) -> f64 {
    analytic_concurrence(theta).powi(2) / 2.0
}

/// Lower bound `½(1 - √(1 - C²))` on the gain for concurrence `c`.
pub fn gain_lower_bound(c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!("concurrence {c} not in [0, 1]")));
    }
    Ok(0.5 * (1.0 - (1.0 - c * c).sqrt()))
}

/// Final joint readout probabilities conditioned on the mid-circuit outcome.
///
/// `pr_joint[d][d'][a']` is the joint probability of mid-circuit outcome `d`
/// followed by final demon outcome `d'` and agent outcome `a'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub theta: f64,
    pub pr_d: [f64; 2],
    pub pr_joint: [[[f64; 2]; 2]; 2],
    /// Raw counts in sampled mode.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counts: Option<[[[u64; 2]; 2]; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shots: Option<u64>,
}

impl OutcomeTable {
    pub fn from_counts(theta: f64, counts: [[[u64; 2]; 2]; 2]) -> Result<Self> {
        let shots: u64 = counts.iter().flatten().flatten().sum();
        if shots == 0 {
            return Err(Error::InvalidParameter("outcome table has no counts".into()));
        }
        let n = shots as f64;
        let mut pr_joint = [[[0.0; 2]; 2]; 2];
        let mut pr_d = [0.0; 2];
        for d in 0..2 {
            let row: u64 = counts[d].iter().flatten().sum();
            pr_d[d] = row as f64 / n;
            for dp in 0..2 {
                for ap in 0..2 {
                    pr_joint[d][dp][ap] = counts[d][dp][ap] as f64 / n;
                }
            }
        }
        Ok(OutcomeTable {
            theta,
            pr_d,
            pr_joint,
            counts: Some(counts),
            shots: Some(shots),
        })
    }

    /// Builds an exact table from joint probabilities; `pr_d` is derived.
    pub fn from_joint(theta: f64, pr_joint: [[[f64; 2]; 2]; 2]) -> Result<Self> {
        let pr_d = [0, 1].map(|d| pr_joint[d].iter().flatten().sum::<f64>());
        let t = OutcomeTable {
            theta,
            pr_d,
            pr_joint,
            counts: None,
            shots: None,
        };
        t.validate(1e-9)?;
        Ok(t)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let all = self.pr_joint.iter().flatten().flatten().chain(self.pr_d.iter());
        for &p in all {
            if !(-tol..=1.0 + tol).contains(&p) {
                return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
            }
        }
        let sum_d = self.pr_d[0] + self.pr_d[1];
        if (sum_d - 1.0).abs() > tol {
            return Err(Error::BranchNormalization(sum_d));
        }
        for d in 0..2 {
            let row: f64 = self.pr_joint[d].iter().flatten().sum();
            if (row - self.pr_d[d]).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "joint row {d} sums to {row}, marginal is {}",
                    self.pr_d[d]
                )));
            }
        }
        Ok(())
    }

    /// `Pr(d', a' | d)`; zero for an unreachable `d`.
    pub fn conditional(&self, d: usize, d_prime: usize, a_prime: usize) -> f64 {
        if self.pr_d[d] < BRANCH_EPS {
            0.0
        } else {
            self.pr_joint[d][d_prime][a_prime] / self.pr_d[d]
        }
    }

    pub fn joint(&self, d: usize, d_prime: usize, a_prime: usize) -> f64 {
        self.pr_joint[d][d_prime][a_prime]
    }

    /// Demon excited after swapping on `0_D`: `Pr(1_D 0_A | 0_D) Pr(0_D)`.
    pub fn swap_success(&self) -> f64 {
        self.joint(0, 1, 0)
    }

    /// Neither party excited after `0_D`: `Pr(0_D 0_A | 0_D) Pr(0_D)`.
    pub fn neither_excited(&self) -> f64 {
        self.joint(0, 0, 0)
    }

    /// Demon already excited, no swap: `Pr(1_D 0_A | 1_D) Pr(1_D)`.
    pub fn initial_success(&self) -> f64 {
        self.joint(1, 1, 0)
    }

    /// Both excited, which only gate errors produce: `Σ_d Pr(1_D 1_A, d)`.
    pub fn both_excited(&self) -> f64 {
        self.joint(0, 1, 1) + self.joint(1, 1, 1)
    }

    /// Total probability of all remaining cells.
    pub fn other(&self) -> f64 {
        1.0 - self.swap_success() - self.neither_excited() - self.initial_success() - self.both_excited()
    }

    /// `(d, d', a')` in the fixed row order used by CSV output and fitting.
    pub fn cells() -> impl Iterator<Item = (usize, usize, usize)> {
        (0..2).flat_map(|d| (0..2).flat_map(move |dp| (0..2).map(move |ap| (d, dp, ap))))
    }
}

/// Per-branch ingredients shared by the exact and sampled modes.
struct BranchModel {
    /// Born probability of each projected outcome.
    p_true: [f64; 2],
    /// Final `(a', d')` populations indexed `[true d][recorded d][re-prepared demon bit]`.
    finals: [[[[f64; 4]; 2]; 2]; 2],
}

impl BranchModel {
    fn build(rho: &DensityMatrix, policy: &FeedbackPolicy) -> Result<Self> {
        let branches = measure_demon(rho)?;
        let mut finals = [[[[0.0; 4]; 2]; 2]; 2];
        for b in &branches {
            let Some(post) = b.post_state else { continue };
            let agent = post.reduced(Qubit::A);
            for recorded in 0..2 {
                for demon in 0..2 {
                    let prepared = kron(&agent, &pauli::ket_bra(demon))?;
                    let out = gates::apply(policy.unitary(recorded), &DensityMatrix::from_trusted(prepared));
                    finals[b.outcome][recorded][demon] = out.populations();
                }
            }
        }
        Ok(BranchModel {
            p_true: [branches[0].probability, branches[1].probability],
            finals,
        })
    }
}

fn flip_weight(p_flip: f64, flipped: bool) -> f64 {
    if flipped {
        p_flip
    } else {
        1.0 - p_flip
    }
}

/// Exact outcome table for the conditional-swap policy.
pub fn outcome_table_exact(cfg: &ProtocolConfig) -> Result<OutcomeTable> {
    outcome_table_exact_with(cfg, &FeedbackPolicy::conditional_swap())
}

pub fn outcome_table_exact_with(
    cfg: &ProtocolConfig,
    policy: &FeedbackPolicy,
) -> Result<OutcomeTable> {
    let rho = prepare_resource(cfg)?;
    let model = BranchModel::build(&rho, policy)?;
    let mut joint = [[[0.0; 2]; 2]; 2];
    for truth in 0..2 {
        if model.p_true[truth] < BRANCH_EPS {
            continue;
        }
        for recorded in 0..2 {
            let w_det = flip_weight(cfg.qnd.detection_flip, recorded != truth);
            for demon in 0..2 {
                let w = model.p_true[truth] * w_det * flip_weight(cfg.qnd.reprep_flip, demon != recorded);
                if w == 0.0 {
                    continue;
                }
                let pops = model.finals[truth][recorded][demon];
                for (dp, ap) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    joint[recorded][dp][ap] += w * pops[2 * ap + dp];
                }
            }
        }
    }
    OutcomeTable::from_joint(cfg.theta, joint)
}

/// Index of the first cumulative bin exceeding `u`.
fn pick(u: f64, probs: &[f64]) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last bin with nonzero weight
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Shot-by-shot emulation. Each shot draws from its own stream keyed by
/// `(seed, shot index)`, so the table does not depend on thread scheduling.
pub fn run_shots(cfg: &ProtocolConfig) -> Result<OutcomeTable> {
    run_shots_with(cfg, &FeedbackPolicy::conditional_swap())
}

pub fn run_shots_with(cfg: &ProtocolConfig, policy: &FeedbackPolicy) -> Result<OutcomeTable> {
    let rho = prepare_resource(cfg)?;
    let model = BranchModel::build(&rho, policy)?;
    let p_true = model.p_true;

    let shot = |i: u64| -> (usize, usize, usize) {
        let mut r = rng::stream(cfg.seed, i);
        let truth = pick(r.random::<f64>(), &p_true);
        // QND emulation: record, re-initialize, conditionally flip
        let recorded = truth ^ usize::from(r.random::<f64>() < cfg.qnd.detection_flip);
        let demon = recorded ^ usize::from(r.random::<f64>() < cfg.qnd.reprep_flip);
        let cell = pick(r.random::<f64>(), &model.finals[truth][recorded][demon]);
        (recorded, cell & 1, cell >> 1)
    };

    let counts = (0..cfg.shots)
        .into_par_iter()
        .fold(
            || [[[0u64; 2]; 2]; 2],
            |mut acc, i| {
                let (d, dp, ap) = shot(i);
                acc[d][dp][ap] += 1;
                acc
            },
        )
        .reduce(
            || [[[0u64; 2]; 2]; 2],
            |mut a, b| {
                for (x, y) in a.iter_mut().flatten().flatten().zip(b.iter().flatten().flatten()) {
                    *x += y;
                }
                a
            },
        );
    OutcomeTable::from_counts(cfg.theta, counts)
}

/// Demon energies read off an outcome table, units of ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    /// Mid-circuit excitation `Pr(d = 1_D)`.
    pub w_i: f64,
    /// Final excitation `Pr(d' = 1_D)`.
    pub w_f: f64,
    pub delta_w: f64,
}

pub fn energies_from_table(t: &OutcomeTable) -> Energies {
    let w_i = t.pr_d[1];
    let w_f: f64 = (0..2)
        .flat_map(|d| (0..2).map(move |ap| (d, ap)))
        .map(|(d, ap)| t.pr_joint[d][1][ap])
        .sum();
    Energies {
        w_i,
        w_f,
        delta_w: w_f - w_i,
    }
}

/// Result of running one full exact protocol instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactRun {
    pub rho: DensityMatrix,
    pub rho_prime: DensityMatrix,
    pub gain: f64,
}

/// Prepare, measure, feed back, and evaluate the gain exactly.
pub fn run_exact(cfg: &ProtocolConfig, policy: &FeedbackPolicy) -> Result<ExactRun> {
    let rho = prepare_resource(cfg)?;
    let branches = measure_demon(&rho)?;
    let rho_prime = apply_feedback_with(&branches, policy, cfg.weights)?;
    Ok(ExactRun {
        rho,
        rho_prime,
        gain: demonic_gain(&rho, &rho_prime),
    })
}

/// One entry of the brute-force policy comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyScore {
    pub on_zero: PolicyAction,
    pub on_one: PolicyAction,
    /// Raw demon energy change.
    pub gain: f64,
    /// Demon gain net of energy injected by the feedback unitary.
    pub net_extracted: f64,
}

/// Scores all 16 combinations of [`PolicyAction`] on the two branches.
pub fn enumerate_policies(cfg: &ProtocolConfig) -> Result<Vec<PolicyScore>> {
    let rho = prepare_resource(cfg)?;
    let branches = measure_demon(&rho)?;
    let mut out = Vec::with_capacity(16);
    for on_zero in PolicyAction::ALL {
        for on_one in PolicyAction::ALL {
            let policy = FeedbackPolicy {
                on_zero: on_zero.gate(),
                on_one: on_one.gate(),
            };
            let rho_prime = apply_feedback_with(&branches, &policy, cfg.weights)?;
            out.push(PolicyScore {
                on_zero,
                on_one,
                gain: demonic_gain(&rho, &rho_prime),
                net_extracted: net_extracted_energy(&rho, &rho_prime),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};

    fn grid(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |k| k as f64 * FRAC_PI_2 / (n - 1) as f64)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn resource_at_zero_is_bell_state() {
        let rho = prepare_resource(&ProtocolConfig::ideal(0.0)).unwrap();
        let bell = CMat::projector(&resource_state_vector(0.0));
        assert!(rho.mat().max_abs_diff(&bell) < 1e-12);
        assert!(close(bell.get(1, 2).re, 0.5, 1e-15));
    }

    #[test]
    fn resource_at_half_pi_is_product() {
        let rho = prepare_resource(&ProtocolConfig::ideal(FRAC_PI_2)).unwrap();
        let minus = CVec::from_real(&[-1.0, 1.0]).unwrap();
        let minus = CMat::projector(&minus).scale_real(0.5);
        let product = kron(&pauli::ket_bra(0), &minus).unwrap();
        assert!(rho.mat().max_abs_diff(&product) < 1e-12);
    }

    #[test]
    fn resource_diagonal_at_pi_over_3() {
        let rho = prepare_resource(&ProtocolConfig::ideal(FRAC_PI_3)).unwrap();
        for (got, want) in rho.populations().iter().zip([3.0 / 8.0, 0.5, 1.0 / 8.0, 0.0]) {
            assert!(close(*got, want, 1e-12));
        }
    }

    #[test]
    fn measurement_is_balanced_and_projects() {
        for theta in grid(33) {
            let rho = prepare_resource(&ProtocolConfig::ideal(theta)).unwrap();
            let b = measure_demon(&rho).unwrap();
            assert!(close(b[0].probability, 0.5, 1e-12));
            assert!(close(b[1].probability, 0.5, 1e-12));
        }
        let ground = DensityMatrix::basis(0, 0);
        let b = measure_demon(&ground).unwrap();
        assert_eq!(b[0].probability, 1.0);
        assert_eq!(b[0].post_state.unwrap(), ground);
        assert!(b[1].post_state.is_none());
    }

    #[test]
    fn zero_branch_at_pi_over_3() {
        let rho = prepare_resource(&ProtocolConfig::ideal(FRAC_PI_3)).unwrap();
        let post = measure_demon(&rho).unwrap()[0].post_state.unwrap();
        let t = FRAC_PI_3;
        let agent = CVec::from_real(&[-t.sin(), t.cos()]).unwrap();
        let expected = kron(&CMat::projector(&agent), &pauli::ket_bra(0)).unwrap();
        assert!(post.mat().max_abs_diff(&expected) < 1e-12);
        assert!(close(post.agent_excitation(), 0.25, 1e-12));
    }

    #[test]
    fn degenerate_measurement_is_rejected() {
        let zero = DensityMatrix::from_trusted(CMat::zeros(4));
        assert!(matches!(
            measure_demon(&zero),
            Err(Error::DegenerateMeasurement(_))
        ));
    }

    #[test]
    fn feedback_examples() {
        let run = run_exact(&ProtocolConfig::ideal(0.0), &FeedbackPolicy::conditional_swap()).unwrap();
        let demon = run.rho_prime.reduced(Qubit::D);
        assert!(demon.max_abs_diff(&pauli::ket_bra(1)) < 1e-12);

        let run = run_exact(&ProtocolConfig::ideal(FRAC_PI_2), &FeedbackPolicy::conditional_swap()).unwrap();
        assert!(close(run.rho_prime.demon_excitation(), 0.5, 1e-12));

        // identity policy just dephases the demon
        let rho = prepare_resource(&ProtocolConfig::ideal(0.4)).unwrap();
        let b = measure_demon(&rho).unwrap();
        let out = apply_feedback_with(&b, &FeedbackPolicy::passive(), FeedbackWeights::Measured).unwrap();
        let dephased = demon_projector(0) * *rho.mat() * demon_projector(0)
            + demon_projector(1) * *rho.mat() * demon_projector(1);
        assert!(out.mat().max_abs_diff(&dephased) < 1e-12);
        assert!(close(demonic_gain(&rho, &out), 0.0, 1e-12));
    }

    #[test]
    fn feedback_rejects_unnormalized_branches() {
        let rho = prepare_resource(&ProtocolConfig::ideal(0.4)).unwrap();
        let mut b = measure_demon(&rho).unwrap();
        b[0].probability = 0.7;
        assert!(matches!(apply_feedback(&b), Err(Error::BranchNormalization(_))));
    }

    #[test]
    fn gain_examples() {
        let gain = |t| run_exact(&ProtocolConfig::ideal(t), &FeedbackPolicy::conditional_swap()).unwrap().gain;
        assert!(close(gain(0.0), 0.5, 1e-12));
        assert!(close(gain(FRAC_PI_2), 0.0, 1e-12));
        assert!(close(gain(FRAC_PI_4), 0.25, 1e-12));
    }

    #[test]
    fn gain_equals_half_concurrence_squared_and_respects_bound() {
        for theta in grid(33) {
            let cfg = ProtocolConfig::ideal(theta);
            let g = run_exact(&cfg, &FeedbackPolicy::conditional_swap()).unwrap().gain;
            let c = analytic_concurrence(theta);
            assert!(close(g, c * c / 2.0, 1e-12), "theta {theta}");
            assert!(g >= gain_lower_bound(c.min(1.0)).unwrap() - 1e-12);
            // balanced weights agree in the ideal protocol
            let cfg_b = ProtocolConfig { weights: FeedbackWeights::Balanced, ..cfg };
            let gb = run_exact(&cfg_b, &FeedbackPolicy::conditional_swap()).unwrap().gain;
            assert!(close(g, gb, 1e-12));
        }
    }

    #[test]
    fn analytic_helpers() {
        assert_eq!(analytic_concurrence(0.0), 1.0);
        assert!(close(analytic_concurrence(FRAC_PI_2), 0.0, 1e-16));
        assert!(close(analytic_concurrence(FRAC_PI_3), 0.5, 1e-15));
        assert_eq!(gain_lower_bound(1.0).unwrap(), 0.5);
        assert_eq!(gain_lower_bound(0.0).unwrap(), 0.0);
        assert!(close(gain_lower_bound(0.6).unwrap(), 0.1, 1e-15));
        assert!(gain_lower_bound(1.2).is_err());
        assert!(gain_lower_bound(-0.1).is_err());
    }

    #[test]
    fn exact_table_ideal_endpoints() {
        let t = outcome_table_exact(&ProtocolConfig::ideal(0.0)).unwrap();
        assert!(close(t.swap_success(), 0.5, 1e-12));
        assert!(close(t.neither_excited(), 0.0, 1e-12));
        assert!(close(t.initial_success(), 0.5, 1e-12));
        assert!(close(t.both_excited(), 0.0, 1e-12));

        let t = outcome_table_exact(&ProtocolConfig::ideal(FRAC_PI_2)).unwrap();
        assert!(close(t.swap_success(), 0.0, 1e-12));
        assert!(close(t.neither_excited(), 0.5, 1e-12));
        assert!(close(t.initial_success(), 0.5, 1e-12));
    }

    #[test]
    fn exact_table_closed_forms_on_grid() {
        for theta in grid(17) {
            let t = outcome_table_exact(&ProtocolConfig::ideal(theta)).unwrap();
            assert!(close(t.swap_success(), theta.cos().powi(2) / 2.0, 1e-12));
            assert!(close(t.neither_excited(), theta.sin().powi(2) / 2.0, 1e-12));
            assert!(close(t.initial_success(), 0.5, 1e-12));
            assert!(close(t.both_excited(), 0.0, 1e-12));
            assert!(close(t.conditional(0, 1, 0), theta.cos().powi(2), 1e-12));
            t.validate(1e-9).unwrap();
        }
    }

    #[test]
    fn gate_errors_produce_double_excitation() {
        let cfg = ProtocolConfig::ideal(0.3).with_noise(NoiseParams::reported());
        let t = outcome_table_exact(&cfg).unwrap();
        assert!(t.both_excited() > 1e-4, "{}", t.both_excited());
        t.validate(1e-9).unwrap();
    }

    #[test]
    fn table_energies_match_density_matrix_route() {
        for noise in [NoiseParams::zeros(), NoiseParams::reported()] {
            for theta in grid(9) {
                let cfg = ProtocolConfig::ideal(theta).with_noise(noise);
                let e = energies_from_table(&outcome_table_exact(&cfg).unwrap());
                let run = run_exact(&cfg, &FeedbackPolicy::conditional_swap()).unwrap();
                assert!(close(e.delta_w, run.gain, 1e-12));
            }
        }
    }

    #[test]
    fn energies_examples() {
        let e = energies_from_table(&outcome_table_exact(&ProtocolConfig::ideal(0.0)).unwrap());
        assert!(close(e.w_i, 0.5, 1e-12) && close(e.w_f, 1.0, 1e-12) && close(e.delta_w, 0.5, 1e-12));
        let e = energies_from_table(&outcome_table_exact(&ProtocolConfig::ideal(FRAC_PI_2)).unwrap());
        assert!(close(e.w_i, 0.5, 1e-12) && close(e.w_f, 0.5, 1e-12) && close(e.delta_w, 0.0, 1e-12));
        let e = energies_from_table(&outcome_table_exact(&ProtocolConfig::ideal(FRAC_PI_4)).unwrap());
        assert!(close(e.w_i, 0.5, 1e-12) && close(e.w_f, 0.75, 1e-12) && close(e.delta_w, 0.25, 1e-12));
    }

    #[test]
    fn shots_examples() {
        let cfg = ProtocolConfig::ideal(0.0).with_shots(3500, 11);
        let t = run_shots(&cfg).unwrap();
        let se = (0.25f64 / 3500.0).sqrt();
        assert!((t.swap_success() - 0.5).abs() < 3.0 * se);
        assert_eq!(t, run_shots(&cfg).unwrap());
        assert_eq!(t.shots, Some(3500));

        let one = run_shots(&ProtocolConfig::ideal(0.7).with_shots(1, 3)).unwrap();
        let nonzero = one.counts.unwrap().iter().flatten().flatten().filter(|&&c| c > 0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn shots_converge_to_exact_table() {
        let cfg = ProtocolConfig::ideal(0.6)
            .with_noise(NoiseParams::reported())
            .with_shots(1_000_000, 2024);
        let exact = outcome_table_exact(&cfg).unwrap();
        let sampled = run_shots(&cfg).unwrap();
        let n = 1_000_000.0;
        for (d, dp, ap) in OutcomeTable::cells() {
            let p = exact.joint(d, dp, ap);
            let se = (p * (1.0 - p) / n).sqrt().max(1.0 / n);
            assert!((sampled.joint(d, dp, ap) - p).abs() <= 5.0 * se, "cell {d}{dp}{ap}");
        }
    }

    #[test]
    fn qnd_errors_are_consistent_between_modes() {
        let cfg = ProtocolConfig {
            qnd: QndErrors { detection_flip: 0.05, reprep_flip: 0.02 },
            ..ProtocolConfig::ideal(0.2).with_shots(400_000, 5)
        };
        let exact = outcome_table_exact(&cfg).unwrap();
        let sampled = run_shots(&cfg).unwrap();
        for (d, dp, ap) in OutcomeTable::cells() {
            let p = exact.joint(d, dp, ap);
            let se = (p * (1.0 - p) / 400_000.0).sqrt().max(1e-6);
            assert!((sampled.joint(d, dp, ap) - p).abs() <= 5.0 * se);
        }
        // detection errors cost gain
        let e = energies_from_table(&exact);
        assert!(e.delta_w < analytic_gain(0.2));
    }

    #[test]
    fn config_validation() {
        assert!(ProtocolConfig::ideal(-0.1).validate().is_err());
        assert!(ProtocolConfig::ideal(2.0).validate().is_err());
        assert!(ProtocolConfig::ideal(0.1).with_shots(0, 1).validate().is_err());
        let mut c = ProtocolConfig::ideal(0.1);
        c.qnd.detection_flip = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn conditional_swap_is_optimal_among_energy_neutral_accounting() {
        for theta in grid(33) {
            let scores = enumerate_policies(&ProtocolConfig::ideal(theta)).unwrap();
            assert_eq!(scores.len(), 16);
            let best = scores.iter().map(|s| s.net_extracted).fold(f64::MIN, f64::max);
            let ours = scores
                .iter()
                .find(|s| s.on_zero == PolicyAction::Swap && s.on_one == PolicyAction::Identity)
                .unwrap();
            assert!(ours.net_extracted >= best - 1e-12);
            // the swap policy injects nothing, so the two scores coincide
            assert!(close(ours.net_extracted, ours.gain, 1e-12));
        }
    }

    #[test]
    fn raw_gain_favours_policies_that_pump_the_demon() {
        let scores = enumerate_policies(&ProtocolConfig::ideal(FRAC_PI_2)).unwrap();
        let pump = scores
            .iter()
            .find(|s| s.on_zero == PolicyAction::FlipDemon && s.on_one == PolicyAction::Identity)
            .unwrap();
        assert!(close(pump.gain, 0.5, 1e-12));
        assert!(close(pump.net_extracted, 0.0, 1e-12));
    }
}
