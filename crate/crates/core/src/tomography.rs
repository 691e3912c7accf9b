//! Nine-setting two-qubit Pauli tomography.
//!
//! Each setting measures the agent along `axis_a` and the demon along
//! `axis_d`. Outcome `+` is the +1 eigenvalue of the measured Pauli; in the
//! energy basis that is `|0>`, so `<Z> = Pr(0) - Pr(1)`. Outcomes are ordered
//! `(++, +-, -+, --)` with the agent first, which is the computational basis
//! order after the basis change.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::rotation_2x2;
use crate::qlin::{clamp_to_state, kron, pauli, psd_sqrt, eig_hermitian, CMat, HERMITIAN_TOL};
use crate::rng;
use crate::state::DensityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    pub fn matrix(self) -> CMat {
        match self {
            PauliAxis::X => pauli::x(),
            PauliAxis::Y => pauli::y(),
            PauliAxis::Z => pauli::z(),
        }
    }

    /// Rotation `B` with `B P B† = Z`, so a computational-basis readout after
    /// `B` measures `P`.
    pub fn basis_change(self) -> CMat {
        use std::f64::consts::FRAC_PI_2;
        match self {
            PauliAxis::X => rotation_2x2(-FRAC_PI_2, FRAC_PI_2),
            PauliAxis::Y => rotation_2x2(FRAC_PI_2, 0.0),
            PauliAxis::Z => CMat::identity(2),
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "X" | "x" => Some(PauliAxis::X),
            "Y" | "y" => Some(PauliAxis::Y),
            "Z" | "z" => Some(PauliAxis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliSetting {
    pub axis_a: PauliAxis,
    pub axis_d: PauliAxis,
}

impl PauliSetting {
    /// All nine settings, agent axis major.
    pub fn all() -> [PauliSetting; 9] {
        let mut out = [PauliSetting { axis_a: PauliAxis::X, axis_d: PauliAxis::X }; 9];
        for (i, a) in PauliAxis::ALL.iter().enumerate() {
            for (j, d) in PauliAxis::ALL.iter().enumerate() {
                out[3 * i + j] = PauliSetting { axis_a: *a, axis_d: *d };
            }
        }
        out
    }

    pub fn index(&self) -> usize {
        3 * self.axis_a.index() + self.axis_d.index()
    }

    pub fn basis_change(&self) -> CMat {
        kron(&self.axis_a.basis_change(), &self.axis_d.basis_change()).expect("2x2")
    }
}

/// Labels for the four outcomes, in order.
pub const OUTCOME_LABELS: [&str; 4] = ["++", "+-", "-+", "--"];

fn sign_a(outcome: usize) -> f64 {
    if outcome >> 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn sign_d(outcome: usize) -> f64 {
    if outcome & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Born probabilities of the four outcomes of `setting` for a (possibly
/// non-physical) Hermitian `rho`. Entries can be negative for non-PSD input.
pub fn setting_probabilities(rho: &CMat, setting: PauliSetting) -> [f64; 4] {
    let rotated = rho.conjugate_by(&setting.basis_change());
    let d = rotated.diagonal_real();
    [d[0], d[1], d[2], d[3]]
}

/// Zeroes negative entries and rescales to a probability vector.
fn clamp_probabilities(p: [f64; 4]) -> Result<[f64; 4]> {
    let clamped = p.map(|x| x.max(0.0));
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidState(
            "setting distribution not normalizable after clamping".into(),
        ));
    }
    Ok(clamped.map(|x| x / total))
}

/// Samples `shots` readouts of one setting; the stream is keyed by
/// `(seed, setting index)`.
pub fn simulate_setting(rho: &DensityMatrix, setting: PauliSetting, shots: u64, seed: u64) -> Result<[u64; 4]> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be at least 1".into()));
    }
    let probs = clamp_probabilities(setting_probabilities(rho.mat(), setting))?;
    let mut r = rng::stream(seed, setting.index() as u64);
    Ok(rng::multinomial4(&mut r, shots, &probs))
}

/// Counts for all nine settings.
pub fn simulate_counts(rho: &DensityMatrix, shots: u64, seed: u64) -> Result<Vec<(PauliSetting, [u64; 4])>> {
    PauliSetting::all()
        .into_iter()
        .map(|s| Ok((s, simulate_setting(rho, s, shots, seed)?)))
        .collect()
}

/// Linear inversion from per-setting outcome frequencies, indexed by
/// [`PauliSetting::index`].
///
/// `ρ = ¼ Σ_{P,Q ∈ {I,X,Y,Z}} <P⊗Q> P⊗Q`. Two-body terms come from their
/// own setting; one-body terms average the marginal over the three settings
/// that measure that axis; `<I⊗I> = 1`.
pub fn linear_inversion_from_frequencies(freqs: &[[f64; 4]; 9]) -> CMat {
    // corr[p][q], index 0 = identity, 1..=3 = X, Y, Z
    let mut corr = [[0.0f64; 4]; 4];
    corr[0][0] = 1.0;
    for s in PauliSetting::all() {
        let f = &freqs[s.index()];
        let a = s.axis_a.index() + 1;
        let d = s.axis_d.index() + 1;
        for (k, &fk) in f.iter().enumerate() {
            corr[a][d] += sign_a(k) * sign_d(k) * fk;
            corr[a][0] += sign_a(k) * fk / 3.0;
            corr[0][d] += sign_d(k) * fk / 3.0;
        }
    }
    let basis = [pauli::id(), pauli::x(), pauli::y(), pauli::z()];
    let mut rho = CMat::zeros(4);
    for (p, bp) in basis.iter().enumerate() {
        for (q, bq) in basis.iter().enumerate() {
            if corr[p][q] != 0.0 {
                rho = rho + kron(bp, bq).expect("2x2").scale_real(corr[p][q] / 4.0);
            }
        }
    }
    rho.hermitian_part()
}

fn frequencies_from_counts(counts: &[(PauliSetting, [u64; 4])]) -> Result<[[f64; 4]; 9]> {
    let mut freqs = [[0.0; 4]; 9];
    let mut seen = [false; 9];
    for (s, c) in counts {
        let total: u64 = c.iter().sum();
        if total == 0 {
            return Err(Error::MissingSettings(format!("setting {}{} has no counts", s.axis_a, s.axis_d)));
        }
        let i = s.index();
        if seen[i] {
            return Err(Error::MissingSettings(format!("setting {}{} given twice", s.axis_a, s.axis_d)));
        }
        seen[i] = true;
        freqs[i] = c.map(|x| x as f64 / total as f64);
    }
    let missing: Vec<String> = PauliSetting::all()
        .iter()
        .filter(|s| !seen[s.index()])
        .map(|s| format!("{}{}", s.axis_a, s.axis_d))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSettings(format!("missing {}", missing.join(", "))));
    }
    Ok(freqs)
}

/// Linear inversion from raw counts; all nine settings must be present.
pub fn linear_inversion(counts: &[(PauliSetting, [u64; 4])]) -> Result<CMat> {
    Ok(linear_inversion_from_frequencies(&frequencies_from_counts(counts)?))
}

/// Infinite-shot reconstruction: inversion of the exact setting distributions.
pub fn exact_reconstruction(rho: &CMat) -> CMat {
    let mut freqs = [[0.0; 4]; 9];
    for s in PauliSetting::all() {
        freqs[s.index()] = setting_probabilities(rho, s);
    }
    linear_inversion_from_frequencies(&freqs)
}

/// Spin-flipped state `(Y⊗Y) ρ* (Y⊗Y)`.
pub fn spin_flip(rho: &CMat) -> CMat {
    let yy = kron(&pauli::y(), &pauli::y()).expect("2x2");
    yy * rho.conj() * yy
}

/// Eigenvalues of `√ρ ρ̃ √ρ` at or below this are rounding noise. They are
/// squares of the `λ` below, so without the floor a product state would
/// report a concurrence of order `√ε ≈ 1e-8`.
const CONCURRENCE_FLOOR: f64 = 1e-14;

/// Two-qubit concurrence `max{0, λ1 - λ2 - λ3 - λ4}`, `λ` the descending
/// eigenvalues of `R = √(√ρ ρ̃ √ρ)`.
///
/// Negative eigenvalues of `rho` (linear-inversion artefacts) are clamped to
/// zero and the trace renormalized first.
pub fn concurrence(rho: &CMat) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::UnsupportedDimension(rho.dim()));
    }
    let herm = rho.hermiticity_error();
    if herm > HERMITIAN_TOL {
        return Err(Error::NotHermitian(herm));
    }
    let Some(state) = clamp_to_state(&rho.hermitian_part())? else {
        return Ok(0.0);
    };
    let root = psd_sqrt(&state)?;
    let m = (root * spin_flip(&state) * root).hermitian_part();
    let eig = eig_hermitian(&m)?;
    let l: Vec<f64> = eig
        .values()
        .iter()
        .map(|&mu| if mu <= CONCURRENCE_FLOOR { 0.0 } else { mu.sqrt() })
        .collect();
    Ok((l[0] - l[1] - l[2] - l[3]).max(0.0))
}

/// `Tr(ρ²)` without any positivity correction, so unphysical estimates show up as values above 1.
pub fn purity(rho: &CMat) -> f64 {
    (*rho * *rho).trace().re
}

/// Percentile (linear interpolation between order statistics) of sorted data.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricInterval {
    /// Metric of the reconstructed matrix itself.
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Standard deviation over resamples.
    pub std_dev: f64,
}

impl MetricInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn from_samples(point: f64, mut samples: Vec<f64>, low: f64, high: f64) -> Self {
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        MetricInterval {
            point,
            lower: percentile(&samples, low),
            upper: percentile(&samples, high),
            std_dev: var.sqrt(),
        }
    }
}

/// Parametric-bootstrap spread of concurrence and purity. The point estimate
/// is not forced inside `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub shots_per_setting: u64,
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub concurrence: MetricInterval,
    pub purity: MetricInterval,
}

pub const DEFAULT_RESAMPLES: usize = 500;
pub const DEFAULT_SHOTS_PER_SETTING: u64 = 100;
pub const PERCENTILE_LOW: f64 = 16.0;
pub const PERCENTILE_HIGH: f64 = 84.0;

/// Parametric bootstrap around a reconstructed matrix.
///
/// For every resample and setting, the setting's outcome distribution is
/// taken from the diagonal of `rho_hat` in that setting's basis (negative
/// entries clamped, renormalized), `shots` readouts are drawn from it,
/// and the nine synthetic count vectors are inverted again. Resample `r`
/// uses stream `(seed, r)`, so results do not depend on thread count.
pub fn bootstrap(rho_hat: &CMat, shots: u64, resamples: usize, seed: u64) -> Result<BootstrapSummary> {
    if resamples < 2 {
        return Err(Error::InvalidParameter("bootstrap needs at least 2 resamples".into()));
    }
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be at least 1".into()));
    }
    let mut dists = [[0.0; 4]; 9];
    for s in PauliSetting::all() {
        dists[s.index()] = clamp_probabilities(setting_probabilities(rho_hat, s))?;
    }

    let metrics: Vec<(f64, f64)> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(seed, r as u64);
            let mut freqs = [[0.0; 4]; 9];
            for (f, p) in freqs.iter_mut().zip(dists.iter()) {
                let c = rng::multinomial4(&mut stream, shots, p);
                *f = c.map(|x| x as f64 / shots as f64);
            }
            let est = linear_inversion_from_frequencies(&freqs);
            Ok((concurrence(&est)?, purity(&est)))
        })
        .collect::<Result<_>>()?;

    let (conc, pur): (Vec<f64>, Vec<f64>) = metrics.into_iter().unzip();
    Ok(BootstrapSummary {
        resamples,
        shots_per_setting: shots,
        percentile_low: PERCENTILE_LOW,
        percentile_high: PERCENTILE_HIGH,
        concurrence: MetricInterval::from_samples(concurrence(rho_hat)?, conc, PERCENTILE_LOW, PERCENTILE_HIGH),
        purity: MetricInterval::from_samples(purity(rho_hat), pur, PERCENTILE_LOW, PERCENTILE_HIGH),
    })
}

/// Counts, reconstruction and metrics of one tomography run.
#[derive(Debug, Clone, PartialEq)]
pub struct Tomogram {
    pub counts: Vec<(PauliSetting, [u64; 4])>,
    pub shots_per_setting: u64,
    pub rho_hat: CMat,
    pub concurrence: f64,
    pub purity: f64,
    pub bootstrap: Option<BootstrapSummary>,
}

impl Tomogram {
    pub fn from_counts(mut counts: Vec<(PauliSetting, [u64; 4])>) -> Result<Self> {
        let rho_hat = linear_inversion(&counts)?;
        counts.sort_by_key(|(s, _)| s.index());
        let totals: Vec<u64> = counts.iter().map(|(_, c)| c.iter().sum()).collect();
        let shots_per_setting = totals[0];
        if totals.iter().any(|&t| t != shots_per_setting) {
            return Err(Error::InvalidParameter(
                "settings have different shot totals".into(),
            ));
        }
        Ok(Tomogram {
            counts,
            shots_per_setting,
            concurrence: concurrence(&rho_hat)?,
            purity: purity(&rho_hat),
            rho_hat,
            bootstrap: None,
        })
    }

    /// Samples all settings of `rho` and reconstructs.
    pub fn simulate(rho: &DensityMatrix, shots: u64, seed: u64) -> Result<Self> {
        Self::from_counts(simulate_counts(rho, shots, seed)?)
    }

    pub fn with_bootstrap(mut self, resamples: usize, seed: u64) -> Result<Self> {
        self.bootstrap = Some(bootstrap(&self.rho_hat, self.shots_per_setting, resamples, seed)?);
        Ok(self)
    }
}

/// Result of fitting `C(θ) = C0 cos θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C0Fit {
    pub c0: f64,
    /// `None` for a single point.
    pub stderr: Option<f64>,
    pub points: usize,
}

/// One-parameter least squares `c0 = Σ c cos θ / Σ cos² θ`, standard error
/// from the residual variance with `n - 1` degrees of freedom.
pub fn fit_c0(points: &[(f64, f64)]) -> Result<C0Fit> {
    if points.is_empty() {
        return Err(Error::Unidentifiable("no points".into()));
    }
    let sxx: f64 = points.iter().map(|(t, _)| t.cos().powi(2)).sum();
    if sxx < 1e-15 {
        return Err(Error::Unidentifiable("every cos θ is zero".into()));
    }
    let sxy: f64 = points.iter().map(|(t, c)| t.cos() * c).sum();
    let c0 = sxy / sxx;
    let n = points.len();
    let stderr = (n >= 2).then(|| {
        let rss: f64 = points.iter().map(|(t, c)| (c - c0 * t.cos()).powi(2)).sum();
        (rss / (n - 1) as f64 / sxx).sqrt()
    });
    Ok(C0Fit { c0, stderr, points: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{prepare_resource, resource_state_vector, ProtocolConfig};
    use crate::qlin::{CVec, C64};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn bell() -> CMat {
        CMat::projector(&resource_state_vector(0.0))
    }

    /// Pure-state concurrence `2|ψ00 ψ11 - ψ01 ψ10|`.
    fn pure_oracle(psi: &CVec) -> f64 {
        2.0 * (psi.get(0) * psi.get(3) - psi.get(1) * psi.get(2)).norm()
    }

    fn random_state(vals: &[(f64, f64)]) -> CMat {
        let e: Vec<C64> = vals.iter().map(|&(a, b)| C64::new(a, b)).collect();
        let a = CMat::from_rows(&e).unwrap();
        let m = a * a.adjoint();
        m.scale_real(1.0 / m.trace().re)
    }

    #[test]
    fn basis_changes_map_axis_to_z() {
        for axis in PauliAxis::ALL {
            let b = axis.basis_change();
            let got = axis.matrix().conjugate_by(&b);
            assert!(got.max_abs_diff(&pauli::z()) < 1e-15, "{axis:?}");
        }
        assert_eq!(PauliSetting::all().len(), 9);
        let idx: Vec<usize> = PauliSetting::all().iter().map(|s| s.index()).collect();
        assert_eq!(idx, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn bell_zz_is_anticorrelated() {
        let rho = DensityMatrix::new(bell()).unwrap();
        let zz = PauliSetting { axis_a: PauliAxis::Z, axis_d: PauliAxis::Z };
        let c = simulate_setting(&rho, zz, 1000, 4).unwrap();
        assert_eq!(c[0], 0);
        assert_eq!(c[3], 0);
        assert_eq!(c[1] + c[2], 1000);
        assert_eq!(c, simulate_setting(&rho, zz, 1000, 4).unwrap());
    }

    #[test]
    fn maximally_mixed_frequencies_are_uniform() {
        let rho = DensityMatrix::maximally_mixed();
        let xy = PauliSetting { axis_a: PauliAxis::X, axis_d: PauliAxis::Y };
        let n = 400_000;
        let c = simulate_setting(&rho, xy, n, 8).unwrap();
        for k in c {
            let f = k as f64 / n as f64;
            assert!((f - 0.25).abs() < 5.0 * (0.1875 / n as f64).sqrt());
        }
    }

    #[test]
    fn inversion_is_exact_on_exact_moments() {
        for theta in [0.0, 0.4, 1.1, FRAC_PI_2] {
            let rho = CMat::projector(&resource_state_vector(theta));
            assert!(exact_reconstruction(&rho).max_abs_diff(&rho) < 1e-12);
        }
    }

    #[test]
    fn uniform_counts_invert_to_maximally_mixed() {
        let counts: Vec<_> = PauliSetting::all().into_iter().map(|s| (s, [25u64; 4])).collect();
        let rho = linear_inversion(&counts).unwrap();
        assert!(rho.max_abs_diff(&CMat::identity(4).scale_real(0.25)) < 1e-15);
    }

    #[test]
    fn inversion_rejects_missing_and_duplicate_settings() {
        let mut counts: Vec<_> = PauliSetting::all().into_iter().map(|s| (s, [25u64; 4])).collect();
        counts.pop();
        assert!(matches!(linear_inversion(&counts), Err(Error::MissingSettings(m)) if m.contains("ZZ")));
        let dup = counts[0];
        counts.push(dup);
        assert!(linear_inversion(&counts).is_err());
    }

    #[test]
    fn finite_shots_can_be_unphysical() {
        let rho = DensityMatrix::new(bell()).unwrap();
        let any_unphysical = (0..20).any(|seed| {
            let t = Tomogram::simulate(&rho, 100, seed).unwrap();
            let min_eig = eig_hermitian(&t.rho_hat).unwrap().values()[3];
            t.purity > 1.0 && min_eig < 0.0
        });
        assert!(any_unphysical);
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&bell()).unwrap() - 1.0).abs() < 1e-10);
        let product = CVec::from_real(&[0.6, 0.8]).unwrap().kron(&CVec::from_real(&[0.0, 1.0]).unwrap()).unwrap();
        assert!(concurrence(&CMat::projector(&product)).unwrap() < 1e-7);
        let r = CMat::projector(&resource_state_vector(FRAC_PI_3));
        assert!((concurrence(&r).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn concurrence_of_werner_states() {
        // ρ = p|Ψ+><Ψ+| + (1-p) 1/4  has C = max(0, (3p - 1)/2)
        for p in [0.0, 0.2, 1.0 / 3.0, 0.5, 0.8, 1.0] {
            let rho = bell().scale_real(p) + CMat::identity(4).scale_real((1.0 - p) / 4.0);
            let want = ((3.0 * p - 1.0) / 2.0).max(0.0);
            assert!((concurrence(&rho).unwrap() - want).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn concurrence_rejects_non_hermitian() {
        let mut m = bell();
        m.set(0, 1, C64::new(0.3, 0.0));
        assert!(matches!(concurrence(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn concurrence_tracks_prepared_states() {
        for k in 0..33 {
            let theta = k as f64 * FRAC_PI_2 / 32.0;
            let rho = prepare_resource(&ProtocolConfig::ideal(theta)).unwrap();
            let c = concurrence(rho.mat()).unwrap();
            assert!((c - theta.cos().abs()).abs() < 1e-10, "theta {theta}: {c}");
        }
    }

    #[test]
    fn purity_examples() {
        assert!((purity(&bell()) - 1.0).abs() < 1e-15);
        assert_eq!(purity(&CMat::identity(4).scale_real(0.25)), 0.25);
    }

    #[test]
    fn bootstrap_is_deterministic_and_thread_invariant() {
        let rho = CMat::projector(&resource_state_vector(0.5));
        let a = bootstrap(&rho, 100, 64, 9).unwrap();
        let b = bootstrap(&rho, 100, 64, 9).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| bootstrap(&rho, 100, 64, 9).unwrap());
        assert_eq!(a, c);
        assert!(a.concurrence.width() > 0.0);
    }

    #[test]
    fn bootstrap_on_bell_state() {
        let summary = bootstrap(&bell(), 100, 500, 1).unwrap();
        assert!((summary.concurrence.point - 1.0).abs() < 1e-9);
        assert!(summary.concurrence.width() > 0.0);
        assert!(summary.concurrence.upper >= summary.concurrence.lower);
        // every resample's estimate sits below 1 plus the spread
        assert!(summary.concurrence.lower <= 1.0);
    }

    #[test]
    fn bootstrap_rejects_bad_inputs() {
        assert!(bootstrap(&bell(), 100, 1, 0).is_err());
        assert!(bootstrap(&bell(), 0, 10, 0).is_err());
        assert!(bootstrap(&CMat::zeros(4), 10, 10, 0).is_err());
    }

    #[test]
    fn c0_fit_examples() {
        let grid: Vec<f64> = (0..9).map(|k| k as f64 * FRAC_PI_2 / 8.0).collect();
        let exact: Vec<_> = grid.iter().map(|&t| (t, t.cos())).collect();
        let f = fit_c0(&exact).unwrap();
        assert!((f.c0 - 1.0).abs() < 1e-15);
        assert!(f.stderr.unwrap() < 1e-15);

        let scaled: Vec<_> = grid.iter().map(|&t| (t, 0.87 * t.cos())).collect();
        assert!((fit_c0(&scaled).unwrap().c0 - 0.87).abs() < 1e-14);

        let one = fit_c0(&[(0.0, 0.9)]).unwrap();
        assert_eq!(one.c0, 0.9);
        assert_eq!(one.stderr, None);

        assert!(matches!(fit_c0(&[(FRAC_PI_2, 0.3)]), Err(Error::Unidentifiable(_))));
        assert!(fit_c0(&[]).is_err());
    }

    #[test]
    fn concurrence_matches_pure_state_formula() {
        for theta in [0.1, 0.7, 1.3] {
            let psi = resource_state_vector(theta);
            let c = concurrence(&CMat::projector(&psi)).unwrap();
            assert!((c - pure_oracle(&psi)).abs() < 1e-9);
        }
    }

    fn cplx() -> impl Strategy<Value = (f64, f64)> {
        (-1.0..1.0f64, -1.0..1.0f64)
    }

    proptest! {
        #[test]
        fn inversion_reconstructs_random_states(vals in proptest::collection::vec(cplx(), 16)) {
            let rho = random_state(&vals);
            prop_assert!(exact_reconstruction(&rho).max_abs_diff(&rho) < 1e-12);
        }

        #[test]
        fn inversion_preserves_trace(seed in 0u64..1000, theta in 0.0..1.5f64) {
            let rho = DensityMatrix::pure(&resource_state_vector(theta)).unwrap();
            let t = Tomogram::simulate(&rho, 50, seed).unwrap();
            prop_assert!((t.rho_hat.trace().re - 1.0).abs() < 1e-9);
        }

        #[test]
        fn purity_of_states_is_bounded(vals in proptest::collection::vec(cplx(), 16)) {
            let p = purity(&random_state(&vals));
            prop_assert!((0.25 - 1e-12..=1.0 + 1e-12).contains(&p));
        }

        #[test]
        fn concurrence_invariant_under_local_unitaries(
            vals in proptest::collection::vec(cplx(), 16),
            a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64, d in -3.0..3.0f64,
        ) {
            let rho = random_state(&vals);
            let ua = rotation_2x2(a, b) * rotation_2x2(c, 0.3);
            let ud = rotation_2x2(d, a) * rotation_2x2(b, 1.1);
            let moved = rho.conjugate_by(&kron(&ua, &ud).unwrap());
            let c0 = concurrence(&rho).unwrap();
            let c1 = concurrence(&moved).unwrap();
            prop_assert!((c0 - c1).abs() < 1e-9, "{} vs {}", c0, c1);
        }
    }
}
