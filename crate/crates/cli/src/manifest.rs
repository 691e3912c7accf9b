//! Run manifests: one TOML file with an optional section per command.
//!
//! ```toml
//! schema_version = 1
//!
//! [sweep]
//! theta_start = 0.0
//! theta_end = 1.5707963267948966
//! theta_steps = 33
//! mode = "sampled"
//! noise = { delta_phi_over_half_pi = [0.009, 0.068, 0.165] }
//! ```
//!
//! Angles are radians. Unknown keys are rejected. Missing sections and keys
//! take the defaults below.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::{Path, PathBuf};

use demon_core::noisefit::{linspace, FitBounds};
use demon_core::protocol::{FeedbackWeights, ProtocolConfig, QndErrors};
use demon_core::tomography::{DEFAULT_RESAMPLES, DEFAULT_SHOTS_PER_SETTING};
use demon_core::NoiseParams;
use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// A manifest problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = self.path.as_ref().map_or("<manifest>".to_string(), |p| p.display().to_string());
        match self.line {
            Some(line) => write!(f, "{path}:{line}: {}", self.message),
            None => write!(f, "{path}: {}", self.message),
        }
    }
}

impl std::error::Error for ManifestError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Exact,
    Sampled,
}

/// Gate-phase deviations, given either in radians or in units of π/2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_phi: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_phi_over_half_pi: Option<[f64; 3]>,
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<NoiseParams, String> {
        let d = match (self.delta_phi, self.delta_phi_over_half_pi) {
            (Some(_), Some(_)) => return Err("give delta_phi or delta_phi_over_half_pi, not both".into()),
            (Some(d), None) => d,
            (None, Some(u)) => u.map(|x| x * FRAC_PI_2),
            (None, None) => [0.0; 3],
        };
        NoiseParams::new(d).map_err(|e| e.to_string())
    }
}

fn default_theta_end() -> f64 {
    FRAC_PI_2
}
fn default_theta_steps() -> usize {
    33
}
fn default_shots() -> u64 {
    ProtocolConfig::DEFAULT_SHOTS
}
fn default_shots_per_setting() -> u64 {
    DEFAULT_SHOTS_PER_SETTING
}
fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}
fn default_tomo_thetas() -> Vec<f64> {
    linspace(0.0, FRAC_PI_2, 9)
}
fn default_grid_points() -> usize {
    9
}
fn default_ridge() -> f64 {
    1e-12
}
fn default_spread_resamples() -> usize {
    100
}
fn default_schema() -> u32 {
    MANIFEST_SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub theta_start: f64,
    #[serde(default = "default_theta_end")]
    pub theta_end: f64,
    #[serde(default = "default_theta_steps")]
    pub theta_steps: usize,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub weights: FeedbackWeights,
    #[serde(default)]
    pub qnd: QndErrors,
}

impl Default for SweepSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields default")
    }
}

impl SweepSection {
    pub fn thetas(&self) -> Vec<f64> {
        linspace(self.theta_start, self.theta_end, self.theta_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoSection {
    #[serde(default = "default_tomo_thetas")]
    pub thetas: Vec<f64>,
    #[serde(default = "default_shots_per_setting")]
    pub shots_per_setting: u64,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub seed: u64,
    /// `sampled` draws shots; `exact` inverts the exact setting distributions.
    #[serde(default = "sampled")]
    pub mode: Mode,
    #[serde(default)]
    pub noise: NoiseSpec,
}

fn sampled() -> Mode {
    Mode::Sampled
}

impl Default for TomoSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields default")
    }
}

/// Data generated in place of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    #[serde(default)]
    pub theta_start: f64,
    #[serde(default = "default_theta_end")]
    pub theta_end: f64,
    #[serde(default = "seventeen")]
    pub theta_steps: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Shots per θ; absent means exact curves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

fn seventeen() -> usize {
    17
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Outcome-table CSV, relative to the manifest's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticData>,
    #[serde(default)]
    pub init: NoiseSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Refits on resampled count tables; ignored for exact data.
    #[serde(default = "default_spread_resamples")]
    pub spread_resamples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl FitSection {
    pub fn bounds(&self) -> FitBounds {
        self.bounds
            .map_or_else(FitBounds::default, |b| FitBounds { lower: b.lower, upper: b.upper })
    }
}

/// Deliberate defects for checking that `verify` notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Swap after `1_D` instead of `0_D`.
    SwapOnWrongOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub gain: f64,
    pub bound: f64,
    pub balance: f64,
    pub concurrence: f64,
    pub unitarity: f64,
    pub reconstruction: f64,
    /// Maximum |z| of sampled against exact conditional cells.
    pub sampling_z: f64,
    /// Planted-fit recovery, radians.
    pub fit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gain: 1e-12,
            bound: 1e-12,
            balance: 1e-12,
            concurrence: 1e-10,
            unitarity: 1e-12,
            reconstruction: 1e-12,
            sampling_z: 5.0,
            fit: 1e-3 * FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<Fault>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tomo: Option<TomoSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    source: Option<(PathBuf, String)>,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            sweep: None,
            tomo: None,
            fit: None,
            verify: None,
            base_dir: PathBuf::from("."),
            source: None,
        }
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line where `key` is assigned inside `[section]` (or inline under it).
fn find_key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim().to_string();
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if !in_section {
            continue;
        }
        let lhs = line.split('=').next().unwrap_or("").trim();
        if lhs == key || line.contains(&format!("{key} =")) || line.contains(&format!("{key}=")) {
            return Some(i + 1);
        }
    }
    None
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut m: RunManifest = toml::from_str(text).map_err(|e| ManifestError {
            path: None,
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        m.source = Some((PathBuf::new(), text.to_string()));
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|e| ManifestError {
            path: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read manifest: {e}"),
        })?;
        let mut m = Self::parse(&text).map_err(|mut e| {
            e.path = Some(path.to_path_buf());
            e
        })?;
        m.base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        m.source = Some((path.to_path_buf(), text));
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Error pointing at `section.key` in the source text when available.
    pub fn error_at(&self, section: &str, key: &str, message: impl Into<String>) -> ManifestError {
        let (path, line) = match &self.source {
            Some((p, text)) => (
                (!p.as_os_str().is_empty()).then(|| p.clone()),
                find_key_line(text, section, key),
            ),
            None => (None, None),
        };
        ManifestError {
            path,
            line,
            message: format!("[{section}] {key}: {}", message.into()),
        }
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(self.error_at(
                "",
                "schema_version",
                format!("unsupported version {} (expected {MANIFEST_SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if let Some(s) = &self.sweep {
            self.check_sweep(s)?;
        }
        if let Some(t) = &self.tomo {
            self.check_tomo(t)?;
        }
        if let Some(f) = &self.fit {
            self.check_fit(f)?;
        }
        Ok(())
    }

    fn check_sweep(&self, s: &SweepSection) -> Result<(), ManifestError> {
        if s.theta_steps == 0 {
            return Err(self.error_at("sweep", "theta_steps", "must be at least 1"));
        }
        if s.theta_steps > 1 && !(s.theta_end > s.theta_start) {
            return Err(self.error_at("sweep", "theta_end", "must exceed theta_start when theta_steps > 1"));
        }
        for (key, t) in [("theta_start", s.theta_start), ("theta_end", s.theta_end)] {
            if !(0.0..=FRAC_PI_2 + 1e-12).contains(&t) {
                return Err(self.error_at("sweep", key, format!("{t} outside [0, π/2]")));
            }
        }
        if s.shots == 0 {
            return Err(self.error_at("sweep", "shots", "must be at least 1"));
        }
        s.noise.resolve().map_err(|e| self.error_at("sweep", "noise", e))?;
        for (key, p) in [("detection_flip", s.qnd.detection_flip), ("reprep_flip", s.qnd.reprep_flip)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(self.error_at("sweep", key, format!("{p} not in [0, 1]")));
            }
        }
        Ok(())
    }

    fn check_tomo(&self, t: &TomoSection) -> Result<(), ManifestError> {
        if t.thetas.is_empty() {
            return Err(self.error_at("tomo", "thetas", "needs at least one angle"));
        }
        if let Some(bad) = t.thetas.iter().find(|x| !(0.0..=FRAC_PI_2 + 1e-12).contains(*x)) {
            return Err(self.error_at("tomo", "thetas", format!("{bad} outside [0, π/2]")));
        }
        if t.shots_per_setting == 0 {
            return Err(self.error_at("tomo", "shots_per_setting", "must be at least 1"));
        }
        if t.mode == Mode::Sampled && t.resamples == 1 {
            return Err(self.error_at("tomo", "resamples", "use 0 (no bootstrap) or at least 2"));
        }
        t.noise.resolve().map_err(|e| self.error_at("tomo", "noise", e))?;
        Ok(())
    }

    fn check_fit(&self, f: &FitSection) -> Result<(), ManifestError> {
        match (&f.dataset, &f.synthetic) {
            (Some(_), Some(_)) => return Err(self.error_at("fit", "dataset", "give dataset or synthetic, not both")),
            (None, None) => return Err(self.error_at("fit", "dataset", "needs a dataset path or a [fit.synthetic] table")),
            _ => {}
        }
        if let Some(s) = &f.synthetic {
            if s.theta_steps == 0 {
                return Err(self.error_at("fit", "theta_steps", "must be at least 1"));
            }
            if s.theta_steps > 1 && !(s.theta_end > s.theta_start) {
                return Err(self.error_at("fit", "theta_end", "must exceed theta_start"));
            }
            if s.shots == Some(0) {
                return Err(self.error_at("fit", "shots", "must be at least 1"));
            }
            s.noise.resolve().map_err(|e| self.error_at("fit", "noise", e))?;
        }
        f.init.resolve().map_err(|e| self.error_at("fit", "init", e))?;
        f.bounds().validate().map_err(|e| self.error_at("fit", "bounds", e.to_string()))?;
        if !(f.ridge >= 0.0) {
            return Err(self.error_at("fit", "ridge", "must be non-negative"));
        }
        if f.spread_resamples == 1 {
            return Err(self.error_at("fit", "spread_resamples", "use 0 (none) or at least 2"));
        }
        Ok(())
    }

    /// Applies a `--seed` override to every section that has a seed.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.sweep {
            s.seed = seed;
        }
        if let Some(t) = &mut self.tomo {
            t.seed = seed;
        }
        if let Some(f) = &mut self.fit {
            f.seed = seed;
            if let Some(syn) = &mut f.synthetic {
                syn.seed = seed;
            }
        }
        if let Some(v) = &mut self.verify {
            v.seed = seed;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_takes_defaults() {
        let m = RunManifest::parse("").unwrap();
        assert_eq!(m.schema_version, 1);
        assert!(m.sweep.is_none());
        let s = SweepSection::default();
        assert_eq!(s.shots, 3500);
        assert_eq!(s.theta_steps, 33);
        let t = TomoSection::default();
        assert_eq!((t.shots_per_setting, t.resamples), (100, 500));
        assert_eq!(t.mode, Mode::Sampled);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = RunManifest::parse("[sweep]\ntheta_steps = 3\nshots = \"many\"\n").unwrap_err();
        assert_eq!(err.line, Some(3), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let err = RunManifest::parse("[sweep]\n\nthetasteps = 3\n").unwrap_err();
        assert_eq!(err.line, Some(3), "{err}");
    }

    #[test]
    fn semantic_errors_carry_lines() {
        let err = RunManifest::parse("[sweep]\nmode = \"exact\"\ntheta_steps = 0\n").unwrap_err();
        assert_eq!(err.line, Some(3), "{err}");
        assert!(err.to_string().contains("theta_steps"));
    }

    #[test]
    fn noise_in_half_pi_units() {
        let m = RunManifest::parse("[sweep]\nnoise = { delta_phi_over_half_pi = [0.009, 0.068, 0.165] }\n").unwrap();
        let n = m.sweep.unwrap().noise.resolve().unwrap();
        assert_eq!(n, NoiseParams::reported());
    }

    #[test]
    fn round_trips() {
        let text = r#"
[sweep]
theta_steps = 5
mode = "sampled"
noise = { delta_phi = [0.01, 0.02, 0.03] }

[tomo]
thetas = [0.0, 0.5]

[fit]
init = { delta_phi = [0.1, 0.1, 0.1] }
bounds = { lower = [0.0, 0.0, 0.0], upper = [0.3, 0.3, 0.3] }
[fit.synthetic]
shots = 1000

[verify]
inject_fault = "swap_on_wrong_outcome"
[verify.tolerances]
gain = 1e-10
"#;
        let m = RunManifest::parse(text).unwrap();
        let again = RunManifest::parse(&m.to_toml()).unwrap();
        assert_eq!(m.sweep, again.sweep);
        assert_eq!(m.tomo, again.tomo);
        assert_eq!(m.fit, again.fit);
        assert_eq!(m.verify, again.verify);
    }

    #[test]
    fn fit_needs_exactly_one_data_source() {
        assert!(RunManifest::parse("[fit]\n").is_err());
        assert!(RunManifest::parse("[fit]\ndataset = \"a.csv\"\n[fit.synthetic]\n").is_err());
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let mut m = RunManifest::parse("[sweep]\n[tomo]\n[fit.synthetic]\n[verify]\n").unwrap();
        m.override_seed(42);
        assert_eq!(m.sweep.unwrap().seed, 42);
        assert_eq!(m.tomo.unwrap().seed, 42);
        assert_eq!(m.fit.unwrap().synthetic.unwrap().seed, 42);
        assert_eq!(m.verify.unwrap().seed, 42);
    }
}
