//! Least-squares fit of the three coherent gate-phase deviations to outcome
//! probability curves.
//!
//! The loss is the (optionally inverse-variance weighted) sum of squared
//! differences over the eight joint cells `(d, d', a')` of every θ. The search
//! is a fixed-order grid scan over the bounds followed by a bounded
//! Nelder–Mead refinement from the best of the grid optimum and the caller's
//! initial point. Nothing in the fit is random, so equal inputs give equal
//! outputs bit for bit.
//!
//! The readout only sees energy-basis populations, and some directions in δΦ
//! space are flat or nearly so. With `δΦ₁ = 0` the state entering the first
//! controlled-Y gate is a Z⊗Z eigenstate, so `δΦ₂` alone has no effect at
//! all. A tiny ridge term `ridge·|δΦ|²` breaks such ties toward the smallest
//! deviation; its pull on an identifiable optimum is far below any tolerance
//! of interest.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::NoiseParams;
use crate::protocol::{self, OutcomeTable, ProtocolConfig};
use crate::rng;
use crate::tomography::{self, C0Fit};

/// Outcome tables on a strictly increasing θ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDataset {
    pub tables: Vec<OutcomeTable>,
}

impl CurveDataset {
    pub fn new(tables: Vec<OutcomeTable>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidParameter("curve dataset is empty".into()));
        }
        for w in tables.windows(2) {
            if !(w[1].theta > w[0].theta) {
                return Err(Error::InvalidParameter(format!(
                    "θ grid must be strictly increasing ({} then {})",
                    w[0].theta, w[1].theta
                )));
            }
        }
        for t in &tables {
            t.validate(1e-9)?;
        }
        Ok(CurveDataset { tables })
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.tables.iter().map(|t| t.theta).collect()
    }

    /// True when every table carries raw counts.
    pub fn has_counts(&self) -> bool {
        self.tables.iter().all(|t| t.counts.is_some())
    }
}

/// Evenly spaced grid of `n` points over `[start, end]`.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Exact conditional-swap outcome tables under `noise`.
pub fn model_curves(noise: &NoiseParams, thetas: &[f64]) -> Result<CurveDataset> {
    noise.validate()?;
    let tables = thetas
        .iter()
        .map(|&theta| protocol::outcome_table_exact(&ProtocolConfig::ideal(theta).with_noise(*noise)))
        .collect::<Result<Vec<_>>>()?;
    CurveDataset::new(tables)
}

/// Shot-sampled tables; θ index `i` uses seed `derive_seed(seed, i)`.
pub fn sample_curves(noise: &NoiseParams, thetas: &[f64], shots: u64, seed: u64) -> Result<CurveDataset> {
    let tables = thetas
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let cfg = ProtocolConfig::ideal(theta)
                .with_noise(*noise)
                .with_shots(shots, rng::derive_seed(seed, i as u64));
            protocol::run_shots(&cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    CurveDataset::new(tables)
}

/// Per-parameter search interval, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for FitBounds {
    /// `[0, 0.25·π/2]` for each slot.
    fn default() -> Self {
        FitBounds {
            lower: [0.0; 3],
            upper: [0.25 * FRAC_PI_2; 3],
        }
    }
}

impl FitBounds {
    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidParameter(format!("bounds for slot {} are [{lo}, {hi}]", k + 1)));
            }
            if lo <= -FRAC_PI_2 || hi >= FRAC_PI_2 {
                return Err(Error::InvalidParameter(format!(
                    "bounds for slot {} must lie inside (-π/2, π/2)",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    fn clamp(&self, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|k| x[k].clamp(self.lower[k], self.upper[k]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Grid points per axis for the initial scan; 0 skips the scan.
    pub grid_points: usize,
    pub max_iterations: usize,
    /// Stop once the simplex diameter falls below this, radians.
    pub xtol: f64,
    /// Weight cells by inverse binomial variance (sampled data only).
    pub weighted: bool,
    /// Coefficient of the `|δΦ|²` tie-breaking term.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grid_points: 9,
            max_iterations: 4000,
            xtol: 1e-10,
            weighted: false,
            ridge: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub delta_phi: [f64; 3],
    /// Data loss at `delta_phi`, without the ridge term.
    pub residual: f64,
    /// Standard deviation of refits on resampled data, when computed.
    pub per_parameter_spread: Option<[f64; 3]>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

impl FitResult {
    pub fn noise(&self) -> NoiseParams {
        NoiseParams { delta_phi: self.delta_phi }
    }
}

fn cell_weights(t: &OutcomeTable, weighted: bool) -> [f64; 8] {
    let (true, Some(n)) = (weighted, t.shots) else {
        return [1.0; 8];
    };
    let n = n as f64;
    let mut w = [0.0; 8];
    for (i, (d, dp, ap)) in OutcomeTable::cells().enumerate() {
        let p = t.joint(d, dp, ap);
        // floor keeps empty cells finite
        let var = (p * (1.0 - p) / n).max(1.0 / (n * n));
        w[i] = 1.0 / var;
    }
    w
}

/// Loss of `data` against the model at `noise`.
pub fn residual(data: &CurveDataset, noise: &NoiseParams, weighted: bool) -> Result<f64> {
    let model = model_curves(noise, &data.thetas())?;
    Ok(loss_against(data, &model, weighted))
}

fn loss_against(data: &CurveDataset, model: &CurveDataset, weighted: bool) -> f64 {
    data.tables
        .iter()
        .zip(&model.tables)
        .map(|(obs, m)| {
            let w = cell_weights(obs, weighted);
            OutcomeTable::cells()
                .enumerate()
                .map(|(i, (d, dp, ap))| {
                    let r = obs.joint(d, dp, ap) - m.joint(d, dp, ap);
                    w[i] * r * r
                })
                .sum::<f64>()
        })
        .sum()
}

struct Objective<'a> {
    data: &'a CurveDataset,
    thetas: Vec<f64>,
    weighted: bool,
    ridge: f64,
}

impl Objective<'_> {
    fn loss(&self, x: [f64; 3]) -> f64 {
        match model_curves(&NoiseParams { delta_phi: x }, &self.thetas) {
            Ok(m) => loss_against(self.data, &m, self.weighted),
            Err(_) => f64::INFINITY,
        }
    }

    fn eval(&self, x: [f64; 3]) -> f64 {
        self.loss(x) + self.ridge * x.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Fits with default options.
pub fn fit(data: &CurveDataset, init: &NoiseParams, bounds: &FitBounds) -> Result<FitResult> {
    fit_with(data, init, bounds, &FitOptions::default())
}

pub fn fit_with(data: &CurveDataset, init: &NoiseParams, bounds: &FitBounds, opts: &FitOptions) -> Result<FitResult> {
    bounds.validate()?;
    init.validate()?;
    let obj = Objective {
        data,
        thetas: data.thetas(),
        weighted: opts.weighted,
        ridge: opts.ridge,
    };
    if !(opts.ridge >= 0.0) {
        return Err(Error::InvalidParameter("ridge must be non-negative".into()));
    }

    let start = bounds.clamp(init.delta_phi);
    let mut best = (start, obj.eval(start));
    let mut evaluations = 1;

    if opts.grid_points > 0 {
        let axes: Vec<Vec<f64>> = (0..3)
            .map(|k| linspace(bounds.lower[k], bounds.upper[k], opts.grid_points))
            .collect();
        let n = opts.grid_points;
        let losses: Vec<([f64; 3], f64)> = (0..n * n * n)
            .into_par_iter()
            .map(|i| {
                let x = [axes[0][i / (n * n)], axes[1][(i / n) % n], axes[2][i % n]];
                (x, obj.eval(x))
            })
            .collect();
        evaluations += losses.len();
        // strict comparison keeps the earliest index on ties
        for (x, f) in losses {
            if f < best.1 {
                best = (x, f);
            }
        }
    }

    let step: [f64; 3] = [0, 1, 2].map(|k| {
        let width = bounds.upper[k] - bounds.lower[k];
        let cells = opts.grid_points.max(2) - 1;
        (width / cells as f64 / 2.0).max(1e-6)
    });
    let nm = nelder_mead(|x| obj.eval(x), best.0, step, bounds, opts);
    evaluations += nm.evaluations;

    Ok(FitResult {
        delta_phi: nm.x,
        residual: obj.loss(nm.x),
        per_parameter_spread: None,
        converged: nm.converged,
        iterations: nm.iterations,
        evaluations,
    })
}

struct SimplexResult {
    x: [f64; 3],
    converged: bool,
    iterations: usize,
    evaluations: usize,
}

/// Nelder–Mead with projection onto the bounds box.
fn nelder_mead<F: Fn([f64; 3]) -> f64>(
    f: F,
    x0: [f64; 3],
    step: [f64; 3],
    bounds: &FitBounds,
    opts: &FitOptions,
) -> SimplexResult {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let mut evals = 0usize;
    let mut eval = |x: [f64; 3]| {
        evals += 1;
        f(x)
    };

    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((x0, eval(x0)));
    for k in 0..3 {
        let mut x = x0;
        // step inward if the vertex would leave the box
        x[k] = if x0[k] + step[k] <= bounds.upper[k] { x0[k] + step[k] } else { x0[k] - step[k] };
        let x = bounds.clamp(x);
        simplex.push((x, eval(x)));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| (0..3).map(|k| (x[k] - simplex[0].0[k]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < opts.xtol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += x[k] / 3.0;
            }
        }
        let worst = simplex[3];
        let toward = |t: f64| bounds.clamp([0, 1, 2].map(|k| centroid[k] + t * (worst.0[k] - centroid[k])));

        let xr = toward(-ALPHA);
        let fr = eval(xr);
        if fr < simplex[0].1 {
            let xe = toward(-GAMMA);
            let fe = eval(xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = toward(-RHO);
            (x, eval(x))
        } else {
            let x = toward(RHO);
            (x, eval(x))
        };
        if fc < worst.1.min(fr) {
            simplex[3] = (xc, fc);
            continue;
        }
        let best = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            let x = [0, 1, 2].map(|k| best[k] + SIGMA * (v.0[k] - best[k]));
            *v = (x, eval(x));
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    SimplexResult {
        x: simplex[0].0,
        converged,
        iterations,
        evaluations: evals,
    }
}

/// Resamples every count table multinomially from its own frequencies;
/// θ index `i` draws from stream `i` of `seed`.
pub fn resample_counts(data: &CurveDataset, seed: u64) -> Result<CurveDataset> {
    let tables = data
        .tables
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let shots = t
                .shots
                .ok_or_else(|| Error::InvalidParameter("resampling needs count tables".into()))?;
            let probs: Vec<f64> = OutcomeTable::cells().map(|(d, dp, ap)| t.joint(d, dp, ap)).collect();
            let mut r = rng::stream(seed, i as u64);
            let draw = rng::multinomial(&mut r, shots, &probs);
            let mut counts = [[[0u64; 2]; 2]; 2];
            for ((d, dp, ap), c) in OutcomeTable::cells().zip(draw) {
                counts[d][dp][ap] = c;
            }
            OutcomeTable::from_counts(t.theta, counts)
        })
        .collect::<Result<Vec<_>>>()?;
    CurveDataset::new(tables)
}

/// Attaches the refit spread: the standard deviation of `resamples` full
/// refits (grid scan included, so distant optima show up) on count tables
/// resampled from `data`.
pub fn with_refit_spread(
    data: &CurveDataset,
    result: FitResult,
    bounds: &FitBounds,
    opts: &FitOptions,
    resamples: usize,
    seed: u64,
) -> Result<FitResult> {
    if resamples < 2 {
        return Err(Error::InvalidParameter("refit spread needs at least 2 resamples".into()));
    }
    let start = result.noise();
    let fits: Vec<[f64; 3]> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let resampled = resample_counts(data, rng::derive_seed(seed, r as u64))?;
            Ok(fit_with(&resampled, &start, bounds, opts)?.delta_phi)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = fits.len() as f64;
    let spread = [0, 1, 2].map(|k| {
        let mean = fits.iter().map(|x| x[k]).sum::<f64>() / n;
        (fits.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    Ok(FitResult {
        per_parameter_spread: Some(spread),
        ..result
    })
}

/// Concurrence amplitude C₀ implied by the noise model: the `C₀ cos θ` fit to
/// the concurrence of the exactly prepared (noisy) states.
pub fn model_implied_c0(noise: &NoiseParams, thetas: &[f64]) -> Result<C0Fit> {
    let points = thetas
        .iter()
        .map(|&theta| {
            let rho = protocol::prepare_resource(&ProtocolConfig::ideal(theta).with_noise(*noise))?;
            Ok((theta, tomography::concurrence(rho.mat())?))
        })
        .collect::<Result<Vec<_>>>()?;
    tomography::fit_c0(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        linspace(0.0, FRAC_PI_2, 9)
    }

    #[test]
    fn model_cells_are_normalized() {
        let data = model_curves(&NoiseParams::reported(), &grid()).unwrap();
        for t in &data.tables {
            let s: f64 = t.pr_joint.iter().flatten().flatten().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reported_noise_populates_double_excitation() {
        let ideal = model_curves(&NoiseParams::zeros(), &grid()).unwrap();
        let noisy = model_curves(&NoiseParams::reported(), &grid()).unwrap();
        assert!(ideal.tables.iter().all(|t| t.both_excited() < 1e-12));
        assert!(noisy.tables.iter().any(|t| t.both_excited() > 1e-4));
        assert!(noisy.tables.iter().any(|t| (t.initial_success() - 0.5).abs() > 1e-4));
    }

    #[test]
    fn rejects_unsorted_grid() {
        let a = model_curves(&NoiseParams::zeros(), &[0.2]).unwrap();
        let b = model_curves(&NoiseParams::zeros(), &[0.1]).unwrap();
        let tables = vec![a.tables[0].clone(), b.tables[0].clone()];
        assert!(CurveDataset::new(tables).is_err());
    }

    #[test]
    fn each_slot_is_visible_in_the_curves() {
        let base = model_curves(&NoiseParams::reported(), &grid()).unwrap();
        for k in 0..3 {
            let mut d = NoiseParams::reported().delta_phi;
            d[k] += 0.05;
            let moved = model_curves(&NoiseParams { delta_phi: d }, &grid()).unwrap();
            let change = loss_against(&base, &moved, false);
            assert!(change > 1e-8, "slot {} change {change}", k + 1);
        }
    }

    #[test]
    fn slot_two_is_invisible_without_bell_error() {
        let base = model_curves(&NoiseParams::zeros(), &grid()).unwrap();
        let moved = model_curves(&NoiseParams { delta_phi: [0.0, 0.2, 0.0] }, &grid()).unwrap();
        assert!(loss_against(&base, &moved, false) < 1e-28);
    }

    #[test]
    fn recovers_zero_noise() {
        let data = model_curves(&NoiseParams::zeros(), &grid()).unwrap();
        let init = NoiseParams::new([0.05, 0.05, 0.05]).unwrap();
        let r = fit(&data, &init, &FitBounds::default()).unwrap();
        for d in r.delta_phi {
            assert!(d.abs() <= 1e-4 * FRAC_PI_2, "{:?}", r.delta_phi);
        }
    }

    #[test]
    fn truth_is_a_minimum_of_the_loss() {
        let truth = NoiseParams::reported();
        let data = model_curves(&truth, &grid()).unwrap();
        let at_truth = residual(&data, &truth, false).unwrap();
        assert!(at_truth < 1e-24);
        for k in 0..3 {
            let mut d = truth.delta_phi;
            d[k] += 1e-3;
            assert!(residual(&data, &NoiseParams { delta_phi: d }, false).unwrap() > at_truth);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = sample_curves(&NoiseParams::reported(), &grid(), 500, 3).unwrap();
        let opts = FitOptions { grid_points: 4, ..FitOptions::default() };
        let a = fit_with(&data, &NoiseParams::zeros(), &FitBounds::default(), &opts).unwrap();
        let b = fit_with(&data, &NoiseParams::zeros(), &FitBounds::default(), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounds_are_validated() {
        let bad = FitBounds { lower: [0.1, 0.0, 0.0], upper: [0.0, 0.1, 0.1] };
        assert!(bad.validate().is_err());
        let wide = FitBounds { lower: [-2.0; 3], upper: [0.1; 3] };
        assert!(wide.validate().is_err());
    }

    #[test]
    fn resampling_needs_counts() {
        let data = model_curves(&NoiseParams::zeros(), &grid()).unwrap();
        assert!(resample_counts(&data, 1).is_err());
        let sampled = sample_curves(&NoiseParams::zeros(), &grid(), 200, 1).unwrap();
        let r = resample_counts(&sampled, 1).unwrap();
        assert!(r.tables.iter().all(|t| t.shots == Some(200)));
    }

    #[test]
    fn refit_spread_is_positive_and_reproducible() {
        let data = sample_curves(&NoiseParams::reported(), &grid(), 2000, 5).unwrap();
        let opts = FitOptions { grid_points: 4, ..FitOptions::default() };
        let bounds = FitBounds::default();
        let r = fit_with(&data, &NoiseParams::zeros(), &bounds, &opts).unwrap();
        let a = with_refit_spread(&data, r.clone(), &bounds, &opts, 6, 9).unwrap();
        let b = with_refit_spread(&data, r.clone(), &bounds, &opts, 6, 9).unwrap();
        assert_eq!(a, b);
        let spread = a.per_parameter_spread.unwrap();
        assert!(spread[2] > 0.0, "{spread:?}");
        assert_eq!(a.delta_phi, r.delta_phi);
    }

    #[test]
    fn zero_noise_model_c0_is_one() {
        let c = model_implied_c0(&NoiseParams::zeros(), &grid()).unwrap();
        assert!((c.c0 - 1.0).abs() < 1e-10);
    }
}
