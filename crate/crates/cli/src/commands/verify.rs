use anyhow::Result;
use serde::Serialize;

use demon_core::gates::{self, bell_prep, cy, cy_closed_form, resource_circuit};
use demon_core::noisefit::{self, linspace, FitBounds};
use demon_core::protocol::{
    self, analytic_concurrence, gain_lower_bound, measure_demon, prepare_resource, resource_state_vector, run_exact,
    FeedbackPolicy, OutcomeTable, ProtocolConfig,
};
use demon_core::tomography::{self, bootstrap, concurrence, exact_reconstruction};
use demon_core::{rng, CMat, CVec, NoiseParams};

use crate::manifest::{Fault, RunManifest, VerifySection};
use crate::output::{write_json, Artifacts};

/// Whether the measured value must stay below or above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub sense: Sense,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, threshold: f64) -> Self {
        Check {
            name,
            measured,
            threshold,
            sense: Sense::AtMost,
            passed: measured <= threshold,
        }
    }

    fn at_least(name: &'static str, measured: f64, threshold: f64) -> Self {
        Check {
            name,
            measured,
            threshold,
            sense: Sense::AtLeast,
            passed: measured >= threshold,
        }
    }

    pub fn line(&self) -> String {
        let op = match self.sense {
            Sense::AtMost => "<=",
            Sense::AtLeast => ">=",
        };
        format!(
            "{} {:<32} measured {:.3e} {op} {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold
        )
    }
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    command: &'static str,
    manifest: &'a VerifySection,
    passed: bool,
    checks: &'a [Check],
}

fn feedback_policy(fault: Option<Fault>) -> FeedbackPolicy {
    match fault {
        None => FeedbackPolicy::conditional_swap(),
        Some(Fault::SwapOnWrongOutcome) => FeedbackPolicy {
            on_zero: gates::identity(),
            on_one: gates::swap(),
        },
    }
}

/// Runs every invariant suite; the returned checks are in a fixed order.
pub fn checks(v: &VerifySection) -> Result<Vec<Check>> {
    let tol = v.tolerances;
    let grid = linspace(0.0, std::f64::consts::FRAC_PI_2, 33);
    let policy = feedback_policy(v.inject_fault);
    let mut out = Vec::new();

    // gates
    let mut r = rng::stream(v.seed, 0);
    let mut unitarity = 0.0f64;
    for _ in 0..20 {
        use rand::Rng;
        let noise = NoiseParams::new([0, 1, 2].map(|_| r.random_range(-0.5..0.5)))?;
        let theta = r.random_range(0.0..std::f64::consts::FRAC_PI_2);
        for g in resource_circuit(theta, &noise) {
            unitarity = unitarity.max(g.matrix.unitarity_error());
        }
    }
    out.push(Check::at_most("gate_unitarity", unitarity, tol.unitarity));

    let bell = bell_prep(&NoiseParams::zeros()).matrix.apply(&CVec::basis(4, 0));
    let target = resource_state_vector(0.0);
    let bell_err = 1.0 - target.inner(&bell).norm_sqr();
    out.push(Check::at_most("bell_prep_infidelity", bell_err.abs(), tol.unitarity));

    let cy_err = grid
        .iter()
        .map(|&t| cy(t, &NoiseParams::zeros()).matrix.max_abs_diff_up_to_phase(&cy_closed_form(t)))
        .fold(0.0, f64::max);
    out.push(Check::at_most("cy_matches_closed_form", cy_err, tol.unitarity));

    // protocol
    let mut gain_err = 0.0f64;
    let mut min_slack = f64::INFINITY;
    let mut endpoint_gap = 0.0f64;
    let mut balance = 0.0f64;
    for &t in &grid {
        let cfg = ProtocolConfig::ideal(t);
        let run = run_exact(&cfg, &policy)?;
        gain_err = gain_err.max((run.gain - t.cos().powi(2) / 2.0).abs());
        let bound = gain_lower_bound(analytic_concurrence(t).min(1.0))?;
        min_slack = min_slack.min(run.gain - bound);
        if t == 0.0 || t == std::f64::consts::FRAC_PI_2 {
            endpoint_gap = endpoint_gap.max((run.gain - bound).abs());
        }
        let b = measure_demon(&run.rho)?;
        balance = balance.max((b[0].probability - 0.5).abs().max((b[1].probability - 0.5).abs()));
    }
    out.push(Check::at_most("gain_equals_half_c_squared", gain_err, tol.gain));
    out.push(Check::at_least("bound_min_slack", min_slack, -tol.bound));
    out.push(Check::at_most("bound_equality_at_c_0_and_1", endpoint_gap, tol.bound));
    out.push(Check::at_most("balanced_measurement", balance, tol.balance));

    let mut worst_z = 0.0f64;
    for (i, &t) in grid.iter().enumerate().step_by(4) {
        let cfg = ProtocolConfig::ideal(t).with_shots(ProtocolConfig::DEFAULT_SHOTS, rng::derive_seed(v.seed, i as u64));
        let exact = protocol::outcome_table_exact_with(&cfg, &policy)?;
        let sampled = protocol::run_shots_with(&cfg, &policy)?;
        let counts = sampled.counts.expect("sampled");
        for (d, dp, ap) in OutcomeTable::cells() {
            let n: u64 = counts[d].iter().flatten().sum();
            let p = exact.conditional(d, dp, ap);
            let p_hat = sampled.conditional(d, dp, ap);
            let se = (p * (1.0 - p) / n.max(1) as f64).sqrt();
            let z = if se > 0.0 {
                (p_hat - p).abs() / se
            } else if p_hat == p {
                0.0
            } else {
                f64::INFINITY
            };
            worst_z = worst_z.max(z);
        }
    }
    out.push(Check::at_most("sampled_vs_exact_max_z", worst_z, tol.sampling_z));

    // tomography
    let mut conc_err = 0.0f64;
    let mut purity_err = 0.0f64;
    let mut recon_err = 0.0f64;
    for &t in &grid {
        let rho = prepare_resource(&ProtocolConfig::ideal(t))?;
        conc_err = conc_err.max((concurrence(rho.mat())? - t.cos().abs()).abs());
        let rec = exact_reconstruction(rho.mat());
        recon_err = recon_err.max(rec.max_abs_diff(rho.mat()));
        purity_err = purity_err.max((tomography::purity(&rec) - 1.0).abs());
    }
    out.push(Check::at_most("concurrence_equals_abs_cos", conc_err, tol.concurrence));
    out.push(Check::at_most("exact_moment_reconstruction", recon_err, tol.reconstruction));
    out.push(Check::at_most("exact_moment_purity", purity_err, tol.reconstruction));

    let bell_rho = prepare_resource(&ProtocolConfig::ideal(0.0))?;
    let a = bootstrap(bell_rho.mat(), 100, 100, v.seed)?;
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()?
        .install(|| bootstrap(bell_rho.mat(), 100, 100, v.seed))?;
    out.push(Check::at_most("bootstrap_thread_invariance", if a == b { 0.0 } else { 1.0 }, 0.0));

    // noisefit
    let thetas = linspace(0.0, std::f64::consts::FRAC_PI_2, 9);
    let truth = NoiseParams::reported();
    let data = noisefit::model_curves(&truth, &thetas)?;
    let fit = noisefit::fit(&data, &NoiseParams::zeros(), &FitBounds::default())?;
    let fit_err = (0..3)
        .map(|k| (fit.delta_phi[k] - truth.delta_phi[k]).abs())
        .fold(0.0, f64::max);
    out.push(Check::at_most("planted_fit_recovery", fit_err, tol.fit));

    let id = CMat::identity(4);
    let swap_sq = gates::swap().matrix * gates::swap().matrix;
    out.push(Check::at_most("swap_is_involution", swap_sq.max_abs_diff(&id), tol.unitarity));
    Ok(out)
}

/// Runs the checks, prints one line each, writes `verify.json`, and
/// returns whether all passed.
pub fn run(manifest: &RunManifest, out: &mut Artifacts) -> Result<bool> {
    let v = manifest.verify.clone().unwrap_or_default();
    if let Some(f) = v.inject_fault {
        println!("injected fault: {f:?}");
    }
    let checks = checks(&v)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let passed = checks.iter().all(|c| c.passed);
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    write_json(
        &out.path("verify.json"),
        &VerifyReport {
            command: "verify",
            manifest: &v,
            passed,
            checks: &checks,
        },
    )?;
    Ok(passed)
}
