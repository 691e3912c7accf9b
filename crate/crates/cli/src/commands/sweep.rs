use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use demon_core::gates::{resource_circuit, GateRecord};
use demon_core::protocol::{
    self, analytic_concurrence, energies_from_table, gain_lower_bound, Energies, OutcomeTable, ProtocolConfig,
};
use demon_core::rng;

use crate::manifest::{Mode, RunManifest, SweepSection};
use crate::output::{fmt12, write_csv, write_json, Artifacts};

pub const OUTCOME_HEADER: [&str; 6] = ["theta", "d", "d_prime", "a_prime", "count", "probability"];

/// Outcome-table rows. `probability` is the joint `Pr(d, d', a')`; `count`
/// is blank for exact tables.
pub fn outcome_rows(t: &OutcomeTable) -> Vec<Vec<String>> {
    OutcomeTable::cells()
        .map(|(d, dp, ap)| {
            vec![
                fmt12(t.theta),
                d.to_string(),
                dp.to_string(),
                ap.to_string(),
                t.counts.map_or(String::new(), |c| c[d][dp][ap].to_string()),
                fmt12(t.joint(d, dp, ap)),
            ]
        })
        .collect()
}

#[derive(Serialize)]
struct PointSummary {
    index: usize,
    theta: f64,
    seed: Option<u64>,
    pr_d: [f64; 2],
    energies: Energies,
    concurrence_analytic: f64,
    bound: f64,
    circuit: Vec<GateRecord>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    command: &'static str,
    manifest: &'a SweepSection,
    delta_phi: [f64; 3],
    points: Vec<PointSummary>,
    files: Vec<String>,
}

/// Config for θ index `i`; sampled runs get a per-θ derived seed.
pub fn point_config(s: &SweepSection, i: usize, theta: f64) -> Result<ProtocolConfig> {
    let noise = s.noise.resolve().map_err(anyhow::Error::msg)?;
    let mut cfg = ProtocolConfig::ideal(theta)
        .with_noise(noise)
        .with_shots(s.shots, rng::derive_seed(s.seed, i as u64));
    cfg.weights = s.weights;
    cfg.qnd = s.qnd;
    Ok(cfg)
}

pub fn tables(s: &SweepSection) -> Result<Vec<OutcomeTable>> {
    s.thetas()
        .into_par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let cfg = point_config(s, i, theta)?;
            Ok(match s.mode {
                Mode::Exact => protocol::outcome_table_exact(&cfg)?,
                Mode::Sampled => protocol::run_shots(&cfg)?,
            })
        })
        .collect()
}

pub fn run(manifest: &RunManifest, out: &mut Artifacts) -> Result<()> {
    let s = manifest.sweep.clone().unwrap_or_default();
    let noise = s.noise.resolve().map_err(anyhow::Error::msg)?;
    let tables = tables(&s)?;

    let mut energy_rows = Vec::new();
    let mut points = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        let path = out.path(&format!("outcomes_{i:03}.csv"));
        write_csv(&path, &OUTCOME_HEADER, &outcome_rows(t))?;

        let e = energies_from_table(t);
        let c = analytic_concurrence(t.theta);
        let bound = gain_lower_bound(c.min(1.0))?;
        energy_rows.push(vec![
            fmt12(t.theta),
            fmt12(e.w_i),
            fmt12(e.w_f),
            fmt12(e.delta_w),
            fmt12(c),
            fmt12(bound),
        ]);
        points.push(PointSummary {
            index: i,
            theta: t.theta,
            seed: (s.mode == Mode::Sampled).then(|| rng::derive_seed(s.seed, i as u64)),
            pr_d: t.pr_d,
            energies: e,
            concurrence_analytic: c,
            bound,
            circuit: resource_circuit(t.theta, &noise).iter().map(|g| g.record()).collect(),
        });
    }
    let energies = out.path("energies.csv");
    write_csv(
        &energies,
        &["theta", "w_i", "w_f", "delta_w", "concurrence_analytic", "bound"],
        &energy_rows,
    )?;

    let summary = out.path("sweep.json");
    let files = out
        .files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    write_json(
        &summary,
        &SweepSummary {
            command: "sweep",
            manifest: &s,
            delta_phi: noise.delta_phi,
            points,
            files,
        },
    )
}
