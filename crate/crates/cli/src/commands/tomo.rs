use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use demon_core::noisefit;
use demon_core::protocol::{prepare_resource, ProtocolConfig};
use demon_core::rng;
use demon_core::tomography::{
    self, setting_probabilities, BootstrapSummary, C0Fit, PauliSetting, Tomogram, OUTCOME_LABELS,
};
use demon_core::CMat;

use crate::manifest::{Mode, RunManifest, TomoSection};
use crate::output::{fmt12, write_csv, write_json, Artifacts};

pub const TOMOGRAM_HEADER: [&str; 4] = ["setting_a", "setting_d", "outcome", "count"];

#[derive(Serialize)]
struct MatrixJson {
    re: Vec<[f64; 4]>,
    im: Vec<[f64; 4]>,
}

fn matrix_json(m: &CMat) -> MatrixJson {
    let row = |i: usize, f: fn(demon_core::C64) -> f64| [0, 1, 2, 3].map(|j| f(m.get(i, j)));
    MatrixJson {
        re: (0..4).map(|i| row(i, |z| z.re)).collect(),
        im: (0..4).map(|i| row(i, |z| z.im)).collect(),
    }
}

#[derive(Serialize)]
struct PointMetrics {
    index: usize,
    theta: f64,
    seed: Option<u64>,
    concurrence: f64,
    purity: f64,
    concurrence_exact_state: f64,
    bootstrap: Option<BootstrapSummary>,
    rho_hat: MatrixJson,
}

#[derive(Serialize)]
struct TomoSummary<'a> {
    command: &'static str,
    manifest: &'a TomoSection,
    delta_phi: [f64; 3],
    points: Vec<PointMetrics>,
    c0_fit: C0Fit,
    model_implied_c0: C0Fit,
    files: Vec<String>,
}

/// One θ point: counts (expected counts in exact mode) plus metrics.
struct Point {
    theta: f64,
    seed: Option<u64>,
    counts: Vec<(PauliSetting, [f64; 4])>,
    tomogram: Tomogram,
    exact_concurrence: f64,
}

fn point(t: &TomoSection, i: usize, theta: f64) -> Result<Point> {
    let noise = t.noise.resolve().map_err(anyhow::Error::msg)?;
    let rho = prepare_resource(&ProtocolConfig::ideal(theta).with_noise(noise))?;
    let exact_concurrence = tomography::concurrence(rho.mat())?;
    match t.mode {
        Mode::Sampled => {
            let seed = rng::derive_seed(t.seed, i as u64);
            let mut tomo = Tomogram::simulate(&rho, t.shots_per_setting, seed)?;
            if t.resamples > 0 {
                tomo = tomo.with_bootstrap(t.resamples, rng::derive_seed(seed, u64::MAX))?;
            }
            let counts = tomo.counts.iter().map(|(s, c)| (*s, c.map(|x| x as f64))).collect();
            Ok(Point {
                theta,
                seed: Some(seed),
                counts,
                tomogram: tomo,
                exact_concurrence,
            })
        }
        Mode::Exact => {
            let rho_hat = tomography::exact_reconstruction(rho.mat());
            let n = t.shots_per_setting as f64;
            let counts = PauliSetting::all()
                .into_iter()
                .map(|s| (s, setting_probabilities(rho.mat(), s).map(|p| p * n)))
                .collect();
            let tomogram = Tomogram {
                counts: Vec::new(),
                shots_per_setting: t.shots_per_setting,
                concurrence: tomography::concurrence(&rho_hat)?,
                purity: tomography::purity(&rho_hat),
                rho_hat,
                bootstrap: None,
            };
            Ok(Point {
                theta,
                seed: None,
                counts,
                tomogram,
                exact_concurrence,
            })
        }
    }
}

pub fn run(manifest: &RunManifest, out: &mut Artifacts) -> Result<()> {
    let t = manifest.tomo.clone().unwrap_or_default();
    let noise = t.noise.resolve().map_err(anyhow::Error::msg)?;
    let points: Vec<Point> = t
        .thetas
        .clone()
        .into_par_iter()
        .enumerate()
        .map(|(i, theta)| point(&t, i, theta))
        .collect::<Result<_>>()?;

    let mut metrics = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let rows: Vec<Vec<String>> = p
            .counts
            .iter()
            .flat_map(|(s, c)| {
                (0..4).map(move |k| {
                    let count = match t.mode {
                        Mode::Sampled => format!("{}", c[k] as u64),
                        Mode::Exact => fmt12(c[k]),
                    };
                    vec![s.axis_a.to_string(), s.axis_d.to_string(), OUTCOME_LABELS[k].to_string(), count]
                })
            })
            .collect();
        write_csv(&out.path(&format!("tomogram_{i:03}.csv")), &TOMOGRAM_HEADER, &rows)?;
        metrics.push(PointMetrics {
            index: i,
            theta: p.theta,
            seed: p.seed,
            concurrence: p.tomogram.concurrence,
            purity: p.tomogram.purity,
            concurrence_exact_state: p.exact_concurrence,
            bootstrap: p.tomogram.bootstrap,
            rho_hat: matrix_json(&p.tomogram.rho_hat),
        });
    }

    let c0_fit = tomography::fit_c0(&points.iter().map(|p| (p.theta, p.tomogram.concurrence)).collect::<Vec<_>>())?;
    let model_implied_c0 = noisefit::model_implied_c0(&noise, &t.thetas)?;
    let summary = out.path("tomo.json");
    let files = out
        .files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    write_json(
        &summary,
        &TomoSummary {
            command: "tomo",
            manifest: &t,
            delta_phi: noise.delta_phi,
            points: metrics,
            c0_fit,
            model_implied_c0,
            files,
        },
    )
}
