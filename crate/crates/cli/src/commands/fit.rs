use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use demon_core::noisefit::{self, linspace, CurveDataset, FitOptions, FitResult};
use demon_core::protocol::OutcomeTable;
use demon_core::tomography::C0Fit;

use crate::manifest::{FitSection, RunManifest};
use crate::output::{fmt12, write_csv, write_json, Artifacts};

/// Reads an outcome-table CSV (one or more θ) back into a dataset. Counts
/// are used when every row of a θ has one; otherwise the joint
/// probabilities are taken as exact.
pub fn read_dataset(path: &Path) -> Result<CurveDataset> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let expected = super::sweep::OUTCOME_HEADER;
    if headers.iter().collect::<Vec<_>>() != expected {
        bail!("{}: header must be {}", path.display(), expected.join(","));
    }

    // θ text -> (θ, cells seen, counts, probabilities); keyed by first appearance
    type Cells = ([[[Option<u64>; 2]; 2]; 2], [[[Option<f64>; 2]; 2]; 2]);
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (f64, Cells)> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}:{line}", path.display()))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let bit = |k: usize| -> Result<usize> {
            match field(k) {
                "0" => Ok(0),
                "1" => Ok(1),
                other => bail!("{}:{line}: {} must be 0 or 1, got {other:?}", path.display(), expected[k]),
            }
        };
        let theta: f64 = field(0)
            .parse()
            .with_context(|| format!("{}:{line}: bad theta", path.display()))?;
        let (d, dp, ap) = (bit(1)?, bit(2)?, bit(3)?);
        let count = match field(4) {
            "" => None,
            c => Some(
                c.parse::<u64>()
                    .with_context(|| format!("{}:{line}: bad count", path.display()))?,
            ),
        };
        let p: f64 = field(5)
            .parse()
            .with_context(|| format!("{}:{line}: bad probability", path.display()))?;
        let key = field(0).to_string();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let entry = groups.entry(key).or_insert((theta, Default::default()));
        let cells = &mut entry.1;
        if cells.1[d][dp][ap].is_some() {
            bail!("{}:{line}: duplicate cell ({d},{dp},{ap}) for theta {theta}", path.display());
        }
        cells.0[d][dp][ap] = count;
        cells.1[d][dp][ap] = Some(p);
    }
    if order.is_empty() {
        bail!("{}: no rows", path.display());
    }

    let mut tables = Vec::new();
    for key in order {
        let (theta, (counts, probs)) = groups.remove(&key).expect("grouped");
        let mut joint = [[[0.0; 2]; 2]; 2];
        let mut all_counts = [[[0u64; 2]; 2]; 2];
        let mut have_counts = true;
        for (d, dp, ap) in OutcomeTable::cells() {
            let Some(p) = probs[d][dp][ap] else {
                bail!("{}: theta {theta} is missing cell ({d},{dp},{ap})", path.display());
            };
            joint[d][dp][ap] = p;
            match counts[d][dp][ap] {
                Some(c) => all_counts[d][dp][ap] = c,
                None => have_counts = false,
            }
        }
        let table = if have_counts {
            OutcomeTable::from_counts(theta, all_counts)?
        } else {
            OutcomeTable::from_joint(theta, joint)?
        };
        tables.push(table);
    }
    Ok(CurveDataset::new(tables)?)
}

pub fn load_data(manifest: &RunManifest, f: &FitSection) -> Result<(CurveDataset, String)> {
    if let Some(rel) = &f.dataset {
        let path = manifest.base_dir.join(rel);
        return Ok((read_dataset(&path)?, rel.display().to_string()));
    }
    let syn = f.synthetic.as_ref().expect("validated: one data source");
    let noise = syn.noise.resolve().map_err(anyhow::Error::msg)?;
    let thetas = linspace(syn.theta_start, syn.theta_end, syn.theta_steps);
    let data = match syn.shots {
        None => noisefit::model_curves(&noise, &thetas)?,
        Some(shots) => noisefit::sample_curves(&noise, &thetas, shots, syn.seed)?,
    };
    let label = match syn.shots {
        None => "synthetic exact".to_string(),
        Some(n) => format!("synthetic sampled, {n} shots, seed {}", syn.seed),
    };
    Ok((data, label))
}

#[derive(Serialize)]
struct FitSummary<'a> {
    command: &'static str,
    manifest: &'a FitSection,
    data_source: String,
    thetas: usize,
    result: &'a FitResult,
    delta_phi_over_half_pi: [f64; 3],
    model_implied_c0: C0Fit,
    files: Vec<String>,
}

pub fn run(manifest: &RunManifest, out: &mut Artifacts) -> Result<FitResult> {
    let Some(f) = manifest.fit.clone() else {
        bail!("the fit command needs a [fit] section with a dataset or [fit.synthetic]");
    };
    let (data, data_source) = load_data(manifest, &f)?;
    let bounds = f.bounds();
    let init = f.init.resolve().map_err(anyhow::Error::msg)?;
    let opts = FitOptions {
        grid_points: f.grid_points,
        weighted: f.weighted,
        ridge: f.ridge,
        ..FitOptions::default()
    };
    let mut result = noisefit::fit_with(&data, &init, &bounds, &opts)?;
    if data.has_counts() && f.spread_resamples >= 2 {
        result = noisefit::with_refit_spread(&data, result, &bounds, &opts, f.spread_resamples, f.seed)?;
    }

    let thetas = data.thetas();
    let model = noisefit::model_curves(&result.noise(), &thetas)?;
    let rows: Vec<Vec<String>> = data
        .tables
        .iter()
        .zip(&model.tables)
        .flat_map(|(obs, m)| {
            OutcomeTable::cells().map(move |(d, dp, ap)| {
                vec![
                    fmt12(obs.theta),
                    d.to_string(),
                    dp.to_string(),
                    ap.to_string(),
                    fmt12(obs.joint(d, dp, ap)),
                    fmt12(m.joint(d, dp, ap)),
                ]
            })
        })
        .collect();
    write_csv(
        &out.path("overlay.csv"),
        &["theta", "d", "d_prime", "a_prime", "data_probability", "model_probability"],
        &rows,
    )?;

    let summary = out.path("fit.json");
    let files = out
        .files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    write_json(
        &summary,
        &FitSummary {
            command: "fit",
            manifest: &f,
            data_source,
            thetas: thetas.len(),
            result: &result,
            delta_phi_over_half_pi: result.delta_phi.map(|x| x / FRAC_PI_2),
            model_implied_c0: noisefit::model_implied_c0(&result.noise(), &thetas)?,
            files,
        },
    )?;
    Ok(result)
}
