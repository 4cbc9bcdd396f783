//! `sdforge eval`: score predicted meshes and/or rendered images
//! against ground truth, writing one JSON report per pair and a CSV
//! summary ending in a median row.

use crate::support::{
    config_hash, core_err, csv_cell, input_err, load_mesh_input, load_run, median, usage,
    write_json, write_resolved, CliError, CmdResult,
};
use clap::Args;
use sdforge_core::metrics::{evaluate_geometry, evaluate_images, GeomReport, ImageReport, MetricConfig};
use sdforge_core::render::images::read_color_png;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON run config (schema: EvalRun); flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON file with an array of pairs (schema: EvalPair)
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Predicted mesh for a single pair (.ply/.obj/.sdfg)
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground-truth mesh for a single pair
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Predicted image for a single pair (PNG)
    #[arg(long)]
    pub pred_image: Option<PathBuf>,
    /// Ground-truth image for a single pair (PNG)
    #[arg(long)]
    pub gt_image: Option<PathBuf>,
    /// Output directory for reports
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One prediction/ground-truth pairing; meshes and images are each
/// optional, but a pair must name at least one complete modality.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPair {
    pub id: String,
    #[serde(default)]
    pub pred: Option<PathBuf>,
    #[serde(default)]
    pub gt: Option<PathBuf>,
    #[serde(default)]
    pub pred_image: Option<PathBuf>,
    #[serde(default)]
    pub gt_image: Option<PathBuf>,
}

/// Resolved run configuration echoed next to the outputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRun {
    pub pairs: Vec<EvalPair>,
    pub out: Option<PathBuf>,
    pub metrics: MetricConfig,
    pub iso_level: f64,
}

/// Per-pair report written as `<id>.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PairReport {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeomReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<ImageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn run(args: EvalArgs) -> CmdResult {
    let mut run: EvalRun = load_run(args.config.as_deref())?;
    if let Some(pairs_path) = &args.pairs {
        let text = std::fs::read_to_string(pairs_path)
            .map_err(|e| usage(format!("cannot read pairs {}: {e}", pairs_path.display())))?;
        let listed: Vec<EvalPair> = serde_json::from_str(&text)
            .map_err(|e| usage(format!("invalid pairs {}: {e}", pairs_path.display())))?;
        run.pairs.extend(listed);
    }
    if args.pred.is_some() || args.gt.is_some() || args.pred_image.is_some() || args.gt_image.is_some()
    {
        let id = args
            .pred
            .as_deref()
            .or(args.pred_image.as_deref())
            .and_then(Path::file_stem)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pair".to_string());
        run.pairs.push(EvalPair {
            id,
            pred: args.pred,
            gt: args.gt,
            pred_image: args.pred_image,
            gt_image: args.gt_image,
        });
    }
    if let Some(out) = args.out {
        run.out = Some(out);
    }
    let out = run
        .out
        .clone()
        .ok_or_else(|| usage("--out is required (or set \"out\" in the config)"))?;
    if run.pairs.is_empty() {
        return Err(usage(
            "no pairs to evaluate: pass --pred/--gt, --pairs, or config pairs",
        ));
    }
    for pair in &run.pairs {
        validate_pair(pair)?;
    }
    run.metrics.validate().map_err(core_err)?;
    write_resolved(&run, &out)?;

    let hash = config_hash(&run.metrics);
    let mut reports = Vec::with_capacity(run.pairs.len());
    let mut failures = Vec::new();
    for pair in &run.pairs {
        let report = match evaluate_pair(pair, &run.metrics, run.iso_level) {
            Ok((geometry, images)) => PairReport {
                id: pair.id.clone(),
                geometry,
                images,
                error: None,
            },
            Err(e) => {
                failures.push(format!("{}: {e}", pair.id));
                PairReport {
                    id: pair.id.clone(),
                    geometry: None,
                    images: None,
                    error: Some(e.to_string()),
                }
            }
        };
        write_json(&report, &out.join(format!("{}.json", pair.id)))?;
        reports.push(report);
    }

    write_summary_csv(&reports, &run.metrics, &hash, &out.join("summary.csv"))?;

    let ok = reports.len() - failures.len();
    println!("evaluated {ok} of {} pairs into {}", reports.len(), out.display());
    print_medians(&reports);
    if !failures.is_empty() {
        return Err(usage(format!(
            "{} of {} pairs failed:\n  {}",
            failures.len(),
            reports.len(),
            failures.join("\n  ")
        )));
    }
    Ok(())
}

fn validate_pair(pair: &EvalPair) -> CmdResult {
    if pair.id.is_empty() || pair.id.contains(['/', '\\']) {
        return Err(usage(format!("pair id `{}` is not a plain file stem", pair.id)));
    }
    let half = |a: &Option<PathBuf>, b: &Option<PathBuf>| a.is_some() != b.is_some();
    if half(&pair.pred, &pair.gt) {
        return Err(usage(format!("pair {}: pred and gt must come together", pair.id)));
    }
    if half(&pair.pred_image, &pair.gt_image) {
        return Err(usage(format!(
            "pair {}: pred_image and gt_image must come together",
            pair.id
        )));
    }
    if pair.pred.is_none() && pair.pred_image.is_none() {
        return Err(usage(format!(
            "pair {}: needs a mesh pair and/or an image pair",
            pair.id
        )));
    }
    Ok(())
}

fn evaluate_pair(
    pair: &EvalPair,
    metrics: &MetricConfig,
    iso_level: f64,
) -> Result<(Option<GeomReport>, Option<ImageReport>), CliError> {
    let geometry = match (&pair.pred, &pair.gt) {
        (Some(pred), Some(gt)) => {
            let pred = load_mesh_input(pred, iso_level)?;
            let gt = load_mesh_input(gt, iso_level)?;
            Some(evaluate_geometry(&pred, &gt, metrics).map_err(core_err)?)
        }
        _ => None,
    };
    let images = match (&pair.pred_image, &pair.gt_image) {
        (Some(pred), Some(gt)) => {
            let pred = read_color_png(pred).map_err(input_err)?;
            let gt = read_color_png(gt).map_err(input_err)?;
            Some(evaluate_images(&pred, &gt).map_err(core_err)?)
        }
        _ => None,
    };
    Ok((geometry, images))
}

/// Writes the per-pair table plus a closing `median` row. Cells of
/// failed or inapplicable metrics stay empty.
fn write_summary_csv(
    reports: &[PairReport],
    metrics: &MetricConfig,
    hash: &str,
    path: &Path,
) -> CmdResult {
    let mut rows = String::from("id,chamfer,volume_iou,f_score,psnr,ssim,seed,config_hash\n");
    let mut columns: [Vec<f64>; 5] = Default::default();
    for r in reports {
        let g = r.geometry.as_ref();
        let im = r.images.as_ref();
        let cells = [
            g.map(|g| g.chamfer),
            g.map(|g| g.volume_iou),
            g.map(|g| g.f_score),
            im.map(|i| i.psnr),
            im.map(|i| i.ssim),
        ];
        for (col, cell) in columns.iter_mut().zip(cells) {
            if let Some(v) = cell {
                col.push(v);
            }
        }
        rows.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.id,
            csv_cell(cells[0]),
            csv_cell(cells[1]),
            csv_cell(cells[2]),
            csv_cell(cells[3]),
            csv_cell(cells[4]),
            metrics.seed,
            hash,
        ));
    }
    let med: Vec<String> = columns.iter().map(|c| csv_cell(median(c))).collect();
    rows.push_str(&format!(
        "median,{},{},{},{},{},{},{}\n",
        med[0], med[1], med[2], med[3], med[4], metrics.seed, hash
    ));
    std::fs::write(path, rows)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn print_medians(reports: &[PairReport]) {
    let geo: Vec<&GeomReport> = reports.iter().filter_map(|r| r.geometry.as_ref()).collect();
    if !geo.is_empty() {
        let col = |f: fn(&GeomReport) -> f64| {
            let vals: Vec<f64> = geo.iter().map(|g| f(g)).collect();
            median(&vals).expect("non-empty")
        };
        println!(
            "geometry medians: chamfer {:.6}, volume IoU {:.4}, F-score {:.2}",
            col(|g| g.chamfer),
            col(|g| g.volume_iou),
            col(|g| g.f_score),
        );
    }
    let imgs: Vec<&ImageReport> = reports.iter().filter_map(|r| r.images.as_ref()).collect();
    if !imgs.is_empty() {
        let psnrs: Vec<f64> = imgs.iter().map(|i| i.psnr).collect();
        let ssims: Vec<f64> = imgs.iter().map(|i| i.ssim).collect();
        println!(
            "image medians: PSNR {:.2} dB, SSIM {:.4}",
            median(&psnrs).expect("non-empty"),
            median(&ssims).expect("non-empty"),
        );
    }
}
