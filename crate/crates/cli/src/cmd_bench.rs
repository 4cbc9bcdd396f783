//! `sdforge bench`: run the whole closed loop (generate, render,
//! reconstruct, texture, evaluate) on N seeded objects and report
//! per-stage wall-clock, per-object loss curves, and metric medians in
//! one JSON file. Timings are machine-dependent and not comparable to
//! any published figure; metric values are deterministic.

use crate::cmd_reconstruct::write_recon_artifacts;
use crate::cmd_render::render_rig_views;
use crate::cmd_texture::bake_artifacts;
use crate::support::{
    bounding_radius, core_err, ensure_vertex_colors, load_run, median, usage, write_json,
    write_resolved, CliError, CmdResult,
};
use clap::Args;
use sdforge_core::gen::{generate, GenConfig};
use sdforge_core::mesh::io::write_ply;
use sdforge_core::mesh::marching_cubes;
use sdforge_core::metrics::{
    evaluate_geometry, evaluate_images, GeomReport, ImageReport, MetricConfig,
};
use sdforge_core::recon::{reconstruct, ReconConfig};
use sdforge_core::render::images::{read_color_png, read_viewset, write_viewset};
use sdforge_core::sdf::io::write_sdfg;
use sdforge_core::texture::BakeConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON run config (schema: BenchRun); flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of objects
    #[arg(long)]
    pub count: Option<usize>,
    /// Base seed; object i uses seed + i
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cubic generator grid resolution
    #[arg(long)]
    pub dims: Option<usize>,
    /// Square view image side in pixels
    #[arg(long)]
    pub size: Option<usize>,
}

/// Resolved run configuration echoed next to the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchRun {
    pub out: Option<PathBuf>,
    pub count: usize,
    pub seed: u64,
    pub image_size: usize,
    pub gen: GenConfig,
    pub recon: ReconConfig,
    pub bake: BakeConfig,
    pub metrics: MetricConfig,
    pub subdivide_rounds: u32,
    pub distance: Option<f64>,
    pub fov_y_deg: f64,
}

impl Default for BenchRun {
    fn default() -> Self {
        Self {
            out: None,
            count: 3,
            seed: 0,
            image_size: 256,
            gen: GenConfig::default(),
            recon: ReconConfig::default(),
            // A texture box slightly wider than the generator's world
            // keeps reconstructed surfaces strictly inside it.
            bake: BakeConfig {
                world_extent: 2.2,
                ..BakeConfig::default()
            },
            metrics: MetricConfig::default(),
            subdivide_rounds: 1,
            distance: None,
            fov_y_deg: 40.0,
        }
    }
}

/// Per-object results embedded in `bench.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct BenchObject {
    pub id: String,
    pub seed: u64,
    pub geometry: GeomReport,
    pub images: ImageReport,
    pub iterations_to_threshold: Option<usize>,
    /// Total reconstruction loss per iteration (both stages).
    pub loss_curve: Vec<f64>,
}

/// The one-file report of a bench run.
#[derive(Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub count: usize,
    pub seed: u64,
    pub image_size: usize,
    /// Seconds spent inside each pipeline stage, summed over objects.
    pub stage_seconds: BTreeMap<String, f64>,
    /// Sum of the stage timers.
    pub stage_total_seconds: f64,
    /// Wall-clock time of the whole object loop.
    pub wall_seconds: f64,
    pub medians: BTreeMap<String, f64>,
    pub objects: Vec<BenchObject>,
}

pub fn run(args: BenchArgs) -> CmdResult {
    let mut run: BenchRun = load_run(args.config.as_deref())?;
    if let Some(v) = args.out {
        run.out = Some(v);
    }
    if let Some(v) = args.count {
        run.count = v;
    }
    if let Some(v) = args.seed {
        run.seed = v;
    }
    if let Some(d) = args.dims {
        run.gen.dims = (d, d, d);
    }
    if let Some(v) = args.size {
        run.image_size = v;
    }
    let out = run
        .out
        .clone()
        .ok_or_else(|| usage("--out is required (or set \"out\" in the config)"))?;
    if run.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    run.gen.validate().map_err(core_err)?;
    run.recon.validate().map_err(core_err)?;
    run.bake.validate().map_err(core_err)?;
    run.metrics.validate().map_err(core_err)?;
    write_resolved(&run, &out)?;

    let mut stage_seconds: BTreeMap<String, f64> = ["gen", "render", "reconstruct", "texture", "eval"]
        .into_iter()
        .map(|s| (s.to_string(), 0.0))
        .collect();
    let mut objects = Vec::with_capacity(run.count);
    let wall_start = Instant::now();

    for i in 0..run.count {
        let id = format!("object_{i:04}");
        let seed = run.seed.wrapping_add(i as u64);
        let obj_dir = out.join(&id);
        std::fs::create_dir_all(&obj_dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", obj_dir.display())))?;

        // Stage 1: generate the ground-truth object.
        let t = Instant::now();
        let (grid, _params) = generate(&run.gen, seed).map_err(core_err)?;
        write_sdfg(&grid, &obj_dir.join("gt.sdfg")).map_err(core_err)?;
        *stage_seconds.get_mut("gen").expect("stage key") += t.elapsed().as_secs_f64();

        // Stage 2: extract the GT mesh and render the six-view priors.
        let t = Instant::now();
        let mut gt_mesh = marching_cubes(&grid, 0.0).map_err(core_err)?;
        if gt_mesh.positions.is_empty() {
            return Err(CliError::Runtime(format!(
                "{id}: generated grid has no zero crossing"
            )));
        }
        ensure_vertex_colors(&mut gt_mesh);
        write_ply(&gt_mesh, &obj_dir.join("gt_mesh.ply")).map_err(core_err)?;
        let distance = match run.distance {
            Some(d) => d,
            None => 2.7 * bounding_radius(&gt_mesh),
        };
        let set = render_rig_views(&gt_mesh, distance, run.image_size, run.fov_y_deg)?;
        let views_dir = obj_dir.join("views");
        write_viewset(&set, &views_dir).map_err(core_err)?;
        *stage_seconds.get_mut("render").expect("stage key") += t.elapsed().as_secs_f64();

        // Stage 3: reconstruct from the files just written, end to end.
        let t = Instant::now();
        let set = read_viewset(&views_dir).map_err(core_err)?;
        let result = reconstruct(&set, &run.recon).map_err(core_err)?;
        let recon_secs = t.elapsed().as_secs_f64();
        let recon_dir = obj_dir.join("recon");
        std::fs::create_dir_all(&recon_dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", recon_dir.display())))?;
        let (_, _, refined_mesh) = write_recon_artifacts(&result, &recon_dir, recon_secs)?;
        *stage_seconds.get_mut("reconstruct").expect("stage key") += t.elapsed().as_secs_f64();

        // Stage 4: bake a texture for the reconstruction from the priors.
        let t = Instant::now();
        let tex_dir = obj_dir.join("texture");
        std::fs::create_dir_all(&tex_dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", tex_dir.display())))?;
        bake_artifacts(&refined_mesh, &set, &run.bake, run.subdivide_rounds, &tex_dir)?;
        *stage_seconds.get_mut("texture").expect("stage key") += t.elapsed().as_secs_f64();

        // Stage 5: score the reconstruction against the known truth.
        let t = Instant::now();
        let geometry = evaluate_geometry(&refined_mesh, &gt_mesh, &run.metrics).map_err(core_err)?;
        let pred_img = read_color_png(&tex_dir.join("rerender_color_0.png")).map_err(core_err)?;
        let gt_img = read_color_png(&views_dir.join("color_0.png")).map_err(core_err)?;
        let images = evaluate_images(&pred_img, &gt_img).map_err(core_err)?;
        let object = BenchObject {
            id: id.clone(),
            seed,
            geometry,
            images,
            iterations_to_threshold: result.iterations_to_threshold,
            loss_curve: result.trace.iter().map(|r| r.loss).collect(),
        };
        write_json(&object, &obj_dir.join("eval.json"))?;
        objects.push(object);
        *stage_seconds.get_mut("eval").expect("stage key") += t.elapsed().as_secs_f64();

        println!(
            "{id}: IoU {:.4}, chamfer {:.5}, PSNR {:.2} dB",
            objects[i].geometry.volume_iou,
            objects[i].geometry.chamfer,
            objects[i].images.psnr,
        );
    }

    let wall_seconds = wall_start.elapsed().as_secs_f64();
    let stage_total_seconds: f64 = stage_seconds.values().sum();
    let mut medians = BTreeMap::new();
    let mut put = |name: &str, vals: Vec<f64>| {
        if let Some(m) = median(&vals) {
            medians.insert(name.to_string(), m);
        }
    };
    put("chamfer", objects.iter().map(|o| o.geometry.chamfer).collect());
    put("volume_iou", objects.iter().map(|o| o.geometry.volume_iou).collect());
    put("f_score", objects.iter().map(|o| o.geometry.f_score).collect());
    put("psnr", objects.iter().map(|o| o.images.psnr).collect());
    put("ssim", objects.iter().map(|o| o.images.ssim).collect());

    let report = BenchReport {
        count: run.count,
        seed: run.seed,
        image_size: run.image_size,
        stage_seconds,
        stage_total_seconds,
        wall_seconds,
        medians,
        objects,
    };
    write_json(&report, &out.join("bench.json"))?;

    println!("---");
    for (stage, secs) in &report.stage_seconds {
        println!("{stage:>12}: {secs:8.2}s");
    }
    println!("{:>12}: {:8.2}s (wall {:.2}s)", "total", stage_total_seconds, wall_seconds);
    for (name, value) in &report.medians {
        println!("median {name}: {value:.5}");
    }
    Ok(())
}
