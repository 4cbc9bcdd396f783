//! `sdforge reconstruct`: recover a latent SDF from a view directory
//! of masks and normals, writing the latent, the decoded grids, the
//! optimization trace, and extracted meshes.

use crate::cmd_render::check_view_inputs;
use crate::support::{core_err, input_err, load_run, usage, write_json, write_resolved, CmdResult};
use clap::Args;
use sdforge_core::codec::write_latf;
use sdforge_core::mesh::io::{write_obj, write_ply};
use sdforge_core::mesh::{marching_cubes, TriMesh};
use sdforge_core::recon::{reconstruct, write_trace_csv, ReconConfig, ReconResult, TraceRow};
use sdforge_core::render::images::read_viewset;
use sdforge_core::sdf::io::write_sdfg;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// JSON run config (schema: ReconstructRun); flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// View directory with cameras.json, mask_*.png, normal_*.png
    #[arg(long)]
    pub views: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Start from a zero latent instead of the space-carving hull
    #[arg(long)]
    pub no_init: bool,
    /// Let refinement perturb the coarse latent (ablation arm)
    #[arg(long)]
    pub no_fixation: bool,
    /// Coarse-stage iteration count
    #[arg(long)]
    pub coarse_iters: Option<usize>,
    /// Refinement-stage iteration count
    #[arg(long)]
    pub refine_iters: Option<usize>,
    /// Image side used during optimization (downsampled from inputs)
    #[arg(long)]
    pub opt_size: Option<usize>,
}

/// Resolved run configuration echoed next to the outputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructRun {
    pub views: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub recon: ReconConfig,
}

/// Numbers reported in `summary.json` after a reconstruction.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReconSummary {
    pub elapsed_seconds: f64,
    pub iterations_to_threshold: Option<usize>,
    pub final_row: Option<TraceRow>,
    pub coarse_vertices: usize,
    pub coarse_triangles: usize,
    pub refined_vertices: usize,
    pub refined_triangles: usize,
}

pub fn run(args: ReconstructArgs) -> CmdResult {
    let mut run: ReconstructRun = load_run(args.config.as_deref())?;
    if let Some(v) = args.views {
        run.views = Some(v);
    }
    if let Some(v) = args.out {
        run.out = Some(v);
    }
    if args.no_init {
        run.recon.use_init = false;
    }
    if args.no_fixation {
        run.recon.use_fixation = false;
    }
    if let Some(v) = args.coarse_iters {
        run.recon.coarse_iters = v;
    }
    if let Some(v) = args.refine_iters {
        run.recon.refine_iters = v;
    }
    if let Some(v) = args.opt_size {
        run.recon.opt_image_size = v;
    }
    let views_dir = run
        .views
        .clone()
        .ok_or_else(|| usage("--views is required (or set \"views\" in the config)"))?;
    let out = run
        .out
        .clone()
        .ok_or_else(|| usage("--out is required (or set \"out\" in the config)"))?;

    check_view_inputs(&views_dir, false)?;
    let set = read_viewset(&views_dir).map_err(input_err)?;
    run.recon.validate().map_err(core_err)?;
    write_resolved(&run, &out)?;

    let start = Instant::now();
    let result = reconstruct(&set, &run.recon).map_err(core_err)?;
    let elapsed = start.elapsed().as_secs_f64();

    let (summary, _, _) = write_recon_artifacts(&result, &out, elapsed)?;
    println!(
        "reconstructed {} in {:.1}s: {} trace rows, refined mesh {} vertices / {} triangles",
        views_dir.display(),
        elapsed,
        result.trace.len(),
        summary.refined_vertices,
        summary.refined_triangles,
    );
    match summary.iterations_to_threshold {
        Some(n) => println!("loss threshold reached at iteration {n}"),
        None => println!("loss threshold not reached"),
    }
    Ok(())
}

/// Writes the full artifact set of a reconstruction into `out`:
/// latent.latf, coarse/refined/residual grids, trace.csv, both meshes
/// as PLY and OBJ, and summary.json. Returns the summary and the two
/// extracted meshes (coarse, refined) for callers that keep going.
pub fn write_recon_artifacts(
    result: &ReconResult,
    out: &Path,
    elapsed_seconds: f64,
) -> Result<(ReconSummary, TriMesh, TriMesh), crate::support::CliError> {
    write_latf(&result.latent, &out.join("latent.latf")).map_err(core_err)?;
    write_sdfg(&result.coarse_grid, &out.join("coarse.sdfg")).map_err(core_err)?;
    write_sdfg(&result.residual, &out.join("residual.sdfg")).map_err(core_err)?;
    write_sdfg(&result.final_grid, &out.join("refined.sdfg")).map_err(core_err)?;
    write_trace_csv(&result.trace, &out.join("trace.csv")).map_err(core_err)?;

    let coarse_mesh = marching_cubes(&result.coarse_grid, 0.0).map_err(core_err)?;
    let refined_mesh = marching_cubes(&result.final_grid, 0.0).map_err(core_err)?;
    write_ply(&coarse_mesh, &out.join("coarse_mesh.ply")).map_err(core_err)?;
    write_obj(&coarse_mesh, &out.join("coarse_mesh.obj")).map_err(core_err)?;
    write_ply(&refined_mesh, &out.join("refined_mesh.ply")).map_err(core_err)?;
    write_obj(&refined_mesh, &out.join("refined_mesh.obj")).map_err(core_err)?;

    let summary = ReconSummary {
        elapsed_seconds,
        iterations_to_threshold: result.iterations_to_threshold,
        final_row: result.trace.last().cloned(),
        coarse_vertices: coarse_mesh.positions.len(),
        coarse_triangles: coarse_mesh.triangles.len(),
        refined_vertices: refined_mesh.positions.len(),
        refined_triangles: refined_mesh.triangles.len(),
    };
    write_json(&summary, &out.join("summary.json"))?;
    Ok((summary, coarse_mesh, refined_mesh))
}
