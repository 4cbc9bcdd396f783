//! `sdforge texture`: subdivide a mesh, bake a volumetric RGB texture
//! from color views, and write the texture, a vertex-colored mesh, and
//! re-rendered views for visual audit.

use crate::cmd_render::check_view_inputs;
use crate::support::{
    core_err, input_err, load_mesh_input, load_run, usage, write_json, write_resolved, CmdResult,
    CliError,
};
use clap::Args;
use sdforge_core::mesh::io::write_ply;
use sdforge_core::mesh::{loop_subdivide, TriMesh};
use sdforge_core::metrics::psnr;
use sdforge_core::render::images::write_color_png;
use sdforge_core::render::ViewSet;
use sdforge_core::texture::{bake, query_vertex_colors, render_texture, write_texg, BakeConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Args)]
pub struct TextureArgs {
    /// JSON run config (schema: TextureRun); flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mesh to texture (.ply/.obj; .sdfg extracts at level 0)
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// View directory with cameras.json and color_*.png priors
    #[arg(long)]
    pub views: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// View-aware weight exponent (cos^k); 0 disables view awareness
    #[arg(long)]
    pub k: Option<f64>,
    /// Bake iteration count
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Loop-subdivision rounds applied before baking
    #[arg(long)]
    pub subdivide: Option<u32>,
    /// Cubic texture grid resolution
    #[arg(long)]
    pub texture_dims: Option<usize>,
}

/// Resolved run configuration echoed next to the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureRun {
    pub mesh: Option<PathBuf>,
    pub views: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub bake: BakeConfig,
    pub subdivide_rounds: u32,
    pub iso_level: f64,
}

impl Default for TextureRun {
    fn default() -> Self {
        Self {
            mesh: None,
            views: None,
            out: None,
            bake: BakeConfig::default(),
            subdivide_rounds: 1,
            iso_level: 0.0,
        }
    }
}

/// Numbers reported in `summary.json` after a bake. PSNR entries may be
/// infinite for exact matches; JSON encodes those as null.
#[derive(Debug, Serialize, Deserialize)]
pub struct TextureSummary {
    pub elapsed_seconds: f64,
    pub data_loss_initial: f64,
    pub data_loss_final: f64,
    pub rerender_psnr_per_view: Vec<f64>,
    pub vertices: usize,
    pub triangles: usize,
}

pub fn run(args: TextureArgs) -> CmdResult {
    let mut run: TextureRun = load_run(args.config.as_deref())?;
    if let Some(v) = args.mesh {
        run.mesh = Some(v);
    }
    if let Some(v) = args.views {
        run.views = Some(v);
    }
    if let Some(v) = args.out {
        run.out = Some(v);
    }
    if let Some(v) = args.k {
        run.bake.view_exponent = v;
    }
    if let Some(v) = args.iterations {
        run.bake.iterations = v;
    }
    if let Some(v) = args.subdivide {
        run.subdivide_rounds = v;
    }
    if let Some(v) = args.texture_dims {
        run.bake.texture_dims = (v, v, v);
    }
    let mesh_path = run
        .mesh
        .clone()
        .ok_or_else(|| usage("--mesh is required (or set \"mesh\" in the config)"))?;
    let views_dir = run
        .views
        .clone()
        .ok_or_else(|| usage("--views is required (or set \"views\" in the config)"))?;
    let out = run
        .out
        .clone()
        .ok_or_else(|| usage("--out is required (or set \"out\" in the config)"))?;

    let mesh = load_mesh_input(&mesh_path, run.iso_level)?;
    check_view_inputs(&views_dir, true)?;
    let set = sdforge_core::render::images::read_viewset(&views_dir).map_err(input_err)?;
    run.bake.validate().map_err(core_err)?;
    write_resolved(&run, &out)?;

    let start = Instant::now();
    let summary = bake_artifacts(&mesh, &set, &run.bake, run.subdivide_rounds, &out)?;
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "baked {}^3 texture from {} views in {:.1}s; data loss {:.5} -> {:.5}",
        run.bake.texture_dims.0,
        set.views.len(),
        elapsed,
        summary.data_loss_initial,
        summary.data_loss_final,
    );
    let finite: Vec<f64> = summary
        .rerender_psnr_per_view
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    if finite.is_empty() {
        println!("re-render PSNR: exact match on every view");
    } else {
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        println!("re-render PSNR vs priors: mean {mean:.2} dB over {} views", finite.len());
    }
    Ok(())
}

/// Subdivides, bakes, and writes the texture artifact set into `out`:
/// texture.texg, colored_mesh.ply, per-view re-renders, and
/// summary.json. Shared with `bench`.
pub fn bake_artifacts(
    mesh: &TriMesh,
    set: &ViewSet,
    cfg: &BakeConfig,
    subdivide_rounds: u32,
    out: &Path,
) -> Result<TextureSummary, CliError> {
    let start = Instant::now();
    let subdivided = loop_subdivide(mesh, subdivide_rounds).map_err(core_err)?;
    let result = bake(&subdivided, set, cfg).map_err(core_err)?;
    write_texg(&result.texture, &out.join("texture.texg")).map_err(core_err)?;
    let colored = query_vertex_colors(&subdivided, &result.texture).map_err(core_err)?;
    write_ply(&colored, &out.join("colored_mesh.ply")).map_err(core_err)?;

    let mut per_view = Vec::with_capacity(set.views.len());
    for (i, (view, imgs)) in set.views.iter().zip(&set.images).enumerate() {
        let rendered = render_texture(&subdivided, &result.texture, view).map_err(core_err)?;
        let color = rendered
            .color
            .expect("texture re-render always produces a color image");
        write_color_png(&color, &out.join(format!("rerender_color_{i}.png"))).map_err(core_err)?;
        let prior = imgs
            .color
            .as_ref()
            .expect("color priors were checked before baking");
        per_view.push(psnr(&color, prior).map_err(core_err)?);
    }

    let summary = TextureSummary {
        elapsed_seconds: start.elapsed().as_secs_f64(),
        data_loss_initial: result.trace.first().copied().unwrap_or(f64::NAN),
        data_loss_final: result.trace.last().copied().unwrap_or(f64::NAN),
        rerender_psnr_per_view: per_view,
        vertices: colored.positions.len(),
        triangles: colored.triangles.len(),
    };
    write_json(&summary, &out.join("summary.json"))?;
    Ok(summary)
}
