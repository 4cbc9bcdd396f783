//! `sdforge render`: rasterize six calibrated ground-truth views
//! (mask, normal, depth, color) of a grid or mesh into a view
//! directory consumable by `reconstruct` and `texture`.

use crate::support::{
    bounding_radius, core_err, ensure_vertex_colors, load_mesh_input, load_run, usage,
    write_resolved, CmdResult,
};
use clap::Args;
use sdforge_core::mesh::TriMesh;
use sdforge_core::render::images::write_viewset;
use sdforge_core::render::{make_rig, rasterize_mesh, NormalSource, ViewSet};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// JSON run config (schema: RenderRun); flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input grid (.sdfg) or mesh (.ply/.obj)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output view directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Square image side in pixels
    #[arg(long)]
    pub size: Option<usize>,
    /// Camera distance; defaults to 2.7x the object bounding radius
    #[arg(long)]
    pub distance: Option<f64>,
    /// Vertical field of view in degrees
    #[arg(long)]
    pub fov: Option<f64>,
    /// Isosurface level for grid inputs
    #[arg(long)]
    pub level: Option<f64>,
}

/// Camera distance multiplier applied to the object bounding radius
/// when no explicit distance is configured.
const AUTO_DISTANCE_FACTOR: f64 = 2.7;

/// Resolved run configuration echoed next to the outputs. A null
/// `distance` in the input config means "derive from the object"; the
/// echo always records the numeric value actually used.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderRun {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub size: usize,
    pub distance: Option<f64>,
    pub fov_y_deg: f64,
    pub iso_level: f64,
}

impl Default for RenderRun {
    fn default() -> Self {
        Self {
            input: None,
            out: None,
            size: 256,
            distance: None,
            fov_y_deg: 40.0,
            iso_level: 0.0,
        }
    }
}

pub fn run(args: RenderArgs) -> CmdResult {
    let mut run: RenderRun = load_run(args.config.as_deref())?;
    if let Some(v) = args.input {
        run.input = Some(v);
    }
    if let Some(v) = args.out {
        run.out = Some(v);
    }
    if let Some(v) = args.size {
        run.size = v;
    }
    if let Some(v) = args.distance {
        run.distance = Some(v);
    }
    if let Some(v) = args.fov {
        run.fov_y_deg = v;
    }
    if let Some(v) = args.level {
        run.iso_level = v;
    }
    let input = run
        .input
        .clone()
        .ok_or_else(|| usage("--input is required (or set \"input\" in the config)"))?;
    let out = run
        .out
        .clone()
        .ok_or_else(|| usage("--out is required (or set \"out\" in the config)"))?;

    let mut mesh = load_mesh_input(&input, run.iso_level)?;
    if mesh.positions.is_empty() {
        return Err(usage(format!(
            "input {} produced an empty surface; nothing to render",
            input.display()
        )));
    }
    ensure_vertex_colors(&mut mesh);

    let distance = match run.distance {
        Some(d) => d,
        None => {
            let radius = bounding_radius(&mesh);
            if radius <= 0.0 {
                return Err(usage("object bounding radius is zero; pass --distance"));
            }
            AUTO_DISTANCE_FACTOR * radius
        }
    };
    run.distance = Some(distance);

    write_resolved(&run, &out)?;
    let set = render_rig_views(&mesh, distance, run.size, run.fov_y_deg)?;
    write_viewset(&set, &out).map_err(core_err)?;
    println!(
        "wrote {} views (mask/normal/depth/color) at {}x{} to {}",
        set.views.len(),
        run.size,
        run.size,
        out.display()
    );
    Ok(())
}

/// Renders the six-view rig for a mesh. Shared with `bench`.
pub fn render_rig_views(
    mesh: &TriMesh,
    distance: f64,
    size: usize,
    fov_y_deg: f64,
) -> Result<ViewSet, crate::support::CliError> {
    let mut set = make_rig(distance, (size, size), fov_y_deg).map_err(core_err)?;
    let source = if mesh.normals.is_empty() {
        NormalSource::Face
    } else {
        NormalSource::Vertex
    };
    for view in &set.views {
        set.images
            .push(rasterize_mesh(mesh, view, source).map_err(core_err)?);
    }
    Ok(set)
}

/// Checks that a view directory holds the per-view files `reconstruct`
/// needs (cameras, masks, normals), naming the first missing path.
pub fn check_view_inputs(dir: &Path, want_color: bool) -> CmdResult {
    if !dir.is_dir() {
        return Err(usage(format!(
            "view directory {} does not exist",
            dir.display()
        )));
    }
    let cameras = dir.join("cameras.json");
    if !cameras.exists() {
        return Err(usage(format!("missing camera file {}", cameras.display())));
    }
    let views = sdforge_core::render::images::read_cameras(dir).map_err(crate::support::input_err)?;
    for i in 0..views.len() {
        let mut required = vec![
            dir.join(format!("mask_{i}.png")),
            dir.join(format!("normal_{i}.png")),
        ];
        if want_color {
            required.push(dir.join(format!("color_{i}.png")));
        }
        for path in required {
            if !path.exists() {
                return Err(usage(format!("missing view input {}", path.display())));
            }
        }
    }
    Ok(())
}
