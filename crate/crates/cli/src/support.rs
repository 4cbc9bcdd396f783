//! Shared plumbing for the command implementations: exit-code-aware
//! errors, config loading and echoing, mesh/input loading, and small
//! numeric helpers.

use sdforge_core::mesh::{marching_cubes, TriMesh};
use sdforge_core::mesh::io::{read_obj, read_ply};
use sdforge_core::sdf::io::read_sdfg;
use sdforge_core::{Error as CoreError, Vec3};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt;
use std::path::Path;

/// Command failure carrying its process exit class: usage/validation
/// problems exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, malformed configs, or missing/unreadable inputs.
    Usage(String),
    /// The inputs were valid but the run failed.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

pub type CmdResult = Result<(), CliError>;

/// Builds a usage-class error (exit 2).
pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Classifies an error from the processing phase: argument/shape
/// problems and empty-foreground inputs are the caller's (exit 2),
/// everything else is a runtime failure (exit 1).
pub fn core_err(e: CoreError) -> CliError {
    match e {
        CoreError::InvalidArgument { .. }
        | CoreError::ShapeMismatch { .. }
        | CoreError::NoForeground { .. } => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

/// Classifies an error raised while loading user-supplied inputs:
/// always usage-class (exit 2), whatever the underlying kind.
pub fn input_err(e: CoreError) -> CliError {
    CliError::Usage(e.to_string())
}

/// Caps the global thread pool when SDFORGE_THREADS is set.
pub fn init_threads() -> CmdResult {
    let Ok(raw) = std::env::var("SDFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| usage(format!("SDFORGE_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool setup failed: {e}")))
}

/// Loads a run config from JSON, or the default when no file is given.
/// Unknown keys are rejected by the config types' schemas.
pub fn load_run<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

/// Writes the fully resolved run configuration next to the outputs so
/// every artifact directory is self-describing.
pub fn write_resolved<T: Serialize>(cfg: &T, out_dir: &Path) -> CmdResult {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join("resolved_config.json");
    let json = serde_json::to_string_pretty(cfg)
        .map_err(|e| CliError::Runtime(format!("config serialization failed: {e}")))?;
    std::fs::write(&path, json)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes a JSON value to a file, pretty-printed.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> CmdResult {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    std::fs::write(path, json)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// FNV-1a 64-bit hash, used to fingerprint resolved configs in reports.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable hex fingerprint of any serializable config.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_string(cfg).unwrap_or_default();
    format!("{:016x}", fnv64(json.as_bytes()))
}

/// Loads a mesh input by extension: `.sdfg` grids run marching cubes at
/// `iso_level`, `.ply`/`.obj` load directly. Errors are usage-class.
pub fn load_mesh_input(path: &Path, iso_level: f64) -> Result<TriMesh, CliError> {
    if !path.exists() {
        return Err(usage(format!("input {} does not exist", path.display())));
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "sdfg" => {
            let grid = read_sdfg(path).map_err(input_err)?;
            marching_cubes(&grid, iso_level).map_err(input_err)
        }
        "ply" => read_ply(path).map_err(input_err),
        "obj" => read_obj(path).map_err(input_err),
        other => Err(usage(format!(
            "input {}: unsupported extension `{other}` (want .sdfg, .ply, or .obj)",
            path.display()
        ))),
    }
}

/// Gives a colorless mesh deterministic per-vertex colors: each position
/// maps to RGB by its normalized coordinates inside the mesh bounding
/// box. The coloring is a pure function of the surface point, so it is
/// consistent across views and texture baking can reproduce it. Meshes
/// that already carry colors are left alone.
pub fn ensure_vertex_colors(mesh: &mut TriMesh) {
    if !mesh.colors.is_empty() || mesh.positions.is_empty() {
        return;
    }
    let Some((lo, hi)) = mesh.bbox() else {
        return;
    };
    let span = hi - lo;
    let axis = |p: f64, lo: f64, span: f64| {
        if span > 1e-12 {
            ((p - lo) / span).clamp(0.0, 1.0)
        } else {
            0.5
        }
    };
    mesh.colors = mesh
        .positions
        .iter()
        .map(|p| {
            Vec3::new(
                axis(p.x, lo.x, span.x),
                axis(p.y, lo.y, span.y),
                axis(p.z, lo.z, span.z),
            )
        })
        .collect();
}

/// Largest vertex distance from the world origin (the rig's look-at
/// point); camera distances are derived from it.
pub fn bounding_radius(mesh: &TriMesh) -> f64 {
    mesh.positions
        .iter()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
}

/// Median of a sample; None when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("metric values are ordered"));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Formats an optional metric for a CSV cell; absent values stay empty.
pub fn csv_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
