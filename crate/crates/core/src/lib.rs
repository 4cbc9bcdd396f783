//! Core library for the `sdforge` shape pipeline.
//!
//! The pipeline is a closed loop over signed distance fields (SDFs) on dense
//! voxel grids:
//!
//! 1. [`gen`] builds random multi-block objects as blurred SDF grids.
//! 2. [`codec`] compresses a grid to a compact latent block grid and decodes
//!    it back through trilinear upsampling plus Gaussian smoothing.
//! 3. [`render`] rasterizes meshes into fixed six-view image sets and soft
//!    projects SDF grids differentiably (masks, depths, normals).
//! 4. [`recon`] recovers a latent code from six-view masks and normals via
//!    space-carving initialization and two-stage first-order optimization.
//! 5. [`mesh`] extracts triangle meshes (marching cubes + loop subdivision)
//!    and computes occupancy fields.
//! 6. [`texture`] bakes view-weighted colors into a volumetric RGB grid.
//! 7. [`metrics`] scores geometry (chamfer, IoU, F-score) and images
//!    (PSNR, SSIM).
//!
//! All randomized operations take explicit seeds and use a portable counter
//! based generator, so every artifact is reproducible byte for byte; parallel
//! sections reduce in fixed order so results are identical across thread
//! counts.

pub mod codec;
pub mod error;
pub mod gen;
pub mod mesh;
pub mod metrics;
pub mod recon;
pub mod render;
pub mod sdf;
pub mod texture;

pub use error::{Error, Result};

/// 3-vector of f64, the working scalar type of the whole pipeline.
pub type Vec3 = nalgebra::Vector3<f64>;
