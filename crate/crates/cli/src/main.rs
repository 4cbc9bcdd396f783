//! `sdforge`: a closed-loop SDF shape pipeline. Generate random
//! ground-truth objects, render calibrated view priors, reconstruct
//! latents from masks and normals, bake textures, and score the results
//! — every step deterministic given its config and seed.
//!
//! Every command writes `resolved_config.json` next to its outputs.
//! Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.
//! The environment variable `SDFORGE_THREADS` caps worker threads.

mod cmd_bench;
mod cmd_eval;
mod cmd_gen;
mod cmd_reconstruct;
mod cmd_render;
mod cmd_texture;
mod support;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sdforge",
    version,
    about = "Closed-loop SDF shape pipeline: generate, render, reconstruct, texture, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate random blurred-block SDF grids plus a manifest
    Gen(cmd_gen::GenArgs),
    /// Render six calibrated views (mask/normal/depth/color) of a grid or mesh
    Render(cmd_render::RenderArgs),
    /// Reconstruct a latent SDF from a view directory of masks and normals
    Reconstruct(cmd_reconstruct::ReconstructArgs),
    /// Bake a volumetric texture for a mesh from color views
    Texture(cmd_texture::TextureArgs),
    /// Score predicted meshes/images against ground truth
    Eval(cmd_eval::EvalArgs),
    /// Run the whole pipeline on seeded objects and time each stage
    Bench(cmd_bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = support::init_threads() {
        eprintln!("sdforge: {e}");
        return ExitCode::from(e.exit_code());
    }
    let result = match cli.command {
        Cmd::Gen(args) => cmd_gen::run(args),
        Cmd::Render(args) => cmd_render::run(args),
        Cmd::Reconstruct(args) => cmd_reconstruct::run(args),
        Cmd::Texture(args) => cmd_texture::run(args),
        Cmd::Eval(args) => cmd_eval::run(args),
        Cmd::Bench(args) => cmd_bench::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sdforge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
