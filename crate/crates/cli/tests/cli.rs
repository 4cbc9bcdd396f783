//! End-to-end tests of the `sdforge` binary: every subcommand is driven
//! through real processes on real files, checking output inventories,
//! exit codes, and determinism.

use sdforge_core::codec::read_latf;
use sdforge_core::mesh::io::read_ply;
use sdforge_core::render::images::{read_mask_png, read_normal_png, write_color_png};
use sdforge_core::render::RenderImage;
use sdforge_core::sdf::io::read_sdfg;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sdforge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdforge"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = sdforge().args(args).output().expect("spawn sdforge");
    assert!(
        out.status.success(),
        "sdforge {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn run_expect_code(args: &[&str], code: i32) -> Output {
    let out = sdforge().args(args).output().expect("spawn sdforge");
    assert_eq!(
        out.status.code(),
        Some(code),
        "sdforge {args:?} exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

/// Generator settings small enough for fast tests: a 32-cell grid needs
/// tighter block and blur ranges than the full-size defaults.
fn small_gen_block() -> serde_json::Value {
    serde_json::json!({
        "dims": [32, 32, 32],
        "block_side_range": [0.2, 0.4],
        "sigma_range": [0.6, 1.2],
    })
}

/// Reconstruction settings sized for seconds-long smoke runs.
fn small_recon_block() -> serde_json::Value {
    serde_json::json!({
        "codec": {"latent_dims": [8, 8, 8], "fine_dims": [32, 32, 32]},
        "coarse_iters": 6,
        "refine_iters": 3,
        "opt_image_size": 32,
        "samples_per_ray": 24,
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

/// Generates `count` small objects into `dir` and returns the config path.
fn gen_small(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let cfg = write_config(dir, &serde_json::json!({"gen": small_gen_block()}));
    run_ok(&[
        "gen",
        "--config",
        cfg.to_str().unwrap(),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.join("objects").to_str().unwrap(),
    ]);
    dir.join("objects")
}

/// Renders the six-view set of the first generated object.
fn render_small(dir: &Path, objects: &Path, size: usize) -> PathBuf {
    let views = dir.join("views");
    run_ok(&[
        "render",
        "--input",
        objects.join("object_0000.sdfg").to_str().unwrap(),
        "--out",
        views.to_str().unwrap(),
        "--size",
        &size.to_string(),
    ]);
    views
}

#[test]
fn gen_writes_grids_manifest_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen_small(dir.path(), 3, 7);
    for i in 0..3 {
        assert!(out.join(format!("object_{i:04}.sdfg")).is_file());
    }
    assert!(!out.join("object_0003.sdfg").exists());
    assert!(out.join("manifest.json").is_file());
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(echo["count"], 3);
    assert_eq!(echo["seed"], 7);
    assert_eq!(echo["gen"]["dims"], serde_json::json!([32, 32, 32]));
}

#[test]
fn gen_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &serde_json::json!({"gen": small_gen_block()}));
    for out in ["a", "b"] {
        run_ok(&[
            "gen",
            "--config",
            cfg.to_str().unwrap(),
            "--count",
            "2",
            "--seed",
            "11",
            "--out",
            dir.path().join(out).to_str().unwrap(),
        ]);
    }
    for file in ["object_0000.sdfg", "object_0001.sdfg", "manifest.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn gen_count_zero_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_expect_code(
        &["gen", "--count", "0", "--out", dir.path().join("d").to_str().unwrap()],
        2,
    );
    assert!(!out.stderr.is_empty());
}

#[test]
fn render_emits_six_views_of_four_images_each() {
    let dir = tempfile::tempdir().unwrap();
    let objects = gen_small(dir.path(), 1, 3);
    let views = render_small(dir.path(), &objects, 64);

    assert!(views.join("cameras.json").is_file());
    assert!(views.join("resolved_config.json").is_file());
    for i in 0..6 {
        for kind in ["mask", "normal", "depth", "color"] {
            let path = views.join(format!("{kind}_{i}.png"));
            assert!(path.is_file(), "missing {}", path.display());
        }
        assert!(views.join(format!("depth_{i}.json")).is_file());
    }

    // The resolved echo records the automatically derived camera distance.
    let echo: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(views.join("resolved_config.json")).unwrap(),
    )
    .unwrap();
    assert!(echo["distance"].as_f64().unwrap() > 0.0);

    // Decoded normals are unit length inside the mask, up to the 8-bit
    // quantization of each component.
    let normal = read_normal_png(&views.join("normal_0.png")).unwrap();
    let mask = read_mask_png(&views.join("mask_0.png")).unwrap();
    let mut foreground = 0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y, 0) >= 0.5 {
                foreground += 1;
                let n = normal.get3(x, y).norm();
                assert!((n - 1.0).abs() <= 2.0 / 255.0, "|n| = {n} at ({x}, {y})");
            }
        }
    }
    assert!(foreground > 50, "only {foreground} foreground pixels");
}

#[test]
fn render_missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.sdfg");
    let out = run_expect_code(
        &[
            "render",
            "--input",
            missing.to_str().unwrap(),
            "--out",
            dir.path().join("v").to_str().unwrap(),
        ],
        2,
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nope.sdfg"), "stderr does not name the path: {stderr}");
}

#[test]
fn reconstruct_writes_the_full_artifact_set() {
    let dir = tempfile::tempdir().unwrap();
    let objects = gen_small(dir.path(), 1, 5);
    let views = render_small(dir.path(), &objects, 64);
    let cfg = write_config(dir.path(), &serde_json::json!({"recon": small_recon_block()}));
    let out_dir = dir.path().join("recon");
    run_ok(&[
        "reconstruct",
        "--config",
        cfg.to_str().unwrap(),
        "--views",
        views.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);

    let latent = read_latf(&out_dir.join("latent.latf")).unwrap();
    assert_eq!(latent.dims(), (8, 8, 8));
    let refined = read_sdfg(&out_dir.join("refined.sdfg")).unwrap();
    assert_eq!(refined.dims(), (32, 32, 32));
    assert!(read_sdfg(&out_dir.join("coarse.sdfg")).is_ok());
    assert!(read_sdfg(&out_dir.join("residual.sdfg")).is_ok());

    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 6 + 3, "header plus one row per iteration");
    assert!(trace.starts_with("iter,beta,tau,loss,"));

    for mesh in ["coarse_mesh", "refined_mesh"] {
        assert!(out_dir.join(format!("{mesh}.ply")).is_file());
        assert!(out_dir.join(format!("{mesh}.obj")).is_file());
    }
    let refined_mesh = read_ply(&out_dir.join("refined_mesh.ply")).unwrap();
    assert!(!refined_mesh.positions.is_empty());

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert!(summary["elapsed_seconds"].as_f64().unwrap() > 0.0);
    assert!(out_dir.join("resolved_config.json").is_file());
}

#[test]
fn reconstruct_missing_normals_exits_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let objects = gen_small(dir.path(), 1, 9);
    let views = render_small(dir.path(), &objects, 64);
    std::fs::remove_file(views.join("normal_2.png")).unwrap();
    let out = run_expect_code(
        &[
            "reconstruct",
            "--views",
            views.to_str().unwrap(),
            "--out",
            dir.path().join("r").to_str().unwrap(),
        ],
        2,
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("normal_2.png"), "stderr does not name the path: {stderr}");
}

#[test]
fn texture_uniform_red_views_dye_the_mesh_red() {
    let dir = tempfile::tempdir().unwrap();
    let objects = gen_small(dir.path(), 1, 21);
    let views = render_small(dir.path(), &objects, 64);

    // Replace every color prior with uniform red.
    let mut red = RenderImage::new(64, 64, 3, 0.0).unwrap();
    for px in red.values_mut().chunks_exact_mut(3) {
        px[0] = 1.0;
    }
    for i in 0..6 {
        write_color_png(&red, &views.join(format!("color_{i}.png"))).unwrap();
    }

    let cfg = write_config(
        dir.path(),
        &serde_json::json!({
            "bake": {"texture_dims": [16, 16, 16], "iterations": 60, "world_extent": 2.2},
            "subdivide_rounds": 0,
        }),
    );
    let out_dir = dir.path().join("tex");
    run_ok(&[
        "texture",
        "--config",
        cfg.to_str().unwrap(),
        "--mesh",
        objects.join("object_0000.sdfg").to_str().unwrap(),
        "--views",
        views.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);

    assert!(out_dir.join("texture.texg").is_file());
    assert!(out_dir.join("resolved_config.json").is_file());
    for i in 0..6 {
        assert!(out_dir.join(format!("rerender_color_{i}.png")).is_file());
    }
    let colored = read_ply(&out_dir.join("colored_mesh.ply")).unwrap();
    assert_eq!(colored.colors.len(), colored.positions.len());
    let quant = 1.0 / 255.0;
    for c in &colored.colors {
        assert!(
            (c.x - 1.0).abs() <= 0.02 + quant && c.y <= 0.02 + quant && c.z <= 0.02 + quant,
            "vertex color {c:?} is not red"
        );
    }

    // Both view-aware and flat weighting are accepted.
    run_ok(&[
        "texture",
        "--config",
        cfg.to_str().unwrap(),
        "--mesh",
        objects.join("object_0000.sdfg").to_str().unwrap(),
        "--views",
        views.to_str().unwrap(),
        "--out",
        dir.path().join("tex_k0").to_str().unwrap(),
        "--k",
        "0",
    ]);
}

#[test]
fn eval_identical_pair_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let objects = gen_small(dir.path(), 1, 13);
    let object = objects.join("object_0000.sdfg");
    let out_dir = dir.path().join("eval");
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({"metrics": {"samples": 600, "iou_resolution": 48}}),
    );
    run_ok(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--pred",
        object.to_str().unwrap(),
        "--gt",
        object.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("object_0000.json")).unwrap(),
    )
    .unwrap();
    let geom = &report["geometry"];
    assert_eq!(geom["chamfer"].as_f64().unwrap(), 0.0);
    assert!(geom["volume_iou"].as_f64().unwrap() > 0.999);
    assert_eq!(geom["f_score"].as_f64().unwrap(), 100.0);

    let csv = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header, one pair, one median row");
    assert!(lines[0].starts_with("id,chamfer,volume_iou,f_score,psnr,ssim,seed,config_hash"));
    assert!(lines[1].starts_with("object_0000,0,"));
    assert!(lines[2].starts_with("median,0,"));
    assert!(out_dir.join("resolved_config.json").is_file());
}

#[test]
fn eval_mixed_validity_processes_the_valid_pairs_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let objects = gen_small(dir.path(), 1, 17);
    let object = objects.join("object_0000.sdfg");
    let pairs = dir.path().join("pairs.json");
    std::fs::write(
        &pairs,
        serde_json::to_string(&serde_json::json!([
            {"id": "good", "pred": object, "gt": object},
            {"id": "broken", "pred": dir.path().join("missing.ply"), "gt": object},
        ]))
        .unwrap(),
    )
    .unwrap();
    let out_dir = dir.path().join("eval");
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({"metrics": {"samples": 400, "iou_resolution": 32}}),
    );
    let out = run_expect_code(
        &[
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--pairs",
            pairs.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ],
        2,
    );

    let good: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("good.json")).unwrap()).unwrap();
    assert_eq!(good["geometry"]["chamfer"].as_f64().unwrap(), 0.0);
    let broken: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("broken.json")).unwrap())
            .unwrap();
    assert!(broken["error"].as_str().unwrap().contains("missing.ply"));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken"), "stderr does not list the failed pair: {stderr}");
    let csv = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("good,0,")));
}

#[test]
fn bench_runs_the_loop_and_accounts_for_its_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({
            "count": 1,
            "seed": 4,
            "image_size": 48,
            "gen": small_gen_block(),
            "recon": small_recon_block(),
            "bake": {"texture_dims": [12, 12, 12], "iterations": 20, "world_extent": 2.2},
            "metrics": {"samples": 400, "iou_resolution": 32},
            "subdivide_rounds": 0,
        }),
    );
    let out_a = dir.path().join("a");
    run_ok(&["bench", "--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap()]);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("bench.json")).unwrap()).unwrap();
    assert_eq!(report["count"], 1);
    assert_eq!(report["objects"].as_array().unwrap().len(), 1);
    for stage in ["gen", "render", "reconstruct", "texture", "eval"] {
        assert!(report["stage_seconds"][stage].as_f64().is_some(), "missing stage {stage}");
    }
    let stage_total = report["stage_total_seconds"].as_f64().unwrap();
    let wall = report["wall_seconds"].as_f64().unwrap();
    assert!(
        (wall - stage_total).abs() <= 0.05 * wall + 0.05,
        "stage sum {stage_total} vs wall {wall}"
    );
    let object = &report["objects"][0];
    assert!(object["geometry"]["volume_iou"].as_f64().unwrap() > 0.0);
    assert!(!object["loss_curve"].as_array().unwrap().is_empty());

    // Per-object artifacts all land under the object directory.
    let obj_dir = out_a.join("object_0000");
    for artifact in [
        "gt.sdfg",
        "gt_mesh.ply",
        "views/cameras.json",
        "recon/latent.latf",
        "recon/refined_mesh.ply",
        "texture/texture.texg",
        "eval.json",
    ] {
        assert!(obj_dir.join(artifact).is_file(), "missing {artifact}");
    }

    // A rerun reproduces every metric bit for bit (timings may differ).
    let out_b = dir.path().join("b");
    run_ok(&["bench", "--config", cfg.to_str().unwrap(), "--out", out_b.to_str().unwrap()]);
    let rerun: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_b.join("bench.json")).unwrap()).unwrap();
    assert_eq!(report["objects"], rerun["objects"]);
    assert_eq!(report["medians"], rerun["medians"]);
}

#[test]
fn thread_cap_env_var_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = sdforge()
        .env("SDFORGE_THREADS", "zero")
        .args(["gen", "--count", "1", "--out", dir.path().join("d").to_str().unwrap()])
        .output()
        .expect("spawn sdforge");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SDFORGE_THREADS"));

    // A valid cap runs fine.
    let cfg = write_config(dir.path(), &serde_json::json!({"gen": small_gen_block()}));
    let out = sdforge()
        .env("SDFORGE_THREADS", "1")
        .args([
            "gen",
            "--config",
            cfg.to_str().unwrap(),
            "--count",
            "1",
            "--out",
            dir.path().join("t").to_str().unwrap(),
        ])
        .output()
        .expect("spawn sdforge");
    assert!(out.status.success());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &serde_json::json!({"gen": {"dimz": [32, 32, 32]}}));
    let out = run_expect_code(
        &[
            "gen",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("d").to_str().unwrap(),
        ],
        2,
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimz"));
}
