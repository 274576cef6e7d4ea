//! End-to-end tests of the `octa-forge` binary: the sample → voxelize →
//! simulate → evaluate/baseline/render flow on the bundled demo graph,
//! plus exit-code conventions.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_octa-forge"))
}

fn demo_data() -> (PathBuf, PathBuf) {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo");
    (root.join("nodes.csv"), root.join("edges.csv"))
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small sampler settings so CLI runs stay quick.
const SMALL_SAMPLER: &str = r#"
patch_shape_voxels = [75, 75, 75]
voxel_size_um = 2.0
min_vessel_count = 40
large_vessel_radius_um = 13.0
"#;

#[test]
fn sample_voxelize_simulate_evaluate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (nodes, edges) = demo_data();

    let sampler_cfg = dir.path().join("sampler.toml");
    std::fs::write(&sampler_cfg, SMALL_SAMPLER).unwrap();

    let patches_dir = dir.path().join("patches");
    let out = bin()
        .args(["sample", "--nodes"])
        .arg(&nodes)
        .arg("--edges")
        .arg(&edges)
        .arg("--config")
        .arg(&sampler_cfg)
        .arg("--out-dir")
        .arg(&patches_dir)
        .output()
        .unwrap();
    ok(&out);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(patches_dir.join("patches.json")).unwrap())
            .unwrap();
    let cells = manifest["cells"].as_array().unwrap();
    assert!(!cells.is_empty());
    let accepted: Vec<&serde_json::Value> = cells
        .iter()
        .filter(|c| c["status"] == "accepted")
        .collect();
    assert!(!accepted.is_empty(), "no accepted patches in demo sample");
    assert!(cells.iter().any(|c| c["status"] == "rejected"));
    // Every cell reports exactly one status, rejected ones carry a reason.
    for c in cells {
        if c["status"] == "rejected" {
            assert!(c["reason"].is_string(), "rejected cell without reason: {c}");
        } else {
            assert!(c["reason"].is_null());
        }
    }

    let patch_dir = patches_dir.join(accepted[0]["dir"].as_str().unwrap());
    assert!(patch_dir.join("nodes.csv").exists());
    assert!(patch_dir.join("patch.json").exists());

    // Voxelize the accepted patch.
    let label_stem = dir.path().join("patch0");
    let out = bin()
        .arg("voxelize")
        .arg("--patch-dir")
        .arg(&patch_dir)
        .arg("--out")
        .arg(&label_stem)
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("patch0.label.bin").exists());
    assert!(dir.path().join("patch0.vessel.json").exists());

    // Simulate with a stage override and explicit seed.
    let synth_stem = dir.path().join("patch0.synth");
    let out = bin()
        .arg("simulate")
        .arg("--in")
        .arg(&label_stem)
        .args(["--stages", "LTA", "--seed", "9"])
        .arg("--out")
        .arg(&synth_stem)
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("patch0.synth.bin").exists());

    // Evaluate the label against itself (perfect scores), with a region.
    let label_vol = dir.path().join("patch0.label");
    let report = dir.path().join("eval.json");
    let out = bin()
        .arg("evaluate")
        .arg("--pred")
        .arg(&label_vol)
        .arg("--label")
        .arg(&label_vol)
        .arg("--region")
        .arg(format!("small={}", label_vol.display()))
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("region"), "table header missing: {stdout}");
    assert!(stdout.contains("100.00"), "perfect score missing: {stdout}");
    let scores: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(scores[0]["dice"], 1.0);
    assert_eq!(scores[0]["cl_dice"], 1.0);

    // Otsu baseline on the synthetic volume.
    let otsu_stem = dir.path().join("otsu_mask");
    let out = bin()
        .arg("baseline")
        .args(["--method", "otsu", "--in"])
        .arg(&synth_stem)
        .arg("--out")
        .arg(&otsu_stem)
        .output()
        .unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("otsu threshold"));

    // Frangi baseline on the synthetic volume.
    let frangi_cfg = dir.path().join("frangi.toml");
    std::fs::write(&frangi_cfg, "scales_um = [4.0, 8.0]\nthreshold = 0.2\n").unwrap();
    let frangi_stem = dir.path().join("frangi_mask");
    let out = bin()
        .arg("baseline")
        .args(["--method", "frangi", "--in"])
        .arg(&synth_stem)
        .arg("--config")
        .arg(&frangi_cfg)
        .arg("--out")
        .arg(&frangi_stem)
        .output()
        .unwrap();
    ok(&out);

    // Evaluate the Otsu mask against the true labels; scores must be finite
    // and the table should print both rows.
    let out = bin()
        .arg("evaluate")
        .arg("--pred")
        .arg(&otsu_stem)
        .arg("--label")
        .arg(&label_vol)
        .output()
        .unwrap();
    ok(&out);

    // Render a couple of slices from the synthetic volume.
    let render_dir = dir.path().join("slices");
    let out = bin()
        .arg("render")
        .arg("--in")
        .arg(&synth_stem)
        .args(["--axis", "y", "--indices", "0,37,74"])
        .arg("--out-dir")
        .arg(&render_dir)
        .output()
        .unwrap();
    ok(&out);
    assert!(render_dir.join("y0037.png").exists());

    // The pipeline's label volume must be byte-equal to this standalone
    // voxelize run of the same patch (ground truth is never modified by
    // the simulator).
    let pipe_cfg = dir.path().join("pipe.toml");
    std::fs::write(&pipe_cfg, format!("[sampler]\n{SMALL_SAMPLER}\n")).unwrap();
    let pipe_out = dir.path().join("pipe_out");
    let out = bin()
        .arg("pipeline")
        .arg("--nodes")
        .arg(&nodes)
        .arg("--edges")
        .arg(&edges)
        .arg("--config")
        .arg(&pipe_cfg)
        .arg("--out-dir")
        .arg(&pipe_out)
        .output()
        .unwrap();
    ok(&out);
    let patch_name = accepted[0]["dir"].as_str().unwrap();
    let standalone = std::fs::read(dir.path().join("patch0.label.bin")).unwrap();
    let pipelined = std::fs::read(pipe_out.join(format!("{patch_name}.label.bin"))).unwrap();
    assert_eq!(standalone, pipelined, "pipeline label differs from standalone voxelize");
}

#[test]
fn pipeline_subcommand_writes_manifest_and_is_seed_stable() {
    let dir = tempfile::tempdir().unwrap();
    let (nodes, edges) = demo_data();
    let cfg = dir.path().join("pipeline.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 3\n[sampler]\n{SMALL_SAMPLER}\n[sim]\nstages = \"LTA\"\n"
        ),
    )
    .unwrap();

    let run = |out_dir: &Path, threads: &str| {
        let out = bin()
            .arg("pipeline")
            .arg("--nodes")
            .arg(&nodes)
            .arg("--edges")
            .arg(&edges)
            .arg("--config")
            .arg(&cfg)
            .arg("--out-dir")
            .arg(out_dir)
            .args(["--threads", threads])
            .output()
            .unwrap();
        ok(&out);
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out_dir.join("manifest.json")).unwrap(),
        )
        .unwrap();
        manifest["files"].clone()
    };

    let a = run(&dir.path().join("out_a"), "1");
    let b = run(&dir.path().join("out_b"), "4");
    assert_eq!(a, b, "manifest hashes changed with thread count");
    assert!(!a.as_object().unwrap().is_empty());
}

#[test]
fn stage_toggles_keep_labels_and_change_intensity_only_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let (nodes, edges) = demo_data();
    let cfg = dir.path().join("pipeline.toml");
    std::fs::write(
        &cfg,
        format!("seed = 3\n[sampler]\n{SMALL_SAMPLER}\n"),
    )
    .unwrap();

    let run = |out_dir: &Path, stages: &str| {
        let out = bin()
            .arg("pipeline")
            .arg("--nodes")
            .arg(&nodes)
            .arg("--edges")
            .arg(&edges)
            .arg("--config")
            .arg(&cfg)
            .arg("--out-dir")
            .arg(out_dir)
            .args(["--stages", stages])
            .output()
            .unwrap();
        ok(&out);
    };
    let dir_none = dir.path().join("none");
    let dir_l = dir.path().join("l");
    run(&dir_none, "");
    run(&dir_l, "L");

    let manifest = |d: &Path| -> serde_json::Map<String, serde_json::Value> {
        serde_json::from_str::<serde_json::Value>(
            &std::fs::read_to_string(d.join("manifest.json")).unwrap(),
        )
        .unwrap()["files"]
            .as_object()
            .unwrap()
            .clone()
    };
    let m0 = manifest(&dir_none);
    let m1 = manifest(&dir_l);
    let mut label_same = 0;
    let mut intensity_diff = 0;
    for (name, h0) in &m0 {
        let h1 = &m1[name];
        if name.contains(".label.") || name.contains(".radius.") {
            assert_eq!(h0, h1, "ground truth changed with stages: {name}");
            label_same += 1;
        }
        if name.contains(".intensity.bin") {
            assert_ne!(h0, h1, "noise stage had no effect: {name}");
            intensity_diff += 1;
        }
    }
    assert!(label_same > 0 && intensity_diff > 0);
}

#[test]
fn exit_codes_follow_the_convention() {
    let dir = tempfile::tempdir().unwrap();
    let (nodes, _) = demo_data();

    // Missing data file -> 3, message names the file.
    let out = bin()
        .arg("pipeline")
        .arg("--nodes")
        .arg(&nodes)
        .arg("--edges")
        .arg(dir.path().join("nope_edges.csv"))
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope_edges.csv"));

    // Unknown stage letter -> 2.
    let label = dir.path().join("missing_label");
    let out = bin()
        .arg("simulate")
        .arg("--in")
        .arg(&label)
        .args(["--stages", "LXT"])
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Invalid config TOML -> 2.
    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "r_max = \"not a number\"\n").unwrap();
    let out = bin()
        .arg("simulate")
        .arg("--in")
        .arg(&label)
        .arg("--config")
        .arg(&bad_cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Invalid thread env -> 2.
    let out = bin()
        .env("OCTA_FORGE_THREADS", "many")
        .arg("render")
        .arg("--in")
        .arg(&label)
        .args(["--indices", "0"])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
