//! `octa-forge` — synthetic cerebral 3D OCTA volumes from vessel graphs.
//!
//! Subcommands mirror the pipeline stages (`sample`, `voxelize`,
//! `simulate`) plus evaluation (`evaluate`, `baseline`), inspection
//! (`render`), and the one-shot `pipeline`. Exit codes: 0 success,
//! 2 configuration error, 3 data error, 4 internal invariant violation.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use octa_forge::baselines::{frangi_segment, otsu_threshold, FrangiConfig};
use octa_forge::error::{Error, Result};
use octa_forge::graph::{parse_graph, write_graph};
use octa_forge::grid::Grid3;
use octa_forge::metrics::{evaluate_regions, BinaryMask, RegionSpec};
use octa_forge::pipeline::{run_pipeline, PipelineConfig};
use octa_forge::sampler::{sample_patches, GraphPatch, PatchStatus, SamplerConfig};
use octa_forge::sim::{simulate, SimConfig, Stages};
use octa_forge::volume::{read_volume, render_slices, write_volume, Axis, Volume, VolumeData, VolumeKind};
use octa_forge::voxel::{read_labeled_volume, voxelize, write_labeled_volume};

#[derive(Parser)]
#[command(name = "octa-forge", version, about)]
struct Cli {
    /// Worker threads (default: all cores; env OCTA_FORGE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract grid-aligned graph patches and write accepted ones as CSV pairs.
    Sample {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Sampler settings (TOML, bare SamplerConfig keys).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rasterize a sampled patch directory into a labeled volume bundle.
    Voxelize {
        /// Directory written by `sample` (nodes.csv, edges.csv, patch.json).
        #[arg(long)]
        patch_dir: PathBuf,
        /// Output stem; writes <out>.label/.radius/.theta/.vessel volumes.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the artifact simulation on a labeled volume bundle.
    Simulate {
        /// Input stem of a labeled volume bundle.
        #[arg(long = "in")]
        input: PathBuf,
        /// Simulation settings (TOML, bare SimConfig keys).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stage override, a subset of "LTAC" (empty string disables all).
        #[arg(long)]
        stages: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output stem for the intensity volume.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dice / clDice between a prediction and a label volume.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        label: PathBuf,
        /// Extra evaluation regions as name=volume-stem (repeatable).
        #[arg(long = "region")]
        regions: Vec<String>,
        /// Optional path for the JSON report (stdout always gets the table).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classical annotation-free segmentation baselines.
    Baseline {
        #[arg(long, value_parser = ["otsu", "frangi"])]
        method: String,
        #[arg(long = "in")]
        input: PathBuf,
        /// Frangi settings (TOML, bare FrangiConfig keys).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output stem for the binary mask volume.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render grayscale PNG slices of a volume.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "z")]
        axis: String,
        /// Comma-separated slice indices, e.g. 0,64,128.
        #[arg(long)]
        indices: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Full pipeline: sample, voxelize, simulate, write manifest.
    Pipeline {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        /// Pipeline settings (TOML with [sampler], [sim], [deformation],
        /// [frangi] tables).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides output_dir from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        stages: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("OCTA_FORGE_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| {
                Error::Config(format!("OCTA_FORGE_THREADS must be an integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Per-patch metadata written next to the CSV pair so `voxelize` can
/// reconstruct the patch geometry.
#[derive(Serialize, Deserialize)]
struct PatchMeta {
    grid_index: [usize; 3],
    origin_um: [f64; 3],
    extent_um: [f64; 3],
    patch_shape_voxels: [usize; 3],
    voxel_size_um: f64,
    vessel_count: usize,
}

#[derive(Serialize)]
struct SampleCell<'a> {
    grid_index: [usize; 3],
    origin_um: [f64; 3],
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<octa_forge::sampler::RejectReason>,
    vessel_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<String>,
}

fn cmd_sample(nodes: &Path, edges: &Path, config: Option<&Path>, out_dir: &Path) -> Result<()> {
    let cfg: SamplerConfig = load_toml(config)?;
    let graph = parse_graph(nodes, edges)?;
    for idx in graph.duplicate_edges() {
        eprintln!("warning: duplicate edge at record {} (kept)", idx + 1);
    }
    let patches = sample_patches(&graph, &cfg)?;
    if patches.is_empty() {
        eprintln!("warning: graph bounding box is smaller than one patch; nothing to sample");
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut cells = Vec::new();
    let mut accepted = 0usize;
    for p in &patches {
        let dir_name = format!(
            "patch_{:03}_{:03}_{:03}",
            p.grid_index[0], p.grid_index[1], p.grid_index[2]
        );
        let dir = if p.status.is_accepted() {
            accepted += 1;
            let pdir = out_dir.join(&dir_name);
            std::fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
            let sub = p
                .sub_graph
                .as_ref()
                .expect("accepted patches hold at least min_vessel_count edges");
            write_graph(sub, &pdir.join("nodes.csv"), &pdir.join("edges.csv"))?;
            let meta = PatchMeta {
                grid_index: p.grid_index,
                origin_um: p.origin_um.to_array(),
                extent_um: p.extent_um.to_array(),
                patch_shape_voxels: cfg.patch_shape_voxels,
                voxel_size_um: cfg.voxel_size_um,
                vessel_count: p.vessel_count,
            };
            let mp = pdir.join("patch.json");
            std::fs::write(&mp, serde_json::to_string_pretty(&meta).unwrap())
                .map_err(|e| Error::io(&mp, e))?;
            Some(dir_name.clone())
        } else {
            None
        };
        cells.push(SampleCell {
            grid_index: p.grid_index,
            origin_um: p.origin_um.to_array(),
            status: if p.status.is_accepted() {
                "accepted"
            } else {
                "rejected"
            },
            reason: match &p.status {
                PatchStatus::Rejected(r) => Some(*r),
                PatchStatus::Accepted => None,
            },
            vessel_count: p.vessel_count,
            dir,
        });
    }
    let manifest = serde_json::json!({
        "config": cfg,
        "nodes": nodes,
        "edges": edges,
        "cells": cells,
    });
    let mp = out_dir.join("patches.json");
    std::fs::write(&mp, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| Error::io(&mp, e))?;
    println!(
        "sampled {} grid cells, {} accepted -> {}",
        cells.len(),
        accepted,
        out_dir.display()
    );
    Ok(())
}

fn cmd_voxelize(patch_dir: &Path, out: &Path) -> Result<()> {
    let mp = patch_dir.join("patch.json");
    let meta: PatchMeta = serde_json::from_str(
        &std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?,
    )
    .map_err(|e| Error::Data(format!("{}: {e}", mp.display())))?;
    let sub_graph = parse_graph(&patch_dir.join("nodes.csv"), &patch_dir.join("edges.csv"))?;
    let patch = GraphPatch {
        grid_index: meta.grid_index,
        origin_um: meta.origin_um.into(),
        extent_um: meta.extent_um.into(),
        vessel_count: sub_graph.edges().len(),
        sub_graph: Some(sub_graph),
        status: PatchStatus::Accepted,
    };
    let vol = voxelize(&patch, meta.patch_shape_voxels, meta.voxel_size_um)?;
    write_labeled_volume(&vol, out)?;
    println!(
        "voxelized {:?} at {} µm -> {}.{{label,radius,theta,vessel}}",
        meta.patch_shape_voxels,
        meta.voxel_size_um,
        out.display()
    );
    Ok(())
}

fn cmd_simulate(
    input: &Path,
    config: Option<&Path>,
    stages: Option<&str>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg: SimConfig = load_toml(config)?;
    if let Some(s) = stages {
        cfg.stages = Stages::parse(s)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let vol = read_labeled_volume(input)?;
    let synth = simulate(&vol, &cfg)?;
    write_volume(
        &Volume::f32(VolumeKind::Intensity, synth.voxel_size_um, synth.intensity),
        out,
    )?;
    println!("simulated stages \"{}\" -> {}", cfg.stages, out.display());
    Ok(())
}

/// Binarize a volume: uint8 data is thresholded at > 0, float data at >= 0.5.
fn read_mask(stem: &Path) -> Result<BinaryMask> {
    let v = read_volume(stem)?;
    Ok(match v.data {
        VolumeData::U8(g) => Grid3::from_vec(
            g.shape(),
            g.as_slice().iter().map(|&x| u8::from(x > 0)).collect(),
        ),
        VolumeData::F32(g) => Grid3::from_vec(
            g.shape(),
            g.as_slice().iter().map(|&x| u8::from(x >= 0.5)).collect(),
        ),
    })
}

fn cmd_evaluate(pred: &Path, label: &Path, regions: &[String], out: Option<&Path>) -> Result<()> {
    let pred_mask = read_mask(pred)?;
    let label_mask = read_mask(label)?;
    let mut specs = vec![RegionSpec::all(pred_mask.shape())];
    for spec in regions {
        let (name, path) = spec.split_once('=').ok_or_else(|| {
            Error::Config(format!("--region expects name=path, got `{spec}`"))
        })?;
        specs.push(RegionSpec {
            name: name.to_string(),
            mask: read_mask(Path::new(path))?,
        });
    }
    let scores = evaluate_regions(&pred_mask, &label_mask, &specs)?;

    println!("{:<12} {:>8} {:>8}", "region", "Dice", "clDice");
    for s in &scores {
        println!(
            "{:<12} {:>8.2} {:>8.2}",
            s.region,
            100.0 * s.dice,
            100.0 * s.cl_dice
        );
    }
    let json = serde_json::to_string_pretty(&scores).unwrap();
    match out {
        Some(p) => std::fs::write(p, json).map_err(|e| Error::io(p, e))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_baseline(method: &str, input: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let v = read_volume(input)?;
    let (grid, voxel_size) = match v.data {
        VolumeData::F32(g) => (g, v.voxel_size_um),
        VolumeData::U8(_) => {
            return Err(Error::Data(
                "baselines expect a float32 intensity volume".into(),
            ))
        }
    };
    let mask = match method {
        "otsu" => {
            let (t, mask) = otsu_threshold(&grid)?;
            println!("otsu threshold: {t:.6}");
            mask
        }
        "frangi" => {
            let cfg: FrangiConfig = load_toml(config)?;
            frangi_segment(&grid, voxel_size, &cfg)?
        }
        other => return Err(Error::Config(format!("unknown method `{other}`"))),
    };
    write_volume(&Volume::u8(VolumeKind::Label, voxel_size, mask), out)?;
    println!("wrote mask -> {}", out.display());
    Ok(())
}

fn cmd_render(input: &Path, axis: &str, indices: &str, out_dir: &Path) -> Result<()> {
    let axis = Axis::parse(axis)?;
    let idx: Vec<usize> = indices
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid slice index `{s}`")))
        })
        .collect::<Result<_>>()?;
    if idx.is_empty() {
        return Err(Error::Config("no slice indices given".into()));
    }
    let volume = read_volume(input)?;
    let written = render_slices(&volume, axis, &idx, out_dir)?;
    println!("wrote {} PNG slice(s) -> {}", written.len(), out_dir.display());
    Ok(())
}

fn cmd_pipeline(
    nodes: &Path,
    edges: &Path,
    config: Option<&Path>,
    out_dir: Option<&Path>,
    stages: Option<&str>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg: PipelineConfig = load_toml(config)?;
    if let Some(d) = out_dir {
        cfg.output_dir = d.to_path_buf();
    }
    if cfg.output_dir.as_os_str().is_empty() {
        return Err(Error::Config(
            "no output directory (set output_dir in the config or pass --out-dir)".into(),
        ));
    }
    if let Some(s) = stages {
        cfg.sim.stages = Stages::parse(s)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let manifest = run_pipeline(nodes, edges, &cfg)?;
    let n_accepted = manifest
        .cells
        .iter()
        .filter(|c| c.status == "accepted")
        .count();
    println!(
        "pipeline done: {} cells, {} accepted, {} files -> {}",
        manifest.cells.len(),
        n_accepted,
        manifest.files.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match &cli.command {
        Command::Sample {
            nodes,
            edges,
            config,
            out_dir,
        } => cmd_sample(nodes, edges, config.as_deref(), out_dir),
        Command::Voxelize { patch_dir, out } => cmd_voxelize(patch_dir, out),
        Command::Simulate {
            input,
            config,
            stages,
            seed,
            out,
        } => cmd_simulate(input, config.as_deref(), stages.as_deref(), *seed, out),
        Command::Evaluate {
            pred,
            label,
            regions,
            out,
        } => cmd_evaluate(pred, label, regions, out.as_deref()),
        Command::Baseline {
            method,
            input,
            config,
            out,
        } => cmd_baseline(method, input, config.as_deref(), out),
        Command::Render {
            input,
            axis,
            indices,
            out_dir,
        } => cmd_render(input, axis, indices, out_dir),
        Command::Pipeline {
            nodes,
            edges,
            config,
            out_dir,
            stages,
            seed,
        } => cmd_pipeline(
            nodes,
            edges,
            config.as_deref(),
            out_dir.as_deref(),
            stages.as_deref(),
            *seed,
        ),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
