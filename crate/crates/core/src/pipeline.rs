//! End-to-end pipeline: sample patches from a vessel graph, voxelize each
//! accepted patch, run the artifact simulation, and write paired
//! (synthetic, label) volumes plus a manifest with content hashes.
//!
//! The label bundle a patch gets is the plain voxelized volume (after the
//! optional curvature deformation, which is ground truth too) — the
//! simulator never touches it, so labels are byte-equal to a standalone
//! `voxelize` run of the same patch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::parse_graph;
use crate::grid::Grid3;
use crate::rng::{derive_seed, StreamTag};
use crate::sampler::{sample_patches, GraphPatch, PatchStatus, RejectReason, SamplerConfig};
use crate::sim::{simulate, SimConfig};
use crate::baselines::FrangiConfig;
use crate::volume::{write_volume, Volume, VolumeKind};
use crate::voxel::{
    apply_elastic_deformation, generate_deformation, voxelize, write_labeled_volume,
    DeformationConfig,
};

/// Top-level configuration (TOML): per-stage tables plus the master seed.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub sim: SimConfig,
    pub deformation: DeformationConfig,
    pub frangi: FrangiConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.sim.validate()?;
        self.frangi.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCell {
    pub grid_index: [usize; 3],
    pub origin_um: [f64; 3],
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    pub vessel_count: usize,
    /// Output stem (relative to the manifest) for accepted patches.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

/// What the pipeline produced: every grid cell with its status, and a
/// sha256 per written file. Hashes are independent of thread count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub stages: String,
    pub voxel_size_um: f64,
    pub patch_shape_voxels: [usize; 3],
    pub cells: Vec<ManifestCell>,
    pub files: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn stage_err(stage: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("[{stage}] {m}")),
        Error::Data(m) => Error::Data(format!("[{stage}] {m}")),
        Error::Invariant(m) => Error::Invariant(format!("[{stage}] {m}")),
        other => other,
    }
}

/// Volumes produced for one accepted patch, before any files are written.
struct PatchOutput {
    cell: usize,
    stem_name: String,
    label: crate::voxel::LabeledVolume,
    intensity: Grid3<f32>,
}

fn process_patch(
    patch: &GraphPatch,
    cfg: &PipelineConfig,
) -> Result<(crate::voxel::LabeledVolume, Grid3<f32>)> {
    let shape = cfg.sampler.patch_shape_voxels;
    let voxel_size = cfg.sampler.voxel_size_um;
    let patch_linear = patch.grid_index[0] as u64
        | (patch.grid_index[1] as u64) << 20
        | (patch.grid_index[2] as u64) << 40;

    let mut vol = voxelize(patch, shape, voxel_size).map_err(|e| stage_err("voxelize", e))?;

    if cfg.sim.stages.curvature {
        let seed = derive_seed(cfg.seed, StreamTag::Deformation, patch_linear);
        let field = generate_deformation(
            shape,
            cfg.deformation.smoothness_sigma_voxels,
            cfg.deformation.magnitude_voxels,
            seed,
        )
        .map_err(|e| stage_err("deform", e))?;
        vol = apply_elastic_deformation(&vol, &field).map_err(|e| stage_err("deform", e))?;
    }

    let mut sim_cfg = cfg.sim.clone();
    sim_cfg.seed = derive_seed(cfg.seed, StreamTag::PatchSeed, patch_linear);
    let synthetic = simulate(&vol, &sim_cfg).map_err(|e| stage_err("simulate", e))?;

    Ok((vol, synthetic.intensity))
}

/// Run the full pipeline from a config. Writes, per accepted patch,
/// `patch_<ix>_<iy>_<iz>.label/...` bundles and
/// `patch_<ix>_<iy>_<iz>.intensity` volumes under `output_dir`, plus
/// `manifest.json`. Returns the manifest.
pub fn run_pipeline(nodes: &Path, edges: &Path, cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let graph = parse_graph(nodes, edges).map_err(|e| stage_err("sample", e))?;
    let patches = sample_patches(&graph, &cfg.sampler).map_err(|e| stage_err("sample", e))?;

    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;

    // Compute all volumes (patch-parallel), then write sequentially so a
    // failure can clean up without leaving half-written bundles around.
    let accepted: Vec<(usize, &GraphPatch)> = patches
        .iter()
        .enumerate()
        .filter(|(_, p)| p.status.is_accepted())
        .collect();

    let results: Vec<Result<PatchOutput>> = accepted
        .par_iter()
        .map(|(cell, patch)| {
            let (label, intensity) = process_patch(patch, cfg)?;
            Ok(PatchOutput {
                cell: *cell,
                stem_name: format!(
                    "patch_{:03}_{:03}_{:03}",
                    patch.grid_index[0], patch.grid_index[1], patch.grid_index[2]
                ),
                label,
                intensity,
            })
        })
        .collect();
    let mut outputs = Vec::with_capacity(results.len());
    for r in results {
        outputs.push(r?); // nothing written yet, so nothing to clean up
    }

    let mut cells: Vec<ManifestCell> = patches
        .iter()
        .map(|p| ManifestCell {
            grid_index: p.grid_index,
            origin_um: p.origin_um.to_array(),
            status: if p.status.is_accepted() {
                "accepted".into()
            } else {
                "rejected".into()
            },
            reason: match &p.status {
                PatchStatus::Rejected(r) => Some(*r),
                PatchStatus::Accepted => None,
            },
            vessel_count: p.vessel_count,
            stem: None,
        })
        .collect();

    let mut files = BTreeMap::new();
    let mut written: Vec<PathBuf> = Vec::new();
    let record = |files: &mut BTreeMap<String, String>,
                      written: &mut Vec<PathBuf>,
                      path: PathBuf|
     -> Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let digest = sha256_file(&path)?;
        files.insert(name, digest);
        written.push(path);
        Ok(())
    };

    let mut commit = || -> Result<()> {
        for out in &outputs {
            let stem = cfg.output_dir.join(&out.stem_name);
            write_labeled_volume(&out.label, &stem)?;
            for part in ["label", "radius", "theta", "vessel"] {
                let ps = crate::voxel::bundle_stem(&stem, part);
                record(&mut files, &mut written, crate::volume::header_path(&ps))?;
                record(&mut files, &mut written, crate::volume::payload_path(&ps))?;
            }
            let int_stem = crate::voxel::bundle_stem(&stem, "intensity");
            write_volume(
                &Volume::f32(
                    VolumeKind::Intensity,
                    cfg.sampler.voxel_size_um,
                    out.intensity.clone(),
                ),
                &int_stem,
            )?;
            record(&mut files, &mut written, crate::volume::header_path(&int_stem))?;
            record(&mut files, &mut written, crate::volume::payload_path(&int_stem))?;
            cells[out.cell].stem = Some(out.stem_name.clone());
        }
        Ok(())
    };

    if let Err(e) = commit() {
        // Partial outputs are removed on failure.
        for path in &written {
            let _ = std::fs::remove_file(path);
        }
        return Err(e);
    }

    let manifest = Manifest {
        seed: cfg.seed,
        stages: cfg.sim.stages.to_string(),
        voxel_size_um: cfg.sampler.voxel_size_um,
        patch_shape_voxels: cfg.sampler.patch_shape_voxels,
        cells,
        files,
    };
    let manifest_path = cfg.output_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Invariant(format!("manifest serialization failed: {e}")))?;
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}
