//! Rasterization of graph patches into labeled volumes.
//!
//! A voxel is labeled foreground iff its center lies within Euclidean
//! distance r of some edge's axis segment (capsule model; this is exactly
//! centerline rasterization followed by dilation with a ball of radius r).
//! Each labeled voxel carries metadata from its covering edge: radius,
//! acute angle to the z axis, and vessel id (edge index + 1, so 0 means
//! background). Overlaps resolve to the larger radius, then the lower edge
//! index — a total order, so the result is independent of edge visit order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_smooth;
use crate::geom::{point_segment_dist_sq, Vec3};
use crate::grid::Grid3;
use crate::rng::{DetRng, StreamTag};
use crate::sampler::GraphPatch;
use crate::volume::{read_volume, write_volume, Volume, VolumeData, VolumeKind};

/// Binary labels plus per-voxel metadata at isotropic voxel size.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVolume {
    pub voxel_size_um: f64,
    pub labels: Grid3<u8>,
    /// Vessel radius in µm where labeled, 0 elsewhere.
    pub radius: Grid3<f32>,
    /// θ_z in degrees ∈ [0, 90] where labeled, 0 elsewhere.
    pub theta: Grid3<f32>,
    /// Edge index + 1 where labeled, 0 elsewhere.
    pub vessel: Grid3<u32>,
}

impl LabeledVolume {
    pub fn empty(shape: [usize; 3], voxel_size_um: f64) -> Self {
        LabeledVolume {
            voxel_size_um,
            labels: Grid3::new(shape, 0),
            radius: Grid3::new(shape, 0.0),
            theta: Grid3::new(shape, 0.0),
            vessel: Grid3::new(shape, 0),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.labels.shape()
    }

    /// Check the structural invariants: labels ⇔ vessel id, positive radius
    /// and in-range angle wherever labeled.
    pub fn check_invariants(&self) -> Result<()> {
        for i in 0..self.labels.len() {
            let lab = self.labels.as_slice()[i];
            let id = self.vessel.as_slice()[i];
            if (lab == 1) != (id > 0) {
                return Err(Error::Invariant(format!(
                    "label/vessel mismatch at linear index {i}: label={lab} vessel={id}"
                )));
            }
            if lab == 1 {
                let r = self.radius.as_slice()[i];
                let t = self.theta.as_slice()[i];
                if !(r > 0.0) {
                    return Err(Error::Invariant(format!(
                        "non-positive radius {r} at labeled voxel {i}"
                    )));
                }
                if !(0.0..=90.0).contains(&t) {
                    return Err(Error::Invariant(format!(
                        "theta {t} out of [0, 90] at labeled voxel {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Rasterize an accepted patch at the given shape. The patch extent must
/// match `shape · voxel_size` on every axis.
pub fn voxelize(patch: &GraphPatch, shape: [usize; 3], voxel_size_um: f64) -> Result<LabeledVolume> {
    if !patch.status.is_accepted() {
        return Err(Error::Data(format!(
            "patch {:?} was rejected; only accepted patches can be voxelized",
            patch.grid_index
        )));
    }
    for i in 0..3 {
        let want = shape[i] as f64 * voxel_size_um;
        if (patch.extent_um.axis(i) - want).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "patch extent {} µm on axis {i} does not match {}x{} µm voxels",
                patch.extent_um.axis(i),
                shape[i],
                voxel_size_um
            )));
        }
    }
    let Some(graph) = &patch.sub_graph else {
        return Ok(LabeledVolume::empty(shape, voxel_size_um));
    };

    // Precompute per-edge geometry in patch-local µm.
    struct Seg {
        a: Vec3,
        b: Vec3,
        radius: f64,
        theta: f32,
        id: u32,
    }
    let mut segs = Vec::with_capacity(graph.edges().len());
    for (i, e) in graph.edges().iter().enumerate() {
        let (pa, pb) = graph.edge_endpoints(e);
        let a = pa - patch.origin_um;
        let b = pb - patch.origin_um;
        let theta = crate::graph::segment_angle_to_z(a, b)? as f32;
        segs.push(Seg {
            a,
            b,
            radius: e.radius,
            theta,
            id: (i + 1) as u32,
        });
    }

    let mut vol = LabeledVolume::empty(shape, voxel_size_um);
    let [nx, ny, nz] = shape;
    let h = voxel_size_um;

    // Voxel index range whose centers can lie within the capsule.
    // Center of voxel v is (v + 0.5) · h.
    let coverage = |lo: f64, hi: f64, r: f64, n: usize| -> Option<(usize, usize)> {
        let lo_idx = ((lo - r) / h - 0.5).ceil().max(0.0) as usize;
        let hi_f = (hi + r) / h - 0.5;
        if hi_f < 0.0 {
            return None;
        }
        let hi_idx = (hi_f.floor() as usize).min(n.saturating_sub(1));
        (lo_idx <= hi_idx && lo_idx < n).then_some((lo_idx, hi_idx))
    };

    // Per-edge z ranges let each z-slab visit only the edges that can touch
    // it; slabs own disjoint output rows, and the per-voxel update rule is a
    // max under (radius, -index), so the result is order-independent.
    let mut slab_edges: Vec<Vec<usize>> = vec![Vec::new(); nz];
    for (si, s) in segs.iter().enumerate() {
        let (z0, z1) = match coverage(s.a.z.min(s.b.z), s.a.z.max(s.b.z), s.radius, nz) {
            Some(r) => r,
            None => continue,
        };
        for z in z0..=z1 {
            slab_edges[z].push(si);
        }
    }

    let slab_len = nx * ny;
    let labels = vol.labels.as_mut_slice().par_chunks_mut(slab_len);
    let radius = vol.radius.as_mut_slice().par_chunks_mut(slab_len);
    let theta = vol.theta.as_mut_slice().par_chunks_mut(slab_len);
    let vessel = vol.vessel.as_mut_slice().par_chunks_mut(slab_len);

    labels
        .zip(radius.zip(theta.zip(vessel)))
        .enumerate()
        .for_each(|(z, (lab, (rad, (the, ves))))| {
            let cz = (z as f64 + 0.5) * h;
            for &si in &slab_edges[z] {
                let s = &segs[si];
                let r_sq = s.radius * s.radius;
                let Some((x0, x1)) = coverage(s.a.x.min(s.b.x), s.a.x.max(s.b.x), s.radius, nx)
                else {
                    continue;
                };
                let Some((y0, y1)) = coverage(s.a.y.min(s.b.y), s.a.y.max(s.b.y), s.radius, ny)
                else {
                    continue;
                };
                for y in y0..=y1 {
                    let cy = (y as f64 + 0.5) * h;
                    for x in x0..=x1 {
                        let c = Vec3::new((x as f64 + 0.5) * h, cy, cz);
                        if point_segment_dist_sq(c, s.a, s.b) > r_sq {
                            continue;
                        }
                        let i = y * nx + x;
                        let replace = if lab[i] == 0 {
                            true
                        } else {
                            let old_r = rad[i] as f64;
                            s.radius > old_r || (s.radius == old_r && s.id < ves[i])
                        };
                        if replace {
                            lab[i] = 1;
                            rad[i] = s.radius as f32;
                            the[i] = s.theta;
                            ves[i] = s.id;
                        }
                    }
                }
            }
        });

    Ok(vol)
}

/// A dense displacement field in voxel units. `displacement[v]` is the
/// motion of the content at voxel v: the warped volume reads its value from
/// `v - displacement[v]` (rounded to the nearest voxel).
#[derive(Debug, Clone)]
pub struct DeformationField {
    pub shape: [usize; 3],
    /// Per-voxel displacement (x, y, z), in voxels.
    pub displacement: Vec<[f32; 3]>,
    pub smoothness_sigma: f64,
    pub magnitude: f64,
    pub seed: u64,
}

impl DeformationField {
    pub fn max_norm(&self) -> f64 {
        self.displacement
            .iter()
            .map(|d| {
                (d[0] as f64).powi(2) + (d[1] as f64).powi(2) + (d[2] as f64).powi(2)
            })
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// Elastic deformation parameters for the curvature stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DeformationConfig {
    pub magnitude_voxels: f64,
    pub smoothness_sigma_voxels: f64,
}

impl Default for DeformationConfig {
    fn default() -> Self {
        DeformationConfig {
            magnitude_voxels: 3.0,
            smoothness_sigma_voxels: 8.0,
        }
    }
}

/// Gaussian-smoothed white-noise vector field, rescaled so the maximum
/// displacement norm equals `magnitude` voxels. Deterministic in `seed`.
pub fn generate_deformation(
    shape: [usize; 3],
    smoothness_sigma: f64,
    magnitude: f64,
    seed: u64,
) -> Result<DeformationField> {
    if magnitude < 0.0 {
        return Err(Error::Config("deformation magnitude must be >= 0".into()));
    }
    let n = shape[0] * shape[1] * shape[2];
    let mut field = DeformationField {
        shape,
        displacement: vec![[0.0; 3]; n],
        smoothness_sigma,
        magnitude,
        seed,
    };
    if magnitude == 0.0 || n == 0 {
        return Ok(field);
    }

    let mut components: Vec<Grid3<f32>> = Vec::with_capacity(3);
    for c in 0..3u64 {
        let mut raw: Vec<f32> = Vec::with_capacity(n);
        for v in 0..n {
            let mut rng = DetRng::for_element(seed, StreamTag::Deformation, c << 40 | v as u64);
            raw.push(rng.standard_normal() as f32);
        }
        components.push(gaussian_smooth(&Grid3::from_vec(shape, raw), smoothness_sigma));
    }

    let mut max_sq = 0.0f64;
    for v in 0..n {
        let d = [
            components[0].as_slice()[v] as f64,
            components[1].as_slice()[v] as f64,
            components[2].as_slice()[v] as f64,
        ];
        max_sq = max_sq.max(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    }
    if max_sq == 0.0 {
        return Ok(field);
    }
    let scale = magnitude / max_sq.sqrt();
    for v in 0..n {
        field.displacement[v] = [
            (components[0].as_slice()[v] as f64 * scale) as f32,
            (components[1].as_slice()[v] as f64 * scale) as f32,
            (components[2].as_slice()[v] as f64 * scale) as f32,
        ];
    }
    Ok(field)
}

/// Warp labels and all metadata grids by the same field with
/// nearest-neighbor lookup. Samples pulled from outside the volume become
/// background.
pub fn apply_elastic_deformation(
    vol: &LabeledVolume,
    field: &DeformationField,
) -> Result<LabeledVolume> {
    if field.shape != vol.shape() {
        return Err(Error::Config(format!(
            "deformation field shape {:?} does not match volume shape {:?}",
            field.shape,
            vol.shape()
        )));
    }
    let [nx, ny, nz] = vol.shape();
    let mut out = LabeledVolume::empty(vol.shape(), vol.voxel_size_um);

    let slab = nx * ny;
    let labels = out.labels.as_mut_slice().par_chunks_mut(slab);
    let radius = out.radius.as_mut_slice().par_chunks_mut(slab);
    let theta = out.theta.as_mut_slice().par_chunks_mut(slab);
    let vessel = out.vessel.as_mut_slice().par_chunks_mut(slab);

    labels
        .zip(radius.zip(theta.zip(vessel)))
        .enumerate()
        .for_each(|(z, (lab, (rad, (the, ves))))| {
            for y in 0..ny {
                for x in 0..nx {
                    let i = y * nx + x;
                    let d = field.displacement[(z * ny + y) * nx + x];
                    let sx = (x as f64 - d[0] as f64).round() as isize;
                    let sy = (y as f64 - d[1] as f64).round() as isize;
                    let sz = (z as f64 - d[2] as f64).round() as isize;
                    if sx < 0
                        || sy < 0
                        || sz < 0
                        || sx >= nx as isize
                        || sy >= ny as isize
                        || sz >= nz as isize
                    {
                        continue; // background
                    }
                    let (sx, sy, sz) = (sx as usize, sy as usize, sz as usize);
                    if vol.labels.get(sx, sy, sz) == 1 {
                        lab[i] = 1;
                        rad[i] = vol.radius.get(sx, sy, sz);
                        the[i] = vol.theta.get(sx, sy, sz);
                        ves[i] = vol.vessel.get(sx, sy, sz);
                    }
                }
            }
        });

    Ok(out)
}

const BUNDLE_SUFFIXES: [(&str, VolumeKind); 4] = [
    ("label", VolumeKind::Label),
    ("radius", VolumeKind::Radius),
    ("theta", VolumeKind::Theta),
    ("vessel", VolumeKind::VesselId),
];

pub fn bundle_stem(stem: &Path, part: &str) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(part);
    stem.with_file_name(name)
}

/// Persist a labeled volume as four volumes sharing a stem:
/// `<stem>.label`, `<stem>.radius`, `<stem>.theta`, `<stem>.vessel`.
/// Vessel ids are stored as float32 (exact below 2^24).
pub fn write_labeled_volume(vol: &LabeledVolume, stem: &Path) -> Result<()> {
    let vs = vol.voxel_size_um;
    write_volume(
        &Volume::u8(VolumeKind::Label, vs, vol.labels.clone()),
        &bundle_stem(stem, "label"),
    )?;
    write_volume(
        &Volume::f32(VolumeKind::Radius, vs, vol.radius.clone()),
        &bundle_stem(stem, "radius"),
    )?;
    write_volume(
        &Volume::f32(VolumeKind::Theta, vs, vol.theta.clone()),
        &bundle_stem(stem, "theta"),
    )?;
    let ids: Vec<f32> = vol.vessel.as_slice().iter().map(|&v| v as f32).collect();
    write_volume(
        &Volume::f32(VolumeKind::VesselId, vs, Grid3::from_vec(vol.shape(), ids)),
        &bundle_stem(stem, "vessel"),
    )?;
    Ok(())
}

pub fn read_labeled_volume(stem: &Path) -> Result<LabeledVolume> {
    let mut parts = Vec::new();
    for (suffix, kind) in BUNDLE_SUFFIXES {
        let v = read_volume(&bundle_stem(stem, suffix))?;
        if v.kind != kind {
            return Err(Error::Data(format!(
                "{}: expected kind {:?}, found {:?}",
                bundle_stem(stem, suffix).display(),
                kind,
                v.kind
            )));
        }
        parts.push(v);
    }
    let shape = parts[0].shape();
    let voxel_size_um = parts[0].voxel_size_um;
    for v in &parts {
        if v.shape() != shape {
            return Err(Error::Data("bundle volumes disagree on shape".into()));
        }
    }

    let labels = match &parts[0].data {
        VolumeData::U8(g) => g.clone(),
        _ => return Err(Error::Data("label volume must be uint8".into())),
    };
    let take_f32 = |v: &Volume, what: &str| -> Result<Grid3<f32>> {
        match &v.data {
            VolumeData::F32(g) => Ok(g.clone()),
            _ => Err(Error::Data(format!("{what} volume must be float32"))),
        }
    };
    let radius = take_f32(&parts[1], "radius")?;
    let theta = take_f32(&parts[2], "theta")?;
    let vessel_f = take_f32(&parts[3], "vessel")?;
    let vessel = Grid3::from_vec(
        shape,
        vessel_f.as_slice().iter().map(|&v| v as u32).collect(),
    );

    let vol = LabeledVolume {
        voxel_size_um,
        labels,
        radius,
        theta,
        vessel,
    };
    vol.check_invariants()?;
    Ok(vol)
}
