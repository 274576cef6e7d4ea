//! OCTA artifact simulation: turns a labeled volume into a synthetic
//! intensity volume by modeling the three dominant cerebral 3D OCTA
//! artifacts — projection (tail) artifacts below vessels, angle-dependent
//! signal loss in microvessels, and local granular noise.
//!
//! Per labeled voxel, intensity combines a radius term (larger vessels are
//! brighter, saturating at `r_max`) with an angle term: microvessels
//! running parallel to the beam (θ_z → 0°) lose signal exponentially,
//! while a sigmoid in the radius soft-thresholds macrovessels out of the
//! effect. Voxels on a vessel's lower wall emit a decaying intensity tail
//! straight down (+z), modeled as a geometric progression with additive
//! Gaussian noise. Finally, Gaussian noise plus smoothing produces the
//! granular background texture, and the volume is clipped and rescaled to
//! [0, 1].
//!
//! Stages can be toggled independently (`L` noise, `T` tails, `A` angle;
//! `C` curvature is handled upstream by the voxelizer) and every random
//! draw comes from a counter-based stream keyed by voxel index, so output
//! bytes depend only on (input, config, seed) — never on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_smooth;
use crate::grid::Grid3;
use crate::rng::{DetRng, StreamTag};
use crate::voxel::LabeledVolume;

/// Which simulation stages run. Parsed from subsets of "LTAC".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stages {
    /// Local granular noise patterns.
    pub noise: bool,
    /// Projection / tail artifacts.
    pub tails: bool,
    /// Angle-dependent signal loss.
    pub angle: bool,
    /// Curvature via elastic deformation (applied by the voxelizer).
    pub curvature: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        noise: true,
        tails: true,
        angle: true,
        curvature: true,
    };

    pub fn parse(s: &str) -> Result<Stages> {
        let mut st = Stages::default();
        for c in s.chars() {
            match c {
                'L' => st.noise = true,
                'T' => st.tails = true,
                'A' => st.angle = true,
                'C' => st.curvature = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown stage letter `{other}` (expected subset of LTAC)"
                    )))
                }
            }
        }
        Ok(st)
    }
}

impl std::fmt::Display for Stages {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.noise {
            write!(f, "L")?;
        }
        if self.tails {
            write!(f, "T")?;
        }
        if self.angle {
            write!(f, "A")?;
        }
        if self.curvature {
            write!(f, "C")?;
        }
        Ok(())
    }
}

impl Serialize for Stages {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Stages {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Stages::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// All artifact-simulation parameters. Field names double as the TOML keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Upper radius threshold (µm); radii clip here before scaling to [0, 1].
    pub r_max: f64,
    /// Micro/macro vessel radius threshold (µm); sigmoid midpoint.
    pub r_micro: f64,
    /// Sigmoid steepness of the micro/macro soft threshold (per µm).
    pub gamma_delta: f64,
    /// Weight of the angle term in the voxel intensity update.
    pub lambda_int: f64,
    /// Tail length in voxels per unit of radius intensity.
    pub alpha_tail_len: f64,
    /// Tail start intensity as a fraction of the emitting voxel intensity.
    pub alpha_tail_int: f64,
    pub mu_tail: f64,
    pub sigma_tail: f64,
    pub mu_n: f64,
    pub sigma_n: f64,
    /// Gaussian smoothing sigma for the noise stage, in voxels.
    pub sigma_s: f64,
    pub i_min: f64,
    pub i_max: f64,
    /// Exponential decay rate of the angle term, per degree of deviation
    /// from 90°.
    pub k_ang: f64,
    /// Fraction of the initial tail term remaining at the last tail voxel;
    /// fixes the geometric ratio q = kappa^(1/len).
    pub tail_floor_kappa: f64,
    pub stages: Stages,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            r_max: 30.0,
            r_micro: 10.0,
            gamma_delta: 0.5,
            lambda_int: 0.5,
            alpha_tail_len: 40.0,
            alpha_tail_int: 0.6,
            mu_tail: 0.0,
            sigma_tail: 0.05,
            mu_n: 0.05,
            sigma_n: 0.15,
            sigma_s: 0.6,
            i_min: 0.0,
            i_max: 1.0,
            k_ang: 0.05,
            tail_floor_kappa: 0.02,
            stages: Stages {
                noise: true,
                tails: true,
                angle: true,
                curvature: false,
            },
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_max > 0.0) {
            return Err(Error::Config("r_max must be positive".into()));
        }
        if !(self.i_min < self.i_max) {
            return Err(Error::Config("i_min must be < i_max".into()));
        }
        for (name, v) in [
            ("sigma_s", self.sigma_s),
            ("sigma_tail", self.sigma_tail),
            ("sigma_n", self.sigma_n),
            ("alpha_tail_len", self.alpha_tail_len),
        ] {
            if v < 0.0 {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        if !(self.tail_floor_kappa > 0.0 && self.tail_floor_kappa <= 1.0) {
            return Err(Error::Config("tail_floor_kappa must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Scalar intensity volume in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVolume {
    pub voxel_size_um: f64,
    pub intensity: Grid3<f32>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intensity contributed by the vessel radius: clip to (0, r_max), scale to
/// [0, 1].
pub fn radius_intensity(r: f64, cfg: &SimConfig) -> f64 {
    r.clamp(0.0, cfg.r_max) / cfg.r_max
}

/// Intensity contributed by the angle to the z axis.
///
/// The micro-vessel term decays exponentially as θ_z deviates from 90°
/// (already 1 at 90°, so no extra scaling); the macro-vessel term is a
/// sigmoid soft threshold in the radius. Taking the max makes the decay
/// affect microvessels only.
pub fn angle_intensity(theta_z_deg: f64, r: f64, cfg: &SimConfig) -> f64 {
    let v_micro = (-cfg.k_ang * (90.0 - theta_z_deg)).exp();
    let v_macro = sigmoid(cfg.gamma_delta * (r - cfg.r_micro));
    v_micro.max(v_macro)
}

/// Combined voxel intensity before tails and noise. May exceed 1; the final
/// clip bounds the output range.
pub fn voxel_intensity(v_rad: f64, v_ang: f64, cfg: &SimConfig) -> f64 {
    cfg.lambda_int * v_ang + v_rad
}

/// Is this labeled voxel on the lower vessel wall (the voxel below it, at
/// z+1, is background or outside the volume)? Only lower-wall voxels emit
/// tails.
pub fn is_lower_wall(labels: &Grid3<u8>, x: usize, y: usize, z: usize) -> bool {
    let nz = labels.shape()[2];
    z + 1 >= nz || labels.get(x, y, z + 1) == 0
}

/// Tail intensity sequence for an emitting voxel: length
/// `round(alpha_tail_len · v_rad)`, geometric decay from
/// `v_int · alpha_tail_int` toward `tail_floor_kappa` of itself, per-term
/// Gaussian noise, each term clipped to [0, v_int].
pub fn tail_profile(v_int: f64, v_rad: f64, cfg: &SimConfig, rng: &mut DetRng) -> Vec<f64> {
    let len = (cfg.alpha_tail_len * v_rad).round() as i64;
    if len <= 0 {
        return Vec::new();
    }
    let len = len as usize;
    let q = cfg.tail_floor_kappa.powf(1.0 / len as f64);
    let mut terms = Vec::with_capacity(len);
    let mut base = v_int * cfg.alpha_tail_int;
    for _ in 0..len {
        let noisy = base + rng.normal(cfg.mu_tail, cfg.sigma_tail);
        terms.push(noisy.clamp(0.0, v_int));
        base *= q;
    }
    terms
}

/// Pre-clip voxel intensity for a labeled voxel, respecting the A toggle.
fn stage_intensity(theta: f64, r: f64, cfg: &SimConfig) -> f64 {
    let v_rad = radius_intensity(r, cfg);
    if cfg.stages.angle {
        voxel_intensity(v_rad, angle_intensity(theta, r, cfg), cfg)
    } else {
        // A off: the angle term and its lambda offset are dropped entirely.
        v_rad
    }
}

fn clip_scale(grid: &mut Grid3<f32>, cfg: &SimConfig) {
    let lo = cfg.i_min;
    let inv = 1.0 / (cfg.i_max - cfg.i_min);
    grid.as_mut_slice().par_iter_mut().for_each(|v| {
        *v = (((*v as f64).clamp(cfg.i_min, cfg.i_max) - lo) * inv) as f32;
    });
}

/// Add per-voxel Gaussian noise from counter-based streams.
fn add_noise(grid: &mut Grid3<f32>, cfg: &SimConfig) {
    let shape = grid.shape();
    let slab = shape[0] * shape[1];
    grid.as_mut_slice()
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(z, chunk)| {
            let base = z * slab;
            for (i, v) in chunk.iter_mut().enumerate() {
                let mut rng =
                    DetRng::for_element(cfg.seed, StreamTag::GranularNoise, (base + i) as u64);
                *v += rng.normal(cfg.mu_n, cfg.sigma_n) as f32;
            }
        });
}

/// The full granular-noise stage as a standalone operation: noise, Gaussian
/// smoothing, clip to [i_min, i_max], min–max scale of the clipped range to
/// [0, 1].
pub fn granular_noise(volume: &Grid3<f32>, cfg: &SimConfig) -> Grid3<f32> {
    let mut out = volume.clone();
    add_noise(&mut out, cfg);
    out = gaussian_smooth(&out, cfg.sigma_s);
    clip_scale(&mut out, cfg);
    out
}

/// Intermediate volumes exposed for ablation tests.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub synthetic: SyntheticVolume,
    /// Volume after vessel intensities and tails, before the noise stage
    /// and the final clip/scale.
    pub pre_noise: Grid3<f32>,
}

/// Run the artifact simulation. Deterministic in (input, config, seed).
pub fn simulate(vol: &LabeledVolume, cfg: &SimConfig) -> Result<SyntheticVolume> {
    Ok(simulate_detailed(vol, cfg)?.synthetic)
}

pub fn simulate_detailed(vol: &LabeledVolume, cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let shape = vol.shape();
    let [nx, ny, nz] = shape;
    let slab = nx * ny;

    // Metadata present wherever labeled; fail loudly otherwise.
    vol.check_invariants()?;

    // Vessel intensities. Pure per-voxel function of metadata.
    let mut out = Grid3::new(shape, 0.0f32);
    out.as_mut_slice()
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(z, chunk)| {
            let base = z * slab;
            for (i, v) in chunk.iter_mut().enumerate() {
                if vol.labels.as_slice()[base + i] == 1 {
                    let theta = vol.theta.as_slice()[base + i] as f64;
                    let r = vol.radius.as_slice()[base + i] as f64;
                    *v = stage_intensity(theta, r, cfg) as f32;
                }
            }
        });

    // Tail artifacts march straight down (+z), so each (x, y) column is
    // independent. Accumulate into a column-major scratch volume to keep
    // the per-column writes contiguous, then fold back slab-wise.
    if cfg.stages.tails {
        let mut tails_t: Vec<f32> = vec![0.0; nx * ny * nz];
        tails_t
            .par_chunks_mut(nz)
            .enumerate()
            .for_each(|(col, column)| {
                let (x, y) = (col % nx, col / nx);
                for z in 0..nz {
                    let idx = (z * ny + y) * nx + x;
                    if vol.labels.as_slice()[idx] != 1 || !is_lower_wall(&vol.labels, x, y, z) {
                        continue;
                    }
                    let theta = vol.theta.as_slice()[idx] as f64;
                    let r = vol.radius.as_slice()[idx] as f64;
                    let v_rad = radius_intensity(r, cfg);
                    let v_int = stage_intensity(theta, r, cfg);
                    let mut rng = DetRng::for_element(cfg.seed, StreamTag::TailNoise, idx as u64);
                    for (i, term) in tail_profile(v_int, v_rad, cfg, &mut rng).into_iter().enumerate() {
                        let tz = z + 1 + i;
                        if tz >= nz {
                            break;
                        }
                        column[tz] += term as f32;
                    }
                }
            });
        out.as_mut_slice()
            .par_chunks_mut(slab)
            .enumerate()
            .for_each(|(z, chunk)| {
                for y in 0..ny {
                    for x in 0..nx {
                        chunk[y * nx + x] += tails_t[(y * nx + x) * nz + z];
                    }
                }
            });
    }

    let pre_noise = out.clone();

    if cfg.stages.noise {
        add_noise(&mut out, cfg);
        out = gaussian_smooth(&out, cfg.sigma_s);
    }
    clip_scale(&mut out, cfg);

    Ok(SimOutput {
        synthetic: SyntheticVolume {
            voxel_size_um: vol.voxel_size_um,
            intensity: out,
        },
        pre_noise,
    })
}
