//! Bit-exact volume persistence and PNG slice rendering.
//!
//! A volume on disk is a pair of files sharing a path stem: `<stem>.json`
//! (header) and `<stem>.bin` (raw little-endian payload, x-fastest layout:
//! linear index = z·Y·X + y·X + x). Unknown header keys are ignored so the
//! format stays forward-readable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    Intensity,
    Label,
    Radius,
    Theta,
    VesselId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "float32")]
    Float32,
    #[serde(rename = "uint8")]
    Uint8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Uint8 => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub shape: [usize; 3],
    pub voxel_size_um: f64,
    pub dtype: Dtype,
    pub encoding: String,
    pub layout: String,
    pub kind: VolumeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    F32(Grid3<f32>),
    U8(Grid3<u8>),
}

impl VolumeData {
    pub fn shape(&self) -> [usize; 3] {
        match self {
            VolumeData::F32(g) => g.shape(),
            VolumeData::U8(g) => g.shape(),
        }
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            VolumeData::F32(_) => Dtype::Float32,
            VolumeData::U8(_) => Dtype::Uint8,
        }
    }
}

/// A scalar volume with physical voxel size and a semantic kind tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub voxel_size_um: f64,
    pub kind: VolumeKind,
    pub data: VolumeData,
}

impl Volume {
    pub fn f32(kind: VolumeKind, voxel_size_um: f64, grid: Grid3<f32>) -> Self {
        Volume {
            voxel_size_um,
            kind,
            data: VolumeData::F32(grid),
        }
    }

    pub fn u8(kind: VolumeKind, voxel_size_um: f64, grid: Grid3<u8>) -> Self {
        Volume {
            voxel_size_um,
            kind,
            data: VolumeData::U8(grid),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.data.shape()
    }

    pub fn header(&self) -> VolumeHeader {
        VolumeHeader {
            shape: self.shape(),
            voxel_size_um: self.voxel_size_um,
            dtype: self.data.dtype(),
            encoding: "raw-le".into(),
            layout: "x-fastest".into(),
            kind: self.kind,
        }
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push(ext);
    stem.with_file_name(name)
}

pub fn header_path(stem: &Path) -> PathBuf {
    with_ext(stem, ".json")
}

pub fn payload_path(stem: &Path) -> PathBuf {
    with_ext(stem, ".bin")
}

/// Write `<stem>.json` + `<stem>.bin`. Round-trips exactly through
/// [`read_volume`].
pub fn write_volume(volume: &Volume, stem: &Path) -> Result<()> {
    let header = volume.header();
    let hp = header_path(stem);
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::Invariant(format!("header serialization failed: {e}")))?;
    std::fs::write(&hp, json).map_err(|e| Error::io(&hp, e))?;

    let pp = payload_path(stem);
    let bytes: Vec<u8> = match &volume.data {
        VolumeData::F32(g) => g
            .as_slice()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect(),
        VolumeData::U8(g) => g.as_slice().to_vec(),
    };
    std::fs::write(&pp, bytes).map_err(|e| Error::io(&pp, e))?;
    Ok(())
}

pub fn read_volume(stem: &Path) -> Result<Volume> {
    let hp = header_path(stem);
    let json = std::fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: VolumeHeader = serde_json::from_str(&json).map_err(|e| Error::Parse {
        file: hp.clone(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    if header.encoding != "raw-le" {
        return Err(Error::Data(format!(
            "{}: unsupported encoding `{}`",
            hp.display(),
            header.encoding
        )));
    }
    if header.layout != "x-fastest" {
        return Err(Error::Data(format!(
            "{}: unsupported layout `{}`",
            hp.display(),
            header.layout
        )));
    }

    let pp = payload_path(stem);
    let bytes = std::fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
    let n_voxels = header.shape[0] * header.shape[1] * header.shape[2];
    let expected = n_voxels * header.dtype.size();
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "{}: payload size mismatch: expected {} bytes for shape {:?}, found {}",
            pp.display(),
            expected,
            header.shape,
            bytes.len()
        )));
    }

    let data = match header.dtype {
        Dtype::Float32 => {
            let vals: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            VolumeData::F32(Grid3::from_vec(header.shape, vals))
        }
        Dtype::Uint8 => VolumeData::U8(Grid3::from_vec(header.shape, bytes)),
    };
    Ok(Volume {
        voxel_size_um: header.voxel_size_um,
        kind: header.kind,
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Axis> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Config(format!("invalid axis `{other}`"))),
        }
    }

    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Map an intensity in [0, 1] to an 8-bit gray level. Ties round to even, so
/// a constant 0.5 volume renders as gray 128 (127.5 rounds up to 128).
fn to_gray(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

fn sample_as_unit(volume: &Volume, x: usize, y: usize, z: usize) -> f64 {
    match &volume.data {
        VolumeData::F32(g) => g.get(x, y, z) as f64,
        // Binary volumes render black/white; other u8 data scales from 255.
        VolumeData::U8(g) => {
            let v = g.get(x, y, z) as f64;
            match volume.kind {
                VolumeKind::Label => {
                    if v > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => v / 255.0,
            }
        }
    }
}

/// Render grayscale PNG slices orthogonal to `axis` at the given indices.
/// Returns the written paths. The image's width/height are the two remaining
/// axes in (x, y, z) order.
pub fn render_slices(
    volume: &Volume,
    axis: Axis,
    indices: &[usize],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let shape = volume.shape();
    let n = shape[axis.index()];
    for &i in indices {
        if i >= n {
            return Err(Error::Config(format!(
                "slice index {i} out of range for axis {} (size {n})",
                axis.name()
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let (wa, ha) = match axis {
        Axis::X => (1, 2), // (y, z) plane
        Axis::Y => (0, 2), // (x, z) plane
        Axis::Z => (0, 1), // (x, y) plane
    };
    let (w, h) = (shape[wa], shape[ha]);

    let mut written = Vec::new();
    for &i in indices {
        let mut pixels = vec![0u8; w * h];
        for v in 0..h {
            for u in 0..w {
                let mut c = [0usize; 3];
                c[axis.index()] = i;
                c[wa] = u;
                c[ha] = v;
                pixels[v * w + u] = to_gray(sample_as_unit(volume, c[0], c[1], c[2]));
            }
        }
        let img = image::GrayImage::from_raw(w as u32, h as u32, pixels)
            .expect("buffer sized to w*h above");
        let path = out_dir.join(format!("{}{:04}.png", axis.name(), i));
        img.save(&path)
            .map_err(|e| Error::Data(format!("{}: png encode failed: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
