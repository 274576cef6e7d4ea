//! Annotation-free classical segmentation baselines: global Otsu
//! thresholding and multiscale 3D Frangi vesselness.
//!
//! The Frangi pipeline is built so its response is *exactly* covariant
//! under axis-aligned 90° rotations: smoothing runs as an integer box
//! cascade (see `filter::box_cascade_smooth`), Hessian stencils use
//! symmetric groupings, and each Hessian is brought into a canonical form
//! under the 48 signed axis permutations before the eigenvalues are taken.
//! Equivalent voxels therefore produce bit-identical vesselness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::box_cascade_smooth;
use crate::grid::Grid3;
use crate::metrics::BinaryMask;

/// Number of histogram bins used by Otsu.
pub const OTSU_BINS: usize = 256;

/// Between-class-variance-maximizing threshold over a 256-bin histogram of
/// the volume's intensity range. Returns the threshold (upper edge of the
/// winning bin) and the mask `volume > threshold`. Ties pick the lowest bin.
pub fn otsu_threshold(volume: &Grid3<f32>) -> Result<(f64, BinaryMask)> {
    let (bin, lo, hi) = otsu_bin(volume)?;
    let width = (hi - lo) / OTSU_BINS as f64;
    let threshold = lo + (bin + 1) as f64 * width;
    let mask = Grid3::from_vec(
        volume.shape(),
        volume
            .as_slice()
            .iter()
            .map(|&v| u8::from((v as f64) > threshold))
            .collect(),
    );
    Ok((threshold, mask))
}

/// The winning histogram cut: class 0 is bins 0..=k, class 1 the rest.
/// Exposed so the exhaustive oracle can compare bin indices exactly.
pub fn otsu_bin(volume: &Grid3<f32>) -> Result<(usize, f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in volume.as_slice() {
        if !v.is_finite() {
            return Err(Error::Data("volume contains non-finite values".into()));
        }
        lo = lo.min(v as f64);
        hi = hi.max(v as f64);
    }
    if volume.is_empty() || lo == hi {
        return Err(Error::Data(
            "Otsu needs at least two distinct intensity values".into(),
        ));
    }

    let hist = intensity_histogram(volume, lo, hi);
    let total: f64 = volume.len() as f64;
    let sum_total: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum();

    let mut best = (0usize, f64::NEG_INFINITY);
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for k in 0..OTSU_BINS - 1 {
        w0 += hist[k] as f64;
        sum0 += k as f64 * hist[k] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_total - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best.1 {
            best = (k, var);
        }
    }
    Ok((best.0, lo, hi))
}

/// 256-bin histogram over [lo, hi]; the top value lands in the last bin.
pub fn intensity_histogram(volume: &Grid3<f32>, lo: f64, hi: f64) -> [u64; OTSU_BINS] {
    let mut hist = [0u64; OTSU_BINS];
    let scale = OTSU_BINS as f64 / (hi - lo);
    for &v in volume.as_slice() {
        let bin = (((v as f64 - lo) * scale) as usize).min(OTSU_BINS - 1);
        hist[bin] += 1;
    }
    hist
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FrangiConfig {
    /// Scales (Gaussian sigmas) in µm, strictly increasing.
    pub scales_um: Vec<f64>,
    /// Plate-vs-line sensitivity.
    pub alpha: f64,
    /// Blob-vs-tube sensitivity.
    pub beta: f64,
    /// Structureness sensitivity; `None` picks half the maximum Frobenius
    /// Hessian norm per scale.
    pub c: Option<f64>,
    /// Bright vessels on a dark background (true for OCTA).
    pub bright_on_dark: bool,
    /// Segmentation threshold on the vesselness map, in [0, 1].
    pub threshold: f64,
}

impl Default for FrangiConfig {
    fn default() -> Self {
        FrangiConfig {
            scales_um: vec![4.0, 8.0, 16.0],
            alpha: 0.5,
            beta: 0.5,
            c: None,
            bright_on_dark: true,
            threshold: 0.5,
        }
    }
}

impl FrangiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales_um.is_empty() {
            return Err(Error::Config("frangi needs at least one scale".into()));
        }
        for w in self.scales_um.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "frangi scales must be strictly increasing".into(),
                ));
            }
        }
        if self.scales_um[0] <= 0.0 {
            return Err(Error::Config("frangi scales must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("frangi threshold must be in [0, 1]".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Config("frangi alpha and beta must be positive".into()));
        }
        if let Some(c) = self.c {
            if !(c > 0.0) {
                return Err(Error::Config("frangi c must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Hessian entries (xx, yy, zz, xy, xz, yz) at an interior voxel via central
/// differences. Groupings are symmetric ((a + b) - 2c and pair sums), so
/// axis-permuted inputs give bit-exact ± permuted entries.
#[inline]
fn hessian_at(v: &Grid3<f32>, x: usize, y: usize, z: usize) -> [f64; 6] {
    let g = |x: usize, y: usize, z: usize| v.get(x, y, z) as f64;
    let c2 = 2.0 * g(x, y, z);
    let hxx = (g(x + 1, y, z) + g(x - 1, y, z)) - c2;
    let hyy = (g(x, y + 1, z) + g(x, y - 1, z)) - c2;
    let hzz = (g(x, y, z + 1) + g(x, y, z - 1)) - c2;
    let hxy = ((g(x + 1, y + 1, z) + g(x - 1, y - 1, z))
        - (g(x + 1, y - 1, z) + g(x - 1, y + 1, z)))
        * 0.25;
    let hxz = ((g(x + 1, y, z + 1) + g(x - 1, y, z - 1))
        - (g(x + 1, y, z - 1) + g(x - 1, y, z + 1)))
        * 0.25;
    let hyz = ((g(x, y + 1, z + 1) + g(x, y - 1, z - 1))
        - (g(x, y + 1, z - 1) + g(x, y - 1, z + 1)))
        * 0.25;
    [hxx, hyy, hzz, hxy, hxz, hyz]
}

/// Order-invariant sum of three values (sorted before adding).
#[inline]
fn sorted_sum3(a: f64, b: f64, c: f64) -> f64 {
    let mut v = [a, b, c];
    v.sort_by(f64::total_cmp);
    (v[0] + v[1]) + v[2]
}

/// Squared Frobenius norm, computed order-invariantly.
#[inline]
fn frobenius_sq(h: &[f64; 6]) -> f64 {
    sorted_sum3(h[0] * h[0], h[1] * h[1], h[2] * h[2])
        + 2.0 * sorted_sum3(h[3] * h[3], h[4] * h[4], h[5] * h[5])
}

const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Canonical representative of a symmetric 3×3 matrix under the 48 signed
/// axis permutations (lexicographically smallest entry tuple). Equivalent
/// matrices map to bit-identical canonical forms, and signed permutations
/// preserve the spectrum, so downstream eigenvalues are exactly invariant.
fn canonical_hessian(h: &[f64; 6]) -> [f64; 6] {
    let m = [
        [h[0], h[3], h[4]],
        [h[3], h[1], h[5]],
        [h[4], h[5], h[2]],
    ];
    let mut best: Option<[f64; 6]> = None;
    for p in PERMS {
        for smask in 0..8u32 {
            let s = [
                if smask & 1 == 0 { 1.0 } else { -1.0 },
                if smask & 2 == 0 { 1.0 } else { -1.0 },
                if smask & 4 == 0 { 1.0 } else { -1.0 },
            ];
            let cand = [
                m[p[0]][p[0]],
                m[p[1]][p[1]],
                m[p[2]][p[2]],
                s[0] * s[1] * m[p[0]][p[1]],
                s[0] * s[2] * m[p[0]][p[2]],
                s[1] * s[2] * m[p[1]][p[2]],
            ];
            let better = match &best {
                None => true,
                Some(b) => {
                    let mut lt = false;
                    for i in 0..6 {
                        match cand[i].total_cmp(&b[i]) {
                            std::cmp::Ordering::Less => {
                                lt = true;
                                break;
                            }
                            std::cmp::Ordering::Greater => break,
                            std::cmp::Ordering::Equal => {}
                        }
                    }
                    lt
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.unwrap()
}

/// Eigenvalues of a symmetric 3×3 matrix (xx, yy, zz, xy, xz, yz) by
/// Cardano's method.
fn symmetric_eigenvalues(h: &[f64; 6]) -> [f64; 3] {
    let (a11, a22, a33, a12, a13, a23) = (h[0], h[1], h[2], h[3], h[4], h[5]);
    let p1 = a12 * a12 + a13 * a13 + a23 * a23;
    if p1 == 0.0 {
        return [a11, a22, a33];
    }
    let q = (a11 + a22 + a33) / 3.0;
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let inv_p = 1.0 / p;
    let b11 = (a11 - q) * inv_p;
    let b22 = (a22 - q) * inv_p;
    let b33 = (a33 - q) * inv_p;
    let b12 = a12 * inv_p;
    let b13 = a13 * inv_p;
    let b23 = a23 * inv_p;
    let det_b = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13)
        + b13 * (b12 * b23 - b22 * b13);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e1, e2, e3]
}

fn vesselness_from_hessian(h: &[f64; 6], alpha: f64, beta: f64, c: f64) -> f64 {
    let mut eig = symmetric_eigenvalues(&canonical_hessian(h));
    eig.sort_by(|a, b| {
        a.abs()
            .total_cmp(&b.abs())
            .then_with(|| a.total_cmp(b))
    });
    let [l1, l2, l3] = eig;
    // Bright tubes: the two dominant curvatures must be negative.
    if !(l2 < 0.0 && l3 < 0.0) {
        return 0.0;
    }
    let ra = l2.abs() / l3.abs();
    let rb = l1.abs() / (l2 * l3).abs().sqrt();
    let s_sq = sorted_sum3(l1 * l1, l2 * l2, l3 * l3);
    let term_a = 1.0 - (-ra * ra / (2.0 * alpha * alpha)).exp();
    let term_b = (-rb * rb / (2.0 * beta * beta)).exp();
    let term_s = 1.0 - (-s_sq / (2.0 * c * c)).exp();
    term_a * term_b * term_s
}

/// Multiscale Frangi vesselness, per-voxel maximum over scales, in [0, 1].
/// `voxel_size_um` converts the µm scales into voxel sigmas.
pub fn frangi_vesselness(
    volume: &Grid3<f32>,
    voxel_size_um: f64,
    cfg: &FrangiConfig,
) -> Result<Grid3<f32>> {
    cfg.validate()?;
    if !(voxel_size_um > 0.0) {
        return Err(Error::Config("voxel size must be positive".into()));
    }
    let shape = volume.shape();
    let [nx, ny, nz] = shape;
    let mut response = Grid3::new(shape, 0.0f32);
    if nx < 3 || ny < 3 || nz < 3 {
        return Ok(response);
    }

    // Constant volumes have zero structure everywhere.
    let lo = volume.as_slice().iter().fold(f32::INFINITY, |a, &b| a.min(b));
    let hi = volume
        .as_slice()
        .iter()
        .fold(f32::NEG_INFINITY, |a, &b| a.max(b));
    if lo == hi {
        return Ok(response);
    }

    // Dark-on-bright: negate (per-voxel, so still exactly equivariant).
    let work;
    let input = if cfg.bright_on_dark {
        volume
    } else {
        work = Grid3::from_vec(shape, volume.as_slice().iter().map(|&v| -v).collect());
        &work
    };

    let slab = nx * ny;
    for &scale_um in &cfg.scales_um {
        let sigma_vox = scale_um / voxel_size_um;
        let smoothed = box_cascade_smooth(input, sigma_vox)?;
        let norm = sigma_vox * sigma_vox;

        let c = match cfg.c {
            Some(c) => c,
            None => {
                // Half the maximal Frobenius Hessian norm at this scale.
                let max_frob_sq = (1..nz - 1)
                    .into_par_iter()
                    .map(|z| {
                        let mut m = 0.0f64;
                        for y in 1..ny - 1 {
                            for x in 1..nx - 1 {
                                let mut h = hessian_at(&smoothed, x, y, z);
                                for v in &mut h {
                                    *v *= norm;
                                }
                                m = m.max(frobenius_sq(&h));
                            }
                        }
                        m
                    })
                    .reduce(|| 0.0, f64::max);
                if max_frob_sq == 0.0 {
                    continue; // no structure at this scale
                }
                max_frob_sq.sqrt() / 2.0
            }
        };

        response
            .as_mut_slice()
            .par_chunks_mut(slab)
            .enumerate()
            .for_each(|(z, chunk)| {
                if z == 0 || z == nz - 1 {
                    return;
                }
                for y in 1..ny - 1 {
                    for x in 1..nx - 1 {
                        let mut h = hessian_at(&smoothed, x, y, z);
                        for v in &mut h {
                            *v *= norm;
                        }
                        if frobenius_sq(&h) == 0.0 {
                            continue;
                        }
                        let v = vesselness_from_hessian(&h, cfg.alpha, cfg.beta, c) as f32;
                        let cur = &mut chunk[y * nx + x];
                        if v > *cur {
                            *cur = v;
                        }
                    }
                }
            });
    }
    Ok(response)
}

/// Threshold the vesselness map. Background (vesselness 0) never enters the
/// mask, so `threshold == 0` selects exactly the positive responses.
pub fn frangi_segment(
    volume: &Grid3<f32>,
    voxel_size_um: f64,
    cfg: &FrangiConfig,
) -> Result<BinaryMask> {
    let v = frangi_vesselness(volume, voxel_size_um, cfg)?;
    let t = cfg.threshold as f32;
    Ok(Grid3::from_vec(
        v.shape(),
        v.as_slice()
            .iter()
            .map(|&x| u8::from(x > 0.0 && x >= t))
            .collect(),
    ))
}
