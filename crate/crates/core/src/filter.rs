//! Separable 3D smoothing filters.
//!
//! Two variants live here:
//!
//! * [`gaussian_smooth`] — straightforward separable Gaussian in f64
//!   accumulation, kernel truncated at 4σ, reflect boundary. Used by the
//!   artifact simulator and the deformation-field generator. Each output
//!   value is accumulated in a fixed order, so the result does not depend
//!   on thread count.
//!
//! * [`box_cascade_smooth`] — Gaussian approximation by three iterated box
//!   filters per axis, computed entirely in integer arithmetic on a
//!   quantized copy of the input. Integer addition is exact, so the axis
//!   passes commute bit-exactly; this is what makes the Frangi filter's
//!   response exactly covariant under axis-aligned 90° rotations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid3;

/// Reflect an out-of-range index into [0, n) (edge sample repeated:
/// -1 -> 0, n -> n-1).
#[inline]
fn reflect(i: isize, n: isize) -> usize {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn convolve_axis(grid: &Grid3<f32>, kernel: &[f64], axis: usize) -> Grid3<f32> {
    let shape = grid.shape();
    let n = shape[axis] as isize;
    let radius = (kernel.len() / 2) as isize;
    let mut out = Grid3::new(shape, 0.0f32);

    let [nx, ny, _] = shape;
    let stride = match axis {
        0 => 1,
        1 => nx,
        2 => nx * ny,
        _ => unreachable!(),
    };

    // Lines along `axis` start at every voxel whose coordinate on that axis
    // is 0. Parallelize over z-slabs of the output; each output voxel reads
    // only along its own line, so slabs are independent.
    let src = grid.as_slice();
    let nz_slab = nx * ny;
    out.as_mut_slice()
        .par_chunks_mut(nz_slab)
        .enumerate()
        .for_each(|(z, slab)| {
            for y in 0..ny {
                for x in 0..nx {
                    let coord = [x, y, z];
                    let pos = coord[axis] as isize;
                    let line_base = (z * ny + y) * nx + x - coord[axis] * stride;
                    let mut acc = 0.0f64;
                    for (ki, &w) in kernel.iter().enumerate() {
                        let s = reflect(pos + ki as isize - radius, n);
                        acc += w * src[line_base + s * stride] as f64;
                    }
                    slab[y * nx + x] = acc as f32;
                }
            }
        });
    out
}

/// Separable Gaussian smoothing, truncation at 4σ, reflect boundary.
/// `sigma` is in voxels; `sigma == 0` returns the input unchanged.
pub fn gaussian_smooth(grid: &Grid3<f32>, sigma: f64) -> Grid3<f32> {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let mut out = convolve_axis(grid, &kernel, 0);
    out = convolve_axis(&out, &kernel, 1);
    convolve_axis(&out, &kernel, 2)
}

/// Quantization depth for the integer smoothing path.
const QUANT_BITS: u32 = 14;
const QUANT_MAX: f64 = ((1u32 << QUANT_BITS) - 1) as f64;

/// Box widths (odd) whose 3-fold iteration approximates a Gaussian of
/// standard deviation `sigma` (the classic boxes-for-Gaussian construction).
fn boxes_for_gauss(sigma: f64) -> [usize; 3] {
    let n = 3.0;
    let w_ideal = (12.0 * sigma * sigma / n + 1.0).sqrt();
    let mut wl = w_ideal.floor() as i64;
    if wl % 2 == 0 {
        wl -= 1;
    }
    let wl = wl.max(1);
    let wu = wl + 2;
    let m_ideal = (12.0 * sigma * sigma - n * (wl * wl) as f64 - 4.0 * n * wl as f64 - 3.0 * n)
        / (-4.0 * wl as f64 - 4.0);
    let m = m_ideal.round() as i64;
    let mut widths = [0usize; 3];
    for (i, w) in widths.iter_mut().enumerate() {
        *w = if (i as i64) < m { wl as usize } else { wu as usize };
    }
    widths
}

fn box_pass_axis(src: &[i64], shape: [usize; 3], axis: usize, radius: usize, dst: &mut [i64]) {
    let [nx, ny, nz] = shape;
    let n = shape[axis] as isize;
    let r = radius as isize;
    let stride = match axis {
        0 => 1,
        1 => nx,
        2 => nx * ny,
        _ => unreachable!(),
    };
    let slab = nx * ny;
    dst.par_chunks_mut(slab).enumerate().for_each(|(z, out_slab)| {
        for y in 0..ny {
            for x in 0..nx {
                let coord = [x, y, z];
                let pos = coord[axis] as isize;
                let line_base = (z * ny + y) * nx + x - coord[axis] * stride;
                let mut acc: i64 = 0;
                for i in -r..=r {
                    acc += src[line_base + reflect(pos + i, n) * stride];
                }
                out_slab[y * nx + x] = acc;
            }
        }
    });
    let _ = nz;
}

/// Gaussian-approximate smoothing by three integer box passes per axis.
///
/// The input is normalized to [0, 1] (min–max over the volume), quantized to
/// 14 bits, box-filtered in i64, and divided back once at the end. All
/// intermediate arithmetic is integer, so the result is bit-identical under
/// any permutation/reflection of the axes. Returns an error when the
/// accumulated integer magnitude could overflow (very large sigma).
pub fn box_cascade_smooth(grid: &Grid3<f32>, sigma: f64) -> Result<Grid3<f32>> {
    let shape = grid.shape();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in grid.as_slice() {
        lo = lo.min(v as f64);
        hi = hi.max(v as f64);
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Data("volume contains non-finite values".into()));
    }
    if hi == lo {
        return Ok(grid.clone());
    }
    if sigma <= 0.0 {
        return Ok(grid.clone());
    }

    let widths = boxes_for_gauss(sigma);
    let per_axis: u128 = widths.iter().map(|&w| w as u128).product();
    let total: u128 = per_axis.pow(3) * (1u128 << QUANT_BITS);
    if total > (1u128 << 62) {
        return Err(Error::Config(format!(
            "smoothing sigma {sigma} voxels too large for the integer cascade"
        )));
    }

    let scale = QUANT_MAX / (hi - lo);
    let mut a: Vec<i64> = grid
        .as_slice()
        .iter()
        .map(|&v| ((v as f64 - lo) * scale).round() as i64)
        .collect();
    let mut b = vec![0i64; a.len()];

    for axis in 0..3 {
        for &w in &widths {
            box_pass_axis(&a, shape, axis, w / 2, &mut b);
            std::mem::swap(&mut a, &mut b);
        }
    }

    let denom = (per_axis.pow(3)) as f64 * QUANT_MAX;
    let inv = (hi - lo) / denom;
    let out: Vec<f32> = a.iter().map(|&v| (v as f64 * inv + lo) as f32).collect();
    Ok(Grid3::from_vec(shape, out))
}

/// Effective box-filter width product for a sigma (used in tests).
pub fn box_widths(sigma: f64) -> [usize; 3] {
    boxes_for_gauss(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(n: usize) -> Grid3<f32> {
        let mut g = Grid3::new([n, n, n], 0.0f32);
        g.set(n / 2, n / 2, n / 2, 1.0);
        g
    }

    #[test]
    fn gaussian_preserves_mass_and_peak_location() {
        let g = impulse(17);
        let s = gaussian_smooth(&g, 1.5);
        let sum: f64 = s.as_slice().iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6, "mass {sum}");
        let mut best = (0, 0.0f32);
        for (i, &v) in s.as_slice().iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        assert_eq!(s.coords(best.0), (8, 8, 8));
    }

    #[test]
    fn gaussian_sigma_zero_is_identity() {
        let g = impulse(9);
        assert_eq!(gaussian_smooth(&g, 0.0), g);
    }

    #[test]
    fn gaussian_constant_stays_constant() {
        let g = Grid3::new([12, 10, 8], 0.37f32);
        let s = gaussian_smooth(&g, 2.0);
        for &v in s.as_slice() {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn box_widths_match_sigma() {
        // Variance of one box of width w is (w^2 - 1) / 12; three boxes add.
        for sigma in [1.0, 2.0, 3.5, 6.0] {
            let ws = box_widths(sigma);
            let var: f64 = ws.iter().map(|&w| ((w * w - 1) as f64) / 12.0).sum();
            assert!(
                (var.sqrt() - sigma).abs() < 0.6,
                "sigma {sigma}: widths {ws:?} give {}",
                var.sqrt()
            );
        }
    }

    #[test]
    fn box_cascade_axis_permutation_exactness() {
        // Transposing the volume and smoothing must equal smoothing then
        // transposing, bit for bit.
        let n = 12;
        let mut rng = crate::rng::DetRng::new(3, 1, 0);
        let mut g = Grid3::new([n, n, n], 0.0f32);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    g.set(x, y, z, rng.uniform() as f32);
                }
            }
        }
        let mut t = Grid3::new([n, n, n], 0.0f32);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    t.set(y, x, z, g.get(x, y, z));
                }
            }
        }
        let sg = box_cascade_smooth(&g, 2.0).unwrap();
        let st = box_cascade_smooth(&t, 2.0).unwrap();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    assert_eq!(sg.get(x, y, z).to_bits(), st.get(y, x, z).to_bits());
                }
            }
        }
    }
}
