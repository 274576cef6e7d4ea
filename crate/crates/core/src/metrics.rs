//! Segmentation metrics: Dice, centerline Dice (clDice) with 3D
//! skeletonization, and region-restricted evaluation.
//!
//! The skeletonizer is a deterministic iterative thinning: in each round it
//! runs six directional sub-iterations (−z, +z, −y, +y, −x, +x); within a
//! sub-iteration, border voxels are visited in lexicographic (linear index)
//! order and deleted one at a time, re-checking deletability before each
//! deletion. A voxel is deletable when it is a simple point for
//! (26-foreground, 6-background) connectivity and not a line endpoint, so
//! deletions never change the topology of the mask.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid3;

/// Binary mask: values are 0 or 1.
pub type BinaryMask = Grid3<u8>;

fn check_shapes(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Data(format!(
            "mask shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Dice overlap 2·|A∩B| / (|A| + |B|). Two empty masks count as a perfect
/// match (1.0).
pub fn dice(pred: &BinaryMask, label: &BinaryMask) -> Result<f64> {
    check_shapes(pred, label)?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&p, &l) in pred.as_slice().iter().zip(label.as_slice()) {
        inter += usize::from(p == 1 && l == 1);
        total += usize::from(p == 1) + usize::from(l == 1);
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// 26-neighborhood offsets (all nonzero offsets with Chebyshev norm 1).
const N26: [(i32, i32, i32); 26] = {
    let mut out = [(0, 0, 0); 26];
    let mut i = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    out[i] = (dx, dy, dz);
                    i += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

const N6: [(i32, i32, i32); 6] = [
    (0, 0, -1),
    (0, 0, 1),
    (0, -1, 0),
    (0, 1, 0),
    (-1, 0, 0),
    (1, 0, 0),
];

#[inline]
fn cube_index(dx: i32, dy: i32, dz: i32) -> usize {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
}

/// Extract the 3×3×3 neighborhood of (x, y, z); out-of-volume cells read as
/// background.
fn neighborhood(mask: &BinaryMask, x: usize, y: usize, z: usize) -> [bool; 27] {
    let [nx, ny, nz] = mask.shape();
    let mut cube = [false; 27];
    for dz in -1..=1i32 {
        for dy in -1..=1i32 {
            for dx in -1..=1i32 {
                let qx = x as i32 + dx;
                let qy = y as i32 + dy;
                let qz = z as i32 + dz;
                if qx < 0 || qy < 0 || qz < 0 {
                    continue;
                }
                let (qx, qy, qz) = (qx as usize, qy as usize, qz as usize);
                if qx >= nx || qy >= ny || qz >= nz {
                    continue;
                }
                cube[cube_index(dx, dy, dz)] = mask.get(qx, qy, qz) == 1;
            }
        }
    }
    cube
}

/// Number of 26-connected components of foreground among the 26 neighbors.
fn foreground_components_26(cube: &[bool; 27]) -> usize {
    let mut seen = [false; 27];
    let mut components = 0;
    for &(sx, sy, sz) in &N26 {
        let s = cube_index(sx, sy, sz);
        if !cube[s] || seen[s] {
            continue;
        }
        components += 1;
        let mut stack = vec![(sx, sy, sz)];
        seen[s] = true;
        while let Some((cx, cy, cz)) = stack.pop() {
            for &(dx, dy, dz) in &N26 {
                let (qx, qy, qz) = (cx + dx, cy + dy, cz + dz);
                if qx.abs() > 1 || qy.abs() > 1 || qz.abs() > 1 {
                    continue;
                }
                if qx == 0 && qy == 0 && qz == 0 {
                    continue; // paths may not run through the center
                }
                let q = cube_index(qx, qy, qz);
                if cube[q] && !seen[q] {
                    seen[q] = true;
                    stack.push((qx, qy, qz));
                }
            }
        }
    }
    components
}

/// Number of 6-connected components of background within the 18-neighborhood
/// that touch a face neighbor of the center.
fn background_components_6(cube: &[bool; 27]) -> usize {
    let in_n18 = |x: i32, y: i32, z: i32| -> bool {
        let m = x.abs().max(y.abs()).max(z.abs());
        m == 1 && !(x.abs() == 1 && y.abs() == 1 && z.abs() == 1)
    };
    let mut seen = [false; 27];
    let mut components = 0;
    for &(sx, sy, sz) in &N6 {
        let s = cube_index(sx, sy, sz);
        if cube[s] || seen[s] {
            continue; // foreground or already assigned
        }
        components += 1;
        let mut stack = vec![(sx, sy, sz)];
        seen[s] = true;
        while let Some((cx, cy, cz)) = stack.pop() {
            for &(dx, dy, dz) in &N6 {
                let (qx, qy, qz) = (cx + dx, cy + dy, cz + dz);
                if !in_n18(qx, qy, qz) {
                    continue;
                }
                let q = cube_index(qx, qy, qz);
                if !cube[q] && !seen[q] {
                    seen[q] = true;
                    stack.push((qx, qy, qz));
                }
            }
        }
    }
    components
}

/// Simple point for (26, 6) connectivity: removal preserves the topology of
/// both foreground and background.
fn is_simple(cube: &[bool; 27]) -> bool {
    foreground_components_26(cube) == 1 && background_components_6(cube) == 1
}

fn is_endpoint(cube: &[bool; 27]) -> bool {
    let n: usize = N26
        .iter()
        .filter(|&&(dx, dy, dz)| cube[cube_index(dx, dy, dz)])
        .count();
    n <= 1
}

/// Thin a mask to a 1-voxel-wide, topology-preserving skeleton.
/// The skeleton is a subset of the input, and the number of 26-connected
/// components is unchanged.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut out = mask.clone();
    let [nx, ny, nz] = out.shape();

    loop {
        let mut deleted_any = false;
        for &(dx, dy, dz) in &N6 {
            // Candidates first, then sequential re-checked deletion: a prior
            // deletion can invalidate a later candidate.
            let mut candidates = Vec::new();
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        if out.get(x, y, z) != 1 {
                            continue;
                        }
                        let bx = x as i32 + dx;
                        let by = y as i32 + dy;
                        let bz = z as i32 + dz;
                        let border = bx < 0
                            || by < 0
                            || bz < 0
                            || bx >= nx as i32
                            || by >= ny as i32
                            || bz >= nz as i32
                            || out.get(bx as usize, by as usize, bz as usize) == 0;
                        if !border {
                            continue;
                        }
                        let cube = neighborhood(&out, x, y, z);
                        if is_simple(&cube) && !is_endpoint(&cube) {
                            candidates.push((x, y, z));
                        }
                    }
                }
            }
            for (x, y, z) in candidates {
                let cube = neighborhood(&out, x, y, z);
                if is_simple(&cube) && !is_endpoint(&cube) {
                    out.set(x, y, z, 0);
                    deleted_any = true;
                }
            }
        }
        if !deleted_any {
            break;
        }
    }
    out
}

/// Number of 26-connected foreground components (used by tests and to
/// validate skeleton topology).
pub fn count_components_26(mask: &BinaryMask) -> usize {
    let [nx, ny, nz] = mask.shape();
    let mut seen = vec![false; mask.len()];
    let mut components = 0;
    for start in 0..mask.len() {
        if mask.as_slice()[start] != 1 || seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y, z) = mask.coords(i);
            for &(dx, dy, dz) in &N26 {
                let qx = x as i32 + dx;
                let qy = y as i32 + dy;
                let qz = z as i32 + dz;
                if qx < 0 || qy < 0 || qz < 0 {
                    continue;
                }
                let (qx, qy, qz) = (qx as usize, qy as usize, qz as usize);
                if qx >= nx || qy >= ny || qz >= nz {
                    continue;
                }
                let q = mask.index(qx, qy, qz);
                if mask.as_slice()[q] == 1 && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    components
}

/// Centerline Dice: harmonic mean of topology precision
/// |S(pred) ∩ label| / |S(pred)| and topology sensitivity
/// |S(label) ∩ pred| / |S(label)|. Both skeletons empty → 1; exactly one
/// empty → 0.
pub fn cl_dice(pred: &BinaryMask, label: &BinaryMask) -> Result<f64> {
    check_shapes(pred, label)?;
    let s_pred = skeletonize(pred);
    let s_label = skeletonize(label);
    Ok(cl_dice_from_skeletons(&s_pred, pred, &s_label, label))
}

/// The clDice formula given precomputed skeletons.
pub fn cl_dice_from_skeletons(
    s_pred: &BinaryMask,
    pred: &BinaryMask,
    s_label: &BinaryMask,
    label: &BinaryMask,
) -> f64 {
    let overlap = |skel: &BinaryMask, mask: &BinaryMask| -> (usize, usize) {
        let mut inside = 0usize;
        let mut total = 0usize;
        for (&s, &m) in skel.as_slice().iter().zip(mask.as_slice()) {
            if s == 1 {
                total += 1;
                inside += usize::from(m == 1);
            }
        }
        (inside, total)
    };
    let (p_in, p_tot) = overlap(s_pred, label);
    let (l_in, l_tot) = overlap(s_label, pred);
    match (p_tot, l_tot) {
        (0, 0) => return 1.0,
        (0, _) | (_, 0) => return 0.0,
        _ => {}
    }
    let tprec = p_in as f64 / p_tot as f64;
    let tsens = l_in as f64 / l_tot as f64;
    if tprec + tsens == 0.0 {
        return 0.0;
    }
    2.0 * tprec * tsens / (tprec + tsens)
}

/// A named evaluation region; the metric only counts voxels inside `mask`.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub name: String,
    pub mask: BinaryMask,
}

impl RegionSpec {
    /// The all-ones region covering the whole volume.
    pub fn all(shape: [usize; 3]) -> Self {
        RegionSpec {
            name: "all".into(),
            mask: Grid3::new(shape, 1),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionScore {
    pub region: String,
    pub dice: f64,
    pub cl_dice: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RegionEvalOptions {
    /// When true (default), skeletons are computed on the region-restricted
    /// masks; when false, skeletons of the full masks are restricted
    /// afterwards.
    pub skeletonize_after_masking: bool,
}

impl Default for RegionEvalOptions {
    fn default() -> Self {
        RegionEvalOptions {
            skeletonize_after_masking: true,
        }
    }
}

fn masked(a: &BinaryMask, region: &BinaryMask) -> BinaryMask {
    let vals = a
        .as_slice()
        .iter()
        .zip(region.as_slice())
        .map(|(&v, &r)| v & r)
        .collect();
    Grid3::from_vec(a.shape(), vals)
}

pub fn evaluate_regions(
    pred: &BinaryMask,
    label: &BinaryMask,
    regions: &[RegionSpec],
) -> Result<Vec<RegionScore>> {
    evaluate_regions_with(pred, label, regions, RegionEvalOptions::default())
}

pub fn evaluate_regions_with(
    pred: &BinaryMask,
    label: &BinaryMask,
    regions: &[RegionSpec],
    opts: RegionEvalOptions,
) -> Result<Vec<RegionScore>> {
    check_shapes(pred, label)?;
    let mut scores = Vec::with_capacity(regions.len());
    for region in regions {
        check_shapes(pred, &region.mask)?;
        let rp = masked(pred, &region.mask);
        let rl = masked(label, &region.mask);
        let cl = if opts.skeletonize_after_masking {
            cl_dice(&rp, &rl)?
        } else {
            let sp = masked(&skeletonize(pred), &region.mask);
            let sl = masked(&skeletonize(label), &region.mask);
            cl_dice_from_skeletons(&sp, &rl, &sl, &rp)
        };
        scores.push(RegionScore {
            region: region.name.clone(),
            dice: dice(&rp, &rl)?,
            cl_dice: cl,
        });
    }
    Ok(scores)
}
