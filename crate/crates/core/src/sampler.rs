//! Grid-aligned patch extraction from vessel graphs.
//!
//! Patches are enumerated on a regular grid over the graph's bounding box
//! and filtered by three exclusion criteria, applied in a fixed order:
//!
//! 1. too deep — the patch origin lies more than `max_depth_um` below the
//!    cortical-surface plane;
//! 2. too sparse — fewer than `min_vessel_count` edges intersect the patch;
//! 3. no large vessel — no intersecting edge has radius above
//!    `large_vessel_radius_um`.
//!
//! An edge belongs to a patch when its capsule (segment dilated by the
//! vessel radius) intersects the patch box, which is exactly the geometry
//! the voxelizer will draw.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{clip_segment_to_box, segment_box_dist_sq, Aabb, Vec3};
use crate::graph::{Edge, Node, VesselGraph};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub patch_shape_voxels: [usize; 3],
    pub voxel_size_um: f64,
    /// Grid step in voxels; `None` means non-overlapping (= patch shape).
    pub stride_voxels: Option<[usize; 3]>,
    pub max_depth_um: f64,
    pub min_vessel_count: usize,
    pub large_vessel_radius_um: f64,
    /// Cortical-surface plane; `None` means the graph's minimum z.
    pub surface_z_um: Option<f64>,
    /// Measure patch depth at the patch center instead of the origin.
    pub depth_at_center: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            patch_shape_voxels: [250, 250, 250],
            voxel_size_um: 2.0,
            stride_voxels: None,
            max_depth_um: 3000.0,
            min_vessel_count: 2000,
            large_vessel_radius_um: 13.0,
            surface_z_um: None,
            depth_at_center: false,
        }
    }
}

impl SamplerConfig {
    pub fn stride(&self) -> [usize; 3] {
        self.stride_voxels.unwrap_or(self.patch_shape_voxels)
    }

    pub fn extent_um(&self) -> Vec3 {
        Vec3::new(
            self.patch_shape_voxels[0] as f64 * self.voxel_size_um,
            self.patch_shape_voxels[1] as f64 * self.voxel_size_um,
            self.patch_shape_voxels[2] as f64 * self.voxel_size_um,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_shape_voxels.iter().any(|&v| v == 0) {
            return Err(Error::Config("patch_shape_voxels must be positive".into()));
        }
        if self.stride().iter().any(|&v| v == 0) {
            return Err(Error::Config("stride_voxels must be >= 1".into()));
        }
        if !(self.voxel_size_um > 0.0) {
            return Err(Error::Config("voxel_size_um must be positive".into()));
        }
        if !(self.max_depth_um > 0.0) {
            return Err(Error::Config("max_depth_um must be positive".into()));
        }
        if !(self.large_vessel_radius_um > 0.0) {
            return Err(Error::Config(
                "large_vessel_radius_um must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooDeep,
    TooSparse,
    NoLargeVessel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatchStatus {
    Accepted,
    Rejected(RejectReason),
}

impl PatchStatus {
    pub fn is_accepted(&self) -> bool {
        matches!(self, PatchStatus::Accepted)
    }
}

/// A grid cell of the sampling lattice together with the clipped sub-graph.
#[derive(Debug, Clone)]
pub struct GraphPatch {
    pub grid_index: [usize; 3],
    pub origin_um: Vec3,
    pub extent_um: Vec3,
    /// Sub-graph containing exactly the edges whose capsule intersects the
    /// patch box, with segments clipped to the radius-dilated box.
    pub sub_graph: Option<VesselGraph>,
    pub vessel_count: usize,
    pub status: PatchStatus,
}

impl GraphPatch {
    pub fn bounding_box(&self) -> Aabb {
        Aabb::new(self.origin_um, self.origin_um + self.extent_um)
    }
}

/// Clip an edge's axis segment to `box_um` dilated by the edge radius.
/// Returns the clipped endpoints or `None` when the segment stays outside
/// even the dilated box. Radius is preserved by construction (the caller
/// keeps it on the edge).
pub fn clip_edge_to_box(a: Vec3, b: Vec3, radius: f64, box_um: &Aabb) -> Option<(Vec3, Vec3)> {
    clip_segment_to_box(a, b, &box_um.dilated(radius))
}

/// Does the edge's capsule (Euclidean dilation of the segment by `radius`)
/// intersect the box?
pub fn capsule_intersects_box(a: Vec3, b: Vec3, radius: f64, box_um: &Aabb) -> bool {
    segment_box_dist_sq(a, b, box_um) <= radius * radius
}

/// Build the clipped sub-graph of `graph` restricted to `box_um`.
///
/// Nodes whose position survives clipping unchanged keep their original id;
/// clipped endpoints get fresh ids above the graph's maximum. Edge order
/// follows the parent graph, which keeps the voxelizer's vessel ids stable.
pub fn clip_graph_to_box(graph: &VesselGraph, box_um: &Aabb) -> Option<VesselGraph> {
    let mut next_id = graph.nodes().iter().map(|n| n.id).max().unwrap_or(0) + 1;
    let mut nodes: Vec<Node> = Vec::new();
    let mut kept_original: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();

    let mut intern = |id: u64, original: Vec3, clipped: Vec3, nodes: &mut Vec<Node>, next_id: &mut u64| -> u64 {
        if clipped == original {
            if let Some(&idx) = kept_original.get(&id) {
                return nodes[idx].id;
            }
            nodes.push(Node {
                id,
                position: original,
            });
            kept_original.insert(id, nodes.len() - 1);
            id
        } else {
            let fresh = *next_id;
            *next_id += 1;
            nodes.push(Node {
                id: fresh,
                position: clipped,
            });
            fresh
        }
    };

    // Tangential capsules can make the slab clip empty by a rounding hair;
    // a nanometer of slack keeps membership and clipping consistent.
    const CLIP_SLACK_UM: f64 = 1e-9;

    for e in graph.edges() {
        let (a, b) = graph.edge_endpoints(e);
        if !capsule_intersects_box(a, b, e.radius, box_um) {
            continue;
        }
        let Some((ca, cb)) = clip_edge_to_box(a, b, e.radius + CLIP_SLACK_UM, box_um) else {
            continue;
        };
        let id1 = intern(e.node1, a, ca, &mut nodes, &mut next_id);
        let id2 = intern(e.node2, b, cb, &mut nodes, &mut next_id);
        edges.push(Edge {
            node1: id1,
            node2: id2,
            radius: e.radius,
        });
    }

    if nodes.is_empty() {
        return None;
    }
    Some(VesselGraph::new(nodes, edges).expect("clipped graph preserves validity"))
}

/// Enumerate grid patches and classify each one. Output order is
/// lexicographic in (ix, iy, iz) regardless of parallel execution.
pub fn sample_patches(graph: &VesselGraph, cfg: &SamplerConfig) -> Result<Vec<GraphPatch>> {
    cfg.validate()?;
    let bbox = graph.bounding_box();
    let extent = cfg.extent_um();
    let stride = cfg.stride();
    let surface_z = cfg.surface_z_um.unwrap_or(bbox.min.z);

    let mut counts = [0usize; 3];
    for i in 0..3 {
        let size = bbox.max.axis(i) - bbox.min.axis(i);
        let step = stride[i] as f64 * cfg.voxel_size_um;
        let span = size - extent.axis(i);
        counts[i] = if span < 0.0 {
            0
        } else {
            (span / step).floor() as usize + 1
        };
    }
    if counts.iter().any(|&c| c == 0) {
        return Ok(Vec::new());
    }

    let mut cells = Vec::with_capacity(counts[0] * counts[1] * counts[2]);
    for ix in 0..counts[0] {
        for iy in 0..counts[1] {
            for iz in 0..counts[2] {
                cells.push([ix, iy, iz]);
            }
        }
    }

    let patches: Vec<GraphPatch> = cells
        .into_par_iter()
        .map(|idx| {
            let origin = Vec3::new(
                bbox.min.x + idx[0] as f64 * stride[0] as f64 * cfg.voxel_size_um,
                bbox.min.y + idx[1] as f64 * stride[1] as f64 * cfg.voxel_size_um,
                bbox.min.z + idx[2] as f64 * stride[2] as f64 * cfg.voxel_size_um,
            );
            let patch_box = Aabb::new(origin, origin + extent);
            let depth_z = if cfg.depth_at_center {
                origin.z + 0.5 * extent.z
            } else {
                origin.z
            };

            let sub_graph = clip_graph_to_box(graph, &patch_box);
            let vessel_count = sub_graph.as_ref().map_or(0, |g| g.edges().len());

            let status = if depth_z - surface_z > cfg.max_depth_um {
                PatchStatus::Rejected(RejectReason::TooDeep)
            } else if vessel_count < cfg.min_vessel_count {
                PatchStatus::Rejected(RejectReason::TooSparse)
            } else if !sub_graph
                .as_ref()
                .is_some_and(|g| g.edges().iter().any(|e| e.radius > cfg.large_vessel_radius_um))
            {
                PatchStatus::Rejected(RejectReason::NoLargeVessel)
            } else {
                PatchStatus::Accepted
            };

            GraphPatch {
                grid_index: idx,
                origin_um: origin,
                extent_um: extent,
                sub_graph,
                vessel_count,
                status,
            }
        })
        .collect();

    Ok(patches)
}
