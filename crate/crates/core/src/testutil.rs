//! Shared helpers for unit tests.

use crate::geom::{Aabb, Vec3};
use crate::graph::{Edge, Node, VesselGraph};
use crate::sampler::{clip_graph_to_box, GraphPatch, PatchStatus};

/// Build an accepted patch directly from (a, b, radius) segments, clipped to
/// the box [origin, origin + extent].
pub(crate) fn patch_from_edges(
    edges_spec: &[(Vec3, Vec3, f64)],
    origin: Vec3,
    extent: Vec3,
) -> GraphPatch {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, (a, b, r)) in edges_spec.iter().enumerate() {
        let id = 2 * i as u64;
        nodes.push(Node { id, position: *a });
        nodes.push(Node {
            id: id + 1,
            position: *b,
        });
        edges.push(Edge {
            node1: id,
            node2: id + 1,
            radius: *r,
        });
    }
    let graph = VesselGraph::new(nodes, edges).unwrap();
    let sub_graph = clip_graph_to_box(&graph, &Aabb::new(origin, origin + extent));
    let vessel_count = sub_graph.as_ref().map_or(0, |g| g.edges().len());
    GraphPatch {
        grid_index: [0, 0, 0],
        origin_um: origin,
        extent_um: extent,
        sub_graph,
        vessel_count,
        status: PatchStatus::Accepted,
    }
}
