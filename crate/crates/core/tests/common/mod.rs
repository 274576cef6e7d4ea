//! Shared fixtures and independent oracles for the integration tests.
//!
//! Everything here deliberately avoids the library's fast paths: the
//! voxelization oracle scans every voxel against every edge with its own
//! distance arithmetic, and the metric oracles re-count the formulas with
//! plain loops.

use octa_forge::geom::Vec3;
use octa_forge::graph::{segment_angle_to_z, Edge, Node, VesselGraph};
use octa_forge::grid::Grid3;
use octa_forge::metrics::BinaryMask;
use octa_forge::rng::DetRng;
use octa_forge::sampler::{clip_graph_to_box, GraphPatch, PatchStatus};
use octa_forge::voxel::LabeledVolume;

/// Build an accepted patch from raw (a, b, radius) segments clipped to
/// [origin, origin + extent].
pub fn patch_from_edges(
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
    let bb = octa_forge::geom::Aabb::new(origin, origin + extent);
    let sub_graph = clip_graph_to_box(&graph, &bb);
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

/// Random patch for the voxelizer oracle: up to `max_edges` segments around
/// a box of the given voxel shape.
pub fn random_patch(rng: &mut DetRng, shape: [usize; 3], voxel_size: f64, max_edges: usize) -> GraphPatch {
    let extent = Vec3::new(
        shape[0] as f64 * voxel_size,
        shape[1] as f64 * voxel_size,
        shape[2] as f64 * voxel_size,
    );
    let n_edges = 1 + rng.below(max_edges as u64) as usize;
    let mut spec = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        // Allow endpoints slightly outside so clipping paths get exercised.
        let p = Vec3::new(
            rng.range(-10.0, extent.x + 10.0),
            rng.range(-10.0, extent.y + 10.0),
            rng.range(-10.0, extent.z + 10.0),
        );
        let dir = Vec3::new(
            rng.range(-30.0, 30.0),
            rng.range(-30.0, 30.0),
            rng.range(-30.0, 30.0),
        );
        let q = p + dir;
        let r = rng.range(1.0, 9.0);
        spec.push((p, q, r));
    }
    patch_from_edges(&spec, Vec3::ZERO, extent)
}

/// Brute-force voxelization oracle: O(voxels × edges) scan with its own
/// distance arithmetic (polynomial form of the squared distance). Returns a
/// full labeled volume for exact comparison.
pub fn brute_force_voxelize(patch: &GraphPatch, shape: [usize; 3], h: f64) -> LabeledVolume {
    let mut out = LabeledVolume::empty(shape, h);
    let Some(graph) = &patch.sub_graph else {
        return out;
    };
    struct Seg {
        a: Vec3,
        d: Vec3,
        len_sq: f64,
        radius: f64,
        theta: f32,
    }
    let segs: Vec<Seg> = graph
        .edges()
        .iter()
        .map(|e| {
            let (pa, pb) = graph.edge_endpoints(e);
            let a = pa - patch.origin_um;
            let b = pb - patch.origin_um;
            let d = b - a;
            Seg {
                a,
                d,
                len_sq: d.norm_sq(),
                radius: e.radius,
                theta: segment_angle_to_z(a, b).unwrap() as f32,
            }
        })
        .collect();

    for z in 0..shape[2] {
        for y in 0..shape[1] {
            for x in 0..shape[0] {
                let c = Vec3::new(
                    (x as f64 + 0.5) * h,
                    (y as f64 + 0.5) * h,
                    (z as f64 + 0.5) * h,
                );
                let mut best: Option<(f64, usize)> = None; // (radius, edge idx)
                for (i, s) in segs.iter().enumerate() {
                    let rel = c - s.a;
                    // Squared distance in polynomial form:
                    // |rel|^2 - 2 t dot + t^2 |d|^2 at t clamped to [0, 1].
                    let dot = rel.dot(s.d);
                    let t = if s.len_sq == 0.0 {
                        0.0
                    } else {
                        (dot / s.len_sq).clamp(0.0, 1.0)
                    };
                    let dist_sq = rel.norm_sq() - 2.0 * t * dot + t * t * s.len_sq;
                    if dist_sq <= s.radius * s.radius {
                        let better = match best {
                            None => true,
                            Some((br, _)) => s.radius > br,
                        };
                        if better {
                            best = Some((s.radius, i));
                        }
                    }
                }
                if let Some((r, i)) = best {
                    out.labels.set(x, y, z, 1);
                    out.radius.set(x, y, z, r as f32);
                    out.theta.set(x, y, z, segs[i].theta);
                    out.vessel.set(x, y, z, (i + 1) as u32);
                }
            }
        }
    }
    out
}

pub fn mask_from_fn(shape: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> BinaryMask {
    let mut m = Grid3::new(shape, 0u8);
    for z in 0..shape[2] {
        for y in 0..shape[1] {
            for x in 0..shape[0] {
                if f(x, y, z) {
                    m.set(x, y, z, 1);
                }
            }
        }
    }
    m
}

/// Random mask of capsule unions — tubular phantoms for skeleton and metric
/// tests.
pub fn random_tubular_mask(rng: &mut DetRng, shape: [usize; 3], n_tubes: usize) -> BinaryMask {
    let hi = [
        shape[0] as f64 - 1.0,
        shape[1] as f64 - 1.0,
        shape[2] as f64 - 1.0,
    ];
    let mut tubes = Vec::new();
    for _ in 0..n_tubes {
        let a = Vec3::new(
            rng.range(1.0, hi[0] - 1.0),
            rng.range(1.0, hi[1] - 1.0),
            rng.range(1.0, hi[2] - 1.0),
        );
        let b = Vec3::new(
            rng.range(1.0, hi[0] - 1.0),
            rng.range(1.0, hi[1] - 1.0),
            rng.range(1.0, hi[2] - 1.0),
        );
        let r = rng.range(1.0, 2.8);
        tubes.push((a, b, r));
    }
    mask_from_fn(shape, |x, y, z| {
        let p = Vec3::new(x as f64, y as f64, z as f64);
        tubes
            .iter()
            .any(|(a, b, r)| octa_forge::geom::point_segment_dist_sq(p, *a, *b) <= r * r)
    })
}

/// Deterministic demo graph: a 1000×500×500 µm domain where the first
/// 500 µm cube is densely vascularized (capillary chains + two pial
/// vessels + diving vessels) and the second is sparse. With the default
/// sampler this yields exactly one accepted and one rejected patch.
pub fn build_demo_graph() -> VesselGraph {
    let mut rng = DetRng::new(0x0c7a_f043, 0, 0);
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let q3 = |v: f64| (v * 1000.0).round() / 1000.0;

    let add_node = |nodes: &mut Vec<Node>, p: Vec3| -> u64 {
        let id = nodes.len() as u64;
        nodes.push(Node {
            id,
            position: Vec3::new(q3(p.x), q3(p.y), q3(p.z)),
        });
        id
    };

    // Corner pins fix the bounding box at [0,1000]×[0,500]×[0,500].
    let c0 = add_node(&mut nodes, Vec3::ZERO);
    let c1 = add_node(&mut nodes, Vec3::new(18.0, 12.0, 14.0));
    edges.push(Edge { node1: c0, node2: c1, radius: 2.0 });
    let c2 = add_node(&mut nodes, Vec3::new(1000.0, 500.0, 500.0));
    let c3 = add_node(&mut nodes, Vec3::new(984.0, 488.0, 486.0));
    edges.push(Edge { node1: c2, node2: c3, radius: 2.0 });

    // Capillary chains: short random walks of three segments, clamped to
    // the domain so the corner pins define the bounding box.
    let chains = |nodes: &mut Vec<Node>,
                      edges: &mut Vec<Edge>,
                      rng: &mut DetRng,
                      n: usize,
                      x_lo: f64,
                      x_hi: f64| {
        for _ in 0..n {
            let mut p = Vec3::new(
                rng.range(x_lo, x_hi),
                rng.range(15.0, 485.0),
                rng.range(15.0, 485.0),
            );
            let mut prev = add_node(nodes, p);
            for _ in 0..3 {
                let step = Vec3::new(
                    rng.range(-35.0, 35.0),
                    rng.range(-35.0, 35.0),
                    rng.range(-35.0, 35.0),
                );
                let q = Vec3::new(
                    (p.x + step.x).clamp(10.0, 990.0),
                    (p.y + step.y).clamp(10.0, 490.0),
                    (p.z + step.z).clamp(10.0, 490.0),
                );
                if (q - p).norm() < 4.0 {
                    continue;
                }
                p = q;
                let next = add_node(nodes, p);
                edges.push(Edge {
                    node1: prev,
                    node2: next,
                    radius: q3(rng.range(2.0, 5.0)),
                });
                prev = next;
            }
        }
    };

    // Dense cube (accepted): well above the 2,000-vessel criterion.
    chains(&mut nodes, &mut edges, &mut rng, 800, 40.0, 460.0);
    // Sparse cube (rejected: too few vessels).
    chains(&mut nodes, &mut edges, &mut rng, 80, 540.0, 960.0);

    // Two pial vessels near the surface of the dense cube.
    for (a, b, r) in [
        (Vec3::new(30.0, 110.0, 28.0), Vec3::new(470.0, 160.0, 40.0), 18.0),
        (Vec3::new(60.0, 350.0, 24.0), Vec3::new(455.0, 310.0, 36.0), 16.0),
    ] {
        let na = add_node(&mut nodes, a);
        let nb = add_node(&mut nodes, b);
        edges.push(Edge { node1: na, node2: nb, radius: r });
    }
    // Diving vessels (small θ_z) branching off toward depth.
    for (x, y) in [(120.0, 130.0), (300.0, 150.0), (380.0, 330.0)] {
        let na = add_node(&mut nodes, Vec3::new(x, y, 35.0));
        let nb = add_node(&mut nodes, Vec3::new(x + 14.0, y + 10.0, 330.0));
        edges.push(Edge {
            node1: na,
            node2: nb,
            radius: 9.0,
        });
    }

    VesselGraph::new(nodes, edges).unwrap()
}
