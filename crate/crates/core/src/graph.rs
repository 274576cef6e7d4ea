//! Vessel graphs: parsing, validation, and geometric queries.
//!
//! A vessel graph is a set of nodes (3D positions in micrometers) and edges
//! (node pairs carrying a vessel radius). Graphs come in as two CSV tables,
//! `nodes.csv` (`id,x,y,z`) and `edges.csv` (`node1,node2,radius`). Blank
//! lines and `#`-prefixed comment lines are ignored; LF and CRLF both work.
//!
//! The z axis is depth: it increases away from the cortical surface, along
//! the imaging beam.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u64,
    /// Position in micrometers.
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub node1: u64,
    pub node2: u64,
    /// Vessel radius in micrometers, strictly positive.
    pub radius: f64,
}

/// A validated vessel graph. Immutable after construction; safe to share
/// across threads for read-only queries.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    bounding_box: Aabb,
    node_index: HashMap<u64, usize>,
}

impl VesselGraph {
    /// Validate and index a node/edge list.
    ///
    /// Rejects duplicate node ids, non-finite positions, dangling edge
    /// references, self-loops, and non-positive or non-finite radii.
    /// Duplicate edges (same unordered node pair) are kept; use
    /// [`VesselGraph::duplicate_edges`] to surface them as a warning.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Data("graph has no nodes".into()));
        }
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !n.position.is_finite() {
                return Err(Error::Data(format!(
                    "node {} has non-finite position",
                    n.id
                )));
            }
            if node_index.insert(n.id, i).is_some() {
                return Err(Error::Data(format!("duplicate node id {}", n.id)));
            }
        }
        for (i, e) in edges.iter().enumerate() {
            for end in [e.node1, e.node2] {
                if !node_index.contains_key(&end) {
                    return Err(Error::Data(format!(
                        "edge {} references unknown node id {}",
                        i, end
                    )));
                }
            }
            if e.node1 == e.node2 {
                return Err(Error::Data(format!(
                    "edge {} is a self-loop on node {}",
                    i, e.node1
                )));
            }
            if !(e.radius > 0.0) || !e.radius.is_finite() {
                return Err(Error::Data(format!(
                    "edge {} has invalid radius {}",
                    i, e.radius
                )));
            }
        }
        let bounding_box = Aabb::from_points(nodes.iter().map(|n| n.position))
            .expect("nodes checked non-empty above");
        Ok(VesselGraph {
            nodes,
            edges,
            bounding_box,
            node_index,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn bounding_box(&self) -> Aabb {
        self.bounding_box
    }

    pub fn node(&self, id: u64) -> Option<&Node> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    /// Endpoint positions of an edge, in micrometers.
    pub fn edge_endpoints(&self, edge: &Edge) -> (Vec3, Vec3) {
        let a = self.node(edge.node1).expect("validated at construction");
        let b = self.node(edge.node2).expect("validated at construction");
        (a.position, b.position)
    }

    /// Indices of edges whose unordered node pair occurs more than once.
    /// Callers surface these as warnings; the data itself stays untouched.
    pub fn duplicate_edges(&self) -> Vec<usize> {
        let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
        let mut dups = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            let key = (e.node1.min(e.node2), e.node1.max(e.node2));
            if seen.insert(key, i).is_some() {
                dups.push(i);
            }
        }
        dups
    }
}

/// Acute angle between an edge direction and the z axis, in degrees.
///
/// Always in [0, 90]; reversing the edge gives the same angle.
pub fn edge_angle_to_z(edge: &Edge, graph: &VesselGraph) -> Result<f64> {
    let (a, b) = graph.edge_endpoints(edge);
    segment_angle_to_z(a, b)
}

/// Acute angle between the segment a..b and the z axis, in degrees.
pub fn segment_angle_to_z(a: Vec3, b: Vec3) -> Result<f64> {
    let d = b - a;
    let len = d.norm();
    if len == 0.0 {
        return Err(Error::Data(format!(
            "zero-length edge: both endpoints at ({}, {}, {})",
            a.x, a.y, a.z
        )));
    }
    let cos = (d.z.abs() / len).clamp(0.0, 1.0);
    Ok(cos.acos().to_degrees())
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn check_header(path: &Path, rec: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = rec.iter().collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| {
        parse_err(path, record_line(rec), format!("missing column `{name}`"))
    })?;
    raw.parse().map_err(|_| {
        parse_err(
            path,
            record_line(rec),
            format!("invalid {name} value `{raw}`"),
        )
    })
}

/// Parse and validate a vessel graph from its two CSV files.
pub fn parse_graph(nodes_file: &Path, edges_file: &Path) -> Result<VesselGraph> {
    let mut nodes = Vec::new();
    {
        let mut rdr = open_reader(nodes_file)?;
        check_header(nodes_file, rdr.headers().map_err(|e| csv_err(nodes_file, &e))?, &["id", "x", "y", "z"])?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(nodes_file, &e))?;
            if rec.len() != 4 {
                return Err(parse_err(
                    nodes_file,
                    record_line(&rec),
                    format!("expected 4 fields, got {}", rec.len()),
                ));
            }
            let id: u64 = field(nodes_file, &rec, 0, "id")?;
            let x: f64 = field(nodes_file, &rec, 1, "x")?;
            let y: f64 = field(nodes_file, &rec, 2, "y")?;
            let z: f64 = field(nodes_file, &rec, 3, "z")?;
            let position = Vec3::new(x, y, z);
            if !position.is_finite() {
                return Err(parse_err(
                    nodes_file,
                    record_line(&rec),
                    format!("node {id} has non-finite coordinates"),
                ));
            }
            nodes.push(Node { id, position });
        }
    }

    let node_ids: std::collections::HashSet<u64> = nodes.iter().map(|n| n.id).collect();
    let mut edges = Vec::new();
    {
        let mut rdr = open_reader(edges_file)?;
        check_header(edges_file, rdr.headers().map_err(|e| csv_err(edges_file, &e))?, &["node1", "node2", "radius"])?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(edges_file, &e))?;
            if rec.len() != 3 {
                return Err(parse_err(
                    edges_file,
                    record_line(&rec),
                    format!("expected 3 fields, got {}", rec.len()),
                ));
            }
            let node1: u64 = field(edges_file, &rec, 0, "node1")?;
            let node2: u64 = field(edges_file, &rec, 1, "node2")?;
            let radius: f64 = field(edges_file, &rec, 2, "radius")?;
            let line = record_line(&rec);
            for end in [node1, node2] {
                if !node_ids.contains(&end) {
                    return Err(parse_err(
                        edges_file,
                        line,
                        format!("edge references unknown node id {end}"),
                    ));
                }
            }
            if !(radius > 0.0) || !radius.is_finite() {
                return Err(parse_err(
                    edges_file,
                    line,
                    format!("radius must be positive and finite, got {radius}"),
                ));
            }
            if node1 == node2 {
                return Err(parse_err(
                    edges_file,
                    line,
                    format!("self-loop on node {node1}"),
                ));
            }
            edges.push(Edge {
                node1,
                node2,
                radius,
            });
        }
    }

    VesselGraph::new(nodes, edges)
}

fn csv_err(path: &Path, e: &csv::Error) -> Error {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    parse_err(path, line, e.to_string())
}

/// Write a graph back to the two-file CSV format. Coordinates and radii use
/// shortest round-trip formatting, so `parse(write(g)) == g` exactly.
pub fn write_graph(graph: &VesselGraph, nodes_file: &Path, edges_file: &Path) -> Result<()> {
    let mut nf = std::fs::File::create(nodes_file).map_err(|e| Error::io(nodes_file, e))?;
    writeln!(nf, "id,x,y,z").map_err(|e| Error::io(nodes_file, e))?;
    for n in graph.nodes() {
        writeln!(nf, "{},{},{},{}", n.id, n.position.x, n.position.y, n.position.z)
            .map_err(|e| Error::io(nodes_file, e))?;
    }

    let mut ef = std::fs::File::create(edges_file).map_err(|e| Error::io(edges_file, e))?;
    writeln!(ef, "node1,node2,radius").map_err(|e| Error::io(edges_file, e))?;
    for e in graph.edges() {
        writeln!(ef, "{},{},{}", e.node1, e.node2, e.radius)
            .map_err(|err| Error::io(edges_file, err))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parses_minimal_graph() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_file(dir.path(), "nodes.csv", "id,x,y,z\n0,0,0,0\n1,100,0,0\n");
        let edges = write_file(dir.path(), "edges.csv", "node1,node2,radius\n0,1,5\n");
        let g = parse_graph(&nodes, &edges).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.bounding_box().min, Vec3::ZERO);
        assert_eq!(g.bounding_box().max, Vec3::new(100.0, 0.0, 0.0));
    }

    #[test]
    fn accepts_comments_and_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_file(
            dir.path(),
            "nodes.csv",
            "id,x,y,z\r\n# a comment\r\n0,0,0,0\r\n1,1,2,3\r\n",
        );
        let edges = write_file(dir.path(), "edges.csv", "node1,node2,radius\r\n0,1,2.5\r\n");
        let g = parse_graph(&nodes, &edges).unwrap();
        assert_eq!(g.nodes().len(), 2);
        assert_eq!(g.edges()[0].radius, 2.5);
    }

    #[test]
    fn dangling_edge_reference_names_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_file(dir.path(), "nodes.csv", "id,x,y,z\n0,0,0,0\n1,1,0,0\n");
        let edges = write_file(dir.path(), "edges.csv", "node1,node2,radius\n0,7,5\n");
        let err = parse_graph(&nodes, &edges).unwrap_err();
        assert!(err.to_string().contains('7'), "err: {err}");
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_file(dir.path(), "nodes.csv", "id,x,y,z\n0,0,0,0\n1,abc,0,0\n");
        let edges = write_file(dir.path(), "edges.csv", "node1,node2,radius\n");
        let err = parse_graph(&nodes, &edges).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn rejects_non_positive_radius_and_self_loop() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_file(dir.path(), "nodes.csv", "id,x,y,z\n0,0,0,0\n1,1,0,0\n");
        let edges = write_file(dir.path(), "edges.csv", "node1,node2,radius\n0,1,0\n");
        assert!(parse_graph(&nodes, &edges).is_err());
        let edges = write_file(dir.path(), "edges.csv", "node1,node2,radius\n0,0,1\n");
        assert!(parse_graph(&nodes, &edges).is_err());
    }

    #[test]
    fn rejects_duplicate_node_id() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_file(dir.path(), "nodes.csv", "id,x,y,z\n0,0,0,0\n0,1,0,0\n");
        let edges = write_file(dir.path(), "edges.csv", "node1,node2,radius\n");
        assert!(parse_graph(&nodes, &edges).is_err());
    }

    #[test]
    fn duplicate_edges_are_kept_and_flagged() {
        let g = VesselGraph::new(
            vec![
                Node { id: 0, position: Vec3::ZERO },
                Node { id: 1, position: Vec3::new(1.0, 0.0, 0.0) },
            ],
            vec![
                Edge { node1: 0, node2: 1, radius: 1.0 },
                Edge { node1: 1, node2: 0, radius: 2.0 },
            ],
        )
        .unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.duplicate_edges(), vec![1]);
    }

    #[test]
    fn angle_examples() {
        let g = VesselGraph::new(
            vec![
                Node { id: 0, position: Vec3::ZERO },
                Node { id: 1, position: Vec3::new(0.0, 0.0, 50.0) },
                Node { id: 2, position: Vec3::new(50.0, 0.0, 0.0) },
                Node { id: 3, position: Vec3::new(1.0, 0.0, 1.0) },
            ],
            vec![
                Edge { node1: 0, node2: 1, radius: 1.0 },
                Edge { node1: 0, node2: 2, radius: 1.0 },
                Edge { node1: 0, node2: 3, radius: 1.0 },
            ],
        )
        .unwrap();
        let angles: Vec<f64> = g
            .edges()
            .iter()
            .map(|e| edge_angle_to_z(e, &g).unwrap())
            .collect();
        assert!((angles[0] - 0.0).abs() < 1e-12);
        assert!((angles[1] - 90.0).abs() < 1e-12);
        assert!((angles[2] - 45.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_edge_is_an_error() {
        let g = VesselGraph::new(
            vec![
                Node { id: 0, position: Vec3::ZERO },
                Node { id: 1, position: Vec3::ZERO },
            ],
            vec![Edge { node1: 0, node2: 1, radius: 1.0 }],
        )
        .unwrap();
        assert!(edge_angle_to_z(&g.edges()[0], &g).is_err());
    }

    #[test]
    fn roundtrip_random_graph() {
        let mut rng = crate::rng::DetRng::new(99, 0, 0);
        let n_nodes = 400;
        let mut nodes = Vec::new();
        for id in 0..n_nodes {
            nodes.push(Node {
                id,
                position: Vec3::new(
                    rng.range(-500.0, 500.0),
                    rng.range(-500.0, 500.0),
                    rng.range(0.0, 2000.0),
                ),
            });
        }
        let mut edges = Vec::new();
        while edges.len() < 1000 {
            let a = rng.below(n_nodes);
            let b = rng.below(n_nodes);
            if a == b {
                continue;
            }
            edges.push(Edge {
                node1: a,
                node2: b,
                radius: rng.range(0.5, 30.0),
            });
        }
        let g = VesselGraph::new(nodes, edges).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let nodes_path = dir.path().join("nodes.csv");
        let edges_path = dir.path().join("edges.csv");
        write_graph(&g, &nodes_path, &edges_path).unwrap();
        let g2 = parse_graph(&nodes_path, &edges_path).unwrap();
        assert_eq!(g, g2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn angle_is_direction_sign_invariant(
                ax in -100.0..100.0f64, ay in -100.0..100.0f64, az in -100.0..100.0f64,
                bx in -100.0..100.0f64, by in -100.0..100.0f64, bz in -100.0..100.0f64,
            ) {
                let a = Vec3::new(ax, ay, az);
                let b = Vec3::new(bx, by, bz);
                prop_assume!((b - a).norm() > 1e-9);
                let fwd = segment_angle_to_z(a, b).unwrap();
                let rev = segment_angle_to_z(b, a).unwrap();
                prop_assert!((fwd - rev).abs() < 1e-9);
                prop_assert!((0.0..=90.0).contains(&fwd));
            }
        }
    }
}
