//! Labeled conforming triangle meshes of Ω ∪ I.
//!
//! A [`Mesh`] is immutable once built. Deformation returns a new mesh with the
//! same connectivity and labels; only vertex coordinates move.

mod generate;
mod gmsh;
mod locate;
mod native;

pub use generate::{box_mesh, BoxMeshSpec, Shape};
pub use gmsh::{read_gmsh, write_gmsh, RegionTags};
pub use locate::Locator;
pub use native::{read_native, write_native};

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::{FeFunction, Space};

pub type Point = Vector2<f64>;

/// Region label of a triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Omega1,
    Omega2,
    Interaction,
}

impl Region {
    pub fn is_omega(self) -> bool {
        !matches!(self, Region::Interaction)
    }
}

/// On-disk mesh formats understood by [`load_mesh`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    GmshAscii,
    Native,
}

impl MeshFormat {
    /// Guess the format from the file extension (`.msh` is Gmsh, anything else native).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("msh") => MeshFormat::GmshAscii,
            _ => MeshFormat::Native,
        }
    }
}

/// Load a mesh from disk and validate it.
pub fn load_mesh(path: &Path, format: MeshFormat, tags: &RegionTags) -> Result<Mesh> {
    match format {
        MeshFormat::GmshAscii => read_gmsh(path, tags),
        MeshFormat::Native => read_native(path),
    }
}

/// Conforming, positively oriented triangle mesh with region labels.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<Region>,
    constrained: Vec<bool>,
    free_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
}

impl Mesh {
    /// Build and validate a mesh. Clockwise triangles are reoriented.
    pub fn new(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>, regions: Vec<Region>) -> Result<Self> {
        if triangles.len() != regions.len() {
            return Err(Error::Mesh(format!("{} triangles but {} region labels", triangles.len(), regions.len())));
        }
        if triangles.is_empty() {
            return Err(Error::Mesh("no triangles".into()));
        }
        let n = vertices.len();
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} repeats a vertex")));
            }
            let area = signed_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area < 0.0 {
                tri.swap(1, 2);
            } else if area == 0.0 {
                return Err(Error::InvertedElement { tri: t, area });
            }
        }
        if !regions.contains(&Region::Omega1) {
            return Err(Error::Mesh("Omega1 empty".into()));
        }
        if !regions.contains(&Region::Omega2) {
            return Err(Error::Mesh("Omega2 empty".into()));
        }
        check_conforming(&vertices, &triangles)?;
        Ok(Self::from_parts(vertices, triangles, regions))
    }

    fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, regions: Vec<Region>) -> Self {
        let mut constrained = vec![false; vertices.len()];
        for (tri, region) in triangles.iter().zip(&regions) {
            if *region == Region::Interaction {
                for &i in tri {
                    constrained[i] = true;
                }
            }
        }
        // Vertices not referenced by any triangle carry no dof.
        let mut used = vec![false; vertices.len()];
        for tri in &triangles {
            for &i in tri {
                used[i] = true;
            }
        }
        let mut free_index = vec![None; vertices.len()];
        let mut free_nodes = Vec::new();
        for i in 0..vertices.len() {
            if used[i] && !constrained[i] {
                free_index[i] = Some(free_nodes.len());
                free_nodes.push(i);
            }
        }
        Mesh { vertices, triangles, regions, constrained, free_index, free_nodes }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn region(&self, tri: usize) -> Region {
        self.regions[tri]
    }

    /// Nodes in the closure of interaction-domain triangles (u = 0 and V = 0 there).
    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    /// Node indices carrying a scalar dof, in dof order.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    /// Scalar dof of a node, if it is free.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_index[node]
    }

    pub fn num_free(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn corners(&self, tri: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[tri];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.corners(tri);
        signed_area(&a, &b, &c)
    }

    pub fn centroid(&self, tri: usize) -> Point {
        let [a, b, c] = self.corners(tri);
        (a + b + c) / 3.0
    }

    /// Physical point with barycentric coordinates `bary` in triangle `tri`.
    pub fn point_at(&self, tri: usize, bary: &[f64; 3]) -> Point {
        let [a, b, c] = self.corners(tri);
        a * bary[0] + b * bary[1] + c * bary[2]
    }

    /// Gradients of the three barycentric coordinates (constant on the triangle).
    pub fn basis_gradients(&self, tri: usize) -> [Vector2<f64>; 3] {
        let [a, b, c] = self.corners(tri);
        barycentric_gradients(&a, &b, &c)
    }

    /// Total area of the triangles with the given label.
    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.num_triangles()).filter(|&t| self.regions[t] == region).map(|t| self.area(t)).sum()
    }

    /// Area of Ω = Ω₁ ∪ Ω₂.
    pub fn omega_area(&self) -> f64 {
        self.region_area(Region::Omega1) + self.region_area(Region::Omega2)
    }

    /// Largest edge length.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in 0..self.num_triangles() {
            let p = self.corners(t);
            for i in 0..3 {
                h = h.max((p[(i + 1) % 3] - p[i]).norm());
            }
        }
        h
    }

    /// Node-to-node adjacency (sorted neighbor lists).
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.num_vertices()];
        for tri in &self.triangles {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        nb[tri[i]].push(tri[j]);
                    }
                }
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Copy of this mesh with new vertex positions; fails if a triangle inverts.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Mesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Dimension("vertex count changed".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let area = signed_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if area <= 0.0 {
                return Err(Error::InvertedElement { tri: t, area });
            }
        }
        Ok(Mesh { vertices, ..self.clone() })
    }

    /// Same mesh with Omega1 and Omega2 labels exchanged.
    pub fn swap_omega_labels(&self) -> Mesh {
        let regions = self
            .regions
            .iter()
            .map(|r| match r {
                Region::Omega1 => Region::Omega2,
                Region::Omega2 => Region::Omega1,
                Region::Interaction => Region::Interaction,
            })
            .collect();
        Mesh { regions, ..self.clone() }
    }
}

/// Twice-oriented area divided by two: positive for counter-clockwise corners.
pub fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

pub(crate) fn barycentric_gradients(a: &Point, b: &Point, c: &Point) -> [Vector2<f64>; 3] {
    let two_area = 2.0 * signed_area(a, b, c);
    let perp = |v: Vector2<f64>| Vector2::new(-v.y, v.x) / two_area;
    [perp(c - b), perp(a - c), perp(b - a)]
}

fn check_conforming(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<()> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for i in 0..3 {
            let e = (tri[i], tri[(i + 1) % 3]);
            if directed.insert(e, t).is_some() {
                return Err(Error::Mesh(format!(
                    "edge ({}, {}) is used twice with the same orientation (non-conforming or overlapping triangles)",
                    e.0, e.1
                )));
            }
        }
    }
    // Boundary edges must not contain other vertices (hanging nodes).
    let boundary: Vec<(usize, usize)> =
        directed.keys().filter(|(a, b)| !directed.contains_key(&(*b, *a))).copied().collect();
    let mut used = vec![false; vertices.len()];
    for tri in triangles {
        for &i in tri {
            used[i] = true;
        }
    }
    let scale = vertices.iter().fold(0.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs())).max(1.0);
    for (a, b) in boundary {
        let (pa, pb) = (vertices[a], vertices[b]);
        let d = pb - pa;
        let len2 = d.norm_squared();
        for (k, p) in vertices.iter().enumerate() {
            if !used[k] || k == a || k == b {
                continue;
            }
            let s = (p - pa).dot(&d) / len2;
            if s <= 0.0 || s >= 1.0 {
                continue;
            }
            let dist = (p - (pa + d * s)).norm();
            if dist <= 1e-12 * scale {
                return Err(Error::Mesh(format!("hanging node {k} on edge ({a}, {b})")));
            }
        }
    }
    Ok(())
}

/// Interface Γ between Omega1 and Omega2.
#[derive(Clone, Debug)]
pub struct InterfaceEdges {
    /// Node pairs, ordered counter-clockwise with respect to the Omega1 triangle.
    pub edges: Vec<(usize, usize)>,
    /// Unit normal per edge, pointing from Omega1 into Omega2.
    pub normals: Vec<Point>,
    /// Omega1 and Omega2 triangle adjacent to each edge.
    pub adjacent: Vec<(usize, usize)>,
    /// Sorted node indices on Γ.
    pub interface_nodes: Vec<usize>,
}

impl InterfaceEdges {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Total length of Γ.
    pub fn length(&self, mesh: &Mesh) -> f64 {
        self.edges.iter().map(|&(a, b)| (mesh.vertices[b] - mesh.vertices[a]).norm()).sum()
    }

    /// Interface nodes as a node mask.
    pub fn node_mask(&self, num_vertices: usize) -> Vec<bool> {
        let mut mask = vec![false; num_vertices];
        for &i in &self.interface_nodes {
            mask[i] = true;
        }
        mask
    }
}

/// Edges shared by an Omega1 and an Omega2 triangle. Errors if there are none.
pub fn extract_interface(mesh: &Mesh) -> Result<InterfaceEdges> {
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] == Region::Omega2 {
            for i in 0..3 {
                owner.insert((tri[(i + 1) % 3], tri[i]), t);
            }
        }
    }
    let mut found = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] != Region::Omega1 {
            continue;
        }
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            if let Some(&t2) = owner.get(&(a, b)) {
                found.push(((a, b), (t, t2)));
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Mesh("interface between Omega1 and Omega2 is empty".into()));
    }
    found.sort_by_key(|&((a, b), _)| (a.min(b), a.max(b)));
    let mut edges = Vec::with_capacity(found.len());
    let mut normals = Vec::with_capacity(found.len());
    let mut adjacent = Vec::with_capacity(found.len());
    let mut nodes = Vec::with_capacity(2 * found.len());
    for ((a, b), tris) in found {
        let d = mesh.vertices[b] - mesh.vertices[a];
        normals.push(Vector2::new(d.y, -d.x) / d.norm());
        edges.push((a, b));
        adjacent.push(tris);
        nodes.push(a);
        nodes.push(b);
    }
    nodes.sort_unstable();
    nodes.dedup();
    Ok(InterfaceEdges { edges, normals, adjacent, interface_nodes: nodes })
}

/// Move every vertex by `t · V(x)`. The field must vanish on constrained nodes.
pub fn deform_mesh(mesh: &Mesh, field: &FeFunction, t: f64) -> Result<Mesh> {
    if field.space() != Space::VectorP1 || field.coeffs().len() != 2 * mesh.num_vertices() {
        return Err(Error::Dimension("deformation needs a vector P1 field on this mesh".into()));
    }
    let c = field.coeffs();
    for (i, &fixed) in mesh.constrained.iter().enumerate() {
        if fixed && (c[2 * i] != 0.0 || c[2 * i + 1] != 0.0) {
            return Err(Error::Constraint(format!("deformation field is nonzero at constrained node {i}")));
        }
    }
    let vertices =
        mesh.vertices.iter().enumerate().map(|(i, p)| p + Vector2::new(c[2 * i], c[2 * i + 1]) * t).collect();
    mesh.with_vertices(vertices)
}

/// Minimum interior angle in degrees and minimum signed area over all triangles.
pub fn mesh_quality(mesh: &Mesh) -> (f64, f64) {
    let mut min_angle = f64::INFINITY;
    let mut min_area = f64::INFINITY;
    for t in 0..mesh.num_triangles() {
        let p = mesh.corners(t);
        min_area = min_area.min(mesh.area(t));
        for i in 0..3 {
            let u = p[(i + 1) % 3] - p[i];
            let v = p[(i + 2) % 3] - p[i];
            let cos = (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0);
            min_angle = min_angle.min(cos.acos().to_degrees());
        }
    }
    (min_angle, min_area)
}

/// Vector dofs whose hat support touches Γ: interface nodes and their neighbors, free nodes only.
pub fn interface_supported_nodes(mesh: &Mesh, interface: &InterfaceEdges) -> Vec<bool> {
    let neighbors = mesh.node_neighbors();
    let mut mask = vec![false; mesh.num_vertices()];
    for &i in &interface.interface_nodes {
        mask[i] = true;
        for &j in &neighbors[i] {
            mask[j] = true;
        }
    }
    for (i, m) in mask.iter_mut().enumerate() {
        if mesh.constrained[i] {
            *m = false;
        }
    }
    mask
}

/// Symmetric Hausdorff distance between the interface polyline and a closed curve
/// given by its signed distance function, estimated by sampling the polyline and
/// projecting sampled curve points onto it.
pub fn hausdorff_to_curve(
    mesh: &Mesh,
    interface: &InterfaceEdges,
    distance: impl Fn(&Point) -> f64,
    curve_samples: &[Point],
) -> f64 {
    let mut d: f64 = 0.0;
    for &(a, b) in &interface.edges {
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        for k in 0..=8 {
            let p = pa + (pb - pa) * (k as f64 / 8.0);
            d = d.max(distance(&p).abs());
        }
    }
    for q in curve_samples {
        let mut best = f64::INFINITY;
        for &(a, b) in &interface.edges {
            best = best.min(point_segment_distance(q, &mesh.vertices[a], &mesh.vertices[b]));
        }
        d = d.max(best);
    }
    d
}

pub(crate) fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let d = b - a;
    let s = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (p - (a + d * s)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_two(regions: [Region; 2]) -> Result<Mesh> {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
        Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]], regions.to_vec())
    }

    #[test]
    fn missing_omega2_is_rejected() {
        let err = unit_square_two([Region::Omega1, Region::Omega1]).unwrap_err();
        assert!(err.to_string().contains("Omega2 empty"), "{err}");
    }

    #[test]
    fn clockwise_triangles_are_reoriented() {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
        let mesh = Mesh::new(v, vec![[0, 2, 1], [0, 2, 3]], vec![Region::Omega1, Region::Omega2]).unwrap();
        for t in 0..2 {
            assert!(mesh.area(t) > 0.0);
        }
        assert!((mesh.area(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hanging_node_is_rejected() {
        // Left triangle has the full edge (1,0)-(1,2); right side splits it at (1,1).
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 2.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 1.0),
        ];
        let tris = vec![[0, 1, 2], [1, 4, 3], [3, 4, 2]];
        let err = Mesh::new(v, tris, vec![Region::Omega1, Region::Omega2, Region::Omega2]).unwrap_err();
        assert!(err.to_string().contains("hanging"), "{err}");
    }

    #[test]
    fn barycentric_gradients_are_dual_to_edges() {
        let a = Point::new(0.3, -0.2);
        let b = Point::new(1.7, 0.4);
        let c = Point::new(0.1, 1.3);
        let g = barycentric_gradients(&a, &b, &c);
        let p = [a, b, c];
        for i in 0..3 {
            for j in 0..3 {
                // λ_i(p_j) - λ_i(p_0) = g_i · (p_j - p_0)
                let expect = (i == j) as i32 as f64 - (i == 0) as i32 as f64;
                assert!((g[i].dot(&(p[j] - p[0])) - expect).abs() < 1e-14);
            }
        }
        let sum = g[0] + g[1] + g[2];
        assert!(sum.norm() < 1e-14);
    }
}
