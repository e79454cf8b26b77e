//! Native JSON mesh format.
//!
//! ```json
//! {
//!   "vertices": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
//!   "triangles": [[0, 1, 2]],
//!   "labels": ["omega1"]
//! }
//! ```
//!
//! Labels are `omega1`, `omega2` or `interaction`, one per triangle. Vertex
//! indices are zero-based.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mesh, Point, Region};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    labels: Vec<Region>,
}

pub fn read_native(path: &Path) -> Result<Mesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: NativeMesh =
        serde_json::from_str(&text).map_err(|e| Error::MeshFormat { path: path.to_path_buf(), msg: e.to_string() })?;
    let vertices = raw.vertices.iter().map(|p| Point::new(p[0], p[1])).collect();
    Mesh::new(vertices, raw.triangles, raw.labels)
}

pub fn write_native(mesh: &Mesh, path: &Path) -> Result<()> {
    let raw = NativeMesh {
        vertices: mesh.vertices().iter().map(|p| [p.x, p.y]).collect(),
        triangles: mesh.triangles().to_vec(),
        labels: mesh.regions().to_vec(),
    };
    let text = serde_json::to_string(&raw)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
