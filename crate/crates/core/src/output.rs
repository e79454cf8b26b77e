//! Run artifacts: the history and diagnostics CSVs, VTK legacy snapshots and
//! the tracking-data file.
//!
//! The data file is JSON holding a mesh reference and nodal values:
//!
//! ```json
//! { "mesh": "target_mesh.json", "values": [0.0, 0.12, 0.3] }
//! ```
//!
//! A relative `mesh` path is resolved against the directory of the data file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::{DiscreteData, FeFunction, Space};
use crate::mesh::{load_mesh, Mesh, MeshFormat, Region, RegionTags};

/// One row of the history CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    #[serde(rename = "J")]
    pub objective: f64,
    #[serde(rename = "defnorm_L2")]
    pub defnorm: f64,
    #[serde(rename = "walltime_s")]
    pub walltime: f64,
    pub mesh_file: String,
}

pub const HISTORY_HEADER: &str = "iter,J,defnorm_L2,walltime_s,mesh_file";

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<HistoryRow>, _>>()?;
    Ok(rows)
}

/// Per-iteration quantities that do not belong in the history schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub iter: usize,
    pub halvings: usize,
    pub step_scale: f64,
    pub grad_inf: f64,
    pub perimeter: f64,
    pub active_dofs: usize,
    pub symmetry_defect: f64,
    pub min_angle_deg: f64,
}

pub fn write_diagnostics(path: &Path, rows: &[DiagnosticsRow]) -> Result<()> {
    write_rows(path, rows)
}

/// Write serializable rows as CSV with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn region_label(r: Region) -> i32 {
    match r {
        Region::Omega1 => 1,
        Region::Omega2 => 2,
        Region::Interaction => 3,
    }
}

/// VTK legacy ASCII unstructured grid with point data `u0`, `v0` and cell data
/// `region` (1 = Ω₁, 2 = Ω₂, 3 = interaction domain).
pub fn vtk_string(mesh: &Mesh, u: &FeFunction, v: &FeFunction) -> Result<String> {
    for (name, f) in [("u0", u), ("v0", v)] {
        if f.space() != Space::ScalarP1 || f.coeffs().len() != mesh.num_vertices() {
            return Err(Error::Dimension(format!("{name} must be a scalar P1 field on this mesh")));
        }
    }
    let nv = mesh.num_vertices();
    let nt = mesh.num_triangles();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nnlshape snapshot\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", p.x, p.y);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "CELL_DATA {nt}\nSCALARS region int 1\nLOOKUP_TABLE default");
    for &r in mesh.regions() {
        let _ = writeln!(s, "{}", region_label(r));
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    for (name, f) in [("u0", u), ("v0", v)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for c in f.coeffs() {
            let _ = writeln!(s, "{c:e}");
        }
    }
    Ok(s)
}

pub fn write_vtk(path: &Path, mesh: &Mesh, u: &FeFunction, v: &FeFunction) -> Result<()> {
    let text = vtk_string(mesh, u, v)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataFile {
    mesh: PathBuf,
    values: Vec<f64>,
}

/// Write nodal values referencing a mesh file (stored as given, usually relative).
pub fn write_data_file(path: &Path, mesh_ref: &Path, values: &[f64]) -> Result<()> {
    let raw = DataFile { mesh: mesh_ref.to_path_buf(), values: values.to_vec() };
    let text = serde_json::to_string(&raw)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a data file and the mesh it references.
pub fn read_data_file(path: &Path, tags: &RegionTags) -> Result<DiscreteData> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: DataFile =
        serde_json::from_str(&text).map_err(|e| Error::MeshFormat { path: path.to_path_buf(), msg: e.to_string() })?;
    let mesh_path =
        if raw.mesh.is_relative() { path.parent().unwrap_or(Path::new(".")).join(&raw.mesh) } else { raw.mesh };
    let mesh = load_mesh(&mesh_path, MeshFormat::from_path(&mesh_path), tags)?;
    if raw.values.len() != mesh.num_vertices() {
        return Err(Error::Dimension(format!(
            "data file has {} values for a mesh with {} vertices",
            raw.values.len(),
            mesh.num_vertices()
        )));
    }
    Ok(DiscreteData { mesh, values: raw.values })
}
