//! Discrete shape gradient and linear shape Hessian of the reduced objective
//! over the vector P1 basis, with perimeter terms and the H¹ regularizer.
//!
//! The Hessian of the objective part is assembled as
//! H = h + (G1·Ψ + G2·Φ)ᵀ, where h holds the explicit second-order terms and
//! the columns of Φ = −A⁻¹G1ᵀ and Ψ = −A⁻ᵀ(G2ᵀ + MΦ) are the averaged adjoints
//! (φ, ψ) of the basis fields.

use nalgebra::{DMatrix, Vector2};

use crate::assembly::{
    assemble_mass, assemble_regularizer, assemble_tracking_load, tracking_value, ActiveDofs, Assembler, ShapeMatrices,
    SparseOperator, StateData,
};
use crate::error::Result;
use crate::fe::{DataOnMesh, FeFunction, Forcing, VectorField};
use crate::kernel::KernelSpec;
use crate::linsolve::{factorize_with, solve_adjoint, solve_state, Factorization, SolverKind};
use crate::mesh::{extract_interface, interface_supported_nodes, InterfaceEdges, Mesh, Point};

/// Value of a continuous vector field at a mesh node of triangle `tri`.
fn node_value(mesh: &Mesh, field: &dyn VectorField, tri: usize, node: usize) -> Vector2<f64> {
    let t = mesh.triangles()[tri];
    let mut bary = [0.0; 3];
    let k = t.iter().position(|&n| n == node).expect("node belongs to triangle");
    bary[k] = 1.0;
    field.sample(mesh, tri, &bary, &mesh.vertices()[node]).value
}

/// Unit tangent, normal and length of interface edge `e`.
fn edge_geometry(mesh: &Mesh, iface: &InterfaceEdges, e: usize) -> (Point, Point, f64) {
    let (a, b) = iface.edges[e];
    let d = mesh.vertices()[b] - mesh.vertices()[a];
    let len = d.norm();
    (d / len, iface.normals[e], len)
}

/// ∫_Γ div_Γ V: for a polygonal interface this is Σ_e τ_e·(V(b) − V(a)),
/// the exact derivative of the polyline length.
pub fn perimeter_first(mesh: &Mesh, iface: &InterfaceEdges, field: &dyn VectorField) -> f64 {
    (0..iface.len())
        .map(|e| {
            let (a, b) = iface.edges[e];
            let tri = iface.adjacent[e].0;
            let (tau, _, _) = edge_geometry(mesh, iface, e);
            tau.dot(&(node_value(mesh, field, tri, b) - node_value(mesh, field, tri, a)))
        })
        .sum()
}

/// Second derivative of the polyline length along V and W: with tangential
/// Jacobians D_ΓV τ = (V(b) − V(a))/|e| the edge integrand reduces to
/// |e|·(nᵀD_ΓVτ)(nᵀD_ΓWτ).
pub fn perimeter_second(mesh: &Mesh, iface: &InterfaceEdges, v: &dyn VectorField, w: &dyn VectorField) -> f64 {
    (0..iface.len())
        .map(|e| {
            let (a, b) = iface.edges[e];
            let tri = iface.adjacent[e].0;
            let (_, n, len) = edge_geometry(mesh, iface, e);
            let dv = node_value(mesh, v, tri, b) - node_value(mesh, v, tri, a);
            let dw = node_value(mesh, w, tri, b) - node_value(mesh, w, tri, a);
            n.dot(&dv) * n.dot(&dw) / len
        })
        .sum()
}

/// Perimeter gradient over the active basis fields.
pub fn perimeter_first_vector(mesh: &Mesh, iface: &InterfaceEdges, active: &ActiveDofs) -> Vec<f64> {
    let mut g = vec![0.0; active.len()];
    for e in 0..iface.len() {
        let (a, b) = iface.edges[e];
        let (tau, _, _) = edge_geometry(mesh, iface, e);
        for (node, sign) in [(a, -1.0), (b, 1.0)] {
            let Some(i) = mesh.free_index(node) else { continue };
            for c in 0..2 {
                if let Some(k) = active.index_of(2 * i + c) {
                    g[k] += sign * tau[c];
                }
            }
        }
    }
    g
}

/// Perimeter Hessian over the active basis fields.
pub fn perimeter_second_matrix(mesh: &Mesh, iface: &InterfaceEdges, active: &ActiveDofs) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(active.len(), active.len());
    for e in 0..iface.len() {
        let (a, b) = iface.edges[e];
        let (_, n, len) = edge_geometry(mesh, iface, e);
        let mut entries = Vec::with_capacity(4);
        for (node, sign) in [(a, -1.0), (b, 1.0)] {
            let Some(i) = mesh.free_index(node) else { continue };
            for c in 0..2 {
                if let Some(k) = active.index_of(2 * i + c) {
                    entries.push((k, sign * n[c]));
                }
            }
        }
        for &(k, x) in &entries {
            for &(l, y) in &entries {
                h[(k, l)] += x * y / len;
            }
        }
    }
    h
}

/// j_reg(V, W) = ∫_Ω V·W + DV : DW over free vector dofs.
pub fn regularizer_matrix(mesh: &Mesh) -> SparseOperator {
    assemble_regularizer(mesh)
}

/// Problem data that stays fixed while the mesh moves.
#[derive(Clone, Copy)]
pub struct ShapeProblem<'a> {
    pub spec: &'a KernelSpec,
    pub ubar: &'a DataOnMesh,
    pub forcing: &'a Forcing,
    pub nu: f64,
    pub solver: SolverKind,
}

/// State and adjoint solved on one mesh configuration.
pub struct SolvedState<'a> {
    pub asm: Assembler<'a>,
    pub fact: Factorization,
    pub u: FeFunction,
    pub v: FeFunction,
    pub mass: SparseOperator,
    pub interface: InterfaceEdges,
    /// ½∫(u − ū)² + ν|Γ|.
    pub objective: f64,
}

impl<'a> SolvedState<'a> {
    pub fn state_data(&self, problem: &ShapeProblem<'a>) -> StateData<'_> {
        StateData { u: &self.u, v: &self.v, ubar: problem.ubar, forcing: problem.forcing }
    }
}

/// Assemble and factorize A, solve for u⁰ and v⁰, and evaluate J.
pub fn solve_configuration<'a>(mesh: &'a Mesh, problem: &ShapeProblem<'a>) -> Result<SolvedState<'a>> {
    let asm = Assembler::new(mesh, problem.spec)?;
    let a = asm.stiffness();
    let fact = factorize_with(&a, problem.solver)?;
    let load = crate::assembly::assemble_load(mesh, problem.forcing);
    let u = solve_state(&fact, mesh, &load)?;
    let rhs = assemble_tracking_load(mesh, &u, problem.ubar)?;
    let v = solve_adjoint(&fact, mesh, &rhs)?;
    let interface = extract_interface(mesh)?;
    let objective = tracking_value(mesh, &u, problem.ubar)? + problem.nu * interface.length(mesh);
    let mass = assemble_mass(mesh);
    Ok(SolvedState { asm, fact, u, v, mass, interface, objective })
}

/// Gradient, symmetrized Hessian over the interface-supported fields, and the regularizer.
#[derive(Clone, Debug)]
pub struct DerivativeBundle {
    /// Over all free vector dofs; zero off the interface-supported fields.
    pub grad: Vec<f64>,
    /// Over `interface_dofs` (zero elsewhere).
    pub hess: DMatrix<f64>,
    pub reg: SparseOperator,
    pub interface_dofs: ActiveDofs,
    /// ‖H − Hᵀ‖_F/‖H‖_F before symmetrization.
    pub symmetry_defect: f64,
}

/// Basis fields whose support meets Γ.
pub fn interface_dofs(mesh: &Mesh, iface: &InterfaceEdges) -> ActiveDofs {
    ActiveDofs::from_node_mask(mesh, &interface_supported_nodes(mesh, iface))
}

/// Masked first derivative over all free vector dofs: 𝔍 − 𝔉 + 𝔄 + ν·per′.
pub fn first_derivative_vector(solved: &SolvedState, problem: &ShapeProblem) -> Result<Vec<f64>> {
    let mesh = solved.asm.mesh;
    let active = interface_dofs(mesh, &solved.interface);
    let m = solved.asm.shape_matrices(&solved.state_data(problem), &active, false)?;
    Ok(scatter_gradient(mesh, solved, problem, &active, &m))
}

fn scatter_gradient(
    mesh: &Mesh,
    solved: &SolvedState,
    problem: &ShapeProblem,
    active: &ActiveDofs,
    m: &ShapeMatrices,
) -> Vec<f64> {
    let per = perimeter_first_vector(mesh, &solved.interface, active);
    let local = m.first_derivative();
    let mut grad = vec![0.0; 2 * mesh.num_free()];
    for (a, &dof) in active.dofs().iter().enumerate() {
        grad[dof] = local[a] + problem.nu * per[a];
    }
    grad
}

/// Averaged adjoints of all active basis fields as columns (Φ, Ψ).
pub fn averaged_adjoint_columns(solved: &SolvedState, m: &ShapeMatrices) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut phi = solved.fact.solve_columns(&m.g1.transpose(), false)?;
    phi.neg_mut();
    let nfree = phi.nrows();
    let mut rhs = m.g2.transpose();
    for j in 0..phi.ncols() {
        let col: Vec<f64> = phi.column(j).iter().copied().collect();
        let mcol = solved.mass.mul_vec(&col);
        for i in 0..nfree {
            rhs[(i, j)] += mcol[i];
        }
    }
    let mut psi = solved.fact.solve_columns(&rhs, true)?;
    psi.neg_mut();
    Ok((phi, psi))
}

/// Unsymmetrized objective Hessian (with perimeter) over the active fields.
pub fn hessian_unsymmetrized(
    solved: &SolvedState,
    problem: &ShapeProblem,
    active: &ActiveDofs,
    m: &ShapeMatrices,
) -> Result<DMatrix<f64>> {
    let (phi, psi) = averaged_adjoint_columns(solved, m)?;
    let coupling = &m.g1 * &psi + &m.g2 * &phi;
    let per = perimeter_second_matrix(solved.asm.mesh, &solved.interface, active);
    Ok(&m.h + coupling.transpose() + per * problem.nu)
}

/// Symmetrized Hessian over the interface-supported fields and its symmetry defect.
pub fn hessian_matrix(solved: &SolvedState, problem: &ShapeProblem) -> Result<(DMatrix<f64>, f64, ActiveDofs)> {
    let active = interface_dofs(solved.asm.mesh, &solved.interface);
    let m = solved.asm.shape_matrices(&solved.state_data(problem), &active, true)?;
    let h = hessian_unsymmetrized(solved, problem, &active, &m)?;
    let (sym, defect) = symmetrize(&h);
    Ok((sym, defect, active))
}

pub fn symmetrize(h: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let norm = h.norm();
    let defect = if norm == 0.0 { 0.0 } else { (h - h.transpose()).norm() / norm };
    ((h + h.transpose()) * 0.5, defect)
}

/// Everything the Newton step needs, from a single sweep over triangle pairs.
pub fn derivative_bundle(solved: &SolvedState, problem: &ShapeProblem) -> Result<DerivativeBundle> {
    let mesh = solved.asm.mesh;
    let active = interface_dofs(mesh, &solved.interface);
    let m = solved.asm.shape_matrices(&solved.state_data(problem), &active, true)?;
    let grad = scatter_gradient(mesh, solved, problem, &active, &m);
    let h = hessian_unsymmetrized(solved, problem, &active, &m)?;
    let (hess, symmetry_defect) = symmetrize(&h);
    Ok(DerivativeBundle { grad, hess, reg: regularizer_matrix(mesh), interface_dofs: active, symmetry_defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::SmoothVectorField;
    use crate::mesh::{box_mesh, BoxMeshSpec, Shape};
    use nalgebra::Matrix2;
    use std::f64::consts::PI;

    fn circle_mesh(cells: usize) -> Mesh {
        let shape = Shape::Circle { center: [0.5, 0.5], radius: 0.25 };
        box_mesh(&BoxMeshSpec { cells, collar_cells: 1, shape }).unwrap()
    }

    fn dilation() -> SmoothVectorField {
        SmoothVectorField::new(|p| Vector2::new(p.x - 0.5, p.y - 0.5), |_| Matrix2::identity(), |_| Vector2::zeros())
    }

    #[test]
    fn rotation_has_zero_perimeter_derivative() {
        let mesh = circle_mesh(16);
        let iface = extract_interface(&mesh).unwrap();
        let rot = SmoothVectorField::new(
            |p| Vector2::new(-(p.y - 0.5), p.x - 0.5),
            |_| Matrix2::new(0.0, -1.0, 1.0, 0.0),
            |_| Vector2::zeros(),
        );
        assert!(perimeter_first(&mesh, &iface, &rot).abs() < 1e-14);
    }

    #[test]
    fn dilation_derivatives() {
        let mesh = circle_mesh(16);
        let iface = extract_interface(&mesh).unwrap();
        let v = dilation();
        // d/dt |(1 + t)Γ_h| = |Γ_h|.
        assert!((perimeter_first(&mesh, &iface, &v) - iface.length(&mesh)).abs() < 1e-13);
        assert!(perimeter_second(&mesh, &iface, &v, &v).abs() < 1e-14);
        // Inscribed polygon: shorter than the circle, longer than the inscribed square.
        let len = iface.length(&mesh);
        assert!(len < 2.0 * PI * 0.25 && len > 4.0 * 0.25 * 2f64.sqrt());
    }
}
