//! Local (single-integral) forms over Ω: loads, mass, the H¹ regularizer, the
//! tracking objective, and the pointwise integrands of the local parts of the
//! shape derivatives.

use nalgebra::Vector2;

use super::{check_scalar, dot3, sparse::TripletBuilder, tri_values, SparseOperator};
use crate::error::Result;
use crate::fe::{DataOnMesh, FeFunction, FieldSample, Forcing, ScalarSample};
use crate::mesh::{InterfaceEdges, Mesh, Point, Region};
use crate::quadrature::TriangleRule;

/// A quadrature point in an Ω triangle with its physical weight.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LocalPoint {
    pub tri: usize,
    pub bary: [f64; 3],
    pub x: Point,
    pub w: f64,
    pub region: Region,
}

pub(crate) fn for_each_local_point(mesh: &Mesh, rule: &TriangleRule, tri: usize, mut f: impl FnMut(&LocalPoint)) {
    let region = mesh.region(tri);
    if !region.is_omega() {
        return;
    }
    let scale = 2.0 * mesh.area(tri);
    for (b, w) in rule.points.iter().zip(&rule.weights) {
        f(&LocalPoint { tri, bary: *b, x: mesh.point_at(tri, b), w: w * scale, region });
    }
}

/// Fields at a local quadrature point: u − ū, ū with derivatives, v and f.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LocalData {
    pub r: f64,
    pub ubar: ScalarSample,
    pub v: f64,
    pub f: ScalarSample,
}

impl LocalData {
    pub fn at(mesh: &Mesh, p: &LocalPoint, u: &[f64; 3], v: &[f64; 3], ubar: &DataOnMesh, forcing: &Forcing) -> Self {
        let ub = ubar.sample(mesh, p.tri, &p.bary, &p.x);
        LocalData { r: dot3(u, &p.bary) - ub.value, ubar: ub, v: dot3(v, &p.bary), f: forcing.sample(p.region, &p.x) }
    }
}

/// Integrand of 𝔍_V: −(u − ū)∇ūᵀV + ½(u − ū)² div V.
#[inline]
pub(crate) fn j_first(d: &LocalData, vs: &FieldSample) -> f64 {
    -d.r * d.ubar.gradient.dot(&vs.value) + 0.5 * d.r * d.r * vs.div()
}

/// Integrand of 𝔉_V(w) divided by w: ∇fᵀV + f div V.
#[inline]
pub(crate) fn f_first_factor(d: &LocalData, vs: &FieldSample) -> f64 {
    d.f.gradient.dot(&vs.value) + d.f.value * vs.div()
}

/// Integrand of d_u𝔍_V[ũ] divided by ũ: −∇ūᵀV + (u − ū) div V.
#[inline]
pub(crate) fn du_j_factor(d: &LocalData, vs: &FieldSample) -> f64 {
    -d.ubar.gradient.dot(&vs.value) + d.r * vs.div()
}

/// Local second-order integrand: tracking terms minus forcing terms.
pub(crate) fn local_second(d: &LocalData, vs: &FieldSample, ws: &FieldSample) -> f64 {
    let gv = d.ubar.gradient.dot(&vs.value);
    let gw = d.ubar.gradient.dot(&ws.value);
    let (dv, dw) = (vs.div(), ws.div());
    let cross = dv * dw - (vs.jacobian * ws.jacobian).trace();
    let tracking =
        gw * gv - d.r * (vs.value.dot(&(d.ubar.hessian * ws.value)) + gv * dw + gw * dv) + 0.5 * d.r * d.r * cross;
    let fv = d.f.gradient.dot(&vs.value);
    let fw = d.f.gradient.dot(&ws.value);
    let forcing = d.v * (vs.value.dot(&(d.f.hessian * ws.value)) + fv * dw + fw * dv + d.f.value * cross);
    tracking - forcing
}

/// b_i = ∫_Ω f φ_i over free nodes.
pub fn assemble_load(mesh: &Mesh, forcing: &Forcing) -> Vec<f64> {
    let rule = TriangleRule::degree5();
    let mut b = vec![0.0; mesh.num_free()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[t];
        for_each_local_point(mesh, &rule, t, |p| {
            let f = forcing.sample(p.region, &p.x).value;
            for k in 0..3 {
                if let Some(i) = mesh.free_index(tri[k]) {
                    b[i] += p.w * f * p.bary[k];
                }
            }
        });
    }
    b
}

/// r_i = −∫_Ω (u − ū) φ_i over free nodes.
pub fn assemble_tracking_load(mesh: &Mesh, u: &FeFunction, ubar: &DataOnMesh) -> Result<Vec<f64>> {
    check_scalar(mesh, u, "u")?;
    let rule = TriangleRule::degree5();
    let mut r = vec![0.0; mesh.num_free()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[t];
        let uv = tri_values(mesh, u, t);
        for_each_local_point(mesh, &rule, t, |p| {
            let diff = dot3(&uv, &p.bary) - ubar.sample(mesh, t, &p.bary, &p.x).value;
            for k in 0..3 {
                if let Some(i) = mesh.free_index(tri[k]) {
                    r[i] -= p.w * diff * p.bary[k];
                }
            }
        });
    }
    Ok(r)
}

/// ½∫_Ω (u − ū)².
pub fn tracking_value(mesh: &Mesh, u: &FeFunction, ubar: &DataOnMesh) -> Result<f64> {
    check_scalar(mesh, u, "u")?;
    let rule = TriangleRule::degree5();
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let uv = tri_values(mesh, u, t);
        for_each_local_point(mesh, &rule, t, |p| {
            let diff = dot3(&uv, &p.bary) - ubar.sample(mesh, t, &p.bary, &p.x).value;
            total += 0.5 * p.w * diff * diff;
        });
    }
    Ok(total)
}

/// J = ½∫_Ω (u − ū)² + ν|Γ|.
pub fn assemble_objective(
    mesh: &Mesh,
    u: &FeFunction,
    ubar: &DataOnMesh,
    nu: f64,
    interface: &InterfaceEdges,
) -> Result<f64> {
    Ok(tracking_value(mesh, u, ubar)? + nu * interface.length(mesh))
}

/// Scalar P1 mass matrix on Ω over free nodes.
pub fn assemble_mass(mesh: &Mesh) -> SparseOperator {
    let mut b = TripletBuilder::new();
    for t in 0..mesh.num_triangles() {
        if !mesh.region(t).is_omega() {
            continue;
        }
        let tri = mesh.triangles()[t];
        let a = mesh.area(t);
        for i in 0..3 {
            for j in 0..3 {
                if let (Some(p), Some(q)) = (mesh.free_index(tri[i]), mesh.free_index(tri[j])) {
                    b.push(p, q, if i == j { a / 6.0 } else { a / 12.0 });
                }
            }
        }
    }
    b.build(mesh.num_free(), mesh.num_free())
}

/// Vector P1 H¹ inner product ∫_Ω V·W + DV : DW over free vector dofs
/// (dof 2i + c is component c at free node i).
pub fn assemble_regularizer(mesh: &Mesh) -> SparseOperator {
    let mut b = TripletBuilder::new();
    for t in 0..mesh.num_triangles() {
        if !mesh.region(t).is_omega() {
            continue;
        }
        let tri = mesh.triangles()[t];
        let a = mesh.area(t);
        let g = mesh.basis_gradients(t);
        for i in 0..3 {
            for j in 0..3 {
                let (Some(p), Some(q)) = (mesh.free_index(tri[i]), mesh.free_index(tri[j])) else {
                    continue;
                };
                let value = if i == j { a / 6.0 } else { a / 12.0 } + a * g[i].dot(&g[j]);
                for c in 0..2 {
                    b.push(2 * p + c, 2 * q + c, value);
                }
            }
        }
    }
    b.build(2 * mesh.num_free(), 2 * mesh.num_free())
}

/// Sample of the vector basis field e_c φ_k on triangle `tri` at barycentric point `bary`.
#[inline]
pub(crate) fn basis_sample(grad: &Vector2<f64>, bary_k: f64, c: usize) -> FieldSample {
    let mut s = FieldSample::ZERO;
    s.value[c] = bary_k;
    s.jacobian[(c, 0)] = grad.x;
    s.jacobian[(c, 1)] = grad.y;
    s
}
