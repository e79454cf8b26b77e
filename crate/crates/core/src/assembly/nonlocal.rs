//! Nonlocal double-integral forms: the stiffness matrix and the shape
//! derivative forms for general vector fields (pointwise field samples).

use super::local::{du_j_factor, f_first_factor, for_each_local_point, j_first, local_second, LocalData};
use super::{
    check_scalar, dot3, psi_hat, sparse::TripletBuilder, tri_values, Assembler, PairPoint, SparseOperator, StateData,
};
use crate::error::Result;
use crate::fe::{FeFunction, FieldSample, JacobianProduct, VectorField};
use crate::kernel::{KernelSpec, RadialJet};
use crate::mesh::Mesh;

/// A_ij = A(φ_j, φ_i) over free nodes.
pub fn assemble_stiffness(mesh: &Mesh, spec: &KernelSpec) -> Result<SparseOperator> {
    Ok(Assembler::new(mesh, spec)?.stiffness())
}

/// Stiffness over all nodes, including the constrained ones.
pub fn assemble_stiffness_extended(mesh: &Mesh, spec: &KernelSpec) -> Result<SparseOperator> {
    Ok(Assembler::new(mesh, spec)?.stiffness_extended())
}

impl Assembler<'_> {
    pub fn stiffness(&self) -> SparseOperator {
        let n = self.mesh.num_free();
        self.stiffness_with(|node| self.mesh.free_index(node), n)
    }

    pub fn stiffness_extended(&self) -> SparseOperator {
        let n = self.mesh.num_vertices();
        self.stiffness_with(Some, n)
    }

    fn stiffness_with(&self, dof: impl Fn(usize) -> Option<usize> + Sync, n: usize) -> SparseOperator {
        let mesh = self.mesh;
        let builder = self
            .fold_pairs(
                |_| true,
                TripletWrap::default,
                |acc, pair| {
                    let (tx, ty) = (mesh.triangles()[pair.tx], mesh.triangles()[pair.ty]);
                    let nodes = [tx[0], tx[1], tx[2], ty[0], ty[1], ty[2]];
                    let dofs: [Option<usize>; 6] = nodes.map(&dof);
                    if dofs.iter().all(Option::is_none) {
                        return;
                    }
                    let mut local = [[0.0; 6]; 6];
                    self.for_each_point(pair, |p| {
                        let d = test_weights(p);
                        let e = trial_weights(p);
                        let scale = p.w * p.k.value;
                        for i in 0..6 {
                            let di = scale * d[i];
                            for j in 0..6 {
                                local[i][j] += di * e[j];
                            }
                        }
                    });
                    for i in 0..6 {
                        let Some(r) = dofs[i] else { continue };
                        for j in 0..6 {
                            if let Some(c) = dofs[j] {
                                acc.0.push(r, c, local[i][j]);
                            }
                        }
                    }
                },
            )
            .0;
        builder.build(n, n)
    }
}

#[derive(Default)]
pub(crate) struct TripletWrap(pub TripletBuilder);

impl super::Merge for TripletWrap {
    fn merge(&mut self, other: Self) {
        self.0.append(other.0);
    }
}

/// φ_k(x) − φ_k(y) for the six local nodes (three of T, then three of T').
#[inline]
pub(crate) fn test_weights(p: &PairPoint) -> [f64; 6] {
    [p.bx[0], p.bx[1], p.bx[2], -p.by[0], -p.by[1], -p.by[2]]
}

/// σ(x,y)φ_k(x) − σ(y,x)φ_k(y) for the six local nodes.
#[inline]
pub(crate) fn trial_weights(p: &PairPoint) -> [f64; 6] {
    [p.s_xy * p.bx[0], p.s_xy * p.bx[1], p.s_xy * p.bx[2], -p.s_yx * p.by[0], -p.s_yx * p.by[1], -p.s_yx * p.by[2]]
}

/// Radial second-order factor: Ψ-derivative terms T₁¹ + T₁² plus the coupling
/// Ψ_V·(div W(x) + div W(y)), divided by the region coefficient.
#[inline]
pub(crate) fn h_hat(k: &RadialJet, vx: &FieldSample, vy: &FieldSample, wx: &FieldSample, wy: &FieldSample) -> f64 {
    let dv = vx.value - vy.value;
    let dw = wx.value - wy.value;
    let (sv, sw) = (vx.div() + vy.div(), wx.div() + wy.div());
    let traces = (vx.jacobian * wx.jacobian).trace() + (vy.jacobian * wy.jacobian).trace();
    dv.dot(&(k.hess * dw)) + k.grad.dot(&dv) * sw + k.grad.dot(&dw) * sv + k.value * (sv * sw - traces)
}

/// The three scalars of the first shape derivative: DJ[V] = 𝔍 − 𝔉 + 𝔄.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeResiduals {
    pub tracking: f64,
    pub forcing: f64,
    pub nonlocal: f64,
}

impl ShapeResiduals {
    pub fn total(&self) -> f64 {
        self.tracking - self.forcing + self.nonlocal
    }
}

/// J″[V, W] (linear second derivative without perimeter) and DJ[DV·W].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondOrderForms {
    pub second: f64,
    pub transport: f64,
}

/// (𝔍, 𝔉, 𝔄) for a vector field V.
pub fn assemble_shape_residuals(asm: &Assembler, field: &dyn VectorField, state: &StateData) -> Result<ShapeResiduals> {
    let mesh = asm.mesh;
    check_scalar(mesh, state.u, "u")?;
    check_scalar(mesh, state.v, "v")?;
    let (mut tracking, mut forcing) = (0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let (u, v) = (tri_values(mesh, state.u, t), tri_values(mesh, state.v, t));
        for_each_local_point(mesh, asm.triangle_rule(), t, |p| {
            let d = LocalData::at(mesh, p, &u, &v, state.ubar, state.forcing);
            let vs = field.sample(mesh, t, &p.bary, &p.x);
            tracking += p.w * j_first(&d, &vs);
            forcing += p.w * d.v * f_first_factor(&d, &vs);
        });
    }
    let nonlocal = nonlocal_first(asm, field, state.u, state.v);
    Ok(ShapeResiduals { tracking, forcing, nonlocal })
}

/// 𝔄_V(u, v) = ½∬(v(x) − v(y))(u(x)Ψ_V(x,y) − u(y)Ψ_V(y,x)).
pub(crate) fn nonlocal_first(asm: &Assembler, field: &dyn VectorField, u: &FeFunction, v: &FeFunction) -> f64 {
    let mesh = asm.mesh;
    asm.fold_pairs(
        |_| true,
        || 0.0,
        |acc, pair| {
            let (ux, uy) = (tri_values(mesh, u, pair.tx), tri_values(mesh, u, pair.ty));
            let (vx, vy) = (tri_values(mesh, v, pair.tx), tri_values(mesh, v, pair.ty));
            asm.for_each_point(pair, |p| {
                let dv = dot3(&vx, &p.bx) - dot3(&vy, &p.by);
                let eu = p.s_xy * dot3(&ux, &p.bx) - p.s_yx * dot3(&uy, &p.by);
                if dv == 0.0 || eu == 0.0 {
                    return;
                }
                let sx = field.sample(mesh, pair.tx, &p.bx, &p.x);
                let sy = field.sample(mesh, pair.ty, &p.by, &p.y);
                *acc += p.w * dv * eu * psi_hat(&p.k, &(sx.value - sy.value), sx.div() + sy.div());
            });
        },
    )
}

/// Linear second shape derivative J″[V, W] (tracking, forcing, nonlocal and
/// adjoint-coupled terms; no perimeter) and the transport term DJ[DV·W].
/// `psi` and `phi` are the averaged adjoints for the direction V.
pub fn assemble_second_order_forms(
    asm: &Assembler,
    vfield: &dyn VectorField,
    wfield: &dyn VectorField,
    state: &StateData,
    psi: &FeFunction,
    phi: &FeFunction,
) -> Result<SecondOrderForms> {
    let mesh = asm.mesh;
    for (f, name) in [(state.u, "u"), (state.v, "v"), (psi, "psi"), (phi, "phi")] {
        check_scalar(mesh, f, name)?;
    }
    let mut local = 0.0;
    for t in 0..mesh.num_triangles() {
        let (u, v) = (tri_values(mesh, state.u, t), tri_values(mesh, state.v, t));
        let (ps, ph) = (tri_values(mesh, psi, t), tri_values(mesh, phi, t));
        for_each_local_point(mesh, asm.triangle_rule(), t, |p| {
            let d = LocalData::at(mesh, p, &u, &v, state.ubar, state.forcing);
            let vs = vfield.sample(mesh, t, &p.bary, &p.x);
            let ws = wfield.sample(mesh, t, &p.bary, &p.x);
            let adjoint = -dot3(&ps, &p.bary) * f_first_factor(&d, &ws) + dot3(&ph, &p.bary) * du_j_factor(&d, &ws);
            local += p.w * (local_second(&d, &vs, &ws) + adjoint);
        });
    }
    let nonlocal = asm.fold_pairs(
        |_| true,
        || 0.0,
        |acc, pair| {
            let vals = |f: &FeFunction| (tri_values(mesh, f, pair.tx), tri_values(mesh, f, pair.ty));
            let (ux, uy) = vals(state.u);
            let (vx, vy) = vals(state.v);
            let (psx, psy) = vals(psi);
            let (phx, phy) = vals(phi);
            asm.for_each_point(pair, |p| {
                let dv = dot3(&vx, &p.bx) - dot3(&vy, &p.by);
                let eu = p.s_xy * dot3(&ux, &p.bx) - p.s_yx * dot3(&uy, &p.by);
                let dpsi = dot3(&psx, &p.bx) - dot3(&psy, &p.by);
                let ephi = p.s_xy * dot3(&phx, &p.bx) - p.s_yx * dot3(&phy, &p.by);
                let sv = (vfield.sample(mesh, pair.tx, &p.bx, &p.x), vfield.sample(mesh, pair.ty, &p.by, &p.y));
                let sw = (wfield.sample(mesh, pair.tx, &p.bx, &p.x), wfield.sample(mesh, pair.ty, &p.by, &p.y));
                let hh = h_hat(&p.k, &sv.0, &sv.1, &sw.0, &sw.1);
                let pw = psi_hat(&p.k, &(sw.0.value - sw.1.value), sw.0.div() + sw.1.div());
                *acc += p.w * (dv * eu * hh + (dpsi * eu + dv * ephi) * pw);
            });
        },
    );
    let z = JacobianProduct { v: vfield, w: wfield };
    let transport = assemble_shape_residuals(asm, &z, state)?.total();
    Ok(SecondOrderForms { second: local + nonlocal, transport })
}

/// Right-hand sides of the averaged adjoint equations for the direction V,
/// over free nodes: (𝔉_V(φ_k) − 𝔄_V(u, φ_k), −d_u𝔍_V[φ_k] − 𝔄_V(φ_k, v)).
/// The −M·φ contribution of the second system is added by the solver.
pub fn averaged_adjoint_rhs(
    asm: &Assembler,
    field: &dyn VectorField,
    state: &StateData,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mesh = asm.mesh;
    check_scalar(mesh, state.u, "u")?;
    check_scalar(mesh, state.v, "v")?;
    let n = mesh.num_free();
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles()[t];
        let (u, v) = (tri_values(mesh, state.u, t), tri_values(mesh, state.v, t));
        for_each_local_point(mesh, asm.triangle_rule(), t, |p| {
            let d = LocalData::at(mesh, p, &u, &v, state.ubar, state.forcing);
            let vs = field.sample(mesh, t, &p.bary, &p.x);
            let (ff, dj) = (f_first_factor(&d, &vs), du_j_factor(&d, &vs));
            for k in 0..3 {
                if let Some(i) = mesh.free_index(tri[k]) {
                    first[i] += p.w * p.bary[k] * ff;
                    second[i] -= p.w * p.bary[k] * dj;
                }
            }
        });
    }
    let (a_first, a_second) = asm.fold_pairs(
        |_| true,
        || (vec![0.0; n], vec![0.0; n]),
        |acc, pair| {
            let (tx, ty) = (mesh.triangles()[pair.tx], mesh.triangles()[pair.ty]);
            let nodes = [tx[0], tx[1], tx[2], ty[0], ty[1], ty[2]];
            let dofs = nodes.map(|k| mesh.free_index(k));
            if dofs.iter().all(Option::is_none) {
                return;
            }
            let (ux, uy) = (tri_values(mesh, state.u, pair.tx), tri_values(mesh, state.u, pair.ty));
            let (vx, vy) = (tri_values(mesh, state.v, pair.tx), tri_values(mesh, state.v, pair.ty));
            asm.for_each_point(pair, |p| {
                let sx = field.sample(mesh, pair.tx, &p.bx, &p.x);
                let sy = field.sample(mesh, pair.ty, &p.by, &p.y);
                let q = p.w * psi_hat(&p.k, &(sx.value - sy.value), sx.div() + sy.div());
                if q == 0.0 {
                    return;
                }
                let dv = dot3(&vx, &p.bx) - dot3(&vy, &p.by);
                let eu = p.s_xy * dot3(&ux, &p.bx) - p.s_yx * dot3(&uy, &p.by);
                let (d, e) = (test_weights(p), trial_weights(p));
                for m in 0..6 {
                    if let Some(i) = dofs[m] {
                        acc.0[i] += q * d[m] * eu;
                        acc.1[i] += q * dv * e[m];
                    }
                }
            });
        },
    );
    for i in 0..n {
        first[i] -= a_first[i];
        second[i] -= a_second[i];
    }
    Ok((first, second))
}
