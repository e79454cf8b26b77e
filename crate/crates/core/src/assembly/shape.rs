//! Shape-derivative forms over the vector P1 basis fields e_c φ_k, assembled
//! in a single sweep. For each active basis field V_a this produces the
//! first-derivative parts (𝔍, 𝔉, 𝔄), the linearizations
//! G1[a,k] = 𝔄_a(u, φ_k) − 𝔉_a(φ_k) and G2[a,k] = 𝔄_a(φ_k, v) + d_u𝔍_a[φ_k],
//! and the explicit second-order block h[a,b] (local and nonlocal terms
//! without the adjoint couplings).

use nalgebra::{DMatrix, Vector2};

use super::local::{basis_sample, du_j_factor, f_first_factor, for_each_local_point, j_first, local_second, LocalData};
use super::nonlocal::{test_weights, trial_weights};
use super::{check_scalar, dot3, tri_values, Assembler, Merge, StateData};
use crate::error::Result;
use crate::kernel::KernelClass;
use crate::mesh::Mesh;

/// A subset of the vector dofs (dof 2i + c = component c at free node i).
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveDofs {
    dofs: Vec<usize>,
    lookup: Vec<Option<usize>>,
}

impl ActiveDofs {
    /// Both components of every free node flagged in `node_mask`.
    pub fn from_node_mask(mesh: &Mesh, node_mask: &[bool]) -> Self {
        let mut dofs = Vec::new();
        for (i, &node) in mesh.free_nodes().iter().enumerate() {
            if node_mask[node] {
                dofs.push(2 * i);
                dofs.push(2 * i + 1);
            }
        }
        Self::from_dofs(mesh, dofs)
    }

    /// Every free vector dof.
    pub fn all(mesh: &Mesh) -> Self {
        Self::from_dofs(mesh, (0..2 * mesh.num_free()).collect())
    }

    pub fn from_dofs(mesh: &Mesh, dofs: Vec<usize>) -> Self {
        let mut lookup = vec![None; 2 * mesh.num_free()];
        for (a, &d) in dofs.iter().enumerate() {
            lookup[d] = Some(a);
        }
        ActiveDofs { dofs, lookup }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// Global vector dof of active index `a`.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn index_of(&self, dof: usize) -> Option<usize> {
        self.lookup[dof]
    }

    fn node_component(&self, mesh: &Mesh, node: usize, c: usize) -> Option<usize> {
        mesh.free_index(node).and_then(|i| self.lookup[2 * i + c])
    }
}

/// Shape-derivative data over the active basis fields.
#[derive(Clone, Debug)]
pub struct ShapeMatrices {
    pub tracking: Vec<f64>,
    pub forcing: Vec<f64>,
    pub nonlocal: Vec<f64>,
    /// Active × free-node.
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    /// Active × active explicit second-order part (zero unless requested).
    pub h: DMatrix<f64>,
}

impl ShapeMatrices {
    fn zeros(nact: usize, nfree: usize, second: bool) -> Self {
        let hn = if second { nact } else { 0 };
        ShapeMatrices {
            tracking: vec![0.0; nact],
            forcing: vec![0.0; nact],
            nonlocal: vec![0.0; nact],
            g1: DMatrix::zeros(nact, nfree),
            g2: DMatrix::zeros(nact, nfree),
            h: DMatrix::zeros(hn, hn),
        }
    }

    /// 𝔍_a − 𝔉_a + 𝔄_a(u, v).
    pub fn first_derivative(&self) -> Vec<f64> {
        (0..self.tracking.len()).map(|a| self.tracking[a] - self.forcing[a] + self.nonlocal[a]).collect()
    }
}

impl Merge for ShapeMatrices {
    fn merge(&mut self, other: Self) {
        self.tracking.merge(other.tracking);
        self.forcing.merge(other.forcing);
        self.nonlocal.merge(other.nonlocal);
        self.g1 += other.g1;
        self.g2 += other.g2;
        self.h += other.h;
    }
}

/// Per-slot data of a triangle pair: six node slots (T then T'), two components each.
struct Slots {
    active: [Option<usize>; 12],
    free: [Option<usize>; 6],
    grads: [Vector2<f64>; 6],
}

impl Slots {
    fn new(mesh: &Mesh, active: &ActiveDofs, tx: usize, ty: usize) -> Self {
        let (a, b) = (mesh.triangles()[tx], mesh.triangles()[ty]);
        let nodes = [a[0], a[1], a[2], b[0], b[1], b[2]];
        let (ga, gb) = (mesh.basis_gradients(tx), mesh.basis_gradients(ty));
        let grads = [ga[0], ga[1], ga[2], gb[0], gb[1], gb[2]];
        let mut act = [None; 12];
        for (s, &n) in nodes.iter().enumerate() {
            for c in 0..2 {
                act[2 * s + c] = active.node_component(mesh, n, c);
            }
        }
        Slots { active: act, free: nodes.map(|n| mesh.free_index(n)), grads }
    }

    fn any_active(&self) -> bool {
        self.active.iter().any(Option::is_some)
    }
}

impl Assembler<'_> {
    /// Assemble [`ShapeMatrices`] for the given active basis fields.
    pub fn shape_matrices(&self, state: &StateData, active: &ActiveDofs, second: bool) -> Result<ShapeMatrices> {
        let mesh = self.mesh;
        check_scalar(mesh, state.u, "u")?;
        check_scalar(mesh, state.v, "v")?;
        let (nact, nfree) = (active.len(), mesh.num_free());
        let mut out = ShapeMatrices::zeros(nact, nfree, second);
        self.local_part(state, active, second, &mut out);
        let nonlocal = self.fold_pairs(
            |p| Slots::new(mesh, active, p.tx, p.ty).any_active(),
            || ShapeMatrices::zeros(nact, nfree, second),
            |acc, pair| self.pair_part(state, active, second, pair, acc),
        );
        out.merge(nonlocal);
        Ok(out)
    }

    fn local_part(&self, state: &StateData, active: &ActiveDofs, second: bool, out: &mut ShapeMatrices) {
        let mesh = self.mesh;
        for t in 0..mesh.num_triangles() {
            let slots = Slots::new(mesh, active, t, t);
            if !slots.active[..6].iter().any(Option::is_some) {
                continue;
            }
            let (u, v) = (tri_values(mesh, state.u, t), tri_values(mesh, state.v, t));
            for_each_local_point(mesh, self.triangle_rule(), t, |p| {
                let d = LocalData::at(mesh, p, &u, &v, state.ubar, state.forcing);
                let mut samples = [None; 6];
                for s in 0..3 {
                    for c in 0..2 {
                        if let Some(a) = slots.active[2 * s + c] {
                            samples[2 * s + c] = Some((a, basis_sample(&slots.grads[s], p.bary[s], c)));
                        }
                    }
                }
                for (a, sa) in samples.iter().flatten() {
                    let (a, sa) = (*a, sa);
                    out.tracking[a] += p.w * j_first(&d, sa);
                    let ff = f_first_factor(&d, sa);
                    out.forcing[a] += p.w * d.v * ff;
                    let dj = du_j_factor(&d, sa);
                    for m in 0..3 {
                        if let Some(k) = slots.free[m] {
                            out.g1[(a, k)] -= p.w * p.bary[m] * ff;
                            out.g2[(a, k)] += p.w * p.bary[m] * dj;
                        }
                    }
                    if second {
                        for (b, sb) in samples.iter().flatten() {
                            out.h[(a, *b)] += p.w * local_second(&d, sa, sb);
                        }
                    }
                }
            });
        }
    }

    fn pair_part(
        &self,
        state: &StateData,
        active: &ActiveDofs,
        second: bool,
        pair: &super::TrianglePair,
        acc: &mut ShapeMatrices,
    ) {
        let mesh = self.mesh;
        let slots = Slots::new(mesh, active, pair.tx, pair.ty);
        let (ux, uy) = (tri_values(mesh, state.u, pair.tx), tri_values(mesh, state.u, pair.ty));
        let (vx, vy) = (tri_values(mesh, state.v, pair.tx), tri_values(mesh, state.v, pair.ty));
        let list: Vec<(usize, usize)> = (0..12).filter_map(|i| slots.active[i].map(|a| (i, a))).collect();
        // D_i = ∂_c φ_ℓ on the slot's own triangle.
        let div: Vec<f64> = list.iter().map(|&(i, _)| slots.grads[i / 2][i % 2]).collect();
        let singular = self.spec.class == KernelClass::SingularSymmetric;
        let n = list.len();
        let mut k_sum = 0.0;
        let mut g_sum = vec![0.0; n];
        let mut h_sum = if second && singular { vec![0.0; n * n] } else { Vec::new() };
        let mut psi = vec![0.0; n];
        self.for_each_point(pair, |p| {
            let dv = dot3(&vx, &p.bx) - dot3(&vy, &p.by);
            let eu = p.s_xy * dot3(&ux, &p.bx) - p.s_yx * dot3(&uy, &p.by);
            let d = test_weights(p);
            let e = trial_weights(p);
            let base = p.w * dv * eu;
            for (j, &(i, _)) in list.iter().enumerate() {
                psi[j] = p.k.grad[i % 2] * d[i / 2] + p.k.value * div[j];
            }
            for (j, &(_, a)) in list.iter().enumerate() {
                let q = p.w * psi[j];
                acc.nonlocal[a] += base * psi[j];
                for m in 0..6 {
                    if let Some(kf) = slots.free[m] {
                        acc.g1[(a, kf)] += q * d[m] * eu;
                        acc.g2[(a, kf)] += q * dv * e[m];
                    }
                }
            }
            if second {
                k_sum += base * p.k.value;
                for (j, &(i, _)) in list.iter().enumerate() {
                    g_sum[j] += base * p.k.grad[i % 2] * d[i / 2];
                }
                if singular {
                    for (j, &(i, _)) in list.iter().enumerate() {
                        let bi = base * d[i / 2];
                        for (l, &(i2, _)) in list.iter().enumerate() {
                            h_sum[j * n + l] += bi * p.k.hess[(i % 2, i2 % 2)] * d[i2 / 2];
                        }
                    }
                }
            }
        });
        if !second {
            return;
        }
        for (j, &(i, a)) in list.iter().enumerate() {
            for (l, &(i2, b)) in list.iter().enumerate() {
                let (s1, s2) = (i / 2, i2 / 2);
                let same_side = (s1 < 3) == (s2 < 3);
                let trace = if same_side { slots.grads[s1][i2 % 2] * slots.grads[s2][i % 2] } else { 0.0 };
                let mut value = g_sum[j] * div[l] + g_sum[l] * div[j] + k_sum * (div[j] * div[l] - trace);
                if singular {
                    value += h_sum[j * n + l];
                }
                acc.h[(a, b)] += value;
            }
        }
    }
}
