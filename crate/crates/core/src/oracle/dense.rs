//! Dense brute-force quadrature of every assembled form, written from the
//! ordered double-integral definitions and the point-pair kernel terms.
//! Intended for meshes with a handful of triangles.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::fe::{DataOnMesh, FeFunction, FieldSample, Forcing, Space, VectorField};
use crate::kernel::{kernel_eval, psi_terms, t_terms, KernelSpec, PointPairContext};
use crate::mesh::{Mesh, Point, Region};
use crate::quadrature::{PairRules, Touch, TriangleRule};

/// How the double integrals are discretized.
pub enum PairQuadrature {
    /// Tensor product of a triangle rule on every ordered pair (bounded kernels).
    Tensor(TriangleRule),
    /// The pair rules of the assembler, applied to each unordered pair and
    /// mirrored for the reverse order.
    Shared(PairRules),
}

pub struct DenseOracle<'a> {
    pub mesh: &'a Mesh,
    pub spec: &'a KernelSpec,
    local: TriangleRule,
    pairs: PairQuadrature,
}

struct Sample {
    tri: usize,
    bary: [f64; 3],
    x: Point,
}

impl<'a> DenseOracle<'a> {
    /// Collapsed Gauss rules of `order` points per direction for both the
    /// single and the double integrals.
    pub fn new(mesh: &'a Mesh, spec: &'a KernelSpec, order: usize) -> Self {
        let rule = TriangleRule::collapsed_gauss(order);
        DenseOracle { mesh, spec, local: rule.clone(), pairs: PairQuadrature::Tensor(rule) }
    }

    pub fn with_pair_quadrature(mesh: &'a Mesh, spec: &'a KernelSpec, order: usize, pairs: PairQuadrature) -> Self {
        DenseOracle { mesh, spec, local: TriangleRule::collapsed_gauss(order), pairs }
    }

    fn sample(&self, tri: usize, bary: [f64; 3]) -> Sample {
        Sample { tri, bary, x: self.mesh.point_at(tri, &bary) }
    }

    /// ½ ∫∫ (v(x) − v(y))(u(x) q(x, y) − u(y) q(y, x)) over all ordered pairs,
    /// where `q` returns (q(x, y), q(y, x)) for a point-pair context carrying
    /// samples of `vf` and `wf`.
    fn double_integral(
        &self,
        u: &FeFunction,
        v: &FeFunction,
        vf: Option<&dyn VectorField>,
        wf: Option<&dyn VectorField>,
        q: &dyn Fn(&PointPairContext) -> Result<(f64, f64)>,
    ) -> Result<f64> {
        let mesh = self.mesh;
        let field = |f: Option<&dyn VectorField>, s: &Sample| match f {
            Some(f) => f.sample(mesh, s.tri, &s.bary, &s.x),
            None => FieldSample::ZERO,
        };
        let integrand = |sx: &Sample, sy: &Sample| -> Result<f64> {
            let (rx, ry) = (mesh.region(sx.tri), mesh.region(sy.tri));
            let ctx = PointPairContext {
                x: sx.x,
                y: sy.x,
                region_x: rx,
                region_y: ry,
                v_x: field(vf, sx),
                v_y: field(vf, sy),
                w_x: field(wf, sx),
                w_y: field(wf, sy),
            };
            let (qxy, qyx) = q(&ctx)?;
            let dv = v.eval_scalar(mesh, sx.tri, &sx.bary) - v.eval_scalar(mesh, sy.tri, &sy.bary);
            let e = u.eval_scalar(mesh, sx.tri, &sx.bary) * qxy - u.eval_scalar(mesh, sy.tri, &sy.bary) * qyx;
            Ok(0.5 * dv * e)
        };
        let n = mesh.num_triangles();
        let both_interaction =
            |a: usize, b: usize| mesh.region(a) == Region::Interaction && mesh.region(b) == Region::Interaction;
        let mut total = 0.0;
        match &self.pairs {
            PairQuadrature::Tensor(rule) => {
                for a in 0..n {
                    for b in 0..n {
                        if both_interaction(a, b) {
                            continue;
                        }
                        let scale = 4.0 * mesh.area(a) * mesh.area(b);
                        for (bx, wx) in rule.points.iter().zip(&rule.weights) {
                            let sx = self.sample(a, *bx);
                            for (by, wy) in rule.points.iter().zip(&rule.weights) {
                                let sy = self.sample(b, *by);
                                total += scale * wx * wy * integrand(&sx, &sy)?;
                            }
                        }
                    }
                }
            }
            PairQuadrature::Shared(rules) => {
                let tris = mesh.triangles();
                for a in 0..n {
                    for b in a..n {
                        if both_interaction(a, b) {
                            continue;
                        }
                        let scale = mesh.area(a) * mesh.area(b);
                        let touch = Touch::classify(&tris[a], &tris[b]);
                        for p in rules.rule(touch).iter() {
                            let (sx, sy) = (self.sample(a, p.bx), self.sample(b, p.by));
                            total += scale * p.w * integrand(&sx, &sy)?;
                            if a != b {
                                total += scale * p.w * integrand(&sy, &sx)?;
                            }
                        }
                    }
                }
            }
        }
        Ok(total)
    }

    /// A(u, v).
    pub fn bilinear(&self, u: &FeFunction, v: &FeFunction) -> Result<f64> {
        let spec = self.spec;
        self.double_integral(u, v, None, None, &|c| Ok((kernel_eval(spec, c)?, kernel_eval(spec, &c.swapped())?)))
    }

    /// 𝔄_V(u, v) with Ψ_V = Ψ¹ + Ψ².
    pub fn nonlocal_first(&self, field: &dyn VectorField, u: &FeFunction, v: &FeFunction) -> Result<f64> {
        let spec = self.spec;
        self.double_integral(u, v, Some(field), None, &|c| {
            let p = psi_terms(spec, c)?;
            Ok((p.psi1_xy + p.psi2_xy, p.psi1_yx + p.psi2_yx))
        })
    }

    /// Nonlocal part of the explicit second-order terms:
    /// T₁¹ + T₁² + Ψ_V·(div W(x) + div W(y)).
    pub fn nonlocal_second(
        &self,
        vf: &dyn VectorField,
        wf: &dyn VectorField,
        u: &FeFunction,
        v: &FeFunction,
    ) -> Result<f64> {
        let spec = self.spec;
        self.double_integral(u, v, Some(vf), Some(wf), &|c| {
            let t = t_terms(spec, c)?;
            let p = psi_terms(spec, c)?;
            let sw = c.w_x.div() + c.w_y.div();
            Ok((t.t11[0] + t.t12[0] + (p.psi1_xy + p.psi2_xy) * sw, t.t11[1] + t.t12[1] + (p.psi1_yx + p.psi2_yx) * sw))
        })
    }

    /// 𝔄_{DV·W}(u, v) through T₂¹ + T₂².
    pub fn nonlocal_transport(
        &self,
        vf: &dyn VectorField,
        wf: &dyn VectorField,
        u: &FeFunction,
        v: &FeFunction,
    ) -> Result<f64> {
        let spec = self.spec;
        self.double_integral(u, v, Some(vf), Some(wf), &|c| {
            let t = t_terms(spec, c)?;
            Ok((t.t21[0] + t.t22[0], t.t21[1] + t.t22[1]))
        })
    }

    /// ∫_Ω g over the Ω triangles with the oracle's triangle rule.
    fn omega_integral(&self, mut g: impl FnMut(&Sample, Region) -> f64) -> f64 {
        let mesh = self.mesh;
        let mut total = 0.0;
        for t in 0..mesh.num_triangles() {
            let region = mesh.region(t);
            if !region.is_omega() {
                continue;
            }
            let scale = 2.0 * mesh.area(t);
            for (b, w) in self.local.points.iter().zip(&self.local.weights) {
                total += scale * w * g(&self.sample(t, *b), region);
            }
        }
        total
    }

    /// ∫ f w.
    pub fn load(&self, forcing: &Forcing, w: &FeFunction) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, r| forcing.sample(r, &s.x).value * w.eval_scalar(mesh, s.tri, &s.bary))
    }

    /// −∫ (u − ū) w, the adjoint right-hand side.
    pub fn tracking_load(&self, u: &FeFunction, ubar: &DataOnMesh, w: &FeFunction) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, _| {
            let r = ubar.sample(mesh, s.tri, &s.bary, &s.x).value - u.eval_scalar(mesh, s.tri, &s.bary);
            r * w.eval_scalar(mesh, s.tri, &s.bary)
        })
    }

    /// ½∫ (u − ū)².
    pub fn tracking_value(&self, u: &FeFunction, ubar: &DataOnMesh) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, _| {
            let r = u.eval_scalar(mesh, s.tri, &s.bary) - ubar.sample(mesh, s.tri, &s.bary, &s.x).value;
            0.5 * r * r
        })
    }

    /// 𝔍_V: derivative of ½∫(u − ū∘F)² det DF with u held fixed.
    pub fn tracking_first(&self, field: &dyn VectorField, u: &FeFunction, ubar: &DataOnMesh) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, _| {
            let ub = ubar.sample(mesh, s.tri, &s.bary, &s.x);
            let r = u.eval_scalar(mesh, s.tri, &s.bary) - ub.value;
            let vs = field.sample(mesh, s.tri, &s.bary, &s.x);
            -r * ub.gradient.dot(&vs.value) + 0.5 * r * r * vs.div()
        })
    }

    /// 𝔉_V(w): derivative of ∫ (f∘F) w det DF.
    pub fn forcing_first(&self, field: &dyn VectorField, forcing: &Forcing, w: &FeFunction) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, region| {
            let f = forcing.sample(region, &s.x);
            let vs = field.sample(mesh, s.tri, &s.bary, &s.x);
            (f.gradient.dot(&vs.value) + f.value * vs.div()) * w.eval_scalar(mesh, s.tri, &s.bary)
        })
    }

    /// d_u𝔍_V[w].
    pub fn tracking_first_du(&self, field: &dyn VectorField, u: &FeFunction, ubar: &DataOnMesh, w: &FeFunction) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, _| {
            let ub = ubar.sample(mesh, s.tri, &s.bary, &s.x);
            let r = u.eval_scalar(mesh, s.tri, &s.bary) - ub.value;
            let vs = field.sample(mesh, s.tri, &s.bary, &s.x);
            (-ub.gradient.dot(&vs.value) + r * vs.div()) * w.eval_scalar(mesh, s.tri, &s.bary)
        })
    }

    /// Local explicit second-order terms: mixed derivative of
    /// ½(u − ū∘F)² det DF − (f∘F) v det DF along F = Id + aV + bW.
    #[allow(clippy::too_many_arguments)]
    pub fn local_second(
        &self,
        vf: &dyn VectorField,
        wf: &dyn VectorField,
        u: &FeFunction,
        v: &FeFunction,
        ubar: &DataOnMesh,
        forcing: &Forcing,
    ) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, region| {
            let ub = ubar.sample(mesh, s.tri, &s.bary, &s.x);
            let f = forcing.sample(region, &s.x);
            let r = u.eval_scalar(mesh, s.tri, &s.bary) - ub.value;
            let adj = v.eval_scalar(mesh, s.tri, &s.bary);
            let vs = vf.sample(mesh, s.tri, &s.bary, &s.x);
            let ws = wf.sample(mesh, s.tri, &s.bary, &s.x);
            // Derivatives of det(I + aDV + bDW) at 0.
            let (det_a, det_b) = (vs.div(), ws.div());
            let det_ab = vs.div() * ws.div() - (vs.jacobian * ws.jacobian).trace();
            // Derivatives of ū(x + aV + bW) and f(x + aV + bW).
            let (ub_a, ub_b) = (ub.gradient.dot(&vs.value), ub.gradient.dot(&ws.value));
            let ub_ab = vs.value.dot(&(ub.hessian * ws.value));
            let (f_a, f_b) = (f.gradient.dot(&vs.value), f.gradient.dot(&ws.value));
            let f_ab = vs.value.dot(&(f.hessian * ws.value));
            // g(a, b) = ½ R² with R = u − ū∘F: g_a = −R ub_a, g_ab = ub_a ub_b − R ub_ab.
            let tracking = (ub_a * ub_b - r * ub_ab) - r * ub_a * det_b - r * ub_b * det_a + 0.5 * r * r * det_ab;
            let forcing_term = adj * (f_ab + f_a * det_b + f_b * det_a + f.value * det_ab);
            tracking - forcing_term
        })
    }

    /// Local part of DJ[DV·W]: 𝔍_Z − 𝔉_Z(v) with Z = DV·W.
    pub fn local_transport(
        &self,
        vf: &dyn VectorField,
        wf: &dyn VectorField,
        u: &FeFunction,
        v: &FeFunction,
        ubar: &DataOnMesh,
        forcing: &Forcing,
    ) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, region| {
            let ub = ubar.sample(mesh, s.tri, &s.bary, &s.x);
            let f = forcing.sample(region, &s.x);
            let r = u.eval_scalar(mesh, s.tri, &s.bary) - ub.value;
            let adj = v.eval_scalar(mesh, s.tri, &s.bary);
            let vs = vf.sample(mesh, s.tri, &s.bary, &s.x);
            let ws = wf.sample(mesh, s.tri, &s.bary, &s.x);
            let z = vs.jacobian * ws.value;
            let div_z = vs.grad_div.dot(&ws.value) + (vs.jacobian * ws.jacobian).trace();
            let tracking = -r * ub.gradient.dot(&z) + 0.5 * r * r * div_z;
            tracking - adj * (f.gradient.dot(&z) + f.value * div_z)
        })
    }

    /// ∫ V·W + DV : DW.
    pub fn regularizer(&self, vf: &dyn VectorField, wf: &dyn VectorField) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, _| {
            let vs = vf.sample(mesh, s.tri, &s.bary, &s.x);
            let ws = wf.sample(mesh, s.tri, &s.bary, &s.x);
            vs.value.dot(&ws.value) + vs.jacobian.component_mul(&ws.jacobian).sum()
        })
    }

    /// ∫ v w.
    pub fn mass(&self, v: &FeFunction, w: &FeFunction) -> f64 {
        let mesh = self.mesh;
        self.omega_integral(|s, _| v.eval_scalar(mesh, s.tri, &s.bary) * w.eval_scalar(mesh, s.tri, &s.bary))
    }

    /// Scalar hat function of free node `k`.
    pub fn scalar_basis(&self, k: usize) -> FeFunction {
        let mut free = vec![0.0; self.mesh.num_free()];
        free[k] = 1.0;
        FeFunction::from_free(self.mesh, Space::ScalarP1, &free).expect("free basis")
    }

    /// Vector hat field of free vector dof `dof` (2·node + component).
    pub fn vector_basis(&self, dof: usize) -> FeFunction {
        let mut free = vec![0.0; 2 * self.mesh.num_free()];
        free[dof] = 1.0;
        FeFunction::from_free(self.mesh, Space::VectorP1, &free).expect("free basis")
    }

    /// Stiffness matrix with entry (i, j) = A(φ_j, φ_i).
    pub fn stiffness_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.mesh.num_free();
        let basis: Vec<FeFunction> = (0..n).map(|k| self.scalar_basis(k)).collect();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = self.bilinear(&basis[j], &basis[i])?;
            }
        }
        Ok(a)
    }

    pub fn load_vector(&self, forcing: &Forcing) -> Vec<f64> {
        (0..self.mesh.num_free()).map(|k| self.load(forcing, &self.scalar_basis(k))).collect()
    }

    pub fn tracking_load_vector(&self, u: &FeFunction, ubar: &DataOnMesh) -> Vec<f64> {
        (0..self.mesh.num_free()).map(|k| self.tracking_load(u, ubar, &self.scalar_basis(k))).collect()
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let n = self.mesh.num_free();
        let basis: Vec<FeFunction> = (0..n).map(|k| self.scalar_basis(k)).collect();
        DMatrix::from_fn(n, n, |i, j| self.mass(&basis[i], &basis[j]))
    }

    pub fn regularizer_matrix(&self) -> DMatrix<f64> {
        let n = 2 * self.mesh.num_free();
        let basis: Vec<FeFunction> = (0..n).map(|k| self.vector_basis(k)).collect();
        DMatrix::from_fn(n, n, |i, j| self.regularizer(&basis[i], &basis[j]))
    }
}
