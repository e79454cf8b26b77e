//! P1 finite-element functions, sampled fields, data ū and forcing f.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{Locator, Mesh, Point, Region};

/// Scalar or vector (two-component) continuous P1 space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    ScalarP1,
    VectorP1,
}

impl Space {
    pub fn components(self) -> usize {
        match self {
            Space::ScalarP1 => 1,
            Space::VectorP1 => 2,
        }
    }
}

/// Nodal coefficients of a P1 function; zero on constrained nodes.
///
/// Vector coefficients are interleaved: `[x₀, y₀, x₁, y₁, …]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeFunction {
    space: Space,
    coeffs: Vec<f64>,
    constrained: Vec<bool>,
}

impl FeFunction {
    pub fn zeros(mesh: &Mesh, space: Space) -> Self {
        FeFunction {
            space,
            coeffs: vec![0.0; space.components() * mesh.num_vertices()],
            constrained: mesh.constrained().to_vec(),
        }
    }

    /// Wrap nodal coefficients, checking the constraint.
    pub fn from_nodal(mesh: &Mesh, space: Space, coeffs: Vec<f64>) -> Result<Self> {
        let k = space.components();
        if coeffs.len() != k * mesh.num_vertices() {
            return Err(Error::Dimension(format!(
                "expected {} coefficients, got {}",
                k * mesh.num_vertices(),
                coeffs.len()
            )));
        }
        for (i, &fixed) in mesh.constrained().iter().enumerate() {
            if fixed && coeffs[k * i..k * i + k].iter().any(|&c| c != 0.0) {
                return Err(Error::Constraint(format!("coefficient at constrained node {i} is nonzero")));
            }
        }
        Ok(FeFunction { space, coeffs, constrained: mesh.constrained().to_vec() })
    }

    /// Expand a vector over free dofs (scalar: one per free node; vector:
    /// two per free node, interleaved) to nodal coefficients.
    pub fn from_free(mesh: &Mesh, space: Space, free: &[f64]) -> Result<Self> {
        let k = space.components();
        if free.len() != k * mesh.num_free() {
            return Err(Error::Dimension(format!("expected {} free values, got {}", k * mesh.num_free(), free.len())));
        }
        let mut f = FeFunction::zeros(mesh, space);
        for (d, &node) in mesh.free_nodes().iter().enumerate() {
            for c in 0..k {
                f.coeffs[k * node + c] = free[k * d + c];
            }
        }
        Ok(f)
    }

    /// Interpolate a closure at the free nodes.
    pub fn interpolate_scalar(mesh: &Mesh, f: impl Fn(&Point) -> f64) -> Self {
        let mut out = FeFunction::zeros(mesh, Space::ScalarP1);
        for &n in mesh.free_nodes() {
            out.coeffs[n] = f(&mesh.vertices()[n]);
        }
        out
    }

    /// Interpolate a vector closure at the free nodes.
    pub fn interpolate_vector(mesh: &Mesh, f: impl Fn(&Point) -> Vector2<f64>) -> Self {
        let mut out = FeFunction::zeros(mesh, Space::VectorP1);
        for &n in mesh.free_nodes() {
            let v = f(&mesh.vertices()[n]);
            out.coeffs[2 * n] = v.x;
            out.coeffs[2 * n + 1] = v.y;
        }
        out
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    /// Values at free dofs, in dof order.
    pub fn free_values(&self, mesh: &Mesh) -> Vec<f64> {
        let k = self.space.components();
        let mut out = Vec::with_capacity(k * mesh.num_free());
        for &node in mesh.free_nodes() {
            out.extend_from_slice(&self.coeffs[k * node..k * node + k]);
        }
        out
    }

    /// Scalar value at a node.
    pub fn node_value(&self, node: usize) -> f64 {
        self.coeffs[node]
    }

    /// Vector value at a node.
    pub fn node_vector(&self, node: usize) -> Vector2<f64> {
        Vector2::new(self.coeffs[2 * node], self.coeffs[2 * node + 1])
    }

    /// Scalar value at barycentric point of a triangle.
    pub fn eval_scalar(&self, mesh: &Mesh, tri: usize, bary: &[f64; 3]) -> f64 {
        let t = mesh.triangles()[tri];
        bary[0] * self.coeffs[t[0]] + bary[1] * self.coeffs[t[1]] + bary[2] * self.coeffs[t[2]]
    }

    pub fn scale(&self, s: f64) -> Self {
        FeFunction { coeffs: self.coeffs.iter().map(|c| c * s).collect(), ..self.clone() }
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &FeFunction) -> Self {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + s * b).collect();
        FeFunction { coeffs, ..self.clone() }
    }
}

/// Value, Jacobian, divergence and gradient of divergence of a vector field at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub value: Vector2<f64>,
    pub jacobian: Matrix2<f64>,
    pub grad_div: Vector2<f64>,
}

impl FieldSample {
    pub const ZERO: FieldSample = FieldSample {
        value: Vector2::new(0.0, 0.0),
        jacobian: Matrix2::new(0.0, 0.0, 0.0, 0.0),
        grad_div: Vector2::new(0.0, 0.0),
    };

    pub fn div(&self) -> f64 {
        self.jacobian.trace()
    }

    /// div(DV·W) = ∇divV·W + tr(DV DW).
    pub fn div_of_jac_times(&self, w: &FieldSample) -> f64 {
        self.grad_div.dot(&w.value) + (self.jacobian * w.jacobian).trace()
    }
}

/// A vector field that can be sampled inside mesh triangles.
pub trait VectorField: Sync {
    fn sample(&self, mesh: &Mesh, tri: usize, bary: &[f64; 3], x: &Point) -> FieldSample;
}

impl VectorField for FeFunction {
    fn sample(&self, mesh: &Mesh, tri: usize, bary: &[f64; 3], _x: &Point) -> FieldSample {
        debug_assert_eq!(self.space, Space::VectorP1);
        let t = mesh.triangles()[tri];
        let g = mesh.basis_gradients(tri);
        let mut value = Vector2::zeros();
        let mut jacobian = Matrix2::zeros();
        for k in 0..3 {
            let v = self.node_vector(t[k]);
            value += v * bary[k];
            jacobian += v * g[k].transpose();
        }
        FieldSample { value, jacobian, grad_div: Vector2::zeros() }
    }
}

type VecFn = dyn Fn(&Point) -> Vector2<f64> + Send + Sync;
type JacFn = dyn Fn(&Point) -> Matrix2<f64> + Send + Sync;

/// A smooth vector field given by closures (value, Jacobian, ∇ div).
pub struct SmoothVectorField {
    value: Box<VecFn>,
    jacobian: Box<JacFn>,
    grad_div: Box<VecFn>,
}

impl SmoothVectorField {
    pub fn new(
        value: impl Fn(&Point) -> Vector2<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&Point) -> Matrix2<f64> + Send + Sync + 'static,
        grad_div: impl Fn(&Point) -> Vector2<f64> + Send + Sync + 'static,
    ) -> Self {
        SmoothVectorField { value: Box::new(value), jacobian: Box::new(jacobian), grad_div: Box::new(grad_div) }
    }

    pub fn value(&self, x: &Point) -> Vector2<f64> {
        (self.value)(x)
    }

    pub fn at(&self, x: &Point) -> FieldSample {
        FieldSample { value: (self.value)(x), jacobian: (self.jacobian)(x), grad_div: (self.grad_div)(x) }
    }
}

impl VectorField for SmoothVectorField {
    fn sample(&self, _mesh: &Mesh, _tri: usize, _bary: &[f64; 3], x: &Point) -> FieldSample {
        self.at(x)
    }
}

/// The field x ↦ DV(x)·W(x), sampled pointwise (no interpolation).
pub struct JacobianProduct<'a> {
    pub v: &'a dyn VectorField,
    pub w: &'a dyn VectorField,
}

impl VectorField for JacobianProduct<'_> {
    fn sample(&self, mesh: &Mesh, tri: usize, bary: &[f64; 3], x: &Point) -> FieldSample {
        let v = self.v.sample(mesh, tri, bary, x);
        let w = self.w.sample(mesh, tri, bary, x);
        // Only value and divergence enter the first-derivative forms. The
        // Jacobian is filled so that its trace is div(DV·W).
        let div = v.div_of_jac_times(&w);
        FieldSample {
            value: v.jacobian * w.value,
            jacobian: Matrix2::new(div, 0.0, 0.0, 0.0),
            grad_div: Vector2::zeros(),
        }
    }
}

/// A smooth scalar function with gradient and Hessian.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Vector2<f64>;
    fn hessian(&self, x: &Point) -> Matrix2<f64>;
}

/// Closure-backed [`ScalarField`].
pub struct FnScalarField<F, G, H> {
    pub value: F,
    pub gradient: G,
    pub hessian: H,
}

impl<F, G, H> ScalarField for FnScalarField<F, G, H>
where
    F: Fn(&Point) -> f64 + Send + Sync,
    G: Fn(&Point) -> Vector2<f64> + Send + Sync,
    H: Fn(&Point) -> Matrix2<f64> + Send + Sync,
{
    fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Point) -> Vector2<f64> {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &Point) -> Matrix2<f64> {
        (self.hessian)(x)
    }
}

/// ū(x) = c₀ + c₁x₁ + c₂x₂ + c₃x₁² + c₄x₁x₂ + c₅x₂².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadratic(pub [f64; 6]);

impl ScalarField for Quadratic {
    fn value(&self, x: &Point) -> f64 {
        let c = &self.0;
        c[0] + c[1] * x.x + c[2] * x.y + c[3] * x.x * x.x + c[4] * x.x * x.y + c[5] * x.y * x.y
    }
    fn gradient(&self, x: &Point) -> Vector2<f64> {
        let c = &self.0;
        Vector2::new(c[1] + 2.0 * c[3] * x.x + c[4] * x.y, c[2] + c[4] * x.x + 2.0 * c[5] * x.y)
    }
    fn hessian(&self, _x: &Point) -> Matrix2<f64> {
        let c = &self.0;
        Matrix2::new(2.0 * c[3], c[4], c[4], 2.0 * c[5])
    }
}

/// Scalar value with first and second derivatives at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarSample {
    pub value: f64,
    pub gradient: Vector2<f64>,
    pub hessian: Matrix2<f64>,
}

impl ScalarSample {
    pub const ZERO: ScalarSample =
        ScalarSample { value: 0.0, gradient: Vector2::new(0.0, 0.0), hessian: Matrix2::new(0.0, 0.0, 0.0, 0.0) };
}

/// Tracking data ū: an analytic function or a P1 field on its own mesh.
#[derive(Clone)]
pub enum DataField {
    Analytic(Arc<dyn ScalarField>),
    Discrete(DiscreteData),
}

/// P1 data stored with the mesh it was computed on.
#[derive(Clone, Debug)]
pub struct DiscreteData {
    pub mesh: Mesh,
    pub values: Vec<f64>,
}

/// ū on the current mesh, ready for evaluation at quadrature points.
#[derive(Clone)]
pub enum DataOnMesh {
    Analytic(Arc<dyn ScalarField>),
    /// Nodal values with recovered nodal gradients and Hessians.
    Recovered {
        values: Vec<f64>,
        gradients: Vec<Vector2<f64>>,
        hessians: Vec<Matrix2<f64>>,
    },
}

impl DataOnMesh {
    pub fn sample(&self, mesh: &Mesh, tri: usize, bary: &[f64; 3], x: &Point) -> ScalarSample {
        match self {
            DataOnMesh::Analytic(f) => {
                ScalarSample { value: f.value(x), gradient: f.gradient(x), hessian: f.hessian(x) }
            }
            DataOnMesh::Recovered { values, gradients, hessians } => {
                let t = mesh.triangles()[tri];
                let mut s = ScalarSample::ZERO;
                for k in 0..3 {
                    s.value += bary[k] * values[t[k]];
                    s.gradient += gradients[t[k]] * bary[k];
                    s.hessian += hessians[t[k]] * bary[k];
                }
                s
            }
        }
    }

    /// Nodal values on the mesh (the P1 interpolant for analytic data).
    pub fn nodal_values(&self, mesh: &Mesh) -> Vec<f64> {
        match self {
            DataOnMesh::Analytic(f) => mesh.vertices().iter().map(|p| f.value(p)).collect(),
            DataOnMesh::Recovered { values, .. } => values.clone(),
        }
    }
}

/// Evaluate ū on `mesh`: analytic data is kept as is; discrete data is
/// interpolated nodally by point location in its source mesh, then gradients
/// and Hessians are recovered by area-weighted averaging.
pub fn interpolate_data(data: &DataField, mesh: &Mesh) -> Result<DataOnMesh> {
    match data {
        DataField::Analytic(f) => Ok(DataOnMesh::Analytic(f.clone())),
        DataField::Discrete(src) => {
            let locator = Locator::new(&src.mesh);
            let mut values = Vec::with_capacity(mesh.num_vertices());
            for p in mesh.vertices() {
                let (t, b) = locator.locate(p).ok_or(Error::OutsideMesh { x: p.x, y: p.y })?;
                let tri = src.mesh.triangles()[t];
                // A node coinciding with a source vertex copies its value exactly.
                let value = match (0..3).find(|&k| src.mesh.vertices()[tri[k]] == *p) {
                    Some(k) => src.values[tri[k]],
                    None => b[0] * src.values[tri[0]] + b[1] * src.values[tri[1]] + b[2] * src.values[tri[2]],
                };
                values.push(value);
            }
            let gradients = recover_gradient(mesh, &values);
            let gx: Vec<f64> = gradients.iter().map(|g| g.x).collect();
            let gy: Vec<f64> = gradients.iter().map(|g| g.y).collect();
            let hx = recover_gradient(mesh, &gx);
            let hy = recover_gradient(mesh, &gy);
            let hessians = hx
                .iter()
                .zip(&hy)
                .map(|(a, b)| {
                    let m = Matrix2::new(a.x, a.y, b.x, b.y);
                    (m + m.transpose()) * 0.5
                })
                .collect();
            Ok(DataOnMesh::Recovered { values, gradients, hessians })
        }
    }
}

/// Area-weighted average of elementwise P1 gradients at each node.
pub fn recover_gradient(mesh: &Mesh, values: &[f64]) -> Vec<Vector2<f64>> {
    let mut acc = vec![Vector2::zeros(); mesh.num_vertices()];
    let mut weight = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.basis_gradients(t);
        let grad = g[0] * values[tri[0]] + g[1] * values[tri[1]] + g[2] * values[tri[2]];
        let a = mesh.area(t);
        for &i in tri {
            acc[i] += grad * a;
            weight[i] += a;
        }
    }
    acc.iter().zip(&weight).map(|(g, w)| if *w > 0.0 { g / *w } else { Vector2::zeros() }).collect()
}

/// One region's part of the forcing f.
#[derive(Clone)]
pub enum ForcingTerm {
    Constant(f64),
    Field(Arc<dyn ScalarField>),
}

impl ForcingTerm {
    fn sample(&self, x: &Point) -> ScalarSample {
        match self {
            ForcingTerm::Constant(c) => ScalarSample { value: *c, ..ScalarSample::ZERO },
            ForcingTerm::Field(f) => ScalarSample { value: f.value(x), gradient: f.gradient(x), hessian: f.hessian(x) },
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, ForcingTerm::Constant(c) if *c == 0.0)
    }
}

/// Region-wise forcing f = f₁χ_{Ω₁} + f₂χ_{Ω₂}.
#[derive(Clone)]
pub struct Forcing {
    pub omega1: ForcingTerm,
    pub omega2: ForcingTerm,
}

impl Forcing {
    pub fn constant(f1: f64, f2: f64) -> Self {
        Forcing { omega1: ForcingTerm::Constant(f1), omega2: ForcingTerm::Constant(f2) }
    }

    pub fn sample(&self, region: Region, x: &Point) -> ScalarSample {
        match region {
            Region::Omega1 => self.omega1.sample(x),
            Region::Omega2 => self.omega2.sample(x),
            Region::Interaction => ScalarSample::ZERO,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.omega1.is_zero() && self.omega2.is_zero()
    }
}
