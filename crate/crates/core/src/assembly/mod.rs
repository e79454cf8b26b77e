//! Assembly of the nonlocal stiffness, loads, the tracking objective and the
//! shape-derivative forms over P1 spaces.
//!
//! Every nonlocal form has the integrand ½(v(x) − v(y))(σ(x,y)u(x) − σ(y,x)u(y))·q
//! where σ is the region-pair coefficient and q is a radial quantity: the
//! kernel itself for the stiffness, ψ̂_V for first derivatives and ĥ_{VW} for
//! second derivatives. The integrand is symmetric under x ↔ y, so each
//! unordered triangle pair is visited once with weight 1 (½ on the diagonal).

mod local;
mod nonlocal;
mod shape;
mod sparse;

pub use local::{
    assemble_load, assemble_mass, assemble_objective, assemble_regularizer, assemble_tracking_load, tracking_value,
};
pub use nonlocal::{assemble_stiffness, assemble_stiffness_extended};
pub use shape::{ActiveDofs, ShapeMatrices};
pub use sparse::{SparseOperator, TripletBuilder};

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe::{DataOnMesh, FeFunction, Forcing, Space};
use crate::kernel::{KernelSpec, RadialJet};
use crate::mesh::{Mesh, Point, Region};
use crate::quadrature::{PairRules, Touch, TriangleRule};

/// An unordered pair of triangles that may interact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrianglePair {
    pub tx: usize,
    pub ty: usize,
    pub touch: Touch,
    /// 1 for distinct triangles, ½ for a triangle paired with itself.
    pub factor: f64,
}

/// Mesh, kernel, quadrature and the interacting triangle pairs.
pub struct Assembler<'a> {
    pub mesh: &'a Mesh,
    pub spec: &'a KernelSpec,
    rules: PairRules,
    rule: TriangleRule,
    pairs: Vec<TrianglePair>,
}

/// State, adjoint and data entering the shape-derivative forms.
#[derive(Clone, Copy)]
pub struct StateData<'a> {
    pub u: &'a FeFunction,
    pub v: &'a FeFunction,
    pub ubar: &'a DataOnMesh,
    pub forcing: &'a Forcing,
}

/// One quadrature point of a triangle pair.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PairPoint {
    pub x: Point,
    pub y: Point,
    pub bx: [f64; 3],
    pub by: [f64; 3],
    /// Weight including |T|·|T'| and the pair factor.
    pub w: f64,
    pub s_xy: f64,
    pub s_yx: f64,
    pub k: RadialJet,
}

impl<'a> Assembler<'a> {
    pub fn new(mesh: &'a Mesh, spec: &'a KernelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self::with_rules(mesh, spec, PairRules::for_kernel(spec)))
    }

    pub fn with_rules(mesh: &'a Mesh, spec: &'a KernelSpec, rules: PairRules) -> Self {
        let pairs = find_pairs(mesh, spec.delta);
        Assembler { mesh, spec, rules, rule: TriangleRule::degree5(), pairs }
    }

    pub fn pairs(&self) -> &[TrianglePair] {
        &self.pairs
    }

    pub(crate) fn triangle_rule(&self) -> &TriangleRule {
        &self.rule
    }

    /// Quadrature points of a pair where the kernel does not vanish.
    pub(crate) fn for_each_point(&self, pair: &TrianglePair, mut f: impl FnMut(&PairPoint)) {
        let mesh = self.mesh;
        let (cx, cy) = (mesh.corners(pair.tx), mesh.corners(pair.ty));
        let (rx, ry) = (mesh.region(pair.tx), mesh.region(pair.ty));
        let s_xy = self.spec.sigma(rx, ry);
        let s_yx = self.spec.sigma(ry, rx);
        let scale = pair.factor * mesh.area(pair.tx) * mesh.area(pair.ty);
        for p in self.rules.rule(pair.touch).iter() {
            let x = cx[0] * p.bx[0] + cx[1] * p.bx[1] + cx[2] * p.bx[2];
            let y = cy[0] * p.by[0] + cy[1] * p.by[1] + cy[2] * p.by[2];
            let k = self.spec.radial_jet(&(x - y));
            if k.value == 0.0 {
                continue;
            }
            debug_assert!(k.value.is_finite());
            f(&PairPoint { x, y, bx: p.bx, by: p.by, w: p.w * scale, s_xy, s_yx, k });
        }
    }

    /// Parallel fold over pairs into per-thread accumulators.
    pub(crate) fn fold_pairs<T, F>(
        &self,
        filter: impl Fn(&TrianglePair) -> bool + Sync,
        init: impl Fn() -> T + Sync + Send,
        body: F,
    ) -> T
    where
        T: Send + Merge,
        F: Fn(&mut T, &TrianglePair) + Sync + Send,
    {
        self.pairs
            .par_iter()
            .filter(|p| filter(p))
            .fold(&init, |mut acc, p| {
                body(&mut acc, p);
                acc
            })
            .reduce(&init, |mut a, b| {
                a.merge(b);
                a
            })
    }
}

/// Accumulators that can be combined after a parallel fold.
pub(crate) trait Merge {
    fn merge(&mut self, other: Self);
}

impl Merge for f64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl Merge for Vec<f64> {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += b;
        }
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

impl<A: Merge, B: Merge, C: Merge> Merge for (A, B, C) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
        self.2.merge(other.2);
    }
}

/// All unordered triangle pairs whose closures may come within `delta`,
/// excluding pairs inside the interaction domain.
fn find_pairs(mesh: &Mesh, delta: f64) -> Vec<TrianglePair> {
    let n = mesh.num_triangles();
    let centroids: Vec<Point> = (0..n).map(|t| mesh.centroid(t)).collect();
    let radii: Vec<f64> =
        (0..n).map(|t| mesh.corners(t).iter().map(|p| (p - centroids[t]).norm()).fold(0.0, f64::max)).collect();
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (centroids[0], centroids[0]);
    for c in &centroids {
        lo = lo.inf(c);
        hi = hi.sup(c);
    }
    let reach = delta + 2.0 * rmax;
    let extent = hi - lo;
    let dims = |e: f64| ((e / reach).floor() as usize + 1).min(1024);
    let (nx, ny) = (dims(extent.x), dims(extent.y));
    let cell = |p: &Point| {
        let i = (((p.x - lo.x) / reach) as usize).min(nx - 1);
        let j = (((p.y - lo.y) / reach) as usize).min(ny - 1);
        (i, j)
    };
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for (t, c) in centroids.iter().enumerate() {
        let (i, j) = cell(c);
        grid[j * nx + i].push(t);
    }
    let tris = mesh.triangles();
    let mut pairs = Vec::new();
    for t in 0..n {
        let (i, j) = cell(&centroids[t]);
        let mut partners = Vec::new();
        for jj in j.saturating_sub(1)..=(j + 1).min(ny - 1) {
            for ii in i.saturating_sub(1)..=(i + 1).min(nx - 1) {
                for &s in &grid[jj * nx + ii] {
                    if s < t {
                        continue;
                    }
                    if mesh.region(t) == Region::Interaction && mesh.region(s) == Region::Interaction {
                        continue;
                    }
                    if (centroids[t] - centroids[s]).norm() < delta + radii[t] + radii[s] {
                        partners.push(s);
                    }
                }
            }
        }
        partners.sort_unstable();
        for s in partners {
            let touch = Touch::classify(&tris[t], &tris[s]);
            pairs.push(TrianglePair { tx: t, ty: s, touch, factor: if s == t { 0.5 } else { 1.0 } });
        }
    }
    pairs
}

/// Nodal values of a scalar P1 function on a triangle.
#[inline]
pub(crate) fn tri_values(mesh: &Mesh, f: &FeFunction, tri: usize) -> [f64; 3] {
    let t = mesh.triangles()[tri];
    let c = f.coeffs();
    [c[t[0]], c[t[1]], c[t[2]]]
}

#[inline]
pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn check_scalar(mesh: &Mesh, f: &FeFunction, what: &str) -> Result<()> {
    if f.space() != Space::ScalarP1 || f.coeffs().len() != mesh.num_vertices() {
        return Err(Error::Dimension(format!("{what} must be a scalar P1 function on this mesh")));
    }
    Ok(())
}

pub(crate) fn check_vector(mesh: &Mesh, f: &FeFunction, what: &str) -> Result<()> {
    if f.space() != Space::VectorP1 || f.coeffs().len() != 2 * mesh.num_vertices() {
        return Err(Error::Dimension(format!("{what} must be a vector P1 field on this mesh")));
    }
    Ok(())
}

/// Radial first-derivative factor ψ̂_V = g·(V(x) − V(y)) + k(div V(x) + div V(y)),
/// so that Ψ_V(x, y) = σ(x, y)·ψ̂_V and Ψ_V(y, x) = σ(y, x)·ψ̂_V.
#[inline]
pub(crate) fn psi_hat(k: &RadialJet, dv: &Vector2<f64>, div_sum: f64) -> f64 {
    k.grad.dot(dv) + k.value * div_sum
}

pub use nonlocal::{
    assemble_second_order_forms, assemble_shape_residuals, averaged_adjoint_rhs, SecondOrderForms, ShapeResiduals,
};
