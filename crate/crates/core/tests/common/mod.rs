//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use nlshape::fe::{DataOnMesh, FnScalarField, Forcing, ForcingTerm, ScalarField};
use nlshape::kernel::{Coefficients, KernelClass, KernelSpec};
use nlshape::linsolve::SolverKind;
use nlshape::mesh::{box_mesh, BoxMeshSpec, Mesh, Point, Region, Shape};
use nlshape::shapecalc::ShapeProblem;

pub const TS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Bounded kernel whose horizon covers the whole domain, with a nonsymmetric
/// coefficient across the interface.
pub fn full_interaction(symmetric: bool) -> KernelSpec {
    KernelSpec {
        class: KernelClass::Integrable,
        delta: 10.0,
        s: 0.5,
        coeff: Coefficients {
            o11: 0.5,
            o12: 1.0,
            o21: if symmetric { 1.0 } else { 2.0 },
            o22: 3.0,
            o1i: 1.0,
            o2i: 1.5,
        },
        normalizer: 1.0,
    }
}

pub fn circle_mesh(cells: usize, collar_cells: usize) -> Mesh {
    let shape = Shape::Circle { center: [0.5, 0.5], radius: 0.25 };
    box_mesh(&BoxMeshSpec { cells, collar_cells, shape }).unwrap()
}

pub fn square_mesh(cells: usize, collar_cells: usize) -> Mesh {
    let shape = Shape::Square { center: [0.5, 0.5], half_width: 0.25 };
    box_mesh(&BoxMeshSpec { cells, collar_cells, shape }).unwrap()
}

/// ū(x) = a + b sin(πx₁) cos(πx₂) + c x₁x₂.
pub fn analytic_data(a: f64, b: f64, c: f64) -> DataOnMesh {
    let f = FnScalarField {
        value: move |p: &Point| a + b * (PI * p.x).sin() * (PI * p.y).cos() + c * p.x * p.y,
        gradient: move |p: &Point| {
            Vector2::new(
                b * PI * (PI * p.x).cos() * (PI * p.y).cos() + c * p.y,
                -b * PI * (PI * p.x).sin() * (PI * p.y).sin() + c * p.x,
            )
        },
        hessian: move |p: &Point| {
            let (sx, cx, sy, cy) = ((PI * p.x).sin(), (PI * p.x).cos(), (PI * p.y).sin(), (PI * p.y).cos());
            let pp = b * PI * PI;
            Matrix2::new(-pp * sx * cy, -pp * cx * sy + c, -pp * cx * sy + c, -pp * sx * cy)
        },
    };
    DataOnMesh::Analytic(Arc::new(f))
}

/// Polynomial data, integrated exactly by the quadrature rules.
pub fn quadratic_data() -> DataOnMesh {
    let f = FnScalarField {
        value: |p: &Point| 0.3 + 0.5 * p.x - 0.2 * p.y + 0.7 * p.x * p.x - 0.4 * p.x * p.y + 0.1 * p.y * p.y,
        gradient: |p: &Point| Vector2::new(0.5 + 1.4 * p.x - 0.4 * p.y, -0.2 - 0.4 * p.x + 0.2 * p.y),
        hessian: |_: &Point| Matrix2::new(1.4, -0.4, -0.4, 0.2),
    };
    DataOnMesh::Analytic(Arc::new(f))
}

/// f = 10 + 3x₁ − 2x₂ + x₁x₂ on Ω₁, −10 on Ω₂.
pub fn varying_forcing() -> Forcing {
    let f1 = FnScalarField {
        value: |p: &Point| 10.0 + 3.0 * p.x - 2.0 * p.y + p.x * p.y,
        gradient: |p: &Point| Vector2::new(3.0 + p.y, -2.0 + p.x),
        hessian: |_: &Point| Matrix2::new(0.0, 1.0, 1.0, 0.0),
    };
    let f1: Arc<dyn ScalarField> = Arc::new(f1);
    Forcing { omega1: ForcingTerm::Field(f1), omega2: ForcingTerm::Constant(-10.0) }
}

pub fn problem<'a>(spec: &'a KernelSpec, ubar: &'a DataOnMesh, forcing: &'a Forcing, nu: f64) -> ShapeProblem<'a> {
    ShapeProblem { spec, ubar, forcing, nu, solver: SolverKind::Direct }
}

#[allow(unused_imports)]
pub use nlshape::oracle::bump_field;

/// Eight triangles: a hexagon fan split between Ω₁ and Ω₂ with two
/// interaction triangles on opposite edges.
pub fn hexagon_mesh() -> Mesh {
    let c = Point::new(0.05, -0.03);
    let ring = [
        Point::new(1.0, 0.1),
        Point::new(0.45, 0.9),
        Point::new(-0.5, 0.8),
        Point::new(-1.05, -0.05),
        Point::new(-0.4, -0.85),
        Point::new(0.55, -0.8),
    ];
    let mut vertices = vec![c];
    vertices.extend_from_slice(&ring);
    // Outer apexes beyond edges (h0, h1) and (h3, h4).
    vertices.push(Point::new(1.0, 0.8));
    vertices.push(Point::new(-1.0, -0.9));
    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    for k in 0..6 {
        triangles.push([0, 1 + k, 1 + (k + 1) % 6]);
        regions.push(if k < 3 { Region::Omega1 } else { Region::Omega2 });
    }
    triangles.push([1, 7, 2]);
    regions.push(Region::Interaction);
    triangles.push([4, 8, 5]);
    regions.push(Region::Interaction);
    Mesh::new(vertices, triangles, regions).unwrap()
}
