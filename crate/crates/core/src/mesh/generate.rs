//! Structured fixture meshes: Ω = (0,1)² surrounded by an interaction collar,
//! with an inclusion Ω₁ bounded by a square, a circle or a star-shaped blob.
//!
//! The grid is split into triangles with alternating diagonals. Curved
//! inclusions start from a grid-aligned rectangle whose nodes are pushed
//! radially onto the curve; the radial map blends linearly to the identity on
//! ∂Ω, so the collar and the outer boundary are untouched and the interface
//! nodes lie exactly on the curve.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{Mesh, Point, Region};
use crate::error::{Error, Result};

/// Boundary of the inclusion Ω₁.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    /// Axis-aligned square, snapped to grid lines.
    Square {
        center: [f64; 2],
        half_width: f64,
    },
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// Star-shaped curve r(θ) = radius·(1 + amplitude·cos(lobes·θ + phase)).
    Blob {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
        lobes: u32,
        phase: f64,
    },
}

impl Shape {
    pub fn center(&self) -> Point {
        let c = match self {
            Shape::Square { center, .. } | Shape::Circle { center, .. } | Shape::Blob { center, .. } => center,
        };
        Point::new(c[0], c[1])
    }

    /// Polar radius of the curve around its center (curved shapes only).
    pub fn radius_at(&self, theta: f64) -> f64 {
        match *self {
            Shape::Square { half_width, .. } => half_width / theta.cos().abs().max(theta.sin().abs()),
            Shape::Circle { radius, .. } => radius,
            Shape::Blob { radius, amplitude, lobes, phase, .. } => {
                radius * (1.0 + amplitude * (lobes as f64 * theta + phase).cos())
            }
        }
    }

    /// Radial signed distance surrogate: |p − c| − r(θ); negative inside.
    pub fn level(&self, p: &Point) -> f64 {
        let d = p - self.center();
        self_level(self, d)
    }

    /// `n` points sampled along the curve.
    pub fn sample(&self, n: usize) -> Vec<Point> {
        let c = self.center();
        (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                c + Point::new(th.cos(), th.sin()) * self.radius_at(th)
            })
            .collect()
    }
}

fn self_level(shape: &Shape, d: Point) -> f64 {
    match *shape {
        Shape::Square { half_width, .. } => d.x.abs().max(d.y.abs()) - half_width,
        _ => d.norm() - shape.radius_at(d.y.atan2(d.x)),
    }
}

/// Parameters of [`box_mesh`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxMeshSpec {
    /// Grid cells per unit length (h = 1/cells).
    pub cells: usize,
    /// Width of the interaction collar in cells.
    pub collar_cells: usize,
    pub shape: Shape,
}

/// Build the fixture mesh described by `spec`.
pub fn box_mesh(spec: &BoxMeshSpec) -> Result<Mesh> {
    let n = spec.cells;
    let m = spec.collar_cells;
    if n < 2 || m < 1 {
        return Err(Error::Mesh("box mesh needs at least 2 cells and a collar of 1 cell".into()));
    }
    let h = 1.0 / n as f64;
    let total = n + 2 * m;
    let coord = |i: usize| (i as f64 - m as f64) * h;
    let mut vertices = Vec::with_capacity((total + 1) * (total + 1));
    for j in 0..=total {
        for i in 0..=total {
            vertices.push(Point::new(coord(i), coord(j)));
        }
    }
    let id = |i: usize, j: usize| j * (total + 1) + i;

    let center = spec.shape.center();
    // Grid-aligned rectangle that becomes Ω₁ before any curve mapping.
    let half = match spec.shape {
        Shape::Square { half_width, .. } => half_width,
        _ => {
            let mean = (0..64).map(|k| spec.shape.radius_at(2.0 * PI * k as f64 / 64.0)).sum::<f64>() / 64.0;
            0.9 * mean
        }
    };
    let snap = |v: f64| (v / h).round() * h;
    let lo = Point::new(snap(center.x - half), snap(center.y - half));
    let hi = Point::new(snap(center.x + half), snap(center.y + half));
    if !(lo.x > 0.0 && lo.y > 0.0 && hi.x < 1.0 && hi.y < 1.0 && hi.x > lo.x && hi.y > lo.y) {
        return Err(Error::Mesh("inclusion does not fit strictly inside (0,1)² at this resolution".into()));
    }

    let mut triangles = Vec::with_capacity(2 * total * total);
    let mut regions = Vec::with_capacity(2 * total * total);
    for j in 0..total {
        for i in 0..total {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let pair = if (i + j) % 2 == 0 { [[a, b, c], [a, c, d]] } else { [[a, b, d], [b, c, d]] };
            for tri in pair {
                let g = (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
                let region = if g.x < 0.0 || g.y < 0.0 || g.x > 1.0 || g.y > 1.0 {
                    Region::Interaction
                } else if g.x > lo.x && g.x < hi.x && g.y > lo.y && g.y < hi.y {
                    Region::Omega1
                } else {
                    Region::Omega2
                };
                triangles.push(tri);
                regions.push(region);
            }
        }
    }

    if !matches!(spec.shape, Shape::Square { .. }) {
        if !(center.x > lo.x && center.x < hi.x && center.y > lo.y && center.y < hi.y) {
            return Err(Error::Mesh("curve center must lie inside the inclusion".into()));
        }
        for p in vertices.iter_mut() {
            *p = radial_map(&spec.shape, center, lo, hi, *p)?;
        }
    }
    Mesh::new(vertices, triangles, regions)
}

/// Distance from `c` along unit direction `d` to the boundary of the box [lo, hi].
fn ray_to_box(c: Point, d: Point, lo: Point, hi: Point) -> f64 {
    let mut t = f64::INFINITY;
    for k in 0..2 {
        if d[k] > 0.0 {
            t = t.min((hi[k] - c[k]) / d[k]);
        } else if d[k] < 0.0 {
            t = t.min((lo[k] - c[k]) / d[k]);
        }
    }
    t
}

fn radial_map(shape: &Shape, c: Point, lo: Point, hi: Point, p: Point) -> Result<Point> {
    if p.x <= 0.0 || p.y <= 0.0 || p.x >= 1.0 || p.y >= 1.0 {
        return Ok(p);
    }
    let rel = p - c;
    let rho = rel.norm();
    if rho == 0.0 {
        return Ok(p);
    }
    let d = rel / rho;
    let theta = d.y.atan2(d.x);
    let inner = ray_to_box(c, d, lo, hi);
    let outer = ray_to_box(c, d, Point::new(0.0, 0.0), Point::new(1.0, 1.0));
    let r = shape.radius_at(theta);
    if !(r > 0.0 && r < outer) {
        return Err(Error::Mesh(format!("curve leaves Ω at angle {theta:.3}")));
    }
    let mapped = if rho <= inner { rho * r / inner } else { r + (rho - inner) * (outer - r) / (outer - inner) };
    Ok(c + d * mapped)
}
