//! Point location by uniform bucket grid over triangle bounding boxes.

use super::{Mesh, Point};

/// Triangles bucketed by bounding box for point queries.
pub struct Locator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

/// Snap tolerance (absolute distance) for points just outside the mesh.
const SNAP: f64 = 1e-10;

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in mesh.vertices() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).max().max(f64::MIN_POSITIVE);
        let target = (mesh.num_triangles() as f64).sqrt().ceil().max(1.0);
        let cell = extent / target;
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for t in 0..mesh.num_triangles() {
            let c = mesh.corners(t);
            let tlo = c[0].inf(&c[1]).inf(&c[2]);
            let thi = c[0].sup(&c[1]).sup(&c[2]);
            let (i0, j0) = Self::cell_of(lo, cell, nx, ny, &(tlo - Point::repeat(SNAP)));
            let (i1, j1) = Self::cell_of(lo, cell, nx, ny, &(thi + Point::repeat(SNAP)));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Locator { mesh, origin: lo, cell, nx, ny, buckets }
    }

    fn cell_of(origin: Point, cell: f64, nx: usize, ny: usize, p: &Point) -> (usize, usize) {
        let i = ((p.x - origin.x) / cell).floor().max(0.0) as usize;
        let j = ((p.y - origin.y) / cell).floor().max(0.0) as usize;
        (i.min(nx - 1), j.min(ny - 1))
    }

    /// Containing triangle and barycentric coordinates of `p`. Points within
    /// 1e-10 of the mesh are snapped onto the nearest triangle.
    pub fn locate(&self, p: &Point) -> Option<(usize, [f64; 3])> {
        let (i, j) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let b = barycentric(self.mesh, t, p);
            let worst = b[0].min(b[1]).min(b[2]);
            if best.as_ref().is_none_or(|(_, _, w)| worst > *w) {
                best = Some((t, b, worst));
            }
        }
        let (t, b, worst) = best?;
        if worst >= 0.0 {
            return Some((t, b));
        }
        // Outside every candidate: accept only if within the snap distance.
        let c = self.mesh.corners(t);
        let dist =
            (0..3).map(|k| super::point_segment_distance(p, &c[k], &c[(k + 1) % 3])).fold(f64::INFINITY, f64::min);
        if dist > SNAP {
            return None;
        }
        let clamped = [b[0].max(0.0), b[1].max(0.0), b[2].max(0.0)];
        let s: f64 = clamped.iter().sum();
        Some((t, [clamped[0] / s, clamped[1] / s, clamped[2] / s]))
    }
}

/// Barycentric coordinates of `p` with respect to triangle `t`.
pub fn barycentric(mesh: &Mesh, t: usize, p: &Point) -> [f64; 3] {
    let [a, b, c] = mesh.corners(t);
    let total = super::signed_area(&a, &b, &c);
    let l0 = super::signed_area(p, &b, &c) / total;
    let l1 = super::signed_area(&a, p, &c) / total;
    [l0, l1, 1.0 - l0 - l1]
}
