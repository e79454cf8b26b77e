//! Quadrature on triangles and on pairs of triangles.
//!
//! All rules are written in barycentric coordinates with weights normalized to
//! the reference measure, so mapping them to a physical triangle is an affine
//! pullback. Triangle rules have weights summing to ½ (reference area); pair
//! rules have weights summing to 1 and are scaled by |T|·|T'|.
//!
//! Pairs that touch (identical, common edge, common vertex) get rules that
//! remove the |x − y|^{−(2+2s)} singularity for P1 integrands: a polar rule
//! around x for identical triangles, and Duffy-type cube decompositions for
//! shared edges and vertices.

use crate::kernel::{KernelClass, KernelSpec};

/// Gauss–Legendre nodes and weights on [0, 1] (weights sum to 1).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1].
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Points (barycentric) and weights on the reference triangle.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Symmetric 7-point rule, exact for polynomials of degree 5.
    pub fn degree5() -> Self {
        let r15 = 15f64.sqrt();
        let (a1, b1) = ((9.0 - 2.0 * r15) / 21.0, (6.0 + r15) / 21.0);
        let (a2, b2) = ((9.0 + 2.0 * r15) / 21.0, (6.0 - r15) / 21.0);
        let (w1, w2) = ((155.0 + r15) / 1200.0, (155.0 - r15) / 1200.0);
        let third = 1.0 / 3.0;
        let points = vec![
            [third, third, third],
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ];
        let weights = [0.225, w1, w1, w1, w2, w2, w2].iter().map(|w| 0.5 * w).collect();
        TriangleRule { points, weights }
    }

    /// Collapsed (Duffy) tensor Gauss rule with n² points, exact to degree 2n − 2.
    pub fn collapsed_gauss(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let xi = x[i];
                let eta = x[j] * (1.0 - xi);
                points.push([1.0 - xi - eta, xi, eta]);
                weights.push(w[i] * w[j] * (1.0 - xi));
            }
        }
        TriangleRule { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One point pair of a pair rule: barycentric coordinates of x in T and of y
/// in T', and a weight (weights of a rule sum to 1; scale by |T|·|T'|).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPoint {
    pub bx: [f64; 3],
    pub by: [f64; 3],
    pub w: f64,
}

/// How two triangles touch, with local vertex indices of the shared nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Touch {
    Disjoint,
    Vertex { x: usize, y: usize },
    Edge { x: [usize; 2], y: [usize; 2] },
    Identical,
}

impl Touch {
    pub fn classify(tx: &[usize; 3], ty: &[usize; 3]) -> Touch {
        let mut shared = Vec::with_capacity(3);
        for (i, a) in tx.iter().enumerate() {
            if let Some(j) = ty.iter().position(|b| b == a) {
                shared.push((i, j));
            }
        }
        match shared.len() {
            0 => Touch::Disjoint,
            1 => Touch::Vertex { x: shared[0].0, y: shared[0].1 },
            2 => Touch::Edge { x: [shared[0].0, shared[1].0], y: [shared[0].1, shared[1].1] },
            _ => Touch::Identical,
        }
    }
}

/// Orders of the pair rules.
#[derive(Clone, Copy, Debug)]
pub struct PairOrders {
    /// Outer Gauss order (per direction) of the identical-pair rule.
    pub identical_outer: usize,
    pub identical_radial: usize,
    pub identical_angular: usize,
    /// Gauss order per cube direction for edge and vertex pairs.
    pub touching: usize,
}

impl Default for PairOrders {
    fn default() -> Self {
        PairOrders { identical_outer: 4, identical_radial: 3, identical_angular: 5, touching: 3 }
    }
}

/// The family of pair rules used for one kernel.
#[derive(Clone, Debug)]
pub struct PairRules {
    regular: Vec<PairPoint>,
    singular: Option<SingularRules>,
}

#[derive(Clone, Debug)]
struct SingularRules {
    identical: Vec<PairPoint>,
    edge: Vec<PairPoint>,
    vertex: Vec<PairPoint>,
}

impl PairRules {
    /// Tensor product of the degree-5 rule for every pair; singular kernels
    /// additionally get the touching-pair rules.
    pub fn for_kernel(spec: &KernelSpec) -> Self {
        Self::with_orders(spec, &TriangleRule::degree5(), PairOrders::default())
    }

    pub fn with_orders(spec: &KernelSpec, regular: &TriangleRule, orders: PairOrders) -> Self {
        let regular = tensor(regular, regular);
        let singular = match spec.class {
            KernelClass::Integrable => None,
            KernelClass::SingularSymmetric => Some(SingularRules {
                identical: identical_rule(spec.s, orders),
                edge: edge_rule(orders.touching),
                vertex: vertex_rule(orders.touching),
            }),
        };
        PairRules { regular, singular }
    }

    /// Regular tensor rule for every pair, ignoring touching configurations.
    pub fn tensor_only(rule: &TriangleRule) -> Self {
        PairRules { regular: tensor(rule, rule), singular: None }
    }

    /// Rule for a pair in the given configuration, in the pair's local vertex order.
    pub fn rule(&self, touch: Touch) -> std::borrow::Cow<'_, [PairPoint]> {
        use std::borrow::Cow;
        let Some(s) = &self.singular else {
            return Cow::Borrowed(&self.regular);
        };
        match touch {
            Touch::Disjoint => Cow::Borrowed(&self.regular),
            Touch::Identical => Cow::Borrowed(&s.identical),
            Touch::Vertex { x, y } => Cow::Owned(
                s.vertex.iter().map(|p| PairPoint { bx: rotate(p.bx, x), by: rotate(p.by, y), w: p.w }).collect(),
            ),
            Touch::Edge { x, y } => Cow::Owned(
                s.edge.iter().map(|p| PairPoint { bx: place(p.bx, x), by: place(p.by, y), w: p.w }).collect(),
            ),
        }
    }
}

/// Canonical vertex 0 goes to local index `at`, keeping cyclic order.
fn rotate(b: [f64; 3], at: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[(at + k) % 3] = b[k];
    }
    out
}

/// Canonical vertices 0, 1 go to local indices `at[0]`, `at[1]`; vertex 2 to the rest.
fn place(b: [f64; 3], at: [usize; 2]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[at[0]] = b[0];
    out[at[1]] = b[1];
    out[3 - at[0] - at[1]] = b[2];
    out
}

fn tensor(a: &TriangleRule, b: &TriangleRule) -> Vec<PairPoint> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for (px, wx) in a.points.iter().zip(&a.weights) {
        for (py, wy) in b.points.iter().zip(&b.weights) {
            out.push(PairPoint { bx: *px, by: *py, w: 4.0 * wx * wy });
        }
    }
    out
}

/// Polar rule around x for T × T: y = x + ρ·((1−τ)(a_i − x) + τ(a_{i+1} − x))
/// over the three sub-triangles with apex x, with ρ = w^q, q = 1/(2 − 2s), so
/// that the ρ^{1−2s} behaviour of P1 integrands becomes constant in w.
fn identical_rule(s: f64, orders: PairOrders) -> Vec<PairPoint> {
    let outer = TriangleRule::collapsed_gauss(orders.identical_outer);
    let (rn, rw) = gauss_legendre(orders.identical_radial);
    let (tn, tw) = gauss_legendre(orders.identical_angular);
    let q = 1.0 / (2.0 - 2.0 * s);
    let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut out = Vec::new();
    for (bx, wx) in outer.points.iter().zip(&outer.weights) {
        for i in 0..3 {
            let (a, b) = (corners[i], corners[(i + 1) % 3]);
            // Area fraction of the sub-triangle (x, a_i, a_{i+1}).
            let frac = bx[(i + 2) % 3];
            if frac <= 0.0 {
                continue;
            }
            for (w, ww) in rn.iter().zip(&rw) {
                let rho = w.powf(q);
                let drho = q * w.powf(q - 1.0);
                for (tau, wt) in tn.iter().zip(&tw) {
                    let mut by = [0.0; 3];
                    for k in 0..3 {
                        let dir = (1.0 - tau) * (a[k] - bx[k]) + tau * (b[k] - bx[k]);
                        by[k] = bx[k] + rho * dir;
                    }
                    // Outer fraction 2·wx, sub-triangle polar Jacobian 2·frac·ρ.
                    let weight = 2.0 * wx * 2.0 * frac * rho * drho * ww * wt;
                    out.push(PairPoint { bx: *bx, by, w: weight });
                }
            }
        }
    }
    out
}

/// Common-edge rule. Canonical triangles (A, B, C) and (A, B, D) with the
/// shared edge AB. With x = A + (1−b)α(B−A) + b(C−A) and likewise y in
/// (α', b'), the singular set is b = b' = 0, α = α'. Splitting α' ≷ α and the
/// (|α'−α|, b, b') cube by its largest coordinate gives six regular cubes.
fn edge_rule(n: usize) -> Vec<PairPoint> {
    let (g, gw) = gauss_legendre(n);
    let mut out = Vec::new();
    let bary = |alpha: f64, b: f64| [1.0 - (1.0 - b) * alpha - b, (1.0 - b) * alpha, b];
    for sign in [1.0, -1.0] {
        for pyramid in 0..3 {
            for (ah, wa) in g.iter().zip(&gw) {
                for (m, wm) in g.iter().zip(&gw) {
                    for (u1, w1) in g.iter().zip(&gw) {
                        for (u2, w2) in g.iter().zip(&gw) {
                            let (d, b, bp) = match pyramid {
                                0 => (*m, m * u1, m * u2),
                                1 => (m * u1, *m, m * u2),
                                _ => (m * u1, m * u2, *m),
                            };
                            let base = (1.0 - d) * ah;
                            let (alpha, alphap) = if sign > 0.0 { (base, base + d) } else { (base + d, base) };
                            // Density 4(1−b)(1−b') of (α, b, α', b'), then the
                            // shift Jacobian (1−d) and the pyramid Jacobian m².
                            let weight = 4.0 * (1.0 - b) * (1.0 - bp) * (1.0 - d) * m * m * wa * wm * w1 * w2;
                            out.push(PairPoint { bx: bary(alpha, b), by: bary(alphap, bp), w: weight });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Common-vertex rule. Canonical triangles (P, B, C) and (P, D, E) with x =
/// P + s(B−P) + sτ(C−B) and y likewise in (s', τ'); the regions s' ≤ s and
/// s ≤ s' are mapped to cubes by s' = s·w (resp. s = s'·w).
fn vertex_rule(n: usize) -> Vec<PairPoint> {
    let (g, gw) = gauss_legendre(n);
    let bary = |s: f64, tau: f64| [1.0 - s, s * (1.0 - tau), s * tau];
    let mut out = Vec::new();
    for first_larger in [true, false] {
        for (big, wb) in g.iter().zip(&gw) {
            for (w, ww) in g.iter().zip(&gw) {
                for (tx, wtx) in g.iter().zip(&gw) {
                    for (ty, wty) in g.iter().zip(&gw) {
                        let small = big * w;
                        let (sx, sy) = if first_larger { (*big, small) } else { (small, *big) };
                        // Density 2s·2s' of (s, τ, s', τ') and the scaling Jacobian `big`.
                        let weight = 4.0 * sx * sy * big * wb * ww * wtx * wty;
                        out.push(PairPoint { bx: bary(sx, *tx), by: bary(sy, *ty), w: weight });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial(b: &[f64; 3], i: u32, j: u32) -> f64 {
        // On the reference triangle (0,0), (1,0), (0,1): x = λ₁, y = λ₂.
        b[1].powi(i as i32) * b[2].powi(j as i32)
    }

    /// ∫ x^i y^j over the reference triangle = i! j! / (i + j + 2)!.
    fn exact(i: u32, j: u32) -> f64 {
        let f = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        f(i) * f(j) / f(i + j + 2)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        for p in 0..10 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "degree {p}");
        }
    }

    #[test]
    fn degree5_rule_is_exact_to_degree_5() {
        let r = TriangleRule::degree5();
        assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        assert!(r.weights.iter().all(|&w| w > 0.0));
        for i in 0..=5 {
            for j in 0..=(5 - i) {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(b, w)| w * monomial(b, i, j)).sum();
                assert!((q - exact(i, j)).abs() < 1e-15, "x^{i} y^{j}");
            }
        }
    }

    #[test]
    fn collapsed_gauss_is_exact_to_degree_2n_minus_2() {
        let r = TriangleRule::collapsed_gauss(4);
        for i in 0..=6 {
            for j in 0..=(6 - i) {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(b, w)| w * monomial(b, i, j)).sum();
                assert!((q - exact(i, j)).abs() < 1e-15);
            }
        }
    }

    fn check_pair_rule(points: &[PairPoint], tol: f64) {
        assert!(points.iter().all(|p| p.w > 0.0));
        let total: f64 = points.iter().map(|p| p.w).sum();
        assert!((total - 1.0).abs() < tol, "total weight {total}");
        for p in points {
            for b in [p.bx, p.by] {
                assert!(b.iter().all(|&c| c >= -1e-14), "{b:?}");
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
        // A low-degree polynomial in (x, y): compare with the product of
        // single-triangle integrals (normalized by the areas ½ · ½).
        let got: f64 = points.iter().map(|p| p.w * p.bx[1] * p.by[2]).sum();
        let expect = (exact(1, 0) / 0.5) * (exact(0, 1) / 0.5);
        assert!((got - expect).abs() < tol, "{got} vs {expect}");
    }

    #[test]
    fn touching_rules_are_positive_and_normalized() {
        let orders = PairOrders::default();
        check_pair_rule(&identical_rule(0.5, orders), 1e-12);
        // The cube Jacobians raise the polynomial degree; order 6 integrates
        // the test moment exactly.
        check_pair_rule(&edge_rule(6), 1e-12);
        check_pair_rule(&vertex_rule(6), 1e-12);
    }

    #[test]
    fn classify_touching() {
        assert_eq!(Touch::classify(&[0, 1, 2], &[3, 4, 5]), Touch::Disjoint);
        assert_eq!(Touch::classify(&[0, 1, 2], &[2, 4, 5]), Touch::Vertex { x: 2, y: 0 });
        assert_eq!(Touch::classify(&[0, 1, 2], &[1, 0, 5]), Touch::Edge { x: [0, 1], y: [1, 0] });
        assert_eq!(Touch::classify(&[0, 1, 2], &[2, 0, 1]), Touch::Identical);
    }
}
