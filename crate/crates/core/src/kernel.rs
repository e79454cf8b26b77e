//! Interface-dependent kernels γ_Γ(x, y) = σ(region pair)·c·r(x, y)·χ(|x−y| < δ)
//! and the point-pair quantities built from their derivatives.
//!
//! The truncation χ is treated as locally constant: it switches the value off
//! outside the horizon but contributes nothing to gradients or Hessians.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fe::FieldSample;
use crate::mesh::{Point, Region};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelClass {
    /// r ≡ 1: bounded, possibly nonsymmetric.
    Integrable,
    /// r = |x − y|^{−(2+2s)}: symmetric fractional-type kernel.
    SingularSymmetric,
}

/// Multipliers σ per region pair. Pairs with the interaction domain are
/// symmetric: σ(I, i) = σ(i, I). Pairs inside I do not interact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub o11: f64,
    pub o12: f64,
    pub o21: f64,
    pub o22: f64,
    pub o1i: f64,
    pub o2i: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub class: KernelClass,
    pub delta: f64,
    /// Fractional order, used by the singular class only.
    pub s: f64,
    pub coeff: Coefficients,
    pub normalizer: f64,
}

impl KernelSpec {
    /// Integrable kernel of the first experiment: c = 1/δ⁴, σ = 0.1 on Ω₁×Ω₁,
    /// 10 on Ω₂×Ω₂ and 1 elsewhere.
    pub fn gamma1(delta: f64) -> Self {
        KernelSpec {
            class: KernelClass::Integrable,
            delta,
            s: 0.5,
            coeff: Coefficients { o11: 0.1, o12: 1.0, o21: 1.0, o22: 10.0, o1i: 1.0, o2i: 1.0 },
            normalizer: 1.0 / (delta * delta * delta * delta),
        }
    }

    /// Singular kernel of the second experiment: c = (2−2s)/(π δ^{2+2s}),
    /// σ = 10 on Ω₁×Ω₁, 1 on Ω₂×Ω₂ and 5 elsewhere.
    pub fn gamma2(delta: f64, s: f64) -> Self {
        KernelSpec {
            class: KernelClass::SingularSymmetric,
            delta,
            s,
            coeff: Coefficients { o11: 10.0, o12: 5.0, o21: 5.0, o22: 1.0, o1i: 5.0, o2i: 5.0 },
            normalizer: (2.0 - 2.0 * s) / (PI * delta.powf(2.0 + 2.0 * s)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Kernel(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.normalizer > 0.0 && self.normalizer.is_finite()) {
            return Err(Error::Kernel(format!("normalizer must be positive, got {}", self.normalizer)));
        }
        let c = &self.coeff;
        for (name, v) in
            [("o11", c.o11), ("o12", c.o12), ("o21", c.o21), ("o22", c.o22), ("o1i", c.o1i), ("o2i", c.o2i)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Kernel(format!("coefficient {name} must be positive, got {v}")));
            }
        }
        if self.class == KernelClass::SingularSymmetric {
            if !(self.s > 0.0 && self.s < 1.0) {
                return Err(Error::Kernel(format!("s must lie in (0, 1), got {}", self.s)));
            }
            if c.o12 != c.o21 {
                return Err(Error::Kernel("singular kernels need o12 = o21".into()));
            }
        }
        Ok(())
    }

    /// σ for the ordered region pair (region of x, region of y).
    pub fn sigma(&self, rx: Region, ry: Region) -> f64 {
        use Region::*;
        let c = &self.coeff;
        match (rx, ry) {
            (Omega1, Omega1) => c.o11,
            (Omega1, Omega2) => c.o12,
            (Omega2, Omega1) => c.o21,
            (Omega2, Omega2) => c.o22,
            (Omega1, Interaction) | (Interaction, Omega1) => c.o1i,
            (Omega2, Interaction) | (Interaction, Omega2) => c.o2i,
            (Interaction, Interaction) => 0.0,
        }
    }

    /// True when γ(x, y) = γ(y, x) for all point pairs.
    pub fn is_symmetric(&self) -> bool {
        self.coeff.o12 == self.coeff.o21
    }

    /// Decay exponent d + 2s of the singular class (0 for integrable kernels).
    pub fn exponent(&self) -> f64 {
        match self.class {
            KernelClass::Integrable => 0.0,
            KernelClass::SingularSymmetric => 2.0 + 2.0 * self.s,
        }
    }

    /// Region-independent part c·r(x, y)·χ with its derivatives with respect
    /// to the first point, as a function of z = x − y.
    #[inline]
    pub fn radial_jet(&self, z: &Vector2<f64>) -> RadialJet {
        let r2 = z.norm_squared();
        if r2 >= self.delta * self.delta {
            return RadialJet::ZERO;
        }
        match self.class {
            KernelClass::Integrable => RadialJet { value: self.normalizer, ..RadialJet::ZERO },
            KernelClass::SingularSymmetric => {
                let p = self.exponent();
                let k = self.normalizer * r2.powf(-0.5 * p);
                let grad = z * (-p * k / r2);
                let zz = z * z.transpose();
                let hess = Matrix2::identity() * (-p * k / r2) + zz * (p * (p + 2.0) * k / (r2 * r2));
                RadialJet { value: k, grad, hess }
            }
        }
    }

    /// γ(x, y) with gradients and the 4×4 Hessian in (x, y).
    pub fn jet(&self, x: &Point, y: &Point, rx: Region, ry: Region) -> Result<KernelJet> {
        if self.class == KernelClass::SingularSymmetric && x == y {
            return Err(Error::CoincidentPoints);
        }
        let sigma = self.sigma(rx, ry);
        let r = self.radial_jet(&(x - y));
        Ok(KernelJet::from_radial(sigma, &r))
    }
}

/// c·r(z)·χ and its first and second derivatives in the first point.
#[derive(Clone, Copy, Debug)]
pub struct RadialJet {
    pub value: f64,
    pub grad: Vector2<f64>,
    pub hess: Matrix2<f64>,
}

impl RadialJet {
    pub const ZERO: RadialJet =
        RadialJet { value: 0.0, grad: Vector2::new(0.0, 0.0), hess: Matrix2::new(0.0, 0.0, 0.0, 0.0) };
}

/// γ(x, y), ∇_x γ, ∇_y γ and the block Hessian [[xx, xy], [yx, yy]].
#[derive(Clone, Copy, Debug)]
pub struct KernelJet {
    pub value: f64,
    pub grad_x: Vector2<f64>,
    pub grad_y: Vector2<f64>,
    pub hess: Matrix4<f64>,
}

impl KernelJet {
    fn from_radial(sigma: f64, r: &RadialJet) -> Self {
        let hxx = r.hess * sigma;
        let mut hess = Matrix4::zeros();
        hess.fixed_view_mut::<2, 2>(0, 0).copy_from(&hxx);
        hess.fixed_view_mut::<2, 2>(0, 2).copy_from(&(-hxx));
        hess.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-hxx));
        hess.fixed_view_mut::<2, 2>(2, 2).copy_from(&hxx);
        KernelJet { value: sigma * r.value, grad_x: r.grad * sigma, grad_y: -r.grad * sigma, hess }
    }

    fn grad(&self) -> Vector4<f64> {
        Vector4::new(self.grad_x.x, self.grad_x.y, self.grad_y.x, self.grad_y.y)
    }
}

/// Two points with their regions and the samples of two vector fields V, W.
#[derive(Clone, Copy, Debug)]
pub struct PointPairContext {
    pub x: Point,
    pub y: Point,
    pub region_x: Region,
    pub region_y: Region,
    pub v_x: FieldSample,
    pub v_y: FieldSample,
    pub w_x: FieldSample,
    pub w_y: FieldSample,
}

impl PointPairContext {
    /// Context with both fields zero.
    pub fn new(x: Point, y: Point, region_x: Region, region_y: Region) -> Self {
        PointPairContext {
            x,
            y,
            region_x,
            region_y,
            v_x: FieldSample::ZERO,
            v_y: FieldSample::ZERO,
            w_x: FieldSample::ZERO,
            w_y: FieldSample::ZERO,
        }
    }

    /// The same data with the roles of x and y exchanged.
    pub fn swapped(&self) -> Self {
        PointPairContext {
            x: self.y,
            y: self.x,
            region_x: self.region_y,
            region_y: self.region_x,
            v_x: self.v_y,
            v_y: self.v_x,
            w_x: self.w_y,
            w_y: self.w_x,
        }
    }

    fn check(&self) -> Result<()> {
        if self.region_x == Region::Interaction && self.region_y == Region::Interaction {
            return Err(Error::Kernel("point pair lies entirely in the interaction domain".into()));
        }
        Ok(())
    }
}

fn stack(a: &Vector2<f64>, b: &Vector2<f64>) -> Vector4<f64> {
    Vector4::new(a.x, a.y, b.x, b.y)
}

pub fn kernel_eval(spec: &KernelSpec, ctx: &PointPairContext) -> Result<f64> {
    ctx.check()?;
    Ok(spec.jet(&ctx.x, &ctx.y, ctx.region_x, ctx.region_y)?.value)
}

pub fn kernel_grad(spec: &KernelSpec, ctx: &PointPairContext) -> Result<(Vector2<f64>, Vector2<f64>)> {
    ctx.check()?;
    let j = spec.jet(&ctx.x, &ctx.y, ctx.region_x, ctx.region_y)?;
    Ok((j.grad_x, j.grad_y))
}

pub fn kernel_hessian(spec: &KernelSpec, ctx: &PointPairContext) -> Result<Matrix4<f64>> {
    ctx.check()?;
    Ok(spec.jet(&ctx.x, &ctx.y, ctx.region_x, ctx.region_y)?.hess)
}

/// Ψ¹ = ∇γᵀV(x, y) and Ψ² = γ(div V(x) + div V(y)), each at (x, y) and (y, x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiTerms {
    pub psi1_xy: f64,
    pub psi1_yx: f64,
    pub psi2_xy: f64,
    pub psi2_yx: f64,
}

pub fn psi_terms(spec: &KernelSpec, ctx: &PointPairContext) -> Result<PsiTerms> {
    ctx.check()?;
    let (a, b) = psi_one_way(spec, ctx)?;
    let (c, d) = psi_one_way(spec, &ctx.swapped())?;
    Ok(PsiTerms { psi1_xy: a, psi2_xy: b, psi1_yx: c, psi2_yx: d })
}

fn psi_one_way(spec: &KernelSpec, ctx: &PointPairContext) -> Result<(f64, f64)> {
    let j = spec.jet(&ctx.x, &ctx.y, ctx.region_x, ctx.region_y)?;
    let psi1 = j.grad_x.dot(&ctx.v_x.value) + j.grad_y.dot(&ctx.v_y.value);
    let psi2 = j.value * (ctx.v_x.div() + ctx.v_y.div());
    Ok((psi1, psi2))
}

/// The four T-terms at (x, y) (`[0]`) and (y, x) (`[1]`):
/// T₁¹ = V(x,y)ᵀ Hess γ W(x,y), T₂¹ = ∇γᵀ (DV W)(x,y),
/// T₁² = (div V(x) + div V(y)) ∇γᵀW(x,y) − γ(tr(DV DW)(x) + tr(DV DW)(y)),
/// T₂² = γ(div(DV W)(x) + div(DV W)(y)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTerms {
    pub t11: [f64; 2],
    pub t21: [f64; 2],
    pub t12: [f64; 2],
    pub t22: [f64; 2],
}

pub fn t_terms(spec: &KernelSpec, ctx: &PointPairContext) -> Result<TTerms> {
    ctx.check()?;
    let a = t_one_way(spec, ctx)?;
    let b = t_one_way(spec, &ctx.swapped())?;
    Ok(TTerms { t11: [a[0], b[0]], t21: [a[1], b[1]], t12: [a[2], b[2]], t22: [a[3], b[3]] })
}

fn t_one_way(spec: &KernelSpec, ctx: &PointPairContext) -> Result<[f64; 4]> {
    let j = spec.jet(&ctx.x, &ctx.y, ctx.region_x, ctx.region_y)?;
    let (vx, vy, wx, wy) = (&ctx.v_x, &ctx.v_y, &ctx.w_x, &ctx.w_y);
    let v = stack(&vx.value, &vy.value);
    let w = stack(&wx.value, &wy.value);
    let grad = j.grad();
    let t11 = v.dot(&(j.hess * w));
    let dvw = stack(&(vx.jacobian * wx.value), &(vy.jacobian * wy.value));
    let t21 = grad.dot(&dvw);
    let trace = (vx.jacobian * wx.jacobian).trace() + (vy.jacobian * wy.jacobian).trace();
    let t12 = (vx.div() + vy.div()) * grad.dot(&w) - j.value * trace;
    let t22 = j.value * (vx.div_of_jac_times(wx) + vy.div_of_jac_times(wy));
    Ok([t11, t21, t12, t22])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn omega1_pair(x: Point, y: Point) -> PointPairContext {
        PointPairContext::new(x, y, Region::Omega1, Region::Omega1)
    }

    #[test]
    fn gamma1_value_inside_and_outside_horizon() {
        let k = KernelSpec::gamma1(0.1);
        let inside = omega1_pair(Point::new(0.2, 0.2), Point::new(0.25, 0.2));
        assert!((kernel_eval(&k, &inside).unwrap() - 1e3).abs() < 1e-9);
        let outside = omega1_pair(Point::new(0.2, 0.2), Point::new(0.4, 0.2));
        assert_eq!(kernel_eval(&k, &outside).unwrap(), 0.0);
    }

    #[test]
    fn gamma2_value_and_gradient() {
        let k = KernelSpec::gamma2(0.1, 0.5);
        assert!((k.normalizer - 1.0 / (0.001 * PI)).abs() < 1e-9);
        let ctx = omega1_pair(Point::new(0.0, 0.0), Point::new(0.05, 0.0));
        let g = kernel_eval(&k, &ctx).unwrap();
        let expect = 10.0 * k.normalizer * 0.05f64.powi(-3);
        assert!((g - expect).abs() / expect < 1e-14);
        assert!((g - 2.546e7).abs() / 2.546e7 < 1e-3);
        let (gx, gy) = kernel_grad(&k, &ctx).unwrap();
        assert!((gx.x - 60.0 * g).abs() / (60.0 * g) < 1e-14);
        assert!((gx.x - 1.527e9).abs() / 1.527e9 < 1e-3);
        assert_eq!(gx.y, 0.0);
        assert_eq!(gy, -gx);
    }

    #[test]
    fn coincident_points_error_for_singular_class() {
        let k = KernelSpec::gamma2(0.1, 0.5);
        let ctx = omega1_pair(Point::new(0.3, 0.3), Point::new(0.3, 0.3));
        assert!(matches!(kernel_eval(&k, &ctx), Err(Error::CoincidentPoints)));
    }

    #[test]
    fn interaction_pairs_are_rejected() {
        let k = KernelSpec::gamma1(0.1);
        let ctx = PointPairContext::new(
            Point::new(0.0, 0.0),
            Point::new(0.01, 0.0),
            Region::Interaction,
            Region::Interaction,
        );
        assert!(kernel_eval(&k, &ctx).is_err());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut k = KernelSpec::gamma2(0.1, 0.5);
        k.coeff.o12 = 2.0;
        assert!(k.validate().is_err());
        let mut k = KernelSpec::gamma1(0.1);
        k.coeff.o22 = -1.0;
        assert!(k.validate().is_err());
        assert!(KernelSpec::gamma2(0.1, 1.0).validate().is_err());
        assert!(KernelSpec::gamma1(0.1).validate().is_ok());
    }
}
