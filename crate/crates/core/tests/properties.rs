//! Property tests for invariants that hold for every input.

mod common;

use common::*;
use nalgebra::{DMatrix, Vector2};
use nlshape::fe::Space;
use nlshape::kernel::{kernel_eval, kernel_grad, psi_terms, Coefficients, KernelClass, KernelSpec, PointPairContext};
use nlshape::mesh::{deform_mesh, extract_interface, read_native, write_native, Point, Region};
use nlshape::optimizer::newton_step;
use nlshape::oracle::{random_field, seeded_rng};
use nlshape::shapecalc::{interface_dofs, regularizer_matrix, DerivativeBundle};
use proptest::prelude::*;

fn region() -> impl Strategy<Value = Region> {
    prop_oneof![Just(Region::Omega1), Just(Region::Omega2), Just(Region::Interaction)]
}

fn kernel() -> impl Strategy<Value = KernelSpec> {
    (0.05f64..1.0, 0.1f64..0.9, any::<bool>()).prop_map(|(delta, s, singular)| {
        if singular {
            KernelSpec::gamma2(delta, s)
        } else {
            KernelSpec::gamma1(delta)
        }
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn symmetric_kernels_are_symmetric(
        spec in kernel(),
        x in (-1.0f64..1.0, -1.0f64..1.0),
        offset in (-0.7f64..0.7, -0.7f64..0.7),
        rx in region(),
        ry in region(),
    ) {
        prop_assume!(!(rx == Region::Interaction && ry == Region::Interaction));
        let x = Point::new(x.0, x.1);
        let y = x + Vector2::new(offset.0, offset.1);
        prop_assume!((y - x).norm() > 1e-3);
        let ctx = PointPairContext::new(x, y, rx, ry);
        let a = kernel_eval(&spec, &ctx).unwrap();
        let b = kernel_eval(&spec, &ctx.swapped()).unwrap();
        prop_assert!(close(a, b), "{a} vs {b}");
    }

    #[test]
    fn radial_kernel_gradients_are_opposite(
        spec in kernel(),
        offset in (-0.7f64..0.7, -0.7f64..0.7),
        rx in region(),
        ry in region(),
    ) {
        prop_assume!(!(rx == Region::Interaction && ry == Region::Interaction));
        let x = Point::new(0.2, -0.1);
        let y = x + Vector2::new(offset.0, offset.1);
        prop_assume!((y - x).norm() > 1e-3);
        let (gx, gy) = kernel_grad(&spec, &PointPairContext::new(x, y, rx, ry)).unwrap();
        prop_assert!((gx + gy).norm() <= 1e-12 * gx.norm().max(1.0));
    }

    #[test]
    fn swapping_the_pair_swaps_the_psi_terms(
        offset in (-0.3f64..0.3, -0.3f64..0.3),
        v in prop::array::uniform4(-1.0f64..1.0),
        rx in region(),
        ry in region(),
    ) {
        prop_assume!(!(rx == Region::Interaction && ry == Region::Interaction));
        let spec = KernelSpec {
            class: KernelClass::Integrable,
            delta: 0.5,
            s: 0.5,
            coeff: Coefficients { o11: 0.5, o12: 1.0, o21: 2.0, o22: 3.0, o1i: 1.0, o2i: 1.5 },
            normalizer: 1.0,
        };
        let x = Point::new(0.1, 0.3);
        let y = x + Vector2::new(offset.0, offset.1);
        let mut ctx = PointPairContext::new(x, y, rx, ry);
        ctx.v_x.value = Vector2::new(v[0], v[1]);
        ctx.v_y.value = Vector2::new(v[2], v[3]);
        let a = psi_terms(&spec, &ctx).unwrap();
        let b = psi_terms(&spec, &ctx.swapped()).unwrap();
        prop_assert!(close(a.psi1_xy, b.psi1_yx) && close(a.psi1_yx, b.psi1_xy));
        prop_assert!(close(a.psi2_xy, b.psi2_yx) && close(a.psi2_yx, b.psi2_xy));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn deformation_by_zero_step_is_the_identity(seed in any::<u64>(), cells in 4usize..10) {
        let mesh = square_mesh(cells, 1);
        let w = random_field(&mesh, &(0..2 * mesh.num_free()).collect::<Vec<_>>(), &mut seeded_rng(seed));
        let moved = deform_mesh(&mesh, &w, 0.0).unwrap();
        prop_assert_eq!(moved.vertices(), mesh.vertices());
        prop_assert_eq!(moved.triangles(), mesh.triangles());
    }

    #[test]
    fn deformation_is_reversible(seed in any::<u64>(), t in -0.01f64..0.01) {
        let mesh = circle_mesh(6, 1);
        let iface = extract_interface(&mesh).unwrap();
        let active = interface_dofs(&mesh, &iface);
        let w = random_field(&mesh, active.dofs(), &mut seeded_rng(seed));
        let there = deform_mesh(&mesh, &w, t).unwrap();
        let back = deform_mesh(&there, &w, -t).unwrap();
        for (p, q) in back.vertices().iter().zip(mesh.vertices()) {
            prop_assert!((p - q).norm() <= 1e-15);
        }
    }

    #[test]
    fn native_format_round_trips(cells in 4usize..12, collar in 1usize..3) {
        let mesh = circle_mesh(cells, collar);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.json");
        write_native(&mesh, &path).unwrap();
        let back = read_native(&path).unwrap();
        prop_assert_eq!(back.vertices(), mesh.vertices());
        prop_assert_eq!(back.triangles(), mesh.triangles());
        prop_assert_eq!(back.regions(), mesh.regions());
    }

    #[test]
    fn gradient_flow_step_is_linear(
        seed in any::<u64>(),
        scale in -5.0f64..5.0,
        epsilon in 0.1f64..10.0,
    ) {
        prop_assume!(scale.abs() > 1e-3);
        let mesh = square_mesh(5, 1);
        let active = interface_dofs(&mesh, &extract_interface(&mesh).unwrap());
        let n = 2 * mesh.num_free();
        let g = random_field(&mesh, &(0..n).collect::<Vec<_>>(), &mut seeded_rng(seed)).free_values(&mesh);
        let bundle = |grad: Vec<f64>| DerivativeBundle {
            grad,
            hess: DMatrix::zeros(active.len(), active.len()),
            reg: regularizer_matrix(&mesh),
            interface_dofs: active.clone(),
            symmetry_defect: 0.0,
        };
        let w = newton_step(&mesh, &bundle(g.clone()), epsilon).unwrap();
        let scaled = newton_step(&mesh, &bundle(g.iter().map(|x| x * scale).collect()), epsilon).unwrap();
        let expect = w.scale(scale);
        let norm = expect.coeffs().iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff = scaled.axpy(-1.0, &expect);
        let err = diff.coeffs().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * norm, "{err} vs {norm}");
        prop_assert_eq!(w.space(), Space::VectorP1);
    }

    #[test]
    fn interface_length_is_translation_invariant(dx in -3.0f64..3.0, dy in -3.0f64..3.0) {
        let mesh = circle_mesh(8, 1);
        let shifted = mesh.with_vertices(mesh.vertices().iter().map(|p| p + Vector2::new(dx, dy)).collect()).unwrap();
        let a = extract_interface(&mesh).unwrap().length(&mesh);
        let b = extract_interface(&shifted).unwrap().length(&shifted);
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}
