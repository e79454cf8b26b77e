//! Assembled forms against the dense brute-force oracle, and structural
//! properties of the stiffness.

mod common;

use common::*;
use nlshape::assembly::assemble_stiffness_extended;
use nlshape::fe::Forcing;
use nlshape::kernel::KernelSpec;
use nlshape::oracle::{assembly_check, oracle_for};

fn check(spec: &KernelSpec, forcing: &Forcing, expected_tol: f64) {
    let mesh = hexagon_mesh();
    let ubar = quadratic_data();
    let problem = problem(spec, &ubar, forcing, 0.01);
    let (oracle, tol) = oracle_for(&mesh, spec);
    assert_eq!(tol, expected_tol);
    for c in assembly_check(&problem, &oracle, 5).unwrap() {
        println!("{} rel={:.3e}", c.form, c.rel_err);
        assert!(c.rel_err <= tol, "{} rel {:e}", c.form, c.rel_err);
    }
}

#[test]
fn full_interaction_matches_oracle() {
    check(&full_interaction(false), &varying_forcing(), 1e-10);
}

#[test]
fn truncated_integrable_matches_oracle() {
    check(&KernelSpec::gamma1(0.6), &Forcing::constant(10.0, -10.0), 1e-6);
}

#[test]
fn truncated_singular_matches_oracle() {
    check(&KernelSpec::gamma2(0.6, 0.5), &Forcing::constant(10.0, -10.0), 1e-6);
}

fn null_space_and_symmetry(spec: &KernelSpec) -> (f64, f64) {
    let mesh = square_mesh(6, 1);
    let a = assemble_stiffness_extended(&mesh, spec).unwrap();
    let ones = vec![1.0; a.ncols()];
    let image: f64 = a.mul_vec(&ones).iter().map(|x| x * x).sum::<f64>().sqrt();
    (image / a.frobenius_norm(), a.symmetry_defect())
}

#[test]
fn symmetric_kernels_annihilate_constants() {
    for spec in
        [full_interaction(true), KernelSpec::gamma1(0.2), KernelSpec::gamma2(0.2, 0.5), KernelSpec::gamma2(0.2, 0.8)]
    {
        let (null, sym) = null_space_and_symmetry(&spec);
        println!("{:?} null={null:.3e} sym={sym:.3e}", spec.class);
        assert!(null <= 1e-10, "constants not annihilated: {null:e}");
        assert!(sym < 1e-10, "symmetry defect {sym:e}");
    }
}

#[test]
fn nonsymmetric_coefficients_break_symmetry() {
    let (_, sym) = null_space_and_symmetry(&full_interaction(false));
    assert!(sym > 1e-3, "{sym:e}");
}
