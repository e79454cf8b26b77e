//! Finite-difference checks of the assembled shape derivatives on the
//! full-interaction fixture, where the discrete functional is smooth in the
//! node positions.

mod common;

use common::*;
use nalgebra::Vector2;
use nlshape::mesh::extract_interface;
use nlshape::oracle::{fd_first, fd_second, random_field, seeded_rng, structure_identity};
use nlshape::shapecalc::interface_dofs;

fn print(reports: &[nlshape::oracle::FdReport]) {
    for r in reports {
        for row in &r.rows {
            println!(
                "{} t={:e} fd={:.12e} assembled={:.12e} rel={:.3e}",
                r.label, row.t, row.fd, row.assembled, row.rel_err
            );
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mesh = circle_mesh(8, 1);
    let spec = full_interaction(false);
    let ubar = analytic_data(5.0, 2.0, 1.0);
    let forcing = varying_forcing();
    let problem = problem(&spec, &ubar, &forcing, 0.01);
    let iface = extract_interface(&mesh).unwrap();
    let active = interface_dofs(&mesh, &iface);
    let mut rng = seeded_rng(7);
    let fields: Vec<_> = (0..3).map(|_| random_field(&mesh, active.dofs(), &mut rng)).collect();
    let reports = fd_first(&mesh, &problem, &fields, &TS).unwrap();
    print(&reports);
    for r in &reports {
        assert!(r.best() <= 1e-4, "{} best {:e}", r.label, r.best());
    }
}

#[test]
fn hessian_matches_second_differences() {
    let mesh = circle_mesh(8, 1);
    let spec = full_interaction(false);
    let ubar = analytic_data(5.0, 2.0, 1.0);
    let forcing = varying_forcing();
    let problem = problem(&spec, &ubar, &forcing, 0.01);
    let iface = extract_interface(&mesh).unwrap();
    let active = interface_dofs(&mesh, &iface);
    let mut rng = seeded_rng(11);
    let diag: Vec<_> = (0..2).map(|_| random_field(&mesh, active.dofs(), &mut rng)).collect();
    let pairs = vec![(random_field(&mesh, active.dofs(), &mut rng), random_field(&mesh, active.dofs(), &mut rng))];
    let reports = fd_second(&mesh, &problem, &diag, &pairs, &TS).unwrap();
    print(&reports);
    for r in &reports {
        let tol = if r.label.starts_with("hess_diag") { 1e-3 } else { 1e-2 };
        assert!(r.best() <= tol, "{} best {:e}", r.label, r.best());
    }
}

#[test]
fn structure_identity_holds() {
    let mesh = circle_mesh(8, 1);
    let spec = full_interaction(false);
    let ubar = analytic_data(5.0, 2.0, 1.0);
    let forcing = varying_forcing();
    let problem = problem(&spec, &ubar, &forcing, 0.01);
    let iface = extract_interface(&mesh).unwrap();
    let active = interface_dofs(&mesh, &iface);
    let v = bump_field(Vector2::new(3.0, -2.0));
    let w = random_field(&mesh, active.dofs(), &mut seeded_rng(3));
    let report = structure_identity(&mesh, &problem, &v, &w, &TS).unwrap();
    print(std::slice::from_ref(&report));
    assert!(report.best() <= 1e-3, "best {:e}", report.best());
}
