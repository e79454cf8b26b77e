//! Perimeter calculus, stationarity at the data-generating shape and the
//! norm-equivalence report.

mod common;

use std::f64::consts::PI;

use common::*;
use nalgebra::{Matrix2, Vector2};
use nlshape::fe::{interpolate_data, Forcing, SmoothVectorField};
use nlshape::kernel::KernelSpec;
use nlshape::mesh::extract_interface;
use nlshape::optimizer::generate_data;
use nlshape::oracle::norm_checks;
use nlshape::shapecalc::{first_derivative_vector, perimeter_first, perimeter_second, solve_configuration};

const RADIUS: f64 = 0.25;

fn dilation() -> SmoothVectorField {
    SmoothVectorField::new(|p| Vector2::new(p.x - 0.5, p.y - 0.5), |_| Matrix2::identity(), |_| Vector2::zeros())
}

fn rotation() -> SmoothVectorField {
    SmoothVectorField::new(
        |p| Vector2::new(-(p.y - 0.5), p.x - 0.5),
        |_| Matrix2::new(0.0, -1.0, 1.0, 0.0),
        |_| Vector2::zeros(),
    )
}

#[test]
fn perimeter_converges_quadratically() {
    let mut errors = Vec::new();
    for cells in [16, 32, 64, 128] {
        let mesh = circle_mesh(cells, 1);
        let iface = extract_interface(&mesh).unwrap();
        // Along the dilation field the derivative of the perimeter is the perimeter itself.
        let d = perimeter_first(&mesh, &iface, &dilation());
        let err = (d - 2.0 * PI * RADIUS).abs();
        println!("cells={cells} derivative={d:.12} err={err:.3e}");
        errors.push(err);
    }
    // Least-squares slope of log(err) against log(h); h halves per level.
    let n = errors.len() as f64;
    let xs: Vec<f64> = (0..errors.len()).map(|k| -(k as f64) * 2f64.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let order = cov / var;
    println!("observed order {order:.3}");
    assert!(order > 1.8, "order {order}");
}

#[test]
fn rotation_and_dilation() {
    for cells in [16, 40] {
        let mesh = circle_mesh(cells, 1);
        let iface = extract_interface(&mesh).unwrap();
        let len = iface.length(&mesh);
        let rot = perimeter_first(&mesh, &iface, &rotation());
        assert!(rot.abs() <= 1e-14 * len, "rotation derivative {rot:e}");
        let second = perimeter_second(&mesh, &iface, &dilation(), &dilation());
        assert!(second.abs() <= 1e-14 * len, "dilation second derivative {second:e}");
    }
}

fn stationarity(spec: &KernelSpec, forcing: &Forcing) {
    let mesh = circle_mesh(12, 2);
    let data = generate_data(&mesh, spec, forcing, nlshape::linsolve::SolverKind::Direct).unwrap();
    let ubar = interpolate_data(&data, &mesh).unwrap();
    let problem = problem(spec, &ubar, forcing, 0.0);
    let solved = solve_configuration(&mesh, &problem).unwrap();
    let grad = first_derivative_vector(&solved, &problem).unwrap();
    let inf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    println!("J={:e} |grad|_inf={inf:e}", solved.objective);
    assert!(inf <= 1e-8 * solved.objective.abs().max(1.0), "{inf:e}");
}

#[test]
fn data_shape_is_stationary() {
    let forcing = Forcing::constant(10.0, -10.0);
    stationarity(&KernelSpec::gamma1(0.1), &forcing);
    stationarity(&KernelSpec::gamma2(0.1, 0.5), &forcing);
    stationarity(&full_interaction(false), &varying_forcing());
}

#[test]
fn norm_equivalence_report() {
    let fixtures = [("hexagon", hexagon_mesh()), ("circle", circle_mesh(8, 1)), ("square", square_mesh(8, 1))];
    for (name, mesh) in &fixtures {
        for spec in [KernelSpec::gamma1(0.3), KernelSpec::gamma2(0.3, 0.5), full_interaction(false)] {
            let r = norm_checks(mesh, &spec, 20, 1).unwrap();
            println!(
                "{name} {:?} coercivity={:.3e} l2={:?} hs={:?} sampled={:?}",
                spec.class, r.coercivity, r.l2_interval, r.hs_interval, r.sampled
            );
            assert!(r.passes(1e-12, 1e12), "{name}: {r:?}");
            assert!(r.sampled.0 >= r.l2_interval.0 * (1.0 - 1e-9) && r.sampled.1 <= r.l2_interval.1 * (1.0 + 1e-9));
        }
    }
}
