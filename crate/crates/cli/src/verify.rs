//! The `verify` suites. Each writes CSV reports to the output directory and
//! fails with exit code 3 when a tolerance is missed.

use std::fs;
use std::path::Path;

use nalgebra::Vector2;
use nlshape::config::ConfigFile;
use nlshape::fe::interpolate_data;
use nlshape::kernel::KernelClass;
use nlshape::mesh::{extract_interface, Mesh};
use nlshape::optimizer::{load_data, RunConfig};
use nlshape::oracle::{
    assembly_check, bump_field, fd_first, fd_second, mesh_diameter, norm_checks, oracle_for, random_field, seeded_rng,
    structure_identity, FdReport,
};
use nlshape::output::write_rows;
use nlshape::shapecalc::{interface_dofs, ShapeProblem};

use crate::{Failure, Suite};

/// Largest mesh the dense assembly oracle is run on.
const MAX_ORACLE_TRIANGLES: usize = 32;

/// Tolerances of the finite-difference suites: (gradient, Hessian diagonal,
/// polarization, structure identity).
fn fd_tolerances(run: &RunConfig, mesh: &Mesh) -> [f64; 4] {
    let full = run.kernel.class == KernelClass::Integrable && run.kernel.delta >= mesh_diameter(mesh);
    if full {
        [1e-4, 1e-3, 1e-2, 1e-3]
    } else {
        [1e-2; 4]
    }
}

struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn check(&mut self, name: &str, value: f64, tol: f64) {
        let ok = value <= tol;
        println!("{} {name}: {value:.3e} (tol {tol:.0e})", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures.push(name.to_string());
        }
    }

    fn finish(self) -> Result<(), Failure> {
        if self.failures.is_empty() {
            Ok(())
        } else {
            Err(Failure::Tolerance(format!("tolerance missed: {}", self.failures.join(", "))))
        }
    }
}

fn write_fd(dir: &Path, suite: &str, reports: &[FdReport]) -> Result<(), Failure> {
    for r in reports {
        r.write_csv(&dir.join(format!("{suite}_{}.csv", r.label))).map_err(Failure::from_run)?;
    }
    Ok(())
}

pub fn run_suite(cfg: &ConfigFile, run: &RunConfig, suite: Suite) -> Result<(), Failure> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mesh = run.initial_mesh.load().map_err(Failure::from_run)?;
    let data = load_data(run).map_err(Failure::from_run)?;
    let ubar = interpolate_data(&data, &mesh).map_err(Failure::from_run)?;
    let forcing = run.forcing();
    let problem = ShapeProblem { spec: &run.kernel, ubar: &ubar, forcing: &forcing, nu: run.nu, solver: run.solver };
    let params = &cfg.verify;
    let mut rng = seeded_rng(params.seed);
    let mut outcome = Outcome { failures: Vec::new() };
    let [tol_grad, tol_diag, tol_polar, tol_structure] = fd_tolerances(run, &mesh);

    match suite {
        Suite::Fd1 | Suite::Fd2 => {
            let iface = extract_interface(&mesh).map_err(Failure::from_run)?;
            let active = interface_dofs(&mesh, &iface);
            let fields: Vec<_> = (0..params.fields).map(|_| random_field(&mesh, active.dofs(), &mut rng)).collect();
            if matches!(suite, Suite::Fd1) {
                let reports = fd_first(&mesh, &problem, &fields, &params.t).map_err(Failure::from_run)?;
                write_fd(dir, "fd1", &reports)?;
                let tol = params.tol_first.unwrap_or(tol_grad);
                for r in &reports {
                    outcome.check(&r.label, r.best(), tol);
                }
            } else {
                let pair = (random_field(&mesh, active.dofs(), &mut rng), random_field(&mesh, active.dofs(), &mut rng));
                let mut reports = fd_second(&mesh, &problem, &fields, &[pair], &params.t).map_err(Failure::from_run)?;
                let smooth = bump_field(Vector2::new(3.0, -2.0));
                let w = random_field(&mesh, active.dofs(), &mut rng);
                reports.push(structure_identity(&mesh, &problem, &smooth, &w, &params.t).map_err(Failure::from_run)?);
                write_fd(dir, "fd2", &reports)?;
                for r in &reports {
                    let tol = match r.label.as_str() {
                        l if l.starts_with("hess_diag") => tol_diag,
                        l if l.starts_with("hess_polar") => tol_polar,
                        _ => tol_structure,
                    };
                    outcome.check(&r.label, r.best(), tol);
                }
            }
        }
        Suite::Assembly => {
            if mesh.num_triangles() > MAX_ORACLE_TRIANGLES {
                return Err(Failure::Config(format!(
                    "the assembly suite needs a mesh with at most {MAX_ORACLE_TRIANGLES} triangles, got {}",
                    mesh.num_triangles()
                )));
            }
            let (oracle, tol) = oracle_for(&mesh, &run.kernel);
            let checks = assembly_check(&problem, &oracle, params.seed).map_err(Failure::from_run)?;
            write_rows(&dir.join("assembly.csv"), &checks).map_err(Failure::from_run)?;
            for c in &checks {
                outcome.check(&c.form, c.rel_err, tol);
            }
        }
        Suite::Norms => {
            let report =
                norm_checks(&mesh, &run.kernel, 10 * params.fields.max(1), params.seed).map_err(Failure::from_run)?;
            write_rows(&dir.join("norms.csv"), &report.rows()).map_err(Failure::from_run)?;
            for row in report.rows() {
                println!("{}: [{:.6e}, {:.6e}]", row.quantity, row.lower, row.upper);
            }
            if !report.passes(1e-8, 1e8) {
                outcome.failures.push("norm equivalence".into());
            }
        }
    }
    outcome.finish()
}
