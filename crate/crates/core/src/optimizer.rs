//! The second-order shape optimization loop: data generation, the
//! ε-regularized Newton step and the mesh update.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_load, assemble_mass, check_vector, Assembler, SparseOperator};
use crate::error::{Error, Result};
use crate::fe::{interpolate_data, DataField, DiscreteData, FeFunction, Forcing, Quadratic, Space};
use crate::kernel::KernelSpec;
use crate::linsolve::{factorize, factorize_with, solve_state, SolverKind, RESIDUAL_TOL};
use crate::mesh::{box_mesh, deform_mesh, load_mesh, mesh_quality, BoxMeshSpec, Mesh, MeshFormat, RegionTags};
use crate::output::{self, DiagnosticsRow, HistoryRow};
use crate::shapecalc::{derivative_bundle, solve_configuration, DerivativeBundle, ShapeProblem};

/// Where a mesh comes from: a file or the structured generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    File {
        path: PathBuf,
        #[serde(default)]
        tags: RegionTags,
    },
    Generated(BoxMeshSpec),
}

impl MeshSource {
    pub fn load(&self) -> Result<Mesh> {
        match self {
            MeshSource::File { path, tags } => load_mesh(path, MeshFormat::from_path(path), tags),
            MeshSource::Generated(spec) => box_mesh(spec),
        }
    }
}

/// Tracking data: computed on a target mesh, read from a data file, or a
/// quadratic polynomial (used by the verification suites).
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Target(MeshSource),
    File { path: PathBuf, tags: RegionTags },
    Quadratic([f64; 6]),
}

/// A validated run description.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kernel: KernelSpec,
    /// Perimeter weight.
    pub nu: f64,
    /// Weight of the H¹ regularizer in the Newton system.
    pub epsilon: f64,
    pub maxiter: usize,
    /// Stop once the L² norm of the step falls below this.
    pub tol: f64,
    pub max_halvings: usize,
    /// Forcing values on Ω₁ and Ω₂.
    pub forcing: [f64; 2],
    pub initial_mesh: MeshSource,
    pub data: DataSource,
    pub solver: SolverKind,
    pub output_dir: Option<PathBuf>,
    /// Write one VTK file per iteration.
    pub snapshots: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("nu must be nonnegative, got {}", self.nu)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.maxiter < 1 {
            return Err(Error::Config("maxiter must be at least 1".into()));
        }
        if self.forcing.iter().any(|f| !f.is_finite()) {
            return Err(Error::Config("forcing values must be finite".into()));
        }
        Ok(())
    }

    pub fn forcing(&self) -> Forcing {
        Forcing::constant(self.forcing[0], self.forcing[1])
    }
}

/// One completed iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Objective on the mesh the step was computed on.
    pub objective: f64,
    /// L²(Ω) norm of the full Newton step.
    pub defnorm: f64,
    pub walltime: f64,
    pub mesh_file: Option<String>,
    pub halvings: usize,
    pub grad_inf: f64,
    pub perimeter: f64,
    pub active_dofs: usize,
    pub symmetry_defect: f64,
    pub min_angle: f64,
}

impl IterationRecord {
    pub fn history_row(&self) -> HistoryRow {
        HistoryRow {
            iter: self.iter,
            objective: self.objective,
            defnorm: self.defnorm,
            walltime: self.walltime,
            mesh_file: self.mesh_file.clone().unwrap_or_default(),
        }
    }

    pub fn diagnostics_row(&self) -> DiagnosticsRow {
        DiagnosticsRow {
            iter: self.iter,
            halvings: self.halvings,
            step_scale: 0.5f64.powi(self.halvings as i32),
            grad_inf: self.grad_inf,
            perimeter: self.perimeter,
            active_dofs: self.active_dofs,
            symmetry_defect: self.symmetry_defect,
            min_angle_deg: self.min_angle,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
    /// The step norm fell below the tolerance.
    pub converged: bool,
    pub final_mesh: Mesh,
}

/// Solve the state on the target configuration; the result is the tracking data.
pub fn generate_data(target: &Mesh, spec: &KernelSpec, forcing: &Forcing, solver: SolverKind) -> Result<DataField> {
    let asm = Assembler::new(target, spec)?;
    let fact = factorize_with(&asm.stiffness(), solver)?;
    let u = solve_state(&fact, target, &assemble_load(target, forcing))?;
    Ok(DataField::Discrete(DiscreteData { mesh: target.clone(), values: u.coeffs().to_vec() }))
}

/// L²(Ω) norm of a vector P1 field: sqrt(Σ_c w_cᵀ M w_c) with the scalar mass matrix.
pub fn vector_l2_norm(mass: &SparseOperator, mesh: &Mesh, w: &FeFunction) -> Result<f64> {
    check_vector(mesh, w, "step")?;
    let free = w.free_values(mesh);
    let n = mesh.num_free();
    let mut sum = 0.0;
    for c in 0..2 {
        let comp: Vec<f64> = (0..n).map(|i| free[2 * i + c]).collect();
        sum += mass.bilinear(&comp, &comp);
    }
    Ok(sum.max(0.0).sqrt())
}

/// Solve (H + εR) W = −g over all free vector dofs, with H zero off the
/// interface-supported dofs.
///
/// The active block is reduced by a Schur complement of the sparse
/// regularizer; the dense Schur matrix is Cholesky-factorized, so an
/// indefinite system is reported as [`Error::NotSpd`].
pub fn newton_step(mesh: &Mesh, bundle: &DerivativeBundle, epsilon: f64) -> Result<FeFunction> {
    let n = 2 * mesh.num_free();
    let reg = &bundle.reg;
    let active = bundle.interface_dofs.dofs();
    if bundle.grad.len() != n || reg.nrows() != n || bundle.hess.nrows() != active.len() {
        return Err(Error::Dimension("derivative bundle does not match the mesh".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if bundle.grad.iter().all(|g| *g == 0.0) {
        return Ok(FeFunction::zeros(mesh, Space::VectorP1));
    }
    let mut pos_a = vec![None; n];
    for (i, &d) in active.iter().enumerate() {
        pos_a[d] = Some(i);
    }
    let mut pos_b = vec![None; n];
    let mut rest = Vec::new();
    for d in 0..n {
        if pos_a[d].is_none() {
            pos_b[d] = Some(rest.len());
            rest.push(d);
        }
    }
    let (na, nb) = (active.len(), rest.len());
    let g_a = DVector::from_iterator(na, active.iter().map(|&d| bundle.grad[d]));
    let g_b: Vec<f64> = rest.iter().map(|&d| bundle.grad[d]).collect();

    // S = H_aa + ε(R_aa − R_ab R_bb⁻¹ R_ba), rhs = −g_a + R_ab R_bb⁻¹ g_b.
    let mut schur = bundle.hess.clone() + reg.restrict(&pos_a, &pos_a, na, na).to_dense() * epsilon;
    let mut rhs = -g_a;
    let mut coupling = DMatrix::zeros(nb, na);
    let mut y = vec![0.0; nb];
    let r_ba = reg.restrict(&pos_b, &pos_a, nb, na);
    if nb > 0 {
        let fact = factorize(&reg.restrict(&pos_b, &pos_b, nb, nb))?;
        coupling = fact.solve_columns(&r_ba.to_dense(), false)?;
        y = fact.solve(&g_b)?;
        for (i, j, v) in r_ba.triplets() {
            // R_ab = R_baᵀ by symmetry of R.
            for k in 0..na {
                schur[(j, k)] -= epsilon * v * coupling[(i, k)];
            }
            rhs[j] += v * y[i];
        }
    }
    let schur = (&schur + schur.transpose()) * 0.5;
    let chol = schur.cholesky().ok_or(Error::NotSpd)?;
    let w_a = chol.solve(&rhs);
    let w_b = -(&coupling * &w_a);

    let mut w = vec![0.0; n];
    for (i, &d) in active.iter().enumerate() {
        w[d] = w_a[i];
    }
    for (i, &d) in rest.iter().enumerate() {
        w[d] = w_b[i] - y[i] / epsilon;
    }
    check_newton_residual(bundle, epsilon, &w, active)?;
    FeFunction::from_free(mesh, Space::VectorP1, &w)
}

fn check_newton_residual(bundle: &DerivativeBundle, epsilon: f64, w: &[f64], active: &[usize]) -> Result<()> {
    let mut r = bundle.reg.mul_vec(w);
    for v in r.iter_mut() {
        *v *= epsilon;
    }
    let w_a = DVector::from_iterator(active.len(), active.iter().map(|&d| w[d]));
    let hw = &bundle.hess * w_a;
    for (i, &d) in active.iter().enumerate() {
        r[d] += hw[i];
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for (ri, gi) in r.iter_mut().zip(&bundle.grad) {
        *ri += gi;
    }
    let res = norm(&r) / norm(&bundle.grad);
    if !(res < RESIDUAL_TOL) {
        return Err(Error::Residual { residual: res, tol: RESIDUAL_TOL });
    }
    Ok(())
}

/// Deform by `w`, halving the step on element inversion. Returns the new mesh
/// and the number of halvings.
pub fn apply_step(mesh: &Mesh, w: &FeFunction, max_halvings: usize) -> Result<(Mesh, usize)> {
    let mut scale = 1.0;
    for halvings in 0..=max_halvings {
        match deform_mesh(mesh, w, scale) {
            Ok(m) => return Ok((m, halvings)),
            Err(Error::InvertedElement { .. }) if halvings < max_halvings => scale *= 0.5,
            Err(e) => return Err(e),
        }
    }
    unreachable!("the last attempt returns")
}

/// Load or compute the tracking data.
pub fn load_data(config: &RunConfig) -> Result<DataField> {
    match &config.data {
        DataSource::Target(source) => {
            let target = source.load()?;
            generate_data(&target, &config.kernel, &config.forcing(), config.solver)
        }
        DataSource::File { path, tags } => Ok(DataField::Discrete(output::read_data_file(path, tags)?)),
        DataSource::Quadratic(c) => Ok(DataField::Analytic(Arc::new(Quadratic(*c)))),
    }
}

/// Run the loop without an observer.
pub fn run(config: &RunConfig) -> Result<RunHistory> {
    run_with(config, |_| {})
}

/// Run the optimization loop, calling `observe` after every iteration.
///
/// Iteration k solves on the current mesh, records J and the step norm, then
/// moves the mesh. The loop stops once the step norm falls below `tol` (that
/// step is still applied) or after `maxiter` iterations.
pub fn run_with(config: &RunConfig, mut observe: impl FnMut(&IterationRecord)) -> Result<RunHistory> {
    config.validate()?;
    let start = Instant::now();
    let data = load_data(config)?;
    let mut mesh = config.initial_mesh.load()?;
    let forcing = config.forcing();
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut records = Vec::new();
    let mut converged = false;
    for k in 0..config.maxiter {
        let ubar = interpolate_data(&data, &mesh)?;
        let problem =
            ShapeProblem { spec: &config.kernel, ubar: &ubar, forcing: &forcing, nu: config.nu, solver: config.solver };
        let solved = solve_configuration(&mesh, &problem)?;
        let bundle = derivative_bundle(&solved, &problem)?;
        let w = newton_step(&mesh, &bundle, config.epsilon)?;
        let defnorm = vector_l2_norm(&assemble_mass(&mesh), &mesh, &w)?;
        let mesh_file = match (&config.output_dir, config.snapshots) {
            (Some(dir), true) => {
                let name = format!("mesh_{k:04}.vtk");
                output::write_vtk(&dir.join(&name), &mesh, &solved.u, &solved.v)?;
                Some(name)
            }
            _ => None,
        };
        let (next, halvings) = apply_step(&mesh, &w, config.max_halvings)?;
        let record = IterationRecord {
            iter: k,
            objective: solved.objective,
            defnorm,
            walltime: start.elapsed().as_secs_f64(),
            mesh_file,
            halvings,
            grad_inf: bundle.grad.iter().fold(0.0, |m, g| m.max(g.abs())),
            perimeter: solved.interface.length(&mesh),
            active_dofs: bundle.interface_dofs.len(),
            symmetry_defect: bundle.symmetry_defect,
            min_angle: mesh_quality(&next).0,
        };
        observe(&record);
        records.push(record);
        drop(solved);
        mesh = next;
        if let Some(dir) = &config.output_dir {
            write_run_files(dir, &records)?;
        }
        if defnorm < config.tol {
            converged = true;
            break;
        }
    }
    if let Some(dir) = &config.output_dir {
        crate::mesh::write_native(&mesh, &dir.join("final_mesh.json"))?;
    }
    Ok(RunHistory { records, converged, final_mesh: mesh })
}

/// Rewrite history.csv and diagnostics.csv under `dir`.
pub fn write_run_files(dir: &Path, records: &[IterationRecord]) -> Result<()> {
    let history: Vec<_> = records.iter().map(IterationRecord::history_row).collect();
    let diagnostics: Vec<_> = records.iter().map(IterationRecord::diagnostics_row).collect();
    output::write_history(&dir.join("history.csv"), &history)?;
    output::write_diagnostics(&dir.join("diagnostics.csv"), &diagnostics)
}
