//! Independent verification: finite differences of the discrete reduced
//! functional under mesh deformation, the structure identity for the second
//! derivative, dense brute-force re-assembly, and norm-equivalence reports.
//!
//! The finite differences only use state solves and objective evaluation on
//! re-assembled deformed meshes.

pub mod dense;

pub use dense::{DenseOracle, PairQuadrature};

use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::assembly::{
    assemble_load, assemble_mass, assemble_objective, assemble_regularizer, assemble_second_order_forms,
    assemble_shape_residuals, assemble_stiffness, assemble_tracking_load, averaged_adjoint_rhs, tracking_value,
    ActiveDofs, Assembler, SparseOperator, StateData,
};
use crate::error::{Error, Result};
use crate::fe::{FeFunction, JacobianProduct, SmoothVectorField, Space, VectorField};
use crate::kernel::{Coefficients, KernelClass, KernelSpec};
use crate::linsolve::{factorize_with, solve_averaged_adjoints, solve_state};
use crate::mesh::{deform_mesh, extract_interface, Mesh, Point};
use crate::quadrature::PairRules;
use crate::shapecalc::{
    first_derivative_vector, hessian_matrix, perimeter_first, perimeter_second, solve_configuration, ShapeProblem,
};

/// One step size of a finite-difference sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdRow {
    pub t: f64,
    pub fd: f64,
    pub assembled: f64,
    pub rel_err: f64,
}

/// A finite-difference sweep for one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub label: String,
    pub rows: Vec<FdRow>,
}

impl FdReport {
    /// Smallest relative error over the sweep.
    pub fn best(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_err).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// |a − b| / max(|a|, |b|), and 0 when both vanish.
pub fn relative_error(fd: f64, assembled: f64) -> f64 {
    let scale = fd.abs().max(assembled.abs());
    if scale == 0.0 {
        0.0
    } else {
        (fd - assembled).abs() / scale
    }
}

fn report(label: String, ts: &[f64], fd: impl Fn(f64) -> Result<f64>, assembled: f64) -> Result<FdReport> {
    let rows = ts
        .iter()
        .map(|&t| {
            let fd = fd(t)?;
            Ok(FdRow { t, fd, assembled, rel_err: relative_error(fd, assembled) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FdReport { label, rows })
}

/// J^red on `mesh`: assemble, solve the state, evaluate ½∫(u − ū)² + ν|Γ|.
pub fn reduced_functional(mesh: &Mesh, problem: &ShapeProblem) -> Result<f64> {
    let a = assemble_stiffness(mesh, problem.spec)?;
    let fact = factorize_with(&a, problem.solver)?;
    let u = solve_state(&fact, mesh, &assemble_load(mesh, problem.forcing))?;
    assemble_objective(mesh, &u, problem.ubar, problem.nu, &extract_interface(mesh)?)
}

fn functional_along(mesh: &Mesh, problem: &ShapeProblem, field: &FeFunction, t: f64) -> Result<f64> {
    reduced_functional(&deform_mesh(mesh, field, t)?, problem)
}

/// First central difference (J(+t) − J(−t))/(2t) against the assembled gradient.
pub fn fd_first(mesh: &Mesh, problem: &ShapeProblem, fields: &[FeFunction], ts: &[f64]) -> Result<Vec<FdReport>> {
    let solved = solve_configuration(mesh, problem)?;
    let grad = first_derivative_vector(&solved, problem)?;
    fields
        .iter()
        .enumerate()
        .map(|(i, field)| {
            let assembled = dot(&grad, &field.free_values(mesh));
            report(
                format!("grad_{i}"),
                ts,
                |t| {
                    Ok((functional_along(mesh, problem, field, t)? - functional_along(mesh, problem, field, -t)?)
                        / (2.0 * t))
                },
                assembled,
            )
        })
        .collect()
}

fn second_difference(mesh: &Mesh, problem: &ShapeProblem, field: &FeFunction, j0: f64, t: f64) -> Result<f64> {
    let plus = functional_along(mesh, problem, field, t)?;
    let minus = functional_along(mesh, problem, field, -t)?;
    Ok((plus - 2.0 * j0 + minus) / (t * t))
}

/// Hessian quadratic form vᵀHw over the interface-supported dofs.
fn hessian_form(h: &DMatrix<f64>, dofs: &[usize], v: &[f64], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, &da) in dofs.iter().enumerate() {
        for (b, &db) in dofs.iter().enumerate() {
            total += v[da] * h[(a, b)] * w[db];
        }
    }
    total
}

/// Second central differences along (Id + tV) against Vᵀ H V (diagonal
/// checks, one report per field) and polarization ¼(FD₂[V+W] − FD₂[V−W])
/// against Vᵀ H W for each pair.
pub fn fd_second(
    mesh: &Mesh,
    problem: &ShapeProblem,
    diagonal: &[FeFunction],
    pairs: &[(FeFunction, FeFunction)],
    ts: &[f64],
) -> Result<Vec<FdReport>> {
    let solved = solve_configuration(mesh, problem)?;
    let (h, _, active) = hessian_matrix(&solved, problem)?;
    let j0 = reduced_functional(mesh, problem)?;
    let mut out = Vec::new();
    for (i, v) in diagonal.iter().enumerate() {
        let fv = v.free_values(mesh);
        let assembled = hessian_form(&h, active.dofs(), &fv, &fv);
        out.push(report(format!("hess_diag_{i}"), ts, |t| second_difference(mesh, problem, v, j0, t), assembled)?);
    }
    for (i, (v, w)) in pairs.iter().enumerate() {
        let assembled = hessian_form(&h, active.dofs(), &v.free_values(mesh), &w.free_values(mesh));
        let (sum, diff) = (v.axpy(1.0, w), v.axpy(-1.0, w));
        out.push(report(
            format!("hess_polar_{i}"),
            ts,
            |t| {
                Ok(0.25
                    * (second_difference(mesh, problem, &sum, j0, t)?
                        - second_difference(mesh, problem, &diff, j0, t)?))
            },
            assembled,
        )?);
    }
    Ok(out)
}

/// DJ[V] including the perimeter term, with V sampled pointwise on `mesh`.
pub fn directional_derivative(mesh: &Mesh, problem: &ShapeProblem, field: &dyn VectorField) -> Result<f64> {
    let solved = solve_configuration(mesh, problem)?;
    let residuals = assemble_shape_residuals(&solved.asm, field, &solved.state_data(problem))?;
    Ok(residuals.total() + problem.nu * perimeter_first(mesh, &solved.interface, field))
}

/// Central difference of t ↦ DJ(Id + tW)[V] against J″[V, W] + DJ[DV·W]
/// (both with perimeter terms). `v` is sampled pointwise on every deformed
/// mesh, `w` is a P1 deformation.
pub fn structure_identity(
    mesh: &Mesh,
    problem: &ShapeProblem,
    v: &dyn VectorField,
    w: &FeFunction,
    ts: &[f64],
) -> Result<FdReport> {
    let solved = solve_configuration(mesh, problem)?;
    let state = solved.state_data(problem);
    let (phi, psi) = solve_averaged_adjoints(&solved.fact, &solved.asm, v, &state, &solved.mass)?;
    let forms = assemble_second_order_forms(&solved.asm, v, w, &state, &psi, &phi)?;
    let z = JacobianProduct { v, w };
    let perimeter = perimeter_second(mesh, &solved.interface, v, w) + perimeter_first(mesh, &solved.interface, &z);
    let assembled = forms.second + forms.transport + problem.nu * perimeter;
    report(
        "structure".into(),
        ts,
        |t| {
            let plus = directional_derivative(&deform_mesh(mesh, w, t)?, problem, v)?;
            let minus = directional_derivative(&deform_mesh(mesh, w, -t)?, problem, v)?;
            Ok((plus - minus) / (2.0 * t))
        },
        assembled,
    )
}

/// b(x)·a with b = (x₁(1 − x₁)x₂(1 − x₂))² on the unit square and 0 outside:
/// C¹ and vanishing on the interaction domain.
pub fn bump_field(a: Vector2<f64>) -> SmoothVectorField {
    fn parts(p: &Point) -> Option<(f64, Vector2<f64>, Matrix2<f64>)> {
        if p.x <= 0.0 || p.x >= 1.0 || p.y <= 0.0 || p.y >= 1.0 {
            return None;
        }
        let (gx, gy) = (p.x * (1.0 - p.x), p.y * (1.0 - p.y));
        let q = gx * gy;
        let dq = Vector2::new((1.0 - 2.0 * p.x) * gy, gx * (1.0 - 2.0 * p.y));
        let cross = (1.0 - 2.0 * p.x) * (1.0 - 2.0 * p.y);
        let hq = Matrix2::new(-2.0 * gy, cross, cross, -2.0 * gx);
        // b = q², ∇b = 2q∇q, Hb = 2∇q∇qᵀ + 2qHq.
        Some((q * q, dq * (2.0 * q), dq * dq.transpose() * 2.0 + hq * (2.0 * q)))
    }
    SmoothVectorField::new(
        move |p| parts(p).map_or(Vector2::zeros(), |(b, _, _)| a * b),
        move |p| parts(p).map_or(Matrix2::zeros(), |(_, g, _)| a * g.transpose()),
        move |p| parts(p).map_or(Vector2::zeros(), |(_, _, h)| h * a),
    )
}

/// Random vector P1 field supported on the given free vector dofs, entries in [−1, 1].
pub fn random_field(mesh: &Mesh, dofs: &[usize], rng: &mut StdRng) -> FeFunction {
    let mut free = vec![0.0; 2 * mesh.num_free()];
    for &d in dofs {
        free[d] = rng.random_range(-1.0..1.0);
    }
    FeFunction::from_free(mesh, Space::VectorP1, &free).expect("free length matches")
}

pub fn seeded_rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Equivalence constants between the nonlocal energy and reference norms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    /// Smallest generalized eigenvalue of the symmetric part of A against the mass matrix.
    pub coercivity: f64,
    /// Extreme generalized eigenvalues of sym(A) against M.
    pub l2_interval: (f64, f64),
    /// Extreme generalized eigenvalues of sym(A) against the discrete H^s seminorm (singular kernels).
    pub hs_interval: Option<(f64, f64)>,
    /// Extreme Rayleigh quotients A(u, u)/‖u‖²_{L²} over random constrained u.
    pub sampled: (f64, f64),
}

/// One bound of a [`NormReport`] as a CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormRow {
    pub quantity: &'static str,
    pub lower: f64,
    pub upper: f64,
}

impl NormReport {
    pub fn rows(&self) -> Vec<NormRow> {
        let mut rows = vec![
            NormRow { quantity: "coercivity", lower: self.coercivity, upper: f64::NAN },
            NormRow { quantity: "l2_interval", lower: self.l2_interval.0, upper: self.l2_interval.1 },
            NormRow { quantity: "sampled", lower: self.sampled.0, upper: self.sampled.1 },
        ];
        if let Some((lo, hi)) = self.hs_interval {
            rows.push(NormRow { quantity: "hs_interval", lower: lo, upper: hi });
        }
        rows
    }

    /// Both intervals bounded away from 0 and ∞.
    pub fn passes(&self, lower: f64, upper: f64) -> bool {
        let ok = |(a, b): (f64, f64)| a >= lower && b <= upper && a <= b;
        self.coercivity > 0.0 && ok(self.l2_interval) && self.hs_interval.is_none_or(ok)
    }
}

/// Extreme eigenvalues λ of A x = λ B x for symmetric A and SPD B.
pub fn generalized_extremes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, f64)> {
    let not_spd = || Error::Singular("reference matrix is not positive definite".into());
    let l = b.clone().cholesky().ok_or_else(not_spd)?.l();
    let linv = l.try_inverse().ok_or_else(not_spd)?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigenvalues();
    Ok((eig.min(), eig.max()))
}

fn dense_symmetric_part(a: &SparseOperator) -> DMatrix<f64> {
    let d = a.to_dense();
    (&d + d.transpose()) * 0.5
}

/// The |·|²_{H^s} seminorm as a nonlocal energy: σ ≡ 1, no normalization, full interaction.
fn seminorm_spec(mesh: &Mesh, s: f64) -> KernelSpec {
    let mut lo = mesh.vertices()[0];
    let mut hi = lo;
    for p in mesh.vertices() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    KernelSpec {
        class: KernelClass::SingularSymmetric,
        delta: 2.0 * (hi - lo).norm(),
        s,
        coeff: Coefficients { o11: 1.0, o12: 1.0, o21: 1.0, o22: 1.0, o1i: 1.0, o2i: 1.0 },
        normalizer: 1.0,
    }
}

/// Coercivity and norm-equivalence constants of the stiffness on `mesh`.
pub fn norm_checks(mesh: &Mesh, spec: &KernelSpec, samples: usize, seed: u64) -> Result<NormReport> {
    let a = assemble_stiffness(mesh, spec)?;
    let sym = dense_symmetric_part(&a);
    let mass = assemble_mass(mesh).to_dense();
    let l2_interval = generalized_extremes(&sym, &mass)?;
    let hs_interval = match spec.class {
        KernelClass::Integrable => None,
        KernelClass::SingularSymmetric => {
            let seminorm = assemble_stiffness(mesh, &seminorm_spec(mesh, spec.s))?;
            Some(generalized_extremes(&sym, &dense_symmetric_part(&seminorm))?)
        }
    };
    let mut rng = seeded_rng(seed);
    let n = mesh.num_free();
    let mut sampled = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = a.bilinear(&u, &u) / assemble_quadratic(&mass, &u);
        sampled = (sampled.0.min(q), sampled.1.max(q));
    }
    Ok(NormReport { coercivity: l2_interval.0, l2_interval, hs_interval, sampled })
}

fn assemble_quadratic(m: &DMatrix<f64>, u: &[f64]) -> f64 {
    let x = nalgebra::DVector::from_column_slice(u);
    x.dot(&(m * &x))
}

/// Relative discrepancy between one assembled form and its dense re-assembly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormCheck {
    pub form: String,
    pub rel_err: f64,
}

fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn random_scalar(mesh: &Mesh, rng: &mut StdRng) -> FeFunction {
    let free: Vec<f64> = (0..mesh.num_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeFunction::from_free(mesh, Space::ScalarP1, &free).expect("free length matches")
}

/// Compare every assembled form with the dense oracle on a small mesh, using
/// random state, adjoint and averaged-adjoint functions and random fields.
pub fn assembly_check(problem: &ShapeProblem, oracle: &DenseOracle, seed: u64) -> Result<Vec<FormCheck>> {
    let mesh = oracle.mesh;
    let asm = Assembler::new(mesh, problem.spec)?;
    let mut rng = seeded_rng(seed);
    let (u, v) = (random_scalar(mesh, &mut rng), random_scalar(mesh, &mut rng));
    let (psi, phi) = (random_scalar(mesh, &mut rng), random_scalar(mesh, &mut rng));
    let state = StateData { u: &u, v: &v, ubar: problem.ubar, forcing: problem.forcing };
    let (ubar, forcing) = (problem.ubar, problem.forcing);
    let mut out = Vec::new();
    let mut push = |form: &str, a: DMatrix<f64>, b: DMatrix<f64>| {
        out.push(FormCheck { form: form.to_string(), rel_err: relative_frobenius(&a, &b) });
    };

    push("stiffness", asm.stiffness().to_dense(), oracle.stiffness_matrix()?);
    push("load", column(&assemble_load(mesh, forcing)), column(&oracle.load_vector(forcing)));
    push(
        "tracking_load",
        column(&assemble_tracking_load(mesh, &u, ubar)?),
        column(&oracle.tracking_load_vector(&u, ubar)),
    );
    push("tracking_value", column(&[tracking_value(mesh, &u, ubar)?]), column(&[oracle.tracking_value(&u, ubar)]));
    push("mass", assemble_mass(mesh).to_dense(), oracle.mass_matrix());
    push("regularizer", assemble_regularizer(mesh).to_dense(), oracle.regularizer_matrix());

    let all = ActiveDofs::all(mesh);
    let m = asm.shape_matrices(&state, &all, true)?;
    let basis: Vec<FeFunction> = all.dofs().iter().map(|&d| oracle.vector_basis(d)).collect();
    let scalars: Vec<FeFunction> = (0..mesh.num_free()).map(|k| oracle.scalar_basis(k)).collect();
    let na = basis.len();
    let mut tracking = vec![0.0; na];
    let mut forcing_v = vec![0.0; na];
    let mut nonlocal = vec![0.0; na];
    let mut g1 = DMatrix::zeros(na, scalars.len());
    let mut g2 = DMatrix::zeros(na, scalars.len());
    let mut h = DMatrix::zeros(na, na);
    for (a, va) in basis.iter().enumerate() {
        tracking[a] = oracle.tracking_first(va, &u, ubar);
        forcing_v[a] = oracle.forcing_first(va, forcing, &v);
        nonlocal[a] = oracle.nonlocal_first(va, &u, &v)?;
        for (k, phik) in scalars.iter().enumerate() {
            g1[(a, k)] = oracle.nonlocal_first(va, &u, phik)? - oracle.forcing_first(va, forcing, phik);
            g2[(a, k)] = oracle.tracking_first_du(va, &u, ubar, phik) + oracle.nonlocal_first(va, phik, &v)?;
        }
        for (b, wb) in basis.iter().enumerate() {
            h[(a, b)] = oracle.local_second(va, wb, &u, &v, ubar, forcing) + oracle.nonlocal_second(va, wb, &u, &v)?;
        }
    }
    push("tracking_first_basis", column(&m.tracking), column(&tracking));
    push("forcing_first_basis", column(&m.forcing), column(&forcing_v));
    push("nonlocal_first_basis", column(&m.nonlocal), column(&nonlocal));
    push("constraint_derivative_u", m.g1.clone(), g1);
    push("constraint_derivative_v", m.g2.clone(), g2);
    push("second_explicit_basis", m.h.clone(), h);

    let fields: Vec<FeFunction> = (0..2).map(|_| random_field(mesh, all.dofs(), &mut rng)).collect();
    let (vf, wf) = (&fields[0], &fields[1]);
    let r = assemble_shape_residuals(&asm, vf, &state)?;
    push("tracking_first", column(&[r.tracking]), column(&[oracle.tracking_first(vf, &u, ubar)]));
    push("forcing_first", column(&[r.forcing]), column(&[oracle.forcing_first(vf, forcing, &v)]));
    push("nonlocal_first", column(&[r.nonlocal]), column(&[oracle.nonlocal_first(vf, &u, &v)?]));

    let forms = assemble_second_order_forms(&asm, vf, wf, &state, &psi, &phi)?;
    let second = oracle.local_second(vf, wf, &u, &v, ubar, forcing) + oracle.nonlocal_second(vf, wf, &u, &v)?
        - oracle.forcing_first(wf, forcing, &psi)
        + oracle.tracking_first_du(wf, &u, ubar, &phi)
        + oracle.nonlocal_first(wf, &u, &psi)?
        + oracle.nonlocal_first(wf, &phi, &v)?;
    push("second_derivative", column(&[forms.second]), column(&[second]));
    let transport =
        oracle.local_transport(vf, wf, &u, &v, ubar, forcing) + oracle.nonlocal_transport(vf, wf, &u, &v)?;
    push("transport", column(&[forms.transport]), column(&[transport]));

    let (rhs1, rhs2) = averaged_adjoint_rhs(&asm, vf, &state)?;
    let mut o1 = Vec::with_capacity(scalars.len());
    let mut o2 = Vec::with_capacity(scalars.len());
    for phik in &scalars {
        o1.push(oracle.forcing_first(vf, forcing, phik) - oracle.nonlocal_first(vf, &u, phik)?);
        o2.push(-oracle.tracking_first_du(vf, &u, ubar, phik) - oracle.nonlocal_first(vf, phik, &v)?);
    }
    push("averaged_adjoint_rhs_u", column(&rhs1), column(&o1));
    push("averaged_adjoint_rhs_v", column(&rhs2), column(&o2));
    Ok(out)
}

/// Dense oracle matching the kernel: a tensor rule when the horizon covers
/// the whole mesh, otherwise the assembler's own pair rules. Returns the
/// oracle and the tolerance it is held to.
pub fn oracle_for<'a>(mesh: &'a Mesh, spec: &'a KernelSpec) -> (DenseOracle<'a>, f64) {
    let full = spec.class == KernelClass::Integrable && spec.delta >= mesh_diameter(mesh);
    if full {
        (DenseOracle::new(mesh, spec, 5), 1e-10)
    } else {
        (DenseOracle::with_pair_quadrature(mesh, spec, 5, PairQuadrature::Shared(PairRules::for_kernel(spec))), 1e-6)
    }
}

/// Largest distance between two mesh vertices.
pub fn mesh_diameter(mesh: &Mesh) -> f64 {
    let v = mesh.vertices();
    let mut d: f64 = 0.0;
    for (i, p) in v.iter().enumerate() {
        for q in &v[i + 1..] {
            d = d.max((p - q).norm());
        }
    }
    d
}
