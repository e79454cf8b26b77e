//! Linear solves for the state, adjoint and averaged adjoint systems.
//!
//! One factorization per mesh configuration serves every right-hand side, for
//! both A and Aᵀ. Each solution is checked against the relative residual
//! contract and refined once if needed.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{averaged_adjoint_rhs, Assembler, SparseOperator, StateData};
use crate::error::{Error, Result};
use crate::fe::{FeFunction, Space, VectorField};
use crate::mesh::Mesh;

/// Relative residual every returned solution satisfies.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Solver selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverKind {
    /// Sparse LU.
    Direct,
    /// BiCGSTAB with Jacobi preconditioning.
    Iterative { max_iter: usize },
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Direct
    }
}

/// A reusable solver for A x = b and Aᵀ x = b.
pub struct Factorization {
    matrix: SparseOperator,
    transpose: SparseOperator,
    lu: Option<Lu<usize, f64>>,
    kind: SolverKind,
}

pub fn factorize(a: &SparseOperator) -> Result<Factorization> {
    factorize_with(a, SolverKind::Direct)
}

pub fn factorize_with(a: &SparseOperator, kind: SolverKind) -> Result<Factorization> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("matrix is {}×{}, not square", a.nrows(), a.ncols())));
    }
    if !a.all_finite() {
        return Err(Error::Singular("matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    if let Some(r) = (0..n).find(|&r| a.row(r).all(|(_, v)| v == 0.0)) {
        return Err(Error::Singular(format!("row {r} is structurally empty")));
    }
    let lu = match kind {
        SolverKind::Direct => {
            let triplets: Vec<Triplet<usize, usize, f64>> =
                a.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
            let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
                .map_err(|e| Error::Singular(format!("{e:?}")))?;
            Some(csc.sp_lu().map_err(|e| Error::Singular(format!("LU failed: {e:?}")))?)
        }
        SolverKind::Iterative { .. } => None,
    };
    Ok(Factorization { matrix: a.clone(), transpose: a.transpose(), lu, kind })
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn relative_residual(a: &SparseOperator, x: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let nb = norm(b);
    (if nb == 0.0 { norm(&r) } else { norm(&r) / nb }, r)
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &SparseOperator {
        &self.matrix
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_checked(b, false)
    }

    /// Solve Aᵀ x = b.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_checked(b, true)
    }

    /// Solve A X = B (or Aᵀ X = B) column by column.
    pub fn solve_columns(&self, b: &DMatrix<f64>, transpose: bool) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col: Vec<f64> = b.column(j).iter().copied().collect();
            let x = self.solve_checked(&col, transpose)?;
            out.column_mut(j).copy_from_slice(&x);
        }
        Ok(out)
    }

    fn solve_checked(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::Dimension(format!("right-hand side has length {}, expected {}", b.len(), self.dim())));
        }
        if b.iter().all(|v| *v == 0.0) {
            return Ok(vec![0.0; b.len()]);
        }
        let op = if transpose { &self.transpose } else { &self.matrix };
        let mut x = self.raw_solve(b, transpose)?;
        let (mut res, r) = relative_residual(op, &x, b);
        if !(res < RESIDUAL_TOL) && res.is_finite() {
            let dx = self.raw_solve(&r, transpose)?;
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            res = relative_residual(op, &x, b).0;
        }
        if !res.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("solution is not finite".into()));
        }
        if res >= RESIDUAL_TOL {
            return Err(Error::Residual { residual: res, tol: RESIDUAL_TOL });
        }
        Ok(x)
    }

    fn raw_solve(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        match (&self.lu, self.kind) {
            (Some(lu), _) => {
                let mut m = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
                if transpose {
                    lu.solve_transpose_in_place(m.as_mut());
                } else {
                    lu.solve_in_place(m.as_mut());
                }
                Ok((0..b.len()).map(|i| m[(i, 0)]).collect())
            }
            (None, SolverKind::Iterative { max_iter }) => {
                bicgstab(if transpose { &self.transpose } else { &self.matrix }, b, 1e-2 * RESIDUAL_TOL, max_iter)
            }
            (None, SolverKind::Direct) => unreachable!("direct factorization always holds an LU"),
        }
    }
}

/// Jacobi-preconditioned BiCGSTAB.
fn bicgstab(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let diag: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&diag).map(|(v, d)| v * d).collect() };
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };
    let nb = norm(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let ph = precond(&p);
        v = a.mul_vec(&ph);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        if norm(&s) <= tol * nb {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            return Ok(x);
        }
        let sh = precond(&s);
        let t = a.mul_vec(&sh);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= tol * nb {
            return Ok(x);
        }
    }
    let res = relative_residual(a, &x, b).0;
    Err(Error::NoConvergence { iterations: max_iter, residual: res })
}

/// u⁰ with A u = F.
pub fn solve_state(fact: &Factorization, mesh: &Mesh, load: &[f64]) -> Result<FeFunction> {
    let x = fact.solve(load)?;
    FeFunction::from_free(mesh, Space::ScalarP1, &x)
}

/// v⁰ with Aᵀ v = F̃(u⁰, ·).
pub fn solve_adjoint(fact: &Factorization, mesh: &Mesh, tracking_load: &[f64]) -> Result<FeFunction> {
    let x = fact.solve_transpose(tracking_load)?;
    FeFunction::from_free(mesh, Space::ScalarP1, &x)
}

/// Averaged adjoints (φ⁰, ψ⁰) for the direction V: first A φ = 𝔉_V − 𝔄_V(u, ·),
/// then Aᵀ ψ = −d_u𝔍_V − 𝔄_V(·, v) − M φ.
pub fn solve_averaged_adjoints(
    fact: &Factorization,
    asm: &Assembler,
    field: &dyn VectorField,
    state: &StateData,
    mass: &SparseOperator,
) -> Result<(FeFunction, FeFunction)> {
    let mesh = asm.mesh;
    let (rhs_phi, mut rhs_psi) = averaged_adjoint_rhs(asm, field, state)?;
    let phi = fact.solve(&rhs_phi)?;
    let m_phi = mass.mul_vec(&phi);
    for (r, m) in rhs_psi.iter_mut().zip(&m_phi) {
        *r -= m;
    }
    let psi = fact.solve_transpose(&rhs_psi)?;
    Ok((FeFunction::from_free(mesh, Space::ScalarP1, &phi)?, FeFunction::from_free(mesh, Space::ScalarP1, &psi)?))
}
