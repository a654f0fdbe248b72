//! Small dense SDPs over a complex Hermitian PSD matrix `R`, a nonnegative
//! scalar `r` and a free scalar `t`.
//!
//! Problems are mapped onto a real PSD block of order `2N` through the
//! embedding `[Re, -Im; Im, Re]` (with a factor 1/2 so that inner products
//! are preserved) and solved by [`ipm::solve_real`].

pub mod ipm;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{complex_from_embedding, hermitian_eigen, CMatrix, CVector, HermitianMatrix};
use ipm::{solve_real, IpmOptions, RealSdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

/// Coefficient matrix of `R` in a linear functional `tr(A R)`.
#[derive(Debug, Clone)]
pub enum ConstraintMatrix {
    Zero,
    Dense(HermitianMatrix),
    /// `sum c_k v_k v_k^H`.
    LowRank(Vec<(f64, CVector)>),
    /// Selects `R[n][n]`.
    DiagonalEntry(usize),
}

impl ConstraintMatrix {
    /// `tr(A R)`.
    pub fn evaluate(&self, r: &HermitianMatrix) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Dense(a) => a.trace_product(r),
            Self::LowRank(terms) => terms.iter().map(|(c, v)| c * r.quadratic_form(v)).sum(),
            Self::DiagonalEntry(n) => r.as_matrix()[(*n, *n)].re,
        }
    }

    pub fn to_dense(&self, dim: usize) -> CMatrix {
        match self {
            Self::Zero => CMatrix::zeros(dim, dim),
            Self::Dense(a) => a.as_matrix().clone(),
            Self::LowRank(terms) => {
                let mut m = CMatrix::zeros(dim, dim);
                for (c, v) in terms {
                    m += (v * v.adjoint()) * Complex64::new(*c, 0.0);
                }
                m
            }
            Self::DiagonalEntry(n) => {
                let mut m = CMatrix::zeros(dim, dim);
                m[(*n, *n)] = Complex64::new(1.0, 0.0);
                m
            }
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let actual = match self {
            Self::Zero => dim,
            Self::Dense(a) => a.dim(),
            Self::LowRank(terms) => terms.iter().map(|(_, v)| v.len()).find(|&l| l != dim).unwrap_or(dim),
            Self::DiagonalEntry(n) => {
                if *n < dim {
                    dim
                } else {
                    *n + 1
                }
            }
        };
        if actual != dim {
            return Err(Error::DimensionMismatch {
                context: "SdpProblem constraint",
                expected: dim,
                actual,
            });
        }
        Ok(())
    }

    /// Real rank-one generators `(coef, u)` of the embedded matrix scaled by 1/2.
    fn real_generators(&self, dim: usize) -> Vec<(f64, DVector<f64>)> {
        let embed = |c: f64, v: &CVector| {
            let u1 = DVector::from_fn(2 * dim, |i, _| if i < dim { v[i].re } else { v[i - dim].im });
            let u2 = DVector::from_fn(2 * dim, |i, _| if i < dim { -v[i].im } else { v[i - dim].re });
            [(0.5 * c, u1), (0.5 * c, u2)]
        };
        match self {
            Self::Zero => Vec::new(),
            Self::Dense(a) => {
                let spec = hermitian_eigen(a);
                let scale = spec.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                spec.values
                    .iter()
                    .enumerate()
                    .filter(|(_, &lam)| lam.abs() > 1e-14 * scale)
                    .flat_map(|(k, &lam)| embed(lam, &spec.vectors.column(k).into_owned()))
                    .collect()
            }
            Self::LowRank(terms) => terms
                .iter()
                .filter(|(c, v)| *c != 0.0 && v.norm() > 0.0)
                .flat_map(|(c, v)| embed(*c, v))
                .collect(),
            Self::DiagonalEntry(n) => {
                let mut e1 = DVector::zeros(2 * dim);
                let mut e2 = DVector::zeros(2 * dim);
                e1[*n] = 1.0;
                e2[*n + dim] = 1.0;
                vec![(0.5, e1), (0.5, e2)]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

/// `tr(A R) + r_coef r + t_coef t  (relation)  rhs`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub matrix: ConstraintMatrix,
    pub r_coef: f64,
    pub t_coef: f64,
    pub relation: Relation,
    pub rhs: f64,
}

/// Minimized functional `tr(C R) + r_coef r + t_coef t`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub matrix: ConstraintMatrix,
    pub r_coef: f64,
    pub t_coef: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: Objective,
    pub constraints: Vec<LinearConstraint>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub r_mat: HermitianMatrix,
    pub r: f64,
    pub t: f64,
    pub objective_value: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Largest relative constraint violation at the returned point, see
    /// [`SdpProblem::max_residual`].
    pub max_residual: f64,
    pub min_eigenvalue: f64,
    pub rel_gap: f64,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        self.objective.matrix.check_dim(self.dim)?;
        for c in &self.constraints {
            c.matrix.check_dim(self.dim)?;
        }
        Ok(())
    }

    fn uses_t(&self) -> bool {
        self.objective.t_coef != 0.0 || self.constraints.iter().any(|c| c.t_coef != 0.0)
    }

    pub fn objective_at(&self, r_mat: &HermitianMatrix, r: f64, t: f64) -> f64 {
        self.objective.matrix.evaluate(r_mat) + self.objective.r_coef * r + self.objective.t_coef * t
    }

    /// Largest violation over all constraints, each divided by the largest of
    /// 1 and the magnitudes of its terms.
    pub fn max_residual(&self, r_mat: &HermitianMatrix, r: f64, t: f64) -> f64 {
        let mut worst = (-r).max(0.0);
        for c in &self.constraints {
            let terms = [c.matrix.evaluate(r_mat), c.r_coef * r, c.t_coef * t];
            let lhs: f64 = terms.iter().sum();
            let scale = terms.iter().fold(c.rhs.abs().max(1.0), |m, x| m.max(x.abs()));
            let v = match c.relation {
                Relation::Eq => (lhs - c.rhs).abs(),
                Relation::Le => (lhs - c.rhs).max(0.0),
                Relation::Ge => (c.rhs - lhs).max(0.0),
            };
            worst = worst.max(v / scale);
        }
        worst
    }

    fn to_real(&self) -> RealSdp {
        let n = self.dim;
        let m = self.constraints.len();
        let slack_rows: Vec<usize> = (0..m)
            .filter(|&i| self.constraints[i].relation != Relation::Eq)
            .collect();
        let n_l = 1 + slack_rows.len();
        let n_f = usize::from(self.uses_t());

        let mut gens = Vec::new();
        let mut gen_coef = Vec::new();
        let mut gen_owner = Vec::new();
        let mut a_l = DMatrix::zeros(m, n_l);
        let mut a_f = DMatrix::zeros(m, n_f);
        let mut b = DVector::zeros(m);
        for (i, c) in self.constraints.iter().enumerate() {
            for (coef, u) in c.matrix.real_generators(n) {
                gens.push(u);
                gen_coef.push(coef);
                gen_owner.push(i);
            }
            a_l[(i, 0)] = c.r_coef;
            if n_f == 1 {
                a_f[(i, 0)] = c.t_coef;
            }
            b[i] = c.rhs;
        }
        for (j, &i) in slack_rows.iter().enumerate() {
            a_l[(i, 1 + j)] = match self.constraints[i].relation {
                Relation::Le => 1.0,
                _ => -1.0,
            };
        }
        let mut c_l = DVector::zeros(n_l);
        c_l[0] = self.objective.r_coef;
        let c_f = DVector::from_element(n_f, self.objective.t_coef);
        let c_s = crate::numerics::real_embedding(&self.objective.matrix.to_dense(n)) * 0.5;
        let gens = if gens.is_empty() {
            DMatrix::zeros(2 * n, 0)
        } else {
            DMatrix::from_columns(&gens)
        };
        RealSdp {
            n: 2 * n,
            gens,
            gen_coef,
            gen_owner,
            c_s,
            a_l,
            c_l,
            a_f,
            c_f,
            b,
        }
    }

    /// Self-describing text form for offline cross-checks.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let write_matrix = |out: &mut String, label: &str, m: &CMatrix| {
            let _ = writeln!(out, "{label} {}x{} re,im row-major", m.nrows(), m.ncols());
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|j| format!("{:.17e},{:.17e}", m[(i, j)].re, m[(i, j)].im))
                    .collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        };
        let _ = writeln!(out, "sdp dim {} constraints {}", self.dim, self.constraints.len());
        let _ = writeln!(
            out,
            "objective r_coef {:.17e} t_coef {:.17e}",
            self.objective.r_coef, self.objective.t_coef
        );
        write_matrix(&mut out, "objective_matrix", &self.objective.matrix.to_dense(self.dim));
        for (i, c) in self.constraints.iter().enumerate() {
            let rel = match c.relation {
                Relation::Eq => "==",
                Relation::Le => "<=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(
                out,
                "constraint {i} r_coef {:.17e} t_coef {:.17e} {rel} {:.17e}",
                c.r_coef, c.t_coef, c.rhs
            );
            write_matrix(&mut out, "matrix", &c.matrix.to_dense(self.dim));
        }
        out
    }
}

/// Solves `problem` to relative tolerance `tol`.
///
/// Infeasibility certificates are returned as [`Error::Solver`]. The status
/// is `Optimal` only when the solver converged, every absolute constraint
/// residual is at most 1e-6 and `R` is psd within -1e-8.
pub fn solve(problem: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    solve_with(problem, &IpmOptions { tol, ..IpmOptions::default() })
}

pub fn solve_with(problem: &SdpProblem, opts: &IpmOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let real = problem.to_real();
    let sol = solve_real(&real, opts);
    match sol.status {
        SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible => {
            return Err(Error::Solver {
                status: sol.status,
                context: format!("after {} iterations", sol.iterations),
            })
        }
        _ => {}
    }
    let r_mat = HermitianMatrix::symmetrized(complex_from_embedding(&sol.x_s));
    let r = sol.x_l[0];
    let t = if sol.x_f.is_empty() { 0.0 } else { sol.x_f[0] };
    let max_residual = problem.max_residual(&r_mat, r, t);
    let min_eigenvalue = hermitian_eigen(&r_mat).min();
    let status = if sol.status == SdpStatus::Optimal && (max_residual > 1e-6 || min_eigenvalue < -1e-8) {
        SdpStatus::NumericalFailure
    } else {
        sol.status
    };
    Ok(SdpSolution {
        objective_value: problem.objective_at(&r_mat, r, t),
        r_mat,
        r,
        t,
        status,
        iterations: sol.iterations,
        max_residual,
        min_eigenvalue,
        rel_gap: sol.rel_gap,
    })
}
