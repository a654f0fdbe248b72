//! Primal-dual interior-point method for a real SDP in standard form
//!
//! ```text
//! min  <C, X> + c_l' x_l + c_f' x_f
//! s.t. <A_i, X> + (A_l x_l)_i + (A_f x_f)_i = b_i
//!      X psd, x_l >= 0, x_f free
//! ```
//!
//! Every `A_i` is given as a sum of scaled rank-one terms `c u u'`, which
//! makes the Schur complement `M_ij = <A_i, W A_j W>` cheap to form.
//! Search directions use Nesterov-Todd scaling `W` (`W Z W = X`) with a
//! Mehrotra predictor-corrector; free variables are kept in an augmented
//! system instead of being split.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::SdpStatus;

#[derive(Debug, Clone)]
pub struct RealSdp {
    /// Order of the PSD block.
    pub n: usize,
    /// Rank-one generators, one per column (n x G).
    pub gens: DMatrix<f64>,
    pub gen_coef: Vec<f64>,
    /// Constraint index of each generator.
    pub gen_owner: Vec<usize>,
    pub c_s: DMatrix<f64>,
    /// m x n_l.
    pub a_l: DMatrix<f64>,
    pub c_l: DVector<f64>,
    /// m x n_f.
    pub a_f: DMatrix<f64>,
    pub c_f: DVector<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound of the fraction-to-boundary factor.
    pub step_fraction: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
            step_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RealSolution {
    pub x_s: DMatrix<f64>,
    pub x_l: DVector<f64>,
    pub x_f: DVector<f64>,
    pub y: DVector<f64>,
    pub z_s: DMatrix<f64>,
    pub z_l: DVector<f64>,
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub rel_primal_infeasibility: f64,
    pub rel_dual_infeasibility: f64,
    pub rel_gap: f64,
}

impl RealSdp {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// `(<A_i, Y>)_i`; only the symmetric part of `Y` contributes.
    fn apply(&self, y: &DMatrix<f64>) -> DVector<f64> {
        let yu = y * &self.gens;
        let mut out = DVector::zeros(self.m());
        for k in 0..self.gens.ncols() {
            out[self.gen_owner[k]] += self.gen_coef[k] * self.gens.column(k).dot(&yu.column(k));
        }
        out
    }

    /// `sum_i y_i A_i`.
    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.gens.clone();
        for k in 0..scaled.ncols() {
            let s = self.gen_coef[k] * y[self.gen_owner[k]];
            scaled.column_mut(k).scale_mut(s);
        }
        let out = scaled * self.gens.transpose();
        symmetrize(&out)
    }

    /// `M_ij = <A_i, W A_j W>`.
    fn schur(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.gens.transpose() * (w * &self.gens);
        let g = self.gens.ncols();
        let mut m = DMatrix::zeros(self.m(), self.m());
        for l in 0..g {
            let ol = self.gen_owner[l];
            let cl = self.gen_coef[l];
            for k in 0..g {
                m[(self.gen_owner[k], ol)] += self.gen_coef[k] * cl * p[(k, l)] * p[(k, l)];
            }
        }
        m
    }

    /// Frobenius norm of each `A_i` restricted to the PSD block.
    fn constraint_norms(&self) -> Vec<f64> {
        let gram = self.gens.transpose() * &self.gens;
        let mut sq = vec![0.0; self.m()];
        let g = self.gens.ncols();
        for k in 0..g {
            for l in 0..g {
                if self.gen_owner[k] == self.gen_owner[l] {
                    sq[self.gen_owner[k]] +=
                        self.gen_coef[k] * self.gen_coef[l] * gram[(k, l)].powi(2);
                }
            }
        }
        sq.into_iter()
            .enumerate()
            .map(|(i, s)| {
                (s + self.a_l.row(i).norm_squared() + self.a_f.row(i).norm_squared()).sqrt()
            })
            .collect()
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `alpha` with `X + alpha dX` psd, given the Cholesky factor of `X`.
fn max_step_psd(chol: &Cholesky<f64, nalgebra::Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let w = l.solve_lower_triangular(dx).expect("nonsingular factor");
    let w = l
        .solve_lower_triangular(&w.transpose())
        .expect("nonsingular factor");
    let lam = symmetrize(&w).symmetric_eigenvalues().min();
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

/// Nesterov-Todd scaling `W = G G'` with `G' Z G = G^-1 X G^-T = diag(v)`.
struct NtScaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    v: DVector<f64>,
    w: DMatrix<f64>,
}

impl NtScaling {
    fn new(chol_x: &Cholesky<f64, nalgebra::Dyn>, z: &DMatrix<f64>) -> Option<Self> {
        let l = chol_x.l();
        let inner = symmetrize(&(l.transpose() * z * &l));
        let eig = inner.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let quarter = eig.eigenvalues.map(|v| v.powf(0.25));
        let g = &l * &eig.eigenvectors * DMatrix::from_diagonal(&quarter.map(|v| 1.0 / v));
        let l_inv = l.clone().try_inverse()?;
        let g_inv = DMatrix::from_diagonal(&quarter) * eig.eigenvectors.transpose() * l_inv;
        let w = symmetrize(&(&g * g.transpose()));
        let v = eig.eigenvalues.map(f64::sqrt);
        Some(Self { g, g_inv, v, w })
    }

    /// `G H G'` where `H` solves `V H + H V = dX~ dZ~ + dZ~ dX~` in scaled
    /// coordinates; the second-order term of the Mehrotra corrector.
    fn corrector(&self, dx: &DMatrix<f64>, dz: &DMatrix<f64>) -> DMatrix<f64> {
        let dx_t = &self.g_inv * dx * self.g_inv.transpose();
        let dz_t = self.g.transpose() * dz * &self.g;
        let prod = &dx_t * &dz_t;
        let sym = &prod + prod.transpose();
        let n = self.v.len();
        let h = DMatrix::from_fn(n, n, |i, j| sym[(i, j)] / (self.v[i] + self.v[j]));
        symmetrize(&(&self.g * h * self.g.transpose()))
    }
}

fn max_step_linear(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx_s: DMatrix<f64>,
    dx_l: DVector<f64>,
    dx_f: DVector<f64>,
    dy: DVector<f64>,
    dz_s: DMatrix<f64>,
    dz_l: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rd_s: DMatrix<f64>,
    rd_l: DVector<f64>,
    rd_f: DVector<f64>,
}

const REFINEMENT_SWEEPS: usize = 2;

pub fn solve_real(p: &RealSdp, opts: &IpmOptions) -> RealSolution {
    let n = p.n;
    let m = p.m();
    let n_l = p.c_l.len();
    let n_f = p.c_f.len();
    let nu = (n + n_l) as f64;

    let norms = p.constraint_norms();
    let c_norm = (p.c_s.norm_squared() + p.c_l.norm_squared() + p.c_f.norm_squared()).sqrt();
    let b_norm = p.b.norm();
    let sqrt_n = (n.max(1) as f64).sqrt();
    let xi = (0..m)
        .map(|i| (n.max(1) as f64) * (1.0 + p.b[i].abs()) / (1.0 + norms[i]))
        .fold(10f64.max(sqrt_n), f64::max);
    let eta = norms.iter().copied().fold(10f64.max(sqrt_n).max(c_norm), f64::max);

    let mut x_s = DMatrix::identity(n, n) * xi;
    let mut z_s = DMatrix::identity(n, n) * eta;
    let mut x_l = DVector::from_element(n_l, xi);
    let mut z_l = DVector::from_element(n_l, eta);
    let mut x_f = DVector::zeros(n_f);
    let mut y = DVector::zeros(m);

    let residuals = |x_s: &DMatrix<f64>,
                     x_l: &DVector<f64>,
                     x_f: &DVector<f64>,
                     y: &DVector<f64>,
                     z_s: &DMatrix<f64>,
                     z_l: &DVector<f64>| {
        let terms = [p.apply(x_s), &p.a_l * x_l, &p.a_f * x_f];
        let rp = &p.b - &terms[0] - &terms[1] - &terms[2];
        // Rows are judged against the size of their own terms; a row whose
        // terms are large cancels to a residual far above 1 + |b|.
        let rel_p = (0..rp.len())
            .map(|i| {
                let size = terms.iter().fold(1.0 + p.b[i].abs(), |m, t| m.max(t[i].abs()));
                rp[i].abs() / size
            })
            .fold(0.0, f64::max);
        (
            Residuals {
                rp,
                rd_s: &p.c_s - p.adjoint(y) - z_s,
                rd_l: &p.c_l - p.a_l.transpose() * y - z_l,
                rd_f: &p.c_f - p.a_f.transpose() * y,
            },
            rel_p,
        )
    };

    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let mut stalls = 0;
    let (mut pobj, mut dobj, mut rel_p, mut rel_d, mut rel_gap);

    loop {
        let (res, rp_rel) = residuals(&x_s, &x_l, &x_f, &y, &z_s, &z_l);
        pobj = p.c_s.dot(&x_s) + p.c_l.dot(&x_l) + p.c_f.dot(&x_f);
        dobj = p.b.dot(&y);
        rel_p = rp_rel;
        rel_d = (res.rd_s.norm_squared() + res.rd_l.norm_squared() + res.rd_f.norm_squared())
            .sqrt()
            / (1.0 + c_norm);
        rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if rel_p <= opts.tol && rel_d <= opts.tol && rel_gap <= opts.tol {
            status = SdpStatus::Optimal;
            break;
        }
        // Crude certificates: an unbounded dual ray means the primal is
        // infeasible and vice versa.
        if dobj > 1e12 * (1.0 + c_norm) && rel_d <= opts.tol.sqrt() {
            status = SdpStatus::PrimalInfeasible;
            break;
        }
        if pobj < -1e12 * (1.0 + b_norm) && rel_p <= opts.tol.sqrt() {
            status = SdpStatus::DualInfeasible;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let (chol_x, chol_z) = match (Cholesky::new(x_s.clone()), Cholesky::new(z_s.clone())) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                status = SdpStatus::NumericalFailure;
                break;
            }
        };
        let z_inv = symmetrize(&chol_z.inverse());
        let Some(nt) = NtScaling::new(&chol_x, &z_s) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let d_l = x_l.component_div(&z_l);
        let mu = (x_s.dot(&z_s) + x_l.dot(&z_l)) / nu;

        let mut kkt = DMatrix::zeros(m + n_f, m + n_f);
        let w = &nt.w;
        let mut schur = p.schur(w);
        for j in 0..n_l {
            let col = p.a_l.column(j);
            schur += (&col * col.transpose()) * d_l[j];
        }
        kkt.view_mut((0, 0), (m, m)).copy_from(&schur);
        kkt.view_mut((0, m), (m, n_f)).copy_from(&p.a_f);
        kkt.view_mut((m, 0), (n_f, m)).copy_from(&p.a_f.transpose());
        let lu = kkt.clone().lu();

        let a_w_rd_w = p.apply(&(w * &res.rd_s * w));

        let solve_dir = |target: f64, corr: Option<&Direction>| -> Option<Direction> {
            let mut rc = &z_inv * target - &x_s;
            let mut comp = DVector::from_fn(n_l, |j, _| target - x_l[j] * z_l[j]);
            if let Some(c) = corr {
                rc -= nt.corrector(&c.dx_s, &c.dz_s);
                comp -= c.dx_l.component_mul(&c.dz_l);
            }
            let rc = symmetrize(&rc);
            let rc_l = comp.component_div(&z_l);
            let h = &res.rp - p.apply(&rc) + &a_w_rd_w
                - &p.a_l * (&rc_l - d_l.component_mul(&res.rd_l));
            let mut rhs = DVector::zeros(m + n_f);
            rhs.rows_mut(0, m).copy_from(&h);
            rhs.rows_mut(m, n_f).copy_from(&res.rd_f);
            let mut sol = lu.solve(&rhs)?;
            // The Schur complement degrades near degenerate faces; a few
            // refinement sweeps keep the primal direction consistent.
            for _ in 0..REFINEMENT_SWEEPS {
                let fix = lu.solve(&(&rhs - &kkt * &sol))?;
                sol += fix;
            }
            let dy = sol.rows(0, m).into_owned();
            let dx_f = sol.rows(m, n_f).into_owned();
            let dz_s = &res.rd_s - p.adjoint(&dy);
            let dx_s = &rc - symmetrize(&(w * &dz_s * w));
            let dz_l = &res.rd_l - p.a_l.transpose() * &dy;
            let dx_l = &rc_l - d_l.component_mul(&dz_l);
            Some(Direction {
                dx_s,
                dx_l,
                dx_f,
                dy,
                dz_s,
                dz_l,
            })
        };
        let steps = |d: &Direction, frac: f64| -> (f64, f64) {
            let ap = max_step_psd(&chol_x, &d.dx_s).min(max_step_linear(&x_l, &d.dx_l));
            let ad = max_step_psd(&chol_z, &d.dz_s).min(max_step_linear(&z_l, &d.dz_l));
            ((frac * ap).min(1.0), (frac * ad).min(1.0))
        };

        let Some(pred) = solve_dir(0.0, None) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let (ap, ad) = steps(&pred, 1.0);
        let mu_aff = ((&x_s + &pred.dx_s * ap).dot(&(&z_s + &pred.dz_s * ad))
            + (&x_l + &pred.dx_l * ap).dot(&(&z_l + &pred.dz_l * ad)))
            / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let Some(dir) = solve_dir(sigma * mu, Some(&pred)) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let frac = (0.9 + 0.09 * ap.min(ad)).min(opts.step_fraction);
        let (mut ap, mut ad) = steps(&dir, frac);

        // Rounding can leave the new iterate on the boundary; back off until
        // both blocks factor.
        let mut accepted = false;
        for _ in 0..30 {
            let nx = &x_s + &dir.dx_s * ap;
            let nz = &z_s + &dir.dz_s * ad;
            if Cholesky::new(nx.clone()).is_some() && Cholesky::new(nz.clone()).is_some() {
                x_s = symmetrize(&nx);
                z_s = symmetrize(&nz);
                accepted = true;
                break;
            }
            ap *= 0.5;
            ad *= 0.5;
        }
        if !accepted {
            status = SdpStatus::NumericalFailure;
            break;
        }
        x_l += &dir.dx_l * ap;
        x_f += &dir.dx_f * ap;
        y += &dir.dy * ad;
        z_l += &dir.dz_l * ad;
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                status = SdpStatus::NumericalFailure;
                break;
            }
        } else {
            stalls = 0;
        }
    }

    RealSolution {
        x_s,
        x_l,
        x_f,
        y,
        z_s,
        z_l,
        status,
        iterations,
        primal_objective: pobj,
        dual_objective: dobj,
        rel_primal_infeasibility: rel_p,
        rel_dual_infeasibility: rel_d,
        rel_gap,
    }
}
