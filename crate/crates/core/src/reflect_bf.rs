//! Robust reflect beamforming at the IRS for a fixed transmit vector.
//!
//! The worst-case fractional program is lifted with the Charnes-Cooper
//! substitution `R = r Theta` into an SDP in `(R, r, t)`, and the rank-one
//! requirement is handled by a linearized `tr(R) - lambda_max(R)` penalty.
//!
//! Internally every solve works on a rescaled lift so that `r` and `t` are
//! of order one at the optimum; [`ReflectOutcome`] reports raw values.

use crate::error::{Error, Result};
use crate::numerics::{
    hermitian_eig_max, hermitian_eigen, householder_to_e1, rank1_extract, CMatrix, CVector, HermitianMatrix};
use crate::scenario::{Budget, Instance, PenaltySettings};
use crate::sdp::{
    solve, ConstraintMatrix, LinearConstraint, Objective, Relation, SdpProblem, SdpSolution, SdpStatus,
};
use crate::uncertainty::{hull_g_samples, update_chi_weights, HullSampleSet};

/// Solutions whose constraint residual exceeds this are not used as iterates.
const ACCEPT_RESIDUAL: f64 = 1e-5;

/// `tr(R) - lambda_max(R)`.
pub fn rank1_gap(r: &HermitianMatrix) -> Result<f64> {
    let spec = hermitian_eigen(r);
    let top = spec.max();
    if spec.min() < -1e-9 * top.abs().max(1.0) {
        return Err(Error::Indefinite {
            eigenvalue: spec.min(),
        });
    }
    Ok(r.trace() - top)
}

/// `Theta = R / r`.
pub fn recover_theta(r_mat: &HermitianMatrix, r: f64) -> Result<HermitianMatrix> {
    if !(r > 1e-12) {
        return Err(Error::DegenerateScale { r });
    }
    Ok(r_mat.scale(1.0 / r))
}

/// Factors mapping the internal lift back to raw Charnes-Cooper variables:
/// `R = R_hat / lift`, `r = r_hat / lift` and `t = t_hat / signal_scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftScaling {
    /// `||H_S w||_1^2 / sigma_S^2 + 1`, the best SNR + 1 any unit-modulus q can reach.
    pub signal_scale: f64,
    pub lift: f64,
}

/// The solver works on `R_hat` with `R = T R_hat T^H`, where `T` rotates the
/// interference direction `H_P w` onto the first axis and shrinks that axis
/// so the interference cap reads `R_hat_11 <= r`. Without this the feasible
/// set is a slab of relative width `I_th / ||H_P w||^2`, far below double
/// precision for typical channels.
#[derive(Debug, Clone)]
pub struct PenalizedSdp {
    pub problem: SdpProblem,
    pub scaling: LiftScaling,
    /// `T`, a unitary with its first column scaled by `delta`.
    pub basis: CMatrix,
    pub delta: f64,
}

impl PenalizedSdp {
    /// `T R_hat T^H`.
    pub fn to_original(&self, r_hat: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix::symmetrized(&self.basis * r_hat.as_matrix() * self.basis.adjoint())
    }

    /// Smallest `t` the leakage constraint admits at `(R, r)` in original
    /// coordinates.
    pub fn leakage_bound(&self, r_mat: &HermitianMatrix, r: f64) -> f64 {
        let leak = &self.problem.constraints[0];
        leak.matrix.evaluate(&self.to_solver(r_mat)) + leak.r_coef * r
    }

    /// `T^-1 R T^-H`, using `T^-1 = diag(delta^-2, 1, ..) T^H`.
    pub fn to_solver(&self, r: &HermitianMatrix) -> HermitianMatrix {
        let mut inv = self.basis.adjoint();
        inv.row_mut(0).scale_mut(self.delta.powi(-2));
        HermitianMatrix::symmetrized(&inv * r.as_matrix() * inv.adjoint())
    }
}

/// Builds the fixed-weight penalized SDP. With `penalty = None` the rank-one
/// penalty is dropped and the problem is the plain relaxation.
///
/// Constraint order: leakage, signal, interference, then the `N` diagonal
/// equalities.
pub fn assemble_penalized_sdp(
    w: &CVector,
    h_s: &CMatrix,
    h_p: &CMatrix,
    hulls: &[HullSampleSet],
    penalty: Option<(&CVector, f64)>,
    budget: &Budget,
) -> Result<PenalizedSdp> {
    let n = h_s.nrows();
    for (context, m) in [("assemble_penalized_sdp H_S", h_s), ("assemble_penalized_sdp H_P", h_p)] {
        if m.ncols() != w.len() || m.nrows() != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: w.len(),
                actual: m.ncols(),
            });
        }
    }
    if let Some(g) = hulls.iter().flat_map(|h| &h.generators).find(|g| g.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "assemble_penalized_sdp hull generator",
            expected: n,
            actual: g.len(),
        });
    }
    let sigma_s = budget.sigma_s2.sqrt();
    let s = h_s * w;
    let p = h_p * w;
    let s_l1 = s.iter().map(|z| z.norm()).sum::<f64>() / sigma_s;
    let signal_scale = s_l1 * s_l1 + 1.0;
    let scaling = LiftScaling {
        signal_scale,
        lift: signal_scale * budget.sigma_s2,
    };

    // kappa = ||p||^2 / I_th; after the basis change p^H R p = kappa I_th
    // delta^2 R_hat_11.
    let kappa = p.norm_squared() / budget.i_th;
    let delta = if kappa > 1.0 { kappa.sqrt().recip() } else { 1.0 };
    let mut basis = householder_to_e1(&p);
    basis.column_mut(0).scale_mut(delta);
    let basis_h = basis.adjoint();
    let map = |v: &CVector| &basis_h * v;

    let leak_terms: Vec<(f64, CVector)> = hulls
        .iter()
        .flat_map(|h| {
            h.generators
                .iter()
                .zip(&h.weights)
                .map(|(g, &chi)| (chi, map(g).unscale(sigma_s)))
        })
        .collect();
    let mut constraints = vec![
        LinearConstraint {
            matrix: ConstraintMatrix::LowRank(leak_terms),
            r_coef: budget.sigma2 / budget.sigma_s2,
            t_coef: -1.0,
            relation: Relation::Le,
            rhs: 0.0,
        },
        LinearConstraint {
            matrix: ConstraintMatrix::LowRank(vec![(1.0, map(&s).unscale(sigma_s * signal_scale.sqrt()))]),
            r_coef: 1.0 / signal_scale,
            t_coef: 0.0,
            relation: Relation::Ge,
            rhs: 1.0,
        },
    ];
    // The cap is R_hat_11 <= r / (kappa delta^2). Since p^H R p <= r ||p||_1^2
    // <= N r ||p||^2 holds on the feasible set, bounds above N r are redundant
    // and get clipped to keep the row scaled.
    let (it_matrix, it_bound) = if kappa > 0.0 {
        (ConstraintMatrix::DiagonalEntry(0), (1.0 / (kappa * delta * delta)).clamp(1.0, n as f64))
    } else {
        (ConstraintMatrix::Zero, 1.0)
    };
    constraints.push(LinearConstraint {
        matrix: it_matrix,
        r_coef: -it_bound,
        t_coef: 0.0,
        relation: Relation::Le,
        rhs: 0.0,
    });
    constraints.extend((0..n).map(|k| LinearConstraint {
        matrix: ConstraintMatrix::LowRank(vec![(1.0, basis_h.column(k).into_owned())]),
        r_coef: -1.0,
        t_coef: 0.0,
        relation: Relation::Eq,
        rhs: 0.0,
    }));

    let matrix = match penalty {
        Some((v, rho)) if rho != 0.0 => {
            let vv = &(v * v.adjoint());
            ConstraintMatrix::Dense(HermitianMatrix::symmetrized(
                &basis_h * (CMatrix::identity(n, n) - vv) * &basis * num_complex::Complex64::new(rho, 0.0),
            ))
        }
        _ => ConstraintMatrix::Zero,
    };
    Ok(PenalizedSdp {
        problem: SdpProblem {
            dim: n,
            objective: Objective {
                matrix,
                r_coef: 0.0,
                t_coef: 1.0,
            },
            constraints,
        },
        scaling,
        basis,
        delta,
    })
}

/// One penalty solve at fixed `rho`: penalized objective before and after.
/// The solver sees `rho * t_0 / tr(R_0)`, with `(R_0, t_0)` the iterate that
/// starts the weight step, and `before`/`after` use that coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyStep {
    pub outer: usize,
    pub rho: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone)]
pub struct ReflectOutcome {
    /// Unit-modulus reflect vector.
    pub q: CVector,
    pub theta: HermitianMatrix,
    /// Raw Charnes-Cooper variables of the final iterate.
    pub r: f64,
    pub t: f64,
    /// `log2(sigma^2 / sigma_S^2 * t)`, the rate formula read literally.
    pub rate_from_t: f64,
    /// `log2(sigma^2 / (sigma_S^2 t))`, the rate implied by `t` being the
    /// minimized reciprocal.
    pub rate_from_reciprocal: f64,
    /// `(tr(R) - lambda_max(R)) / tr(R)` at the final iterate.
    pub relative_rank1_gap: f64,
    pub chi: Vec<Vec<f64>>,
    /// [`worst_sample_ratio`] at `q`; the weight step minimizing it is returned.
    pub worst_sample_ratio: f64,
    pub penalty_log: Vec<PenaltyStep>,
    /// Largest `|fractional objective - t| / t` over all optimal solves.
    pub charnes_cooper_error: f64,
    pub sdp_solves: usize,
    pub outer_iterations: usize,
    /// The weight loop met its tolerance or settled into a 2-cycle.
    pub converged: bool,
    /// Some weight step ended above the rank-one tolerance (penalty cap,
    /// inner iteration cap or an unusable solve).
    pub stalled: bool,
}

#[derive(Debug, Clone)]
struct Iterate {
    r_mat: HermitianMatrix,
    r: f64,
    t: f64,
}

impl Iterate {
    fn from_solution(problem: &PenalizedSdp, s: &SdpSolution) -> Self {
        Self {
            r_mat: problem.to_original(&s.r_mat),
            r: s.r,
            t: s.t,
        }
    }

    fn penalized(&self, rho: f64) -> Result<f64> {
        Ok(self.t + rho * rank1_gap(&self.r_mat)?)
    }
}

fn usable(s: &SdpSolution) -> bool {
    match s.status {
        SdpStatus::Optimal => true,
        SdpStatus::MaxIterations | SdpStatus::NumericalFailure => {
            s.max_residual <= ACCEPT_RESIDUAL && s.min_eigenvalue >= -1e-6
        }
        _ => false,
    }
}

/// `(sum chi tr(G Theta) + sigma^2) / (tr(s s^H Theta) + sigma_S^2)`.
pub fn fractional_objective(
    theta: &HermitianMatrix,
    s: &CVector,
    hulls: &[HullSampleSet],
    budget: &Budget,
) -> f64 {
    let leak: f64 = hulls
        .iter()
        .flat_map(|h| h.generators.iter().zip(&h.weights))
        .map(|(g, &chi)| chi * theta.quadratic_form(g))
        .sum();
    (leak + budget.sigma2) / (theta.quadratic_form(s) + budget.sigma_s2)
}

/// Runs the penalty loop with hull-weight updates for fixed `w`.
pub fn solve_reflect_bf(w: &CVector, inst: &Instance) -> Result<ReflectOutcome> {
    let cfg = &inst.config;
    let mut hulls = inst
        .regions
        .iter()
        .map(|r| hull_g_samples(r, w, &inst.channels.h_ci, &inst.eve_model))
        .collect::<Result<Vec<_>>>()?;
    solve_reflect_with_hulls(w, &inst.h_s, &inst.h_p, &mut hulls, &inst.budget, &cfg.penalty, cfg.epsilon, cfg.sdp_tol)
}

/// Same as [`solve_reflect_bf`] on explicit hull samples; `hulls` ends with
/// the final weights.
#[allow(clippy::too_many_arguments)]
pub fn solve_reflect_with_hulls(
    w: &CVector,
    h_s: &CMatrix,
    h_p: &CMatrix,
    hulls: &mut [HullSampleSet],
    budget: &Budget,
    settings: &PenaltySettings,
    epsilon: f64,
    sdp_tol: f64,
) -> Result<ReflectOutcome> {
    let s = h_s * w;
    let mut penalty_log = Vec::new();
    let mut cc_error = 0.0_f64;
    let mut sdp_solves = 0;
    let mut stalled = false;
    let mut converged = false;
    let mut t_history = vec![0.0];
    let mut best: Option<Candidate> = None;
    let mut outer_iterations = 0;

    let mut run_solve = |problem: &PenalizedSdp, hulls: &[HullSampleSet], context: &str| -> Result<Option<SdpSolution>> {
        sdp_solves += 1;
        let sol = solve(&problem.problem, sdp_tol).map_err(|e| match e {
            Error::Solver { status, context: c } => Error::Solver {
                status,
                context: format!("{context}: {c}"),
            },
            other => other,
        })?;
        if sol.status == SdpStatus::Optimal {
            let theta = recover_theta(&problem.to_original(&sol.r_mat), sol.r)?;
            let t_raw = sol.t / problem.scaling.signal_scale;
            let frac = fractional_objective(&theta, &s, hulls, budget);
            cc_error = cc_error.max((frac - t_raw).abs() / t_raw.abs());
        }
        Ok(usable(&sol).then_some(sol))
    };

    // Weight steps after the first start from the previous final iterate,
    // which stays feasible when only the weights change.
    let mut warm: Option<Iterate> = None;
    for outer in 1..=settings.max_outer {
        outer_iterations = outer;
        let relaxed = assemble_penalized_sdp(w, h_s, h_p, hulls, None, budget)?;
        let scaling = relaxed.scaling;
        let mut current = match warm.take() {
            Some(prev) => Iterate {
                t: relaxed.leakage_bound(&prev.r_mat, prev.r),
                ..prev
            },
            None => {
                let Some(sol) = run_solve(&relaxed, hulls, &format!("relaxation, weight step {outer}"))? else {
                    // Later weight steps only refine; keep the best candidate so far.
                    if best.is_some() {
                        stalled = true;
                        break;
                    }
                    return Err(Error::Solver {
                        status: SdpStatus::NumericalFailure,
                        context: format!("relaxation, weight step {outer}: inaccurate solution"),
                    });
                };
                Iterate::from_solution(&relaxed, &sol)
            }
        };
        // A warm start is already rank one but must be re-optimized for the
        // new weights at least once.
        let mut force = outer > 1;
        let mut rho = settings.rho_initial;
        // rho weighs the relative rank-one gap against the relative
        // objective, so its effect does not depend on the lift's units.
        let penalty_scale = current.t.abs().max(1.0) / current.r_mat.trace();
        for inner in 0..settings.max_inner {
            let gap = rank1_gap(&current.r_mat)?;
            if !force && gap <= epsilon * current.r_mat.trace() {
                break;
            }
            force = false;
            let principal = hermitian_eig_max(&current.r_mat);
            let problem = assemble_penalized_sdp(w, h_s, h_p, hulls, Some((&principal.vector, rho * penalty_scale)), budget)?;
            let context = format!("penalty step {inner}, weight step {outer}, rho {rho:e}");
            let Some(sol) = run_solve(&problem, hulls, &context)? else {
                stalled = true;
                break;
            };
            let next = Iterate::from_solution(&problem, &sol);
            if sol.status == SdpStatus::Optimal {
                penalty_log.push(PenaltyStep {
                    outer,
                    rho,
                    before: current.penalized(rho * penalty_scale)?,
                    after: next.penalized(rho * penalty_scale)?,
                });
            }
            let moved = (next.r_mat.as_matrix() - current.r_mat.as_matrix()).norm();
            let still = moved <= settings.stall_tol * current.r_mat.frobenius_norm();
            current = next;
            if still {
                rho *= 2.0;
                if rho > settings.rho_max {
                    stalled = true;
                    break;
                }
            }
        }

        if rank1_gap(&current.r_mat)? > epsilon * current.r_mat.trace() {
            stalled = true;
        }
        let theta = recover_theta(&current.r_mat, current.r)?;
        let q = rank1_extract(&theta).phases;
        let score = worst_sample_ratio(&q, &s, hulls, budget);
        let chi: Vec<Vec<f64>> = hulls.iter().map(|h| h.weights.clone()).collect();
        let t = current.t;
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(Candidate {
                iterate: current.clone(),
                scaling,
                theta,
                q,
                score,
                chi,
            });
        }

        // The weight fixed point often settles into a 2-cycle, so a repeat of
        // either of the last two values ends the loop.
        if t_history.iter().rev().take(2).any(|&prev| (t - prev).abs() <= epsilon * t.abs().max(1.0)) {
            converged = true;
            break;
        }
        t_history.push(t);
        for h in hulls.iter_mut() {
            h.weights = update_chi_weights(&current.r_mat, h);
        }
        warm = Some(current);
    }

    let best = best.expect("at least one weight step runs");
    for (h, chi) in hulls.iter_mut().zip(&best.chi) {
        h.weights.clone_from(chi);
    }
    let t_raw = best.iterate.t / best.scaling.signal_scale;
    let noise_ratio = budget.sigma2 / budget.sigma_s2;
    Ok(ReflectOutcome {
        q: best.q,
        relative_rank1_gap: rank1_gap(&best.iterate.r_mat)? / best.iterate.r_mat.trace(),
        theta: best.theta,
        r: best.iterate.r / best.scaling.lift,
        t: t_raw,
        rate_from_t: (noise_ratio * t_raw).log2(),
        rate_from_reciprocal: (noise_ratio / t_raw).log2(),
        chi: best.chi,
        worst_sample_ratio: best.score,
        penalty_log,
        charnes_cooper_error: cc_error,
        sdp_solves,
        outer_iterations,
        converged,
        stalled,
    })
}

struct Candidate {
    iterate: Iterate,
    scaling: LiftScaling,
    theta: HermitianMatrix,
    q: CVector,
    score: f64,
    chi: Vec<Vec<f64>>,
}

/// `(sum_k max_i |g_ki^H q|^2 + sigma^2) / (|s^H q|^2 + sigma_S^2)`, the
/// reciprocal worst-case ratio over the hull samples at a unit-modulus `q`.
pub fn worst_sample_ratio(q: &CVector, s: &CVector, hulls: &[HullSampleSet], budget: &Budget) -> f64 {
    let leak: f64 = hulls
        .iter()
        .map(|h| h.generators.iter().map(|g| g.dotc(q).norm_sqr()).fold(0.0, f64::max))
        .sum();
    (leak + budget.sigma2) / (s.dotc(q).norm_sqr() + budget.sigma_s2)
}
