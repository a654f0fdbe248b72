//! Robust transmit beamforming at the CBS for fixed reflect phases.
//!
//! Alternates closed-form power/slack updates, Cauchy-Schwarz hull weights
//! and a generalized Rayleigh quotient solve for the beam direction.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{generalized_rayleigh_max, CMatrix, CVector, HermitianMatrix};
use crate::scenario::{Budget, Instance};
use crate::uncertainty::{hull_f_samples, update_mu_weights, HullSampleSet};

/// Interference gains at or below this are treated as zero.
const ZERO_INTERFERENCE: f64 = 1e-18;

#[derive(Debug, Clone)]
pub struct TransmitState {
    pub x: CVector,
    pub power: f64,
    pub zeta: f64,
    pub gamma: f64,
    /// Hull weights per eavesdropper.
    pub mu: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TransmitOutcome {
    pub w: CVector,
    pub state: TransmitState,
    pub iterations: usize,
    pub converged: bool,
    /// Robust objective of the returned `w` on the hull samples.
    pub objective: f64,
}

/// `|q^H H_P x|^2`.
pub fn interference_gain(x: &CVector, q: &CVector, h_p: &CMatrix) -> f64 {
    q.dotc(&(h_p * x)).norm_sqr()
}

/// `min(P_max, I_th / g)`; `P_max` when `g <= 1e-18`.
pub fn update_power(x: &CVector, q: &CVector, h_p: &CMatrix, p_max: f64, i_th: f64) -> f64 {
    power_for_gain(interference_gain(x, q, h_p), p_max, i_th)
}

fn power_for_gain(g: f64, p_max: f64, i_th: f64) -> f64 {
    if g <= ZERO_INTERFERENCE {
        p_max
    } else {
        p_max.min(i_th / g)
    }
}

/// `1 - P g / I_th`.
pub fn update_zeta(power: f64, x: &CVector, q: &CVector, h_p: &CMatrix, i_th: f64) -> Result<f64> {
    let zeta = 1.0 - power * interference_gain(x, q, h_p) / i_th;
    if !(-1e-9..=1.0 + 1e-9).contains(&zeta) {
        return Err(Error::InconsistentSlack { zeta });
    }
    Ok(zeta.clamp(0.0, 1.0))
}

/// Assembles
/// `A = P H^H (sum mu F) H + (P sigma^2 / I_th) H_P^H q q^H H_P + zeta sigma^2 I` and
/// `B = P H_S^H q q^H H_S + sigma_S^2 I`.
#[allow(clippy::too_many_arguments)]
pub fn build_a_b(
    state: &TransmitState,
    hulls: &[HullSampleSet],
    h_ci: &CMatrix,
    h_s: &CMatrix,
    h_p: &CMatrix,
    q: &CVector,
    budget: &Budget,
) -> Result<(HermitianMatrix, HermitianMatrix)> {
    let m = h_ci.ncols();
    for (ctx, mat) in [("build_a_b H_S", h_s), ("build_a_b H_P", h_p)] {
        if mat.shape() != h_ci.shape() {
            return Err(Error::DimensionMismatch {
                context: ctx,
                expected: h_ci.nrows(),
                actual: mat.nrows(),
            });
        }
    }
    if q.len() != h_ci.nrows() {
        return Err(Error::DimensionMismatch {
            context: "build_a_b q",
            expected: h_ci.nrows(),
            actual: q.len(),
        });
    }
    let p = state.power;
    let mut a = CMatrix::zeros(m, m);
    for (hull, mu) in hulls.iter().zip(&state.mu) {
        for (f, &wt) in hull.generators.iter().zip(mu) {
            if wt > 0.0 {
                let u = h_ci.adjoint() * f;
                a += (&u * u.adjoint()) * Complex64::new(p * wt, 0.0);
            }
        }
    }
    let a_p = h_p.adjoint() * q;
    a += (&a_p * a_p.adjoint()) * Complex64::new(p * budget.sigma2 / budget.i_th, 0.0);
    for i in 0..m {
        a[(i, i)] += Complex64::new(state.zeta * budget.sigma2, 0.0);
    }
    let a_s = h_s.adjoint() * q;
    let mut b = (&a_s * a_s.adjoint()) * Complex64::new(p, 0.0);
    for i in 0..m {
        b[(i, i)] += Complex64::new(budget.sigma_s2, 0.0);
    }
    Ok((HermitianMatrix::symmetrized(a), HermitianMatrix::symmetrized(b)))
}

/// Worst-sample SINR ratio `(P|q^H H_S x|^2 + s_S) / (P sum_k max_i |f_ki^H H x|^2 + s)`.
pub fn hull_objective(
    x: &CVector,
    power: f64,
    q: &CVector,
    hulls: &[HullSampleSet],
    h_ci: &CMatrix,
    h_s: &CMatrix,
    budget: &Budget,
) -> f64 {
    let hx = h_ci * x;
    let leak: f64 = hulls
        .iter()
        .map(|h| {
            h.generators
                .iter()
                .map(|f| f.dotc(&hx).norm_sqr())
                .fold(0.0, f64::max)
        })
        .sum();
    let signal = q.dotc(&(h_s * x)).norm_sqr();
    (power * signal + budget.sigma_s2) / (power * leak + budget.sigma2)
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / new.abs().max(1.0)
}

/// Robust transmit beamformer for fixed `q`.
///
/// Runs until the quotient changes by at most `epsilon` relative to
/// `max(1, |gamma|)`, a two-cycle is detected, or `transmit_max_iter` trips.
/// The returned `w` is the best iterate by [`hull_objective`] with its power
/// recomputed so that both budget constraints hold.
pub fn solve_transmit_bf(q: &CVector, inst: &Instance) -> Result<TransmitOutcome> {
    let budget = inst.budget;
    let h_ci = &inst.channels.h_ci;
    let hulls = inst
        .regions
        .iter()
        .map(|r| hull_f_samples(r, q, &inst.eve_model))
        .collect::<Result<Vec<_>>>()?;
    // A and B are divided by sigma^2, which leaves the quotient and its
    // maximizer unchanged and keeps the ridge threshold meaningful.
    let scaled_budget = Budget {
        p_max: budget.p_max / budget.sigma2,
        i_th: budget.i_th / budget.sigma2,
        sigma_s2: budget.sigma_s2 / budget.sigma2,
        sigma2: 1.0,
    };
    let rayleigh = |state: &TransmitState| -> Result<(f64, CVector)> {
        let scaled = TransmitState {
            power: state.power / budget.sigma2,
            ..state.clone()
        };
        let (a, b) = build_a_b(&scaled, &hulls, h_ci, &inst.h_s, &inst.h_p, q, &scaled_budget)?;
        generalized_rayleigh_max(&a, &b)
    };
    let feasible = |x: &CVector| -> (f64, f64) {
        let p = update_power(x, q, &inst.h_p, budget.p_max, budget.i_th);
        (p, hull_objective(x, p, q, &hulls, h_ci, &inst.h_s, &budget))
    };

    let mut state = TransmitState {
        x: CVector::zeros(h_ci.ncols()),
        power: budget.p_max,
        zeta: 0.0,
        gamma: 0.0,
        mu: hulls.iter().map(|h| h.weights.clone()).collect(),
    };
    let (gamma, x) = rayleigh(&state)?;
    state.gamma = gamma;
    state.x = x;

    let (mut best_power, mut best_obj) = feasible(&state.x);
    let mut best = state.clone();
    let mut history = vec![gamma];
    let mut converged = false;
    let mut iterations = 0;

    for n in 1..=inst.config.transmit_max_iter {
        iterations = n;
        let g = interference_gain(&state.x, q, &inst.h_p);
        state.power = power_for_gain(g, budget.p_max, budget.i_th);
        state.zeta = (1.0 - state.power * g / budget.i_th).clamp(0.0, 1.0);
        state.mu = hulls
            .iter()
            .map(|h| update_mu_weights(&state.x, h_ci, h))
            .collect();
        let (gamma, x) = rayleigh(&state)?;
        state.gamma = gamma;
        state.x = x;

        let (p, obj) = feasible(&state.x);
        if obj > best_obj {
            best_obj = obj;
            best_power = p;
            best = state.clone();
        }
        let eps = inst.config.epsilon;
        if relative_change(gamma, history[history.len() - 1]) <= eps {
            converged = true;
            break;
        }
        if history.len() >= 2 && relative_change(gamma, history[history.len() - 2]) <= eps {
            // Period-two oscillation between the power-limited and the
            // interference-limited branch; the best iterate is kept.
            converged = true;
            break;
        }
        history.push(gamma);
    }

    best.power = best_power;
    best.zeta = (1.0 - best_power * interference_gain(&best.x, q, &inst.h_p) / budget.i_th)
        .clamp(0.0, 1.0);
    let w = &best.x * Complex64::new(best_power.sqrt(), 0.0);
    Ok(TransmitOutcome {
        w,
        state: best,
        iterations,
        converged,
        objective: best_obj,
    })
}
