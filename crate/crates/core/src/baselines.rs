//! Comparison schemes sharing the optimizer's evaluation.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::AnglePair;
use crate::error::{Error, Result};
use crate::numerics::CVector;
use crate::optimizer::{
    alternate, fit_to_budget, mrt_transmit, random_phases, worst_case_asr, FeasibilityReport, SchemeResult,
};
use crate::reflect_bf::solve_reflect_bf;
use crate::scenario::Instance;
use crate::uncertainty::worst_case_grid;

/// Redraws allowed when a random transmit vector makes the reflect step fail.
const RANDOM_RETRIES: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Robust,
    PcsiOptimal,
    NonRobust,
    RandomIrs,
    RandomMrt,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::Robust,
        SchemeId::PcsiOptimal,
        SchemeId::NonRobust,
        SchemeId::RandomIrs,
        SchemeId::RandomMrt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Robust => "robust",
            SchemeId::PcsiOptimal => "pcsi_optimal",
            SchemeId::NonRobust => "non_robust",
            SchemeId::RandomIrs => "random_irs",
            SchemeId::RandomMrt => "random_mrt",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "scheme",
                reason: format!("unknown scheme {s:?}"),
            })
    }
}

/// Draws one lattice point per eavesdropper region, uniformly.
pub fn draw_actual_angles(inst: &Instance, seed: u64) -> Vec<AnglePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA17_A9C1E5);
    inst.regions
        .iter()
        .map(|r| {
            let grid = worst_case_grid(r, inst.config.eval_grid_step);
            grid[rng.random_range(0..grid.len())]
        })
        .collect()
}

/// A scheme result together with its rate at the actual eavesdropper angles.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub result: SchemeResult,
    /// ASR with each eavesdropper at its actual angle.
    pub actual_asr: f64,
}

fn random_transmit(inst: &Instance, q: &CVector, rng: &mut ChaCha8Rng) -> CVector {
    let w = CVector::from_fn(inst.geom.m, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let w = w.unscale(w.norm()) * Complex64::new(inst.budget.p_max.sqrt(), 0.0);
    fit_to_budget(&w, q, inst)
}

/// Runs `id` on `inst`. `actual` must hold one angle inside each region.
pub fn run_scheme(id: SchemeId, inst: &Instance, actual: &[AnglePair], seed: u64) -> Result<SchemeRun> {
    for (r, a) in inst.regions.iter().zip(actual) {
        let tol = 1e-9;
        let inside = (r.lower.theta - tol..=r.upper.theta + tol).contains(&a.theta)
            && (r.lower.phi - tol..=r.upper.phi + tol).contains(&a.phi);
        if !inside {
            return Err(Error::InvalidParameter {
                name: "actual_eve_angles",
                reason: format!("({}, {}) lies outside its region", a.theta, a.phi),
            });
        }
    }
    let pinned_actual = inst.pinned_at(actual)?;
    let mut result = match id {
        SchemeId::Robust => alternate(inst, seed),
        SchemeId::PcsiOptimal => alternate(&pinned_actual, seed),
        SchemeId::NonRobust => {
            let centers: Vec<AnglePair> = inst.regions.iter().map(|r| r.center).collect();
            alternate(&inst.pinned_at(&centers)?, seed)
        }
        SchemeId::RandomIrs => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x12_5EED);
            let mut last_err = None;
            let mut found = None;
            for attempt in 0..RANDOM_RETRIES {
                // Interference is evaluated at the phases the reflect step
                // returns, so the draw is fitted to power only here.
                let ones = CVector::from_element(inst.geom.n(), Complex64::new(1.0, 0.0));
                let w = random_transmit(inst, &ones, &mut rng);
                let w = w.unscale(w.norm()) * Complex64::new(inst.budget.p_max.sqrt(), 0.0);
                match solve_reflect_bf(&w, inst) {
                    Ok(rf) => {
                        let w = fit_to_budget(&w, &rf.q, inst);
                        let mut r = SchemeResult::fixed(id, w, rf.q, inst);
                        r.sdp_solves = rf.sdp_solves;
                        r.penalty_log = rf.penalty_log;
                        r.charnes_cooper_error = rf.charnes_cooper_error;
                        r.reflect_rates = Some((rf.rate_from_t, rf.rate_from_reciprocal));
                        r.outer_iterations = attempt as usize + 1;
                        found = Some(r);
                        break;
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            match found {
                Some(r) => r,
                None => return Err(last_err.expect("at least one attempt ran")),
            }
        }
        SchemeId::RandomMrt => {
            let q = random_phases(inst.geom.n(), seed ^ 0x3A7_F00D);
            let w = mrt_transmit(&q, inst);
            SchemeResult::fixed(id, w, q, inst)
        }
    };
    result.scheme = id;
    // Pinned runs optimize a different instance; report against the full
    // regions like every other scheme.
    result.final_worst_case_asr = worst_case_asr(&result.w, &result.q, inst);
    result.feasibility = FeasibilityReport::check(&result.w, &result.q, inst);
    let actual_asr = worst_case_asr(&result.w, &result.q, &pinned_actual);
    Ok(SchemeRun { result, actual_asr })
}
