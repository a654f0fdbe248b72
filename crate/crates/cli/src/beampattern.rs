//! Angular response of the IRS reflection towards far-field directions.

use irsec_core::channel::{irs_angles_to, upa_steering, AnglePair};
use irsec_core::numerics::CVector;
use irsec_core::scenario::Instance;
use irsec_core::uncertainty::worst_case_grid;
use irsec_core::Result;

/// Gains in dB relative to the SU line-of-sight direction.
#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternGrid {
    pub points: Vec<AnglePair>,
    pub gain_db: Vec<f64>,
    pub su_direction: AnglePair,
}

impl BeampatternGrid {
    pub fn max_gain_db(&self) -> f64 {
        self.gain_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `|q^H diag(a(theta, phi)^H) H_CI w|^2`.
pub fn raw_gain(w: &CVector, q: &CVector, inst: &Instance, angles: AnglePair) -> Result<f64> {
    let a = upa_steering(&inst.geom, angles)?;
    let g = &inst.channels.h_ci * w;
    Ok(q.dotc(&a.conjugate().component_mul(&g)).norm_sqr())
}

/// Evaluates the pattern on `lattice`. A lattice point equal to the SU
/// direction reads exactly 0 dB.
pub fn beampattern(w: &CVector, q: &CVector, inst: &Instance, lattice: &[AnglePair]) -> Result<BeampatternGrid> {
    let placement = &inst.config.placement;
    let (su_direction, _) = irs_angles_to(placement.irs, placement.su)?;
    let reference = raw_gain(w, q, inst, su_direction)?;
    let gain_db = lattice
        .iter()
        .map(|&a| Ok(10.0 * (raw_gain(w, q, inst, a)? / reference).log10()))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeampatternGrid {
        points: lattice.to_vec(),
        gain_db,
        su_direction,
    })
}

/// Full angular domain at `step_deg`, with the SU direction appended.
pub fn display_lattice(inst: &Instance, step_deg: f64) -> Result<Vec<AnglePair>> {
    let placement = &inst.config.placement;
    let (su, _) = irs_angles_to(placement.irs, placement.su)?;
    let thetas = (90.0 / step_deg).floor() as usize;
    let phis = (180.0 / step_deg).floor() as usize;
    let mut out = Vec::with_capacity((thetas + 1) * (phis + 1) + 1);
    for i in 0..=thetas {
        for j in 0..=phis {
            out.push(AnglePair::from_degrees(i as f64 * step_deg, j as f64 * step_deg)?);
        }
    }
    out.push(su);
    Ok(out)
}

/// Every evaluation-lattice point of every eavesdropper region.
pub fn eve_lattice(inst: &Instance) -> Vec<AnglePair> {
    inst.regions
        .iter()
        .flat_map(|r| worst_case_grid(r, inst.config.eval_grid_step))
        .collect()
}
