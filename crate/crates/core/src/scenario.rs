//! Scenario parameters and the per-seed problem instance shared by all solvers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_spatial_correlation, geometry_to_params, kronecker_correlation, realize,
    sinc_correlation, AnglePair, ArrayGeometry, ChannelRealization, Placement,
};
use crate::error::{Error, Result};
use crate::numerics::{psd_sqrt, CMatrix, CVector, HermitianMatrix};
use crate::uncertainty::{build_region, worst_case_grid, EveChannelModel, GridLayout, UncertaintyRegion};

/// Settings of the rank-one penalty loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySettings {
    pub rho_initial: f64,
    pub rho_max: f64,
    /// Relative Frobenius change below which an iterate counts as stalled.
    pub stall_tol: f64,
    /// Penalty iterations per outer (chi) step.
    pub max_inner: usize,
    /// Outer chi-update steps.
    pub max_outer: usize,
}

impl Default for PenaltySettings {
    fn default() -> Self {
        Self {
            rho_initial: 10.0,
            rho_max: 1e10,
            stall_tol: 1e-4,
            max_inner: 60,
            max_outer: 4,
        }
    }
}

/// All inputs of one simulated deployment. Powers are in watts and angles in
/// radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub placement: Placement,
    pub carrier_hz: f64,
    pub cbs_antennas: usize,
    pub irs_rows: usize,
    pub irs_cols: usize,
    pub path_count: usize,
    pub path_loss_exponent: f64,
    /// Number of eavesdroppers; the first `eve_count` centers are used.
    pub eve_count: usize,
    pub p_max: f64,
    /// Linear interference-to-noise threshold at the PU.
    pub gamma_th: f64,
    pub sigma_s2: f64,
    pub sigma2: f64,
    pub sigma_p2: f64,
    pub delta: f64,
    pub hull_grid: GridLayout,
    pub eval_grid_step: f64,
    pub epsilon: f64,
    pub penalty: PenaltySettings,
    pub transmit_max_iter: usize,
    pub outer_max_iter: usize,
    pub sdp_tol: f64,
    /// Kronecker coefficient at the CBS; 0 disables CBS correlation.
    pub cbs_correlation: f64,
    pub irs_correlation: bool,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            placement: Placement {
                cbs: [-80.0, 29.0, 15.0],
                irs: [0.0, 0.0, 30.0],
                su: [0.0, 18.5, 18.5],
                pu: [80.0, 29.0, 15.0],
                eves: vec![
                    [-44.0, 25.5, 18.5],
                    [16.0, 28.0, 18.5],
                    [30.0, 30.0, 15.0],
                    [-20.0, 20.0, 15.0],
                    [50.0, 20.0, 30.0],
                ],
            },
            carrier_hz: 28e9,
            cbs_antennas: 8,
            irs_rows: 4,
            irs_cols: 4,
            path_count: 5,
            path_loss_exponent: 2.0,
            eve_count: 2,
            p_max: dbm_to_watts(46.0),
            gamma_th: 1.0,
            sigma_s2: 1e-12,
            sigma2: 1e-12,
            sigma_p2: dbm_to_watts(-120.0),
            delta: 1f64.to_radians(),
            hull_grid: GridLayout::default(),
            eval_grid_step: 0.1f64.to_radians(),
            epsilon: 1e-3,
            penalty: PenaltySettings::default(),
            transmit_max_iter: 500,
            outer_max_iter: 50,
            sdp_tol: 1e-7,
            cbs_correlation: 0.0,
            irs_correlation: false,
        }
    }
}

impl ScenarioConfig {
    pub fn i_th(&self) -> f64 {
        self.gamma_th * self.sigma_p2
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::half_wavelength(self.cbs_antennas, self.irs_rows, self.irs_cols, self.carrier_hz)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        let positive = [
            ("p_max", self.p_max),
            ("gamma_th", self.gamma_th),
            ("sigma_s2", self.sigma_s2),
            ("sigma2", self.sigma2),
            ("sigma_p2", self.sigma_p2),
            ("epsilon", self.epsilon),
            ("eval_grid_step", self.eval_grid_step),
            ("carrier_hz", self.carrier_hz),
            ("sdp_tol", self.sdp_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.eve_count == 0 || self.eve_count > self.placement.eves.len() {
            return Err(Error::InvalidParameter {
                name: "eve_count",
                reason: format!(
                    "must be between 1 and {} (configured centers), got {}",
                    self.placement.eves.len(),
                    self.eve_count
                ),
            });
        }
        if self.path_count == 0 {
            return Err(Error::InvalidParameter {
                name: "path_count",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("must be nonnegative, got {}", self.delta),
            });
        }
        if !(0.0..=1.0).contains(&self.cbs_correlation) {
            return Err(Error::InvalidParameter {
                name: "cbs_correlation",
                reason: format!("must lie in [0, 1], got {}", self.cbs_correlation),
            });
        }
        Ok(())
    }
}

/// Power and noise budget in linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub p_max: f64,
    pub i_th: f64,
    pub sigma_s2: f64,
    pub sigma2: f64,
}

/// One channel draw together with the eavesdropper uncertainty sets.
#[derive(Debug, Clone)]
pub struct Instance {
    pub geom: ArrayGeometry,
    pub channels: ChannelRealization,
    /// `diag(h_SU^H) H_CI`.
    pub h_s: CMatrix,
    /// `diag(h_PU^H) H_CI`.
    pub h_p: CMatrix,
    pub regions: Vec<UncertaintyRegion>,
    pub eve_model: EveChannelModel,
    /// Evaluation-lattice channels, one list per eavesdropper.
    pub eval_channels: Vec<Vec<CVector>>,
    pub budget: Budget,
    pub config: ScenarioConfig,
}

impl Instance {
    /// Draws channels for `seed` and builds regions around the nominal
    /// eavesdropper LoS angles.
    pub fn build(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let geom = config.geometry()?;
        let mut placement = config.placement.clone();
        placement.eves.truncate(config.eve_count);
        let params = geometry_to_params(&placement, config.path_loss_exponent, config.path_count, seed)?;
        let mut channels = realize(&geom, &params, seed)?;

        let mut eve_model = EveChannelModel::new(geom, config.path_count);
        if config.cbs_correlation > 0.0 || config.irs_correlation {
            let r_cbs = kronecker_correlation(Complex64::new(config.cbs_correlation, 0.0), geom.m)?;
            let r_irs = if config.irs_correlation {
                sinc_correlation(&geom)
            } else {
                HermitianMatrix::identity(geom.n())
            };
            channels = apply_spatial_correlation(&channels, &r_cbs, &r_irs)?;
            if config.irs_correlation {
                eve_model.irs_sqrt = Some(psd_sqrt(&r_irs)?.into_matrix());
            }
        }

        let centers: Vec<(AnglePair, f64)> = params
            .eves
            .iter()
            .map(|p| (p.los_angles(), 1.0 / p.avg_path_loss.sqrt()))
            .collect();
        Self::assemble(config, geom, channels, eve_model, &centers, config.delta)
    }

    fn assemble(
        config: &ScenarioConfig,
        geom: ArrayGeometry,
        channels: ChannelRealization,
        eve_model: EveChannelModel,
        centers: &[(AnglePair, f64)],
        delta: f64,
    ) -> Result<Self> {
        let regions = centers
            .iter()
            .map(|&(c, xi)| build_region(c, delta, config.hull_grid, config.eval_grid_step, xi))
            .collect::<Result<Vec<_>>>()?;
        let eval_channels = regions
            .iter()
            .map(|r| eve_model.channels(r, &worst_case_grid(r, config.eval_grid_step)))
            .collect();
        Ok(Self {
            geom,
            h_s: channels.h_s(),
            h_p: channels.h_p(),
            channels,
            regions,
            eve_model,
            eval_channels,
            budget: Budget {
                p_max: config.p_max,
                i_th: config.i_th(),
                sigma_s2: config.sigma_s2,
                sigma2: config.sigma2,
            },
            config: config.clone(),
        })
    }

    /// Same channels with each region replaced by a zero-width region pinned
    /// at the given angles.
    pub fn pinned_at(&self, angles: &[AnglePair]) -> Result<Self> {
        if angles.len() != self.regions.len() {
            return Err(Error::DimensionMismatch {
                context: "Instance::pinned_at",
                expected: self.regions.len(),
                actual: angles.len(),
            });
        }
        let centers: Vec<(AnglePair, f64)> =
            angles.iter().zip(&self.regions).map(|(&a, r)| (a, r.xi)).collect();
        Self::assemble(
            &self.config,
            self.geom,
            self.channels.clone(),
            self.eve_model.clone(),
            &centers,
            0.0,
        )
    }

    /// Eavesdropper channel at an explicit angle, using region `k`'s gain bound.
    pub fn eve_channel(&self, k: usize, angles: AnglePair) -> CVector {
        self.eve_model.channel(angles, self.regions[k].xi)
    }

    pub fn eve_count(&self) -> usize {
        self.regions.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(-120.0) - 1e-15).abs() < 1e-28);
        assert!((db_to_linear(-30.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn reference_instance_builds() {
        let cfg = ScenarioConfig::default();
        let inst = Instance::build(&cfg, 1).unwrap();
        assert_eq!(inst.channels.h_ci.shape(), (16, 8));
        assert_eq!(inst.regions.len(), 2);
        assert_eq!(inst.eval_channels[0].len(), 121);
        assert!((inst.budget.i_th - 1e-15).abs() < 1e-27);
    }

    #[test]
    fn all_five_eves_are_in_front_and_below() {
        let cfg = ScenarioConfig {
            eve_count: 5,
            ..ScenarioConfig::default()
        };
        assert!(Instance::build(&cfg, 3).is_ok());
    }

    #[test]
    fn pinned_instance_has_single_points() {
        let inst = Instance::build(&ScenarioConfig::default(), 2).unwrap();
        let angles: Vec<AnglePair> = inst.regions.iter().map(|r| r.upper).collect();
        let pinned = inst.pinned_at(&angles).unwrap();
        for (r, a) in pinned.regions.iter().zip(&angles) {
            assert_eq!(r.sample_grid, vec![*a]);
        }
        assert!(pinned.eval_channels.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = ScenarioConfig {
            eve_count: 6,
            ..ScenarioConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ScenarioConfig {
            p_max: 0.0,
            ..ScenarioConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
