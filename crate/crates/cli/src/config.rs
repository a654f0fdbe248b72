//! JSON configuration with unit-suffixed keys. dBm, dB and degrees exist only
//! here; [`ConfigFile::to_scenario`] converts everything to watts, linear
//! ratios and radians.

use std::collections::BTreeMap;
use std::path::Path;

use irsec_core::baselines::SchemeId;
use irsec_core::channel::Placement;
use irsec_core::scenario::{db_to_linear, dbm_to_watts, PenaltySettings, ScenarioConfig};
use irsec_core::uncertainty::GridLayout;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub cbs_position_m: [f64; 3],
    pub irs_position_m: [f64; 3],
    pub su_position_m: [f64; 3],
    pub pu_position_m: [f64; 3],
    /// Eavesdropper region centers; the first `eve_count` are used.
    pub eve_positions_m: Vec<[f64; 3]>,
    pub carrier_ghz: f64,
    pub cbs_antennas: usize,
    pub irs_rows: usize,
    pub irs_cols: usize,
    pub path_count: usize,
    pub path_loss_exponent: f64,
    pub eve_count: usize,
    pub p_c_max_dbm: f64,
    pub gamma_th_db: f64,
    pub sigma_s2_dbm: f64,
    pub sigma2_dbm: f64,
    pub sigma_p2_dbm: f64,
    pub delta_deg: f64,
    pub hull_theta_points: usize,
    pub hull_phi_points: usize,
    pub eval_grid_step_deg: f64,
    /// Outer-loop stopping tolerance in bit/s/Hz.
    pub epsilon_bits: f64,
    pub penalty_rho_initial: f64,
    pub penalty_rho_max: f64,
    pub penalty_stall_tol: f64,
    pub penalty_max_inner: usize,
    pub penalty_max_outer: usize,
    pub transmit_max_iter: usize,
    pub outer_max_iter: usize,
    pub sdp_tol: f64,
    /// Magnitude of the Kronecker coefficient at the CBS.
    pub cbs_correlation: f64,
    pub irs_correlation: bool,
    /// Seed of the single run made by the `beampattern` command.
    pub seed: u64,
    /// Display lattice step of beampattern grids.
    pub beampattern_step_deg: f64,
    /// Schemes to run; each experiment kind has its own default.
    pub schemes: Option<Vec<SchemeId>>,
    /// Sweep axes keyed by the config key they override.
    pub sweeps: BTreeMap<String, Vec<serde_json::Value>>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            cbs_position_m: s.placement.cbs,
            irs_position_m: s.placement.irs,
            su_position_m: s.placement.su,
            pu_position_m: s.placement.pu,
            eve_positions_m: s.placement.eves,
            carrier_ghz: 28.0,
            cbs_antennas: s.cbs_antennas,
            irs_rows: s.irs_rows,
            irs_cols: s.irs_cols,
            path_count: s.path_count,
            path_loss_exponent: s.path_loss_exponent,
            eve_count: s.eve_count,
            p_c_max_dbm: 46.0,
            gamma_th_db: 0.0,
            sigma_s2_dbm: -90.0,
            sigma2_dbm: -90.0,
            sigma_p2_dbm: -120.0,
            delta_deg: 1.0,
            hull_theta_points: s.hull_grid.theta_points,
            hull_phi_points: s.hull_grid.phi_points,
            eval_grid_step_deg: 0.1,
            epsilon_bits: s.epsilon,
            penalty_rho_initial: s.penalty.rho_initial,
            penalty_rho_max: s.penalty.rho_max,
            penalty_stall_tol: s.penalty.stall_tol,
            penalty_max_inner: s.penalty.max_inner,
            penalty_max_outer: s.penalty.max_outer,
            transmit_max_iter: s.transmit_max_iter,
            outer_max_iter: s.outer_max_iter,
            sdp_tol: s.sdp_tol,
            cbs_correlation: s.cbs_correlation,
            irs_correlation: s.irs_correlation,
            seed: 0,
            beampattern_step_deg: 1.0,
            schemes: None,
            sweeps: BTreeMap::new(),
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl ConfigFile {
    /// Parses JSON text; errors name the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            invalid(&key, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Checks every field against its key name, then runs the library's own
    /// validation on the converted scenario.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_ghz", self.carrier_ghz),
            ("path_loss_exponent", self.path_loss_exponent),
            ("eval_grid_step_deg", self.eval_grid_step_deg),
            ("epsilon_bits", self.epsilon_bits),
            ("penalty_rho_initial", self.penalty_rho_initial),
            ("penalty_rho_max", self.penalty_rho_max),
            ("penalty_stall_tol", self.penalty_stall_tol),
            ("sdp_tol", self.sdp_tol),
            ("beampattern_step_deg", self.beampattern_step_deg),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, format!("must be positive and finite, got {v}")));
            }
        }
        let finite = [
            ("p_c_max_dbm", self.p_c_max_dbm),
            ("gamma_th_db", self.gamma_th_db),
            ("sigma_s2_dbm", self.sigma_s2_dbm),
            ("sigma2_dbm", self.sigma2_dbm),
            ("sigma_p2_dbm", self.sigma_p2_dbm),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(invalid(key, format!("must be finite, got {v}")));
            }
        }
        let counts = [
            ("cbs_antennas", self.cbs_antennas),
            ("irs_rows", self.irs_rows),
            ("irs_cols", self.irs_cols),
            ("path_count", self.path_count),
            ("hull_theta_points", self.hull_theta_points),
            ("hull_phi_points", self.hull_phi_points),
            ("penalty_max_inner", self.penalty_max_inner),
            ("penalty_max_outer", self.penalty_max_outer),
            ("transmit_max_iter", self.transmit_max_iter),
            ("outer_max_iter", self.outer_max_iter),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        if self.eve_count == 0 || self.eve_count > self.eve_positions_m.len() {
            return Err(invalid(
                "eve_count",
                format!(
                    "must be between 1 and {} (entries of eve_positions_m), got {}",
                    self.eve_positions_m.len(),
                    self.eve_count
                ),
            ));
        }
        if !(self.delta_deg >= 0.0 && self.delta_deg.is_finite()) {
            return Err(invalid("delta_deg", format!("must be nonnegative, got {}", self.delta_deg)));
        }
        if !(0.0..=1.0).contains(&self.cbs_correlation) {
            return Err(invalid(
                "cbs_correlation",
                format!("must lie in [0, 1], got {}", self.cbs_correlation),
            ));
        }
        if matches!(&self.schemes, Some(s) if s.is_empty()) {
            return Err(invalid("schemes", "must not be empty"));
        }
        for (axis, values) in &self.sweeps {
            let key = format!("sweeps.{axis}");
            let axis = crate::experiment::Axis::from_key(axis).ok_or_else(|| invalid(&key, "unknown sweep axis"))?;
            if values.is_empty() {
                return Err(invalid(&key, "must not be empty"));
            }
            for (i, v) in values.iter().enumerate() {
                let value = axis
                    .parse_value(v)
                    .map_err(|reason| invalid(&format!("{key}[{i}]"), reason))?;
                crate::experiment::AxisPoint { axis, value }
                    .apply(self)
                    .and_then(|c| c.validate())
                    .map_err(|e| invalid(&format!("{key}[{i}]"), e.to_string()))?;
            }
        }
        self.to_scenario()
            .validate()
            .map_err(|e| invalid("<scenario>", e.to_string()))
    }

    pub fn to_scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            placement: Placement {
                cbs: self.cbs_position_m,
                irs: self.irs_position_m,
                su: self.su_position_m,
                pu: self.pu_position_m,
                eves: self.eve_positions_m.clone(),
            },
            carrier_hz: self.carrier_ghz * 1e9,
            cbs_antennas: self.cbs_antennas,
            irs_rows: self.irs_rows,
            irs_cols: self.irs_cols,
            path_count: self.path_count,
            path_loss_exponent: self.path_loss_exponent,
            eve_count: self.eve_count,
            p_max: dbm_to_watts(self.p_c_max_dbm),
            gamma_th: db_to_linear(self.gamma_th_db),
            sigma_s2: dbm_to_watts(self.sigma_s2_dbm),
            sigma2: dbm_to_watts(self.sigma2_dbm),
            sigma_p2: dbm_to_watts(self.sigma_p2_dbm),
            delta: self.delta_deg.to_radians(),
            hull_grid: GridLayout {
                theta_points: self.hull_theta_points,
                phi_points: self.hull_phi_points,
            },
            eval_grid_step: self.eval_grid_step_deg.to_radians(),
            epsilon: self.epsilon_bits,
            penalty: PenaltySettings {
                rho_initial: self.penalty_rho_initial,
                rho_max: self.penalty_rho_max,
                stall_tol: self.penalty_stall_tol,
                max_inner: self.penalty_max_inner,
                max_outer: self.penalty_max_outer,
            },
            transmit_max_iter: self.transmit_max_iter,
            outer_max_iter: self.outer_max_iter,
            sdp_tol: self.sdp_tol,
            cbs_correlation: self.cbs_correlation,
            irs_correlation: self.irs_correlation,
        }
    }
}
