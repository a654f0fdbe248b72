//! Sparse mmWave channels for a ULA base station and a UPA reflecting surface.
//!
//! Frame: the IRS lies in the X-Z plane with its center at the configured
//! position and reflects toward +Y. For a node at offset `v` from the IRS
//! center, `sin(theta)cos(phi) = v_x/|v|`, `sin(theta)sin(phi) = v_y/|v|` and
//! `cos(theta) = -v_z/|v|`, so nodes below the IRS map into `theta <= pi/2`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{psd_sqrt, CMatrix, CVector, HermitianMatrix};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const ANGLE_CLAMP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// CBS antenna count.
    pub m: usize,
    /// IRS elements along X.
    pub n1: usize,
    /// IRS elements along Z.
    pub n2: usize,
    pub d: f64,
    pub d1: f64,
    pub d2: f64,
    pub lambda: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spacing on both arrays.
    pub fn half_wavelength(m: usize, n1: usize, n2: usize, carrier_hz: f64) -> Result<Self> {
        let lambda = SPEED_OF_LIGHT / carrier_hz;
        let g = Self {
            m,
            n1,
            n2,
            d: lambda / 2.0,
            d1: lambda / 2.0,
            d2: lambda / 2.0,
            lambda,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn validate(&self) -> Result<()> {
        for (name, count) in [("m", self.m), ("n1", self.n1), ("n2", self.n2)] {
            if count == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be at least 1".into(),
                });
            }
        }
        for (name, v) in [
            ("d", self.d),
            ("d1", self.d1),
            ("d2", self.d2),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    fn wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda
    }

    /// Element positions `[x, 0, z]` in the order used by [`upa_steering`].
    pub fn element_positions(&self) -> Vec<[f64; 3]> {
        let c1 = (self.n1 as f64 + 1.0) / 2.0;
        let c2 = (self.n2 as f64 + 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.n());
        for m in 1..=self.n1 {
            for n in 1..=self.n2 {
                out.push([(m as f64 - c1) * self.d1, 0.0, (n as f64 - c2) * self.d2]);
            }
        }
        out
    }
}

/// Departure or arrival direction at the IRS. For CBS-side angles only
/// `theta` is used and holds `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub theta: f64,
    pub phi: f64,
}

impl AnglePair {
    /// Clamps values within 1e-6 rad of `[0, pi/2] x [0, pi]`; rejects the rest.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        let in_range = |v: f64, hi: f64| v >= -ANGLE_CLAMP_TOL && v <= hi + ANGLE_CLAMP_TOL;
        if !(in_range(theta, FRAC_PI_2) && in_range(phi, PI)) {
            return Err(Error::AngleOutOfDomain { theta, phi });
        }
        Ok(Self {
            theta: theta.clamp(0.0, FRAC_PI_2),
            phi: phi.clamp(0.0, PI),
        })
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    pub fn to_degrees(self) -> (f64, f64) {
        (self.theta.to_degrees(), self.phi.to_degrees())
    }
}

/// One resolved propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: Complex64,
    pub departure: AnglePair,
    pub arrival: AnglePair,
}

/// Large-scale parameters of one link. `irs_angles[0]` is the LoS path; the
/// NLoS entries are absolute angles drawn once and then frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub path_count: usize,
    pub avg_path_loss: f64,
    pub path_loss_exponent: f64,
    pub irs_angles: Vec<AnglePair>,
    /// CBS departure angle `eta` per path; empty for IRS-to-user links.
    pub cbs_angles: Vec<f64>,
}

impl ChannelParams {
    pub fn los_angles(&self) -> AnglePair {
        self.irs_angles[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.path_count == 0 || self.irs_angles.len() != self.path_count {
            return Err(Error::DimensionMismatch {
                context: "ChannelParams paths",
                expected: self.path_count.max(1),
                actual: self.irs_angles.len(),
            });
        }
        if !self.cbs_angles.is_empty() && self.cbs_angles.len() != self.path_count {
            return Err(Error::DimensionMismatch {
                context: "ChannelParams cbs_angles",
                expected: self.path_count,
                actual: self.cbs_angles.len(),
            });
        }
        if !(self.avg_path_loss > 0.0 && self.avg_path_loss.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "avg_path_loss",
                reason: format!("must be positive, got {}", self.avg_path_loss),
            });
        }
        Ok(())
    }

    /// Resolves the paths with the given complex gains (one per path).
    pub fn paths(&self, gains: &[Complex64]) -> Vec<PathComponent> {
        (0..self.path_count)
            .map(|i| PathComponent {
                gain: gains[i],
                departure: AnglePair {
                    theta: self.cbs_angles.get(i).copied().unwrap_or(0.0),
                    phi: 0.0,
                },
                arrival: self.irs_angles[i],
            })
            .collect()
    }
}

/// Node positions in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub cbs: [f64; 3],
    pub irs: [f64; 3],
    pub su: [f64; 3],
    pub pu: [f64; 3],
    pub eves: Vec<[f64; 3]>,
}

/// Parameters of every link in a placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub cbs_irs: ChannelParams,
    pub su: ChannelParams,
    pub pu: ChannelParams,
    pub eves: Vec<ChannelParams>,
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// N x M.
    pub h_ci: CMatrix,
    pub h_su: CVector,
    pub h_pu: CVector,
    pub eve_nominal: Vec<CVector>,
    pub params: LinkParams,
}

impl ChannelRealization {
    pub fn h_s(&self) -> CMatrix {
        effective_channel(&self.h_su, &self.h_ci).expect("realization dimensions agree")
    }

    pub fn h_p(&self) -> CMatrix {
        effective_channel(&self.h_pu, &self.h_ci).expect("realization dimensions agree")
    }
}

pub fn ula_steering(geom: &ArrayGeometry, eta: f64) -> CVector {
    let m = geom.m;
    let c = (m as f64 + 1.0) / 2.0;
    let k = geom.wavenumber() * geom.d * eta.sin();
    let scale = 1.0 / (m as f64).sqrt();
    CVector::from_fn(m, |i, _| Complex64::from_polar(scale, k * (i as f64 + 1.0 - c)))
}

/// `(1/sqrt N) a_h(theta, phi) kron a_v(theta)`; element `(m, n)` sits at index
/// `(m-1) N2 + (n-1)`.
pub fn upa_steering(geom: &ArrayGeometry, angles: AnglePair) -> Result<CVector> {
    let angles = AnglePair::new(angles.theta, angles.phi)?;
    Ok(upa_steering_unchecked(geom, angles))
}

pub(crate) fn upa_steering_unchecked(geom: &ArrayGeometry, angles: AnglePair) -> CVector {
    let k = geom.wavenumber();
    let kx = k * geom.d1 * angles.theta.sin() * angles.phi.cos();
    let kz = k * geom.d2 * angles.theta.cos();
    let c1 = (geom.n1 as f64 + 1.0) / 2.0;
    let c2 = (geom.n2 as f64 + 1.0) / 2.0;
    let scale = 1.0 / (geom.n() as f64).sqrt();
    CVector::from_fn(geom.n(), |idx, _| {
        let m = (idx / geom.n2) as f64 + 1.0;
        let n = (idx % geom.n2) as f64 + 1.0;
        Complex64::from_polar(scale, kx * (m - c1) + kz * (n - c2))
    })
}

/// `L` i.i.d. CN(0, 1) gains from a seeded ChaCha stream.
pub fn draw_gains(count: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect()
}

pub fn synth_irs_user_channel(
    geom: &ArrayGeometry,
    params: &ChannelParams,
    seed: u64,
) -> Result<CVector> {
    params.validate()?;
    irs_user_channel_with_gains(geom, params, &draw_gains(params.path_count, seed))
}

pub fn irs_user_channel_with_gains(
    geom: &ArrayGeometry,
    params: &ChannelParams,
    gains: &[Complex64],
) -> Result<CVector> {
    params.validate()?;
    check_len("irs_user_channel gains", params.path_count, gains.len())?;
    let n = geom.n();
    let scale = (n as f64 / (params.path_count as f64 * params.avg_path_loss)).sqrt();
    let mut h = CVector::zeros(n);
    for p in params.paths(gains) {
        h += upa_steering(geom, p.arrival)? * p.gain;
    }
    Ok(h * Complex64::new(scale, 0.0))
}

pub fn synth_cbs_irs_channel(
    geom: &ArrayGeometry,
    params: &ChannelParams,
    seed: u64,
) -> Result<CMatrix> {
    params.validate()?;
    cbs_irs_channel_with_gains(geom, params, &draw_gains(params.path_count, seed))
}

pub fn cbs_irs_channel_with_gains(
    geom: &ArrayGeometry,
    params: &ChannelParams,
    gains: &[Complex64],
) -> Result<CMatrix> {
    params.validate()?;
    check_len("cbs_irs_channel gains", params.path_count, gains.len())?;
    check_len("cbs_irs_channel cbs_angles", params.path_count, params.cbs_angles.len())?;
    let (n, m) = (geom.n(), geom.m);
    let scale = ((n * m) as f64 / (params.path_count as f64 * params.avg_path_loss)).sqrt();
    let mut h = CMatrix::zeros(n, m);
    for p in params.paths(gains) {
        let a_r = upa_steering(geom, p.arrival)?;
        let a_t = ula_steering(geom, p.departure.theta);
        h += (a_r * a_t.adjoint()) * p.gain;
    }
    Ok(h * Complex64::new(scale, 0.0))
}

/// `diag(h^H) H_CI`.
pub fn effective_channel(h: &CVector, h_ci: &CMatrix) -> Result<CMatrix> {
    check_len("effective_channel", h_ci.nrows(), h.len())?;
    let mut out = h_ci.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= h[i].conj();
    }
    Ok(out)
}

/// Direction of `node` seen from the IRS center.
pub fn irs_angles_to(irs: [f64; 3], node: [f64; 3]) -> Result<(AnglePair, f64)> {
    let v = [node[0] - irs[0], node[1] - irs[1], node[2] - irs[2]];
    let dist = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if dist <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "position",
            reason: "node coincides with the IRS".into(),
        });
    }
    if v[1] < 0.0 {
        return Err(Error::BehindSurface { position: node });
    }
    if v[2] > ANGLE_CLAMP_TOL * dist {
        return Err(Error::AboveSurface { position: node });
    }
    let theta = (-v[2] / dist).clamp(-1.0, 1.0).acos();
    let phi = v[1].atan2(v[0]);
    Ok((AnglePair::new(theta, phi)?, dist))
}

fn path_loss(dist: f64, exponent: f64) -> f64 {
    dist.powf(exponent)
}

fn random_irs_angle(rng: &mut ChaCha8Rng) -> AnglePair {
    AnglePair {
        theta: rng.random_range(0.0..=FRAC_PI_2),
        phi: rng.random_range(0.0..=PI),
    }
}

fn user_params(
    irs: [f64; 3],
    node: [f64; 3],
    exponent: f64,
    path_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelParams> {
    let (los, dist) = irs_angles_to(irs, node)?;
    let mut irs_angles = vec![los];
    irs_angles.extend((1..path_count).map(|_| random_irs_angle(rng)));
    Ok(ChannelParams {
        path_count,
        avg_path_loss: path_loss(dist, exponent),
        path_loss_exponent: exponent,
        irs_angles,
        cbs_angles: Vec::new(),
    })
}

/// LoS angles and path losses from positions; NLoS angles drawn uniformly
/// over the valid domain from `seed`.
pub fn geometry_to_params(
    placement: &Placement,
    exponent: f64,
    path_count: usize,
    seed: u64,
) -> Result<LinkParams> {
    if path_count == 0 {
        return Err(Error::InvalidParameter {
            name: "path_count",
            reason: "must be at least 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let irs = placement.irs;

    let (arrival, dist) = irs_angles_to(irs, placement.cbs)?;
    let eta_los = ((irs[0] - placement.cbs[0]) / dist).clamp(-1.0, 1.0).asin();
    let mut irs_angles = vec![arrival];
    let mut cbs_angles = vec![eta_los];
    for _ in 1..path_count {
        irs_angles.push(random_irs_angle(&mut rng));
        cbs_angles.push(rng.random_range(-FRAC_PI_2..=FRAC_PI_2));
    }
    let cbs_irs = ChannelParams {
        path_count,
        avg_path_loss: path_loss(dist, exponent),
        path_loss_exponent: exponent,
        irs_angles,
        cbs_angles,
    };
    let su = user_params(irs, placement.su, exponent, path_count, &mut rng)?;
    let pu = user_params(irs, placement.pu, exponent, path_count, &mut rng)?;
    let eves = placement
        .eves
        .iter()
        .map(|&e| user_params(irs, e, exponent, path_count, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinkParams {
        cbs_irs,
        su,
        pu,
        eves,
    })
}

/// Draws every link's gains. Stream `i` of `seed` feeds link `i` in the order
/// CBS-IRS, SU, PU, Eves.
pub fn realize(geom: &ArrayGeometry, params: &LinkParams, seed: u64) -> Result<ChannelRealization> {
    geom.validate()?;
    let link_seed = |i: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
    let h_ci = synth_cbs_irs_channel(geom, &params.cbs_irs, link_seed(0))?;
    let h_su = synth_irs_user_channel(geom, &params.su, link_seed(1))?;
    let h_pu = synth_irs_user_channel(geom, &params.pu, link_seed(2))?;
    let eve_nominal = params
        .eves
        .iter()
        .enumerate()
        .map(|(k, p)| synth_irs_user_channel(geom, p, link_seed(3 + k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelRealization {
        h_ci,
        h_su,
        h_pu,
        eve_nominal,
        params: params.clone(),
    })
}

/// Hermitian Toeplitz with `(i, j) = rho^(j-i)` for `i <= j`.
pub fn kronecker_correlation(rho: Complex64, m: usize) -> Result<HermitianMatrix> {
    if rho.norm() > 1.0 {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: format!("|rho| = {} exceeds 1", rho.norm()),
        });
    }
    let r = CMatrix::from_fn(m, m, |i, j| {
        if i <= j {
            rho.powu((j - i) as u32)
        } else {
            rho.powu((i - j) as u32).conj()
        }
    });
    Ok(HermitianMatrix::symmetrized(r))
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// `(m, n) = sinc(2 |u_m - u_n| / lambda)` over the UPA element positions.
pub fn sinc_correlation(geom: &ArrayGeometry) -> HermitianMatrix {
    let pos = geom.element_positions();
    let n = pos.len();
    let r = CMatrix::from_fn(n, n, |i, j| {
        let d = ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][2] - pos[j][2]).powi(2)).sqrt();
        Complex64::new(sinc(2.0 * d / geom.lambda), 0.0)
    });
    HermitianMatrix::symmetrized(r)
}

/// `H_CI <- R_IRS^(1/2) H_CI R_CBS^(1/2)` and `h <- R_IRS^(1/2) h` for every
/// IRS-user vector.
pub fn apply_spatial_correlation(
    realization: &ChannelRealization,
    r_cbs: &HermitianMatrix,
    r_irs: &HermitianMatrix,
) -> Result<ChannelRealization> {
    let (n, m) = realization.h_ci.shape();
    check_len("apply_spatial_correlation R_CBS", m, r_cbs.dim())?;
    check_len("apply_spatial_correlation R_IRS", n, r_irs.dim())?;
    let s_cbs = psd_sqrt(r_cbs)?.into_matrix();
    let s_irs = psd_sqrt(r_irs)?.into_matrix();
    Ok(ChannelRealization {
        h_ci: &s_irs * &realization.h_ci * &s_cbs,
        h_su: &s_irs * &realization.h_su,
        h_pu: &s_irs * &realization.h_pu,
        eve_nominal: realization.eve_nominal.iter().map(|h| &s_irs * h).collect(),
        params: realization.params.clone(),
    })
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::hermitian_eigen;
    use approx::assert_abs_diff_eq;

    fn geom(m: usize, n1: usize, n2: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(m, n1, n2, 28e9).unwrap()
    }

    fn single_path(loss: f64, angles: AnglePair, eta: Option<f64>) -> ChannelParams {
        ChannelParams {
            path_count: 1,
            avg_path_loss: loss,
            path_loss_exponent: 2.0,
            irs_angles: vec![angles],
            cbs_angles: eta.into_iter().collect(),
        }
    }

    fn five_paths(loss: f64, seed: u64, cbs: bool) -> ChannelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let irs_angles = (0..5).map(|_| random_irs_angle(&mut rng)).collect();
        let cbs_angles = if cbs {
            (0..5).map(|_| rng.random_range(-1.5..1.5)).collect()
        } else {
            Vec::new()
        };
        ChannelParams {
            path_count: 5,
            avg_path_loss: loss,
            path_loss_exponent: 2.0,
            irs_angles,
            cbs_angles,
        }
    }

    #[test]
    fn ula_broadside_is_flat() {
        let a = ula_steering(&geom(4, 1, 1), 0.0);
        for z in a.iter() {
            assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ula_endfire_two_elements() {
        let a = ula_steering(&geom(2, 1, 1), FRAC_PI_2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a[0] - Complex64::from_polar(s, -FRAC_PI_2)).norm() < 1e-12);
        assert!((a[1] - Complex64::from_polar(s, FRAC_PI_2)).norm() < 1e-12);
    }

    #[test]
    fn upa_vanishing_phase_direction() {
        let g = geom(1, 3, 4);
        let a = upa_steering(&g, AnglePair::new(FRAC_PI_2, FRAC_PI_2).unwrap()).unwrap();
        for z in a.iter() {
            assert!((z - Complex64::new(1.0 / 12f64.sqrt(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn upa_center_element_has_zero_phase() {
        let g = geom(1, 3, 5);
        let a = upa_steering(&g, AnglePair::new(0.7, 2.1).unwrap()).unwrap();
        let center = 1 * 5 + 2;
        assert!((a[center] - Complex64::new(1.0 / 15f64.sqrt(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn upa_is_kronecker_product() {
        let g = geom(1, 2, 2);
        let (theta, phi) = (0.4_f64, 1.1_f64);
        let k = 2.0 * PI / g.lambda;
        let a_h: Vec<Complex64> = [-0.5, 0.5]
            .iter()
            .map(|o| Complex64::from_polar(1.0, k * o * g.d1 * theta.sin() * phi.cos()))
            .collect();
        let a_v: Vec<Complex64> = [-0.5, 0.5]
            .iter()
            .map(|o| Complex64::from_polar(1.0, k * o * g.d2 * theta.cos()))
            .collect();
        let a = upa_steering(&g, AnglePair::new(theta, phi).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = a_h[i] * a_v[j] / 2.0;
                assert!((a[i * 2 + j] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn upa_rejects_out_of_domain() {
        let g = geom(1, 2, 2);
        let bad = AnglePair { theta: 2.0, phi: 0.1 };
        assert!(matches!(upa_steering(&g, bad), Err(Error::AngleOutOfDomain { .. })));
        let marginal = AnglePair::new(FRAC_PI_2 + 1e-9, -1e-9).unwrap();
        assert_eq!(marginal.theta, FRAC_PI_2);
        assert_eq!(marginal.phi, 0.0);
    }

    #[test]
    fn single_los_user_channel() {
        let g = geom(1, 2, 3);
        let ang = AnglePair::new(0.5, 1.0).unwrap();
        let h = irs_user_channel_with_gains(&g, &single_path(1.0, ang, None), &[Complex64::new(1.0, 0.0)])
            .unwrap();
        let expect = upa_steering(&g, ang).unwrap() * Complex64::new(6f64.sqrt(), 0.0);
        assert!((h - expect).norm() < 1e-12);
    }

    #[test]
    fn single_los_cbs_channel_is_rank_one() {
        let g = geom(4, 2, 2);
        let ang = AnglePair::new(0.5, 1.0).unwrap();
        let p = single_path(1.0, ang, Some(0.3));
        let h = cbs_irs_channel_with_gains(&g, &p, &[Complex64::new(1.0, 0.0)]).unwrap();
        assert_eq!(h.shape(), (4, 4));
        let expect = upa_steering(&g, ang).unwrap() * ula_steering(&g, 0.3).adjoint() * Complex64::new(4.0, 0.0);
        assert!((h - expect).norm() < 1e-12);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let g = geom(3, 2, 2);
        let p = five_paths(4.0, 1, true);
        assert_eq!(synth_irs_user_channel(&g, &p, 42).unwrap(), synth_irs_user_channel(&g, &p, 42).unwrap());
        assert_eq!(synth_cbs_irs_channel(&g, &p, 42).unwrap(), synth_cbs_irs_channel(&g, &p, 42).unwrap());
        assert_ne!(synth_irs_user_channel(&g, &p, 42).unwrap(), synth_irs_user_channel(&g, &p, 43).unwrap());
    }

    #[test]
    fn mean_user_channel_energy() {
        let g = geom(1, 2, 2);
        let p = five_paths(4.0, 2, false);
        let draws = 10_000;
        let mean: f64 = (0..draws)
            .map(|s| synth_irs_user_channel(&g, &p, s).unwrap().norm_squared())
            .sum::<f64>()
            / draws as f64;
        let expect = g.n() as f64 / 4.0;
        assert!((mean - expect).abs() <= 0.05 * expect, "mean {mean}");
    }

    #[test]
    fn mean_cbs_channel_energy() {
        let g = geom(4, 2, 2);
        let p = five_paths(9.0, 3, true);
        let draws = 10_000;
        let mean: f64 = (0..draws)
            .map(|s| synth_cbs_irs_channel(&g, &p, s).unwrap().norm_squared())
            .sum::<f64>()
            / draws as f64;
        let expect = 16.0 / 9.0;
        assert!((mean - expect).abs() <= 0.05 * expect, "mean {mean}");
    }

    #[test]
    fn effective_channel_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rc = || Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let h_ci = CMatrix::from_fn(3, 2, |_, _| rc());
        let ones = CVector::from_element(3, Complex64::new(1.0, 0.0));
        assert_eq!(effective_channel(&ones, &h_ci).unwrap(), h_ci);

        let e1 = CVector::from_fn(3, |i, _| Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
        let out = effective_channel(&e1, &h_ci).unwrap();
        assert_eq!(out.row(0), h_ci.row(0));
        assert!(out.rows(1, 2).iter().all(|z| z.norm() == 0.0));

        let h = CVector::from_fn(3, |_, _| rc());
        let q = CVector::from_fn(3, |_, _| rc());
        let w = CVector::from_fn(2, |_, _| rc());
        let got = q.dotc(&(effective_channel(&h, &h_ci).unwrap() * &w));
        let mut expect = Complex64::new(0.0, 0.0);
        for n in 0..3 {
            let mut row = Complex64::new(0.0, 0.0);
            for m in 0..2 {
                row += h_ci[(n, m)] * w[m];
            }
            expect += q[n].conj() * h[n].conj() * row;
        }
        assert!((got - expect).norm() < 1e-12);

        assert!(effective_channel(&CVector::zeros(2), &h_ci).is_err());
    }

    #[test]
    fn boresight_geometry() {
        let (a, d) = irs_angles_to([0.0, 0.0, 0.0], [0.0, 10.0, 0.0]).unwrap();
        assert_abs_diff_eq!(d, 10.0);
        assert_abs_diff_eq!(a.phi, FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(a.theta, FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(path_loss(d, 2.0), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(path_loss(2.0 * d, 2.0) / path_loss(d, 2.0), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_su_geometry() {
        let irs = [0.0, 0.0, 30.0];
        let (a, d) = irs_angles_to(irs, [0.0, 18.5, 18.5]).unwrap();
        let dist = (18.5f64 * 18.5 + 11.5 * 11.5).sqrt();
        assert_abs_diff_eq!(d, dist, epsilon = 1e-12);
        assert_abs_diff_eq!(a.theta, (11.5 / dist).acos(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.phi, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn rejects_behind_and_above() {
        let irs = [0.0, 0.0, 30.0];
        assert!(matches!(irs_angles_to(irs, [1.0, -1.0, 10.0]), Err(Error::BehindSurface { .. })));
        assert!(matches!(irs_angles_to(irs, [1.0, 1.0, 40.0]), Err(Error::AboveSurface { .. })));
    }

    #[test]
    fn geometry_params_shapes() {
        let placement = Placement {
            cbs: [-80.0, 29.0, 15.0],
            irs: [0.0, 0.0, 30.0],
            su: [0.0, 18.5, 18.5],
            pu: [80.0, 29.0, 15.0],
            eves: vec![[-44.0, 25.5, 18.5]],
        };
        let p = geometry_to_params(&placement, 2.0, 5, 9).unwrap();
        assert_eq!(p.cbs_irs.cbs_angles.len(), 5);
        assert_eq!(p.eves.len(), 1);
        let dist = (80f64.powi(2) + 29f64.powi(2) + 15f64.powi(2)).sqrt();
        assert_abs_diff_eq!(p.cbs_irs.cbs_angles[0], (80.0 / dist).asin(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.cbs_irs.avg_path_loss, dist * dist, epsilon = 1e-9);
        for a in p.su.irs_angles.iter().chain(&p.eves[0].irs_angles) {
            assert!(a.theta >= 0.0 && a.theta <= FRAC_PI_2 && a.phi >= 0.0 && a.phi <= PI);
        }
        assert_eq!(p, geometry_to_params(&placement, 2.0, 5, 9).unwrap());
    }

    #[test]
    fn kronecker_cases() {
        let r = kronecker_correlation(Complex64::new(0.0, 0.0), 3).unwrap();
        assert_eq!(r, HermitianMatrix::identity(3));
        let r = kronecker_correlation(Complex64::new(0.5, 0.0), 3).unwrap();
        let row: Vec<f64> = (0..3).map(|j| r.as_matrix()[(0, j)].re).collect();
        assert_eq!(row, vec![1.0, 0.5, 0.25]);
        for rho in [Complex64::new(0.9, 0.0), Complex64::from_polar(0.99, 1.3)] {
            let r = kronecker_correlation(rho, 8).unwrap();
            assert!(hermitian_eigen(&r).min() >= -1e-10);
        }
        assert!(kronecker_correlation(Complex64::new(1.1, 0.0), 3).is_err());
    }

    #[test]
    fn sinc_cases() {
        let g = geom(1, 3, 2);
        let r = sinc_correlation(&g);
        let m = r.as_matrix();
        for i in 0..6 {
            assert_abs_diff_eq!(m[(i, i)].re, 1.0);
            for j in 0..6 {
                assert_eq!(m[(i, j)], m[(j, i)]);
                assert_eq!(m[(i, j)].im, 0.0);
            }
        }
        // (1,1)-(1,2) are vertical neighbours, (1,1)-(2,1) horizontal ones.
        assert_abs_diff_eq!(m[(0, 1)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 2)].re, 0.0, epsilon = 1e-15);
    }

    fn sample_realization(g: &ArrayGeometry, seed: u64) -> ChannelRealization {
        let placement = Placement {
            cbs: [-80.0, 29.0, 15.0],
            irs: [0.0, 0.0, 30.0],
            su: [0.0, 18.5, 18.5],
            pu: [80.0, 29.0, 15.0],
            eves: vec![[-44.0, 25.5, 18.5]],
        };
        let p = geometry_to_params(&placement, 2.0, 5, seed).unwrap();
        realize(g, &p, seed).unwrap()
    }

    #[test]
    fn identity_correlation_is_noop() {
        let g = geom(4, 2, 2);
        let r = sample_realization(&g, 1);
        let c = apply_spatial_correlation(&r, &HermitianMatrix::identity(4), &HermitianMatrix::identity(4))
            .unwrap();
        assert!((c.h_ci - &r.h_ci).norm() < 1e-12 * r.h_ci.norm());
        assert!((c.h_su - &r.h_su).norm() < 1e-12 * r.h_su.norm());
        assert!(apply_spatial_correlation(&r, &HermitianMatrix::identity(3), &HermitianMatrix::identity(4)).is_err());
    }

    #[test]
    fn correlation_sqrt_composes() {
        let g = geom(4, 2, 2);
        let r = sample_realization(&g, 2);
        let rc = kronecker_correlation(Complex64::new(0.7, 0.0), 4).unwrap();
        let id = HermitianMatrix::identity(4);
        let once = apply_spatial_correlation(&r, &rc, &id).unwrap();
        let twice = apply_spatial_correlation(&once, &rc, &id).unwrap();
        let direct = &r.h_ci * rc.as_matrix();
        assert!((twice.h_ci - direct).norm() < 1e-10 * r.h_ci.norm());
    }

    #[test]
    fn cbs_correlation_concentrates_spectrum() {
        let g = geom(8, 2, 2);
        let rc = kronecker_correlation(Complex64::new(0.9, 0.0), 8).unwrap();
        let id = HermitianMatrix::identity(4);
        let ratio = |h: &CMatrix| {
            let s = h.clone().singular_values();
            s.max() / s.iter().sum::<f64>()
        };
        let (mut base, mut corr) = (0.0, 0.0);
        for seed in 0..100 {
            let r = sample_realization(&g, seed);
            base += ratio(&r.h_ci);
            corr += ratio(&apply_spatial_correlation(&r, &rc, &id).unwrap().h_ci);
        }
        assert!(corr > base, "correlated {corr} vs {base}");
    }
}
