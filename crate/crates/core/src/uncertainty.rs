//! Angle-box uncertainty sets for eavesdropper channels and their
//! sampled convex hulls.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{upa_steering_unchecked, AnglePair, ArrayGeometry};
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, HermitianMatrix};

/// Lattice shape of the hull samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub theta_points: usize,
    pub phi_points: usize,
}

impl Default for GridLayout {
    fn default() -> Self {
        Self {
            theta_points: 5,
            phi_points: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRegion {
    pub center: AnglePair,
    pub delta: f64,
    pub lower: AnglePair,
    pub upper: AnglePair,
    /// Lower bound on `|alpha| / sqrt(rho)` for the LoS path.
    pub xi: f64,
    pub sample_grid: Vec<AnglePair>,
    pub eval_grid_step: f64,
}

/// `n` points from `lo` to `hi` inclusive; a single point when `lo == hi`.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![if hi <= lo { lo } else { 0.5 * (lo + hi) }];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

fn lattice(lower: AnglePair, upper: AnglePair, nt: usize, np: usize) -> Vec<AnglePair> {
    let thetas = linspace(lower.theta, upper.theta, nt);
    let phis = linspace(lower.phi, upper.phi, np);
    thetas
        .iter()
        .flat_map(|&theta| phis.iter().map(move |&phi| AnglePair { theta, phi }))
        .collect()
}

/// Box `center -/+ delta/2` clamped to the angle domain, sampled on `layout`.
pub fn build_region(
    center: AnglePair,
    delta: f64,
    layout: GridLayout,
    step: f64,
    xi: f64,
) -> Result<UncertaintyRegion> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("must be nonnegative, got {delta}"),
        });
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter {
            name: "xi",
            reason: format!("must be positive, got {xi}"),
        });
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParameter {
            name: "eval_grid_step",
            reason: format!("must be positive, got {step}"),
        });
    }
    if layout.theta_points == 0 || layout.phi_points == 0 {
        return Err(Error::EmptyGrid);
    }
    let center = AnglePair::new(center.theta, center.phi)?;
    let h = 0.5 * delta;
    let lower = AnglePair::new(
        (center.theta - h).max(0.0),
        (center.phi - h).max(0.0),
    )?;
    let upper = AnglePair::new(
        (center.theta + h).min(std::f64::consts::FRAC_PI_2),
        (center.phi + h).min(std::f64::consts::PI),
    )?;
    let sample_grid = if delta == 0.0 {
        vec![center]
    } else {
        lattice(lower, upper, layout.theta_points, layout.phi_points)
    };
    Ok(UncertaintyRegion {
        center,
        delta,
        lower,
        upper,
        xi,
        sample_grid,
        eval_grid_step: step,
    })
}

/// Uniform lattice over the region bounds at `step` radians, endpoints
/// included. Each axis gets `round(width / step) + 1` points.
pub fn worst_case_grid(region: &UncertaintyRegion, step: f64) -> Vec<AnglePair> {
    if region.delta == 0.0 {
        return vec![region.center];
    }
    let count = |lo: f64, hi: f64| ((hi - lo) / step).round() as usize + 1;
    lattice(
        region.lower,
        region.upper,
        count(region.lower.theta, region.upper.theta),
        count(region.lower.phi, region.upper.phi),
    )
}

/// LoS-only eavesdropper channel `sqrt(N/L) xi a(theta, phi)`, optionally
/// premultiplied by an IRS correlation square root.
#[derive(Debug, Clone)]
pub struct EveChannelModel {
    pub geom: ArrayGeometry,
    pub path_count: usize,
    pub irs_sqrt: Option<CMatrix>,
}

impl EveChannelModel {
    pub fn new(geom: ArrayGeometry, path_count: usize) -> Self {
        Self {
            geom,
            path_count,
            irs_sqrt: None,
        }
    }

    pub fn channel(&self, angles: AnglePair, xi: f64) -> CVector {
        let n = self.geom.n() as f64;
        let scale = (n / self.path_count as f64).sqrt() * xi;
        let h = upa_steering_unchecked(&self.geom, angles) * Complex64::new(scale, 0.0);
        match &self.irs_sqrt {
            Some(s) => s * h,
            None => h,
        }
    }

    pub fn channels(&self, region: &UncertaintyRegion, grid: &[AnglePair]) -> Vec<CVector> {
        grid.iter().map(|&a| self.channel(a, region.xi)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullKind {
    /// `F = diag(h) q q^H diag(h)^H`, generator `h .* q`.
    Transmit,
    /// `G = diag(h)^H H w w^H H^H diag(h)`, generator `conj(h) .* (H w)`.
    Reflect,
}

/// Rank-one hull vertices of one eavesdropper, stored by their generators.
#[derive(Debug, Clone)]
pub struct HullSampleSet {
    pub kind: HullKind,
    pub generators: Vec<CVector>,
    pub weights: Vec<f64>,
}

impl HullSampleSet {
    /// Uniform weights over `generators`.
    pub fn new(kind: HullKind, generators: Vec<CVector>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let m = generators.len();
        Ok(Self {
            kind,
            generators,
            weights: vec![1.0 / m as f64; m],
        })
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn matrix(&self, i: usize) -> HermitianMatrix {
        HermitianMatrix::outer(&self.generators[i])
    }

    /// `sum_i weight_i v_i v_i^H`.
    pub fn weighted_sum(&self) -> HermitianMatrix {
        let dim = self.generators[0].len();
        let mut acc = CMatrix::zeros(dim, dim);
        for (g, &wt) in self.generators.iter().zip(&self.weights) {
            if wt > 0.0 {
                acc += (g * g.adjoint()) * Complex64::new(wt, 0.0);
            }
        }
        HermitianMatrix::symmetrized(acc)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }
}

pub fn hull_f_samples(
    region: &UncertaintyRegion,
    q: &CVector,
    model: &EveChannelModel,
) -> Result<HullSampleSet> {
    let gens = region
        .sample_grid
        .iter()
        .map(|&a| model.channel(a, region.xi).component_mul(q))
        .collect();
    HullSampleSet::new(HullKind::Transmit, gens)
}

pub fn hull_g_samples(
    region: &UncertaintyRegion,
    w: &CVector,
    h_ci: &CMatrix,
    model: &EveChannelModel,
) -> Result<HullSampleSet> {
    if w.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::InvalidParameter {
            name: "w",
            reason: "transmit vector is zero".into(),
        });
    }
    let hw = h_ci * w;
    let gens = region
        .sample_grid
        .iter()
        .map(|&a| model.channel(a, region.xi).conjugate().component_mul(&hw))
        .collect();
    HullSampleSet::new(HullKind::Reflect, gens)
}

fn normalize_or_uniform(a: Vec<f64>) -> Vec<f64> {
    let total: f64 = a.iter().sum();
    if total > 0.0 && total.is_finite() {
        a.into_iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / a.len() as f64; a.len()]
    }
}

/// `mu_i` proportional to `x^H H^H F_i H x = |f_i^H H x|^2`.
pub fn update_mu_weights(x: &CVector, h_ci: &CMatrix, samples: &HullSampleSet) -> Vec<f64> {
    let hx = h_ci * x;
    normalize_or_uniform(
        samples
            .generators
            .iter()
            .map(|f| f.dotc(&hx).norm_sqr())
            .collect(),
    )
}

/// `chi_i` proportional to `tr(G_i R) = g_i^H R g_i`.
pub fn update_chi_weights(r: &HermitianMatrix, samples: &HullSampleSet) -> Vec<f64> {
    normalize_or_uniform(
        samples
            .generators
            .iter()
            .map(|g| r.quadratic_form(g).max(0.0))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{hermitian_eigen, unit_phasors};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(4, 2, 2, 28e9).unwrap()
    }

    fn rvec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn region(delta_deg: f64) -> UncertaintyRegion {
        build_region(
            AnglePair::from_degrees(30.0, 60.0).unwrap(),
            delta_deg.to_radians(),
            GridLayout::default(),
            0.1_f64.to_radians(),
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn zero_delta_collapses() {
        let r = region(0.0);
        assert_eq!(r.lower, r.center);
        assert_eq!(r.upper, r.center);
        assert_eq!(r.sample_grid, vec![r.center]);
        assert_eq!(worst_case_grid(&r, 0.1_f64.to_radians()), vec![r.center]);
    }

    #[test]
    fn six_degree_bounds() {
        let r = region(6.0);
        let (lt, lp) = r.lower.to_degrees();
        let (ut, up) = r.upper.to_degrees();
        for (got, want) in [(lt, 27.0), (lp, 57.0), (ut, 33.0), (up, 63.0)] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert_eq!(r.sample_grid.len(), 25);
    }

    #[test]
    fn bounds_clamp_at_domain_edge() {
        let r = build_region(
            AnglePair::from_degrees(1.0, 1.0).unwrap(),
            6f64.to_radians(),
            GridLayout::default(),
            0.1f64.to_radians(),
            1.0,
        )
        .unwrap();
        assert_eq!(r.lower.theta, 0.0);
        assert_eq!(r.lower.phi, 0.0);
        assert!((r.upper.theta.to_degrees() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn negative_delta_rejected() {
        assert!(build_region(
            AnglePair::from_degrees(30.0, 60.0).unwrap(),
            -0.1,
            GridLayout::default(),
            0.01,
            1.0
        )
        .is_err());
    }

    #[test]
    fn one_degree_lattice_is_11_by_11() {
        let r = region(1.0);
        let grid = worst_case_grid(&r, 0.1f64.to_radians());
        assert_eq!(grid.len(), 121);
        for a in &grid {
            assert!(a.theta >= r.lower.theta && a.theta <= r.upper.theta);
            assert!(a.phi >= r.lower.phi && a.phi <= r.upper.phi);
        }
        assert!(grid.contains(&r.lower) && grid.contains(&r.upper));
    }

    #[test]
    fn f_samples_rank_one() {
        let g = geom();
        let model = EveChannelModel::new(g, 5);
        let q = unit_phasors(&[0.1, 0.9, -2.0, 3.0]);
        let hull = hull_f_samples(&region(6.0), &q, &model).unwrap();
        assert_eq!(hull.len(), 25);
        for i in 0..hull.len() {
            let s = hermitian_eigen(&hull.matrix(i));
            assert!(s.min() >= -1e-12 * s.max());
            assert!(s.values[s.values.len() - 2] <= 1e-10 * s.max());
        }
        let single = hull_f_samples(&region(0.0), &q, &model).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn two_sample_hull_is_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = geom();
        let model = EveChannelModel::new(g, 5);
        let q = unit_phasors(&[0.4, -0.3, 1.7, 2.2]);
        let mut r = region(6.0);
        r.sample_grid.truncate(2);
        let h_ci = CMatrix::from_fn(4, 4, |_, _| Complex64::new(rng.sample(StandardNormal), 0.3));
        let mu = 0.3;
        let hull = hull_f_samples(&r, &q, &model).unwrap().with_weights(vec![mu, 1.0 - mu]);
        let w = rvec(&mut rng, 4);
        let hw = &h_ci * &w;
        let vertex = |i: usize| hull.matrix(i).quadratic_form(&hw);
        let mixed = hull.weighted_sum().quadratic_form(&hw);
        let expect = mu * vertex(0) + (1.0 - mu) * vertex(1);
        assert!((mixed - expect).abs() <= 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn g_samples_trace_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = geom();
        let model = EveChannelModel::new(g, 5);
        let h_ci = CMatrix::from_fn(4, 4, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let w = rvec(&mut rng, 4);
        let r = region(1.0);
        let hull = hull_g_samples(&r, &w, &h_ci, &model).unwrap();
        for (i, a) in r.sample_grid.iter().enumerate() {
            let h = model.channel(*a, r.xi);
            let mut d = CMatrix::zeros(4, 4);
            for n in 0..4 {
                d[(n, n)] = h[n].conj();
            }
            let expect = (d * &h_ci * &w).norm_squared();
            assert!((hull.matrix(i).trace() - expect).abs() <= 1e-12 * expect);
            assert!(hermitian_eigen(&hull.matrix(i)).min() >= -1e-12 * expect);
        }
        assert!(hull_g_samples(&r, &CVector::zeros(4), &h_ci, &model).is_err());
        assert_eq!(hull_g_samples(&region(0.0), &w, &h_ci, &model).unwrap().len(), 1);
    }

    #[test]
    fn weight_fallbacks() {
        let gens = vec![CVector::zeros(3), CVector::zeros(3)];
        let hull = HullSampleSet::new(HullKind::Reflect, gens).unwrap();
        assert_eq!(update_chi_weights(&HermitianMatrix::zeros(3), &hull), vec![0.5, 0.5]);

        let mut gens = vec![CVector::zeros(3); 3];
        gens[1][0] = Complex64::new(1.0, 0.0);
        let hull = HullSampleSet::new(HullKind::Reflect, gens).unwrap();
        assert_eq!(update_chi_weights(&HermitianMatrix::identity(3), &hull), vec![0.0, 1.0, 0.0]);

        let gens = vec![CVector::from_element(2, Complex64::new(1.0, 0.0)); 4];
        let hull = HullSampleSet::new(HullKind::Transmit, gens).unwrap();
        let x = CVector::from_element(2, Complex64::new(0.5f64.sqrt(), 0.0));
        assert_eq!(update_mu_weights(&x, &CMatrix::identity(2, 2), &hull), vec![0.25; 4]);
        assert!(HullSampleSet::new(HullKind::Transmit, Vec::new()).is_err());
    }

    #[test]
    fn weight_updates_beat_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let gens: Vec<CVector> = (0..7).map(|_| rvec(&mut rng, 4)).collect();
            let hull = HullSampleSet::new(HullKind::Transmit, gens.clone()).unwrap();
            let h_ci = CMatrix::from_fn(4, 3, |_, _| Complex64::new(rng.sample(StandardNormal), 0.0));
            let x = rvec(&mut rng, 3).normalize();
            let a: Vec<f64> = gens.iter().map(|f| f.dotc(&(&h_ci * &x)).norm_sqr()).collect();
            let mu = update_mu_weights(&x, &h_ci, &hull);
            assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(mu.iter().all(|&m| m >= 0.0));
            let weighted: f64 = mu.iter().zip(&a).map(|(m, v)| m * v).sum();
            assert!(weighted >= a.iter().sum::<f64>() / 7.0 * (1.0 - 1e-12));

            let g = rvec(&mut rng, 4);
            let r = HermitianMatrix::symmetrized(&g * g.adjoint() + CMatrix::identity(4, 4));
            let hull = HullSampleSet::new(HullKind::Reflect, gens.clone()).unwrap();
            let b: Vec<f64> = gens.iter().map(|v| r.quadratic_form(v)).collect();
            let chi = update_chi_weights(&r, &hull);
            assert!((chi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let weighted: f64 = chi.iter().zip(&b).map(|(c, v)| c * v).sum();
            assert!(weighted >= b.iter().sum::<f64>() / 7.0 * (1.0 - 1e-12));
        }
    }
}
