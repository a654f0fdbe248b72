//! Dense complex Hermitian kernels.
//!
//! All eigen-decompositions go through the real-symmetric embedding
//! `[Re H, -Im H; Im H, Re H]`, which carries every eigenvalue of `H` twice.
//! [`hermitian_eigen`] folds the doubled spectrum back into `n` complex
//! eigenpairs.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const SYMMETRY_TOL: f64 = 1e-9;

/// A square complex matrix with `H[i][j] == conj(H[j][i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Validates conjugate symmetry (relative tolerance 1e-9) and stores the
    /// exactly symmetrized matrix.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                context: "HermitianMatrix::new",
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let asym = max_asymmetry(&m);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(Self::symmetrized(m))
    }

    /// Averages `m` with its adjoint. Use for products that are Hermitian in
    /// exact arithmetic but carry rounding noise.
    pub fn symmetrized(m: CMatrix) -> Self {
        let adj = m.adjoint();
        let mut h = (m + adj) * Complex64::new(0.5, 0.0);
        for i in 0..h.nrows() {
            h[(i, i)].im = 0.0;
        }
        Self(h)
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        Self(m)
    }

    /// `v v^H`.
    pub fn outer(v: &CVector) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    /// Real part of `tr(self * other)`; exact inner product for Hermitian pairs.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.transpose().iter())
            .map(|(a, b)| (a * b).re)
            .sum()
    }

    /// `x^H H x`.
    pub fn quadratic_form(&self, x: &CVector) -> f64 {
        x.dotc(&(&self.0 * x)).re
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * Complex64::new(c, 0.0))
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// The real-symmetric embedding `[Re H, -Im H; Im H, Re H]`.
    pub fn real_embedding(&self) -> DMatrix<f64> {
        real_embedding(&self.0)
    }
}

pub(crate) fn max_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn real_embedding(m: &CMatrix) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`real_embedding`] for structured matrices; off-structure parts
/// are averaged away.
pub fn complex_from_embedding(x: &DMatrix<f64>) -> CMatrix {
    let n = x.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        Complex64::new(re, im)
    })
}

/// Largest eigenvalue and its normalized eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: CVector,
}

/// Full spectrum, eigenvalues ascending, eigenvectors as matching columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

pub fn hermitian_eigen(h: &HermitianMatrix) -> Spectrum {
    let n = h.dim();
    if n == 0 {
        return Spectrum {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(h.real_embedding());
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let as_complex = |k: usize| -> CVector {
        let col = eig.eigenvectors.column(k);
        CVector::from_fn(n, |i, _| Complex64::new(col[i], col[i + n]))
    };

    // Each complex eigenvector v shows up as [x; y] and [-y; x] (i.e. i*v);
    // Gram-Schmidt against the accepted set discards the duplicate.
    let mut accepted: Vec<CVector> = Vec::with_capacity(n);
    let mut used = vec![false; 2 * n];
    for threshold in [0.5, 1e-6] {
        for &k in &order {
            if accepted.len() == n {
                break;
            }
            if used[k] {
                continue;
            }
            let mut v = as_complex(k);
            for u in &accepted {
                let c = u.dotc(&v);
                v -= u * c;
            }
            let norm = v.norm();
            if norm * norm > threshold {
                used[k] = true;
                accepted.push(v / Complex64::new(norm, 0.0));
            }
        }
    }

    let mut pairs: Vec<(f64, CVector)> = accepted
        .into_iter()
        .map(|v| (h.quadratic_form(&v), v))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| pairs[j].1[i]);
    Spectrum { values, vectors }
}

/// Largest eigenvalue of a Hermitian matrix with a unit eigenvector.
pub fn hermitian_eig_max(h: &HermitianMatrix) -> EigenPair {
    let spec = hermitian_eigen(h);
    let n = h.dim();
    EigenPair {
        value: spec.max(),
        vector: spec.vectors.column(n - 1).into_owned(),
    }
}

/// Principal square root of a PSD matrix.
pub fn psd_sqrt(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    let spec = hermitian_eigen(h);
    if h.dim() == 0 {
        return Ok(h.clone());
    }
    let floor = -1e-10 * spec.max().abs().max(1.0);
    if spec.min() < floor {
        return Err(Error::Indefinite {
            eigenvalue: spec.min(),
        });
    }
    let n = h.dim();
    let mut s = CMatrix::zeros(n, n);
    for (k, &lam) in spec.values.iter().enumerate() {
        let v = spec.vectors.column(k);
        let root = Complex64::new(lam.max(0.0).sqrt(), 0.0);
        s += (v * v.adjoint()) * root;
    }
    Ok(HermitianMatrix::symmetrized(s))
}

/// Maximizes `x^H B x / x^H A x` over unit `x`.
///
/// Returns `(lambda_max(A^-1 B), x)`. A ridge of `1e-10 tr(A)/n` is added to
/// `A` when its smallest eigenvalue is below `1e-12`.
pub fn generalized_rayleigh_max(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
) -> Result<(f64, CVector)> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "generalized_rayleigh_max",
            expected: n,
            actual: b.dim(),
        });
    }
    let min_eig = hermitian_eigen(a).min();
    let mut a_mat = a.as_matrix().clone();
    if min_eig < 1e-12 {
        let ridge = 1e-10 * a.trace() / n as f64;
        if ridge <= 0.0 || min_eig + ridge <= 0.0 {
            return Err(Error::Singular {
                min_eigenvalue: min_eig + ridge.max(0.0),
            });
        }
        for i in 0..n {
            a_mat[(i, i)] += Complex64::new(ridge, 0.0);
        }
    }
    let chol = Cholesky::new(a_mat).ok_or(Error::Singular {
        min_eigenvalue: min_eig,
    })?;
    let l = chol.l();
    // C = L^-1 B L^-H
    let y = l
        .solve_lower_triangular(b.as_matrix())
        .expect("Cholesky factor is nonsingular");
    let c = l
        .solve_lower_triangular(&y.adjoint())
        .expect("Cholesky factor is nonsingular")
        .adjoint();
    let top = hermitian_eig_max(&HermitianMatrix::symmetrized(c));
    let x = l
        .adjoint()
        .solve_upper_triangular(&top.vector)
        .expect("Cholesky factor is nonsingular");
    let norm = x.norm();
    Ok((top.value, x / Complex64::new(norm, 0.0)))
}

/// Unit-modulus vector recovered from a (nearly) rank-one PSD matrix.
#[derive(Debug, Clone)]
pub struct Rank1Extraction {
    pub phases: CVector,
    /// `||q q^H - Theta||_F`
    pub residual: f64,
}

/// Phase projection of the principal eigenvector; zero entries get phase 0.
pub fn rank1_extract(theta: &HermitianMatrix) -> Rank1Extraction {
    let principal = hermitian_eig_max(theta);
    let phases = principal.vector.map(|z| {
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    let residual = (&phases * phases.adjoint() - theta.as_matrix()).norm();
    Rank1Extraction { phases, residual }
}

/// Entries `exp(j * angle)`.
pub fn unit_phasors(angles: &[f64]) -> CVector {
    CVector::from_iterator(
        angles.len(),
        angles.iter().map(|&a| Complex64::from_polar(1.0, a)),
    )
}

/// Householder reflector `H` (Hermitian and unitary) with `H v = alpha ||v|| e_1`
/// for some `|alpha| = 1`. The identity for `v = 0`.
pub fn householder_to_e1(v: &CVector) -> CMatrix {
    let n = v.len();
    let norm = v.norm();
    if norm == 0.0 {
        return CMatrix::identity(n, n);
    }
    let head = v[0];
    let phase = if head.norm() > 0.0 { head / head.norm() } else { Complex64::new(1.0, 0.0) };
    // alpha = -phase keeps u = v - alpha ||v|| e_1 away from cancellation.
    let mut u = v.clone();
    u[0] += phase * norm;
    let uu = u.norm_squared();
    CMatrix::identity(n, n) - (&u * u.adjoint()) * Complex64::new(2.0 / uu, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(r, cols, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
        HermitianMatrix::symmetrized(random_matrix(rng, n, n))
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> HermitianMatrix {
        let g = random_matrix(rng, n, rank);
        HermitianMatrix::symmetrized(&g * g.adjoint())
    }

    fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        let v = random_matrix(rng, n, 1).column(0).into_owned();
        let norm = v.norm();
        v / c(norm, 0.0)
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eig_max_identity() {
        let p = hermitian_eig_max(&HermitianMatrix::identity(3));
        assert!((p.value - 1.0).abs() < 1e-12);
        assert!((p.vector.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eig_max_diagonal() {
        let p = hermitian_eig_max(&HermitianMatrix::from_real_diagonal(&[1.0, 5.0, 2.0]));
        assert!((p.value - 5.0).abs() < 1e-12);
        assert!((p.vector[1].norm() - 1.0).abs() < 1e-10);
        assert!(p.vector[0].norm() < 1e-10 && p.vector[2].norm() < 1e-10);
    }

    #[test]
    fn eig_max_beats_rayleigh_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_hermitian(&mut rng, 6);
        let p = hermitian_eig_max(&h);
        let residual = (h.as_matrix() * &p.vector - &p.vector * c(p.value, 0.0)).norm();
        assert!(residual <= 1e-8 * p.value.abs().max(1.0));
        for _ in 0..10_000 {
            let v = random_unit(&mut rng, 6);
            assert!(h.quadratic_form(&v) <= p.value + 1e-12);
        }
    }

    #[test]
    fn trace_equals_eigen_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..8 {
            let h = random_hermitian(&mut rng, n);
            let s = hermitian_eigen(&h);
            let sum: f64 = s.values.iter().sum();
            assert!((sum - h.trace()).abs() <= 1e-8 * h.trace().abs().max(1.0));
        }
    }

    #[test]
    fn eigen_handles_repeated_eigenvalues() {
        let h = HermitianMatrix::from_real_diagonal(&[2.0, 2.0, 2.0, -1.0]);
        let s = hermitian_eigen(&h);
        assert_eq!(s.values.len(), 4);
        let v = &s.vectors;
        let gram = v.adjoint() * v;
        assert!((gram - CMatrix::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let s = psd_sqrt(&HermitianMatrix::identity(3)).unwrap();
        assert!((s.as_matrix() - CMatrix::identity(3, 3)).norm() < 1e-12);
        let s = psd_sqrt(&HermitianMatrix::from_real_diagonal(&[4.0, 9.0])).unwrap();
        assert!((s.as_matrix()[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((s.as_matrix()[(1, 1)].re - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_reconstructs_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_psd(&mut rng, 5, 5);
        let s = psd_sqrt(&h).unwrap();
        let err = (s.as_matrix() * s.as_matrix() - h.as_matrix()).norm();
        assert!(err <= 1e-8, "err {err}");
        assert!(hermitian_eigen(&s).min() >= -1e-10);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let h = HermitianMatrix::from_real_diagonal(&[1.0, -0.5]);
        match psd_sqrt(&h) {
            Err(Error::Indefinite { eigenvalue }) => assert!((eigenvalue + 0.5).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rayleigh_identity_a() {
        let (g, x) = generalized_rayleigh_max(
            &HermitianMatrix::identity(3),
            &HermitianMatrix::from_real_diagonal(&[1.0, 2.0, 3.0]),
        )
        .unwrap();
        assert!((g - 3.0).abs() < 1e-10);
        assert!((x[2].norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rayleigh_equal_pair_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_psd(&mut rng, 4, 6);
        let (g, _) = generalized_rayleigh_max(&a, &a).unwrap();
        assert!((g - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rayleigh_beats_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_psd(&mut rng, 4, 6);
        let b = random_psd(&mut rng, 4, 2);
        let (g, x) = generalized_rayleigh_max(&a, &b).unwrap();
        let q = b.quadratic_form(&x) / a.quadratic_form(&x);
        assert!((q - g).abs() <= 1e-8 * g.abs());
        for _ in 0..10_000 {
            let v = random_unit(&mut rng, 4);
            assert!(b.quadratic_form(&v) / a.quadratic_form(&v) <= g * (1.0 + 1e-10));
        }
    }

    #[test]
    fn rayleigh_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_psd(&mut rng, 5, 7);
        let b = random_psd(&mut rng, 5, 3);
        let (g1, x1) = generalized_rayleigh_max(&a, &b).unwrap();
        let (g2, x2) = generalized_rayleigh_max(&a.scale(7.5), &b.scale(7.5)).unwrap();
        assert!((g1 - g2).abs() <= 1e-9 * g1);
        assert!((x1.dotc(&x2).norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rayleigh_ridge_on_singular_a() {
        let a = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]);
        let b = HermitianMatrix::identity(2);
        let (g, x) = generalized_rayleigh_max(&a, &b).unwrap();
        assert!(g > 1e8);
        assert!(x[1].norm() > 0.999);
        assert!(generalized_rayleigh_max(&HermitianMatrix::zeros(2), &b).is_err());
    }

    #[test]
    fn rank1_exact_recovery() {
        let q = unit_phasors(&[0.3, -1.2, 2.5, 0.0]);
        let theta = HermitianMatrix::outer(&q);
        let out = rank1_extract(&theta);
        let align = out.phases.dotc(&q).norm() / 4.0;
        assert!((align - 1.0).abs() < 1e-10);
        assert!(out.residual < 1e-8);
    }

    #[test]
    fn rank1_identity_flags_residual() {
        let out = rank1_extract(&HermitianMatrix::identity(4));
        assert!(out.phases.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        assert!(out.residual > 1.0);
    }

    #[test]
    fn rank1_perturbed_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let angles: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q = unit_phasors(&angles);
        let mut e = random_hermitian(&mut rng, 6).into_matrix();
        for i in 0..6 {
            e[(i, i)] = c(0.0, 0.0);
        }
        let theta = HermitianMatrix::symmetrized(&q * q.adjoint() + e * c(1e-6, 0.0));
        let out = rank1_extract(&theta);
        let global = out.phases.dotc(&q);
        let global = global / global.norm();
        for n in 0..6 {
            let err = (out.phases[n] * global / q[n]).arg().abs();
            assert!(err < 1e-2);
        }
    }

    #[test]
    fn householder_maps_onto_first_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 1..5 {
            let v = random_matrix(&mut rng, n, 1).column(0).into_owned();
            let h = householder_to_e1(&v);
            assert!((&h * h.adjoint() - CMatrix::identity(n, n)).norm() < 1e-12);
            assert!((h.adjoint() - &h).norm() < 1e-12);
            let hv = &h * &v;
            assert!((hv[0].norm() - v.norm()).abs() < 1e-12 * v.norm());
            assert!(hv.rows(1, n - 1).norm() < 1e-12 * v.norm());
        }
        assert_eq!(householder_to_e1(&CVector::zeros(3)), CMatrix::identity(3, 3));
    }
}
