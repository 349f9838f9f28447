//! Random unitaries, symplectic matrices and physical covariance matrices.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::symplectic::{passive_symplectic, Complex64};

/// Haar-random `M×M` unitary (QR of a complex Ginibre matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(m, m, |_, _| {
        Complex::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..m {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex::new(1.0, 0.0)
        };
        for i in 0..m {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Haar-random `M×M` real orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let z = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random symplectic matrix `P₁ · diag(e^{r}, e^{-r}) · P₂` with passive `P₁, P₂`
/// and squeezing parameters uniform in `[0, max_r]`.
pub fn random_symplectic<R: Rng + ?Sized>(m: usize, max_r: f64, rng: &mut R) -> DMatrix<f64> {
    let p1 = passive_symplectic(&random_unitary(m, rng));
    let p2 = passive_symplectic(&random_unitary(m, rng));
    let r: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * max_r).collect();
    let d: Vec<f64> = r
        .iter()
        .map(|x| x.exp())
        .chain(r.iter().map(|x| (-x).exp()))
        .collect();
    p1 * DMatrix::from_diagonal(&DVector::from_vec(d)) * p2
}

/// Random physical covariance `S diag(ν, ν) Sᵀ` with `ν ∈ [1, 1 + max_excess]`.
pub fn random_covariance<R: Rng + ?Sized>(
    m: usize,
    max_r: f64,
    max_excess: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let s = random_symplectic(m, max_r, rng);
    let nu: Vec<f64> = (0..m)
        .map(|_| 1.0 + rng.random::<f64>() * max_excess)
        .collect();
    let d: Vec<f64> = nu.iter().chain(nu.iter()).copied().collect();
    let v = &s * DMatrix::from_diagonal(&DVector::from_vec(d)) * s.transpose();
    (&v + v.transpose()) * 0.5
}
