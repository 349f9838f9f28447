//! Multimode Gaussian states and linear quadrature observables.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::symplectic::{
    check_covariance_shape, passive_symplectic, symmetrize, symplectic_eigenvalues,
    symplectic_pairing, unitarity_residual, Complex64,
};

/// Tolerance on `‖U†U − I‖_F` for passive transformations.
pub const UNITARY_TOL: f64 = 1e-8;

/// Effective detection efficiency: 99 % detector efficiency times 95 % visibility squared.
pub const DEFAULT_ETA: f64 = 0.99 * 0.95 * 0.95;

/// Squeezing level in dB for squeezing parameter `r`: `-10 log10(e^{-2r})`.
pub fn r_to_db(r: f64) -> f64 {
    20.0 * r / std::f64::consts::LN_10
}

pub fn db_to_r(db: f64) -> f64 {
    db * std::f64::consts::LN_10 / 20.0
}

// sin/cos with rounding residue at multiples of π/2 removed.
fn snap_trig(theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let snap = |x: f64| if x.abs() < 1e-15 { 0.0 } else { x };
    (snap(s), snap(c))
}

/// The observable `vᵀq` for a real coefficient vector `v` of length `2M`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureForm {
    coeffs: DVector<f64>,
}

impl QuadratureForm {
    pub fn new(coeffs: DVector<f64>) -> Result<Self> {
        if !coeffs.len().is_multiple_of(2) {
            return Err(Error::OddModeCount(coeffs.len()));
        }
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidForm("all coefficients are zero".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidForm("non-finite coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    /// `cos φ · x_m + sin φ · p_m`.
    pub fn rotated(mode: usize, phase: f64, mode_count: usize) -> Result<Self> {
        if mode >= mode_count {
            return Err(Error::IndexOutOfRange {
                index: mode,
                len: mode_count,
            });
        }
        let (s, c) = snap_trig(phase);
        let mut v = DVector::zeros(2 * mode_count);
        v[mode] = c;
        v[mode_count + mode] = s;
        Self::new(v)
    }

    pub fn x(mode: usize, mode_count: usize) -> Result<Self> {
        Self::rotated(mode, 0.0, mode_count)
    }

    pub fn p(mode: usize, mode_count: usize) -> Result<Self> {
        Self::rotated(mode, std::f64::consts::FRAC_PI_2, mode_count)
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn mode_count(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn norm_squared(&self) -> f64 {
        self.coeffs.norm_squared()
    }

    /// `vᵀ Ω w`; two forms commute iff this vanishes.
    pub fn commutator(&self, other: &QuadratureForm) -> f64 {
        symplectic_pairing(&self.coeffs, &other.coeffs)
    }

    /// Modes carrying a nonzero x or p coefficient.
    pub fn support(&self) -> Vec<usize> {
        let m = self.mode_count();
        (0..m)
            .filter(|&k| self.coeffs[k] != 0.0 || self.coeffs[m + k] != 0.0)
            .collect()
    }

    /// Coefficients on the modes listed in `keep`, in that order.
    pub fn restrict(&self, keep: &[usize]) -> DVector<f64> {
        let m = self.mode_count();
        let n = keep.len();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.coeffs[keep[i]]
            } else {
                self.coeffs[m + keep[i - n]]
            }
        })
    }
}

/// Mean vector and covariance matrix of a Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_covariance_shape(&cov)?;
        if mean.len() != cov.nrows() {
            return Err(Error::SizeMismatch {
                expected: cov.nrows(),
                found: mean.len(),
            });
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadMatrix("non-finite mean".into()));
        }
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
        })
    }

    /// Zero-mean state with covariance `cov`.
    pub fn from_covariance(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        Self::new(DVector::zeros(n), cov)
    }

    pub fn vacuum(mode_count: usize) -> Self {
        Self {
            mean: DVector::zeros(2 * mode_count),
            cov: DMatrix::identity(2 * mode_count, 2 * mode_count),
        }
    }

    /// Product of single-mode squeezed vacua. Mode `m` has variance `e^{-2 r_m}`
    /// along `cos θ_m x + sin θ_m p` and `e^{2 r_m}` along the orthogonal quadrature.
    pub fn squeezed_vacuum(r: &[f64], theta: &[f64]) -> Result<Self> {
        if r.len() != theta.len() {
            return Err(Error::SizeMismatch {
                expected: r.len(),
                found: theta.len(),
            });
        }
        if r.iter().chain(theta).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite squeezing".into()));
        }
        let m = r.len();
        let mut cov = DMatrix::zeros(2 * m, 2 * m);
        for k in 0..m {
            let (s, c) = snap_trig(theta[k]);
            let (lo, hi) = ((-2.0 * r[k]).exp(), (2.0 * r[k]).exp());
            cov[(k, k)] = lo * c * c + hi * s * s;
            cov[(m + k, m + k)] = lo * s * s + hi * c * c;
            let off = (lo - hi) * s * c;
            cov[(k, m + k)] = off;
            cov[(m + k, k)] = off;
        }
        Ok(Self {
            mean: DVector::zeros(2 * m),
            cov,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }

    /// Applies a real symplectic matrix `S`: `V -> S V Sᵀ`, `μ -> S μ`.
    pub fn apply_symplectic(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.cov.nrows() || s.ncols() != self.cov.ncols() {
            return Err(Error::SizeMismatch {
                expected: self.cov.nrows(),
                found: s.nrows(),
            });
        }
        Ok(Self {
            mean: s * &self.mean,
            cov: symmetrize(&(s * &self.cov * s.transpose())),
        })
    }

    /// Passive linear optics `a -> U a`.
    pub fn apply_passive(&self, u: &DMatrix<Complex64>) -> Result<Self> {
        if u.nrows() != self.mode_count() || u.ncols() != self.mode_count() {
            return Err(Error::SizeMismatch {
                expected: self.mode_count(),
                found: u.nrows(),
            });
        }
        let residual = unitarity_residual(u);
        if !(residual < UNITARY_TOL) {
            return Err(Error::NotUnitary { residual });
        }
        self.apply_symplectic(&passive_symplectic(u))
    }

    /// Phase-space displacement of mode `mode` by `(dx, dp)`.
    pub fn displace(&self, mode: usize, dx: f64, dp: f64) -> Result<Self> {
        let m = self.mode_count();
        if mode >= m {
            return Err(Error::IndexOutOfRange {
                index: mode,
                len: m,
            });
        }
        let mut out = self.clone();
        out.mean[mode] += dx;
        out.mean[m + mode] += dp;
        Ok(out)
    }

    /// `(vᵀμ, vᵀVv)`.
    pub fn expectation_and_variance(&self, form: &QuadratureForm) -> (f64, f64) {
        let v = form.coeffs();
        (v.dot(&self.mean), (&self.cov * v).dot(v))
    }

    /// Moments of the homodyne record of `form` behind a detector of efficiency `eta`.
    ///
    /// Loss mixes the state with vacuum, `V -> ηV + (1-η)I`, so the variance gains
    /// `(1-η)‖v‖²` and the mean scales by `√η`.
    pub fn detected_moments(&self, form: &QuadratureForm, eta: f64) -> (f64, f64) {
        let (mu, var) = self.expectation_and_variance(form);
        (
            eta.sqrt() * mu,
            eta * var + (1.0 - eta) * form.norm_squared(),
        )
    }

    /// Homodyne measurement of a single-mode quadrature with the given outcome.
    /// The measured mode is removed from the returned state.
    pub fn homodyne_condition(&self, form: &QuadratureForm, outcome: f64) -> Result<Self> {
        let m = self.mode_count();
        if form.mode_count() != m {
            return Err(Error::SizeMismatch {
                expected: m,
                found: form.mode_count(),
            });
        }
        let support = form.support();
        if support.len() != 1 {
            return Err(Error::InvalidForm(format!(
                "homodyne form must act on one mode, acts on {}",
                support.len()
            )));
        }
        let measured = support[0];
        let (mu, var) = self.expectation_and_variance(form);
        if !(var > 1e-12) {
            return Err(Error::DegenerateVariance { variance: var });
        }
        let rest: Vec<usize> = (0..m).filter(|&k| k != measured).collect();
        let idx = crate::symplectic::quadrature_indices(&rest, m);
        let cross = &self.cov * form.coeffs();
        let c = DVector::from_fn(idx.len(), |i, _| cross[idx[i]]);
        let shift = (outcome - mu) / var;
        let mean = DVector::from_fn(idx.len(), |i, _| self.mean[idx[i]] + c[i] * shift);
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
            self.cov[(idx[i], idx[j])] - c[i] * c[j] / var
        });
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
        })
    }

    /// `n` independent homodyne outcomes of `form` at detection efficiency `eta`.
    pub fn sample_quadratures<R: Rng + ?Sized>(
        &self,
        form: &QuadratureForm,
        n: usize,
        eta: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        let (mu, var) = self.detected_moments(form, eta);
        let normal = Normal::new(mu, var.max(0.0).sqrt()).expect("finite moments");
        normal.sample_iter(rng).take(n).collect()
    }

    /// Smallest symplectic eigenvalue of the covariance.
    pub fn min_symplectic_eigenvalue(&self) -> Result<f64> {
        Ok(symplectic_eigenvalues(&self.cov)?.min())
    }

    /// Whether `V + iΩ ⪰ 0` within `tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.min_symplectic_eigenvalue()
            .map(|nu| nu >= 1.0 - tol)
            .unwrap_or(false)
    }

    /// Covariance seen by a detector of efficiency `eta`: `ηV + (1-η)I`.
    pub fn with_detection_loss(&self, eta: f64) -> Self {
        let n = self.cov.nrows();
        Self {
            mean: &self.mean * eta.sqrt(),
            cov: &self.cov * eta + DMatrix::<f64>::identity(n, n) * (1.0 - eta),
        }
    }
}
