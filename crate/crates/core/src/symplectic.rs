//! Symplectic geometry on real quadrature space.
//!
//! Quadratures are ordered `(x_1, .., x_M, p_1, .., p_M)` and normalised so that
//! `[x_m, p_m] = 2i`. Under this convention the commutator matrix is `2i Ω` with
//! `Ω = [[0, I], [-I, 0]]` and the vacuum covariance is the identity.

use nalgebra::{Cholesky, Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// Absolute tolerance used when checking that an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Largest tolerated condition number of an eliminated block.
pub const MAX_CONDITION: f64 = 1e12;

const EIGEN_EPS: f64 = f64::EPSILON;

/// The symplectic form `Ω` for a fixed number of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    modes: usize,
    matrix: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn new(modes: usize) -> Self {
        Self {
            modes,
            matrix: omega(modes),
        }
    }

    pub fn mode_count(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `vᵀ Ω w`, the (halved, imaginary) commutator of two linear quadrature forms.
    pub fn pairing(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        symplectic_pairing(v, w)
    }
}

/// Dense `Ω` for `modes` modes.
pub fn omega(modes: usize) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * modes, 2 * modes);
    for j in 0..modes {
        o[(j, modes + j)] = 1.0;
        o[(modes + j, j)] = -1.0;
    }
    o
}

/// `vᵀ Ω w` without materialising `Ω`.
pub fn symplectic_pairing(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let m = v.len() / 2;
    (0..m).map(|j| v[j] * w[m + j] - v[m + j] * w[j]).sum()
}

/// Symplectic eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpectrum {
    values: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// The spectrum duplicated into the `2M` diagonal of the Williamson normal form.
    pub fn normal_form(&self) -> DMatrix<f64> {
        let d: Vec<f64> = self
            .values
            .iter()
            .chain(self.values.iter())
            .copied()
            .collect();
        DMatrix::from_diagonal(&DVector::from_vec(d))
    }
}

/// Checks shape and symmetry of a candidate covariance matrix.
pub fn check_covariance_shape(v: &DMatrix<f64>) -> Result<()> {
    if v.nrows() != v.ncols() {
        return Err(Error::SizeMismatch {
            expected: v.nrows(),
            found: v.ncols(),
        });
    }
    if !v.nrows().is_multiple_of(2) {
        return Err(Error::OddModeCount(v.nrows()));
    }
    let scale = v.amax().max(1.0);
    let asymmetry = (v - v.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * scale || !asymmetry.is_finite() {
        return Err(Error::NonSymmetric { asymmetry });
    }
    Ok(())
}

/// Symplectic eigenvalues of a symmetric positive-definite matrix.
///
/// With `V = L Lᵀ`, the matrix `iΩV` is similar to `i LᵀΩL`, so the symplectic
/// eigenvalues are the singular values of the antisymmetric `LᵀΩL`, each of
/// multiplicity two.
pub fn symplectic_eigenvalues(v: &DMatrix<f64>) -> Result<SymplecticSpectrum> {
    check_covariance_shape(v)?;
    let chol = Cholesky::new(symmetrize(v)).ok_or(Error::NotPositiveDefinite)?;
    Ok(SymplecticSpectrum {
        values: spectrum_from_factor(&chol.l()),
    })
}

/// Symplectic spectrum of `F Fᵀ` for any square factor `F` (ascending).
pub(crate) fn spectrum_from_factor(f: &DMatrix<f64>) -> Vec<f64> {
    let b = f.transpose() * omega_left(f);
    let gram = b.transpose() * &b;
    let mut lambda: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
    lambda.sort_by(f64::total_cmp);
    lambda
        .chunks(2)
        .map(|pair| (0.5 * (pair[0] + pair[pair.len() - 1])).max(0.0).sqrt())
        .collect()
}

/// `Ω F` computed by row shuffling.
pub(crate) fn omega_left(f: &DMatrix<f64>) -> DMatrix<f64> {
    let m = f.nrows() / 2;
    let mut out = DMatrix::zeros(f.nrows(), f.ncols());
    for j in 0..m {
        out.row_mut(j).copy_from(&f.row(m + j));
        out.row_mut(m + j).copy_from(&(-f.row(j)));
    }
    out
}

/// Result of a Williamson decomposition `V = S D Sᵀ`.
#[derive(Debug, Clone)]
pub struct Williamson {
    pub symplectic: DMatrix<f64>,
    pub spectrum: SymplecticSpectrum,
}

impl Williamson {
    pub fn normal_form(&self) -> DMatrix<f64> {
        self.spectrum.normal_form()
    }

    /// Rebuilds `S D' Sᵀ` with the symplectic eigenvalues replaced by `f(ν)`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let nu: Vec<f64> = self.spectrum.values().iter().map(|&x| f(x)).collect();
        let d = SymplecticSpectrum { values: nu }.normal_form();
        symmetrize(&(&self.symplectic * d * self.symplectic.transpose()))
    }
}

/// Williamson decomposition via the eigenvectors of the Hermitian matrix
/// `i V^{-1/2} Ω V^{-1/2}`.
pub fn williamson(v: &DMatrix<f64>) -> Result<Williamson> {
    check_covariance_shape(v)?;
    let n = v.nrows();
    let m = n / 2;
    let roots = SymmetricRoots::new(v)?;
    let a = &roots.inv_sqrt * omega(m) * &roots.inv_sqrt;
    let h: DMatrix<Complex64> = a.map(|x| Complex::new(0.0, x));
    let eig = h
        .try_symmetric_eigen(EIGEN_EPS, 1000 * n)
        .ok_or(Error::ConvergenceFailure)?;

    // Eigenvalues come in ±1/ν pairs; keep the positive half, ν ascending.
    let mut positive: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.0).collect();
    if positive.len() != m {
        return Err(Error::ConvergenceFailure);
    }
    positive.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let sqrt2 = std::f64::consts::SQRT_2;
    let mut o = DMatrix::zeros(n, n);
    let mut nu = Vec::with_capacity(m);
    for (j, &k) in positive.iter().enumerate() {
        let w = eig.eigenvectors.column(k);
        for r in 0..n {
            o[(r, j)] = sqrt2 * w[r].im;
            o[(r, m + j)] = sqrt2 * w[r].re;
        }
        nu.push(1.0 / eig.eigenvalues[k]);
    }
    let scale: Vec<f64> = nu.iter().chain(nu.iter()).map(|x| x.powf(-0.5)).collect();
    let mut s = &roots.sqrt * o;
    for (c, f) in scale.iter().enumerate() {
        s.column_mut(c).scale_mut(*f);
    }
    Ok(Williamson {
        symplectic: s,
        spectrum: SymplecticSpectrum { values: nu },
    })
}

/// Eigen-based square root and inverse square root of an SPD matrix.
pub(crate) struct SymmetricRoots {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl SymmetricRoots {
    pub fn new(p: &DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        let eig = symmetrize(p)
            .try_symmetric_eigen(EIGEN_EPS, 1000 * n.max(1))
            .ok_or(Error::ConvergenceFailure)?;
        if eig.eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let u = &eig.eigenvectors;
        let rebuild = |g: &dyn Fn(f64) -> f64| {
            let mut scaled = u.clone();
            for (c, &l) in eig.eigenvalues.iter().enumerate() {
                scaled.column_mut(c).scale_mut(g(l));
            }
            symmetrize(&(scaled * u.transpose()))
        };
        Ok(Self {
            sqrt: rebuild(&|l| l.sqrt()),
            inv_sqrt: rebuild(&|l| 1.0 / l.sqrt()),
        })
    }
}

/// `P^{-1/2}` for symmetric positive-definite `P`.
pub fn matrix_inverse_sqrt(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p.nrows() != p.ncols() {
        return Err(Error::SizeMismatch {
            expected: p.nrows(),
            found: p.ncols(),
        });
    }
    let asymmetry = (p - p.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * p.amax().max(1.0) {
        return Err(Error::NonSymmetric { asymmetry });
    }
    Ok(SymmetricRoots::new(p)?.inv_sqrt)
}

/// Row/column indices of the quadratures of `modes`: all x's then all p's.
pub fn quadrature_indices(modes: &[usize], mode_count: usize) -> Vec<usize> {
    modes
        .iter()
        .copied()
        .chain(modes.iter().map(|&k| k + mode_count))
        .collect()
}

pub(crate) fn submatrix(v: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| v[(rows[i], cols[j])])
}

pub(crate) fn symmetrize(v: &DMatrix<f64>) -> DMatrix<f64> {
    (v + v.transpose()) * 0.5
}

fn validate_modes(modes: &[usize], mode_count: usize) -> Result<Vec<usize>> {
    let mut sorted = modes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&k| k >= mode_count) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: mode_count,
        });
    }
    Ok(sorted)
}

/// Conditional covariance of the `keep` modes: `V_K − V_KE V_E⁻¹ V_EK`.
///
/// The result is expressed in the kept modes' own `xx..pp` ordering, with modes
/// in ascending index order.
pub fn schur_complement(v: &DMatrix<f64>, keep: &[usize]) -> Result<DMatrix<f64>> {
    check_covariance_shape(v)?;
    let m = v.nrows() / 2;
    let keep = validate_modes(keep, m)?;
    let elim: Vec<usize> = (0..m).filter(|k| keep.binary_search(k).is_err()).collect();
    let ki = quadrature_indices(&keep, m);
    let v_keep = submatrix(v, &ki, &ki);
    if elim.is_empty() {
        return Ok(v_keep);
    }
    let ei = quadrature_indices(&elim, m);
    let v_elim = submatrix(v, &ei, &ei);
    let eig = symmetrize(&v_elim).symmetric_eigenvalues();
    let lo = eig.min();
    let hi = eig.max();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularBlock { condition });
    }
    let cross = submatrix(v, &ki, &ei);
    let chol = Cholesky::new(symmetrize(&v_elim)).ok_or(Error::SingularBlock { condition })?;
    let solved = chol.solve(&cross.transpose());
    Ok(symmetrize(&(v_keep - cross * solved)))
}

/// Partial transposition: flips the sign of every p quadrature of `modes`.
pub fn partial_transpose(v: &DMatrix<f64>, modes: &[usize]) -> DMatrix<f64> {
    let m = v.nrows() / 2;
    let mut sign = vec![1.0; 2 * m];
    for &k in modes {
        sign[m + k] = -1.0;
    }
    DMatrix::from_fn(2 * m, 2 * m, |i, j| sign[i] * sign[j] * v[(i, j)])
}

/// Permutes `xx..pp` ordering into interleaved `(x_1, p_1, x_2, p_2, ..)` ordering.
pub fn to_interleaved(v: &DMatrix<f64>) -> DMatrix<f64> {
    let m = v.nrows() / 2;
    let perm: Vec<usize> = (0..2 * m)
        .map(|i| if i % 2 == 0 { i / 2 } else { m + i / 2 })
        .collect();
    submatrix(v, &perm, &perm)
}

/// Inverse of [`to_interleaved`].
pub fn from_interleaved(v: &DMatrix<f64>) -> DMatrix<f64> {
    let m = v.nrows() / 2;
    let perm: Vec<usize> = (0..2 * m)
        .map(|i| if i < m { 2 * i } else { 2 * (i - m) + 1 })
        .collect();
    submatrix(v, &perm, &perm)
}

/// Real symplectic matrix `[[Re U, -Im U], [Im U, Re U]]` of the passive map `a -> U a`.
pub fn passive_symplectic(u: &DMatrix<Complex64>) -> DMatrix<f64> {
    let m = u.nrows();
    let mut s = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let c = u[(i, j)];
            s[(i, j)] = c.re;
            s[(i, m + j)] = -c.im;
            s[(m + i, j)] = c.im;
            s[(m + i, m + j)] = c.re;
        }
    }
    s
}

/// `‖U†U − I‖_F`.
pub fn unitarity_residual(u: &DMatrix<Complex64>) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - DMatrix::<Complex64>::identity(n, n)).norm()
}

/// `‖SᵀΩS − Ω‖_F`.
pub fn symplectic_residual(s: &DMatrix<f64>) -> f64 {
    let m = s.nrows() / 2;
    let o = omega(m);
    (s.transpose() * &o * s - o).norm()
}
