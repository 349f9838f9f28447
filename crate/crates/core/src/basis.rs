//! Mode bases `a'_m = Σ_n c_{m,n} a_n` and crosstalk diagnostics.

use std::path::Path;

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symplectic::Complex64;

/// Tolerance on `‖c c† − I‖_F`.
pub const BASIS_TOL: f64 = 1e-8;

/// An orthonormal mode basis. Row `m` holds the coefficients of mode `m`.
///
/// The coefficients are kept as given so that composition stays associative. The
/// canonical form, used for comparison and serialisation, fixes each row's global
/// phase so that its first entry of (near) maximal magnitude is real and positive.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    coeffs: DMatrix<Complex64>,
}

impl ModeBasis {
    pub fn new(coeffs: DMatrix<Complex64>) -> Result<Self> {
        if coeffs.nrows() != coeffs.ncols() {
            return Err(Error::SizeMismatch {
                expected: coeffs.nrows(),
                found: coeffs.ncols(),
            });
        }
        let n = coeffs.nrows();
        let residual = (&coeffs * coeffs.adjoint() - DMatrix::<Complex64>::identity(n, n)).norm();
        if !(residual < BASIS_TOL) {
            return Err(Error::NotUnitary { residual });
        }
        Ok(Self { coeffs })
    }

    /// Coefficients with each row's global phase normalised.
    pub fn canonical(&self) -> DMatrix<Complex64> {
        let mut c = self.coeffs.clone();
        for i in 0..c.nrows() {
            normalize_row_phase(&mut c, i);
        }
        c
    }

    pub fn identity(size: usize) -> Self {
        Self {
            coeffs: DMatrix::identity(size, size),
        }
    }

    pub fn from_real(c: &DMatrix<f64>) -> Result<Self> {
        Self::new(c.map(|x| Complex::new(x, 0.0)))
    }

    pub fn size(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn coeffs(&self) -> &DMatrix<Complex64> {
        &self.coeffs
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.coeffs.adjoint()).expect("adjoint of a unitary is unitary")
    }

    /// `b2 ∘ b1`: coefficients `c₂ c₁`.
    pub fn compose(b1: &ModeBasis, b2: &ModeBasis) -> Result<Self> {
        if b1.size() != b2.size() {
            return Err(Error::SizeMismatch {
                expected: b1.size(),
                found: b2.size(),
            });
        }
        Self::new(&b2.coeffs * &b1.coeffs)
    }

    /// Rows `(e_m ± e_{M+1-m})/√2`: symmetric superpositions first, then antisymmetric.
    pub fn epr_pairing(size: usize) -> Result<Self> {
        if size == 0 || !size.is_multiple_of(2) {
            return Err(Error::OddModeCount(size));
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let half = size / 2;
        let mut c = DMatrix::zeros(size, size);
        for k in 0..half {
            let partner = size - 1 - k;
            c[(k, k)] = h;
            c[(k, partner)] = h;
            c[(half + k, k)] = h;
            c[(half + k, partner)] = -h;
        }
        Self::from_real(&c)
    }

    /// Adds independent complex Gaussian noise of standard deviation `sigma` to every
    /// coefficient and renormalises each row, without re-orthogonalising.
    pub fn perturb<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> RealizedModes {
        let noisy = self.coeffs.map(|c| {
            c + Complex::new(
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
            )
        });
        RealizedModes::new(noisy).expect("perturbed rows are nonzero")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BasisFile::from(
            &self.canonical(),
        ))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BasisFile = serde_json::from_str(text)?;
        Self::new(file.into_matrix()?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl PartialEq for ModeBasis {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

pub fn epr_pairing_basis(size: usize) -> Result<ModeBasis> {
    ModeBasis::epr_pairing(size)
}

pub fn compose(b1: &ModeBasis, b2: &ModeBasis) -> Result<ModeBasis> {
    ModeBasis::compose(b1, b2)
}

fn normalize_row_phase(c: &mut DMatrix<Complex64>, row: usize) {
    let n = c.ncols();
    let max = (0..n).map(|j| c[(row, j)].norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = (0..n)
        .find(|&j| c[(row, j)].norm() >= max - 1e-12)
        .expect("row has a maximal entry");
    let p = c[(row, pivot)];
    let magnitude = p.norm();
    let phase = p / magnitude;
    if phase == Complex::new(1.0, 0.0) {
        return;
    }
    let rotate = phase.conj();
    for j in 0..n {
        c[(row, j)] *= rotate;
    }
    c[(row, pivot)] = Complex::new(magnitude, 0.0);
}

/// Row-normalised mode functions as actually shaped, not necessarily orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedModes {
    rows: DMatrix<Complex64>,
}

impl RealizedModes {
    pub fn new(mut rows: DMatrix<Complex64>) -> Result<Self> {
        for i in 0..rows.nrows() {
            let norm = rows.row(i).norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::BadMatrix(format!("mode {i} has zero norm")));
            }
            rows.row_mut(i).unscale_mut(norm);
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &DMatrix<Complex64> {
        &self.rows
    }
}

impl From<&ModeBasis> for RealizedModes {
    fn from(b: &ModeBasis) -> Self {
        Self {
            rows: b.coeffs.clone(),
        }
    }
}

/// Overlaps `|⟨realized_i | design_j⟩|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkMatrix {
    entries: DMatrix<f64>,
}

impl CrosstalkMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Mean off-diagonal overlap in percent.
    pub fn mean_off_diagonal_percent(&self) -> f64 {
        let n = self.entries.nrows();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.entries[(i, j)])
            .sum();
        100.0 * total / (n * (n - 1)) as f64
    }
}

pub fn crosstalk(design: &ModeBasis, realized: &RealizedModes) -> Result<CrosstalkMatrix> {
    let n = design.size();
    if realized.rows.nrows() != n || realized.rows.ncols() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: realized.rows.nrows(),
        });
    }
    let overlap = realized.rows.conjugate() * design.coeffs.transpose();
    Ok(CrosstalkMatrix {
        entries: overlap.map(|z| z.norm_sqr()),
    })
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    size: usize,
    rows: Vec<Vec<[f64; 2]>>,
}

impl From<&DMatrix<Complex64>> for BasisFile {
    fn from(c: &DMatrix<Complex64>) -> Self {
        Self {
            size: c.nrows(),
            rows: c
                .row_iter()
                .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

impl BasisFile {
    fn into_matrix(self) -> Result<DMatrix<Complex64>> {
        let n = self.size;
        if self.rows.len() != n || self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::BadMatrix(format!(
                "basis rows do not form a {n}x{n} matrix"
            )));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| {
            let [re, im] = self.rows[i][j];
            Complex::new(re, im)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &ModeBasis, b: &ModeBasis, tol: f64) -> bool {
        (a.coeffs() - b.coeffs()).norm() < tol
    }

    #[test]
    fn epr_pairing_rows() {
        let b = epr_pairing_basis(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(b.coeffs()[(0, 0)].re, h);
        assert_eq!(b.coeffs()[(0, 1)].re, h);
        assert_eq!(b.coeffs()[(1, 0)].re, h);
        assert_eq!(b.coeffs()[(1, 1)].re, -h);

        let b = epr_pairing_basis(20).unwrap();
        for m in 0..10 {
            assert_eq!(b.coeffs()[(m, 19 - m)].re, h);
            assert_eq!(b.coeffs()[(10 + m, 19 - m)].re, -h);
        }
        let c = b.coeffs().map(|z| z.re);
        assert!((&c * c.transpose() - DMatrix::<f64>::identity(20, 20)).norm() < 1e-14);
        assert!(matches!(epr_pairing_basis(3), Err(Error::OddModeCount(3))));
    }

    #[test]
    fn rejects_non_unitary() {
        let c = DMatrix::from_element(2, 2, Complex::new(1.0, 0.0));
        assert!(matches!(ModeBasis::new(c), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn composition_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ModeBasis::new(random_unitary(4, &mut rng)).unwrap();
        let b = ModeBasis::new(random_unitary(4, &mut rng)).unwrap();
        let c = ModeBasis::new(random_unitary(4, &mut rng)).unwrap();
        assert!(close(
            &compose(&a, &ModeBasis::identity(4)).unwrap(),
            &a,
            1e-12
        ));
        assert!(close(
            &compose(&a, &a.adjoint()).unwrap(),
            &ModeBasis::identity(4),
            1e-12
        ));
        let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        assert!(close(&left, &right, 1e-10));
    }

    #[test]
    fn crosstalk_of_identical_and_rephased_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary(5, &mut rng);
        let b = ModeBasis::new(u.clone()).unwrap();
        let id = DMatrix::<f64>::identity(5, 5);
        let x = crosstalk(&b, &RealizedModes::from(&b)).unwrap();
        assert!((x.entries() - &id).amax() < 1e-12);
        let rephased = RealizedModes::new(u * Complex::from_polar(1.0, 0.83)).unwrap();
        assert!((crosstalk(&b, &rephased).unwrap().entries() - &id).amax() < 1e-12);
    }

    #[test]
    fn perturbed_crosstalk_is_small_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = epr_pairing_basis(20).unwrap();
        let realized = b.perturb(0.01, &mut rng);
        let x = crosstalk(&b, &realized).unwrap();
        let pct = x.mean_off_diagonal_percent();
        assert!(pct > 0.0 && pct < 0.1, "{pct}");
        // Rows of a unit vector against an orthonormal basis sum to one.
        for i in 0..20 {
            assert!(x.entries().row(i).sum() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = ModeBasis::new(random_unitary(6, &mut rng)).unwrap();
        let back = ModeBasis::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(back.coeffs(), &b.canonical());
        assert_eq!(back, b);
    }

    #[test]
    fn phase_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b = ModeBasis::new(random_unitary(4, &mut rng))
            .unwrap()
            .canonical();
        for i in 0..4 {
            let row = b.row(i);
            let max = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let lead = row.iter().find(|z| z.norm() >= max - 1e-12).unwrap();
            assert_eq!(lead.im, 0.0);
            assert!(lead.re > 0.0);
        }
    }
}
