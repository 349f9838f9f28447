//! Entanglement witnesses: Duan, EPR conditional variances, NPT and steerability.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::symplectic::{
    check_covariance_shape, partial_transpose, quadrature_indices, schur_complement,
    spectrum_from_factor, submatrix, symmetrize, symplectic_eigenvalues,
};

/// Largest mode count accepted by [`full_sweep`].
pub const MAX_SWEEP_MODES: usize = 24;

/// Steerability below this counts as zero.
pub const ZERO_STEERING: f64 = 1e-10;

// Symplectic eigenvalues within this distance of 1 are treated as unsteered.
const UNIT_NU_TOL: f64 = 1e-12;

/// A split of the modes into two nonempty parts.
///
/// Canonical orientation: `A` is the smaller part; for equal sizes `A` contains
/// mode 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Bipartition {
    mode_count: usize,
    mask_a: u64,
}

impl Bipartition {
    /// Canonical bipartition with `set` on one side.
    pub fn new(mode_count: usize, set: &[usize]) -> Result<Self> {
        if mode_count > 64 {
            return Err(Error::TooManyModes(mode_count));
        }
        let mut mask = 0u64;
        for &k in set {
            if k >= mode_count {
                return Err(Error::IndexOutOfRange {
                    index: k,
                    len: mode_count,
                });
            }
            mask |= 1 << k;
        }
        Self::from_mask(mode_count, mask)
    }

    /// Canonical bipartition with the modes of `mask` on one side.
    pub fn from_mask(mode_count: usize, mask: u64) -> Result<Self> {
        let full = full_mask(mode_count);
        let mask = mask & full;
        if mask == 0 || mask == full {
            return Err(Error::InvalidConfig("bipartition side is empty".into()));
        }
        Ok(Self {
            mode_count,
            mask_a: canonical_side(mode_count, mask),
        })
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn mask_a(&self) -> u64 {
        self.mask_a
    }

    pub fn set_a(&self) -> Vec<usize> {
        bits(self.mask_a, self.mode_count)
    }

    pub fn set_b(&self) -> Vec<usize> {
        bits(!self.mask_a, self.mode_count)
    }

    pub fn hex(&self) -> String {
        format!("{:#x}", self.mask_a)
    }
}

fn full_mask(mode_count: usize) -> u64 {
    if mode_count >= 64 {
        u64::MAX
    } else {
        (1u64 << mode_count) - 1
    }
}

fn canonical_side(mode_count: usize, mask: u64) -> u64 {
    let other = full_mask(mode_count) & !mask;
    let (a, b) = (mask.count_ones(), other.count_ones());
    if a < b || (a == b && mask & 1 == 1) {
        mask
    } else {
        other
    }
}

fn bits(mask: u64, mode_count: usize) -> Vec<usize> {
    (0..mode_count).filter(|&k| mask >> k & 1 == 1).collect()
}

fn check_pair(v: &DMatrix<f64>, m: usize, n: usize) -> Result<usize> {
    check_covariance_shape(v)?;
    let modes = v.nrows() / 2;
    for k in [m, n] {
        if k >= modes {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: modes,
            });
        }
    }
    if m == n {
        return Err(Error::InvalidConfig(
            "pair criteria need two distinct modes".into(),
        ));
    }
    Ok(modes)
}

/// `¼⟨(x_m + x_n)²⟩ + ¼⟨(p_m − p_n)²⟩` from central moments; below 1 certifies
/// inseparability of the pair.
pub fn duan_value(v: &DMatrix<f64>, m: usize, n: usize) -> Result<f64> {
    let k = check_pair(v, m, n)?;
    let (pm, pn) = (k + m, k + n);
    let xs = v[(m, m)] + v[(n, n)] + 2.0 * v[(m, n)];
    let ps = v[(pm, pm)] + v[(pn, pn)] - 2.0 * v[(pm, pn)];
    Ok(0.25 * (xs + ps))
}

/// Product of the conditional variances of `x_m` given `x_n` and `p_m` given `p_n`.
pub fn epr_product(v: &DMatrix<f64>, m: usize, n: usize) -> Result<f64> {
    let k = check_pair(v, m, n)?;
    let conditional = |a: usize, b: usize| {
        let var = v[(b, b)];
        if !(var > 1e-12) {
            return Err(Error::DegenerateVariance { variance: var });
        }
        Ok(v[(a, a)] - v[(a, b)] * v[(a, b)] / var)
    };
    Ok(conditional(m, n)? * conditional(k + m, k + n)?)
}

/// `−ln ν̃_min` of the partial transpose on `set_a`. Positive values certify
/// entanglement across the cut.
pub fn npt_value(v: &DMatrix<f64>, bipartition: &Bipartition) -> Result<f64> {
    check_covariance_shape(v)?;
    if v.nrows() / 2 != bipartition.mode_count() {
        return Err(Error::SizeMismatch {
            expected: bipartition.mode_count(),
            found: v.nrows() / 2,
        });
    }
    let pt = partial_transpose(v, &bipartition.set_a());
    Ok(-symplectic_eigenvalues(&pt)?.min().ln())
}

/// `𝒢^{X→Y}`: sum of `−ln ν̄` over the symplectic eigenvalues `ν̄ < 1` of the
/// covariance of `to` conditioned on `from`, clamped at zero.
///
/// Modes in neither set are traced out first.
pub fn steerability(v: &DMatrix<f64>, from: &[usize], to: &[usize]) -> Result<f64> {
    check_covariance_shape(v)?;
    let m = v.nrows() / 2;
    if from.is_empty() || to.is_empty() {
        return Err(Error::InvalidConfig(
            "steering parties must be nonempty".into(),
        ));
    }
    let mut joint: Vec<usize> = from.iter().chain(to).copied().collect();
    joint.sort_unstable();
    let len = joint.len();
    joint.dedup();
    if joint.len() != len {
        return Err(Error::InvalidConfig("steering parties overlap".into()));
    }
    if let Some(&bad) = joint.iter().find(|&&k| k >= m) {
        return Err(Error::IndexOutOfRange { index: bad, len: m });
    }
    let idx = quadrature_indices(&joint, m);
    let marginal = submatrix(v, &idx, &idx);
    let keep: Vec<usize> = to
        .iter()
        .map(|k| joint.binary_search(k).expect("mode is in the joint set"))
        .collect();
    let conditional = schur_complement(&marginal, &keep)?;
    let spectrum = symplectic_eigenvalues(&conditional)?;
    let g: f64 = spectrum
        .values()
        .iter()
        .filter(|&&nu| nu < 1.0 - UNIT_NU_TOL)
        .map(|nu| -nu.ln())
        .sum();
    Ok(g.max(0.0))
}

/// Witness values for one bipartition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessRecord {
    pub bipartition: Bipartition,
    pub npt: f64,
    /// `𝒢^{A→B}`
    pub steer_ab: f64,
    /// `𝒢^{B→A}`
    pub steer_ba: f64,
}

/// Summary statistics of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub mode_count: usize,
    pub bipartitions: usize,
    pub min_npt: f64,
    pub max_npt: f64,
    pub npt_positive: usize,
    pub zero_steering_ab: usize,
    pub zero_steering_ba: usize,
}

/// All bipartitions sorted by ascending NPT value.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    pub records: Vec<WitnessRecord>,
    pub summary: SweepSummary,
}

impl WitnessReport {
    fn from_records(mode_count: usize, mut records: Vec<WitnessRecord>) -> Self {
        records.sort_by(|a, b| {
            a.npt
                .total_cmp(&b.npt)
                .then(a.bipartition.mask_a.cmp(&b.bipartition.mask_a))
        });
        let summary = SweepSummary {
            mode_count,
            bipartitions: records.len(),
            min_npt: records.first().map_or(f64::NAN, |r| r.npt),
            max_npt: records.last().map_or(f64::NAN, |r| r.npt),
            npt_positive: records.iter().filter(|r| r.npt > 0.0).count(),
            zero_steering_ab: records
                .iter()
                .filter(|r| r.steer_ab < ZERO_STEERING)
                .count(),
            zero_steering_ba: records
                .iter()
                .filter(|r| r.steer_ba < ZERO_STEERING)
                .count(),
        };
        Self { records, summary }
    }

    /// Writes `bipartition,npt,steer_ab,steer_ba` rows, optionally only the first `top`.
    pub fn write_csv<W: Write>(&self, out: W, top: Option<usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bipartition", "npt", "steer_ab", "steer_ba"])?;
        let n = top.unwrap_or(self.records.len()).min(self.records.len());
        for r in &self.records[..n] {
            w.write_record([
                r.bipartition.hex(),
                crate::io::fmt_f64(r.npt),
                crate::io::fmt_f64(r.steer_ab),
                crate::io::fmt_f64(r.steer_ba),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

/// Precomputed factors shared by every bipartition of one covariance matrix.
struct SweepContext {
    modes: usize,
    // Lᵀ Ω L for V = L Lᵀ.
    b0: DMatrix<f64>,
    // Rows of L.
    l: DMatrix<f64>,
    // V⁻¹.
    k: DMatrix<f64>,
}

impl SweepContext {
    fn new(v: &DMatrix<f64>) -> Result<Self> {
        check_covariance_shape(v)?;
        let chol = Cholesky::new(symmetrize(v)).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let b0 = l.transpose() * crate::symplectic::omega_left(&l);
        let k = symmetrize(&chol.inverse());
        Ok(Self {
            modes: v.nrows() / 2,
            b0,
            l,
            k,
        })
    }

    /// Smallest symplectic eigenvalue of the partial transpose on `a`.
    ///
    /// Flipping the p rows of `a` changes `LᵀΩL` by `−2 Σ_j (l_xj l_pjᵀ − l_pj l_xjᵀ)`.
    fn pt_min(&self, a: &[usize]) -> f64 {
        let m = self.modes;
        let mut b = self.b0.clone();
        for &j in a {
            let lx = self.l.row(j).transpose();
            let lp = self.l.row(m + j).transpose();
            let outer = &lx * lp.transpose();
            b -= (&outer - outer.transpose()) * 2.0;
        }
        let gram = b.transpose() * &b;
        let min = gram.symmetric_eigenvalues().min();
        min.max(0.0).sqrt()
    }

    /// `𝒢` toward the party `to`, the complement of the steering party.
    ///
    /// The conditional covariance of `to` is `(K_TT)⁻¹` with `K = V⁻¹`, whose
    /// symplectic eigenvalues are the reciprocals of those of `K_TT`.
    fn steer_toward(&self, to: &[usize]) -> Result<f64> {
        let idx = quadrature_indices(to, self.modes);
        let kt = submatrix(&self.k, &idx, &idx);
        let chol = Cholesky::new(kt).ok_or(Error::NotPositiveDefinite)?;
        let mu = spectrum_from_factor(&chol.l());
        Ok(mu
            .iter()
            .filter(|&&x| x > 1.0 + UNIT_NU_TOL)
            .map(|x| x.ln())
            .sum::<f64>()
            .max(0.0))
    }

    fn record(&self, bipartition: Bipartition) -> Result<WitnessRecord> {
        let a = bipartition.set_a();
        let b = bipartition.set_b();
        Ok(WitnessRecord {
            bipartition,
            npt: -self.pt_min(&a).ln(),
            steer_ab: self.steer_toward(&b)?,
            steer_ba: self.steer_toward(&a)?,
        })
    }
}

/// Witness values for a single bipartition using the same numerics as the sweep.
pub fn bipartition_record(v: &DMatrix<f64>, bipartition: Bipartition) -> Result<WitnessRecord> {
    SweepContext::new(v)?.record(bipartition)
}

/// Number of bipartitions of `mode_count` modes, `2^{M−1} − 1`.
pub fn bipartition_count(mode_count: usize) -> usize {
    (1usize << (mode_count - 1)) - 1
}

/// Every bipartition of the modes with NPT value and both steerabilities, sorted by
/// ascending NPT value. `workers = 0` uses rayon's default pool size.
pub fn full_sweep(v: &DMatrix<f64>, workers: usize) -> Result<WitnessReport> {
    check_covariance_shape(v)?;
    let m = v.nrows() / 2;
    if m > MAX_SWEEP_MODES {
        return Err(Error::TooManyModes(m));
    }
    if m < 2 {
        return Err(Error::TooSmall(format!(
            "sweep needs at least 2 modes, got {m}"
        )));
    }
    let ctx = SweepContext::new(v)?;
    let count = bipartition_count(m) as u64;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    // Subsets of modes 1..M; mode 0 is always on the complementary side.
    let records = pool.install(|| {
        (1..=count)
            .into_par_iter()
            .map(|b| ctx.record(Bipartition::from_mask(m, b << 1).expect("proper subset")))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(WitnessReport::from_records(m, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_covariance, random_unitary};
    use crate::symplectic::passive_symplectic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tms(r: f64) -> DMatrix<f64> {
        let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
        DMatrix::from_row_slice(
            4,
            4,
            &[
                c, -s, 0.0, 0.0, -s, c, 0.0, 0.0, 0.0, 0.0, c, s, 0.0, 0.0, s, c,
            ],
        )
    }

    // Pure loss of transmissivity `eta` on the listed modes.
    fn lossy(v: &DMatrix<f64>, modes: &[usize], eta: f64) -> DMatrix<f64> {
        let m = v.nrows() / 2;
        let mut t = DMatrix::<f64>::identity(2 * m, 2 * m);
        let mut noise = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for &k in modes {
            for i in [k, m + k] {
                t[(i, i)] = eta.sqrt();
                noise[(i, i)] = 1.0 - eta;
            }
        }
        &t * v * &t + noise
    }

    #[test]
    fn canonical_orientation() {
        let b = Bipartition::new(4, &[1, 2, 3]).unwrap();
        assert_eq!(b.set_a(), vec![0]);
        let b = Bipartition::new(4, &[2, 3]).unwrap();
        assert_eq!(b.set_a(), vec![0, 1]);
        let b = Bipartition::new(4, &[0, 3]).unwrap();
        assert_eq!(b.set_a(), vec![0, 3]);
        assert_eq!(b.set_b(), vec![1, 2]);
        assert_eq!(b.hex(), "0x9");
        assert!(Bipartition::new(3, &[]).is_err());
        assert!(Bipartition::new(3, &[0, 1, 2]).is_err());
    }

    #[test]
    fn duan_and_epr_examples() {
        let vac = DMatrix::<f64>::identity(4, 4);
        assert_eq!(duan_value(&vac, 0, 1).unwrap(), 1.0);
        assert_eq!(epr_product(&vac, 0, 1).unwrap(), 1.0);
        assert_eq!(duan_value(&(vac.clone() * 2.0), 0, 1).unwrap(), 2.0);
        for r in [0.1, 0.5, 1.0] {
            let v = tms(r);
            assert!((duan_value(&v, 0, 1).unwrap() - (-2.0 * r).exp()).abs() < 1e-12);
            let expect = 1.0 / (2.0 * r).cosh().powi(2);
            assert!((epr_product(&v, 0, 1).unwrap() - expect).abs() < 1e-12);
            assert!((epr_product(&v, 1, 0).unwrap() - expect).abs() < 1e-12);
        }
        let sq =
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 3.0, 2.0, 1.0 / 3.0]));
        assert!(epr_product(&sq, 0, 1).unwrap() >= 1.0);
        assert!(matches!(
            duan_value(&vac, 0, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            duan_value(&vac, 0, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn npt_examples() {
        let b = Bipartition::new(2, &[0]).unwrap();
        assert!(npt_value(&DMatrix::identity(4, 4), &b).unwrap().abs() < 1e-14);
        assert!((npt_value(&tms(0.4), &b).unwrap() - 0.8).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_covariance(4, 0.7, 0.3, &mut rng);
        let a = partial_transpose(&v, &[0, 2]);
        let bb = partial_transpose(&v, &[1, 3]);
        let sa = symplectic_eigenvalues(&a).unwrap();
        let sb = symplectic_eigenvalues(&bb).unwrap();
        for (x, y) in sa.values().iter().zip(sb.values()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn steering_examples() {
        let v = tms(0.5);
        let expect = 1f64.cosh().ln();
        assert!((steerability(&v, &[0], &[1]).unwrap() - expect).abs() < 1e-12);
        assert!((steerability(&v, &[1], &[0]).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.4338).abs() < 1e-4);
        let prod =
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 3.0, 2.0, 1.0 / 3.0]));
        assert_eq!(steerability(&prod, &[0], &[1]).unwrap(), 0.0);
        assert_eq!(steerability(&prod, &[1], &[0]).unwrap(), 0.0);
    }

    #[test]
    fn one_way_steering_found_by_scan() {
        // Closed forms for a lossy two-mode squeezed state with loss on mode 1.
        let r: f64 = 0.5;
        let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
        let mut found = None;
        for k in 1..100 {
            let eta = k as f64 / 100.0;
            let toward_b = eta / c + 1.0 - eta;
            let toward_a = c - eta * s * s / (eta * c + 1.0 - eta);
            if toward_b < 1.0 && toward_a >= 1.0 {
                found = Some(eta);
            }
        }
        let eta = found.expect("a one-way region exists");
        let v = lossy(&tms(r), &[1], eta);
        assert!(steerability(&v, &[0], &[1]).unwrap() > 0.0);
        assert_eq!(steerability(&v, &[1], &[0]).unwrap(), 0.0);
    }

    #[test]
    fn loss_on_steered_party_never_helps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let v = random_covariance(3, 1.0, 0.2, &mut rng);
            let base = steerability(&v, &[0], &[1, 2]).unwrap();
            let worse = steerability(&lossy(&v, &[1, 2], 0.8), &[0], &[1, 2]).unwrap();
            assert!(worse <= base + 1e-12);
        }
    }

    #[test]
    fn npt_is_locally_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_covariance(4, 0.8, 0.2, &mut rng);
        let bip = Bipartition::new(4, &[0, 2]).unwrap();
        let before = npt_value(&v, &bip).unwrap();
        // Passive unitary acting separately on {0,2} and {1,3}.
        let ua = random_unitary(2, &mut rng);
        let ub = random_unitary(2, &mut rng);
        let mut u = DMatrix::zeros(4, 4);
        for (i, &p) in [0, 2].iter().enumerate() {
            for (j, &q) in [0, 2].iter().enumerate() {
                u[(p, q)] = ua[(i, j)];
            }
        }
        for (i, &p) in [1, 3].iter().enumerate() {
            for (j, &q) in [1, 3].iter().enumerate() {
                u[(p, q)] = ub[(i, j)];
            }
        }
        let s = passive_symplectic(&u);
        let after = npt_value(&(&s * &v * s.transpose()), &bip).unwrap();
        assert!((before - after).abs() < 1e-8);
    }

    #[test]
    fn sweep_agrees_with_direct_witnesses() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v = random_covariance(5, 0.9, 0.3, &mut rng);
        let report = full_sweep(&v, 2).unwrap();
        assert_eq!(report.records.len(), 15);
        for w in report.records.windows(2) {
            assert!(w[0].npt <= w[1].npt);
        }
        for r in &report.records {
            let a = r.bipartition.set_a();
            let b = r.bipartition.set_b();
            assert!((r.npt - npt_value(&v, &r.bipartition).unwrap()).abs() < 1e-9);
            assert!((r.steer_ab - steerability(&v, &a, &b).unwrap()).abs() < 1e-9);
            assert!((r.steer_ba - steerability(&v, &b, &a).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_guards() {
        assert!(matches!(
            full_sweep(&DMatrix::identity(50, 50), 1),
            Err(Error::TooManyModes(25))
        ));
        let report = full_sweep(&DMatrix::identity(8, 8), 1).unwrap();
        assert!(report.records.iter().all(|r| r.npt.abs() < 1e-14));
        assert_eq!(report.summary.zero_steering_ab, 7);
    }

    #[test]
    fn csv_output_is_deterministic() {
        let v = tms(0.3);
        let mut a = Vec::new();
        let mut b = Vec::new();
        full_sweep(&v, 1).unwrap().write_csv(&mut a, None).unwrap();
        full_sweep(&v, 3).unwrap().write_csv(&mut b, None).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("bipartition,npt,steer_ab,steer_ba\n0x1,"));
    }
}
