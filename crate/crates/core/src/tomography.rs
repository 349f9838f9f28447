//! Homodyne tomography of Gaussian covariance matrices.
//!
//! A setting measures the quadrature `vᵀq` with `v = [Re(u e^{iθ}); Im(u e^{iθ})]`
//! for a unit mode vector `u` and phase `θ`. Reconstruction uses per-setting sample
//! variances, which are sufficient statistics for zero-mean Gaussian records.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{GaussianState, QuadratureForm};
use crate::symplectic::{symmetrize, symplectic_eigenvalues, williamson, Complex64};

/// Physicality tolerance on the smallest symplectic eigenvalue of a reconstruction.
pub const PHYSICALITY_TOL: f64 = 1e-6;

/// One homodyne setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetting {
    mode_vector: DVector<Complex64>,
    phase: f64,
}

impl MeasurementSetting {
    pub fn new(mode_vector: DVector<Complex64>, phase: f64) -> Result<Self> {
        let norm = mode_vector.norm();
        if !((norm - 1.0).abs() < 1e-10) {
            return Err(Error::InvalidForm(format!("mode vector has norm {norm}")));
        }
        Ok(Self { mode_vector, phase })
    }

    pub fn mode_vector(&self) -> &DVector<Complex64> {
        &self.mode_vector
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn mode_count(&self) -> usize {
        self.mode_vector.len()
    }

    /// `v = [Re(u e^{iθ}); Im(u e^{iθ})]`.
    pub fn form_vector(&self) -> DVector<f64> {
        let m = self.mode_count();
        let w = &self.mode_vector * Complex::from_polar(1.0, self.phase);
        DVector::from_fn(2 * m, |i, _| if i < m { w[i].re } else { w[i - m].im })
    }

    pub fn form(&self) -> QuadratureForm {
        QuadratureForm::new(self.form_vector()).expect("unit mode vector")
    }
}

/// Phases `0, π/4, π/2` on every mode, and on `(e_m + e_n)/√2` and
/// `(e_m + i e_n)/√2` for every pair `m < n`.
pub fn informationally_complete_settings(mode_count: usize) -> Vec<MeasurementSetting> {
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};
    let phases = [0.0, FRAC_PI_4, FRAC_PI_2];
    let m = mode_count;
    let mut out = Vec::with_capacity(3 * m + 3 * m * m.saturating_sub(1));
    for k in 0..m {
        for &th in &phases {
            let mut u = DVector::zeros(m);
            u[k] = Complex::new(1.0, 0.0);
            out.push(MeasurementSetting {
                mode_vector: u,
                phase: th,
            });
        }
    }
    for a in 0..m {
        for b in a + 1..m {
            for second in [
                Complex::new(FRAC_1_SQRT_2, 0.0),
                Complex::new(0.0, FRAC_1_SQRT_2),
            ] {
                for &th in &phases {
                    let mut u = DVector::zeros(m);
                    u[a] = Complex::new(FRAC_1_SQRT_2, 0.0);
                    u[b] = second;
                    out.push(MeasurementSetting {
                        mode_vector: u,
                        phase: th,
                    });
                }
            }
        }
    }
    out
}

/// Number of independent entries of a symmetric `2M×2M` matrix.
pub fn symmetric_dimension(mode_count: usize) -> usize {
    mode_count * (2 * mode_count + 1)
}

// Row of the linear map from the upper triangle of V to vᵀVv.
fn design_row(v: &DVector<f64>) -> Vec<f64> {
    let n = v.len();
    let mut row = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        row.push(v[i] * v[i]);
        for j in i + 1..n {
            row.push(2.0 * v[i] * v[j]);
        }
    }
    row
}

fn unpack_symmetric(x: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            v[(i, j)] = x[k];
            v[(j, i)] = x[k];
            k += 1;
        }
    }
    v
}

/// Rank of the settings' span in the space of symmetric matrices.
pub fn design_rank(settings: &[MeasurementSetting]) -> usize {
    if settings.is_empty() {
        return 0;
    }
    let rows: Vec<Vec<f64>> = settings
        .iter()
        .map(|s| design_row(&s.form_vector()))
        .collect();
    let a = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    numerical_rank(&a)
}

fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let max = sv.max();
    sv.iter().filter(|&&s| s > 1e-10 * max).count()
}

/// Simulated homodyne statistics for a list of settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyDataset {
    pub settings: Vec<MeasurementSetting>,
    pub counts: Vec<usize>,
    /// Sample variances about the sample mean.
    pub variances: Vec<f64>,
    /// Sample means, kept as a diagnostic only.
    pub means: Vec<f64>,
}

impl TomographyDataset {
    pub fn mode_count(&self) -> usize {
        self.settings.first().map_or(0, |s| s.mode_count())
    }

    /// Dataset with exact variances `vᵀVv` and weight `count` per setting.
    pub fn noiseless(cov: &DMatrix<f64>, settings: Vec<MeasurementSetting>, count: usize) -> Self {
        let variances = settings
            .iter()
            .map(|s| {
                let v = s.form_vector();
                (cov * &v).dot(&v)
            })
            .collect();
        let k = settings.len();
        Self {
            settings,
            counts: vec![count; k],
            variances,
            means: vec![0.0; k],
        }
    }

    /// Writes `setting_id,N,variance,mean` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["setting_id", "N", "variance", "mean"])?;
        for (k, ((n, v), mu)) in self
            .counts
            .iter()
            .zip(&self.variances)
            .zip(&self.means)
            .enumerate()
        {
            w.write_record([
                k.to_string(),
                n.to_string(),
                crate::io::fmt_f64(*v),
                crate::io::fmt_f64(*mu),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn settings_json(&self) -> Result<String> {
        let list: Vec<SettingRecord> = self
            .settings
            .iter()
            .map(|s| SettingRecord {
                mode_vector: s.mode_vector.iter().map(|z| [z.re, z.im]).collect(),
                phase: s.phase,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&list)?)
    }

    /// Rebuilds a dataset from [`Self::settings_json`] and [`Self::write_csv`] output.
    pub fn from_files(settings_json: &str, csv_text: &str) -> Result<Self> {
        let list: Vec<SettingRecord> = serde_json::from_str(settings_json)?;
        let settings = list
            .into_iter()
            .map(|r| {
                let u = DVector::from_iterator(
                    r.mode_vector.len(),
                    r.mode_vector.iter().map(|&[re, im]| Complex::new(re, im)),
                );
                MeasurementSetting::new(u, r.phase)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let (mut counts, mut variances, mut means) = (Vec::new(), Vec::new(), Vec::new());
        for rec in reader.records() {
            let rec = rec?;
            let field = |i: usize| {
                rec.get(i)
                    .ok_or_else(|| Error::BadMatrix("short dataset row".into()))
            };
            counts.push(
                field(1)?
                    .parse()
                    .map_err(|_| Error::BadMatrix("bad count".into()))?,
            );
            variances.push(
                field(2)?
                    .parse()
                    .map_err(|_| Error::BadMatrix("bad variance".into()))?,
            );
            means.push(
                field(3)?
                    .parse()
                    .map_err(|_| Error::BadMatrix("bad mean".into()))?,
            );
        }
        if counts.len() != settings.len() {
            return Err(Error::SizeMismatch {
                expected: settings.len(),
                found: counts.len(),
            });
        }
        Ok(Self {
            settings,
            counts,
            variances,
            means,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SettingRecord {
    mode_vector: Vec<[f64; 2]>,
    phase: f64,
}

/// Samples `n` homodyne outcomes per setting at efficiency `eta`. Setting `k` draws
/// from stream `k` of a ChaCha8 generator seeded with `seed`.
pub fn acquire(
    state: &GaussianState,
    settings: &[MeasurementSetting],
    n: usize,
    eta: f64,
    seed: u64,
) -> Result<TomographyDataset> {
    if n < 2 {
        return Err(Error::InvalidConfig(
            "need at least 2 samples per setting".into(),
        ));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!(
            "efficiency {eta} outside [0, 1]"
        )));
    }
    for s in settings {
        if s.mode_count() != state.mode_count() {
            return Err(Error::SizeMismatch {
                expected: state.mode_count(),
                found: s.mode_count(),
            });
        }
    }
    let stats: Vec<(f64, f64)> = settings
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let xs = state.sample_quadratures(&s.form(), n, eta, &mut rng);
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var, mean)
        })
        .collect();
    Ok(TomographyDataset {
        settings: settings.to_vec(),
        counts: vec![n; settings.len()],
        variances: stats.iter().map(|s| s.0).collect(),
        means: stats.iter().map(|s| s.1).collect(),
    })
}

/// Weighted least-squares solution of `v_kᵀ V v_k = ṽ_k` over symmetric `V`, with
/// weights `N_k / ṽ_k²`. The result need not be physical.
pub fn linear_inversion(data: &TomographyDataset) -> Result<DMatrix<f64>> {
    let m = data.mode_count();
    let n = 2 * m;
    let required = symmetric_dimension(m);
    let k = data.settings.len();
    if k == 0 {
        return Err(Error::RankDeficient { rank: 0, required });
    }
    let mut a = DMatrix::zeros(k, required);
    let mut b = DVector::zeros(k);
    for (i, s) in data.settings.iter().enumerate() {
        let var = data.variances[i];
        if !(var > 0.0) {
            return Err(Error::DegenerateVariance { variance: var });
        }
        let w = (data.counts[i] as f64).sqrt() / var;
        for (j, x) in design_row(&s.form_vector()).into_iter().enumerate() {
            a[(i, j)] = w * x;
        }
        b[i] = w * var;
    }
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * max)
        .count();
    if rank < required {
        return Err(Error::RankDeficient { rank, required });
    }
    let x = svd
        .solve(&b, 1e-10 * max)
        .map_err(|e| Error::BadMatrix(e.to_string()))?;
    Ok(unpack_symmetric(&x, n))
}

/// `Σ_k N_k [ln σ_k + ṽ_k / σ_k]` with `σ_k = v_kᵀ V v_k`.
#[derive(Debug, Clone)]
pub struct NegLogLikelihood {
    forms: DMatrix<f64>,
    counts: Vec<f64>,
    variances: Vec<f64>,
}

impl NegLogLikelihood {
    pub fn new(data: &TomographyDataset) -> Self {
        let n = 2 * data.mode_count();
        let k = data.settings.len();
        let mut forms = DMatrix::zeros(n, k);
        for (i, s) in data.settings.iter().enumerate() {
            forms.set_column(i, &s.form_vector());
        }
        Self {
            forms,
            counts: data.counts.iter().map(|&c| c as f64).collect(),
            variances: data.variances.clone(),
        }
    }

    fn value_from_sigmas(&self, sigma: &[f64]) -> f64 {
        sigma
            .iter()
            .zip(&self.counts)
            .zip(&self.variances)
            .map(|((&s, &n), &v)| {
                if s > 0.0 {
                    n * (s.ln() + v / s)
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    }

    pub fn value(&self, cov: &DMatrix<f64>) -> f64 {
        let sigma: Vec<f64> = self
            .forms
            .column_iter()
            .map(|v| (cov * v).dot(&v))
            .collect();
        self.value_from_sigmas(&sigma)
    }

    /// Symmetric gradient `∂f/∂V = Σ_k N_k (1/σ_k − ṽ_k/σ_k²) v_k v_kᵀ`.
    pub fn gradient(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let sigma: Vec<f64> = self
            .forms
            .column_iter()
            .map(|v| (cov * v).dot(&v))
            .collect();
        self.gradient_from_sigmas(&sigma)
    }

    fn gradient_from_sigmas(&self, sigma: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.forms.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            let s = sigma[i];
            col *= self.counts[i] * (1.0 / s - self.variances[i] / (s * s));
        }
        symmetrize(&(scaled * self.forms.transpose()))
    }
}

/// Output of [`mle_reconstruct`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionResult {
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub nu_min: f64,
    /// `max(0, 1 − ν_min)`.
    pub physicality_residual: f64,
    pub converged: bool,
    /// Objective after every accepted optimiser step.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Options for [`mle_reconstruct`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-9,
        }
    }
}

/// Clamps the symplectic eigenvalues of a covariance at 1. Matrices that are not
/// positive definite are first lifted by clamping their eigenvalues at `floor`.
pub fn project_physical(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrize(cov);
    let eig = sym.clone().symmetric_eigen();
    let floor = 1e-3;
    let pd = if eig.eigenvalues.min() < floor {
        let d = eig.eigenvalues.map(|l| l.max(floor));
        symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()))
    } else {
        sym
    };
    Ok(williamson(&pd)?.reconstruct_with(|nu| nu.max(1.0)))
}

/// Undoes uniform detection loss: `(V − (1 − η) I) / η`.
pub fn invert_detection_loss(cov: &DMatrix<f64>, eta: f64) -> Result<DMatrix<f64>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "efficiency {eta} outside (0, 1]"
        )));
    }
    let n = cov.nrows();
    Ok((cov - DMatrix::<f64>::identity(n, n) * (1.0 - eta)) / eta)
}

/// Parameters of a physical covariance `V = W(X, Y) + Q Qᵀ` with
/// `W = [[X⁻¹, X⁻¹Y], [Y X⁻¹, X + Y X⁻¹ Y]]`, `X = L Lᵀ` and `Y = (Ỹ + Ỹᵀ)/2`.
///
/// `W` is the covariance of a pure Gaussian state and `Q Qᵀ ⪰ 0` is added noise, so
/// every parameter value is physical and every physical covariance is reachable.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Lower-triangular factor of `X`.
    pub l: DMatrix<f64>,
    /// `Ỹ`; only its symmetric part matters.
    pub y: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl PhysicalParams {
    pub fn mode_count(&self) -> usize {
        self.l.nrows()
    }

    pub fn from_covariance(cov: &DMatrix<f64>) -> Result<Self> {
        let m = cov.nrows() / 2;
        let w = williamson(cov)?;
        let s = &w.symplectic;
        let pure = symmetrize(&(s * s.transpose()));
        let excess = w.spectrum.values().iter().map(|nu| (nu - 1.0).max(0.0));
        let d: Vec<f64> = excess.clone().chain(excess).map(f64::sqrt).collect();
        let q = s * DMatrix::from_diagonal(&DVector::from_vec(d));
        let wxx = pure.view((0, 0), (m, m)).into_owned();
        let x = symmetrize(&wxx.try_inverse().ok_or(Error::NotPositiveDefinite)?);
        let y = symmetrize(&(&x * pure.view((0, m), (m, m))));
        let l = nalgebra::Cholesky::new(x)
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        Ok(Self { l, y, q })
    }

    fn x_inverse(&self) -> Option<DMatrix<f64>> {
        let x = &self.l * self.l.transpose();
        nalgebra::Cholesky::new(x).map(|c| symmetrize(&c.inverse()))
    }

    fn assemble(&self, xi: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.mode_count();
        let x = &self.l * self.l.transpose();
        let y = symmetrize(&self.y);
        let xiy = xi * &y;
        let mut v = &self.q * self.q.transpose();
        let mut add = |r: usize, c: usize, b: &DMatrix<f64>| {
            let mut view = v.view_mut((r, c), (m, m));
            view += b;
        };
        add(0, 0, xi);
        add(0, m, &xiy);
        add(m, 0, &xiy.transpose());
        add(m, m, &(x + &y * &xiy));
        symmetrize(&v)
    }

    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        self.x_inverse().map(|xi| self.assemble(&xi))
    }

    fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.l.len() + self.y.len() + self.q.len(),
            self.l
                .iter()
                .chain(self.y.iter())
                .chain(self.q.iter())
                .copied(),
        )
    }

    fn from_vector(x: &DVector<f64>, m: usize) -> Self {
        let (a, b) = (m * m, 2 * m * m);
        Self {
            l: DMatrix::from_column_slice(m, m, &x.as_slice()[..a]),
            y: DMatrix::from_column_slice(m, m, &x.as_slice()[a..b]),
            q: DMatrix::from_column_slice(2 * m, 2 * m, &x.as_slice()[b..]),
        }
    }
}

impl NegLogLikelihood {
    /// Objective and its gradient with respect to [`PhysicalParams`].
    pub fn value_and_parameter_gradient(&self, p: &PhysicalParams) -> (f64, PhysicalParams) {
        let m = p.mode_count();
        let zero = || PhysicalParams {
            l: DMatrix::zeros(m, m),
            y: DMatrix::zeros(m, m),
            q: DMatrix::zeros(2 * m, 2 * m),
        };
        let Some(xi) = p.x_inverse() else {
            return (f64::INFINITY, zero());
        };
        let v = p.assemble(&xi);
        let f = self.value(&v);
        if !f.is_finite() {
            return (f, zero());
        }
        let g = self.gradient(&v);
        let g11 = g.view((0, 0), (m, m));
        let g12 = g.view((0, m), (m, m));
        let g22 = g.view((m, m), (m, m));
        let y = symmetrize(&p.y);
        // df = tr(N dX) + tr(K dY).
        let n_x = -(&xi * g11 * &xi) - (&xi * &y * g12.transpose() * &xi) * 2.0 + g22
            - &xi * &y * g22 * &y * &xi;
        let k_y = g12.transpose() * &xi * 2.0 + &xi * &y * g22 + g22 * &y * &xi;
        let grad = PhysicalParams {
            l: (symmetrize(&n_x) * &p.l * 2.0).lower_triangle(),
            y: symmetrize(&k_y),
            q: &g * &p.q * 2.0,
        };
        (f, grad)
    }
}

fn lbfgs<F>(
    fg: F,
    x0: DVector<f64>,
    options: MleOptions,
    trace: &mut Vec<f64>,
) -> (DVector<f64>, usize, bool)
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let memory = 10;
    let mut history: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::new();
    let mut x = x0;
    let (mut f, mut g) = fg(&x);
    trace.push(f);
    let mut iterations = 0;
    let mut quiet = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.last() {
            q *= s.dot(y) / y.dot(y);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut dir = -q;
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            history.clear();
            dir = -g.clone();
            slope = -g.norm_squared();
        }
        if slope == 0.0 {
            return (x, iterations, true);
        }
        let mut step = 1.0;
        let accepted = loop {
            let trial = &x + &dir * step;
            let (ft, gt) = fg(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                break Some((trial, ft, gt));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((x_new, f_new, g_new)) = accepted else {
            return (x, iterations, true);
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            history.push((s, y, 1.0 / sy));
            if history.len() > memory {
                history.remove(0);
            }
        }
        let change = (f - f_new).abs() / f.abs().max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        // Require two quiet steps in a row so a single short step does not stop the run.
        quiet = if change < options.tol { quiet + 1 } else { 0 };
        if quiet >= 2 {
            return (x, iterations, true);
        }
    }
    (x, iterations, false)
}

/// Maximum-likelihood covariance over physical Gaussian states.
///
/// Starts from the physical projection of `init` (linear inversion by default),
/// minimises over [`PhysicalParams`] with L-BFGS and a monotone Armijo line search,
/// applies a final Williamson clamp and polishes with projected gradient steps. The
/// returned covariance is the best physical candidate seen, so its objective never
/// exceeds that of the projected starting point.
pub fn mle_reconstruct(
    data: &TomographyDataset,
    init: Option<&DMatrix<f64>>,
    options: MleOptions,
) -> Result<ReconstructionResult> {
    let m = data.mode_count();
    let required = symmetric_dimension(m);
    let rank = design_rank(&data.settings);
    if rank < required {
        return Err(Error::RankDeficient { rank, required });
    }
    let nll = NegLogLikelihood::new(data);
    let start = match init {
        Some(v) => v.clone(),
        None => linear_inversion(data)?,
    };
    let start = project_physical(&start)?;
    let mut best = (nll.value(&start), start.clone());

    let mut p0 = PhysicalParams::from_covariance(&start)?;
    // Q = 0 is stationary; a small offset lets the noise term move.
    p0.q += DMatrix::<f64>::identity(2 * m, 2 * m) * 1e-3;
    let mut trace = Vec::new();
    let fg = |x: &DVector<f64>| {
        let (f, g) = nll.value_and_parameter_gradient(&PhysicalParams::from_vector(x, m));
        (f, g.to_vector())
    };
    let (x, iterations, converged) = lbfgs(fg, p0.to_vector(), options, &mut trace);
    if let Some(v) = PhysicalParams::from_vector(&x, m).covariance() {
        let v = project_physical(&v)?;
        let fv = nll.value(&v);
        if fv < best.0 {
            best = (fv, v);
        }
    }
    let (objective, covariance) = polish(&nll, best.0, best.1)?;
    let nu_min = symplectic_eigenvalues(&covariance)?.min();
    Ok(ReconstructionResult {
        covariance,
        iterations,
        objective,
        nu_min,
        physicality_residual: (1.0 - nu_min).max(0.0),
        converged,
        trace,
    })
}

// Projected gradient descent in covariance space; only improving steps are kept.
fn polish(nll: &NegLogLikelihood, mut f: f64, mut v: DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let mut step = 1.0 / nll.gradient(&v).norm().max(1e-300);
    for _ in 0..20 {
        let g = nll.gradient(&v);
        let mut improved = false;
        while step * g.norm() > 1e-12 {
            let trial = &v - &g * step;
            let Ok(p) = project_physical(&trial) else {
                step *= 0.5;
                continue;
            };
            let fp = nll.value(&p);
            if fp < f {
                f = fp;
                v = p;
                improved = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((f, v))
}

impl ReconstructionResult {
    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
