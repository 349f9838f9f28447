//! CV surface-code syndromes on stacked RHG cluster states.
//!
//! Face sites of the lattice are the grey modes: measuring their `p̂` at outcome 0
//! prepares the code state. Edge sites carry the data. Every grey mode `a` gives a
//! star `s_a = Σ_{n∈N(a)} x̂_n`; plaquettes are `p̂`-type forms `Σ c_b p̂_b` over data
//! modes with `Σ_{b∈N(a)} c_b = 0` for every grey `a`, so each plaquette is a sum of
//! data-mode nullifiers and commutes with every star.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::{build_uniform_cluster, ClusterGraph};
use crate::error::{Error, Result};
use crate::state::{GaussianState, QuadratureForm};

/// Largest plaquette weight tried before falling back to a dense kernel basis.
const MAX_PLAQUETTE_WEIGHT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeRole {
    /// Face site, measured in `p̂` during preparation.
    Grey,
    /// Edge site.
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SyndromeKind {
    Plaquette,
    Star,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyndromeOperator {
    pub label: String,
    pub kind: SyndromeKind,
    pub form: QuadratureForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorKind {
    /// `Ẑ(ζ) = exp(iζx̂/2)`, shifts `⟨p̂⟩` by `ζ`.
    Z,
    /// `X̂(ξ) = exp(−iξp̂/2)`, shifts `⟨x̂⟩` by `ξ`.
    X,
}

impl std::str::FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Z" | "z" => Ok(Self::Z),
            "X" | "x" => Ok(Self::X),
            _ => Err(Error::InvalidConfig(format!("unknown error kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEvent {
    pub kind: ErrorKind,
    pub magnitude: f64,
    pub mode: usize,
}

/// Geometry, mode roles and syndrome operators of an RHG stack.
#[derive(Debug, Clone)]
pub struct LayeredCode {
    layers: usize,
    graph: ClusterGraph,
    roles: Vec<ModeRole>,
    syndromes: Vec<SyndromeOperator>,
}

impl LayeredCode {
    /// Code on `layers` stacked unit cells. One layer is allowed here so the unit
    /// cell's syndromes can be inspected; [`build_layered_state`] needs two.
    pub fn new(layers: usize) -> Result<Self> {
        let graph = ClusterGraph::rhg_stack(layers)?;
        let coords = graph.coordinates().expect("stack has coordinates");
        let roles: Vec<ModeRole> = coords
            .iter()
            .map(|c| match c.iter().filter(|&&k| k % 2 == 1).count() {
                1 => ModeRole::Data,
                _ => ModeRole::Grey,
            })
            .collect();
        let m = graph.vertex_count();
        let grey: Vec<usize> = (0..m).filter(|&k| roles[k] == ModeRole::Grey).collect();
        let data: Vec<usize> = (0..m).filter(|&k| roles[k] == ModeRole::Data).collect();

        let mut syndromes = Vec::new();
        for (k, c) in plaquette_vectors(&graph, &grey, &data).iter().enumerate() {
            let mut v = DVector::zeros(2 * m);
            for (j, &b) in data.iter().enumerate() {
                v[m + b] = c[j];
            }
            syndromes.push(SyndromeOperator {
                label: format!("f{k}"),
                kind: SyndromeKind::Plaquette,
                form: QuadratureForm::new(v)?,
            });
        }
        for (k, &a) in grey.iter().enumerate() {
            let mut v = DVector::zeros(2 * m);
            for n in graph.neighbours(a) {
                v[n] = 1.0;
            }
            syndromes.push(SyndromeOperator {
                label: format!("s{k}"),
                kind: SyndromeKind::Star,
                form: QuadratureForm::new(v)?,
            });
        }
        Ok(Self {
            layers,
            graph,
            roles,
            syndromes,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn graph(&self) -> &ClusterGraph {
        &self.graph
    }

    pub fn roles(&self) -> &[ModeRole] {
        &self.roles
    }

    pub fn mode_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn grey_modes(&self) -> Vec<usize> {
        self.modes_with(ModeRole::Grey)
    }

    pub fn data_modes(&self) -> Vec<usize> {
        self.modes_with(ModeRole::Data)
    }

    fn modes_with(&self, role: ModeRole) -> Vec<usize> {
        (0..self.mode_count())
            .filter(|&k| self.roles[k] == role)
            .collect()
    }

    /// Data modes in the slice `z`, in label order.
    pub fn data_slice(&self, z: i64) -> Vec<usize> {
        let coords = self.graph.coordinates().expect("stack has coordinates");
        self.data_modes()
            .into_iter()
            .filter(|&k| coords[k][2] == z)
            .collect()
    }

    /// Label of the site at `coord`.
    pub fn mode_at(&self, coord: [i64; 3]) -> Option<usize> {
        let coords = self.graph.coordinates().expect("stack has coordinates");
        coords.iter().position(|&c| c == coord)
    }

    pub fn syndromes(&self) -> &[SyndromeOperator] {
        &self.syndromes
    }

    pub fn syndrome(&self, label: &str) -> Result<&SyndromeOperator> {
        self.syndromes
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| Error::UnknownSyndrome(label.to_string()))
    }

    /// Largest `|fᵀΩg|` over all syndrome pairs.
    pub fn max_commutator(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.syndromes.iter().enumerate() {
            for b in &self.syndromes[i + 1..] {
                worst = worst.max(a.form.commutator(&b.form).abs());
            }
        }
        worst
    }

    /// Default error site: `(1,0,0)` in the top slice for `Z`, `(1,0,2L)` in the
    /// bottom slice for `X`.
    pub fn default_error_mode(&self, kind: ErrorKind) -> usize {
        let coord = match kind {
            ErrorKind::Z => [1, 0, 0],
            ErrorKind::X => [1, 0, 2 * self.layers as i64],
        };
        self.mode_at(coord).expect("site exists in every stack")
    }
}

// ±1 kernel vectors of the grey-by-data adjacency, smallest weight first, chosen
// greedily until they span the kernel.
fn plaquette_vectors(graph: &ClusterGraph, grey: &[usize], data: &[usize]) -> Vec<DVector<f64>> {
    let g = DMatrix::from_fn(grey.len(), data.len(), |i, j| {
        if graph.has_edge(grey[i], data[j]) {
            1.0
        } else {
            0.0
        }
    });
    let rank = rank_of(&g);
    let target = data.len() - rank;
    let mut chosen: Vec<DVector<f64>> = Vec::new();
    let cols: Vec<Vec<i32>> = (0..data.len())
        .map(|j| (0..grey.len()).map(|i| g[(i, j)] as i32).collect())
        .collect();

    'outer: for weight in 2..=MAX_PLAQUETTE_WEIGHT.min(data.len()) {
        let mut support = (0..weight).collect::<Vec<_>>();
        loop {
            // The first sign is fixed to +1.
            for signs in 0..1u32 << (weight - 1) {
                let sign = |k: usize| {
                    if k > 0 && signs >> (k - 1) & 1 == 1 {
                        -1
                    } else {
                        1
                    }
                };
                let balanced = (0..grey.len()).all(|i| {
                    support
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| sign(k) * cols[j][i])
                        .sum::<i32>()
                        == 0
                });
                if !balanced {
                    continue;
                }
                let mut v = DVector::zeros(data.len());
                for (k, &j) in support.iter().enumerate() {
                    v[j] = sign(k) as f64;
                }
                if extends_span(&chosen, &v) {
                    chosen.push(v);
                    if chosen.len() == target {
                        break 'outer;
                    }
                }
            }
            if !next_combination(&mut support, data.len()) {
                break;
            }
        }
    }
    if chosen.len() < target {
        let svd = g.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let max = svd.singular_values.max();
        for k in 0..vt.nrows() {
            let sv = if k < svd.singular_values.len() {
                svd.singular_values[k]
            } else {
                0.0
            };
            if sv > 1e-10 * max {
                continue;
            }
            let v = vt.row(k).transpose();
            if extends_span(&chosen, &v) {
                chosen.push(v);
            }
        }
    }
    chosen
}

fn rank_of(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let max = sv.max();
    sv.iter().filter(|&&s| s > 1e-10 * max).count()
}

fn extends_span(chosen: &[DVector<f64>], v: &DVector<f64>) -> bool {
    let mut m = DMatrix::zeros(chosen.len() + 1, v.len());
    for (i, c) in chosen.iter().chain(std::iter::once(v)).enumerate() {
        m.set_row(i, &c.transpose());
    }
    rank_of(&m) == chosen.len() + 1
}

// Advances a sorted index set to the next k-subset of 0..n in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// A Gaussian state on the stack with some modes already measured in `p̂`.
#[derive(Debug, Clone)]
pub struct LayeredState {
    state: GaussianState,
    live: Vec<usize>,
    outcomes: Vec<Option<f64>>,
}

impl LayeredState {
    pub fn new(state: GaussianState) -> Self {
        let m = state.mode_count();
        Self {
            state,
            live: (0..m).collect(),
            outcomes: vec![None; m],
        }
    }

    /// State of the unmeasured modes, in label order.
    pub fn state(&self) -> &GaussianState {
        &self.state
    }

    pub fn live_modes(&self) -> &[usize] {
        &self.live
    }

    pub fn mode_count(&self) -> usize {
        self.outcomes.len()
    }

    fn local(&self, mode: usize) -> Result<usize> {
        self.live
            .binary_search(&mode)
            .map_err(|_| Error::IndexOutOfRange {
                index: mode,
                len: self.mode_count(),
            })
    }

    /// Homodyne `p̂` measurement of `mode` with the given outcome.
    pub fn measure_p(&self, mode: usize, outcome: f64) -> Result<Self> {
        let k = self.local(mode)?;
        let form = QuadratureForm::p(k, self.live.len())?;
        let state = self.state.homodyne_condition(&form, outcome)?;
        let mut live = self.live.clone();
        live.remove(k);
        let mut outcomes = self.outcomes.clone();
        outcomes[mode] = Some(outcome);
        Ok(Self {
            state,
            live,
            outcomes,
        })
    }

    pub fn displace(&self, mode: usize, dx: f64, dp: f64) -> Result<Self> {
        let k = self.local(mode)?;
        Ok(Self {
            state: self.state.displace(k, dx, dp)?,
            ..self.clone()
        })
    }

    /// Whether `form` can be evaluated: measured modes may only carry `p̂` weight.
    pub fn supports(&self, form: &QuadratureForm) -> bool {
        let m = self.mode_count();
        let v = form.coeffs();
        form.mode_count() == m && (0..m).all(|k| self.outcomes[k].is_none() || v[k] == 0.0)
    }

    /// Mean and variance of a form written over the original labels. Measured modes
    /// contribute their recorded outcome.
    pub fn moments(&self, form: &QuadratureForm) -> Result<(f64, f64)> {
        let m = self.mode_count();
        if form.mode_count() != m {
            return Err(Error::SizeMismatch {
                expected: m,
                found: form.mode_count(),
            });
        }
        if !self.supports(form) {
            return Err(Error::InvalidForm("x weight on a measured mode".into()));
        }
        let v = form.coeffs();
        let fixed: f64 = (0..m)
            .filter_map(|k| self.outcomes[k].map(|o| o * v[m + k]))
            .sum();
        let n = self.live.len();
        let local = DVector::from_fn(2 * n, |i, _| {
            let (k, off) = if i < n { (i, 0) } else { (i - n, m) };
            v[self.live[k] + off]
        });
        let mu = local.dot(self.state.mean());
        let var = (self.state.cov() * &local).dot(&local);
        Ok((mu + fixed, var))
    }
}

/// Stack of `layers` unit cells carrying a cluster state at uniform squeezing `r`.
/// Every mode passes through loss `η` before any measurement.
pub fn build_layered_state(layers: usize, r: f64, eta: f64) -> Result<(LayeredState, LayeredCode)> {
    if layers < 2 {
        return Err(Error::TooSmall(
            "layered state needs at least two layers".into(),
        ));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "efficiency {eta} outside (0, 1]"
        )));
    }
    let code = LayeredCode::new(layers)?;
    let state = build_uniform_cluster(code.graph(), r)?.with_detection_loss(eta);
    Ok((LayeredState::new(state), code))
}

/// Measures `p̂ = 0` on each grey mode in label order.
pub fn prepare_ground(state: &LayeredState, grey: &[usize]) -> Result<LayeredState> {
    measure_all(state, grey)
}

pub fn inject_error(state: &LayeredState, event: ErrorEvent) -> Result<LayeredState> {
    if !event.magnitude.is_finite() {
        return Err(Error::InvalidConfig(
            "error magnitude must be finite".into(),
        ));
    }
    match event.kind {
        ErrorKind::Z => state.displace(event.mode, 0.0, event.magnitude),
        ErrorKind::X => state.displace(event.mode, event.magnitude, 0.0),
    }
}

/// Measures `p̂ = 0` on the given layer modes in label order.
pub fn teleport_layer(state: &LayeredState, layer: &[usize]) -> Result<LayeredState> {
    measure_all(state, layer)
}

fn measure_all(state: &LayeredState, modes: &[usize]) -> Result<LayeredState> {
    let mut sorted = modes.to_vec();
    sorted.sort_unstable();
    let mut out = state.clone();
    for &k in &sorted {
        out = out.measure_p(k, 0.0)?;
    }
    Ok(out)
}

/// Settings shared by every point of a detection sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionConfig {
    pub layers: usize,
    pub r: f64,
    pub eta: f64,
    pub shots: usize,
    pub seed: u64,
    /// Error site; `None` picks [`LayeredCode::default_error_mode`].
    pub error_mode: Option<usize>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            r: 1.0,
            eta: 1.0,
            shots: 1000,
            seed: 0,
            error_mode: None,
        }
    }
}

/// Straight-line fit of one syndrome's response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyndromeFit {
    pub label: String,
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope, propagated from the per-point standard errors.
    pub stderr: f64,
    /// `|slope| > 3·stderr`.
    pub detected: bool,
    /// Slope of the exact conditional means.
    pub analytic_slope: f64,
    /// Largest deviation of the exact means from their own fitted line.
    pub analytic_residual: f64,
}

/// Sample statistics of one syndrome at one magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyndromePoint {
    pub mean: f64,
    pub stderr: f64,
    pub analytic_mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRun {
    pub kind: ErrorKind,
    pub error_mode: usize,
    pub magnitudes: Vec<f64>,
    pub labels: Vec<String>,
    /// `points[i][j]`: magnitude `i`, syndrome `j`.
    pub points: Vec<Vec<SyndromePoint>>,
    pub fits: Vec<SyndromeFit>,
}

impl DetectionRun {
    /// `magnitude,syndrome,mean,stderr` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["magnitude", "syndrome", "mean", "stderr"])?;
        for (z, row) in self.magnitudes.iter().zip(&self.points) {
            for (label, p) in self.labels.iter().zip(row) {
                w.write_record([
                    crate::io::fmt_f64(*z),
                    label.clone(),
                    crate::io::fmt_f64(p.mean),
                    crate::io::fmt_f64(p.stderr),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn fit(&self, label: &str) -> Result<&SyndromeFit> {
        self.fits
            .iter()
            .find(|f| f.label == label)
            .ok_or_else(|| Error::UnknownSyndrome(label.to_string()))
    }
}

/// Prepared code state with the error applied and the top slice teleported away.
pub fn run_pipeline(
    ground: &LayeredState,
    code: &LayeredCode,
    event: ErrorEvent,
) -> Result<LayeredState> {
    let hit = inject_error(ground, event)?;
    teleport_layer(&hit, &code.data_slice(0))
}

/// Syndromes that can still be read after the top slice is measured.
pub fn available_syndromes(code: &LayeredCode) -> Vec<String> {
    let top = code.data_slice(0);
    code.syndromes()
        .iter()
        .filter(|s| {
            let v = s.form.coeffs();
            let m = code.mode_count();
            let x_ok = top.iter().all(|&k| v[k] == 0.0);
            let live = (0..m).any(|k| !top.contains(&k) && (v[k] != 0.0 || v[m + k] != 0.0));
            x_ok && live
        })
        .map(|s| s.label.clone())
        .collect()
}

/// Sweeps an error's magnitude and records syndrome statistics.
///
/// Each point runs prepare, inject, teleport and measure with all homodyne outcomes
/// fixed at 0; `shots` syndrome records are drawn from the resulting conditional
/// distribution with a per-point random stream. An empty `syndromes` list means all
/// syndromes available after teleportation.
pub fn detection_sweep(
    kind: ErrorKind,
    magnitudes: &[f64],
    syndromes: &[String],
    config: &DetectionConfig,
    workers: usize,
) -> Result<DetectionRun> {
    if config.shots < 2 {
        return Err(Error::InvalidConfig(
            "need at least two shots per point".into(),
        ));
    }
    if magnitudes.is_empty() {
        return Err(Error::InvalidConfig("empty magnitude sweep".into()));
    }
    let (state, code) = build_layered_state(config.layers, config.r, config.eta)?;
    let labels = if syndromes.is_empty() {
        available_syndromes(&code)
    } else {
        syndromes.to_vec()
    };
    let ops = labels
        .iter()
        .map(|l| code.syndrome(l).cloned())
        .collect::<Result<Vec<_>>>()?;
    let mode = config
        .error_mode
        .unwrap_or_else(|| code.default_error_mode(kind));
    if mode >= code.mode_count() || code.roles()[mode] != ModeRole::Data {
        return Err(Error::InvalidConfig(format!(
            "mode {mode} is not a data mode"
        )));
    }
    let ground = prepare_ground(&state, &code.grey_modes())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let points = pool.install(|| {
        magnitudes
            .par_iter()
            .enumerate()
            .map(|(i, &magnitude)| {
                let after = run_pipeline(
                    &ground,
                    &code,
                    ErrorEvent {
                        kind,
                        magnitude,
                        mode,
                    },
                )?;
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(i as u64);
                ops.iter()
                    .map(|op| {
                        let (mu, var) = after.moments(&op.form)?;
                        Ok(sample_point(mu, var, config.shots, &mut rng))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let fits = labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let means: Vec<f64> = points.iter().map(|row| row[j].mean).collect();
            let errs: Vec<f64> = points.iter().map(|row| row[j].stderr).collect();
            let exact: Vec<f64> = points.iter().map(|row| row[j].analytic_mean).collect();
            let (slope, intercept, stderr) = line_fit(magnitudes, &means, &errs);
            let (analytic_slope, analytic_intercept, _) = line_fit(magnitudes, &exact, &errs);
            let analytic_residual = magnitudes
                .iter()
                .zip(&exact)
                .map(|(z, y)| (y - analytic_slope * z - analytic_intercept).abs())
                .fold(0.0, f64::max);
            SyndromeFit {
                label: label.clone(),
                slope,
                intercept,
                stderr,
                detected: slope.abs() > 3.0 * stderr,
                analytic_slope,
                analytic_residual,
            }
        })
        .collect();
    Ok(DetectionRun {
        kind,
        error_mode: mode,
        magnitudes: magnitudes.to_vec(),
        labels,
        points,
        fits,
    })
}

fn sample_point<R: Rng + ?Sized>(mu: f64, var: f64, shots: usize, rng: &mut R) -> SyndromePoint {
    let normal = Normal::new(mu, var.max(0.0).sqrt()).expect("finite moments");
    let draws: Vec<f64> = normal.sample_iter(rng).take(shots).collect();
    let n = shots as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let ss: f64 = draws.iter().map(|d| (d - mean).powi(2)).sum();
    let std_dev = (ss / (n - 1.0)).sqrt();
    SyndromePoint {
        mean,
        stderr: std_dev / n.sqrt(),
        analytic_mean: mu,
        std_dev,
    }
}

// Ordinary least squares; the slope error propagates the per-point errors. A sweep
// with no spread in x has slope 0 and infinite error.
fn line_fit(x: &[f64], y: &[f64], err: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, ym, f64::INFINITY);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let var: f64 = x
        .iter()
        .zip(err)
        .map(|(a, e)| ((a - xm) / sxx * e).powi(2))
        .sum();
    (slope, ym - slope * xm, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_counts_match_coordinates() {
        for layers in 1..=3usize {
            let code = LayeredCode::new(layers).unwrap();
            let planes_even = layers + 1;
            let planes_odd = layers;
            // Even z: one face site (both x, y odd) and four edge sites per plane.
            // Odd z: four face sites and four edge sites (x, y even) per plane.
            assert_eq!(code.grey_modes().len(), planes_even + 4 * planes_odd);
            assert_eq!(code.data_modes().len(), 4 * planes_even + 4 * planes_odd);
            // Every edge site touches two faces inside the stack; in-plane faces at
            // odd z touch one more per vertical neighbour.
            let degree_sum: usize = code.graph().degrees().iter().sum();
            assert_eq!(degree_sum, 2 * code.graph().edge_count());
        }
    }

    #[test]
    fn syndromes_commute() {
        for layers in 1..=2 {
            let code = LayeredCode::new(layers).unwrap();
            assert!(code.max_commutator() < 1e-12);
            let plaquettes = code
                .syndromes()
                .iter()
                .filter(|s| s.kind == SyndromeKind::Plaquette);
            for p in plaquettes {
                let w = p.form.support().len();
                assert!((2..=MAX_PLAQUETTE_WEIGHT).contains(&w));
                assert!(p.form.coeffs().iter().all(|c| *c == 0.0 || c.abs() == 1.0));
            }
        }
    }

    #[test]
    fn kernel_dimension() {
        let count = |layers| {
            let code = LayeredCode::new(layers).unwrap();
            code.syndromes()
                .iter()
                .filter(|s| s.kind == SyndromeKind::Plaquette)
                .count()
        };
        assert_eq!(count(1), 6);
        assert_eq!(count(2), 9);
    }

    #[test]
    fn single_layer_is_too_small() {
        assert!(matches!(
            build_layered_state(1, 1.0, 1.0),
            Err(Error::TooSmall(_))
        ));
    }

    #[test]
    fn pure_for_unit_efficiency() {
        let (s, _) = build_layered_state(2, 0.8, 1.0).unwrap();
        assert!((s.state().min_symplectic_eigenvalue().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ground_state_squeezes_syndromes() {
        let (s, code) = build_layered_state(2, 5.0, 1.0).unwrap();
        let g = prepare_ground(&s, &code.grey_modes()).unwrap();
        for op in code.syndromes() {
            let (mu, var) = g.moments(&op.form).unwrap();
            assert!(mu.abs() < 1e-6);
            assert!(var < 1e-3 * op.form.norm_squared(), "{} {var}", op.label);
        }
    }

    #[test]
    fn no_squeezing_without_r() {
        let (s, code) = build_layered_state(2, 0.0, 1.0).unwrap();
        let g = prepare_ground(&s, &code.grey_modes()).unwrap();
        for op in code.syndromes() {
            let (_, var) = g.moments(&op.form).unwrap();
            assert!(var >= op.form.norm_squared() - 1e-9);
        }
    }

    #[test]
    fn error_displacements() {
        let (s, code) = build_layered_state(2, 0.5, 1.0).unwrap();
        let mode = code.default_error_mode(ErrorKind::Z);
        let ev = |m| ErrorEvent {
            kind: ErrorKind::Z,
            magnitude: m,
            mode,
        };
        let hit = inject_error(&s, ev(0.7)).unwrap();
        let p = QuadratureForm::p(mode, code.mode_count()).unwrap();
        assert_eq!(hit.moments(&p).unwrap().0, 0.7);
        assert_eq!(hit.state().cov(), s.state().cov());
        let back = inject_error(&hit, ev(-0.7)).unwrap();
        assert_eq!(back.state().mean(), s.state().mean());
        assert_eq!(
            inject_error(&s, ev(0.0)).unwrap().state().mean(),
            s.state().mean()
        );
        let bad = ErrorEvent {
            kind: ErrorKind::X,
            magnitude: 1.0,
            mode: 999,
        };
        assert!(matches!(
            inject_error(&s, bad),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn teleportation_propagates_means_only() {
        let (s, code) = build_layered_state(2, 1.0, 1.0).unwrap();
        let g = prepare_ground(&s, &code.grey_modes()).unwrap();
        let mode = code.default_error_mode(ErrorKind::Z);
        let a = run_pipeline(
            &g,
            &code,
            ErrorEvent {
                kind: ErrorKind::Z,
                magnitude: 0.0,
                mode,
            },
        )
        .unwrap();
        let b = run_pipeline(
            &g,
            &code,
            ErrorEvent {
                kind: ErrorKind::Z,
                magnitude: 1.5,
                mode,
            },
        )
        .unwrap();
        assert!(a.state().mean().amax() == 0.0);
        assert!((a.state().cov() - b.state().cov()).amax() < 1e-12);
        assert!(b.state().mean().amax() > 0.1);
    }

    #[test]
    fn zero_sweep_gives_flat_fits() {
        let cfg = DetectionConfig {
            shots: 200,
            ..Default::default()
        };
        let run = detection_sweep(ErrorKind::Z, &[0.0, 0.0, 0.0], &[], &cfg, 1).unwrap();
        for f in &run.fits {
            assert_eq!(f.slope, 0.0);
            assert!(!f.detected);
        }
    }

    #[test]
    fn unknown_syndrome_is_rejected() {
        let cfg = DetectionConfig::default();
        let err = detection_sweep(ErrorKind::Z, &[0.0, 1.0], &["f99".into()], &cfg, 1);
        assert!(matches!(err, Err(Error::UnknownSyndrome(_))));
    }

    #[test]
    fn sweep_is_reproducible() {
        let cfg = DetectionConfig {
            shots: 100,
            seed: 3,
            ..Default::default()
        };
        let z = [-1.0, 0.0, 1.0];
        let a = detection_sweep(ErrorKind::X, &z, &[], &cfg, 1).unwrap();
        let b = detection_sweep(ErrorKind::X, &z, &[], &cfg, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn line_fit_recovers_line() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let (s, c, e) = line_fit(&x, &y, &[0.1; 5]);
        assert!((s - 3.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
        assert!((e - 0.1 / 10f64.sqrt()).abs() < 1e-12);
    }
}
