//! Command-line front end: `build`, `verify`, `tomo`, `detect` and `bench`.
//!
//! Data files are deterministic for a fixed configuration and seed. Each command also
//! writes `<command>_manifest.json` with the configuration, timings and SHA-256
//! digests of the data files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cluster::{build_cluster, nullifier_report, ClusterGraph};
use crate::error::{Error, Result};
use crate::state::{db_to_r, GaussianState};
use crate::surface::{detection_sweep, DetectionConfig, ErrorKind};
use crate::tomography::{
    acquire, informationally_complete_settings, linear_inversion, mle_reconstruct, MleOptions,
};
use crate::witness::full_sweep;

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "CVCLUSTER_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cvcluster", version, about = "Gaussian cluster-state toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a cluster covariance and its nullifier report.
    Build(BuildArgs),
    /// Run the bipartition witness sweep on a covariance.
    Verify(VerifyArgs),
    /// Simulate homodyne tomography and reconstruct the covariance.
    Tomo(TomoArgs),
    /// Sweep an error's magnitude and fit the syndrome responses.
    Detect(DetectArgs),
    /// Time the witness sweep.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// `chain:N`, `grid:RxC`, `rhg:unit`, `rhg:L` or a JSON graph file.
    #[arg(long, default_value = "chain:4")]
    pub graph: String,
    /// Squeezing parameter, one value or one per mode (comma separated).
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "db",
        allow_negative_numbers = true
    )]
    pub r: Option<Vec<f64>>,
    /// Squeezing in dB, one value or one per mode (comma separated).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "6.0",
        allow_negative_numbers = true
    )]
    pub db: Vec<f64>,
    /// Detection efficiency.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Covariance CSV; built from the graph when absent.
    #[arg(long)]
    pub cov: Option<PathBuf>,
    /// Keep only the lowest-NPT rows.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TomoArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: u64,
    /// Samples per setting.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    #[arg(long, default_value = "Z")]
    pub kind: String,
    /// Squeezing parameter.
    #[arg(long, conflicts_with = "db", allow_negative_numbers = true)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    pub db: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long)]
    pub seed: u64,
    /// Shots per sweep point.
    #[arg(long, default_value_t = 1000)]
    pub shots: usize,
    /// Stacked unit cells.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "-2,-1,0,1,2",
        allow_negative_numbers = true
    )]
    pub magnitudes: Vec<f64>,
    /// Syndrome labels; all readable syndromes when empty.
    #[arg(long, value_delimiter = ',')]
    pub syndromes: Vec<String>,
    /// Error mode label; the default site for the kind when absent.
    #[arg(long)]
    pub mode: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
}

/// Record of one command run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub stages: Vec<(String, f64)>,
    /// File name to hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

struct Run {
    command: String,
    config: serde_json::Value,
    out: PathBuf,
    started: Instant,
    stage_start: Instant,
    stages: Vec<(String, f64)>,
    outputs: BTreeMap<String, String>,
}

impl Run {
    fn new(command: &str, config: &impl Serialize, out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        let now = Instant::now();
        Ok(Self {
            command: command.into(),
            config: serde_json::to_value(config)?,
            out: out.to_path_buf(),
            started: now,
            stage_start: now,
            stages: Vec::new(),
            outputs: BTreeMap::new(),
        })
    }

    fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages
            .push((name.into(), (now - self.stage_start).as_secs_f64()));
        self.stage_start = now;
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, bytes)?;
        if fs::read(&path)? != bytes {
            return Err(Error::Io(std::io::Error::other(format!(
                "{} did not read back",
                path.display()
            ))));
        }
        self.outputs.insert(name.into(), hex_digest(bytes));
        Ok(path)
    }

    fn write_matrix(&mut self, name: &str, m: &nalgebra::DMatrix<f64>) -> Result<()> {
        let mut buf = Vec::new();
        crate::io::write_matrix_csv(m, &mut buf)?;
        if crate::io::read_matrix_csv(buf.as_slice())? != *m {
            return Err(Error::BadMatrix(format!("{name} does not round-trip")));
        }
        self.write(name, &buf)?;
        Ok(())
    }

    fn finish(self) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.config,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            stages: self.stages,
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(
            self.out.join(format!("{}_manifest.json", self.command)),
            text,
        )?;
        Ok(manifest)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Common {
    fn squeezing(&self, modes: usize) -> Result<Vec<f64>> {
        let values: Vec<f64> = match &self.r {
            Some(r) => r.clone(),
            None => self.db.iter().map(|&d| db_to_r(d)).collect(),
        };
        let r = match values.len() {
            1 => vec![values[0]; modes],
            n if n == modes => values,
            n => {
                return Err(Error::InvalidConfig(format!(
                    "{n} squeezing values for {modes} modes"
                )))
            }
        };
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("squeezing must be finite".into()));
        }
        Ok(r)
    }

    fn check_eta(&self) -> Result<()> {
        check_eta(self.eta)
    }

    fn state(&self) -> Result<(ClusterGraph, GaussianState)> {
        self.check_eta()?;
        let graph = ClusterGraph::load(&self.graph)?;
        let r = self.squeezing(graph.vertex_count())?;
        let state = build_cluster(&graph, &r, None)?;
        Ok((graph, state))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "efficiency {eta} outside [0, 1]"
        )))
    }
}

pub fn cmd_build(args: &BuildArgs) -> Result<RunManifest> {
    let mut run = Run::new("build", args, &args.common.out)?;
    let (graph, state) = args.common.state()?;
    run.stage("construct");
    run.write_matrix("covariance.csv", state.cov())?;
    let records = nullifier_report(&state, &graph, args.common.eta)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["vertex", "variance", "vacuum_variance", "ratio", "squeezed"])?;
    for r in &records {
        w.write_record([
            r.vertex.to_string(),
            crate::io::fmt_f64(r.variance),
            crate::io::fmt_f64(r.vacuum_variance),
            crate::io::fmt_f64(r.ratio),
            r.squeezed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write("nullifiers.csv", &bytes)?;
    run.write("graph.json", graph.to_json()?.as_bytes())?;
    run.stage("write");
    run.finish()
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<RunManifest> {
    let mut run = Run::new("verify", args, &args.common.out)?;
    let cov = match &args.cov {
        Some(path) => crate::io::load_matrix(path)?,
        None => args.common.state()?.1.cov().clone(),
    };
    run.stage("load");
    let report = full_sweep(&cov, args.common.workers)?;
    run.stage("sweep");
    let mut buf = Vec::new();
    report.write_csv(&mut buf, args.top)?;
    run.write("witness.csv", &buf)?;
    run.write("witness_summary.json", report.summary_json()?.as_bytes())?;
    run.stage("write");
    run.finish()
}

pub fn cmd_tomo(args: &TomoArgs) -> Result<RunManifest> {
    let mut run = Run::new("tomo", args, &args.common.out)?;
    let (_, state) = args.common.state()?;
    if args.common.eta == 0.0 {
        return Err(Error::InvalidConfig(
            "tomography needs a nonzero efficiency".into(),
        ));
    }
    if args.common.workers > 0 {
        // Acquisition runs on the global pool; its results do not depend on the size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(args.common.workers)
            .build_global();
    }
    let settings = informationally_complete_settings(state.mode_count());
    let data = acquire(&state, &settings, args.samples, args.common.eta, args.seed)?;
    run.stage("acquire");
    let linear = linear_inversion(&data)?;
    run.stage("linear");
    let mle = mle_reconstruct(&data, Some(&linear), MleOptions::default())?;
    run.stage("mle");
    run.write("settings.json", data.settings_json()?.as_bytes())?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    run.write("dataset.csv", &buf)?;
    run.write_matrix("linear.csv", &linear)?;
    run.write_matrix("mle.csv", &mle.covariance)?;
    run.write("mle.json", serde_json::to_string_pretty(&mle)?.as_bytes())?;
    run.stage("write");
    run.finish()
}

pub fn cmd_detect(args: &DetectArgs) -> Result<RunManifest> {
    let mut run = Run::new("detect", args, &args.out)?;
    check_eta(args.eta)?;
    let kind: ErrorKind = args.kind.parse()?;
    let r = args.r.unwrap_or_else(|| db_to_r(args.db));
    if !r.is_finite() {
        return Err(Error::InvalidConfig("squeezing must be finite".into()));
    }
    let config = DetectionConfig {
        layers: args.layers,
        r,
        eta: args.eta,
        shots: args.shots,
        seed: args.seed,
        error_mode: args.mode,
    };
    let result = detection_sweep(
        kind,
        &args.magnitudes,
        &args.syndromes,
        &config,
        args.workers,
    )?;
    run.stage("sweep");
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    run.write("detection.csv", &buf)?;
    run.write(
        "detection_fits.json",
        serde_json::to_string_pretty(&result.fits)?.as_bytes(),
    )?;
    run.stage("write");
    run.finish()
}

#[derive(Debug, Clone, Serialize)]
struct BenchReport {
    modes: usize,
    bipartitions: usize,
    workers: usize,
    seconds: f64,
    bipartitions_per_second: f64,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<RunManifest> {
    let mut run = Run::new("bench", args, &args.common.out)?;
    let (_, state) = args.common.state()?;
    run.stage("construct");
    let t = Instant::now();
    let report = full_sweep(state.cov(), args.common.workers)?;
    let seconds = t.elapsed().as_secs_f64();
    run.stage("sweep");
    let workers = if args.common.workers == 0 {
        rayon::current_num_threads()
    } else {
        args.common.workers
    };
    let bench = BenchReport {
        modes: state.mode_count(),
        bipartitions: report.records.len(),
        workers,
        seconds,
        bipartitions_per_second: report.records.len() as f64 / seconds,
    };
    run.write("bench_summary.json", report.summary_json()?.as_bytes())?;
    let text = serde_json::to_string_pretty(&bench)?;
    println!("{text}");
    // Timings vary between runs, so the report is not a digested data file.
    fs::write(args.common.out.join("bench.json"), text)?;
    run.finish()
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        Error::InvalidConfig(_)
        | Error::UnknownSyndrome(_)
        | Error::TooSmall(_)
        | Error::TooManyModes(_)
        | Error::InvalidForm(_)
        | Error::OddModeCount(_)
        | Error::SizeMismatch { .. }
        | Error::IndexOutOfRange { .. }
        | Error::BadMatrix(_) => EXIT_CONFIG,
        Error::NonSymmetric { .. }
        | Error::NotPositiveDefinite
        | Error::ConvergenceFailure
        | Error::SingularBlock { .. }
        | Error::NotUnitary { .. }
        | Error::NotOrthogonal { .. }
        | Error::DegenerateVariance { .. }
        | Error::RankDeficient { .. } => EXIT_NUMERIC,
    }
}

pub fn execute(cli: &Cli) -> Result<RunManifest> {
    match &cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Tomo(a) => cmd_tomo(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        let mut full = vec!["cvcluster".to_string()];
        full.extend(args.iter().map(|s| s.to_string()));
        full.push("--out".into());
        full.push(dir.display().to_string());
        main_with_args(full)
    }

    #[test]
    fn build_writes_expected_shapes() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(dir.path(), &["build", "--graph", "rhg:unit", "--r", "0.7"]),
            0
        );
        let cov = crate::io::load_matrix(&dir.path().join("covariance.csv")).unwrap();
        assert_eq!(cov.shape(), (36, 36));
        let text = fs::read_to_string(dir.path().join("nullifiers.csv")).unwrap();
        assert_eq!(text.lines().count(), 19);
        assert!(dir.path().join("build_manifest.json").exists());
    }

    #[test]
    fn zero_squeezing_is_vacuum() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(dir.path(), &["build", "--graph", "grid:4x5", "--r", "0"]),
            0
        );
        let cov = crate::io::load_matrix(&dir.path().join("covariance.csv")).unwrap();
        assert!((cov - nalgebra::DMatrix::<f64>::identity(40, 40)).amax() < 1e-14);
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(dir.path(), &["build", "--graph", "ring:3"]),
            EXIT_CONFIG
        );
        assert_eq!(run_in(dir.path(), &["build", "--eta", "1.5"]), EXIT_CONFIG);
        assert_eq!(
            run_in(dir.path(), &["detect", "--seed", "1", "--kind", "Y"]),
            EXIT_CONFIG
        );
        assert_eq!(run_in(dir.path(), &["tomo"]), EXIT_CONFIG);
        let missing = dir.path().join("missing.csv");
        let code = run_in(dir.path(), &["verify", "--cov", missing.to_str().unwrap()]);
        assert_eq!(code, EXIT_IO);
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "1,2\n3\n").unwrap();
        assert_eq!(
            run_in(dir.path(), &["verify", "--cov", bad.to_str().unwrap()]),
            EXIT_CONFIG
        );
        let asym = dir.path().join("asym.csv");
        fs::write(&asym, "1,0.5\n0,1\n").unwrap();
        assert_eq!(
            run_in(dir.path(), &["verify", "--cov", asym.to_str().unwrap()]),
            EXIT_NUMERIC
        );
        let indefinite = dir.path().join("indefinite.csv");
        fs::write(&indefinite, "1,0,0,0\n0,-1,0,0\n0,0,1,0\n0,0,0,1\n").unwrap();
        let code = run_in(
            dir.path(),
            &["verify", "--cov", indefinite.to_str().unwrap()],
        );
        assert_eq!(code, EXIT_NUMERIC);
    }

    #[test]
    fn db_default_matches_r() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let r = db_to_r(6.0).to_string();
        assert_eq!(run_in(a.path(), &["build"]), 0);
        assert_eq!(run_in(b.path(), &["build", "--r", &r]), 0);
        let ca = crate::io::load_matrix(&a.path().join("covariance.csv")).unwrap();
        let cb = crate::io::load_matrix(&b.path().join("covariance.csv")).unwrap();
        assert_eq!(ca, cb);
    }

    fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
        csv::Reader::from_path(path)
            .unwrap()
            .records()
            .map(|r| r.unwrap())
            .collect()
    }

    fn json(path: &Path) -> serde_json::Value {
        serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
    }

    #[test]
    fn build_chain_report() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(dir.path(), &["build", "--graph", "chain:20", "--r", "0.7"]),
            0
        );
        let cov = crate::io::load_matrix(&dir.path().join("covariance.csv")).unwrap();
        assert_eq!(cov.shape(), (40, 40));
        let rows = csv_rows(&dir.path().join("nullifiers.csv"));
        assert_eq!(rows.len(), 20);
        for r in rows {
            let ratio: f64 = r[3].parse().unwrap();
            assert!((ratio - (-1.4f64).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn verify_vacuum_has_zero_npt() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(dir.path(), &["verify", "--graph", "grid:2x3", "--r", "0"]),
            0
        );
        let rows = csv_rows(&dir.path().join("witness.csv"));
        assert_eq!(rows.len(), 31);
        for r in rows {
            assert!(r[1].parse::<f64>().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn verify_reads_covariance_files() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(dir.path(), &["build", "--graph", "chain:5", "--r", "0.5"]),
            0
        );
        let cov = dir.path().join("covariance.csv");
        assert_eq!(
            run_in(
                dir.path(),
                &["verify", "--cov", cov.to_str().unwrap(), "--top", "3"]
            ),
            0
        );
        assert_eq!(csv_rows(&dir.path().join("witness.csv")).len(), 3);
        let summary = json(&dir.path().join("witness_summary.json"));
        assert_eq!(summary["bipartitions"], 15);
        assert_eq!(summary["npt_positive"], 15);
    }

    #[test]
    fn detect_x_lights_stars_only() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(
                dir.path(),
                &["detect", "--kind", "X", "--r", "1.2", "--seed", "1"]
            ),
            0
        );
        let fits = json(&dir.path().join("detection_fits.json"));
        let fits = fits.as_array().unwrap();
        let detected: Vec<&str> = fits
            .iter()
            .filter(|f| f["detected"].as_bool().unwrap())
            .map(|f| f["label"].as_str().unwrap())
            .collect();
        assert!(!detected.is_empty());
        assert!(detected.iter().all(|l| l.starts_with('s')));
        for f in fits {
            if f["label"].as_str().unwrap().starts_with('f') {
                assert_eq!(f["analytic_slope"].as_f64().unwrap(), 0.0);
            }
        }
        // Five magnitudes per syndrome.
        assert_eq!(
            csv_rows(&dir.path().join("detection.csv")).len(),
            5 * fits.len()
        );
    }

    #[test]
    fn manifest_digests_match_files() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(
                dir.path(),
                &[
                    "tomo",
                    "--graph",
                    "chain:2",
                    "--seed",
                    "3",
                    "--samples",
                    "500"
                ]
            ),
            0
        );
        let manifest = json(&dir.path().join("tomo_manifest.json"));
        let outputs = manifest["outputs"].as_object().unwrap();
        assert_eq!(outputs.len(), 5);
        for (name, digest) in outputs {
            let bytes = fs::read(dir.path().join(name)).unwrap();
            assert_eq!(digest.as_str().unwrap(), hex_digest(&bytes));
        }
    }
}
