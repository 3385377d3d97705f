//! The `eprb` command-line front end.
//!
//! Every subcommand resolves one JSON configuration document (preset, then
//! `--config` file merged over it, then flag overrides), runs the library,
//! and writes CSV tables plus JSON sidecars and a `manifest.json` into
//! `--out`. Outputs depend only on the resolved configuration and seed,
//! never on `--threads`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{
    check_rotational_invariance, default_morph_grid, default_threshold_grid, morph_scan, recommend_threshold,
    single_detector_scan, DEFAULT_DOUBLE_EPSILON, DEFAULT_RV_LIMIT,
};
use crate::error::Error;
use crate::model::{DetectorConfig, SourceConfig};
use crate::runner::{sweep, ExperimentConfig, SweepConfig, SweepResult};
use crate::stats::{
    expectation, fit_visibility, match_probability, measure_chsh, reference_curve, rotational_variance, visibility,
    ChshSettings, CorrelationCurve, CorrelationPoint, ReferenceModel,
};
use crate::timetag::format::{read_stream, write_stream, StreamFormat};
use crate::timetag::{
    coincidence_filter, dead_time_assess, generate_streams, pairs_to_tally, DeadTimeScope, DoublesReport, Side,
    StreamConfig, TagEvent,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Data(_) => EXIT_DATA,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::EmptyGrid(_) | Error::UnorderedGrid { .. } => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "eprb", version, about = "Threshold-detector EPRB Monte Carlo laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON configuration document, merged over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trials per grid point.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Parameter regime; defaults to `quantum`.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-detector threshold scan and recommended threshold.
    Calibrate,
    /// Correlation sweep over station-B angles.
    Sweep,
    /// Morph scan over station-B thresholds.
    Morph,
    /// CHSH statistic at the configured settings.
    Chsh,
    /// Rotational invariance check over station-A offsets.
    Invariance,
    /// Reference correlation curves.
    Reference,
    /// Time-tagged stream generation and analysis.
    Tags {
        #[command(subcommand)]
        command: TagsCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum TagsCommand {
    /// Generate side-A and side-B streams.
    Gen {
        #[arg(long, value_enum, default_value = "csv")]
        format: FileFormat,
    },
    /// Analyze stream files (CSV or binary, detected by content).
    Analyze {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 0.5 / 0.5
    Classical,
    /// 0.5 / 0.75
    Quantum,
    /// 0.5 / 0.92
    Superquantum,
    /// 0.3 / 0.7
    Uncalibrated,
}

impl Preset {
    pub fn thresholds(self) -> (f64, f64) {
        match self {
            Self::Classical => (0.5, 0.5),
            Self::Quantum => (0.5, 0.75),
            Self::Superquantum => (0.5, 0.92),
            Self::Uncalibrated => (0.3, 0.7),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub angle_a_deg: f64,
    pub angle_b_grid_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub threshold_grid: Vec<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphSection {
    pub threshold_b_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChshSection {
    pub a_deg: f64,
    pub a_prime_deg: f64,
    pub b_deg: f64,
    pub b_prime_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceSection {
    pub offsets_deg: Vec<f64>,
    pub rv_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagsSection {
    pub pair_rate: f64,
    pub duration: f64,
    pub dead_time: u64,
    pub dark_rate: f64,
    pub jitter_sigma: f64,
    pub dead_time_scope: DeadTimeScope,
    pub angle_a_deg: f64,
    pub angle_b_deg: f64,
    pub doubles_window: u64,
    pub coincidence_window: u64,
    pub dead_time_windows: Vec<u64>,
}

/// The fully resolved configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub station_a: DetectorConfig,
    pub station_b: DetectorConfig,
    pub trials_per_point: u64,
    pub seed: u64,
    pub sweep: SweepSection,
    pub calibration: CalibrationSection,
    pub morph: MorphSection,
    pub chsh: ChshSection,
    pub invariance: InvarianceSection,
    pub reference: ReferenceSection,
    pub tags: TagsSection,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let (ta, tb) = p.thresholds();
        let exp = ExperimentConfig::standard(ta, tb);
        Self {
            source: exp.source,
            station_a: exp.station_a,
            station_b: exp.station_b,
            trials_per_point: exp.trials_per_point,
            seed: exp.seed,
            sweep: SweepSection {
                angle_a_deg: 0.0,
                angle_b_grid_deg: (0..=36).map(|i| 5.0 * i as f64).collect(),
            },
            calibration: CalibrationSection {
                threshold_grid: default_threshold_grid(),
                epsilon: DEFAULT_DOUBLE_EPSILON,
            },
            morph: MorphSection {
                threshold_b_grid: default_morph_grid(),
            },
            chsh: ChshSection {
                a_deg: 0.0,
                a_prime_deg: 45.0,
                b_deg: 22.5,
                b_prime_deg: 67.5,
            },
            invariance: InvarianceSection {
                offsets_deg: vec![0.0, 45.0],
                rv_limit: DEFAULT_RV_LIMIT,
            },
            reference: ReferenceSection { visibility: 1.0 },
            tags: TagsSection {
                pair_rate: 2e5,
                duration: 0.1,
                dead_time: 1000,
                dark_rate: 0.0,
                jitter_sigma: 0.5,
                dead_time_scope: DeadTimeScope::Side,
                angle_a_deg: 0.0,
                angle_b_deg: 30.0,
                doubles_window: 4,
                coincidence_window: 4,
                dead_time_windows: (0..=60).map(|i| 50 * i).collect(),
            },
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            source: self.source,
            station_a: self.station_a,
            station_b: self.station_b,
            trials_per_point: self.trials_per_point,
            seed: self.seed,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            experiment: self.experiment(),
            angle_a: self.sweep.angle_a_deg.to_radians(),
            angle_b_grid: self.sweep.angle_b_grid_deg.iter().map(|d| d.to_radians()).collect(),
        }
    }

    pub fn chsh_settings(&self) -> ChshSettings {
        ChshSettings {
            a: self.chsh.a_deg.to_radians(),
            a_prime: self.chsh.a_prime_deg.to_radians(),
            b: self.chsh.b_deg.to_radians(),
            b_prime: self.chsh.b_prime_deg.to_radians(),
        }
    }

    pub fn stream_config(&self) -> StreamConfig {
        StreamConfig {
            pair_rate: self.tags.pair_rate,
            duration: self.tags.duration,
            dead_time: self.tags.dead_time,
            dark_rate: self.tags.dark_rate,
            jitter_sigma: self.tags.jitter_sigma,
            dead_time_scope: self.tags.dead_time_scope,
            experiment: self.experiment(),
            angle_a: self.tags.angle_a_deg.to_radians(),
            angle_b: self.tags.angle_b_deg.to_radians(),
        }
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Preset, then config file, then flag overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let preset = global.preset.unwrap_or(Preset::Quantum);
    let mut doc = serde_json::to_value(RunConfig::preset(preset)).expect("preset serializes");
    if let Some(path) = &global.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let overlay: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if !overlay.is_object() {
            return Err(CliError::Config("config document must be a JSON object".into()));
        }
        merge(&mut doc, overlay);
    }
    let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = global.trials {
        cfg.trials_per_point = trials;
    }
    cfg.experiment().validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
    pub outputs: Vec<String>,
}

fn timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok());
    let t = match secs {
        Some(s) => chrono::DateTime::from_timestamp(s, 0).unwrap_or_default(),
        None => chrono::Utc::now(),
    };
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Collects output files for one command and writes the manifest last.
struct OutDir {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl OutDir {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(io_err(&path))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(self.create(name)?);
        let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(&r).map_err(err)?;
        }
        w.flush().map_err(io_err(&path))?;
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Data(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))
    }

    fn finish(self, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            config_digest: cfg.digest(),
            seed: cfg.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
            outputs: self.outputs.clone(),
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(io_err(&path))
    }
}

/// Shortest round-trip float formatting.
fn num(x: f64) -> String {
    format!("{x}")
}

/// Degrees rounded to 1e-9 so that grid values print cleanly.
fn deg(rad: f64) -> String {
    let d = (rad.to_degrees() * 1e9).round() / 1e9;
    num(if d == 0.0 { 0.0 } else { d })
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Curve over the grid points that have coincidences.
fn defined_curve(result: &SweepResult) -> Option<CorrelationCurve> {
    let points: Vec<CorrelationPoint> = result
        .points
        .iter()
        .filter_map(|p| CorrelationPoint::from_tally(p.theta, p.tally).ok())
        .collect();
    CorrelationCurve::new(points).ok()
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    let job = || dispatch(&cli.command, &cfg, &cli.global.out);
    match cli.global.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(job),
        None => job(),
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    match cmd {
        Command::Calibrate => cmd_calibrate(cfg, out),
        Command::Sweep => cmd_sweep(cfg, out),
        Command::Morph => cmd_morph(cfg, out),
        Command::Chsh => cmd_chsh(cfg, out),
        Command::Invariance => cmd_invariance(cfg, out),
        Command::Reference => cmd_reference(cfg, out),
        Command::Tags { command: TagsCommand::Gen { format } } => cmd_tags_gen(cfg, *format, out),
        Command::Tags { command: TagsCommand::Analyze { files } } => cmd_tags_analyze(cfg, files, out),
    }
}

pub fn cmd_calibrate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scan = single_detector_scan(
        &cfg.station_a,
        &cfg.source,
        &cfg.calibration.threshold_grid,
        cfg.trials_per_point,
        cfg.seed,
    )?;
    let mut dir = OutDir::new(out)?;
    let rows = scan
        .iter()
        .map(|p| vec![num(p.threshold), num(p.rate_up), num(p.rate_down), num(p.rate_double), num(p.rate_miss)])
        .collect();
    dir.csv(
        "calibration.csv",
        &["threshold", "up_rate", "down_rate", "double_rate", "miss_rate"],
        rows,
    )?;
    let recommended = recommend_threshold(&scan, cfg.calibration.epsilon);
    if let Err(e) = &recommended {
        eprintln!("warning: {e}");
    }
    dir.json(
        "calibration.json",
        &json!({
            "recommended_threshold": recommended.as_ref().ok(),
            "epsilon": cfg.calibration.epsilon,
            "trials": cfg.trials_per_point,
            "miss_rate_observable": false,
        }),
    )?;
    dir.finish("calibrate", cfg)
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let result = sweep(&cfg.sweep_config())?;
    let mut dir = OutDir::new(out)?;
    let mut rows = Vec::with_capacity(result.points.len());
    for p in &result.points {
        let t = p.tally;
        let pm = match_probability(&t).ok();
        if pm.is_none() {
            eprintln!("warning: no coincidences at theta = {} deg", deg(p.theta));
        }
        rows.push(vec![
            deg(p.theta),
            opt(pm),
            opt(pm.map(expectation)),
            t.coincidences.to_string(),
            t.matches.to_string(),
            t.mismatches.to_string(),
            t.singles_up_a.to_string(),
            t.singles_down_a.to_string(),
            t.singles_up_b.to_string(),
            t.singles_down_b.to_string(),
            t.doubles_a.to_string(),
            t.doubles_b.to_string(),
            t.misses_a.to_string(),
            t.misses_b.to_string(),
        ]);
    }
    dir.csv("sweep.csv", &SWEEP_HEADER, rows)?;
    let curve = defined_curve(&result);
    let fit = curve.as_ref().and_then(|c| fit_visibility(c).ok());
    let chsh = match measure_chsh(&cfg.experiment(), cfg.chsh_settings()) {
        Ok(c) => Some(c),
        Err(e) => {
            eprintln!("warning: CHSH undefined: {e}");
            None
        }
    };
    dir.json(
        "sweep.json",
        &json!({
            "visibility_fit": fit.map(|f| f.visibility),
            "visibility_fit_se": fit.map(|f| f.std_error),
            "visibility_extrema": curve.as_ref().and_then(|c| visibility(c).ok()),
            "rotational_variance": curve.as_ref().and_then(|c| rotational_variance(c).ok()),
            "chsh_s": chsh.as_ref().map(|c| c.s),
            "chsh_sigma": chsh.as_ref().map(|c| c.sigma),
            "chsh_e": chsh.as_ref().map(|c| c.e),
            "singles_a": result.total().singles_a(),
            "singles_b": result.total().singles_b(),
        }),
    )?;
    dir.finish("sweep", cfg)
}

pub const SWEEP_HEADER: [&str; 14] = [
    "theta_deg",
    "p_match",
    "e",
    "coincidences",
    "matches",
    "mismatches",
    "singles_up_a",
    "singles_down_a",
    "singles_up_b",
    "singles_down_b",
    "doubles_a",
    "doubles_b",
    "misses_a",
    "misses_b",
];

pub fn cmd_morph(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let points = morph_scan(&cfg.sweep_config(), &cfg.morph.threshold_b_grid)?;
    let mut dir = OutDir::new(out)?;
    let rows = points
        .iter()
        .map(|p| {
            vec![
                num(p.threshold_b),
                num(p.visibility),
                num(p.chsh_s),
                num(p.rotational_variance),
                num(p.singles_ratio),
            ]
        })
        .collect();
    dir.csv(
        "morph.csv",
        &["threshold_b", "visibility", "chsh_s", "rotational_variance", "singles_ratio"],
        rows,
    )?;
    dir.json("morph.json", &points)?;
    dir.finish("morph", cfg)
}

pub fn cmd_chsh(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let r = measure_chsh(&cfg.experiment(), cfg.chsh_settings())?;
    let mut dir = OutDir::new(out)?;
    let names = ["ab", "ab'", "a'b", "a'b'"];
    let rows = r
        .settings
        .pairs()
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            vec![
                names[i].to_string(),
                deg(*a),
                deg(*b),
                num(r.e[i]),
                num(r.e_se[i]),
                r.tallies[i].coincidences.to_string(),
            ]
        })
        .collect();
    dir.csv(
        "chsh.csv",
        &["setting", "angle_a_deg", "angle_b_deg", "e", "e_se", "coincidences"],
        rows,
    )?;
    dir.json(
        "chsh.json",
        &json!({
            "e": r.e,
            "e_se": r.e_se,
            "s": r.s,
            "sigma": r.sigma,
            "violation_sigma": (r.s - 2.0) / r.sigma,
        }),
    )?;
    dir.finish("chsh", cfg)
}

pub fn cmd_invariance(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let offsets: Vec<f64> = cfg.invariance.offsets_deg.iter().map(|d| d.to_radians()).collect();
    let r = check_rotational_invariance(&cfg.sweep_config(), &offsets, cfg.invariance.rv_limit)?;
    let mut dir = OutDir::new(out)?;
    let mut rows = Vec::new();
    let n = r.curves[0].points.len();
    for (k, curve) in r.curves.iter().enumerate().skip(1) {
        for i in 0..n {
            let row = &r.rows[(k - 1) * n + i];
            rows.push(vec![
                deg(row.theta),
                deg(row.offset),
                num(r.curves[0].points[i].p_match),
                num(curve.points[i].p_match),
                num(row.delta_p),
                num(row.sigma),
            ]);
        }
    }
    dir.csv(
        "invariance.csv",
        &["theta_deg", "offset_deg", "p_reference", "p_offset", "delta_p", "sigma"],
        rows,
    )?;
    dir.json(
        "invariance.json",
        &json!({
            "offsets_deg": cfg.invariance.offsets_deg,
            "max_sigma": r.max_sigma,
            "rotational_variance": r.rotational_variance,
            "rv_limit": r.rv_limit,
            "rv_flagged": r.rv_flagged,
        }),
    )?;
    dir.finish("invariance", cfg)
}

pub fn cmd_reference(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid: Vec<f64> = cfg.sweep.angle_b_grid_deg.iter().map(|d| (d - cfg.sweep.angle_a_deg).to_radians()).collect();
    let v = cfg.reference.visibility;
    let curves = [
        reference_curve(ReferenceModel::QmCos2, &grid, v)?,
        reference_curve(ReferenceModel::QmJointHalfCos2, &grid, v)?,
        reference_curve(ReferenceModel::ClassicalTriangle, &grid, v)?,
    ];
    let mut dir = OutDir::new(out)?;
    let rows = (0..grid.len())
        .map(|i| {
            let mut r = vec![deg(grid[i])];
            r.extend(curves.iter().map(|c| num(c.points[i].p_match)));
            r
        })
        .collect();
    dir.csv(
        "reference.csv",
        &["theta_deg", "qm_cos2", "qm_joint_half_cos2", "classical_triangle"],
        rows,
    )?;
    dir.finish("reference", cfg)
}

pub fn cmd_tags_gen(cfg: &RunConfig, format: FileFormat, out: &Path) -> Result<(), CliError> {
    let (a, b) = generate_streams(&cfg.stream_config(), cfg.seed)?;
    let mut dir = OutDir::new(out)?;
    let (ext, fmt) = match format {
        FileFormat::Csv => ("csv", StreamFormat::Csv),
        FileFormat::Bin => ("bin", StreamFormat::Binary),
    };
    for (name, events) in [("stream_a", &a), ("stream_b", &b)] {
        let file = format!("{name}.{ext}");
        let path = dir.dir.join(&file);
        let mut w = dir.create(&file)?;
        write_stream(events, fmt, &mut w)?;
        w.flush().map_err(io_err(&path))?;
    }
    dir.json("tags_gen.json", &json!({ "events_a": a.len(), "events_b": b.len() }))?;
    dir.finish("tags gen", cfg)
}

pub fn cmd_tags_analyze(cfg: &RunConfig, files: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut events: Vec<TagEvent> = Vec::new();
    for path in files {
        let f = File::open(path).map_err(io_err(path))?;
        let stream = read_stream(BufReader::new(f)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        events.extend(stream);
    }
    events.sort_unstable();
    let (a, b): (Vec<TagEvent>, Vec<TagEvent>) = events.iter().partition(|e| e.side == Side::A);
    let t = &cfg.tags;
    let doubles = DoublesReport::measure(&a, &b, t.doubles_window)?;
    let dead_a = dead_time_assess(&a, &t.dead_time_windows, t.dead_time_scope)?;
    let dead_b = dead_time_assess(&b, &t.dead_time_windows, t.dead_time_scope)?;
    let pairs = coincidence_filter(&a, &b, t.coincidence_window)?;
    let tally = pairs_to_tally(&pairs);
    let mut dir = OutDir::new(out)?;
    dir.json(
        "analysis.json",
        &json!({
            "doubles": doubles,
            "dead_time_a": dead_a,
            "dead_time_b": dead_b,
            "recovered_dead_time_a": dead_a.recovered_dead_time(),
            "recovered_dead_time_b": dead_b.recovered_dead_time(),
            "coincidences": {
                "window": t.coincidence_window,
                "pairs": pairs.len(),
                "matches": tally.matches,
                "mismatches": tally.mismatches,
                "p_match": match_probability(&tally).ok(),
            },
        }),
    )?;
    dir.finish("tags analyze", cfg)
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("eprb: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_and_validate() {
        for p in [Preset::Classical, Preset::Quantum, Preset::Superquantum, Preset::Uncalibrated] {
            let cfg = RunConfig::preset(p);
            cfg.experiment().validate().unwrap();
            let (ta, tb) = p.thresholds();
            assert_eq!((cfg.station_a.threshold, cfg.station_b.threshold), (ta, tb));
        }
    }

    #[test]
    fn merge_overrides_nested_keys() {
        let mut base = json!({"a": {"x": 1, "y": 2}, "b": 3});
        merge(&mut base, json!({"a": {"y": 5}}));
        assert_eq!(base, json!({"a": {"x": 1, "y": 5}, "b": 3}));
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = RunConfig::preset(Preset::Quantum);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn degrees_formatting() {
        assert_eq!(deg(5f64.to_radians()), "5");
        assert_eq!(deg(22.5f64.to_radians()), "22.5");
        assert_eq!(deg(-0.0), "0");
    }

    #[test]
    fn library_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::EmptyGrid("x")).exit_code(), EXIT_CONFIG);
        assert_eq!(CliError::from(Error::Unsorted { index: 1 }).exit_code(), EXIT_DATA);
        assert_eq!(CliError::from(Error::Format("x".into())).exit_code(), EXIT_DATA);
    }
}
