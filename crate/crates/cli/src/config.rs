//! Run configuration: a flat `key = value` file with dotted section names.
//!
//! ```text
//! # J = 0 reference sweep
//! model.kind = CLUSTER_ISING
//! model.J = 0.0
//! sweep.start = 0.5
//! sweep.stop = 1.5
//! sweep.step = 0.01
//! optimizer.mode = AXIS_LOCKED
//! optimizer.locked_sites = 2
//! ```
//!
//! Blank lines and everything after `#` are ignored. Later assignments
//! override earlier ones, and `--set` overrides are applied after the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bellnav::geometry::SymmetryTag;
use bellnav::indicators::{field_grid, Thresholds};
use bellnav::models::{ItebdOptions, ModelKind, ModelSpec};
use bellnav::optimizer::OptimizerConfig;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Environment variable consulted for the output directory when
/// `--out-dir` is not given.
pub const OUT_DIR_ENV: &str = "BELLNAV_OUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if !(self.step > 0.0) {
            return Err(CliError::Config(format!("sweep.step = {} must be positive", self.step)));
        }
        if !(self.start < self.stop) {
            return Err(CliError::Config(format!(
                "sweep.start = {} must be below sweep.stop = {}",
                self.start, self.stop
            )));
        }
        field_grid(self.start, self.stop, self.step).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Settings of the `oracle-check` battery.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub n_sites: usize,
    /// Random cases per suite.
    pub cases: usize,
    /// Largest bond dimension of the random open-chain states.
    pub chi: usize,
    /// Allowed deviation between contractions.
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub sweep: GridSpec,
    pub solver: ItebdOptions,
    pub optimizer: OptimizerConfig,
    pub thresholds: Thresholds,
    pub oracle: OracleConfig,
    pub warm_start: bool,
    pub workers: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
    /// Whether `model.u` was given explicitly; otherwise it follows the kind.
    u_explicit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::cluster_ising(0.0, 0.0),
            sweep: GridSpec { start: 0.5, stop: 1.5, step: 0.01 },
            solver: ItebdOptions::default(),
            optimizer: OptimizerConfig::default(),
            thresholds: Thresholds::default(),
            oracle: OracleConfig { n_sites: 6, cases: 200, chi: 4, tol: 1e-9 },
            warm_start: true,
            workers: 1,
            seed: 0,
            out_dir: PathBuf::from("out"),
            cache_dir: PathBuf::from(".bellnav-cache"),
            u_explicit: false,
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("{key}: cannot parse {value:?} as {what}"))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(bad(key, value, "a finite number")),
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value.parse().map_err(|_| bad(key, value, "a non-negative integer"))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, CliError> {
    value.parse().map_err(|_| bad(key, value, "a non-negative integer"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

fn parse_list<V>(key: &str, value: &str, item: impl Fn(&str, &str) -> Result<V, CliError>) -> Result<Vec<V>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(key, s))
        .collect()
}

/// Splits one line into key and value. `None` for blank and comment lines.
fn split_line(line: &str) -> Option<Result<(&str, &str), String>> {
    let body = line.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return None;
    }
    Some(match body.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(format!("expected `key = value`, found {body:?}")),
    })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            match split_line(line) {
                None => {}
                Some(Ok((k, v))) => self
                    .set(k, v)
                    .map_err(|e| CliError::Config(format!("line {}: {}", n + 1, e.message())))?,
                Some(Err(msg)) => return Err(CliError::Config(format!("line {}: {msg}", n + 1))),
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {assignment:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "model.kind" => {
                self.model.kind = ModelKind::parse(value).ok_or_else(|| bad(key, value, "a model kind"))?;
                if !self.u_explicit {
                    self.model.u = match self.model.kind {
                        ModelKind::ClusterIsing => 2,
                        ModelKind::Tfim | ModelKind::Xxz => 1,
                    };
                }
            }
            "model.J" => self.model.j = parse_f64(key, value)?,
            "model.h" => self.model.h = parse_f64(key, value)?,
            "model.delta" => self.model.delta = parse_f64(key, value)?,
            "model.u" => {
                self.model.u = parse_usize(key, value)?;
                self.u_explicit = true;
            }
            "sweep.start" => self.sweep.start = parse_f64(key, value)?,
            "sweep.stop" => self.sweep.stop = parse_f64(key, value)?,
            "sweep.step" => self.sweep.step = parse_f64(key, value)?,
            "solver.chi" => self.solver.chi = parse_usize(key, value)?,
            "solver.tol" => self.solver.tol = parse_f64(key, value)?,
            "solver.schedule" => self.solver.schedule = parse_list(key, value, parse_f64)?,
            "solver.max_steps" => self.solver.max_steps = parse_usize(key, value)?,
            "solver.check_every" => self.solver.check_every = parse_usize(key, value)?,
            "solver.svd_cutoff" => self.solver.svd_cutoff = parse_f64(key, value)?,
            "solver.seed" => self.solver.seed = parse_u64(key, value)?,
            "optimizer.grid_resolution" => self.optimizer.grid_resolution = parse_usize(key, value)?,
            "optimizer.eta" => self.optimizer.eta = parse_f64(key, value)?,
            "optimizer.fd_step" => self.optimizer.fd_step = parse_f64(key, value)?,
            "optimizer.tol" => self.optimizer.tol = parse_f64(key, value)?,
            "optimizer.max_iters" => self.optimizer.max_iters = parse_usize(key, value)?,
            "optimizer.n_starts" => self.optimizer.n_starts = parse_usize(key, value)?,
            "optimizer.grid_budget" => self.optimizer.grid_budget = parse_usize(key, value)?,
            "optimizer.compare_relations" => self.optimizer.compare_relations = parse_bool(key, value)?,
            "optimizer.mode" => {
                self.optimizer.mode.tag = SymmetryTag::parse(value).ok_or_else(|| bad(key, value, "a symmetry mode"))?;
            }
            "optimizer.locked_sites" => {
                let sites = parse_list(key, value, parse_usize)?;
                self.optimizer.mode = self.optimizer.mode.clone().with_locked(&sites);
            }
            "indicators.prominence" => self.thresholds.prominence = parse_f64(key, value)?,
            "indicators.gap_depth" => self.thresholds.gap_depth = parse_f64(key, value)?,
            "indicators.tau_lock" => self.thresholds.tau_lock = parse_f64(key, value)?,
            "indicators.tau_jump" => self.thresholds.tau_jump = parse_f64(key, value)?,
            "oracle.n_sites" => self.oracle.n_sites = parse_usize(key, value)?,
            "oracle.cases" => self.oracle.cases = parse_usize(key, value)?,
            "oracle.chi" => self.oracle.chi = parse_usize(key, value)?,
            "oracle.tol" => self.oracle.tol = parse_f64(key, value)?,
            "run.warm_start" => self.warm_start = parse_bool(key, value)?,
            "run.workers" => self.workers = parse_usize(key, value)?,
            "run.seed" => self.seed = parse_u64(key, value)?,
            "output.dir" => self.out_dir = PathBuf::from(value),
            "cache.dir" => self.cache_dir = PathBuf::from(value),
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Checks every section; the message names the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: bellnav::Error| CliError::Config(e.to_string());
        self.model.validate().map_err(cfg)?;
        self.solver.validate().map_err(|e| CliError::Config(format!("solver: {e}")))?;
        self.optimizer.validate().map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        self.optimizer
            .mode
            .validate(self.model.u)
            .map_err(|e| CliError::Config(format!("optimizer.locked_sites: {e}")))?;
        self.thresholds.validate().map_err(|e| CliError::Config(format!("indicators: {e}")))?;
        if self.workers == 0 {
            return Err(CliError::Config("run.workers must be at least 1".into()));
        }
        if self.oracle.chi == 0 || self.oracle.cases == 0 || !(self.oracle.tol > 0.0) {
            return Err(CliError::Config("oracle.chi, oracle.cases and oracle.tol must be positive".into()));
        }
        Ok(())
    }

    /// Canonical listing of every setting that influences computed numbers.
    /// Paths and worker counts are left out so that the hash, and with it
    /// the CSV, does not depend on where or how fast a run happens.
    pub fn canonical(&self) -> String {
        let m = &self.model;
        let s = &self.solver;
        let o = &self.optimizer;
        let t = &self.thresholds;
        let join = |v: &[String]| v.join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("model.kind", m.kind.name().into());
        put("model.J", format!("{:?}", m.j));
        put("model.h", format!("{:?}", m.h));
        put("model.delta", format!("{:?}", m.delta));
        put("model.u", m.u.to_string());
        put("sweep.start", format!("{:?}", self.sweep.start));
        put("sweep.stop", format!("{:?}", self.sweep.stop));
        put("sweep.step", format!("{:?}", self.sweep.step));
        put("solver.chi", s.chi.to_string());
        put("solver.tol", format!("{:?}", s.tol));
        put("solver.schedule", join(&s.schedule.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>()));
        put("solver.max_steps", s.max_steps.to_string());
        put("solver.check_every", s.check_every.to_string());
        put("solver.svd_cutoff", format!("{:?}", s.svd_cutoff));
        put("solver.seed", s.seed.to_string());
        put("optimizer.grid_resolution", o.grid_resolution.to_string());
        put("optimizer.eta", format!("{:?}", o.eta));
        put("optimizer.fd_step", format!("{:?}", o.fd_step));
        put("optimizer.tol", format!("{:?}", o.tol));
        put("optimizer.max_iters", o.max_iters.to_string());
        put("optimizer.n_starts", o.n_starts.to_string());
        put("optimizer.grid_budget", o.grid_budget.to_string());
        put("optimizer.compare_relations", o.compare_relations.to_string());
        put("optimizer.mode", o.mode.tag.name().into());
        put(
            "optimizer.locked_sites",
            join(&o.mode.locked_sites.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
        );
        put("indicators.prominence", format!("{:?}", t.prominence));
        put("indicators.gap_depth", format!("{:?}", t.gap_depth));
        put("indicators.tau_lock", format!("{:?}", t.tau_lock));
        put("indicators.tau_jump", format!("{:?}", t.tau_jump));
        put("run.warm_start", self.warm_start.to_string());
        put("run.seed", self.seed.to_string());
        out
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
