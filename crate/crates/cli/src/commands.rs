//! The subcommands, as library functions so that tests can drive them
//! without spawning the binary.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bellnav::bellop::{
    bell_value_finite, brute_force_bell_operator, mixed_transfer_matrix, mpo_expectation, transfer_spectrum,
    OpenMps, SpectrumMethod, BRUTE_FORCE_SITE_LIMIT,
};
use bellnav::geometry::{BlochAngles, MeasurementSettings, SettingPair, SymmetryMode};
use bellnav::indicators::{
    classify_geometry, detect_critical_points, operator_name, susceptibility, sweep, CriticalReport, GeometryReport,
    SweepOptions,
};
use bellnav::linalg::CVec;
use bellnav::models::{FiniteGroundState, GroundStateCache};
use bellnav::optimizer::{optimize_settings, FiniteObjective, OptimizerConfig, UniformObjective};
use bellnav::scalar::creal;
use bellnav::{Angles, Mps, Optimum, Record};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::plot::{angle_plot, indicator_plot};
use crate::table::{append_records, read_records, write_records, TableHeader};
use crate::CliError;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const OPTIMIZE_CSV: &str = "optimize.csv";
pub const INDICATOR_SVG: &str = "indicators.svg";
pub const ANGLE_SVG: &str = "angles.svg";
pub const REPORT_TXT: &str = "report.txt";

/// Angle in units of π with six decimals.
pub fn pi_units(x: f64) -> String {
    format!("{:.6}π", x / PI)
}

fn format_angles(a: &Angles) -> String {
    format!("(θ={}, φ={})", pi_units(a.theta), pi_units(a.phi))
}

fn header(cfg: &RunConfig) -> TableHeader {
    TableHeader { config_hash: cfg.hash(), thresholds: cfg.thresholds.clone(), u: cfg.model.u }
}

fn optimizer_config(cfg: &RunConfig) -> OptimizerConfig {
    OptimizerConfig { workers: cfg.workers, ..cfg.optimizer.clone() }
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))
}

/// Computes or loads the ground state and prints a summary.
pub fn ground_state(cfg: &RunConfig) -> Result<Mps, CliError> {
    cfg.validate()?;
    let cache = GroundStateCache::new(&cfg.cache_dir);
    let (mps, hit) = cache.get_or_compute::<f64>(&cfg.model, &cfg.solver)?;
    println!("model            {}", cfg.model);
    println!("chi              {}", cfg.solver.chi);
    println!("bond dimensions  {:?}", mps.bond_dims());
    println!("energy_per_site  {:.10}", mps.energy_per_site);
    println!("canonical defect {:.3e}", mps.canonical_defect());
    println!("transfer radius  {:.12}", mps.transfer_spectral_radius());
    println!(
        "cache            {} ({})",
        if hit { "hit" } else { "computed" },
        cache.path(&cfg.model, &cfg.solver).display()
    );
    Ok(mps)
}

/// Optimises the settings at a single field value.
pub fn optimize(cfg: &RunConfig, h: f64) -> Result<(Optimum, Record), CliError> {
    cfg.validate()?;
    let spec = cfg.model.with_h(h);
    spec.validate()?;
    let cache = GroundStateCache::new(&cfg.cache_dir);
    let (mps, _) = cache.get_or_compute::<f64>(&spec, &cfg.solver)?;
    let objective = UniformObjective::new(&mps, spec.u);
    let res = optimize_settings(&objective, &optimizer_config(cfg), &[])?;
    let spectrum = transfer_spectrum(&mixed_transfer_matrix(&mps, &res.settings)?, SpectrumMethod::Auto)?;

    println!("model            {spec}");
    println!("mode             {}", res.mode.label());
    println!("lambda1_per_site {:.10}", spectrum.lambda1_per_site);
    println!("lambda2_per_site {:.10}", spectrum.lambda2_per_site);
    println!("gap              {:.10}", spectrum.gap);
    for (k, a) in res.settings.angles().iter().enumerate() {
        println!("{:<16} {}", operator_name(k), format_angles(a));
    }
    let first = res.trace.first().map(|t| t.1).unwrap_or(res.lambda1_per_site);
    println!(
        "ascent           {} iterations, {} -> {:.10}, converged {}",
        res.iterations, format!("{first:.10}"), res.lambda1_per_site, res.converged
    );
    println!("evaluations      {} over {} starts", res.evaluations, res.starts.len());

    let record = Record {
        h,
        j: spec.j,
        lambda1: spectrum.lambda1_per_site,
        lambda2: spectrum.lambda2_per_site,
        gap: spectrum.gap,
        dlambda_dh: f64::NAN,
        reduced: res.reduced_angles.clone(),
        settings: Some(res.settings.clone()),
        mode: res.mode.label(),
        converged: res.converged,
        error: None,
    };
    prepare_out_dir(&cfg.out_dir)?;
    append_records(&cfg.out_dir.join(OPTIMIZE_CSV), &header(cfg), std::slice::from_ref(&record))?;
    Ok((res, record))
}

/// Records of a sweep plus everything derived from them.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub records: Vec<Record>,
    pub critical: CriticalReport,
    pub geometry: GeometryReport,
}

impl SweepOutcome {
    pub fn from_records(mut records: Vec<Record>, cfg: &RunConfig) -> Result<Self, CliError> {
        susceptibility(&mut records)?;
        Ok(Self::analyse(records, cfg))
    }

    fn analyse(records: Vec<Record>, cfg: &RunConfig) -> Self {
        let critical = detect_critical_points(&records, &cfg.thresholds);
        let geometry = classify_geometry(&records, cfg.thresholds.tau_lock, cfg.thresholds.tau_jump);
        Self { records, critical, geometry }
    }

    pub fn converged(&self) -> bool {
        self.records.iter().all(|r| r.converged && r.error.is_none())
    }

    pub fn critical_fields(&self) -> Vec<f64> {
        self.critical.points.iter().map(|p| p.h).collect()
    }

    /// Human-readable report of the detected transitions and angle behaviour.
    pub fn report(&self, cfg: &RunConfig) -> String {
        let mut out = String::new();
        let t = &cfg.thresholds;
        let _ = writeln!(out, "config_hash {}", cfg.hash());
        let _ = writeln!(
            out,
            "thresholds  prominence {} gap_depth {} tau_lock {} tau_jump {}",
            t.prominence, t.gap_depth, t.tau_lock, t.tau_jump
        );
        let failed = self.records.iter().filter(|r| r.error.is_some()).count();
        let unconverged = self.records.iter().filter(|r| !r.converged).count();
        let _ = writeln!(
            out,
            "points      {} ({} not converged, {} failed)",
            self.records.len(),
            unconverged,
            failed
        );
        let c = &self.critical;
        if let Some((h, v)) = c.susceptibility_peak {
            let _ = writeln!(out, "max |dλ1/dh| {v:.6} at h = {h:.4}");
        }
        if let Some((h, v)) = c.gap_minimum {
            let _ = writeln!(out, "min gap      {v:.6} at h = {h:.4} (median {:.6})", c.median_gap);
        }
        let _ = writeln!(out, "\ncritical points: {}", c.points.len());
        for p in &c.points {
            let methods: Vec<String> = p.methods.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(
                out,
                "  h = {:.4}  [{}]  methods agree: {}",
                p.h,
                methods.join(", "),
                if p.agreement { "yes" } else { "no" }
            );
        }
        let _ = writeln!(out, "\ngeometry:");
        for a in &self.geometry.angles {
            let jumps: Vec<String> = a.jumps.iter().map(|h| format!("{h:.4}")).collect();
            let _ = writeln!(
                out,
                "  {:<10} {:<8} max drift {:.4} rad  max step {:.4} rad  jumps [{}]",
                a.name,
                a.verdict.to_string(),
                a.max_drift,
                a.max_step,
                jumps.join(", ")
            );
        }
        out
    }

    fn write_outputs(&self, cfg: &RunConfig) -> Result<(), CliError> {
        let dir = &cfg.out_dir;
        write_records(&dir.join(SWEEP_CSV), &header(cfg), &self.records)?;
        self.write_plots(dir)?;
        fs::write(dir.join(REPORT_TXT), self.report(cfg))?;
        Ok(())
    }

    fn write_plots(&self, dir: &Path) -> Result<(), CliError> {
        fs::write(dir.join(INDICATOR_SVG), indicator_plot(&self.records, &self.critical_fields()))?;
        fs::write(dir.join(ANGLE_SVG), angle_plot(&self.records, &self.geometry.jump_locations))?;
        Ok(())
    }
}

/// Runs the sweep described by the configuration without writing files.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome, CliError> {
    cfg.validate()?;
    let h_values = cfg.sweep.values()?;
    if h_values.len() < 3 {
        return Err(CliError::Config(format!(
            "the sweep grid has {} points; at least 3 are needed",
            h_values.len()
        )));
    }
    let opts = SweepOptions { solver: cfg.solver.clone(), warm_start: cfg.warm_start, workers: cfg.workers };
    let cache = GroundStateCache::new(&cfg.cache_dir);
    let optimizer = if cfg.warm_start { optimizer_config(cfg) } else { cfg.optimizer.clone() };
    let records = sweep::<f64>(&cfg.model, &h_values, &opts, &optimizer, Some(&cache))?;
    SweepOutcome::from_records(records, cfg)
}

/// The `sweep` subcommand: records, plots and report. Unconverged points
/// turn into [`CliError::Partial`] after all files are written.
pub fn sweep_command(cfg: &RunConfig) -> Result<SweepOutcome, CliError> {
    cfg.validate()?;
    cfg.sweep.values()?;
    prepare_out_dir(&cfg.out_dir)?;
    let outcome = run_sweep(cfg)?;
    outcome.write_outputs(cfg)?;
    print!("{}", outcome.report(cfg));
    info!("wrote {}", cfg.out_dir.display());
    if !outcome.converged() {
        let bad: Vec<String> = outcome
            .records
            .iter()
            .filter(|r| !r.converged || r.error.is_some())
            .map(|r| format!("{:.4}", r.h))
            .collect();
        return Err(CliError::Partial(format!("unconverged points at h = {}", bad.join(", "))));
    }
    Ok(outcome)
}

/// Re-renders the plots from an existing records file.
pub fn plot_command(cfg: &RunConfig, input: Option<&Path>) -> Result<SweepOutcome, CliError> {
    let path: PathBuf = input.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join(SWEEP_CSV));
    let (header, records) = read_records(&path)?;
    if records.is_empty() {
        return Err(CliError::Config(format!("{} holds no records", path.display())));
    }
    let mut cfg = cfg.clone();
    cfg.thresholds = header.thresholds;
    let outcome = SweepOutcome::analyse(records, &cfg);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    outcome.write_plots(dir)?;
    println!("wrote {} and {} in {}", INDICATOR_SVG, ANGLE_SVG, dir.display());
    Ok(outcome)
}

/// Maximum deviations found by the oracle battery.
#[derive(Clone, Debug, Default)]
pub struct OracleReport {
    pub n_sites: usize,
    pub cases: usize,
    /// Largest |MPO − dense| over the random cases.
    pub mpo_vs_dense: f64,
    /// Largest |vector recursion − dense|.
    pub recursion_vs_dense: f64,
    /// Largest |⟨F_N⟩| over random product states.
    pub product_max: f64,
    pub chsh: f64,
    pub mermin: f64,
    pub failures: Vec<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const SATURATION_TOL: f64 = 1e-6;

fn random_settings(n: usize, rng: &mut impl Rng) -> MeasurementSettings<f64> {
    let mut draw = || BlochAngles::wrapped(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)).vector();
    let pairs = (0..n).map(|_| SettingPair { a: draw(), a_prime: draw() }).collect();
    MeasurementSettings::new(pairs).expect("non-empty settings")
}

fn describe_settings(s: &MeasurementSettings<f64>) -> String {
    s.angles().iter().map(|a| format!("({:?},{:?})", a.theta, a.phi)).collect::<Vec<_>>().join(" ")
}

fn normalised(psi: CVec<f64>) -> CVec<f64> {
    let n = psi.norm();
    psi / creal(n)
}

fn dense_value(psi: &CVec<f64>, settings: &MeasurementSettings<f64>, n: usize) -> Result<f64, CliError> {
    let f = brute_force_bell_operator(settings, n)?;
    Ok(psi.dotc(&(&f * psi)).re)
}

fn finite_state(psi: CVec<f64>, n: usize) -> FiniteGroundState<f64> {
    FiniteGroundState { n_sites: n, state: psi, energy: 0.0 }
}

fn saturation(state: FiniteGroundState<f64>, u: usize) -> Result<f64, CliError> {
    let objective = FiniteObjective::new(&state, u)?;
    let config =
        OptimizerConfig { mode: SymmetryMode::free(), grid_resolution: 8, grid_budget: 512, ..Default::default() };
    Ok(optimize_settings(&objective, &config, &[])?.lambda1_per_site)
}

/// Cross-checks the Bell-operator contractions against dense matrices.
/// Case `i` draws from a generator seeded with `run.seed + i`, so a failing
/// case can be replayed on its own.
pub fn oracle_battery(cfg: &RunConfig, n_sites: usize) -> Result<OracleReport, CliError> {
    cfg.validate()?;
    if n_sites < 2 || n_sites > BRUTE_FORCE_SITE_LIMIT {
        return Err(CliError::Config(format!(
            "oracle.n_sites = {n_sites} outside 2..={BRUTE_FORCE_SITE_LIMIT}"
        )));
    }
    let mut report = OracleReport { n_sites, cases: cfg.oracle.cases, ..Default::default() };
    for i in 0..cfg.oracle.cases {
        let seed = cfg.seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chi = rng.gen_range(1..=cfg.oracle.chi);
        let mps = OpenMps::<f64>::random(n_sites, chi, &mut rng);
        let settings = random_settings(n_sites, &mut rng);
        let psi = normalised(mps.to_dense());
        let dense = dense_value(&psi, &settings, n_sites)?;
        let mpo = mpo_expectation(&mps, &settings);
        let recursion = bell_value_finite(&finite_state(psi, n_sites), &settings)?;
        let dev = (mpo.re - dense).abs().max(mpo.im.abs());
        report.mpo_vs_dense = report.mpo_vs_dense.max(dev);
        report.recursion_vs_dense = report.recursion_vs_dense.max((recursion - dense).abs());
        if dev >= cfg.oracle.tol || (recursion - dense).abs() >= cfg.oracle.tol {
            report.failures.push(format!(
                "equivalence case {i}: seed {seed}, chi {chi}, dense {dense:?}, mpo {:?}{:+?}i, recursion {recursion:?}, settings {}",
                mpo.re,
                mpo.im,
                describe_settings(&settings)
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000_0000);
        let product = OpenMps::<f64>::random_product(n_sites, &mut rng);
        let settings = random_settings(n_sites, &mut rng);
        let psi = normalised(product.to_dense());
        let value = dense_value(&psi, &settings, n_sites)?.abs();
        report.product_max = report.product_max.max(value);
        if value > 1.0 + cfg.oracle.tol {
            report.failures.push(format!(
                "product bound case {i}: seed {seed}, |<F_N>| = {value:?}, settings {}",
                describe_settings(&settings)
            ));
        }
    }

    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut singlet = CVec::<f64>::zeros(4);
    singlet[1] = creal(r);
    singlet[2] = creal(-r);
    report.chsh = saturation(finite_state(singlet, 2), 2)?;
    if (report.chsh - 2f64.sqrt()).abs() >= SATURATION_TOL {
        report.failures.push(format!("singlet CHSH optimum {:?}, expected sqrt(2)", report.chsh));
    }
    let mut ghz = CVec::<f64>::zeros(8);
    ghz[0] = creal(r);
    ghz[7] = creal(r);
    report.mermin = saturation(finite_state(ghz, 3), 1)?;
    if (report.mermin - 2.0).abs() >= SATURATION_TOL {
        report.failures.push(format!("GHZ-3 Mermin optimum {:?}, expected 2", report.mermin));
    }
    Ok(report)
}

/// The `oracle-check` subcommand.
pub fn oracle_command(cfg: &RunConfig, n_sites: usize) -> Result<OracleReport, CliError> {
    let report = oracle_battery(cfg, n_sites)?;
    println!("sites                      {}", report.n_sites);
    println!("random cases               {}", report.cases);
    println!("max |MPO - dense|          {:.3e}", report.mpo_vs_dense);
    println!("max |recursion - dense|    {:.3e}", report.recursion_vs_dense);
    println!("max product |<F_N>|        {:.12}", report.product_max);
    println!("singlet CHSH optimum       {:.10} (sqrt 2 = {:.10})", report.chsh, 2f64.sqrt());
    println!("GHZ-3 Mermin optimum       {:.10}", report.mermin);
    if report.passed() {
        println!("result                     pass");
        Ok(report)
    } else {
        for f in &report.failures {
            eprintln!("FAIL {f}");
        }
        println!("result                     FAIL ({} cases)", report.failures.len());
        Err(CliError::Validation(format!("{} oracle cases failed", report.failures.len())))
    }
}
