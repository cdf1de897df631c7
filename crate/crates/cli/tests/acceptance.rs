//! Acceptance run: prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use bellnav::bellop::sector_operator;
use bellnav::geometry::{circular_distance, expand_settings, BlochAngles, MeasurementSettings, SymmetryMode};
use bellnav::indicators::AngleBehaviour;
use bellnav::linalg::{CMat, CVec};
use bellnav::models::{
    build_hamiltonian_dense, build_hamiltonian_sparse, ground_state_ed, ground_state_lanczos, ground_state_umps,
    ModelSpec,
};
use bellnav::optimizer::{
    angles_to_params, gradient, optimize_settings, richardson_gradient, Evaluation, FiniteObjective, Objective,
    OptimizerConfig, UniformObjective,
};
use bellnav::{GroundState, Record};
use bellnav_cli::commands::{oracle_battery, run_sweep, OracleReport, SweepOutcome, SATURATION_TOL};
use bellnav_cli::config::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn load(name: &str) -> RunConfig {
    let mut cfg = RunConfig::from_file(&configs_dir().join(name)).expect("shipped config parses");
    cfg.cache_dir = scratch_dir().join("cache");
    cfg.out_dir = scratch_dir().join("out");
    cfg.workers = workers();
    cfg
}

struct TimedSweep {
    cfg: RunConfig,
    outcome: SweepOutcome,
    seconds: f64,
}

fn timed_sweep(name: &str) -> TimedSweep {
    let cfg = load(name);
    let start = Instant::now();
    let outcome = run_sweep(&cfg).expect("sweep runs");
    TimedSweep { cfg, outcome, seconds: start.elapsed().as_secs_f64() }
}

fn cluster_j0() -> &'static TimedSweep {
    static S: OnceLock<TimedSweep> = OnceLock::new();
    S.get_or_init(|| timed_sweep("cluster_j0.conf"))
}

fn oracle_reports() -> &'static (Vec<OracleReport>, f64) {
    static R: OnceLock<(Vec<OracleReport>, f64)> = OnceLock::new();
    R.get_or_init(|| {
        let mut cfg = RunConfig::default();
        cfg.oracle.cases = 200;
        let start = Instant::now();
        let reports = [4, 6, 8].iter().map(|&n| oracle_battery(&cfg, n).expect("battery runs")).collect();
        (reports, start.elapsed().as_secs_f64())
    })
}

fn criterion_1() -> Verdict {
    let (reports, seconds) = oracle_reports();
    let worst = reports.iter().map(|r| r.mpo_vs_dense.max(r.recursion_vs_dense)).fold(0.0, f64::max);
    let cases: usize = reports.iter().map(|r| r.cases).sum();
    verdict(
        worst < 1e-9 && *seconds < 120.0,
        format!("{cases} cases at N = 4, 6, 8, max deviation {worst:.2e}, {seconds:.1} s"),
    )
}

fn criterion_2() -> Verdict {
    let (reports, _) = oracle_reports();
    let chsh = reports.iter().map(|r| (r.chsh - 2f64.sqrt()).abs()).fold(0.0, f64::max);
    let mermin = reports.iter().map(|r| (r.mermin - 2.0).abs()).fold(0.0, f64::max);
    let product = reports.iter().map(|r| r.product_max).fold(0.0, f64::max);
    verdict(
        chsh < SATURATION_TOL && mermin < SATURATION_TOL && product <= 1.0 + 1e-9,
        format!("CHSH off by {chsh:.1e}, Mermin off by {mermin:.1e}, product states max |<F_N>| {product:.6}"),
    )
}

fn ed_state(spec: &ModelSpec, n: usize) -> GroundState {
    ground_state_ed(&build_hamiltonian_dense::<f64>(spec, n, true).unwrap()).unwrap()
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mps = ground_state_umps::<f64>(&ModelSpec::cluster_ising(0.0, 0.8), 8, 1e-9, 20_000).unwrap();
    let uniform = UniformObjective::new(&mps, 2);
    let gs = ed_state(&ModelSpec::tfim(0.7), 8);
    let finite = FiniteObjective::new(&gs, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = OptimizerConfig::default().fd_step;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (objective, mode): (&dyn Objective<f64>, SymmetryMode) = match i % 3 {
            0 => (&uniform, SymmetryMode::axis_locked(&[2])),
            1 => (&uniform, SymmetryMode::free()),
            _ => (&finite, SymmetryMode::polar_mirror()),
        };
        let dims = 2 * mode.reduced_count(objective.unit_cell());
        let x: Vec<f64> = (0..dims).map(|k| rng.gen_range(0.2..if k % 2 == 0 { PI - 0.2 } else { 2.0 * PI - 0.2 })).collect();
        let g = gradient(objective, &mode, &x, h).unwrap();
        let r = richardson_gradient(objective, &mode, &x, h).unwrap();
        let scale = r.iter().fold(1e-6f64, |m, v| m.max(v.abs()));
        let diff = g.iter().zip(&r).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(diff / scale);
    }
    let mut monotone = true;
    let mut traces = 0;
    for mode in [SymmetryMode::axis_locked(&[2]), SymmetryMode::azimuthal_mirror()] {
        let config = OptimizerConfig { mode, grid_resolution: 16, n_starts: 3, ..OptimizerConfig::default() };
        let res = optimize_settings(&uniform, &config, &[]).unwrap();
        monotone &= res.trace.windows(2).all(|w| w[1].1 >= w[0].1);
        traces += 1;
    }
    let config = OptimizerConfig { grid_resolution: 16, n_starts: 3, ..OptimizerConfig::default() };
    let res = optimize_settings(&finite, &config, &[]).unwrap();
    monotone &= res.trace.windows(2).all(|w| w[1].1 >= w[0].1);
    traces += 1;
    let seconds = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-4 && monotone && seconds < 300.0,
        format!("max relative gradient deviation {worst:.2e} at 20 points, {traces} traces monotone: {monotone}, {seconds:.1} s"),
    )
}

fn exhaustive<O: Objective<f64>>(objective: &O, mode: &SymmetryMode) -> f64 {
    let steps = 64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..steps {
        let theta = PI * i as f64 / (steps - 1) as f64;
        for j in 0..steps {
            let phi = 2.0 * PI * j as f64 / steps as f64;
            let settings = expand_settings(&[BlochAngles::new(theta, phi).unwrap()], mode, objective.unit_cell()).unwrap();
            best = best.max(objective.evaluate(&settings).unwrap().value);
        }
    }
    best
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let config = OptimizerConfig { grid_resolution: 16, n_starts: 2, ..OptimizerConfig::default() };
    let mut worst = f64::INFINITY;
    for case in 0..10 {
        let h = rng.gen_range(0.2..1.6);
        let (spec, u, mode) = match case % 3 {
            0 => (ModelSpec::cluster_ising(rng.gen_range(0.0..0.5), h), 2, SymmetryMode::axis_locked(&[2])),
            1 => (ModelSpec::tfim(h), 1, SymmetryMode::polar_mirror()),
            _ => (ModelSpec::xxz(rng.gen_range(-0.5..0.8), h), 1, SymmetryMode::polar_mirror()),
        };
        let gs = ed_state(&spec, if case % 2 == 0 { 8 } else { 6 });
        let objective = FiniteObjective::new(&gs, u).unwrap();
        let grid = exhaustive(&objective, &mode);
        let res = optimize_settings(&objective, &OptimizerConfig { mode, ..config.clone() }, &[]).unwrap();
        worst = worst.min(res.lambda1_per_site - grid);
    }
    let seconds = start.elapsed().as_secs_f64();
    verdict(
        worst >= -1e-4 && seconds < 600.0,
        format!("min (optimiser - 64x64 grid) {worst:.2e} over 10 ground states, {seconds:.1} s"),
    )
}

fn within(x: Option<(f64, f64)>, target: f64, tol: f64) -> bool {
    x.is_some_and(|(h, _)| (h - target).abs() <= tol + 1e-9)
}

fn criterion_5() -> Verdict {
    let s = cluster_j0();
    let c = &s.outcome.critical;
    let peak = c.susceptibility_peak;
    let gap = c.gap_minimum;
    let depth = gap.map(|(_, g)| g / c.median_gap).unwrap_or(f64::NAN);
    let pass = within(peak, 1.0, 0.02) && within(gap, 1.0, 0.02) && depth < 0.25 && s.seconds < 1800.0;
    verdict(
        pass,
        format!(
            "susceptibility peak at h = {:.2}, gap minimum {:.4} at h = {:.2} ({:.1}% of median), sweep {:.0} s",
            peak.map_or(f64::NAN, |p| p.0),
            gap.map_or(f64::NAN, |g| g.1),
            gap.map_or(f64::NAN, |g| g.0),
            100.0 * depth,
            s.seconds
        ),
    )
}

/// Largest violation of a pair relation on site 1, in radians.
fn relation_error(r: &Record, azimuthal: bool) -> f64 {
    let ang = r.operator_angles();
    let (a, ap) = (ang[0], ang[1]);
    let pole = a.theta.sin() < 1e-3 || ap.theta.sin() < 1e-3;
    if azimuthal {
        let dphi = if pole { 0.0 } else { circular_distance(ap.phi, 2.0 * PI - a.phi) };
        (ap.theta - a.theta).abs().max(dphi)
    } else {
        let dphi = if pole { 0.0 } else { circular_distance(ap.phi, a.phi) };
        (ap.theta - (PI - a.theta)).abs().max(dphi)
    }
}

fn criterion_6() -> Verdict {
    let s = cluster_j0();
    let records = &s.outcome.records;
    let below = records.iter().filter(|r| r.h <= 0.95 + 1e-9).map(|r| relation_error(r, false)).fold(0.0, f64::max);
    let above = records.iter().filter(|r| r.h >= 1.05 - 1e-9).map(|r| relation_error(r, true)).fold(0.0, f64::max);
    let locked = records
        .iter()
        .filter_map(|r| r.settings.as_ref())
        .flat_map(|s| [s.pairs()[1].a, s.pairs()[1].a_prime])
        .map(|v| v.x.abs().max(v.y.abs()))
        .fold(0.0, f64::max);
    verdict(
        below <= 0.05 && above <= 0.05 && locked < 1e-3,
        format!(
            "polar pattern error for h <= 0.95: {below:.3} rad, azimuthal pattern error for h >= 1.05: {above:.3} rad, locked-site transverse part {locked:.1e}"
        ),
    )
}

/// `|<psi| O+ ⊗ O+ ⊗ ... |psi>|^(1/N)` on a ring, the finite-size analogue
/// of the principal transfer eigenvalue.
struct RingSectorObjective<'a> {
    state: &'a GroundState,
    u: usize,
}

fn apply_site(psi: &CVec<f64>, op: &CMat<f64>, site: usize, n: usize) -> CVec<f64> {
    let stride = 1usize << (n - 1 - site);
    let mut out = psi.clone();
    for b in 0..psi.len() {
        if b & stride == 0 {
            let (x0, x1) = (psi[b], psi[b | stride]);
            out[b] = op[(0, 0)] * x0 + op[(0, 1)] * x1;
            out[b | stride] = op[(1, 0)] * x0 + op[(1, 1)] * x1;
        }
    }
    out
}

impl Objective<f64> for RingSectorObjective<'_> {
    fn unit_cell(&self) -> usize {
        self.u
    }

    fn evaluate(&self, settings: &MeasurementSettings<f64>) -> bellnav::Result<Evaluation<f64>> {
        let n = self.state.n_sites;
        let mut v = self.state.state.clone();
        for site in 0..n {
            v = apply_site(&v, &sector_operator(settings.tiled(site)), site, n);
        }
        let value = self.state.state.dotc(&v).norm().powf(1.0 / n as f64);
        Ok(Evaluation { value, gap: None })
    }
}

/// The two most prominent maxima of `|d value / dh|` of the ring oracle.
fn ring_oracle_peaks(cfg: &RunConfig, h_values: &[f64]) -> Vec<f64> {
    let config = OptimizerConfig { workers: workers(), ..cfg.optimizer.clone() };
    let mut values = Vec::with_capacity(h_values.len());
    let mut warm: Vec<Vec<f64>> = Vec::new();
    for &h in h_values {
        let spec = cfg.model.with_h(h);
        let gs = ground_state_lanczos::<f64>(&build_hamiltonian_sparse(&spec, 12).unwrap(), 1e-10).unwrap();
        let objective = RingSectorObjective { state: &gs, u: spec.u };
        let res = optimize_settings(&objective, &config, &warm).unwrap();
        warm = vec![angles_to_params(&res.reduced_angles)];
        values.push(res.lambda1_per_site);
    }
    let n = values.len();
    let slope: Vec<f64> = (0..n)
        .map(|i| {
            let (l, r) = (i.saturating_sub(1), (i + 1).min(n - 1));
            ((values[r] - values[l]) / (h_values[r] - h_values[l])).abs()
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (1..n - 1)
        .filter(|&i| slope[i] > slope[i - 1] && slope[i] >= slope[i + 1])
        .map(|i| (slope[i], h_values[i]))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut top: Vec<f64> = peaks.iter().take(2).map(|p| p.1).collect();
    top.sort_by(f64::total_cmp);
    top
}

fn criterion_7() -> Verdict {
    let s = timed_sweep("cluster_j03.conf");
    let g = &s.outcome.geometry;
    let locked_sites = &s.cfg.optimizer.mode.locked_sites;
    let on_locked = |name: &str| locked_sites.iter().any(|k| name.contains(&format!("{k}.")));
    let phi_locked = g.all_phi(AngleBehaviour::Locked);
    let theta_ok = g
        .angles
        .iter()
        .filter(|a| a.name.ends_with("theta") && !on_locked(&a.name))
        .all(|a| a.verdict == AngleBehaviour::Rotating && a.jumps.is_empty());
    let phi_drift = g.angles.iter().filter(|a| a.name.ends_with("phi")).map(|a| a.max_drift).fold(0.0, f64::max);
    let points = s.outcome.critical_fields();
    let h_values = s.cfg.sweep.values().unwrap();
    let oracle = ring_oracle_peaks(&s.cfg, &h_values);
    let matched = points.len() == 2
        && oracle.len() == 2
        && points.iter().zip(&oracle).all(|(p, o)| (p - o).abs() <= 0.03 + 1e-9);
    verdict(
        phi_locked && theta_ok && matched,
        format!(
            "phi locked: {phi_locked} (max drift {phi_drift:.4} rad), theta rotating without jumps: {theta_ok}, critical points {points:.2?}, N=12 ring peaks {oracle:.2?}"
        ),
    )
}

fn criterion_8() -> Verdict {
    let tfim = timed_sweep("tfim.conf");
    let xxz = timed_sweep("xxz.conf");
    let tfim_locked = tfim.outcome.geometry.all_phi(AngleBehaviour::Locked);
    let xxz_rotating = xxz.outcome.geometry.any(AngleBehaviour::Rotating);
    let rotating: Vec<&str> = xxz
        .outcome
        .geometry
        .angles
        .iter()
        .filter(|a| a.verdict == AngleBehaviour::Rotating)
        .map(|a| a.name.as_str())
        .collect();
    verdict(
        tfim_locked && xxz_rotating,
        format!("TFIM azimuthal angles locked: {tfim_locked}, XXZ rotating angles {rotating:?}"),
    )
}

const SMALL_SWEEP: &str = "\
model.kind = TFIM
sweep.start = 0.6
sweep.stop = 0.8
sweep.step = 0.1
solver.chi = 4
optimizer.mode = POLAR_MIRROR
optimizer.grid_resolution = 8
optimizer.n_starts = 1
";

fn bellnav(dir: &Path, args: &[&str]) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_bellnav"))
        .args(args)
        .current_dir(dir)
        .env_remove("BELLNAV_OUT_DIR")
        .env("RUST_LOG", "error")
        .output()
        .ok()
        .and_then(|o| o.status.code())
}

fn criterion_9() -> Verdict {
    let dir = scratch_dir().join("interfaces");
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("small.conf"), SMALL_SWEEP).unwrap();
    fs::write(dir.join("broken.conf"), "optimizer.etta = 0.1\n").unwrap();
    let run = |out: &str| bellnav(&dir, &["--config", "small.conf", "--cache-dir", "cache", "--out-dir", out, "sweep"]);
    let first = run("a");
    let second = run("b");
    let identical = matches!((fs::read(dir.join("a/sweep.csv")), fs::read(dir.join("b/sweep.csv"))), (Ok(a), Ok(b)) if a == b);
    let codes = [
        first,
        bellnav(&dir, &["--set", "oracle.cases=3", "--set", "oracle.tol=1e-300", "oracle-check", "--n-sites", "4"]),
        bellnav(&dir, &["--config", "small.conf", "--set", "optimizer.max_iters=1", "--cache-dir", "cache", "--out-dir", "p", "sweep"]),
        bellnav(&dir, &["--config", "broken.conf", "sweep"]),
    ];
    let expected = [Some(0), Some(1), Some(2), Some(3)];
    verdict(
        identical && second == Some(0) && codes == expected,
        format!("byte-identical CSV: {identical}, exit codes {codes:?} (expected {expected:?})"),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(usize, fn() -> Verdict); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = Vec::new();
    for (k, check) in criteria {
        if !args.is_empty() && !args.iter().any(|a| a == &k.to_string()) {
            continue;
        }
        let v = check();
        println!("criterion {k}  {}  {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(k);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
