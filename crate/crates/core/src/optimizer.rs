//! Hybrid search for optimal measurement settings: a coarse scan of the
//! reduced angle space followed by finite-difference gradient ascent with
//! backtracking.
//!
//! Reduced parameters are kept as a flat vector `[θ_1, φ_1, θ_2, φ_2, …]`,
//! one angle pair per entry of the mode's reduced set (see
//! [`expand_settings`]). Arbitrary real values are accepted and wrapped onto
//! the sphere before evaluation, so ascent steps never leave the domain of
//! the objective.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use log::{debug, info};

use crate::bellop::{bell_expectation_vector, principal_eigenvalue, mixed_transfer_matrix, SpectrumMethod};
use crate::error::{Error, Result};
use crate::geometry::{
    canonicalize_to_domain, expand_settings, BlochAngles, MeasurementSettings, PairRelation,
    SymmetryMode,
};
use crate::models::{FiniteGroundState, UniformMps};
use crate::scalar::{abs, lit, to_f64, Real};

/// Value of the objective at one configuration. `gap` is reported when the
/// objective has a spectral gap (transfer-matrix objectives).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    pub gap: Option<T>,
}

/// Something to maximise over measurement settings.
pub trait Objective<T: Real>: Sync {
    /// Unit-cell size of the settings this objective accepts.
    fn unit_cell(&self) -> usize;

    fn evaluate(&self, settings: &MeasurementSettings<T>) -> Result<Evaluation<T>>;
}

/// Per-site principal eigenvalue of the mixed transfer matrix of an
/// infinite chain.
#[derive(Clone, Debug)]
pub struct UniformObjective<'a, T: Real> {
    pub mps: &'a UniformMps<T>,
    pub u: usize,
    pub method: SpectrumMethod,
}

impl<'a, T: Real> UniformObjective<'a, T> {
    pub fn new(mps: &'a UniformMps<T>, u: usize) -> Self {
        Self { mps, u, method: SpectrumMethod::Auto }
    }
}

impl<T: Real> Objective<T> for UniformObjective<'_, T> {
    fn unit_cell(&self) -> usize {
        self.u
    }

    fn evaluate(&self, settings: &MeasurementSettings<T>) -> Result<Evaluation<T>> {
        let spec = principal_eigenvalue(&mixed_transfer_matrix(self.mps, settings)?, self.method)?;
        Ok(Evaluation { value: spec.lambda1_per_site, gap: Some(spec.gap) })
    }
}

/// `|⟨ψ|F_N|ψ⟩|` on a finite chain.
#[derive(Clone, Debug)]
pub struct FiniteObjective<'a, T: Real> {
    pub state: &'a FiniteGroundState<T>,
    pub u: usize,
}

impl<'a, T: Real> FiniteObjective<'a, T> {
    pub fn new(state: &'a FiniteGroundState<T>, u: usize) -> Result<Self> {
        if u == 0 || state.n_sites % u != 0 {
            return Err(Error::Config(format!(
                "{} sites are not a multiple of the settings cell {u}",
                state.n_sites
            )));
        }
        Ok(Self { state, u })
    }
}

impl<T: Real> Objective<T> for FiniteObjective<'_, T> {
    fn unit_cell(&self) -> usize {
        self.u
    }

    fn evaluate(&self, settings: &MeasurementSettings<T>) -> Result<Evaluation<T>> {
        let v = bell_expectation_vector(&self.state.state, self.state.n_sites, settings);
        Ok(Evaluation { value: crate::scalar::modulus(v), gap: None })
    }
}

/// Settings of the hybrid search.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    /// Points per angle axis of the coarse scan.
    pub grid_resolution: usize,
    /// Ascent step size η.
    pub eta: f64,
    /// Central-difference step, radians.
    pub fd_step: f64,
    /// Stop once an accepted step improves the objective by less than this.
    pub tol: f64,
    pub max_iters: usize,
    /// Number of grid candidates refined by gradient ascent.
    pub n_starts: usize,
    pub mode: SymmetryMode,
    /// Also optimise under the other mirror relation and keep the better one.
    pub compare_relations: bool,
    /// Largest number of scan points; beyond it the tensor grid is replaced
    /// by a Halton sequence of this length.
    pub grid_budget: usize,
    /// Threads used for scan evaluations and independent starts.
    pub workers: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 48,
            eta: 0.05,
            fd_step: 1e-4,
            tol: 1e-8,
            max_iters: 500,
            n_starts: 4,
            mode: SymmetryMode::polar_mirror(),
            compare_relations: false,
            grid_budget: 4096,
            workers: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.eta > 0.0) {
            return bad("optimizer.eta must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("optimizer.tol must be positive");
        }
        if !(self.fd_step > 0.0) {
            return bad("optimizer.fd_step must be positive");
        }
        if self.grid_resolution < 8 {
            return bad("optimizer.grid_resolution must be at least 8");
        }
        if self.n_starts < 1 {
            return bad("optimizer.n_starts must be at least 1");
        }
        if self.max_iters < 1 {
            return bad("optimizer.max_iters must be at least 1");
        }
        if self.grid_budget < 1 {
            return bad("optimizer.grid_budget must be at least 1");
        }
        Ok(())
    }

    /// Number of real parameters for a unit cell of `u` sites.
    pub fn dims(&self, u: usize) -> usize {
        2 * self.mode.reduced_count(u)
    }
}

/// One scan point.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate<T> {
    pub params: Vec<T>,
    pub value: T,
}

/// Outcome of one gradient-ascent run.
#[derive(Clone, Debug, PartialEq)]
pub struct AscentRecord<T> {
    pub start: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Result of an optimisation.
#[derive(Clone, Debug, PartialEq)]
pub struct OptResult<T: Real> {
    pub settings: MeasurementSettings<T>,
    pub reduced_angles: Vec<BlochAngles<T>>,
    pub lambda1_per_site: T,
    /// Gap reported by the objective at the optimum, if it has one.
    pub gap: Option<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, value)` after every accepted step of the winning run.
    pub trace: Vec<(usize, T)>,
    /// The mode the returned settings belong to.
    pub mode: SymmetryMode,
    /// Every refinement that was run, winners and losers.
    pub starts: Vec<AscentRecord<T>>,
    /// Objective evaluations spent, scan included.
    pub evaluations: usize,
}

/// Evaluation counting wrapper around an objective and a mode.
struct Problem<'a, T: Real, O: Objective<T> + ?Sized> {
    objective: &'a O,
    mode: &'a SymmetryMode,
    u: usize,
    count: AtomicUsize,
    _marker: std::marker::PhantomData<T>,
}

impl<'a, T: Real, O: Objective<T> + ?Sized> Problem<'a, T, O> {
    fn new(objective: &'a O, mode: &'a SymmetryMode) -> Result<Self> {
        let u = objective.unit_cell();
        mode.validate(u)?;
        Ok(Self { objective, mode, u, count: AtomicUsize::new(0), _marker: std::marker::PhantomData })
    }

    fn dims(&self) -> usize {
        2 * self.mode.reduced_count(self.u)
    }

    fn settings(&self, params: &[T]) -> Result<MeasurementSettings<T>> {
        expand_settings(&params_to_angles(params), self.mode, self.u)
    }

    fn eval(&self, params: &[T]) -> Result<Evaluation<T>> {
        self.count.fetch_add(1, AtomicOrdering::Relaxed);
        let ev = self.objective.evaluate(&self.settings(params)?)?;
        if !to_f64(ev.value).is_finite() {
            return Err(Error::Numeric("objective returned a non-finite value".into()));
        }
        Ok(ev)
    }

    fn value(&self, params: &[T]) -> Result<T> {
        Ok(self.eval(params)?.value)
    }
}

/// Wraps flat parameters into valid Bloch angles.
pub fn params_to_angles<T: Real>(params: &[T]) -> Vec<BlochAngles<T>> {
    params.chunks(2).map(|c| BlochAngles::wrapped(c[0], c[1])).collect()
}

pub fn angles_to_params<T: Real>(angles: &[BlochAngles<T>]) -> Vec<T> {
    angles.iter().flat_map(|a| [a.theta, a.phi]).collect()
}

fn lexicographic<T: Real>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Descending by value, then lexicographically ascending by parameters.
fn rank<T: Real>(a: &Candidate<T>, b: &Candidate<T>) -> Ordering {
    b.value
        .partial_cmp(&a.value)
        .unwrap_or(Ordering::Equal)
        .then_with(|| lexicographic(&a.params, &b.params))
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut f = inv;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Scan points in parameter space.
///
/// Mirror modes scan the fundamental domain `[0, π/2] × [0, π]` per angle
/// pair (endpoints included). `FREE` mode scans the whole sphere, `θ ∈ [0, π]`
/// and `φ ∈ [0, 2π)`. When `resolution^dims` exceeds `budget`, `budget`
/// Halton points over the same box are used instead.
pub fn scan_points<T: Real>(mode: &SymmetryMode, dims: usize, resolution: usize, budget: usize) -> Vec<Vec<T>> {
    let free = mode.relation() == PairRelation::Free;
    let (theta_max, phi_max) = if free {
        (std::f64::consts::PI, 2.0 * std::f64::consts::PI)
    } else {
        (std::f64::consts::FRAC_PI_2, std::f64::consts::PI)
    };
    let span = |k: usize| if k % 2 == 0 { theta_max } else { phi_max };
    let axis = |k: usize, i: usize| {
        if k % 2 == 1 && free {
            span(k) * i as f64 / resolution as f64
        } else {
            span(k) * i as f64 / (resolution - 1) as f64
        }
    };
    let full = (resolution as f64).powi(dims as i32);
    if full <= budget as f64 {
        let total = resolution.pow(dims as u32);
        (0..total)
            .map(|mut idx| {
                let mut p = vec![T::zero(); dims];
                for k in (0..dims).rev() {
                    p[k] = lit(axis(k, idx % resolution));
                    idx /= resolution;
                }
                p
            })
            .collect()
    } else {
        (1..=budget)
            .map(|i| (0..dims).map(|k| lit(span(k) * radical_inverse(i, PRIMES[k % PRIMES.len()]))).collect())
            .collect()
    }
}

fn parallel_map<I: Sync, R: Send>(items: &[I], workers: usize, f: impl Fn(&I) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn scan<T: Real, O: Objective<T> + ?Sized>(
    problem: &Problem<'_, T, O>,
    config: &OptimizerConfig,
    keep: usize,
) -> Result<Vec<Candidate<T>>> {
    let points = scan_points::<T>(problem.mode, problem.dims(), config.grid_resolution, config.grid_budget);
    let values = parallel_map(&points, config.workers, |p| problem.value(p));
    let mut cands = Vec::with_capacity(points.len());
    for (params, v) in points.into_iter().zip(values) {
        cands.push(Candidate { params, value: v? });
    }
    cands.sort_by(rank);
    cands.truncate(keep);
    Ok(cands)
}

/// Evaluates the objective on the scan grid and returns the best
/// `config.n_starts` candidates, best first.
pub fn grid_scan<T: Real, O: Objective<T> + ?Sized>(objective: &O, config: &OptimizerConfig) -> Result<Vec<Candidate<T>>> {
    config.validate()?;
    let problem = Problem::new(objective, &config.mode)?;
    scan(&problem, config, config.n_starts)
}

/// Central-difference gradient with step `h`.
fn fd_gradient<T: Real, O: Objective<T> + ?Sized>(problem: &Problem<'_, T, O>, x: &[T], h: T) -> Result<Vec<T>> {
    let two_h = h + h;
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = problem.value(&probe)?;
        probe[k] = x[k] - h;
        let down = problem.value(&probe)?;
        probe[k] = x[k];
        g.push((up - down) / two_h);
    }
    Ok(g)
}

/// Central-difference gradient of the objective at flat parameters `x`.
pub fn gradient<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    mode: &SymmetryMode,
    x: &[T],
    h: T,
) -> Result<Vec<T>> {
    fd_gradient(&Problem::new(objective, mode)?, x, h)
}

/// Richardson-extrapolated central difference `(4 D(h/2) − D(h)) / 3`,
/// accurate to fourth order in `h`.
pub fn richardson_gradient<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    mode: &SymmetryMode,
    x: &[T],
    h: T,
) -> Result<Vec<T>> {
    let problem = Problem::new(objective, mode)?;
    let coarse = fd_gradient(&problem, x, h)?;
    let fine = fd_gradient(&problem, x, h * lit(0.5))?;
    let (four, three) = (lit::<T>(4.0), lit::<T>(3.0));
    Ok(fine.iter().zip(&coarse).map(|(&f, &c)| (four * f - c) / three).collect())
}

struct Ascent<T> {
    x: Vec<T>,
    value: T,
    iterations: usize,
    converged: bool,
    trace: Vec<(usize, T)>,
}

const MAX_HALVINGS: usize = 20;
/// The step may grow to this multiple of `eta` along a run of first-try
/// acceptances.
const MAX_GROWTH: f64 = 64.0;

fn ascend<T: Real, O: Objective<T> + ?Sized>(
    problem: &Problem<'_, T, O>,
    start: &[T],
    config: &OptimizerConfig,
) -> Result<Ascent<T>> {
    let mut x = start.to_vec();
    let first = problem.eval(&x)?;
    let mut value = first.value;
    let mut gap = first.gap;
    let mut trace = vec![(0, value)];
    let tol = lit::<T>(config.tol);
    let fd = lit::<T>(config.fd_step);
    let mut converged = false;
    let mut iterations = 0;
    let mut eta = lit::<T>(config.eta);
    let eta_max = lit::<T>(config.eta * MAX_GROWTH);
    while iterations < config.max_iters {
        iterations += 1;
        let h = match gap {
            Some(g) if g < fd * lit(10.0) => fd * lit(0.1),
            _ => fd,
        };
        let grad = fd_gradient(problem, &x, h)?;
        let norm2 = grad.iter().fold(T::zero(), |acc, &g| acc + g * g);
        if norm2 == T::zero() {
            converged = true;
            break;
        }
        let mut step = eta;
        let mut accepted = None;
        for halvings in 0..=MAX_HALVINGS {
            let trial: Vec<T> = x.iter().zip(&grad).map(|(&xi, &gi)| xi + step * gi).collect();
            let ev = problem.eval(&trial)?;
            if ev.value > value {
                accepted = Some((trial, ev, halvings));
                break;
            }
            step *= lit(0.5);
        }
        let Some((trial, ev, halvings)) = accepted else {
            converged = true;
            break;
        };
        eta = if halvings == 0 { (step + step).min(eta_max) } else { step };
        let gain = ev.value - value;
        x = trial;
        value = ev.value;
        gap = ev.gap;
        trace.push((iterations, value));
        if gain < tol {
            converged = true;
            break;
        }
    }
    Ok(Ascent { x, value, iterations, converged, trace })
}

/// Folds every reduced angle pair into the fundamental domain when that
/// leaves the objective unchanged (within 1e-9); otherwise only wraps the
/// angles onto their canonical ranges.
fn canonical_params<T: Real, O: Objective<T> + ?Sized>(
    problem: &Problem<'_, T, O>,
    x: &[T],
    value: T,
) -> Result<(Vec<T>, T, Option<T>)> {
    let wrapped = angles_to_params(&params_to_angles(x));
    let folded: Vec<T> =
        angles_to_params(&params_to_angles(x).into_iter().map(canonicalize_to_domain).collect::<Vec<_>>());
    let ev = problem.eval(&folded)?;
    if abs(ev.value - value) <= lit(1e-9) {
        return Ok((folded, ev.value, ev.gap));
    }
    debug!(
        "domain fold changes the objective by {:e}; keeping unfolded angles",
        to_f64(ev.value - value)
    );
    let ev = problem.eval(&wrapped)?;
    Ok((wrapped, ev.value, ev.gap))
}

fn finish<T: Real, O: Objective<T> + ?Sized>(
    problem: &Problem<'_, T, O>,
    run: Ascent<T>,
    starts: Vec<AscentRecord<T>>,
) -> Result<OptResult<T>> {
    let (params, value, gap) = canonical_params(problem, &run.x, run.value)?;
    let settings = problem.settings(&params)?;
    Ok(OptResult {
        settings,
        reduced_angles: params_to_angles(&params),
        lambda1_per_site: value,
        gap,
        iterations: run.iterations,
        converged: run.converged,
        trace: run.trace,
        mode: problem.mode.clone(),
        starts,
        evaluations: problem.count.load(AtomicOrdering::Relaxed),
    })
}

/// Gradient ascent from `start` (flat reduced parameters).
///
/// Each iteration tries `Θ + s∇f` and halves `s` up to 20 times until the
/// objective increases. `s` starts at `config.eta`, doubles after a step
/// accepted on the first try (up to 64 η) and otherwise carries over the
/// last accepted value.
pub fn gradient_ascent<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    start: &[T],
    config: &OptimizerConfig,
) -> Result<OptResult<T>> {
    config.validate()?;
    let problem = Problem::new(objective, &config.mode)?;
    if start.len() != problem.dims() {
        return Err(Error::Config(format!(
            "mode {} takes {} parameters, got {}",
            config.mode.label(),
            problem.dims(),
            start.len()
        )));
    }
    let run = ascend(&problem, start, config)?;
    let record = AscentRecord { start: start.to_vec(), value: run.value, iterations: run.iterations, converged: run.converged };
    finish(&problem, run, vec![record])
}

fn optimize_mode<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    mode: &SymmetryMode,
    config: &OptimizerConfig,
    extra_starts: &[Vec<T>],
) -> Result<OptResult<T>> {
    let problem = Problem::new(objective, mode)?;
    let dims = problem.dims();
    let mut starts: Vec<Vec<T>> = extra_starts.iter().filter(|s| s.len() == dims).cloned().collect();
    starts.extend(scan(&problem, config, config.n_starts)?.into_iter().map(|c| c.params));
    let runs = parallel_map(&starts, config.workers, |s| ascend(&problem, s, config));
    let mut best: Option<Ascent<T>> = None;
    let mut records = Vec::with_capacity(runs.len());
    for (start, run) in starts.iter().zip(runs) {
        let run = run?;
        records.push(AscentRecord { start: start.clone(), value: run.value, iterations: run.iterations, converged: run.converged });
        let better = match &best {
            None => true,
            Some(b) => {
                run.value > b.value
                    || (run.value == b.value
                        && lexicographic(&angles_to_params(&params_to_angles(&run.x)), &angles_to_params(&params_to_angles(&b.x)))
                            == Ordering::Less)
            }
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    finish(&problem, best, records)
}

/// Grid scan, then gradient ascent from the best candidates (and from any
/// `warm_starts`), returning the best refinement.
///
/// With `compare_relations`, the mirror-partner mode is optimised as well
/// and wins only if it is better by more than a relative 1e-9.
pub fn optimize_settings<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    config: &OptimizerConfig,
    warm_starts: &[Vec<T>],
) -> Result<OptResult<T>> {
    config.validate()?;
    let primary = optimize_mode(objective, &config.mode, config, warm_starts)?;
    let partner = match config.mode.mirror_partner() {
        Some(m) if config.compare_relations => m,
        _ => return Ok(primary),
    };
    let other = optimize_mode(objective, &partner, config, warm_starts)?;
    let margin = lit::<T>(1e-9) * (T::one() + abs(primary.lambda1_per_site));
    let evaluations = primary.evaluations + other.evaluations;
    let mut chosen = if other.lambda1_per_site > primary.lambda1_per_site + margin {
        info!(
            "{} beats {} ({} vs {})",
            partner.label(),
            config.mode.label(),
            to_f64(other.lambda1_per_site),
            to_f64(primary.lambda1_per_site)
        );
        other
    } else {
        primary
    };
    chosen.evaluations = evaluations;
    Ok(chosen)
}
