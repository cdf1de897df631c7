//! Field sweeps and the quantities read off them: the optimised principal
//! eigenvalue, its spectral gap, the susceptibility `dλ1/dh`, critical-point
//! estimates and the behaviour of the optimal angles.

use std::fmt;

use log::{debug, info, warn};

use crate::bellop::{mixed_transfer_matrix, transfer_spectrum, SpectrumMethod};
use crate::error::{Error, Result};
use crate::geometry::{canonicalize_to_domain, BlochAngles, MeasurementSettings, SettingPair, UnitVector};
use crate::models::{ground_state_umps_with, GroundStateCache, ItebdOptions, ModelSpec, UniformMps};
use crate::optimizer::{angles_to_params, optimize_settings, OptimizerConfig, UniformObjective};
use crate::scalar::{abs, lit, to_f64, Real};

/// One field point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord<T: Real> {
    pub h: T,
    pub j: T,
    pub lambda1: T,
    pub lambda2: T,
    pub gap: T,
    /// Filled by [`susceptibility`]; zero until then.
    pub dlambda_dh: T,
    /// Reduced angles as returned by the optimiser, in its own mode.
    pub reduced: Vec<BlochAngles<T>>,
    /// Full settings of the unit cell, possibly a sign or reflection image
    /// of the optimiser's choice picked for continuity along the sweep;
    /// `None` when the point failed.
    pub settings: Option<MeasurementSettings<T>>,
    /// Label of the symmetry mode the optimum belongs to.
    pub mode: String,
    pub converged: bool,
    pub error: Option<String>,
}

impl<T: Real> SweepRecord<T> {
    fn failed(h: f64, j: f64, message: String) -> Self {
        let nan = lit::<T>(f64::NAN);
        Self {
            h: lit(h),
            j: lit(j),
            lambda1: nan,
            lambda2: nan,
            gap: nan,
            dlambda_dh: nan,
            reduced: Vec::new(),
            settings: None,
            mode: String::new(),
            converged: false,
            error: Some(message),
        }
    }

    /// `θ, φ` of every operator, site-major (`a_1, a'_1, a_2, …`).
    pub fn operator_angles(&self) -> Vec<BlochAngles<T>> {
        self.settings.as_ref().map(|s| s.angles()).unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub solver: ItebdOptions,
    /// Seed each point's optimisation from the previous optimum.
    pub warm_start: bool,
    /// Field points processed concurrently when warm starts are off.
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { solver: ItebdOptions::default(), warm_start: true, workers: 1 }
    }
}

/// Checks that a field grid is non-empty and strictly ascending.
pub fn validate_grid(h_values: &[f64]) -> Result<()> {
    if h_values.is_empty() {
        return Err(Error::Config("the field grid is empty".into()));
    }
    if h_values.iter().any(|h| !h.is_finite()) {
        return Err(Error::Config("the field grid holds a non-finite value".into()));
    }
    if h_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("field values must be strictly ascending".into()));
    }
    Ok(())
}

/// `start, start + step, …` up to `stop` inclusive (with a small tolerance
/// against rounding).
pub fn field_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(start < stop) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!("bad field grid start={start} stop={stop} step={step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).map(|h| (h * 1e12).round() / 1e12).collect())
}

fn ground_state<T: Real>(spec: &ModelSpec, solver: &ItebdOptions, cache: Option<&GroundStateCache>) -> Result<UniformMps<T>> {
    match cache {
        Some(c) => Ok(c.get_or_compute(spec, solver)?.0),
        None => ground_state_umps_with(spec, solver),
    }
}

/// Sign and reflection images of a cell's settings: a common `z → −z`
/// and a common `y → −y` on every vector, and independent negation of `a`
/// and `a'` on each site.
fn setting_images<T: Real>(settings: &MeasurementSettings<T>) -> Vec<MeasurementSettings<T>> {
    let u = settings.unit_cell();
    let mut out = Vec::new();
    for reflect in 0..4u32 {
        for signs in 0..(1u32 << (2 * u)) {
            let map = |v: UnitVector<T>, flip: bool| {
                let [x, y, z] = v.components();
                let y = if reflect & 1 == 1 { -y } else { y };
                let z = if reflect & 2 == 2 { -z } else { z };
                let s = if flip { -T::one() } else { T::one() };
                UnitVector { x: s * x, y: s * y, z: s * z }
            };
            let pairs = settings
                .pairs()
                .iter()
                .enumerate()
                .map(|(k, p)| SettingPair {
                    a: map(p.a, signs >> (2 * k) & 1 == 1),
                    a_prime: map(p.a_prime, signs >> (2 * k + 1) & 1 == 1),
                })
                .collect();
            out.push(MeasurementSettings::new(pairs).expect("same cell size"));
        }
    }
    out
}

fn settings_distance<T: Real>(a: &MeasurementSettings<T>, b: &MeasurementSettings<T>) -> T {
    a.pairs().iter().zip(b.pairs()).fold(T::zero(), |acc, (p, q)| {
        let d = |v: &UnitVector<T>, w: &UnitVector<T>| {
            let [x, y, z] = v.components();
            let [a, b, c] = w.components();
            ((x - a) * (x - a) + (y - b) * (y - b) + (z - c) * (z - c)).sqrt()
        };
        acc + d(&p.a, &q.a) + d(&p.a_prime, &q.a_prime)
    })
}

/// Among the sign and reflection images of `settings` whose objective
/// value matches `value` within 1e-9, the one closest to `previous`.
fn continuity_match<T: Real>(
    objective: &UniformObjective<'_, T>,
    settings: &MeasurementSettings<T>,
    value: T,
    previous: &MeasurementSettings<T>,
) -> MeasurementSettings<T> {
    use crate::optimizer::Objective;
    if previous.unit_cell() != settings.unit_cell() {
        return settings.clone();
    }
    let own = settings_distance(settings, previous);
    let mut images: Vec<(T, MeasurementSettings<T>)> = setting_images(settings)
        .into_iter()
        .map(|s| (settings_distance(&s, previous), s))
        .filter(|(d, _)| *d < own - lit(1e-12))
        .collect();
    images.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    images
        .into_iter()
        .find(|(_, s)| objective.evaluate(s).is_ok_and(|ev| abs(ev.value - value) <= lit(1e-9)))
        .map(|(_, s)| s)
        .unwrap_or_else(|| settings.clone())
}

fn sweep_point<T: Real>(
    spec: &ModelSpec,
    opts: &SweepOptions,
    config: &OptimizerConfig,
    cache: Option<&GroundStateCache>,
    previous: Option<&SweepRecord<T>>,
) -> SweepRecord<T> {
    let run = || -> Result<SweepRecord<T>> {
        let mps = ground_state::<T>(spec, &opts.solver, cache)?;
        let objective = UniformObjective::new(&mps, spec.u);
        let warm: Vec<Vec<T>> = previous
            .filter(|p| p.error.is_none())
            .map(|p| vec![angles_to_params(&p.reduced)])
            .unwrap_or_default();
        let result = optimize_settings(&objective, config, &warm)?;
        let mut settings = result.settings.clone();
        if let Some(prev) = previous.filter(|p| p.error.is_none()).and_then(|p| p.settings.as_ref()) {
            settings = continuity_match(&objective, &settings, result.lambda1_per_site, prev);
        }
        let spectrum = transfer_spectrum(&mixed_transfer_matrix(&mps, &settings)?, SpectrumMethod::Auto)?;
        debug!(
            "h={} top spectrum {:?}",
            spec.h,
            spectrum.top.iter().map(|z| to_f64(crate::scalar::modulus(*z))).collect::<Vec<_>>()
        );
        info!(
            "h={:.4} lambda1={:.8} gap={:.6} mode={} evals={}",
            spec.h,
            to_f64(spectrum.lambda1_per_site),
            to_f64(spectrum.gap),
            result.mode.label(),
            result.evaluations
        );
        Ok(SweepRecord {
            h: lit(spec.h),
            j: lit(spec.j),
            lambda1: spectrum.lambda1_per_site,
            lambda2: spectrum.lambda2_per_site,
            gap: spectrum.gap,
            dlambda_dh: T::zero(),
            reduced: result.reduced_angles.clone(),
            settings: Some(settings),
            mode: result.mode.label(),
            converged: result.converged,
            error: None,
        })
    };
    run().unwrap_or_else(|e| {
        warn!("sweep point h={} failed: {e}", spec.h);
        SweepRecord::failed(spec.h, spec.j, e.to_string())
    })
}

/// Optimises the settings at every field value. Failed points are kept as
/// flagged records; the sweep itself only fails on an invalid grid or
/// configuration.
pub fn sweep<T: Real>(
    template: &ModelSpec,
    h_values: &[f64],
    opts: &SweepOptions,
    config: &OptimizerConfig,
    cache: Option<&GroundStateCache>,
) -> Result<Vec<SweepRecord<T>>> {
    validate_grid(h_values)?;
    config.validate()?;
    opts.solver.validate()?;
    let specs: Vec<ModelSpec> = h_values.iter().map(|&h| template.with_h(h)).collect();
    for s in &specs {
        s.validate()?;
    }
    config.mode.validate(template.u)?;
    if opts.warm_start || opts.workers <= 1 {
        let mut out: Vec<SweepRecord<T>> = Vec::with_capacity(specs.len());
        for spec in &specs {
            let prev = if opts.warm_start { out.last() } else { None };
            let rec = sweep_point(spec, opts, config, cache, prev);
            out.push(rec);
        }
        return Ok(out);
    }
    let inner = OptimizerConfig { workers: 1, ..config.clone() };
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<SweepRecord<T>>> = vec![None; specs.len()];
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..opts.workers.min(specs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let rec = sweep_point(&specs[i], opts, &inner, cache, None);
                results.lock().expect("result lock")[i] = Some(rec);
            });
        }
    });
    Ok(slots.into_iter().map(|r| r.expect("every point processed")).collect())
}

/// Fills `dlambda_dh` by central differences (one-sided at the ends).
pub fn susceptibility<T: Real>(records: &mut [SweepRecord<T>]) -> Result<()> {
    let n = records.len();
    if n < 3 {
        return Err(Error::Config("susceptibility needs at least three records".into()));
    }
    let step = records[1].h - records[0].h;
    for w in records.windows(2) {
        let d = w[1].h - w[0].h;
        if !(d > T::zero()) || abs(d - step) > lit::<T>(1e-6) * abs(step) {
            return Err(Error::Config("susceptibility needs a uniform ascending field grid".into()));
        }
    }
    let two = lit::<T>(2.0);
    for i in 0..n {
        let d = if i == 0 {
            (records[1].lambda1 - records[0].lambda1) / step
        } else if i == n - 1 {
            (records[n - 1].lambda1 - records[n - 2].lambda1) / step
        } else {
            (records[i + 1].lambda1 - records[i - 1].lambda1) / (two * step)
        };
        records[i].dlambda_dh = d;
    }
    Ok(())
}

/// Thresholds of the critical-point detector and the geometry classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Thresholds {
    /// Susceptibility peaks need a prominence of this fraction of the
    /// largest `|dλ1/dh|`.
    pub prominence: f64,
    /// Gap minima must fall below this fraction of the median gap.
    pub gap_depth: f64,
    pub tau_lock: f64,
    pub tau_jump: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { prominence: 0.25, gap_depth: 0.1, tau_lock: 0.05, tau_jump: 0.2 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.prominence > 0.0 && self.gap_depth > 0.0) {
            return Err(Error::Config("detector thresholds must be positive".into()));
        }
        if !(self.tau_lock > 0.0 && self.tau_lock < self.tau_jump) {
            return Err(Error::Config("need 0 < tau_lock < tau_jump".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectionMethod {
    Susceptibility,
    Gap,
}

impl fmt::Display for DetectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Susceptibility => "SUSCEPTIBILITY",
            Self::Gap => "GAP",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalEstimate {
    pub h: f64,
    pub method: DetectionMethod,
    /// `|dλ1/dh|` at a susceptibility peak, the gap at a gap minimum.
    pub value: f64,
}

/// Estimates lying within two grid steps of their neighbours, merged into
/// one transition. A cusp in `λ1` shows up as twin susceptibility peaks on
/// either side of it; merging places the transition between them.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalPoint {
    /// Mean susceptibility location when available, otherwise the mean gap
    /// location.
    pub h: f64,
    pub methods: Vec<DetectionMethod>,
    /// Both detectors fired within the merged stretch.
    pub agreement: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CriticalReport {
    pub estimates: Vec<CriticalEstimate>,
    pub points: Vec<CriticalPoint>,
    /// Location and value of the smallest gap in the sweep.
    pub gap_minimum: Option<(f64, f64)>,
    /// Location of the largest `|dλ1/dh|`.
    pub susceptibility_peak: Option<(f64, f64)>,
    pub median_gap: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Interior local maxima of `y` with their topographic prominence. Runs of
/// equal values count once, located at the run's centre.
fn peaks_with_prominence(y: &[f64]) -> Vec<(usize, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        let mut end = i;
        while end + 1 < n && y[end + 1] == y[i] {
            end += 1;
        }
        if end + 1 < n && y[i] > y[i - 1] && y[i] > y[end + 1] {
            let peak = y[i];
            let mut left_min = peak;
            for k in (0..i).rev() {
                if y[k] > peak {
                    break;
                }
                left_min = left_min.min(y[k]);
            }
            let mut right_min = peak;
            for &v in &y[end + 1..] {
                if v > peak {
                    break;
                }
                right_min = right_min.min(v);
            }
            out.push(((i + end) / 2, peak - left_min.max(right_min)));
        }
        i = end + 1;
    }
    out
}

/// Local minima of `y`. Runs of equal values count once, at their centre;
/// a run of two or more points touching an end of the sweep also counts,
/// located at its interior edge.
fn minima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut end = i;
        while end + 1 < n && y[end + 1] == y[i] {
            end += 1;
        }
        let at_start = i == 0;
        let at_end = end + 1 == n;
        let lower_left = at_start || y[i - 1] > y[i];
        let lower_right = at_end || y[end + 1] > y[i];
        if lower_left && lower_right && !(at_start && at_end) {
            if !at_start && !at_end {
                out.push((i + end) / 2);
            } else if end > i {
                out.push(if at_start { end } else { i });
            }
        }
        i = end + 1;
    }
    out
}

/// Susceptibility peaks and gap minima, each tagged with its detector, and
/// the merged list of transitions.
pub fn detect_critical_points<T: Real>(records: &[SweepRecord<T>], thresholds: &Thresholds) -> CriticalReport {
    let good: Vec<&SweepRecord<T>> = records.iter().filter(|r| r.error.is_none()).collect();
    if good.len() < 3 {
        return CriticalReport::default();
    }
    let hs: Vec<f64> = good.iter().map(|r| to_f64(r.h)).collect();
    let chi: Vec<f64> = good.iter().map(|r| to_f64(r.dlambda_dh).abs()).collect();
    let gaps: Vec<f64> = good.iter().map(|r| to_f64(r.gap)).collect();
    let step = (hs[hs.len() - 1] - hs[0]) / (hs.len() - 1) as f64;
    let median_gap = median(gaps.clone());

    let mut estimates = Vec::new();
    let chi_max = chi.iter().cloned().fold(0.0, f64::max);
    if chi_max > 1e-12 {
        for (i, prom) in peaks_with_prominence(&chi) {
            if prom >= thresholds.prominence * chi_max {
                estimates.push(CriticalEstimate { h: hs[i], method: DetectionMethod::Susceptibility, value: chi[i] });
            }
        }
    }
    if median_gap.is_finite() && median_gap > 0.0 {
        for i in minima(&gaps) {
            if gaps[i] < thresholds.gap_depth * median_gap {
                estimates.push(CriticalEstimate { h: hs[i], method: DetectionMethod::Gap, value: gaps[i] });
            }
        }
    }
    estimates.sort_by(|a, b| a.h.total_cmp(&b.h).then((a.method as u8).cmp(&(b.method as u8))));

    let window = 2.0 * step + 1e-9;
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut cluster: Vec<&CriticalEstimate> = Vec::new();
    let flush = |cluster: &mut Vec<&CriticalEstimate>, points: &mut Vec<CriticalPoint>| {
        if cluster.is_empty() {
            return;
        }
        let mean = |m: DetectionMethod| {
            let hs: Vec<f64> = cluster.iter().filter(|e| e.method == m).map(|e| e.h).collect();
            (!hs.is_empty()).then(|| hs.iter().sum::<f64>() / hs.len() as f64)
        };
        let sus = mean(DetectionMethod::Susceptibility);
        let gap = mean(DetectionMethod::Gap);
        let mut methods: Vec<DetectionMethod> = Vec::new();
        for m in [DetectionMethod::Susceptibility, DetectionMethod::Gap] {
            if cluster.iter().any(|e| e.method == m) {
                methods.push(m);
            }
        }
        let h = sus.or(gap).expect("non-empty cluster");
        points.push(CriticalPoint { h: (h * 1e12).round() / 1e12, agreement: methods.len() == 2, methods });
        cluster.clear();
    };
    for e in &estimates {
        if cluster.last().is_some_and(|last| e.h - last.h > window) {
            flush(&mut cluster, &mut points);
        }
        cluster.push(e);
    }
    flush(&mut cluster, &mut points);
    points.sort_by(|a, b| a.h.total_cmp(&b.h));

    let gap_minimum = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &g)| (hs[i], g));
    let susceptibility_peak = chi
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, &c)| (hs[i], c));
    CriticalReport { estimates, points, gap_minimum, susceptibility_peak, median_gap }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngleBehaviour {
    Locked,
    Rotating,
}

impl fmt::Display for AngleBehaviour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Locked => "LOCKED",
            Self::Rotating => "ROTATING",
        })
    }
}

/// Behaviour of one angle trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleTrajectory {
    /// For example `a1.theta` or `a'2.phi`.
    pub name: String,
    pub verdict: AngleBehaviour,
    /// Largest change between adjacent field points, radians.
    pub max_step: f64,
    /// Largest spread of the angle within a stretch free of jumps, radians.
    pub max_drift: f64,
    /// Midpoints of the field intervals with a change above `tau_jump`.
    pub jumps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct GeometryReport {
    pub angles: Vec<AngleTrajectory>,
    /// Union of all jump locations, ascending.
    pub jump_locations: Vec<f64>,
    pub tau_lock: f64,
    pub tau_jump: f64,
}

impl GeometryReport {
    fn all(&self, suffix: &str, verdict: AngleBehaviour) -> bool {
        self.angles.iter().filter(|a| a.name.ends_with(suffix)).all(|a| a.verdict == verdict)
    }

    pub fn all_phi(&self, verdict: AngleBehaviour) -> bool {
        self.all("phi", verdict)
    }

    pub fn all_theta(&self, verdict: AngleBehaviour) -> bool {
        self.all("theta", verdict)
    }

    pub fn any(&self, verdict: AngleBehaviour) -> bool {
        self.angles.iter().any(|a| a.verdict == verdict)
    }
}

const POLE_EXCLUSION: f64 = 1e-3;

/// Name of operator `k` (site-major `a, a'`) of a cell.
pub fn operator_name(k: usize) -> String {
    format!("{}{}", if k % 2 == 0 { "a" } else { "a'" }, k / 2 + 1)
}

fn signed_circular(from: f64, to: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let d = (to - from).rem_euclid(two_pi);
    if d > std::f64::consts::PI {
        d - two_pi
    } else {
        d
    }
}

/// Classifies every `θ` and `φ` trajectory of the optimal operators.
///
/// A change above `tau_jump` between adjacent points is a jump. Between
/// jumps the angle is followed continuously (circularly for `φ`) and its
/// spread is the drift; an angle is LOCKED when every drift stays below
/// `tau_lock`. `φ` is not followed through points within 1e-3 of a pole,
/// where the azimuth is undefined.
pub fn classify_geometry<T: Real>(records: &[SweepRecord<T>], tau_lock: f64, tau_jump: f64) -> GeometryReport {
    let good: Vec<&SweepRecord<T>> = records.iter().filter(|r| r.settings.is_some()).collect();
    let traj: Vec<Vec<(f64, f64)>> = good
        .iter()
        .map(|r| r.operator_angles().iter().map(|a| (to_f64(a.theta), to_f64(a.phi))).collect())
        .collect();
    let n_ops = traj.first().map(|t| t.len()).unwrap_or(0);
    let near_pole = |t: f64| t < POLE_EXCLUSION || t > std::f64::consts::PI - POLE_EXCLUSION;
    let mut angles = Vec::new();
    let mut all_jumps = Vec::new();
    for k in 0..n_ops {
        for is_phi in [false, true] {
            let mut max_step: f64 = 0.0;
            let mut max_drift: f64 = 0.0;
            let mut jumps = Vec::new();
            // Running unwrapped value and its extent within the current stretch.
            let mut stretch: Option<(f64, f64, f64)> = None;
            for i in 0..traj.len() {
                let (t1, p1) = traj[i][k];
                if is_phi && near_pole(t1) {
                    stretch = None;
                    continue;
                }
                let Some((value, lo, hi)) = stretch else {
                    let v = if is_phi { p1 } else { t1 };
                    stretch = Some((v, v, v));
                    continue;
                };
                let (t0, p0) = traj[i - 1][k];
                let d = if is_phi { signed_circular(p0, p1) } else { t1 - t0 };
                max_step = max_step.max(d.abs());
                if d.abs() > tau_jump {
                    let mid = 0.5 * (to_f64(good[i - 1].h) + to_f64(good[i].h));
                    jumps.push(mid);
                    all_jumps.push(mid);
                    let v = if is_phi { p1 } else { t1 };
                    stretch = Some((v, v, v));
                    continue;
                }
                let v = value + d;
                let (lo, hi) = (lo.min(v), hi.max(v));
                max_drift = max_drift.max(hi - lo);
                stretch = Some((v, lo, hi));
            }
            let verdict = if max_drift < tau_lock { AngleBehaviour::Locked } else { AngleBehaviour::Rotating };
            angles.push(AngleTrajectory {
                name: format!("{}.{}", operator_name(k), if is_phi { "phi" } else { "theta" }),
                verdict,
                max_step,
                max_drift,
                jumps,
            });
        }
    }
    all_jumps.sort_by(|a, b| a.total_cmp(b));
    all_jumps.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    GeometryReport { angles, jump_locations: all_jumps, tau_lock, tau_jump }
}

/// `(h, a_site, a'_site)` along the sweep, `site` 1-based.
pub fn bloch_trajectory<T: Real>(
    records: &[SweepRecord<T>],
    site: usize,
) -> Result<Vec<(T, UnitVector<T>, UnitVector<T>)>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let Some(s) = &r.settings else { continue };
        if site == 0 || site > s.unit_cell() {
            return Err(Error::Config(format!("site {site} outside 1..={}", s.unit_cell())));
        }
        let p = s.pairs()[site - 1];
        out.push((r.h, p.a, p.a_prime));
    }
    Ok(out)
}

/// Canonical representative of reduced angles, for reports.
pub fn canonical_reduced<T: Real>(angles: &[BlochAngles<T>]) -> Vec<BlochAngles<T>> {
    angles.iter().copied().map(canonicalize_to_domain).collect()
}
