//! Bloch-sphere parameterisation of measurement directions, the symmetry
//! relations that generate a site's second setting from its first, and the
//! folding of reduced angles into the fundamental domain
//! `[0, π/2] × [0, π]`.
//!
//! Site indices in [`SymmetryMode::locked_sites`] are 1-based, matching the
//! way unit-cell sites are named in reports ("site 2").

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{abs, lit, Real};

/// Polar and azimuthal angle of a measurement direction, in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochAngles<T> {
    pub theta: T,
    pub phi: T,
}

impl<T: Real> BlochAngles<T> {
    /// Checked constructor: `0 ≤ θ ≤ π`, `0 ≤ φ < 2π`. Applies the pole
    /// convention (φ stored as 0 when θ is 0 or π).
    pub fn new(theta: T, phi: T) -> Result<Self> {
        check_range(theta, phi)?;
        Ok(Self::pole_fixed(theta, phi))
    }

    /// Maps any pair of reals onto the canonical ranges without changing
    /// the direction they describe.
    pub fn wrapped(theta: T, phi: T) -> Self {
        let two_pi = T::two_pi();
        let mut t = rem_euclid(theta, two_pi);
        let mut p = phi;
        if t > T::pi() {
            t = two_pi - t;
            p += T::pi();
        }
        Self::pole_fixed(t, rem_euclid(p, two_pi))
    }

    fn pole_fixed(theta: T, phi: T) -> Self {
        if theta == T::zero() || theta == T::pi() {
            Self { theta, phi: T::zero() }
        } else {
            Self { theta, phi }
        }
    }

    /// Cartesian direction, computed without range checks.
    pub fn vector(&self) -> UnitVector<T> {
        let (st, ct) = (self.theta.sin(), self.theta.cos());
        UnitVector {
            x: st * self.phi.cos(),
            y: st * self.phi.sin(),
            z: ct,
        }
    }
}

impl<T: Real> fmt::Display for BlochAngles<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pi = std::f64::consts::PI;
        write!(
            f,
            "(θ={:.6}π, φ={:.6}π)",
            crate::scalar::to_f64(self.theta) / pi,
            crate::scalar::to_f64(self.phi) / pi
        )
    }
}

fn rem_euclid<T: Real>(x: T, m: T) -> T {
    let r = x - (x / m).floor() * m;
    if r >= m || r < T::zero() {
        T::zero()
    } else {
        r
    }
}

fn unit_tol<T: Real>() -> T {
    lit::<T>(1e-9).max(T::default_epsilon() * lit(64.0))
}

fn check_range<T: Real>(theta: T, phi: T) -> Result<()> {
    if !(theta >= T::zero() && theta <= T::pi()) {
        return Err(Error::Domain(format!(
            "polar angle {} outside [0, π]",
            crate::scalar::to_f64(theta)
        )));
    }
    if !(phi >= T::zero() && phi < T::two_pi()) {
        return Err(Error::Domain(format!(
            "azimuthal angle {} outside [0, 2π)",
            crate::scalar::to_f64(phi)
        )));
    }
    Ok(())
}

/// A direction on the Bloch sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> UnitVector<T> {
    /// Accepts components whose norm is 1 within 1e-9 and renormalises them.
    pub fn new(x: T, y: T, z: T) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(abs(n - T::one()) <= unit_tol::<T>()) {
            return Err(Error::Domain(format!(
                "vector norm {} is not 1",
                crate::scalar::to_f64(n)
            )));
        }
        Ok(Self { x: x / n, y: y / n, z: z / n })
    }

    pub fn z_axis() -> Self {
        Self { x: T::zero(), y: T::zero(), z: T::one() }
    }

    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn neg(&self) -> Self {
        Self { x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn components(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }
}

/// `[sinθ cosφ, sinθ sinφ, cosθ]`, rejecting out-of-range angles.
pub fn angles_to_vector<T: Real>(angles: BlochAngles<T>) -> Result<UnitVector<T>> {
    check_range(angles.theta, angles.phi)?;
    Ok(angles.vector())
}

/// Inverse of [`angles_to_vector`] with φ in `[0, 2π)` and the pole convention.
pub fn vector_to_angles<T: Real>(v: UnitVector<T>) -> Result<BlochAngles<T>> {
    let n = v.norm();
    if !(abs(n - T::one()) <= unit_tol::<T>()) {
        return Err(Error::Domain(format!(
            "vector norm {} is not 1",
            crate::scalar::to_f64(n)
        )));
    }
    let (x, y, z) = (v.x / n, v.y / n, v.z / n);
    let rho = (x * x + y * y).sqrt();
    let theta = rho.atan2(z);
    if rho == T::zero() {
        return Ok(BlochAngles { theta, phi: T::zero() });
    }
    let mut phi = y.atan2(x);
    if phi < T::zero() {
        phi += T::two_pi();
    }
    if phi >= T::two_pi() {
        phi = T::zero();
    }
    Ok(BlochAngles::pole_fixed(theta, phi))
}

/// Circular distance between two azimuthal angles, in `[0, π]`.
pub fn circular_distance<T: Real>(a: T, b: T) -> T {
    let d = abs(rem_euclid(a, T::two_pi()) - rem_euclid(b, T::two_pi()));
    d.min(T::two_pi() - d)
}

/// Fold a direction into the fundamental domain `0 ≤ θ ≤ π/2, 0 ≤ φ ≤ π`
/// using `θ → π − θ` and `φ → 2π − φ`.
pub fn canonicalize_to_domain<T: Real>(angles: BlochAngles<T>) -> BlochAngles<T> {
    let a = BlochAngles::wrapped(angles.theta, angles.phi);
    let theta = if a.theta > T::frac_pi_2() { T::pi() - a.theta } else { a.theta };
    let phi = if a.phi > T::pi() { T::two_pi() - a.phi } else { a.phi };
    BlochAngles::pole_fixed(theta, phi)
}

pub fn in_domain<T: Real>(angles: &BlochAngles<T>) -> bool {
    angles.theta >= T::zero()
        && angles.theta <= T::frac_pi_2()
        && angles.phi >= T::zero()
        && angles.phi <= T::pi()
}

/// The two settings `(a, a')` measured on one site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SettingPair<T> {
    pub a: UnitVector<T>,
    pub a_prime: UnitVector<T>,
}

/// Two settings for every site of a unit cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSettings<T> {
    pairs: Vec<SettingPair<T>>,
}

impl<T: Real> MeasurementSettings<T> {
    pub fn new(pairs: Vec<SettingPair<T>>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Config("measurement settings need at least one site".into()));
        }
        for p in &pairs {
            for v in [p.a, p.a_prime] {
                if !(abs(v.norm() - T::one()) <= unit_tol::<T>()) {
                    return Err(Error::Domain("setting is not a unit vector".into()));
                }
            }
        }
        Ok(Self { pairs })
    }

    /// The same pair on every one of `u` sites.
    pub fn uniform(pair: SettingPair<T>, u: usize) -> Self {
        Self { pairs: vec![pair; u.max(1)] }
    }

    pub fn pairs(&self) -> &[SettingPair<T>] {
        &self.pairs
    }

    pub fn unit_cell(&self) -> usize {
        self.pairs.len()
    }

    /// Pair acting on physical site `i` (0-based) of a chain tiled with this cell.
    pub fn tiled(&self, i: usize) -> &SettingPair<T> {
        &self.pairs[i % self.pairs.len()]
    }

    /// `a, a'` of every site as Bloch angles, site-major.
    pub fn angles(&self) -> Vec<BlochAngles<T>> {
        self.pairs
            .iter()
            .flat_map(|p| [p.a, p.a_prime])
            .map(|v| vector_to_angles(v).unwrap_or(BlochAngles { theta: T::zero(), phi: T::zero() }))
            .collect()
    }
}

/// How a site's second setting is generated from its first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairRelation {
    /// Both settings are independent parameters.
    Free,
    /// `θ' = π − θ`, `φ' = φ`: shared transverse part, opposite z.
    PolarMirror,
    /// `θ' = θ`, `φ' = 2π − φ`: shared z, opposite y.
    AzimuthalMirror,
}

impl PairRelation {
    /// The other mirror relation; `Free` maps to itself.
    pub fn mirror_partner(&self) -> Self {
        match self {
            Self::PolarMirror => Self::AzimuthalMirror,
            Self::AzimuthalMirror => Self::PolarMirror,
            Self::Free => Self::Free,
        }
    }
}

fn partner_angles<T: Real>(rel: PairRelation, a: BlochAngles<T>) -> Option<BlochAngles<T>> {
    match rel {
        PairRelation::Free => None,
        PairRelation::PolarMirror => Some(BlochAngles::wrapped(T::pi() - a.theta, a.phi)),
        PairRelation::AzimuthalMirror => Some(BlochAngles::wrapped(a.theta, T::two_pi() - a.phi)),
    }
}

/// Tag naming the symmetry family, as used in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SymmetryTag {
    Free,
    PolarMirror,
    AzimuthalMirror,
    AxisLocked,
}

impl SymmetryTag {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Free => "FREE",
            Self::PolarMirror => "POLAR_MIRROR",
            Self::AzimuthalMirror => "AZIMUTHAL_MIRROR",
            Self::AxisLocked => "AXIS_LOCKED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FREE" => Some(Self::Free),
            "POLAR_MIRROR" => Some(Self::PolarMirror),
            "AZIMUTHAL_MIRROR" => Some(Self::AzimuthalMirror),
            "AXIS_LOCKED" => Some(Self::AxisLocked),
            _ => None,
        }
    }
}

/// A symmetry constraint on the settings of a unit cell.
///
/// `AXIS_LOCKED` pins the listed sites to the z-axis and relates the
/// settings of every other site by the polar mirror. Locked sites may also
/// be combined with the other tags.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymmetryMode {
    pub tag: SymmetryTag,
    pub locked_sites: Vec<usize>,
}

impl SymmetryMode {
    pub fn free() -> Self {
        Self { tag: SymmetryTag::Free, locked_sites: Vec::new() }
    }

    pub fn polar_mirror() -> Self {
        Self { tag: SymmetryTag::PolarMirror, locked_sites: Vec::new() }
    }

    pub fn azimuthal_mirror() -> Self {
        Self { tag: SymmetryTag::AzimuthalMirror, locked_sites: Vec::new() }
    }

    pub fn axis_locked(sites: &[usize]) -> Self {
        let mut s = sites.to_vec();
        s.sort_unstable();
        s.dedup();
        Self { tag: SymmetryTag::AxisLocked, locked_sites: s }
    }

    pub fn with_locked(mut self, sites: &[usize]) -> Self {
        self.locked_sites = sites.to_vec();
        self.locked_sites.sort_unstable();
        self.locked_sites.dedup();
        self
    }

    /// Relation applied to the unlocked sites.
    pub fn relation(&self) -> PairRelation {
        match self.tag {
            SymmetryTag::Free => PairRelation::Free,
            SymmetryTag::PolarMirror | SymmetryTag::AxisLocked => PairRelation::PolarMirror,
            SymmetryTag::AzimuthalMirror => PairRelation::AzimuthalMirror,
        }
    }

    /// Same locked sites, other mirror relation. `None` for free modes.
    pub fn mirror_partner(&self) -> Option<Self> {
        let tag = match self.relation() {
            PairRelation::Free => return None,
            PairRelation::PolarMirror => SymmetryTag::AzimuthalMirror,
            PairRelation::AzimuthalMirror => SymmetryTag::PolarMirror,
        };
        Some(Self { tag, locked_sites: self.locked_sites.clone() })
    }

    pub fn is_locked(&self, site: usize) -> bool {
        self.locked_sites.contains(&site)
    }

    pub fn validate(&self, u: usize) -> Result<()> {
        if u == 0 {
            return Err(Error::Config("unit cell size must be positive".into()));
        }
        if let Some(&s) = self.locked_sites.iter().find(|&&s| s == 0 || s > u) {
            return Err(Error::Config(format!("locked site {s} outside 1..={u}")));
        }
        if self.locked_sites.len() == u {
            return Err(Error::Config("every site is locked; nothing to optimise".into()));
        }
        Ok(())
    }

    /// Number of free Bloch-angle pairs for a cell of `u` sites.
    pub fn reduced_count(&self, u: usize) -> usize {
        let active = (1..=u).filter(|s| !self.is_locked(*s)).count();
        match self.relation() {
            PairRelation::Free => 2 * active,
            _ => active,
        }
    }

    pub fn label(&self) -> String {
        if self.locked_sites.is_empty() {
            self.tag.name().to_string()
        } else {
            let sites: Vec<String> = self.locked_sites.iter().map(|s| s.to_string()).collect();
            format!("{}[locked={}]", self.tag.name(), sites.join(","))
        }
    }
}

/// Builds the full `2u` settings from reduced angles under a symmetry mode.
///
/// Reduced angles are consumed in site order: one pair per unlocked site
/// for the mirror relations, two (`a`, then `a'`) for `FREE`.
pub fn expand_settings<T: Real>(
    reduced: &[BlochAngles<T>],
    mode: &SymmetryMode,
    u: usize,
) -> Result<MeasurementSettings<T>> {
    mode.validate(u)?;
    let need = mode.reduced_count(u);
    if reduced.len() != need {
        return Err(Error::Config(format!(
            "mode {} with u={u} takes {need} reduced angle pairs, got {}",
            mode.label(),
            reduced.len()
        )));
    }
    let rel = mode.relation();
    let mut it = reduced.iter();
    let mut pairs = Vec::with_capacity(u);
    for site in 1..=u {
        if mode.is_locked(site) {
            pairs.push(SettingPair { a: UnitVector::z_axis(), a_prime: UnitVector::z_axis() });
            continue;
        }
        let first = *it.next().expect("count checked above");
        let a = first.vector();
        let a_prime = match rel {
            PairRelation::Free => it.next().expect("count checked above").vector(),
            PairRelation::PolarMirror => UnitVector { x: a.x, y: a.y, z: -a.z },
            PairRelation::AzimuthalMirror => UnitVector { x: a.x, y: -a.y, z: a.z },
        };
        pairs.push(SettingPair { a, a_prime });
    }
    Ok(MeasurementSettings { pairs })
}

/// Partner angles of a mirror relation (θ' = π − θ or φ' = 2π − φ).
pub fn mirror_angles<T: Real>(rel: PairRelation, a: BlochAngles<T>) -> Option<BlochAngles<T>> {
    partner_angles(rel, a)
}
