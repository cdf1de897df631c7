//! Spin-chain Hamiltonians and their ground states.
//!
//! Every model is a translation-invariant sum of Pauli strings. The same
//! term table feeds the exact-diagonalisation builders on periodic rings
//! and the bond Hamiltonian of the infinite-chain imaginary-time solver.
//!
//! Conventions (all terms enter with a minus sign):
//!
//! * `CLUSTER_ISING`: `H = -Σ (X_{i-1} Z_i X_{i+1} + J X_i X_{i+1} + h Z_i)`
//! * `TFIM`: `H = -Σ (X_i X_{i+1} + h Z_i)`
//! * `XXZ`: `H = -Σ (X_i X_{i+1} + Y_i Y_{i+1} + Δ Z_i Z_{i+1}) - h Σ Z_i`
//!
//! With this sign choice `XXZ` at `Δ = -1` is the antiferromagnetic
//! Heisenberg chain `4 Σ S_i·S_{i+1}` up to a sublattice rotation.

mod cache;
mod ed;
mod itebd;

pub use cache::GroundStateCache;
pub use ed::{
    build_hamiltonian_dense, build_hamiltonian_sparse, expectation_string, ground_state_ed,
    ground_state_lanczos, parity_bias, FiniteGroundState, PauliSum, DENSE_SITE_LIMIT,
};
pub use itebd::{
    ground_state_umps, ground_state_umps_with, mps_local_expectation, ItebdOptions, UniformMps,
};

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{identity, kron_all, pauli_x, pauli_y, pauli_z, CMat};
use crate::scalar::{lit, Real};

/// Single-site Pauli operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix<T: Real>(self) -> CMat<T> {
        match self {
            Pauli::I => identity(2),
            Pauli::X => pauli_x(),
            Pauli::Y => pauli_y(),
            Pauli::Z => pauli_z(),
        }
    }
}

/// `coeff · P_0 ⊗ P_1 ⊗ …` acting on consecutive sites starting at the
/// anchor site of the term.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub ops: Vec<Pauli>,
}

impl PauliTerm {
    pub fn new(coeff: f64, ops: &[Pauli]) -> Self {
        Self { coeff, ops: ops.to_vec() }
    }

    pub fn range(&self) -> usize {
        self.ops.len()
    }

    pub fn matrix<T: Real>(&self) -> CMat<T> {
        let mats: Vec<CMat<T>> = self.ops.iter().map(|p| p.matrix()).collect();
        kron_all(&mats) * crate::scalar::creal(lit::<T>(self.coeff))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    ClusterIsing,
    Tfim,
    Xxz,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ClusterIsing => "CLUSTER_ISING",
            Self::Tfim => "TFIM",
            Self::Xxz => "XXZ",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CLUSTER_ISING" | "CLUSTER" => Some(Self::ClusterIsing),
            "TFIM" | "ISING" => Some(Self::Tfim),
            "XXZ" => Some(Self::Xxz),
            _ => None,
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self {
            Self::ClusterIsing => 0,
            Self::Tfim => 1,
            Self::Xxz => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Self::ClusterIsing),
            1 => Some(Self::Tfim),
            2 => Some(Self::Xxz),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A point in the parameter space of one of the shipped models.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub j: f64,
    pub h: f64,
    pub delta: f64,
    /// Unit cell of the measurement settings.
    pub u: usize,
}

impl ModelSpec {
    pub fn cluster_ising(j: f64, h: f64) -> Self {
        Self { kind: ModelKind::ClusterIsing, j, h, delta: 0.0, u: 2 }
    }

    pub fn tfim(h: f64) -> Self {
        Self { kind: ModelKind::Tfim, j: 1.0, h, delta: 0.0, u: 1 }
    }

    pub fn xxz(delta: f64, h: f64) -> Self {
        Self { kind: ModelKind::Xxz, j: 1.0, h, delta, u: 1 }
    }

    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("J", self.j), ("h", self.h), ("delta", self.delta)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("model.{name} is not finite")));
            }
        }
        if self.j < 0.0 {
            return Err(Error::Config(format!("model.J = {} must be non-negative", self.j)));
        }
        if !(1..=2).contains(&self.u) {
            return Err(Error::Config(format!("model.u = {} must be 1 or 2", self.u)));
        }
        Ok(())
    }

    /// Terms anchored at one site; the Hamiltonian is their sum over all
    /// translations.
    pub fn local_terms(&self) -> Vec<PauliTerm> {
        use Pauli::*;
        let mut terms = Vec::new();
        match self.kind {
            ModelKind::ClusterIsing => {
                terms.push(PauliTerm::new(-1.0, &[X, Z, X]));
                if self.j != 0.0 {
                    terms.push(PauliTerm::new(-self.j, &[X, X]));
                }
            }
            ModelKind::Tfim => terms.push(PauliTerm::new(-1.0, &[X, X])),
            ModelKind::Xxz => {
                terms.push(PauliTerm::new(-1.0, &[X, X]));
                terms.push(PauliTerm::new(-1.0, &[Y, Y]));
                if self.delta != 0.0 {
                    terms.push(PauliTerm::new(-self.delta, &[Z, Z]));
                }
            }
        }
        if self.h != 0.0 {
            terms.push(PauliTerm::new(-self.h, &[Z]));
        }
        terms
    }

    /// Longest term support, in sites.
    pub fn interaction_range(&self) -> usize {
        self.local_terms().iter().map(|t| t.range()).max().unwrap_or(1)
    }

    /// Physical sites merged into one block so that every term is at most
    /// nearest-neighbour on the blocked chain, rounded up so that the
    /// two-block cell of the infinite-chain solver is a multiple of `u`.
    pub fn block_size(&self) -> usize {
        let b = self.interaction_range().saturating_sub(1).max(1);
        if (2 * b) % self.u == 0 {
            b
        } else {
            b * self.u
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::ClusterIsing => write!(f, "CLUSTER_ISING(J={}, h={})", self.j, self.h),
            ModelKind::Tfim => write!(f, "TFIM(h={})", self.h),
            ModelKind::Xxz => write!(f, "XXZ(delta={}, h={})", self.delta, self.h),
        }
    }
}

/// Bond Hamiltonian between two blocks of `b` physical sites each, with
/// every intra-block term split evenly between the two bonds that touch
/// the block. Summing it over all bonds reproduces `H` exactly.
pub fn blocked_bond_hamiltonian<T: Real>(spec: &ModelSpec, b: usize) -> Result<CMat<T>> {
    let range = spec.interaction_range();
    if range > b + 1 {
        return Err(Error::Config(format!(
            "block size {b} too small for terms of range {range}"
        )));
    }
    let n = 2 * b;
    let dim = 1usize << n;
    let mut hb = CMat::<T>::zeros(dim, dim);
    for term in spec.local_terms() {
        for start in 0..b {
            let end = start + term.range();
            let weight = if end <= b { 0.5 } else { 1.0 };
            hb += embed(&term, start, n, weight);
            if end <= b {
                hb += embed(&term, start + b, n, weight);
            }
        }
    }
    Ok(hb)
}

fn embed<T: Real>(term: &PauliTerm, start: usize, n: usize, weight: f64) -> CMat<T> {
    let mut ops: Vec<CMat<T>> = Vec::with_capacity(n);
    for site in 0..n {
        let p = if site >= start && site < start + term.range() {
            term.ops[site - start]
        } else {
            Pauli::I
        };
        ops.push(p.matrix());
    }
    kron_all(&ops) * crate::scalar::creal(lit::<T>(term.coeff * weight))
}
