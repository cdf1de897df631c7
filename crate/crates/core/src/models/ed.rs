//! Exact diagonalisation on periodic rings.
//!
//! Basis states are bit strings with site 0 as the most significant bit,
//! matching the Kronecker order of [`crate::linalg::kron_all`].

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelSpec, Pauli, PauliTerm};
use crate::error::{Error, Result};
use crate::linalg::{eigh, hermiticity_defect, CMat, CVec};
use crate::scalar::{cplx, creal, lit, to_f64, Real, C};

/// Largest ring the dense builder accepts.
pub const DENSE_SITE_LIMIT: usize = 12;

/// Largest ring the sparse (matrix-free) path accepts.
pub const SPARSE_SITE_LIMIT: usize = 20;

/// Weight of the even-parity projector subtracted to split degenerate
/// ground spaces.
const PARITY_BIAS: f64 = 1e-8;

/// A lowest eigenpair of a finite Hamiltonian.
#[derive(Clone, Debug)]
pub struct FiniteGroundState<T: Real> {
    pub n_sites: usize,
    pub state: CVec<T>,
    pub energy: T,
}

impl<T: Real> FiniteGroundState<T> {
    pub fn energy_per_site(&self) -> T {
        self.energy / lit(self.n_sites as f64)
    }
}

/// One Pauli string on a ring, stored as bit masks.
#[derive(Clone, Copy, Debug)]
struct Mask {
    coeff: f64,
    flip: usize,
    sign: usize,
    n_y: u32,
}

impl Mask {
    fn from_ops(n: usize, coeff: f64, ops: &[(usize, Pauli)]) -> Self {
        let (mut flip, mut sign, mut n_y) = (0usize, 0usize, 0u32);
        for &(site, p) in ops {
            let bit = 1usize << (n - 1 - site);
            match p {
                Pauli::I => {}
                Pauli::X => flip ^= bit,
                Pauli::Z => sign ^= bit,
                Pauli::Y => {
                    flip ^= bit;
                    sign ^= bit;
                    n_y += 1;
                }
            }
        }
        Self { coeff, flip, sign, n_y }
    }

    /// Phase of `P|b⟩ = phase · |b ^ flip⟩`.
    fn phase(&self, b: usize) -> (f64, u32) {
        let s = if (b & self.sign).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        (s, self.n_y % 4)
    }
}

fn i_power<T: Real>(k: u32, re: T) -> C<T> {
    match k {
        0 => cplx(re, T::zero()),
        1 => cplx(T::zero(), re),
        2 => cplx(-re, T::zero()),
        _ => cplx(T::zero(), -re),
    }
}

/// Matrix-free Hamiltonian: a sum of Pauli strings on `n_sites` qubits.
#[derive(Clone, Debug)]
pub struct PauliSum {
    n_sites: usize,
    masks: Vec<Mask>,
}

impl PauliSum {
    pub fn new(n_sites: usize) -> Self {
        Self { n_sites, masks: Vec::new() }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_sites
    }

    pub fn push(&mut self, coeff: f64, ops: &[(usize, Pauli)]) {
        self.masks.push(Mask::from_ops(self.n_sites, coeff, ops));
    }

    /// Adds `term` at every translation of a ring of `n_sites`.
    pub fn push_translations(&mut self, term: &PauliTerm) {
        let n = self.n_sites;
        for anchor in 0..n {
            let ops: Vec<(usize, Pauli)> = term
                .ops
                .iter()
                .enumerate()
                .map(|(k, &p)| ((anchor + k) % n, p))
                .collect();
            self.push(term.coeff, &ops);
        }
    }

    pub fn apply<T: Real>(&self, psi: &CVec<T>) -> CVec<T> {
        let mut out = CVec::<T>::zeros(psi.len());
        for m in &self.masks {
            let c = lit::<T>(m.coeff);
            for b in 0..psi.len() {
                let a = psi[b];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let (s, k) = m.phase(b);
                out[b ^ m.flip] += i_power(k, c * lit(s)) * a;
            }
        }
        out
    }

    pub fn to_dense<T: Real>(&self) -> CMat<T> {
        let dim = self.dim();
        let mut h = CMat::<T>::zeros(dim, dim);
        for m in &self.masks {
            let c = lit::<T>(m.coeff);
            for b in 0..dim {
                let (s, k) = m.phase(b);
                h[(b ^ m.flip, b)] += i_power(k, c * lit(s));
            }
        }
        h
    }
}

/// The ring Hamiltonian as a matrix-free operator.
pub fn build_hamiltonian_sparse(spec: &ModelSpec, n_sites: usize) -> Result<PauliSum> {
    spec.validate()?;
    if n_sites > SPARSE_SITE_LIMIT {
        return Err(Error::Resource(format!(
            "{n_sites} sites exceed the sparse limit of {SPARSE_SITE_LIMIT}"
        )));
    }
    let range = spec.interaction_range();
    if n_sites < range.max(2) {
        return Err(Error::Config(format!(
            "a ring of {n_sites} sites cannot hold terms of range {range}"
        )));
    }
    let mut sum = PauliSum::new(n_sites);
    for term in spec.local_terms() {
        sum.push_translations(&term);
    }
    Ok(sum)
}

/// Dense Hamiltonian of a ring. Only periodic boundaries are supported.
pub fn build_hamiltonian_dense<T: Real>(
    spec: &ModelSpec,
    n_sites: usize,
    periodic: bool,
) -> Result<CMat<T>> {
    if !periodic {
        return Err(Error::Config("only periodic rings are supported".into()));
    }
    if n_sites > DENSE_SITE_LIMIT {
        return Err(Error::Resource(format!(
            "{n_sites} sites exceed the dense limit of {DENSE_SITE_LIMIT}"
        )));
    }
    Ok(build_hamiltonian_sparse(spec, n_sites)?.to_dense())
}

fn parity_sign(b: usize) -> f64 {
    if b.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Diagonal of `(1 + Π Z) / 2` on `n_sites` qubits.
pub fn parity_bias(n_sites: usize) -> Vec<f64> {
    (0..1usize << n_sites).map(|b| 0.5 * (1.0 + parity_sign(b))).collect()
}

fn fix_phase<T: Real>(v: &mut CVec<T>) {
    let mut best = 0;
    let mut best_mod = T::zero();
    for (i, z) in v.iter().enumerate() {
        let m = crate::scalar::modulus(*z);
        if m > best_mod + lit(1e-12) {
            best = i;
            best_mod = m;
        }
    }
    if best_mod > T::zero() {
        let ph = v[best] / creal(best_mod);
        let inv = ph.conj();
        for z in v.iter_mut() {
            *z *= inv;
        }
    }
}

/// Lowest eigenpair of a dense Hermitian matrix.
///
/// When the dimension is a power of two the even-parity sector is favoured
/// by a `1e-8` bias so that degenerate ground spaces resolve to the
/// parity-symmetric state. The reported energy is `⟨ψ|H|ψ⟩` of the
/// unbiased matrix.
pub fn ground_state_ed<T: Real>(h: &CMat<T>) -> Result<FiniteGroundState<T>> {
    let dim = h.nrows();
    if hermiticity_defect(h) > lit(1e-10) {
        return Err(Error::Numeric("Hamiltonian is not Hermitian".into()));
    }
    let mut biased = h.clone();
    let n_sites = if dim.is_power_of_two() { dim.trailing_zeros() as usize } else { 0 };
    if n_sites > 0 {
        for (b, w) in parity_bias(n_sites).into_iter().enumerate() {
            biased[(b, b)] -= creal(lit::<T>(PARITY_BIAS * w));
        }
    }
    let (_, vecs) = eigh(&biased)?;
    let mut state: CVec<T> = vecs.column(0).into_owned();
    let norm = state.norm();
    state /= creal(norm);
    fix_phase(&mut state);
    let energy = (state.adjoint() * h * &state)[(0, 0)].re;
    Ok(FiniteGroundState { n_sites, state, energy })
}

/// Lowest eigenpair of a ring Hamiltonian by restarted Lanczos with full
/// reorthogonalisation, with the same parity tie-break as [`ground_state_ed`].
pub fn ground_state_lanczos<T: Real>(h: &PauliSum, tol: f64) -> Result<FiniteGroundState<T>> {
    let n = h.n_sites();
    let dim = h.dim();
    let bias: Vec<T> = parity_bias(n).into_iter().map(|w| lit(PARITY_BIAS * w)).collect();
    let apply = |v: &CVec<T>| -> CVec<T> {
        let mut out = h.apply(v);
        for (i, z) in out.iter_mut().enumerate() {
            *z -= v[i] * creal(bias[i]);
        }
        out
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut start = CVec::<T>::from_fn(dim, |_, _| creal(lit(rng.gen_range(-1.0..1.0))));
    start /= creal(start.norm());

    let krylov = dim.min(120);
    let mut last_res = f64::INFINITY;
    for restart in 0..60 {
        let mut basis: Vec<CVec<T>> = Vec::with_capacity(krylov);
        let mut alpha: Vec<T> = Vec::new();
        let mut beta: Vec<T> = Vec::new();
        basis.push(start.clone());
        for j in 0..krylov {
            let mut w = apply(&basis[j]);
            let a = basis[j].dotc(&w).re;
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dotc(&w);
                    w.axpy(-c, q, C::new(T::one(), T::zero()));
                }
            }
            let b = w.norm();
            if j + 1 == krylov || b < lit(1e-14) {
                break;
            }
            beta.push(b);
            basis.push(w / creal(b));
        }
        let k = alpha.len();
        let mut tri = DMatrix::<T>::zeros(k, k);
        for i in 0..k {
            tri[(i, i)] = alpha[i];
            if i + 1 < k {
                tri[(i, i + 1)] = beta[i];
                tri[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(tri);
        let mut idx = 0;
        for i in 1..k {
            if eig.eigenvalues[i] < eig.eigenvalues[idx] {
                idx = i;
            }
        }
        let theta = eig.eigenvalues[idx];
        let y = eig.eigenvectors.column(idx);
        let mut ritz = CVec::<T>::zeros(dim);
        for (i, q) in basis.iter().take(k).enumerate() {
            ritz.axpy(creal(y[i]), q, C::new(T::one(), T::zero()));
        }
        ritz /= creal(ritz.norm());
        let resid = apply(&ritz) - &ritz * creal(theta);
        last_res = to_f64(resid.norm());
        debug!("lanczos restart {restart}: E = {}, residual {last_res:e}", to_f64(theta));
        if last_res < tol {
            fix_phase(&mut ritz);
            let energy = ritz.dotc(&h.apply(&ritz)).re;
            return Ok(FiniteGroundState { n_sites: n, state: ritz, energy });
        }
        start = ritz;
    }
    warn!("lanczos stopped with residual {last_res:e}");
    Err(Error::Convergence { iterations: 60, last_delta: last_res })
}

/// `⟨ψ| Π_k P_k |ψ⟩` for a Pauli string given as `(site, operator)` pairs.
pub fn expectation_string<T: Real>(
    gs: &FiniteGroundState<T>,
    ops: &[(usize, Pauli)],
) -> Result<C<T>> {
    if let Some(&(s, _)) = ops.iter().find(|(s, _)| *s >= gs.n_sites) {
        return Err(Error::Config(format!("site {s} outside ring of {}", gs.n_sites)));
    }
    let mut sum = PauliSum::new(gs.n_sites);
    sum.push(1.0, ops);
    let applied = sum.apply(&gs.state);
    Ok(gs.state.dotc(&applied))
}
