//! The Mermin–Klyshko Bell operator as a bond-dimension-2 matrix product
//! operator, its mixed transfer matrix against a uniform MPS, and dense
//! finite-chain references.
//!
//! The recursion `F_n = ½F_{n-1}(A_n + A'_n) + ½F'_{n-1}(A_n - A'_n)`,
//! `F'_n = ½F'_{n-1}(A_n + A'_n) - ½F_{n-1}(A_n - A'_n)` with `F_1 = A_1`
//! is written per site as the block
//!
//! ```text
//! W = ½ [[A + A',   A - A'],
//!        [-(A - A'), A + A']]
//! ```
//!
//! acting on the column `(F, F')`. In the basis `(1, ±i)` of the MPO bond
//! the block is diagonal with entries `O± = ½((1 ± i)A + (1 ∓ i)A')`, so the
//! mixed transfer matrix splits into two sectors with complex-conjugate
//! spectra. The leading eigenvalues are taken from the `O+` sector.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{MeasurementSettings, SettingPair, UnitVector};
use crate::linalg::{
    arnoldi_top, eigenvalues, identity, kron, kron_all, pauli_x, pauli_y, pauli_z,
    sort_by_modulus, ArnoldiOptions, CMat, CVec,
};
use crate::models::{FiniteGroundState, UniformMps};
use crate::scalar::{cplx, creal, lit, to_f64, Real, C};

/// Largest chain the dense Bell-operator reference accepts.
pub const BRUTE_FORCE_SITE_LIMIT: usize = 10;

/// `v · σ`.
pub fn sigma_dot<T: Real>(v: &UnitVector<T>) -> CMat<T> {
    pauli_x::<T>() * creal(v.x) + pauli_y::<T>() * creal(v.y) + pauli_z::<T>() * creal(v.z)
}

/// The 2×2 block of single-site operators for one site.
#[derive(Clone, Debug, PartialEq)]
pub struct BellSiteBlock<T: Real> {
    pub w: [[CMat<T>; 2]; 2],
}

pub fn build_site_block<T: Real>(a: &UnitVector<T>, a_prime: &UnitVector<T>) -> BellSiteBlock<T> {
    let (op_a, op_ap) = (sigma_dot(a), sigma_dot(a_prime));
    let half = creal(lit::<T>(0.5));
    let sum = (&op_a + &op_ap) * half;
    let diff = (&op_a - &op_ap) * half;
    BellSiteBlock { w: [[sum.clone(), diff.clone()], [-diff, sum]] }
}

impl<T: Real> BellSiteBlock<T> {
    /// `O+ = W00 + i W01`, the block restricted to the `(1, i)` sector.
    pub fn sector_plus(&self) -> CMat<T> {
        &self.w[0][0] + &self.w[0][1] * cplx(T::zero(), T::one())
    }
}

/// `O+ = ½((1 + i)A + (1 − i)A')` for one setting pair.
pub fn sector_operator<T: Real>(pair: &SettingPair<T>) -> CMat<T> {
    let a = sigma_dot(&pair.a);
    let ap = sigma_dot(&pair.a_prime);
    let half = lit::<T>(0.5);
    a * cplx(half, half) + ap * cplx(half, -half)
}

/// One tensor's worth of the mixed transfer matrix.
#[derive(Clone, Debug)]
struct CellFactor<T: Real> {
    tensor: usize,
    /// `B^t = Σ_s O+_{st} A^{s†}`, so that `X ↦ Σ_t B^t X A^t`.
    sector: Vec<CMat<T>>,
    /// Full MPO block entries on the blocked physical space.
    full: [[CMat<T>; 2]; 2],
}

/// The mixed transfer matrix of a uniform MPS and a set of measurement
/// settings over one common period of the two.
#[derive(Clone, Debug)]
pub struct MixedTransferMatrix<'a, T: Real> {
    mps: &'a UniformMps<T>,
    factors: Vec<CellFactor<T>>,
    /// Physical spins spanned by the product `E_1 ⋯ E_n`.
    pub sites: usize,
    /// Settings unit cell.
    pub u: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Blocked operator `O_1 ⊗ … ⊗ O_b` from single-spin operators.
fn block_operator<T: Real>(ops: &[CMat<T>]) -> CMat<T> {
    kron_all(ops)
}

pub fn mixed_transfer_matrix<'a, T: Real>(
    mps: &'a UniformMps<T>,
    settings: &MeasurementSettings<T>,
) -> Result<MixedTransferMatrix<'a, T>> {
    let u = settings.unit_cell();
    let cell = mps.cell_sites();
    if mps.phys_dim() != 1 << mps.block {
        return Err(Error::Config("MPS physical dimension does not match its block size".into()));
    }
    let period = cell / gcd(cell, u) * u;
    let n_factors = period / mps.block;
    let mut factors = Vec::with_capacity(n_factors);
    for k in 0..n_factors {
        let tensor = k % mps.n_tensors();
        let first = k * mps.block;
        let pairs: Vec<&SettingPair<T>> = (0..mps.block).map(|j| settings.tiled(first + j)).collect();
        let o_plus = block_operator(&pairs.iter().map(|p| sector_operator(p)).collect::<Vec<_>>());
        let blocks: Vec<BellSiteBlock<T>> =
            pairs.iter().map(|p| build_site_block(&p.a, &p.a_prime)).collect();
        let full = blocked_mpo(&blocks);
        let a = &mps.tensors[tensor];
        let d = a.len();
        let sector = (0..d)
            .map(|t| {
                let mut b = CMat::<T>::zeros(a[0].ncols(), a[0].nrows());
                for s in 0..d {
                    let c = o_plus[(s, t)];
                    if c != C::new(T::zero(), T::zero()) {
                        b += a[s].adjoint() * c;
                    }
                }
                b
            })
            .collect();
        factors.push(CellFactor { tensor, sector, full });
    }
    Ok(MixedTransferMatrix { mps, factors, sites: period, u })
}

/// Contracts the MPO bond of consecutive single-spin blocks into one block
/// acting on the blocked physical space.
fn blocked_mpo<T: Real>(blocks: &[BellSiteBlock<T>]) -> [[CMat<T>; 2]; 2] {
    let mut acc = blocks[0].w.clone();
    for blk in &blocks[1..] {
        let mut next: [[CMat<T>; 2]; 2] = Default::default();
        for (i, row) in next.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                let mut sum = CMat::<T>::zeros(acc[0][0].nrows() * 2, acc[0][0].ncols() * 2);
                for m in 0..2 {
                    // Column recursion: the later site's block acts after the earlier one.
                    sum += kron(&acc[m][j], &blk.w[i][m]);
                }
                *entry = sum;
            }
        }
        acc = next;
    }
    acc
}

impl<'a, T: Real> MixedTransferMatrix<'a, T> {
    /// Bond dimension at the start of the period.
    pub fn bond_dim(&self) -> usize {
        self.mps.tensors[0][0].nrows()
    }

    pub fn sector_dim(&self) -> usize {
        self.bond_dim() * self.bond_dim()
    }

    /// `X ↦ Σ_t B^t X A^t` through the whole period, with `X` stored
    /// column-major as a vector.
    pub fn apply_sector(&self, x: &CVec<T>) -> CVec<T> {
        let d0 = self.bond_dim();
        let mut m = CMat::from_column_slice(d0, d0, x.as_slice());
        for f in &self.factors {
            let a = &self.mps.tensors[f.tensor];
            let mut next = CMat::<T>::zeros(a[0].ncols(), a[0].ncols());
            for (t, b) in f.sector.iter().enumerate() {
                next += b * &m * &a[t];
            }
            m = next;
        }
        CVec::from_column_slice(m.as_slice())
    }

    /// The full two-sector map acting on `(X_0, X_1)`.
    pub fn apply_full(&self, x: &CVec<T>) -> CVec<T> {
        let d0 = self.bond_dim();
        let n = d0 * d0;
        let mut ms = [
            CMat::from_column_slice(d0, d0, &x.as_slice()[..n]),
            CMat::from_column_slice(d0, d0, &x.as_slice()[n..]),
        ];
        for f in &self.factors {
            let a = &self.mps.tensors[f.tensor];
            let d = a.len();
            let dr = a[0].ncols();
            let mut next = [CMat::<T>::zeros(dr, dr), CMat::<T>::zeros(dr, dr)];
            for (i, out) in next.iter_mut().enumerate() {
                for (j, mj) in ms.iter().enumerate() {
                    let w = &f.full[i][j];
                    for s in 0..d {
                        for t in 0..d {
                            let c = w[(s, t)];
                            if c != C::new(T::zero(), T::zero()) {
                                *out += a[s].adjoint() * mj * &a[t] * c;
                            }
                        }
                    }
                }
            }
            ms = next;
        }
        let mut out = CVec::<T>::zeros(2 * n);
        out.as_mut_slice()[..n].copy_from_slice(ms[0].as_slice());
        out.as_mut_slice()[n..].copy_from_slice(ms[1].as_slice());
        out
    }

    fn dense_from(&self, dim: usize, f: impl Fn(&CVec<T>) -> CVec<T>) -> CMat<T> {
        let mut m = CMat::<T>::zeros(dim, dim);
        for j in 0..dim {
            let mut e = CVec::<T>::zeros(dim);
            e[j] = creal(T::one());
            m.set_column(j, &f(&e));
        }
        m
    }

    pub fn sector_dense(&self) -> CMat<T> {
        self.dense_from(self.sector_dim(), |x| self.apply_sector(x))
    }

    /// The `2χ² × 2χ²` matrix of the full operator.
    pub fn full_dense(&self) -> CMat<T> {
        self.dense_from(2 * self.sector_dim(), |x| self.apply_full(x))
    }
}

/// Leading eigenvalues of a mixed transfer matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferSpectrum<T: Real> {
    pub lambda1: C<T>,
    pub lambda2: C<T>,
    /// `|λ1|^(1/sites)`.
    pub lambda1_per_site: T,
    pub lambda2_per_site: T,
    /// `lambda1_per_site − lambda2_per_site`.
    pub gap: T,
    /// Up to six leading eigenvalues, by modulus.
    pub top: Vec<C<T>>,
    pub sites: usize,
}

/// How the leading eigenvalues are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumMethod {
    Dense,
    Arnoldi,
    /// Dense up to [`DENSE_SECTOR_LIMIT`], Arnoldi beyond.
    Auto,
}

pub const DENSE_SECTOR_LIMIT: usize = 64;

/// Ordering and per-site normalisation of a list of eigenvalues.
pub fn spectrum_from_eigenvalues<T: Real>(mut vals: Vec<C<T>>, sites: usize) -> Result<TransferSpectrum<T>> {
    if vals.is_empty() || sites == 0 {
        return Err(Error::Numeric("empty spectrum".into()));
    }
    if vals.iter().any(|z| !to_f64(z.re).is_finite() || !to_f64(z.im).is_finite()) {
        return Err(Error::Numeric("non-finite eigenvalue".into()));
    }
    sort_by_modulus(&mut vals);
    let zero = C::new(T::zero(), T::zero());
    let lambda1 = vals[0];
    let lambda2 = vals.get(1).copied().unwrap_or(zero);
    let root = lit::<T>(1.0 / sites as f64);
    let per = |z: C<T>| {
        let m = crate::scalar::modulus(z);
        if m == T::zero() {
            T::zero()
        } else {
            m.powf(root)
        }
    };
    let l1 = per(lambda1);
    let l2 = per(lambda2);
    vals.truncate(6);
    Ok(TransferSpectrum {
        lambda1,
        lambda2,
        lambda1_per_site: l1,
        lambda2_per_site: l2,
        gap: l1 - l2,
        top: vals,
        sites,
    })
}

fn start_vector<T: Real>(n: usize) -> CVec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb311);
    CVec::from_fn(n, |_, _| cplx(lit(rng.gen_range(-1.0..1.0)), lit(rng.gen_range(-1.0..1.0))))
}

pub fn transfer_spectrum<T: Real>(
    m: &MixedTransferMatrix<'_, T>,
    method: SpectrumMethod,
) -> Result<TransferSpectrum<T>> {
    let n = m.sector_dim();
    let dense = match method {
        SpectrumMethod::Dense => true,
        SpectrumMethod::Arnoldi => false,
        SpectrumMethod::Auto => n <= DENSE_SECTOR_LIMIT,
    };
    let vals = if dense || n <= 8 {
        eigenvalues(&m.sector_dense())?
    } else {
        arnoldi_top(n, 6, |x| m.apply_sector(x), &start_vector(n), &ArnoldiOptions::default())?
    };
    let spec = spectrum_from_eigenvalues(vals, m.sites)?;
    debug!(
        "top spectrum (per site): {:?}",
        spec.top
            .iter()
            .map(|z| to_f64(crate::scalar::modulus(*z)).powf(1.0 / m.sites as f64))
            .collect::<Vec<_>>()
    );
    Ok(spec)
}

/// Only the principal eigenvalue per site, for inner optimisation loops.
pub fn principal_eigenvalue<T: Real>(
    m: &MixedTransferMatrix<'_, T>,
    method: SpectrumMethod,
) -> Result<TransferSpectrum<T>> {
    let n = m.sector_dim();
    let dense = match method {
        SpectrumMethod::Dense => true,
        SpectrumMethod::Arnoldi => false,
        SpectrumMethod::Auto => n <= DENSE_SECTOR_LIMIT,
    };
    let vals = if dense || n <= 8 {
        eigenvalues(&m.sector_dense())?
    } else {
        arnoldi_top(n, 2, |x| m.apply_sector(x), &start_vector(n), &ArnoldiOptions::default())?
    };
    spectrum_from_eigenvalues(vals, m.sites)
}

/// Per-site principal eigenvalue for a uniform MPS and settings.
pub fn lambda1_per_site<T: Real>(
    mps: &UniformMps<T>,
    settings: &MeasurementSettings<T>,
    method: SpectrumMethod,
) -> Result<T> {
    Ok(principal_eigenvalue(&mixed_transfer_matrix(mps, settings)?, method)?.lambda1_per_site)
}

/// `F_N` as a dense `2^N × 2^N` matrix, built directly from the recursion
/// with settings tiled along the chain.
pub fn brute_force_bell_operator<T: Real>(
    settings: &MeasurementSettings<T>,
    n_sites: usize,
) -> Result<CMat<T>> {
    if n_sites == 0 {
        return Err(Error::Config("a Bell operator needs at least one site".into()));
    }
    if n_sites > BRUTE_FORCE_SITE_LIMIT {
        return Err(Error::Resource(format!(
            "{n_sites} sites exceed the dense Bell-operator limit of {BRUTE_FORCE_SITE_LIMIT}"
        )));
    }
    let first = settings.tiled(0);
    let mut f = sigma_dot(&first.a);
    let mut fp = sigma_dot(&first.a_prime);
    let half = creal(lit::<T>(0.5));
    for n in 1..n_sites {
        let p = settings.tiled(n);
        let (a, ap) = (sigma_dot(&p.a), sigma_dot(&p.a_prime));
        let s = (&a + &ap) * half;
        let d = (&a - &ap) * half;
        let next_f = kron(&f, &s) + kron(&fp, &d);
        let next_fp = kron(&fp, &s) - kron(&f, &d);
        f = next_f;
        fp = next_fp;
    }
    Ok(f)
}

fn apply_single<T: Real>(psi: &CVec<T>, op: &CMat<T>, site: usize, n: usize) -> CVec<T> {
    let stride = 1usize << (n - 1 - site);
    let mut out = CVec::<T>::zeros(psi.len());
    for b in 0..psi.len() {
        if b & stride != 0 {
            continue;
        }
        let (x0, x1) = (psi[b], psi[b | stride]);
        out[b] = op[(0, 0)] * x0 + op[(0, 1)] * x1;
        out[b | stride] = op[(1, 0)] * x0 + op[(1, 1)] * x1;
    }
    out
}

/// `⟨ψ|F_N|ψ⟩` evaluated by running the recursion on state vectors.
pub fn bell_value_finite<T: Real>(
    state: &FiniteGroundState<T>,
    settings: &MeasurementSettings<T>,
) -> Result<T> {
    let n = state.n_sites;
    if state.state.len() != 1usize << n {
        return Err(Error::Config("state length is not 2^N".into()));
    }
    if n == 0 || n % settings.unit_cell() != 0 {
        return Err(Error::Config(format!(
            "{n} sites are not a multiple of the settings cell {}",
            settings.unit_cell()
        )));
    }
    let value = bell_expectation_vector(&state.state, n, settings);
    if crate::scalar::abs(value.im) > lit::<T>(1e-8) * (T::one() + crate::scalar::abs(value.re)) {
        return Err(Error::Numeric(format!("Bell expectation has imaginary part {}", to_f64(value.im))));
    }
    Ok(value.re)
}

/// `⟨ψ|F_N|ψ⟩` for any state vector on `n` spins (no hermiticity check).
pub fn bell_expectation_vector<T: Real>(psi: &CVec<T>, n: usize, settings: &MeasurementSettings<T>) -> C<T> {
    let half = creal(lit::<T>(0.5));
    let mut v = psi.clone();
    let mut vp = psi.clone();
    for site in 0..n {
        let p = settings.tiled(site);
        let (a, ap) = (sigma_dot(&p.a), sigma_dot(&p.a_prime));
        let s = (&a + &ap) * half;
        let d = (&a - &ap) * half;
        let nv = apply_single(&v, &s, site, n) + apply_single(&vp, &d, site, n);
        let nvp = apply_single(&vp, &s, site, n) - apply_single(&v, &d, site, n);
        v = nv;
        vp = nvp;
    }
    psi.dotc(&v)
}

/// An open-boundary MPS on a finite chain, used as an independent
/// contraction reference.
#[derive(Clone, Debug)]
pub struct OpenMps<T: Real> {
    pub tensors: Vec<Vec<CMat<T>>>,
}

impl<T: Real> OpenMps<T> {
    /// Random complex tensors with bond dimension at most `chi`.
    pub fn random(n: usize, chi: usize, rng: &mut impl Rng) -> Self {
        let mut tensors = Vec::with_capacity(n);
        let mut left = 1usize;
        for site in 0..n {
            let right_cap = 1usize << (n - site - 1).min(20);
            let right = if site + 1 == n { 1 } else { chi.min(2 * left).min(right_cap) };
            let t: Vec<CMat<T>> = (0..2)
                .map(|_| {
                    CMat::from_fn(left, right, |_, _| {
                        cplx(lit(rng.gen_range(-1.0..1.0)), lit(rng.gen_range(-1.0..1.0)))
                    })
                })
                .collect();
            tensors.push(t);
            left = right;
        }
        Self { tensors }
    }

    /// Random product state (bond dimension 1).
    pub fn random_product(n: usize, rng: &mut impl Rng) -> Self {
        Self::random(n, 1, rng)
    }

    /// Exact MPS of a state vector by successive SVDs.
    pub fn from_state(psi: &CVec<T>, n: usize) -> Result<Self> {
        if psi.len() != 1usize << n {
            return Err(Error::Config("state length is not 2^N".into()));
        }
        let mut tensors = Vec::with_capacity(n);
        let mut rest = CMat::from_column_slice(1, psi.len(), psi.as_slice());
        let mut left = 1usize;
        for site in 0..n - 1 {
            let cols = rest.ncols() / 2;
            // Rows (left, s), columns: remaining spins.
            let mut m = CMat::<T>::zeros(left * 2, cols);
            for l in 0..left {
                for s in 0..2 {
                    for c in 0..cols {
                        m[(s * left + l, c)] = rest[(l, s * cols + c)];
                    }
                }
            }
            let svd = m.svd(true, true);
            let u = svd.u.ok_or_else(|| Error::Numeric("svd failed".into()))?;
            let vt = svd.v_t.ok_or_else(|| Error::Numeric("svd failed".into()))?;
            let s0 = svd.singular_values[0];
            let keep = svd
                .singular_values
                .iter()
                .filter(|&&s| s > s0 * lit(1e-14))
                .count()
                .max(1);
            tensors.push((0..2).map(|s| u.view((s * left, 0), (left, keep)).into_owned()).collect());
            let sv = CMat::from_diagonal(&CVec::from_iterator(
                keep,
                svd.singular_values.iter().take(keep).map(|&x| creal(x)),
            ));
            rest = sv * vt.rows(0, keep);
            left = keep;
            debug!("from_state: site {site} bond {keep}");
        }
        tensors.push((0..2).map(|s| rest.columns(s, 1).into_owned()).collect());
        Ok(Self { tensors })
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    /// Dense (unnormalised) state vector.
    pub fn to_dense(&self) -> CVec<T> {
        let mut amps: Vec<CMat<T>> = vec![identity(1)];
        for t in &self.tensors {
            amps = amps.iter().flat_map(|p| t.iter().map(move |m| p * m)).collect();
        }
        CVec::from_iterator(amps.len(), amps.iter().map(|m| m[(0, 0)]))
    }

    pub fn norm_sqr(&self) -> T {
        let mut env = identity::<T>(1);
        for t in &self.tensors {
            let mut next = CMat::<T>::zeros(t[0].ncols(), t[0].ncols());
            for m in t {
                next += m.adjoint() * &env * m;
            }
            env = next;
        }
        env[(0, 0)].re
    }
}

/// `⟨ψ|F_N|ψ⟩ / ⟨ψ|ψ⟩` by contracting the MPO through the open MPS.
pub fn mpo_expectation<T: Real>(mps: &OpenMps<T>, settings: &MeasurementSettings<T>) -> C<T> {
    let one = identity::<T>(1);
    let mut env = [one.clone(), one];
    for (site, t) in mps.tensors.iter().enumerate() {
        let p = settings.tiled(site);
        let blk = build_site_block(&p.a, &p.a_prime);
        let dr = t[0].ncols();
        let mut next = [CMat::<T>::zeros(dr, dr), CMat::<T>::zeros(dr, dr)];
        for (i, out) in next.iter_mut().enumerate() {
            for (j, ej) in env.iter().enumerate() {
                let w = &blk.w[i][j];
                for s in 0..2 {
                    for u in 0..2 {
                        let c = w[(s, u)];
                        if c != C::new(T::zero(), T::zero()) {
                            *out += t[s].adjoint() * ej * &t[u] * c;
                        }
                    }
                }
            }
        }
        env = next;
    }
    env[0][(0, 0)] / creal(mps.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BlochAngles;

    fn uv(x: f64, y: f64, z: f64) -> UnitVector<f64> {
        UnitVector::new(x, y, z).unwrap()
    }

    fn pair(a: UnitVector<f64>, ap: UnitVector<f64>) -> SettingPair<f64> {
        SettingPair { a, a_prime: ap }
    }

    #[test]
    fn site_block_examples() {
        let z = uv(0.0, 0.0, 1.0);
        let b = build_site_block(&z, &z);
        assert_eq!(b.w[0][0], pauli_z());
        assert_eq!(b.w[0][1].norm(), 0.0);
        assert_eq!(b.w[1][0].norm(), 0.0);
        let b = build_site_block(&z, &uv(0.0, 0.0, -1.0));
        assert_eq!(b.w[0][0].norm(), 0.0);
        assert_eq!(b.w[0][1], pauli_z());
        assert_eq!(b.w[1][0], -pauli_z::<f64>());
        let b = build_site_block(&uv(1.0, 0.0, 0.0), &uv(0.0, 1.0, 0.0));
        let h = creal(0.5);
        assert!((&b.w[0][0] - (pauli_x::<f64>() + pauli_y::<f64>()) * h).norm() < 1e-15);
        assert!((&b.w[1][0] + (pauli_x::<f64>() - pauli_y::<f64>()) * h).norm() < 1e-15);
    }

    #[test]
    fn block_entries_hermitian() {
        let b = build_site_block(&uv(0.6, 0.0, 0.8), &uv(0.0, 0.6, -0.8));
        for row in &b.w {
            for e in row {
                assert!(crate::linalg::hermiticity_defect(e) < 1e-15);
            }
        }
    }

    #[test]
    fn product_state_spectra() {
        let up = UniformMps::<f64>::product([creal(1.0), creal(0.0)]);
        let z = uv(0.0, 0.0, 1.0);
        let s = MeasurementSettings::uniform(pair(z, z), 1);
        let m = mixed_transfer_matrix(&up, &s).unwrap();
        let full = m.full_dense();
        assert!((full - CMat::<f64>::identity(2, 2)).norm() < 1e-15);
        let sp = transfer_spectrum(&m, SpectrumMethod::Dense).unwrap();
        assert!((sp.lambda1_per_site - 1.0).abs() < 1e-15);

        let s = MeasurementSettings::uniform(pair(uv(1.0, 0.0, 0.0), uv(0.0, 1.0, 0.0)), 1);
        let sp = transfer_spectrum(&mixed_transfer_matrix(&up, &s).unwrap(), SpectrumMethod::Dense).unwrap();
        assert!(sp.lambda1_per_site.abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let plus = UniformMps::<f64>::product([creal(r), creal(r)]);
        let sp = transfer_spectrum(&mixed_transfer_matrix(&plus, &s).unwrap(), SpectrumMethod::Dense).unwrap();
        assert!((sp.lambda1_per_site - r).abs() < 1e-12);
    }

    #[test]
    fn diagonal_spectra() {
        let sp = spectrum_from_eigenvalues(vec![creal(1.0f64), creal(1.0)], 1).unwrap();
        assert_eq!((sp.lambda1_per_site, sp.gap), (1.0, 0.0));
        let sp = spectrum_from_eigenvalues(vec![creal(0.5f64), creal(1.2)], 1).unwrap();
        assert!((sp.lambda1_per_site - 1.2).abs() < 1e-15 && (sp.gap - 0.7).abs() < 1e-15);
    }

    #[test]
    fn chsh_and_mermin_values() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let z = uv(0.0, 0.0, 1.0);
        let x = uv(1.0, 0.0, 0.0);
        let settings = MeasurementSettings::new(vec![
            pair(z, x),
            pair(uv(r, 0.0, r), uv(-r, 0.0, r)),
        ])
        .unwrap();
        let mut singlet = CVec::<f64>::zeros(4);
        singlet[1] = creal(r);
        singlet[2] = creal(-r);
        let gs = FiniteGroundState { n_sites: 2, state: singlet, energy: 0.0 };
        let v = bell_value_finite(&gs, &settings).unwrap();
        assert!((v.abs() - 2f64.sqrt()).abs() < 1e-12, "{v}");

        let y = uv(0.0, 1.0, 0.0);
        let settings = MeasurementSettings::uniform(pair(y, uv(-1.0, 0.0, 0.0)), 3);
        let mut ghz = CVec::<f64>::zeros(8);
        ghz[0] = creal(r);
        ghz[7] = creal(r);
        let f = brute_force_bell_operator(&settings, 3).unwrap();
        let v = ghz.dotc(&(&f * &ghz));
        assert!((v.norm() - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn recursion_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3usize, 5] {
            let pairs = (0..n)
                .map(|_| {
                    let a = BlochAngles::new(rng.gen_range(0.0..3.1), rng.gen_range(0.0..6.2)).unwrap();
                    let b = BlochAngles::new(rng.gen_range(0.0..3.1), rng.gen_range(0.0..6.2)).unwrap();
                    pair(a.vector(), b.vector())
                })
                .collect();
            let s = MeasurementSettings::new(pairs).unwrap();
            let mps = OpenMps::<f64>::random(n, 3, &mut rng);
            let psi = mps.to_dense();
            let psi = &psi / creal(psi.norm());
            let dense = psi.dotc(&(brute_force_bell_operator(&s, n).unwrap() * &psi));
            let vecwise = bell_expectation_vector(&psi, n, &s);
            let contracted = mpo_expectation(&mps, &s);
            assert!((dense - vecwise).norm() < 1e-12);
            assert!((dense - contracted).norm() < 1e-12);
        }
    }

    #[test]
    fn open_mps_from_state_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mps = OpenMps::<f64>::random(6, 4, &mut rng);
        let psi = mps.to_dense();
        let back = OpenMps::from_state(&psi, 6).unwrap().to_dense();
        assert!((psi - back).norm() < 1e-10);
    }

    #[test]
    fn brute_force_guard() {
        let z = uv(0.0, 0.0, 1.0);
        let s = MeasurementSettings::uniform(pair(z, z), 1);
        assert!(matches!(brute_force_bell_operator(&s, 11), Err(Error::Resource(_))));
    }
}
