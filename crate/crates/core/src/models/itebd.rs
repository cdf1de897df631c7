//! Infinite-chain ground states by imaginary-time evolution (iTEBD) on a
//! blocked two-site unit cell, followed by an exact canonicalisation.

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{blocked_bond_hamiltonian, ModelSpec};
use crate::error::{Error, Result};
use nalgebra::{ComplexField, DMatrix};

use crate::linalg::{eigh, kron_all, CMat};
use crate::scalar::{creal, lit, to_f64, Real, C};

/// A tensor stored as one `D_left × D_right` matrix per physical index.
pub type SiteTensor<T> = Vec<CMat<T>>;

/// Translation-invariant MPS in left-canonical form.
///
/// Each tensor covers `block` physical spins (physical dimension
/// `2^block`). `schmidt[k]` holds the Schmidt coefficients on the bond to
/// the right of tensor `k`, sorted descending with unit squared sum, so the
/// right environment of that bond is `diag(schmidt[k]²)` and the left
/// environment of every bond is the identity.
#[derive(Clone, Debug)]
pub struct UniformMps<T: Real> {
    pub tensors: Vec<SiteTensor<T>>,
    pub schmidt: Vec<Vec<T>>,
    pub block: usize,
    pub chi: usize,
    pub energy_per_site: T,
}

impl<T: Real> UniformMps<T> {
    /// Product state with the same single-spin state on every site.
    pub fn product(spinor: [C<T>; 2]) -> Self {
        let n = (spinor[0].norm_sqr() + spinor[1].norm_sqr()).sqrt();
        let tensor = vec![
            CMat::from_element(1, 1, spinor[0] / creal(n)),
            CMat::from_element(1, 1, spinor[1] / creal(n)),
        ];
        Self {
            tensors: vec![tensor],
            schmidt: vec![vec![T::one()]],
            block: 1,
            chi: 1,
            energy_per_site: T::zero(),
        }
    }

    /// Builds a canonical MPS from arbitrary tensors of one unit cell.
    pub fn from_tensors(tensors: Vec<SiteTensor<T>>, block: usize, chi: usize) -> Result<Self> {
        let (tensors, schmidt) = canonicalize_cell(&tensors, None, chi, lit(1e-13))?;
        Ok(Self { tensors, schmidt, block, chi, energy_per_site: T::zero() })
    }

    pub fn n_tensors(&self) -> usize {
        self.tensors.len()
    }

    pub fn phys_dim(&self) -> usize {
        self.tensors[0].len()
    }

    /// Physical spins per unit cell.
    pub fn cell_sites(&self) -> usize {
        self.n_tensors() * self.block
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.schmidt.iter().map(|s| s.len()).collect()
    }

    /// Largest residual of the left (`Σ A†A = 1`) and right
    /// (`Σ A Λ² A† = Λ_prev²`) fixed-point equations.
    pub fn canonical_defect(&self) -> T {
        let n = self.n_tensors();
        let mut worst = T::zero();
        for k in 0..n {
            let a = &self.tensors[k];
            let dr = a[0].ncols();
            let mut left = CMat::<T>::zeros(dr, dr);
            for m in a {
                left += m.adjoint() * m;
            }
            left -= CMat::identity(dr, dr);
            worst = worst.max(max_abs(&left));

            let lam_r = &self.schmidt[k];
            let lam_l = &self.schmidt[(k + n - 1) % n];
            let mut right = CMat::<T>::zeros(a[0].nrows(), a[0].nrows());
            for m in a {
                let ml = scale_cols(m, &lam_r.iter().map(|&x| x * x).collect::<Vec<_>>());
                right += ml * m.adjoint();
            }
            for (i, &l) in lam_l.iter().enumerate() {
                right[(i, i)] -= creal(l * l);
            }
            worst = worst.max(max_abs(&right));
        }
        worst
    }

    /// Reduced density matrix of `n_blocks` consecutive tensors starting at
    /// tensor `first`, on the `phys_dim^n_blocks` space.
    pub fn reduced_density(&self, first: usize, n_blocks: usize) -> CMat<T> {
        let n = self.n_tensors();
        let d = self.phys_dim();
        let dl = self.tensors[first % n][0].nrows();
        let mut prods: Vec<CMat<T>> = vec![CMat::identity(dl, dl)];
        for j in 0..n_blocks {
            let a = &self.tensors[(first + j) % n];
            let mut next = Vec::with_capacity(prods.len() * d);
            for p in &prods {
                for m in a {
                    next.push(p * m);
                }
            }
            prods = next;
        }
        let last = (first + n_blocks - 1) % n;
        let lam2: Vec<T> = self.schmidt[last].iter().map(|&x| x * x).collect();
        let weighted: Vec<CMat<T>> = prods.iter().map(|p| scale_cols(p, &lam2)).collect();
        let dim = prods.len();
        let mut rho = CMat::<T>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                rho[(i, j)] = weighted[i].dot(&prods[j]).conj();
            }
        }
        rho
    }

    /// Largest-modulus eigenvalue of the plain transfer channel of one cell.
    pub fn transfer_spectral_radius(&self) -> T {
        let dl = self.tensors[0][0].nrows();
        let (eta, _) = dominant_fixed_point(
            |x: &CMat<T>| {
                let mut y = x.clone();
                for a in &self.tensors {
                    y = left_apply(a, &y);
                }
                y
            },
            CMat::identity(dl, dl),
            5000,
        );
        eta
    }
}

/// `⟨O_offset ⊗ O_{offset+1} ⊗ …⟩` for single-spin operators on consecutive
/// physical sites, counted from the start of the unit cell.
pub fn mps_local_expectation<T: Real>(
    mps: &UniformMps<T>,
    op_string: &[CMat<T>],
    offset: usize,
) -> Result<T> {
    if op_string.is_empty() || op_string.len() > 4 {
        return Err(Error::Config("operator strings hold 1 to 4 operators".into()));
    }
    if op_string.iter().any(|o| o.nrows() != 2 || o.ncols() != 2) {
        return Err(Error::Config("operators must be 2x2".into()));
    }
    let b = mps.block;
    let offset = offset % mps.cell_sites();
    let first_block = offset / b;
    let lead = offset - first_block * b;
    let n_blocks = (lead + op_string.len()).div_ceil(b);
    let mut ops: Vec<CMat<T>> = Vec::with_capacity(n_blocks * b);
    for site in 0..n_blocks * b {
        if site >= lead && site < lead + op_string.len() {
            ops.push(op_string[site - lead].clone());
        } else {
            ops.push(CMat::identity(2, 2));
        }
    }
    let op = kron_all(&ops);
    let rho = mps.reduced_density(first_block, n_blocks);
    Ok((rho * op).trace().re)
}

/// Parameters of the imaginary-time solver.
#[derive(Clone, Debug, PartialEq)]
pub struct ItebdOptions {
    pub chi: usize,
    /// Trotter steps, run in order. Every stage runs until the energy is
    /// stationary or the step budget is spent; only the last stage must
    /// reach `tol`.
    pub schedule: Vec<f64>,
    /// Energy change between successive checks that ends a stage.
    pub tol: f64,
    /// Step budget per stage.
    pub max_steps: usize,
    pub check_every: usize,
    /// Relative Schmidt-value cutoff.
    pub svd_cutoff: f64,
    pub seed: u64,
}

impl Default for ItebdOptions {
    fn default() -> Self {
        Self {
            chi: 16,
            schedule: vec![0.1, 0.01, 0.001],
            tol: 1e-10,
            max_steps: 20_000,
            check_every: 10,
            svd_cutoff: 1e-12,
            seed: 0,
        }
    }
}

impl ItebdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(2..=64).contains(&self.chi) {
            return Err(Error::Config(format!("chi = {} outside [2, 64]", self.chi)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if self.schedule.is_empty() || self.schedule.iter().any(|&dt| !(dt > 0.0)) {
            return Err(Error::Config("time steps must be positive".into()));
        }
        if self.max_steps == 0 || self.check_every == 0 {
            return Err(Error::Config("step budget must be positive".into()));
        }
        Ok(())
    }
}

/// Ground state with the default schedule.
pub fn ground_state_umps<T: Real>(
    spec: &ModelSpec,
    chi: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<UniformMps<T>> {
    let opts = ItebdOptions { chi, tol, max_steps: max_sweeps, ..ItebdOptions::default() };
    ground_state_umps_with(spec, &opts)
}

pub fn ground_state_umps_with<T: Real>(
    spec: &ModelSpec,
    opts: &ItebdOptions,
) -> Result<UniformMps<T>> {
    spec.validate()?;
    opts.validate()?;
    let b = spec.block_size();
    let d = 1usize << b;
    let hb = blocked_bond_hamiltonian::<T>(spec, b)?;
    let (w, v) = eigh(&hb)?;
    let gates: Vec<CMat<T>> = opts
        .schedule
        .iter()
        .map(|&dt| {
            let decay: Vec<C<T>> = w.iter().map(|&e| creal((-lit::<T>(dt) * e).exp())).collect();
            &v * CMat::from_diagonal(&nalgebra::DVector::from_vec(decay)) * v.adjoint()
        })
        .collect();
    let real = hb.iter().all(|z| z.im == T::zero())
        && gates.iter().flatten().all(|z| crate::scalar::abs(z.im) < lit(1e-14));

    let (cell, boundary, energy) = if real {
        let re = |m: &CMat<T>| m.map(|z| z.re);
        let gates: Vec<DMatrix<T>> = gates.iter().map(re).collect();
        Evolution::<T>::random(d, opts.seed).run(spec, &re(&hb), &gates, opts, b, creal)?
    } else {
        Evolution::<C<T>>::random(d, opts.seed).run(spec, &hb, &gates, opts, b, |z| z)?
    };
    let cutoff = lit::<T>(opts.svd_cutoff);
    let (tensors, schmidt) = canonicalize_cell(&cell, Some(&boundary), opts.chi, cutoff)?;
    let mut mps = UniformMps { tensors, schmidt, block: b, chi: opts.chi, energy_per_site: T::zero() };
    let exact = (0..2).map(|k| bond_energy_canonical(&mps, k, &hb)).fold(T::zero(), |a, e| a + e)
        / lit((2 * b) as f64);
    mps.energy_per_site = exact;
    info!(
        "{spec}: chi={} bonds={:?} energy/site={:.10} (evolution {:.10})",
        opts.chi,
        mps.bond_dims(),
        to_f64(exact),
        energy
    );
    Ok(mps)
}

fn max_abs<T: Real>(m: &CMat<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(crate::scalar::modulus(*z)))
}

fn scale_cols<T: Real>(m: &CMat<T>, w: &[T]) -> CMat<T> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= creal(w[j]);
    }
    out
}

/// `Σ_σ A^σ† x A^σ`.
fn left_apply<T: Real>(a: &SiteTensor<T>, x: &CMat<T>) -> CMat<T> {
    let mut out = CMat::<T>::zeros(a[0].ncols(), a[0].ncols());
    for m in a {
        out += m.adjoint() * x * m;
    }
    out
}

/// Power iteration for the dominant Hermitian fixed point of a completely
/// positive map.
fn dominant_fixed_point<T: Real, F>(apply: F, start: CMat<T>, max_iter: usize) -> (T, CMat<T>)
where
    F: Fn(&CMat<T>) -> CMat<T>,
{
    let mut x = start;
    x /= creal(x.norm());
    let mut eta = T::one();
    for it in 0..max_iter {
        let mut y = apply(&x);
        y = (&y + y.adjoint()) * creal(lit::<T>(0.5));
        let n = y.norm();
        eta = x.dotc(&y).re;
        y /= creal(n);
        if y.trace().re < T::zero() {
            y = -y;
        }
        let change = (&y - &x).norm();
        x = y;
        if change < lit(1e-14) {
            debug!("fixed point after {it} iterations");
            return (eta, x);
        }
    }
    warn!("fixed-point iteration reached {max_iter} steps");
    (eta, x)
}

/// Rotates the QR factors so that `R` has a real non-negative diagonal.
fn positive_qr<T: Real>(m: CMat<T>) -> (CMat<T>, CMat<T>) {
    let qr = m.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows().min(r.ncols()) {
        let z = r[(i, i)];
        let n = crate::scalar::modulus(z);
        if n > T::zero() {
            let ph = z / creal(n);
            let mut row = r.row_mut(i);
            row *= ph.conj();
            let mut col = q.column_mut(i);
            col *= ph;
        }
    }
    (q, r)
}

/// Finds `L` and an isometric `A_L` with `L P^σ = A_L^σ L` by repeated QR.
fn left_orthonormalize<T: Real>(p: &SiteTensor<T>, start: CMat<T>) -> (SiteTensor<T>, CMat<T>) {
    let d = p.len();
    let dim = p[0].nrows();
    let mut l = &start / creal(start.norm());
    let mut a: SiteTensor<T> = Vec::new();
    for it in 0..MAX_GAUGE_ITERS {
        let mut stacked = CMat::<T>::zeros(d * dim, dim);
        for (s, m) in p.iter().enumerate() {
            stacked.view_mut((s * dim, 0), (dim, dim)).copy_from(&(&l * m));
        }
        let (q, mut r) = positive_qr(stacked);
        r /= creal(r.norm());
        a = (0..d).map(|s| q.rows(s * dim, dim).into_owned()).collect();
        let change = (&r - &l).norm();
        l = r;
        if change < lit(GAUGE_TOL) {
            debug!("left gauge converged after {it} iterations");
            return (a, l);
        }
    }
    warn!("left gauge iteration reached {MAX_GAUGE_ITERS} steps");
    (a, l)
}

/// Finds `R` and a co-isometric `A_R` with `P^σ R = R A_R^σ`.
fn right_orthonormalize<T: Real>(p: &SiteTensor<T>, start: CMat<T>) -> (SiteTensor<T>, CMat<T>) {
    let adj: SiteTensor<T> = p.iter().map(|m| m.adjoint()).collect();
    let (al, l) = left_orthonormalize(&adj, start.adjoint());
    (al.iter().map(|m| m.adjoint()).collect(), l.adjoint())
}

const MAX_GAUGE_ITERS: usize = 100_000;
const GAUGE_TOL: f64 = 1e-14;

/// Exact canonical form of a uniform MPS whose unit cell is `cell`.
///
/// `right_guess` seeds the right gauge matrix; for tensors already close to
/// left-canonical form the Schmidt values of the boundary bond are a good
/// choice. Returns left-canonical tensors and the Schmidt values on the
/// bond to the right of each tensor.
fn canonicalize_cell<T: Real>(
    cell: &[SiteTensor<T>],
    right_guess: Option<&[T]>,
    chi: usize,
    cutoff: T,
) -> Result<(Vec<SiteTensor<T>>, Vec<Vec<T>>)> {
    let n = cell.len();
    let dim = cell[0][0].nrows();
    if cell.iter().any(|t| t.is_empty()) || cell[n - 1][0].ncols() != dim {
        return Err(Error::Config("unit cell tensors do not close".into()));
    }
    let site_dims: Vec<usize> = cell.iter().map(|t| t.len()).collect();
    let mut prod: SiteTensor<T> = vec![CMat::identity(dim, dim)];
    for t in cell {
        prod = prod.iter().flat_map(|p| t.iter().map(move |m| p * m)).collect();
    }

    let (al, l) = left_orthonormalize(&prod, CMat::identity(dim, dim));
    let r0 = match right_guess {
        Some(g) if g.len() == dim => CMat::from_diagonal(&nalgebra::DVector::from_vec(
            g.iter().map(|&x| creal(x)).collect(),
        )),
        _ => CMat::identity(dim, dim),
    };
    let (_, r) = right_orthonormalize(&prod, r0);
    let svd = (&l * &r).svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numeric("svd failed".into()))?;
    let s0 = svd.singular_values[0];
    if !(s0 > T::zero()) {
        return Err(Error::Numeric("degenerate gauge matrix".into()));
    }
    let keep = svd.singular_values.iter().filter(|&&s| s > s0 * cutoff).count().min(chi.max(1));
    let lam0 = normalized(svd.singular_values.iter().take(keep).copied().collect());
    let uk = u.columns(0, keep).into_owned();
    let mut rest: SiteTensor<T> = al.iter().map(|m| uk.adjoint() * m * &uk).collect();

    // Peel one site at a time off the left-canonical cell tensor.
    let mut tensors: Vec<SiteTensor<T>> = Vec::with_capacity(n);
    let mut schmidt: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut rest_dims = site_dims.clone();
    for k in 0..n - 1 {
        let dk = rest_dims[0];
        let tail: usize = rest_dims[1..].iter().product();
        let dl = rest[0].nrows();
        let dr = rest[0].ncols();
        let mut big = CMat::<T>::zeros(dk * dl, tail * dr);
        for sk in 0..dk {
            for st in 0..tail {
                let m = scale_cols(&rest[sk * tail + st], &lam0);
                big.view_mut((sk * dl, st * dr), (dl, dr)).copy_from(&m);
            }
        }
        let svd = big.svd(true, false);
        let u = svd.u.ok_or_else(|| Error::Numeric("svd failed".into()))?;
        let s0 = svd.singular_values[0];
        let keep = svd.singular_values.iter().filter(|&&s| s > s0 * cutoff).count().min(chi.max(1));
        let lam = normalized(svd.singular_values.iter().take(keep).copied().collect());
        let uk = u.columns(0, keep).into_owned();
        tensors.push((0..dk).map(|s| uk.rows(s * dl, dl).into_owned()).collect());
        schmidt.push(lam);
        let mut next = Vec::with_capacity(tail);
        for st in 0..tail {
            let mut m = CMat::<T>::zeros(keep, dr);
            for sk in 0..dk {
                m += uk.rows(sk * dl, dl).adjoint() * &rest[sk * tail + st];
            }
            next.push(m);
        }
        rest = next;
        rest_dims.remove(0);
        debug!("split site {k}: bond {keep}");
    }
    tensors.push(rest);
    schmidt.push(lam0);
    Ok((tensors, schmidt))
}

fn normalized<T: Real>(v: Vec<T>) -> Vec<T> {
    let n = v.iter().fold(T::zero(), |a, &s| a + s * s).sqrt();
    v.into_iter().map(|s| s / n).collect()
}

/// Hastings-form iTEBD state over the field `N`, which is either the real
/// scalar (for real Hamiltonians) or its complex extension.
struct Evolution<N: ComplexField> {
    gam: [Vec<DMatrix<N>>; 2],
    lam: [Vec<N::RealField>; 2],
    d: usize,
}

fn scale_rows_n<N: ComplexField + Copy>(w: &[N::RealField], m: &DMatrix<N>) -> DMatrix<N> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= N::from_real(w[i].clone());
    }
    out
}

fn scale_cols_n<N: ComplexField + Copy>(m: &DMatrix<N>, w: &[N::RealField]) -> DMatrix<N> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= N::from_real(w[j].clone());
    }
    out
}

impl<N> Evolution<N>
where
    N: ComplexField + Copy,
    N::RealField: Real,
{
    fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gam = [0, 1].map(|_| {
            (0..d)
                .map(|_| DMatrix::from_element(1, 1, N::from_real(lit(rng.gen_range(-1.0..1.0)))))
                .collect()
        });
        let one = lit::<N::RealField>(1.0);
        Self { gam, lam: [vec![one], vec![one]], d }
    }

    /// `θ^{st}_{ij} = (λ_b Γ_a^s λ_a Γ_b^t λ_b)_{ij}` laid out with rows
    /// `s·d + t` and columns `i·D + j`.
    fn theta(&self, a: usize) -> DMatrix<N> {
        let bb = 1 - a;
        let d = self.d;
        let la = &self.lam[bb];
        let lb = &self.lam[a];
        let left: Vec<DMatrix<N>> =
            self.gam[a].iter().map(|g| scale_cols_n(&scale_rows_n(la, g), lb)).collect();
        let right: Vec<DMatrix<N>> = self.gam[bb].iter().map(|g| scale_cols_n(g, la)).collect();
        let n = la.len();
        let mut theta = DMatrix::<N>::zeros(d * d, n * n);
        for s in 0..d {
            for t in 0..d {
                let m = &left[s] * &right[t];
                for i in 0..n {
                    for j in 0..n {
                        theta[(s * d + t, i * n + j)] = m[(i, j)];
                    }
                }
            }
        }
        theta
    }

    fn energy(&self, a: usize, hb: &DMatrix<N>) -> f64 {
        let theta = self.theta(a);
        let num = theta.dotc(&(hb * &theta)).real();
        to_f64(num / theta.norm_squared())
    }

    /// One update of the bond between tensor `a` and `1-a`.
    fn update(&mut self, a: usize, gate: &DMatrix<N>, chi: usize, cutoff: N::RealField) {
        let bb = 1 - a;
        let d = self.d;
        let la = self.lam[bb].clone();
        let n = la.len();
        let evolved = gate * self.theta(a);
        let mut big = DMatrix::<N>::zeros(d * n, d * n);
        for s in 0..d {
            for t in 0..d {
                let row = s * d + t;
                for i in 0..n {
                    for j in 0..n {
                        big[(s * n + i, t * n + j)] = evolved[(row, i * n + j)];
                    }
                }
            }
        }
        let svd = big.svd(true, true);
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return,
        };
        let s0 = svd.singular_values[0];
        let keep = svd.singular_values.iter().filter(|&&s| s > s0 * cutoff).count().min(chi);
        let s = normalized(svd.singular_values.iter().take(keep).copied().collect());
        let inv: Vec<N::RealField> = la.iter().map(|&l| lit::<N::RealField>(1.0) / l).collect();
        self.gam[a] = (0..d)
            .map(|si| scale_rows_n(&inv, &u.view((si * n, 0), (n, keep)).into_owned()))
            .collect();
        self.gam[bb] = (0..d)
            .map(|ti| scale_cols_n(&vt.view((0, ti * n), (keep, n)).into_owned(), &inv))
            .collect();
        self.lam[a] = s;
    }

    /// Runs the schedule and returns the unit cell `[λ1 Γ0, λ0 Γ1]`, the
    /// boundary Schmidt values and the last evolution energy per site.
    fn run<F: Fn(N) -> C<N::RealField>>(
        mut self,
        spec: &ModelSpec,
        hb: &DMatrix<N>,
        gates: &[DMatrix<N>],
        opts: &ItebdOptions,
        b: usize,
        to_complex: F,
    ) -> Result<(Vec<SiteTensor<N::RealField>>, Vec<N::RealField>, f64)> {
        let cutoff = lit::<N::RealField>(opts.svd_cutoff);
        let mut energy = f64::NAN;
        let stages = gates.len();
        for (stage, (gate, &dt)) in gates.iter().zip(&opts.schedule).enumerate() {
            let mut previous: Option<f64> = None;
            let mut delta = f64::INFINITY;
            let mut done = false;
            for step in 1..=opts.max_steps {
                for a in 0..2 {
                    self.update(a, gate, opts.chi, cutoff);
                }
                if step % opts.check_every == 0 {
                    let e = (self.energy(0, hb) + self.energy(1, hb)) / (2 * b) as f64;
                    if let Some(p) = previous {
                        delta = (e - p).abs();
                        done = delta < opts.tol;
                    }
                    previous = Some(e);
                    energy = e;
                    if done {
                        debug!("{spec}: dt={dt} stationary after {step} steps, e={e:.12}");
                        break;
                    }
                }
            }
            if !done {
                warn!("{spec}: dt={dt} not stationary after {} steps", opts.max_steps);
                // Only the last stage decides convergence.
                if stage + 1 == stages {
                    return Err(Error::Convergence { iterations: opts.max_steps, last_delta: delta });
                }
            }
        }
        let convert = |m: DMatrix<N>| m.map(&to_complex);
        let cell = vec![
            self.gam[0].iter().map(|g| convert(scale_rows_n(&self.lam[1], g))).collect(),
            self.gam[1].iter().map(|g| convert(scale_rows_n(&self.lam[0], g))).collect(),
        ];
        Ok((cell, self.lam[1].clone(), energy))
    }
}

fn bond_energy_canonical<T: Real>(mps: &UniformMps<T>, k: usize, hb: &CMat<T>) -> T {
    let rho = mps.reduced_density(k, 2);
    (rho * hb).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pauli_x, pauli_z};

    #[test]
    fn cluster_point_is_exact() {
        let spec = ModelSpec::cluster_ising(0.0, 0.0);
        let mps: UniformMps<f64> = ground_state_umps(&spec, 4, 1e-10, 20_000).unwrap();
        assert!((mps.energy_per_site + 1.0).abs() < 1e-6, "{}", mps.energy_per_site);
        assert!(mps.canonical_defect() < 1e-8);
        let s = mps_local_expectation(&mps, &[pauli_x(), pauli_z(), pauli_x()], 0).unwrap();
        assert!((s - 1.0).abs() < 1e-6);
        let s = mps_local_expectation(&mps, &[pauli_x(), pauli_z(), pauli_x()], 1).unwrap();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn polarized_limit() {
        let mps: UniformMps<f64> = ground_state_umps(&ModelSpec::tfim(20.0), 4, 1e-10, 20_000).unwrap();
        let z = mps_local_expectation(&mps, &[pauli_z()], 0).unwrap();
        assert!(z > 0.999);
        assert!(mps.canonical_defect() < 1e-8, "{} {:?} {:?}", mps.canonical_defect(), mps.bond_dims(), mps.schmidt);
    }

    #[test]
    fn canonical_near_critical() {
        let spec = ModelSpec::cluster_ising(0.0, 0.9);
        let mps: UniformMps<f64> = ground_state_umps(&spec, 8, 1e-10, 20_000).unwrap();
        assert!(mps.canonical_defect() < 1e-8, "{}", mps.canonical_defect());
        assert!((mps.transfer_spectral_radius() - 1.0).abs() < 1e-8);
        for s in &mps.schmidt {
            assert!(s.windows(2).all(|w| w[0] >= w[1]) && s.iter().all(|&x| x > 0.0));
            assert!((s.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
