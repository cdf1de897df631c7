//! Small dense linear-algebra helpers on complex matrices, plus a restarted
//! Arnoldi iteration for the few largest-modulus eigenvalues of an implicit
//! operator.

use nalgebra::{ComplexField, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{abs, creal, lit, Real, C};

pub type CMat<T> = DMatrix<C<T>>;
pub type CVec<T> = DVector<C<T>>;

pub fn pauli_x<T: Real>() -> CMat<T> {
    let (o, z) = (C::new(T::one(), T::zero()), C::new(T::zero(), T::zero()));
    CMat::from_row_slice(2, 2, &[z, o, o, z])
}

pub fn pauli_y<T: Real>() -> CMat<T> {
    let (i, z) = (C::new(T::zero(), T::one()), C::new(T::zero(), T::zero()));
    CMat::from_row_slice(2, 2, &[z, -i, i, z])
}

pub fn pauli_z<T: Real>() -> CMat<T> {
    let (o, z) = (C::new(T::one(), T::zero()), C::new(T::zero(), T::zero()));
    CMat::from_row_slice(2, 2, &[o, z, z, -o])
}

pub fn identity<T: Real>(d: usize) -> CMat<T> {
    CMat::identity(d, d)
}

/// Kronecker product `a ⊗ b`, with `a` acting on the more significant index.
pub fn kron<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    a.kronecker(b)
}

pub fn kron_all<T: Real>(ops: &[CMat<T>]) -> CMat<T> {
    ops.iter()
        .fold(CMat::identity(1, 1), |acc, op| acc.kronecker(op))
}

/// Largest entry of `|m - m†|`.
pub fn hermiticity_defect<T: Real>(m: &CMat<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).modulus();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh<T: Real>(m: &CMat<T>) -> Result<(Vec<T>, CMat<T>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::Numeric("eigh of a non-square matrix".into()));
    }
    let scale = m.iter().fold(T::one(), |acc, z| acc.max(z.modulus()));
    if hermiticity_defect(m) > lit::<T>(1e-9) * scale {
        return Err(Error::Numeric("matrix is not Hermitian".into()));
    }
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numeric("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

/// All eigenvalues of a general complex matrix via the complex Schur form.
pub fn eigenvalues<T: Real>(m: &CMat<T>) -> Result<Vec<C<T>>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Numeric("eigenvalues of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Eigenpairs of a general complex matrix: Schur form followed by
/// back-substitution on the triangular factor. Vectors are unit-normalised.
pub fn eig<T: Real>(m: &CMat<T>) -> Result<(Vec<C<T>>, CMat<T>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Numeric("eig of a non-square matrix".into()));
    }
    if n == 1 {
        return Ok((vec![m[(0, 0)]], CMat::identity(1, 1)));
    }
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().fold(T::zero(), |acc, z| acc.max(z.modulus()));
    let floor = T::default_epsilon() * scale.max(T::one());
    let mut x = CMat::<T>::zeros(n, n);
    for i in 0..n {
        let lam = t[(i, i)];
        x[(i, i)] = creal(T::one());
        for j in (0..i).rev() {
            let mut acc = C::new(T::zero(), T::zero());
            for l in (j + 1)..=i {
                acc += t[(j, l)] * x[(l, i)];
            }
            let mut den = t[(j, j)] - lam;
            if den.modulus() < floor {
                den = creal(floor);
            }
            x[(j, i)] = -acc / den;
        }
    }
    let mut vecs = q * x;
    for mut col in vecs.column_iter_mut() {
        let nrm = col.norm();
        if nrm > T::zero() {
            col /= creal(nrm);
        }
    }
    Ok(((0..n).map(|i| t[(i, i)]).collect(), vecs))
}

/// Comparator placing larger modulus first; near-ties (relative 1e-12) are
/// broken by larger real part, then larger imaginary part.
pub fn modulus_order<T: Real>(a: &C<T>, b: &C<T>) -> std::cmp::Ordering {
    use std::cmp::Ordering::Equal;
    let tie = lit::<T>(1e-12);
    let (ma, mb) = (a.modulus(), b.modulus());
    let scale = ma.max(mb);
    if abs(ma - mb) > tie * scale {
        return mb.partial_cmp(&ma).unwrap_or(Equal);
    }
    if abs(a.re - b.re) > tie * scale {
        return b.re.partial_cmp(&a.re).unwrap_or(Equal);
    }
    b.im.partial_cmp(&a.im).unwrap_or(Equal)
}

pub fn sort_by_modulus<T: Real>(vals: &mut [C<T>]) {
    vals.sort_by(modulus_order);
}

/// Settings for [`arnoldi_top`].
#[derive(Clone, Debug)]
pub struct ArnoldiOptions<T> {
    pub krylov_dim: usize,
    pub tol: T,
    pub max_restarts: usize,
}

impl<T: Real> Default for ArnoldiOptions<T> {
    fn default() -> Self {
        Self {
            krylov_dim: 30,
            tol: lit(1e-11),
            max_restarts: 40,
        }
    }
}

fn dot<T: Real>(a: &CVec<T>, b: &CVec<T>) -> C<T> {
    a.dotc(b)
}

/// The `k` largest-modulus eigenvalues of the linear map `apply` on `C^n`.
///
/// Explicitly restarted Arnoldi with full reorthogonalisation. The start
/// vector is fixed, so results are reproducible bit for bit. Exact
/// multiplicities are not resolved: a Krylov space sees each distinct
/// eigenvalue once.
pub fn arnoldi_top<T, F>(
    n: usize,
    k: usize,
    apply: F,
    start: &CVec<T>,
    opts: &ArnoldiOptions<T>,
) -> Result<Vec<C<T>>>
where
    T: Real,
    F: Fn(&CVec<T>) -> CVec<T>,
{
    if start.len() != n {
        return Err(Error::Config("Arnoldi start vector has wrong length".into()));
    }
    let want = k.min(n);
    let mut v0 = start.clone();
    let mut last: Vec<C<T>> = Vec::new();
    let mut m = opts.krylov_dim.max(want + 4).min(n);
    for _restart in 0..=opts.max_restarts {
        let nrm = v0.norm();
        if nrm == T::zero() {
            return Err(Error::Numeric("Arnoldi start vector vanished".into()));
        }
        v0 /= creal(nrm);
        let mut basis: Vec<CVec<T>> = vec![v0.clone()];
        let mut h = CMat::<T>::zeros(m + 1, m);
        let mut dim = m;
        let mut breakdown = false;
        for j in 0..m {
            let mut w = apply(&basis[j]);
            let wnorm0 = w.norm();
            for _pass in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let c = dot(vi, &w);
                    h[(i, j)] += c;
                    w.axpy(-c, vi, creal(T::one()));
                }
            }
            let beta = w.norm();
            h[(j + 1, j)] = creal(beta);
            if beta <= lit::<T>(1e-13) * wnorm0 || beta == T::zero() {
                dim = j + 1;
                breakdown = true;
                break;
            }
            basis.push(w / creal(beta));
        }
        let hm = h.view((0, 0), (dim, dim)).into_owned();
        let (vals, vecs) = eig(&hm)?;
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| modulus_order(&vals[a], &vals[b]));
        let top: Vec<usize> = order.iter().take(want).copied().collect();
        let result: Vec<C<T>> = top.iter().map(|&i| vals[i]).collect();
        if breakdown {
            return Ok(result);
        }
        let beta = h[(dim, dim - 1)].modulus();
        let lead = result
            .first()
            .map(|z| z.modulus())
            .unwrap_or(T::one())
            .max(lit(1e-30));
        let converged = top
            .iter()
            .all(|&i| beta * vecs[(dim - 1, i)].modulus() <= opts.tol * lead);
        if converged {
            return Ok(result);
        }
        // Restart from a blend of the wanted Ritz vectors (plus two spares so
        // that a near-degenerate partner is not lost).
        let spare = (want + 2).min(dim);
        let mut next = CVec::<T>::zeros(n);
        for (rank, &i) in order.iter().take(spare).enumerate() {
            let weight = creal(lit::<T>(1.0 / (1.0 + rank as f64)));
            for (row, b) in basis.iter().take(dim).enumerate() {
                next.axpy(vecs[(row, i)] * weight, b, creal(T::one()));
            }
        }
        v0 = next;
        last = result;
        m = (m + m / 2).min(n);
    }
    if last.is_empty() {
        return Err(Error::Numeric("Arnoldi produced no Ritz values".into()));
    }
    log::warn!("Arnoldi: residual tolerance not met after restarts; returning best estimate");
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    #[test]
    fn paulis_anticommute() {
        let (x, y, z) = (pauli_x::<f64>(), pauli_y::<f64>(), pauli_z::<f64>());
        let xy = &x * &y;
        let i = c(0.0, 1.0);
        assert!((xy - z.map(|e| e * i)).norm() < 1e-15);
        assert!((&x * &y + &y * &x).norm() < 1e-15);
    }

    #[test]
    fn eigh_orders_ascending() {
        let m = CMat::<f64>::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        let (vals, vecs) = eigh(&m).unwrap();
        assert_eq!(vals, vec![-1.0, 1.0]);
        assert!((vecs[(1, 0)].modulus() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m = CMat::<f64>::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(eigh(&m), Err(Error::Numeric(_))));
    }

    #[test]
    fn eig_vectors_satisfy_definition() {
        let m = CMat::<f64>::from_fn(5, 5, |i, j| c((i * 7 + j * 3) as f64 % 5.0 - 2.0, (i as f64 - j as f64) * 0.3));
        let (vals, vecs) = eig(&m).unwrap();
        for (k, lam) in vals.iter().enumerate() {
            let v = vecs.column(k).into_owned();
            let r = &m * &v - v.map(|e| e * lam);
            assert!(r.norm() < 1e-10, "residual {}", r.norm());
        }
    }

    #[test]
    fn modulus_sort_breaks_ties_by_real_part() {
        let mut v = vec![c(-1.0, 0.0), c(0.5, 0.0), c(1.0, 0.0), c(0.0, 1.0)];
        sort_by_modulus(&mut v);
        assert_eq!(v[0], c(1.0, 0.0));
        assert_eq!(v[1], c(0.0, 1.0));
        assert_eq!(v[2], c(-1.0, 0.0));
        assert_eq!(v[3], c(0.5, 0.0));
    }

    #[test]
    fn arnoldi_matches_dense_on_nonnormal_matrix() {
        let n = 60;
        let m = CMat::<f64>::from_fn(n, n, |i, j| {
            let x = ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5;
            let y = ((i * 13 + j * 29) % 19) as f64 / 19.0 - 0.5;
            c(x, y) / n as f64
        }) + CMat::from_diagonal(&DVector::from_fn(n, |i, _| c(1.0 / (1.0 + i as f64), 0.0)));
        let mut dense = eigenvalues(&m).unwrap();
        sort_by_modulus(&mut dense);
        let start = CVec::from_fn(n, |i, _| c(1.0, 0.1 * i as f64));
        let top = arnoldi_top(n, 3, |x| &m * x, &start, &ArnoldiOptions::default()).unwrap();
        for (a, b) in top.iter().zip(dense.iter()) {
            assert!((a - b).modulus() < 1e-9, "{a} vs {b}");
        }
    }
}
