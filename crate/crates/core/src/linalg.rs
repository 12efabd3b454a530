//! Sparse storage, Krylov solver and LAPACK glue shared by the solvers.

use std::ops::{AddAssign, Mul};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr<T> {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T> Csr<T>
where
    T: Copy + Zero + AddAssign + PartialEq,
{
    /// Assemble from unsorted triplets, summing duplicates and dropping zeros.
    pub fn from_triplets(rows: usize, cols: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < rows && c < cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Csr { rows, cols, indptr, indices, values };
        m.prune();
        m
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| *v != T::zero()) {
            return;
        }
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                if v != T::zero() {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r).find(|&(cc, _)| cc == c).map(|(_, v)| v).unwrap_or_else(T::zero)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.rows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut d = Array2::from_elem((self.rows, self.cols), T::zero());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[[r, c]] += v;
            }
        }
        d
    }

    pub fn transpose(&self) -> Self {
        let trip = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Csr::from_triplets(self.cols, self.rows, trip)
    }

    pub fn identity(n: usize, one: T) -> Self {
        Csr::from_triplets(n, n, (0..n).map(|i| (i, i, one)).collect())
    }

    /// Sub-block with the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.cols];
        for (j, &c) in cols.iter().enumerate() {
            col_map[c] = j;
        }
        let mut trip = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if col_map[c] != usize::MAX {
                    trip.push((i, col_map[c], v));
                }
            }
        }
        Csr::from_triplets(rows.len(), cols.len(), trip)
    }
}

impl<T> Csr<T>
where
    T: Copy + Zero + AddAssign + PartialEq + Mul<Output = T>,
{
    /// Sparse product self · other.
    pub fn matmul(&self, other: &Csr<T>) -> Csr<T> {
        assert_eq!(self.cols, other.rows);
        let mut trip = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    trip.push((r, c, a * b));
                }
            }
        }
        Csr::from_triplets(self.rows, other.cols, trip)
    }

    pub fn scale(&self, s: T) -> Csr<T> {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v = *v * s);
        m
    }

    /// Sum of two matrices with equal shapes.
    pub fn add(&self, other: &Csr<T>) -> Csr<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut trip = self.triplets();
        trip.extend(other.triplets());
        Csr::from_triplets(self.rows, self.cols, trip)
    }

    /// Kronecker product a ⊗ b.
    pub fn kron(a: &Csr<T>, b: &Csr<T>) -> Csr<T> {
        let mut trip = Vec::with_capacity(a.nnz() * b.nnz());
        for ra in 0..a.rows {
            for (ca, va) in a.row(ra) {
                for rb in 0..b.rows {
                    for (cb, vb) in b.row(rb) {
                        trip.push((ra * b.rows + rb, ca * b.cols + cb, va * vb));
                    }
                }
            }
        }
        Csr::from_triplets(a.rows * b.rows, a.cols * b.cols, trip)
    }
}

impl Csr<f64> {
    pub fn to_complex(&self) -> Csr<C64> {
        Csr {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    /// out = self · x for dense complex x.
    pub fn mul_dense(&self, x: &ArrayView2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((self.rows, x.ncols()));
        for (r, mut orow) in out.axis_iter_mut(Axis(0)).enumerate() {
            for (k, v) in self.row(r) {
                orow.scaled_add(C64::new(v, 0.0), &x.row(k));
            }
        }
        out
    }

    /// out = x · self for dense complex x.
    pub fn dense_mul(&self, x: &ArrayView2<C64>) -> Array2<C64> {
        let mut out = Array2::zeros((x.nrows(), self.cols));
        Zip::from(out.rows_mut()).and(x.rows()).for_each(|mut orow, xrow| {
            for (k, &xv) in xrow.iter().enumerate() {
                if xv == C64::zero() {
                    continue;
                }
                for (c, v) in self.row(k) {
                    orow[c] += xv * v;
                }
            }
        });
        out
    }
}

impl Csr<C64> {
    pub fn mul_vec(&self, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = C64::zero();
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            *o = acc;
        }
    }

    pub fn adjoint(&self) -> Csr<C64> {
        let trip = self.triplets().into_iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Csr::from_triplets(self.cols, self.rows, trip)
    }

    pub fn conj(&self) -> Csr<C64> {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v = v.conj());
        m
    }
}

/// Frobenius inner product Tr(a† b).
pub fn frob_dot(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    Zip::from(a).and(b).fold(C64::zero(), |acc, x, y| acc + x.conj() * y)
}

pub fn frob_norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖a − a†‖_F.
pub fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (a[[i, j]] - a[[j, i]].conj()).norm_sqr();
        }
    }
    s.sqrt()
}

pub fn hermitize(a: &mut Array2<C64>) {
    let n = a.nrows();
    for i in 0..n {
        a[[i, i]].im = 0.0;
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]].conj());
            a[[i, j]] = v;
            a[[j, i]] = v.conj();
        }
    }
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

/// Vector space operations needed by GMRES.
pub trait KrylovVector: Clone {
    fn dot(&self, other: &Self) -> C64;
    fn axpy(&mut self, a: C64, x: &Self);
    fn scale(&mut self, a: C64);
    fn norm(&self) -> f64 {
        self.dot(self).re.max(0.0).sqrt()
    }
}

impl KrylovVector for Vec<C64> {
    fn dot(&self, other: &Self) -> C64 {
        self.iter().zip(other).map(|(a, b)| a.conj() * b).sum()
    }
    fn axpy(&mut self, a: C64, x: &Self) {
        self.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
    }
    fn scale(&mut self, a: C64) {
        self.iter_mut().for_each(|y| *y *= a);
    }
}

#[derive(Clone, Debug)]
pub struct GmresReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES for `op(x) = b`; returns x.
///
/// `tol` is relative to ‖b‖. The preconditioner `prec` approximates op⁻¹ and
/// must be linear: the correction is formed as prec(Σ y_j v_j), so only the
/// Arnoldi basis is stored.
pub fn gmres<V, A, P>(
    op: A,
    prec: P,
    b: &V,
    mut x: V,
    restart: usize,
    max_iter: usize,
    tol: f64,
) -> (V, GmresReport)
where
    V: KrylovVector,
    A: Fn(&V) -> V,
    P: Fn(&V) -> V,
{
    let restart = restart.max(1);
    let bnorm = b.norm().max(f64::MIN_POSITIVE);
    let mut total = 0usize;
    loop {
        let mut r = b.clone();
        r.axpy(-C64::new(1.0, 0.0), &op(&x));
        let beta = r.norm();
        if beta / bnorm <= tol || total >= max_iter {
            let rel = beta / bnorm;
            return (x, GmresReport { iterations: total, residual: rel, converged: rel <= tol });
        }
        r.scale(C64::new(1.0 / beta, 0.0));
        let mut basis: Vec<V> = vec![r];
        let mut h = vec![vec![C64::zero(); restart + 1]; restart];
        let mut cs = vec![C64::zero(); restart];
        let mut sn = vec![C64::zero(); restart];
        let mut g = vec![C64::zero(); restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for j in 0..restart {
            let mut w = op(&prec(&basis[j]));
            for _pass in 0..2 {
                for i in 0..=j {
                    let c = basis[i].dot(&w);
                    h[j][i] += c;
                    w.axpy(-c, &basis[i]);
                }
            }
            let wn = w.norm();
            h[j][j + 1] = C64::new(wn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[j][i] + sn[i].conj() * h[j][i + 1];
                h[j][i + 1] = -sn[i] * h[j][i] + cs[i] * h[j][i + 1];
                h[j][i] = t;
            }
            let (c, s) = givens(h[j][j], h[j][j + 1]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = c.conj() * h[j][j] + s.conj() * h[j][j + 1];
            h[j][j + 1] = C64::zero();
            g[j + 1] = -s * g[j];
            g[j] = c.conj() * g[j];
            total += 1;
            k_used = j + 1;
            let res = g[j + 1].norm() / bnorm;
            if res <= tol || total >= max_iter || wn == 0.0 {
                break;
            }
            if j + 1 < restart {
                w.scale(C64::new(1.0 / wn, 0.0));
                basis.push(w);
            }
        }
        let mut yv = vec![C64::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for (l, yl) in yv.iter().enumerate().skip(i + 1) {
                s -= h[l][i] * yl;
            }
            yv[i] = s / h[i][i];
        }
        let mut comb = basis[0].clone();
        comb.scale(yv[0]);
        for (v, y) in basis.iter().zip(&yv).skip(1) {
            comb.axpy(*y, v);
        }
        drop(basis);
        x.axpy(C64::new(1.0, 0.0), &prec(&comb));
    }
}

fn givens(a: C64, b: C64) -> (C64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (C64::new(1.0, 0.0), C64::zero());
    }
    if an == 0.0 {
        return (C64::zero(), C64::new(1.0, 0.0));
    }
    let r = an.hypot(bn);
    let c = a / r;
    let s = b / r;
    (c, s)
}

/// The `k` largest eigenpairs of a symmetric tridiagonal matrix, descending.
///
/// Eigenvectors are returned as columns.
pub fn tridiag_eigh_top(diag: &[f64], off: &[f64], k: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = diag.len();
    if off.len() + 1 != n.max(1) || k == 0 || k > n {
        return Err(Error::DimensionMismatch(format!("tridiagonal n = {n}, k = {k}")));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let ni = n as i32;
    let il = (n - k + 1) as i32;
    let iu = n as i32;
    let mut m = 0i32;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * k];
    let mut isuppz = vec![0i32; 2 * k.max(1)];
    let mut info = 0i32;
    let mut lwork = -1i32;
    let mut liwork = -1i32;
    let mut wq = [0.0f64];
    let mut iwq = [0i32];
    let (vl, vu, abstol) = (0.0, 0.0, 0.0);
    // SAFETY: all buffers are sized per the LAPACK contract for jobz='V', range='I'.
    unsafe {
        lapack_sys::dstevr_(
            b"V".as_ptr() as _, b"I".as_ptr() as _, &ni, d.as_mut_ptr(), e.as_mut_ptr(), &vl, &vu,
            &il, &iu, &abstol, &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ni,
            isuppz.as_mut_ptr(), wq.as_mut_ptr(), &lwork, iwq.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack(format!("dstevr workspace query info = {info}")));
    }
    lwork = wq[0] as i32;
    liwork = iwq[0];
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dstevr_(
            b"V".as_ptr() as _, b"I".as_ptr() as _, &ni, d.as_mut_ptr(), e.as_mut_ptr(), &vl, &vu,
            &il, &iu, &abstol, &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ni,
            isuppz.as_mut_ptr(), work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork,
            &mut info,
        );
    }
    if info != 0 || m as usize != k {
        return Err(Error::Lapack(format!("dstevr info = {info}, found {m} of {k}")));
    }
    // LAPACK returns ascending order, column-major
    let mut vals = Vec::with_capacity(k);
    let mut vecs = Array2::zeros((n, k));
    for (out, col) in (0..k).rev().enumerate() {
        vals.push(w[col]);
        for i in 0..n {
            vecs[[i, out]] = z[col * n + i];
        }
    }
    Ok((vals, vecs))
}

/// Indices that sort `v` by descending real part (ties by imaginary part).
pub fn argsort_desc_re(v: &Array1<C64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| {
        v[b].re.partial_cmp(&v[a].re).unwrap_or(std::cmp::Ordering::Equal).then(
            v[b].im.partial_cmp(&v[a].im).unwrap_or(std::cmp::Ordering::Equal),
        )
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kron_and_matmul_match_dense() {
        let a = Csr::from_triplets(2, 2, vec![(0, 1, 2.0), (1, 0, 3.0), (1, 1, 1.0)]);
        let b = Csr::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, -1.0)]);
        let k = Csr::kron(&a, &b).to_dense();
        assert_eq!(k[[0, 2]], 2.0);
        assert_eq!(k[[1, 3]], -2.0);
        assert_eq!(k[[3, 1]], -3.0);
        let p = a.matmul(&a).to_dense();
        assert_eq!(p, a.to_dense().dot(&a.to_dense()));
    }

    #[test]
    fn gmres_solves_small_system() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]].mapv(|v| C64::new(v, 0.5 * v));
        let b: Vec<C64> = vec![C64::new(1.0, 0.0), C64::new(2.0, -1.0), C64::new(0.0, 3.0)];
        let op = |x: &Vec<C64>| -> Vec<C64> {
            (0..3).map(|i| (0..3).map(|j| a[[i, j]] * x[j]).sum()).collect()
        };
        let (x, rep) = gmres(op, |v: &Vec<C64>| v.clone(), &b, vec![C64::zero(); 3], 2, 50, 1e-13);
        assert!(rep.converged);
        let r = op(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).norm() < 1e-11);
        }
    }

    #[test]
    fn tridiagonal_top_eigenpairs() {
        // path-graph Laplacian-like matrix with known spectrum 2 - 2cos(kπ/(n+1))
        let n = 50;
        let d = vec![2.0; n];
        let e = vec![-1.0; n - 1];
        let (vals, vecs) = tridiag_eigh_top(&d, &e, 3).unwrap();
        for (j, v) in vals.iter().enumerate() {
            let kk = (n - j) as f64;
            let exact = 2.0 - 2.0 * (kk * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((v - exact).abs() < 1e-12);
        }
        let col = vecs.column(0);
        assert!((col.dot(&col) - 1.0).abs() < 1e-12);
    }
}
