//! Dense matrices, seeded sampling and extreme eigenvalues of symmetric matrices.

use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for [`spectral_extremes`].
pub const DEFAULT_EIG_TOL: f64 = 1e-8;
/// Default iteration cap for [`spectral_extremes`].
pub const DEFAULT_EIG_MAX_ITERS: usize = 10_000;

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix whose rows are the given slices.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!("row {i} has length {}, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "matvec: vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|row| dot(row, x)).collect())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, self.view(), other.view(), 0.0, &mut out);
        Ok(out)
    }

    /// Borrowed view of the matrix.
    pub fn view(&self) -> View<'_> {
        View { data: &self.data, rows: self.rows, cols: self.cols, rs: self.cols as isize, cs: 1 }
    }

    /// Borrowed view of the transpose, without copying.
    pub fn t(&self) -> View<'_> {
        View { data: &self.data, rows: self.cols, cols: self.rows, rs: 1, cs: self.cols as isize }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!("sub: {:?} minus {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        axpy(s, &other.data, &mut self.data);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest `|a_ij - a_ji|`, or infinity for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix with `(A + Aᵀ)/2`. Square matrices only.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols, "symmetrize needs a square matrix");
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Strided read-only matrix view used by [`gemm`].
#[derive(Clone, Copy, Debug)]
pub struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

/// `C ← α·A·B + β·C`.
///
/// # Panics
/// If the shapes are incompatible.
pub fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut Matrix) {
    assert!(
        a.cols == b.rows && c.rows == a.rows && c.cols == b.cols,
        "gemm: {}x{} times {}x{} into {}x{}",
        a.rows,
        a.cols,
        b.rows,
        b.cols,
        c.rows,
        c.cols
    );
    if c.data.is_empty() {
        return;
    }
    let last = |v: &View<'_>| {
        if v.rows == 0 || v.cols == 0 {
            0
        } else {
            ((v.rows - 1) as isize * v.rs + (v.cols - 1) as isize * v.cs) as usize
        }
    };
    assert!(a.cols == 0 || (last(&a) < a.data.len() && last(&b) < b.data.len()));
    // SAFETY: the asserts above keep every strided access of A and B inside their slices, and C
    // is a dense row-major buffer of exactly rows×cols entries.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Σ_k a_k · f(b_k)`.
#[inline]
pub fn dot_map(a: &[f64], b: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * f(y[k]);
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, &y)| x * f(y)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Σ_k a_k σ(b_k)`.
#[inline]
pub fn relu_dot(a: &[f64], b: &[f64]) -> f64 {
    dot_map(a, b, relu)
}

/// `Σ_k a_k 1{b_k ≥ 0}`.
#[inline]
pub fn masked_sum(a: &[f64], b: &[f64]) -> f64 {
    dot_map(a, b, |h| if active(h) { 1.0 } else { 0.0 })
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Active-set indicator `1{x >= 0}`; the kink counts as active.
#[inline]
pub fn active(x: f64) -> bool {
    x >= 0.0
}

pub fn mean(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().sum::<f64>() / a.len() as f64
}

/// Population variance.
pub fn variance(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let mu = mean(a);
    a.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / a.len() as f64
}

/// Deterministic random source. Identical `(seed, stream)` pairs produce identical draws.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn rademacher(&mut self) -> f64 {
        if self.inner.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform01(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.gaussian())
    }

    pub fn rademacher_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.rademacher())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub iterations_used: usize,
}

impl Spectrum {
    /// `lambda_max / lambda_min`.
    pub fn condition_number(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    /// Spectral norm of the matrix the spectrum came from.
    pub fn spectral_norm(&self) -> f64 {
        self.lambda_min.abs().max(self.lambda_max.abs())
    }
}

/// Extreme eigenvalues of a symmetric matrix by block power iteration.
///
/// `λ_max` is the dominant eigenvalue of `M + cI` minus `c`, with `c` the Gershgorin radius.
/// `λ_min` comes from inverse iteration on a Cholesky factor when `M` is positive definite and
/// otherwise from the dominant eigenvalue of `λ_max I - M`. Each run keeps a small block of
/// iterates with a Rayleigh-Ritz step so that nearly-degenerate eigenvalues do not stall
/// convergence. Iteration stops once the leading Ritz pair has
/// residual `‖Ay - θy‖ ≤ tol`, which bounds the eigenvalue error by `tol`.
pub fn spectral_extremes(m: &Matrix, tol: f64, max_iters: usize) -> Result<Spectrum> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::Dimension(format!("spectral_extremes on a {}x{} matrix", n, m.cols())));
    }
    if n == 0 {
        return Err(Error::Dimension("spectral_extremes on an empty matrix".into()));
    }
    let asym = m.asymmetry();
    if asym > tol {
        return Err(Error::NotSymmetric { tol, asym });
    }
    if !m.is_finite() {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let shift = (0..n).map(|i| norm1(m.row(i))).fold(0.0_f64, f64::max);
    if shift == 0.0 {
        return Ok(Spectrum { lambda_min: 0.0, lambda_max: 0.0, iterations_used: 0 });
    }

    let (top, it_top) = dominant_eigenvalue(m, shift, 1.0, tol, max_iters)?;
    let lambda_max = top - shift;
    let (lambda_min, it_bottom) = match cholesky(m) {
        Some(l) => smallest_by_inverse_iteration(m, &l, tol, max_iters)?,
        None => {
            let (bottom, it) = dominant_eigenvalue(m, lambda_max.abs() + tol, -1.0, tol, max_iters)?;
            (lambda_max.abs() + tol - bottom, it)
        }
    };
    Ok(Spectrum {
        lambda_min: lambda_min.min(lambda_max),
        lambda_max: lambda_max.max(lambda_min),
        iterations_used: it_top.max(it_bottom),
    })
}

/// Dominant eigenvalue of `shift·I + sign·M`, which is positive semidefinite by construction.
fn dominant_eigenvalue(m: &Matrix, shift: f64, sign: f64, tol: f64, max_iters: usize) -> Result<(f64, usize)> {
    let n = m.rows();
    let block = n.min(6);
    let apply = |x: &[f64], out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = shift * x[i] + sign * dot(m.row(i), x);
        }
    };

    let mut q = starting_block(n, block);

    let mut z: Vec<Vec<f64>> = vec![vec![0.0; n]; block];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iters {
        for (qi, zi) in q.iter().zip(z.iter_mut()) {
            apply(qi, zi);
        }
        // Rayleigh-Ritz on span(q): T = Qᵀ A Q.
        let mut t = Matrix::zeros(block, block);
        for i in 0..block {
            for j in i..block {
                let v = dot(&q[i], &z[j]);
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let (evals, evecs) = jacobi_eigen(&t);
        let lead = (0..block).max_by(|&a, &b| evals[a].total_cmp(&evals[b])).unwrap_or(0);
        let theta = evals[lead];
        let mut y = vec![0.0; n];
        let mut ay = vec![0.0; n];
        for k in 0..block {
            let c = evecs[(k, lead)];
            axpy(c, &q[k], &mut y);
            axpy(c, &z[k], &mut ay);
        }
        axpy(-theta, &y, &mut ay);
        residual = norm2(&ay);
        if residual <= tol || block == n {
            // Full block spans the space: Ritz values are exact.
            return Ok((theta, iter));
        }
        std::mem::swap(&mut q, &mut z);
        orthonormalize(&mut q);
    }
    Err(Error::NoConvergence { iters: max_iters, residual })
}

/// Lower Cholesky factor of a symmetric positive definite matrix; `None` if a pivot is not positive.
fn cholesky(m: &Matrix) -> Option<Matrix> {
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = m[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let v = (m[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j])) / djj;
            l[(i, j)] = v;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` in place.
fn cholesky_solve(l: &Matrix, x: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        x[i] = (x[i] - dot(&l.row(i)[..i], &x[..i])) / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
}

/// Smallest eigenvalue of a positive definite matrix by block inverse iteration with
/// Rayleigh-Ritz. Convergence is tested on the residual against `m` itself.
fn smallest_by_inverse_iteration(m: &Matrix, l: &Matrix, tol: f64, max_iters: usize) -> Result<(f64, usize)> {
    let n = m.rows();
    let block = n.min(6);
    let mut q = starting_block(n, block);
    let mut z: Vec<Vec<f64>> = vec![vec![0.0; n]; block];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iters {
        for (qi, zi) in q.iter().zip(z.iter_mut()) {
            zi.copy_from_slice(qi);
            cholesky_solve(l, zi);
        }
        let mut t = Matrix::zeros(block, block);
        for i in 0..block {
            for j in i..block {
                let v = 0.5 * (dot(&q[i], &z[j]) + dot(&q[j], &z[i]));
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let (evals, evecs) = jacobi_eigen(&t);
        let lead = (0..block).max_by(|&a, &b| evals[a].total_cmp(&evals[b])).unwrap_or(0);
        let mut y = vec![0.0; n];
        for k in 0..block {
            axpy(evecs[(k, lead)], &q[k], &mut y);
        }
        let nrm = norm2(&y);
        y.iter_mut().for_each(|v| *v /= nrm);
        let my = m.matvec(&y)?;
        let theta = dot(&y, &my);
        let mut r = my;
        axpy(-theta, &y, &mut r);
        residual = norm2(&r);
        if residual <= tol || block == n {
            return Ok((theta, iter));
        }
        std::mem::swap(&mut q, &mut z);
        orthonormalize(&mut q);
    }
    Err(Error::NoConvergence { iters: max_iters, residual })
}

fn starting_block(n: usize, block: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = (0..block)
        .map(|b| {
            (0..n)
                .map(|i| {
                    let t = (i * (b + 1) + 1) as f64;
                    1.0 + 0.5 * (t * 0.618_033_988_749_895).fract() + if i % block == b { 1.0 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    orthonormalize(&mut q);
    q
}

/// Modified Gram-Schmidt; degenerate columns are replaced by coordinate vectors.
fn orthonormalize(vs: &mut [Vec<f64>]) {
    let n = vs.first().map_or(0, Vec::len);
    for i in 0..vs.len() {
        for _attempt in 0..=n {
            for j in 0..i {
                let (done, rest) = vs.split_at_mut(i);
                let c = dot(&done[j], &rest[0]);
                axpy(-c, &done[j], &mut rest[0]);
            }
            let nrm = norm2(&vs[i]);
            if nrm > 1e-12 {
                vs[i].iter_mut().for_each(|x| *x /= nrm);
                break;
            }
            // Pick a coordinate vector not yet spanned.
            let k = (i + _attempt) % n;
            vs[i] = vec![0.0; n];
            vs[i][k] = 1.0;
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
/// Returns eigenvalues and eigenvectors stored as columns.
fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_spectrum() {
        let s = spectral_extremes(&Matrix::identity(2), 1e-8, 10_000).unwrap();
        assert_abs_diff_eq!(s.lambda_min, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.lambda_max, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn diagonal_spectrum() {
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 3.0]]).unwrap();
        let s = spectral_extremes(&m, 1e-8, 10_000).unwrap();
        assert_abs_diff_eq!(s.lambda_min, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.lambda_max, 3.0, epsilon = 1e-8);
    }

    #[test]
    fn two_by_two_coupled() {
        // det([[2-λ,1],[1,2-λ]]) = (2-λ)² - 1 → λ ∈ {1, 3}
        let m = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let s = spectral_extremes(&m, 1e-8, 10_000).unwrap();
        assert_abs_diff_eq!(s.lambda_min, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.lambda_max, 3.0, epsilon = 1e-8);
    }

    #[test]
    fn large_diagonal_uses_block_iteration() {
        let n = 40;
        let m = Matrix::from_fn(n, n, |i, j| if i == j { (i as f64) * 0.25 - 3.0 } else { 0.0 });
        let s = spectral_extremes(&m, 1e-8, 10_000).unwrap();
        assert_abs_diff_eq!(s.lambda_min, -3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.lambda_max, 39.0 * 0.25 - 3.0, epsilon = 1e-8);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(spectral_extremes(&m, 1e-8, 100), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn zero_matrix() {
        let s = spectral_extremes(&Matrix::zeros(3, 3), 1e-8, 10).unwrap();
        assert_eq!((s.lambda_min, s.lambda_max), (0.0, 0.0));
    }

    #[test]
    fn rademacher_support_and_mean() {
        let mut rng = SeededRng::new(11, 0);
        let draws: Vec<f64> = (0..100_000).map(|_| rng.rademacher()).collect();
        assert!(draws.iter().all(|&d| d == 1.0 || d == -1.0));
        assert!(mean(&draws).abs() < 0.02);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = SeededRng::new(12, 3);
        let draws = rng.gaussian_vec(100_000);
        assert!(mean(&draws).abs() < 0.02);
        assert!((variance(&draws) - 1.0).abs() < 0.05);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = {
            let mut r = SeededRng::new(5, 1);
            (0..8).map(|_| r.uniform01()).collect()
        };
        let b: Vec<f64> = {
            let mut r = SeededRng::new(5, 1);
            (0..8).map(|_| r.uniform01()).collect()
        };
        let c: Vec<f64> = {
            let mut r = SeededRng::new(5, 2);
            (0..8).map(|_| r.uniform01()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn from_vec_checks_shape() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 1, vec![f64::NAN]).is_err());
    }
}
