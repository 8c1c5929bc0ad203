//! Dense symmetric linear algebra and moment estimation.
//!
//! Everything here works in `f64`. Covariances use the population divisor
//! `N`, so the mean squared Mahalanobis distance of the fitting samples under
//! their own (unregularized) Gaussian is exactly the dimension.
//!
//! Regularization shifts the spectrum: a [`RegularizedGaussian`] with
//! `epsilon` uses `Σ + εI` for both its precision and its log-determinant.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major dense matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        check_finite(cols, &data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "ragged rows: row 0 has {cols} columns, row {i} has {}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in diag.iter().enumerate() {
            data[i * n + i] = v;
        }
        Matrix::from_vec(n, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on zero chunk size
        let width = self.cols.max(1);
        self.data
            .chunks_exact(width)
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                what: "matrix product",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                what: "matrix-vector product",
                expected: self.cols,
                actual: v.len(),
            });
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Copy of the `nr × nc` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Matrix {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "block out of range");
        let mut data = Vec::with_capacity(nr * nc);
        for i in r0..r0 + nr {
            data.extend_from_slice(&self.row(i)[c0..c0 + nc]);
        }
        Matrix {
            rows: nr,
            cols: nc,
            data,
        }
    }

    /// Column concatenation `[a b]`; rows are paired one-to-one.
    pub fn hstack(a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.rows != b.rows {
            return Err(Error::DimensionMismatch {
                what: "column concatenation (row counts)",
                expected: a.rows,
                actual: b.rows,
            });
        }
        let cols = a.cols + b.cols;
        let mut data = Vec::with_capacity(a.rows * cols);
        for i in 0..a.rows {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Ok(Matrix {
            rows: a.rows,
            cols,
            data,
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Applies `f` to every row, producing a matrix of the same shape.
    pub fn map_rows(&self, mut f: impl FnMut(usize, &[f64], &mut [f64])) -> Result<Matrix> {
        let mut data = vec![0.0; self.data.len()];
        if self.cols > 0 {
            for (i, out) in data.chunks_exact_mut(self.cols).enumerate() {
                f(i, self.row(i), out);
            }
        }
        Matrix::from_vec(self.rows, self.cols, data)
    }

    /// `(a + aᵀ)/2`.
    pub fn symmetrized(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(not_square(self));
        }
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        Ok(out)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Result<Matrix> {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Matrix::from_vec(rows, cols, data)
    }
}

fn check_finite(cols: usize, data: &[f64]) -> Result<()> {
    let mut bad_rows = Vec::new();
    let mut first = None;
    for (k, v) in data.iter().enumerate() {
        if !v.is_finite() {
            let (r, c) = k.checked_div(cols).map_or((0, 0), |r| (r, k % cols));
            first.get_or_insert((r, c));
            if bad_rows.last() != Some(&r) {
                bad_rows.push(r);
            }
        }
    }
    match first {
        None => Ok(()),
        Some((row, col)) => Err(Error::NonFinite {
            rows: bad_rows,
            row,
            col,
        }),
    }
}

fn not_square(m: &Matrix) -> Error {
    Error::DimensionMismatch {
        what: "square matrix (columns)",
        expected: m.rows,
        actual: m.cols,
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column means of an `N×D` sample matrix.
pub fn mean(samples: &Matrix) -> Result<Vec<f64>> {
    if samples.rows == 0 {
        return Err(Error::NoSamples);
    }
    let mut acc = vec![0.0; samples.cols];
    for r in samples.row_iter() {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = samples.rows as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Population covariance `(1/N) Σ (x−μ)(x−μ)ᵀ`, symmetrized after accumulation.
///
/// The accumulation is a single-threaded `XcᵀXc` product on the centered
/// samples, so the result does not depend on the rayon pool size.
pub fn covariance(samples: &Matrix, mu: &[f64]) -> Result<Matrix> {
    if samples.rows == 0 {
        return Err(Error::NoSamples);
    }
    if mu.len() != samples.cols {
        return Err(Error::DimensionMismatch {
            what: "covariance mean vector",
            expected: samples.cols,
            actual: mu.len(),
        });
    }
    let (n, d) = (samples.rows, samples.cols);
    let centered = DMatrix::from_fn(n, d, |i, j| samples.data[i * d + j] - mu[j]);
    let mut acc = centered.tr_mul(&centered);
    acc /= n as f64;
    Matrix::from_nalgebra(&acc)?.symmetrized()
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending, eigenvectors
/// as the columns of an orthonormal matrix.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl SymEig {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let scaled: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (k, &l) in scaled.iter().enumerate() {
                    s += v.get(i, k) * l * v.get(j, k);
                }
                out.data[i * n + j] = s;
                out.data[j * n + i] = s;
            }
        }
        out
    }
}

const SYMMETRY_TOL: f64 = 1e-9;

/// Symmetric eigendecomposition.
///
/// The input is symmetrized as `(a+aᵀ)/2` first; inputs whose asymmetry
/// exceeds `1e-9·‖a‖` are rejected. The implicit QR iteration is capped at
/// `100·D` steps.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if !a.is_square() {
        return Err(not_square(a));
    }
    let n = a.rows;
    if n == 0 {
        return Err(Error::invalid("eigendecomposition of an empty matrix"));
    }
    let norm = a.frobenius_norm();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if asym > SYMMETRY_TOL * norm {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:e}, norm {norm:e})"
        )));
    }
    let sym = a.symmetrized()?;
    let max_iterations = 100 * n;
    let eig = SymmetricEigen::try_new(sym.to_nalgebra(), f64::EPSILON, max_iterations).ok_or_else(
        || {
            let diag = (0..n).map(|i| sym.get(i, i));
            Error::NoConvergence {
                dim: n,
                max_iterations,
                norm,
                diag_min: diag.clone().fold(f64::INFINITY, f64::min),
                diag_max: diag.fold(f64::NEG_INFINITY, f64::max),
            }
        },
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new_col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vecs[i * n + new_col] = eig.eigenvectors[(i, k)];
        }
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors: Matrix::from_vec(n, n, vecs)?,
    })
}

fn check_shifted(eigenvalues: &[f64], epsilon: f64) -> Result<()> {
    match eigenvalues.iter().position(|&l| (l + epsilon).is_nan() || l + epsilon <= 0.0) {
        Some(index) => Err(Error::NonPsd {
            index,
            eigenvalue: eigenvalues[index],
            epsilon,
        }),
        None => Ok(()),
    }
}

fn logdet_from_eigenvalues(eigenvalues: &[f64], epsilon: f64) -> Result<f64> {
    check_shifted(eigenvalues, epsilon)?;
    Ok(eigenvalues.iter().map(|&l| (l + epsilon).ln()).sum())
}

/// `Σ_i log(λ_i + ε)`.
pub fn logdet_reg(a: &Matrix, epsilon: f64) -> Result<f64> {
    logdet_from_eigenvalues(&sym_eig(a)?.eigenvalues, epsilon)
}

/// `(a + εI)⁻¹` through the eigendecomposition.
pub fn inverse_reg(a: &Matrix, epsilon: f64) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    check_shifted(&eig.eigenvalues, epsilon)?;
    Ok(eig.reconstruct_with(|l| 1.0 / (l + epsilon)))
}

/// A Gaussian `N(μ, Σ + εI)` with its precision and log-determinant cached.
#[derive(Clone, Debug)]
pub struct RegularizedGaussian {
    mean: Vec<f64>,
    cov: Matrix,
    epsilon: f64,
    eig: SymEig,
    precision: Matrix,
    logdet: f64,
    // row k = v_k / sqrt(λ_k + ε); ‖W(x−μ)‖² is the squared Mahalanobis distance
    whitener: Matrix,
}

impl RegularizedGaussian {
    pub fn new(mean: Vec<f64>, cov: Matrix, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::invalid(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if !cov.is_square() {
            return Err(not_square(&cov));
        }
        if mean.len() != cov.rows {
            return Err(Error::DimensionMismatch {
                what: "gaussian mean vs covariance",
                expected: cov.rows,
                actual: mean.len(),
            });
        }
        if let Some(j) = mean.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                rows: vec![0],
                row: 0,
                col: j,
            });
        }
        let cov = cov.symmetrized()?;
        let eig = sym_eig(&cov)?;
        let logdet = logdet_from_eigenvalues(&eig.eigenvalues, epsilon)?;
        let precision = eig.reconstruct_with(|l| 1.0 / (l + epsilon));
        let d = cov.rows;
        let mut w = vec![0.0; d * d];
        for k in 0..d {
            let s = (eig.eigenvalues[k] + epsilon).sqrt().recip();
            for i in 0..d {
                w[k * d + i] = eig.eigenvectors.get(i, k) * s;
            }
        }
        Ok(RegularizedGaussian {
            mean,
            cov,
            epsilon,
            eig,
            precision,
            logdet,
            whitener: Matrix::from_vec(d, d, w)?,
        })
    }

    /// Population moments of `samples`, regularized by `epsilon`.
    pub fn fit(samples: &Matrix, epsilon: f64) -> Result<Self> {
        let mu = mean(samples)?;
        let cov = covariance(samples, &mu)?;
        RegularizedGaussian::new(mu, cov, epsilon)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// The unregularized covariance `Σ`.
    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(Σ + εI)⁻¹`.
    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    /// `Σ_i log(λ_i + ε)`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Eigenvalues of the unregularized covariance, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    /// `Σ + εI`.
    pub fn effective_cov(&self) -> Matrix {
        let mut c = self.cov.clone();
        let d = c.rows;
        for i in 0..d {
            c.data[i * d + i] += self.epsilon;
        }
        c
    }

    /// Squared Mahalanobis distance of an already-centered vector.
    pub(crate) fn smd_centered(&self, diff: &[f64]) -> f64 {
        self.whitener
            .row_iter()
            .map(|w| {
                let p = dot(w, diff);
                p * p
            })
            .sum()
    }
}

/// `(v−μ)ᵀ(Σ+εI)⁻¹(v−μ)`, evaluated in the eigenbasis so it is never negative.
pub fn mahalanobis_sq(v: &[f64], g: &RegularizedGaussian) -> Result<f64> {
    if v.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            what: "mahalanobis vector",
            expected: g.dim(),
            actual: v.len(),
        });
    }
    let diff: Vec<f64> = v.iter().zip(&g.mean).map(|(a, m)| a - m).collect();
    Ok(g.smd_centered(&diff))
}

/// Squared Mahalanobis distance of every row. Rows are scored in parallel;
/// each output slot depends only on its own row.
pub fn mahalanobis_sq_rows(samples: &Matrix, g: &RegularizedGaussian) -> Result<Vec<f64>> {
    if samples.cols != g.dim() {
        return Err(Error::DimensionMismatch {
            what: "mahalanobis sample columns",
            expected: g.dim(),
            actual: samples.cols,
        });
    }
    Ok((0..samples.rows)
        .into_par_iter()
        .map(|i| {
            let diff: Vec<f64> = samples.row(i).iter().zip(&g.mean).map(|(a, m)| a - m).collect();
            g.smd_centered(&diff)
        })
        .collect())
}

/// `tr(A·B)` for symmetric `A`, `B` of equal shape.
pub(crate) fn trace_of_product_sym(a: &Matrix, b: &Matrix) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}
