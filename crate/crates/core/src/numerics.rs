//! Small dense linear algebra and seeded sampling.
//!
//! Everything here is row-major `f64`. The matrices in this crate are at most a
//! few hundred rows by a few dozen columns, so the kernels are plain loops.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
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

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "t_matmul row dimension");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · self`
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut out = Matrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for j in i..n {
                    out_row[j] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                out.data[i * n + j] = out.data[j * n + i];
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// `selfᵀ · v`
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "t_matvec dimension");
        let mut out = vec![0.0; self.cols];
        for (r, &w) in v.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += w * a;
            }
        }
        out
    }

    /// `vᵀ · self · v` for square `self`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.cols, v.len());
        let mut acc = 0.0;
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            acc += vr * dot(self.row(r), v);
        }
        acc
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape());
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_diag(&mut self, diag: &[f64]) {
        assert_eq!(self.rows, self.cols);
        assert_eq!(diag.len(), self.rows);
        for (i, d) in diag.iter().enumerate() {
            self.data[i * self.cols + i] += d;
        }
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix]) -> Matrix {
        let cols = parts.first().map_or(0, |m| m.cols);
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for m in parts {
            assert_eq!(m.cols, cols, "vstack column mismatch");
            data.extend_from_slice(&m.data);
        }
        Matrix { rows, cols, data }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / max(|a_ij|, |a_ji|, 1)`.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                let a = self[(i, j)];
                let b = self[(j, i)];
                let scale = a.abs().max(b.abs()).max(1.0);
                worst = worst.max((a - b).abs() / scale);
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Mean computed as `x₀ + Σ(xₖ − x₀)/n`. Exact when all values are equal.
pub fn shifted_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut iter = values.into_iter();
    let Some(first) = iter.next() else {
        return f64::NAN;
    };
    let mut n = 1usize;
    let mut acc = 0.0;
    for v in iter {
        acc += v - first;
        n += 1;
    }
    first + acc / n as f64
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    lower: Matrix,
    /// Absolute diagonal jitter that was added before the factorization succeeded.
    pub jitter: f64,
}

fn cholesky_in_place(a: &Matrix) -> Option<Matrix> {
    let n = a.rows;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.data[j * n + j];
        for v in &l[j * n..j * n + j] {
            d -= v * v;
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let (upper, lower) = l.split_at_mut(i * n);
            let rj = &upper[j * n..j * n + j];
            let mut s = a.data[i * n + j];
            for (x, y) in lower[..j].iter().zip(rj) {
                s -= x * y;
            }
            lower[j] = s / d;
        }
    }
    Some(Matrix {
        rows: n,
        cols: n,
        data: l,
    })
}

impl SpdFactor {
    /// Cholesky with escalating diagonal jitter `1e-10 … 1e-6` (one decade per
    /// attempt), scaled by the mean diagonal magnitude when that exceeds one.
    pub fn new(a: &Matrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::shape("SpdFactor::new", "square matrix", format!("{}x{}", a.rows, a.cols)));
        }
        if let Some(lower) = cholesky_in_place(a) {
            return Ok(SpdFactor { lower, jitter: 0.0 });
        }
        let n = a.rows;
        let scale = if n == 0 {
            1.0
        } else {
            (a.diag().iter().map(|d| d.abs()).sum::<f64>() / n as f64).max(1.0)
        };
        let mut jitter = JITTER_START;
        while jitter <= JITTER_MAX * 1.000_001 {
            let mut shifted = a.clone();
            shifted.add_diag(&vec![jitter * scale; n]);
            if let Some(lower) = cholesky_in_place(&shifted) {
                return Ok(SpdFactor {
                    lower,
                    jitter: jitter * scale,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::NonSpd {
            dim: n,
            max_jitter: JITTER_MAX * scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solves `L Lᵀ x = b` for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    pub fn solve(&self, b: &Matrix) -> Matrix {
        assert_eq!(b.rows, self.dim());
        let bt = b.transpose();
        let mut xt = Matrix::zeros(b.cols, b.rows);
        for c in 0..b.cols {
            let x = self.solve_vec(bt.row(c));
            xt.row_mut(c).copy_from_slice(&x);
        }
        xt.transpose()
    }

    /// `L⁻¹`, lower triangular.
    fn lower_inverse(&self) -> Matrix {
        let n = self.dim();
        let l = self.lower.as_slice();
        let mut inv = vec![0.0; n * n];
        for j in 0..n {
            inv[j * n + j] = 1.0 / l[j * n + j];
            for i in (j + 1)..n {
                let row = &l[i * n + j..i * n + i];
                let s: f64 = row.iter().enumerate().map(|(t, v)| v * inv[(j + t) * n + j]).sum();
                inv[i * n + j] = -s / l[i * n + i];
            }
        }
        Matrix {
            rows: n,
            cols: n,
            data: inv,
        }
    }

    /// Diagonal of `A⁻¹` without forming the full inverse.
    pub fn inverse_diag(&self) -> Vec<f64> {
        let n = self.dim();
        let li = self.lower_inverse();
        let li = li.as_slice();
        (0..n).map(|k| (k..n).map(|i| li[i * n + k] * li[i * n + k]).sum()).collect()
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`, exactly symmetric.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let li = self.lower_inverse();
        let li = li.as_slice();
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += li[k * n + i] * li[k * n + j];
                }
                inv.data[i * n + j] = s;
                inv.data[j * n + i] = s;
            }
        }
        inv
    }

    /// `log |A|`
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diag().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Solves `a · x = b` for symmetric positive definite `a`.
///
/// Falls back to diagonal jitter when the plain factorization fails and
/// returns [`Error::NonSpd`] when even the largest jitter does not help.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows != a.rows {
        return Err(Error::shape("solve_spd", a.rows, b.rows));
    }
    Ok(SpdFactor::new(a)?.solve(b))
}

/// Factor `L` with `L Lᵀ = a` for a positive semi-definite `a`. Non-positive
/// pivots (up to rounding) zero out their column instead of failing.
fn psd_factor(a: &Matrix) -> Matrix {
    let n = a.rows;
    let tol = 1e-14 * a.diag().iter().fold(0.0f64, |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    l
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Covariance {
    Full(Matrix),
    Diagonal(Vec<f64>),
}

/// Multivariate normal `N(mean, covariance)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, covariance: Covariance) -> Result<Self> {
        let spec = GaussianSpec { mean, covariance };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("gaussian mean must be finite".into()));
        }
        match &self.covariance {
            Covariance::Diagonal(v) => {
                if v.len() != d {
                    return Err(Error::shape("GaussianSpec", d, v.len()));
                }
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::Domain("variances must be finite and non-negative".into()));
                }
            }
            Covariance::Full(m) => {
                if m.shape() != (d, d) {
                    return Err(Error::shape("GaussianSpec", format!("{d}x{d}"), format!("{}x{}", m.rows, m.cols)));
                }
                if !m.is_finite() {
                    return Err(Error::Domain("covariance must be finite".into()));
                }
                if m.asymmetry() > 1e-10 {
                    return Err(Error::Domain("covariance must be symmetric".into()));
                }
                if m.diag().iter().any(|x| *x < 0.0) {
                    return Err(Error::Domain("covariance diagonal must be non-negative".into()));
                }
            }
        }
        Ok(())
    }
}

/// Draws `k` i.i.d. rows from `spec`. The result is a `k × dim` matrix.
pub fn sample_gaussian<R: Rng + ?Sized>(spec: &GaussianSpec, k: usize, rng: &mut R) -> Result<Matrix> {
    spec.validate()?;
    if k == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let d = spec.dim();
    let mut out = Matrix::zeros(k, d);
    let mut z = vec![0.0; d];
    match &spec.covariance {
        Covariance::Diagonal(var) => {
            let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
            for r in 0..k {
                let row = out.row_mut(r);
                for j in 0..d {
                    let e: f64 = rng.sample(StandardNormal);
                    row[j] = spec.mean[j] + sd[j] * e;
                }
            }
        }
        Covariance::Full(cov) => {
            let l = psd_factor(cov);
            for r in 0..k {
                for zj in z.iter_mut() {
                    *zj = rng.sample(StandardNormal);
                }
                let row = out.row_mut(r);
                for i in 0..d {
                    row[i] = spec.mean[i] + dot(&l.row(i)[..=i], &z[..=i]);
                }
            }
        }
    }
    Ok(out)
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded generator on an explicit stream, so that independent consumers
/// (one per regression, per epoch) never share random numbers.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
