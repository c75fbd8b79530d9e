//! Small dense complex matrices.
//!
//! Only what the moment calculus, the Haar samplers and the QEC encoders need:
//! products, adjoints, traces, Kronecker products and partial traces over a
//! tensor factorization. Storage is row-major.
//!
//! Tensor factorizations follow the statevector convention: the first factor
//! occupies the least-significant digits of the index.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

/// Wire form: `data` holds `[re, im]` pairs in row-major order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl TryFrom<RawMatrix> for CMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        let expected = raw.rows.checked_mul(raw.cols).ok_or_else(|| Error::Format("matrix shape overflows".into()))?;
        if raw.data.len() != expected {
            return Err(Error::Format(format!(
                "matrix data has {} entries, shape {}x{} needs {expected}",
                raw.data.len(),
                raw.rows,
                raw.cols
            )));
        }
        Ok(Self { rows: raw.rows, cols: raw.cols, data: raw.data.into_iter().map(|[re, im]| C64::new(re, im)).collect() })
    }
}

impl From<CMatrix> for RawMatrix {
    fn from(m: CMatrix) -> Self {
        Self { rows: m.rows, cols: m.cols, data: m.data.into_iter().map(|z| [z.re, z.im]).collect() }
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.iter().flat_map(|row| row.iter().copied()).collect() }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// `|a><b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |r, c| a[r] * b[c].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, col: &[C64]) {
        assert_eq!(col.len(), self.rows);
        for (r, &v) in col.iter().enumerate() {
            self[(r, c)] = v;
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).fold(ZERO, |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// `Tr(self * rhs)` without forming the product.
    pub fn trace_product(&self, rhs: &Self) -> C64 {
        assert_eq!(self.cols, rhs.rows);
        assert_eq!(self.rows, rhs.cols);
        let mut acc = ZERO;
        for r in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(r, k)] * rhs[(k, r)];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `||self - other||_F`.
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    /// `||U^dag U - I||_F`.
    pub fn unitarity_deficit(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.adjoint().matmul(self).distance(&Self::identity(self.rows))
    }

    /// `||A - A^dag||_F`.
    pub fn hermiticity_deficit(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.distance(&self.adjoint())
    }

    /// `self ⊗ rhs` with `self` on the *high* digits, i.e. the standard
    /// Kronecker layout where `rhs` is the first (least-significant) factor.
    pub fn kron(&self, rhs: &Self) -> Self {
        let rows = self.rows * rhs.rows;
        let cols = self.cols * rhs.cols;
        Self::from_fn(rows, cols, |r, c| self[(r / rhs.rows, c / rhs.cols)] * rhs[(r % rhs.rows, c % rhs.cols)])
    }

    /// Partial trace over factor `j` of a square operator whose index
    /// factorizes as `dims` (first factor least significant).
    pub fn partial_trace(&self, dims: &[usize], j: usize) -> Result<Self> {
        let d: usize = dims.iter().product();
        if !self.is_square() || self.rows != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.rows });
        }
        let (lo, dj) = split_dims(dims, j);
        let hi = d / (lo * dj);
        let out_d = lo * hi;
        let mut out = Self::zeros(out_d, out_d);
        for rh in 0..hi {
            for rl in 0..lo {
                for ch in 0..hi {
                    for cl in 0..lo {
                        let mut acc = ZERO;
                        for k in 0..dj {
                            acc += self[(rl + lo * (k + dj * rh), cl + lo * (k + dj * ch))];
                        }
                        out[(rl + lo * rh, cl + lo * ch)] = acc;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`partial_trace`](Self::partial_trace) in shape:
    /// re-inserts factor `j` as an identity of dimension `dims[j]`.
    pub fn embed_identity(&self, dims: &[usize], j: usize) -> Result<Self> {
        let (lo, dj) = split_dims(dims, j);
        let d: usize = dims.iter().product();
        if !self.is_square() || self.rows * dj != d {
            return Err(Error::DimensionMismatch { expected: d / dj, found: self.rows });
        }
        let hi = d / (lo * dj);
        let mut out = Self::zeros(d, d);
        for rh in 0..hi {
            for rl in 0..lo {
                for ch in 0..hi {
                    for cl in 0..lo {
                        let v = self[(rl + lo * rh, cl + lo * ch)];
                        if v == ZERO {
                            continue;
                        }
                        for k in 0..dj {
                            out[(rl + lo * (k + dj * rh), cl + lo * (k + dj * ch))] = v;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Embeds an operator acting on factor `j` into the full space as
    /// `I ⊗ .. ⊗ op ⊗ .. ⊗ I`.
    pub fn embed_factor(op: &Self, dims: &[usize], j: usize) -> Self {
        assert!(op.is_square() && op.rows == dims[j]);
        let mut out = Self::identity(1);
        for (k, &dk) in dims.iter().enumerate() {
            let factor = if k == j { op.clone() } else { Self::identity(dk) };
            // later factors sit on higher digits
            out = factor.kron(&out);
        }
        out
    }
}

fn split_dims(dims: &[usize], j: usize) -> (usize, usize) {
    assert!(j < dims.len(), "factor index out of range");
    (dims[..j].iter().product(), dims[j])
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Inner product `<a|b>`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub mod pauli {
    use super::*;

    pub fn x() -> CMatrix {
        CMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_rows(&[&[ZERO, -I], &[I, ZERO]])
    }

    pub fn z() -> CMatrix {
        CMatrix::from_rows(&[&[ONE, ZERO], &[ZERO, -ONE]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &CMatrix, b: &CMatrix) -> bool {
        a.distance(b) < 1e-12
    }

    #[test]
    fn kron_places_rhs_on_low_digits() {
        // Z ⊗ I : qubit 1 is Z, qubit 0 identity
        let zi = pauli::z().kron(&CMatrix::identity(2));
        assert_eq!(zi[(1, 1)], ONE);
        assert_eq!(zi[(2, 2)], -ONE);
    }

    #[test]
    fn partial_trace_of_product_operator() {
        let a = pauli::x();
        let b = CMatrix::from_real_diagonal(&[0.25, 0.75]);
        // factor 0 = b, factor 1 = a
        let ab = a.kron(&b);
        let dims = [2, 2];
        assert!(approx(&ab.partial_trace(&dims, 0).unwrap(), &a.scale(C64::new(1.0, 0.0))));
        assert!(approx(&ab.partial_trace(&dims, 1).unwrap(), &b.scale(C64::new(0.0, 0.0))));
        let embedded = a.embed_identity(&dims, 0).unwrap();
        assert!(approx(&embedded, &a.kron(&CMatrix::identity(2))));
    }

    #[test]
    fn embed_factor_matches_kron() {
        let dims = [2, 4];
        let op = pauli::y();
        let expected = CMatrix::identity(4).kron(&op);
        assert!(approx(&CMatrix::embed_factor(&op, &dims, 0), &expected));
    }

    #[test]
    fn serde_round_trip_and_shape_check() {
        let m = pauli::y();
        let json = serde_json::to_string(&m).unwrap();
        let back: CMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        assert!(serde_json::from_str::<CMatrix>(r#"{"rows":2,"cols":2,"data":[[1,0]]}"#).is_err());
    }
}
