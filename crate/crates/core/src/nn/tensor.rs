use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Floating-point element type. `f32` is the runtime default, `f64` is used for
/// gradient checking.
pub trait Scalar: Float + Debug + Default + Sum + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::ShapeMismatch {
                expected: shape,
                found: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NnError::ShapeMismatch {
                    expected: vec![rows.len(), cols],
                    found: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            data,
        })
    }

    pub fn from_f64_slice(shape: &[usize], values: &[f64]) -> Result<Self, NnError> {
        Self::new(shape.to_vec(), values.iter().map(|&v| S::from_f64(v)).collect())
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a rank-2 tensor (rank-1 tensors count as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self {
            shape: vec![c, r],
            data: out,
        }
    }

    /// `self @ other`
    pub fn matmul(&self, other: &Self) -> Result<Self, NnError> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(NnError::DimensionMismatch(format!(
                "matmul {m}x{k} @ {k2}x{n}"
            )));
        }
        let mut out = vec![S::zero(); m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self @ other^T`
    pub fn matmul_nt(&self, other: &Self) -> Result<Self, NnError> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        if k != k2 {
            return Err(NnError::DimensionMismatch(format!(
                "matmul_nt {m}x{k} @ ({n}x{k2})^T"
            )));
        }
        let mut out = vec![S::zero(); m * n];
        matmul_nt_into(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }
}

/// out[m×n] += a[m×k] @ b[k×n]
pub(crate) fn matmul_into<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

/// out[m×n] += a[m×k] @ b[n×k]^T
pub(crate) fn matmul_nt_into<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc = acc + x * y;
            }
            out[i * n + j] = out[i * n + j] + acc;
        }
    }
}

/// out[k×n] += a[m×k]^T @ b[m×n]
pub(crate) fn matmul_tn_into<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax<S: Scalar>(x: &[S]) -> Vec<S> {
    if x.is_empty() {
        return Vec::new();
    }
    let max = x.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Root-mean-square normalization of a single vector.
pub fn rms_norm<S: Scalar>(x: &[S], gain: &[S]) -> Result<Vec<S>, NnError> {
    if x.len() != gain.len() {
        return Err(NnError::DimensionMismatch(format!(
            "rms_norm input {} vs gain {}",
            x.len(),
            gain.len()
        )));
    }
    let n = S::from_f64(x.len() as f64);
    let ms = x.iter().map(|&v| v * v).sum::<S>() / n;
    let inv = S::one() / (ms + S::from_f64(super::RMS_EPS)).sqrt();
    Ok(x.iter().zip(gain).map(|(&v, &g)| v * inv * g).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let s = softmax(&[0.0f64, 0.0]);
        assert_eq!(s, vec![0.5, 0.5]);
        let s = softmax(&[0.0f64, 3f64.ln()]);
        assert!((s[0] - 0.25).abs() < 1e-12 && (s[1] - 0.75).abs() < 1e-12);
        let s = softmax(&[1000.0f64, 1000.0]);
        assert_eq!(s, vec![0.5, 0.5]);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::<f64>::from_f64_slice(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::<f64>::from_f64_slice(&[3, 2], &[7., 8., 9., 10., 11., 12.]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[58., 64., 139., 154.]);
        let ab2 = a.matmul_nt(&b.transpose()).unwrap();
        assert_eq!(ab, ab2);
        let mut out = vec![0.0; 9];
        matmul_tn_into(a.data(), a.data(), &mut out, 2, 3, 3);
        let ata = a.transpose().matmul(&a).unwrap();
        assert_eq!(out, ata.data());
    }

    #[test]
    fn shape_checked() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
        let a = Tensor::<f32>::zeros(&[2, 3]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn rms_norm_unit_gain() {
        let y = rms_norm(&[3.0f64, 4.0], &[1.0, 1.0]).unwrap();
        let rms = (12.5f64 + 1e-6).sqrt();
        assert!((y[0] - 3.0 / rms).abs() < 1e-12);
        assert!(rms_norm(&[1.0f64], &[1.0, 1.0]).is_err());
    }
}
