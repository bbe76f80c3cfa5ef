//! Dense real points and seeded sampling.
//!
//! A [`Point`] is a flat `f64` buffer with optional `(rows, cols)` metadata.
//! Matrix-shaped points store their entries in row-major order, which is the
//! order images are read and written in.
//!
//! Randomness comes from [`SeededRng`], a ChaCha8 stream seeded from a `u64`.
//! ChaCha8 output is specified bit-for-bit, so a seed reproduces the same
//! instance on every platform.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    data: Vec<f64>,
    shape: Option<(usize, usize)>,
}

impl Point {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data, shape: None }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self::new(vec![value; n])
    }

    /// Builds a matrix-shaped point from row-major data.
    pub fn matrix(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self {
            data,
            shape: Some((rows, cols)),
        })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Self {
            data,
            shape: Some((rows, cols)),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let (rows, cols) = self.shape.ok_or(Error::MissingShape)?;
        Ok(DMatrix::from_row_slice(rows, cols, &self.data))
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    /// Returns a copy carrying `shape`, or an error when it does not fit.
    pub fn with_shape(mut self, shape: Option<(usize, usize)>) -> Result<Self> {
        if let Some((rows, cols)) = shape {
            if rows * cols != self.data.len() {
                return Err(Error::InvalidShape {
                    rows,
                    cols,
                    len: self.data.len(),
                });
            }
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Euclidean distance. Panics on length mismatch.
    pub fn dist(&self, other: &Point) -> f64 {
        assert_eq!(self.len(), other.len(), "dist: dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Inner product. Panics on length mismatch; see [`dot`] for the checked form.
    pub fn inner(&self, other: &Point) -> f64 {
        assert_eq!(self.len(), other.len(), "inner: dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `self += alpha * x`. Panics on length mismatch.
    pub fn add_scaled(&mut self, alpha: f64, x: &Point) {
        assert_eq!(self.len(), x.len(), "add_scaled: dimension mismatch");
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += alpha * v;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Point {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `a * self + b * other`, keeping `self`'s shape.
    pub fn lincomb(&self, a: f64, b: f64, other: &Point) -> Point {
        assert_eq!(self.len(), other.len(), "lincomb: dimension mismatch");
        Point {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            shape: self.shape,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Point {
        Point {
            data: self.data.iter().map(|&x| f(x)).collect(),
            shape: self.shape,
        }
    }
}

impl From<Vec<f64>> for Point {
    fn from(data: Vec<f64>) -> Self {
        Point::new(data)
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(data: [f64; N]) -> Self {
        Point::new(data.to_vec())
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Point {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl Add<&Point> for &Point {
    type Output = Point;
    fn add(self, rhs: &Point) -> Point {
        self.lincomb(1.0, 1.0, rhs)
    }
}

impl Sub<&Point> for &Point {
    type Output = Point;
    fn sub(self, rhs: &Point) -> Point {
        self.lincomb(1.0, -1.0, rhs)
    }
}

impl Mul<&Point> for f64 {
    type Output = Point;
    fn mul(self, rhs: &Point) -> Point {
        rhs.scaled(self)
    }
}

impl Neg for &Point {
    type Output = Point;
    fn neg(self) -> Point {
        self.scaled(-1.0)
    }
}

fn check_len(a: &Point, b: &Point) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Euclidean inner product.
pub fn dot(a: &Point, b: &Point) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.inner(b))
}

/// `alpha * x + y`, componentwise.
pub fn axpy(alpha: f64, x: &Point, y: &Point) -> Result<Point> {
    check_len(x, y)?;
    Ok(y.lincomb(1.0, alpha, x))
}

/// Deterministic random stream (ChaCha8 seeded from a `u64`).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.random_range(lo..hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `k` distinct indices from `0..n`, uniformly without replacement.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }

    pub fn uniform_point(&mut self, lower: &Point, upper: &Point) -> Point {
        Point::new(
            lower
                .as_slice()
                .iter()
                .zip(upper.as_slice())
                .map(|(&lo, &hi)| self.uniform(lo, hi))
                .collect(),
        )
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        // Filled row by row so the stream order matches the row-major layout.
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = self.normal();
            }
        }
        m
    }
}

/// `n` i.i.d. draws from `N(0, scale^2)`.
pub fn sample_gaussian(rng: &mut SeededRng, n: usize, scale: f64) -> Point {
    Point::new((0..n).map(|_| scale * rng.normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dot_examples() {
        let e1 = Point::from([1.0, 0.0]);
        let e2 = Point::from([0.0, 1.0]);
        assert_eq!(dot(&e1, &e2).unwrap(), 0.0);
        let a = Point::from([1.0, 2.0]);
        let b = Point::from([3.0, 4.0]);
        assert_eq!(dot(&a, &b).unwrap(), 11.0);
        assert!(dot(&a, &a).unwrap() >= 0.0);
    }

    #[test]
    fn dot_rejects_mismatch() {
        let a = Point::zeros(2);
        let b = Point::zeros(3);
        assert!(matches!(
            dot(&a, &b),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
        assert!(axpy(1.0, &a, &b).is_err());
    }

    #[test]
    fn axpy_examples() {
        let x = Point::from([1.0, 1.0]);
        let y = Point::from([1.0, 2.0]);
        assert_eq!(axpy(0.0, &x, &y).unwrap(), y);
        assert_eq!(axpy(1.0, &x, &Point::zeros(2)).unwrap(), x);
        assert_eq!(axpy(2.0, &x, &y).unwrap(), Point::from([3.0, 4.0]));
    }

    #[test]
    fn gaussian_zero_scale_and_determinism() {
        let mut rng = SeededRng::new(3);
        assert!(sample_gaussian(&mut rng, 5, 0.0)
            .as_slice()
            .iter()
            .all(|&x| x == 0.0));
        let a = sample_gaussian(&mut SeededRng::new(42), 16, 1.5);
        let b = sample_gaussian(&mut SeededRng::new(42), 16, 1.5);
        assert_eq!(a, b);
        let c = sample_gaussian(&mut SeededRng::new(43), 16, 1.5);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let x = sample_gaussian(&mut SeededRng::new(7), n, 1.0);
        let mean = x.as_slice().iter().sum::<f64>() / n as f64;
        let var = x
            .as_slice()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n as f64 - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn norm_is_sqrt_of_self_dot() {
        let x = sample_gaussian(&mut SeededRng::new(11), 37, 2.0);
        assert_eq!(x.norm(), dot(&x, &x).unwrap().sqrt());
    }

    #[test]
    fn shape_must_fit() {
        assert!(Point::matrix(vec![0.0; 6], 2, 3).is_ok());
        assert!(matches!(
            Point::matrix(vec![0.0; 5], 2, 3),
            Err(Error::InvalidShape { .. })
        ));
        assert!(Point::zeros(3).to_matrix().is_err());
    }

    #[test]
    fn matrix_view_is_row_major() {
        let p = Point::matrix(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3).unwrap();
        let m = p.to_matrix().unwrap();
        assert_eq!(m[(0, 2)], 3.0);
        assert_eq!(m[(1, 0)], 4.0);
    }

    fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64)> {
        (1usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3..1e3f64, n),
                prop::collection::vec(-1e3..1e3f64, n),
                prop::collection::vec(-1e3..1e3f64, n),
                -10.0..10.0f64,
                -10.0..10.0f64,
            )
        })
    }

    proptest! {
        #[test]
        fn dot_symmetric_bilinear((a, b, c, s, t) in triple()) {
            let (a, b, c) = (Point::new(a), Point::new(b), Point::new(c));
            let ab = dot(&a, &b).unwrap();
            prop_assert!((ab - dot(&b, &a).unwrap()).abs() <= 1e-12 * (1.0 + ab.abs()));
            let lhs = dot(&a.lincomb(s, t, &b), &c).unwrap();
            let rhs = s * dot(&a, &c).unwrap() + t * dot(&b, &c).unwrap();
            let scale = 1.0 + (s.abs() * a.norm() + t.abs() * b.norm()) * c.norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn reshape_round_trip(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
            let data = sample_gaussian(&mut SeededRng::new(seed), rows * cols, 1.0).into_vec();
            let p = Point::matrix(data.clone(), rows, cols).unwrap();
            let back = Point::from_matrix(&p.to_matrix().unwrap());
            prop_assert_eq!(back.as_slice(), &data[..]);
            prop_assert_eq!(back.shape(), Some((rows, cols)));
        }
    }
}
