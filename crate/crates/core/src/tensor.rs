//! Dense tensors of rank 0, 1 or 2 with the handful of kernels the model needs.
//!
//! Matrices are stored row-major. Every kernel checks shapes and reports a
//! [`Error::Dimension`] naming both operands on mismatch.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rank(&self) -> usize {
        match self {
            Shape::Scalar => 0,
            Shape::Vector(_) => 1,
            Shape::Matrix(..) => 2,
        }
    }

    /// Dimensions as a list, `[]`, `[n]` or `[rows, cols]`.
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Scalar => vec![],
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Result<Shape> {
        match *dims {
            [] => Ok(Shape::Scalar),
            [n] => Ok(Shape::Vector(n)),
            [r, c] => Ok(Shape::Matrix(r, c)),
            _ => Err(Error::Schema(format!(
                "tensor rank {} exceeds 2 (dims {dims:?})",
                dims.len()
            ))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

/// Pointwise activation functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.len() != data.len() {
            return Err(Error::Contract(format!(
                "shape {shape} needs {} elements, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: Shape::Scalar,
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(Shape::Matrix(rows, cols), data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    op: "from_rows",
                    left: Shape::Vector(cols),
                    right: Shape::Vector(row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, v: T) -> Self {
        Tensor {
            shape,
            data: vec![v; shape.len()],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(Shape::Matrix(n, n));
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a rank-0 (or single-element) tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Matrix(r, _) => r,
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Matrix(_, c) => c,
            s => s.len(),
        }
    }

    /// Row `i` of a matrix as a slice.
    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same values, element type converted through `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Matrix-vector product `self · x`.
    pub fn matvec(&self, x: &Self) -> Result<Self> {
        let (rows, cols) = match self.shape {
            Shape::Matrix(r, c) => (r, c),
            _ => {
                return Err(Error::Dimension {
                    op: "matvec",
                    left: self.shape,
                    right: x.shape,
                })
            }
        };
        if x.shape != Shape::Vector(cols) {
            return Err(Error::Dimension {
                op: "matvec",
                left: self.shape,
                right: x.shape,
            });
        }
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &self.data[r * cols..(r + 1) * cols];
            out.push(dot_slices(row, &x.data));
        }
        Ok(Tensor::vector(out))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn activate(&self, kind: Activation) -> Self {
        self.map(|v| kind.apply(v))
    }

    /// Inner product of two equally shaped tensors.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "dot")?;
        Ok(dot_slices(&self.data, &other.data))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Concatenation of two vectors.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        match (self.shape, other.shape) {
            (Shape::Vector(_), Shape::Vector(_)) => {
                let mut data = Vec::with_capacity(self.len() + other.len());
                data.extend_from_slice(&self.data);
                data.extend_from_slice(&other.data);
                Ok(Tensor::vector(data))
            }
            (l, r) => Err(Error::Dimension {
                op: "concat",
                left: l,
                right: r,
            }),
        }
    }

    /// Coordinate-wise arithmetic mean of a nonempty sequence of vectors.
    pub fn mean_pool(vectors: &[Self]) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::Contract("mean_pool over an empty sequence".into()))?;
        let mut acc = first.clone();
        for v in &vectors[1..] {
            first.same_shape(v, "mean_pool")?;
            for (a, &b) in acc.data.iter_mut().zip(&v.data) {
                *a += b;
            }
        }
        let inv = T::one() / T::from_usize(vectors.len()).unwrap();
        Ok(acc.map(|v| v * inv))
    }

    /// Element-wise accumulate `self += other` without shape bookkeeping.
    pub(crate) fn accumulate(&mut self, other: &[T]) {
        for (a, &b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
    }
}

pub(crate) fn dot_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity_and_zero() {
        let x = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(Tensor::identity(2).matvec(&x).unwrap(), x);
        let z = Tensor::<f64>::zeros(Shape::Matrix(2, 2));
        assert_eq!(z.matvec(&x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn matvec_matches_naive_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let w: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = Tensor::matrix(5, 3, w.clone())
            .unwrap()
            .matvec(&Tensor::vector(x.clone()))
            .unwrap();
        for r in 0..5 {
            let mut s = 0.0;
            for c in 0..3 {
                s += w[r * 3 + c] * x[c];
            }
            assert_eq!(got.data()[r], s);
        }
    }

    #[test]
    fn matvec_shape_error_names_both() {
        let w = Tensor::<f64>::zeros(Shape::Matrix(2, 3));
        let err = w.matvec(&Tensor::vector(vec![1.0, 2.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2x3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn elementwise_examples() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(a.hadamard(&b).unwrap().data(), &[3.0, 8.0]);
        assert_eq!(a.add(&Tensor::zeros(a.shape())).unwrap(), a);
        assert_eq!(a.sub(&a).unwrap().data(), &[0.0, 0.0]);
        assert!(a.add(&Tensor::vector(vec![1.0])).is_err());
    }

    #[test]
    fn activations_at_zero() {
        let z = Tensor::vector(vec![0.0f64]);
        assert_eq!(z.activate(Activation::Sigmoid).item(), 0.5);
        assert_eq!(z.activate(Activation::Tanh).item(), 0.0);
        let x = Tensor::vector(vec![-1.5, 2.0]);
        assert_eq!(x.activate(Activation::Identity), x);
    }

    #[test]
    fn sigmoid_is_finite_at_extremes() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
    }

    #[test]
    fn mean_pool_cases() {
        let v = Tensor::vector(vec![1.5, -2.0, 0.25]);
        assert_eq!(
            Tensor::mean_pool(&[v.clone(), v.clone(), v.clone()]).unwrap(),
            v
        );
        let a = Tensor::vector(vec![0.0, 0.0]);
        let b = Tensor::vector(vec![2.0, 4.0]);
        assert_eq!(Tensor::mean_pool(&[a, b]).unwrap().data(), &[1.0, 2.0]);
        assert!(matches!(
            Tensor::<f64>::mean_pool(&[]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn mean_pool_matches_naive_average() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let vs: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let got = Tensor::mean_pool(
            &vs.iter()
                .map(|v| Tensor::vector(v.clone()))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        for d in 0..4 {
            let mut s = 0.0;
            for v in &vs {
                s += v[d];
            }
            assert!((got.data()[d] - s / 7.0).abs() < 1e-15);
        }
    }
}
