//! Dense linear algebra, differentiable layers and the Adam optimizer.
//!
//! There is no autodiff graph: each model chains the explicit backward of
//! every layer it uses. All kernels are generic over [`Real`] so the same
//! code can be verified in `f64`.

mod adam;
mod gradcheck;
mod layers;
mod matrix;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport, Parameterized, TensorCheck};
pub use layers::*;
pub use matrix::{Matrix, Real, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("buffer of length {len} cannot hold a {rows}x{cols} matrix")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("invalid sparse row: {0}")]
    BadSparseRow(&'static str),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("optimizer state does not match the parameter list")]
    OptimizerLayout,
}

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Matrix<T>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn accumulate(&mut self, g: &Matrix<T>) -> Result<(), MathError> {
        self.grad.add_assign(g)
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}
