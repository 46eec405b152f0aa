//! Forward and backward passes for the fixed set of layers the models use.

use rayon::prelude::*;

use super::{Matrix, MathError, Real, SparseMatrix};

/// Gradients produced by [`affine_backward`].
#[derive(Debug, Clone)]
pub struct AffineGrads<T> {
    pub input: Matrix<T>,
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

fn check_bias<T: Real>(weight: &Matrix<T>, bias: &Matrix<T>) -> Result<(), MathError> {
    if bias.rows() != 1 || bias.cols() != weight.cols() {
        return Err(MathError::ShapeMismatch {
            op: "affine bias",
            left: weight.shape(),
            right: bias.shape(),
        });
    }
    Ok(())
}

fn add_bias<T: Real>(out: &mut Matrix<T>, bias: &Matrix<T>) {
    let b = bias.data();
    let cols = out.cols();
    if cols == 0 {
        return;
    }
    out.data_mut().par_chunks_mut(cols).for_each(|row| {
        for (o, &bv) in row.iter_mut().zip(b) {
            *o = *o + bv;
        }
    });
}

/// `input · weight + bias`, with the bias broadcast over rows.
pub fn affine<T: Real>(
    input: &Matrix<T>,
    weight: &Matrix<T>,
    bias: &Matrix<T>,
) -> Result<Matrix<T>, MathError> {
    check_bias(weight, bias)?;
    let mut out = input.matmul(weight)?;
    add_bias(&mut out, bias);
    Ok(out)
}

pub fn affine_backward<T: Real>(
    input: &Matrix<T>,
    weight: &Matrix<T>,
    upstream: &Matrix<T>,
) -> Result<AffineGrads<T>, MathError> {
    if upstream.rows() != input.rows() || upstream.cols() != weight.cols() {
        return Err(MathError::ShapeMismatch {
            op: "affine_backward",
            left: (input.rows(), weight.cols()),
            right: upstream.shape(),
        });
    }
    Ok(AffineGrads {
        input: upstream.matmul_transpose_rhs(weight)?,
        weight: input.transpose_matmul(upstream)?,
        bias: upstream.column_sums(),
    })
}

/// Affine map with a sparse left operand. The input gradient is never needed
/// for the bag-of-words layer, so the backward only produces weight and bias.
pub fn sparse_affine<T: Real>(
    input: &SparseMatrix<T>,
    weight: &Matrix<T>,
    bias: &Matrix<T>,
) -> Result<Matrix<T>, MathError> {
    if input.cols() != weight.rows() {
        return Err(MathError::ShapeMismatch {
            op: "sparse_affine",
            left: (input.rows(), input.cols()),
            right: weight.shape(),
        });
    }
    check_bias(weight, bias)?;
    let h = weight.cols();
    let mut out = Matrix::zeros(input.rows(), h);
    if h > 0 {
        out.data_mut()
            .par_chunks_mut(h)
            .enumerate()
            .for_each(|(r, o)| {
                let (idx, val) = input.row(r);
                for (&j, &v) in idx.iter().zip(val) {
                    for (ov, &w) in o.iter_mut().zip(weight.row(j as usize)) {
                        *ov = *ov + v * w;
                    }
                }
            });
    }
    add_bias(&mut out, bias);
    Ok(out)
}

pub fn sparse_affine_backward<T: Real>(
    input: &SparseMatrix<T>,
    weight_shape: (usize, usize),
    upstream: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>), MathError> {
    if upstream.rows() != input.rows() || upstream.cols() != weight_shape.1 {
        return Err(MathError::ShapeMismatch {
            op: "sparse_affine_backward",
            left: (input.rows(), weight_shape.1),
            right: upstream.shape(),
        });
    }
    let mut gw = Matrix::zeros(weight_shape.0, weight_shape.1);
    for r in 0..input.rows() {
        let (idx, val) = input.row(r);
        let up = upstream.row(r);
        for (&j, &v) in idx.iter().zip(val) {
            for (g, &u) in gw.row_mut(j as usize).iter_mut().zip(up) {
                *g = *g + v * u;
            }
        }
    }
    Ok((gw, upstream.column_sums()))
}

pub fn relu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Backward of ReLU given the forward *input*.
pub fn relu_backward<T: Real>(input: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>, MathError> {
    input.ensure_same_shape(upstream, "relu_backward")?;
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &u)| if x > T::zero() { u } else { T::zero() })
        .collect();
    Matrix::from_vec(input.rows(), input.cols(), data)
}

#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus_scalar<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(sigmoid_scalar)
}

/// Backward of sigmoid given the forward *output*.
pub fn sigmoid_backward<T: Real>(output: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>, MathError> {
    output.ensure_same_shape(upstream, "sigmoid_backward")?;
    let data = output
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&s, &u)| u * s * (T::one() - s))
        .collect();
    Matrix::from_vec(output.rows(), output.cols(), data)
}

pub fn softplus<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(softplus_scalar)
}

/// Backward of softplus given the forward *input*; the derivative is `sigmoid(x)`.
pub fn softplus_backward<T: Real>(input: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>, MathError> {
    input.ensure_same_shape(upstream, "softplus_backward")?;
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &u)| u * sigmoid_scalar(x))
        .collect();
    Matrix::from_vec(input.rows(), input.cols(), data)
}

/// In-place log-softmax of a single row.
pub fn log_softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return;
    }
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    row.iter_mut().for_each(|v| *v = *v - lse);
}

/// Row-wise log-softmax.
pub fn log_softmax<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    let cols = out.cols();
    if cols > 0 {
        out.data_mut().par_chunks_mut(cols).for_each(log_softmax_in_place);
    }
    out
}

/// Backward of row-wise log-softmax given its *output*:
/// `dx = dy - softmax · rowsum(dy)`.
pub fn log_softmax_backward<T: Real>(output: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>, MathError> {
    output.ensure_same_shape(upstream, "log_softmax_backward")?;
    let mut grad = upstream.clone();
    let cols = grad.cols();
    if cols > 0 {
        grad.data_mut()
            .par_chunks_mut(cols)
            .zip(output.data().par_chunks(cols))
            .for_each(|(g, lp)| {
                let total: T = g.iter().copied().sum();
                for (gv, &l) in g.iter_mut().zip(lp) {
                    *gv = *gv - l.exp() * total;
                }
            });
    }
    Ok(grad)
}

/// Row-wise softmax.
pub fn softmax<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    log_softmax(logits).map(|v| v.exp())
}
