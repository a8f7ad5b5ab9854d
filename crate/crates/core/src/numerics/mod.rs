//! Dense tensors, hand-written forward/backward kernels, and a reproducible
//! random stream.

pub mod gradcheck;
pub mod kernels;
mod selfcheck;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, grad_check_report, GradCheckReport, FD_STEP, REL_ERROR_FLOOR};
pub use selfcheck::{check_primitives, PRIMITIVE_TOLERANCE};
pub use rng::RngStream;
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape {expected:?} does not match {len} values")]
    ShapeMismatch { expected: Vec<usize>, len: usize },
    #[error("normalization axis has zero length")]
    EmptyAxis,
    #[error("every target is ignored; mean loss is undefined")]
    AllIgnored,
    #[error("incompatible operands: {0}")]
    Incompatible(String),
}

pub fn gelu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    Tensor::new(x.shape().to_vec(), kernels::gelu(x.data())).expect("shape preserved")
}

/// Layer normalization over the last axis.
pub fn layer_norm<F: Scalar>(
    x: &Tensor<F>,
    gain: &Tensor<F>,
    bias: &Tensor<F>,
    eps: f64,
) -> Result<Tensor<F>, NumericsError> {
    let (y, _) = kernels::layer_norm(x.data(), gain.data(), bias.data(), x.last_dim(), eps)?;
    Tensor::new(x.shape().to_vec(), y)
}

/// Softmax over the last axis.
pub fn softmax<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    Tensor::new(x.shape().to_vec(), kernels::softmax(x.data(), x.last_dim())).expect("shape preserved")
}

pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, NumericsError> {
    let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
        return Err(NumericsError::Incompatible("matmul needs rank-2 operands".into()));
    };
    if k != k2 {
        return Err(NumericsError::Incompatible(format!("matmul {m}×{k} by {k2}×{n}")));
    }
    Tensor::new(vec![m, n], kernels::matmul(a.data(), b.data(), m, k, n))
}

pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>, NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::Incompatible(format!(
            "add {:?} + {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Tensor::new(a.shape().to_vec(), kernels::add(a.data(), b.data()))
}

/// Row lookup into a `[rows×dim]` table.
pub fn embedding<F: Scalar>(table: &Tensor<F>, ids: &[usize]) -> Result<Tensor<F>, NumericsError> {
    let dim = table.last_dim();
    if let Some(&bad) = ids.iter().find(|&&i| i >= table.rows()) {
        return Err(NumericsError::Incompatible(format!(
            "id {bad} outside table of {} rows",
            table.rows()
        )));
    }
    Tensor::new(vec![ids.len(), dim], kernels::embedding(table.data(), ids, dim))
}

/// Mean cross-entropy over rows of `logits` (`[rows×classes]`) whose target
/// differs from `ignore_index`.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    targets: &[usize],
    ignore_index: usize,
) -> Result<F, NumericsError> {
    kernels::softmax_cross_entropy(logits.data(), logits.last_dim(), targets, ignore_index)
        .map(|(loss, _)| loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IGNORE: usize = usize::MAX;

    /// erf by its Maclaurin series, summed in f64 until terms vanish.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 {
            n += 1.0;
            term *= -x * x / n;
            sum += term / (2.0 * n + 1.0);
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn gelu_fixed_points() {
        let y = gelu(&t(&[3], &[0.0, 1.0, 10.0]));
        assert_eq!(y.data()[0], 0.0);
        let oracle = 0.5 * (1.0 + erf_series(1.0 / 2f64.sqrt()));
        assert!((oracle - 0.841_345).abs() < 1e-6);
        assert!((y.data()[1] - oracle).abs() < 1e-5);
        assert!((y.data()[2] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn gelu_matches_series_oracle() {
        for i in -30..=30 {
            let x = i as f64 / 10.0;
            let oracle = 0.5 * x * (1.0 + erf_series(x / 2f64.sqrt()));
            assert!((kernels::gelu_scalar(x) - oracle).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn layer_norm_examples() {
        let ones = t(&[3], &[1.0; 3]);
        let zeros = t(&[3], &[0.0; 3]);
        let y = layer_norm(&t(&[3], &[1.0, 1.0, 1.0]), &ones, &zeros, 1e-12).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-9));

        let y = layer_norm(&t(&[3], &[1.0, 2.0, 3.0]), &ones, &zeros, 1e-12).unwrap();
        // mean 2, population variance 2/3
        let s = (2.0f64 / 3.0).sqrt();
        let expect = [-1.0 / s, 0.0, 1.0 / s];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!((expect[2] - 1.22474).abs() < 1e-4);

        let y = layer_norm(
            &t(&[2], &[0.0, 0.0]),
            &t(&[2], &[2.0, 2.0]),
            &t(&[2], &[5.0, 5.0]),
            1e-12,
        )
        .unwrap();
        assert_eq!(y.data(), &[5.0, 5.0]);
    }

    #[test]
    fn layer_norm_shape_mismatch() {
        let x = t(&[2, 3], &[0.0; 6]);
        let g = t(&[2], &[1.0; 2]);
        assert!(layer_norm(&x, &g, &g, 1e-12).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let l = softmax_cross_entropy(&t(&[1, 2], &[0.0, 0.0]), &[0], IGNORE).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = softmax_cross_entropy(&t(&[1, 2], &[100.0, 0.0]), &[0], IGNORE).unwrap();
        assert!(l < 1e-6);
        let l = softmax_cross_entropy(&t(&[2, 2], &[0.0; 4]), &[0, IGNORE], IGNORE).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let err = softmax_cross_entropy(&t(&[1, 2], &[0.0; 2]), &[IGNORE], IGNORE).unwrap_err();
        assert!(matches!(err, NumericsError::AllIgnored));
    }

    #[test]
    fn tensor_rejects_bad_shape() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn matmul_and_embedding_shapes() {
        let a = t(&[2, 3], &[1.0; 6]);
        let b = t(&[3, 4], &[1.0; 12]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 4]);
        assert!(c.data().iter().all(|&v| v == 3.0));
        assert!(matmul(&a, &a).is_err());
        let e = embedding(&b, &[2, 0]).unwrap();
        assert_eq!(e.shape(), &[2, 4]);
        assert!(embedding(&b, &[3]).is_err());
    }
}
