//! Slice-level forward and backward kernels.
//!
//! Matrices are row-major. Backward functions take the upstream gradient and
//! whatever the forward pass cached, and either return input gradients or
//! accumulate into caller-owned gradient buffers (`*_acc` arguments), so a
//! shared weight used several times simply sums its contributions.

use rayon::prelude::*;

use super::{NumericsError, Scalar};

const PAR_MIN_ROWS: usize = 64;

/// `a [m×k] · b [k×n] → [m×n]`.
pub fn matmul<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![F::zero(); m * n];
    let row = |(i, out_row): (usize, &mut [F])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    };
    if m >= PAR_MIN_ROWS && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(n.max(1)).enumerate().for_each(row);
    } else {
        out.chunks_mut(n.max(1)).enumerate().for_each(row);
    }
    out
}

/// `a [m×k] · bᵀ` where `b` is `[n×k]` → `[m×n]`.
pub fn matmul_bt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut out = vec![F::zero(); m * n];
    let row = |(i, out_row): (usize, &mut [F])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            *o = dot(a_row, b_row);
        }
    };
    if m >= PAR_MIN_ROWS && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(n.max(1)).enumerate().for_each(row);
    } else {
        out.chunks_mut(n.max(1)).enumerate().for_each(row);
    }
    out
}

/// Accumulates `aᵀ · b` into `acc [k×n]`, with `a [m×k]`, `b [m×n]`.
pub fn matmul_at_acc<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, acc: &mut [F]) {
    debug_assert_eq!(acc.len(), k * n);
    // Each output row p only reads column p of `a`, so rows are independent
    // and the reduction order over i is fixed regardless of threading.
    let row = |(p, acc_row): (usize, &mut [F])| {
        for i in 0..m {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for (o, &bv) in acc_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    };
    if k >= PAR_MIN_ROWS && rayon::current_num_threads() > 1 {
        acc.par_chunks_mut(n.max(1)).enumerate().for_each(row);
    } else {
        acc.chunks_mut(n.max(1)).enumerate().for_each(row);
    }
}

#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut s = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `x [n×in] · w [in×out] + bias`.
pub fn linear<F: Scalar>(x: &[F], w: &[F], bias: &[F], n: usize, d_in: usize, d_out: usize) -> Vec<F> {
    let mut y = matmul(x, w, n, d_in, d_out);
    for row in y.chunks_mut(d_out) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
    y
}

/// Backward of [`linear`]: accumulates weight/bias gradients and returns `dx`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<F: Scalar>(
    x: &[F],
    w: &[F],
    dy: &[F],
    n: usize,
    d_in: usize,
    d_out: usize,
    dw_acc: &mut [F],
    db_acc: &mut [F],
) -> Vec<F> {
    matmul_at_acc(x, dy, n, d_in, d_out, dw_acc);
    col_sum_acc(dy, d_out, db_acc);
    matmul_bt(dy, w, n, d_out, d_in)
}

pub fn col_sum_acc<F: Scalar>(x: &[F], cols: usize, acc: &mut [F]) {
    for row in x.chunks(cols) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

pub fn add_assign<F: Scalar>(acc: &mut [F], x: &[F]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

pub fn add<F: Scalar>(a: &[F], b: &[F]) -> Vec<F> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1/sqrt(2π)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact-erf GELU: `0.5·x·(1 + erf(x/√2))`.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
    cdf + x * pdf
}

pub fn gelu<F: Scalar>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| F::lit(gelu_scalar(v.as_f64()))).collect()
}

pub fn gelu_backward<F: Scalar>(x: &[F], dy: &[F]) -> Vec<F> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| g * F::lit(gelu_grad_scalar(v.as_f64())))
        .collect()
}

pub fn tanh<F: Scalar>(x: &[F]) -> Vec<F> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Backward of tanh given its output `y`.
pub fn tanh_backward<F: Scalar>(y: &[F], dy: &[F]) -> Vec<F> {
    y.iter()
        .zip(dy)
        .map(|(&t, &g)| g * (F::one() - t * t))
        .collect()
}

/// Values kept from a layer-norm forward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache<F> {
    pub normalized: Vec<F>,
    pub inv_std: Vec<F>,
    pub dim: usize,
}

/// Normalizes each row of length `dim`, then applies `gain` and `bias`.
pub fn layer_norm<F: Scalar>(
    x: &[F],
    gain: &[F],
    bias: &[F],
    dim: usize,
    eps: f64,
) -> Result<(Vec<F>, LayerNormCache<F>), NumericsError> {
    if dim == 0 {
        return Err(NumericsError::EmptyAxis);
    }
    if gain.len() != dim || bias.len() != dim || !x.len().is_multiple_of(dim) {
        return Err(NumericsError::Incompatible(format!(
            "layer_norm over {dim} with gain {} bias {} input {}",
            gain.len(),
            bias.len(),
            x.len()
        )));
    }
    let rows = x.len() / dim;
    let mut out = vec![F::zero(); x.len()];
    let mut normalized = vec![F::zero(); x.len()];
    let mut inv_std = vec![F::zero(); rows];
    let dim_f = F::lit(dim as f64);
    for r in 0..rows {
        let row = &x[r * dim..(r + 1) * dim];
        let mean = row.iter().copied().sum::<F>() / dim_f;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / dim_f;
        let rstd = F::one() / (var + F::lit(eps)).sqrt();
        inv_std[r] = rstd;
        for j in 0..dim {
            let n = (row[j] - mean) * rstd;
            normalized[r * dim + j] = n;
            out[r * dim + j] = n * gain[j] + bias[j];
        }
    }
    Ok((
        out,
        LayerNormCache {
            normalized,
            inv_std,
            dim,
        },
    ))
}

/// Returns `dx`; accumulates gain/bias gradients.
pub fn layer_norm_backward<F: Scalar>(
    dy: &[F],
    cache: &LayerNormCache<F>,
    gain: &[F],
    dgain_acc: &mut [F],
    dbias_acc: &mut [F],
) -> Vec<F> {
    let dim = cache.dim;
    let dim_f = F::lit(dim as f64);
    let mut dx = vec![F::zero(); dy.len()];
    let mut dn = vec![F::zero(); dim];
    for (r, (dy_row, dx_row)) in dy.chunks(dim).zip(dx.chunks_mut(dim)).enumerate() {
        let n_row = &cache.normalized[r * dim..(r + 1) * dim];
        let mut sum_dn = F::zero();
        let mut sum_dn_n = F::zero();
        for j in 0..dim {
            dgain_acc[j] += dy_row[j] * n_row[j];
            dbias_acc[j] += dy_row[j];
            dn[j] = dy_row[j] * gain[j];
            sum_dn += dn[j];
            sum_dn_n += dn[j] * n_row[j];
        }
        let rstd = cache.inv_std[r];
        for j in 0..dim {
            dx_row[j] = rstd * (dn[j] - sum_dn / dim_f - n_row[j] * sum_dn_n / dim_f);
        }
    }
    dx
}

/// Row-wise softmax over rows of length `dim`.
pub fn softmax<F: Scalar>(x: &[F], dim: usize) -> Vec<F> {
    let mut out = x.to_vec();
    for row in out.chunks_mut(dim) {
        softmax_in_place(row);
    }
    out
}

pub fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backward of softmax given its output `y`: `dx = y ⊙ (dy − Σ dy·y)`.
pub fn softmax_backward<F: Scalar>(y: &[F], dy: &[F], dim: usize) -> Vec<F> {
    let mut dx = vec![F::zero(); y.len()];
    for ((y_row, dy_row), dx_row) in y.chunks(dim).zip(dy.chunks(dim)).zip(dx.chunks_mut(dim)) {
        let s = dot(y_row, dy_row);
        for j in 0..dim {
            dx_row[j] = y_row[j] * (dy_row[j] - s);
        }
    }
    dx
}

/// Gathers rows of `table [rows×dim]`.
pub fn embedding<F: Scalar>(table: &[F], ids: &[usize], dim: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        out.extend_from_slice(&table[id * dim..(id + 1) * dim]);
    }
    out
}

/// Scatter-adds `dy` rows back into the table gradient.
pub fn embedding_backward<F: Scalar>(dy: &[F], ids: &[usize], dim: usize, dtable_acc: &mut [F]) {
    for (row, &id) in dy.chunks(dim).zip(ids) {
        add_assign(&mut dtable_acc[id * dim..(id + 1) * dim], row);
    }
}

/// Mean negative log-likelihood over rows whose target is not `ignore_index`.
///
/// Returns the loss and the gradient with respect to the logits.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &[F],
    classes: usize,
    targets: &[usize],
    ignore_index: usize,
) -> Result<(F, Vec<F>), NumericsError> {
    if classes == 0 || logits.len() != targets.len() * classes {
        return Err(NumericsError::Incompatible(format!(
            "{} logits for {} targets of {classes} classes",
            logits.len(),
            targets.len()
        )));
    }
    let active = targets.iter().filter(|&&t| t != ignore_index).count();
    if active == 0 {
        return Err(NumericsError::AllIgnored);
    }
    let scale = F::one() / F::lit(active as f64);
    let mut loss = F::zero();
    let mut grad = vec![F::zero(); logits.len()];
    for (r, &t) in targets.iter().enumerate() {
        if t == ignore_index {
            continue;
        }
        if t >= classes {
            return Err(NumericsError::Incompatible(format!(
                "target {t} out of range for {classes} classes"
            )));
        }
        let row = &logits[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let sum: F = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[t];
        let g = &mut grad[r * classes..(r + 1) * classes];
        for j in 0..classes {
            g[j] = (row[j] - log_z).exp() * scale;
        }
        g[t] -= scale;
    }
    Ok((loss * scale, grad))
}

/// Inverted dropout mask: each entry is `0` or `1/(1-rate)`.
pub fn apply_mask<F: Scalar>(x: &mut [F], mask: &[F]) {
    for (v, &m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
        // bᵀ stored as [n×k]
        let bt = [5.0, 7.0, 6.0, 8.0];
        assert_eq!(matmul_bt(&a, &bt, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
        let mut acc = vec![0.0; 4];
        matmul_at_acc(&a, &b, 2, 2, 2, &mut acc);
        // aᵀ·b
        assert_eq!(acc, vec![26.0, 30.0, 38.0, 44.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = [1.0f64, -3.0, 0.5, 100.0, 100.0, -100.0];
        let y = softmax(&x, 3);
        for row in y.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_target() {
        assert!(softmax_cross_entropy(&[0.0f64, 0.0], 2, &[2], usize::MAX).is_err());
    }

    #[test]
    fn layer_norm_zero_axis_is_error() {
        let err = layer_norm::<f64>(&[], &[], &[], 0, 1e-12).unwrap_err();
        assert!(matches!(err, NumericsError::EmptyAxis));
    }
}
