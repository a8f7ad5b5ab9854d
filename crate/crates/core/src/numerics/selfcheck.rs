//! Finite-difference checks of every differentiable kernel.

use super::gradcheck::{grad_check_report, GradCheckReport};
use super::kernels as k;
use super::{RngStream, Tensor};

pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;

fn random(rng: &mut RngStream, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| scale * rng.normal()).collect();
    Tensor::from_f64(shape, &data).expect("shape")
}

fn weighted(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Runs each primitive's backward pass against central differences on
/// random inputs drawn from `seed`. Scalar losses are `Σ r ⊙ f(x)` for a
/// random `r`.
pub fn check_primitives(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = RngStream::new(seed);
    let (m, kk, n) = (2 + rng.below(3), 2 + rng.below(3), 2 + rng.below(3));
    let tol = PRIMITIVE_TOLERANCE;
    let mut out = Vec::new();

    {
        let a = random(&mut rng, &[m, kk], 1.0);
        let b = random(&mut rng, &[kk, n], 1.0);
        let r = random(&mut rng, &[m, n], 1.0);
        let loss = |x: &[Tensor<f64>]| weighted(&k::matmul(x[0].data(), x[1].data(), m, kk, n), r.data());
        let da = k::matmul_bt(r.data(), b.data(), m, n, kk);
        let mut db = vec![0.0; kk * n];
        k::matmul_at_acc(a.data(), r.data(), m, kk, n, &mut db);
        let grads = [Tensor::from_f64(&[m, kk], &da).unwrap(), Tensor::from_f64(&[kk, n], &db).unwrap()];
        out.push(("matmul", grad_check_report(loss, &grads, &[a, b], tol)));
    }
    {
        let x = random(&mut rng, &[m, kk], 1.0);
        let w = random(&mut rng, &[kk, n], 1.0);
        let bias = random(&mut rng, &[n], 1.0);
        let r = random(&mut rng, &[m, n], 1.0);
        let loss = |t: &[Tensor<f64>]| weighted(&k::linear(t[0].data(), t[1].data(), t[2].data(), m, kk, n), r.data());
        let (mut dw, mut db) = (vec![0.0; kk * n], vec![0.0; n]);
        let dx = k::linear_backward(x.data(), w.data(), r.data(), m, kk, n, &mut dw, &mut db);
        let grads = [
            Tensor::from_f64(&[m, kk], &dx).unwrap(),
            Tensor::from_f64(&[kk, n], &dw).unwrap(),
            Tensor::from_f64(&[n], &db).unwrap(),
        ];
        out.push(("linear", grad_check_report(loss, &grads, &[x, w, bias], tol)));
    }
    {
        // Residual add: both inputs receive the upstream gradient unchanged.
        let a = random(&mut rng, &[m, n], 1.0);
        let b = random(&mut rng, &[m, n], 1.0);
        let r = random(&mut rng, &[m, n], 1.0);
        let loss = |t: &[Tensor<f64>]| weighted(&k::add(t[0].data(), t[1].data()), r.data());
        let grads = [r.clone(), r.clone()];
        out.push(("add", grad_check_report(loss, &grads, &[a, b], tol)));
    }
    {
        let x = random(&mut rng, &[m, n], 2.0);
        let r = random(&mut rng, &[m, n], 1.0);
        let loss = |t: &[Tensor<f64>]| weighted(&k::gelu(t[0].data()), r.data());
        let dx = k::gelu_backward(x.data(), r.data());
        let g = [Tensor::from_f64(&[m, n], &dx).unwrap()];
        out.push(("gelu", grad_check_report(loss, &g, &[x], tol)));
    }
    {
        let x = random(&mut rng, &[m, n], 1.5);
        let r = random(&mut rng, &[m, n], 1.0);
        let loss = |t: &[Tensor<f64>]| weighted(&k::tanh(t[0].data()), r.data());
        let dx = k::tanh_backward(&k::tanh(x.data()), r.data());
        let g = [Tensor::from_f64(&[m, n], &dx).unwrap()];
        out.push(("tanh", grad_check_report(loss, &g, &[x], tol)));
    }
    {
        let x = random(&mut rng, &[m, n], 1.0);
        let gain = random(&mut rng, &[n], 1.0);
        let bias = random(&mut rng, &[n], 1.0);
        let r = random(&mut rng, &[m, n], 1.0);
        let eps = 1e-12;
        let loss = |t: &[Tensor<f64>]| {
            let (y, _) = k::layer_norm(t[0].data(), t[1].data(), t[2].data(), n, eps).expect("n > 0");
            weighted(&y, r.data())
        };
        let (_, cache) = k::layer_norm(x.data(), gain.data(), bias.data(), n, eps).expect("n > 0");
        let (mut dg, mut db) = (vec![0.0; n], vec![0.0; n]);
        let dx = k::layer_norm_backward(r.data(), &cache, gain.data(), &mut dg, &mut db);
        let g = [
            Tensor::from_f64(&[m, n], &dx).unwrap(),
            Tensor::from_f64(&[n], &dg).unwrap(),
            Tensor::from_f64(&[n], &db).unwrap(),
        ];
        out.push(("layer_norm", grad_check_report(loss, &g, &[x, gain, bias], tol)));
    }
    {
        let x = random(&mut rng, &[m, n], 2.0);
        let r = random(&mut rng, &[m, n], 1.0);
        let loss = |t: &[Tensor<f64>]| weighted(&k::softmax(t[0].data(), n), r.data());
        let dx = k::softmax_backward(&k::softmax(x.data(), n), r.data(), n);
        let g = [Tensor::from_f64(&[m, n], &dx).unwrap()];
        out.push(("softmax", grad_check_report(loss, &g, &[x], tol)));
    }
    {
        let vocab = 3 + rng.below(4);
        let ids: Vec<usize> = (0..m + 2).map(|_| rng.below(vocab)).collect();
        let table = random(&mut rng, &[vocab, n], 1.0);
        let r = random(&mut rng, &[ids.len(), n], 1.0);
        let loss = |t: &[Tensor<f64>]| weighted(&k::embedding(t[0].data(), &ids, n), r.data());
        let mut dt = vec![0.0; vocab * n];
        k::embedding_backward(r.data(), &ids, n, &mut dt);
        let g = [Tensor::from_f64(&[vocab, n], &dt).unwrap()];
        out.push(("embedding", grad_check_report(loss, &g, &[table], tol)));
    }
    {
        let rows = m + 1;
        let logits = random(&mut rng, &[rows, n], 2.0);
        let ignore = usize::MAX;
        let targets: Vec<usize> = (0..rows).map(|i| if i == 1 { ignore } else { rng.below(n) }).collect();
        let loss = |t: &[Tensor<f64>]| {
            k::softmax_cross_entropy(t[0].data(), n, &targets, ignore)
                .expect("active rows")
                .0
        };
        let (_, dl) = k::softmax_cross_entropy(logits.data(), n, &targets, ignore).expect("active rows");
        let g = [Tensor::from_f64(&[rows, n], &dl).unwrap()];
        out.push(("softmax_cross_entropy", grad_check_report(loss, &g, &[logits], tol)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_primitives_pass() {
        for seed in 0..3 {
            for (name, report) in check_primitives(seed) {
                assert!(report.passed(), "{name} seed {seed}: {report:?}");
                assert!(report.checked > 0);
            }
        }
    }
}
