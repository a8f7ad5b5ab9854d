use super::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, element index) of the worst element.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` gradients of a scalar function against central
/// finite differences on every element of every input.
pub fn grad_check_report(
    loss: impl Fn(&[Tensor<f64>]) -> f64,
    analytic: &[Tensor<f64>],
    inputs: &[Tensor<f64>],
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(analytic.len(), inputs.len(), "one gradient per input");
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tolerance,
    };
    for (t, grad) in analytic.iter().enumerate() {
        assert_eq!(grad.shape(), inputs[t].shape(), "gradient shape for input {t}");
        for e in 0..inputs[t].len() {
            let orig = inputs[t].data()[e];
            probe[t].data_mut()[e] = orig + FD_STEP;
            let plus = loss(&probe);
            probe[t].data_mut()[e] = orig - FD_STEP;
            let minus = loss(&probe);
            probe[t].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(grad.data()[e], numeric);
            report.checked += 1;
            // NaN errors must also register as the worst element
            if err.is_nan() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((t, e));
            }
        }
    }
    report
}

/// `true` iff every element's relative error is below `tolerance`.
pub fn grad_check(
    loss: impl Fn(&[Tensor<f64>]) -> f64,
    gradient: impl Fn(&[Tensor<f64>]) -> Vec<Tensor<f64>>,
    inputs: &[Tensor<f64>],
    tolerance: f64,
) -> bool {
    let analytic = gradient(inputs);
    grad_check_report(loss, &analytic, inputs, tolerance).passed()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_wrong_gradient() {
        let x = Tensor::from_f64(&[3], &[0.5, -1.0, 2.0]).unwrap();
        let loss = |v: &[Tensor<f64>]| v[0].data().iter().map(|a| a * a).sum::<f64>();
        let good = |v: &[Tensor<f64>]| vec![v[0].map(|a| 2.0 * a)];
        let bad = |v: &[Tensor<f64>]| vec![v[0].map(|a| 2.1 * a)];
        assert!(grad_check(loss, good, std::slice::from_ref(&x), 1e-6));
        assert!(!grad_check(loss, bad, &[x], 1e-3));
    }

    #[test]
    fn nan_gradient_fails() {
        let x = Tensor::from_f64(&[1], &[1.0]).unwrap();
        let loss = |v: &[Tensor<f64>]| v[0].data()[0];
        let nan = |_: &[Tensor<f64>]| vec![Tensor::from_f64(&[1], &[f64::NAN]).unwrap()];
        assert!(!grad_check(loss, nan, &[x], 1e-3));
    }
}
