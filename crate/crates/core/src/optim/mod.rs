//! AdamW and LAMB with decoupled weight decay, and the learning-rate schedule.

mod schedule;

pub use schedule::{rescaled_peak, Schedule};

use thiserror::Error;

use crate::model::ParameterSet;
use crate::numerics::Scalar;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("no gradient for {0}")]
    MissingGradient(String),
    #[error("{name}: gradient shape {found:?} does not match parameter shape {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("learning rate {0} must be positive and finite")]
    InvalidLearningRate(f64),
    #[error("need 0 < warmup_steps ({warmup_steps}) < total_steps ({total_steps})")]
    InvalidSchedule { warmup_steps: u64, total_steps: u64 },
    #[error("step {step} beyond schedule end {total}")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("optimizer state: {0}")]
    State(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Lamb,
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.01,
        }
    }
}

/// Biases and normalization gains are not decayed.
pub fn decays(name: &str) -> bool {
    !(name.ends_with("bias") || name.ends_with("/gain"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    pub m: ParameterSet<F>,
    pub v: ParameterSet<F>,
    /// Number of completed steps.
    pub step: u64,
    pub hyper: Hyper,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(params: &ParameterSet<F>, hyper: Hyper) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            hyper,
        }
    }

    pub fn adamw_step(
        &mut self,
        params: &mut ParameterSet<F>,
        grads: &ParameterSet<F>,
        lr: f64,
    ) -> Result<(), OptimError> {
        self.step_with(OptimizerKind::AdamW, params, grads, lr)
    }

    pub fn lamb_step(&mut self, params: &mut ParameterSet<F>, grads: &ParameterSet<F>, lr: f64) -> Result<(), OptimError> {
        self.step_with(OptimizerKind::Lamb, params, grads, lr)
    }

    /// One update of every parameter. Inputs are checked in full before
    /// anything is modified.
    pub fn step_with(
        &mut self,
        kind: OptimizerKind,
        params: &mut ParameterSet<F>,
        grads: &ParameterSet<F>,
        lr: f64,
    ) -> Result<(), OptimError> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(OptimError::InvalidLearningRate(lr));
        }
        for (name, p) in params.iter() {
            let g = grads
                .get(name)
                .map_err(|_| OptimError::MissingGradient(name.clone()))?;
            if g.shape() != p.shape() {
                return Err(OptimError::ShapeMismatch {
                    name: name.clone(),
                    expected: p.shape().to_vec(),
                    found: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(OptimError::NonFiniteGradient(name.clone()));
            }
            let (m, v) = (self.m.get(name), self.v.get(name));
            if !matches!((m, v), (Ok(m), Ok(v)) if m.shape() == p.shape() && v.shape() == p.shape()) {
                return Err(OptimError::State(format!("moments for {name} missing or misshapen")));
            }
        }

        let t = self.step + 1;
        let hp = self.hyper;
        let bc1 = 1.0 - hp.beta1.powi(t as i32);
        let bc2 = 1.0 - hp.beta2.powi(t as i32);
        let (b1, b2) = (F::lit(hp.beta1), F::lit(hp.beta2));
        let (ob1, ob2) = (F::lit(1.0 - hp.beta1), F::lit(1.0 - hp.beta2));
        let (inv_bc1, inv_bc2) = (F::lit(1.0 / bc1), F::lit(1.0 / bc2));
        let eps = F::lit(hp.eps);

        for (name, p) in params.iter_mut() {
            let g = grads.get(name).expect("checked").data();
            let m = self.m.get_mut(name).expect("checked").data_mut();
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = b1 * *mi + ob1 * gi;
            }
            let v = self.v.get_mut(name).expect("checked").data_mut();
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = b2 * *vi + ob2 * gi * gi;
            }
            let m = self.m.get(name).expect("checked").data();
            let v = self.v.get(name).expect("checked").data();
            let wd = F::lit(if decays(name) { hp.weight_decay } else { 0.0 });
            let pd = p.data_mut();
            let update: Vec<F> = pd
                .iter()
                .zip(m.iter().zip(v))
                .map(|(&pi, (&mi, &vi))| (mi * inv_bc1) / ((vi * inv_bc2).sqrt() + eps) + wd * pi)
                .collect();
            let scale = match kind {
                OptimizerKind::AdamW => lr,
                OptimizerKind::Lamb => lr * trust_ratio(pd, &update),
            };
            let scale = F::lit(scale);
            for (pi, u) in pd.iter_mut().zip(update) {
                *pi -= scale * u;
            }
        }
        self.step = t;
        Ok(())
    }

    /// Moments as `m/<name>` and `v/<name>` tensors for checkpointing.
    pub fn to_tensors(&self) -> ParameterSet<f32> {
        let mut out = ParameterSet::new();
        for (prefix, set) in [("m/", &self.m), ("v/", &self.v)] {
            for (name, t) in set.iter() {
                out.insert(format!("{prefix}{name}"), t.cast::<f32>());
            }
        }
        out
    }

    /// Rebuilds state for `params` from [`to_tensors`](Self::to_tensors) output.
    pub fn from_tensors(
        tensors: &ParameterSet<f32>,
        params: &ParameterSet<F>,
        step: u64,
        hyper: Hyper,
    ) -> Result<Self, OptimError> {
        let mut state = Self::new(params, hyper);
        state.step = step;
        for (prefix, set) in [("m/", &mut state.m), ("v/", &mut state.v)] {
            for (name, t) in set.iter_mut() {
                let stored = tensors
                    .get(&format!("{prefix}{name}"))
                    .map_err(|_| OptimError::State(format!("missing {prefix}{name}")))?;
                if stored.shape() != t.shape() {
                    return Err(OptimError::State(format!("{prefix}{name} has shape {:?}", stored.shape())));
                }
                *t = stored.cast::<F>();
            }
        }
        if tensors.len() != state.m.len() + state.v.len() {
            return Err(OptimError::State("unexpected moment tensors".into()));
        }
        Ok(state)
    }
}

/// ‖p‖/‖u‖ clipped to [0, 10]; 1 when either norm is zero.
pub fn trust_ratio<F: Scalar>(p: &[F], u: &[F]) -> f64 {
    let norm = |x: &[F]| x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
    let (pn, un) = (norm(p), norm(u));
    if pn == 0.0 || un == 0.0 {
        1.0
    } else {
        (pn / un).clamp(0.0, 10.0)
    }
}
