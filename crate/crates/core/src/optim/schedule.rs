use super::OptimError;

/// Linear warmup from 0 to `peak_lr`, then linear decay to 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn new(peak_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self, OptimError> {
        if !(peak_lr > 0.0 && peak_lr.is_finite()) {
            return Err(OptimError::InvalidLearningRate(peak_lr));
        }
        if warmup_steps == 0 || warmup_steps >= total_steps {
            return Err(OptimError::InvalidSchedule {
                warmup_steps,
                total_steps,
            });
        }
        Ok(Self {
            peak_lr,
            warmup_steps,
            total_steps,
        })
    }

    pub fn lr_at(&self, step: u64) -> Result<f64, OptimError> {
        if step > self.total_steps {
            return Err(OptimError::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        let frac = if step <= self.warmup_steps {
            step as f64 / self.warmup_steps as f64
        } else {
            (self.total_steps - step) as f64 / (self.total_steps - self.warmup_steps) as f64
        };
        Ok(self.peak_lr * frac)
    }
}

/// Peak learning rate rescaled by 2^-1.5 after the batch size is cut by 8x
/// under square-root scaling.
pub fn rescaled_peak(base_lr: f64) -> Result<f64, OptimError> {
    if !(base_lr > 0.0 && base_lr.is_finite()) {
        return Err(OptimError::InvalidLearningRate(base_lr));
    }
    Ok(base_lr * 2f64.powf(-1.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_schedule_points() {
        let s = Schedule::new(0.00176, 3125, 200_000).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
        assert_eq!(s.lr_at(3125).unwrap(), 0.00176);
        assert!((s.lr_at(101_562).unwrap() - 0.00088).abs() < 1e-6);
        assert_eq!(s.lr_at(200_000).unwrap(), 0.0);
        assert!(s.lr_at(200_001).is_err());
    }

    #[test]
    fn peak_is_unique_maximum() {
        let s = Schedule::new(1e-5, 320, 5336).unwrap();
        let lrs: Vec<f64> = (0..=5336).map(|t| s.lr_at(t).unwrap()).collect();
        let (argmax, &max) = lrs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!((argmax, max), (320, 1e-5));
        // piecewise linear: second differences vanish away from the kink
        for t in 1..5336 {
            if t != 320 {
                let d2 = lrs[t + 1] - 2.0 * lrs[t] + lrs[t - 1];
                assert!(d2.abs() < 1e-18, "step {t}");
            }
        }
    }

    #[test]
    fn rescale() {
        let r = rescaled_peak(0.00176).unwrap();
        assert!((r - 0.000622).abs() < 5e-6);
        assert_eq!((r * 1e5).round() / 1e5, 0.00062);
        assert!((rescaled_peak(1.0).unwrap() - 0.353553).abs() < 1e-6);
        assert!(rescaled_peak(0.0).is_err());
    }

    #[test]
    fn bad_schedules() {
        assert!(Schedule::new(0.0, 1, 2).is_err());
        assert!(Schedule::new(0.1, 0, 2).is_err());
        assert!(Schedule::new(0.1, 5, 5).is_err());
    }
}
