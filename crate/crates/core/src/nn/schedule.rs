use std::f64::consts::PI;

use super::NnError;

/// Linear warmup to `base_lr` followed by cosine annealing to zero at
/// `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self, NnError> {
        if !(base_lr >= 0.0 && base_lr.is_finite()) {
            return Err(NnError::Range(format!("base learning rate {base_lr}")));
        }
        if total_steps <= warmup_steps {
            return Err(NnError::Range(format!(
                "total steps {total_steps} must exceed warmup steps {warmup_steps}"
            )));
        }
        Ok(LrSchedule {
            base_lr,
            warmup_steps,
            total_steps,
        })
    }

    /// A schedule that is zero everywhere.
    pub fn frozen(total_steps: u64) -> Self {
        LrSchedule {
            base_lr: 0.0,
            warmup_steps: 0,
            total_steps: total_steps.max(1),
        }
    }

    pub fn lr_at(&self, step: u64) -> Result<f64, NnError> {
        if step > self.total_steps {
            return Err(NnError::Range(format!(
                "step {step} beyond {} total steps",
                self.total_steps
            )));
        }
        if step < self.warmup_steps {
            return Ok(self.base_lr * (step + 1) as f64 / self.warmup_steps as f64);
        }
        let progress = (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        Ok(self.base_lr * 0.5 * (1.0 + (PI * progress).cos()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let s = LrSchedule::new(1.0, 128, 1000).unwrap();
        assert_eq!(s.lr_at(63).unwrap(), 0.5);
        assert_eq!(s.lr_at(128).unwrap(), 1.0);
        assert_eq!(s.lr_at(1000).unwrap(), 0.0);
        assert_eq!(s.lr_at(0).unwrap(), 1.0 / 128.0);
        assert!(s.lr_at(1001).is_err());
    }

    #[test]
    fn never_negative() {
        let s = LrSchedule::new(5e-5, 128, 5000).unwrap();
        for step in 0..=5000 {
            assert!(s.lr_at(step).unwrap() >= 0.0);
        }
    }

    #[test]
    fn rejects_degenerate() {
        assert!(LrSchedule::new(1.0, 128, 128).is_err());
        assert!(LrSchedule::new(-1.0, 1, 10).is_err());
    }
}
