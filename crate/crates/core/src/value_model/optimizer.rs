use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LEARNING_RATE: f64 = 6.25e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Bias-corrected adaptive moments.
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// `p ← p − lr·g`.
    Sgd,
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1.5e-4 }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

/// Learning-rate schedule over optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr · τ / (τ + t)` after `t` completed steps.
    Harmonic { tau: f64 },
}

/// Per-parameter optimizer state for one value model.
#[derive(Debug, Clone)]
pub struct Optimizer<S> {
    kind: OptimizerKind,
    schedule: LrSchedule,
    lr: S,
    steps: u64,
    first_moment: Vec<S>,
    second_moment: Vec<S>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be finite and non-negative, got {lr}")));
        }
        let moments = match kind {
            OptimizerKind::Adam { .. } => n_params,
            OptimizerKind::Sgd => 0,
        };
        Ok(Self {
            kind,
            schedule: LrSchedule::Constant,
            lr: S::lit(lr),
            steps: 0,
            first_moment: vec![S::zero(); moments],
            second_moment: vec![S::zero(); moments],
        })
    }

    pub fn with_schedule(mut self, schedule: LrSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn current_lr(&self) -> S {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Harmonic { tau } => self.lr * S::lit(tau / (tau + self.steps as f64)),
        }
    }

    pub fn first_moment(&self) -> &[S] {
        &self.first_moment
    }

    /// Applies one update. Gradients are checked for finiteness before any
    /// parameter or accumulator is touched.
    pub fn step(&mut self, params: &mut [S], grads: &[S]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters but {} gradient entries",
                params.len(),
                grads.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        let lr = self.current_lr();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first_moment.len() != params.len() {
                    return Err(Error::ShapeMismatch("optimizer state does not match parameters".into()));
                }
                let t = (self.steps + 1) as i32;
                let (b1, b2, eps) = (S::lit(beta1), S::lit(beta2), S::lit(eps));
                let c1 = S::one() - b1.powi(t);
                let c2 = S::one() - b2.powi(t);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    *m = b1 * *m + (S::one() - b1) * g;
                    *v = b2 * *v + (S::one() - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// Rescales `grads` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<S: Scalar>(grads: &mut [S], max_norm: S) -> S {
    let norm = grads.iter().map(|&g| g * g).sum::<S>().sqrt();
    if norm > max_norm && norm > S::zero() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
