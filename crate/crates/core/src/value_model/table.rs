use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tabular estimator: one row of outputs per state.
///
/// Each row holds `n_actions * outputs_per_action` entries. Scalar value
/// learning uses one output per action; categorical learning stores one logit
/// per atom per action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionValueTable<S> {
    n_states: usize,
    n_actions: usize,
    outputs_per_action: usize,
    values: Vec<S>,
}

impl<S: Scalar> ActionValueTable<S> {
    pub fn zeros(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::zeros_with_outputs(n_states, n_actions, 1)
    }

    pub fn zeros_with_outputs(n_states: usize, n_actions: usize, outputs_per_action: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || outputs_per_action == 0 {
            return Err(Error::ShapeMismatch("table dimensions must be positive".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            outputs_per_action,
            values: vec![S::zero(); n_states * n_actions * outputs_per_action],
        })
    }

    /// Builds a scalar table from row-major `values` (`n_states × n_actions`).
    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<S>) -> Result<Self> {
        let mut table = Self::zeros(n_states, n_actions)?;
        if values.len() != table.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} table entries, got {}",
                table.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("table values"));
        }
        table.values = values;
        Ok(table)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn outputs_per_action(&self) -> usize {
        self.outputs_per_action
    }

    fn width(&self) -> usize {
        self.n_actions * self.outputs_per_action
    }

    /// The stored row for `state`.
    pub fn row(&self, state: usize) -> Result<&[S]> {
        self.check_state(state)?;
        let w = self.width();
        Ok(&self.values[state * w..(state + 1) * w])
    }

    pub fn row_mut(&mut self, state: usize) -> Result<&mut [S]> {
        self.check_state(state)?;
        let w = self.width();
        Ok(&mut self.values[state * w..(state + 1) * w])
    }

    pub fn params(&self) -> &[S] {
        &self.values
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    /// Adds `output_gradient` into the gradient slots of `state`'s row.
    pub fn accumulate_gradient(&self, state: usize, output_gradient: &[S], grads: &mut [S]) -> Result<()> {
        self.check_state(state)?;
        let w = self.width();
        if output_gradient.len() != w || grads.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "table gradient expects {w} outputs and {} parameters",
                self.values.len()
            )));
        }
        for (g, &d) in grads[state * w..(state + 1) * w].iter_mut().zip(output_gradient) {
            *g += d;
        }
        Ok(())
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.n_states {
            return Err(Error::StateOutOfRange { state, n_states: self.n_states });
        }
        Ok(())
    }
}
