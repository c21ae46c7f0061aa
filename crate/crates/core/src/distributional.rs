//! Categorical return distributions on a fixed, evenly spaced atom grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{argmax, Scalar};
use crate::value_model::{mean_over_members, Ensemble};

/// Floor applied inside `ln` when scoring raw probabilities.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
const MASS_TOLERANCE: f64 = 1e-9;

/// Atoms `z_j = v_min + j·Δz`, `j = 0..L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Support<S> {
    v_min: S,
    v_max: S,
    delta: S,
    atoms: Vec<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for SupportSpec {
    fn default() -> Self {
        Self { atoms: 51, v_min: -10.0, v_max: 10.0 }
    }
}

impl<S: Scalar> Support<S> {
    pub fn new(v_min: f64, v_max: f64, n_atoms: usize) -> Result<Self> {
        if n_atoms < 2 {
            return Err(Error::InvalidSupport(format!("need at least 2 atoms, got {n_atoms}")));
        }
        if !(v_min < v_max) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(Error::InvalidSupport(format!("need finite v_min < v_max, got [{v_min}, {v_max}]")));
        }
        let (lo, hi) = (S::lit(v_min), S::lit(v_max));
        let delta = (hi - lo) / S::lit((n_atoms - 1) as f64);
        let atoms = (0..n_atoms).map(|j| lo + S::lit(j as f64) * delta).collect();
        Ok(Self { v_min: lo, v_max: hi, delta, atoms })
    }

    pub fn from_spec(spec: &SupportSpec) -> Result<Self> {
        Self::new(spec.v_min, spec.v_max, spec.atoms)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn atoms(&self) -> &[S] {
        &self.atoms
    }

    pub fn v_min(&self) -> S {
        self.v_min
    }

    pub fn v_max(&self) -> S {
        self.v_max
    }

    pub fn delta(&self) -> S {
        self.delta
    }
}

/// Probability vector over the atoms of a [`Support`].
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalValue<S>(Vec<S>);

/// Bellman-projected target mass `c` on the support.
pub type ProjectedTarget<S> = CategoricalValue<S>;

impl<S: Scalar> CategoricalValue<S> {
    pub fn new(probs: Vec<S>) -> Result<Self> {
        if probs.iter().any(|&p| !(p >= S::zero()) || !p.is_finite()) {
            return Err(Error::InvalidDistribution("negative or non-finite mass".into()));
        }
        let total: S = probs.iter().copied().sum();
        if (total - S::one()).abs() > S::lit(MASS_TOLERANCE).max(S::epsilon() * S::lit(16.0 * probs.len() as f64)) {
            return Err(Error::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[S] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<S> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Numerically stable softmax.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<S>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

/// `z · p`.
pub fn expected_value<S: Scalar>(dist: &[S], support: &Support<S>) -> Result<S> {
    if dist.len() != support.len() {
        return Err(Error::SupportMismatch { expected: support.len(), got: dist.len() });
    }
    Ok(dist.iter().zip(support.atoms()).map(|(&p, &z)| p * z).sum())
}

/// Element-wise mean of member distributions.
pub fn mean_distribution<S: Scalar>(members: &[&[S]], support: &Support<S>) -> Result<CategoricalValue<S>> {
    if let Some(bad) = members.iter().find(|d| d.len() != support.len()) {
        return Err(Error::SupportMismatch { expected: support.len(), got: bad.len() });
    }
    let owned: Vec<Vec<S>> = members.iter().map(|d| d.to_vec()).collect();
    CategoricalValue::new(mean_over_members(&owned)?)
}

/// Per-action distributions from one model's raw logits (`n_actions × L`).
pub fn action_distributions<S: Scalar>(logits: &[S], support: &Support<S>) -> Result<Vec<Vec<S>>> {
    let l = support.len();
    if logits.is_empty() || !logits.len().is_multiple_of(l) {
        return Err(Error::SupportMismatch { expected: l, got: logits.len() });
    }
    Ok(logits.chunks(l).map(softmax).collect())
}

/// `argmax_a z · mean_k p_k(a)`, lowest index on ties. Input is member × action × atom.
pub fn distributional_greedy_action<S: Scalar>(member_dists: &[Vec<Vec<S>>], support: &Support<S>) -> Result<usize> {
    let scores = mean_expected_values(member_dists, support)?;
    argmax(&scores).ok_or(Error::NonFinite("expected values"))
}

/// Per-member expected values `z · p_k(a)` (member × action).
pub fn member_expected_values<S: Scalar>(member_dists: &[Vec<Vec<S>>], support: &Support<S>) -> Result<Vec<Vec<S>>> {
    member_dists
        .iter()
        .map(|actions| actions.iter().map(|d| expected_value(d, support)).collect())
        .collect()
}

fn mean_expected_values<S: Scalar>(member_dists: &[Vec<Vec<S>>], support: &Support<S>) -> Result<Vec<S>> {
    mean_over_members(&member_expected_values(member_dists, support)?)
}

/// Projects the shifted and scaled atoms `r + discount·z_j` (or `r` alone when
/// `terminal`) back onto the support, splitting each atom's mass linearly
/// between its two neighbours. An atom landing exactly on a grid point keeps
/// its full mass there.
pub fn project<S: Scalar>(
    target: &[S],
    reward: S,
    discount: S,
    terminal: bool,
    support: &Support<S>,
) -> Result<ProjectedTarget<S>> {
    if target.len() != support.len() {
        return Err(Error::SupportMismatch { expected: support.len(), got: target.len() });
    }
    CategoricalValue::new(target.to_vec())?;
    let n = support.len();
    let top = S::lit((n - 1) as f64);
    let mut c = vec![S::zero(); n];
    for (&p, &z) in target.iter().zip(support.atoms()) {
        let tz = if terminal { reward } else { reward + discount * z };
        let clipped = tz.max(support.v_min()).min(support.v_max());
        let h = ((clipped - support.v_min()) / support.delta()).max(S::zero()).min(top);
        let lower = h.floor();
        let upper = h.ceil();
        let l = lower.to_usize().unwrap_or(0);
        let u = upper.to_usize().unwrap_or(n - 1).min(n - 1);
        if l == u {
            c[l] += p;
        } else {
            c[l] += p * (upper - h);
            c[u] += p * (h - lower);
        }
    }
    Ok(CategoricalValue(c))
}

/// `−Σ_j c_j ln p_j` over raw probabilities, with `ln` floored at
/// [`PROBABILITY_FLOOR`]. An atom with `p_j = 0` and `c_j > 0` is an error.
pub fn cross_entropy<S: Scalar>(target: &[S], probs: &[S]) -> Result<S> {
    if target.len() != probs.len() {
        return Err(Error::SupportMismatch { expected: target.len(), got: probs.len() });
    }
    let floor = S::lit(PROBABILITY_FLOOR);
    let mut loss = S::zero();
    for (atom, (&c, &p)) in target.iter().zip(probs).enumerate() {
        if c > S::zero() && p <= S::zero() {
            return Err(Error::ProbabilityFloor { atom });
        }
        if c > S::zero() {
            loss -= c * p.max(floor).ln();
        }
    }
    Ok(loss)
}

/// Cross-entropy of the target against `softmax(logits)` and its gradient
/// with respect to the logits, `softmax(logits) − c`.
pub fn cross_entropy_loss<S: Scalar>(target: &[S], logits: &[S]) -> Result<(S, Vec<S>)> {
    if target.len() != logits.len() {
        return Err(Error::SupportMismatch { expected: target.len(), got: logits.len() });
    }
    let log_p = log_softmax(logits);
    let loss = -target.iter().zip(&log_p).map(|(&c, &lp)| c * lp).sum::<S>();
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss"));
    }
    let grad = log_p.iter().zip(target).map(|(&lp, &c)| lp.exp() - c).collect();
    Ok((loss, grad))
}

/// How a model's raw outputs become action values.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueHead<S> {
    /// One output per action, read as Q directly.
    Scalar,
    /// `L` logits per action; `Q = z · softmax(logits)`.
    Categorical(Support<S>),
}

impl<S: Scalar> ValueHead<S> {
    pub fn outputs_per_action(&self) -> usize {
        match self {
            ValueHead::Scalar => 1,
            ValueHead::Categorical(support) => support.len(),
        }
    }

    /// Action values of one model from its raw outputs.
    pub fn action_values(&self, outputs: &[S]) -> Result<Vec<S>> {
        match self {
            ValueHead::Scalar => Ok(outputs.to_vec()),
            ValueHead::Categorical(support) => action_distributions(outputs, support)?
                .iter()
                .map(|d| expected_value(d, support))
                .collect(),
        }
    }

    /// Member × action value matrix of an ensemble at `state`.
    pub fn member_values(&self, ensemble: &Ensemble<S>, state: usize) -> Result<Vec<Vec<S>>> {
        ensemble
            .members()
            .iter()
            .map(|m| self.action_values(&m.predict(state)?))
            .collect()
    }

    /// `max_a mean_k Q_k(state, a)` under this head.
    pub fn ensemble_value(&self, ensemble: &Ensemble<S>, state: usize) -> Result<S> {
        let mean = mean_over_members(&self.member_values(ensemble, state)?)?;
        crate::scalar::max_value(&mean).ok_or(Error::NonFinite("ensemble values"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn z3() -> Support<f64> {
        Support::new(0.0, 2.0, 3).unwrap()
    }

    #[test]
    fn support_layout() {
        let s = Support::<f64>::new(-10.0, 10.0, 51).unwrap();
        assert_eq!(s.len(), 51);
        assert_eq!(s.delta(), 0.4);
        assert_eq!(s.atoms()[0], -10.0);
        assert!(s.atoms().windows(2).all(|w| w[0] < w[1]));
        assert!(Support::<f64>::new(1.0, 1.0, 3).is_err());
        assert!(Support::<f64>::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn expected_values() {
        let s = z3();
        assert_eq!(expected_value(&[0.0, 0.0, 1.0], &s).unwrap(), 2.0);
        assert_relative_eq!(expected_value(&[1.0 / 3.0; 3], &s).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(expected_value(&[0.5, 0.5, 0.0], &s).unwrap(), 0.5);
        assert!(expected_value(&[1.0], &s).is_err());
    }

    #[test]
    fn mean_of_members() {
        let s = z3();
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 0.0, 1.0];
        assert_eq!(mean_distribution(&[&a, &b], &s).unwrap().probs(), &[0.5, 0.0, 0.5]);
        assert_eq!(mean_distribution(&[&a], &s).unwrap().probs(), &a);
        assert!(mean_distribution(&[&a[..2]], &s).is_err());
    }

    #[test]
    fn greedy_by_expected_value() {
        let s = z3();
        let single = vec![vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]];
        assert_eq!(distributional_greedy_action(&single, &s).unwrap(), 0);
        let same = vec![vec![vec![0.2, 0.3, 0.5]; 3]];
        assert_eq!(distributional_greedy_action(&same, &s).unwrap(), 0);
        // Expected values a0: {0, 4}, a1: {2, 1} on z = (0, 2, 4).
        let wide = Support::<f64>::new(0.0, 4.0, 3).unwrap();
        let members = vec![
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            vec![vec![0.0, 0.0, 1.0], vec![0.5, 0.5, 0.0]],
        ];
        assert_eq!(distributional_greedy_action(&members, &wide).unwrap(), 0);
    }

    #[test]
    fn projection_examples() {
        let s = z3();
        let p = [0.2, 0.5, 0.3];
        assert_eq!(project(&p, 0.0, 1.0, false, &s).unwrap().probs(), &p);
        let c = project(&[1.0, 0.0, 0.0], 0.5, 1.0, false, &s).unwrap();
        assert_eq!(c.probs(), &[0.5, 0.5, 0.0]);
        let c = project(&p, 10.0, 0.9, true, &s).unwrap();
        assert_eq!(c.probs(), &[0.0, 0.0, 1.0]);
        assert!(project(&[0.5, 0.6, 0.0], 0.0, 1.0, false, &s).is_err());
    }

    #[test]
    fn integral_positions_keep_full_mass() {
        let s = z3();
        let c = project(&[0.0, 1.0, 0.0], 1.0, 1.0, false, &s).unwrap();
        assert_eq!(c.probs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let logits = [0.3, -1.2, 2.0];
        let p = softmax(&logits);
        let (loss, grad) = cross_entropy_loss(&p, &logits).unwrap();
        let entropy: f64 = -p.iter().map(|&q: &f64| q * q.ln()).sum::<f64>();
        assert_relative_eq!(loss, entropy, epsilon = 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-15));

        let (loss, _) = cross_entropy_loss(&[0.0, 1.0, 0.0, 0.0], &[0.0; 4]).unwrap();
        assert_relative_eq!(loss, 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn zero_probability_with_target_mass_is_floor_violation() {
        assert!(matches!(cross_entropy(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::ProbabilityFloor { atom: 1 })));
        assert_relative_eq!(cross_entropy(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
    }

    #[test]
    fn categorical_head_values() {
        let s = z3();
        let head = ValueHead::Categorical(s);
        let vals = head.action_values(&[0.0, 0.0, 0.0, 0.0, 0.0, 50.0]).unwrap();
        assert_relative_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 2.0, epsilon = 1e-12);
    }
}
