use serde::{Deserialize, Serialize};

use super::Estimator;
use crate::error::{Error, Result};
use crate::scalar::{argmax, max_value, Scalar};

/// K value models of identical shape with independent parameter storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<S> {
    members: Vec<Estimator<S>>,
}

/// Element-wise mean over per-member vectors of equal length.
pub fn mean_over_members<S: Scalar>(member_values: &[Vec<S>]) -> Result<Vec<S>> {
    let first = member_values.first().ok_or(Error::EmptyEnsemble)?;
    let k = S::lit(member_values.len() as f64);
    let mut mean = vec![S::zero(); first.len()];
    for values in member_values {
        if values.len() != mean.len() {
            return Err(Error::ShapeMismatch("members disagree on output length".into()));
        }
        for (m, &v) in mean.iter_mut().zip(values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= k;
    }
    Ok(mean)
}

/// Element-wise population standard deviation (divisor K) over members.
pub fn std_over_members<S: Scalar>(member_values: &[Vec<S>]) -> Result<Vec<S>> {
    let mean = mean_over_members(member_values)?;
    let k = S::lit(member_values.len() as f64);
    let mut var = vec![S::zero(); mean.len()];
    for values in member_values {
        for ((acc, &v), &m) in var.iter_mut().zip(values).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    Ok(var.into_iter().map(|v| (v / k).sqrt()).collect())
}

impl<S: Scalar> Ensemble<S> {
    pub fn new(members: Vec<Estimator<S>>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        if members.iter().any(|m| !m.same_shape(first)) {
            return Err(Error::ShapeMismatch("ensemble members must share one shape".into()));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_actions(&self) -> usize {
        self.members[0].n_actions()
    }

    pub fn members(&self) -> &[Estimator<S>] {
        &self.members
    }

    pub fn member(&self, k: usize) -> &Estimator<S> {
        &self.members[k]
    }

    pub fn member_mut(&mut self, k: usize) -> &mut Estimator<S> {
        &mut self.members[k]
    }

    /// Raw outputs of every member at `state`.
    pub fn member_outputs(&self, state: usize) -> Result<Vec<Vec<S>>> {
        self.members.iter().map(|m| m.predict(state)).collect()
    }

    fn scalar_member_values(&self, state: usize) -> Result<Vec<Vec<S>>> {
        if self.members[0].outputs_per_action() != 1 {
            return Err(Error::ShapeMismatch(
                "scalar ensemble queries need one output per action; use a categorical head".into(),
            ));
        }
        self.member_outputs(state)
    }

    /// `mean_k Q_k(state, ·)`.
    pub fn mean_values(&self, state: usize) -> Result<Vec<S>> {
        mean_over_members(&self.scalar_member_values(state)?)
    }

    /// `max_a mean_k Q_k(state, a)`.
    pub fn value(&self, state: usize) -> Result<S> {
        let mean = self.mean_values(state)?;
        max_value(&mean).ok_or(Error::NonFinite("ensemble mean values"))
    }

    /// Greedy action of the ensemble-mean policy, lowest index on ties.
    pub fn greedy_action(&self, state: usize) -> Result<usize> {
        let mean = self.mean_values(state)?;
        argmax(&mean).ok_or(Error::NonFinite("ensemble mean values"))
    }

    /// Population standard deviation of member values per action.
    pub fn std_values(&self, state: usize) -> Result<Vec<S>> {
        std_over_members(&self.scalar_member_values(state)?)
    }

    /// Overwrites every member's parameters with `other`'s.
    pub fn copy_params_from(&mut self, other: &Ensemble<S>) {
        for (dst, src) in self.members.iter_mut().zip(&other.members) {
            dst.params_mut().copy_from_slice(src.params());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Targets read the live parameters.
    Online,
    /// Targets are copies refreshed every `period` environment steps.
    Lagging { period: u64 },
}

/// Target parameters for TD bootstrapping, either lagging copies or the live ensemble.
#[derive(Debug, Clone)]
pub struct TargetEnsemble<S> {
    mode: TargetMode,
    copies: Option<Ensemble<S>>,
}

impl<S: Scalar> TargetEnsemble<S> {
    pub fn new(mode: TargetMode, live: &Ensemble<S>) -> Result<Self> {
        let copies = match mode {
            TargetMode::Online => None,
            TargetMode::Lagging { period: 0 } => {
                return Err(Error::InvalidConfig("target sync period must be positive".into()))
            }
            TargetMode::Lagging { .. } => Some(live.clone()),
        };
        Ok(Self { mode, copies })
    }

    pub fn mode(&self) -> TargetMode {
        self.mode
    }

    /// Parameters that targets are computed from.
    pub fn view<'a>(&'a self, live: &'a Ensemble<S>) -> &'a Ensemble<S> {
        self.copies.as_ref().unwrap_or(live)
    }

    /// Copies live parameters when `step` is a multiple of the sync period.
    /// Returns whether a copy happened.
    pub fn sync(&mut self, live: &Ensemble<S>, step: u64) -> bool {
        match (self.mode, self.copies.as_mut()) {
            (TargetMode::Lagging { period }, Some(copies)) if step.is_multiple_of(period) => {
                copies.copy_params_from(live);
                true
            }
            _ => false,
        }
    }
}

/// The most recent K parameter snapshots of a single network.
#[derive(Debug, Clone)]
pub struct SnapshotHistory<S> {
    capacity: usize,
    history: Option<Ensemble<S>>,
}

impl<S: Scalar> SnapshotHistory<S> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("snapshot history needs capacity ≥ 1".into()));
        }
        Ok(Self { capacity, history: None })
    }

    pub fn len(&self) -> usize {
        self.history.as_ref().map_or(0, Ensemble::len)
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_none()
    }

    /// Appends a copy of `current`, evicting the oldest beyond capacity.
    pub fn push(&mut self, current: &Estimator<S>) {
        match self.history.as_mut() {
            None => self.history = Some(Ensemble { members: vec![current.clone()] }),
            Some(h) if h.members.len() == self.capacity => {
                let mut oldest = h.members.remove(0);
                oldest.params_mut().copy_from_slice(current.params());
                h.members.push(oldest);
            }
            Some(h) => h.members.push(current.clone()),
        }
    }

    /// The history viewed as an ensemble whose mean is the snapshot average.
    pub fn as_ensemble(&self) -> Result<&Ensemble<S>> {
        self.history.as_ref().ok_or(Error::EmptyEnsemble)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value_model::ActionValueTable;

    fn table(row: &[f64]) -> Estimator<f64> {
        Estimator::Table(ActionValueTable::from_values(1, row.len(), row.to_vec()).unwrap())
    }

    #[test]
    fn mean_and_value_of_two_members() {
        let e = Ensemble::new(vec![table(&[1.0, 3.0]), table(&[3.0, 1.0])]).unwrap();
        assert_eq!(e.mean_values(0).unwrap(), vec![2.0, 2.0]);
        assert_eq!(e.value(0).unwrap(), 2.0);
        assert_eq!(e.greedy_action(0).unwrap(), 0);
        let e = Ensemble::new(vec![table(&[0.0, 4.0]), table(&[2.0, 0.0])]).unwrap();
        assert_eq!(e.value(0).unwrap(), 2.0);
        assert_eq!(e.greedy_action(0).unwrap(), 1);
    }

    #[test]
    fn single_member_reduces_to_member() {
        let e = Ensemble::new(vec![table(&[1.0, -2.0])]).unwrap();
        assert_eq!(e.mean_values(0).unwrap(), vec![1.0, -2.0]);
        assert_eq!(e.value(0).unwrap(), 1.0);
        assert_eq!(e.std_values(0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn population_std() {
        let e = Ensemble::new(vec![table(&[0.0, 1.0]), table(&[0.0, -1.0])]).unwrap();
        assert_eq!(e.std_values(0).unwrap(), vec![0.0, 1.0]);
        let same = Ensemble::new(vec![table(&[2.0, 5.0]); 4]).unwrap();
        assert_eq!(same.std_values(0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn empty_and_mismatched_ensembles_rejected() {
        assert!(matches!(Ensemble::<f64>::new(vec![]), Err(Error::EmptyEnsemble)));
        assert!(Ensemble::new(vec![table(&[1.0]), table(&[1.0, 2.0])]).is_err());
        assert!(matches!(mean_over_members::<f64>(&[]), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn lagging_targets_sync_on_period() {
        let mut live = Ensemble::new(vec![table(&[0.0, 0.0])]).unwrap();
        let mut targets = TargetEnsemble::new(TargetMode::Lagging { period: 100 }, &live).unwrap();
        live.member_mut(0).params_mut()[1] = 5.0;
        assert!(!targets.sync(&live, 101));
        assert_eq!(targets.view(&live).value(0).unwrap(), 0.0);
        assert!(targets.sync(&live, 100));
        assert_eq!(targets.view(&live).value(0).unwrap(), live.value(0).unwrap());
        assert_eq!(live.member(0).params(), &[0.0, 5.0]);
    }

    #[test]
    fn online_targets_alias_live() {
        let mut live = Ensemble::new(vec![table(&[0.0, 0.0])]).unwrap();
        let mut targets = TargetEnsemble::new(TargetMode::Online, &live).unwrap();
        live.member_mut(0).params_mut()[0] = 3.0;
        assert!(!targets.sync(&live, 0));
        assert_eq!(targets.view(&live).member(0).params(), live.member(0).params());
    }

    #[test]
    fn snapshot_history_evicts_oldest() {
        let mut h = SnapshotHistory::new(2).unwrap();
        h.push(&table(&[0.0]));
        assert_eq!(h.as_ensemble().unwrap().value(0).unwrap(), 0.0);
        h.push(&table(&[4.0]));
        assert_eq!(h.as_ensemble().unwrap().value(0).unwrap(), 2.0);
        h.push(&table(&[6.0]));
        assert_eq!(h.len(), 2);
        assert_eq!(h.as_ensemble().unwrap().value(0).unwrap(), 5.0);
    }
}
