//! Shared domain types: MDPs, policies, trajectories and summaries.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Dense feature vector with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("non-finite feature value {bad}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn one_hot(dim: usize, hot: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[hot] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    pub fn sq_dist(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Sparse transition row: `(next state index, probability)` pairs.
pub type TransitionRow = Vec<(usize, f64)>;

/// Finite MDP with state features. Rewards are supplied separately to the
/// solvers, so one MDP can carry either feature representation.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    features: Vec<FeatureVector>,
    /// Indexed by `s * n_actions + a`.
    transitions: Vec<TransitionRow>,
    discount: f64,
    start: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_actions: usize,
        features: Vec<FeatureVector>,
        transitions: Vec<TransitionRow>,
        discount: f64,
        start: Vec<f64>,
    ) -> Result<Self> {
        let n_states = features.len();
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("empty state or action set".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!("discount {discount} outside [0,1)")));
        }
        if transitions.len() != n_states * n_actions {
            return Err(Error::InvalidMdp(format!(
                "expected {} transition rows, got {}",
                n_states * n_actions,
                transitions.len()
            )));
        }
        let dim = features[0].dim();
        if features.iter().any(|f| f.dim() != dim) {
            return Err(Error::InvalidMdp("feature dimension varies across states".into()));
        }
        for (i, row) in transitions.iter().enumerate() {
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > PROB_TOL
                || row.iter().any(|&(s, p)| s >= n_states || !(p >= 0.0))
            {
                return Err(Error::InvalidMdp(format!(
                    "transition row for state {} action {} is not a distribution",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        if start.len() != n_states
            || (start.iter().sum::<f64>() - 1.0).abs() > PROB_TOL
            || start.iter().any(|p| !(*p >= 0.0))
        {
            return Err(Error::InvalidMdp("start distribution is not a distribution".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            features,
            transitions,
            discount,
            start,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].dim()
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn feature(&self, s: usize) -> &FeatureVector {
        &self.features[s]
    }

    pub fn transition(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn start_distribution(&self) -> &[f64] {
        &self.start
    }

    /// Same dynamics with a different feature map.
    pub fn with_features(&self, features: Vec<FeatureVector>) -> Result<Self> {
        Self::new(
            self.n_actions,
            features,
            self.transitions.clone(),
            self.discount,
            self.start.clone(),
        )
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.n_actions,
            self.features.clone(),
            self.transitions.clone(),
            discount,
            self.start.clone(),
        )
    }

    /// Most likely successor, lowest index on ties. Exact for deterministic rows.
    pub fn likely_next(&self, s: usize, a: usize) -> usize {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for &(n, p) in self.transition(s, a) {
            if p > best.1 || (p == best.1 && n < best.0) {
                best = (n, p);
            }
        }
        best.0
    }
}

/// Deterministic policy plus the set of actions it considers optimal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    canonical: Vec<ActionId>,
    optimal_set: Vec<Vec<ActionId>>,
}

impl Policy {
    pub fn new(canonical: Vec<ActionId>, mut optimal_set: Vec<Vec<ActionId>>) -> Result<Self> {
        if canonical.len() != optimal_set.len() {
            return Err(Error::InvalidPolicy("length mismatch".into()));
        }
        for (s, (a, set)) in canonical.iter().zip(optimal_set.iter_mut()).enumerate() {
            set.sort();
            set.dedup();
            if !set.contains(a) {
                return Err(Error::InvalidPolicy(format!(
                    "canonical action {a} not optimal at state {s}"
                )));
            }
        }
        Ok(Self {
            canonical,
            optimal_set,
        })
    }

    /// Policy whose only optimal action is the given one.
    pub fn deterministic(actions: Vec<ActionId>) -> Self {
        let optimal_set = actions.iter().map(|&a| vec![a]).collect();
        Self {
            canonical: actions,
            optimal_set,
        }
    }

    pub fn n_states(&self) -> usize {
        self.canonical.len()
    }

    pub fn action(&self, s: StateId) -> ActionId {
        self.canonical[s.0]
    }

    pub fn canonical(&self) -> &[ActionId] {
        &self.canonical
    }

    pub fn optimal_set(&self, s: StateId) -> &[ActionId] {
        &self.optimal_set[s.0]
    }

    pub fn optimal_sets(&self) -> &[Vec<ActionId>] {
        &self.optimal_set
    }

    pub fn is_optimal(&self, s: StateId, a: ActionId) -> bool {
        self.optimal_set[s.0].binary_search(&a).is_ok()
    }

    pub fn to_table(&self) -> ActionTable {
        ActionTable(self.canonical.iter().map(|&a| Some(a)).collect())
    }
}

/// Possibly partial state → action map used for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionTable(pub Vec<Option<ActionId>>);

impl ActionTable {
    pub fn get(&self, s: StateId) -> Option<ActionId> {
        self.0.get(s.0).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    steps: Vec<(StateId, ActionId)>,
}

impl Trajectory {
    pub fn new(steps: Vec<(StateId, ActionId)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidSummary("empty trajectory".into()));
        }
        Ok(Self { steps })
    }

    pub fn singleton(s: StateId, a: ActionId) -> Self {
        Self {
            steps: vec![(s, a)],
        }
    }

    pub fn steps(&self) -> &[(StateId, ActionId)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start(&self) -> StateId {
        self.steps[0].0
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.steps.iter().map(|&(s, _)| s)
    }
}

/// The teaching set: trajectories whose pair count is the budget `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Summary {
    trajectories: Vec<Trajectory>,
    budget: usize,
}

impl Summary {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        let budget = trajectories.iter().map(Trajectory::len).sum();
        Self {
            trajectories,
            budget,
        }
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// Number of state-action pairs, duplicates included.
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn pairs(&self) -> impl Iterator<Item = (StateId, ActionId)> + '_ {
        self.trajectories.iter().flat_map(|t| t.steps().iter().copied())
    }

    pub fn states(&self) -> BTreeSet<StateId> {
        self.pairs().map(|(s, _)| s).collect()
    }

    /// Checks every pair against the demonstration set.
    pub fn check_against(&self, d: &DemonstrationSet) -> Result<()> {
        for (s, a) in self.pairs() {
            match d.action(s) {
                Some(b) if b == a => {}
                _ => {
                    return Err(Error::InvalidSummary(format!(
                        "pair ({s}, {a}) is not in the demonstration set"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn to_document(&self, domain: &str, extractor: &str, l: usize) -> SummaryDocument {
        SummaryDocument {
            domain: domain.to_string(),
            extractor: extractor.to_string(),
            k: self.budget,
            l,
            trajectories: self
                .trajectories
                .iter()
                .map(|t| {
                    t.steps()
                        .iter()
                        .map(|&(state, action)| StepDocument { state, action })
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDocument {
    pub state: StateId,
    pub action: ActionId,
}

/// JSON form of a [`Summary`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub domain: String,
    pub extractor: String,
    pub k: usize,
    pub l: usize,
    pub trajectories: Vec<Vec<StepDocument>>,
}

impl SummaryDocument {
    pub fn to_summary(&self) -> Result<Summary> {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| Trajectory::new(t.iter().map(|s| (s.state, s.action)).collect()))
            .collect::<Result<Vec<_>>>()?;
        let summary = Summary::new(trajectories);
        if summary.budget() != self.k {
            return Err(Error::InvalidSummary(format!(
                "document declares k={} but holds {} pairs",
                self.k,
                summary.budget()
            )));
        }
        Ok(summary)
    }
}

/// Every state-action pair demonstrating the agent's policy.
#[derive(Clone, Debug, PartialEq)]
pub struct DemonstrationSet {
    pairs: Vec<(StateId, ActionId)>,
    unique_states: Vec<StateId>,
    unique_actions: Vec<ActionId>,
}

impl DemonstrationSet {
    /// Pairs may repeat a state; the policy's canonical action is kept.
    pub fn from_policy(states: &[StateId], policy: &Policy) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidSummary("empty demonstration set".into()));
        }
        let pairs: Vec<_> = states.iter().map(|&s| (s, policy.action(s))).collect();
        let uniq: BTreeSet<StateId> = states.iter().copied().collect();
        let unique_states: Vec<StateId> = uniq.into_iter().collect();
        let unique_actions = unique_states.iter().map(|&s| policy.action(s)).collect();
        Ok(Self {
            pairs,
            unique_states,
            unique_actions,
        })
    }

    pub fn pairs(&self) -> &[(StateId, ActionId)] {
        &self.pairs
    }

    /// Deduplicated states in ascending order.
    pub fn unique_states(&self) -> &[StateId] {
        &self.unique_states
    }

    pub fn len(&self) -> usize {
        self.unique_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unique_states.is_empty()
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.unique_states.binary_search(&s).is_ok()
    }

    /// Position of `s` in [`Self::unique_states`].
    pub fn index_of(&self, s: StateId) -> Option<usize> {
        self.unique_states.binary_search(&s).ok()
    }

    pub fn action(&self, s: StateId) -> Option<ActionId> {
        self.index_of(s).map(|i| self.unique_actions[i])
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.unique_actions
    }
}

/// Unique demonstrated states that no trajectory of `t` visits, ascending.
pub fn unseen_states(d: &DemonstrationSet, t: &Summary) -> Vec<StateId> {
    let seen = t.states();
    d.unique_states()
        .iter()
        .copied()
        .filter(|s| !seen.contains(s))
        .collect()
}
