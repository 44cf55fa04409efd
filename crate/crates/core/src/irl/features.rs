use serde::{Deserialize, Serialize};

use crate::model::{ActionId, StateId, TabularMdp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExpectation {
    pub mu: Vec<f64>,
    pub origin: (StateId, ActionId),
}

/// Horizon after which discounted tails fall below 1e-12.
pub fn effective_horizon(discount: f64) -> usize {
    if discount <= 0.0 {
        1
    } else {
        ((1e-12f64).ln() / discount.ln()).ceil() as usize + 1
    }
}

/// `M_h(s)`: expected discounted feature sum over `h` steps of following
/// `actions` from `s`. Row-major, `n_states × dim`.
pub fn policy_feature_sums(
    mdp: &TabularMdp,
    actions: &[ActionId],
    horizon: usize,
    discount: f64,
) -> Vec<Vec<f64>> {
    let n = mdp.n_states();
    let dim = mdp.feature_dim();
    let mut m = vec![vec![0.0; dim]; n];
    for _ in 0..horizon {
        let prev = m;
        m = (0..n)
            .map(|s| {
                let mut row = mdp.feature(s).as_slice().to_vec();
                for &(n2, p) in mdp.transition(s, actions[s].0) {
                    for (r, v) in row.iter_mut().zip(&prev[n2]) {
                        *r += discount * p * v;
                    }
                }
                row
            })
            .collect();
    }
    m
}

/// `φ(s) + γ Σ P(s'|s,a) M_{h-1}(s')` given the precomputed `M_{h-1}`.
pub fn action_feature_expectation(
    mdp: &TabularMdp,
    tail: &[Vec<f64>],
    s: StateId,
    a: ActionId,
    discount: f64,
) -> FeatureExpectation {
    let mut mu = mdp.feature(s.0).as_slice().to_vec();
    if discount != 0.0 {
        for &(n2, p) in mdp.transition(s.0, a.0) {
            for (r, v) in mu.iter_mut().zip(&tail[n2]) {
                *r += discount * p * v;
            }
        }
    }
    FeatureExpectation { mu, origin: (s, a) }
}

/// Expected discounted features of taking `a` at `s` and then following
/// `actions`, truncated at `horizon` terms.
pub fn feature_expectations(
    mdp: &TabularMdp,
    actions: &[ActionId],
    s: StateId,
    a: ActionId,
    horizon: usize,
    discount: f64,
) -> FeatureExpectation {
    let tail = policy_feature_sums(mdp, actions, horizon.saturating_sub(1), discount);
    action_feature_expectation(mdp, &tail, s, a, discount)
}
