use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionId, Policy, TabularMdp};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Actions whose Q-value is within this of the best are all optimal.
pub const OPTIMAL_SET_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    /// Max-norm change of each sweep.
    pub residuals: Vec<f64>,
}

impl ValueFunction {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// `Q(s,a) = r(s) + γ Σ P(s'|s,a) V(s')`, flattened as `s * n_actions + a`.
pub fn q_values(mdp: &TabularMdp, rewards: &[f64], v: &[f64]) -> Vec<f64> {
    let na = mdp.n_actions();
    let g = mdp.discount();
    let mut q = vec![0.0; mdp.n_states() * na];
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let ev: f64 = mdp.transition(s, a).iter().map(|&(n, p)| p * v[n]).sum();
            q[s * na + a] = rewards[s] + g * ev;
        }
    }
    q
}

/// Policy whose optimal sets are every action within [`OPTIMAL_SET_TOL`]
/// of the best Q-value.
pub fn greedy_policy(n_actions: usize, q: &[f64]) -> Policy {
    let n = q.len() / n_actions;
    let mut canonical = Vec::with_capacity(n);
    let mut sets = Vec::with_capacity(n);
    for s in 0..n {
        let row = &q[s * n_actions..(s + 1) * n_actions];
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let set: Vec<ActionId> = (0..n_actions)
            .filter(|&a| row[a] >= best - OPTIMAL_SET_TOL)
            .map(ActionId)
            .collect();
        canonical.push(set[0]);
        sets.push(set);
    }
    Policy::new(canonical, sets).expect("canonical is the first optimal action")
}

/// Bellman optimality backups until the max-norm change drops below `tol`.
pub fn value_iteration(
    mdp: &TabularMdp,
    rewards: &[f64],
    tol: f64,
) -> Result<(ValueFunction, Policy)> {
    if rewards.len() != mdp.n_states() {
        return Err(Error::InvalidMdp(format!(
            "{} rewards for {} states",
            rewards.len(),
            mdp.n_states()
        )));
    }
    if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::InvalidMdp(format!("non-finite reward {r}")));
    }
    let na = mdp.n_actions();
    let mut v = vec![0.0; mdp.n_states()];
    let mut residuals = Vec::new();
    let (lo, hi) = loop {
        let q = q_values(mdp, rewards, &v);
        let mut delta: f64 = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..v.len() {
            let best = q[s * na..(s + 1) * na]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let d = best - v[s];
            delta = delta.max(d.abs());
            lo = lo.min(d);
            hi = hi.max(d);
            v[s] = best;
        }
        residuals.push(delta);
        if delta < tol {
            break (lo, hi);
        }
    };
    // MacQueen bounds: V* lies within γ/(1−γ)·[min, max] of the last change
    // above V. Moving to the midpoint is a uniform shift, so the greedy
    // policy is unaffected, and it is exact when the change is uniform.
    let g = mdp.discount();
    if !v.is_empty() && g > 0.0 {
        let shift = g / (1.0 - g) * 0.5 * (lo + hi);
        v.iter_mut().for_each(|x| *x += shift);
    }
    let policy = greedy_policy(na, &q_values(mdp, rewards, &v));
    Ok((ValueFunction { values: v, residuals }, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureVector;

    fn chain() -> TabularMdp {
        // Two states; action 0 stays, action 1 moves to the other state.
        TabularMdp::new(
            2,
            vec![FeatureVector::zeros(1); 2],
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)]],
            0.95,
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn absorbing_state_value() {
        let mdp = TabularMdp::new(
            1,
            vec![FeatureVector::zeros(1)],
            vec![vec![(0, 1.0)]],
            0.95,
            vec![1.0],
        )
        .unwrap();
        let (v, _) = value_iteration(&mdp, &[3.0], DEFAULT_TOL).unwrap();
        assert!((v.values[0] - 60.0).abs() < 1e-9);
        assert!(v.final_residual() < DEFAULT_TOL);
    }

    #[test]
    fn two_state_closed_form() {
        let (v, pi) = value_iteration(&chain(), &[0.0, 1.0], 1e-12).unwrap();
        // V1 = 1/(1-γ); V0 = γ V1.
        let v1 = 1.0 / 0.05;
        assert!((v.values[1] - v1).abs() < 1e-8);
        assert!((v.values[0] - 0.95 * v1).abs() < 1e-8);
        assert_eq!(pi.canonical(), &[ActionId(1), ActionId(0)]);
    }

    #[test]
    fn residuals_strictly_decrease() {
        let (v, _) = value_iteration(&chain(), &[0.0, 1.0], DEFAULT_TOL).unwrap();
        for w in v.residuals.windows(2) {
            assert!(w[1] < w[0] || w[1] == 0.0);
        }
    }

    #[test]
    fn tied_actions_share_optimal_set() {
        let (_, pi) = value_iteration(&chain(), &[1.0, 1.0], DEFAULT_TOL).unwrap();
        assert_eq!(pi.optimal_set(crate::StateId(0)).len(), 2);
        assert_eq!(pi.action(crate::StateId(0)), ActionId(0));
    }

    #[test]
    fn rejects_non_finite_rewards() {
        assert!(value_iteration(&chain(), &[f64::NAN, 0.0], DEFAULT_TOL).is_err());
    }
}
