//! Monte-Carlo policy value estimates.

use rand::Rng;

use crate::envs::hiv::{run_episode, HivAction, HivState, EPISODE_STEPS, PERTURBATION};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{ActionTable, StateId, TabularMdp};
use crate::seed;

pub const ROLLOUT_STEPS: usize = 10;
pub const HIV_EVAL_EPISODES: usize = 5;

/// Mean over `starts` of one discounted rollout of `horizon` steps. The
/// reward of each visited state is collected before acting.
pub fn rollout_value(
    mdp: &TabularMdp,
    rewards: &[f64],
    policy: &ActionTable,
    starts: &[StateId],
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    if starts.is_empty() {
        return Err(Error::InvalidMdp("no start states to evaluate from".into()));
    }
    let g = mdp.discount();
    let mut total = 0.0;
    for (i, &s0) in starts.iter().enumerate() {
        let mut rng = seed::rng(seed::derive(seed, i as u64));
        let mut s = s0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            total += disc * rewards[s];
            disc *= g;
            let a = policy
                .get(StateId(s))
                .ok_or(Error::UndefinedAction { state: s })?;
            s = sample_next(mdp.transition(s, a.0), &mut rng);
        }
    }
    Ok(total / starts.len() as f64)
}

fn sample_next<R: Rng>(row: &[(usize, f64)], rng: &mut R) -> usize {
    if row.len() == 1 {
        return row[0].0;
    }
    let mut u: f64 = rng.random();
    for &(n, p) in row {
        if u < p {
            return n;
        }
        u -= p;
    }
    row.last().unwrap().0
}

/// Mean total reward of perturbed-start HIV episodes.
pub fn hiv_value<F>(policy: F, n_episodes: usize, steps: usize, seed: u64, exec: Exec) -> Result<f64>
where
    F: Fn(&HivState) -> HivAction + Sync,
{
    let returns = exec.map_range(n_episodes, |i| {
        let mut rng = seed::rng(seed::derive(seed, i as u64));
        let start = HivState::INITIAL.perturbed(&mut rng, PERTURBATION);
        run_episode(start, steps, |_, x| policy(x)).map(|ep| ep.total_reward())
    });
    let returns = returns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(returns.iter().sum::<f64>() / n_episodes.max(1) as f64)
}

/// [`hiv_value`] with the standard five 200-step episodes.
pub fn hiv_value_default<F>(policy: F, seed: u64, exec: Exec) -> Result<f64>
where
    F: Fn(&HivState) -> HivAction + Sync,
{
    hiv_value(policy, HIV_EVAL_EPISODES, EPISODE_STEPS, seed, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionId, FeatureVector};

    fn line() -> TabularMdp {
        // Three states in a row; action 0 moves right, action 1 stays.
        let t = vec![
            vec![(1, 1.0)],
            vec![(0, 1.0)],
            vec![(2, 1.0)],
            vec![(1, 1.0)],
            vec![(2, 1.0)],
            vec![(2, 1.0)],
        ];
        TabularMdp::new(2, vec![FeatureVector::zeros(1); 3], t, 0.5, vec![1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn stay_on_zero_reward_is_zero() {
        let table = ActionTable(vec![Some(ActionId(1)); 3]);
        let v = rollout_value(&line(), &[0.0, 5.0, 5.0], &table, &[StateId(0)], 10, 0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn matches_hand_enumeration() {
        let table = ActionTable(vec![Some(ActionId(0)); 3]);
        let r = [1.0, 2.0, 4.0];
        let v = rollout_value(&line(), &r, &table, &[StateId(0)], 4, 0).unwrap();
        // states 0,1,2,2 → 1 + 0.5·2 + 0.25·4 + 0.125·4
        assert!((v - 3.5).abs() < 1e-12);
    }

    #[test]
    fn undefined_action_names_state() {
        let table = ActionTable(vec![Some(ActionId(0)), None, None]);
        let err = rollout_value(&line(), &[0.0; 3], &table, &[StateId(0)], 3, 0).unwrap_err();
        assert!(matches!(err, Error::UndefinedAction { state: 1 }));
    }
}
