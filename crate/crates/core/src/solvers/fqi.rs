//! Fitted Q iteration on batches of HIV episodes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::extra_trees::{ExtraTrees, ExtraTreesConfig};
use crate::envs::hiv::{
    run_episode, HivAction, HivEpisode, HivState, DISCOUNT, EPISODE_STEPS, N_ACTIONS,
    PERTURBATION,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FqiConfig {
    pub n_iters: usize,
    pub n_episodes: usize,
    pub episode_steps: usize,
    /// Batch collection rounds; the first is uniformly random, later
    /// rounds are ε-greedy in the current Q.
    pub n_rounds: usize,
    pub epsilon: f64,
    pub discount: f64,
    pub trees: ExtraTreesConfig,
}

impl Default for FqiConfig {
    fn default() -> Self {
        Self {
            n_iters: 50,
            n_episodes: 30,
            episode_steps: EPISODE_STEPS,
            n_rounds: 3,
            epsilon: 0.15,
            discount: DISCOUNT,
            trees: ExtraTreesConfig::default(),
        }
    }
}

/// One `(x, a, r, x')` sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: HivState,
    pub action: HivAction,
    pub reward: f64,
    pub next: HivState,
}

pub fn transitions(episodes: &[HivEpisode]) -> Vec<Transition> {
    episodes
        .iter()
        .flat_map(|ep| {
            (0..ep.len()).map(move |t| Transition {
                state: ep.states[t],
                action: ep.actions[t],
                reward: ep.rewards[t],
                next: ep.states[t + 1],
            })
        })
        .collect()
}

/// One regression model per action over log10 biomarkers.
#[derive(Clone, Debug)]
pub struct QEnsemble {
    models: Vec<ExtraTrees>,
    pub iterations: usize,
    /// Max |Q_{t+1} − Q_t| over the training batch, per iteration.
    pub deltas: Vec<f64>,
}

impl QEnsemble {
    pub fn q(&self, x: &HivState) -> [f64; N_ACTIONS] {
        let f = x.log_features();
        std::array::from_fn(|a| self.models[a].predict(&f))
    }

    /// Argmax action, ties to the lowest index.
    pub fn greedy(&self, x: &HivState) -> HivAction {
        let q = self.q(x);
        let mut best = 0;
        for a in 1..N_ACTIONS {
            if q[a] > q[best] {
                best = a;
            }
        }
        HivAction::from_index(best)
    }
}

pub fn fitted_q_iteration(
    batch: &[Transition],
    discount: f64,
    n_iters: usize,
    trees: ExtraTreesConfig,
    seed: u64,
    exec: Exec,
) -> Result<QEnsemble> {
    if batch.is_empty() {
        return Err(Error::Regression("empty FQI batch".into()));
    }
    if n_iters == 0 {
        return Err(Error::Regression("FQI needs at least one iteration".into()));
    }
    let mut by_action: Vec<Vec<usize>> = vec![Vec::new(); N_ACTIONS];
    for (i, t) in batch.iter().enumerate() {
        by_action[t.action.index()].push(i);
    }
    if let Some(a) = by_action.iter().position(Vec::is_empty) {
        return Err(Error::Regression(format!("batch has no samples of action {a}")));
    }
    let inputs: Vec<Vec<Vec<f64>>> = by_action
        .iter()
        .map(|idx| idx.iter().map(|&i| batch[i].state.log_features().to_vec()).collect())
        .collect();
    let next_features: Vec<[f64; 6]> = batch.iter().map(|t| t.next.log_features()).collect();

    let mut models: Vec<ExtraTrees> = Vec::new();
    let mut prev_q: Vec<f64> = vec![0.0; batch.len()];
    let mut deltas = Vec::with_capacity(n_iters);
    for iter in 0..n_iters {
        let targets: Vec<f64> = if models.is_empty() {
            batch.iter().map(|t| t.reward).collect()
        } else {
            let m = &models;
            exec.map_range(batch.len(), |i| {
                let best = m
                    .iter()
                    .map(|model| model.predict(&next_features[i]))
                    .fold(f64::NEG_INFINITY, f64::max);
                batch[i].reward + discount * best
            })
        };
        models = (0..N_ACTIONS)
            .map(|a| {
                let y: Vec<f64> = by_action[a].iter().map(|&i| targets[i]).collect();
                let s = seed::derive(seed, (iter * N_ACTIONS + a) as u64);
                ExtraTrees::fit(&inputs[a], &y, trees, s, exec)
                    .map_err(|e| Error::Regression(format!("iteration {iter}, action {a}: {e}")))
            })
            .collect::<Result<_>>()?;
        let q: Vec<f64> = exec.map_range(batch.len(), |i| {
            models[batch[i].action.index()].predict(&batch[i].state.log_features())
        });
        let delta = q
            .iter()
            .zip(&prev_q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !delta.is_finite() {
            return Err(Error::Regression(format!("Q diverged at iteration {iter}")));
        }
        log::debug!("fqi iteration {iter}: max |ΔQ| = {delta:.3e}");
        deltas.push(delta);
        prev_q = q;
    }
    Ok(QEnsemble {
        models,
        iterations: n_iters,
        deltas,
    })
}

/// Episode driven by an optional Q-function: uniformly random actions
/// without one, ε-greedy with one.
pub fn collect_episode(
    q: Option<&QEnsemble>,
    epsilon: f64,
    steps: usize,
    seed: u64,
) -> Result<HivEpisode> {
    let mut rng = seed::rng(seed);
    let start = HivState::INITIAL.perturbed(&mut rng, PERTURBATION);
    run_episode(start, steps, |_, x| match q {
        Some(q) if rng.random::<f64>() >= epsilon => q.greedy(x),
        _ => HivAction::from_index(rng.random_range(0..N_ACTIONS)),
    })
}

/// Collects the training batch in rounds and fits the final Q-function.
pub fn train(cfg: &FqiConfig, seed: u64, exec: Exec) -> Result<(QEnsemble, Vec<HivEpisode>)> {
    let rounds = cfg.n_rounds.clamp(1, cfg.n_episodes.max(1));
    let mut episodes: Vec<HivEpisode> = Vec::with_capacity(cfg.n_episodes);
    let mut q: Option<QEnsemble> = None;
    for round in 0..rounds {
        let lo = cfg.n_episodes * round / rounds;
        let hi = cfg.n_episodes * (round + 1) / rounds;
        let current = q.as_ref();
        let new = exec.map_range(hi - lo, |i| {
            collect_episode(
                current,
                cfg.epsilon,
                cfg.episode_steps,
                seed::derive(seed, (lo + i) as u64),
            )
        });
        for ep in new {
            episodes.push(ep?);
        }
        let batch = transitions(&episodes);
        q = Some(fitted_q_iteration(
            &batch,
            cfg.discount,
            cfg.n_iters,
            cfg.trees,
            seed::derive(seed, 1_000_000 + round as u64),
            exec,
        )?);
    }
    Ok((q.expect("at least one round"), episodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_batch(seed: u64) -> Vec<Transition> {
        let eps: Vec<_> = (0..2)
            .map(|i| collect_episode(None, 1.0, 30, seed::derive(seed, i)).unwrap())
            .collect();
        transitions(&eps)
    }

    #[test]
    fn one_iteration_without_discount_regresses_rewards() {
        let batch = small_batch(1);
        let q = fitted_q_iteration(&batch, 0.0, 1, ExtraTreesConfig::default(), 3, Exec::Parallel)
            .unwrap();
        for t in &batch {
            let pred = q.q(&t.state)[t.action.index()];
            assert!((pred - t.reward).abs() <= 1e-9 * t.reward.abs().max(1.0));
        }
    }

    #[test]
    fn deltas_stay_bounded() {
        let batch = small_batch(2);
        let q = fitted_q_iteration(&batch, 0.98, 8, ExtraTreesConfig::default(), 0, Exec::Parallel)
            .unwrap();
        let r_max = batch.iter().map(|t| t.reward.abs()).fold(0.0, f64::max);
        assert!(q.deltas.iter().all(|d| d.is_finite() && *d <= r_max / 0.02 * 2.0));
    }

    #[test]
    fn missing_action_is_a_regression_error() {
        let mut batch = small_batch(3);
        batch.retain(|t| t.action.index() != 2);
        let err = fitted_q_iteration(&batch, 0.9, 1, ExtraTreesConfig::default(), 0, Exec::Sequential);
        assert!(matches!(err, Err(Error::Regression(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let batch = small_batch(4);
        let cfg = ExtraTreesConfig {
            n_trees: 5,
            ..Default::default()
        };
        let a = fitted_q_iteration(&batch, 0.98, 3, cfg, 7, Exec::Parallel).unwrap();
        let b = fitted_q_iteration(&batch, 0.98, 3, cfg, 7, Exec::Sequential).unwrap();
        for t in &batch {
            assert_eq!(a.q(&t.state), b.q(&t.state));
        }
    }
}
