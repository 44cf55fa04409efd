//! Greedy set-cover selection of teaching trajectories.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::bec::{prune_indices, BecTable};
use super::features::effective_horizon;
use crate::error::{Error, Result};
use crate::model::{DemonstrationSet, Policy, StateId, Summary, TabularMdp, Trajectory};
use crate::seed;

/// Rollouts of exactly `l` demonstrated steps from every demonstrated
/// state, following `successor` (which yields `None` when the rollout would
/// leave the demonstration set). Ordered by start state.
pub fn rollout_candidates<F>(d: &DemonstrationSet, l: usize, successor: F) -> Vec<Trajectory>
where
    F: Fn(StateId) -> Option<StateId>,
{
    let mut out = Vec::new();
    'start: for &s0 in d.unique_states() {
        let mut steps = Vec::with_capacity(l);
        let mut s = s0;
        for i in 0..l {
            let Some(a) = d.action(s) else { continue 'start };
            steps.push((s, a));
            if i + 1 < l {
                match successor(s) {
                    Some(n) => s = n,
                    None => continue 'start,
                }
            }
        }
        if let Ok(t) = Trajectory::new(steps) {
            out.push(t);
        }
    }
    out
}

/// Greedy cover: repeatedly take the candidate adding the most uncovered
/// targets (ties to the lowest start state); once nothing adds coverage,
/// fill the budget with random unused candidates.
pub fn greedy_cover<F>(
    candidates: &[Trajectory],
    targets: &BTreeSet<usize>,
    covers: F,
    n_trajectories: usize,
    seed: u64,
) -> Result<Vec<Trajectory>>
where
    F: Fn(StateId) -> Vec<usize>,
{
    if candidates.len() < n_trajectories {
        return Err(Error::Extraction(format!(
            "{} candidate trajectories for a budget of {n_trajectories}",
            candidates.len()
        )));
    }
    let cover_sets: Vec<BTreeSet<usize>> = candidates
        .iter()
        .map(|t| {
            t.states()
                .flat_map(&covers)
                .filter(|c| targets.contains(c))
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i].start());

    let mut uncovered = targets.clone();
    let mut used = vec![false; candidates.len()];
    let mut chosen = Vec::with_capacity(n_trajectories);
    while chosen.len() < n_trajectories && !uncovered.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for &i in &order {
            if used[i] {
                continue;
            }
            let gain = cover_sets[i].intersection(&uncovered).count();
            if gain > 0 && best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        let Some((_, i)) = best else { break };
        used[i] = true;
        for c in &cover_sets[i] {
            uncovered.remove(c);
        }
        chosen.push(i);
    }
    if chosen.len() < n_trajectories {
        let mut rest: Vec<usize> = order.into_iter().filter(|&i| !used[i]).collect();
        rest.shuffle(&mut seed::rng(seed));
        chosen.extend(rest.into_iter().take(n_trajectories - chosen.len()));
    }
    Ok(chosen.into_iter().map(|i| candidates[i].clone()).collect())
}

pub fn check_budget(k: usize, l: usize) -> Result<usize> {
    if l == 0 || k == 0 || k % l != 0 {
        return Err(Error::Extraction(format!(
            "budget k={k} is not a positive multiple of trajectory length l={l}"
        )));
    }
    Ok(k / l)
}

/// SCOT with a fixed budget of `k` pairs in trajectories of length `l`,
/// on an MDP whose states are the demonstrated states.
pub fn scot_extract(
    mdp: &TabularMdp,
    policy: &Policy,
    d: &DemonstrationSet,
    k: usize,
    l: usize,
    seed: u64,
) -> Result<Summary> {
    let n_traj = check_budget(k, l)?;
    let horizon = effective_horizon(mdp.discount());
    let table = BecTable::build(mdp, policy, d.unique_states(), horizon, mdp.discount());
    let targets: BTreeSet<usize> = prune_indices(&table.constraints)?.into_iter().collect();
    let candidates = rollout_candidates(d, l, |s| {
        let n = StateId(mdp.likely_next(s.0, policy.action(s).0));
        d.contains(n).then_some(n)
    });
    let picked = greedy_cover(
        &candidates,
        &targets,
        |s| table.state_constraints(s).to_vec(),
        n_traj,
        seed,
    )?;
    Ok(Summary::new(picked))
}
