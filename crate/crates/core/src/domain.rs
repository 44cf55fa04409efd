//! One solved problem instance per domain, exposing both user models'
//! extraction and reconstruction over a shared demonstration set.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envs::gridworld::{build_gridworld, GridworldSpec};
use crate::envs::hiv::{FeatureScaler, HivState, EPISODE_STEPS, N_ACTIONS as HIV_ACTIONS};
use crate::envs::kmeans::{kmeans_discretize, DiscretizedBatch, N_CLUSTERS};
use crate::envs::pacman::{build_pacman, PacmanSpec, Status};
use crate::error::{Error, Result};
use crate::eval::{score_accuracy, ReconstructionScore};
use crate::exec::Exec;
use crate::il::{al_select, Graph, GrfModel, KernelSpec, Oracle};
use crate::irl::bec::{prune_indices, BecTable};
use crate::irl::scot::{check_budget, greedy_cover, rollout_candidates};
use crate::irl::{effective_horizon, maxent_fit, MaxEntConfig, MaxEntFit};
use crate::model::{
    unseen_states, ActionId, ActionTable, DemonstrationSet, FeatureVector, Policy, StateId,
    Summary, TabularMdp, Trajectory,
};
use crate::seed::{self, stream};
use crate::solvers::evaluate::{hiv_value, rollout_value, HIV_EVAL_EPISODES, ROLLOUT_STEPS};
use crate::solvers::fqi::{self, FqiConfig};
use crate::solvers::value_iteration::{value_iteration, DEFAULT_TOL};

pub const HIV_DEMO_EPISODES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Gridworld,
    Pacman,
    Hiv,
}

impl DomainKind {
    pub const ALL: [DomainKind; 3] = [DomainKind::Gridworld, DomainKind::Pacman, DomainKind::Hiv];

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Gridworld => "gridworld",
            DomainKind::Pacman => "pacman",
            DomainKind::Hiv => "hiv",
        }
    }

    pub fn maxent(self) -> MaxEntConfig {
        match self {
            DomainKind::Gridworld => MaxEntConfig::gridworld(),
            DomainKind::Pacman => MaxEntConfig::pacman(),
            DomainKind::Hiv => MaxEntConfig::hiv(),
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DomainKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown domain '{s}' (gridworld, pacman, hiv)")))
    }
}

/// Everything needed to build an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub seed: u64,
    /// Only used by the HIV domain.
    pub fqi: FqiConfig,
    /// Gridworld side lengths; defaults to 9×9.
    pub grid_size: Option<(usize, usize)>,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            fqi: FqiConfig::default(),
            grid_size: None,
        }
    }
}

/// The reward-learning view of an instance.
#[derive(Clone, Debug)]
pub struct IrlModel {
    /// MDP over which rewards are learned, with the IRL features.
    pub mdp: TabularMdp,
    pub policy: Policy,
    /// Instance state → MDP state.
    pub state_map: Vec<usize>,
    pub maxent: MaxEntConfig,
    pub bec_horizon: usize,
}

#[derive(Clone, Debug)]
pub enum ValueProtocol {
    /// One discounted rollout of [`ROLLOUT_STEPS`] from each start.
    Tabular {
        mdp: TabularMdp,
        rewards: Vec<f64>,
        starts: Vec<StateId>,
    },
    /// Perturbed-start simulator episodes; the policy acts through its
    /// action at the nearest demonstrated state.
    Hiv {
        scaler: FeatureScaler,
        features: Vec<FeatureVector>,
        episodes: usize,
        steps: usize,
    },
}

#[derive(Debug)]
pub struct Instance {
    pub kind: DomainKind,
    pub seed: u64,
    pub n_actions: usize,
    /// Ground-truth policy over every instance state.
    pub expert: Policy,
    pub demos: DemonstrationSet,
    /// IL features aligned with `demos.unique_states()`.
    pub il_features: Vec<FeatureVector>,
    successor: Vec<Option<StateId>>,
    pub irl: IrlModel,
    pub value: ValueProtocol,
    pub discretized: Option<DiscretizedBatch>,
    bec: OnceLock<(BecTable, BTreeSet<usize>)>,
    expert_value: OnceLock<f64>,
    pub exec: Exec,
}

impl Instance {
    pub fn build(spec: &DomainSpec, exec: Exec) -> Result<Self> {
        match spec.kind {
            DomainKind::Gridworld => Self::gridworld(spec, exec),
            DomainKind::Pacman => Self::pacman(spec, exec),
            DomainKind::Hiv => Self::hiv(spec, exec),
        }
    }

    fn gridworld(spec: &DomainSpec, exec: Exec) -> Result<Self> {
        let env_seed = seed::derive(spec.seed, stream::ENV);
        let gspec = match spec.grid_size {
            Some((w, h)) => GridworldSpec::random_sized(w, h, env_seed),
            None => GridworldSpec::random(env_seed),
        };
        let gw = build_gridworld(&gspec)?;
        let (_, expert) = value_iteration(&gw.mdp, &gw.rewards, DEFAULT_TOL)?;
        let n = gw.mdp.n_states();
        let states: Vec<StateId> = (0..n).map(StateId).collect();
        let demos = DemonstrationSet::from_policy(&states, &expert)?;
        let successor = (0..n)
            .map(|s| Some(StateId(gw.mdp.likely_next(s, expert.action(StateId(s)).0))))
            .collect();
        let maxent = MaxEntConfig::gridworld();
        Ok(Self {
            kind: DomainKind::Gridworld,
            seed: spec.seed,
            n_actions: gw.mdp.n_actions(),
            expert: expert.clone(),
            demos,
            il_features: gw.il_features.clone(),
            successor,
            irl: IrlModel {
                mdp: gw.mdp.clone(),
                policy: expert,
                state_map: (0..n).collect(),
                maxent,
                bec_horizon: effective_horizon(gw.mdp.discount()),
            },
            value: ValueProtocol::Tabular {
                mdp: gw.mdp,
                rewards: gw.rewards,
                starts: states,
            },
            discretized: None,
            bec: OnceLock::new(),
            expert_value: OnceLock::new(),
            exec,
        })
    }

    fn pacman(spec: &DomainSpec, exec: Exec) -> Result<Self> {
        let pspec = PacmanSpec::standard(seed::derive(spec.seed, stream::ENV))?;
        let pac = build_pacman(&pspec)?;
        let demos = DemonstrationSet::from_policy(&pac.live_states, &pac.policy)?;
        let il_features = demos
            .unique_states()
            .iter()
            .map(|s| pac.il_features[s.0].clone())
            .collect();
        let n = pac.mdp.n_states();
        let successor = (0..n)
            .map(|s| {
                let s = StateId(s);
                if pac.status[s.0] != Status::Live {
                    return None;
                }
                let next = pac.next(s, pac.policy.action(s));
                (pac.status[next.0] == Status::Live).then_some(next)
            })
            .collect();
        Ok(Self {
            kind: DomainKind::Pacman,
            seed: spec.seed,
            n_actions: pac.mdp.n_actions(),
            expert: pac.policy.clone(),
            demos,
            il_features,
            successor,
            irl: IrlModel {
                mdp: pac.mdp.clone(),
                policy: pac.policy.clone(),
                state_map: (0..n).collect(),
                maxent: MaxEntConfig::pacman(),
                bec_horizon: effective_horizon(pac.mdp.discount()),
            },
            value: ValueProtocol::Tabular {
                mdp: pac.mdp.clone(),
                rewards: pac.rewards.clone(),
                starts: pac.start_states.clone(),
            },
            discretized: None,
            bec: OnceLock::new(),
            expert_value: OnceLock::new(),
            exec,
        })
    }

    fn hiv(spec: &DomainSpec, exec: Exec) -> Result<Self> {
        let (q, _) = fqi::train(&spec.fqi, seed::derive(spec.seed, stream::SOLVER), exec)?;
        let demo_seed = seed::derive(spec.seed, stream::DEMOS);
        let episodes = exec
            .map_range(HIV_DEMO_EPISODES, |i| {
                fqi::collect_episode(Some(&q), 0.0, EPISODE_STEPS, seed::derive(demo_seed, i as u64))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let batch = kmeans_discretize(&episodes, N_CLUSTERS, seed::derive(spec.seed, stream::KMEANS))?;
        let n = batch.raw_states.len();
        let expert = Policy::deterministic(batch.actions.iter().map(|&a| ActionId(a)).collect());
        let states: Vec<StateId> = (0..n).map(StateId).collect();
        let demos = DemonstrationSet::from_policy(&states, &expert)?;
        let mut successor = Vec::with_capacity(n);
        for ep in &episodes {
            let base = successor.len();
            for t in 0..ep.len() {
                successor.push((t + 1 < ep.len()).then_some(StateId(base + t + 1)));
            }
        }
        let n_clusters = batch.n_clusters();
        let mdp = TabularMdp::new(
            HIV_ACTIONS,
            batch.cluster_centers.clone(),
            batch.empirical_transition.clone(),
            crate::envs::hiv::DISCOUNT,
            vec![1.0 / n_clusters as f64; n_clusters],
        )?;
        let cluster_policy =
            Policy::deterministic(batch.majority_actions().into_iter().map(ActionId).collect());
        Ok(Self {
            kind: DomainKind::Hiv,
            seed: spec.seed,
            n_actions: HIV_ACTIONS,
            expert,
            demos,
            il_features: batch.scaled.clone(),
            successor,
            irl: IrlModel {
                bec_horizon: effective_horizon(mdp.discount()),
                mdp,
                policy: cluster_policy,
                state_map: batch.assignment.clone(),
                maxent: MaxEntConfig::hiv(),
            },
            value: ValueProtocol::Hiv {
                scaler: batch.scaler.clone(),
                features: batch.scaled.clone(),
                episodes: HIV_EVAL_EPISODES,
                steps: EPISODE_STEPS,
            },
            discretized: Some(batch),
            bec: OnceLock::new(),
            expert_value: OnceLock::new(),
            exec,
        })
    }

    /// Canonical-policy rollouts of length `l` that stay inside the
    /// demonstration set.
    pub fn candidates(&self, l: usize) -> Vec<Trajectory> {
        rollout_candidates(&self.demos, l, |s| self.successor[s.0])
    }

    /// Deduplicated constraints and the pruned set SCOT must cover.
    pub fn bec(&self) -> Result<&(BecTable, BTreeSet<usize>)> {
        if let Some(b) = self.bec.get() {
            return Ok(b);
        }
        let mdp_states: BTreeSet<StateId> = self
            .demos
            .unique_states()
            .iter()
            .map(|s| StateId(self.irl.state_map[s.0]))
            .collect();
        let states: Vec<StateId> = mdp_states.into_iter().collect();
        let table = BecTable::build(
            &self.irl.mdp,
            &self.irl.policy,
            &states,
            self.irl.bec_horizon,
            self.irl.mdp.discount(),
        );
        let targets = prune_indices(&table.constraints)?.into_iter().collect();
        Ok(self.bec.get_or_init(|| (table, targets)))
    }

    pub fn scot_summary(&self, k: usize, l: usize, seed: u64) -> Result<Summary> {
        let n_traj = check_budget(k, l)?;
        let (table, targets) = self.bec()?;
        let candidates = self.candidates(l);
        let picked = greedy_cover(
            &candidates,
            targets,
            |s| table.state_constraints(StateId(self.irl.state_map[s.0])).to_vec(),
            n_traj,
            seed,
        )?;
        Ok(Summary::new(picked))
    }

    pub fn il_graph(&self, kernel: &KernelSpec) -> Arc<Graph> {
        Arc::new(Graph::new(&self.il_features, kernel))
    }

    pub fn il_summary(&self, k: usize, kernel: &KernelSpec) -> Result<Summary> {
        let graph = self.il_graph(kernel);
        let optimal: Vec<Vec<ActionId>> = self
            .demos
            .unique_states()
            .iter()
            .map(|&s| self.expert.optimal_set(s).to_vec())
            .collect();
        let oracle = Oracle {
            labels: self.demos.actions(),
            optimal: &optimal,
            n_classes: self.n_actions,
        };
        let trace = al_select(graph, &oracle, k, self.exec)?;
        let trajectories = trace
            .picks
            .iter()
            .map(|&i| {
                let s = self.demos.unique_states()[i];
                Trajectory::singleton(s, self.demos.actions()[i])
            })
            .collect();
        Ok(Summary::new(trajectories))
    }

    /// `k / l` distinct candidate rollouts drawn uniformly at random.
    pub fn random_summary(&self, k: usize, l: usize, seed: u64) -> Result<Summary> {
        let n_traj = check_budget(k, l)?;
        let mut candidates = self.candidates(l);
        if candidates.len() < n_traj {
            return Err(Error::Extraction(format!(
                "{} candidates of length {l} for {n_traj} random trajectories",
                candidates.len()
            )));
        }
        candidates.shuffle(&mut seed::rng(seed));
        candidates.truncate(n_traj);
        Ok(Summary::new(candidates))
    }

    /// Max-Ent fit on the summary's trajectories, mapped onto the IRL MDP.
    pub fn irl_fit(&self, summary: &Summary) -> Result<MaxEntFit> {
        let paths: Vec<Vec<usize>> = summary
            .trajectories()
            .iter()
            .map(|t| t.states().map(|s| self.irl.state_map[s.0]).collect())
            .collect();
        maxent_fit(&self.irl.mdp, &paths, &self.irl.maxent)
    }

    /// The learned reward's greedy action at every instance state.
    pub fn reconstruct_irl(&self, summary: &Summary) -> Result<ActionTable> {
        let fit = self.irl_fit(summary)?;
        Ok(ActionTable(
            self.irl
                .state_map
                .iter()
                .map(|&m| Some(fit.policy.action(StateId(m))))
                .collect(),
        ))
    }

    /// Label propagation from the summary over the demonstration graph.
    /// Components without a summary state get a uniform prior.
    pub fn il_model(&self, summary: &Summary, kernel: &KernelSpec) -> Result<GrfModel> {
        let graph = self.il_graph(kernel);
        let labeled = summary
            .pairs()
            .map(|(s, a)| {
                self.demos
                    .index_of(s)
                    .map(|i| (i, a))
                    .ok_or_else(|| Error::InvalidSummary(format!("state {s} not demonstrated")))
            })
            .collect::<Result<Vec<_>>>()?;
        GrfModel::fit(graph, &labeled, self.n_actions, true)
    }

    /// Harmonic prediction on unseen states; the expert's action elsewhere.
    pub fn reconstruct_il(&self, summary: &Summary, kernel: &KernelSpec) -> Result<ActionTable> {
        let model = self.il_model(summary, kernel)?;
        let mut table = self.expert.to_table();
        for (i, a) in model.unlabeled.iter().zip(model.hard()) {
            table.0[self.demos.unique_states()[*i].0] = Some(a);
        }
        Ok(table)
    }

    pub fn expert_value(&self) -> Result<f64> {
        if let Some(v) = self.expert_value.get() {
            return Ok(*v);
        }
        let v = self.policy_value(&self.expert.to_table())?;
        Ok(*self.expert_value.get_or_init(|| v))
    }

    pub fn policy_value(&self, table: &ActionTable) -> Result<f64> {
        let eval_seed = seed::derive(self.seed, stream::EVAL);
        match &self.value {
            ValueProtocol::Tabular {
                mdp,
                rewards,
                starts,
            } => rollout_value(mdp, rewards, table, starts, ROLLOUT_STEPS, eval_seed),
            ValueProtocol::Hiv {
                scaler,
                features,
                episodes,
                steps,
            } => {
                let states = self.demos.unique_states();
                let lookup = |x: &HivState| {
                    let f = scaler.transform(x);
                    let mut best = (0, f64::INFINITY);
                    for (i, g) in features.iter().enumerate() {
                        let d = f.sq_dist(g);
                        if d < best.1 {
                            best = (i, d);
                        }
                    }
                    let s = states[best.0];
                    table
                        .get(s)
                        .map(|a| crate::envs::hiv::HivAction::from_index(a.0))
                        .ok_or(Error::UndefinedAction { state: s.0 })
                };
                // Surface a missing action before simulating.
                if let Some(i) = (0..states.len()).find(|&i| table.get(states[i]).is_none()) {
                    return Err(Error::UndefinedAction { state: states[i].0 });
                }
                hiv_value(|x| lookup(x).unwrap(), *episodes, *steps, eval_seed, self.exec)
            }
        }
    }

    /// Accuracy on the summary's unseen states and the value gap to the
    /// expert.
    pub fn score(&self, summary: &Summary, table: &ActionTable) -> Result<ReconstructionScore> {
        let unseen = unseen_states(&self.demos, summary);
        let accuracy = score_accuracy(&self.expert, table, &unseen)?;
        let value = self.policy_value(table)?;
        Ok(ReconstructionScore {
            accuracy,
            value_diff_raw: (self.expert_value()? - value).abs(),
            n_unseen: unseen.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(seed: u64) -> Instance {
        Instance::build(&DomainSpec::new(DomainKind::Gridworld, seed), Exec::Parallel).unwrap()
    }

    #[test]
    fn domain_names_parse() {
        for d in DomainKind::ALL {
            assert_eq!(d.name().parse::<DomainKind>().unwrap(), d);
        }
        assert!("chess".parse::<DomainKind>().is_err());
    }

    #[test]
    fn scot_budget_shape() {
        let inst = grid(1);
        let s = inst.scot_summary(24, 4, 0).unwrap();
        assert_eq!(s.trajectories().len(), 6);
        assert!(s.trajectories().iter().all(|t| t.len() == 4));
        assert_eq!(s.budget(), 24);
        s.check_against(&inst.demos).unwrap();
    }

    #[test]
    fn expert_table_scores_perfectly() {
        let inst = grid(2);
        let s = inst.random_summary(12, 1, 5).unwrap();
        let score = inst.score(&s, &inst.expert.to_table()).unwrap();
        assert_eq!(score.accuracy, 1.0);
        assert_eq!(score.value_diff_raw, 0.0);
    }

    #[test]
    fn il_summary_is_singletons() {
        let inst = grid(3);
        let s = inst.il_summary(12, &KernelSpec::poly(0.1, 2)).unwrap();
        assert_eq!(s.trajectories().len(), 12);
        assert!(s.trajectories().iter().all(|t| t.len() == 1));
        s.check_against(&inst.demos).unwrap();
    }

    #[test]
    fn random_summary_is_reproducible() {
        let inst = grid(4);
        assert_eq!(
            inst.random_summary(24, 2, 9).unwrap(),
            inst.random_summary(24, 2, 9).unwrap()
        );
        let all = inst.random_summary(81, 1, 3).unwrap();
        assert_eq!(all.states().len(), 81);
    }
}
