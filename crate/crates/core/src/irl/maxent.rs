//! Maximum-entropy IRL over state paths of a fixed planning horizon.
//!
//! A path `s_0 … s_{H-1}` from a given start has probability proportional
//! to `Π K(s_t, s_{t+1}) · exp(Σ γ^t w·φ(s_t))`, where `K(s, s')` sums the
//! transition probabilities over actions. Each observed trajectory is a
//! path prefix; its log-likelihood marginalizes the unobserved suffix, and
//! the gradient is the difference between the expected discounted features
//! conditioned on the prefix and conditioned only on the start state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Policy, TabularMdp};
use crate::solvers::value_iteration::{value_iteration, DEFAULT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxEntConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub rollout_horizon: usize,
    pub discount: f64,
}

impl MaxEntConfig {
    pub fn gridworld() -> Self {
        Self {
            learning_rate: 1.0,
            max_iters: 100,
            stop_tol: 1e-5,
            rollout_horizon: 10,
            discount: 0.95,
        }
    }

    pub fn pacman() -> Self {
        Self {
            learning_rate: 0.1,
            ..Self::gridworld()
        }
    }

    pub fn hiv() -> Self {
        Self {
            learning_rate: 0.01,
            rollout_horizon: 25,
            discount: 0.98,
            ..Self::gridworld()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.stop_tol > 0.0
            && self.rollout_horizon > 0
            && self.max_iters > 0
            && (0.0..1.0).contains(&self.discount);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Max-Ent settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MaxEntFit {
    pub weights: RewardWeights,
    pub policy: Policy,
    pub iterations: usize,
    pub log_likelihoods: Vec<f64>,
}

fn logsumexp(it: impl Iterator<Item = (f64, f64)>) -> f64 {
    // Pairs of (log weight, log term).
    let items: Vec<f64> = it.map(|(lk, b)| lk + b).collect();
    let m = items.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + items.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Likelihood model for a fixed MDP, horizon and set of observed paths.
pub struct MaxEntProblem<'a> {
    mdp: &'a TabularMdp,
    /// `K(s, ·)` as `(s', log K)` pairs.
    kernel: Vec<Vec<(usize, f64)>>,
    paths: &'a [Vec<usize>],
    horizon: usize,
    discount: f64,
}

impl<'a> MaxEntProblem<'a> {
    pub fn new(
        mdp: &'a TabularMdp,
        paths: &'a [Vec<usize>],
        horizon: usize,
        discount: f64,
    ) -> Result<Self> {
        if paths.is_empty() || paths.iter().any(Vec::is_empty) {
            return Err(Error::InvalidSummary("Max-Ent needs non-empty paths".into()));
        }
        let horizon = horizon.max(paths.iter().map(Vec::len).max().unwrap());
        let kernel: Vec<Vec<(usize, f64)>> = (0..mdp.n_states())
            .map(|s| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for a in 0..mdp.n_actions() {
                    for &(n, p) in mdp.transition(s, a) {
                        if p <= 0.0 {
                            continue;
                        }
                        match row.iter_mut().find(|(m, _)| *m == n) {
                            Some(e) => e.1 += p,
                            None => row.push((n, p)),
                        }
                    }
                }
                row.sort_by_key(|e| e.0);
                row.into_iter().map(|(n, p)| (n, p.ln())).collect()
            })
            .collect();
        for path in paths {
            for pair in path.windows(2) {
                if !kernel[pair[0]].iter().any(|e| e.0 == pair[1]) {
                    return Err(Error::InvalidSummary(format!(
                        "observed step {} → {} has zero probability",
                        pair[0], pair[1]
                    )));
                }
            }
        }
        Ok(Self {
            mdp,
            kernel,
            paths,
            horizon,
            discount,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn rewards(&self, w: &[f64]) -> Vec<f64> {
        (0..self.mdp.n_states())
            .map(|s| self.mdp.feature(s).dot(w))
            .collect()
    }

    /// `beta[t][s]`: log total weight of path suffixes from `s` at time `t`.
    fn backward(&self, r: &[f64]) -> Vec<Vec<f64>> {
        let h = self.horizon;
        let mut beta = vec![Vec::new(); h];
        let gl = self.discount.powi(h as i32 - 1);
        beta[h - 1] = r.iter().map(|v| gl * v).collect();
        for t in (0..h - 1).rev() {
            let g = self.discount.powi(t as i32);
            let next = &beta[t + 1];
            beta[t] = (0..r.len())
                .map(|s| {
                    g * r[s]
                        + logsumexp(self.kernel[s].iter().map(|&(n, lk)| (lk, next[n])))
                })
                .collect();
        }
        beta
    }
}

impl MaxEntProblem<'_> {
    /// Mean log-likelihood of the observed paths under weights `w`.
    pub fn log_likelihood(&self, w: &[f64]) -> f64 {
        let r = self.rewards(w);
        let beta = self.backward(&r);
        let mut total = 0.0;
        for path in self.paths {
            let l = path.len();
            let mut ll = 0.0;
            for (t, &s) in path.iter().enumerate() {
                ll += self.discount.powi(t as i32) * r[s];
            }
            for pair in path.windows(2) {
                ll += self.kernel[pair[0]]
                    .iter()
                    .find(|e| e.0 == pair[1])
                    .map(|e| e.1)
                    .unwrap();
            }
            if l < self.horizon {
                let last = path[l - 1];
                ll += logsumexp(self.kernel[last].iter().map(|&(n, lk)| (lk, beta[l][n])));
            }
            ll -= beta[0][path[0]];
            total += ll;
        }
        total / self.paths.len() as f64
    }

    /// Gradient of [`Self::log_likelihood`].
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let r = self.rewards(w);
        let beta = self.backward(&r);
        let n_paths = self.paths.len() as f64;
        let dim = self.mdp.feature_dim();
        let mut observed = vec![0.0; dim];
        let mut start_inject = vec![Vec::new(); self.horizon];
        let mut tail_inject = vec![Vec::new(); self.horizon];
        for path in self.paths {
            for (t, &s) in path.iter().enumerate() {
                let g = self.discount.powi(t as i32);
                for (o, f) in observed.iter_mut().zip(self.mdp.feature(s).as_slice()) {
                    *o += g * f / n_paths;
                }
            }
            start_inject[0].push((path[0], 1.0 / n_paths));
            tail_inject[path.len() - 1].push((path[path.len() - 1], 1.0 / n_paths));
        }
        let forward = |inject: &[Vec<(usize, f64)>], count: bool| {
            forward_pass(self, &r, &beta, inject, count)
        };
        let tail = forward(&tail_inject, false);
        let start = forward(&start_inject, true);
        (0..dim).map(|i| observed[i] + tail[i] - start[i]).collect()
    }
}

/// Soft-policy forward propagation. Mass injected at time `t` flows on under
/// the soft transition `K(s,s') exp(β_{t+1}(s')) / Σ`. Injected mass is
/// counted at its injection time only when `count_inject` is set.
fn forward_pass(
    p: &MaxEntProblem<'_>,
    r: &[f64],
    beta: &[Vec<f64>],
    inject: &[Vec<(usize, f64)>],
    count_inject: bool,
) -> Vec<f64> {
    let n = p.mdp.n_states();
    let dim = p.mdp.feature_dim();
    let mut out = vec![0.0; dim];
    let mut dist = vec![0.0; n];
    for t in 0..p.horizon {
        if t > 0 {
            let g = p.discount.powi(t as i32 - 1);
            let mut next = vec![0.0; n];
            for s in 0..n {
                if dist[s] == 0.0 {
                    continue;
                }
                let norm = beta[t - 1][s] - g * r[s];
                for &(m, lk) in &p.kernel[s] {
                    next[m] += dist[s] * (lk + beta[t][m] - norm).exp();
                }
            }
            dist = next;
        }
        let mut counted = dist.clone();
        for &(s, mass) in &inject[t] {
            dist[s] += mass;
            if count_inject {
                counted[s] += mass;
            }
        }
        let g = p.discount.powi(t as i32);
        for s in 0..n {
            if counted[s] != 0.0 {
                for (o, f) in out.iter_mut().zip(p.mdp.feature(s).as_slice()) {
                    *o += g * counted[s] * f;
                }
            }
        }
    }
    out
}

/// Gradient ascent from `w = 0`, then the greedy policy of the learned
/// reward.
pub fn maxent_fit(mdp: &TabularMdp, paths: &[Vec<usize>], cfg: &MaxEntConfig) -> Result<MaxEntFit> {
    cfg.validate()?;
    let problem = MaxEntProblem::new(mdp, paths, cfg.rollout_horizon, cfg.discount)?;
    let mut w = vec![0.0; mdp.feature_dim()];
    let mut log_likelihoods = Vec::new();
    let mut iterations = 0;
    for iter in 0..cfg.max_iters {
        iterations = iter + 1;
        let g = problem.gradient(&w);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { iteration: iter });
        }
        let mut change: f64 = 0.0;
        for (wi, gi) in w.iter_mut().zip(&g) {
            let step = cfg.learning_rate * gi;
            *wi += step;
            change = change.max(step.abs());
        }
        if log::log_enabled!(log::Level::Trace) {
            log_likelihoods.push(problem.log_likelihood(&w));
        }
        if change < cfg.stop_tol {
            break;
        }
    }
    let policy = greedy_reward_policy(mdp, &w, cfg.discount)?;
    Ok(MaxEntFit {
        weights: RewardWeights { w },
        policy,
        iterations,
        log_likelihoods,
    })
}

/// Value-iteration policy for the reward `w · φ`.
pub fn greedy_reward_policy(mdp: &TabularMdp, w: &[f64], discount: f64) -> Result<Policy> {
    let rewards: Vec<f64> = (0..mdp.n_states()).map(|s| mdp.feature(s).dot(w)).collect();
    let mdp = if mdp.discount() == discount {
        std::borrow::Cow::Borrowed(mdp)
    } else {
        std::borrow::Cow::Owned(mdp.with_discount(discount)?)
    };
    Ok(value_iteration(&mdp, &rewards, DEFAULT_TOL)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionId, FeatureVector, StateId};

    /// Three states, two actions, mildly stochastic.
    fn fixture() -> TabularMdp {
        let f = vec![
            FeatureVector::new(vec![1.0, 0.0]).unwrap(),
            FeatureVector::new(vec![0.0, 1.0]).unwrap(),
            FeatureVector::new(vec![0.5, 0.5]).unwrap(),
        ];
        let t = vec![
            vec![(0, 0.2), (1, 0.8)],
            vec![(2, 1.0)],
            vec![(1, 0.5), (2, 0.5)],
            vec![(0, 1.0)],
            vec![(2, 0.9), (0, 0.1)],
            vec![(0, 0.3), (1, 0.7)],
        ];
        TabularMdp::new(2, f, t, 0.9, vec![1.0, 0.0, 0.0]).unwrap()
    }

    fn paths() -> Vec<Vec<usize>> {
        vec![vec![0, 1, 2], vec![2, 0], vec![1]]
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mdp = fixture();
        let p = paths();
        let prob = MaxEntProblem::new(&mdp, &p, 4, 0.9).unwrap();
        for w in [[0.0, 0.0], [0.3, -0.7], [1.5, 0.4]] {
            let g = prob.gradient(&w);
            for i in 0..2 {
                let mut hi = w;
                let mut lo = w;
                hi[i] += 1e-5;
                lo[i] -= 1e-5;
                let fd = (prob.log_likelihood(&hi) - prob.log_likelihood(&lo)) / 2e-5;
                let rel = (g[i] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-4, "w={w:?} i={i} analytic {} fd {fd}", g[i]);
            }
        }
    }

    /// Enumerates every length-`h` state path to evaluate the likelihood.
    fn brute_force_ll(mdp: &TabularMdp, paths: &[Vec<usize>], h: usize, g: f64, w: &[f64]) -> f64 {
        let n = mdp.n_states();
        let k = |s: usize, t: usize| -> f64 {
            (0..mdp.n_actions())
                .flat_map(|a| mdp.transition(s, a).iter())
                .filter(|e| e.0 == t)
                .map(|e| e.1)
                .sum()
        };
        let weight = |path: &[usize]| -> f64 {
            let mut lw = 0.0;
            for (t, &s) in path.iter().enumerate() {
                lw += g.powi(t as i32) * mdp.feature(s).dot(w);
            }
            let mut m = lw.exp();
            for pair in path.windows(2) {
                m *= k(pair[0], pair[1]);
            }
            m
        };
        let all: Vec<Vec<usize>> = (0..n.pow(h as u32))
            .map(|mut code| {
                (0..h)
                    .map(|_| {
                        let s = code % n;
                        code /= n;
                        s
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        for obs in paths {
            let num: f64 = all
                .iter()
                .filter(|p| p[..obs.len()] == obs[..])
                .map(|p| weight(p))
                .sum();
            let den: f64 = all.iter().filter(|p| p[0] == obs[0]).map(|p| weight(p)).sum();
            total += (num / den).ln();
        }
        total / paths.len() as f64
    }

    #[test]
    fn likelihood_matches_path_enumeration() {
        let mdp = fixture();
        let p = paths();
        let prob = MaxEntProblem::new(&mdp, &p, 4, 0.9).unwrap();
        for w in [[0.0, 0.0], [0.8, -0.2]] {
            let want = brute_force_ll(&mdp, &p, 4, 0.9, &w);
            assert!((prob.log_likelihood(&w) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn singleton_paths_carry_no_signal() {
        let mdp = fixture();
        let p = vec![vec![0], vec![2]];
        let prob = MaxEntProblem::new(&mdp, &p, 5, 0.9).unwrap();
        assert!(prob.gradient(&[0.4, 0.1]).iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn symmetric_mdp_keeps_zero_weights() {
        // Two mirror states swapping under either action.
        let mdp = TabularMdp::new(
            2,
            vec![FeatureVector::one_hot(2, 0), FeatureVector::one_hot(2, 1)],
            vec![vec![(1, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]],
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap();
        let fit = maxent_fit(&mdp, &[vec![0, 1], vec![1, 0]], &MaxEntConfig::gridworld()).unwrap();
        assert_eq!(fit.weights.w, vec![0.0, 0.0]);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn ascent_prefers_demonstrated_state() {
        // Action 0 goes to state 0, action 1 to state 1, from anywhere.
        let t = vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)], vec![(1, 1.0)]];
        let mdp = TabularMdp::new(
            2,
            vec![FeatureVector::one_hot(2, 0), FeatureVector::one_hot(2, 1)],
            t,
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap();
        let fit = maxent_fit(&mdp, &[vec![0, 1, 1, 1]], &MaxEntConfig::gridworld()).unwrap();
        assert!(fit.weights.w[1] > fit.weights.w[0]);
        assert_eq!(fit.policy.action(StateId(0)), ActionId(1));
    }

    #[test]
    fn positive_rescaling_keeps_optimal_sets() {
        let mdp = fixture();
        let w = [0.7, -0.3];
        let base = greedy_reward_policy(&mdp, &w, 0.9).unwrap();
        for c in [0.5, 3.0, 40.0] {
            let scaled = greedy_reward_policy(&mdp, &[w[0] * c, w[1] * c], 0.9).unwrap();
            assert_eq!(base.optimal_sets(), scaled.optimal_sets());
        }
    }

    #[test]
    fn rejects_impossible_step() {
        let mdp = TabularMdp::new(
            1,
            vec![FeatureVector::one_hot(2, 0), FeatureVector::one_hot(2, 1)],
            vec![vec![(1, 1.0)], vec![(1, 1.0)]],
            0.9,
            vec![1.0, 0.0],
        )
        .unwrap();
        assert!(MaxEntProblem::new(&mdp, &[vec![1, 0]], 3, 0.9).is_err());
        assert!(MaxEntProblem::new(&mdp, &[vec![0, 1]], 3, 0.9).is_ok());
    }
}
