//! Random colored gridworld with five actions (including stay).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MOVES;
use crate::error::{Error, Result};
use crate::model::{FeatureVector, TabularMdp};
use crate::seed;

pub const COLOR_REWARDS: [f64; 5] = [100.0, 10.0, 0.0, -10.0, -100.0];
pub const N_COLORS: usize = 5;
pub const DISCOUNT: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub n_colors: usize,
    /// Reward of each color; must be a permutation of [`COLOR_REWARDS`].
    pub color_rewards: Vec<f64>,
    /// Drives the i.i.d. uniform color of every cell.
    pub seed: u64,
}

impl GridworldSpec {
    /// 9×9 grid with rewards assigned to colors without replacement.
    pub fn random(seed: u64) -> Self {
        Self::random_sized(9, 9, seed)
    }

    pub fn random_sized(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, 0));
        let mut color_rewards = COLOR_REWARDS.to_vec();
        color_rewards.shuffle(&mut rng);
        Self {
            width,
            height,
            n_colors: N_COLORS,
            color_rewards,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("gridworld must have at least one cell".into()));
        }
        if self.n_colors != N_COLORS || self.color_rewards.len() != N_COLORS {
            return Err(Error::InvalidSpec(format!("gridworld needs {N_COLORS} colors")));
        }
        let mut got = self.color_rewards.clone();
        got.sort_by(|a, b| b.total_cmp(a));
        if got != COLOR_REWARDS {
            return Err(Error::InvalidSpec(format!(
                "color rewards {:?} are not a permutation of {:?}",
                self.color_rewards, COLOR_REWARDS
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Gridworld {
    pub spec: GridworldSpec,
    /// MDP carrying the 5-D one-hot color features.
    pub mdp: TabularMdp,
    pub colors: Vec<usize>,
    pub irl_features: Vec<FeatureVector>,
    /// Own one-hot followed by the N, E, S, W neighbors' one-hots.
    pub il_features: Vec<FeatureVector>,
    pub rewards: Vec<f64>,
}

impl Gridworld {
    pub fn n_states(&self) -> usize {
        self.colors.len()
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.spec.width, s / self.spec.width)
    }

    /// The reward vector in feature space, i.e. the ground-truth weights.
    pub fn true_weights(&self) -> Vec<f64> {
        self.spec.color_rewards.clone()
    }
}

pub fn build_gridworld(spec: &GridworldSpec) -> Result<Gridworld> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = w * h;
    let mut rng = seed::rng(seed::derive(spec.seed, 1));
    let colors: Vec<usize> = (0..n).map(|_| rng.random_range(0..N_COLORS)).collect();

    let irl_features: Vec<FeatureVector> = colors
        .iter()
        .map(|&c| FeatureVector::one_hot(N_COLORS, c))
        .collect();

    let neighbor = |x: usize, y: usize, dx: i64, dy: i64| -> Option<usize> {
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
            .then(|| ny as usize * w + nx as usize)
    };

    // N, E, S, W
    const NEIGHBORS: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let il_features = (0..n)
        .map(|s| {
            let (x, y) = (s % w, s / w);
            let mut v = vec![0.0; N_COLORS * 5];
            v[colors[s]] = 1.0;
            for (i, &(dx, dy)) in NEIGHBORS.iter().enumerate() {
                if let Some(t) = neighbor(x, y, dx, dy) {
                    v[N_COLORS * (i + 1) + colors[t]] = 1.0;
                }
            }
            FeatureVector::new(v)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut transitions = Vec::with_capacity(n * MOVES.len());
    for s in 0..n {
        let (x, y) = (s % w, s / w);
        for &(dx, dy) in &MOVES {
            let next = neighbor(x, y, dx, dy).unwrap_or(s);
            transitions.push(vec![(next, 1.0)]);
        }
    }
    let mdp = TabularMdp::new(
        MOVES.len(),
        irl_features.clone(),
        transitions,
        DISCOUNT,
        vec![1.0 / n as f64; n],
    )?;
    let rewards = colors.iter().map(|&c| spec.color_rewards[c]).collect();
    Ok(Gridworld {
        spec: spec.clone(),
        mdp,
        colors,
        irl_features,
        il_features,
        rewards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_one_hot() {
        let g = build_gridworld(&GridworldSpec::random(3)).unwrap();
        assert_eq!(g.mdp.n_states(), 81);
        assert_eq!(g.mdp.n_actions(), 5);
        for f in &g.irl_features {
            assert_eq!(f.as_slice().iter().sum::<f64>(), 1.0);
        }
        for (s, r) in g.rewards.iter().enumerate() {
            assert_eq!(*r, g.spec.color_rewards[g.colors[s]]);
        }
    }

    #[test]
    fn corner_has_two_padded_blocks() {
        let g = build_gridworld(&GridworldSpec::random(5)).unwrap();
        let blocks_present = |s: usize| -> usize {
            g.il_features[s]
                .as_slice()
                .chunks(N_COLORS)
                .filter(|b| b.iter().sum::<f64>() == 1.0)
                .count()
        };
        assert_eq!(blocks_present(0), 3);
        assert_eq!(blocks_present(80), 3);
        assert_eq!(blocks_present(40), 5);
        assert_eq!(blocks_present(4), 4);
        // top-left corner: north and west blocks are zero
        let f = g.il_features[0].as_slice();
        assert!(f[5..10].iter().all(|&v| v == 0.0));
        assert!(f[20..25].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn off_grid_moves_stay_put() {
        let g = build_gridworld(&GridworldSpec::random(1)).unwrap();
        assert_eq!(g.mdp.transition(0, 0), &[(0, 1.0)]);
        assert_eq!(g.mdp.transition(0, 2), &[(0, 1.0)]);
        assert_eq!(g.mdp.transition(0, 3), &[(1, 1.0)]);
        assert_eq!(g.mdp.transition(0, 1), &[(9, 1.0)]);
        assert_eq!(g.mdp.transition(10, 4), &[(10, 1.0)]);
    }

    #[test]
    fn rejects_bad_rewards() {
        let mut spec = GridworldSpec::random(1);
        spec.color_rewards[0] = 5.0;
        assert!(build_gridworld(&spec).is_err());
        let mut spec = GridworldSpec::random(1);
        spec.color_rewards = vec![100.0, 100.0, 0.0, -10.0, -100.0];
        assert!(build_gridworld(&spec).is_err());
    }

    #[test]
    fn random_guess_rate_is_one_fifth() {
        let g = build_gridworld(&GridworldSpec::random(2)).unwrap();
        assert_eq!(1.0 / g.mdp.n_actions() as f64, 0.2);
    }

    #[test]
    fn seeded_build_is_deterministic() {
        let a = build_gridworld(&GridworldSpec::random(11)).unwrap();
        let b = build_gridworld(&GridworldSpec::random(11)).unwrap();
        assert_eq!(a.colors, b.colors);
        assert_eq!(a.spec, b.spec);
    }
}
