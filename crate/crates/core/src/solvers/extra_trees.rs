//! Extremely randomized regression trees.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` tries all of them.
    pub k: Option<usize>,
    /// Nodes with fewer samples become leaves.
    pub n_min: usize,
}

impl Default for ExtraTreesConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            k: None,
            n_min: 2,
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    cfg: ExtraTreesConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn mean(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64
    }

    fn sse(&self, idx: &[usize]) -> f64 {
        let m = self.mean(idx);
        idx.iter().map(|&i| (self.y[i] - m).powi(2)).sum()
    }

    fn build(&mut self, idx: &mut [usize]) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.mean(idx)));
        if idx.len() < self.cfg.n_min {
            return id;
        }
        let y0 = self.y[idx[0]];
        if idx.iter().all(|&i| self.y[i] == y0) {
            return id;
        }
        let dim = self.x[0].len();
        let ranges: Vec<(usize, f64, f64)> = (0..dim)
            .filter_map(|f| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(self.x[i][f]), hi.max(self.x[i][f]))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let k = self.cfg.k.unwrap_or(dim).clamp(1, ranges.len());
        let chosen = sample(&mut self.rng, ranges.len(), k);
        let total = self.sse(idx);
        let mut best: Option<(f64, usize, f64)> = None;
        for c in chosen.iter() {
            let (f, lo, hi) = ranges[c];
            let mut t = self.rng.random_range(lo..hi);
            if t <= lo {
                t = (lo + hi) / 2.0;
            }
            let (mut nl, mut sl, mut ql, mut nr, mut sr, mut qr) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for &i in idx.iter() {
                let v = self.y[i];
                if self.x[i][f] < t {
                    nl += 1.0;
                    sl += v;
                    ql += v * v;
                } else {
                    nr += 1.0;
                    sr += v;
                    qr += v * v;
                }
            }
            let sse = (ql - sl * sl / nl) + (qr - sr * sr / nr);
            let gain = total - sse;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, f, t));
            }
        }
        let (_, feature, threshold) = best.unwrap();
        let mut split = 0;
        for j in 0..idx.len() {
            if self.x[idx[j]][feature] < threshold {
                idx.swap(j, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l);
        let right = self.build(r);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Ensemble of extra-trees; prediction is the mean over trees.
#[derive(Clone, Debug)]
pub struct ExtraTrees {
    trees: Vec<Tree>,
}

impl ExtraTrees {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        cfg: ExtraTreesConfig,
        seed: u64,
        exec: Exec,
    ) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Regression(format!(
                "{} inputs for {} targets",
                x.len(),
                y.len()
            )));
        }
        if cfg.n_trees == 0 {
            return Err(Error::Regression("ensemble needs at least one tree".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Regression(format!("non-finite target at sample {i}")));
        }
        let trees = exec.map_range(cfg.n_trees, |t| {
            let mut b = Builder {
                x,
                y,
                cfg,
                rng: seed::rng(seed::derive(seed, t as u64)),
                nodes: Vec::new(),
            };
            let mut idx: Vec<usize> = (0..x.len()).collect();
            b.build(&mut idx);
            Tree { nodes: b.nodes }
        });
        Ok(Self { trees })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
