//! K-means discretization of HIV batches into a tabular MDP.

use rand::Rng;

use super::hiv::{FeatureScaler, HivEpisode, HivState, N_ACTIONS};
use crate::error::{Error, Result};
use crate::model::{FeatureVector, TransitionRow};
use crate::seed;

pub const N_CLUSTERS: usize = 100;
pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centers: Vec<FeatureVector>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

fn nearest(centers: &[FeatureVector], x: &FeatureVector) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = x.sq_dist(c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until the assignment
/// stops changing. A cluster that empties is re-seeded at the point
/// farthest from its current center.
pub fn kmeans(points: &[FeatureVector], k: usize, seed: u64) -> Result<KMeans> {
    let mut distinct: Vec<&FeatureVector> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
            if distinct.len() >= k {
                break;
            }
        }
    }
    if k == 0 || distinct.len() < k {
        return Err(Error::InvalidSpec(format!(
            "k-means needs {k} distinct points, found {}",
            distinct.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| p.sq_dist(&centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(p.sq_dist(&c));
        }
        centers.push(c);
    }

    let dim = points[0].dim();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(&centers, p).0).collect();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERS {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p.as_slice()) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = FeatureVector::new(
                    sums[j].iter().map(|s| s / counts[j] as f64).collect(),
                )?;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = points[a].sq_dist(&centers[assignment[a]]);
                        let db = points[b].sq_dist(&centers[assignment[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap();
                centers[j] = points[far].clone();
                assignment[far] = j;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centers, p).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Ok(KMeans {
        centers,
        assignment,
        iterations,
    })
}

/// A batch of HIV episodes clustered into a finite MDP.
#[derive(Clone, Debug)]
pub struct DiscretizedBatch {
    /// States at which an action was taken, episode-major.
    pub raw_states: Vec<HivState>,
    pub actions: Vec<usize>,
    pub scaler: FeatureScaler,
    pub scaled: Vec<FeatureVector>,
    pub cluster_centers: Vec<FeatureVector>,
    pub assignment: Vec<usize>,
    /// Row `c * N_ACTIONS + a`: empirical next-cluster distribution.
    pub empirical_transition: Vec<TransitionRow>,
}

impl DiscretizedBatch {
    pub fn n_clusters(&self) -> usize {
        self.cluster_centers.len()
    }

    /// Most frequent action per cluster, ties to the lowest index.
    pub fn majority_actions(&self) -> Vec<usize> {
        let mut counts = vec![[0usize; N_ACTIONS]; self.n_clusters()];
        for (&c, &a) in self.assignment.iter().zip(&self.actions) {
            counts[c][a] += 1;
        }
        counts
            .iter()
            .map(|cnt| {
                (0..N_ACTIONS)
                    .max_by(|&a, &b| cnt[a].cmp(&cnt[b]).then(b.cmp(&a)))
                    .unwrap()
            })
            .collect()
    }

    /// Fraction of batch states whose action equals their cluster's
    /// majority action.
    pub fn majority_accuracy(&self) -> f64 {
        let maj = self.majority_actions();
        let hits = self
            .assignment
            .iter()
            .zip(&self.actions)
            .filter(|(&c, &a)| maj[c] == a)
            .count();
        hits as f64 / self.actions.len() as f64
    }

    pub fn cluster_of(&self, x: &HivState) -> usize {
        nearest(&self.cluster_centers, &self.scaler.transform(x)).0
    }
}

pub fn kmeans_discretize(
    episodes: &[HivEpisode],
    k_clusters: usize,
    seed: u64,
) -> Result<DiscretizedBatch> {
    let mut raw_states = Vec::new();
    let mut actions = Vec::new();
    for ep in episodes {
        raw_states.extend_from_slice(&ep.states[..ep.len()]);
        actions.extend(ep.actions.iter().map(|a| a.index()));
    }
    let scaler = FeatureScaler::fit(&raw_states)?;
    let scaled: Vec<FeatureVector> = raw_states.iter().map(|x| scaler.transform(x)).collect();
    let km = kmeans(&scaled, k_clusters, seed)?;

    let mut counts = vec![vec![0usize; k_clusters]; k_clusters * N_ACTIONS];
    let mut offset = 0;
    for ep in episodes {
        for t in 0..ep.len() {
            let c = km.assignment[offset + t];
            let next = if t + 1 < ep.len() {
                km.assignment[offset + t + 1]
            } else {
                nearest(&km.centers, &scaler.transform(&ep.states[t + 1])).0
            };
            counts[c * N_ACTIONS + ep.actions[t].index()][next] += 1;
        }
        offset += ep.len();
    }
    let empirical_transition = counts
        .iter()
        .enumerate()
        .map(|(row, cnt)| {
            let total: usize = cnt.iter().sum();
            if total == 0 {
                vec![(row / N_ACTIONS, 1.0)]
            } else {
                cnt.iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .map(|(j, &n)| (j, n as f64 / total as f64))
                    .collect()
            }
        })
        .collect();
    Ok(DiscretizedBatch {
        raw_states,
        actions,
        scaler,
        scaled,
        cluster_centers: km.centers,
        assignment: km.assignment,
        empirical_transition,
    })
}
