//! Harmonic label propagation on a kernel similarity graph.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::kernel::{kernel_matrix, KernelSpec};
use crate::error::{Error, Result};
use crate::model::{ActionId, DemonstrationSet, FeatureVector, StateId, Summary};

const TIE_TOL: f64 = 1e-9;

/// Similarity graph over the demonstrated states, in ascending state order.
#[derive(Clone, Debug)]
pub struct Graph {
    pub weights: DMatrix<f64>,
    pub degree: Vec<f64>,
    /// Connected component of each node over positive-weight edges.
    pub component: Vec<usize>,
}

impl Graph {
    pub fn new(features: &[FeatureVector], kernel: &KernelSpec) -> Self {
        Self::from_weights(kernel_matrix(kernel, features))
    }

    pub fn from_weights(weights: DMatrix<f64>) -> Self {
        let n = weights.nrows();
        let degree = (0..n).map(|i| weights.row(i).sum()).collect();
        let mut component = vec![usize::MAX; n];
        let mut next = 0;
        for root in 0..n {
            if component[root] != usize::MAX {
                continue;
            }
            component[root] = next;
            let mut queue = VecDeque::from([root]);
            while let Some(i) = queue.pop_front() {
                for j in 0..n {
                    if component[j] == usize::MAX && weights[(i, j)] > 0.0 {
                        component[j] = next;
                        queue.push_back(j);
                    }
                }
            }
            next += 1;
        }
        Self {
            weights,
            degree,
            component,
        }
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    /// `L = diag(row sums) − W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.weights.clone();
        for i in 0..self.len() {
            l[(i, i)] += self.degree[i];
        }
        l
    }
}

/// `½ Σ_i Σ_j w_ij (y_i − y_j)²` over ordered pairs.
pub fn grf_energy(weights: &DMatrix<f64>, labeling: &[f64]) -> f64 {
    let n = labeling.len();
    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            e += weights[(i, j)] * (labeling[i] - labeling[j]).powi(2);
        }
    }
    0.5 * e
}

/// Highest-scoring class; near-ties go to the lowest index.
pub fn hard_label(scores: &[f64]) -> ActionId {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ActionId(scores.iter().position(|&s| s >= best - TIE_TOL).unwrap_or(0))
}

/// A fitted field: labels on some nodes, one-vs-rest harmonic scores on
/// the rest.
#[derive(Clone, Debug)]
pub struct GrfModel {
    graph: Arc<Graph>,
    pub n_classes: usize,
    /// Fixed at 1; the harmonic solution does not depend on it.
    pub beta: f64,
    /// `(node, label)`, ascending by node.
    pub labeled: Vec<(usize, ActionId)>,
    /// Ascending.
    pub unlabeled: Vec<usize>,
    /// Unlabeled nodes connected to some label, ascending.
    solved: Vec<usize>,
    /// Position of each unlabeled node in `solved`, if any.
    solved_pos: Vec<Option<usize>>,
    /// `L_UU⁻¹` over `solved`.
    green: DMatrix<f64>,
    /// One row per unlabeled node; rows of unreachable nodes are uniform.
    soft: DMatrix<f64>,
    allow_unlabeled_components: bool,
}

impl GrfModel {
    /// Solves the harmonic system. Unlabeled nodes with no positive-weight
    /// path to a label are an error unless `allow_unlabeled_components`,
    /// in which case they keep a uniform prior.
    pub fn fit(
        graph: Arc<Graph>,
        labeled: &[(usize, ActionId)],
        n_classes: usize,
        allow_unlabeled_components: bool,
    ) -> Result<Self> {
        let n = graph.len();
        let mut labels: Vec<Option<ActionId>> = vec![None; n];
        for &(i, a) in labeled {
            if i >= n || a.0 >= n_classes {
                return Err(Error::InvalidSummary(format!("label ({i}, {a}) out of range")));
            }
            labels[i] = Some(a);
        }
        let labeled: Vec<(usize, ActionId)> = (0..n)
            .filter_map(|i| labels[i].map(|a| (i, a)))
            .collect();
        let unlabeled: Vec<usize> = (0..n).filter(|&i| labels[i].is_none()).collect();
        let mut has_label = vec![false; n];
        for &(i, _) in &labeled {
            has_label[graph.component[i]] = true;
        }
        let orphans: Vec<usize> = unlabeled
            .iter()
            .copied()
            .filter(|&i| !has_label[graph.component[i]])
            .collect();
        if !orphans.is_empty() && !allow_unlabeled_components {
            return Err(Error::DisconnectedComponent { states: orphans });
        }
        let solved: Vec<usize> = unlabeled
            .iter()
            .copied()
            .filter(|&i| has_label[graph.component[i]])
            .collect();
        let mut solved_pos = vec![None; n];
        for (p, &i) in solved.iter().enumerate() {
            solved_pos[i] = Some(p);
        }

        let m = solved.len();
        let mut luu = DMatrix::zeros(m, m);
        for (a, &i) in solved.iter().enumerate() {
            for (b, &j) in solved.iter().enumerate() {
                luu[(a, b)] = -graph.weights[(i, j)];
            }
            luu[(a, a)] += graph.degree[i];
        }
        // Row-equilibrate first: with narrow kernels the diagonal can span
        // hundreds of orders of magnitude.
        let scale: Vec<f64> = (0..m).map(|a| 1.0 / luu[(a, a)]).collect();
        for a in 0..m {
            luu.row_mut(a).scale_mut(scale[a]);
        }
        let green = if m == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let mut inv = luu
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::LinearSolve("L_UU is singular".into()))?;
            for b in 0..m {
                inv.column_mut(b).scale_mut(scale[b]);
            }
            inv
        };
        let mut rhs = DMatrix::zeros(m, n_classes);
        for (a, &i) in solved.iter().enumerate() {
            for &(j, y) in &labeled {
                rhs[(a, y.0)] += graph.weights[(i, j)];
            }
        }
        let solved_soft = &green * rhs;
        let mut soft = DMatrix::from_element(unlabeled.len(), n_classes, 1.0 / n_classes as f64);
        for (r, &i) in unlabeled.iter().enumerate() {
            if let Some(p) = solved_pos[i] {
                soft.set_row(r, &solved_soft.row(p));
            }
        }
        if soft.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite harmonic solution".into()));
        }
        Ok(Self {
            graph,
            n_classes,
            beta: 1.0,
            labeled,
            unlabeled,
            solved,
            solved_pos,
            green,
            soft,
            allow_unlabeled_components,
        })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    /// Per-class scores, one row per unlabeled node.
    pub fn soft(&self) -> &DMatrix<f64> {
        &self.soft
    }

    pub fn hard(&self) -> Vec<ActionId> {
        (0..self.unlabeled.len())
            .map(|r| hard_label(&self.soft.row(r).iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    pub fn is_solved(&self, node: usize) -> bool {
        self.solved_pos.get(node).is_some_and(Option::is_some)
    }

    /// `L_UU⁻¹[i, j]` for solved nodes.
    pub(crate) fn green_entry(&self, i: usize, j: usize) -> f64 {
        self.green[(self.solved_pos[i].unwrap(), self.solved_pos[j].unwrap())]
    }

    pub(crate) fn soft_row(&self, node: usize) -> Vec<f64> {
        let r = self.unlabeled.binary_search(&node).expect("node is unlabeled");
        self.soft.row(r).iter().copied().collect()
    }

    /// Moves `node` into the labeled set. Nodes already connected to a
    /// label use the rank-one update of `L_UU⁻¹`; a node in an unlabeled
    /// component triggers a refit.
    pub fn with_label(&self, node: usize, label: ActionId) -> Result<Self> {
        let Ok(row) = self.unlabeled.binary_search(&node) else {
            return Err(Error::InvalidSummary(format!("node {node} is already labeled")));
        };
        if label.0 >= self.n_classes {
            return Err(Error::InvalidSummary(format!("label {label} out of range")));
        }
        let Some(k) = self.solved_pos[node] else {
            let mut labeled = self.labeled.clone();
            labeled.push((node, label));
            return Self::fit(
                self.graph.clone(),
                &labeled,
                self.n_classes,
                self.allow_unlabeled_components,
            );
        };
        let m = self.solved.len();
        let gkk = self.green[(k, k)];
        let keep: Vec<usize> = (0..m).filter(|&p| p != k).collect();
        let green = DMatrix::from_fn(m - 1, m - 1, |a, b| {
            let (i, j) = (keep[a], keep[b]);
            self.green[(i, j)] - self.green[(i, k)] * self.green[(k, j)] / gkk
        });
        let fk: Vec<f64> = self.soft.row(row).iter().copied().collect();
        let mut soft = self.soft.clone().remove_row(row);
        for (r, &i) in self.unlabeled.iter().filter(|&&i| i != node).enumerate() {
            if let Some(p) = self.solved_pos[i] {
                let coef = self.green[(p, k)] / gkk;
                for c in 0..self.n_classes {
                    let y = if c == label.0 { 1.0 } else { 0.0 };
                    soft[(r, c)] += coef * (y - fk[c]);
                }
            }
        }
        let mut labeled = self.labeled.clone();
        let at = labeled.partition_point(|&(i, _)| i < node);
        labeled.insert(at, (node, label));
        let mut unlabeled = self.unlabeled.clone();
        unlabeled.remove(row);
        let solved: Vec<usize> = self.solved.iter().copied().filter(|&i| i != node).collect();
        let mut solved_pos = vec![None; self.graph.len()];
        for (p, &i) in solved.iter().enumerate() {
            solved_pos[i] = Some(p);
        }
        Ok(Self {
            graph: self.graph.clone(),
            n_classes: self.n_classes,
            beta: self.beta,
            labeled,
            unlabeled,
            solved,
            solved_pos,
            green,
            soft,
            allow_unlabeled_components: self.allow_unlabeled_components,
        })
    }
}

/// Fits the field over `d`'s states with `t`'s pairs as labels.
/// `features` is aligned with `d.unique_states()`.
pub fn grf_fit(
    d: &DemonstrationSet,
    features: &[FeatureVector],
    t: &Summary,
    kernel: &KernelSpec,
    n_classes: usize,
) -> Result<GrfModel> {
    if features.len() != d.len() {
        return Err(Error::InvalidSummary("features must align with demonstrated states".into()));
    }
    let graph = Arc::new(Graph::new(features, kernel));
    let mut labeled = Vec::new();
    for (s, a) in t.pairs() {
        let i = d
            .index_of(s)
            .ok_or_else(|| Error::InvalidSummary(format!("summary state {s} not demonstrated")))?;
        labeled.push((i, a));
    }
    GrfModel::fit(graph, &labeled, n_classes, false).map_err(|e| match e {
        Error::DisconnectedComponent { states } => Error::DisconnectedComponent {
            states: states.iter().map(|&i| d.unique_states()[i].0).collect(),
        },
        e => e,
    })
}

/// Soft scores and hard labels for every unlabeled node, keyed by state.
pub fn grf_predict(model: &GrfModel, d: &DemonstrationSet) -> Vec<(StateId, Vec<f64>, ActionId)> {
    let hard = model.hard();
    model
        .unlabeled
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            (
                d.unique_states()[i],
                model.soft.row(r).iter().copied().collect(),
                hard[r],
            )
        })
        .collect()
}

/// [`GrfModel::with_label`] under the operation's usual name.
pub fn grf_retrain_incremental(model: &GrfModel, node: usize, label: ActionId) -> Result<GrfModel> {
    model.with_label(node, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn random_graph(n: usize, seed: u64) -> Arc<Graph> {
        let mut rng = seed::rng(seed);
        let xs: Vec<FeatureVector> = (0..n)
            .map(|_| FeatureVector::new(vec![rng.random(), rng.random()]).unwrap())
            .collect();
        Arc::new(Graph::new(&xs, &KernelSpec::rbf(0.5)))
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let g = random_graph(7, 1);
        let l = g.laplacian();
        for i in 0..7 {
            assert!(l.row(i).sum().abs() < 1e-9);
        }
    }

    #[test]
    fn constant_labels_propagate() {
        let g = random_graph(6, 2);
        let m = GrfModel::fit(g, &[(0, ActionId(2)), (3, ActionId(2))], 3, false).unwrap();
        for r in 0..m.unlabeled.len() {
            assert!((m.soft()[(r, 2)] - 1.0).abs() < 1e-12);
        }
        assert!(m.hard().iter().all(|&a| a == ActionId(2)));
    }

    #[test]
    fn symmetric_middle_node_ties() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let g = Arc::new(Graph::from_weights(w));
        let m = GrfModel::fit(g, &[(0, ActionId(1)), (2, ActionId(0))], 2, false).unwrap();
        assert!((m.soft()[(0, 0)] - 0.5).abs() < 1e-12);
        assert_eq!(m.hard(), vec![ActionId(0)]);
    }

    #[test]
    fn duplicate_state_takes_its_twin_label() {
        let x = FeatureVector::new(vec![0.2, 0.9]).unwrap();
        let far = FeatureVector::new(vec![9.0, -9.0]).unwrap();
        let g = Arc::new(Graph::new(&[x.clone(), x, far], &KernelSpec::rbf(0.1)));
        let m = GrfModel::fit(g, &[(0, ActionId(1)), (2, ActionId(0))], 2, false).unwrap();
        assert!((m.soft()[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_component_is_named() {
        let w = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let g = Arc::new(Graph::from_weights(w));
        let err = GrfModel::fit(g.clone(), &[(0, ActionId(0))], 2, false).unwrap_err();
        assert!(matches!(err, Error::DisconnectedComponent { states } if states == vec![2]));
        let m = GrfModel::fit(g, &[(0, ActionId(1))], 2, true).unwrap();
        assert_eq!(m.soft().row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
    }

    #[test]
    fn one_vs_rest_scores_sum_to_one() {
        let g = random_graph(8, 3);
        let m = GrfModel::fit(g, &[(1, ActionId(0)), (4, ActionId(1)), (6, ActionId(2))], 3, false)
            .unwrap();
        for r in 0..m.unlabeled.len() {
            let s: f64 = m.soft().row(r).sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(m.soft().row(r).iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn incremental_matches_refit() {
        let g = random_graph(6, 4);
        let base = GrfModel::fit(g.clone(), &[(0, ActionId(0)), (5, ActionId(1))], 2, false).unwrap();
        for node in [1, 2, 3, 4] {
            for label in [ActionId(0), ActionId(1)] {
                let inc = base.with_label(node, label).unwrap();
                let full =
                    GrfModel::fit(g.clone(), &[(0, ActionId(0)), (5, ActionId(1)), (node, label)], 2, false)
                        .unwrap();
                assert_eq!(inc.unlabeled, full.unlabeled);
                let diff = (inc.soft() - full.soft()).amax();
                assert!(diff < 1e-9, "node {node}: {diff}");
            }
        }
    }

    #[test]
    fn last_label_empties_predictions() {
        let g = random_graph(3, 5);
        let m = GrfModel::fit(g, &[(0, ActionId(0)), (1, ActionId(1))], 2, false).unwrap();
        let m = m.with_label(2, ActionId(1)).unwrap();
        assert!(m.unlabeled.is_empty());
        assert!(m.hard().is_empty());
    }

    #[test]
    fn energy_examples() {
        let w = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(grf_energy(&w, &[0.0, 1.0]), 1.0);
        assert_eq!(grf_energy(&w, &[3.0, 3.0]), 0.0);
    }

    #[test]
    fn harmonic_solution_minimizes_energy() {
        let g = random_graph(8, 6);
        let labeled = [(0, ActionId(1)), (2, ActionId(0)), (7, ActionId(1))];
        let m = GrfModel::fit(g.clone(), &labeled, 2, false).unwrap();
        let mut y = vec![0.0; 8];
        for &(i, a) in &labeled {
            y[i] = a.0 as f64;
        }
        for (r, &i) in m.unlabeled.iter().enumerate() {
            y[i] = m.soft()[(r, 1)];
        }
        let e0 = grf_energy(&g.weights, &y);
        let mut rng = seed::rng(9);
        for _ in 0..100 {
            let mut z = y.clone();
            for &i in &m.unlabeled {
                z[i] += rng.random_range(-0.1..0.1);
            }
            assert!(grf_energy(&g.weights, &z) >= e0 - 1e-12);
        }
    }
}
