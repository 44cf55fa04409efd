//! Greedy expected-error-reduction state selection.

use std::sync::Arc;

use super::grf::{hard_label, Graph, GrfModel};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::ActionId;

/// Ground truth the selector scores against, per graph node.
pub struct Oracle<'a> {
    /// Label revealed when a node is picked.
    pub labels: &'a [ActionId],
    /// Actions counted as correct predictions.
    pub optimal: &'a [Vec<ActionId>],
    pub n_classes: usize,
}

impl Oracle<'_> {
    fn wrong(&self, node: usize, predicted: ActionId) -> bool {
        !self.optimal[node].contains(&predicted)
    }
}

#[derive(Clone, Debug)]
pub struct AlTrace {
    /// Picked nodes, in order.
    pub picks: Vec<usize>,
    /// Misclassified unlabeled nodes right after each pick.
    pub errors: Vec<usize>,
    pub model: GrfModel,
}

/// Misclassified nodes among the unlabeled set minus `cand` if `cand` were
/// labeled next.
pub fn score_candidate(model: &GrfModel, oracle: &Oracle<'_>, cand: usize) -> usize {
    let y = oracle.labels[cand];
    let graph = model.graph();
    let c = oracle.n_classes;
    let mut errors = 0;
    if model.is_solved(cand) {
        let fk = model.soft_row(cand);
        let gkk = model.green_entry(cand, cand);
        let mut row = vec![0.0; c];
        for (r, &i) in model.unlabeled.iter().enumerate() {
            if i == cand {
                continue;
            }
            let base = model.soft().row(r);
            if model.is_solved(i) {
                let coef = model.green_entry(i, cand) / gkk;
                for k in 0..c {
                    let target = if k == y.0 { 1.0 } else { 0.0 };
                    row[k] = base[k] + coef * (target - fk[k]);
                }
            } else {
                row.iter_mut().zip(base.iter()).for_each(|(d, s)| *d = *s);
            }
            if oracle.wrong(i, hard_label(&row)) {
                errors += 1;
            }
        }
    } else {
        // The candidate's component has no labels yet: it becomes a
        // constant field of the candidate's label.
        let comp = graph.component[cand];
        let mut row = vec![0.0; c];
        for (r, &i) in model.unlabeled.iter().enumerate() {
            if i == cand {
                continue;
            }
            let pred = if graph.component[i] == comp {
                y
            } else {
                row.iter_mut().zip(model.soft().row(r).iter()).for_each(|(d, s)| *d = *s);
                hard_label(&row)
            };
            if oracle.wrong(i, pred) {
                errors += 1;
            }
        }
    }
    errors
}

/// Picks `k` nodes one at a time, each minimizing the misclassifications
/// left on the remaining unlabeled nodes. Ties go to the lowest node.
pub fn al_select(graph: Arc<Graph>, oracle: &Oracle<'_>, k: usize, exec: Exec) -> Result<AlTrace> {
    let n = graph.len();
    if oracle.labels.len() != n || oracle.optimal.len() != n {
        return Err(Error::Extraction("oracle does not cover every node".into()));
    }
    if k > n {
        return Err(Error::Extraction(format!("budget {k} exceeds {n} demonstrated states")));
    }
    let mut model = GrfModel::fit(graph, &[], oracle.n_classes, true)?;
    let mut picks = Vec::with_capacity(k);
    let mut errors = Vec::with_capacity(k);
    for _ in 0..k {
        let candidates = model.unlabeled.clone();
        let scores = exec.map(&candidates, |&c| score_candidate(&model, oracle, c));
        let (best, &err) = scores
            .iter()
            .enumerate()
            .min_by_key(|&(i, s)| (*s, candidates[i]))
            .ok_or_else(|| Error::Extraction("no candidates left".into()))?;
        let node = candidates[best];
        model = model.with_label(node, oracle.labels[node])?;
        picks.push(node);
        errors.push(err);
    }
    Ok(AlTrace {
        picks,
        errors,
        model,
    })
}
