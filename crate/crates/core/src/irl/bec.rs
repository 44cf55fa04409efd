//! Behavioral equivalence class constraints and their redundancy pruning.

use std::collections::BTreeMap;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use super::features::{action_feature_expectation, policy_feature_sums};
use crate::error::{Error, Result};
use crate::model::{ActionId, DemonstrationSet, Policy, StateId, TabularMdp};

const ZERO_NORM: f64 = 1e-10;
const DUPLICATE_TOL: f64 = 1e-9;
/// LP optimum at or above this means the constraint is implied by the rest.
pub const REDUNDANCY_TOL: f64 = -1e-9;

/// `w · normal ≥ 0`, with `normal` of unit length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceConstraint {
    pub normal: Vec<f64>,
    /// `(s, a, a')`: demonstrated action `a` preferred over `a'` at `s`.
    pub source: (StateId, ActionId, ActionId),
}

impl HalfspaceConstraint {
    pub fn slack(&self, w: &[f64]) -> f64 {
        self.normal.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    fn same_direction(&self, other: &[f64]) -> bool {
        self.normal
            .iter()
            .zip(other)
            .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL)
    }
}

/// Unique constraints over a set of states, plus which of them each state
/// generates.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BecTable {
    pub constraints: Vec<HalfspaceConstraint>,
    pub per_state: BTreeMap<StateId, Vec<usize>>,
}

impl BecTable {
    pub fn build(
        mdp: &TabularMdp,
        policy: &Policy,
        states: &[StateId],
        horizon: usize,
        discount: f64,
    ) -> Self {
        let tail = policy_feature_sums(mdp, policy.canonical(), horizon.saturating_sub(1), discount);
        let mut table = BecTable::default();
        for &s in states {
            let a = policy.action(s);
            let mu_a = action_feature_expectation(mdp, &tail, s, a, discount).mu;
            let mut ids = Vec::new();
            for alt in (0..mdp.n_actions()).map(ActionId).filter(|&b| b != a) {
                let mu_b = action_feature_expectation(mdp, &tail, s, alt, discount).mu;
                let diff: Vec<f64> = mu_a.iter().zip(&mu_b).map(|(x, y)| x - y).collect();
                let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= ZERO_NORM {
                    continue;
                }
                let normal: Vec<f64> = diff.iter().map(|v| v / norm).collect();
                let id = match table.constraints.iter().position(|c| c.same_direction(&normal)) {
                    Some(id) => id,
                    None => {
                        table.constraints.push(HalfspaceConstraint {
                            normal,
                            source: (s, a, alt),
                        });
                        table.constraints.len() - 1
                    }
                };
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
            ids.sort_unstable();
            table.per_state.insert(s, ids);
        }
        table
    }

    pub fn state_constraints(&self, s: StateId) -> &[usize] {
        self.per_state.get(&s).map_or(&[], Vec::as_slice)
    }
}

/// One constraint per demonstrated state and alternative action, normalized
/// and deduplicated.
pub fn bec_constraints(
    mdp: &TabularMdp,
    policy: &Policy,
    d: &DemonstrationSet,
    horizon: usize,
    discount: f64,
) -> Vec<HalfspaceConstraint> {
    BecTable::build(mdp, policy, d.unique_states(), horizon, discount).constraints
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `min c · w` over the box `[-1, 1]^d` intersected with `rows · w ≥ 0`.
fn box_lp(c: &[f64], rows: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = c.iter().map(|&ci| lp.add_var(ci, (-1.0, 1.0))).collect();
    for row in rows {
        let expr: Vec<_> = vars.iter().copied().zip(row.iter().copied()).collect();
        lp.add_constraint(expr, ComparisonOp::Ge, 0.0);
    }
    let outcome = lp.solve().map_err(|e| Error::Lp(format!("{e:?}")))?;
    let sol = outcome
        .solution()
        .ok_or_else(|| Error::Lp("solver interrupted".into()))?;
    let w = vars.iter().map(|&v| sol.var_value(v)).collect();
    Ok((sol.objective(), w))
}

/// Whether `c` is implied by `others` inside the unit box. Grows the LP one
/// most-violated constraint at a time instead of loading all of them.
fn is_redundant(c: &[f64], others: &[&[f64]]) -> Result<bool> {
    let mut active: Vec<&[f64]> = Vec::new();
    loop {
        let (obj, w) = box_lp(c, &active)?;
        if obj >= REDUNDANCY_TOL {
            return Ok(true);
        }
        let worst = others
            .iter()
            .map(|o| (dot(o, &w), *o))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match worst {
            Some((v, o)) if v < REDUNDANCY_TOL => {
                if active.iter().any(|a| std::ptr::eq(*a, o)) {
                    // Already enforced; only numerical noise remains.
                    return Ok(false);
                }
                active.push(o);
            }
            _ => return Ok(false),
        }
    }
}

/// Drops, in order, each constraint implied by the constraints still kept
/// (earlier survivors and all later ones).
pub fn prune_constraints(constraints: &[HalfspaceConstraint]) -> Result<Vec<HalfspaceConstraint>> {
    Ok(prune_indices(constraints)?
        .into_iter()
        .map(|i| constraints[i].clone())
        .collect())
}

/// Indices into `constraints` of the survivors of [`prune_constraints`].
pub fn prune_indices(constraints: &[HalfspaceConstraint]) -> Result<Vec<usize>> {
    let mut alive = vec![true; constraints.len()];
    for i in 0..constraints.len() {
        let others: Vec<&[f64]> = (0..constraints.len())
            .filter(|&j| j != i && alive[j])
            .map(|j| constraints[j].normal.as_slice())
            .collect();
        if is_redundant(&constraints[i].normal, &others)? {
            alive[i] = false;
        }
    }
    Ok((0..constraints.len()).filter(|&i| alive[i]).collect())
}
