use serde::{Deserialize, Serialize};

use super::{ElicitationError, ElicitationStore, Target};
use crate::graph::Dag;

// Comparisons against hull bounds tolerate this much rounding.
const HULL_EPS: f64 = 1e-12;

/// A child state checked against one of the child's parents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub child: String,
    pub parent: String,
    /// Child state whose probability is checked.
    pub state: String,
}

impl Pair {
    /// Pair on the child's first state.
    pub fn new(dag: &Dag, child: &str, parent: &str) -> Result<Pair, ElicitationError> {
        let c = dag
            .get(child)
            .ok_or_else(|| ElicitationError::UnknownPair(format!("{child}/{parent}")))?;
        Pair::with_state(dag, child, parent, &c.states[0])
    }

    pub fn with_state(dag: &Dag, child: &str, parent: &str, state: &str) -> Result<Pair, ElicitationError> {
        let bad = || ElicitationError::UnknownPair(format!("{child}/{parent}"));
        let c = dag.index_of(child).ok_or_else(bad)?;
        if !dag.parent_ids(c).contains(&parent) || dag.variable(c).state_index(state).is_none() {
            return Err(bad());
        }
        Ok(Pair {
            child: child.to_string(),
            parent: parent.to_string(),
            state: state.to_string(),
        })
    }

    /// Every child-parent edge for every non-reference child state, in
    /// topological then parent order.
    pub fn all(dag: &Dag) -> Vec<Pair> {
        let mut out = Vec::new();
        for c in dag.topological_order() {
            let var = dag.variable(c);
            let mut parents = dag.parent_ids(c);
            parents.sort();
            for p in parents {
                for s in &var.states[..var.states.len() - 1] {
                    out.push(Pair {
                        child: var.id.clone(),
                        parent: p.to_string(),
                        state: s.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn conditional_target(&self, parent_state: &str) -> Target {
        Target::conditional(&self.child, &self.state, &[(&self.parent, parent_state)])
    }

    pub fn marginal_target(&self) -> Target {
        Target::marginal(&self.child, &self.state)
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}={}, {})", self.child, self.state, self.parent)
    }
}

/// Where the stated child marginal sits relative to the conditionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullStatus {
    Inside,
    /// On the boundary of a non-degenerate hull: reachable only if one parent
    /// state carries all the weight.
    Boundary,
    Outside,
}

/// Inputs of one pair as read from the store.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PairInputs {
    pub parent_states: Vec<String>,
    pub weights: Vec<f64>,
    pub conditionals: Vec<f64>,
    /// Sum of the other non-reference child states' conditionals, per parent state.
    pub sibling_mass: Vec<f64>,
    pub stated: f64,
}

impl PairInputs {
    pub fn computed(&self) -> f64 {
        self.weights.iter().zip(&self.conditionals).map(|(w, k)| w * k).sum()
    }

    pub fn hull(&self) -> (f64, f64) {
        let lo = self.conditionals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.conditionals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

pub(crate) fn read_pair(store: &ElicitationStore, dag: &Dag, pair: &Pair) -> Result<PairInputs, ElicitationError> {
    let c = dag
        .index_of(&pair.child)
        .ok_or_else(|| ElicitationError::UnknownPair(pair.to_string()))?;
    let p = dag
        .index_of(&pair.parent)
        .ok_or_else(|| ElicitationError::UnknownPair(pair.to_string()))?;
    let s = dag
        .variable(c)
        .state_index(&pair.state)
        .ok_or_else(|| ElicitationError::UnknownPair(pair.to_string()))?;
    let reference = dag.cardinality(c) - 1;
    let mut missing = Vec::new();
    let mut note = |r: Result<Vec<f64>, ElicitationError>| -> Result<Option<Vec<f64>>, ElicitationError> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(ElicitationError::MissingStatement(t)) => {
                missing.extend(t);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let weights = note(store.marginal_distribution(dag, p))?;
    let child_marginal = note(store.marginal_distribution(dag, c))?;
    let mut rows = Vec::new();
    for a in 0..dag.cardinality(p) {
        rows.push(note(store.conditional_distribution(dag, c, &[(p, a)]))?);
    }
    if !missing.is_empty() {
        return Err(ElicitationError::MissingStatement(missing));
    }
    let rows: Vec<Vec<f64>> = rows.into_iter().map(Option::unwrap).collect();
    let sibling_mass = rows
        .iter()
        .map(|r| {
            (0..reference)
                .filter(|&j| j != s)
                .map(|j| r[j])
                .sum()
        })
        .collect();
    Ok(PairInputs {
        parent_states: dag.variable(p).states.clone(),
        weights: weights.unwrap(),
        conditionals: rows.iter().map(|r| r[s]).collect(),
        sibling_mass,
        stated: child_marginal.unwrap()[s],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub pair: Pair,
    pub parent_states: Vec<String>,
    #[serde(with = "crate::decimal::vec")]
    pub weights: Vec<f64>,
    #[serde(with = "crate::decimal::vec")]
    pub conditionals: Vec<f64>,
    /// Σ_s P(child | parent = s) P(parent = s)
    #[serde(with = "crate::decimal")]
    pub computed: f64,
    #[serde(with = "crate::decimal")]
    pub stated: f64,
    #[serde(with = "crate::decimal")]
    pub residual: f64,
    #[serde(with = "crate::decimal")]
    pub hull_min: f64,
    #[serde(with = "crate::decimal")]
    pub hull_max: f64,
    pub hull_status: HullStatus,
    pub inconsistent: bool,
    /// Other parents of the child whose conditional hull excludes this
    /// pair's computed marginal.
    pub candidate_excluded_by: Vec<String>,
}

impl PairCheck {
    pub fn hull_flag(&self) -> bool {
        self.hull_status != HullStatus::Inside
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingPair {
    pub pair: Pair,
    pub missing: Vec<Target>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    #[serde(with = "crate::decimal")]
    pub tolerance: f64,
    /// Ordered by decreasing residual.
    pub pairs: Vec<PairCheck>,
    pub missing: Vec<MissingPair>,
    /// Every computed marginal lies within its own hull.
    pub self_test_ok: bool,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.pairs.iter().all(|p| !p.inconsistent)
    }

    pub fn inconsistent(&self) -> impl Iterator<Item = &PairCheck> {
        self.pairs.iter().filter(|p| p.inconsistent)
    }

    pub fn get(&self, child: &str, parent: &str) -> Option<&PairCheck> {
        self.pairs
            .iter()
            .find(|p| p.pair.child == child && p.pair.parent == parent)
    }

    pub fn hull_flags(&self) -> impl Iterator<Item = &PairCheck> {
        self.pairs
            .iter()
            .filter(|p| p.hull_flag() || !p.candidate_excluded_by.is_empty())
    }
}

pub(crate) fn hull_status(stated: f64, lo: f64, hi: f64) -> HullStatus {
    if stated < lo - HULL_EPS || stated > hi + HULL_EPS {
        HullStatus::Outside
    } else if hi - lo > HULL_EPS && ((stated - lo).abs() <= HULL_EPS || (stated - hi).abs() <= HULL_EPS) {
        HullStatus::Boundary
    } else {
        HullStatus::Inside
    }
}

pub(crate) fn in_closed_hull(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo - HULL_EPS && x <= hi + HULL_EPS
}

pub(crate) fn check_pair(store: &ElicitationStore, dag: &Dag, pair: &Pair, tolerance: f64) -> Result<PairCheck, ElicitationError> {
    let inputs = read_pair(store, dag, pair)?;
    let computed = inputs.computed();
    let (lo, hi) = inputs.hull();
    let residual = (computed - inputs.stated).abs();
    Ok(PairCheck {
        pair: pair.clone(),
        parent_states: inputs.parent_states,
        weights: inputs.weights,
        conditionals: inputs.conditionals,
        computed,
        stated: inputs.stated,
        residual,
        hull_min: lo,
        hull_max: hi,
        hull_status: hull_status(inputs.stated, lo, hi),
        inconsistent: residual > tolerance,
        candidate_excluded_by: Vec::new(),
    })
}

/// Checks the marginal-as-convex-combination identity for every pair whose
/// statements are complete. Incomplete pairs are listed, not fatal.
pub fn check_consistency(store: &ElicitationStore, dag: &Dag, tolerance: f64) -> Result<ConsistencyReport, ElicitationError> {
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for pair in Pair::all(dag) {
        match check_pair(store, dag, &pair, tolerance) {
            Ok(c) => pairs.push(c),
            Err(ElicitationError::MissingStatement(m)) => missing.push(MissingPair { pair, missing: m }),
            Err(e) => return Err(e),
        }
    }
    mark_cross_hulls(&mut pairs);
    let self_test_ok = pairs
        .iter()
        .all(|p| in_closed_hull(p.computed, (p.hull_min - 1e-9, p.hull_max + 1e-9)));
    pairs.sort_by(|a, b| {
        b.residual
            .partial_cmp(&a.residual)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.pair.cmp(&b.pair))
    });
    Ok(ConsistencyReport {
        tolerance,
        pairs,
        missing,
        self_test_ok,
    })
}

pub(crate) fn mark_cross_hulls(pairs: &mut [PairCheck]) {
    let snapshot: Vec<(Pair, f64, (f64, f64))> = pairs
        .iter()
        .map(|p| (p.pair.clone(), p.computed, (p.hull_min, p.hull_max)))
        .collect();
    for p in pairs.iter_mut() {
        p.candidate_excluded_by = snapshot
            .iter()
            .filter(|(q, _, hull)| {
                q.child == p.pair.child
                    && q.state == p.pair.state
                    && q.parent != p.pair.parent
                    && !in_closed_hull(p.computed, *hull)
            })
            .map(|(q, _, _)| q.parent.clone())
            .collect();
    }
}
