//! Exact queries on a network with complete CPTs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{eliminate, Factor};
use crate::graph::{Dag, GraphError, Variable};
use crate::synthesis::{Cpt, SynthesisMode};

// Row sums of hand-written or synthesized tables must be this close to one.
const ROW_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid table for {variable}: {reason}")]
    InvalidCpt { variable: String, reason: String },
    #[error("evidence assigns {0} twice")]
    DuplicateEvidence(String),
    #[error("assignment leaves {} unassigned", .0.join(", "))]
    IncompleteAssignment(Vec<String>),
    #[error("query variable {0} is part of the evidence")]
    QueryInEvidence(String),
    #[error("evidence has probability zero")]
    ZeroEvidenceProbability,
    #[error("sensitivity needs at least one input")]
    EmptyInputs,
    #[error("{0} is not a root; maintenance tasks attach to roots only")]
    TargetNotRoot(String),
    #[error("adding the task would create a cycle: {}", .0.join(" -> "))]
    AcyclicityViolation(Vec<String>),
}

/// A set of (variable, state) observations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evidence(pub BTreeMap<String, String>);

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, variable: &str, state: &str) -> Self {
        self.0.insert(variable.to_string(), state.to_string());
        self
    }

    /// Parses `V=s,W=t`; empty text is empty evidence.
    pub fn parse(text: &str) -> Result<Evidence, InferenceError> {
        let mut ev = Evidence::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (v, s) = part.split_once('=').ok_or_else(|| GraphError::UnknownState {
                variable: part.to_string(),
                state: String::new(),
            })?;
            if ev.0.insert(v.trim().to_string(), s.trim().to_string()).is_some() {
                return Err(InferenceError::DuplicateEvidence(v.trim().to_string()));
            }
        }
        Ok(ev)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn resolve(&self, dag: &Dag) -> Result<Vec<(usize, usize)>, InferenceError> {
        self.0
            .iter()
            .map(|(v, s)| {
                let i = dag.require(v)?;
                Ok((i, dag.state_index(i, s)?))
            })
            .collect()
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(v, s)| format!("{v}={s}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub query: String,
    pub states: Vec<String>,
    #[serde(with = "crate::decimal::vec")]
    pub distribution: Vec<f64>,
    pub evidence: Evidence,
    #[serde(with = "crate::decimal")]
    pub evidence_probability: f64,
    /// Variables summed out, in order.
    pub elimination_order: Vec<String>,
}

impl PosteriorReport {
    pub fn probability(&self, state: &str) -> Option<f64> {
        self.states.iter().position(|s| s == state).map(|i| self.distribution[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub input: String,
    pub states: Vec<String>,
    /// P(target = state | input = s); `None` where the condition is impossible.
    pub values: Vec<Option<f64>>,
    #[serde(with = "crate::decimal")]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub target: String,
    pub state: String,
    pub base_evidence: Evidence,
    /// Ranked by decreasing spread, ties by input id.
    pub entries: Vec<SensitivityEntry>,
}

impl SensitivityReport {
    pub fn rank_of(&self, input: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.input == input)
    }
}

/// A maintenance task modeled as a new root that becomes the sole parent of
/// an environment variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaintenanceAction {
    pub task: String,
    #[serde(default = "default_task_states")]
    pub states: Vec<String>,
    #[serde(with = "crate::decimal::vec")]
    pub prior: Vec<f64>,
    pub target: String,
    /// One distribution over the target's states per task state.
    #[serde(with = "crate::decimal::rows")]
    pub table: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

fn default_task_states() -> Vec<String> {
    vec!["yes".into(), "no".into()]
}

impl MaintenanceAction {
    /// A task that leaves the target's distribution unchanged whatever its
    /// state.
    pub fn vacuous(net: &Network, task: &str, target: &str) -> Result<MaintenanceAction, InferenceError> {
        let t = net.dag.require(target)?;
        let row = net.cpts[t].rows.first().cloned().unwrap_or_default();
        Ok(MaintenanceAction {
            task: task.to_string(),
            states: default_task_states(),
            prior: vec![0.5, 0.5],
            target: target.to_string(),
            table: vec![row.clone(), row],
            description: String::new(),
        })
    }
}

/// A sequence of maintenance actions applied together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub name: String,
    pub actions: Vec<MaintenanceAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub name: String,
    pub posterior: PosteriorReport,
}

/// A DAG with one CPT per variable, in variable order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    dag: Dag,
    cpts: Vec<Cpt>,
}

impl Network {
    pub fn new(dag: Dag, cpts: Vec<Cpt>) -> Result<Network, InferenceError> {
        let mut by_child: BTreeMap<String, Cpt> = BTreeMap::new();
        for c in cpts {
            let child = c.child.clone();
            if by_child.insert(child.clone(), c).is_some() {
                return Err(InferenceError::InvalidCpt {
                    variable: child,
                    reason: "more than one table".into(),
                });
            }
        }
        let mut ordered = Vec::with_capacity(dag.len());
        for i in 0..dag.len() {
            let id = &dag.variable(i).id;
            let cpt = by_child.remove(id).ok_or_else(|| InferenceError::InvalidCpt {
                variable: id.clone(),
                reason: "missing table".into(),
            })?;
            check_cpt(&dag, i, &cpt)?;
            ordered.push(cpt);
        }
        if let Some(extra) = by_child.keys().next() {
            return Err(InferenceError::InvalidCpt {
                variable: extra.clone(),
                reason: "not a variable of the network".into(),
            });
        }
        Ok(Network { dag, cpts: ordered })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn cpt(&self, id: &str) -> Option<&Cpt> {
        self.dag.index_of(id).map(|i| &self.cpts[i])
    }

    pub fn into_parts(self) -> (Dag, Vec<Cpt>) {
        (self.dag, self.cpts)
    }

    pub(crate) fn factor(&self, i: usize) -> Factor {
        cpt_factor(&self.dag, i, &self.cpts[i])
    }

    /// Product of the CPT entries selected by a full assignment.
    pub fn joint_probability(&self, assignment: &Evidence) -> Result<f64, InferenceError> {
        let missing: Vec<String> = self
            .dag
            .variables()
            .iter()
            .filter(|v| !assignment.0.contains_key(&v.id))
            .map(|v| v.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(InferenceError::IncompleteAssignment(missing));
        }
        let mut states = vec![0; self.dag.len()];
        for (v, s) in assignment.resolve(&self.dag)? {
            states[v] = s;
        }
        Ok(self.joint_at(&states))
    }

    /// Joint probability of a full assignment given by state index.
    pub fn joint_at(&self, states: &[usize]) -> f64 {
        (0..self.dag.len())
            .map(|i| {
                let row = self.cpts[i].row_index(&self.dag, i, states);
                self.cpts[i].rows[row][states[i]]
            })
            .product()
    }

    pub fn posterior(&self, query: &str, evidence: &Evidence) -> Result<PosteriorReport, InferenceError> {
        let q = self.dag.require(query)?;
        if evidence.0.contains_key(query) {
            return Err(InferenceError::QueryInEvidence(query.to_string()));
        }
        let (factor, order) = self.query_factor(&[q], evidence)?;
        let z = factor.total();
        if z <= 0.0 {
            return Err(InferenceError::ZeroEvidenceProbability);
        }
        Ok(PosteriorReport {
            query: query.to_string(),
            states: self.dag.variable(q).states.clone(),
            distribution: factor.values().iter().map(|v| v / z).collect(),
            evidence: evidence.clone(),
            evidence_probability: z,
            elimination_order: order.into_iter().map(|i| self.dag.variable(i).id.clone()).collect(),
        })
    }

    /// Unnormalised factor over `keep` with the evidence entered. Variables
    /// that are neither ancestors of `keep` nor of the evidence are dropped
    /// first, since they sum to one.
    pub(crate) fn query_factor(&self, keep: &[usize], evidence: &Evidence) -> Result<(Factor, Vec<usize>), InferenceError> {
        let observed = evidence.resolve(&self.dag)?;
        let mut roots: Vec<usize> = keep.to_vec();
        roots.extend(observed.iter().map(|(v, _)| *v));
        let mut relevant = self.dag.ancestors(&roots);
        relevant.extend(roots.iter().copied());
        let factors: Vec<Factor> = relevant
            .iter()
            .map(|&i| {
                observed
                    .iter()
                    .fold(self.factor(i), |f, &(v, s)| f.reduce(v, s))
            })
            .collect();
        let keep: BTreeSet<usize> = keep.iter().copied().collect();
        let (f, order) = eliminate(factors, &keep, |i| self.dag.variable(i).id.clone());
        Ok((f, order))
    }

    /// Spread of P(target = state | input = s) over the states of each input.
    pub fn sensitivity(
        &self,
        target: &str,
        state: &str,
        inputs: &[String],
        base: &Evidence,
    ) -> Result<SensitivityReport, InferenceError> {
        if inputs.is_empty() {
            return Err(InferenceError::EmptyInputs);
        }
        let t = self.dag.require(target)?;
        let ts = self.dag.state_index(t, state)?;
        let mut entries: Vec<SensitivityEntry> = inputs
            .par_iter()
            .map(|input| {
                let i = self.dag.require(input)?;
                let states = self.dag.variable(i).states.clone();
                let mut values = Vec::with_capacity(states.len());
                for s in &states {
                    let ev = base.clone().with(input, s);
                    let v = match self.posterior(target, &ev) {
                        Ok(p) => Some(p.distribution[ts]),
                        Err(InferenceError::ZeroEvidenceProbability) => None,
                        Err(e) => return Err(e),
                    };
                    values.push(v);
                }
                let defined: Vec<f64> = values.iter().flatten().copied().collect();
                let spread = if defined.is_empty() {
                    0.0
                } else {
                    defined.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                        - defined.iter().copied().fold(f64::INFINITY, f64::min)
                };
                Ok(SensitivityEntry {
                    input: input.clone(),
                    states,
                    values,
                    spread,
                })
            })
            .collect::<Result<_, InferenceError>>()?;
        entries.sort_by(|a, b| {
            b.spread
                .partial_cmp(&a.spread)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.input.cmp(&b.input))
        });
        Ok(SensitivityReport {
            target: target.to_string(),
            state: state.to_string(),
            base_evidence: base.clone(),
            entries,
        })
    }

    /// Roots of the network, the usual sensitivity inputs.
    pub fn roots(&self) -> Vec<String> {
        (0..self.dag.len())
            .filter(|&i| self.dag.is_root(i))
            .map(|i| self.dag.variable(i).id.clone())
            .collect()
    }

    pub fn apply_maintenance(&self, action: &MaintenanceAction) -> Result<Network, InferenceError> {
        let t = self.dag.require(&action.target)?;
        if !self.dag.is_root(t) {
            return Err(InferenceError::TargetNotRoot(action.target.clone()));
        }
        let states: Vec<&str> = action.states.iter().map(String::as_str).collect();
        let task = Variable::new(action.task.as_str(), &states).with_description(action.description.as_str());
        let dag = match self.dag.with_new_parent(task, t) {
            Ok(d) => d,
            Err(GraphError::CycleDetected(path)) => return Err(InferenceError::AcyclicityViolation(path)),
            Err(e) => return Err(e.into()),
        };
        let mut cpts = self.cpts.clone();
        cpts[t] = Cpt::given(&action.target, &[action.task.as_str()], action.table.clone());
        cpts.push(Cpt::given(&action.task, &[], vec![action.prior.clone()]));
        Network::new(dag, cpts)
    }

    pub fn apply_strategy(&self, actions: &[MaintenanceAction]) -> Result<Network, InferenceError> {
        let mut net = self.clone();
        for a in actions {
            net = net.apply_maintenance(a)?;
        }
        Ok(net)
    }

    /// Evaluates each strategy independently against this network.
    pub fn evaluate_strategies(
        &self,
        strategies: &[Strategy],
        query: &str,
        evidence: &Evidence,
    ) -> Vec<Result<StrategyOutcome, InferenceError>> {
        strategies
            .par_iter()
            .map(|s| {
                let net = self.apply_strategy(&s.actions)?;
                Ok(StrategyOutcome {
                    name: s.name.clone(),
                    posterior: net.posterior(query, evidence)?,
                })
            })
            .collect()
    }
}

pub(crate) fn cpt_factor(dag: &Dag, i: usize, cpt: &Cpt) -> Factor {
    let mut vars: Vec<usize> = dag.parents(i).to_vec();
    vars.push(i);
    let cards: Vec<usize> = vars.iter().map(|&v| dag.cardinality(v)).collect();
    let values: Vec<f64> = cpt.rows.iter().flatten().copied().collect();
    Factor::new(vars, cards, values)
}

pub(crate) fn check_cpt(dag: &Dag, i: usize, cpt: &Cpt) -> Result<(), InferenceError> {
    let var = dag.variable(i);
    let bad = |reason: String| InferenceError::InvalidCpt {
        variable: var.id.clone(),
        reason,
    };
    let expected: Vec<&str> = dag.parent_ids(i);
    if cpt.parents.iter().map(String::as_str).collect::<Vec<_>>() != expected {
        return Err(bad(format!("parents {:?}, network has {:?}", cpt.parents, expected)));
    }
    let rows: usize = dag.parents(i).iter().map(|&p| dag.cardinality(p)).product();
    if cpt.rows.len() != rows {
        return Err(bad(format!("{} rows, expected {rows}", cpt.rows.len())));
    }
    for (r, row) in cpt.rows.iter().enumerate() {
        if row.len() != var.cardinality() {
            return Err(bad(format!("row {r} has {} entries", row.len())));
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(bad(format!("row {r} has entries outside [0, 1]")));
        }
        let sum: f64 = row.iter().sum();
        if cpt.mode != Some(SynthesisMode::Raw) && (sum - 1.0).abs() > ROW_SLACK {
            return Err(bad(format!("row {r} sums to {sum}")));
        }
    }
    Ok(())
}
