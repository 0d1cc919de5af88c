//! Elicited probability statements and the store that holds them.
//!
//! Statements are never deleted. Ingestion and reconciliation only flip the
//! status of older statements and append new ones, so the audit log replayed
//! over the initial statements reproduces the final store.

mod consistency;
mod questionnaire;
mod reconcile;

pub use consistency::{check_consistency, ConsistencyReport, HullStatus, MissingPair, Pair, PairCheck};
pub use questionnaire::{generate_questionnaire, Question, Questionnaire, RARE_EVENT_THRESHOLD};
pub use reconcile::{
    fix_by_single_conditional, reconcile, replace_marginal, rescale_preserving_ratios, suggest_target,
    ActionKind, AuditEntry, Decision, FixOutcome, ReconcileConfig, ReconcileOutcome, ReconcileWarning,
    ReconciliationAction, RuleCitation, SelectionMode, TargetSuggestion, CAP,
};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Dag;
use crate::loglinear::InteractionSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElicitationError {
    #[error("probability {value} for {target} is outside [0, 1]")]
    OutOfRange { target: Target, value: f64 },
    #[error("unknown target {target}: {reason}")]
    UnknownTarget { target: Target, reason: String },
    #[error("missing statements: {}", list(.0))]
    MissingStatement(Vec<Target>),
    #[error("distribution for {target} sums to {sum}")]
    NotNormalized { target: Target, sum: f64 },
    #[error("weight P({parent}={state}) is zero")]
    ZeroWeight { parent: String, state: String },
    #[error("all conditionals of {child} given {parent} are zero; ratios are undefined")]
    DegenerateRatios { child: String, parent: String },
    #[error("{0} has fewer than two parents")]
    InsufficientParents(String),
    #[error("no per-parent marginal of {0} lies inside every other parent's hull")]
    NoFeasibleCandidate(String),
    #[error("action would store an invalid value: {0}")]
    InvalidAction(String),
    #[error("{0} is not a child-parent pair of the network")]
    UnknownPair(String),
}

fn list(targets: &[Target]) -> String {
    targets.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub variable: String,
    pub state: String,
}

/// What a probability statement is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    Marginal {
        variable: String,
        state: String,
    },
    Conditional {
        child: String,
        state: String,
        given: Vec<Condition>,
    },
}

impl Target {
    pub fn marginal(variable: &str, state: &str) -> Self {
        Target::Marginal {
            variable: variable.to_string(),
            state: state.to_string(),
        }
    }

    /// Conditioning pairs are kept sorted by variable id.
    pub fn conditional(child: &str, state: &str, given: &[(&str, &str)]) -> Self {
        let mut given: Vec<Condition> = given
            .iter()
            .map(|(v, s)| Condition {
                variable: v.to_string(),
                state: s.to_string(),
            })
            .collect();
        given.sort();
        Target::Conditional {
            child: child.to_string(),
            state: state.to_string(),
            given,
        }
    }

    pub fn variable(&self) -> &str {
        match self {
            Target::Marginal { variable, .. } => variable,
            Target::Conditional { child, .. } => child,
        }
    }

    pub fn state(&self) -> &str {
        match self {
            Target::Marginal { state, .. } | Target::Conditional { state, .. } => state,
        }
    }

    pub fn given(&self) -> &[Condition] {
        match self {
            Target::Marginal { .. } => &[],
            Target::Conditional { given, .. } => given,
        }
    }

    fn with_state(&self, state: &str) -> Target {
        let mut t = self.clone();
        match &mut t {
            Target::Marginal { state: s, .. } | Target::Conditional { state: s, .. } => *s = state.to_string(),
        }
        t
    }

    fn normalized(mut self) -> Self {
        if let Target::Conditional { given, .. } = &mut self {
            given.sort();
        }
        self
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Marginal { variable, state } => write!(f, "P({variable}={state})"),
            Target::Conditional { child, state, given } => {
                let g: Vec<String> = given.iter().map(|c| format!("{}={}", c.variable, c.state)).collect();
                write!(f, "P({child}={state} | {})", g.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Database,
    Expert(String),
    /// Value written by an applied reconciliation action.
    Reconciliation,
}

impl Source {
    pub fn is_database(&self) -> bool {
        matches!(self, Source::Database)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacedBy {
    Statement(u64),
    Action(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Replaced(ReplacedBy),
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilityStatement {
    pub id: u64,
    pub target: Target,
    #[serde(with = "crate::decimal")]
    pub value: f64,
    pub source: Source,
    pub status: Status,
    /// Logical clock: position of the event that created the statement.
    pub seq: u64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// A statement as supplied by an answers file or an HTTP client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    pub target: Target,
    #[serde(with = "crate::decimal")]
    pub value: f64,
    pub source: Source,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Answer {
    pub fn expert(expert: &str, target: Target, value: f64) -> Self {
        Answer {
            target,
            value,
            source: Source::Expert(expert.to_string()),
            note: String::new(),
        }
    }

    pub fn database(target: Target, value: f64) -> Self {
        Answer {
            target,
            value,
            source: Source::Database,
            note: String::new(),
        }
    }
}

/// One shadowing event produced while ingesting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shadowing {
    pub target: Target,
    pub kept: u64,
    pub replaced: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub added: Vec<u64>,
    pub shadowed: Vec<Shadowing>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElicitationStore {
    statements: Vec<ProbabilityStatement>,
    #[serde(default)]
    log: Vec<AuditEntry>,
    /// Logical clock, bumped by every mutation.
    #[serde(default)]
    clock: u64,
}

impl ElicitationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn statements(&self) -> &[ProbabilityStatement] {
        &self.statements
    }

    pub fn audit_log(&self) -> &[AuditEntry] {
        &self.log
    }

    /// Monotone counter bumped by every mutation.
    pub fn revision(&self) -> u64 {
        self.clock
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn next_id(&self) -> u64 {
        self.statements.last().map_or(1, |s| s.id + 1)
    }

    pub fn active(&self, target: &Target) -> Option<&ProbabilityStatement> {
        self.statements
            .iter()
            .rev()
            .find(|s| s.status == Status::Active && &s.target == target)
    }

    pub fn value(&self, target: &Target) -> Option<f64> {
        self.active(target).map(|s| s.value)
    }

    pub fn active_statements(&self) -> impl Iterator<Item = &ProbabilityStatement> {
        self.statements.iter().filter(|s| s.status == Status::Active)
    }

    pub fn is_locked(&self, target: &Target) -> bool {
        self.active(target).is_some_and(|s| s.source.is_database())
    }

    /// Validates every answer, then records them in order. Database values
    /// shadow expert values for the same target; otherwise the latest wins.
    pub fn ingest(
        &mut self,
        dag: &Dag,
        kept: &[InteractionSpec],
        answers: Vec<Answer>,
    ) -> Result<IngestReport, ElicitationError> {
        let answers: Vec<Answer> = answers
            .into_iter()
            .map(|mut a| {
                a.target = a.target.normalized();
                a
            })
            .collect();
        for a in &answers {
            validate_target(dag, kept, &a.target)?;
            if !(0.0..=1.0).contains(&a.value) {
                return Err(ElicitationError::OutOfRange {
                    target: a.target.clone(),
                    value: a.value,
                });
            }
        }
        let mut report = IngestReport::default();
        for a in answers {
            let id = self.next_id();
            let seq = self.tick();
            let mut status = Status::Active;
            if let Some(prev) = self.active(&a.target).map(|s| (s.id, s.source.is_database())) {
                let (prev_id, prev_db) = prev;
                if prev_db && !a.source.is_database() {
                    status = Status::Replaced(ReplacedBy::Statement(prev_id));
                    report.shadowed.push(Shadowing {
                        target: a.target.clone(),
                        kept: prev_id,
                        replaced: id,
                    });
                } else {
                    self.statement_mut(prev_id).status = Status::Replaced(ReplacedBy::Statement(id));
                    report.shadowed.push(Shadowing {
                        target: a.target.clone(),
                        kept: id,
                        replaced: prev_id,
                    });
                }
            }
            self.statements.push(ProbabilityStatement {
                id,
                target: a.target,
                value: a.value,
                source: a.source,
                status,
                seq,
                note: a.note,
            });
            report.added.push(id);
        }
        Ok(report)
    }

    fn statement_mut(&mut self, id: u64) -> &mut ProbabilityStatement {
        self.statements
            .iter_mut()
            .find(|s| s.id == id)
            .expect("statement ids come from this store")
    }

    /// Writes a derived value, retiring whatever it supersedes. When the
    /// written state is not the reference state, a stated reference value for
    /// the same conditioning is retired too, since it is now a complement.
    pub(crate) fn write_derived(&mut self, dag: &Dag, target: Target, value: f64, action: u64, note: &str) {
        let target = target.normalized();
        let by = Status::Replaced(ReplacedBy::Action(action));
        if let Some(id) = self.active(&target).map(|s| s.id) {
            self.statement_mut(id).status = by;
        }
        if let Some(var) = dag.get(target.variable()) {
            let reference = var.reference_state();
            if target.state() != reference {
                let ref_target = target.with_state(reference);
                if let Some(id) = self.active(&ref_target).map(|s| s.id) {
                    self.statement_mut(id).status = by;
                }
            }
        }
        let id = self.next_id();
        let seq = self.tick();
        self.statements.push(ProbabilityStatement {
            id,
            target,
            value,
            source: Source::Reconciliation,
            status: Status::Active,
            seq,
            note: note.to_string(),
        });
    }

    pub(crate) fn push_log(&mut self, mut entry: AuditEntry) {
        entry.seq = self.tick();
        self.log.push(entry);
    }

    /// Full distribution of `var` from active marginal statements. One
    /// unstated state is filled by complement.
    pub fn marginal_distribution(&self, dag: &Dag, var: usize) -> Result<Vec<f64>, ElicitationError> {
        let v = dag.variable(var);
        let targets: Vec<Target> = v.states.iter().map(|s| Target::marginal(&v.id, s)).collect();
        self.distribution(targets)
    }

    /// Distribution of `child` given one assignment of conditioning variables
    /// (variable index, state index).
    pub fn conditional_distribution(
        &self,
        dag: &Dag,
        child: usize,
        given: &[(usize, usize)],
    ) -> Result<Vec<f64>, ElicitationError> {
        let v = dag.variable(child);
        let g: Vec<(&str, &str)> = given
            .iter()
            .map(|&(p, s)| {
                let pv = dag.variable(p);
                (pv.id.as_str(), pv.states[s].as_str())
            })
            .collect();
        let targets: Vec<Target> = v.states.iter().map(|s| Target::conditional(&v.id, s, &g)).collect();
        self.distribution(targets)
    }

    fn distribution(&self, targets: Vec<Target>) -> Result<Vec<f64>, ElicitationError> {
        let values: Vec<Option<f64>> = targets.iter().map(|t| self.value(t)).collect();
        let missing: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_none()).collect();
        let stated: f64 = values.iter().flatten().sum();
        match missing.len() {
            0 => {
                if (stated - 1.0).abs() > NORMALIZATION_SLACK {
                    return Err(ElicitationError::NotNormalized {
                        target: targets[0].clone(),
                        sum: stated,
                    });
                }
                Ok(values.into_iter().map(Option::unwrap).collect())
            }
            1 => {
                let rest = 1.0 - stated;
                if rest < -NORMALIZATION_SLACK {
                    return Err(ElicitationError::NotNormalized {
                        target: targets[missing[0]].clone(),
                        sum: stated,
                    });
                }
                Ok(values.into_iter().map(|v| v.unwrap_or(rest.max(0.0))).collect())
            }
            n => Err(ElicitationError::MissingStatement(
                missing[..n - 1].iter().map(|&i| targets[i].clone()).collect(),
            )),
        }
    }

    /// Combines per-expert stores (plus database values) into one store by
    /// re-ingesting their active statements in the given order.
    pub fn merged(
        dag: &Dag,
        kept: &[InteractionSpec],
        stores: &[&ElicitationStore],
    ) -> Result<ElicitationStore, ElicitationError> {
        let mut out = ElicitationStore::new();
        for store in stores {
            let answers = store
                .active_statements()
                .map(|s| Answer {
                    target: s.target.clone(),
                    value: s.value,
                    source: s.source.clone(),
                    note: s.note.clone(),
                })
                .collect();
            out.ingest(dag, kept, answers)?;
        }
        Ok(out)
    }

    /// The store as it was before any reconciliation action. Exact when all
    /// ingestion happened before the first action.
    pub fn rewind(&self) -> ElicitationStore {
        let mut statements: Vec<ProbabilityStatement> = self
            .statements
            .iter()
            .filter(|s| s.source != Source::Reconciliation)
            .cloned()
            .collect();
        for s in &mut statements {
            if let Status::Replaced(ReplacedBy::Action(_)) = s.status {
                s.status = Status::Active;
            }
        }
        let clock = statements.iter().map(|s| s.seq).max().unwrap_or(0);
        ElicitationStore {
            statements,
            log: Vec::new(),
            clock,
        }
    }

    /// Re-applies an audit log over a store.
    pub fn replay(mut self, dag: &Dag, log: &[AuditEntry]) -> Result<ElicitationStore, ElicitationError> {
        for entry in log {
            match entry.decision {
                Decision::Applied => self.apply(dag, entry.action.clone())?,
                Decision::Rejected => self.reject(entry.action.clone()),
            };
        }
        Ok(self)
    }
}

// Slack for hand-entered distributions that should sum to one.
const NORMALIZATION_SLACK: f64 = 1e-6;

fn validate_target(dag: &Dag, kept: &[InteractionSpec], target: &Target) -> Result<(), ElicitationError> {
    let bad = |reason: String| ElicitationError::UnknownTarget {
        target: target.clone(),
        reason,
    };
    let var = dag
        .index_of(target.variable())
        .ok_or_else(|| bad(format!("no variable {}", target.variable())))?;
    dag.state_index(var, target.state()).map_err(|e| bad(e.to_string()))?;
    let given = target.given();
    if let Target::Conditional { .. } = target {
        if given.is_empty() {
            return Err(bad("conditional without conditioning variables".into()));
        }
    }
    let parents = dag.parent_ids(var);
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for c in given {
        let p = dag
            .index_of(&c.variable)
            .ok_or_else(|| bad(format!("no variable {}", c.variable)))?;
        dag.state_index(p, &c.state).map_err(|e| bad(e.to_string()))?;
        if !parents.contains(&c.variable.as_str()) {
            return Err(bad(format!("{} is not a parent of {}", c.variable, target.variable())));
        }
        if seen.insert(c.variable.as_str(), ()).is_some() {
            return Err(bad(format!("{} conditioned twice", c.variable)));
        }
    }
    match given.len() {
        0 | 1 => Ok(()),
        2 => {
            let ok = kept.iter().any(|k| {
                k.child == target.variable()
                    && given.iter().all(|c| k.parents.contains(&c.variable))
            });
            if ok {
                Ok(())
            } else {
                Err(bad("second-order conditional without a kept interaction".into()))
            }
        }
        _ => Err(bad("conditionals above second order are not elicited".into())),
    }
}
