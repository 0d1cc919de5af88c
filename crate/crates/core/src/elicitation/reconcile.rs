//! Rule-driven edits that restore the marginal/conditional identity.
//!
//! Every operation here only *proposes* a [`ReconciliationAction`]; the store
//! changes through [`ElicitationStore::apply`] alone, which is also what the
//! audit replay calls.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::consistency::{check_pair, mark_cross_hulls, read_pair, HullStatus, Pair, PairCheck};
use super::{ElicitationError, ElicitationStore, Target};
use crate::graph::Dag;

/// Rescaled conditionals never exceed this value.
pub const CAP: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Largest weight among conditionals that differ significantly from the
    /// marginal; largest weight overall when none does.
    #[default]
    Strict,
    /// Largest weight regardless of deviation.
    Heaviest,
}

impl std::str::FromStr for SelectionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(SelectionMode::Strict),
            "heaviest" => Ok(SelectionMode::Heaviest),
            other => Err(format!("unknown selection mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconcileConfig {
    #[serde(with = "crate::decimal")]
    pub tolerance: f64,
    #[serde(with = "crate::decimal")]
    pub significance: f64,
    pub mode: SelectionMode,
}

impl Default for ReconcileConfig {
    fn default() -> Self {
        ReconcileConfig {
            tolerance: 0.05,
            significance: 0.02,
            mode: SelectionMode::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCitation {
    /// Keep the marginal, recompute a conditional.
    KeepMarginal,
    /// Recompute the conditional carrying the largest weight.
    LargestWeight,
    /// Ratio-preserving rescaling.
    LinearProgram,
    /// Replace the marginal by a per-parent candidate inside the other hulls.
    ConvexHull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionKind {
    ReplaceConditional {
        child: String,
        state: String,
        parent: String,
        parent_state: String,
        #[serde(with = "crate::decimal")]
        old: f64,
        #[serde(with = "crate::decimal")]
        new: f64,
    },
    RescaleRatios {
        child: String,
        state: String,
        parent: String,
        #[serde(with = "crate::decimal")]
        scale: f64,
        #[serde(with = "crate::decimal::vec")]
        old: Vec<f64>,
        #[serde(with = "crate::decimal::vec")]
        new: Vec<f64>,
        /// The cap on conditionals bound the scale; needs human review.
        cap_bound: bool,
    },
    ReplaceMarginal {
        variable: String,
        state: String,
        #[serde(with = "crate::decimal")]
        old: f64,
        #[serde(with = "crate::decimal")]
        new: f64,
        donor_parent: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconciliationAction {
    pub id: u64,
    pub kind: ActionKind,
    pub rule: RuleCitation,
    pub rationale: String,
    #[serde(with = "crate::decimal")]
    pub residual_before: f64,
    #[serde(with = "crate::decimal")]
    pub residual_after: f64,
    /// Store revision the action was computed against.
    pub base_revision: u64,
}

impl fmt::Display for ReconciliationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ActionKind::ReplaceConditional { child, state, parent, parent_state, old, new } => write!(
                f,
                "#{} replace P({child}={state} | {parent}={parent_state}): {old} -> {new}",
                self.id
            ),
            ActionKind::RescaleRatios { child, state, parent, scale, new, cap_bound, .. } => write!(
                f,
                "#{} rescale P({child}={state} | {parent}) by x={scale:.6} -> {:?}{}",
                self.id,
                new,
                if *cap_bound { " [cap bound]" } else { "" }
            ),
            ActionKind::ReplaceMarginal { variable, state, old, new, donor_parent } => write!(
                f,
                "#{} replace P({variable}={state}): {old} -> {new} (computed through {donor_parent})",
                self.id
            ),
        }?;
        write!(f, " [{:?}] residual {:.6} -> {:.6}", self.rule, self.residual_before, self.residual_after)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Applied,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub seq: u64,
    pub decision: Decision,
    pub action: ReconciliationAction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixOutcome {
    Action(ReconciliationAction),
    /// The recomputed conditional leaves [0, 1]; nothing may be stored.
    Infeasible { parent_state: String, raw: f64 },
}

impl ElicitationStore {
    pub fn next_action_id(&self) -> u64 {
        self.audit_log().len() as u64 + 1
    }

    /// Applies a proposed action. Rejects stale ids and values outside [0, 1].
    pub fn apply(&mut self, dag: &Dag, action: ReconciliationAction) -> Result<(), ElicitationError> {
        if action.id != self.next_action_id() {
            return Err(ElicitationError::InvalidAction(format!(
                "action id {} but next id is {}",
                action.id,
                self.next_action_id()
            )));
        }
        let writes = self.planned_writes(dag, &action.kind)?;
        for (target, value) in &writes {
            super::validate_target(dag, &[], target).map_err(|e| ElicitationError::InvalidAction(e.to_string()))?;
            if !(0.0..=1.0).contains(value) {
                return Err(ElicitationError::InvalidAction(format!("{target} = {value}")));
            }
        }
        // complements must stay non-negative
        let mut trial = self.clone();
        for (target, value) in &writes {
            trial.write_derived(dag, target.clone(), *value, action.id, "");
        }
        for (target, _) in &writes {
            let v = dag.require(target.variable()).map_err(|e| ElicitationError::InvalidAction(e.to_string()))?;
            let given: Vec<(usize, usize)> = target
                .given()
                .iter()
                .map(|c| {
                    let p = dag.index_of(&c.variable).unwrap();
                    (p, dag.variable(p).state_index(&c.state).unwrap())
                })
                .collect();
            let dist = if given.is_empty() {
                trial.marginal_distribution(dag, v)
            } else {
                trial.conditional_distribution(dag, v, &given)
            };
            if let Err(e @ ElicitationError::NotNormalized { .. }) = dist {
                return Err(ElicitationError::InvalidAction(e.to_string()));
            }
        }
        let note = format!("action {} ({:?})", action.id, action.rule);
        for (target, value) in writes {
            self.write_derived(dag, target, value, action.id, &note);
        }
        self.push_log(AuditEntry {
            seq: 0,
            decision: Decision::Applied,
            action,
        });
        Ok(())
    }

    /// Records a declined proposal in the audit log.
    pub fn reject(&mut self, action: ReconciliationAction) {
        self.push_log(AuditEntry {
            seq: 0,
            decision: Decision::Rejected,
            action,
        });
    }

    fn planned_writes(&self, dag: &Dag, kind: &ActionKind) -> Result<Vec<(Target, f64)>, ElicitationError> {
        Ok(match kind {
            ActionKind::ReplaceConditional { child, state, parent, parent_state, new, .. } => {
                vec![(Target::conditional(child, state, &[(parent, parent_state)]), *new)]
            }
            ActionKind::RescaleRatios { child, state, parent, new, .. } => {
                let p = dag
                    .get(parent)
                    .ok_or_else(|| ElicitationError::UnknownPair(format!("{child}/{parent}")))?;
                if p.states.len() != new.len() {
                    return Err(ElicitationError::InvalidAction("rescaled vector has the wrong length".into()));
                }
                p.states
                    .iter()
                    .zip(new)
                    .map(|(ps, v)| (Target::conditional(child, state, &[(parent, ps)]), *v))
                    .collect()
            }
            ActionKind::ReplaceMarginal { variable, state, new, .. } => {
                vec![(Target::marginal(variable, state), *new)]
            }
        })
    }
}

/// Recomputes P(child | parent = target) so that the marginal identity holds
/// exactly, keeping every other value.
pub fn fix_by_single_conditional(
    store: &ElicitationStore,
    dag: &Dag,
    pair: &Pair,
    target_state: &str,
) -> Result<FixOutcome, ElicitationError> {
    let inputs = read_pair(store, dag, pair)?;
    let t = inputs
        .parent_states
        .iter()
        .position(|s| s == target_state)
        .ok_or_else(|| ElicitationError::UnknownPair(format!("{pair} state {target_state}")))?;
    let weight = inputs.weights[t];
    if weight == 0.0 {
        return Err(ElicitationError::ZeroWeight {
            parent: pair.parent.clone(),
            state: target_state.to_string(),
        });
    }
    let others: f64 = (0..inputs.weights.len())
        .filter(|&i| i != t)
        .map(|i| inputs.conditionals[i] * inputs.weights[i])
        .sum();
    let raw = (inputs.stated - others) / weight;
    if !(0.0..=1.0).contains(&raw) || raw + inputs.sibling_mass[t] > 1.0 {
        return Ok(FixOutcome::Infeasible {
            parent_state: target_state.to_string(),
            raw,
        });
    }
    let old = inputs.conditionals[t];
    let after = (others + raw * weight - inputs.stated).abs();
    Ok(FixOutcome::Action(ReconciliationAction {
        id: store.next_action_id(),
        kind: ActionKind::ReplaceConditional {
            child: pair.child.clone(),
            state: pair.state.clone(),
            parent: pair.parent.clone(),
            parent_state: target_state.to_string(),
            old,
            new: raw,
        },
        rule: RuleCitation::KeepMarginal,
        rationale: format!(
            "P({}={}) kept; P({}={} | {}={}) recomputed from the marginal identity",
            pair.child, pair.state, pair.child, pair.state, pair.parent, target_state
        ),
        residual_before: (inputs.computed() - inputs.stated).abs(),
        residual_after: after,
        base_revision: store.revision(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSuggestion {
    pub parent_state: String,
    #[serde(with = "crate::decimal")]
    pub weight: f64,
    #[serde(with = "crate::decimal")]
    pub deviation: f64,
    /// False when no candidate passed the significance filter.
    pub significant: bool,
    pub rationale: String,
}

/// Picks which conditional to recompute. Database-sourced conditionals are
/// never candidates; returns `None` when all of them are.
pub fn suggest_target(
    store: &ElicitationStore,
    dag: &Dag,
    pair: &Pair,
    mode: SelectionMode,
    significance: f64,
) -> Result<Option<TargetSuggestion>, ElicitationError> {
    let inputs = read_pair(store, dag, pair)?;
    let candidates: Vec<usize> = (0..inputs.parent_states.len())
        .filter(|&i| !store.is_locked(&pair.conditional_target(&inputs.parent_states[i])))
        .collect();
    let deviation = |i: usize| (inputs.conditionals[i] - inputs.stated).abs();
    // first index of maximum weight keeps ties in state order
    let heaviest = |set: &[usize]| -> Option<usize> {
        set.iter().copied().fold(None, |best, i| match best {
            Some(b) if inputs.weights[b] >= inputs.weights[i] => Some(b),
            _ => Some(i),
        })
    };
    let (choice, significant) = match mode {
        SelectionMode::Heaviest => (heaviest(&candidates), true),
        SelectionMode::Strict => {
            let sig: Vec<usize> = candidates.iter().copied().filter(|&i| deviation(i) > significance).collect();
            match heaviest(&sig) {
                Some(i) => (Some(i), true),
                None => (heaviest(&candidates), false),
            }
        }
    };
    Ok(choice.map(|i| {
        let rationale = match (mode, significant) {
            (SelectionMode::Heaviest, _) => format!(
                "largest weight P({}={})={}",
                pair.parent, inputs.parent_states[i], inputs.weights[i]
            ),
            (SelectionMode::Strict, true) => format!(
                "largest weight P({}={})={} among conditionals deviating from P({}={})={} by more than {}",
                pair.parent, inputs.parent_states[i], inputs.weights[i], pair.child, pair.state, inputs.stated, significance
            ),
            (SelectionMode::Strict, false) => format!(
                "no conditional deviates by more than {significance}; falling back to largest weight P({}={})={}",
                pair.parent, inputs.parent_states[i], inputs.weights[i]
            ),
        };
        TargetSuggestion {
            parent_state: inputs.parent_states[i].clone(),
            weight: inputs.weights[i],
            deviation: deviation(i),
            significant,
            rationale,
        }
    }))
}

/// Scales every conditional of the pair by one factor `x`, keeping their
/// mutual ratios, to minimise |P(child) − x Σ k_i P(parent=i)|.
pub fn rescale_preserving_ratios(
    store: &ElicitationStore,
    dag: &Dag,
    pair: &Pair,
) -> Result<ReconciliationAction, ElicitationError> {
    let inputs = read_pair(store, dag, pair)?;
    let k = &inputs.conditionals;
    let weighted = inputs.computed();
    if k.iter().all(|&v| v == 0.0) || weighted == 0.0 {
        return Err(ElicitationError::DegenerateRatios {
            child: pair.child.clone(),
            parent: pair.parent.clone(),
        });
    }
    let upper = k
        .iter()
        .zip(&inputs.sibling_mass)
        .filter(|(&ki, _)| ki > 0.0)
        .map(|(&ki, &sib)| ((CAP - sib).max(0.0)) / ki)
        .fold(f64::INFINITY, f64::min);
    let unclamped = inputs.stated / weighted;
    let scale = unclamped.clamp(0.0, upper);
    let cap_bound = unclamped > upper;
    let new: Vec<f64> = k.iter().map(|&ki| ki * scale).collect();
    Ok(ReconciliationAction {
        id: store.next_action_id(),
        kind: ActionKind::RescaleRatios {
            child: pair.child.clone(),
            state: pair.state.clone(),
            parent: pair.parent.clone(),
            scale,
            old: k.clone(),
            new,
            cap_bound,
        },
        rule: RuleCitation::LinearProgram,
        rationale: if cap_bound {
            format!("ratios kept; scale capped at {upper} so no conditional exceeds {CAP}")
        } else {
            "ratios kept; scale solves the marginal identity exactly".to_string()
        },
        residual_before: (weighted - inputs.stated).abs(),
        residual_after: (inputs.stated - scale * weighted).abs(),
        base_revision: store.revision(),
    })
}

/// Replaces the child marginal by the per-parent computed marginal that lies
/// inside every other parent's conditional hull.
pub fn replace_marginal(
    store: &ElicitationStore,
    dag: &Dag,
    child: &str,
    state: &str,
) -> Result<ReconciliationAction, ElicitationError> {
    let c = dag
        .index_of(child)
        .ok_or_else(|| ElicitationError::UnknownPair(child.to_string()))?;
    let mut parents = dag.parent_ids(c);
    if parents.len() < 2 {
        return Err(ElicitationError::InsufficientParents(child.to_string()));
    }
    parents.sort();
    let mut checks: Vec<PairCheck> = parents
        .iter()
        .map(|p| check_pair(store, dag, &Pair::with_state(dag, child, p, state)?, f64::INFINITY))
        .collect::<Result<_, _>>()?;
    mark_cross_hulls(&mut checks);
    let stated = checks[0].stated;
    let donor = checks
        .iter()
        .filter(|ch| ch.candidate_excluded_by.is_empty())
        .min_by(|a, b| {
            (a.computed - stated)
                .abs()
                .partial_cmp(&(b.computed - stated).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .ok_or_else(|| ElicitationError::NoFeasibleCandidate(child.to_string()))?;
    let new = donor.computed;
    let before = checks.iter().map(|ch| ch.residual).fold(0.0, f64::max);
    let after = checks.iter().map(|ch| (ch.computed - new).abs()).fold(0.0, f64::max);
    let candidates: Vec<String> = checks
        .iter()
        .map(|ch| format!("{}: {}", ch.pair.parent, ch.computed))
        .collect();
    Ok(ReconciliationAction {
        id: store.next_action_id(),
        kind: ActionKind::ReplaceMarginal {
            variable: child.to_string(),
            state: state.to_string(),
            old: stated,
            new,
            donor_parent: donor.pair.parent.clone(),
        },
        rule: RuleCitation::ConvexHull,
        rationale: format!(
            "candidates [{}]; the value computed through {} lies inside every other parent's hull",
            candidates.join(", "),
            donor.pair.parent
        ),
        residual_before: before,
        residual_after: after,
        base_revision: store.revision(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconcileWarning {
    pub pair: Option<Pair>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_decimal")]
    pub raw: Option<f64>,
}

mod opt_decimal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => crate::decimal::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<crate::decimal::Decimal>::deserialize(d)?.map(|x| x.0))
    }
}

const MAX_PASSES: usize = 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconcileOutcome {
    pub actions: Vec<ReconciliationAction>,
    pub warnings: Vec<ReconcileWarning>,
}

/// Runs the deterministic cascade over every child, applying each action:
/// database values are never edited; a marginal on or outside a hull is
/// replaced first; inconsistent pairs then get a single-conditional fix on
/// the suggested state, with ratio-preserving rescaling as fallback.
pub fn reconcile(
    store: &mut ElicitationStore,
    dag: &Dag,
    config: &ReconcileConfig,
) -> Result<ReconcileOutcome, ElicitationError> {
    let mut out = ReconcileOutcome::default();
    for c in dag.topological_order() {
        let var = dag.variable(c).clone();
        let mut parents: Vec<String> = dag.parent_ids(c).into_iter().map(String::from).collect();
        if parents.is_empty() {
            continue;
        }
        parents.sort();
        for state in &var.states[..var.states.len() - 1] {
            // A conditional fix can widen a hull enough to make a marginal
            // replacement feasible, so repeat until a pass changes nothing.
            let pairs: Vec<Pair> = parents
                .iter()
                .map(|p| Pair::with_state(dag, &var.id, p, state))
                .collect::<Result<_, _>>()?;
            let mut warnings = Vec::new();
            for _ in 0..MAX_PASSES {
                let mut pass = ReconcileOutcome::default();
                let mut complete = Vec::new();
                for pair in pairs.iter().cloned() {
                    match check_pair(store, dag, &pair, config.tolerance) {
                        Ok(ch) => complete.push(ch),
                        Err(ElicitationError::MissingStatement(m)) => pass.warnings.push(ReconcileWarning {
                            message: format!("skipped: {} statement(s) missing", m.len()),
                            pair: Some(pair),
                            raw: None,
                        }),
                        Err(e) => return Err(e),
                    }
                }
                if complete.is_empty() {
                    warnings.append(&mut pass.warnings);
                    break;
                }
                let marginal = Target::marginal(&var.id, state);
                let hull_problem = complete.iter().any(|ch| ch.hull_status != HullStatus::Inside);
                if complete.len() >= 2 && complete.len() == parents.len() && hull_problem {
                    if store.is_locked(&marginal) {
                        pass.warnings.push(ReconcileWarning {
                            pair: None,
                            message: format!("{marginal} lies on or outside a hull but comes from a database"),
                            raw: None,
                        });
                    } else {
                        match replace_marginal(store, dag, &var.id, state) {
                            Ok(action) => {
                                store.apply(dag, action.clone())?;
                                pass.actions.push(action);
                            }
                            Err(ElicitationError::NoFeasibleCandidate(_)) => pass.warnings.push(ReconcileWarning {
                                pair: None,
                                message: format!("no feasible replacement for {marginal}"),
                                raw: None,
                            }),
                            Err(e) => return Err(e),
                        }
                    }
                }
                for ch in complete {
                    let pair = ch.pair;
                    let now = check_pair(store, dag, &pair, config.tolerance)?;
                    if !now.inconsistent {
                        continue;
                    }
                    fix_pair(store, dag, &pair, config, &mut pass)?;
                }
                for w in pass.warnings {
                    if !warnings.contains(&w) {
                        warnings.push(w);
                    }
                }
                let settled = pass.actions.is_empty();
                out.actions.append(&mut pass.actions);
                if settled {
                    break;
                }
            }
            out.warnings.append(&mut warnings);
        }
    }
    Ok(out)
}

fn fix_pair(
    store: &mut ElicitationStore,
    dag: &Dag,
    pair: &Pair,
    config: &ReconcileConfig,
    out: &mut ReconcileOutcome,
) -> Result<(), ElicitationError> {
    if let Some(s) = suggest_target(store, dag, pair, config.mode, config.significance)? {
        match fix_by_single_conditional(store, dag, pair, &s.parent_state) {
            Ok(FixOutcome::Action(mut action)) => {
                action.rule = RuleCitation::LargestWeight;
                action.rationale = format!("{}; {}", s.rationale, action.rationale);
                store.apply(dag, action.clone())?;
                out.actions.push(action);
                return Ok(());
            }
            Ok(FixOutcome::Infeasible { parent_state, raw }) => out.warnings.push(ReconcileWarning {
                pair: Some(pair.clone()),
                message: format!("recomputing the conditional at {}={parent_state} gives {raw}, outside [0, 1]", pair.parent),
                raw: Some(raw),
            }),
            Err(ElicitationError::ZeroWeight { .. }) => {}
            Err(e) => return Err(e),
        }
    } else {
        out.warnings.push(ReconcileWarning {
            pair: Some(pair.clone()),
            message: "every conditional comes from a database".into(),
            raw: None,
        });
        return Ok(());
    }
    let inputs = read_pair(store, dag, pair)?;
    if inputs
        .parent_states
        .iter()
        .any(|ps| store.is_locked(&pair.conditional_target(ps)))
    {
        out.warnings.push(ReconcileWarning {
            pair: Some(pair.clone()),
            message: "rescaling skipped: some conditionals come from a database".into(),
            raw: None,
        });
        return Ok(());
    }
    match rescale_preserving_ratios(store, dag, pair) {
        Ok(action) => {
            store.apply(dag, action.clone())?;
            out.actions.push(action);
        }
        Err(ElicitationError::DegenerateRatios { .. }) => out.warnings.push(ReconcileWarning {
            pair: Some(pair.clone()),
            message: "rescaling impossible: all conditionals are zero".into(),
            raw: None,
        }),
        Err(e) => return Err(e),
    }
    Ok(())
}
