//! Full CPTs from marginals and first-order conditionals.
//!
//! Parents are taken to be conditionally independent given their child, so
//! P(s | a_1..a_n) ∝ ∏_i P(s | a_i) / P(s)^(n−1). Kept interactions replace
//! the two first-order factors of their pair by the elicited second-order
//! conditional.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elicitation::{ElicitationError, ElicitationStore};
use crate::factor::{eliminate, Factor};
use crate::graph::{Dag, Family, GraphError};
use crate::inference::{cpt_factor, InferenceError, Network};
use crate::loglinear::InteractionSpec;

// A raw weight above one by more than this is out of range.
const RAW_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Elicitation(#[from] ElicitationError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("P({variable}={state}) is zero but divides the row weights")]
    ZeroMarginal { variable: String, state: String },
    #[error("every weight of {variable} row {row} is zero")]
    DegenerateRow { variable: String, row: usize },
    #[error("the table of {missing} is needed before it has been synthesized")]
    PlanOrderViolation { missing: String },
    #[error("invalid kept interaction for {child}: {reason}")]
    InvalidInteraction { child: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    /// Weights divided by their sum; always a distribution.
    #[default]
    Normalized,
    /// Weights returned as they are; rows may not sum to one.
    Raw,
}

impl std::str::FromStr for SynthesisMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normalized" => Ok(SynthesisMode::Normalized),
            "raw" => Ok(SynthesisMode::Raw),
            other => Err(format!("unknown synthesis mode {other:?}")),
        }
    }
}

/// Rows follow the mixed-radix order of the parents, first parent slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cpt {
    pub child: String,
    pub parents: Vec<String>,
    #[serde(with = "crate::decimal::rows")]
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SynthesisMode>,
    /// Σ_s w(s) per row before normalisation.
    #[serde(default, skip_serializing_if = "Vec::is_empty", with = "crate::decimal::vec")]
    pub row_mass: Vec<f64>,
}

impl Cpt {
    /// A hand-specified table.
    pub fn given(child: &str, parents: &[&str], rows: Vec<Vec<f64>>) -> Cpt {
        Cpt {
            child: child.to_string(),
            parents: parents.iter().map(|p| p.to_string()).collect(),
            rows,
            mode: None,
            row_mass: Vec::new(),
        }
    }

    pub fn family(&self) -> Family {
        Family {
            child: self.child.clone(),
            parents: self.parents.clone(),
        }
    }

    /// Row selected by a full assignment (state index per variable).
    pub fn row_index(&self, dag: &Dag, var: usize, states: &[usize]) -> usize {
        dag.parents(var)
            .iter()
            .fold(0, |acc, &p| acc * dag.cardinality(p) + states[p])
    }
}

/// Parent states (family order) of a row index.
pub fn row_states(dag: &Dag, var: usize, mut row: usize) -> Vec<usize> {
    let parents = dag.parents(var);
    let mut out = vec![0; parents.len()];
    for (k, &p) in parents.iter().enumerate().rev() {
        let c = dag.cardinality(p);
        out[k] = row % c;
        row /= c;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSynthesis {
    pub distribution: Vec<f64>,
    pub raw_mass: f64,
    /// A raw weight exceeded one; the row was normalised instead.
    pub raw_out_of_range: bool,
}

// Conditioning groups of one child: kept pairs first, then single parents.
fn groups(dag: &Dag, child: usize, kept: &[InteractionSpec]) -> Result<Vec<Vec<usize>>, SynthesisError> {
    let id = &dag.variable(child).id;
    let parents = dag.parents(child);
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    let mut mine: Vec<&InteractionSpec> = kept.iter().filter(|k| &k.child == id).collect();
    mine.sort_by(|a, b| a.parents.cmp(&b.parents));
    for k in mine {
        let bad = |reason: &str| SynthesisError::InvalidInteraction {
            child: id.clone(),
            reason: reason.to_string(),
        };
        let pair: Vec<usize> = k
            .parents
            .iter()
            .map(|p| dag.index_of(p).filter(|i| parents.contains(i)))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("both variables must be parents"))?;
        if pair[0] == pair[1] {
            return Err(bad("the pair repeats a parent"));
        }
        if pair.iter().any(|p| used.contains(p)) {
            return Err(bad("a parent appears in two kept interactions"));
        }
        used.extend(pair.iter().copied());
        out.push(pair);
    }
    for &p in parents {
        if !used.contains(&p) {
            out.push(vec![p]);
        }
    }
    Ok(out)
}

/// One CPT row for the given parent states (family order).
pub fn synthesize_row(
    dag: &Dag,
    store: &ElicitationStore,
    kept: &[InteractionSpec],
    child: usize,
    parent_states: &[usize],
    mode: SynthesisMode,
) -> Result<RowSynthesis, SynthesisError> {
    let parents = dag.parents(child);
    let state_of = |p: usize| parent_states[parents.iter().position(|&q| q == p).unwrap()];
    let groups = groups(dag, child, kept)?;
    if groups.is_empty() {
        let d = store.marginal_distribution(dag, child)?;
        return Ok(RowSynthesis {
            distribution: d,
            raw_mass: 1.0,
            raw_out_of_range: false,
        });
    }
    let conditionals: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let given: Vec<(usize, usize)> = g.iter().map(|&p| (p, state_of(p))).collect();
            store.conditional_distribution(dag, child, &given)
        })
        .collect::<Result<_, _>>()?;
    if conditionals.len() == 1 {
        let d = conditionals.into_iter().next().unwrap();
        let mass = d.iter().sum();
        return Ok(RowSynthesis {
            distribution: d,
            raw_mass: mass,
            raw_out_of_range: false,
        });
    }
    let marginal = store.marginal_distribution(dag, child)?;
    let n = conditionals.len() as i32;
    let var = dag.variable(child);
    let mut w = Vec::with_capacity(marginal.len());
    for (s, &m) in marginal.iter().enumerate() {
        let num: f64 = conditionals.iter().map(|c| c[s]).product();
        if m == 0.0 {
            return Err(SynthesisError::ZeroMarginal {
                variable: var.id.clone(),
                state: var.states[s].clone(),
            });
        }
        w.push(num / m.powi(n - 1));
    }
    let mass: f64 = w.iter().sum();
    let out_of_range = w.iter().any(|&x| x > 1.0 + RAW_EPS);
    if mode == SynthesisMode::Raw && !out_of_range {
        return Ok(RowSynthesis {
            distribution: w.into_iter().map(|x| x.min(1.0)).collect(),
            raw_mass: mass,
            raw_out_of_range: false,
        });
    }
    if mass <= 0.0 {
        return Err(SynthesisError::DegenerateRow {
            variable: var.id.clone(),
            row: 0,
        });
    }
    Ok(RowSynthesis {
        distribution: w.iter().map(|x| x / mass).collect(),
        raw_mass: mass,
        raw_out_of_range: mode == SynthesisMode::Raw && out_of_range,
    })
}

/// Exact joint of `parents` (in the given order) from the tables of their
/// ancestors, rows in mixed-radix order with the first parent slowest.
pub fn parent_joint(dag: &Dag, cpts: &[Option<Cpt>], parents: &[usize]) -> Result<Vec<f64>, SynthesisError> {
    if parents.is_empty() {
        return Ok(vec![1.0]);
    }
    let mut relevant = dag.ancestors(parents);
    relevant.extend(parents.iter().copied());
    let factors: Vec<Factor> = relevant
        .iter()
        .map(|&i| {
            cpts[i]
                .as_ref()
                .map(|c| cpt_factor(dag, i, c))
                .ok_or_else(|| SynthesisError::PlanOrderViolation {
                    missing: dag.variable(i).id.clone(),
                })
        })
        .collect::<Result<_, _>>()?;
    let keep: BTreeSet<usize> = parents.iter().copied().collect();
    let (f, _) = eliminate(factors, &keep, |i| dag.variable(i).id.clone());
    let cards: Vec<usize> = parents.iter().map(|&p| dag.cardinality(p)).collect();
    let size: usize = cards.iter().product();
    let mut out = Vec::with_capacity(size);
    let mut idx = vec![0usize; parents.len()];
    for _ in 0..size {
        // factor variables are sorted by index
        let sorted: Vec<usize> = f
            .vars()
            .iter()
            .map(|v| idx[parents.iter().position(|p| p == v).unwrap()])
            .collect();
        out.push(f.get(&sorted));
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < cards[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub variable: String,
    pub depth: usize,
    /// Parents read through first-order conditionals.
    pub first_order: Vec<String>,
    /// Parent pairs read through second-order conditionals.
    pub second_order: Vec<[String; 2]>,
    /// Tables needed for the parent-set joint.
    pub joint_from: Vec<String>,
}

/// Nodes from the roots down; every node only reads tables of earlier nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub nodes: Vec<PlanNode>,
}

impl SynthesisPlan {
    pub fn new(dag: &Dag, kept: &[InteractionSpec]) -> Result<SynthesisPlan, SynthesisError> {
        let depths = dag.depths();
        let mut nodes = Vec::with_capacity(dag.len());
        for i in dag.topological_order() {
            let mut first_order = Vec::new();
            let mut second_order = Vec::new();
            for g in groups(dag, i, kept)? {
                match g.as_slice() {
                    [p] => first_order.push(dag.variable(*p).id.clone()),
                    [a, b] => second_order.push([dag.variable(*a).id.clone(), dag.variable(*b).id.clone()]),
                    _ => unreachable!(),
                }
            }
            let parents = dag.parents(i).to_vec();
            let mut rel = dag.ancestors(&parents);
            rel.extend(parents);
            nodes.push(PlanNode {
                variable: dag.variable(i).id.clone(),
                depth: depths[i],
                first_order,
                second_order,
                joint_from: rel.into_iter().map(|j| dag.variable(j).id.clone()).collect(),
            });
        }
        Ok(SynthesisPlan { nodes })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub variable: String,
    /// max over rows of |Σ_s w(s) − 1|.
    #[serde(with = "crate::decimal")]
    pub max_mass_deviation: f64,
    /// Rows whose raw weights exceeded one (Raw mode only).
    pub raw_out_of_range_rows: Vec<usize>,
    #[serde(with = "crate::decimal::vec")]
    pub implied_marginal: Vec<f64>,
    #[serde(with = "crate::decimal::vec")]
    pub stated_marginal: Vec<f64>,
    /// max_s |implied − stated|.
    #[serde(with = "crate::decimal")]
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub network: Network,
    pub plan: SynthesisPlan,
    pub diagnostics: Vec<NodeDiagnostics>,
}

impl Synthesis {
    pub fn diagnostics_for(&self, id: &str) -> Option<&NodeDiagnostics> {
        self.diagnostics.iter().find(|d| d.variable == id)
    }
}

/// One table for `child`.
pub fn synthesize_cpt(
    dag: &Dag,
    store: &ElicitationStore,
    kept: &[InteractionSpec],
    child: usize,
    mode: SynthesisMode,
) -> Result<(Cpt, Vec<usize>), SynthesisError> {
    let rows: usize = dag.parents(child).iter().map(|&p| dag.cardinality(p)).product();
    let mut table = Vec::with_capacity(rows);
    let mut masses = Vec::with_capacity(rows);
    let mut flagged = Vec::new();
    for r in 0..rows {
        let states = row_states(dag, child, r);
        let row = synthesize_row(dag, store, kept, child, &states, mode).map_err(|e| match e {
            SynthesisError::DegenerateRow { variable, .. } => SynthesisError::DegenerateRow { variable, row: r },
            other => other,
        })?;
        if row.raw_out_of_range {
            flagged.push(r);
        }
        masses.push(row.raw_mass);
        table.push(row.distribution);
    }
    let cpt = Cpt {
        child: dag.variable(child).id.clone(),
        parents: dag.parent_ids(child).into_iter().map(String::from).collect(),
        rows: table,
        mode: Some(mode),
        row_mass: masses,
    };
    Ok((cpt, flagged))
}

/// Synthesizes every table, then measures how far the resulting network's
/// marginals drift from the stated ones.
pub fn synthesize_network(
    dag: &Dag,
    store: &ElicitationStore,
    kept: &[InteractionSpec],
    mode: SynthesisMode,
) -> Result<Synthesis, SynthesisError> {
    let plan = SynthesisPlan::new(dag, kept)?;
    // rows only read elicited values, so tables are independent of each other
    let built: Vec<(Cpt, Vec<usize>)> = (0..dag.len())
        .into_par_iter()
        .map(|i| synthesize_cpt(dag, store, kept, i, mode))
        .collect::<Result<_, _>>()?;
    let mut available: Vec<Option<Cpt>> = vec![None; dag.len()];
    let mut diagnostics = Vec::with_capacity(dag.len());
    for node in &plan.nodes {
        let i = dag.index_of(&node.variable).unwrap();
        let (cpt, flagged) = &built[i];
        let joint = parent_joint(dag, &available, dag.parents(i))?;
        let card = dag.cardinality(i);
        let implied: Vec<f64> = (0..card)
            .map(|s| joint.iter().zip(&cpt.rows).map(|(j, row)| j * row[s]).sum())
            .collect();
        let stated = store.marginal_distribution(dag, i)?;
        let drift = implied
            .iter()
            .zip(&stated)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        diagnostics.push(NodeDiagnostics {
            variable: node.variable.clone(),
            max_mass_deviation: cpt.row_mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max),
            raw_out_of_range_rows: flagged.clone(),
            implied_marginal: implied,
            stated_marginal: stated,
            drift,
        });
        available[i] = Some(cpt.clone());
    }
    let cpts = built.into_iter().map(|(c, _)| c).collect();
    let network = Network::new(dag.clone(), cpts)?;
    Ok(Synthesis {
        network,
        plan,
        diagnostics,
    })
}
