//! Discrete variables and the directed acyclic graph that links them.
//!
//! A [`Dag`] is immutable once validated. Variable order is the order given at
//! construction and parent order is the order in which edges were declared;
//! both define table axes everywhere downstream.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("directed cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("edge {from} -> {to} references an unknown variable")]
    UnknownEndpoint { from: String, to: String },
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String },
    #[error("self-loop on {0}")]
    SelfLoop(String),
    #[error("duplicate variable id {0}")]
    DuplicateVariable(String),
    #[error("variable {variable} has duplicate state label {state}")]
    DuplicateState { variable: String, state: String },
    #[error("variable {variable} has {count} state(s), at least 2 are required")]
    TooFewStates { variable: String, count: usize },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("variable {variable} has no state {state}")]
    UnknownState { variable: String, state: String },
}

/// A discrete variable with an ordered, finite set of exclusive states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub id: String,
    pub states: Vec<String>,
    #[serde(default)]
    pub description: String,
    /// Optional role tag (environment, degradation, observation, interest).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl Variable {
    pub fn new<S: Into<String>>(id: S, states: &[&str]) -> Self {
        Variable {
            id: id.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
            description: String::new(),
            group: None,
        }
    }

    pub fn with_description<S: Into<String>>(mut self, description: S) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_group<S: Into<String>>(mut self, group: S) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }

    /// The state whose probability is obtained by complement when eliciting.
    pub fn reference_state(&self) -> &str {
        self.states.last().map(String::as_str).unwrap_or("")
    }

    fn label(&self) -> &str {
        if self.description.is_empty() {
            &self.id
        } else {
            &self.description
        }
    }

    pub(crate) fn display_name(&self) -> &str {
        self.label()
    }

    fn check(&self) -> Result<(), GraphError> {
        if self.states.len() < 2 {
            return Err(GraphError::TooFewStates {
                variable: self.id.clone(),
                count: self.states.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for s in &self.states {
            if !seen.insert(s.as_str()) {
                return Err(GraphError::DuplicateState {
                    variable: self.id.clone(),
                    state: s.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A child together with its complete, ordered parent set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Family {
    pub child: String,
    pub parents: Vec<String>,
}

impl Family {
    pub fn members(&self) -> BTreeSet<String> {
        let mut m: BTreeSet<String> = self.parents.iter().cloned().collect();
        m.insert(self.child.clone());
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    variables: Vec<Variable>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    /// Validates variables and edges, rejecting self-loops, dangling
    /// endpoints, duplicates and directed cycles.
    pub fn new(variables: Vec<Variable>, edges: &[(String, String)]) -> Result<Dag, GraphError> {
        let mut index = HashMap::with_capacity(variables.len());
        for (i, v) in variables.iter().enumerate() {
            v.check()?;
            if index.insert(v.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateVariable(v.id.clone()));
            }
        }
        let n = variables.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (from, to) in edges {
            if from == to {
                return Err(GraphError::SelfLoop(from.clone()));
            }
            let (Some(&f), Some(&t)) = (index.get(from), index.get(to)) else {
                return Err(GraphError::UnknownEndpoint {
                    from: from.clone(),
                    to: to.clone(),
                });
            };
            if parents[t].contains(&f) {
                return Err(GraphError::DuplicateEdge {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
            parents[t].push(f);
            children[f].push(t);
            idx_edges.push((f, t));
        }
        let dag = Dag {
            variables,
            index,
            edges: idx_edges,
            parents,
            children,
        };
        if let Some(cycle) = dag.find_cycle() {
            return Err(GraphError::CycleDetected(
                cycle.into_iter().map(|i| dag.variables[i].id.clone()).collect(),
            ));
        }
        Ok(dag)
    }

    /// Convenience constructor from string slices.
    pub fn from_edges(variables: Vec<Variable>, edges: &[(&str, &str)]) -> Result<Dag, GraphError> {
        let owned: Vec<(String, String)> = edges
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        Dag::new(variables, &owned)
    }

    // Iterative DFS; returns the cycle as a closed path [a, ..., a].
    fn find_cycle(&self) -> Option<Vec<usize>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        let n = self.variables.len();
        let mut mark = vec![Mark::White; n];
        // visit roots in id order so the reported cycle is reproducible
        let mut starts: Vec<usize> = (0..n).collect();
        starts.sort_by(|&a, &b| self.variables[a].id.cmp(&self.variables[b].id));
        for start in starts {
            if mark[start] != Mark::White {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
            mark[start] = Mark::Grey;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if *next < self.children[node].len() {
                    let child = self.children[node][*next];
                    *next += 1;
                    match mark[child] {
                        Mark::White => {
                            mark[child] = Mark::Grey;
                            stack.push((child, 0));
                        }
                        Mark::Grey => {
                            let pos = stack.iter().position(|&(v, _)| v == child).unwrap();
                            let mut cycle: Vec<usize> = stack[pos..].iter().map(|&(v, _)| v).collect();
                            cycle.push(child);
                            return Some(cycle);
                        }
                        Mark::Black => {}
                    }
                } else {
                    mark[node] = Mark::Black;
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, idx: usize) -> &Variable {
        &self.variables[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize, GraphError> {
        self.index_of(id)
            .ok_or_else(|| GraphError::UnknownVariable(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Option<&Variable> {
        self.index_of(id).map(|i| &self.variables[i])
    }

    pub fn state_index(&self, var: usize, state: &str) -> Result<usize, GraphError> {
        self.variables[var]
            .state_index(state)
            .ok_or_else(|| GraphError::UnknownState {
                variable: self.variables[var].id.clone(),
                state: state.to_string(),
            })
    }

    pub fn cardinality(&self, idx: usize) -> usize {
        self.variables[idx].cardinality()
    }

    pub fn parents(&self, idx: usize) -> &[usize] {
        &self.parents[idx]
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    pub fn parent_ids(&self, idx: usize) -> Vec<&str> {
        self.parents[idx]
            .iter()
            .map(|&p| self.variables[p].id.as_str())
            .collect()
    }

    pub fn is_root(&self, idx: usize) -> bool {
        self.parents[idx].is_empty()
    }

    /// Edges as (source id, target id) in declaration order.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(f, t)| (self.variables[f].id.clone(), self.variables[t].id.clone()))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn family(&self, idx: usize) -> Family {
        Family {
            child: self.variables[idx].id.clone(),
            parents: self.parent_ids(idx).into_iter().map(String::from).collect(),
        }
    }

    /// Longest directed path from any root to each node.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.len()];
        for v in self.topological_indices() {
            for &c in &self.children[v] {
                depth[c] = depth[c].max(depth[v] + 1);
            }
        }
        depth
    }

    // Kahn's algorithm keyed on (depth, id); depths come from a plain Kahn pass.
    fn topological_indices(&self) -> Vec<usize> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeMap<&str, usize> = (0..n)
            .filter(|&i| indeg[i] == 0)
            .map(|i| (self.variables[i].id.as_str(), i))
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some((_, v)) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(self.variables[c].id.as_str(), c);
                }
            }
        }
        order
    }

    /// Parents before children. Nodes are layered by longest path from a
    /// root and sorted by id within a layer.
    pub fn topological_order(&self) -> Vec<usize> {
        let depth = self.depths();
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            depth[a]
                .cmp(&depth[b])
                .then_with(|| self.variables[a].id.cmp(&self.variables[b].id))
        });
        order
    }

    pub fn topological_ids(&self) -> Vec<String> {
        self.topological_order()
            .into_iter()
            .map(|i| self.variables[i].id.clone())
            .collect()
    }

    /// All strict ancestors of the given nodes.
    pub fn ancestors(&self, nodes: &[usize]) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = nodes.to_vec();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Families `{child} ∪ pa(child)` for every non-root plus a singleton for
    /// every root, in topological order.
    pub fn moralize(&self) -> Vec<BTreeSet<String>> {
        self.topological_order()
            .into_iter()
            .map(|v| self.family(v).members())
            .collect()
    }

    /// Edges of the moral graph: the undirected skeleton plus married parents.
    pub fn moral_edges(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        let mut add = |a: &str, b: &str| {
            let (x, y) = if a < b { (a, b) } else { (b, a) };
            out.insert((x.to_string(), y.to_string()));
        };
        for v in 0..self.len() {
            let pa = &self.parents[v];
            for (i, &p) in pa.iter().enumerate() {
                add(&self.variables[p].id, &self.variables[v].id);
                for &q in &pa[i + 1..] {
                    add(&self.variables[p].id, &self.variables[q].id);
                }
            }
        }
        out
    }

    /// Returns a new Dag with one more root variable made the sole parent of
    /// `target`.
    pub(crate) fn with_new_parent(&self, var: Variable, target: usize) -> Result<Dag, GraphError> {
        let mut vars = self.variables.clone();
        let id = var.id.clone();
        vars.push(var);
        let mut edges = self.edges();
        edges.push((id, self.variables[target].id.clone()));
        Dag::new(vars, &edges)
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in self.topological_order() {
            let pa = self.parent_ids(v);
            if pa.is_empty() {
                writeln!(f, "{}", self.variables[v].id)?;
            } else {
                writeln!(f, "{} <- {}", self.variables[v].id, pa.join(", "))?;
            }
        }
        Ok(())
    }
}
