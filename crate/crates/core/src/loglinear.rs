//! Log-linear view of a Bayesian network.
//!
//! A model is stored as its generating class: the maximal variable subsets
//! whose interaction terms (and all their sub-terms) are retained. `[ABC][AD][BD]`
//! keeps u_ABC, u_AB, u_AC, u_BC, u_AD, u_BD and all main effects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Dag, Family};

pub type VarSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogLinearError {
    #[error("interaction ({child}; {a}, {b}) does not name two distinct parents of the child")]
    UnknownInteraction { child: String, a: String, b: String },
    #[error("no cardinality assigned to {0}")]
    MissingCardinality(String),
    #[error("cannot parse generating class {0:?}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogLinearModel {
    variables: Vec<String>,
    generators: Vec<VarSet>,
}

impl LogLinearModel {
    /// Builds a canonical model: generators contained in another are dropped
    /// and uncovered variables get a singleton generator.
    pub fn new<I>(variables: Vec<String>, generators: I) -> Self
    where
        I: IntoIterator<Item = VarSet>,
    {
        let mut gens: Vec<VarSet> = generators.into_iter().filter(|g| !g.is_empty()).collect();
        for v in &variables {
            if !gens.iter().any(|g| g.contains(v)) {
                gens.push(std::iter::once(v.clone()).collect());
            }
        }
        LogLinearModel {
            variables,
            generators: canonical(gens),
        }
    }

    /// Parses `[ABC][AD][BD]` (single-letter ids) or `[M6,Ad][Ab]`; any comma
    /// switches every bracket to comma-separated ids.
    pub fn parse(text: &str) -> Result<Self, LogLinearError> {
        let err = || LogLinearError::Parse(text.to_string());
        let mut gens = Vec::new();
        let mut rest = text.trim();
        let separated = rest.contains(',');
        while !rest.is_empty() {
            let body = rest.strip_prefix('[').ok_or_else(err)?;
            let end = body.find(']').ok_or_else(err)?;
            let inner = &body[..end];
            let set: VarSet = if separated {
                inner.split(',').map(|s| s.trim().to_string()).collect()
            } else {
                inner.chars().map(|c| c.to_string()).collect()
            };
            if set.is_empty() || set.iter().any(String::is_empty) {
                return Err(err());
            }
            gens.push(set);
            rest = body[end + 1..].trim_start();
        }
        let mut vars: Vec<String> = gens.iter().flatten().cloned().collect::<VarSet>().into_iter().collect();
        vars.sort();
        Ok(LogLinearModel::new(vars, gens))
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn generators(&self) -> &[VarSet] {
        &self.generators
    }

    /// True when the interaction term over `set` is in the model.
    pub fn contains_term(&self, set: &VarSet) -> bool {
        self.generators.iter().any(|g| set.is_subset(g))
    }

    fn with_added(&self, extra: impl IntoIterator<Item = VarSet>) -> Self {
        let mut gens = self.generators.clone();
        gens.extend(extra);
        LogLinearModel::new(self.variables.clone(), gens)
    }
}

// drop subsets, then order by descending size and member list
fn canonical(mut gens: Vec<VarSet>) -> Vec<VarSet> {
    gens.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    gens.dedup();
    let mut out: Vec<VarSet> = Vec::with_capacity(gens.len());
    for g in gens {
        if !out.iter().any(|kept| g.is_subset(kept)) {
            out.push(g);
        }
    }
    out
}

impl fmt::Display for LogLinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let compact = self.variables.iter().all(|v| v.chars().count() == 1);
        for g in &self.generators {
            let parts: Vec<&str> = g.iter().map(String::as_str).collect();
            if compact {
                write!(f, "[{}]", parts.concat())?;
            } else {
                write!(f, "[{}]", parts.join(","))?;
            }
        }
        Ok(())
    }
}

/// The BN's family model: one generator per maximal family.
pub fn bn_to_loglinear(dag: &Dag) -> LogLinearModel {
    let vars = dag.variables().iter().map(|v| v.id.clone()).collect();
    LogLinearModel::new(vars, dag.moralize())
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RepresentabilityReport {
    /// Every subset of size ≥ 3 whose pairwise terms are all present but
    /// which is not itself a term, smallest first.
    pub violations: Vec<VarSet>,
}

impl RepresentabilityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Violations not contained in a larger violation.
    pub fn maximal(&self) -> Vec<VarSet> {
        self.violations
            .iter()
            .filter(|v| {
                !self
                    .violations
                    .iter()
                    .any(|w| w.len() > v.len() && v.is_subset(w))
            })
            .cloned()
            .collect()
    }
}

// Larger cliques are not expected in graphs elicited from experts; above this
// size only the clique itself and its 3-subsets are examined.
const FULL_SUBSET_LIMIT: usize = 16;

/// Reports every variable subset of size ≥ 3 whose two-way terms are all
/// present as two-way generators while the subset's own term is absent.
pub fn check_representable(model: &LogLinearModel) -> RepresentabilityReport {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for v in model.variables() {
        adj.entry(v.as_str()).or_default();
    }
    // Only two-way terms that are generators in their own right count: a pair
    // implied by a larger generator already carries that generator's
    // higher-order term.
    for g in model.generators().iter().filter(|g| g.len() == 2) {
        for a in g {
            for b in g {
                if a != b {
                    adj.entry(a.as_str()).or_default().insert(b.as_str());
                }
            }
        }
    }
    let mut cliques = Vec::new();
    let all: BTreeSet<&str> = adj.keys().copied().collect();
    bron_kerbosch(&adj, BTreeSet::new(), all, BTreeSet::new(), &mut cliques);

    let mut found: BTreeSet<VarSet> = BTreeSet::new();
    for clique in cliques.into_iter().filter(|c| c.len() >= 3) {
        let members: Vec<&str> = clique.into_iter().collect();
        let mut check = |subset: VarSet| {
            if !model.contains_term(&subset) {
                found.insert(subset);
            }
        };
        if members.len() <= FULL_SUBSET_LIMIT {
            let n = members.len();
            for mask in 0u32..(1u32 << n) {
                if mask.count_ones() < 3 {
                    continue;
                }
                let s: VarSet = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| members[i].to_string())
                    .collect();
                check(s);
            }
        } else {
            check(members.iter().map(|s| s.to_string()).collect());
        }
    }
    let mut violations: Vec<VarSet> = found.into_iter().collect();
    violations.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    RepresentabilityReport { violations }
}

fn bron_kerbosch<'a>(
    adj: &BTreeMap<&'a str, BTreeSet<&'a str>>,
    r: BTreeSet<&'a str>,
    mut p: BTreeSet<&'a str>,
    mut x: BTreeSet<&'a str>,
    out: &mut Vec<BTreeSet<&'a str>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r);
        return;
    }
    let pivot = p.iter().chain(x.iter()).copied().max_by_key(|u| adj[u].len()).unwrap();
    let candidates: Vec<&str> = p.difference(&adj[pivot]).copied().collect();
    for v in candidates {
        let mut r2 = r.clone();
        r2.insert(v);
        let p2 = p.intersection(&adj[v]).copied().collect();
        let x2 = x.intersection(&adj[v]).copied().collect();
        bron_kerbosch(adj, r2, p2, x2, out);
        p.remove(v);
        x.insert(v);
    }
}

/// A second-order association an expert chose to keep: the child together
/// with two of its parents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    pub child: String,
    pub parents: [String; 2],
}

impl InteractionSpec {
    pub fn new(child: &str, a: &str, b: &str) -> Self {
        InteractionSpec {
            child: child.to_string(),
            parents: [a.to_string(), b.to_string()],
        }
    }

    pub fn validate(&self, dag: &Dag) -> Result<(), LogLinearError> {
        let bad = || LogLinearError::UnknownInteraction {
            child: self.child.clone(),
            a: self.parents[0].clone(),
            b: self.parents[1].clone(),
        };
        let c = dag.index_of(&self.child).ok_or_else(bad)?;
        let pa = dag.parent_ids(c);
        if self.parents[0] == self.parents[1]
            || !self.parents.iter().all(|p| pa.contains(&p.as_str()))
        {
            return Err(bad());
        }
        Ok(())
    }

    pub fn triple(&self) -> VarSet {
        [&self.child, &self.parents[0], &self.parents[1]]
            .into_iter()
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduction {
    pub model: LogLinearModel,
    /// Generators added to restore representability, in the order added.
    pub repair_log: Vec<VarSet>,
}

/// Drops every interaction above order two except the kept triples, then
/// adds back any higher-order term whose absence breaks representability.
pub fn reduce_to_order_two(dag: &Dag, keep: &[InteractionSpec]) -> Result<Reduction, LogLinearError> {
    for k in keep {
        k.validate(dag)?;
    }
    let mut gens: Vec<VarSet> = Vec::new();
    for v in 0..dag.len() {
        let child = &dag.variable(v).id;
        for p in dag.parent_ids(v) {
            gens.push([child.clone(), p.to_string()].into_iter().collect());
        }
    }
    gens.extend(keep.iter().map(InteractionSpec::triple));
    let vars = dag.variables().iter().map(|v| v.id.clone()).collect();
    let mut model = LogLinearModel::new(vars, gens);
    let mut repair_log = Vec::new();
    loop {
        let report = check_representable(&model);
        if report.is_ok() {
            break;
        }
        let added = report.maximal();
        repair_log.extend(added.iter().cloned());
        model = model.with_added(added);
    }
    Ok(Reduction { model, repair_log })
}

/// How reduced-mode parameters are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountConvention {
    /// (|child|−1) free marginals per variable plus (|child|−1) retained
    /// conditionals per parent edge, whatever the parent's cardinality.
    #[default]
    OnePerEdge,
    /// As `OnePerEdge` for binary parents; a parent with three or more
    /// states keeps one conditional per parent state.
    ComplementPruned,
}

impl CountConvention {
    pub fn describe(&self) -> &'static str {
        match self {
            CountConvention::OnePerEdge => {
                "classical: (|X|-1)*prod|pa| free entries per CPT; reduced: (|X|-1) marginals per variable + (|X|-1) conditionals per parent edge"
            }
            CountConvention::ComplementPruned => {
                "classical: (|X|-1)*prod|pa| free entries per CPT; reduced: (|X|-1) marginals per variable + (|X|-1) per binary parent edge, (|X|-1)*|pa| per parent with >= 3 states"
            }
        }
    }
}

impl std::str::FromStr for CountConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-per-edge" => Ok(CountConvention::OnePerEdge),
            "complement-pruned" => Ok(CountConvention::ComplementPruned),
            other => Err(format!("unknown counting convention {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCount {
    pub id: String,
    pub cardinality: usize,
    pub parents: usize,
    pub classical: u64,
    pub reduced_marginal: u64,
    pub reduced_conditional: u64,
}

impl NodeCount {
    pub fn reduced(&self) -> u64 {
        self.reduced_marginal + self.reduced_conditional
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    pub convention: CountConvention,
    pub description: String,
    pub nodes: Vec<NodeCount>,
    pub classical_total: u64,
    pub reduced_total: u64,
}

impl ParameterCounts {
    pub fn node(&self, id: &str) -> Option<&NodeCount> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

pub fn count_parameters(dag: &Dag, convention: CountConvention) -> ParameterCounts {
    let families: Vec<Family> = (0..dag.len()).map(|v| dag.family(v)).collect();
    let cards: BTreeMap<String, usize> = dag
        .variables()
        .iter()
        .map(|v| (v.id.clone(), v.cardinality()))
        .collect();
    count_parameters_for(&families, &cards, convention)
        .expect("a validated Dag assigns every cardinality")
}

/// Counts over bare families and an explicit cardinality map.
pub fn count_parameters_for(
    families: &[Family],
    cards: &BTreeMap<String, usize>,
    convention: CountConvention,
) -> Result<ParameterCounts, LogLinearError> {
    let card = |id: &str| {
        cards
            .get(id)
            .map(|&c| c as u64)
            .ok_or_else(|| LogLinearError::MissingCardinality(id.to_string()))
    };
    let mut nodes = Vec::with_capacity(families.len());
    for fam in families {
        let k = card(&fam.child)?;
        let mut prod = 1u64;
        let mut conditional = 0u64;
        for p in &fam.parents {
            let pc = card(p)?;
            prod *= pc;
            conditional += match convention {
                CountConvention::OnePerEdge => k - 1,
                CountConvention::ComplementPruned if pc >= 3 => (k - 1) * pc,
                CountConvention::ComplementPruned => k - 1,
            };
        }
        nodes.push(NodeCount {
            id: fam.child.clone(),
            cardinality: k as usize,
            parents: fam.parents.len(),
            classical: (k - 1) * prod,
            reduced_marginal: k - 1,
            reduced_conditional: conditional,
        });
    }
    let classical_total = nodes.iter().map(|n| n.classical).sum();
    let reduced_total = nodes.iter().map(NodeCount::reduced).sum();
    Ok(ParameterCounts {
        convention,
        description: convention.describe().to_string(),
        nodes,
        classical_total,
        reduced_total,
    })
}

/// One candidate placement of the higher-cardinality variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardinalityCandidate {
    pub wide: Vec<String>,
    pub classical_total: u64,
    pub reduced_total: u64,
    /// |classical − target| + |reduced − target|.
    pub residual: u64,
}

/// Exhaustively places `n_wide` variables of cardinality `wide` (the rest
/// get `narrow`), keeps placements where `node` has `node_classical`
/// classical parameters, and ranks them by distance to the target totals.
#[allow(clippy::too_many_arguments)]
pub fn search_cardinalities(
    families: &[Family],
    narrow: usize,
    wide: usize,
    n_wide: usize,
    node: &str,
    node_classical: u64,
    totals: (u64, u64),
    convention: CountConvention,
) -> Vec<CardinalityCandidate> {
    let ids: Vec<&str> = families.iter().map(|f| f.child.as_str()).collect();
    let mut out = Vec::new();
    let mut pick: Vec<usize> = (0..n_wide).collect();
    if n_wide > ids.len() {
        return out;
    }
    loop {
        let cards: BTreeMap<String, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), if pick.contains(&i) { wide } else { narrow }))
            .collect();
        if let Ok(c) = count_parameters_for(families, &cards, convention) {
            if c.node(node).map(|n| n.classical) == Some(node_classical) {
                let mut wide_ids: Vec<String> = pick.iter().map(|&i| ids[i].to_string()).collect();
                wide_ids.sort();
                out.push(CardinalityCandidate {
                    wide: wide_ids,
                    classical_total: c.classical_total,
                    reduced_total: c.reduced_total,
                    residual: c.classical_total.abs_diff(totals.0) + c.reduced_total.abs_diff(totals.1),
                });
            }
        }
        // next combination
        let mut i = n_wide;
        loop {
            if i == 0 {
                out.sort_by(|a, b| a.residual.cmp(&b.residual).then_with(|| a.wide.cmp(&b.wide)));
                return out;
            }
            i -= 1;
            if pick[i] < ids.len() - n_wide + i {
                pick[i] += 1;
                for j in i + 1..n_wide {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}
