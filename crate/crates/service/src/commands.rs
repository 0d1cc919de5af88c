//! One function per CLI command. Each takes the loaded model and returns a
//! [`Report`]; the binary only parses arguments, prints and saves.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use bnelicit::elicitation::{
    check_consistency, generate_questionnaire, reconcile as run_cascade, ConsistencyReport, IngestReport, Question,
    ReconcileConfig, ReconcileOutcome, ReconciliationAction, SelectionMode, Source,
};
use bnelicit::fixtures;
use bnelicit::inference::{PosteriorReport, SensitivityReport};
use bnelicit::loglinear::{bn_to_loglinear, check_representable, count_parameters, reduce_to_order_two, CountConvention, VarSet};
use bnelicit::model_file::{AnswersFile, WhatIfFile};
use bnelicit::synthesis::{synthesize_network, NodeDiagnostics, SynthesisMode, SynthesisPlan};
use bnelicit::{Evidence, InteractionSpec, ModelFile, Network};
use serde::Serialize;
use serde_json::Value;

use crate::error::{Diagnostic, Result, ServiceError};
use crate::proposals::{propose, ProposalQueue};

/// Rendered command output.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub json: Value,
    /// False when the command found a domain problem (exit status 1).
    pub clean: bool,
}

impl Report {
    fn new<T: Serialize>(text: String, body: &T, clean: bool) -> Report {
        Report {
            text,
            json: serde_json::to_value(body).expect("reports serialize"),
            clean,
        }
    }
}

fn set_names(sets: &[VarSet]) -> Vec<Vec<String>> {
    sets.iter().map(|s| s.iter().cloned().collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub variables: usize,
    pub edges: usize,
    pub topological_order: Vec<String>,
    pub family_model: String,
    pub reduced_model: String,
    pub kept_interactions: Vec<InteractionSpec>,
    /// Terms restored so the reduced model stays representable.
    pub repairs: Vec<Vec<String>>,
    pub violations: Vec<Vec<String>>,
    pub has_tables: bool,
    pub clean: bool,
}

pub fn validate(model: &ModelFile) -> Result<Report> {
    let dag = model.dag()?;
    let reduction = reduce_to_order_two(&dag, &model.kept_interactions)?;
    let representable = check_representable(&reduction.model);
    if model.cpts.is_some() {
        model.network()?;
    }
    let r = ValidationReport {
        variables: dag.len(),
        edges: dag.edge_count(),
        topological_order: dag.topological_ids(),
        family_model: bn_to_loglinear(&dag).to_string(),
        reduced_model: reduction.model.to_string(),
        kept_interactions: model.kept_interactions.clone(),
        repairs: set_names(&reduction.repair_log),
        violations: set_names(&representable.violations),
        has_tables: model.cpts.is_some(),
        clean: representable.is_ok(),
    };
    let mut t = String::new();
    writeln!(t, "graph: {} variables, {} edges, acyclic", r.variables, r.edges).unwrap();
    writeln!(t, "order: {}", r.topological_order.join(" ")).unwrap();
    writeln!(t, "family model:  {}", r.family_model).unwrap();
    writeln!(t, "reduced model: {}", r.reduced_model).unwrap();
    for k in &r.kept_interactions {
        writeln!(t, "kept: {} with {} and {}", k.child, k.parents[0], k.parents[1]).unwrap();
    }
    for s in &r.repairs {
        writeln!(t, "restored term [{}]", s.join(",")).unwrap();
    }
    for s in &r.violations {
        writeln!(t, "not representable: [{}] has every pairwise term but is absent", s.join(",")).unwrap();
    }
    if r.has_tables {
        writeln!(t, "tables: present and valid").unwrap();
    }
    writeln!(t, "{}", if r.clean { "clean" } else { "NOT representable" }).unwrap();
    let clean = r.clean;
    Ok(Report::new(t, &r, clean))
}

#[derive(Debug, Clone, Serialize)]
pub struct QuestionsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expert: Option<String>,
    pub total: usize,
    pub questions: Vec<Question>,
}

/// Questions with no active answer, or, for an expert, the ones that
/// expert has not answered yet.
pub fn open_questions(model: &ModelFile, expert: Option<&str>) -> Result<QuestionsReport> {
    let dag = model.dag()?;
    let mut q = generate_questionnaire(&dag, &model.kept_interactions);
    q.mark_rare_events(&dag, &model.store);
    let total = q.len();
    let open: Vec<Question> = match expert {
        None => q.unanswered(&model.store).cloned().collect(),
        Some(id) => {
            let source = Source::Expert(id.to_string());
            q.questions
                .iter()
                .filter(|x| !model.store.statements().iter().any(|s| s.source == source && s.target == x.target))
                .cloned()
                .collect()
        }
    };
    Ok(QuestionsReport {
        expert: expert.map(String::from),
        total,
        questions: open,
    })
}

pub fn questions(model: &ModelFile, expert: Option<&str>) -> Result<Report> {
    let r = open_questions(model, expert)?;
    let mut t = String::new();
    writeln!(t, "{} of {} questions open", r.questions.len(), r.total).unwrap();
    for (i, x) in r.questions.iter().enumerate() {
        writeln!(t, "{:>3}. {}", i + 1, x.prompt).unwrap();
        writeln!(t, "     target: {}", x.target).unwrap();
    }
    Ok(Report::new(t, &r, true))
}

/// Ingesting invalidates any synthesized tables.
pub fn ingest(model: &mut ModelFile, answers: AnswersFile) -> Result<Report> {
    let dag = model.dag()?;
    let n = answers.answers.len();
    let report: IngestReport = model.store.ingest(&dag, &model.kept_interactions, answers.answers)?;
    model.cpts = None;
    let mut t = format!("ingested {n} answers\n");
    for s in &report.shadowed {
        writeln!(t, "{}: statement {} kept over {}", s.target, s.kept, s.replaced).unwrap();
    }
    Ok(Report::new(t, &report, true))
}

fn render_consistency(r: &ConsistencyReport) -> String {
    let mut t = String::new();
    for p in &r.pairs {
        writeln!(
            t,
            "({}, {}) state {}: computed {:.6} stated {:.6} residual {:.6} hull [{}, {}] {:?}{}",
            p.pair.child,
            p.pair.parent,
            p.pair.state,
            p.computed,
            p.stated,
            p.residual,
            p.hull_min,
            p.hull_max,
            p.hull_status,
            if p.inconsistent { "  INCONSISTENT" } else { "" }
        )
        .unwrap();
    }
    for m in &r.missing {
        writeln!(t, "({}, {}) state {}: {} statement(s) missing", m.pair.child, m.pair.parent, m.pair.state, m.missing.len()).unwrap();
    }
    let bad = r.inconsistent().count();
    writeln!(t, "{bad} inconsistent pair(s) at tolerance {}", r.tolerance).unwrap();
    t
}

pub fn check(model: &ModelFile, tolerance: Option<f64>) -> Result<Report> {
    let dag = model.dag()?;
    let tol = tolerance.unwrap_or(model.metadata.tolerance);
    let r = check_consistency(&model.store, &dag, tol)?;
    Ok(Report::new(render_consistency(&r), &r, r.is_consistent()))
}

/// Metadata settings, overridden by whatever the caller passes.
pub fn reconcile_config(model: &ModelFile, mode: Option<SelectionMode>, tolerance: Option<f64>) -> ReconcileConfig {
    let mut c = model.metadata.reconcile_config();
    if let Some(m) = mode {
        c.mode = m;
    }
    if let Some(t) = tolerance {
        c.tolerance = t;
    }
    c
}

fn render_outcome(out: &ReconcileOutcome) -> String {
    let mut t = String::new();
    for a in &out.actions {
        writeln!(t, "{a}").unwrap();
        writeln!(t, "    {}", a.rationale).unwrap();
    }
    for w in &out.warnings {
        writeln!(t, "warning: {}", w.message).unwrap();
    }
    writeln!(t, "{} action(s) applied", out.actions.len()).unwrap();
    t
}

pub fn reconcile(model: &mut ModelFile, config: &ReconcileConfig) -> Result<Report> {
    let dag = model.dag()?;
    let out = run_cascade(&mut model.store, &dag, config)?;
    if !out.actions.is_empty() {
        model.cpts = None;
    }
    model.metadata.selection_mode = config.mode;
    Ok(Report::new(render_outcome(&out), &out, true))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReviewReport {
    pub accepted: Vec<ReconciliationAction>,
    pub rejected: Vec<ReconciliationAction>,
    /// Proposals never reached: the session stopped or an earlier one was rejected.
    pub dropped: usize,
}

/// Offers each proposal in turn: `a` accepts, `r` rejects (and drops the
/// remaining proposals, which assumed it), `q` stops.
pub fn reconcile_interactive(
    model: &mut ModelFile,
    config: &ReconcileConfig,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<Report> {
    let dag = model.dag()?;
    let out = propose(&model.store, &dag, config)?;
    for w in &out.warnings {
        writeln!(output, "warning: {}", w.message)?;
    }
    let total = out.actions.len();
    let mut queue = ProposalQueue::new(out.actions);
    let mut review = ReviewReport {
        accepted: vec![],
        rejected: vec![],
        dropped: 0,
    };
    while let Some(next) = queue.pending().first().cloned() {
        writeln!(output, "{next}\n    {}\n[a]ccept, [r]eject, [q]uit? ", next.rationale)?;
        output.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        match line.trim() {
            "a" | "accept" => review.accepted.push(queue.accept(&mut model.store, &dag, next.id)?),
            "r" | "reject" => {
                review.rejected.push(queue.reject(&mut model.store, next.id)?);
                break;
            }
            "q" | "quit" => break,
            other => writeln!(output, "unrecognised answer {other:?}")?,
        }
    }
    review.dropped = total - review.accepted.len() - review.rejected.len();
    if !review.accepted.is_empty() {
        model.cpts = None;
    }
    let t = format!(
        "{} accepted, {} rejected, {} not reviewed\n",
        review.accepted.len(),
        review.rejected.len(),
        review.dropped
    );
    Ok(Report::new(t, &review, true))
}

pub fn counts(model: &ModelFile, convention: Option<CountConvention>) -> Result<Report> {
    let dag = model.dag()?;
    let c = count_parameters(&dag, convention.unwrap_or(model.metadata.count_convention));
    let mut t = String::new();
    writeln!(t, "convention: {}", c.description).unwrap();
    writeln!(t, "{:<10} {:>6} {:>8} {:>10} {:>8}", "variable", "states", "parents", "classical", "reduced").unwrap();
    for n in &c.nodes {
        writeln!(t, "{:<10} {:>6} {:>8} {:>10} {:>8}", n.id, n.cardinality, n.parents, n.classical, n.reduced()).unwrap();
    }
    writeln!(t, "{:<10} {:>6} {:>8} {:>10} {:>8}", "total", "", "", c.classical_total, c.reduced_total).unwrap();
    Ok(Report::new(t, &c, true))
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    pub mode: SynthesisMode,
    pub plan: SynthesisPlan,
    pub diagnostics: Vec<NodeDiagnostics>,
}

pub fn synthesize(model: &mut ModelFile, mode: Option<SynthesisMode>) -> Result<Report> {
    let dag = model.dag()?;
    let mode = mode.unwrap_or(model.metadata.synthesis_mode);
    let s = synthesize_network(&dag, &model.store, &model.kept_interactions, mode)?;
    let mut t = String::new();
    writeln!(t, "{:<10} {:>12} {:>10} {:>12}", "variable", "mass dev", "raw > 1", "drift").unwrap();
    for d in &s.diagnostics {
        writeln!(
            t,
            "{:<10} {:>12.3e} {:>10} {:>12.3e}",
            d.variable,
            d.max_mass_deviation,
            d.raw_out_of_range_rows.len(),
            d.drift
        )
        .unwrap();
    }
    model.cpts = Some(s.network.cpts().to_vec());
    model.metadata.synthesis_mode = mode;
    let r = SynthesisReport {
        mode,
        plan: s.plan,
        diagnostics: s.diagnostics,
    };
    Ok(Report::new(t, &r, true))
}

pub fn network(model: &ModelFile) -> Result<Network> {
    model.network()?.ok_or(ServiceError::NotSynthesized)
}

fn render_posterior(p: &PosteriorReport) -> String {
    let mut t = String::new();
    let given = if p.evidence.is_empty() { String::new() } else { format!(" | {}", p.evidence) };
    writeln!(t, "P({}{given})", p.query).unwrap();
    for (s, v) in p.states.iter().zip(&p.distribution) {
        writeln!(t, "  {s:<12} {v:.6}").unwrap();
    }
    t
}

pub fn infer(model: &ModelFile, query: &str, evidence: &Evidence) -> Result<Report> {
    let p = network(model)?.posterior(query, evidence)?;
    Ok(Report::new(render_posterior(&p), &p, true))
}

pub fn sensitivity(
    model: &ModelFile,
    target: &str,
    state: Option<&str>,
    inputs: Option<Vec<String>>,
    evidence: &Evidence,
) -> Result<Report> {
    let net = network(model)?;
    let state = match state {
        Some(s) => s.to_string(),
        None => {
            let t = net.dag().require(target)?;
            net.dag().variable(t).states[0].clone()
        }
    };
    let inputs = inputs.unwrap_or_else(|| net.roots());
    let r: SensitivityReport = net.sensitivity(target, &state, &inputs, evidence)?;
    let mut t = format!("P({target}={state}) by input, largest spread first\n");
    for e in &r.entries {
        let vals: Vec<String> = e
            .states
            .iter()
            .zip(&e.values)
            .map(|(s, v)| match v {
                Some(v) => format!("{s}={v:.4}"),
                None => format!("{s}=impossible"),
            })
            .collect();
        writeln!(t, "  {:<10} spread {:.4}  {}", e.input, e.spread, vals.join(" ")).unwrap();
    }
    Ok(Report::new(t, &r, true))
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyResult {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Diagnostic>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WhatIfReport {
    pub base: PosteriorReport,
    pub strategies: Vec<StrategyResult>,
}

pub fn what_if(net: &Network, doc: &WhatIfFile) -> Result<WhatIfReport> {
    let base = net.posterior(&doc.query, &doc.evidence)?;
    let strategies = doc
        .strategies
        .iter()
        .zip(net.evaluate_strategies(&doc.strategies, &doc.query, &doc.evidence))
        .map(|(s, r)| match r {
            Ok(o) => StrategyResult {
                name: o.name,
                posterior: Some(o.posterior),
                error: None,
            },
            Err(e) => StrategyResult {
                name: s.name.clone(),
                posterior: None,
                error: Some(ServiceError::from(e).diagnostic()),
            },
        })
        .collect();
    Ok(WhatIfReport { base, strategies })
}

pub fn whatif(model: &ModelFile, doc: &WhatIfFile) -> Result<Report> {
    let r = what_if(&network(model)?, doc)?;
    let mut t = format!("base\n{}", render_posterior(&r.base));
    let mut clean = true;
    for s in &r.strategies {
        match (&s.posterior, &s.error) {
            (Some(p), _) => write!(t, "{}\n{}", s.name, render_posterior(p)).unwrap(),
            (None, Some(e)) => {
                clean = false;
                writeln!(t, "{}: error: {}", s.name, e.message).unwrap()
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(Report::new(t, &r, clean))
}

pub const EXAMPLES: [&str; 4] = ["single_parent", "two_parent", "diamond", "application"];

/// Bundled example models.
pub fn example(name: &str) -> Result<ModelFile> {
    let mut m = match name {
        "single_parent" => {
            let (dag, store) = fixtures::single_parent();
            ModelFile::new(&dag, vec![], store)
        }
        "two_parent" => {
            let (dag, store) = fixtures::two_parent();
            let mut m = ModelFile::new(&dag, vec![], store);
            m.metadata.tolerance = 0.01;
            m.metadata.significance = 0.01;
            m
        }
        "diamond" => ModelFile::new(&fixtures::diamond(), vec![], Default::default()),
        "application" => {
            let (dag, store) = fixtures::application_store();
            ModelFile::new(&dag, vec![], store)
        }
        other => {
            return Err(ServiceError::Usage(format!(
                "unknown example {other:?}; choose one of {}",
                EXAMPLES.join(", ")
            )))
        }
    };
    m.metadata.name = name.to_string();
    Ok(m)
}
