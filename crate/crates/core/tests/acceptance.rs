//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::panic;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bnelicit::elicitation::{
    check_consistency, fix_by_single_conditional, reconcile, replace_marginal, rescale_preserving_ratios,
    suggest_target, ActionKind, Answer, FixOutcome, Pair, ReconcileConfig, SelectionMode, Target,
};
use bnelicit::fixtures;
use bnelicit::graph::{Dag, Variable};
use bnelicit::inference::MaintenanceAction;
use bnelicit::loglinear::{check_representable, count_parameters, CountConvention, LogLinearModel};
use bnelicit::synthesis::{synthesize_network, SynthesisMode};
use bnelicit::{ElicitationStore, Evidence, ModelFile, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SINGLE_PARENT_RAW: f64 = 6.85;
const SINGLE_PARENT_RAW_TOL: f64 = 1e-9;
const SINGLE_PARENT_FIX: f64 = 0.349242;
const SINGLE_PARENT_FIX_TOL: f64 = 1e-6;
const SINGLE_PARENT_COMPUTED: f64 = 0.1845;
const EXACT_TOL: f64 = 1e-12;
const FAST: Duration = Duration::from_millis(100);
const GRID_STEP: f64 = 1e-5;
const POST_ACTION_RESIDUAL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-9;
const ORACLE_CASES: usize = 100;
const SYNTHESIS_BUDGET: Duration = Duration::from_secs(60);
const POSTERIOR_BUDGET: Duration = Duration::from_secs(5);
const NO_OP_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

// Negated so that a NaN fails the check.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ca(dag: &Dag, parent: &str) -> Pair {
    Pair::with_state(dag, "C", parent, "c").unwrap()
}

fn single_parent_fidelity() -> Outcome {
    let start = Instant::now();
    let (dag, store) = fixtures::single_parent();
    let pair = ca(&dag, "A");
    let computed = check_consistency(&store, &dag, 0.05).unwrap().get("C", "A").unwrap().computed;
    ensure!((computed - SINGLE_PARENT_COMPUTED).abs() < EXACT_TOL, "computed marginal {computed}");
    let raw = match fix_by_single_conditional(&store, &dag, &pair, "2").unwrap() {
        FixOutcome::Infeasible { raw, .. } => raw,
        FixOutcome::Action(a) => return Err(format!("fix at A=2 was accepted: {a}")),
    };
    ensure!((raw - SINGLE_PARENT_RAW).abs() < SINGLE_PARENT_RAW_TOL, "raw value at A=2 {raw}");
    let pick = suggest_target(&store, &dag, &pair, SelectionMode::Heaviest, 0.02).unwrap().unwrap();
    ensure!(pick.parent_state == "1", "largest-weight state {}", pick.parent_state);
    let FixOutcome::Action(a) = fix_by_single_conditional(&store, &dag, &pair, "1").unwrap() else {
        return Err("fix at A=1 infeasible".into());
    };
    let ActionKind::ReplaceConditional { new, .. } = a.kind else { unreachable!() };
    ensure!((new - SINGLE_PARENT_FIX).abs() < SINGLE_PARENT_FIX_TOL, "fix at A=1 {new}");
    let took = start.elapsed();
    ensure!(took < FAST, "took {took:?}");
    Ok(format!("computed {computed}, A=2 raw {raw:.6} infeasible, A=1 -> {new:.6}, {took:?}"))
}

fn two_parent_replacement() -> Outcome {
    let start = Instant::now();
    let (dag, store) = fixtures::two_parent();
    let report = check_consistency(&store, &dag, 0.01).unwrap();
    let a = report.get("C", "A").unwrap();
    let b = report.get("C", "B").unwrap();
    ensure!((a.computed - 0.0236).abs() < EXACT_TOL, "A candidate {}", a.computed);
    ensure!((b.computed - 0.037).abs() < EXACT_TOL, "B candidate {}", b.computed);
    ensure!((b.hull_min, b.hull_max) == (0.03, 0.10), "B hull [{}, {}]", b.hull_min, b.hull_max);
    ensure!(a.candidate_excluded_by == ["B"], "A candidate excluded by {:?}", a.candidate_excluded_by);
    let action = replace_marginal(&store, &dag, "C", "c").unwrap();
    let ActionKind::ReplaceMarginal { new, donor_parent, .. } = &action.kind else { unreachable!() };
    ensure!(donor_parent == "B" && (new - 0.037).abs() < EXACT_TOL, "adopted {new} via {donor_parent}");
    let took = start.elapsed();
    ensure!(took < FAST, "took {took:?}");
    Ok(format!("candidates A {} / B {}, A rejected by B hull [0.03, 0.1], adopted {new}, {took:?}", a.computed, b.computed))
}

fn ratio_program() -> Outcome {
    let (dag, mut store) = fixtures::single_parent();
    let pair = ca(&dag, "A");
    let check = check_consistency(&store, &dag, 0.05).unwrap().get("C", "A").unwrap().clone();
    let action = rescale_preserving_ratios(&store, &dag, &pair).unwrap();
    let ActionKind::RescaleRatios { scale, .. } = action.kind else { unreachable!() };
    let upper = check.conditionals.iter().map(|k| 1.0 / k).fold(f64::INFINITY, f64::min);
    let steps = (upper / GRID_STEP) as usize;
    let (mut best, mut best_r) = (0.0, f64::INFINITY);
    for i in 0..=steps {
        let x = i as f64 * GRID_STEP;
        let r = (check.stated - x * check.computed).abs();
        if r < best_r {
            (best, best_r) = (x, r);
        }
    }
    ensure!((best - scale).abs() <= GRID_STEP, "closed form {scale} vs grid {best}");
    store.apply(&dag, action).unwrap();
    let after = check_consistency(&store, &dag, 0.05).unwrap().get("C", "A").unwrap().residual;
    ensure!(after < POST_ACTION_RESIDUAL, "post-action residual {after}");
    Ok(format!("x* {scale:.7}, grid {best:.5}, residual after {after:.1e}"))
}

fn condition_one() -> Outcome {
    let bad = check_representable(&LogLinearModel::parse("[AB][AC][BC][AD][BD]").unwrap());
    let abc: std::collections::BTreeSet<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    ensure!(bad.violations.contains(&abc), "violations {:?}", bad.violations);
    let good = check_representable(&LogLinearModel::parse("[ABC][AD][BD]").unwrap());
    ensure!(good.is_ok(), "[ABC][AD][BD] flagged {:?}", good.violations);
    let shown: Vec<String> = bad.violations.iter().map(|s| format!("{{{}}}", s.iter().cloned().collect::<Vec<_>>().join(","))).collect();
    Ok(format!("violations {}; [ABC][AD][BD] passes", shown.join(" ")))
}

fn parameter_counts() -> Outcome {
    let counts = count_parameters(&fixtures::application_dag(), CountConvention::OnePerEdge);
    let o2 = counts.node("O2'").unwrap();
    // the node figure counts retained conditionals; totals add one marginal per free state
    ensure!(
        o2.classical == 192 && o2.reduced_conditional == 7,
        "O2' {}/{}",
        o2.classical,
        o2.reduced_conditional
    );
    ensure!(
        counts.classical_total == 381 && counts.reduced_total == 69,
        "totals {}/{}",
        counts.classical_total,
        counts.reduced_total
    );
    Ok(format!(
        "O2' {}/{} conditionals, totals {}/{} with three-state {:?}",
        o2.classical,
        o2.reduced_conditional,
        counts.classical_total,
        counts.reduced_total,
        fixtures::APPLICATION_TERNARY
    ))
}

fn synthesis_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..ORACLE_CASES + 20 {
        let size = rng.gen_range(4..=12);
        let truth = common::gadget_network(&mut rng, size);
        let store = common::exact_store(&truth);
        let s = synthesize_network(truth.dag(), &store, &[], SynthesisMode::Normalized).map_err(|e| format!("case {case}: {e}"))?;
        for (t, g) in truth.cpts().iter().zip(s.network.cpts()) {
            for (rt, rg) in t.rows.iter().zip(&g.rows) {
                for (a, b) in rt.iter().zip(rg) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    let took = start.elapsed();
    ensure!(worst < ORACLE_TOL, "max row error {worst:.2e}");
    ensure!(took < SYNTHESIS_BUDGET, "took {took:?}");
    Ok(format!("{} networks, max row error {worst:.1e}, {took:?}", ORACLE_CASES + 20))
}

fn application() -> (Network, ElicitationStore) {
    let (dag, store) = fixtures::application_store();
    let s = synthesize_network(&dag, &store, &[], SynthesisMode::Normalized).unwrap();
    (s.network, store)
}

fn inference_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < ORACLE_CASES + 10 {
        let n = rng.gen_range(3..=12);
        let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=4)).collect();
        if cards.iter().product::<usize>() > 1 << 20 {
            continue;
        }
        cases += 1;
        let net = common::random_network(&mut rng, &cards, 3);
        let dag = net.dag();
        let j = common::joint(&net);
        for _ in 0..4 {
            let q = rng.gen_range(0..dag.len());
            let mut ev = Evidence::new();
            let mut idx = Vec::new();
            for i in (0..dag.len()).filter(|&i| i != q) {
                if rng.gen_bool(0.25) {
                    let s = rng.gen_range(0..dag.cardinality(i));
                    ev = ev.with(&dag.variable(i).id, &dag.variable(i).states[s]);
                    idx.push((i, s));
                }
            }
            let got = net.posterior(&dag.variable(q).id, &ev).map_err(|e| e.to_string())?;
            let want = common::posterior(dag, &j, q, &idx);
            for (a, b) in got.distribution.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure!(worst < ORACLE_TOL, "max posterior error {worst:.2e}");
    let (net, _) = application();
    let mut slowest = Duration::ZERO;
    for v in net.dag().variables() {
        for ev in [Evidence::new(), Evidence::new().with("E", "yes")] {
            if v.id == "E" && !ev.is_empty() {
                continue;
            }
            let start = Instant::now();
            net.posterior(&v.id, &ev).map_err(|e| e.to_string())?;
            slowest = slowest.max(start.elapsed());
        }
    }
    ensure!(slowest < POSTERIOR_BUDGET, "slowest application posterior {slowest:?}");
    Ok(format!("{cases} networks, max error {worst:.1e}; slowest application posterior {slowest:?}"))
}

fn maintenance_no_op() -> Outcome {
    let (net, _) = application();
    let mut worst: f64 = 0.0;
    for target in net.roots() {
        let action = MaintenanceAction::vacuous(&net, "Maintain", &target).map_err(|e| e.to_string())?;
        let after = net.apply_maintenance(&action).map_err(|e| e.to_string())?;
        for v in net.dag().variables() {
            let a = net.posterior(&v.id, &Evidence::new()).unwrap().distribution;
            let b = after.posterior(&v.id, &Evidence::new()).unwrap().distribution;
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    ensure!(worst <= NO_OP_TOL, "max posterior change {worst:.2e}");
    Ok(format!("vacuous task on each of {} roots, max change {worst:.1e}", net.roots().len()))
}

fn replay_matches(dag: &Dag, initial: ElicitationStore, config: &ReconcileConfig) -> Result<usize, String> {
    let mut store = initial;
    let out = reconcile(&mut store, dag, config).map_err(|e| e.to_string())?;
    let saved = ModelFile::new(dag, vec![], store).to_canonical_string();
    let loaded = ModelFile::parse(&saved).map_err(|e| e.to_string())?;
    let replayed = loaded
        .store
        .rewind()
        .replay(dag, loaded.store.audit_log())
        .map_err(|e| e.to_string())?;
    let again = ModelFile::new(dag, vec![], replayed).to_canonical_string();
    ensure!(again == saved, "replayed document differs");
    Ok(out.actions.len())
}

fn random_abc<R: Rng>(rng: &mut R) -> (Dag, ElicitationStore) {
    let dag = Dag::from_edges(
        vec![
            Variable::new("A", &["0", "1", "2"]),
            Variable::new("B", &["0", "1"]),
            Variable::new("C", &["c", "not_c"]),
        ],
        &[("A", "C"), ("B", "C")],
    )
    .unwrap();
    let r4 = |x: f64| (x * 1e4).round() / 1e4;
    let w = common::random_row(rng, 3).into_iter().map(r4).collect::<Vec<_>>();
    let e = |t: Target, v: f64| Answer::expert("e1", t, v);
    let mut answers = vec![
        e(Target::marginal("A", "0"), w[0]),
        e(Target::marginal("A", "1"), w[1]),
        e(Target::marginal("A", "2"), r4(1.0 - w[0] - w[1])),
        e(Target::marginal("B", "0"), r4(rng.gen_range(0.05..0.95))),
        e(Target::marginal("C", "c"), r4(rng.gen_range(0.01..0.99))),
    ];
    for (p, states) in [("A", &["0", "1", "2"][..]), ("B", &["0", "1"])] {
        for s in states {
            answers.push(e(Target::conditional("C", "c", &[(p, s)]), r4(rng.gen_range(0.01..0.99))));
        }
    }
    let mut store = ElicitationStore::new();
    store.ingest(&dag, &[], answers).unwrap();
    (dag, store)
}

fn audit_replay() -> Outcome {
    let mut logs = 0;
    let mut actions = 0;
    let heaviest = ReconcileConfig {
        mode: SelectionMode::Heaviest,
        ..ReconcileConfig::default()
    };
    let tight = ReconcileConfig {
        tolerance: 0.01,
        significance: 0.01,
        mode: SelectionMode::Strict,
    };
    for config in [ReconcileConfig::default(), heaviest, tight] {
        for (dag, store) in [fixtures::single_parent(), fixtures::two_parent()] {
            actions += replay_matches(&dag, store, &config)?;
            logs += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100 {
        let (dag, store) = random_abc(&mut rng);
        let config = if i % 2 == 0 { ReconcileConfig::default() } else { heaviest };
        actions += replay_matches(&dag, store, &config)?;
        logs += 1;
    }
    // the application answers with some conditionals pushed off
    let (dag, mut store) = fixtures::application_store();
    let shifted: Vec<Answer> = store
        .active_statements()
        .filter(|s| !s.target.given().is_empty() && dag.get(s.target.variable()).unwrap().cardinality() == 2)
        .step_by(7)
        .map(|s| Answer::expert("e2", s.target.clone(), ((s.value + 0.3) * 1e4).round() / 1e4 % 1.0))
        .collect();
    store.ingest(&dag, &[], shifted).unwrap();
    actions += replay_matches(&dag, store, &ReconcileConfig::default())?;
    logs += 1;
    Ok(format!("{logs} logs, {actions} actions, all byte-identical"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("single-parent reconciliation fidelity", single_parent_fidelity),
        ("two-parent marginal replacement", two_parent_replacement),
        ("ratio-preserving program vs grid search", ratio_program),
        ("condition-1 checker", condition_one),
        ("parameter-count reduction", parameter_counts),
        ("synthesis oracle equivalence", synthesis_oracle),
        ("inference oracle equivalence", inference_oracle),
        ("maintenance no-op", maintenance_no_op),
        ("audit replay", audit_replay),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
