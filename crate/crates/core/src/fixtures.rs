//! Small reference networks and statement sets used by tests, examples and
//! the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elicitation::{Answer, ElicitationStore, Target};
use crate::graph::{Dag, Variable};
use crate::inference::{Evidence, Network};
use crate::synthesis::Cpt;

const EXPERT: &str = "e1";

fn store_from(dag: &Dag, values: &[(Target, f64)]) -> ElicitationStore {
    let mut store = ElicitationStore::new();
    let answers = values
        .iter()
        .map(|(t, v)| Answer::expert(EXPERT, t.clone(), *v))
        .collect();
    store.ingest(dag, &[], answers).expect("fixture statements are valid");
    store
}

fn abc(b: bool) -> Dag {
    let mut vars = vec![Variable::new("A", &["0", "1", "2"]).with_description("the parent A")];
    let mut edges = vec![("A", "C")];
    if b {
        vars.push(Variable::new("B", &["0", "1"]).with_description("the parent B"));
        edges.push(("B", "C"));
    }
    vars.push(Variable::new("C", &["c", "not_c"]).with_description("the child C"));
    Dag::from_edges(vars, &edges).unwrap()
}

fn m(v: &str, s: &str) -> Target {
    Target::marginal(v, s)
}

fn k(c: &str, s: &str, p: &str, ps: &str) -> Target {
    Target::conditional(c, s, &[(p, ps)])
}

/// A (ternary) → C (binary), with one inconsistent expert answer set.
pub fn single_parent() -> (Dag, ElicitationStore) {
    let dag = abc(false);
    let store = store_from(
        &dag,
        &[
            (m("C", "c"), 0.25),
            (k("C", "c", "A", "0"), 0.05),
            (k("C", "c", "A", "1"), 0.25),
            (k("C", "c", "A", "2"), 0.30),
            (m("A", "0"), 0.33),
            (m("A", "1"), 0.66),
            (m("A", "2"), 0.01),
        ],
    );
    (dag, store)
}

/// A (ternary) → C ← B (binary); the stated P(C) sits on the edge of the
/// C|A conditionals.
pub fn two_parent() -> (Dag, ElicitationStore) {
    let dag = abc(true);
    let store = store_from(
        &dag,
        &[
            (m("C", "c"), 0.05),
            (k("C", "c", "A", "0"), 0.01),
            (k("C", "c", "A", "1"), 0.03),
            (k("C", "c", "A", "2"), 0.05),
            (m("A", "0"), 0.33),
            (m("A", "1"), 0.66),
            (m("A", "2"), 0.01),
            (k("C", "c", "B", "0"), 0.10),
            (k("C", "c", "B", "1"), 0.03),
            (m("B", "0"), 0.10),
            (m("B", "1"), 0.90),
        ],
    );
    (dag, store)
}

/// A → C where every conditional equals P(C=c) = `value` and P(A) = `weights`.
pub fn constant_pair(value: f64, weights: &[f64]) -> (Dag, ElicitationStore) {
    let states: Vec<String> = (0..weights.len()).map(|i| i.to_string()).collect();
    let refs: Vec<&str> = states.iter().map(String::as_str).collect();
    let dag = Dag::from_edges(
        vec![Variable::new("A", &refs), Variable::new("C", &["c", "not_c"])],
        &[("A", "C")],
    )
    .unwrap();
    let mut values = vec![(m("C", "c"), value)];
    for (s, w) in states.iter().zip(weights) {
        values.push((k("C", "c", "A", s), value));
        values.push((m("A", s), *w));
    }
    let store = store_from(&dag, &values);
    (dag, store)
}

/// The two-parent network with every conditional of C equal to `conditional`
/// and P(C=c) = `marginal`.
pub fn two_parent_constant(conditional: f64, marginal: f64) -> (Dag, ElicitationStore) {
    let dag = abc(true);
    let mut values = vec![(m("C", "c"), marginal)];
    for (p, states, weights) in [("A", &["0", "1", "2"][..], &[0.33, 0.66, 0.01][..]), ("B", &["0", "1"], &[0.1, 0.9])] {
        for (s, w) in states.iter().zip(weights) {
            values.push((k("C", "c", p, s), conditional));
            values.push((m(p, s), *w));
        }
    }
    let store = store_from(&dag, &values);
    (dag, store)
}

/// Four binary variables: D → A, D → B, A → C, B → C.
pub fn diamond() -> Dag {
    let bin = |id: &str| Variable::new(id, &["yes", "no"]);
    Dag::from_edges(
        vec![bin("A"), bin("B"), bin("C"), bin("D")],
        &[("D", "A"), ("D", "B"), ("A", "C"), ("B", "C")],
    )
    .unwrap()
}

/// Variables of the application network that have three states.
pub const APPLICATION_TERNARY: [&str; 5] = ["Ab", "Ad", "Ag", "M3", "O2"];

const APPLICATION_GROUPS: [(&str, &[&str]); 4] = [
    ("environment", &["Ab", "Ad", "Ag", "PI2", "PI3", "PI4", "PI6", "DI", "DJ"]),
    ("degradation", &["M1'", "M1''", "M2", "M3", "M4", "M5", "M6"]),
    ("observation", &["O1", "O2", "O2'", "O2''", "O5"]),
    ("interest", &["E"]),
];

const APPLICATION_PARENTS: [(&str, &[&str]); 13] = [
    ("M1'", &["Ag", "DJ"]),
    ("M1''", &["DJ", "PI2"]),
    ("M2", &["Ag", "PI3"]),
    ("M3", &["Ad", "PI3"]),
    ("M4", &["Ab", "PI4", "PI6"]),
    ("M5", &["DI", "PI3"]),
    ("M6", &["Ad", "Ab"]),
    ("O1", &["M1''", "M4", "M5", "M6"]),
    ("O5", &["M3", "M4", "M5", "M6"]),
    ("O2", &["M5"]),
    ("O2''", &["M2", "M3", "M4", "M6", "O2"]),
    ("O2'", &["M1'", "M1''", "M2", "M3", "M4", "M6", "O2''"]),
    ("E", &["O1", "O5", "O2'"]),
];

/// The 22-variable pump degradation network: environment variables feed
/// degradation mechanisms, which feed observations, which feed the system
/// state `E`.
pub fn application_dag() -> Dag {
    let mut vars = Vec::new();
    for (group, ids) in APPLICATION_GROUPS {
        for id in ids {
            let v = if APPLICATION_TERNARY.contains(id) {
                Variable::new(*id, &["high", "medium", "low"])
            } else {
                Variable::new(*id, &["yes", "no"])
            };
            vars.push(v.with_group(group).with_description(format!("{group} variable {id}")));
        }
    }
    let mut edges = Vec::new();
    for (child, parents) in APPLICATION_PARENTS {
        for p in parents {
            edges.push((*p, child));
        }
    }
    Dag::from_edges(vars, &edges).unwrap()
}

pub const APPLICATION_SEED: u64 = 20_070_601;

/// Seeded ground-truth tables for the application network. Binary entries
/// lie in [0.05, 0.95]; ternary rows are normalised weights drawn from
/// [0.2, 1].
pub fn application_truth() -> Network {
    let dag = application_dag();
    let mut rng = ChaCha8Rng::seed_from_u64(APPLICATION_SEED);
    let mut cpts = Vec::new();
    for i in 0..dag.len() {
        let rows: usize = dag.parents(i).iter().map(|&p| dag.cardinality(p)).product();
        let card = dag.cardinality(i);
        let table = (0..rows)
            .map(|_| {
                if card == 2 {
                    let p: f64 = rng.gen_range(0.05..=0.95);
                    vec![p, 1.0 - p]
                } else {
                    let w: Vec<f64> = (0..card).map(|_| rng.gen_range(0.2..=1.0)).collect();
                    let z: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / z).collect()
                }
            })
            .collect();
        let parents = dag.parent_ids(i);
        cpts.push(Cpt::given(&dag.variable(i).id, &parents, table));
    }
    Network::new(dag, cpts).unwrap()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Every marginal and first-order conditional of the ground truth, rounded
/// to four decimals, as one expert's answers.
pub fn application_answers(truth: &Network) -> Vec<Answer> {
    let dag = truth.dag();
    let mut out = Vec::new();
    for i in dag.topological_order() {
        let v = dag.variable(i);
        let asked = &v.states[..v.states.len() - 1];
        let prior = truth.posterior(&v.id, &Evidence::new()).unwrap();
        for (s, p) in asked.iter().zip(&prior.distribution) {
            out.push(Answer::expert(EXPERT, Target::marginal(&v.id, s), round4(*p)));
        }
        for p in dag.parent_ids(i) {
            for ps in &dag.get(p).unwrap().states {
                let post = truth.posterior(&v.id, &Evidence::new().with(p, ps)).unwrap();
                for (s, x) in asked.iter().zip(&post.distribution) {
                    out.push(Answer::expert(EXPERT, Target::conditional(&v.id, s, &[(p, ps)]), round4(*x)));
                }
            }
        }
    }
    out
}

pub fn application_store() -> (Dag, ElicitationStore) {
    let truth = application_truth();
    let answers = application_answers(&truth);
    let dag = truth.dag().clone();
    let mut store = ElicitationStore::new();
    store.ingest(&dag, &[], answers).expect("fixture answers are valid");
    (dag, store)
}
