mod common;

use bnelicit::inference::{InferenceError, MaintenanceAction, Strategy};
use bnelicit::synthesis::Cpt;
use bnelicit::{Evidence, Network};
use common::{joint, posterior, random_network, random_row, table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn sized_network(rng: &mut ChaCha8Rng) -> Network {
    loop {
        let n = rng.gen_range(3..=12);
        let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=4)).collect();
        if cards.iter().product::<usize>() <= 1 << 20 {
            return random_network(rng, &cards, 3);
        }
    }
}

fn random_evidence(rng: &mut ChaCha8Rng, net: &Network, skip: usize) -> (Evidence, Vec<(usize, usize)>) {
    let dag = net.dag();
    let mut ev = Evidence::new();
    let mut idx = Vec::new();
    for i in 0..dag.len() {
        if i != skip && rng.gen_bool(0.25) {
            let s = rng.gen_range(0..dag.cardinality(i));
            let v = dag.variable(i);
            ev = ev.with(&v.id, &v.states[s]);
            idx.push((i, s));
        }
    }
    (ev, idx)
}

#[test]
fn posteriors_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..110 {
        let net = sized_network(&mut rng);
        let dag = net.dag();
        let j = joint(&net);
        assert!((j.iter().sum::<f64>() - 1.0).abs() < TOL);
        for _ in 0..4 {
            let q = rng.gen_range(0..dag.len());
            let (ev, idx) = random_evidence(&mut rng, &net, q);
            let got = net.posterior(&dag.variable(q).id, &ev).unwrap();
            let want = posterior(dag, &j, q, &idx);
            for (a, b) in got.distribution.iter().zip(&want) {
                assert!((a - b).abs() < TOL, "case {case}: {a} vs {b}");
            }
            let pe: f64 = table(dag, &j, &[q], &idx).iter().sum();
            assert!((got.evidence_probability - pe).abs() < TOL);
        }
    }
}

#[test]
fn joint_probability_is_the_table_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let net = random_network(&mut rng, &[2, 3, 2, 4, 2, 3], 2);
    let dag = net.dag();
    let j = joint(&net);
    // the oracle enumerates with variable 0 slowest
    let cards: Vec<usize> = (0..dag.len()).map(|i| dag.cardinality(i)).collect();
    let mut states = vec![0; dag.len()];
    for &p in &j {
        let mut ev = Evidence::new();
        for (i, &s) in states.iter().enumerate() {
            ev = ev.with(&dag.variable(i).id, &dag.variable(i).states[s]);
        }
        assert!((net.joint_probability(&ev).unwrap() - p).abs() < 1e-15);
        common::next(&mut states, &cards);
    }
    let partial = Evidence::new().with("V00", "s0");
    assert!(matches!(net.joint_probability(&partial), Err(InferenceError::IncompleteAssignment(_))));
}

#[test]
fn summing_out_is_coherent() {
    // P(X) = Σ_y P(X | Y=y) P(Y=y) for every pair of variables
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for _ in 0..20 {
        let net = sized_network(&mut rng);
        let dag = net.dag();
        let x = rng.gen_range(0..dag.len());
        let y = (x + 1 + rng.gen_range(0..dag.len() - 1)) % dag.len();
        let (xid, yv) = (&dag.variable(x).id, dag.variable(y));
        let px = net.posterior(xid, &Evidence::new()).unwrap().distribution;
        let py = net.posterior(&yv.id, &Evidence::new()).unwrap().distribution;
        let mut mixed = vec![0.0; px.len()];
        for (s, w) in yv.states.iter().zip(&py) {
            let c = net.posterior(xid, &Evidence::new().with(&yv.id, s)).unwrap();
            for (m, v) in mixed.iter_mut().zip(&c.distribution) {
                *m += w * v;
            }
        }
        for (a, b) in mixed.iter().zip(&px) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn evidence_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut net = random_network(&mut rng, &[2, 2], 0);
    let ev = Evidence::new().with("V00", "s0");
    assert!(matches!(net.posterior("V00", &ev), Err(InferenceError::QueryInEvidence(_))));
    // make V01 = s0 impossible
    let (dag, mut cpts) = net.into_parts();
    cpts[1] = Cpt::given("V01", &[], vec![vec![0.0, 1.0]]);
    net = Network::new(dag, cpts).unwrap();
    let ev = Evidence::new().with("V01", "s0");
    assert!(matches!(net.posterior("V00", &ev), Err(InferenceError::ZeroEvidenceProbability)));
    assert!(Evidence::parse("V00=s0,V00=s1").is_err());
}

#[test]
fn vacuous_maintenance_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..20 {
        let net = sized_network(&mut rng);
        let dag = net.dag();
        let roots = net.roots();
        let target = &roots[rng.gen_range(0..roots.len())];
        let action = MaintenanceAction::vacuous(&net, "Task", target).unwrap();
        let after = net.apply_maintenance(&action).unwrap();
        assert_eq!(after.dag().len(), dag.len() + 1);
        for v in dag.variables() {
            let a = net.posterior(&v.id, &Evidence::new()).unwrap().distribution;
            let b = after.posterior(&v.id, &Evidence::new()).unwrap().distribution;
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn certain_task_equals_replacing_the_root_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..20 {
        let net = sized_network(&mut rng);
        let roots = net.roots();
        let target = roots[rng.gen_range(0..roots.len())].clone();
        let t = net.dag().index_of(&target).unwrap();
        let card = net.dag().cardinality(t);
        let done = random_row(&mut rng, card);
        let action = MaintenanceAction {
            task: "Task".into(),
            states: vec!["yes".into(), "no".into()],
            prior: vec![1.0, 0.0],
            target: target.clone(),
            table: vec![done.clone(), random_row(&mut rng, card)],
            description: String::new(),
        };
        let with_task = net.apply_maintenance(&action).unwrap();
        let (dag, mut cpts) = net.clone().into_parts();
        cpts[t] = Cpt::given(&target, &[], vec![done]);
        let replaced = Network::new(dag.clone(), cpts).unwrap();
        let q = dag.variable(rng.gen_range(0..dag.len())).id.clone();
        let a = with_task.posterior(&q, &Evidence::new()).unwrap().distribution;
        let b = replaced.posterior(&q, &Evidence::new()).unwrap().distribution;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        // strategies are evaluated independently and in input order
        let strategies = vec![
            Strategy { name: "none".into(), actions: vec![] },
            Strategy { name: "task".into(), actions: vec![action.clone()] },
        ];
        let out = net.evaluate_strategies(&strategies, &q, &Evidence::new());
        assert_eq!(out[0].as_ref().unwrap().name, "none");
        let d = &out[1].as_ref().unwrap().posterior.distribution;
        for (x, y) in d.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn maintenance_on_non_roots_is_refused() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let net = loop {
        let n = random_network(&mut rng, &[2, 2, 2], 2);
        if n.roots().len() < 3 {
            break n;
        }
    };
    let dag = net.dag();
    let inner = (0..dag.len()).find(|&i| !dag.is_root(i)).unwrap();
    let mut action = MaintenanceAction::vacuous(&net, "Task", &net.roots()[0]).unwrap();
    action.target = dag.variable(inner).id.clone();
    assert!(matches!(net.apply_maintenance(&action), Err(InferenceError::TargetNotRoot(_))));
}
