//! Brute-force oracles: full joint enumeration, independent of the factor
//! code under test.
#![allow(dead_code)]

use bnelicit::elicitation::{Answer, Target};
use bnelicit::graph::{Dag, Variable};
use bnelicit::synthesis::Cpt;
use bnelicit::{ElicitationStore, Network};
use rand::Rng;

/// Joint probability of every full assignment, variable 0 slowest.
pub fn joint(net: &Network) -> Vec<f64> {
    let dag = net.dag();
    let cards: Vec<usize> = (0..dag.len()).map(|i| dag.cardinality(i)).collect();
    let size: usize = cards.iter().product();
    let mut out = Vec::with_capacity(size);
    let mut states = vec![0usize; cards.len()];
    for _ in 0..size {
        let mut p = 1.0;
        for (i, cpt) in net.cpts().iter().enumerate() {
            let mut row = 0;
            for &q in dag.parents(i) {
                row = row * cards[q] + states[q];
            }
            p *= cpt.rows[row][states[i]];
        }
        out.push(p);
        next(&mut states, &cards);
    }
    out
}

pub fn next(states: &mut [usize], cards: &[usize]) {
    for i in (0..states.len()).rev() {
        states[i] += 1;
        if states[i] < cards[i] {
            return;
        }
        states[i] = 0;
    }
}

/// Σ of the joint over assignments matching `fixed`, grouped by the states
/// of `vars` (first var slowest).
pub fn table(dag: &Dag, joint: &[f64], vars: &[usize], fixed: &[(usize, usize)]) -> Vec<f64> {
    let cards: Vec<usize> = (0..dag.len()).map(|i| dag.cardinality(i)).collect();
    let size: usize = vars.iter().map(|&v| cards[v]).product();
    let mut out = vec![0.0; size];
    let mut states = vec![0usize; cards.len()];
    for &p in joint {
        if fixed.iter().all(|&(v, s)| states[v] == s) {
            let mut idx = 0;
            for &v in vars {
                idx = idx * cards[v] + states[v];
            }
            out[idx] += p;
        }
        next(&mut states, &cards);
    }
    out
}

pub fn posterior(dag: &Dag, joint: &[f64], query: usize, evidence: &[(usize, usize)]) -> Vec<f64> {
    let t = table(dag, joint, &[query], evidence);
    let z: f64 = t.iter().sum();
    t.into_iter().map(|x| x / z).collect()
}

pub fn random_row<R: Rng>(rng: &mut R, card: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..card).map(|_| rng.gen_range(0.05..1.0)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn var(id: &str, card: usize) -> Variable {
    let states: Vec<String> = (0..card).map(|s| format!("s{s}")).collect();
    let refs: Vec<&str> = states.iter().map(String::as_str).collect();
    Variable::new(id, &refs)
}

/// Random DAG over cards, each node taking up to `max_parents` earlier
/// nodes as parents, with random positive tables.
pub fn random_network<R: Rng>(rng: &mut R, cards: &[usize], max_parents: usize) -> Network {
    let vars: Vec<Variable> = cards.iter().enumerate().map(|(i, &c)| var(&format!("V{i:02}"), c)).collect();
    let mut edges = Vec::new();
    for i in 1..cards.len() {
        let k = rng.gen_range(0..=max_parents.min(i));
        let mut pool: Vec<usize> = (0..i).collect();
        for _ in 0..k {
            let j = pool.swap_remove(rng.gen_range(0..pool.len()));
            edges.push((vars[j].id.clone(), vars[i].id.clone()));
        }
    }
    let dag = Dag::new(vars, &edges).unwrap();
    let cpts = (0..dag.len())
        .map(|i| {
            let rows: usize = dag.parents(i).iter().map(|&p| dag.cardinality(p)).product();
            let table = (0..rows).map(|_| random_row(rng, dag.cardinality(i))).collect();
            Cpt::given(&dag.variable(i).id, &dag.parent_ids(i), table)
        })
        .collect();
    Network::new(dag, cpts).unwrap()
}

/// Exact marginals and first-order conditionals of a network, from its
/// enumerated joint.
pub fn exact_store(net: &Network) -> ElicitationStore {
    let dag = net.dag();
    let j = joint(net);
    let mut answers = Vec::new();
    for i in 0..dag.len() {
        let v = dag.variable(i);
        let asked = &v.states[..v.states.len() - 1];
        let m = table(dag, &j, &[i], &[]);
        for (s, p) in asked.iter().zip(&m) {
            answers.push(Answer::expert("oracle", Target::marginal(&v.id, s), *p));
        }
        for &p in dag.parents(i) {
            let pv = dag.variable(p);
            for (ps_idx, ps) in pv.states.iter().enumerate() {
                let c = posterior(dag, &j, i, &[(p, ps_idx)]);
                for (s, x) in asked.iter().zip(&c) {
                    answers.push(Answer::expert("oracle", Target::conditional(&v.id, s, &[(&pv.id, ps)]), *x));
                }
            }
        }
    }
    let mut store = ElicitationStore::new();
    store.ingest(dag, &[], answers).unwrap();
    store
}

#[derive(Default)]
pub struct Builder {
    pub vars: Vec<Variable>,
    pub edges: Vec<(String, String)>,
    pub cpts: Vec<Cpt>,
}

impl Builder {
    pub fn new() -> Self {
        Builder {
            vars: vec![],
            edges: vec![],
            cpts: vec![],
        }
    }

    pub fn add(&mut self, v: Variable, parents: &[&str], rows: Vec<Vec<f64>>) {
        for p in parents {
            self.edges.push((p.to_string(), v.id.clone()));
        }
        self.cpts.push(Cpt::given(&v.id, parents, rows));
        self.vars.push(v);
    }

    pub fn build(self) -> Network {
        Network::new(Dag::new(self.vars, &self.edges).unwrap(), self.cpts).unwrap()
    }
}

/// Children `p_i` of a latent, then a collector whose table is the latent's
/// posterior given the `p_i`: the collector's parents are exactly
/// independent given it. Collectors become the next latent.
pub fn gadget_network<R: Rng>(rng: &mut R, max_vars: usize) -> Network {
    let mut b = Builder::new();
    let card0 = rng.gen_range(2..=3);
    let prior = random_row(rng, card0);
    b.add(var("Z", card0), &[], vec![prior.clone()]);
    let mut latent = ("Z".to_string(), card0, prior);
    let mut gadget = 0;
    while max_vars - b.vars.len() >= 3 {
        let room = max_vars - b.vars.len() - 1;
        let k = rng.gen_range(2..=room.min(3));
        let irrelevant = room > k && rng.gen_bool(0.3);
        let (lid, lcard, lprior) = latent.clone();
        let mut kids: Vec<(String, usize, Vec<Vec<f64>>)> = Vec::new();
        for i in 0..k {
            let id = format!("G{gadget}P{i}");
            let card = rng.gen_range(2..=3);
            let rows: Vec<Vec<f64>> = (0..lcard).map(|_| random_row(rng, card)).collect();
            b.add(var(&id, card), &[&lid], rows.clone());
            kids.push((id, card, rows));
        }
        let mut parents: Vec<String> = kids.iter().map(|k| k.0.clone()).collect();
        let mut r_card = 1;
        if irrelevant {
            let id = format!("G{gadget}R");
            r_card = rng.gen_range(2..=3);
            let prior = random_row(rng, r_card);
            b.add(var(&id, r_card), &[], vec![prior]);
            parents.push(id);
        }
        let kid_cards: Vec<usize> = kids.iter().map(|k| k.1).collect();
        let combos: usize = kid_cards.iter().product();
        let mut rows = Vec::new();
        let mut a = vec![0usize; k];
        for _ in 0..combos {
            let w: Vec<f64> = (0..lcard)
                .map(|x| lprior[x] * kids.iter().zip(&a).map(|(kid, &s)| kid.2[x][s]).product::<f64>())
                .collect();
            let z: f64 = w.iter().sum();
            let row: Vec<f64> = w.into_iter().map(|v| v / z).collect();
            for _ in 0..r_card {
                rows.push(row.clone());
            }
            next(&mut a, &kid_cards);
        }
        let cid = format!("G{gadget}C");
        let refs: Vec<&str> = parents.iter().map(String::as_str).collect();
        b.add(var(&cid, lcard), &refs, rows);
        latent = (cid, lcard, lprior);
        gadget += 1;
    }
    b.build()
}
