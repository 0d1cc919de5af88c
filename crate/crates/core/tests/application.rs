mod common;

use std::time::Instant;

use bnelicit::fixtures::{application_store, application_truth};
use bnelicit::graph::Dag;
use bnelicit::inference::MaintenanceAction;
use bnelicit::synthesis::{parent_joint, synthesize_network, Cpt, Synthesis, SynthesisMode};
use bnelicit::{ElicitationStore, Evidence, Network};
use bnelicit::elicitation::Target;

fn synthesized(mode: SynthesisMode) -> (Dag, ElicitationStore, Synthesis) {
    let (dag, store) = application_store();
    let s = synthesize_network(&dag, &store, &[], mode).unwrap();
    (dag, store, s)
}

/// The sub-network over `ids` and all their ancestors; an ancestral set has
/// the same marginals as the full network.
fn ancestral(net: &Network, ids: &[&str]) -> Network {
    let dag = net.dag();
    let idx: Vec<usize> = ids.iter().map(|id| dag.index_of(id).unwrap()).collect();
    let mut keep = dag.ancestors(&idx);
    keep.extend(idx);
    let vars = keep.iter().map(|&i| dag.variable(i).clone()).collect();
    let mut edges = Vec::new();
    for &i in &keep {
        for p in dag.parent_ids(i) {
            edges.push((p.to_string(), dag.variable(i).id.clone()));
        }
    }
    let cpts: Vec<Cpt> = keep.iter().map(|&i| net.cpts()[i].clone()).collect();
    Network::new(Dag::new(vars, &edges).unwrap(), cpts).unwrap()
}

fn stated(store: &ElicitationStore, child: &str, state: &str, given: Option<(&str, &str)>) -> f64 {
    let t = match given {
        None => Target::marginal(child, state),
        Some(g) => Target::conditional(child, state, &[g]),
    };
    store.value(&t).unwrap()
}

fn prob(net: &Network, var: &str, state: &str, ev: &[(&str, &str)]) -> f64 {
    let e = ev.iter().fold(Evidence::new(), |e, (v, s)| e.with(v, s));
    net.posterior(var, &e).unwrap().probability(state).unwrap()
}

#[test]
fn synthesizes_without_errors_in_both_modes() {
    for mode in [SynthesisMode::Normalized, SynthesisMode::Raw] {
        let (dag, _, s) = synthesized(mode);
        assert_eq!(s.network.cpts().len(), dag.len());
        assert_eq!(s.plan.nodes.len(), dag.len());
        for d in &s.diagnostics {
            assert!(d.drift.is_finite());
        }
    }
}

#[test]
fn posterior_of_e_is_fast() {
    let (_, _, s) = synthesized(SynthesisMode::Normalized);
    let start = Instant::now();
    let p = s.network.posterior("E", &Evidence::new().with("Ab", "high")).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!((p.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn sensitivity_covers_the_environment() {
    let (_, _, s) = synthesized(SynthesisMode::Normalized);
    let roots = s.network.roots();
    let report = s.network.sensitivity("E", "yes", &roots, &Evidence::new()).unwrap();
    assert_eq!(report.entries.len(), roots.len());
    for id in ["Ab", "Ad", "PI3"] {
        let r = report.rank_of(id).unwrap();
        assert!(report.entries[r].spread > 0.0, "{id}");
    }
    assert!(report.entries.windows(2).all(|w| w[0].spread >= w[1].spread));
}

#[test]
fn joint_probability_spot_check() {
    let truth = application_truth();
    let dag = truth.dag();
    let states: Vec<usize> = (0..dag.len()).map(|i| i % dag.cardinality(i)).collect();
    let mut direct = 1.0;
    let mut ev = Evidence::new();
    for (i, &s) in states.iter().enumerate() {
        let mut row = 0;
        for &p in dag.parents(i) {
            row = row * dag.cardinality(p) + states[p];
        }
        direct *= truth.cpts()[i].rows[row][s];
        ev = ev.with(&dag.variable(i).id, &dag.variable(i).states[s]);
    }
    assert!((truth.joint_probability(&ev).unwrap() - direct).abs() < 1e-18);
}

#[test]
fn vacuous_maintenance_is_a_no_op() {
    let (_, _, s) = synthesized(SynthesisMode::Normalized);
    let base = s.network.posterior("E", &Evidence::new()).unwrap();
    for target in ["Ab", "PI3"] {
        let a = MaintenanceAction::vacuous(&s.network, "Inspect", target).unwrap();
        let after = s.network.apply_maintenance(&a).unwrap().posterior("E", &Evidence::new()).unwrap();
        for (x, y) in base.distribution.iter().zip(&after.distribution) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn o1_parent_joint_matches_enumeration_and_factorization() {
    let (dag, _, s) = synthesized(SynthesisMode::Normalized);
    let net = &s.network;
    let parents = ["M1''", "M4", "M5", "M6"];
    let idx: Vec<usize> = parents.iter().map(|p| dag.index_of(p).unwrap()).collect();
    let cpts: Vec<Option<Cpt>> = net.cpts().iter().cloned().map(Some).collect();
    let got = parent_joint(&dag, &cpts, &idx).unwrap();

    let sub = ancestral(net, &parents);
    let j = common::joint(&sub);
    let sub_idx: Vec<usize> = parents.iter().map(|p| sub.dag().index_of(p).unwrap()).collect();
    let want = common::table(sub.dag(), &j, &sub_idx, &[]);
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }

    // M1'' and M5 are independent of the rest; M4 and M6 share Ab
    let mut k = 0;
    for m1 in ["yes", "no"] {
        for m4 in ["yes", "no"] {
            for m5 in ["yes", "no"] {
                for m6 in ["yes", "no"] {
                    let shared: f64 = ["high", "medium", "low"]
                        .iter()
                        .map(|ab| {
                            prob(net, "M4", m4, &[("Ab", ab)]) * prob(net, "M6", m6, &[("Ab", ab)]) * prob(net, "Ab", ab, &[])
                        })
                        .sum();
                    let f = prob(net, "M1''", m1, &[]) * prob(net, "M5", m5, &[]) * shared;
                    assert!((got[k] - f).abs() < 1e-12);
                    k += 1;
                }
            }
        }
    }
}

#[test]
fn o1_closed_form_agrees_with_the_synthesized_row() {
    // P(O1 | M1'',M4,M5,M6) = Π P(O1|Mi) P(M4) P(M6) / (P(O1)^3 Σ_Ab P(M4|Ab) P(M6|Ab) P(Ab)),
    // which is also P(M1''|O1)P(M4|O1)P(M5|O1)P(M6|O1)P(O1) / P(M1'',M4,M5,M6)
    let (dag, store, s) = synthesized(SynthesisMode::Normalized);
    let net = &s.network;
    let o1 = dag.index_of("O1").unwrap();
    let cpt = &net.cpts()[o1];
    let parents = ["M1''", "M4", "M5", "M6"];
    let rows: Vec<[&str; 4]> = vec![["yes", "yes", "yes", "yes"], ["no", "yes", "no", "yes"], ["yes", "no", "no", "no"]];
    for pick in rows {
        let row = cpt.row_index(
            &dag,
            o1,
            &{
                let mut st = vec![0; dag.len()];
                for (p, v) in parents.iter().zip(pick) {
                    let i = dag.index_of(p).unwrap();
                    st[i] = dag.state_index(i, v).unwrap();
                }
                st
            },
        );
        let ev: Vec<(&str, &str)> = parents.iter().copied().zip(pick).collect();
        // P(M1'',M4,M5,M6) by the chain rule
        let mut joint = 1.0;
        let mut given: Vec<(&str, &str)> = Vec::new();
        for (v, st) in &ev {
            joint *= prob(net, v, st, &given);
            given.push((v, st));
        }
        let shared: f64 = ["high", "medium", "low"]
            .iter()
            .map(|ab| prob(net, "M4", pick[1], &[("Ab", ab)]) * prob(net, "M6", pick[3], &[("Ab", ab)]) * prob(net, "Ab", ab, &[]))
            .sum();
        let mut printed = Vec::new();
        let mut bayes = Vec::new();
        for o in ["yes", "no"] {
            let p_o = stated(&store, "O1", "yes", None);
            let p_o = if o == "yes" { p_o } else { 1.0 - p_o };
            let cond = |m: &str, ms: &str| {
                let v = stated(&store, "O1", "yes", Some((m, ms)));
                if o == "yes" { v } else { 1.0 - v }
            };
            let conds: f64 = parents.iter().zip(pick).map(|(m, ms)| cond(m, ms)).product();
            let pm = |i: usize| prob(net, parents[i], pick[i], &[]);
            printed.push(conds * pm(1) * pm(3) / (p_o.powi(3) * shared));
            // P(Mi | O1) by Bayes from the same stated and network marginals
            let likelihood: f64 = (0..4).map(|i| cond(parents[i], pick[i]) * pm(i) / p_o).product();
            bayes.push(likelihood * p_o / joint);
        }
        for (a, b) in printed.iter().zip(&bayes) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
        let z: f64 = printed.iter().sum();
        for (a, b) in printed.iter().zip(&cpt.rows[row]) {
            assert!((a / z - b).abs() < 1e-12);
        }
    }
}

#[test]
fn e_closed_form_needs_the_observation_marginals() {
    // P(E | O1,O5,O2') = P(O1|E)P(O5|E)P(O2'|E)P(E) / P(O1,O5,O2')
    //                  = Π P(E|Oi) Π P(Oi) / (P(E)^2 P(O1,O5,O2'))
    let (dag, store, s) = synthesized(SynthesisMode::Normalized);
    let net = &s.network;
    let e = dag.index_of("E").unwrap();
    let parents = ["O1", "O5", "O2'"];
    let pick = ["yes", "no", "yes"];
    let ev: Vec<(&str, &str)> = parents.iter().copied().zip(pick).collect();
    let mut p_obs = 1.0;
    let mut given: Vec<(&str, &str)> = Vec::new();
    for (v, st) in &ev {
        p_obs *= prob(net, v, st, &given);
        given.push((v, st));
    }
    let mut with_marginals = Vec::new();
    let mut bayes = Vec::new();
    let mut without = Vec::new();
    for es in ["yes", "no"] {
        let flip = |v: f64| if es == "yes" { v } else { 1.0 - v };
        let pe = flip(stated(&store, "E", "yes", None));
        let conds: f64 = ev.iter().map(|(o, os)| flip(stated(&store, "E", "yes", Some((o, os))))).product();
        let marg: f64 = ev.iter().map(|(o, os)| prob(net, o, os, &[])).product();
        without.push(conds / (pe * pe * p_obs));
        with_marginals.push(conds * marg / (pe * pe * p_obs));
        let lik: f64 = ev
            .iter()
            .map(|(o, os)| flip(stated(&store, "E", "yes", Some((o, os)))) * prob(net, o, os, &[]) / pe)
            .product();
        bayes.push(lik * pe / p_obs);
    }
    for (a, b) in with_marginals.iter().zip(&bayes) {
        assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
    }
    assert!((without[0] - bayes[0]).abs() > 1e-6);
    // the omitted factor does not depend on E, so normalised rows agree
    let mut st = vec![0; dag.len()];
    for (p, v) in ev {
        let i = dag.index_of(p).unwrap();
        st[i] = dag.state_index(i, v).unwrap();
    }
    let row = &net.cpts()[e].rows[net.cpts()[e].row_index(&dag, e, &st)];
    let z: f64 = without.iter().sum();
    for (a, b) in without.iter().zip(row) {
        assert!((a / z - b).abs() < 1e-12);
    }
}
