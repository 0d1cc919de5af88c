use serde::{Deserialize, Serialize};

use super::{ElicitationStore, Target};
use crate::graph::Dag;
use crate::loglinear::InteractionSpec;

/// Marginals below this make the event "rare".
pub const RARE_EVENT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub target: Target,
    pub prompt: String,
    /// A conditioning event is rare; the question is asked for the event and
    /// its complement, never dropped.
    pub rare_event: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub questions: Vec<Question>,
}

impl Questionnaire {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn targets(&self) -> impl Iterator<Item = &Target> {
        self.questions.iter().map(|q| &q.target)
    }

    /// Questions the store has no active answer for.
    pub fn unanswered<'a>(&'a self, store: &'a ElicitationStore) -> impl Iterator<Item = &'a Question> {
        self.questions.iter().filter(|q| store.active(&q.target).is_none())
    }

    /// Flags conditional questions whose conditioning event, or its
    /// complement, has an answered marginal below [`RARE_EVENT_THRESHOLD`],
    /// and rephrases them to ask about presence and absence explicitly.
    pub fn mark_rare_events(&mut self, dag: &Dag, store: &ElicitationStore) {
        for q in &mut self.questions {
            let rare: Vec<String> = q
                .target
                .given()
                .iter()
                .filter(|c| is_rare(dag, store, &c.variable, &c.state))
                .map(|c| c.variable.clone())
                .collect();
            if rare.is_empty() || q.rare_event {
                continue;
            }
            q.rare_event = true;
            q.prompt = format!(
                "{} (rare conditioning on {}: answer for its presence here; its absence is asked separately)",
                q.prompt,
                rare.join(", ")
            );
        }
    }
}

fn is_rare(dag: &Dag, store: &ElicitationStore, var: &str, state: &str) -> bool {
    let Some(idx) = dag.index_of(var) else {
        return false;
    };
    let Ok(dist) = store.marginal_distribution(dag, idx) else {
        return false;
    };
    let Some(s) = dag.variable(idx).state_index(state) else {
        return false;
    };
    let event = dist[s];
    event < RARE_EVENT_THRESHOLD || 1.0 - event < RARE_EVENT_THRESHOLD
}

fn describe(dag: &Dag, var: &str, state: &str) -> String {
    let v = dag.get(var).expect("questions are built from the network");
    format!("{} is {state}", v.display_name())
}

/// One marginal question per non-reference state, then first-order
/// conditionals for every parent and parent state, then second-order
/// conditionals for kept interactions. Variables in topological order.
pub fn generate_questionnaire(dag: &Dag, kept: &[InteractionSpec]) -> Questionnaire {
    let mut questions = Vec::new();
    for c in dag.topological_order() {
        let var = dag.variable(c);
        let asked = &var.states[..var.states.len() - 1];
        for s in asked {
            questions.push(Question {
                target: Target::marginal(&var.id, s),
                prompt: format!("How likely is it that {}?", describe(dag, &var.id, s)),
                rare_event: false,
            });
        }
        let mut parents = dag.parent_ids(c);
        parents.sort();
        for p in &parents {
            let pv = dag.get(p).unwrap();
            for ps in &pv.states {
                for s in asked {
                    questions.push(Question {
                        target: Target::conditional(&var.id, s, &[(p, ps)]),
                        prompt: format!(
                            "Knowing that {}, how likely is it that {}?",
                            describe(dag, p, ps),
                            describe(dag, &var.id, s)
                        ),
                        rare_event: false,
                    });
                }
            }
        }
        let mut mine: Vec<&InteractionSpec> = kept.iter().filter(|k| k.child == var.id).collect();
        mine.sort_by(|a, b| a.parents.cmp(&b.parents));
        mine.dedup_by(|a, b| a.parents == b.parents);
        for k in mine {
            let [a, b] = &k.parents;
            let (Some(av), Some(bv)) = (dag.get(a), dag.get(b)) else {
                continue;
            };
            for sa in &av.states {
                for sb in &bv.states {
                    for s in asked {
                        questions.push(Question {
                            target: Target::conditional(&var.id, s, &[(a, sa), (b, sb)]),
                            prompt: format!(
                                "Knowing that {} and {}, how likely is it that {}?",
                                describe(dag, a, sa),
                                describe(dag, b, sb),
                                describe(dag, &var.id, s)
                            ),
                            rare_event: false,
                        });
                    }
                }
            }
        }
    }
    Questionnaire { questions }
}
