//! Dense discrete factors and variable elimination.

use std::collections::BTreeSet;

/// A table over a sorted set of variables; the last variable varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    /// `vars` need not be sorted; values are laid out in the given order and
    /// re-laid out internally.
    pub fn new(vars: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Factor {
        assert_eq!(vars.len(), cards.len());
        assert_eq!(values.len(), cards.iter().product::<usize>());
        let mut order: Vec<usize> = (0..vars.len()).collect();
        order.sort_by_key(|&i| vars[i]);
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return Factor { vars, cards, values };
        }
        let sorted_vars: Vec<usize> = order.iter().map(|&i| vars[i]).collect();
        let sorted_cards: Vec<usize> = order.iter().map(|&i| cards[i]).collect();
        let src_strides = strides(&cards);
        let mut out = vec![0.0; values.len()];
        let mut idx = vec![0usize; vars.len()];
        for slot in out.iter_mut() {
            let src: usize = order.iter().enumerate().map(|(k, &o)| idx[k] * src_strides[o]).sum();
            *slot = values[src];
            advance(&mut idx, &sorted_cards);
        }
        Factor {
            vars: sorted_vars,
            cards: sorted_cards,
            values: out,
        }
    }

    pub fn scalar(value: f64) -> Factor {
        Factor {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Value at an assignment given in `vars()` order.
    pub fn get(&self, states: &[usize]) -> f64 {
        let s = strides(&self.cards);
        self.values[states.iter().zip(&s).map(|(a, b)| a * b).sum::<usize>()]
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let vars: Vec<usize> = self
            .vars
            .iter()
            .chain(&other.vars)
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cards: Vec<usize> = vars.iter().map(|v| self.card_of(*v).or(other.card_of(*v)).unwrap()).collect();
        let map_a = projection(&vars, &self.vars, &self.cards);
        let map_b = projection(&vars, &other.vars, &other.cards);
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut idx = vec![0usize; vars.len()];
        for _ in 0..size {
            let a: usize = idx.iter().zip(&map_a).map(|(i, s)| i * s).sum();
            let b: usize = idx.iter().zip(&map_b).map(|(i, s)| i * s).sum();
            values.push(self.values[a] * other.values[b]);
            advance(&mut idx, &cards);
        }
        Factor { vars, cards, values }
    }

    pub fn sum_out(&self, var: usize) -> Factor {
        let Some(pos) = self.vars.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        let k = cards.remove(pos);
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for s in 0..k {
                let base = (o * k + s) * inner;
                for i in 0..inner {
                    values[o * inner + i] += self.values[base + i];
                }
            }
        }
        Factor { vars, cards, values }
    }

    /// Restricts `var` to `state` and drops it.
    pub fn reduce(&self, var: usize, state: usize) -> Factor {
        let Some(pos) = self.vars.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        let k = cards.remove(pos);
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * k + state) * inner;
            values.extend_from_slice(&self.values[base..base + inner]);
        }
        Factor { vars, cards, values }
    }

    pub fn normalized(&self) -> Option<Factor> {
        let z = self.total();
        if z <= 0.0 || !z.is_finite() {
            return None;
        }
        Some(Factor {
            vars: self.vars.clone(),
            cards: self.cards.clone(),
            values: self.values.iter().map(|v| v / z).collect(),
        })
    }

    fn card_of(&self, var: usize) -> Option<usize> {
        self.vars.iter().position(|&v| v == var).map(|i| self.cards[i])
    }
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

// stride of each `target` variable inside a factor over `sub`, 0 if absent
fn projection(target: &[usize], sub: &[usize], sub_cards: &[usize]) -> Vec<usize> {
    let s = strides(sub_cards);
    target
        .iter()
        .map(|v| sub.iter().position(|x| x == v).map_or(0, |i| s[i]))
        .collect()
}

fn advance(idx: &mut [usize], cards: &[usize]) {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < cards[i] {
            return;
        }
        idx[i] = 0;
    }
}

/// Sums every variable not in `keep` out of the product of `factors`.
/// Elimination order: fewest neighbours first, ties broken by `name`.
pub fn eliminate<F>(mut factors: Vec<Factor>, keep: &BTreeSet<usize>, name: F) -> (Factor, Vec<usize>)
where
    F: Fn(usize) -> String,
{
    let mut pending: BTreeSet<usize> = factors
        .iter()
        .flat_map(|f| f.vars.iter().copied())
        .filter(|v| !keep.contains(v))
        .collect();
    let mut order = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let var = *pending
            .iter()
            .min_by_key(|&&v| {
                let degree = factors
                    .iter()
                    .filter(|f| f.vars.contains(&v))
                    .flat_map(|f| f.vars.iter().copied())
                    .filter(|&u| u != v)
                    .collect::<BTreeSet<_>>()
                    .len();
                (degree, name(v))
            })
            .unwrap();
        pending.remove(&var);
        order.push(var);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&var));
        factors = rest;
        let merged = touching.iter().skip(1).fold(touching[0].clone(), |acc, f| acc.product(f));
        factors.push(merged.sum_out(var));
    }
    let result = factors
        .iter()
        .fold(Factor::scalar(1.0), |acc, f| acc.product(f));
    (result, order)
}
