//! Flattening: distribute concord siblings over a conflict child until at most a root `#` remains.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::structure::{canonize, CocoTree, Label, LeafId, PreStructure};

/// Distribute the concord node at `at` over its conflict child number `child`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FlatteningStep {
    pub at: Vec<usize>,
    pub child: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid flattening step at {at:?}/{child}: {reason}")]
pub struct FlattenError {
    pub at: Vec<usize>,
    pub child: usize,
    pub reason: &'static str,
}

/// Leaf counts 2, an n-ary `#` sums its children plus n-1, an n-ary concord multiplies them.
pub fn measure_mu(t: &CocoTree) -> u128 {
    match t {
        CocoTree::Leaf(_) => 2,
        CocoTree::Node(Label::Conf, cs) => {
            cs.iter().map(measure_mu).fold(0u128, u128::saturating_add).saturating_add(cs.len() as u128 - 1)
        }
        CocoTree::Node(Label::Conc, cs) => cs.iter().map(measure_mu).fold(1u128, u128::saturating_mul),
    }
}

pub fn flattening_steps(p: &PreStructure) -> Vec<FlatteningStep> {
    let mut out = Vec::new();
    for at in p.tree.node_addresses() {
        if let Some(CocoTree::Node(Label::Conc, cs)) = p.tree.at(&at) {
            if cs.len() < 2 {
                continue;
            }
            for (i, c) in cs.iter().enumerate() {
                if c.label() == Some(Label::Conf) {
                    out.push(FlatteningStep { at: at.clone(), child: i });
                }
            }
        }
    }
    out
}

/// Copies a subtree, giving every leaf a fresh id with the same link, dualizer and store.
fn copy_tree(p: &mut PreStructure, t: &CocoTree) -> CocoTree {
    match t {
        CocoTree::Leaf(l) => {
            let id: LeafId = p.fresh_leaf_id();
            let link = p.link(*l).clone();
            p.links.insert(id, link);
            if let Some(s) = p.witnesses.get(l).cloned() {
                p.witnesses.insert(id, s);
            }
            if let Some(s) = p.stores.get(l).cloned() {
                p.stores.insert(id, s);
            }
            CocoTree::Leaf(id)
        }
        CocoTree::Node(label, cs) => CocoTree::Node(*label, cs.iter().map(|c| copy_tree(p, c)).collect()),
    }
}

pub fn flatten_step(p: &PreStructure, s: &FlatteningStep) -> Result<PreStructure, FlattenError> {
    let err = |reason| FlattenError { at: s.at.clone(), child: s.child, reason };
    let Some(CocoTree::Node(Label::Conc, cs)) = p.tree.at(&s.at) else {
        return Err(err("target is not a concord node"));
    };
    if cs.len() < 2 {
        return Err(err("concord node has no other child"));
    }
    let Some(CocoTree::Node(Label::Conf, branches)) = cs.get(s.child) else {
        return Err(err("selected child is not a conflict node"));
    };
    let others: Vec<CocoTree> =
        cs.iter().enumerate().filter(|(i, _)| *i != s.child).map(|(_, c)| c.clone()).collect();
    let branches = branches.clone();
    let mut q = p.clone();
    let mut new_branches = Vec::new();
    for (i, b) in branches.iter().enumerate() {
        let mut kids = vec![b.clone()];
        for o in &others {
            kids.push(if i == 0 { o.clone() } else { copy_tree(&mut q, o) });
        }
        new_branches.push(CocoTree::Node(Label::Conc, kids));
    }
    *q.tree.at_mut(&s.at).expect("address checked") = CocoTree::Node(Label::Conf, new_branches);
    q.tree = canonize(&q.tree);
    Ok(q)
}

/// Flattens to normal form, choosing steps with a seeded generator; also returns μ after each step.
pub fn normalize_traced(p: &PreStructure, seed: u64) -> (PreStructure, Vec<u128>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = p.clone();
    cur.tree = canonize(&cur.tree);
    let mut mus = vec![measure_mu(&cur.tree)];
    loop {
        let steps = flattening_steps(&cur);
        let Some(s) = steps.choose(&mut rng) else { break };
        cur = flatten_step(&cur, s).expect("enumerated steps apply");
        mus.push(measure_mu(&cur.tree));
    }
    (cur, mus)
}

pub fn normalize(p: &PreStructure, seed: u64) -> PreStructure {
    normalize_traced(p, seed).0
}

/// At most one conflict node, and only at the root.
pub fn is_slice_shape(t: &CocoTree) -> bool {
    match t {
        CocoTree::Node(Label::Conf, cs) => cs.iter().all(|c| c.count_label(Label::Conf) == 0),
        other => other.count_label(Label::Conf) == 0,
    }
}
