//! Derivations to nets and back.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::calculus::{check_derivation, realize, DNode, Derivation, Rule, SkRule, Skeleton};
use crate::coalescence::{is_accepted, replay, CoalescenceError, StepKind, Trace};
use crate::flattening::normalize;
use crate::structure::{canonize, CocoTree, Label, LeafId, Link, PreStructure, VarRef};
use crate::substitution::Substitution;
use crate::syntax::{Context, Formula, NodeId, NodeKind, Quantifier};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BridgeError {
    #[error("derivation is not valid: {0}")]
    InvalidDerivation(String),
    #[error(transparent)]
    Trace(#[from] CoalescenceError),
    #[error("trace does not reach a trivial structure")]
    NotAccepted,
    #[error("sequentialization failed: {0}")]
    Sequentialization(String),
}

struct Net {
    tree: CocoTree,
    links: BTreeMap<LeafId, Link>,
    witnesses: BTreeMap<LeafId, Substitution>,
}

struct Translator<'a> {
    ctx: &'a Context,
    next: LeafId,
}

impl Translator<'_> {
    fn leaf(&mut self, link: Link) -> Net {
        let id = self.next;
        self.next += 1;
        Net { tree: CocoTree::Leaf(id), links: BTreeMap::from([(id, link)]), witnesses: BTreeMap::new() }
    }

    fn bound_var(&self, o: NodeId) -> (Quantifier, String) {
        match &self.ctx.node(o).kind {
            NodeKind::Quant(q, x) => (*q, x.clone()),
            _ => unreachable!("checked derivation"),
        }
    }

    /// Records that `x`, bound at `o`, is instantiated by `y` in every link that mentions it.
    fn instantiate(&self, net: &mut Net, o: NodeId, x: &str, y: &str) {
        let body = self.ctx.node(o).children[0];
        let step = Substitution::single(x, y);
        for (id, link) in &net.links {
            let hit = link.elems().iter().any(|e| self.ctx.inside(*e, body) && self.ctx.node(*e).free.contains(x));
            if hit {
                let old = net.witnesses.remove(id).unwrap_or_default();
                let new = Substitution::compose(&step, &old);
                if !new.is_empty() {
                    net.witnesses.insert(*id, new);
                }
            }
        }
    }

    fn join(label: Label, a: Net, b: Net) -> Net {
        let mut links = a.links;
        links.extend(b.links);
        let mut witnesses = a.witnesses;
        witnesses.extend(b.witnesses);
        Net { tree: canonize(&CocoTree::Node(label, vec![a.tree, b.tree])), links, witnesses }
    }

    fn go(&mut self, d: &DNode) -> Net {
        let occ = |i: &usize| d.conclusion.items[*i].0;
        let mut sub: Vec<Net> = d.premises.iter().map(|p| self.go(p)).collect();
        match &d.rule {
            Rule::Ax | Rule::One => self.leaf(Link::sequent(d.conclusion.occurrences())),
            Rule::Tens(..) | Rule::Prec(..) | Rule::With(_) => {
                let b = sub.pop().unwrap();
                let a = sub.pop().unwrap();
                let label = if matches!(d.rule, Rule::With(_)) { Label::Conf } else { Label::Conc };
                Self::join(label, a, b)
            }
            Rule::Exists(i, y) => {
                let mut net = sub.pop().unwrap();
                let (_, x) = self.bound_var(occ(i));
                self.instantiate(&mut net, occ(i), &x, y);
                net
            }
            Rule::Pop(i, w) => {
                let mut net = sub.pop().unwrap();
                let o = occ(i);
                let (q, x) = self.bound_var(o);
                self.instantiate(&mut net, o, &x, w);
                let entry = q.flavor().expect("nominal").dual();
                let (nu, ya) = if q == Quantifier::Ya {
                    (VarRef::Store(entry, w.clone()), VarRef::Binder(o))
                } else {
                    (VarRef::Binder(o), VarRef::Store(entry, w.clone()))
                };
                let mut nom = self.leaf(Link::Nominal { nu, ya });
                let id = nom.tree.as_leaf().unwrap();
                nom.witnesses.insert(id, Substitution::single(&x, w));
                Self::join(Label::Conc, nom, net)
            }
            Rule::Load(i) => {
                let mut net = sub.pop().unwrap();
                let o = occ(i);
                let (q, x) = self.bound_var(o);
                let fl = q.flavor().expect("nominal");
                for link in net.links.values_mut() {
                    if let Link::Nominal { nu, ya } = link {
                        for side in [nu, ya] {
                            if *side == VarRef::Store(fl, x.clone()) {
                                *side = VarRef::Binder(o);
                            }
                        }
                    }
                }
                net
            }
            Rule::Par(_) | Rule::Plus(..) | Rule::Forall(_) | Rule::Unit(_) => sub.pop().unwrap(),
        }
    }
}

/// The conflict net of a derivation.
pub fn translate_to_conflict_net(d: &Derivation) -> Result<PreStructure, BridgeError> {
    check_derivation(d).map_err(|v| BridgeError::InvalidDerivation(v.to_string()))?;
    let mut t = Translator { ctx: &d.context, next: 0 };
    let net = t.go(&d.root);
    Ok(PreStructure::new(d.context.clone(), net.tree, net.links, net.witnesses))
}

/// The slice net of a derivation: its conflict net, flattened.
pub fn translate_to_slice_net(d: &Derivation) -> Result<PreStructure, BridgeError> {
    Ok(normalize(&translate_to_conflict_net(d)?, 0))
}

fn initial_skeleton(ctx: &Context, link: &Link) -> Option<Skeleton> {
    match link.elems() {
        [o] if ctx.node(*o).formula == Formula::One => Some(Skeleton::new(SkRule::One(*o), vec![])),
        [a, b] if ctx.node(*a).formula.is_atom() && ctx.node(*b).formula.is_atom() => {
            Some(Skeleton::new(SkRule::Ax(*a, *b), vec![]))
        }
        _ => None,
    }
}

/// Builds a derivation by replaying an accepted trace; each step contributes the matching rule.
pub fn sequentialize(p: &PreStructure, t: &Trace) -> Result<Derivation, BridgeError> {
    let ctx = &p.context;
    let states = replay(p, t)?;
    if !is_accepted(states.last().expect("replay keeps the input")) {
        return Err(BridgeError::NotAccepted);
    }
    let err = |m: String| BridgeError::Sequentialization(m);
    let mut sk: BTreeMap<LeafId, Skeleton> = BTreeMap::new();
    for (id, link) in &p.links {
        if link.is_nominal() {
            continue;
        }
        let s = initial_skeleton(ctx, link).ok_or_else(|| err(format!("leaf {id} is not axiomatic")))?;
        sk.insert(*id, s);
    }
    for (entry, before) in t.entries.iter().zip(&states) {
        let st = &entry.step;
        if st.kind.is_reshape() {
            continue;
        }
        let take = |sk: &mut BTreeMap<LeafId, Skeleton>, l: LeafId| {
            sk.remove(&l).ok_or_else(|| err(format!("leaf {l} has no derivation")))
        };
        let n = st.principal.first().copied();
        let quant_var = |o: NodeId| match &ctx.node(o).kind {
            NodeKind::Quant(_, x) => x.clone(),
            _ => unreachable!(),
        };
        let node = match st.kind {
            StepKind::Tens | StepKind::Prec | StepKind::With => {
                let (a, b) = (st.targets[0], st.targets[1]);
                let (sa, sb) = (take(&mut sk, a)?, take(&mut sk, b)?);
                let first_is_a = match n {
                    None => true,
                    Some(n) => before.link(a).contains(ctx.node(n).children[0]),
                };
                let premises = if first_is_a { vec![sa, sb] } else { vec![sb, sa] };
                let rule = match st.kind {
                    StepKind::Tens => SkRule::Tens(n.unwrap()),
                    StepKind::With => SkRule::With(n.unwrap()),
                    _ => SkRule::Prec(st.principal.clone()),
                };
                Skeleton::new(rule, premises)
            }
            StepKind::Pop => {
                let q = n.unwrap();
                let w = before.dualizer(st.targets[1]).apply_var(&quant_var(q));
                Skeleton::new(SkRule::Pop(q, w), vec![take(&mut sk, st.targets[0])?])
            }
            kind => {
                let o = n.unwrap();
                let l = st.targets[0];
                let rule = match kind {
                    StepKind::Par => SkRule::Par(o),
                    StepKind::PlusLeft => SkRule::Plus(o, 0),
                    StepKind::PlusRight => SkRule::Plus(o, 1),
                    StepKind::Forall => SkRule::Forall(o),
                    StepKind::Load => SkRule::Load(o),
                    StepKind::Unit => SkRule::Unit(o),
                    StepKind::Exists => SkRule::Exists(o, before.dualizer(l).apply_var(&quant_var(o))),
                    _ => unreachable!(),
                };
                Skeleton::new(rule, vec![take(&mut sk, l)?])
            }
        };
        let result = entry.result.ok_or_else(|| err("step without a result leaf".into()))?;
        sk.insert(result, node);
    }
    let last = states.last().unwrap();
    let root_leaf = last.tree.as_leaf().expect("accepted");
    let skeleton = sk.remove(&root_leaf).ok_or_else(|| err("final leaf has no derivation".into()))?;
    let d = realize(ctx, &skeleton).map_err(err)?;
    check_derivation(&d).map_err(|v| err(v.to_string()))?;
    Ok(d)
}

/// Convenience: the derivation of an accepted net, using a greedy trace with the given seed.
pub fn sequentialize_greedy(p: &PreStructure, seed: u64) -> Result<Derivation, BridgeError> {
    match crate::coalescence::check_greedy(p, seed) {
        crate::coalescence::Verdict::Accepted(t) => sequentialize(p, &t),
        crate::coalescence::Verdict::Stuck(..) => Err(BridgeError::NotAccepted),
    }
}
