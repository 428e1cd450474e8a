//! Coalescence: the rewriting that contracts a proof structure to a single link.
//!
//! Leaf steps rebuild a formula node from its immediate subformulas inside one link.
//! Node steps merge two sibling leaves, and `split`/`dot` reshape the tree.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structure::{CocoTree, Label, LeafId, Link, PreStructure, VarRef};
use crate::substitution::Substitution;
use crate::syntax::{Connective, Context, Flavor, NodeId, NodeKind, Quantifier, Store, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepKind {
    Par,
    PlusLeft,
    PlusRight,
    Forall,
    Load,
    Unit,
    Exists,
    Tens,
    Prec,
    Pop,
    With,
    Split,
    DotConc,
    DotConf,
}

impl StepKind {
    pub const ALL: [StepKind; 14] = [
        StepKind::Par,
        StepKind::PlusLeft,
        StepKind::PlusRight,
        StepKind::Forall,
        StepKind::Load,
        StepKind::Unit,
        StepKind::Exists,
        StepKind::Tens,
        StepKind::Prec,
        StepKind::Pop,
        StepKind::With,
        StepKind::Split,
        StepKind::DotConc,
        StepKind::DotConf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StepKind::Par => "par",
            StepKind::PlusLeft => "plus_left",
            StepKind::PlusRight => "plus_right",
            StepKind::Forall => "forall",
            StepKind::Load => "load",
            StepKind::Unit => "unit",
            StepKind::Exists => "exists",
            StepKind::Tens => "tens",
            StepKind::Prec => "prec",
            StepKind::Pop => "pop",
            StepKind::With => "with",
            StepKind::Split => "split",
            StepKind::DotConc => "dot_conc",
            StepKind::DotConf => "dot_conf",
        }
    }

    pub fn from_name(s: &str) -> Option<StepKind> {
        StepKind::ALL.iter().copied().find(|k| k.name() == s)
    }

    pub fn is_unary(self) -> bool {
        matches!(
            self,
            StepKind::Par
                | StepKind::PlusLeft
                | StepKind::PlusRight
                | StepKind::Forall
                | StepKind::Load
                | StepKind::Unit
                | StepKind::Exists
        )
    }

    pub fn is_reshape(self) -> bool {
        matches!(self, StepKind::Split | StepKind::DotConc | StepKind::DotConf)
    }
}

/// One coalescence step.
///
/// `targets` names the leaves involved (for `pop`: the sequent leaf, then the nominal leaf);
/// `principal` the formula nodes introduced (for `prec` there are k of them, for `split` the `&`);
/// `at` addresses the tree node for `split` and `dot` steps.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub kind: StepKind,
    pub targets: Vec<LeafId>,
    pub principal: Vec<NodeId>,
    pub at: Vec<usize>,
}

impl Step {
    fn leaf(kind: StepKind, leaf: LeafId, principal: NodeId) -> Step {
        Step { kind, targets: vec![leaf], principal: vec![principal], at: vec![] }
    }

    fn priority(&self) -> u8 {
        match self.kind {
            StepKind::DotConc | StepKind::DotConf => 0,
            StepKind::Split => 1,
            StepKind::Pop => 2,
            k if k.is_unary() => 3,
            StepKind::Prec if self.principal.is_empty() => 5,
            _ => 4,
        }
    }

    pub fn describe(&self, ctx: &Context) -> String {
        let ps: Vec<String> = self.principal.iter().map(|n| ctx.path_of(*n).to_string()).collect();
        let mut s = self.kind.name().to_string();
        if self.kind == StepKind::Prec {
            s.push_str(&format!("({})", self.principal.len()));
        }
        if !self.targets.is_empty() {
            let ts: Vec<String> = self.targets.iter().map(|t| format!("#{t}")).collect();
            s.push_str(&format!(" {}", ts.join(" ")));
        }
        if !ps.is_empty() {
            s.push_str(&format!(" on {}", ps.join(",")));
        }
        if self.kind.is_reshape() {
            s.push_str(&format!(" at {:?}", self.at));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: Step,
    /// The leaf produced by the step, absent for `split` and `dot`.
    pub result: Option<LeafId>,
    pub dualizer: Option<Substitution>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn kinds(&self) -> Vec<StepKind> {
        self.entries.iter().map(|e| e.step.kind).collect()
    }

    pub fn count(&self, kind: StepKind) -> usize {
        self.entries.iter().filter(|e| e.step.kind == kind).count()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoalescenceError {
    #[error("step `{step}` does not apply: {reason}")]
    Inapplicable { step: String, reason: String },
    #[error("malformed trace: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Accepted(Trace),
    Stuck(Box<PreStructure>, Trace),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted(_))
    }
}

#[derive(Clone, Debug)]
pub enum Exhaustive {
    Accepted(Trace),
    Rejected,
    BudgetExceeded,
}

type Attempt = Result<(PreStructure, Option<LeafId>), String>;

// ---------------------------------------------------------------- helpers

fn elems(p: &PreStructure, l: LeafId) -> Option<&[NodeId]> {
    match p.links.get(&l)? {
        Link::Sequent(e) => Some(e),
        Link::Nominal { .. } => None,
    }
}

/// Variables free in the dualizer image of a set of formula nodes.
fn image_free(ctx: &Context, es: &[NodeId], s: &Substitution) -> BTreeSet<Var> {
    es.iter().flat_map(|e| ctx.node(*e).free.iter()).map(|v| s.apply_var(v)).collect()
}

fn store_is_free(ctx: &Context, es: &[NodeId], s: &Substitution, store: &Store) -> Result<(), String> {
    let free = image_free(ctx, es, s);
    match store.vars().find(|v| !free.contains(*v)) {
        Some(v) => Err(format!("store variable {v} would no longer be free")),
        None => Ok(()),
    }
}

fn contains(es: &[NodeId], n: NodeId) -> bool {
    es.binary_search(&n).is_ok()
}

fn touches(ctx: &Context, es: &[NodeId], f: NodeId) -> bool {
    es.iter().any(|e| ctx.inside(*e, f))
}

fn replace_in(es: &[NodeId], remove: &[NodeId], add: NodeId) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = es.iter().copied().filter(|e| !remove.contains(e)).collect();
    out.push(add);
    out.sort_unstable();
    out
}

fn next_id(p: &PreStructure) -> LeafId {
    p.fresh_leaf_id()
}

/// Replaces a leaf's link in place, keeping its id.
fn rewrite_leaf(p: &PreStructure, l: LeafId, es: Vec<NodeId>, s: Substitution, store: Store) -> PreStructure {
    let mut q = p.clone();
    q.links.insert(l, Link::Sequent(es));
    set_meta(&mut q, l, s, store);
    q
}

fn set_meta(q: &mut PreStructure, l: LeafId, s: Substitution, store: Store) {
    if s.is_empty() {
        q.witnesses.remove(&l);
    } else {
        q.witnesses.insert(l, s);
    }
    if store.is_empty() {
        q.stores.remove(&l);
    } else {
        q.stores.insert(l, store);
    }
}

/// Replaces sibling leaves `a` and `b` by a fresh leaf.
fn merge_leaves(
    p: &PreStructure,
    a: LeafId,
    b: LeafId,
    link: Link,
    s: Substitution,
    store: Store,
) -> Result<(PreStructure, LeafId), String> {
    let pa = p.tree.leaf_address(a).ok_or("unknown leaf")?;
    let pb = p.tree.leaf_address(b).ok_or("unknown leaf")?;
    if pa.len() != pb.len() || pa.is_empty() || pa[..pa.len() - 1] != pb[..pb.len() - 1] {
        return Err("leaves are not siblings".into());
    }
    let parent = &pa[..pa.len() - 1];
    let (ia, ib) = (pa[pa.len() - 1], pb[pb.len() - 1]);
    let id = next_id(p);
    let mut q = p.clone();
    if let Some(CocoTree::Node(_, cs)) = q.tree.at_mut(parent) {
        cs[ia] = CocoTree::Leaf(id);
        cs.remove(ib);
    }
    for old in [a, b] {
        q.links.remove(&old);
        q.witnesses.remove(&old);
        q.stores.remove(&old);
    }
    q.links.insert(id, link);
    set_meta(&mut q, id, s, store);
    Ok((q, id))
}

fn quantifier_ok(p: &PreStructure, es: &[NodeId], s: &Substitution, x: &str) -> Result<(), String> {
    if s.in_domain(x) {
        return Err(format!("{x} is in the domain of the dualizer"));
    }
    for e in es {
        for v in &p.context.node(*e).free {
            if v != x && s.get(v) == x {
                return Err(format!("{x} is free in the rest of the link"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- leaf steps

fn try_unary(p: &PreStructure, kind: StepKind, l: LeafId, node: NodeId) -> Attempt {
    let ctx = &p.context;
    let es = elems(p, l).ok_or("target is not a sequent leaf")?;
    let info = ctx.nodes.get(node).ok_or("node out of range")?;
    let s = p.dualizer(l);
    let mut store = p.store(l);
    let (removed, new_s): (Vec<NodeId>, Substitution) = match (&info.kind, kind) {
        (NodeKind::Bin(Connective::Par), StepKind::Par) => {
            if !info.children.iter().all(|c| contains(es, *c)) {
                return Err("link lacks a child of the par".into());
            }
            (info.children.clone(), s.clone())
        }
        (NodeKind::Bin(Connective::Plus), StepKind::PlusLeft | StepKind::PlusRight) => {
            let (i, o) = if kind == StepKind::PlusLeft { (0, 1) } else { (1, 0) };
            if !contains(es, info.children[i]) {
                return Err("link lacks the chosen summand".into());
            }
            if touches(ctx, es, info.children[o]) {
                return Err("link touches the other summand".into());
            }
            (vec![info.children[i]], s.clone())
        }
        (NodeKind::Quant(q, x), _) => {
            let body = info.children[0];
            if !contains(es, body) {
                return Err("link lacks the quantifier body".into());
            }
            match (q, kind) {
                (Quantifier::All, StepKind::Forall) => {
                    quantifier_ok(p, es, &s, x)?;
                    if store.get(x).is_some() {
                        return Err(format!("{x} is in the store"));
                    }
                }
                (Quantifier::Ex, StepKind::Exists) => {}
                (Quantifier::New | Quantifier::Ya, StepKind::Load) => {
                    quantifier_ok(p, es, &s, x)?;
                    let fl = q.flavor().expect("nominal");
                    if !store.contains(fl, x) {
                        return Err(format!("{} is not in the store", Store::entry_text(fl, x)));
                    }
                    store.remove(x);
                }
                (Quantifier::New | Quantifier::Ya, StepKind::Unit) => {
                    quantifier_ok(p, es, &s, x)?;
                    if store.get(x).is_some() {
                        return Err(format!("{x} is in the store"));
                    }
                    if p.origin.nominal_vars.contains(x) {
                        return Err(format!("{x} occurs in a nominal link"));
                    }
                }
                _ => return Err("rule does not match the quantifier".into()),
            }
            let new_s = if *q == Quantifier::Ex { s.restrict(x) } else { s.clone() };
            (vec![body], new_s)
        }
        _ => return Err("rule does not match the node".into()),
    };
    let new_es = replace_in(es, &removed, node);
    store_is_free(ctx, &new_es, &new_s, &store)?;
    Ok((rewrite_leaf(p, l, new_es, new_s, store), Some(l)))
}

fn unary_candidates(p: &PreStructure, l: LeafId, out: &mut Vec<Step>) {
    let ctx = &p.context;
    let Some(es) = elems(p, l) else { return };
    let parents: BTreeSet<NodeId> = es.iter().filter_map(|e| ctx.node(*e).parent).collect();
    for n in parents {
        let kinds: &[StepKind] = match &ctx.node(n).kind {
            NodeKind::Bin(Connective::Par) => &[StepKind::Par],
            NodeKind::Bin(Connective::Plus) => &[StepKind::PlusLeft, StepKind::PlusRight],
            NodeKind::Quant(Quantifier::All, _) => &[StepKind::Forall],
            NodeKind::Quant(Quantifier::Ex, _) => &[StepKind::Exists],
            NodeKind::Quant(_, _) => &[StepKind::Load, StepKind::Unit],
            _ => &[],
        };
        for k in kinds {
            if try_unary(p, *k, l, n).is_ok() {
                out.push(Step::leaf(*k, l, n));
            }
        }
    }
}

// ---------------------------------------------------------------- node steps

/// Binary tens/prec nodes with one link inside each of their two sides.
fn across(ctx: &Context, ea: &[NodeId], eb: &[NodeId]) -> BTreeMap<NodeId, (bool, bool)> {
    fn sides(ctx: &Context, es: &[NodeId]) -> BTreeMap<NodeId, [bool; 2]> {
        let mut out: BTreeMap<NodeId, [bool; 2]> = BTreeMap::new();
        for e in es {
            let mut cur = *e;
            while let Some(par) = ctx.node(cur).parent {
                if let NodeKind::Bin(Connective::Tens | Connective::Prec) = ctx.node(par).kind {
                    let i = (ctx.node(par).children[1] == cur) as usize;
                    out.entry(par).or_default()[i] = true;
                }
                cur = par;
            }
        }
        out
    }
    let sa = sides(ctx, ea);
    let sb = sides(ctx, eb);
    let mut out = BTreeMap::new();
    for (n, a) in &sa {
        if let Some(b) = sb.get(n) {
            let a_left = a[0] && b[1];
            let a_right = a[1] && b[0];
            if a_left || a_right {
                out.insert(*n, (a_left, a_right));
            }
        }
    }
    out
}

fn try_multiplicative(p: &PreStructure, kind: StepKind, a: LeafId, b: LeafId, principal: &[NodeId]) -> Attempt {
    let ctx = &p.context;
    let ea = elems(p, a).ok_or("target is not a sequent leaf")?;
    let eb = elems(p, b).ok_or("target is not a sequent leaf")?;
    if ea.iter().any(|x| eb.iter().any(|y| ctx.overlaps(*x, *y))) {
        return Err("links overlap".into());
    }
    let cross = across(ctx, ea, eb);
    let tens: Vec<NodeId> =
        cross.keys().copied().filter(|n| ctx.node(*n).kind == NodeKind::Bin(Connective::Tens)).collect();
    let precs: Vec<NodeId> =
        cross.keys().copied().filter(|n| ctx.node(*n).kind == NodeKind::Bin(Connective::Prec)).collect();
    let exact = |n: NodeId, a_left: bool| {
        let c = &ctx.node(n).children;
        let (ca, cb) = if a_left { (c[0], c[1]) } else { (c[1], c[0]) };
        contains(ea, ca) && contains(eb, cb)
    };
    let wanted: Vec<NodeId> = match kind {
        StepKind::Tens => {
            if tens.len() != 1 || !precs.is_empty() {
                return Err("tens needs exactly one connection".into());
            }
            let t = tens[0];
            let (l, r) = cross[&t];
            if !(l && exact(t, true) || r && exact(t, false)) {
                return Err("tens children are not whole links".into());
            }
            tens
        }
        StepKind::Prec => {
            if !tens.is_empty() {
                return Err("links are connected through a tens".into());
            }
            let left = precs.iter().all(|n| cross[n].0 && exact(*n, true));
            let right = precs.iter().all(|n| cross[n].1 && exact(*n, false));
            if !left && !right {
                return Err("prec children are not aligned".into());
            }
            precs
        }
        _ => return Err("not a multiplicative step".into()),
    };
    if wanted != principal {
        return Err("principal formulas differ from the connection".into());
    }
    let s = Substitution::join(&p.dualizer(a), &p.dualizer(b)).map_err(|e| e.to_string())?;
    let store = p.store(a).union(&p.store(b)).map_err(|_| "stores share a variable".to_string())?;
    let mut es: Vec<NodeId> = ea.iter().chain(eb).copied().collect();
    for n in &wanted {
        es = replace_in(&es, &ctx.node(*n).children, *n);
    }
    es.sort_unstable();
    store_is_free(ctx, &es, &s, &store)?;
    let (q, id) = merge_leaves(p, a, b, Link::Sequent(es), s, store)?;
    Ok((q, Some(id)))
}

fn try_pop(p: &PreStructure, a: LeafId, n: LeafId, principal: NodeId) -> Attempt {
    let ctx = &p.context;
    let ea = elems(p, a).ok_or("first target is not a sequent leaf")?;
    let Some(Link::Nominal { nu, ya }) = p.links.get(&n) else {
        return Err("second target is not a nominal leaf".into());
    };
    let sn = p.dualizer(n);
    if sn.len() != 1 {
        return Err("nominal dualizer must have a single entry".into());
    }
    let (v, w) = sn.iter().next().map(|(v, w)| (v.clone(), w.clone())).unwrap();
    let (vside, wside, wflavor) = if nu.var(ctx) == &v {
        (nu, ya, Flavor::Ya)
    } else {
        (ya, nu, Flavor::Nu)
    };
    if wside.var(ctx) != &w {
        return Err("dualizer does not identify the two sides".into());
    }
    let VarRef::Binder(qv) = *vside else {
        return Err("popped side is not bound".into());
    };
    if qv != principal {
        return Err("principal is not the popped quantifier".into());
    }
    let body_v = ctx.node(qv).children[0];
    if !contains(ea, body_v) {
        return Err("link lacks the body of the popped quantifier".into());
    }
    // The witness body may already be decomposed; load checks it is whole again.
    if let VarRef::Binder(qw) = wside {
        if !touches(ctx, ea, ctx.node(*qw).children[0]) {
            return Err("link misses the body of the witness quantifier".into());
        }
    }
    let mut store = p.store(a);
    if store.get(&w).is_some() {
        return Err(format!("{w} is already in the store"));
    }
    store.insert(wflavor, &w).map_err(|e| e.to_string())?;
    let s = Substitution::join(&p.dualizer(a), &sn).map_err(|e| e.to_string())?.restrict(&v);
    let es = replace_in(ea, &[body_v], qv);
    if !image_free(ctx, &es, &s).contains(&w) {
        return Err(format!("witness {w} is not free after the pop"));
    }
    store_is_free(ctx, &es, &s, &store)?;
    let (q, id) = merge_leaves(p, a, n, Link::Sequent(es), s, store)?;
    Ok((q, Some(id)))
}

fn try_with(p: &PreStructure, a: LeafId, b: LeafId, principal: NodeId) -> Attempt {
    let ctx = &p.context;
    let ea = elems(p, a).ok_or("target is not a sequent leaf")?;
    let eb = elems(p, b).ok_or("target is not a sequent leaf")?;
    if ctx.node(principal).kind != NodeKind::Bin(Connective::With) {
        return Err("principal is not a with".into());
    }
    let c = &ctx.node(principal).children;
    if !contains(ea, c[0]) || !contains(eb, c[1]) {
        return Err("links lack the with children".into());
    }
    let ra: Vec<NodeId> = ea.iter().copied().filter(|x| *x != c[0]).collect();
    let rb: Vec<NodeId> = eb.iter().copied().filter(|x| *x != c[1]).collect();
    if ra != rb {
        return Err("links have different contexts".into());
    }
    if p.store(a) != p.store(b) {
        return Err("links have different stores".into());
    }
    let s = Substitution::join(&p.dualizer(a), &p.dualizer(b)).map_err(|e| e.to_string())?;
    let es = replace_in(ea, &[c[0]], principal);
    let store = p.store(a);
    store_is_free(ctx, &es, &s, &store)?;
    let (q, id) = merge_leaves(p, a, b, Link::Sequent(es), s, store)?;
    Ok((q, Some(id)))
}

fn split_partition(p: &PreStructure, cs: &[CocoTree], w: NodeId) -> Option<Vec<bool>> {
    let ctx = &p.context;
    let c = &ctx.node(w).children;
    let mut side = Vec::new();
    for ch in cs {
        let es = elems(p, ch.as_leaf()?)?;
        match (touches(ctx, es, c[0]), touches(ctx, es, c[1])) {
            (true, false) => side.push(true),
            (false, true) => side.push(false),
            _ => return None,
        }
    }
    (side.iter().any(|s| *s) && side.iter().any(|s| !*s)).then_some(side)
}

fn try_split(p: &PreStructure, at: &[usize], w: NodeId) -> Attempt {
    let Some(CocoTree::Node(Label::Conf, cs)) = p.tree.at(at) else {
        return Err("target is not a conflict node".into());
    };
    if cs.len() < 3 {
        return Err("split needs at least three children".into());
    }
    if p.context.nodes.get(w).map(|n| &n.kind) != Some(&NodeKind::Bin(Connective::With)) {
        return Err("principal is not a with".into());
    }
    let side = split_partition(p, cs, w).ok_or("children are not separated by the with")?;
    let (l, r): (Vec<_>, Vec<_>) = cs.iter().cloned().zip(side).partition(|(_, s)| *s);
    let node = CocoTree::Node(
        Label::Conf,
        vec![
            CocoTree::Node(Label::Conf, l.into_iter().map(|(c, _)| c).collect()),
            CocoTree::Node(Label::Conf, r.into_iter().map(|(c, _)| c).collect()),
        ],
    );
    let mut q = p.clone();
    *q.tree.at_mut(at).expect("address checked") = node;
    Ok((q, None))
}

fn try_dot(p: &PreStructure, kind: StepKind, at: &[usize]) -> Attempt {
    let label = if kind == StepKind::DotConc { Label::Conc } else { Label::Conf };
    match p.tree.at(at) {
        Some(CocoTree::Node(l, cs)) if *l == label && cs.len() == 1 => {}
        _ => return Err("target is not a unary node of that label".into()),
    }
    let mut q = p.clone();
    let promoted = match q.tree.at_mut(at) {
        Some(CocoTree::Node(_, cs)) => cs.pop().unwrap(),
        _ => unreachable!(),
    };
    match at.split_last() {
        None => q.tree = promoted,
        Some((i, parent)) => {
            let Some(CocoTree::Node(pl, cs)) = q.tree.at_mut(parent) else { unreachable!() };
            match promoted {
                CocoTree::Node(cl, gs) if cl == *pl => {
                    cs.splice(*i..*i + 1, gs);
                }
                other => cs[*i] = other,
            }
        }
    }
    Ok((q, None))
}

// ---------------------------------------------------------------- public API

fn attempt(p: &PreStructure, s: &Step) -> Attempt {
    let t = |i: usize| s.targets.get(i).copied().ok_or_else(|| "missing target".to_string());
    let pr = |i: usize| s.principal.get(i).copied().ok_or_else(|| "missing principal".to_string());
    match s.kind {
        k if k.is_unary() => try_unary(p, k, t(0)?, pr(0)?),
        StepKind::Tens | StepKind::Prec => try_multiplicative(p, s.kind, t(0)?, t(1)?, &s.principal),
        StepKind::Pop => try_pop(p, t(0)?, t(1)?, pr(0)?),
        StepKind::With => try_with(p, t(0)?, t(1)?, pr(0)?),
        StepKind::Split => try_split(p, &s.at, pr(0)?),
        k => try_dot(p, k, &s.at),
    }
}

pub fn apply_step(p: &PreStructure, s: &Step) -> Result<PreStructure, CoalescenceError> {
    apply_recorded(p, s).map(|(q, _)| q)
}

/// Applies a step and returns the trace record it produces.
pub fn apply_recorded(p: &PreStructure, s: &Step) -> Result<(PreStructure, TraceEntry), CoalescenceError> {
    let (q, result) = attempt(p, s)
        .map_err(|reason| CoalescenceError::Inapplicable { step: s.describe(&p.context), reason })?;
    let dualizer = result.map(|l| q.dualizer(l));
    Ok((q, TraceEntry { step: s.clone(), result, dualizer }))
}

pub fn applicable_steps(p: &PreStructure) -> Vec<Step> {
    steps(p, true)
}

/// Applicable steps; mixes are left out unless `mix` is set.
fn steps(p: &PreStructure, mix: bool) -> Vec<Step> {
    let ctx = &p.context;
    let mut out = Vec::new();
    for addr in p.tree.node_addresses() {
        let Some(CocoTree::Node(label, cs)) = p.tree.at(&addr) else { continue };
        if cs.len() == 1 {
            let kind = if *label == Label::Conc { StepKind::DotConc } else { StepKind::DotConf };
            out.push(Step { kind, targets: vec![], principal: vec![], at: addr.clone() });
            continue;
        }
        let leaves: Vec<LeafId> = cs.iter().filter_map(|c| c.as_leaf()).collect();
        match label {
            Label::Conc => {
                for (i, a) in leaves.iter().enumerate() {
                    for b in &leaves[i + 1..] {
                        conc_pair(p, *a, *b, mix, &mut out);
                    }
                }
            }
            Label::Conf => {
                for a in &leaves {
                    for b in &leaves {
                        if a == b {
                            continue;
                        }
                        let Some(ea) = elems(p, *a) else { continue };
                        for e in ea {
                            if let Some(w) = ctx.node(*e).parent {
                                if ctx.node(w).kind == NodeKind::Bin(Connective::With)
                                    && ctx.node(w).children[0] == *e
                                    && elems(p, *b).is_some_and(|eb| contains(eb, ctx.node(w).children[1]))
                                    && try_with(p, *a, *b, w).is_ok()
                                {
                                    out.push(Step {
                                        kind: StepKind::With,
                                        targets: vec![*a, *b],
                                        principal: vec![w],
                                        at: vec![],
                                    });
                                }
                            }
                        }
                    }
                }
                if cs.len() >= 3 && leaves.len() == cs.len() {
                    for (w, n) in ctx.nodes.iter().enumerate() {
                        if n.kind == NodeKind::Bin(Connective::With) && split_partition(p, cs, w).is_some() {
                            out.push(Step { kind: StepKind::Split, targets: vec![], principal: vec![w], at: addr.clone() });
                        }
                    }
                }
            }
        }
    }
    for l in p.tree.leaves() {
        unary_candidates(p, l, &mut out);
    }
    out
}

/// Some element of `ea` and some element of `eb` are the two children of one tens or prec.
fn siblings(ctx: &Context, ea: &[NodeId], eb: &[NodeId]) -> bool {
    ea.iter().any(|x| {
        ctx.node(*x).parent.is_some_and(|n| {
            let node = ctx.node(n);
            matches!(node.kind, NodeKind::Bin(Connective::Tens | Connective::Prec))
                && node.children.iter().any(|c| c != x && contains(eb, *c))
        })
    })
}

fn conc_pair(p: &PreStructure, a: LeafId, b: LeafId, mix: bool, out: &mut Vec<Step>) {
    let ctx = &p.context;
    match (p.link(a).is_nominal(), p.link(b).is_nominal()) {
        (false, false) => {
            let (Some(ea), Some(eb)) = (elems(p, a), elems(p, b)) else { return };
            // Without a sibling pair only a mix can apply.
            if !mix && !siblings(ctx, ea, eb) {
                return;
            }
            let cross = across(ctx, ea, eb);
            let (tens, precs): (Vec<NodeId>, Vec<NodeId>) =
                cross.keys().partition(|n| ctx.node(**n).kind == NodeKind::Bin(Connective::Tens));
            let (kind, principal) = if precs.is_empty() && tens.len() == 1 {
                (StepKind::Tens, tens)
            } else {
                (StepKind::Prec, precs)
            };
            if try_multiplicative(p, kind, a, b, &principal).is_ok() {
                out.push(Step { kind, targets: vec![a, b], principal, at: vec![] });
            }
        }
        (false, true) | (true, false) => {
            let (s, n) = if p.link(a).is_nominal() { (b, a) } else { (a, b) };
            let Some(Link::Nominal { nu, ya }) = p.links.get(&n) else { return };
            for side in [nu, ya] {
                if let VarRef::Binder(q) = side {
                    if try_pop(p, s, n, *q).is_ok() {
                        out.push(Step { kind: StepKind::Pop, targets: vec![s, n], principal: vec![*q], at: vec![] });
                    }
                }
            }
        }
        (true, true) => {}
    }
}

/// A single sequent leaf over the whole sequent, empty dualizer and the context's store.
pub fn is_accepted(p: &PreStructure) -> bool {
    match &p.tree {
        CocoTree::Leaf(l) => {
            p.dualizer(*l).is_empty()
                && matches!(p.link(*l), Link::Sequent(e) if *e == p.context.roots)
                && p.store(*l) == p.context.judgement.store
        }
        _ => false,
    }
}

/// Quantifiers above the `&` of a split can only be introduced after both halves merge back,
/// so the leaves must already agree on the variables they bind.
fn split_viable(p: &PreStructure, s: &Step) -> bool {
    let ctx = &p.context;
    let Some(t) = p.tree.at(&s.at) else { return false };
    let leaves = t.leaves();
    let mut up = ctx.node(s.principal[0]).parent;
    while let Some(a) = up {
        if let NodeKind::Quant(_, v) = &ctx.node(a).kind {
            let images: BTreeSet<&str> = leaves
                .iter()
                .filter_map(|l| p.witnesses.get(l).filter(|d| d.in_domain(v)).map(|d| d.get(v)))
                .collect();
            if images.len() > 1 {
                return false;
            }
        }
        up = ctx.node(a).parent;
    }
    true
}

/// Viable splits first, then those on the outermost `&`.
fn preferred_splits<'a>(p: &PreStructure, top: Vec<&'a Step>) -> Vec<&'a Step> {
    let viable: Vec<&Step> = top.iter().copied().filter(|s| split_viable(p, s)).collect();
    let pool = if viable.is_empty() { top } else { viable };
    let depth = |s: &Step| {
        let mut d = 0;
        let mut up = p.context.node(s.principal[0]).parent;
        while let Some(a) = up {
            d += 1;
            up = p.context.node(a).parent;
        }
        d
    };
    let min = pool.iter().map(|s| depth(s)).min().expect("nonempty");
    pool.into_iter().filter(|s| depth(s) == min).collect()
}

pub fn check_greedy(p: &PreStructure, seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = p.clone();
    let mut trace = Trace::default();
    loop {
        if is_accepted(&cur) {
            return Verdict::Accepted(trace);
        }
        let mut steps = self::steps(&cur, false);
        if steps.is_empty() {
            steps = self::steps(&cur, true);
        }
        let Some(best) = steps.iter().map(Step::priority).min() else {
            return Verdict::Stuck(Box::new(cur), trace);
        };
        let mut top: Vec<&Step> = steps.iter().filter(|s| s.priority() == best).collect();
        if top[0].kind == StepKind::Split {
            top = preferred_splits(&cur, top);
        }
        let s = *top.choose(&mut rng).expect("nonempty");
        let (next, entry) = apply_recorded(&cur, s).expect("enumerated steps apply");
        trace.entries.push(entry);
        cur = next;
    }
}

pub fn check_exhaustive(p: &PreStructure, budget: u64) -> Exhaustive {
    check_exhaustive_cached(p, budget, &mut RejectedStates::default())
}

/// Canonical keys of states known to be rejected, shareable between searches over one context.
#[derive(Clone, Debug, Default)]
pub struct RejectedStates {
    context: Option<String>,
    keys: HashSet<String>,
}

impl RejectedStates {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Exhaustive search that reuses and extends `cache`; the cache is cleared when the context changes.
pub fn check_exhaustive_cached(p: &PreStructure, budget: u64, cache: &mut RejectedStates) -> Exhaustive {
    struct Search<'a> {
        known: &'a HashSet<String>,
        seen: HashSet<String>,
        path: Vec<String>,
        budget: u64,
        used: u64,
    }
    fn key(p: &PreStructure) -> String {
        p.canonical_with(&|l| format!("{}|{}", p.dualizer(l), p.store(l)))
    }
    fn go(s: &mut Search, p: &PreStructure, trace: &mut Vec<TraceEntry>) -> Option<bool> {
        if is_accepted(p) {
            return Some(true);
        }
        let k = key(p);
        if s.known.contains(&k) || !s.seen.insert(k.clone()) {
            return Some(false);
        }
        s.used += 1;
        if s.used > s.budget {
            return None;
        }
        s.path.push(k);
        let mut steps = applicable_steps(p);
        steps.sort_by_key(Step::priority);
        for st in steps {
            let (q, entry) = apply_recorded(p, &st).expect("enumerated steps apply");
            trace.push(entry);
            if go(s, &q, trace)? {
                return Some(true);
            }
            trace.pop();
        }
        s.path.pop();
        Some(false)
    }
    let ctx = p.context.judgement.to_string();
    if cache.context.as_deref() != Some(ctx.as_str()) {
        *cache = RejectedStates { context: Some(ctx), keys: HashSet::new() };
    }
    let mut s = Search { known: &cache.keys, seen: HashSet::new(), path: Vec::new(), budget, used: 0 };
    let mut trace = Vec::new();
    let verdict = go(&mut s, p, &mut trace);
    // Every state left in `seen` off the accepting path was fully explored without success.
    let (seen, path) = (s.seen, s.path);
    match verdict {
        Some(true) => {
            let path: HashSet<String> = path.into_iter().collect();
            cache.keys.extend(seen.into_iter().filter(|k| !path.contains(k)));
            Exhaustive::Accepted(Trace { entries: trace })
        }
        Some(false) => {
            cache.keys.extend(seen);
            Exhaustive::Rejected
        }
        None => Exhaustive::BudgetExceeded,
    }
}

/// Replays a trace, returning every intermediate structure (the input first).
pub fn replay(p: &PreStructure, t: &Trace) -> Result<Vec<PreStructure>, CoalescenceError> {
    let mut out = vec![p.clone()];
    for (i, e) in t.entries.iter().enumerate() {
        let (q, got) = apply_recorded(out.last().unwrap(), &e.step)?;
        if got.result != e.result {
            return Err(CoalescenceError::Malformed(format!("step {i}: result leaf differs from the record")));
        }
        out.push(q);
    }
    Ok(out)
}

// ---------------------------------------------------------------- JSON

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct StepJson {
    pub kind: String,
    #[serde(default)]
    pub targets: Vec<LeafId>,
    #[serde(default)]
    pub principal: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub at: Vec<usize>,
    #[serde(default)]
    pub result: Option<LeafId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dualizer: Option<Substitution>,
}

impl Trace {
    pub fn to_json(&self, ctx: &Context) -> Vec<StepJson> {
        self.entries
            .iter()
            .map(|e| StepJson {
                kind: e.step.kind.name().to_string(),
                targets: e.step.targets.clone(),
                principal: e.step.principal.iter().map(|n| ctx.path_of(*n).to_string()).collect(),
                at: e.step.at.clone(),
                result: e.result,
                dualizer: e.dualizer.clone(),
            })
            .collect()
    }

    pub fn from_json(ctx: &Context, steps: &[StepJson]) -> Result<Trace, CoalescenceError> {
        let mut entries = Vec::new();
        for (i, s) in steps.iter().enumerate() {
            let bad = |m: String| CoalescenceError::Malformed(format!("step {i}: {m}"));
            let kind = StepKind::from_name(&s.kind).ok_or_else(|| bad(format!("unknown kind `{}`", s.kind)))?;
            let principal = s
                .principal
                .iter()
                .map(|t| t.parse().and_then(|p| ctx.id_of(&p)).map_err(|e| bad(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            entries.push(TraceEntry {
                step: Step { kind, targets: s.targets.clone(), principal, at: s.at.clone() },
                result: s.result,
                dualizer: s.dualizer.clone(),
            });
        }
        Ok(Trace { entries })
    }

    pub fn to_json_string(&self, ctx: &Context) -> String {
        serde_json::to_string_pretty(&self.to_json(ctx)).expect("trace serializes")
    }

    pub fn from_json_str(ctx: &Context, text: &str) -> Result<Trace, CoalescenceError> {
        let steps: Vec<StepJson> =
            serde_json::from_str(text).map_err(|e| CoalescenceError::Malformed(e.to_string()))?;
        Trace::from_json(ctx, &steps)
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
