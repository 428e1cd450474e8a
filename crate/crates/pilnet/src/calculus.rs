//! Sequent-calculus derivations: checking, skeletons and backward proof search.
//!
//! Every formula in a derivation remembers the occurrence of the root judgement it
//! descends from. Premises are always computed from a conclusion and a rule, so a
//! derivation cannot disagree with itself.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::substitution::Substitution;
use crate::syntax::{Connective, Context, Flavor, Formula, Judgement, NodeId, Quantifier, Store, Var};

/// A judgement whose formulas are tagged with occurrences, kept in occurrence order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Seq {
    pub store: Store,
    pub items: Vec<(NodeId, Formula)>,
}

impl Seq {
    pub fn new(store: Store, mut items: Vec<(NodeId, Formula)>) -> Seq {
        items.sort_by_key(|(o, _)| *o);
        Seq { store, items }
    }

    pub fn root(ctx: &Context) -> Seq {
        let items = ctx.roots.iter().map(|r| (*r, ctx.node(*r).formula.clone())).collect();
        Seq::new(ctx.judgement.store.clone(), items)
    }

    pub fn judgement(&self) -> Judgement {
        Judgement::new(self.store.clone(), self.items.iter().map(|(_, f)| f.clone()).collect())
    }

    pub fn occurrences(&self) -> Vec<NodeId> {
        self.items.iter().map(|(o, _)| *o).collect()
    }

    pub fn index_of(&self, o: NodeId) -> Option<usize> {
        self.items.iter().position(|(x, _)| *x == o)
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        self.items.iter().flat_map(|(_, f)| f.free_vars()).collect()
    }
}

impl fmt::Display for Seq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.judgement())
    }
}

/// How the context and store of a binary conclusion are divided between the premises.
/// Indices refer to the conclusion's formula list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Split {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub store_left: Store,
    pub store_right: Store,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Ax,
    One,
    Par(usize),
    /// Second field: 0 keeps the left summand, 1 the right.
    Plus(usize, usize),
    With(usize),
    Forall(usize),
    Exists(usize, Var),
    Unit(usize),
    Load(usize),
    /// Consumes the store entry named by the witness.
    Pop(usize, Var),
    Tens(usize, Split),
    Prec(Vec<usize>, Split),
}

impl Rule {
    pub fn arity(&self) -> usize {
        match self {
            Rule::Ax | Rule::One => 0,
            Rule::Tens(..) | Rule::Prec(..) | Rule::With(_) => 2,
            _ => 1,
        }
    }

    pub fn principals(&self) -> Vec<usize> {
        match self {
            Rule::Ax | Rule::One => vec![],
            Rule::Par(i)
            | Rule::Plus(i, _)
            | Rule::With(i)
            | Rule::Forall(i)
            | Rule::Exists(i, _)
            | Rule::Unit(i)
            | Rule::Load(i)
            | Rule::Pop(i, _)
            | Rule::Tens(i, _) => vec![*i],
            Rule::Prec(is, _) => is.clone(),
        }
    }
}

/// The name of a rule as used in derivation files, which depends on the principal formula.
pub fn rule_name(concl: &Seq, r: &Rule) -> String {
    let q = |i: &usize| match concl.items.get(*i).map(|(_, f)| f) {
        Some(Formula::Quant(q, _, _)) => Some(*q),
        _ => None,
    };
    match r {
        Rule::Ax => "ax".into(),
        Rule::One => "one".into(),
        Rule::Par(_) => "par".into(),
        Rule::Plus(_, 0) => "plus_left".into(),
        Rule::Plus(..) => "plus_right".into(),
        Rule::With(_) => "with".into(),
        Rule::Forall(_) => "forall".into(),
        Rule::Exists(..) => "exists".into(),
        Rule::Unit(i) => if q(i) == Some(Quantifier::Ya) { "unit_ya" } else { "unit_nu" }.into(),
        Rule::Load(i) => if q(i) == Some(Quantifier::Ya) { "load_ya" } else { "load_nu" }.into(),
        Rule::Pop(i, _) => if q(i) == Some(Quantifier::New) { "pop_ya" } else { "pop_nu" }.into(),
        Rule::Tens(..) => "tens".into(),
        Rule::Prec(..) => "prec".into(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DNode {
    pub conclusion: Seq,
    pub rule: Rule,
    pub premises: Vec<DNode>,
}

/// A derivation of a root judgement, with the occurrence index of that judgement.
#[derive(Clone, Debug)]
pub struct Derivation {
    pub context: Arc<Context>,
    pub root: DNode,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{at}: {clause}")]
pub struct Violation {
    /// `root` followed by premise indices, e.g. `root/1/0`.
    pub at: String,
    pub clause: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalculusError {
    #[error("malformed derivation: {0}")]
    Malformed(String),
    #[error(transparent)]
    Violation(#[from] Violation),
}

// ---------------------------------------------------------------- rule schemas

fn ctx_items(concl: &Seq, skip: &[usize]) -> Vec<(NodeId, Formula)> {
    concl.items.iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, x)| x.clone()).collect()
}

fn principal<'a>(concl: &'a Seq, i: usize) -> Result<&'a (NodeId, Formula), String> {
    concl.items.get(i).ok_or_else(|| format!("principal index {i} out of range"))
}

fn children(ctx: &Context, o: NodeId) -> &[NodeId] {
    &ctx.node(o).children
}

fn fresh_for(concl: &Seq, skip: usize, x: &str) -> Result<(), String> {
    let rest_free = concl.items.iter().enumerate().filter(|(i, _)| *i != skip).any(|(_, (_, f))| f.free_vars().contains(x));
    if rest_free {
        return Err(format!("{x} is free in the context"));
    }
    if concl.store.get(x).is_some() {
        return Err(format!("{x} occurs in the store"));
    }
    Ok(())
}

fn check_split(concl: &Seq, principals: &[usize], sp: &Split) -> Result<(), String> {
    let mut seen: BTreeSet<usize> = principals.iter().copied().collect();
    for i in sp.left.iter().chain(&sp.right) {
        if *i >= concl.items.len() {
            return Err(format!("split index {i} out of range"));
        }
        if !seen.insert(*i) {
            return Err(format!("formula {i} is used twice"));
        }
    }
    if seen.len() != concl.items.len() {
        return Err("split does not cover the context".into());
    }
    let joined = sp.store_left.union(&sp.store_right).map_err(|_| "store split is not disjoint".to_string())?;
    if joined != concl.store {
        return Err("store split does not match the store".into());
    }
    Ok(())
}

fn pick(concl: &Seq, idx: &[usize]) -> Vec<(NodeId, Formula)> {
    idx.iter().map(|i| concl.items[*i].clone()).collect()
}

/// The premises demanded by applying `rule` to `concl`, or the clause that fails.
pub fn premises_for(ctx: &Context, concl: &Seq, rule: &Rule) -> Result<Vec<Seq>, String> {
    let prem = match rule {
        Rule::Ax => {
            let ok = match concl.items.as_slice() {
                [(_, Formula::Send(a, b)), (_, Formula::Recv(c, d))] | [(_, Formula::Recv(c, d)), (_, Formula::Send(a, b))] => {
                    a == c && b == d
                }
                _ => false,
            };
            if !ok {
                return Err("axiom needs exactly a dual send/receive pair".into());
            }
            vec![]
        }
        Rule::One => {
            if !matches!(concl.items.as_slice(), [(_, Formula::One)]) || !concl.store.is_empty() {
                return Err("unit rule needs exactly `one` and an empty store".into());
            }
            vec![]
        }
        Rule::Par(i) | Rule::Plus(i, _) | Rule::With(i) => {
            let (o, f) = principal(concl, *i)?;
            let want = match rule {
                Rule::Par(_) => Connective::Par,
                Rule::Plus(..) => Connective::Plus,
                _ => Connective::With,
            };
            let Formula::Bin(c, a, b) = f else { return Err("principal is not a binary formula".into()) };
            if *c != want {
                return Err(format!("principal is not a {} formula", want.name()));
            }
            let ch = children(ctx, *o);
            let rest = ctx_items(concl, &[*i]);
            let with_items = |extra: Vec<(NodeId, Formula)>| {
                let mut items = rest.clone();
                items.extend(extra);
                Seq::new(concl.store.clone(), items)
            };
            match rule {
                Rule::Par(_) => vec![with_items(vec![(ch[0], (**a).clone()), (ch[1], (**b).clone())])],
                Rule::Plus(_, side) => {
                    if *side > 1 {
                        return Err("plus side must be 0 or 1".into());
                    }
                    let g = if *side == 0 { a } else { b };
                    vec![with_items(vec![(ch[*side], (**g).clone())])]
                }
                _ => vec![with_items(vec![(ch[0], (**a).clone())]), with_items(vec![(ch[1], (**b).clone())])],
            }
        }
        Rule::Forall(i) | Rule::Unit(i) | Rule::Load(i) | Rule::Exists(i, _) | Rule::Pop(i, _) => {
            let (o, f) = principal(concl, *i)?;
            let Formula::Quant(q, x, body) = f else { return Err("principal is not quantified".into()) };
            let want: &[Quantifier] = match rule {
                Rule::Forall(_) => &[Quantifier::All],
                Rule::Exists(..) => &[Quantifier::Ex],
                _ => &[Quantifier::New, Quantifier::Ya],
            };
            if !want.contains(q) {
                return Err(format!("principal is a {} formula", q.name()));
            }
            let mut store = concl.store.clone();
            let new_body = match rule {
                Rule::Forall(_) | Rule::Unit(_) => {
                    fresh_for(concl, *i, x)?;
                    (**body).clone()
                }
                Rule::Load(_) => {
                    fresh_for(concl, *i, x)?;
                    store.insert(q.flavor().expect("nominal"), x).map_err(|e| e.to_string())?;
                    (**body).clone()
                }
                Rule::Exists(_, w) => {
                    Substitution::single(x, w).apply_formula(body).map_err(|e| e.to_string())?
                }
                Rule::Pop(_, w) => {
                    let fl = q.flavor().expect("nominal").dual();
                    if !store.contains(fl, w) {
                        return Err(format!("store lacks {}", Store::entry_text(fl, w)));
                    }
                    store.remove(w);
                    Substitution::single(x, w).apply_formula(body).map_err(|e| e.to_string())?
                }
                _ => unreachable!(),
            };
            let mut items = ctx_items(concl, &[*i]);
            items.push((children(ctx, *o)[0], new_body));
            vec![Seq::new(store, items)]
        }
        Rule::Tens(i, sp) => {
            let (o, f) = principal(concl, *i)?;
            let Formula::Bin(Connective::Tens, a, b) = f else { return Err("principal is not a tens formula".into()) };
            check_split(concl, &[*i], sp)?;
            let ch = children(ctx, *o);
            let mut l = pick(concl, &sp.left);
            l.push((ch[0], (**a).clone()));
            let mut r = pick(concl, &sp.right);
            r.push((ch[1], (**b).clone()));
            vec![Seq::new(sp.store_left.clone(), l), Seq::new(sp.store_right.clone(), r)]
        }
        Rule::Prec(is, sp) => {
            let mut uniq = is.clone();
            uniq.sort_unstable();
            uniq.dedup();
            if uniq.len() != is.len() {
                return Err("repeated principal".into());
            }
            check_split(concl, is, sp)?;
            let mut l = pick(concl, &sp.left);
            let mut r = pick(concl, &sp.right);
            for i in is {
                let (o, f) = principal(concl, *i)?;
                let Formula::Bin(Connective::Prec, a, b) = f else {
                    return Err("principal is not a prec formula".into());
                };
                let ch = children(ctx, *o);
                l.push((ch[0], (**a).clone()));
                r.push((ch[1], (**b).clone()));
            }
            vec![Seq::new(sp.store_left.clone(), l), Seq::new(sp.store_right.clone(), r)]
        }
    };
    for p in &prem {
        p.judgement().validate().map_err(|e| format!("premise `{p}` is not a judgement: {e}"))?;
    }
    Ok(prem)
}

impl DNode {
    /// Builds a node, computing and checking premises; `subs` builds each premise from its conclusion.
    pub fn build(
        ctx: &Context,
        conclusion: Seq,
        rule: Rule,
        subs: impl FnOnce(&[Seq]) -> Result<Vec<DNode>, String>,
    ) -> Result<DNode, String> {
        let prem = premises_for(ctx, &conclusion, &rule)?;
        let premises = subs(&prem)?;
        Ok(DNode { conclusion, rule, premises })
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(|p| p.size()).sum::<usize>()
    }

    pub fn height(&self) -> usize {
        1 + self.premises.iter().map(|p| p.height()).max().unwrap_or(0)
    }

    pub fn rule_names(&self) -> Vec<String> {
        let mut out = vec![rule_name(&self.conclusion, &self.rule)];
        for p in &self.premises {
            out.extend(p.rule_names());
        }
        out
    }

    pub fn at(&self, path: &[usize]) -> Option<&DNode> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.premises.get(*i)?.at(rest),
        }
    }
}

fn check_node(ctx: &Context, d: &DNode, at: &mut Vec<usize>) -> Result<(), Violation> {
    let here = |clause: String, at: &[usize]| Violation {
        at: std::iter::once("root".to_string()).chain(at.iter().map(|i| i.to_string())).collect::<Vec<_>>().join("/"),
        clause,
    };
    d.conclusion.judgement().validate().map_err(|e| here(format!("conclusion is not a judgement: {e}"), at))?;
    let prem = premises_for(ctx, &d.conclusion, &d.rule).map_err(|c| here(c, at))?;
    if prem.len() != d.premises.len() {
        return Err(here(format!("rule needs {} premises, found {}", prem.len(), d.premises.len()), at));
    }
    for (i, (want, got)) in prem.iter().zip(&d.premises).enumerate() {
        if *want != got.conclusion {
            return Err(here(format!("premise {i} should conclude `{want}`"), at));
        }
        at.push(i);
        check_node(ctx, got, at)?;
        at.pop();
    }
    Ok(())
}

/// Checks every node against its rule; the root must conclude the context with an empty store.
pub fn check_derivation(d: &Derivation) -> Result<(), Violation> {
    let root = Seq::root(&d.context);
    if d.root.conclusion != root {
        return Err(Violation { at: "root".into(), clause: "conclusion differs from the judgement".into() });
    }
    if !root.store.is_empty() {
        return Err(Violation { at: "root".into(), clause: "root store must be empty".into() });
    }
    check_node(&d.context, &d.root, &mut Vec::new())
}

// ---------------------------------------------------------------- skeletons

/// A derivation with rules named by occurrences instead of positions and no explicit splits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SkRule {
    Ax(NodeId, NodeId),
    One(NodeId),
    Par(NodeId),
    Plus(NodeId, usize),
    With(NodeId),
    Forall(NodeId),
    Exists(NodeId, Var),
    Unit(NodeId),
    Load(NodeId),
    Pop(NodeId, Var),
    Tens(NodeId),
    Prec(Vec<NodeId>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Skeleton {
    pub rule: SkRule,
    pub premises: Vec<Skeleton>,
}

impl SkRule {
    pub fn principals(&self) -> Vec<NodeId> {
        match self {
            SkRule::Ax(a, b) => vec![*a, *b],
            SkRule::One(o)
            | SkRule::Par(o)
            | SkRule::Plus(o, _)
            | SkRule::With(o)
            | SkRule::Forall(o)
            | SkRule::Exists(o, _)
            | SkRule::Unit(o)
            | SkRule::Load(o)
            | SkRule::Pop(o, _)
            | SkRule::Tens(o) => vec![*o],
            SkRule::Prec(os) => os.clone(),
        }
    }
}

impl Skeleton {
    pub fn new(rule: SkRule, premises: Vec<Skeleton>) -> Skeleton {
        Skeleton { rule, premises }
    }

    /// Every occurrence named anywhere in the subtree.
    pub fn occurrences(&self) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<NodeId>) {
        out.extend(self.rule.principals());
        for p in &self.premises {
            p.collect(out);
        }
    }

    fn pops(&self, out: &mut BTreeSet<Var>) {
        if let SkRule::Pop(_, w) = &self.rule {
            out.insert(w.clone());
        }
        for p in &self.premises {
            p.pops(out);
        }
    }

    pub fn at(&self, path: &[usize]) -> Option<&Skeleton> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.premises.get(*i)?.at(rest),
        }
    }

    pub fn at_mut(&mut self, path: &[usize]) -> Option<&mut Skeleton> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.premises.get_mut(*i)?.at_mut(rest),
        }
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(|p| p.size()).sum::<usize>()
    }
}

pub fn to_skeleton(d: &DNode) -> Skeleton {
    let occ = |i: &usize| d.conclusion.items[*i].0;
    let rule = match &d.rule {
        Rule::Ax => SkRule::Ax(d.conclusion.items[0].0, d.conclusion.items[1].0),
        Rule::One => SkRule::One(d.conclusion.items[0].0),
        Rule::Par(i) => SkRule::Par(occ(i)),
        Rule::Plus(i, s) => SkRule::Plus(occ(i), *s),
        Rule::With(i) => SkRule::With(occ(i)),
        Rule::Forall(i) => SkRule::Forall(occ(i)),
        Rule::Exists(i, w) => SkRule::Exists(occ(i), w.clone()),
        Rule::Unit(i) => SkRule::Unit(occ(i)),
        Rule::Load(i) => SkRule::Load(occ(i)),
        Rule::Pop(i, w) => SkRule::Pop(occ(i), w.clone()),
        Rule::Tens(i, _) => SkRule::Tens(occ(i)),
        Rule::Prec(is, _) => SkRule::Prec(is.iter().map(occ).collect()),
    };
    Skeleton::new(rule, d.premises.iter().map(to_skeleton).collect())
}

fn fresh_name(base: &str, avoid: &BTreeSet<Var>) -> Var {
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
    let stem = if stem.is_empty() { "v" } else { stem };
    (1..).map(|n| format!("{stem}{n}")).find(|v| !avoid.contains(v)).expect("infinitely many names")
}

struct Realizer<'a> {
    ctx: &'a Context,
    /// Names ever used in the root judgement or handed out as fresh.
    used: BTreeSet<Var>,
}

impl Realizer<'_> {
    /// A witness name valid in `concl`: free names are kept, bound ones replaced by a fresh name.
    fn witness(&mut self, rho: &mut BTreeMap<Var, Var>, w: &str, concl: &Seq) -> Var {
        if let Some(v) = rho.get(w) {
            return v.clone();
        }
        if concl.free_vars().contains(w) || concl.store.get(w).is_some() {
            return w.to_string();
        }
        if concl.judgement().all_vars().contains(w) {
            let v = fresh_name(w, &self.used);
            self.used.insert(v.clone());
            rho.insert(w.to_string(), v.clone());
            return v;
        }
        w.to_string()
    }

    fn split(
        &self,
        concl: &Seq,
        principals: &[usize],
        left: &Skeleton,
        right: &Skeleton,
        rho: &BTreeMap<Var, Var>,
    ) -> Result<Split, String> {
        let (lo, ro) = (left.occurrences(), right.occurrences());
        let mut sp = Split::default();
        for (i, (o, _)) in concl.items.iter().enumerate() {
            if principals.contains(&i) {
                continue;
            }
            let end = self.ctx.node(*o).end;
            let in_l = lo.range(*o..end).next().is_some();
            let in_r = ro.range(*o..end).next().is_some();
            match (in_l, in_r) {
                (true, false) => sp.left.push(i),
                (false, true) => sp.right.push(i),
                (false, false) => return Err(format!("formula {} is used by neither premise", concl.items[i].1)),
                (true, true) => return Err(format!("formula {} is used by both premises", concl.items[i].1)),
            }
        }
        let name = |w: &Var| rho.get(w).cloned().unwrap_or_else(|| w.clone());
        let mut lp = BTreeSet::new();
        left.pops(&mut lp);
        let lp: BTreeSet<Var> = lp.iter().map(name).collect();
        let mut rp = BTreeSet::new();
        right.pops(&mut rp);
        let rp: BTreeSet<Var> = rp.iter().map(name).collect();
        let free_in = |idx: &[usize], x: &str| idx.iter().any(|i| concl.items[*i].1.free_vars().contains(x));
        for (x, fl) in concl.store.iter() {
            let to_left = if lp.contains(x) {
                true
            } else if rp.contains(x) {
                false
            } else {
                let pl: Vec<usize> = sp.left.iter().chain(principals).copied().collect();
                free_in(&pl, x) || !free_in(&sp.right, x)
            };
            let side = if to_left { &mut sp.store_left } else { &mut sp.store_right };
            side.insert(fl, x).expect("store entries are distinct");
        }
        Ok(sp)
    }

    fn realize(&mut self, sk: &Skeleton, concl: Seq, mut rho: BTreeMap<Var, Var>) -> Result<DNode, String> {
        let idx = |o: &NodeId| {
            concl.index_of(*o).ok_or_else(|| format!("occurrence {} is not in `{concl}`", self.ctx.path_of(*o)))
        };
        let rule = match &sk.rule {
            SkRule::Ax(a, b) => {
                let mut want = vec![*a, *b];
                want.sort_unstable();
                if concl.occurrences() != want {
                    return Err(format!("axiom applied to `{concl}`"));
                }
                Rule::Ax
            }
            SkRule::One(o) => {
                if concl.occurrences() != vec![*o] {
                    return Err(format!("unit rule applied to `{concl}`"));
                }
                Rule::One
            }
            SkRule::Par(o) => Rule::Par(idx(o)?),
            SkRule::Plus(o, s) => Rule::Plus(idx(o)?, *s),
            SkRule::With(o) => Rule::With(idx(o)?),
            SkRule::Forall(o) => Rule::Forall(idx(o)?),
            SkRule::Unit(o) => Rule::Unit(idx(o)?),
            SkRule::Load(o) => Rule::Load(idx(o)?),
            SkRule::Exists(o, w) => Rule::Exists(idx(o)?, self.witness(&mut rho, w, &concl)),
            SkRule::Pop(o, w) => Rule::Pop(idx(o)?, self.witness(&mut rho, w, &concl)),
            SkRule::Tens(o) => {
                let i = idx(o)?;
                let [l, r] = sk.premises.as_slice() else { return Err("tens needs two premises".into()) };
                if !l.occurrences().iter().any(|x| self.ctx.inside(*x, self.ctx.node(*o).children[0])) {
                    return Err("first premise of tens does not use the left factor".into());
                }
                Rule::Tens(i, self.split(&concl, &[i], l, r, &rho)?)
            }
            SkRule::Prec(os) => {
                let is = os.iter().map(idx).collect::<Result<Vec<_>, _>>()?;
                let [l, r] = sk.premises.as_slice() else { return Err("prec needs two premises".into()) };
                Rule::Prec(is.clone(), self.split(&concl, &is, l, r, &rho)?)
            }
        };
        if sk.premises.len() != rule.arity() {
            return Err("wrong number of premises".into());
        }
        let prem = premises_for(self.ctx, &concl, &rule)?;
        let mut premises = Vec::new();
        for (s, c) in sk.premises.iter().zip(prem) {
            premises.push(self.realize(s, c, rho.clone())?);
        }
        Ok(DNode { conclusion: concl, rule, premises })
    }
}

/// Instantiates a skeleton on the root judgement, choosing splits and fresh witness names.
pub fn realize(ctx: &Arc<Context>, sk: &Skeleton) -> Result<Derivation, String> {
    let mut r = Realizer { ctx, used: ctx.judgement.all_vars() };
    let root = r.realize(sk, Seq::root(ctx), BTreeMap::new())?;
    Ok(Derivation { context: ctx.clone(), root })
}

impl Derivation {
    pub fn skeleton(&self) -> Skeleton {
        to_skeleton(&self.root)
    }
}

// ---------------------------------------------------------------- proof search

#[derive(Clone, Debug)]
pub enum Search {
    Proved(Derivation),
    Unprovable,
    BudgetExceeded,
}

struct Prover<'a> {
    ctx: &'a Context,
    budget: u64,
    used: u64,
    failed: HashSet<String>,
}

fn subsets(n: usize) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> {
    (0u64..(1u64 << n)).map(move |m| {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for i in 0..n {
            if m >> i & 1 == 1 {
                l.push(i)
            } else {
                r.push(i)
            }
        }
        (l, r)
    })
}

impl Prover<'_> {
    fn key(concl: &Seq) -> String {
        let mut fs: Vec<String> = concl.items.iter().map(|(o, f)| format!("{o}:{f}")).collect();
        fs.sort();
        format!("{}|{}", concl.store, fs.join(","))
    }

    fn try_rule(&mut self, concl: &Seq, rule: Rule) -> Option<Result<DNode, ()>> {
        let prem = premises_for(self.ctx, concl, &rule).ok()?;
        let mut out = Vec::new();
        for p in prem {
            match self.prove(&p) {
                Ok(Some(d)) => out.push(d),
                Ok(None) => return None,
                Err(()) => return Some(Err(())),
            }
        }
        Some(Ok(DNode { conclusion: concl.clone(), rule, premises: out }))
    }

    /// Ok(None) = unprovable, Err = budget exhausted.
    fn prove(&mut self, concl: &Seq) -> Result<Option<DNode>, ()> {
        let key = Self::key(concl);
        if self.failed.contains(&key) {
            return Ok(None);
        }
        self.used += 1;
        if self.used > self.budget {
            return Err(());
        }
        for rule in self.candidates(concl) {
            match self.try_rule(concl, rule) {
                Some(Ok(d)) => return Ok(Some(d)),
                Some(Err(())) => return Err(()),
                None => {}
            }
        }
        self.failed.insert(key);
        Ok(None)
    }

    fn candidates(&self, concl: &Seq) -> Vec<Rule> {
        let items = &concl.items;
        // Invertible rules are applied on their own.
        for (i, (_, f)) in items.iter().enumerate() {
            match f {
                Formula::Bin(Connective::Par, ..) => return vec![Rule::Par(i)],
                Formula::Bin(Connective::With, ..) => return vec![Rule::With(i)],
                Formula::Quant(Quantifier::All, ..) => return vec![Rule::Forall(i)],
                _ => {}
            }
        }
        let mut out = vec![Rule::Ax, Rule::One];
        let mut names: BTreeSet<Var> = concl.free_vars();
        names.extend(concl.store.vars().cloned());
        let all = concl.judgement().all_vars();
        let n = items.len();
        for (i, (_, f)) in items.iter().enumerate() {
            match f {
                Formula::Bin(Connective::Plus, ..) => {
                    out.push(Rule::Plus(i, 0));
                    out.push(Rule::Plus(i, 1));
                }
                Formula::Quant(Quantifier::Ex, x, _) => {
                    for w in names.iter().cloned().chain([fresh_name(x, &all)]) {
                        out.push(Rule::Exists(i, w));
                    }
                }
                Formula::Quant(q @ (Quantifier::New | Quantifier::Ya), _, _) => {
                    out.push(Rule::Unit(i));
                    out.push(Rule::Load(i));
                    let fl = q.flavor().expect("nominal").dual();
                    for (w, f2) in concl.store.iter() {
                        if f2 == fl {
                            out.push(Rule::Pop(i, w.clone()));
                        }
                    }
                }
                Formula::Bin(Connective::Tens, ..) => {
                    let rest: Vec<usize> = (0..n).filter(|j| *j != i).collect();
                    for sp in self.splits(concl, &rest) {
                        out.push(Rule::Tens(i, sp));
                    }
                }
                _ => {}
            }
        }
        let precs: Vec<usize> =
            (0..n).filter(|i| matches!(items[*i].1, Formula::Bin(Connective::Prec, ..))).collect();
        for (chosen, _) in subsets(precs.len()) {
            let ps: Vec<usize> = chosen.iter().map(|k| precs[*k]).collect();
            let rest: Vec<usize> = (0..n).filter(|j| !ps.contains(j)).collect();
            for sp in self.splits(concl, &rest) {
                if ps.is_empty() && (sp.left.is_empty() || sp.right.is_empty()) {
                    continue;
                }
                out.push(Rule::Prec(ps.clone(), sp));
            }
        }
        out
    }

    fn splits(&self, concl: &Seq, rest: &[usize]) -> Vec<Split> {
        let entries: Vec<(Var, Flavor)> = concl.store.iter().map(|(v, f)| (v.clone(), f)).collect();
        let mut out = Vec::new();
        for (l, r) in subsets(rest.len()) {
            for (sl, sr) in subsets(entries.len()) {
                let store = |ix: &[usize]| ix.iter().map(|k| (entries[*k].1, entries[*k].0.clone())).collect::<Store>();
                out.push(Split {
                    left: l.iter().map(|k| rest[*k]).collect(),
                    right: r.iter().map(|k| rest[*k]).collect(),
                    store_left: store(&sl),
                    store_right: store(&sr),
                });
            }
        }
        out
    }
}

/// Backward search for a derivation of `ctx`'s judgement, counting visited judgements against `budget`.
pub fn prove_search(ctx: &Arc<Context>, budget: u64) -> Search {
    let mut p = Prover { ctx, budget, used: 0, failed: HashSet::new() };
    match p.prove(&Seq::root(ctx)) {
        Ok(Some(root)) => Search::Proved(Derivation { context: ctx.clone(), root }),
        Ok(None) => Search::Unprovable,
        Err(()) => Search::BudgetExceeded,
    }
}

// ---------------------------------------------------------------- JSON

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(untagged)]
pub enum PrincipalJson {
    One(String),
    Many(Vec<String>),
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct SplitJson {
    #[serde(default)]
    pub left: Vec<String>,
    #[serde(default)]
    pub right: Vec<String>,
    #[serde(rename = "storeLeft", default)]
    pub store_left: Vec<String>,
    #[serde(rename = "storeRight", default)]
    pub store_right: Vec<String>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct DerivationJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conclusion: Option<String>,
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal: Option<PrincipalJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub premises: Vec<DerivationJson>,
}

fn node_json(d: &DNode) -> DerivationJson {
    let ix = |i: &usize| i.to_string();
    let split = |sp: &Split| SplitJson {
        left: sp.left.iter().map(ix).collect(),
        right: sp.right.iter().map(ix).collect(),
        store_left: sp.store_left.iter().map(|(x, f)| Store::entry_text(f, x)).collect(),
        store_right: sp.store_right.iter().map(|(x, f)| Store::entry_text(f, x)).collect(),
    };
    let (principal, sp, witness) = match &d.rule {
        Rule::Ax | Rule::One => (None, None, None),
        Rule::Exists(i, w) | Rule::Pop(i, w) => (Some(PrincipalJson::One(ix(i))), None, Some(w.clone())),
        Rule::Tens(i, s) => (Some(PrincipalJson::One(ix(i))), Some(split(s)), None),
        Rule::Prec(is, s) => (Some(PrincipalJson::Many(is.iter().map(ix).collect())), Some(split(s)), None),
        r => (Some(PrincipalJson::One(ix(&r.principals()[0]))), None, None),
    };
    DerivationJson {
        conclusion: None,
        rule: rule_name(&d.conclusion, &d.rule),
        principal,
        split: sp,
        witness,
        premises: d.premises.iter().map(node_json).collect(),
    }
}

fn parse_index(s: &str, concl: &Seq) -> Result<usize, String> {
    let i: usize = s.trim().parse().map_err(|_| format!("bad formula index `{s}`"))?;
    if i >= concl.items.len() {
        return Err(format!("formula index {i} out of range in `{concl}`"));
    }
    Ok(i)
}

fn rule_from_json(j: &DerivationJson, concl: &Seq) -> Result<Rule, String> {
    let one = || match &j.principal {
        Some(PrincipalJson::One(s)) => parse_index(s, concl),
        Some(PrincipalJson::Many(v)) if v.len() == 1 => parse_index(&v[0], concl),
        _ => Err(format!("rule `{}` needs a single principal", j.rule)),
    };
    let witness = || j.witness.clone().ok_or_else(|| format!("rule `{}` needs a witness", j.rule));
    let split = || -> Result<Split, String> {
        let s = j.split.as_ref().ok_or_else(|| format!("rule `{}` needs a split", j.rule))?;
        let store = |v: &[String]| -> Result<Store, String> {
            let mut st = Store::new();
            for e in v {
                let (f, x) = Store::parse_entry(e).map_err(|e| e.to_string())?;
                st.insert(f, &x).map_err(|e| e.to_string())?;
            }
            Ok(st)
        };
        Ok(Split {
            left: s.left.iter().map(|x| parse_index(x, concl)).collect::<Result<_, _>>()?,
            right: s.right.iter().map(|x| parse_index(x, concl)).collect::<Result<_, _>>()?,
            store_left: store(&s.store_left)?,
            store_right: store(&s.store_right)?,
        })
    };
    let rule = match j.rule.as_str() {
        "ax" => Rule::Ax,
        "one" => Rule::One,
        "par" => Rule::Par(one()?),
        "plus_left" | "plus_1" => Rule::Plus(one()?, 0),
        "plus_right" | "plus_2" => Rule::Plus(one()?, 1),
        "with" => Rule::With(one()?),
        "forall" => Rule::Forall(one()?),
        "exists" => Rule::Exists(one()?, witness()?),
        "unit_nu" | "unit_ya" => Rule::Unit(one()?),
        "load_nu" | "load_ya" => Rule::Load(one()?),
        "pop_nu" | "pop_ya" => Rule::Pop(one()?, witness()?),
        "tens" => Rule::Tens(one()?, split()?),
        "prec" => {
            let is = match &j.principal {
                None => vec![],
                Some(PrincipalJson::One(s)) => vec![parse_index(s, concl)?],
                Some(PrincipalJson::Many(v)) => v.iter().map(|s| parse_index(s, concl)).collect::<Result<_, _>>()?,
            };
            Rule::Prec(is, split()?)
        }
        other => return Err(format!("unknown rule `{other}`")),
    };
    let canonical = rule_name(concl, &rule);
    let alias = matches!((j.rule.as_str(), canonical.as_str()), ("plus_1", "plus_left") | ("plus_2", "plus_right"));
    if canonical != j.rule && !alias {
        return Err(format!("rule `{}` does not match its principal (expected `{canonical}`)", j.rule));
    }
    Ok(rule)
}

fn node_from_json(ctx: &Context, j: &DerivationJson, concl: Seq, at: &mut Vec<usize>) -> Result<DNode, Violation> {
    let here = |clause: String, at: &[usize]| Violation {
        at: std::iter::once("root".to_string()).chain(at.iter().map(|i| i.to_string())).collect::<Vec<_>>().join("/"),
        clause,
    };
    let rule = rule_from_json(j, &concl).map_err(|c| here(c, at))?;
    let prem = premises_for(ctx, &concl, &rule).map_err(|c| here(c, at))?;
    if prem.len() != j.premises.len() {
        return Err(here(format!("rule needs {} premises, found {}", prem.len(), j.premises.len()), at));
    }
    let mut premises = Vec::new();
    for (i, (c, pj)) in prem.into_iter().zip(&j.premises).enumerate() {
        at.push(i);
        premises.push(node_from_json(ctx, pj, c, at)?);
        at.pop();
    }
    Ok(DNode { conclusion: concl, rule, premises })
}

impl Derivation {
    pub fn to_json(&self) -> DerivationJson {
        let mut j = node_json(&self.root);
        j.conclusion = Some(self.context.judgement.to_string());
        j
    }

    /// Reads a derivation file; rule violations are reported as `Violation`, format problems as `Malformed`.
    pub fn from_json(j: &DerivationJson) -> Result<Derivation, CalculusError> {
        let text = j.conclusion.as_ref().ok_or_else(|| CalculusError::Malformed("root needs a conclusion".into()))?;
        let ctx = Arc::new(Context::parse(text).map_err(|e| CalculusError::Malformed(e.to_string()))?);
        let root = node_from_json(&ctx, j, Seq::root(&ctx), &mut Vec::new())?;
        Ok(Derivation { context: ctx, root })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("derivation serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Derivation, CalculusError> {
        let j: DerivationJson = serde_json::from_str(text).map_err(|e| CalculusError::Malformed(e.to_string()))?;
        Derivation::from_json(&j)
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(d: &DNode, depth: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            writeln!(f, "{:indent$}{}  {}", "", rule_name(&d.conclusion, &d.rule), d.conclusion, indent = depth * 2)?;
            d.premises.iter().try_for_each(|p| go(p, depth + 1, f))
        }
        go(&self.root, 0, f)
    }
}
