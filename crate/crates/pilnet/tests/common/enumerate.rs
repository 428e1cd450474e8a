//! Small-instance enumeration: clean sequents over at most two atom pairs and one quantifier
//! pair, and every proof structure with at most four leaves over each of them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use pilnet::structure::{validate_structure, CocoTree, Label, LeafId, Link, PreStructure, VarRef};
use pilnet::substitution::{check_dualizer_domain, Substitution};
use pilnet::syntax::{Connective, Context, Formula, NodeKind, Quantifier};

const CONNECTIVES: [Connective; 5] =
    [Connective::Par, Connective::Tens, Connective::Prec, Connective::Plus, Connective::With];
const MAX_DEPTH: usize = 3;
pub const MAX_LEAVES: usize = 4;

/// Atom multisets: one pair, two equal pairs, two pairs with swapped names.
fn atom_sets() -> Vec<Vec<Formula>> {
    let ab = [Formula::send("a", "b"), Formula::recv("a", "b")];
    let ba = [Formula::send("b", "a"), Formula::recv("b", "a")];
    vec![ab.to_vec(), [ab.clone(), ab.clone()].concat(), [ab, ba].concat()]
}

/// Text with commutative arguments sorted, used to drop duplicate sequents.
fn key(f: &Formula) -> String {
    match f {
        Formula::Bin(c, a, b) => {
            let (mut x, mut y) = (key(a), key(b));
            if *c != Connective::Prec && y < x {
                std::mem::swap(&mut x, &mut y);
            }
            format!("({x} {} {y})", c.name())
        }
        Formula::Quant(q, v, a) => format!("{} {v}. {}", q.name(), key(a)),
        other => other.to_string(),
    }
}

fn trees(atoms: &[Formula]) -> Vec<Formula> {
    if atoms.len() == 1 {
        return vec![atoms[0].clone()];
    }
    let n = atoms.len();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    // Each split is tried once; the connective loop covers both argument orders for prec.
    for mask in 1..(1u32 << n) - 1 {
        let (l, r): (Vec<_>, Vec<_>) = (0..n).partition(|i| mask & (1 << i) != 0);
        let pick = |ix: &[usize]| ix.iter().map(|i| atoms[*i].clone()).collect::<Vec<_>>();
        for a in trees(&pick(&l)) {
            for b in trees(&pick(&r)) {
                for c in CONNECTIVES {
                    let f = Formula::bin(c, a.clone(), b.clone());
                    if f.depth() <= MAX_DEPTH && seen.insert(f.to_string()) {
                        out.push(f);
                    }
                }
            }
        }
    }
    out
}

fn set_partitions<T: Clone>(items: &[T]) -> Vec<Vec<Vec<T>>> {
    let Some((first, rest)) = items.split_first() else { return vec![vec![]] };
    let mut out = Vec::new();
    for p in set_partitions(rest) {
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i].insert(0, first.clone());
            out.push(q);
        }
        let mut q = p;
        q.insert(0, vec![first.clone()]);
        out.push(q);
    }
    out
}

fn positions(f: &Formula, here: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    out.push(here.clone());
    match f {
        Formula::Bin(_, a, b) => {
            for (i, c) in [a, b].into_iter().enumerate() {
                here.push(i as u8);
                positions(c, here, out);
                here.pop();
            }
        }
        Formula::Quant(_, _, a) => {
            here.push(0);
            positions(a, here, out);
            here.pop();
        }
        _ => {}
    }
}

/// Renames the free name `a` to `v` below a new binder; `None` when `a` does not occur there.
fn bind(f: &Formula, q: Quantifier, v: &str) -> Option<Formula> {
    fn rename(f: &Formula, v: &str) -> Formula {
        let r = |x: &String| if x == "a" { v.to_string() } else { x.clone() };
        match f {
            Formula::Send(x, y) => Formula::Send(r(x), r(y)),
            Formula::Recv(x, y) => Formula::Recv(r(x), r(y)),
            Formula::Bin(c, a, b) => Formula::bin(*c, rename(a, v), rename(b, v)),
            other => other.clone(),
        }
    }
    f.free_vars().contains("a").then(|| Formula::quant(q, v, rename(f, v)))
}

fn wrap_at(f: &Formula, path: &[u8], q: Quantifier, v: &str) -> Option<Formula> {
    let Some((i, rest)) = path.split_first() else { return bind(f, q, v) };
    Some(match f {
        Formula::Bin(c, a, b) if *i == 0 => Formula::bin(*c, wrap_at(a, rest, q, v)?, (**b).clone()),
        Formula::Bin(c, a, b) => Formula::bin(*c, (**a).clone(), wrap_at(b, rest, q, v)?),
        Formula::Quant(q2, x, a) => Formula::quant(*q2, x, wrap_at(a, rest, q, v)?),
        _ => unreachable!("path leaves the formula"),
    })
}

/// All sequents of the suite as judgement text, deduplicated up to commutativity and formula order.
pub fn sequents() -> Vec<String> {
    let mut out = BTreeSet::new();
    let mut add = |fs: &[Formula]| {
        if fs.iter().all(|f| f.depth() <= MAX_DEPTH) {
            let mut ks: Vec<String> = fs.iter().map(key).collect();
            ks.sort();
            out.insert(format!("|- {}", ks.join(", ")));
        }
    };
    for atoms in atom_sets() {
        for part in set_partitions(&atoms) {
            let choices: Vec<Vec<Formula>> = part.iter().map(|b| trees(b)).collect();
            let mut combo = vec![0usize; choices.len()];
            loop {
                let fs: Vec<Formula> = combo.iter().zip(&choices).map(|(i, c)| c[*i].clone()).collect();
                add(&fs);
                let mut locs = Vec::new();
                for (i, f) in fs.iter().enumerate() {
                    let mut ps = Vec::new();
                    positions(f, &mut vec![], &mut ps);
                    locs.extend(ps.into_iter().map(|p| (i, p)));
                }
                for (q, dual) in [(Quantifier::All, Quantifier::Ex), (Quantifier::New, Quantifier::Ya)] {
                    for (i, p) in &locs {
                        for (j, r) in &locs {
                            if (i, p) == (j, r) {
                                continue;
                            }
                            // The inner binder goes in first so the outer one sees its renaming.
                            let mut g = fs.clone();
                            let mut wrap = |k: usize, at: &[u8], q: Quantifier, v: &str| -> Option<()> {
                                g[k] = wrap_at(&g[k], at, q, v)?;
                                Some(())
                            };
                            let ok = if i == j && p.starts_with(r) {
                                wrap(*i, p, q, "x").and_then(|_| wrap(*j, r, dual, "y"))
                            } else {
                                wrap(*j, r, dual, "y").and_then(|_| wrap(*i, p, q, "x"))
                            };
                            if ok.is_none() {
                                continue;
                            }
                            add(&g);
                        }
                    }
                }
                let Some(k) = (0..combo.len()).find(|k| combo[*k] + 1 < choices[*k].len()) else { break };
                combo[k] += 1;
                combo[..k].iter_mut().for_each(|c| *c = 0);
            }
        }
    }
    out.into_iter().collect()
}

/// Every canonical coco-tree over the given leaves.
fn coco_trees(leaves: &[LeafId], parent: Option<Label>) -> Vec<CocoTree> {
    if leaves.len() == 1 {
        return vec![CocoTree::Leaf(leaves[0])];
    }
    let mut out = Vec::new();
    for label in [Label::Conc, Label::Conf] {
        if Some(label) == parent {
            continue;
        }
        for part in set_partitions(leaves) {
            if part.len() < 2 {
                continue;
            }
            let kids: Vec<Vec<CocoTree>> = part.iter().map(|b| coco_trees(b, Some(label))).collect();
            let mut ix = vec![0usize; kids.len()];
            loop {
                out.push(CocoTree::Node(label, ix.iter().zip(&kids).map(|(i, k)| k[*i].clone()).collect()));
                let Some(k) = (0..ix.len()).find(|k| ix[*k] + 1 < kids[*k].len()) else { break };
                ix[k] += 1;
                ix[..k].iter_mut().for_each(|c| *c = 0);
            }
        }
    }
    out
}

/// Axiomatic links of the context with their admissible dualizers.
fn candidate_links(ctx: &Arc<Context>) -> Vec<(Link, Vec<Substitution>)> {
    let mut names: BTreeSet<String> = ctx.judgement.sequent.iter().flat_map(|f| f.free_vars()).collect();
    let mut binders = Vec::new();
    for (id, n) in ctx.nodes.iter().enumerate() {
        if let NodeKind::Quant(q, x) = &n.kind {
            names.insert(x.clone());
            binders.push((id, *q));
        }
    }
    let mut links = Vec::new();
    for (s, ns) in ctx.nodes.iter().enumerate() {
        for (r, nr) in ctx.nodes.iter().enumerate() {
            if matches!((&ns.kind, &nr.kind), (NodeKind::Send(..), NodeKind::Recv(..))) {
                links.push(Link::sequent(vec![s, r]));
            }
        }
    }
    for (nu, q1) in &binders {
        for (ya, q2) in &binders {
            if (*q1, *q2) == (Quantifier::New, Quantifier::Ya) {
                links.push(Link::Nominal { nu: VarRef::Binder(*nu), ya: VarRef::Binder(*ya) });
            }
        }
    }
    let names: Vec<String> = names.into_iter().collect();
    links
        .into_iter()
        .filter_map(|l| {
            let ds: Vec<Substitution> = dualizers(ctx, &l, &names)
                .into_iter()
                .filter(|s| {
                    let p = single(ctx, &l, s);
                    validate_structure(&p).is_ok()
                })
                .collect();
            (!ds.is_empty()).then_some((l, ds))
        })
        .collect()
}

/// Partial variable maps on the variables a link's dualizer may bind.
fn dualizers(ctx: &Context, l: &Link, names: &[String]) -> Vec<Substitution> {
    let dom: Vec<String> = match l {
        Link::Nominal { nu, ya } => vec![nu.var(ctx).clone(), ya.var(ctx).clone()],
        Link::Sequent(e) => e.iter().flat_map(|n| ctx.node(*n).free.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    let mut out = vec![Substitution::empty()];
    for v in &dom {
        let mut next = Vec::new();
        for s in &out {
            next.push(s.clone());
            for w in names.iter().filter(|w| *w != v) {
                let mut t = s.clone();
                t.insert(v, w);
                next.push(t);
            }
        }
        out = next;
    }
    out.retain(|s| check_dualizer_domain(ctx, l, s).is_ok());
    out
}

fn single(ctx: &Arc<Context>, l: &Link, s: &Substitution) -> PreStructure {
    let ctx = ctx.clone();
    let mut w = BTreeMap::new();
    if !s.is_empty() {
        w.insert(0, s.clone());
    }
    PreStructure::new(ctx, CocoTree::Leaf(0), BTreeMap::from([(0, l.clone())]), w)
}

/// Multisets of `k` indices below `n`, in nondecreasing order.
fn multisets(n: usize, k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in from..n {
        cur.push(i);
        multisets(n, k, i, cur, out);
        cur.pop();
    }
}

/// Static conditions every translated net meets: leaves joined by a `⌢` are disjoint and never
/// sit on opposite sides of one `&`; any two children of a `#` are separated by some `&`.
pub fn admissible(p: &PreStructure) -> bool {
    let ctx = &p.context;
    let withs: Vec<(usize, usize)> = ctx
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Bin(Connective::With)))
        .map(|n| (n.children[0], n.children[1]))
        .collect();
    let touch = |ls: &[LeafId], f: usize| ls.iter().any(|l| p.link(*l).touches(ctx, f));
    let split = |a: &[LeafId], b: &[LeafId]| {
        withs.iter().any(|(l, r)| (touch(a, *l) && touch(b, *r)) || (touch(a, *r) && touch(b, *l)))
    };
    fn go(t: &CocoTree, ok: &dyn Fn(Label, &[LeafId], &[LeafId]) -> bool) -> bool {
        let CocoTree::Node(label, cs) = t else { return true };
        let leaves: Vec<Vec<LeafId>> = cs.iter().map(|c| c.leaves()).collect();
        (0..cs.len()).all(|i| (i + 1..cs.len()).all(|j| ok(*label, &leaves[i], &leaves[j])))
            && cs.iter().all(|c| go(c, ok))
    }
    let ok = |label: Label, a: &[LeafId], b: &[LeafId]| match label {
        Label::Conf => split(a, b),
        Label::Conc => a.iter().all(|x| {
            b.iter().all(|y| {
                let (lx, ly) = (p.link(*x), p.link(*y));
                !split(&[*x], &[*y]) && !lx.elems().iter().any(|e| ly.elems().iter().any(|f| ctx.overlaps(*e, *f)))
            })
        }),
    };
    go(&p.tree, &ok)
}

/// Every root is touched by some link, and below a touched node so is each child a rule on it
/// must keep (one child of a `⊕`, both of any other connective).
fn touch_closed(ctx: &Context, links: &BTreeMap<LeafId, Link>) -> bool {
    let touched = |n: usize| links.values().any(|l| l.touches(ctx, n));
    ctx.roots.iter().all(|r| touched(*r))
        && (0..ctx.len()).filter(|n| touched(*n)).all(|n| {
            let node = ctx.node(n);
            match node.kind {
                NodeKind::Bin(Connective::Plus) => node.children.iter().any(|c| touched(*c)),
                _ => node.children.iter().all(|c| touched(*c)),
            }
        })
}

/// Proof structures over the context, one per isomorphism class. `visit` also receives whether
/// the structure passes [`touch_closed`] and [`admissible`]; with `prune` set, the rest are skipped.
pub fn structures(ctx: &Arc<Context>, prune: bool, mut visit: impl FnMut(&PreStructure, bool)) -> usize {
    let cands = candidate_links(ctx);
    let mut seen = HashSet::new();
    let mut count = 0;
    for k in 1..=MAX_LEAVES {
        let mut picks = Vec::new();
        multisets(cands.len(), k, 0, &mut vec![], &mut picks);
        let leaves: Vec<LeafId> = (0..k as LeafId).collect();
        let shapes = coco_trees(&leaves, None);
        for pick in picks {
            let links: BTreeMap<LeafId, Link> =
                pick.iter().enumerate().map(|(l, i)| (l as LeafId, cands[*i].0.clone())).collect();
            let closed = touch_closed(ctx, &links);
            if prune && !closed {
                continue;
            }
            let bare = PreStructure::new(ctx.clone(), CocoTree::Leaf(0), links.clone(), BTreeMap::new());
            let shapes: Vec<(&CocoTree, bool)> = shapes
                .iter()
                .map(|t| (t, closed && admissible(&PreStructure { tree: t.clone(), ..bare.clone() })))
                .filter(|(_, a)| *a || !prune)
                .collect();
            if shapes.is_empty() {
                continue;
            }
            let mut ds = vec![vec![]];
            for i in &pick {
                ds = ds
                    .into_iter()
                    .flat_map(|d: Vec<&Substitution>| cands[*i].1.iter().map(move |s| [d.clone(), vec![s]].concat()))
                    .collect();
            }
            for d in &ds {
                let witnesses: BTreeMap<LeafId, Substitution> = d
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| !s.is_empty())
                    .map(|(l, s)| (l as LeafId, (*s).clone()))
                    .collect();
                for (t, a) in &shapes {
                    let p = PreStructure::new(ctx.clone(), (*t).clone(), links.clone(), witnesses.clone());
                    if seen.insert(p.canonical_form()) {
                        count += 1;
                        visit(&p, *a);
                    }
                }
            }
        }
    }
    count
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub sequents: usize,
    pub provable: usize,
    pub structures: usize,
    pub accepted: usize,
    /// Sequents where "some structure accepted" and "prove_search succeeds" disagree.
    pub mismatches: Vec<String>,
    /// Structures on which greedy and exhaustive coalescence disagree.
    pub verdict_splits: Vec<String>,
    pub budget_exceeded: usize,
    /// Provable sequents whose proofs all need more leaves than the enumeration allows; the
    /// conflict net of the found proof is accepted instead.
    pub beyond_leaf_bound: Vec<String>,
    /// Structures skipped by [`admissible`] that were still checked exhaustively, and how many of those were accepted.
    pub pruned_checked: usize,
    pub pruned_accepted: usize,
}

/// Runs the enumeration oracle; every `audit`-th sequent also has its pruned structures checked.
pub fn oracle(audit: usize) -> OracleReport {
    use pilnet::bridge::translate_to_conflict_net;
    use pilnet::calculus::{prove_search, Search};
    use pilnet::coalescence::{check_exhaustive, check_exhaustive_cached, check_greedy, Exhaustive, RejectedStates};

    let mut r = OracleReport::default();
    for (i, s) in sequents().iter().enumerate() {
        let ctx = Arc::new(Context::parse(s).expect("generated sequents parse"));
        r.sequents += 1;
        let proof = match prove_search(&ctx, 1_000_000) {
            Search::Proved(d) => Some(d),
            Search::Unprovable => None,
            Search::BudgetExceeded => {
                r.budget_exceeded += 1;
                continue;
            }
        };
        let provable = proof.is_some();
        r.provable += provable as usize;
        let audit_this = audit > 0 && i % audit == 0;
        let mut any = false;
        let mut cache = RejectedStates::default();
        structures(&ctx, !audit_this, |p, admissible| {
            let exhaustive = match check_exhaustive_cached(p, 1_000_000, &mut cache) {
                Exhaustive::Accepted(_) => true,
                Exhaustive::Rejected => false,
                Exhaustive::BudgetExceeded => {
                    r.budget_exceeded += 1;
                    return;
                }
            };
            if !admissible {
                r.pruned_checked += 1;
                r.pruned_accepted += exhaustive as usize;
                return;
            }
            r.structures += 1;
            r.accepted += exhaustive as usize;
            any |= exhaustive;
            if check_greedy(p, 0).is_accepted() != exhaustive {
                r.verdict_splits.push(format!("{s}: {p}"));
            }
        });
        if let (Some(d), false) = (&proof, any) {
            let net = translate_to_conflict_net(d).expect("found proofs translate");
            if net.tree.leaves().len() > MAX_LEAVES && matches!(check_exhaustive(&net, 1_000_000), Exhaustive::Accepted(_)) {
                r.beyond_leaf_bound.push(s.clone());
                continue;
            }
        }
        if any != provable {
            r.mismatches.push(format!("{s} (provable: {provable}, accepted structure: {any})"));
        }
    }
    r
}
