//! Links, coco-trees, pre-structures, canonization, validation, isomorphism and net JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::substitution::{validate_witness_map, Substitution};
use crate::syntax::{Context, Flavor, NodeId, NodeKind, Quantifier, Store, SyntaxError, Var};

pub type LeafId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarRef {
    /// The quantifier node binding the variable.
    Binder(NodeId),
    Store(Flavor, Var),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Link {
    /// Sorted, pairwise non-overlapping formula nodes.
    Sequent(Vec<NodeId>),
    Nominal { nu: VarRef, ya: VarRef },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Conc,
    Conf,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CocoTree {
    Leaf(LeafId),
    Node(Label, Vec<CocoTree>),
}

/// Facts about the linking a structure started from; carried through rewriting.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Origin {
    /// Variables occurring in some nominal link of the original linking.
    pub nominal_vars: BTreeSet<Var>,
}

#[derive(Clone, Debug)]
pub struct PreStructure {
    pub context: Arc<Context>,
    pub tree: CocoTree,
    pub links: BTreeMap<LeafId, Link>,
    pub witnesses: BTreeMap<LeafId, Substitution>,
    /// Store entries a sequent leaf has accumulated during coalescence; empty for proof structures.
    pub stores: BTreeMap<LeafId, Store>,
    pub origin: Arc<Origin>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("malformed net: {0}")]
    Malformed(String),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("leaf {leaf}: {clause}")]
    Violation { leaf: LeafId, clause: String },
    #[error("tree is not canonical")]
    NotCanonical,
    #[error("structures are over different contexts")]
    ContextMismatch,
}

impl Link {
    pub fn sequent(mut elems: Vec<NodeId>) -> Link {
        elems.sort_unstable();
        elems.dedup();
        Link::Sequent(elems)
    }

    pub fn elems(&self) -> &[NodeId] {
        match self {
            Link::Sequent(e) => e,
            Link::Nominal { .. } => &[],
        }
    }

    pub fn is_nominal(&self) -> bool {
        matches!(self, Link::Nominal { .. })
    }

    /// True when some element or nominal binder of the link lies inside the subtree of `f`.
    pub fn touches(&self, ctx: &Context, f: NodeId) -> bool {
        match self {
            Link::Sequent(elems) => elems.iter().any(|e| ctx.inside(*e, f)),
            Link::Nominal { nu, ya } => [nu, ya].iter().any(|r| matches!(r, VarRef::Binder(b) if ctx.inside(*b, f))),
        }
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.elems().binary_search(&n).is_ok()
    }

    pub fn is_axiomatic(&self, ctx: &Context) -> bool {
        match self {
            Link::Nominal { nu, ya } => matches!((nu, ya), (VarRef::Binder(_), VarRef::Binder(_))),
            Link::Sequent(e) => {
                let kinds: Vec<&NodeKind> = e.iter().map(|n| &ctx.node(*n).kind).collect();
                matches!(
                    kinds.as_slice(),
                    [NodeKind::One] | [NodeKind::Send(..), NodeKind::Recv(..)] | [NodeKind::Recv(..), NodeKind::Send(..)]
                )
            }
        }
    }

    /// Structural well-formedness on a context.
    pub fn check(&self, ctx: &Context) -> Result<(), String> {
        match self {
            Link::Sequent(e) => {
                if e.is_empty() {
                    return Err("empty link".into());
                }
                for (i, a) in e.iter().enumerate() {
                    if *a >= ctx.len() {
                        return Err(format!("node {a} out of range"));
                    }
                    for b in &e[i + 1..] {
                        if ctx.overlaps(*a, *b) {
                            return Err(format!(
                                "elements {} and {} overlap",
                                ctx.path_of(*a),
                                ctx.path_of(*b)
                            ));
                        }
                    }
                }
                Ok(())
            }
            Link::Nominal { nu, ya } => {
                let side = |r: &VarRef, fl: Flavor| -> Result<(), String> {
                    match r {
                        VarRef::Binder(b) => match ctx.nodes.get(*b).map(|n| &n.kind) {
                            Some(NodeKind::Quant(q, _)) if *q == fl.quantifier() => Ok(()),
                            _ => Err(format!("{} side must reference a {} binder", fl.name(), fl.quantifier().name())),
                        },
                        VarRef::Store(f, x) => {
                            if *f != fl {
                                return Err(format!("{} side references a {} store entry", fl.name(), f.name()));
                            }
                            if !ctx.judgement.store.contains(*f, x) {
                                return Err(format!("store entry `{} {x}` is not in the context", f.name()));
                            }
                            Ok(())
                        }
                    }
                };
                side(nu, Flavor::Nu)?;
                side(ya, Flavor::Ya)?;
                if matches!((nu, ya), (VarRef::Store(..), VarRef::Store(..))) {
                    return Err("nominal link needs at least one bound variable".into());
                }
                Ok(())
            }
        }
    }

    pub fn render(&self, ctx: &Context) -> String {
        match self {
            Link::Sequent(e) => {
                let parts: Vec<String> = e.iter().map(|n| ctx.path_of(*n).to_string()).collect();
                format!("[{}]", parts.join(","))
            }
            Link::Nominal { nu, ya } => format!("nom[{},{}]", render_ref(ctx, nu), render_ref(ctx, ya)),
        }
    }

    /// Compact rendering by node ids; only comparable within one context.
    fn key(&self) -> String {
        use fmt::Write;
        let mut out = String::new();
        match self {
            Link::Sequent(e) => {
                out.push('[');
                for n in e {
                    let _ = write!(out, "{n},");
                }
                out.push(']');
            }
            Link::Nominal { nu, ya } => {
                for r in [nu, ya] {
                    let _ = match r {
                        VarRef::Binder(b) => write!(out, "@{b},"),
                        VarRef::Store(f, x) => write!(out, "{}{x},", f.name()),
                    };
                }
            }
        }
        out
    }

    /// Human-readable content: the formulas of the link, or its two variables.
    pub fn describe(&self, ctx: &Context) -> String {
        match self {
            Link::Sequent(e) => {
                let parts: Vec<String> = e.iter().map(|n| ctx.node(*n).formula.to_string()).collect();
                parts.join(", ")
            }
            Link::Nominal { nu, ya } => {
                let show = |r: &VarRef, fl: Flavor| match r {
                    VarRef::Binder(_) => r.var(ctx).clone(),
                    VarRef::Store(_, x) => format!("{} {x}", fl.name()),
                };
                format!("{{{}, {}}}", show(nu, Flavor::Nu), show(ya, Flavor::Ya))
            }
        }
    }
}

fn render_ref(ctx: &Context, r: &VarRef) -> String {
    match r {
        VarRef::Binder(b) => format!("@{}", ctx.path_of(*b)),
        VarRef::Store(f, x) => Store::entry_text(*f, x),
    }
}

impl CocoTree {
    pub fn node(label: Label, children: Vec<CocoTree>) -> CocoTree {
        CocoTree::Node(label, children)
    }

    pub fn leaves(&self) -> Vec<LeafId> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<LeafId>) {
        match self {
            CocoTree::Leaf(l) => out.push(*l),
            CocoTree::Node(_, cs) => cs.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            CocoTree::Leaf(_) => 1,
            CocoTree::Node(_, cs) => 1 + cs.iter().map(|c| c.size()).sum::<usize>(),
        }
    }

    pub fn count_label(&self, label: Label) -> usize {
        match self {
            CocoTree::Leaf(_) => 0,
            CocoTree::Node(l, cs) => (*l == label) as usize + cs.iter().map(|c| c.count_label(label)).sum::<usize>(),
        }
    }

    pub fn as_leaf(&self) -> Option<LeafId> {
        match self {
            CocoTree::Leaf(l) => Some(*l),
            _ => None,
        }
    }

    pub fn label(&self) -> Option<Label> {
        match self {
            CocoTree::Node(l, _) => Some(*l),
            _ => None,
        }
    }

    /// The subtree at a child-index address.
    pub fn at(&self, addr: &[usize]) -> Option<&CocoTree> {
        match addr.split_first() {
            None => Some(self),
            Some((i, rest)) => match self {
                CocoTree::Node(_, cs) => cs.get(*i)?.at(rest),
                CocoTree::Leaf(_) => None,
            },
        }
    }

    pub fn at_mut(&mut self, addr: &[usize]) -> Option<&mut CocoTree> {
        match addr.split_first() {
            None => Some(self),
            Some((i, rest)) => match self {
                CocoTree::Node(_, cs) => cs.get_mut(*i)?.at_mut(rest),
                CocoTree::Leaf(_) => None,
            },
        }
    }

    /// Addresses of all internal nodes in preorder.
    pub fn node_addresses(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        fn go(t: &CocoTree, addr: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if let CocoTree::Node(_, cs) = t {
                out.push(addr.clone());
                for (i, c) in cs.iter().enumerate() {
                    addr.push(i);
                    go(c, addr, out);
                    addr.pop();
                }
            }
        }
        go(self, &mut Vec::new(), &mut out);
        out
    }

    /// Address of the parent node of a leaf.
    pub fn leaf_address(&self, leaf: LeafId) -> Option<Vec<usize>> {
        fn go(t: &CocoTree, leaf: LeafId, addr: &mut Vec<usize>) -> bool {
            match t {
                CocoTree::Leaf(l) => *l == leaf,
                CocoTree::Node(_, cs) => {
                    for (i, c) in cs.iter().enumerate() {
                        addr.push(i);
                        if go(c, leaf, addr) {
                            return true;
                        }
                        addr.pop();
                    }
                    false
                }
            }
        }
        let mut addr = Vec::new();
        go(self, leaf, &mut addr).then_some(addr)
    }
}

/// Merges same-labelled parent/child nodes and removes unary nodes.
pub fn canonize(t: &CocoTree) -> CocoTree {
    match t {
        CocoTree::Leaf(l) => CocoTree::Leaf(*l),
        CocoTree::Node(label, cs) => {
            let mut out = Vec::new();
            for c in cs {
                match canonize(c) {
                    CocoTree::Node(l2, gs) if l2 == *label => out.extend(gs),
                    other => out.push(other),
                }
            }
            if out.len() == 1 {
                out.pop().unwrap()
            } else {
                CocoTree::Node(*label, out)
            }
        }
    }
}

pub fn is_canonical(t: &CocoTree) -> bool {
    fn go(t: &CocoTree, parent: Option<Label>) -> bool {
        match t {
            CocoTree::Leaf(_) => true,
            CocoTree::Node(l, cs) => cs.len() >= 2 && parent != Some(*l) && cs.iter().all(|c| go(c, Some(*l))),
        }
    }
    go(t, None)
}

impl Origin {
    pub fn from_links(ctx: &Context, links: &BTreeMap<LeafId, Link>) -> Origin {
        let mut o = Origin::default();
        for l in links.values() {
            if let Link::Nominal { nu, ya } = l {
                o.nominal_vars.insert(nu.var(ctx).clone());
                o.nominal_vars.insert(ya.var(ctx).clone());
            }
        }
        o
    }
}

impl PreStructure {
    pub fn new(
        context: Arc<Context>,
        tree: CocoTree,
        links: BTreeMap<LeafId, Link>,
        witnesses: BTreeMap<LeafId, Substitution>,
    ) -> PreStructure {
        let origin = Arc::new(Origin::from_links(&context, &links));
        PreStructure { context, tree, links, witnesses, stores: BTreeMap::new(), origin }
    }

    pub fn store(&self, leaf: LeafId) -> Store {
        self.stores.get(&leaf).cloned().unwrap_or_default()
    }

    pub fn dualizer(&self, leaf: LeafId) -> Substitution {
        self.witnesses.get(&leaf).cloned().unwrap_or_default()
    }

    pub fn link(&self, leaf: LeafId) -> &Link {
        &self.links[&leaf]
    }

    pub fn fresh_leaf_id(&self) -> LeafId {
        self.links.keys().next_back().map(|m| m + 1).unwrap_or(0)
    }

    /// A single sequent leaf covering every root with an empty dualizer.
    pub fn is_trivial(&self) -> bool {
        match &self.tree {
            CocoTree::Leaf(l) => {
                self.dualizer(*l).is_empty()
                    && matches!(self.link(*l), Link::Sequent(e) if *e == self.context.roots)
            }
            _ => false,
        }
    }

    /// Every tree leaf has a link, ids are unique, and every link is well formed.
    pub fn check_shape(&self) -> Result<(), StructureError> {
        let leaves = self.tree.leaves();
        let set: BTreeSet<LeafId> = leaves.iter().copied().collect();
        if set.len() != leaves.len() {
            return Err(StructureError::Malformed("duplicate leaf id in tree".into()));
        }
        if set != self.links.keys().copied().collect::<BTreeSet<_>>() {
            return Err(StructureError::Malformed("tree leaves and link table differ".into()));
        }
        if let Some(k) = self.witnesses.keys().find(|k| !set.contains(k)) {
            return Err(StructureError::Malformed(format!("witness for unknown leaf {k}")));
        }
        for (id, l) in &self.links {
            l.check(&self.context).map_err(|clause| StructureError::Violation { leaf: *id, clause })?;
        }
        Ok(())
    }

    /// Canonical string: children sorted, leaf ids ignored.
    pub fn canonical_form(&self) -> String {
        self.canonical_with(&|l| self.dualizer(l).to_string())
    }

    /// Canonical string with a caller-chosen decoration appended to each leaf.
    pub fn canonical_with(&self, decorate: &dyn Fn(LeafId) -> String) -> String {
        fn go(p: &PreStructure, t: &CocoTree, dual: &dyn Fn(LeafId) -> String) -> String {
            match t {
                CocoTree::Leaf(l) => format!("{}{}", p.link(*l).key(), dual(*l)),
                CocoTree::Node(label, cs) => {
                    let mut parts: Vec<String> = cs.iter().map(|c| go(p, c, dual)).collect();
                    parts.sort();
                    let tag = if *label == Label::Conc { "C" } else { "X" };
                    format!("{tag}({})", parts.join(" "))
                }
            }
        }
        go(self, &self.tree, decorate)
    }

    pub fn same_context(&self, other: &PreStructure) -> bool {
        Arc::ptr_eq(&self.context, &other.context) || self.context.judgement == other.context.judgement
    }
}

pub fn validate_structure(p: &PreStructure) -> Result<(), StructureError> {
    p.check_shape()?;
    for (id, l) in &p.links {
        if !l.is_axiomatic(&p.context) {
            return Err(StructureError::Violation { leaf: *id, clause: "link is not axiomatic".into() });
        }
    }
    if !is_canonical(&p.tree) {
        return Err(StructureError::NotCanonical);
    }
    validate_witness_map(p).map_err(|v| StructureError::Violation { leaf: v.leaf, clause: v.clause })
}

pub fn isomorphic(p1: &PreStructure, p2: &PreStructure) -> Result<bool, StructureError> {
    if !p1.same_context(p2) {
        return Err(StructureError::ContextMismatch);
    }
    Ok(p1.canonical_form() == p2.canonical_form())
}

/// Isomorphism where dualizers are compared only by the variables they identify.
pub fn isomorphic_up_to_witnesses(p1: &PreStructure, p2: &PreStructure) -> Result<bool, StructureError> {
    if !p1.same_context(p2) {
        return Err(StructureError::ContextMismatch);
    }
    let k1 = |l| format!("{:?}", p1.dualizer(l).kernel());
    let k2 = |l| format!("{:?}", p2.dualizer(l).kernel());
    Ok(p1.canonical_with(&k1) == p2.canonical_with(&k2))
}

impl fmt::Display for PreStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(p: &PreStructure, t: &CocoTree, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match t {
                CocoTree::Leaf(l) => {
                    let d = p.dualizer(*l);
                    write!(f, "#{l}{{{}}}", p.link(*l).describe(&p.context))?;
                    if !d.is_empty() {
                        write!(f, "{d}")?;
                    }
                    Ok(())
                }
                CocoTree::Node(label, cs) => {
                    write!(f, "{}(", if *label == Label::Conc { "conc" } else { "conf" })?;
                    for (i, c) in cs.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        go(p, c, f)?;
                    }
                    write!(f, ")")
                }
            }
        }
        go(self, &self.tree, f)
    }
}

// ---------------------------------------------------------------- JSON

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct NetJson {
    pub context: String,
    pub tree: NodeJson,
    #[serde(default)]
    pub witnesses: BTreeMap<String, Substitution>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(rename_all = "lowercase")]
pub enum NodeJson {
    Leaf(LeafJson),
    Conc(Vec<NodeJson>),
    Conf(Vec<NodeJson>),
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct LeafJson {
    pub id: LeafId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<NominalJson>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct NominalJson {
    pub nu: RefJson,
    pub ya: RefJson,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(rename_all = "lowercase")]
pub enum RefJson {
    Binder(String),
    Store(String),
}

impl PreStructure {
    pub fn to_json(&self) -> NetJson {
        let ctx = &self.context;
        fn node(p: &PreStructure, t: &CocoTree) -> NodeJson {
            match t {
                CocoTree::Leaf(l) => {
                    let mut leaf = LeafJson { id: *l, paths: None, nominal: None };
                    match p.link(*l) {
                        Link::Sequent(e) => {
                            leaf.paths = Some(e.iter().map(|n| p.context.path_of(*n).to_string()).collect())
                        }
                        Link::Nominal { nu, ya } => {
                            let r = |r: &VarRef| match r {
                                VarRef::Binder(b) => RefJson::Binder(p.context.path_of(*b).to_string()),
                                VarRef::Store(f, x) => RefJson::Store(Store::entry_text(*f, x)),
                            };
                            leaf.nominal = Some(NominalJson { nu: r(nu), ya: r(ya) })
                        }
                    }
                    NodeJson::Leaf(leaf)
                }
                CocoTree::Node(Label::Conc, cs) => NodeJson::Conc(cs.iter().map(|c| node(p, c)).collect()),
                CocoTree::Node(Label::Conf, cs) => NodeJson::Conf(cs.iter().map(|c| node(p, c)).collect()),
            }
        }
        NetJson {
            context: ctx.judgement.to_string(),
            tree: node(self, &self.tree),
            witnesses: self
                .witnesses
                .iter()
                .filter(|(_, s)| !s.is_empty())
                .map(|(k, s)| (k.to_string(), s.clone()))
                .collect(),
        }
    }

    pub fn from_json(net: &NetJson) -> Result<PreStructure, StructureError> {
        let ctx = Arc::new(Context::parse(&net.context)?);
        PreStructure::from_json_in(ctx, net)
    }

    pub fn from_json_in(ctx: Arc<Context>, net: &NetJson) -> Result<PreStructure, StructureError> {
        let mut links = BTreeMap::new();
        fn node(
            ctx: &Context,
            n: &NodeJson,
            links: &mut BTreeMap<LeafId, Link>,
        ) -> Result<CocoTree, StructureError> {
            match n {
                NodeJson::Leaf(l) => {
                    let link = match (&l.paths, &l.nominal) {
                        (Some(ps), None) => {
                            let ids = ps
                                .iter()
                                .map(|s| ctx.id_of(&s.parse()?))
                                .collect::<Result<Vec<_>, SyntaxError>>()?;
                            Link::sequent(ids)
                        }
                        (None, Some(nom)) => Link::Nominal { nu: parse_ref(ctx, &nom.nu)?, ya: parse_ref(ctx, &nom.ya)? },
                        _ => {
                            return Err(StructureError::Malformed(format!(
                                "leaf {} needs exactly one of `paths` or `nominal`",
                                l.id
                            )))
                        }
                    };
                    if links.insert(l.id, link).is_some() {
                        return Err(StructureError::Malformed(format!("duplicate leaf id {}", l.id)));
                    }
                    Ok(CocoTree::Leaf(l.id))
                }
                NodeJson::Conc(cs) | NodeJson::Conf(cs) => {
                    if cs.is_empty() {
                        return Err(StructureError::Malformed("internal node without children".into()));
                    }
                    let label = if matches!(n, NodeJson::Conc(_)) { Label::Conc } else { Label::Conf };
                    let kids = cs.iter().map(|c| node(ctx, c, links)).collect::<Result<Vec<_>, _>>()?;
                    Ok(CocoTree::Node(label, kids))
                }
            }
        }
        let tree = node(&ctx, &net.tree, &mut links)?;
        let mut witnesses = BTreeMap::new();
        for (k, s) in &net.witnesses {
            let id: LeafId = k.parse().map_err(|_| StructureError::Malformed(format!("bad leaf id `{k}`")))?;
            witnesses.insert(id, s.clone());
        }
        let p = PreStructure::new(ctx, tree, links, witnesses);
        p.check_shape()?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("net serializes")
    }

    pub fn from_json_str(text: &str) -> Result<PreStructure, StructureError> {
        let net: NetJson = serde_json::from_str(text).map_err(|e| StructureError::Malformed(e.to_string()))?;
        PreStructure::from_json(&net)
    }
}

fn parse_ref(ctx: &Context, r: &RefJson) -> Result<VarRef, StructureError> {
    match r {
        RefJson::Binder(p) => {
            let id = ctx.id_of(&p.parse()?)?;
            match ctx.node(id).kind {
                NodeKind::Quant(Quantifier::New | Quantifier::Ya, _) => Ok(VarRef::Binder(id)),
                _ => Err(StructureError::Malformed(format!("`{p}` is not a nominal binder"))),
            }
        }
        RefJson::Store(s) => {
            let (f, x) = Store::parse_entry(s)?;
            Ok(VarRef::Store(f, x))
        }
    }
}
