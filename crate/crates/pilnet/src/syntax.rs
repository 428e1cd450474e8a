//! Formulas, stores and judgements, with occurrence paths and a text parser.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub type Var = String;

/// Index of a formula node inside a [`Context`] (preorder over the whole sequent).
pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Connective {
    Par,
    Tens,
    Prec,
    Plus,
    With,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantifier {
    All,
    Ex,
    New,
    Ya,
}

/// Flavor of a nominal variable in a store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Flavor {
    Nu,
    Ya,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    One,
    Send(Var, Var),
    Recv(Var, Var),
    Bin(Connective, Box<Formula>, Box<Formula>),
    Quant(Quantifier, Var, Box<Formula>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    L,
    R,
    D,
}

/// Address of a node: root formula index plus child steps.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    pub index: usize,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Store {
    entries: BTreeMap<Var, Flavor>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Judgement {
    pub store: Store,
    pub sequent: Vec<Formula>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("syntax error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("judgement is not clean: variable `{var}` {reason}")]
    Unclean { var: Var, reason: String },
    #[error("store variable `{0}` is not free in the sequent")]
    StoreNotFree(Var),
    #[error("variable `{0}` occurs twice in the store")]
    DuplicateStore(Var),
    #[error("invalid path `{0}`")]
    BadPath(String),
}

impl Connective {
    pub fn name(self) -> &'static str {
        match self {
            Connective::Par => "par",
            Connective::Tens => "tens",
            Connective::Prec => "prec",
            Connective::Plus => "plus",
            Connective::With => "with",
        }
    }

    pub fn dual(self) -> Connective {
        match self {
            Connective::Par => Connective::Tens,
            Connective::Tens => Connective::Par,
            Connective::Prec => Connective::Prec,
            Connective::Plus => Connective::With,
            Connective::With => Connective::Plus,
        }
    }
}

impl Quantifier {
    pub fn name(self) -> &'static str {
        match self {
            Quantifier::All => "all",
            Quantifier::Ex => "ex",
            Quantifier::New => "new",
            Quantifier::Ya => "ya",
        }
    }

    pub fn dual(self) -> Quantifier {
        match self {
            Quantifier::All => Quantifier::Ex,
            Quantifier::Ex => Quantifier::All,
            Quantifier::New => Quantifier::Ya,
            Quantifier::Ya => Quantifier::New,
        }
    }

    /// The store flavor produced by loading this quantifier, if it is nominal.
    pub fn flavor(self) -> Option<Flavor> {
        match self {
            Quantifier::New => Some(Flavor::Nu),
            Quantifier::Ya => Some(Flavor::Ya),
            _ => None,
        }
    }
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Nu => "nu",
            Flavor::Ya => "ya",
        }
    }

    pub fn quantifier(self) -> Quantifier {
        match self {
            Flavor::Nu => Quantifier::New,
            Flavor::Ya => Quantifier::Ya,
        }
    }

    pub fn dual(self) -> Flavor {
        match self {
            Flavor::Nu => Flavor::Ya,
            Flavor::Ya => Flavor::Nu,
        }
    }
}

impl Formula {
    pub fn send(x: &str, y: &str) -> Formula {
        Formula::Send(x.into(), y.into())
    }

    pub fn recv(x: &str, y: &str) -> Formula {
        Formula::Recv(x.into(), y.into())
    }

    pub fn bin(c: Connective, a: Formula, b: Formula) -> Formula {
        Formula::Bin(c, Box::new(a), Box::new(b))
    }

    pub fn quant(q: Quantifier, x: &str, a: Formula) -> Formula {
        Formula::Quant(q, x.into(), Box::new(a))
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Formula::One | Formula::Send(..) | Formula::Recv(..))
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Bin(_, a, b) => 1 + a.size() + b.size(),
            Formula::Quant(_, _, a) => 1 + a.size(),
            _ => 1,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
            Formula::Quant(_, _, a) => 1 + a.depth(),
            _ => 0,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free<'a>(&'a self, bound: &mut Vec<&'a str>, out: &mut BTreeSet<Var>) {
        match self {
            Formula::One => {}
            Formula::Send(x, y) | Formula::Recv(x, y) => {
                for v in [x, y] {
                    if !bound.contains(&v.as_str()) {
                        out.insert(v.clone());
                    }
                }
            }
            Formula::Bin(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Quant(_, x, a) => {
                bound.push(x);
                a.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Every variable name occurring in the formula, bound or free.
    pub fn all_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::One => {}
            Formula::Send(x, y) | Formula::Recv(x, y) => {
                out.insert(x.clone());
                out.insert(y.clone());
            }
            Formula::Bin(_, a, b) => {
                a.all_vars(out);
                b.all_vars(out);
            }
            Formula::Quant(_, x, a) => {
                out.insert(x.clone());
                a.all_vars(out);
            }
        }
    }

    fn binders<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Formula::Bin(_, a, b) => {
                a.binders(out);
                b.binders(out);
            }
            Formula::Quant(_, x, a) => {
                out.push(x);
                a.binders(out);
            }
            _ => {}
        }
    }

    pub fn dual(&self) -> Formula {
        match self {
            Formula::One => Formula::One,
            Formula::Send(x, y) => Formula::Recv(x.clone(), y.clone()),
            Formula::Recv(x, y) => Formula::Send(x.clone(), y.clone()),
            Formula::Bin(c, a, b) => Formula::bin(c.dual(), a.dual(), b.dual()),
            Formula::Quant(q, x, a) => Formula::quant(q.dual(), x, a.dual()),
        }
    }

    pub fn child(&self, step: Step) -> Option<&Formula> {
        match (self, step) {
            (Formula::Bin(_, a, _), Step::L) => Some(a),
            (Formula::Bin(_, _, b), Step::R) => Some(b),
            (Formula::Quant(_, _, a), Step::D) => Some(a),
            _ => None,
        }
    }
}

/// Equality modulo renaming of bound variables.
pub fn alpha_equal(f1: &Formula, f2: &Formula) -> bool {
    fn go<'a>(a: &'a Formula, b: &'a Formula, env: &mut Vec<(&'a str, &'a str)>) -> bool {
        let same_var = |env: &Vec<(&str, &str)>, x: &str, y: &str| {
            let lx = env.iter().rev().find(|(l, _)| *l == x);
            let ry = env.iter().rev().find(|(_, r)| *r == y);
            match (lx, ry) {
                (None, None) => x == y,
                (Some(p), Some(q)) => std::ptr::eq(p, q),
                _ => false,
            }
        };
        match (a, b) {
            (Formula::One, Formula::One) => true,
            (Formula::Send(x1, y1), Formula::Send(x2, y2))
            | (Formula::Recv(x1, y1), Formula::Recv(x2, y2)) => {
                same_var(env, x1, x2) && same_var(env, y1, y2)
            }
            (Formula::Bin(c1, a1, b1), Formula::Bin(c2, a2, b2)) => {
                c1 == c2 && go(a1, a2, env) && go(b1, b2, env)
            }
            (Formula::Quant(q1, x1, a1), Formula::Quant(q2, x2, a2)) => {
                if q1 != q2 {
                    return false;
                }
                env.push((x1, x2));
                let r = go(a1, a2, env);
                env.pop();
                r
            }
            _ => false,
        }
    }
    go(f1, f2, &mut Vec::new())
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn insert(&mut self, flavor: Flavor, x: &str) -> Result<(), SyntaxError> {
        if self.entries.contains_key(x) {
            return Err(SyntaxError::DuplicateStore(x.into()));
        }
        self.entries.insert(x.into(), flavor);
        Ok(())
    }

    pub fn remove(&mut self, x: &str) -> Option<Flavor> {
        self.entries.remove(x)
    }

    pub fn get(&self, x: &str) -> Option<Flavor> {
        self.entries.get(x).copied()
    }

    pub fn contains(&self, flavor: Flavor, x: &str) -> bool {
        self.get(x) == Some(flavor)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, Flavor)> {
        self.entries.iter().map(|(v, f)| (v, *f))
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.entries.keys()
    }

    /// Disjoint union; fails when a variable occurs on both sides.
    pub fn union(&self, other: &Store) -> Result<Store, SyntaxError> {
        let mut out = self.clone();
        for (v, f) in other.iter() {
            out.insert(f, v)?;
        }
        Ok(out)
    }

    pub fn entry_text(flavor: Flavor, x: &str) -> String {
        format!("{} {}", flavor.name(), x)
    }

    pub fn parse_entry(text: &str) -> Result<(Flavor, Var), SyntaxError> {
        let mut it = text.split_whitespace();
        let bad = || SyntaxError::Parse { pos: 0, msg: format!("bad store entry `{text}`") };
        let flavor = match it.next() {
            Some("nu") => Flavor::Nu,
            Some("ya") => Flavor::Ya,
            _ => return Err(bad()),
        };
        let var = it.next().ok_or_else(bad)?;
        if it.next().is_some() || !is_var(var) {
            return Err(bad());
        }
        Ok((flavor, var.into()))
    }
}

impl FromIterator<(Flavor, Var)> for Store {
    fn from_iter<I: IntoIterator<Item = (Flavor, Var)>>(iter: I) -> Store {
        Store { entries: iter.into_iter().map(|(f, v)| (v, f)).collect() }
    }
}

impl Judgement {
    pub fn new(store: Store, sequent: Vec<Formula>) -> Judgement {
        Judgement { store, sequent }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        self.sequent.iter().flat_map(|f| f.free_vars()).collect()
    }

    /// Cleanliness plus the store discipline of judgements.
    pub fn validate(&self) -> Result<(), SyntaxError> {
        check_clean(&self.sequent, &self.store)?;
        let free = self.free_vars();
        for v in self.store.vars() {
            if !free.contains(v) {
                return Err(SyntaxError::StoreNotFree(v.clone()));
            }
        }
        Ok(())
    }

    pub fn all_vars(&self) -> BTreeSet<Var> {
        let mut out: BTreeSet<Var> = self.store.vars().cloned().collect();
        for f in &self.sequent {
            f.all_vars(&mut out);
        }
        out
    }
}

/// Each variable bound at most once; bound and store variables never free.
pub fn check_clean(sequent: &[Formula], store: &Store) -> Result<(), SyntaxError> {
    let mut bound = Vec::new();
    for f in sequent {
        f.binders(&mut bound);
    }
    let mut seen = BTreeSet::new();
    for x in &bound {
        if !seen.insert(*x) {
            return Err(SyntaxError::Unclean { var: (*x).into(), reason: "is bound twice".into() });
        }
    }
    let free: BTreeSet<Var> = sequent.iter().flat_map(|f| f.free_vars()).collect();
    for x in &bound {
        if free.contains(*x) {
            return Err(SyntaxError::Unclean {
                var: (*x).into(),
                reason: "occurs both bound and free".into(),
            });
        }
        if store.get(x).is_some() {
            return Err(SyntaxError::Unclean {
                var: (*x).into(),
                reason: "occurs both bound and in the store".into(),
            });
        }
    }
    Ok(())
}

pub fn is_var(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic())
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::One => write!(f, "one"),
            Formula::Send(x, y) => write!(f, "{x}!{y}"),
            Formula::Recv(x, y) => write!(f, "{x}?{y}"),
            Formula::Bin(c, a, b) => write!(f, "({a} {} {b})", c.name()),
            Formula::Quant(q, x, a) => write!(f, "{} {x}. {a}", q.name()),
        }
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(v, fl)| Store::entry_text(fl, v)).collect();
        write!(f, "{}", parts.join(", "))
    }
}

impl fmt::Display for Judgement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.store.is_empty() {
            write!(f, "{} ", self.store)?;
        }
        let parts: Vec<String> = self.sequent.iter().map(|x| x.to_string()).collect();
        write!(f, "|- {}", parts.join(", "))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index)?;
        for s in &self.steps {
            let c = match s {
                Step::L => "L",
                Step::R => "R",
                Step::D => "D",
            };
            write!(f, ".{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Path {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Path, SyntaxError> {
        let bad = || SyntaxError::BadPath(s.into());
        let mut parts = s.trim().split('.');
        let index = parts.next().ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())?;
        let steps = parts
            .map(|p| match p {
                "L" => Ok(Step::L),
                "R" => Ok(Step::R),
                "D" => Ok(Step::D),
                _ => Err(bad()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Path { index, steps })
    }
}

impl Path {
    pub fn root(index: usize) -> Path {
        Path { index, steps: Vec::new() }
    }

    pub fn child(&self, step: Step) -> Path {
        let mut steps = self.steps.clone();
        steps.push(step);
        Path { index: self.index, steps }
    }
}

/// A node reached by [`resolve_path`], with the quantifiers enclosing it (outermost first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved<'a> {
    pub node: &'a Formula,
    pub binders: Vec<(Quantifier, &'a str)>,
}

pub fn resolve_path<'a>(j: &'a Judgement, p: &Path) -> Result<Resolved<'a>, SyntaxError> {
    let bad = || SyntaxError::BadPath(p.to_string());
    let mut node = j.sequent.get(p.index).ok_or_else(bad)?;
    let mut binders = Vec::new();
    for s in &p.steps {
        if let Formula::Quant(q, x, _) = node {
            binders.push((*q, x.as_str()));
        }
        node = node.child(*s).ok_or_else(bad)?;
    }
    Ok(Resolved { node, binders })
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Bang,
    Query,
    LParen,
    RParen,
    Dot,
    Comma,
    Turnstile,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '!' => {
                out.push((i, Tok::Bang));
                i += 1
            }
            '?' => {
                out.push((i, Tok::Query));
                i += 1
            }
            '(' => {
                out.push((i, Tok::LParen));
                i += 1
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1
            }
            '.' => {
                out.push((i, Tok::Dot));
                i += 1
            }
            ',' => {
                out.push((i, Tok::Comma));
                i += 1
            }
            '|' if bytes.get(i + 1) == Some(&b'-') => {
                out.push((i, Tok::Turnstile));
                i += 2
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(SyntaxError::Parse { pos: i, msg: format!("unexpected character `{c}`") });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError::Parse { pos: self.offset(), msg: msg.into() })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected a variable"),
        }
    }

    fn formula(&mut self) -> Result<Formula, SyntaxError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let a = self.formula()?;
                let op = self.ident()?;
                let c = match op.as_str() {
                    "par" => Connective::Par,
                    "tens" => Connective::Tens,
                    "prec" => Connective::Prec,
                    "plus" => Connective::Plus,
                    "with" => Connective::With,
                    _ => {
                        self.pos -= 1;
                        return self.err(format!("unknown connective `{op}`"));
                    }
                };
                let b = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Formula::bin(c, a, b))
            }
            Some(Tok::Ident(name)) => {
                match self.peek_at(1) {
                    Some(Tok::Bang) | Some(Tok::Query) => {
                        let send = self.peek_at(1) == Some(&Tok::Bang);
                        self.pos += 2;
                        let y = self.ident()?;
                        return Ok(if send { Formula::Send(name, y) } else { Formula::Recv(name, y) });
                    }
                    _ => {}
                }
                let q = match name.as_str() {
                    "one" => {
                        self.pos += 1;
                        return Ok(Formula::One);
                    }
                    "all" => Quantifier::All,
                    "ex" => Quantifier::Ex,
                    "new" => Quantifier::New,
                    "ya" => Quantifier::Ya,
                    _ => return self.err(format!("unexpected `{name}`")),
                };
                self.pos += 1;
                let x = self.ident()?;
                self.expect(Tok::Dot, "`.` after bound variable")?;
                let body = self.formula()?;
                Ok(Formula::Quant(q, x, Box::new(body)))
            }
            _ => self.err("expected a formula"),
        }
    }

    fn judgement(&mut self) -> Result<Judgement, SyntaxError> {
        let mut store = Store::new();
        if self.peek() != Some(&Tok::Turnstile) {
            loop {
                let at = self.offset();
                let fl = match self.ident()?.as_str() {
                    "nu" => Flavor::Nu,
                    "ya" => Flavor::Ya,
                    other => {
                        return Err(SyntaxError::Parse { pos: at, msg: format!("expected `nu` or `ya`, found `{other}`") })
                    }
                };
                let x = self.ident()?;
                store.insert(fl, &x)?;
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Turnstile, "`|-`")?;
        let mut sequent = vec![self.formula()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            sequent.push(self.formula()?);
        }
        if self.pos != self.toks.len() {
            return self.err("trailing input");
        }
        Ok(Judgement { store, sequent })
    }
}

/// Parses a single formula (no cleanliness requirement).
pub fn parse_formula(text: &str) -> Result<Formula, SyntaxError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, end: text.len() };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(f)
}

/// Parses and validates a judgement (clean, store variables free).
pub fn parse_judgement(text: &str) -> Result<Judgement, SyntaxError> {
    let j = parse_judgement_unchecked(text)?;
    j.validate()?;
    Ok(j)
}

pub fn parse_judgement_unchecked(text: &str) -> Result<Judgement, SyntaxError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, end: text.len() };
    p.judgement()
}

impl FromStr for Formula {
    type Err = SyntaxError;
    fn from_str(s: &str) -> Result<Formula, SyntaxError> {
        parse_formula(s)
    }
}

// ---------------------------------------------------------------- occurrence index

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    One,
    Send(Var, Var),
    Recv(Var, Var),
    Bin(Connective),
    Quant(Quantifier, Var),
}

#[derive(Clone, Debug)]
pub struct NodeInfo {
    pub path: Path,
    pub parent: Option<NodeId>,
    /// One past the last node of this subtree.
    pub end: NodeId,
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
    /// Free variables of the subtree, read as a formula on its own.
    pub free: BTreeSet<Var>,
    pub formula: Formula,
}

/// A judgement together with a preorder index of all its formula nodes.
#[derive(Clone, Debug)]
pub struct Context {
    pub judgement: Judgement,
    pub nodes: Vec<NodeInfo>,
    pub roots: Vec<NodeId>,
    binders: BTreeMap<Var, NodeId>,
}

impl Context {
    pub fn new(judgement: Judgement) -> Context {
        let mut nodes = Vec::new();
        let mut roots = Vec::new();
        for (i, f) in judgement.sequent.iter().enumerate() {
            roots.push(nodes.len());
            index_node(f, Path::root(i), None, &mut nodes);
        }
        let mut binders = BTreeMap::new();
        for (id, n) in nodes.iter().enumerate() {
            if let NodeKind::Quant(_, x) = &n.kind {
                binders.entry(x.clone()).or_insert(id);
            }
        }
        Context { judgement, nodes, roots, binders }
    }

    pub fn parse(text: &str) -> Result<Context, SyntaxError> {
        Ok(Context::new(parse_judgement(text)?))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &NodeInfo {
        &self.nodes[id]
    }

    pub fn id_of(&self, p: &Path) -> Result<NodeId, SyntaxError> {
        let bad = || SyntaxError::BadPath(p.to_string());
        let mut id = *self.roots.get(p.index).ok_or_else(bad)?;
        for s in &p.steps {
            let n = &self.nodes[id];
            id = match (&n.kind, s) {
                (NodeKind::Bin(_), Step::L) => n.children[0],
                (NodeKind::Bin(_), Step::R) => n.children[1],
                (NodeKind::Quant(..), Step::D) => n.children[0],
                _ => return Err(bad()),
            };
        }
        Ok(id)
    }

    pub fn path_of(&self, id: NodeId) -> &Path {
        &self.nodes[id].path
    }

    /// True when `inner` lies in the subtree rooted at `outer` (inclusive).
    pub fn inside(&self, inner: NodeId, outer: NodeId) -> bool {
        outer <= inner && inner < self.nodes[outer].end
    }

    pub fn overlaps(&self, a: NodeId, b: NodeId) -> bool {
        self.inside(a, b) || self.inside(b, a)
    }

    /// The quantifier node binding `x`, if any.
    pub fn binder(&self, x: &str) -> Option<NodeId> {
        self.binders.get(x).copied()
    }

    pub fn is_root(&self, id: NodeId) -> bool {
        self.nodes[id].parent.is_none()
    }

    /// Which root formula a node belongs to.
    pub fn root_of(&self, id: NodeId) -> NodeId {
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            cur = p;
        }
        cur
    }
}

fn index_node(f: &Formula, path: Path, parent: Option<NodeId>, nodes: &mut Vec<NodeInfo>) -> NodeId {
    let id = nodes.len();
    let kind = match f {
        Formula::One => NodeKind::One,
        Formula::Send(x, y) => NodeKind::Send(x.clone(), y.clone()),
        Formula::Recv(x, y) => NodeKind::Recv(x.clone(), y.clone()),
        Formula::Bin(c, _, _) => NodeKind::Bin(*c),
        Formula::Quant(q, x, _) => NodeKind::Quant(*q, x.clone()),
    };
    nodes.push(NodeInfo {
        path: path.clone(),
        parent,
        end: id + 1,
        kind,
        children: Vec::new(),
        free: f.free_vars(),
        formula: f.clone(),
    });
    let children = match f {
        Formula::Bin(_, a, b) => vec![
            index_node(a, path.child(Step::L), Some(id), nodes),
            index_node(b, path.child(Step::R), Some(id), nodes),
        ],
        Formula::Quant(_, _, a) => vec![index_node(a, path.child(Step::D), Some(id), nodes)],
        _ => Vec::new(),
    };
    let end = nodes.len();
    nodes[id].children = children;
    nodes[id].end = end;
    id
}
