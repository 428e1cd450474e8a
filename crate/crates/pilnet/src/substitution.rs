//! Variable-to-variable substitutions, dualizers and witness-map validity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structure::{Link, PreStructure, VarRef};
use crate::syntax::{Context, Formula, Judgement, NodeKind, Quantifier, Var};

/// A finite map on variables, read as the identity outside its domain.
/// Identity bindings are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "BTreeMap<Var, Var>", into = "BTreeMap<Var, Var>")]
pub struct Substitution {
    map: BTreeMap<Var, Var>,
}

impl From<BTreeMap<Var, Var>> for Substitution {
    fn from(map: BTreeMap<Var, Var>) -> Substitution {
        Substitution { map: map.into_iter().filter(|(a, b)| a != b).collect() }
    }
}

impl From<Substitution> for BTreeMap<Var, Var> {
    fn from(s: Substitution) -> BTreeMap<Var, Var> {
        s.map
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubstError {
    #[error("substitutions disagree on `{0}`")]
    Incoherent(Var),
    #[error("substituting `{var}` would be captured by a binder of `{binder}`")]
    Capture { var: Var, binder: Var },
}

impl Substitution {
    pub fn empty() -> Substitution {
        Substitution::default()
    }

    pub fn single(from: &str, to: &str) -> Substitution {
        let mut s = Substitution::empty();
        s.insert(from, to);
        s
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Substitution {
        let mut s = Substitution::empty();
        for (a, b) in pairs {
            s.insert(a, b);
        }
        s
    }

    pub fn insert(&mut self, from: &str, to: &str) {
        if from == to {
            self.map.remove(from);
        } else {
            self.map.insert(from.into(), to.into());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.map.keys()
    }

    pub fn in_domain(&self, x: &str) -> bool {
        self.map.contains_key(x)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Var)> {
        self.map.iter()
    }

    pub fn get<'a>(&'a self, x: &'a str) -> &'a str {
        self.map.get(x).map(|s| s.as_str()).unwrap_or(x)
    }

    pub fn apply_var(&self, x: &str) -> Var {
        self.get(x).to_string()
    }

    /// Simultaneous capture-avoiding-or-failing substitution of free occurrences.
    pub fn apply_formula(&self, f: &Formula) -> Result<Formula, SubstError> {
        if self.is_empty() {
            return Ok(f.clone());
        }
        self.apply_under(f, &mut Vec::new())
    }

    fn apply_under(&self, f: &Formula, bound: &mut Vec<Var>) -> Result<Formula, SubstError> {
        let map = |v: &Var, bound: &Vec<Var>| -> Result<Var, SubstError> {
            if bound.contains(v) {
                return Ok(v.clone());
            }
            let w = self.apply_var(v);
            if &w != v && bound.contains(&w) {
                return Err(SubstError::Capture { var: v.clone(), binder: w });
            }
            Ok(w)
        };
        Ok(match f {
            Formula::One => Formula::One,
            Formula::Send(x, y) => Formula::Send(map(x, bound)?, map(y, bound)?),
            Formula::Recv(x, y) => Formula::Recv(map(x, bound)?, map(y, bound)?),
            Formula::Bin(c, a, b) => Formula::bin(*c, self.apply_under(a, bound)?, self.apply_under(b, bound)?),
            Formula::Quant(q, x, a) => {
                bound.push(x.clone());
                let body = self.apply_under(a, bound);
                bound.pop();
                Formula::Quant(*q, x.clone(), Box::new(body?))
            }
        })
    }

    /// Applies to the sequent and renames store entries pointwise.
    pub fn apply_judgement(&self, j: &Judgement) -> Result<Judgement, SubstError> {
        let sequent = j.sequent.iter().map(|f| self.apply_formula(f)).collect::<Result<Vec<_>, _>>()?;
        let store = j.store.iter().map(|(v, fl)| (fl, self.apply_var(v))).collect();
        Ok(Judgement { store, sequent })
    }

    /// `compose(s, t)(v) = s(t(v))`.
    pub fn compose(s: &Substitution, t: &Substitution) -> Substitution {
        let mut out = Substitution::empty();
        for (v, w) in t.iter() {
            out.insert(v, s.get(w));
        }
        for (v, w) in s.iter() {
            if !t.in_domain(v) {
                out.insert(v, w);
            }
        }
        out
    }

    /// Removes `x` from the domain.
    pub fn restrict(&self, x: &str) -> Substitution {
        let mut out = self.clone();
        out.map.remove(x);
        out
    }

    pub fn coherent(s: &Substitution, t: &Substitution) -> bool {
        s.iter().all(|(v, w)| t.map.get(v).is_none_or(|u| u == w))
    }

    /// Union of two coherent maps.
    pub fn join(s: &Substitution, t: &Substitution) -> Result<Substitution, SubstError> {
        let mut out = s.clone();
        for (v, w) in t.iter() {
            match s.map.get(v) {
                Some(u) if u != w => return Err(SubstError::Incoherent(v.clone())),
                _ => {
                    out.map.insert(v.clone(), w.clone());
                }
            }
        }
        Ok(out)
    }

    /// The partition of variables this map identifies, as sorted classes of size at least two.
    pub fn kernel(&self) -> Vec<Vec<Var>> {
        let mut classes: BTreeMap<&str, BTreeSet<Var>> = BTreeMap::new();
        for (v, w) in self.iter() {
            let c = classes.entry(w.as_str()).or_default();
            c.insert(v.clone());
            c.insert(w.clone());
        }
        let mut out: Vec<Vec<Var>> = classes.into_values().map(|c| c.into_iter().collect()).collect();
        out.sort();
        out
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(v, w)| format!("{v}->{w}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("leaf {leaf}: {clause}")]
pub struct WitnessViolation {
    pub leaf: u32,
    pub clause: String,
}

/// Checks the dualizer domain constraint of a link.
pub fn check_dualizer_domain(ctx: &Context, link: &Link, s: &Substitution) -> Result<(), String> {
    match link {
        Link::Nominal { nu, ya } => {
            let dom: Vec<&Var> = s.domain().collect();
            match dom.as_slice() {
                [] => Ok(()),
                [v] if *v == nu.var(ctx) || *v == ya.var(ctx) => Ok(()),
                _ => Err(format!("dualizer {s} of a nominal link must bind one of its two variables")),
            }
        }
        Link::Sequent(elems) => {
            let occurring: BTreeSet<&Var> = elems.iter().flat_map(|e| ctx.node(*e).free.iter()).collect();
            for v in s.domain() {
                if !occurring.contains(v) {
                    return Err(format!("dualizer binds `{v}` which does not occur in the link"));
                }
                match ctx.binder(v).map(|b| &ctx.node(b).kind) {
                    Some(NodeKind::Quant(Quantifier::Ex | Quantifier::New | Quantifier::Ya, _)) => {}
                    _ => return Err(format!("dualizer binds `{v}` which is not bound by ex, new or ya")),
                }
            }
            Ok(())
        }
    }
}

/// Validity of a witness map on an axiomatic linking.
pub fn validate_witness_map(p: &PreStructure) -> Result<(), WitnessViolation> {
    let ctx = &p.context;
    for (id, link) in &p.links {
        let s = p.witnesses.get(id).cloned().unwrap_or_default();
        let fail = |clause: String| WitnessViolation { leaf: *id, clause };
        check_dualizer_domain(ctx, link, &s).map_err(fail)?;
        match link {
            Link::Nominal { nu, ya } => {
                if s.get(nu.var(ctx)) != s.get(ya.var(ctx)) {
                    return Err(fail(format!("dualizer {s} does not identify the nominal variables")));
                }
            }
            Link::Sequent(elems) => {
                let kinds: Vec<&NodeKind> = elems.iter().map(|e| &ctx.node(*e).kind).collect();
                match kinds.as_slice() {
                    [NodeKind::One] => {
                        if !s.is_empty() {
                            return Err(fail("dualizer of a unit link must be empty".into()));
                        }
                    }
                    [NodeKind::Send(x, y), NodeKind::Recv(z, t)] | [NodeKind::Recv(z, t), NodeKind::Send(x, y)] => {
                        if s.get(x) != s.get(z) || s.get(y) != s.get(t) {
                            return Err(fail(format!("dualizer {s} does not make the atoms dual")));
                        }
                    }
                    _ => return Err(fail("link is not axiomatic".into())),
                }
            }
        }
    }
    Ok(())
}

impl VarRef {
    pub fn var<'a>(&'a self, ctx: &'a Context) -> &'a Var {
        match self {
            VarRef::Binder(id) => match &ctx.node(*id).kind {
                NodeKind::Quant(_, x) => x,
                _ => unreachable!("binder reference to a non-quantifier node"),
            },
            VarRef::Store(_, x) => x,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(pairs: &[(&str, &str)]) -> Substitution {
        Substitution::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn apply_examples() {
        let f: Formula = "y?z".parse().unwrap();
        assert_eq!(s(&[("y", "x")]).apply_formula(&f).unwrap().to_string(), "x?z");
        let g: Formula = "(x!v tens y?v)".parse().unwrap();
        assert_eq!(Substitution::empty().apply_formula(&g).unwrap(), g);
        let h = s(&[("x", "c"), ("y", "c")]).apply_formula(&g).unwrap();
        assert_eq!(h.to_string(), "(c!v tens c?v)");
    }

    #[test]
    fn apply_respects_binders_and_detects_capture() {
        let f: Formula = "(x!y par all x. x?y)".parse().unwrap();
        let g = s(&[("x", "c")]).apply_formula(&f).unwrap();
        assert_eq!(g.to_string(), "(c!y par all x. x?y)");
        let bad: Formula = "all z. x!z".parse().unwrap();
        assert!(matches!(s(&[("x", "z")]).apply_formula(&bad), Err(SubstError::Capture { .. })));
    }

    #[test]
    fn compose_examples() {
        let c = Substitution::compose(&s(&[("y", "x")]), &s(&[("z", "y")]));
        assert_eq!(c, s(&[("z", "x"), ("y", "x")]));
        let t = s(&[("a", "b")]);
        assert_eq!(Substitution::compose(&Substitution::empty(), &t), t);
        assert_eq!(Substitution::compose(&t, &Substitution::empty()), t);
        let yx = s(&[("y", "x")]);
        assert_eq!(Substitution::compose(&yx, &yx), yx);
    }

    #[test]
    fn compose_drops_identities() {
        let c = Substitution::compose(&s(&[("y", "x")]), &s(&[("x", "y")]));
        assert_eq!(c, s(&[("y", "x")]));
    }

    #[test]
    fn restrict_examples() {
        assert_eq!(s(&[("x", "c"), ("y", "c")]).restrict("x"), s(&[("y", "c")]));
        assert_eq!(Substitution::empty().restrict("x"), Substitution::empty());
        assert_eq!(s(&[("y", "x")]).restrict("z"), s(&[("y", "x")]));
    }

    #[test]
    fn join_examples() {
        assert_eq!(Substitution::join(&s(&[("x", "c")]), &s(&[("y", "c")])).unwrap(), s(&[("x", "c"), ("y", "c")]));
        assert_eq!(
            Substitution::join(&s(&[("x", "c")]), &s(&[("x", "d")])).unwrap_err(),
            SubstError::Incoherent("x".into())
        );
        let a = s(&[("p", "q"), ("r", "q")]);
        assert_eq!(Substitution::join(&a, &a).unwrap(), a);
    }

    #[test]
    fn json_encoding() {
        let a = s(&[("y", "x")]);
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"{"y":"x"}"#);
        let b: Substitution = serde_json::from_str(r#"{"y":"x"}"#).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_ignores_orientation() {
        assert_eq!(s(&[("x", "y")]).kernel(), s(&[("y", "x")]).kernel());
    }
}
