//! Random correct nets: derivations composed bottom-up from axioms, realized on their
//! conclusion, checked, and translated.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use pilnet::bridge::translate_to_conflict_net;
use pilnet::calculus::{check_derivation, realize, Derivation, SkRule, Skeleton};
use pilnet::structure::PreStructure;
use pilnet::syntax::{Connective, Context, Formula, Quantifier};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Generated {
    pub derivation: Derivation,
    pub net: PreStructure,
}

/// A formula whose nodes carry tags, so rules can name occurrences before the context exists.
#[derive(Clone, Debug)]
enum Tf {
    Atom(Formula, usize),
    Bin(Connective, Box<Tf>, Box<Tf>, usize),
    Quant(Quantifier, String, Box<Tf>, usize),
}

impl Tf {
    fn tag(&self) -> usize {
        match self {
            Tf::Atom(_, t) | Tf::Bin(.., t) | Tf::Quant(.., t) => *t,
        }
    }

    fn formula(&self) -> Formula {
        match self {
            Tf::Atom(f, _) => f.clone(),
            Tf::Bin(c, a, b, _) => Formula::bin(*c, a.formula(), b.formula()),
            Tf::Quant(q, x, a, _) => Formula::quant(*q, x, a.formula()),
        }
    }

    fn rename(&self, from: &str, to: &str) -> Tf {
        let r = |x: &String| if x == from { to.to_string() } else { x.clone() };
        match self {
            Tf::Atom(Formula::Send(x, y), t) => Tf::Atom(Formula::Send(r(x), r(y)), *t),
            Tf::Atom(Formula::Recv(x, y), t) => Tf::Atom(Formula::Recv(r(x), r(y)), *t),
            Tf::Atom(f, t) => Tf::Atom(f.clone(), *t),
            Tf::Bin(c, a, b, t) => Tf::Bin(*c, Box::new(a.rename(from, to)), Box::new(b.rename(from, to)), *t),
            Tf::Quant(q, x, a, t) => Tf::Quant(*q, x.clone(), Box::new(a.rename(from, to)), *t),
        }
    }

    fn retag(&self, next: &mut usize, map: &mut HashMap<usize, usize>) -> Tf {
        *next += 1;
        map.insert(self.tag(), *next);
        let t = *next;
        match self {
            Tf::Atom(f, _) => Tf::Atom(f.clone(), t),
            Tf::Bin(c, a, b, _) => Tf::Bin(*c, Box::new(a.retag(next, map)), Box::new(b.retag(next, map)), t),
            Tf::Quant(q, x, a, _) => Tf::Quant(*q, x.clone(), Box::new(a.retag(next, map)), t),
        }
    }

    fn binders(&self, out: &mut Vec<String>) {
        match self {
            Tf::Bin(_, a, b, _) => {
                a.binders(out);
                b.binders(out);
            }
            Tf::Quant(_, x, a, _) => {
                out.push(x.clone());
                a.binders(out);
            }
            Tf::Atom(..) => {}
        }
    }

    /// Renames a variable everywhere, binders included.
    fn rename_all(&self, from: &str, to: &str) -> Tf {
        match self {
            Tf::Quant(q, x, a, t) => {
                let x = if x == from { to.to_string() } else { x.clone() };
                Tf::Quant(*q, x, Box::new(a.rename_all(from, to)), *t)
            }
            Tf::Bin(c, a, b, t) => Tf::Bin(*c, Box::new(a.rename_all(from, to)), Box::new(b.rename_all(from, to)), *t),
            atom => atom.rename(from, to),
        }
    }

    fn paths(&self, here: String, out: &mut HashMap<usize, String>) {
        out.insert(self.tag(), here.clone());
        match self {
            Tf::Bin(_, a, b, _) => {
                a.paths(format!("{here}.L"), out);
                b.paths(format!("{here}.R"), out);
            }
            Tf::Quant(_, _, a, _) => a.paths(format!("{here}.D"), out),
            Tf::Atom(..) => {}
        }
    }
}

fn map_rule(r: &SkRule, f: &dyn Fn(usize) -> usize, w: &dyn Fn(&str) -> String) -> SkRule {
    match r {
        SkRule::Ax(a, b) => SkRule::Ax(f(*a), f(*b)),
        SkRule::One(o) => SkRule::One(f(*o)),
        SkRule::Par(o) => SkRule::Par(f(*o)),
        SkRule::Plus(o, s) => SkRule::Plus(f(*o), *s),
        SkRule::With(o) => SkRule::With(f(*o)),
        SkRule::Forall(o) => SkRule::Forall(f(*o)),
        SkRule::Exists(o, x) => SkRule::Exists(f(*o), w(x)),
        SkRule::Unit(o) => SkRule::Unit(f(*o)),
        SkRule::Load(o) => SkRule::Load(f(*o)),
        SkRule::Pop(o, x) => SkRule::Pop(f(*o), w(x)),
        SkRule::Tens(o) => SkRule::Tens(f(*o)),
        SkRule::Prec(os) => SkRule::Prec(os.iter().map(|o| f(*o)).collect()),
    }
}

fn map_sk(sk: &Skeleton, f: &dyn Fn(usize) -> usize, w: &dyn Fn(&str) -> String) -> Skeleton {
    Skeleton::new(map_rule(&sk.rule, f, w), sk.premises.iter().map(|p| map_sk(p, f, w)).collect())
}

fn rename_sk(sk: &Skeleton, from: &str, to: &str) -> Skeleton {
    map_sk(sk, &|t| t, &|x| if x == from { to.to_string() } else { x.to_string() })
}

#[derive(Clone)]
struct Piece {
    fs: Vec<Tf>,
    sk: Skeleton,
    leaves: usize,
}

impl Piece {
    fn size(&self) -> usize {
        self.fs.iter().map(|f| f.formula().size()).sum()
    }

    /// Free names occurring in exactly the given formulas.
    fn names_only_in(&self, ix: &[usize]) -> Vec<String> {
        let free: Vec<BTreeSet<String>> = self.fs.iter().map(|f| f.formula().free_vars()).collect();
        let inside: BTreeSet<&String> = ix.iter().flat_map(|i| free[*i].iter()).collect();
        inside
            .into_iter()
            .filter(|n| ix.iter().all(|i| free[*i].contains(*n)))
            .filter(|n| (0..free.len()).filter(|i| !ix.contains(i)).all(|i| !free[i].contains(*n)))
            .cloned()
            .collect()
    }
}

struct Gen {
    rng: ChaCha8Rng,
    tag: usize,
    name: usize,
}

impl Gen {
    fn tag(&mut self) -> usize {
        self.tag += 1;
        self.tag
    }

    fn name(&mut self, stem: &str) -> String {
        self.name += 1;
        format!("{stem}{}", self.name)
    }

    fn axiom(&mut self) -> Piece {
        let (c, m) = (self.name("c"), self.name("m"));
        let (s, r) = (self.tag(), self.tag());
        let mut fs = vec![Tf::Atom(Formula::send(&c, &m), s), Tf::Atom(Formula::recv(&c, &m), r)];
        fs.shuffle(&mut self.rng);
        Piece { fs, sk: Skeleton::new(SkRule::Ax(s, r), vec![]), leaves: 1 }
    }

    fn take(&mut self, p: &mut Piece) -> Tf {
        let i = self.rng.gen_range(0..p.fs.len());
        p.fs.remove(i)
    }

    fn binary(&mut self, mut a: Piece, mut b: Piece) -> Piece {
        let (x, y) = (self.take(&mut a), self.take(&mut b));
        let t = self.tag();
        let (c, rule) = if self.rng.gen_bool(0.6) {
            (Connective::Tens, SkRule::Tens(t))
        } else {
            (Connective::Prec, SkRule::Prec(vec![t]))
        };
        let mut fs = [a.fs, b.fs].concat();
        fs.push(Tf::Bin(c, Box::new(x), Box::new(y), t));
        Piece { fs, sk: Skeleton::new(rule, vec![a.sk, b.sk]), leaves: a.leaves + b.leaves }
    }

    fn unary(&mut self, mut p: Piece) -> Piece {
        let t = self.tag();
        match self.rng.gen_range(0..6) {
            0 if p.fs.len() >= 2 => {
                let (x, y) = (self.take(&mut p), self.take(&mut p));
                p.fs.push(Tf::Bin(Connective::Par, Box::new(x), Box::new(y), t));
                p.sk = Skeleton::new(SkRule::Par(t), vec![p.sk]);
            }
            1 => {
                let x = self.take(&mut p);
                let (j, k) = (self.name("j"), self.name("k"));
                let junk = Tf::Atom(Formula::send(&j, &k), self.tag());
                let side = self.rng.gen_range(0..2);
                let (l, r) = if side == 0 { (x, junk) } else { (junk, x) };
                p.fs.push(Tf::Bin(Connective::Plus, Box::new(l), Box::new(r), t));
                p.sk = Skeleton::new(SkRule::Plus(t, side), vec![p.sk]);
            }
            2 if p.leaves <= 3 => {
                let x = self.take(&mut p);
                let mut map = HashMap::new();
                let mut y = x.retag(&mut self.tag, &mut map);
                let mut copy = map_sk(&p.sk, &|t| map.get(&t).copied().unwrap_or(t), &|w| w.to_string());
                let mut bound = Vec::new();
                x.binders(&mut bound);
                for b in bound {
                    let v = self.name("v");
                    y = y.rename_all(&b, &v);
                    copy = rename_sk(&copy, &b, &v);
                }
                p.fs.push(Tf::Bin(Connective::With, Box::new(x), Box::new(y), t));
                p.sk = Skeleton::new(SkRule::With(t), vec![p.sk, copy]);
                p.leaves *= 2;
            }
            3 => {
                let i = self.rng.gen_range(0..p.fs.len());
                let Some(n) = p.names_only_in(&[i]).choose(&mut self.rng).cloned() else { return p };
                let x = self.name("x");
                let body = p.fs.remove(i).rename(&n, &x);
                p.fs.push(Tf::Quant(Quantifier::All, x.clone(), Box::new(body), t));
                p.sk = Skeleton::new(SkRule::Forall(t), vec![rename_sk(&p.sk, &n, &x)]);
            }
            4 => {
                let i = self.rng.gen_range(0..p.fs.len());
                let names: Vec<String> = p.fs[i].formula().free_vars().into_iter().collect();
                let Some(n) = names.choose(&mut self.rng).cloned() else { return p };
                let y = self.name("y");
                let body = p.fs.remove(i).rename(&n, &y);
                p.fs.push(Tf::Quant(Quantifier::Ex, y, Box::new(body), t));
                p.sk = Skeleton::new(SkRule::Exists(t, n), vec![p.sk]);
            }
            5 if p.fs.len() >= 2 => {
                let mut ix: Vec<usize> = (0..p.fs.len()).collect();
                ix.shuffle(&mut self.rng);
                let (i, j) = (ix[0], ix[1]);
                let Some(n) = p.names_only_in(&[i, j]).choose(&mut self.rng).cloned() else { return p };
                let (x, y) = (self.name("x"), self.name("y"));
                let (a, b) = (p.fs[i].rename(&n, &x), p.fs[j].rename(&n, &y));
                p.fs.retain(|f| f.tag() != a.tag() && f.tag() != b.tag());
                let u = self.tag();
                p.fs.push(Tf::Quant(Quantifier::New, x.clone(), Box::new(a), t));
                p.fs.push(Tf::Quant(Quantifier::Ya, y, Box::new(b), u));
                let inner = Skeleton::new(SkRule::Pop(u, x.clone()), vec![rename_sk(&p.sk, &n, &x)]);
                p.sk = Skeleton::new(SkRule::Load(t), vec![inner]);
            }
            _ => {}
        }
        p
    }
}

/// A correct net whose conclusion has at least `size` formula-tree nodes.
pub fn net(size: usize, seed: u64) -> Generated {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), tag: 0, name: 0 };
    let mut pool: Vec<Piece> = (0..size.div_ceil(40).max(1)).map(|_| g.axiom()).collect();
    loop {
        let total: usize = pool.iter().map(Piece::size).sum();
        if pool.len() == 1 && total >= size {
            break;
        }
        if pool.len() == 1 && g.rng.gen_bool(0.1) {
            pool.push(g.axiom());
        } else if pool.len() > 1 && g.rng.gen_bool(0.4) {
            pool.shuffle(&mut g.rng);
            let (a, b) = (pool.pop().unwrap(), pool.pop().unwrap());
            let c = g.binary(a, b);
            pool.push(c);
        } else {
            let i = g.rng.gen_range(0..pool.len());
            let p = pool.swap_remove(i);
            let q = g.unary(p);
            pool.push(q);
        }
    }
    let piece = pool.pop().unwrap();
    let text: Vec<String> = piece.fs.iter().map(|f| f.formula().to_string()).collect();
    let ctx = Arc::new(Context::parse(&format!("|- {}", text.join(", "))).expect("generated judgement parses"));
    let mut paths = HashMap::new();
    for (i, f) in piece.fs.iter().enumerate() {
        f.paths(i.to_string(), &mut paths);
    }
    let ids: HashMap<usize, usize> =
        paths.iter().map(|(t, p)| (*t, ctx.id_of(&p.parse().unwrap()).unwrap())).collect();
    let sk = map_sk(&piece.sk, &|t| ids[&t], &|w| w.to_string());
    let derivation = realize(&ctx, &sk).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", ctx.judgement));
    check_derivation(&derivation).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    let net = translate_to_conflict_net(&derivation).unwrap();
    Generated { derivation, net }
}
