//! Rule permutations, bounded equivalence search and the canonicity harness.
//!
//! A permutation names a rule by its derivation path and one of its premises; the
//! premise's rule moves below it. Rewrites act on skeletons, then the result is
//! realized again so splits and stores are recomputed and checked.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{translate_to_conflict_net, translate_to_slice_net};
use crate::calculus::{check_derivation, realize, Derivation, SkRule, Skeleton};
use crate::structure::{isomorphic, isomorphic_up_to_witnesses};
use crate::syntax::{Context, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermClass {
    BinaryBinary,
    UnaryUnary,
    UnaryBinary,
    WithWith,
    WithUnary,
    WithBinary,
}

impl PermClass {
    pub const ALL: [PermClass; 6] = [
        PermClass::BinaryBinary,
        PermClass::UnaryUnary,
        PermClass::UnaryBinary,
        PermClass::WithWith,
        PermClass::WithUnary,
        PermClass::WithBinary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PermClass::BinaryBinary => "binary_binary",
            PermClass::UnaryUnary => "unary_unary",
            PermClass::UnaryBinary => "unary_binary",
            PermClass::WithWith => "with_with",
            PermClass::WithUnary => "with_unary",
            PermClass::WithBinary => "with_binary",
        }
    }

    pub fn from_name(s: &str) -> Option<PermClass> {
        PermClass::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for PermClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Moves the rule of premise `child` of the node at `at` below that node.
///
/// When the lower node is a `&` both premises take part and `child` is 0. `branch`
/// picks the premise of the upper binary rule that receives the lower rule when
/// principal formulas leave it open (mix), or the position of the shared side
/// derivation when merging two binary rules under a `&`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    pub class: PermClass,
    pub at: Vec<usize>,
    pub child: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<usize>,
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at: Vec<String> = self.at.iter().map(|i| i.to_string()).collect();
        write!(f, "{} at root{}{} child {}", self.class, if at.is_empty() { "" } else { "/" }, at.join("/"), self.child)?;
        if let Some(b) = self.branch {
            write!(f, " branch {b}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Local,
    Strong,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EquivalenceError {
    #[error("pattern mismatch: {0}")]
    PatternMismatch(String),
    #[error("dependency violation: {0}")]
    DependencyViolation(String),
    #[error("derivations have different conclusions")]
    ConclusionMismatch,
    #[error("invalid derivation: {0}")]
    InvalidDerivation(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Leaf,
    Unary,
    Binary,
    With,
}

fn kind(r: &SkRule) -> Kind {
    match r {
        SkRule::Ax(..) | SkRule::One(_) => Kind::Leaf,
        SkRule::Tens(_) | SkRule::Prec(_) => Kind::Binary,
        SkRule::With(_) => Kind::With,
        _ => Kind::Unary,
    }
}

/// Occurrences a rule works on in premise `c`.
fn active(ctx: &Context, r: &SkRule, c: usize) -> Vec<NodeId> {
    let kids = |o: &NodeId| ctx.node(*o).children.clone();
    match r {
        SkRule::Plus(o, side) => vec![kids(o)[*side]],
        SkRule::Tens(o) => vec![kids(o)[c]],
        SkRule::Prec(os) => os.iter().map(|o| kids(o)[c]).collect(),
        SkRule::Ax(..) | SkRule::One(_) => vec![],
        SkRule::With(o) => vec![kids(o)[c]],
        r => r.principals().iter().flat_map(kids).collect(),
    }
}

/// The premise of `upper` whose derivation uses every occurrence in `act`.
fn receiving_branch(
    ctx: &Context,
    lower: &SkRule,
    upper: &Skeleton,
    act: &[NodeId],
    fallback: Option<usize>,
) -> Result<usize, EquivalenceError> {
    if act.iter().any(|a| upper.rule.principals().iter().any(|p| ctx.inside(*a, *p))) {
        return Err(EquivalenceError::DependencyViolation(format!(
            "{:?} works on the principal formula of {:?}",
            lower, upper.rule
        )));
    }
    if act.is_empty() {
        return Ok(fallback.unwrap_or(0));
    }
    let hits: Vec<usize> = (0..upper.premises.len())
        .filter(|j| {
            let occ = upper.premises[*j].occurrences();
            act.iter().all(|a| occ.contains(a))
        })
        .collect();
    match hits.as_slice() {
        [j] => Ok(*j),
        _ => Err(EquivalenceError::DependencyViolation(format!(
            "active formulas of {lower:?} are spread over both premises of {:?}",
            upper.rule
        ))),
    }
}

fn mismatch(p: &Permutation, what: &str) -> EquivalenceError {
    EquivalenceError::PatternMismatch(format!("{p}: {what}"))
}

/// Rewrites one skeleton node; also returns the permutation that undoes it.
fn rewrite(ctx: &Context, node: &Skeleton, p: &Permutation) -> Result<(Skeleton, Permutation), EquivalenceError> {
    use Kind::*;
    let r1 = &node.rule;
    let inv = |class, child, branch| Permutation { class, at: p.at.clone(), child, branch };
    let k1 = kind(r1);
    if k1 == With {
        let [a, b] = node.premises.as_slice() else { unreachable!("with is binary") };
        if p.child != 0 {
            return Err(mismatch(p, "a & node is permuted through both premises, use child 0"));
        }
        if kind(&a.rule) != kind(&b.rule) {
            return Err(mismatch(p, "premises of the & end in different kinds of rules"));
        }
        let w1 = |x: Skeleton, y: Skeleton| Skeleton::new(r1.clone(), vec![x, y]);
        return match (p.class, kind(&a.rule)) {
            (PermClass::WithUnary, Unary) => {
                if a.rule != b.rule {
                    return Err(mismatch(p, "the two premises end in different unary rules"));
                }
                let merged = w1(a.premises[0].clone(), b.premises[0].clone());
                Ok((Skeleton::new(a.rule.clone(), vec![merged]), inv(PermClass::WithUnary, 0, None)))
            }
            (PermClass::WithWith, With) => {
                if a.rule != b.rule {
                    return Err(mismatch(p, "the two premises end in different & rules"));
                }
                let left = w1(a.premises[0].clone(), b.premises[0].clone());
                let right = w1(a.premises[1].clone(), b.premises[1].clone());
                Ok((Skeleton::new(a.rule.clone(), vec![left, right]), inv(PermClass::WithWith, 0, None)))
            }
            (PermClass::WithBinary, Binary) => {
                if a.rule != b.rule {
                    return Err(mismatch(p, "the two premises end in different binary rules"));
                }
                let ds: Vec<usize> = match p.branch {
                    Some(d) if d < 2 => vec![d],
                    Some(_) => return Err(mismatch(p, "branch out of range")),
                    None => vec![0, 1],
                };
                let Some(d) = ds.into_iter().find(|d| a.premises[*d] == b.premises[*d]) else {
                    return Err(EquivalenceError::DependencyViolation(
                        "the two binary rules have no common side derivation".into(),
                    ));
                };
                let mut prem = a.premises.clone();
                prem[1 - d] = w1(a.premises[1 - d].clone(), b.premises[1 - d].clone());
                Ok((Skeleton::new(a.rule.clone(), prem), inv(PermClass::WithBinary, 1 - d, None)))
            }
            _ => Err(mismatch(p, "class does not fit the rules at the target")),
        };
    }
    let Some(up) = node.premises.get(p.child) else {
        return Err(mismatch(p, "no such premise"));
    };
    let r2 = &up.rule;
    match (p.class, k1, kind(r2)) {
        (PermClass::UnaryUnary, Unary, Unary) => {
            receiving_branch(ctx, r1, up, &active(ctx, r1, 0), None)?;
            let moved = Skeleton::new(r1.clone(), up.premises.clone());
            Ok((Skeleton::new(r2.clone(), vec![moved]), inv(PermClass::UnaryUnary, 0, None)))
        }
        (PermClass::UnaryBinary, Unary, Binary) => {
            let j = receiving_branch(ctx, r1, up, &active(ctx, r1, 0), None)?;
            let mut prem = up.premises.clone();
            prem[j] = Skeleton::new(r1.clone(), vec![prem[j].clone()]);
            Ok((Skeleton::new(r2.clone(), prem), inv(PermClass::UnaryBinary, j, None)))
        }
        (PermClass::UnaryBinary, Binary, Unary) => {
            receiving_branch(ctx, r2, node, &active(ctx, r2, 0), None)?;
            let mut prem = node.premises.clone();
            prem[p.child] = up.premises[0].clone();
            Ok((Skeleton::new(r2.clone(), vec![Skeleton::new(r1.clone(), prem)]), inv(PermClass::UnaryBinary, 0, None)))
        }
        (PermClass::BinaryBinary, Binary, Binary) => {
            let j = receiving_branch(ctx, r1, up, &active(ctx, r1, p.child), p.branch)?;
            let mut lower = node.premises.clone();
            lower[p.child] = up.premises[j].clone();
            let mut prem = up.premises.clone();
            prem[j] = Skeleton::new(r1.clone(), lower);
            let back = if r2.principals().is_empty() { Some(p.child) } else { None };
            Ok((Skeleton::new(r2.clone(), prem), inv(PermClass::BinaryBinary, j, back)))
        }
        (PermClass::WithUnary, Unary, With) => {
            // Both premises of a & share the context, so only the principal matters.
            let act = active(ctx, r1, 0);
            if act.iter().any(|a| r2.principals().iter().any(|q| ctx.inside(*a, *q))) {
                return Err(EquivalenceError::DependencyViolation(format!(
                    "{r1:?} works on the principal formula of {r2:?}"
                )));
            }
            let copies = up.premises.iter().map(|e| Skeleton::new(r1.clone(), vec![e.clone()])).collect();
            Ok((Skeleton::new(r2.clone(), copies), inv(PermClass::WithUnary, 0, None)))
        }
        (PermClass::WithBinary, Binary, With) => {
            let c = p.child;
            let copies = up
                .premises
                .iter()
                .map(|e| {
                    let mut prem = node.premises.clone();
                    prem[c] = e.clone();
                    Skeleton::new(r1.clone(), prem)
                })
                .collect();
            Ok((Skeleton::new(r2.clone(), copies), inv(PermClass::WithBinary, 0, Some(1 - c))))
        }
        _ => Err(mismatch(p, "class does not fit the rules at the target")),
    }
}

/// Applies a permutation to a skeleton and realizes the result.
fn permute_skeleton(
    ctx: &Arc<Context>,
    sk: &Skeleton,
    p: &Permutation,
) -> Result<(Derivation, Permutation), EquivalenceError> {
    let node = sk.at(&p.at).ok_or_else(|| mismatch(p, "no rule at this path"))?;
    let (new, inverse) = rewrite(ctx, node, p)?;
    let mut whole = sk.clone();
    *whole.at_mut(&p.at).expect("path checked") = new;
    let d = realize(ctx, &whole).map_err(EquivalenceError::DependencyViolation)?;
    check_derivation(&d).map_err(|v| EquivalenceError::DependencyViolation(v.to_string()))?;
    Ok((d, inverse))
}

pub fn permute(d: &Derivation, p: &Permutation) -> Result<Derivation, EquivalenceError> {
    permute_traced(d, p).map(|(d, _)| d)
}

/// Like [`permute`], also returning a permutation that leads back.
pub fn permute_traced(d: &Derivation, p: &Permutation) -> Result<(Derivation, Permutation), EquivalenceError> {
    check_derivation(d).map_err(|v| EquivalenceError::InvalidDerivation(v.to_string()))?;
    permute_skeleton(&d.context, &d.skeleton(), p)
}

/// Whether a permutation leaves the conflict net unchanged.
///
/// Besides the `&`/binary row, moving a pop across a `&` copies its nominal leaf,
/// so it only preserves the slice net.
pub fn is_local(sk: &Skeleton, p: &Permutation) -> bool {
    match p.class {
        PermClass::WithBinary => false,
        PermClass::WithUnary => {
            let Some(n) = sk.at(&p.at) else { return false };
            let unary = if kind(&n.rule) == Kind::With { n.premises.first().map(|q| &q.rule) } else { Some(&n.rule) };
            !matches!(unary, Some(SkRule::Pop(..)))
        }
        _ => true,
    }
}

/// Pattern-level candidates at every node; not all of them apply.
pub fn candidates(sk: &Skeleton) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), sk)];
    while let Some((at, n)) = stack.pop() {
        let perm = |class, child, branch| Permutation { class, at: at.clone(), child, branch };
        match kind(&n.rule) {
            Kind::Leaf => {}
            Kind::Unary => {
                let class = match kind(&n.premises[0].rule) {
                    Kind::Unary => Some(PermClass::UnaryUnary),
                    Kind::Binary => Some(PermClass::UnaryBinary),
                    Kind::With => Some(PermClass::WithUnary),
                    Kind::Leaf => None,
                };
                out.extend(class.map(|c| perm(c, 0, None)));
            }
            Kind::Binary => {
                for (c, q) in n.premises.iter().enumerate() {
                    match kind(&q.rule) {
                        Kind::Unary => out.push(perm(PermClass::UnaryBinary, c, None)),
                        Kind::With => out.push(perm(PermClass::WithBinary, c, None)),
                        Kind::Binary if n.rule.principals().is_empty() => {
                            out.push(perm(PermClass::BinaryBinary, c, Some(0)));
                            out.push(perm(PermClass::BinaryBinary, c, Some(1)));
                        }
                        Kind::Binary => out.push(perm(PermClass::BinaryBinary, c, None)),
                        Kind::Leaf => {}
                    }
                }
            }
            Kind::With => {
                let (a, b) = (&n.premises[0], &n.premises[1]);
                if a.rule == b.rule {
                    match kind(&a.rule) {
                        Kind::Unary => out.push(perm(PermClass::WithUnary, 0, None)),
                        Kind::With => out.push(perm(PermClass::WithWith, 0, None)),
                        Kind::Binary => {
                            for d in 0..2 {
                                if a.premises[d] == b.premises[d] {
                                    out.push(perm(PermClass::WithBinary, 0, Some(d)));
                                }
                            }
                        }
                        Kind::Leaf => {}
                    }
                }
            }
        }
        for (i, q) in n.premises.iter().enumerate() {
            let mut path = at.clone();
            path.push(i);
            stack.push((path, q));
        }
    }
    out.sort_by(|a, b| (&a.at, a.child, a.branch, a.class).cmp(&(&b.at, b.child, b.branch, b.class)));
    out
}

fn allowed(sk: &Skeleton, p: &Permutation, mode: Mode) -> bool {
    mode == Mode::Strong || is_local(sk, p)
}

/// Every permutation that applies to `d` in the given mode.
pub fn applicable(d: &Derivation, mode: Mode) -> Vec<Permutation> {
    let sk = d.skeleton();
    candidates(&sk)
        .into_iter()
        .filter(|p| allowed(&sk, p, mode) && permute_skeleton(&d.context, &sk, p).is_ok())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Equivalence {
    /// Permutations leading from the first derivation to the second.
    Equivalent(Vec<Permutation>),
    /// Inconclusive: the budget ran out or the closure was exhausted without a meeting point.
    NotFound,
}

type Visited = HashMap<Skeleton, Option<(Skeleton, Permutation)>>;

/// Bidirectional breadth-first search over permutation closures; `budget` bounds expanded derivations.
pub fn equivalent_bounded(
    d1: &Derivation,
    d2: &Derivation,
    mode: Mode,
    budget: usize,
) -> Result<Equivalence, EquivalenceError> {
    if d1.context.judgement != d2.context.judgement {
        return Err(EquivalenceError::ConclusionMismatch);
    }
    for d in [d1, d2] {
        check_derivation(d).map_err(|v| EquivalenceError::InvalidDerivation(v.to_string()))?;
    }
    let ctx = &d1.context;
    let (s1, s2) = (d1.skeleton(), d2.skeleton());
    if s1 == s2 {
        return Ok(Equivalence::Equivalent(vec![]));
    }
    // fwd: state -> (parent, step parent->state); bwd: state -> (next, step state->next).
    let mut fwd: Visited = HashMap::from([(s1.clone(), None)]);
    let mut bwd: Visited = HashMap::from([(s2.clone(), None)]);
    let mut qf = VecDeque::from([s1]);
    let mut qb = VecDeque::from([s2]);
    let mut expanded = 0usize;
    while expanded < budget && (!qf.is_empty() || !qb.is_empty()) {
        let forward = qb.is_empty() || (!qf.is_empty() && qf.len() <= qb.len());
        let (queue, mine, other) = if forward { (&mut qf, &mut fwd, &bwd) } else { (&mut qb, &mut bwd, &fwd) };
        let Some(cur) = queue.pop_front() else { continue };
        expanded += 1;
        for p in candidates(&cur) {
            if !allowed(&cur, &p, mode) {
                continue;
            }
            let Ok((d, inverse)) = permute_skeleton(ctx, &cur, &p) else { continue };
            let next = d.skeleton();
            if mine.contains_key(&next) {
                continue;
            }
            let link = if forward { (cur.clone(), p) } else { (cur.clone(), inverse) };
            mine.insert(next.clone(), Some(link));
            if other.contains_key(&next) {
                return Ok(Equivalence::Equivalent(join_paths(&fwd, &bwd, &next)));
            }
            queue.push_back(next);
        }
    }
    Ok(Equivalence::NotFound)
}

fn join_paths(fwd: &Visited, bwd: &Visited, meet: &Skeleton) -> Vec<Permutation> {
    let mut path = Vec::new();
    let mut cur = meet;
    while let Some(Some((parent, p))) = fwd.get(cur) {
        path.push(p.clone());
        cur = parent;
    }
    path.reverse();
    let mut cur = meet;
    while let Some(Some((next, p))) = bwd.get(cur) {
        path.push(p.clone());
        cur = next;
    }
    path
}

// ---------------------------------------------------------------- canonicity harness

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialVerdict {
    /// The net is isomorphic to the original one.
    Preserved,
    /// Isomorphic only after renaming nominal witnesses.
    PreservedUpToWitnesses,
    Mismatch,
    /// No permutation applied to the derivation.
    Stuck,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub mode: Mode,
    pub derivation: usize,
    pub seed: u64,
    pub path: Vec<Permutation>,
    pub verdict: TrialVerdict,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub trials: usize,
    pub preserved: usize,
    pub preserved_up_to_witnesses: usize,
    pub mismatches: usize,
    pub stuck: usize,
    /// Applied permutations per class.
    pub classes: std::collections::BTreeMap<String, usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicityReport {
    pub seed: u64,
    pub local: ModeSummary,
    pub strong: ModeSummary,
    /// Full reproduction data for every trial that did not preserve the net exactly.
    pub counterexamples: Vec<Trial>,
    pub trials: Vec<Trial>,
}

fn trial_seed(seed: u64, index: usize, mode: Mode) -> u64 {
    let m = if mode == Mode::Local { 0 } else { 1 << 63 };
    seed ^ m ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Applies a random sequence of one to six applicable permutations.
pub fn random_walk(d: &Derivation, mode: Mode, seed: u64) -> (Derivation, Vec<Permutation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = rng.gen_range(1..=6);
    let mut cur = d.clone();
    let mut path = Vec::new();
    for _ in 0..steps {
        let sk = cur.skeleton();
        let mut cands: Vec<Permutation> = candidates(&sk).into_iter().filter(|p| allowed(&sk, p, mode)).collect();
        cands.shuffle(&mut rng);
        let next = cands.into_iter().find_map(|p| permute_skeleton(&cur.context, &sk, &p).ok().map(|(d, _)| (d, p)));
        let Some((d, p)) = next else { break };
        cur = d;
        path.push(p);
    }
    (cur, path)
}

fn run_trial(corpus: &[Derivation], eligible: &[usize], index: usize, mode: Mode, seed: u64) -> Trial {
    let which = if eligible.is_empty() { index % corpus.len() } else { eligible[index % eligible.len()] };
    let seed = trial_seed(seed, index, mode);
    let d = &corpus[which];
    let (e, path) = random_walk(d, mode, seed);
    let verdict = if path.is_empty() {
        TrialVerdict::Stuck
    } else {
        let net = |x: &Derivation| match mode {
            Mode::Local => translate_to_conflict_net(x),
            Mode::Strong => translate_to_slice_net(x),
        };
        match (net(d), net(&e)) {
            (Ok(a), Ok(b)) if isomorphic(&a, &b).unwrap_or(false) => TrialVerdict::Preserved,
            (Ok(a), Ok(b)) if isomorphic_up_to_witnesses(&a, &b).unwrap_or(false) => {
                TrialVerdict::PreservedUpToWitnesses
            }
            _ => TrialVerdict::Mismatch,
        }
    };
    Trial { index, mode, derivation: which, seed, path, verdict }
}

/// Runs `trials` local and `trials` mixed random permutation sequences over the corpus.
///
/// Local sequences must keep the conflict net, mixed ones the slice net. Trials are
/// spread over the derivations that admit at least one permutation in the mode.
pub fn canonicity_suite(corpus: &[Derivation], trials: usize, seed: u64) -> CanonicityReport {
    let mut report = CanonicityReport { seed, ..Default::default() };
    if corpus.is_empty() {
        return report;
    }
    let jobs: Vec<(usize, Mode)> =
        [Mode::Local, Mode::Strong].into_iter().flat_map(|m| (0..trials).map(move |i| (i, m))).collect();
    let eligible = |mode| -> Vec<usize> {
        (0..corpus.len()).filter(|i| !applicable(&corpus[*i], mode).is_empty()).collect()
    };
    let (el_local, el_strong) = (eligible(Mode::Local), eligible(Mode::Strong));
    let (el_local, el_strong) = (&el_local, &el_strong);
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8);
    let chunk = jobs.len().div_ceil(workers).max(1);
    let results: Vec<Trial> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|(i, m)| {
                    let el = if *m == Mode::Local { el_local } else { el_strong };
                    run_trial(corpus, el, *i, *m, seed)
                }).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("trial thread")).collect()
    });
    for t in results {
        let sum = if t.mode == Mode::Local { &mut report.local } else { &mut report.strong };
        sum.trials += 1;
        match t.verdict {
            TrialVerdict::Preserved => sum.preserved += 1,
            TrialVerdict::PreservedUpToWitnesses => sum.preserved_up_to_witnesses += 1,
            TrialVerdict::Mismatch => sum.mismatches += 1,
            TrialVerdict::Stuck => sum.stuck += 1,
        }
        for p in &t.path {
            *sum.classes.entry(p.class.name().to_string()).or_default() += 1;
        }
        if t.verdict != TrialVerdict::Preserved && t.verdict != TrialVerdict::Stuck {
            report.counterexamples.push(t.clone());
        }
        report.trials.push(t);
    }
    report
}
