//! Overlapping coalescence steps explored from every reachable state of the corpus nets.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use pilnet::bridge::{sequentialize, translate_to_conflict_net};
use pilnet::calculus::{Derivation, SkRule, Skeleton};
use pilnet::coalescence::{applicable_steps, apply_recorded, check_greedy, replay, Step, StepKind, Trace, TraceEntry, Verdict};
use pilnet::equivalence::{equivalent_bounded, Equivalence, Mode};
use pilnet::structure::{isomorphic, isomorphic_up_to_witnesses, PreStructure};

/// Counts per (first kind, second kind, permutation classes joining the two results).
pub type Seen = BTreeMap<(String, String, Vec<String>), usize>;

/// Families every exploration must reach, as sorted `a/b` pairs of step kinds.
pub const FAMILIES: [&str; 16] = [
    "par/prec", "plus/prec", "prec/prec", "prec/tens", "exists/prec", "forall/prec", "load/prec", "prec/unit",
    "pop/prec", "exists/load", "exists/pop", "exists/forall", "forall/pop", "exists/with", "forall/with", "par/with",
];

/// The step of `q` matching `s` by kind and principal formulas.
fn same_step(q: &PreStructure, s: &Step) -> Option<Step> {
    applicable_steps(q).into_iter().find(|t| t.kind == s.kind && t.principal == s.principal && !s.principal.is_empty())
}

/// Sorted arities of the prec rules; local rows never change them.
fn prec_arities(d: &Derivation) -> Vec<usize> {
    fn walk(s: &Skeleton, out: &mut Vec<usize>) {
        if let SkRule::Prec(os) = &s.rule {
            out.push(os.len());
        }
        s.premises.iter().for_each(|p| walk(p, out));
    }
    let mut out = vec![];
    walk(&d.skeleton(), &mut out);
    out.sort();
    out
}

fn complete(p: &PreStructure, prefix: &[TraceEntry], at: &PreStructure, first: &Step) -> Option<Derivation> {
    let (q, e) = apply_recorded(at, first).unwrap();
    let Verdict::Accepted(rest) = check_greedy(&q, 0) else { return None };
    let mut entries = prefix.to_vec();
    entries.push(e);
    entries.extend(rest.entries);
    Some(sequentialize(p, &Trace { entries }).unwrap())
}

fn is_mix(s: &Step) -> bool {
    s.kind == StepKind::Prec && s.principal.is_empty()
}

fn mixes(entries: &[TraceEntry]) -> bool {
    entries.iter().any(|e| is_mix(&e.step))
}

/// Applies `first` then `second` at `at`; returns the state and the two recorded entries.
fn both(at: &PreStructure, first: &Step, second: &Step) -> Option<(PreStructure, Vec<TraceEntry>)> {
    let (q, e1) = apply_recorded(at, first).ok()?;
    let s2 = same_step(&q, second)?;
    let (r, e2) = apply_recorded(&q, &s2).ok()?;
    Some((r, vec![e1, e2]))
}

/// Both orders of the pair, finished with the same greedy continuation.
fn run_pair(p: &PreStructure, prefix: &[TraceEntry], at: &PreStructure, a: &Step, b: &Step) -> Option<(Derivation, Derivation)> {
    let (ra, ea) = both(at, a, b)?;
    let (rb, eb) = both(at, b, a)?;
    let Verdict::Accepted(rest) = check_greedy(&ra, 0) else { return None };
    replay(&rb, &rest).ok()?;
    let der = |mid: Vec<TraceEntry>| {
        let mut entries = prefix.to_vec();
        entries.extend(mid);
        entries.extend(rest.entries.iter().cloned());
        sequentialize(p, &Trace { entries }).ok()
    };
    Some((der(ea)?, der(eb)?))
}

/// Reachable states with the trace leading to them, breadth first, at most `cap` of them.
fn reachable(p: &PreStructure, cap: usize) -> Vec<(PreStructure, Vec<TraceEntry>)> {
    let mut seen = HashSet::new();
    let mut out = vec![(p.clone(), vec![])];
    let mut i = 0;
    while i < out.len() && out.len() < cap {
        let (st, path) = out[i].clone();
        i += 1;
        for s in applicable_steps(&st) {
            let Ok((q, e)) = apply_recorded(&st, &s) else { continue };
            if seen.insert(q.canonical_form()) {
                let mut path = path.clone();
                path.push(e);
                out.push((q, path));
            }
        }
    }
    out
}

fn family(k: &str) -> &str {
    match k {
        "plus_left" | "plus_right" => "plus",
        other => other,
    }
}

pub fn families(seen: &Seen) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (a, b, _) in seen.keys() {
        let (x, y) = (family(a), family(b));
        out.insert(if x <= y { format!("{x}/{y}") } else { format!("{y}/{x}") });
    }
    out
}

/// Runs every pair of overlapping steps both ways and checks the two derivations meet.
pub fn explore(corpus: &[(String, Derivation)], cap: usize) -> Result<Seen, String> {
    let mut seen = Seen::new();
    for (name, d) in corpus {
        let p = translate_to_conflict_net(d).map_err(|e| format!("{name}: {e}"))?;
        for (st, prefix) in reachable(&p, cap) {
            let steps: Vec<Step> = applicable_steps(&st).into_iter().filter(|s| !s.kind.is_reshape()).collect();
            for (i, a) in steps.iter().enumerate() {
                for b in &steps[i + 1..] {
                    if !a.targets.iter().any(|t| b.targets.contains(t)) {
                        continue;
                    }
                    let (x, y, direct) = match run_pair(&p, &prefix, &st, a, b) {
                        Some((x, y)) => (x, y, true),
                        None => match (complete(&p, &prefix, &st, a), complete(&p, &prefix, &st, b)) {
                            (Some(x), Some(y)) => (x, y, false),
                            _ => {
                                // Only an early mix can lose a coalescent net.
                                if !(is_mix(a) || is_mix(b) || mixes(&prefix)) {
                                    return Err(format!("{name}: stuck after {a:?} / {b:?}"));
                                }
                                *seen.entry(("mix".into(), "stuck".into(), vec![])).or_insert(0) += 1;
                                continue;
                            }
                        },
                    };
                    for e in [&x, &y] {
                        let back = translate_to_conflict_net(e).map_err(|e| format!("{name}: {e}"))?;
                        if !isomorphic(&back, &p).unwrap() && !isomorphic_up_to_witnesses(&back, &p).unwrap() {
                            return Err(format!("{name}: sequentialization lost the net"));
                        }
                    }
                    let classes: Vec<String> = match equivalent_bounded(&x, &y, Mode::Local, 20_000).unwrap() {
                        Equivalence::Equivalent(path) => path.iter().map(|q| q.class.name().to_string()).collect(),
                        // Only a regrouping of one multi-formula prec rule may escape the rows.
                        Equivalence::NotFound if prec_arities(&x) != prec_arities(&y) => vec!["prec_regrouping".into()],
                        Equivalence::NotFound => return Err(format!("{name}: {a:?} / {b:?} not equivalent\n{x}\n{y}")),
                    };
                    if direct && classes.len() > 1 {
                        return Err(format!("{name}: {a:?} then {b:?} needs {classes:?}"));
                    }
                    let key = (
                        a.kind.name().to_string(),
                        b.kind.name().to_string(),
                        if direct { classes } else { vec!["completed".into()] },
                    );
                    *seen.entry(key).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(seen)
}
