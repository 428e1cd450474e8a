//! Two coalescence orders from the same net sequentialize to locally equivalent derivations.

mod common;

use pilnet::bridge::{sequentialize, translate_to_conflict_net};
use pilnet::calculus::Derivation;
use pilnet::coalescence::{applicable_steps, apply_recorded, check_greedy, Step, Trace, Verdict};
use pilnet::equivalence::{equivalent_bounded, Equivalence, Mode};
use pilnet::structure::{isomorphic, PreStructure};

fn corpus() -> Vec<(String, Derivation)> {
    common::derivations()
}

fn finish(p: &PreStructure, first: &Step, seed: u64) -> Derivation {
    let (q, entry) = apply_recorded(p, first).unwrap();
    let Verdict::Accepted(rest) = check_greedy(&q, seed) else { panic!("stuck after {first:?}") };
    let mut entries = vec![entry];
    entries.extend(rest.entries);
    sequentialize(p, &Trace { entries }).unwrap()
}

#[test]
fn initial_critical_pairs_converge() {
    let mut lengths = std::collections::BTreeMap::new();
    for (name, d) in corpus() {
        let p = translate_to_conflict_net(&d).unwrap();
        let steps: Vec<Step> = applicable_steps(&p).into_iter().filter(|s| !s.kind.is_reshape()).collect();
        for (i, a) in steps.iter().enumerate() {
            for b in &steps[i + 1..] {
                let (da, db) = (finish(&p, a, 0), finish(&p, b, 0));
                for e in [&da, &db] {
                    assert!(isomorphic(&translate_to_conflict_net(e).unwrap(), &p).unwrap(), "{name}");
                }
                match equivalent_bounded(&da, &db, Mode::Local, 20_000).unwrap() {
                    Equivalence::Equivalent(path) => {
                        *lengths.entry(path.len()).or_insert(0) += 1;
                    }
                    Equivalence::NotFound => panic!("{name}: {a:?} / {b:?}"),
                }
            }
        }
    }
    eprintln!("{lengths:?}");
}

#[test]
fn overlapping_pairs_differ_by_one_row() {
    let seen = common::critical::explore(&corpus(), 400).unwrap();
    for (k, v) in &seen {
        eprintln!("{k:?} {v}");
    }
    let covered = common::critical::families(&seen);
    for f in common::critical::FAMILIES {
        assert!(covered.contains(f), "family {f} not exercised; covered {covered:?}");
    }
}
