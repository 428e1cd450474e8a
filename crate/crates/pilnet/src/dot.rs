//! Graphviz export for nets, coalescence traces and derivations.

use std::fmt::Write;

use crate::calculus::{rule_name, DNode, Derivation};
use crate::coalescence::{replay, CoalescenceError, Trace};
use crate::structure::{CocoTree, Label, PreStructure};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn tree_nodes(p: &PreStructure, t: &CocoTree, prefix: &str, next: &mut usize, out: &mut String) -> String {
    let id = format!("{prefix}n{next}");
    *next += 1;
    match t {
        CocoTree::Leaf(l) => {
            let mut label = format!("#{l}: {}", p.link(*l).describe(&p.context));
            let sigma = p.dualizer(*l);
            if !sigma.is_empty() {
                label.push_str(&format!("\\n{sigma}"));
            }
            if let Some(st) = p.stores.get(l).filter(|s| !s.is_empty()) {
                label.push_str(&format!("\\nstore {st}"));
            }
            writeln!(out, "  {id} [shape=box, label=\"{}\"];", escape(&label).replace("\\\\n", "\\n")).unwrap();
        }
        CocoTree::Node(label, cs) => {
            let (shape, text) = match label {
                Label::Conc => ("circle", "⌢"),
                Label::Conf => ("diamond", "#"),
            };
            writeln!(out, "  {id} [shape={shape}, label=\"{text}\"];").unwrap();
            for c in cs {
                let cid = tree_nodes(p, c, prefix, next, out);
                writeln!(out, "  {id} -> {cid};").unwrap();
            }
        }
    }
    id
}

fn net_body(p: &PreStructure, prefix: &str) -> String {
    let mut out = String::new();
    tree_nodes(p, &p.tree, prefix, &mut 0, &mut out);
    out
}

/// One graph: `⌢` nodes are circles, `#` nodes diamonds, leaves boxes with content and dualizer.
pub fn net_to_dot(p: &PreStructure) -> String {
    format!("digraph net {{\n  label=\"{}\";\n{}}}\n", escape(&p.context.judgement.to_string()), net_body(p, ""))
}

/// One numbered cluster per state along the trace, each labelled with the step that produced it.
pub fn trace_to_dot(p: &PreStructure, t: &Trace) -> Result<String, CoalescenceError> {
    let states = replay(p, t)?;
    let mut out = String::from("digraph trace {\n  compound=true;\n");
    for (i, s) in states.iter().enumerate() {
        let title = if i == 0 { "0: input".to_string() } else { format!("{i}: {}", t.entries[i - 1].step.describe(&p.context)) };
        writeln!(out, "  subgraph cluster_{i} {{\n  label=\"{}\";", escape(&title)).unwrap();
        out.push_str(&net_body(s, &format!("s{i}_")));
        out.push_str("  }\n");
    }
    for i in 1..states.len() {
        writeln!(out, "  s{}_n0 -> s{i}_n0 [style=dashed, ltail=cluster_{}, lhead=cluster_{i}];", i - 1, i - 1).unwrap();
    }
    out.push_str("}\n");
    Ok(out)
}

fn dnode(d: &DNode, next: &mut usize, out: &mut String) -> String {
    let id = format!("d{next}");
    *next += 1;
    let label = format!("{}\\n{}", escape(&d.conclusion.to_string()), rule_name(&d.conclusion, &d.rule));
    writeln!(out, "  {id} [shape=plaintext, label=\"{label}\"];").unwrap();
    for p in &d.premises {
        let pid = dnode(p, next, out);
        writeln!(out, "  {pid} -> {id};").unwrap();
    }
    id
}

/// Premises point at their conclusion; each node shows its judgement and rule.
pub fn derivation_to_dot(d: &Derivation) -> String {
    let mut out = String::from("digraph derivation {\n  rankdir=BT;\n");
    dnode(&d.root, &mut 0, &mut out);
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalescence::{check_greedy, Verdict};

    fn example() -> PreStructure {
        PreStructure::from_json_str(include_str!("../tests/data/example.net.json")).unwrap()
    }

    fn count_nodes(dot: &str) -> usize {
        dot.lines().filter(|l| l.contains("[shape=")).count()
    }

    #[test]
    fn example_net_graph() {
        let dot = net_to_dot(&example());
        // # root, two ⌢ nodes, four axiom leaves and two nominal leaves.
        assert_eq!(count_nodes(&dot), 9);
        assert_eq!(dot.matches("shape=diamond").count(), 1);
        assert_eq!(dot.matches("shape=circle").count(), 2);
        assert_eq!(dot, net_to_dot(&example()));
    }

    #[test]
    fn trivial_net_is_one_node() {
        let d = Derivation::from_json_str(r#"{"conclusion": "|- one", "rule": "one"}"#).unwrap();
        let p = crate::bridge::translate_to_conflict_net(&d).unwrap();
        assert_eq!(count_nodes(&net_to_dot(&p)), 1);
        assert_eq!(count_nodes(&derivation_to_dot(&d)), 1);
    }

    #[test]
    fn trace_has_one_cluster_per_state() {
        let p = example();
        let Verdict::Accepted(t) = check_greedy(&p, 0) else { panic!() };
        let dot = trace_to_dot(&p, &t).unwrap();
        assert_eq!(dot.matches("subgraph cluster_").count(), t.len() + 1);
    }
}
