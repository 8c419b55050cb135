//! Graphviz rendering of a (stateful) policy.

use crate::model::StatefulPolicy;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// A `digraph` with one node statement per entity and one edge statement
/// per policy edge; stateful edges are drawn with `dir=both`.
pub fn emit(sp: &StatefulPolicy) -> String {
    let mut out = String::from("digraph policy {\n");
    for n in sp.graph().nodes() {
        out.push_str(&format!("  {};\n", quote(n.name())));
    }
    for e in sp.graph().edges() {
        let attr = if sp.stateful().contains(e) {
            " [dir=both]"
        } else {
            ""
        };
        out.push_str(&format!(
            "  {} -> {}{attr};\n",
            quote(e.sender.name()),
            quote(e.receiver.name())
        ));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EdgeSet, PolicyGraph};
    use crate::test_support::*;

    #[test]
    fn empty_graph_has_nodes_only() {
        let sp = StatefulPolicy::stateless(PolicyGraph::empty(entities(&["B", "A"])));
        assert_eq!(emit(&sp), "digraph policy {\n  \"A\";\n  \"B\";\n}\n");
    }

    #[test]
    fn case_study_counts() {
        let sp = StatefulPolicy::new(
            case_study_refined(),
            edges(&[("INET", "WebFrnt"), ("WebApp", "INET")]),
        )
        .unwrap();
        let text = emit(&sp);
        let nodes = text.lines().filter(|l| l.ends_with(';') && !l.contains("->")).count();
        let edge_lines: Vec<&str> = text.lines().filter(|l| l.contains("->")).collect();
        assert_eq!(nodes, 5);
        assert_eq!(edge_lines.len(), 9);
        assert_eq!(edge_lines.iter().filter(|l| l.contains("dir=both")).count(), 2);
        assert!(text.contains("  \"INET\" -> \"WebFrnt\" [dir=both];\n"));
    }

    #[test]
    fn equal_graphs_render_identically() {
        let a = StatefulPolicy::stateless(case_study_refined());
        let es: EdgeSet = case_study_refined().edges().iter().rev().cloned().collect();
        let b = StatefulPolicy::stateless(
            PolicyGraph::new(entities(&["Log", "DB", "WebFrnt", "WebApp", "INET"]), es).unwrap(),
        );
        assert_eq!(emit(&a), emit(&b));
    }

    #[test]
    fn names_are_escaped() {
        let sp = StatefulPolicy::stateless(PolicyGraph::empty(entities(&["a\"b"])));
        assert!(emit(&sp).contains("\"a\\\"b\";"));
    }
}
