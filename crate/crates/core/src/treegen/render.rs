use std::fmt::Write;

use serde_json::{json, Value};

use super::{MetaSort, Telescope, TreeNode};

fn quantifier_text(node: &TreeNode) -> String {
    let TreeNode::Quantify {
        meta,
        sort,
        solution,
    } = node
    else {
        unreachable!()
    };
    let name = match sort {
        MetaSort::Mono => format!("t{}", meta.0),
        MetaSort::Poly => format!("s{}", meta.0),
    };
    match solution {
        Some(s) => format!("exists {name} := {s}"),
        None => format!("exists {name}"),
    }
}

/// One-line rendering of a non-branch node.
pub(crate) fn node_text(node: &TreeNode) -> String {
    match node {
        TreeNode::Quantify { .. } => quantifier_text(node),
        TreeNode::Constr(c) => c.to_string(),
        TreeNode::Branch(children) => format!("branch/{}", children.len()),
    }
}

/// Indented text, one node per line; each branch child opens with a `|`
/// line and is indented two spaces further.
pub fn render_text(tree: &Telescope) -> String {
    fn go(t: &Telescope, indent: usize, out: &mut String) {
        let pad = " ".repeat(indent);
        for node in &t.nodes {
            match node {
                TreeNode::Branch(children) => {
                    for child in children {
                        let _ = writeln!(out, "{pad}|");
                        go(child, indent + 2, out);
                    }
                }
                other => {
                    let _ = writeln!(out, "{pad}{}", node_text(other));
                }
            }
        }
    }
    let mut out = String::new();
    if let Some(ctx) = &tree.prefix {
        let _ = writeln!(out, "ctx {{{ctx}}}");
    }
    go(tree, 0, &mut out);
    out
}

pub fn to_json(tree: &Telescope) -> Value {
    fn node(n: &TreeNode) -> Value {
        match n {
            TreeNode::Quantify {
                meta,
                sort,
                solution,
            } => json!({
                "kind": "quantify",
                "meta": meta.0,
                "sort": match sort { MetaSort::Mono => "mono", MetaSort::Poly => "poly" },
                "solution": solution.as_ref().map(|s| s.to_string()),
            }),
            TreeNode::Constr(c) => json!({
                "kind": "constraint",
                "constraint": c.kind(),
                "text": c.to_string(),
            }),
            TreeNode::Branch(children) => json!({
                "kind": "branch",
                "children": children.iter().map(tele).collect::<Vec<_>>(),
            }),
        }
    }
    fn tele(t: &Telescope) -> Value {
        json!({
            "context": t.prefix.as_ref().map(|c| {
                c.entries
                    .iter()
                    .map(|(n, s)| json!({ "name": n.as_str(), "scheme": s.to_string() }))
                    .collect::<Vec<_>>()
            }),
            "nodes": t.nodes.iter().map(node).collect::<Vec<_>>(),
        })
    }
    tele(tree)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph: consecutive nodes are chained, branch nodes fan out
/// to the first node of each child.
pub fn render_dot(tree: &Telescope) -> String {
    struct Dot {
        out: String,
        next: usize,
    }
    impl Dot {
        fn add(&mut self, label: &str, shape: &str) -> usize {
            let id = self.next;
            self.next += 1;
            let _ = writeln!(
                self.out,
                "  n{id} [label=\"{}\", shape={shape}];",
                escape(label)
            );
            id
        }
        fn edge(&mut self, from: usize, to: usize, label: Option<usize>) {
            match label {
                Some(l) => {
                    let _ = writeln!(self.out, "  n{from} -> n{to} [label=\"{l}\"];");
                }
                None => {
                    let _ = writeln!(self.out, "  n{from} -> n{to};");
                }
            }
        }
        fn tele(&mut self, t: &Telescope, mut prev: Option<usize>, first_label: Option<usize>) {
            let mut label = first_label;
            for n in &t.nodes {
                let id = match n {
                    TreeNode::Branch(_) => self.add("|", "diamond"),
                    other => self.add(&node_text(other), "box"),
                };
                if let Some(p) = prev {
                    self.edge(p, id, label.take());
                }
                if let TreeNode::Branch(children) = n {
                    for (i, child) in children.iter().enumerate() {
                        self.tele(child, Some(id), Some(i));
                    }
                }
                prev = Some(id);
            }
        }
    }
    let mut dot = Dot {
        out: String::from("digraph tree {\n"),
        next: 0,
    };
    let root = tree
        .prefix
        .as_ref()
        .map(|ctx| dot.add(&format!("ctx {{{ctx}}}"), "ellipse"));
    dot.tele(tree, root, None);
    dot.out.push_str("}\n");
    dot.out
}
