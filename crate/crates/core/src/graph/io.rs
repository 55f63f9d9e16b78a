//! Line-oriented graph files:
//!
//! ```text
//! n 4
//! e 0 1
//! e 1 2
//! t 2
//! k 0 leaf
//! ```
//!
//! `n` must come first. Blank lines and `#` comments are ignored.

use super::{Graph, GraphError, NodeKind};
use std::fmt::Write;

fn perr(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        msg: msg.into(),
    }
}

fn num(tok: Option<&str>, line: usize, what: &str) -> Result<usize, GraphError> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| perr(line, format!("invalid {what} '{tok}'")))
}

pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    let mut num_nodes: Option<usize> = None;
    let mut edges = Vec::new();
    let mut target = None;
    let mut kinds = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let tag = toks.next().unwrap_or_default();
        if num_nodes.is_none() && tag != "n" {
            return Err(perr(line, "expected header 'n <num_nodes>'"));
        }
        let n = num_nodes.unwrap_or(0);
        match tag {
            "n" => {
                if num_nodes.is_some() {
                    return Err(perr(line, "duplicate header"));
                }
                num_nodes = Some(num(toks.next(), line, "node count")?);
            }
            "e" => {
                let src = num(toks.next(), line, "edge source")?;
                let dst = num(toks.next(), line, "edge destination")?;
                if src >= n || dst >= n {
                    return Err(perr(line, format!("edge ({src}, {dst}) outside 0..{n}")));
                }
                edges.push((src, dst, line));
            }
            "t" => {
                let t = num(toks.next(), line, "target")?;
                if t >= n {
                    return Err(perr(line, format!("target {t} outside 0..{n}")));
                }
                target = Some(t);
            }
            "k" => {
                let v = num(toks.next(), line, "node")?;
                if v >= n {
                    return Err(perr(line, format!("node {v} outside 0..{n}")));
                }
                let name = toks.next().ok_or_else(|| perr(line, "missing kind"))?;
                let kind = NodeKind::parse(name).ok_or_else(|| perr(line, format!("unknown kind '{name}'")))?;
                kinds.push((v, kind, line));
            }
            other => return Err(perr(line, format!("unknown record '{other}'"))),
        }
        if toks.next().is_some() {
            return Err(perr(line, "trailing tokens"));
        }
    }

    let n = num_nodes.ok_or_else(|| perr(0, "empty graph file"))?;
    let mut seen = std::collections::HashSet::new();
    for &(s, d, line) in &edges {
        if !seen.insert((s, d)) {
            return Err(perr(line, format!("duplicate edge ({s}, {d})")));
        }
    }
    let mut g = Graph::new(n, edges.iter().map(|&(s, d, _)| (s, d)).collect())?;
    for &(v, kind, _) in &kinds {
        g.set_kind(v, kind)?;
    }
    if let Some(t) = target {
        if let Some(&(_, kind, line)) = kinds.iter().rev().find(|(v, _, _)| *v == t) {
            if kind != NodeKind::Root {
                return Err(perr(line, format!("target {t} must have kind root")));
            }
        }
        g.set_target(t)?;
    }
    Ok(g)
}

pub fn write_graph(g: &Graph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n {}", g.num_nodes());
    for &(u, v) in g.edges() {
        let _ = writeln!(s, "e {u} {v}");
    }
    if let Some(t) = g.target() {
        let _ = writeln!(s, "t {t}");
    }
    for (v, k) in g.kinds().iter().enumerate() {
        if *k != NodeKind::Generic {
            let _ = writeln!(s, "k {v} {k}");
        }
    }
    s
}
