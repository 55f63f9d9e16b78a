//! Dataset files hold one example per line:
//!
//! ```text
//! 2 1 perm:3,0,2,1
//! 2 0 perm:1,0,3,2 chain:4
//! ```
//!
//! `depth root_count perm:<labels of leaves 0..2^depth>`, plus a trailing
//! `chain:<len>` for chain-control examples. Graphs are rebuilt from the
//! identity fields.

use super::{DataError, Dataset, TreeMatchExample};
use std::fmt::Write;

pub fn write_dataset(ds: &Dataset) -> String {
    let mut s = String::new();
    for e in &ds.examples {
        let labels: Vec<String> = e.leaf_labels().iter().map(usize::to_string).collect();
        let _ = write!(s, "{} {} perm:{}", e.depth(), e.root_count(), labels.join(","));
        if e.chain_len() > 0 {
            let _ = write!(s, " chain:{}", e.chain_len());
        }
        s.push('\n');
    }
    s
}

fn parse_line(line: usize, text: &str) -> Result<TreeMatchExample, DataError> {
    let err = |msg: String| DataError::Parse { line, msg };
    let mut toks = text.split_whitespace();
    let mut field = |name: &str| toks.next().ok_or_else(|| err(format!("missing {name}")));
    let depth: u32 = field("depth")?.parse().map_err(|_| err("invalid depth".into()))?;
    let root_count: usize = field("root_count")?
        .parse()
        .map_err(|_| err("invalid root_count".into()))?;
    let perm = field("perm")?
        .strip_prefix("perm:")
        .ok_or_else(|| err("expected perm:<labels>".into()))?;
    let labels = perm
        .split(',')
        .map(|t| t.parse::<usize>().map_err(|_| err(format!("invalid label '{t}'"))))
        .collect::<Result<Vec<_>, _>>()?;
    let chain_len = match toks.next() {
        None => 0,
        Some(t) => t
            .strip_prefix("chain:")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(format!("unexpected token '{t}'")))?,
    };
    if let Some(t) = toks.next() {
        return Err(err(format!("unexpected token '{t}'")));
    }
    TreeMatchExample::new(depth, labels, root_count, chain_len).map_err(|e| match e {
        DataError::Parse { msg, .. } => err(msg),
        other => err(other.to_string()),
    })
}

/// Parses a dataset file; all lines must share depth and chain length.
pub fn parse_dataset(text: &str) -> Result<Dataset, DataError> {
    let mut examples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let e = parse_line(i + 1, t)?;
        if let Some(first) = examples.first() {
            let first: &TreeMatchExample = first;
            if (first.depth(), first.chain_len()) != (e.depth(), e.chain_len()) {
                return Err(DataError::Parse {
                    line: i + 1,
                    msg: "depth/chain differs from earlier lines".into(),
                });
            }
        }
        examples.push(e);
    }
    let (depth, chain_len) = examples.first().map_or((1, 0), |e| (e.depth(), e.chain_len()));
    Ok(Dataset {
        depth,
        chain_len,
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborsmatch::{generate_chain_dataset, generate_dataset};

    #[test]
    fn round_trips() {
        for ds in [generate_dataset(3, 50, 1).unwrap(), generate_chain_dataset(4, 20, 2).unwrap()] {
            let text = write_dataset(&ds);
            assert_eq!(parse_dataset(&text).unwrap(), ds);
        }
    }

    #[test]
    fn line_format_is_exact() {
        let e = TreeMatchExample::new(2, vec![3, 0, 2, 1], 1, 0).unwrap();
        let ds = Dataset {
            depth: 2,
            chain_len: 0,
            examples: vec![e],
        };
        assert_eq!(write_dataset(&ds), "2 1 perm:3,0,2,1\n");
    }

    #[test]
    fn rejects_bad_lines() {
        for (text, line) in [
            ("2 1 perm:3,0,2\n", 1),
            ("2 1 perm:3,0,2,1\n2 4 perm:3,0,2,1\n", 2),
            ("2 1 perm:0,0,2,1\n", 1),
            ("2 1 3,0,2,1\n", 1),
            ("2 1 perm:3,0,2,1 chain:x\n", 1),
            ("2 1 perm:3,0,2,1\n3 1 perm:3,0,2,1,4,5,6,7\n", 2),
        ] {
            match parse_dataset(text) {
                Err(DataError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
