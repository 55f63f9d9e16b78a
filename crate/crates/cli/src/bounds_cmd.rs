use crate::error::{CliError, CliResult};
use crate::list::IntList;
use oversquash::bounds::{bound_table, max_radius, min_hidden_dim, BoundParams};
use std::fmt::Write;

pub enum BoundsQuery {
    Table(Vec<u32>),
    MaxRadius(Vec<u64>),
}

fn to_u32(list: &IntList) -> CliResult<Vec<u32>> {
    list.0
        .iter()
        .map(|&r| u32::try_from(r).map_err(|_| CliError::usage(format!("radius {r} too large"))))
        .collect()
}

pub fn query(table: Option<&IntList>, max_r: bool, d: Option<&IntList>) -> CliResult<BoundsQuery> {
    match (table, max_r) {
        (Some(_), true) => Err(CliError::usage("--table and --max-r are mutually exclusive")),
        (Some(t), false) => Ok(BoundsQuery::Table(to_u32(t)?)),
        (None, true) => d
            .map(|d| BoundsQuery::MaxRadius(d.0.clone()))
            .ok_or_else(|| CliError::usage("--max-r needs --d")),
        (None, false) => Ok(BoundsQuery::Table((2..=12).collect())),
    }
}

/// CSV text for the query.
pub fn run(q: &BoundsQuery, params: &BoundParams) -> CliResult<String> {
    params.validate().map_err(CliError::usage)?;
    let mut out = String::new();
    match q {
        BoundsQuery::Table(radii) => {
            out.push_str("r,min_d\n");
            // Contiguous ranges go through the table helper; anything else per radius.
            let contiguous = radii.windows(2).all(|w| w[1] == w[0] + 1);
            let rows = match (contiguous, radii.first(), radii.last()) {
                (true, Some(&lo), Some(&hi)) => bound_table(lo..=hi, params).map_err(CliError::usage)?,
                _ => radii
                    .iter()
                    .map(|&r| min_hidden_dim(r, params).map(|b| (r, b.value)))
                    .collect::<Result<_, _>>()
                    .map_err(CliError::usage)?,
            };
            for (r, d) in rows {
                let _ = writeln!(out, "{r},{d}");
            }
        }
        BoundsQuery::MaxRadius(dims) => {
            out.push_str("d,max_r\n");
            for &d in dims {
                let res = max_radius(d, params).map_err(CliError::usage)?;
                let _ = writeln!(out, "{d},{}", res.value);
            }
        }
    }
    Ok(out)
}
