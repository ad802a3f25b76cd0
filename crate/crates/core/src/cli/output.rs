//! Output file formats.
//!
//! Rank-field CSV: header `alpha,beta,omega,rank,in_region`, one row per
//! grid point, floats in shortest round-trip form, booleans as
//! `true`/`false`.
//!
//! JSON documents carry `schema_version`, `command`, `version` (the library
//! version) and `config` (the fully resolved run configuration), followed by
//! command-specific fields.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::garch::ParamVector;
use crate::scope::RankField;

pub const SCHEMA_VERSION: u32 = 1;
pub const RANK_FIELD_HEADER: &str = "alpha,beta,omega,rank,in_region";

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub rank: usize,
    pub in_region: bool,
}

impl RankRow {
    fn from_point(theta: &ParamVector, rank: usize, in_region: bool) -> Result<Self> {
        let (a, b) = (theta.alphas(), theta.betas());
        if a.len() != 1 || b.len() != 1 {
            return Err(Error::config(
                "grid",
                format!("rank-field CSV needs GARCH(1,1) points, got dimension {}", theta.dim()),
            ));
        }
        Ok(RankRow {
            alpha: a[0],
            beta: b[0],
            omega: theta.omega(),
            rank,
            in_region,
        })
    }
}

pub fn rank_rows(field: &RankField) -> Result<Vec<RankRow>> {
    field
        .points
        .iter()
        .map(|p| RankRow::from_point(&p.theta, p.rank, p.in_region))
        .collect()
}

pub fn format_rank_csv(rows: &[RankRow]) -> String {
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(RANK_FIELD_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.alpha, r.beta, r.omega, r.rank, r.in_region));
    }
    out
}

pub fn parse_rank_csv(text: &str, path: &str) -> Result<Vec<RankRow>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(RANK_FIELD_HEADER) {
        return Err(err(1, format!("expected header `{RANK_FIELD_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 2;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(err(line_no, format!("expected 5 fields, found {}", cells.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|e| err(line_no, format!("`{s}`: {e}")));
            Ok(RankRow {
                alpha: float(cells[0])?,
                beta: float(cells[1])?,
                omega: float(cells[2])?,
                rank: cells[3].parse().map_err(|e| err(line_no, format!("`{}`: {e}", cells[3])))?,
                in_region: cells[4].parse().map_err(|e| err(line_no, format!("`{}`: {e}", cells[4])))?,
            })
        })
        .collect()
}

/// Header fields shared by every JSON output.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, B: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub version: &'a str,
    pub config: &'a C,
    #[serde(flatten)]
    pub body: B,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
