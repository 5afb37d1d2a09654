//! Matpower case-file parsing.
//!
//! Only the `baseMVA`, `bus`, `gen` and `branch` tables are read; any other
//! assignment in the file (version string, `gencost`, bus names, ...) is
//! skipped. Tables are returned as raw numeric rows so callers can index
//! them with the column constants in [`col`].

use super::CaseError;

/// Column indices for the standard Matpower v2 tables.
///
/// Only the columns this crate consumes are named; trailing columns are
/// carried along untouched.
pub mod col {
    /// `bus` table: bus number (positive integer label).
    pub const BUS_I: usize = 0;
    /// `bus` table: bus type (1 = PQ, 2 = PV, 3 = reference/slack).
    pub const BUS_TYPE: usize = 1;
    /// `bus` table: real power demand, MW.
    pub const PD: usize = 2;
    /// `bus` table: reactive power demand, MVAr.
    pub const QD: usize = 3;
    /// `bus` table: shunt conductance, MW demanded at V = 1.0 p.u.
    pub const GS: usize = 4;
    /// `bus` table: shunt susceptance, MVAr injected at V = 1.0 p.u.
    pub const BS: usize = 5;
    /// `bus` table: voltage magnitude upper bound, p.u.
    pub const VMAX: usize = 11;
    /// `bus` table: voltage magnitude lower bound, p.u.
    pub const VMIN: usize = 12;

    /// `branch` table: from-bus number.
    pub const F_BUS: usize = 0;
    /// `branch` table: to-bus number.
    pub const T_BUS: usize = 1;
    /// `branch` table: series resistance, p.u.
    pub const BR_R: usize = 2;
    /// `branch` table: series reactance, p.u.
    pub const BR_X: usize = 3;
    /// `branch` table: MVA rating A (0 = unrated).
    pub const RATE_A: usize = 5;
    /// `branch` table: initial status (1 = in service).
    pub const BR_STATUS: usize = 10;

    /// `gen` table: bus number the unit is connected to.
    pub const GEN_BUS: usize = 0;
}

/// Minimum column counts accepted for each required table.
const MIN_BUS_COLS: usize = 13;
const MIN_BRANCH_COLS: usize = 11;
const MIN_GEN_COLS: usize = 10;

/// A Matpower case reduced to its numeric tables.
#[derive(Debug, Clone)]
pub struct RawCase {
    /// System power base, MVA.
    pub base_mva: f64,
    /// Bus table rows; see [`col`] for indices.
    pub bus: Vec<Vec<f64>>,
    /// Generator table rows.
    pub gen: Vec<Vec<f64>>,
    /// Branch table rows.
    pub branch: Vec<Vec<f64>>,
}

/// Parse Matpower case-file text into numeric tables.
///
/// Comments (`%` to end of line), blank lines and `...` continuations are
/// tolerated. A malformed matrix entry reports the 1-based line number it
/// was found on; a missing required table is a structural error naming the
/// first table that was not found.
pub fn parse_case(text: &str) -> Result<RawCase, CaseError> {
    let mut base_mva: Option<f64> = None;
    let mut tables: Vec<(String, Vec<Vec<f64>>)> = Vec::new();

    let mut in_matrix: Option<(String, Vec<Vec<f64>>, Vec<f64>)> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut line = raw_line;
        if let Some(pos) = line.find('%') {
            line = &line[..pos];
        }
        let line = line.replace("...", " ");
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }

        if let Some((_, rows, cur)) = in_matrix.as_mut() {
            let done = consume_matrix_tokens(trimmed, rows, cur, line_no)?;
            if done {
                let (name, rows, _) = in_matrix.take().unwrap();
                tables.push((name, rows));
            }
            continue;
        }

        // Outside a matrix: look for `<ident> = <value>` assignments.
        let Some(eq) = trimmed.find('=') else {
            continue;
        };
        let lhs = trimmed[..eq].trim();
        let rhs = trimmed[eq + 1..].trim();
        let field = lhs.rsplit('.').next().unwrap_or("");
        if field == "baseMVA" {
            let num = rhs.trim_end_matches(';').trim();
            base_mva = Some(num.parse::<f64>().map_err(|_| CaseError::Parse {
                line: line_no,
                message: format!("invalid baseMVA value `{num}`"),
            })?);
        } else if let Some(body) = rhs.strip_prefix('[') {
            let name = field.to_string();
            let mut rows = Vec::new();
            let mut cur = Vec::new();
            if consume_matrix_tokens(body, &mut rows, &mut cur, line_no)? {
                tables.push((name, rows));
            } else {
                in_matrix = Some((name, rows, cur));
            }
        }
        // Any other assignment (version string, gencost, ...) is ignored.
    }

    if let Some((name, ..)) = in_matrix {
        return Err(CaseError::Structure(format!(
            "matrix `{name}` is not terminated by `]`"
        )));
    }

    let take = |name: &str| -> Result<Vec<Vec<f64>>, CaseError> {
        tables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, rows)| rows.clone())
            .ok_or_else(|| CaseError::MissingTable(name.to_string()))
    };

    if base_mva.is_none() {
        return Err(CaseError::MissingTable("baseMVA".to_string()));
    }
    let bus = take("bus")?;
    let gen = take("gen")?;
    let branch = take("branch")?;

    check_width("bus", &bus, MIN_BUS_COLS)?;
    check_width("gen", &gen, MIN_GEN_COLS)?;
    check_width("branch", &branch, MIN_BRANCH_COLS)?;

    Ok(RawCase {
        base_mva: base_mva.unwrap(),
        bus,
        gen,
        branch,
    })
}

fn check_width(name: &str, rows: &[Vec<f64>], min: usize) -> Result<(), CaseError> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() < min {
            return Err(CaseError::Structure(format!(
                "`{name}` row {} has {} columns, expected at least {min}",
                i + 1,
                row.len()
            )));
        }
    }
    Ok(())
}

/// Feed one line's worth of matrix-body text into the row accumulator.
/// Returns true when the closing `]` was seen.
fn consume_matrix_tokens(
    text: &str,
    rows: &mut Vec<Vec<f64>>,
    cur: &mut Vec<f64>,
    line_no: usize,
) -> Result<bool, CaseError> {
    let mut token = String::new();
    let flush = |token: &mut String, cur: &mut Vec<f64>| -> Result<(), CaseError> {
        if token.is_empty() {
            return Ok(());
        }
        let value = token.parse::<f64>().map_err(|_| CaseError::Parse {
            line: line_no,
            message: format!("invalid matrix entry `{token}`"),
        })?;
        cur.push(value);
        token.clear();
        Ok(())
    };

    for ch in text.chars() {
        match ch {
            ']' => {
                flush(&mut token, cur)?;
                if !cur.is_empty() {
                    rows.push(std::mem::take(cur));
                }
                return Ok(true);
            }
            ';' => {
                flush(&mut token, cur)?;
                if !cur.is_empty() {
                    rows.push(std::mem::take(cur));
                }
            }
            c if c.is_whitespace() || c == ',' => flush(&mut token, cur)?,
            c => token.push(c),
        }
    }
    flush(&mut token, cur)?;
    // An unterminated row continues on the next line only if nothing ended
    // it; Matpower rows end with `;`, so a bare line break inside a row is
    // treated as a row break too.
    if !cur.is_empty() {
        rows.push(std::mem::take(cur));
    }
    Ok(false)
}
