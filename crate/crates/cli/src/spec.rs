//! Parsers for command-line argument text: vectors, matrices, grids,
//! input samples and signal channels. Errors carry byte offsets into the
//! argument so they can be shown with a caret.

use diffpass_core::conditions::SampleGrid;
use diffpass_core::simulate::signal::{parse_channels, SignalExpr};
use diffpass_core::Mat;

use crate::error::CliError;

/// Splits on `sep`, yielding each piece with its byte offset in `s`.
fn split_with_offsets(s: &str, sep: char) -> impl Iterator<Item = (usize, &str)> {
    let mut start = 0;
    s.split(sep).map(move |piece| {
        let at = start;
        start += piece.len() + sep.len_utf8();
        (at, piece)
    })
}

fn number(flag: &'static str, input: &str, at: usize, piece: &str) -> Result<f64, CliError> {
    let lead = piece.len() - piece.trim_start().len();
    let text = piece.trim();
    if text.is_empty() {
        return Err(CliError::parse(flag, input, at + lead, "expected a number"));
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::parse(flag, input, at + lead, format!("`{text}` is not a finite number"))),
    }
}

/// Comma-separated numbers.
pub fn vector(flag: &'static str, input: &str) -> Result<Vec<f64>, CliError> {
    vector_at(flag, input, input, 0)
}

fn vector_at(flag: &'static str, input: &str, part: &str, base: usize) -> Result<Vec<f64>, CliError> {
    split_with_offsets(part, ',')
        .map(|(at, piece)| number(flag, input, base + at, piece))
        .collect()
}

/// Vector of length `n`.
pub fn vector_of(flag: &'static str, input: &str, n: usize) -> Result<Vec<f64>, CliError> {
    let v = vector(flag, input)?;
    if v.len() != n {
        return Err(CliError::Usage(format!("{flag}: expected {n} components, got {}", v.len())));
    }
    Ok(v)
}

/// Rows separated by `;`, entries by `,`. A single number `c` stands for
/// `c I`.
pub fn matrix(flag: &'static str, input: &str, n: usize) -> Result<Mat, CliError> {
    let rows: Vec<Vec<f64>> = split_with_offsets(input, ';')
        .map(|(at, row)| vector_at(flag, input, row, at))
        .collect::<Result<_, _>>()?;
    if rows.len() == 1 && rows[0].len() == 1 {
        return Ok(Mat::identity(n).scale(rows[0][0]));
    }
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage(format!("{flag}: expected a scalar or a {n}x{n} matrix")));
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Ok(Mat::from_rows(&refs))
}

/// Input samples: vectors of length `m` separated by `;`.
pub fn u_samples(flag: &'static str, input: &str, m: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let out: Vec<Vec<f64>> = split_with_offsets(input, ';')
        .map(|(at, piece)| vector_at(flag, input, piece, at))
        .collect::<Result<_, _>>()?;
    if let Some(bad) = out.iter().find(|u| u.len() != m) {
        return Err(CliError::Usage(format!("{flag}: samples need {m} components, got {}", bad.len())));
    }
    Ok(out)
}

/// `lo:hi:count` per axis, axes separated by `,`.
pub fn grid(flag: &'static str, input: &str, n: usize) -> Result<SampleGrid, CliError> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut counts = Vec::new();
    for (at, axis) in split_with_offsets(input, ',') {
        let parts: Vec<(usize, &str)> = split_with_offsets(axis, ':').collect();
        if parts.len() != 3 {
            return Err(CliError::parse(flag, input, at, "expected lo:hi:count"));
        }
        lower.push(number(flag, input, at + parts[0].0, parts[0].1)?);
        upper.push(number(flag, input, at + parts[1].0, parts[1].1)?);
        let (c_at, c) = parts[2];
        let count = c
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::parse(flag, input, at + c_at, "count must be a positive integer"))?;
        counts.push(count);
    }
    if lower.len() != n {
        return Err(CliError::Usage(format!("{flag}: expected {n} axes, got {}", lower.len())));
    }
    SampleGrid::new(lower, upper, counts).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

/// Canonical `lo:hi:count` text of a grid.
pub fn grid_text(g: &SampleGrid) -> String {
    (0..g.dim())
        .map(|i| format!("{}:{}:{}", g.lower()[i], g.upper()[i], g.counts()[i]))
        .collect::<Vec<_>>()
        .join(",")
}

/// Comma-separated signal channels, `m` of them.
pub fn signals(flag: &'static str, input: &str, m: usize) -> Result<Vec<SignalExpr>, CliError> {
    let chans = parse_channels(input).map_err(|e| CliError::parse(flag, input, e.offset, e.message))?;
    if chans.len() != m {
        return Err(CliError::Usage(format!("{flag}: expected {m} channels, got {}", chans.len())));
    }
    Ok(chans)
}
