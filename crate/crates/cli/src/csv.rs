//! Trajectory and per-point tables. Numbers are written with 17 significant
//! digits so values round-trip exactly.

use std::fmt::Write as _;

use diffpass_core::conditions::ConditionReport;
use diffpass_core::simulate::Trajectory;

fn push_num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn names(out: &mut Vec<String>, prefix: &str, k: usize) {
    out.extend((1..=k).map(|i| format!("{prefix}{i}")));
}

/// `t,x1..xn,u1..um,y1..yp,dx1..dxn,du1..dum,dy1..dyp,dS`
pub fn trajectory_header(n: usize, m: usize, p: usize) -> String {
    let mut cols = vec!["t".to_string()];
    names(&mut cols, "x", n);
    names(&mut cols, "u", m);
    names(&mut cols, "y", p);
    names(&mut cols, "dx", n);
    names(&mut cols, "du", m);
    names(&mut cols, "dy", p);
    cols.push("dS".into());
    cols.join(",")
}

/// Full trajectory table; `stride` keeps every `stride`-th row (the last
/// row is always kept).
pub fn trajectory_csv_strided(tr: &Trajectory, stride: usize) -> String {
    let stride = stride.max(1);
    let (n, m, p) = (
        tr.x.first().map_or(0, Vec::len),
        tr.u.first().map_or(0, Vec::len),
        tr.y.first().map_or(0, Vec::len),
    );
    let mut out = trajectory_header(n, m, p);
    out.push('\n');
    let last = tr.len().saturating_sub(1);
    for k in (0..tr.len()).filter(|k| k % stride == 0 || *k == last) {
        push_num(&mut out, tr.times[k]);
        for block in [&tr.x[k], &tr.u[k], &tr.y[k], &tr.dx[k], &tr.du[k], &tr.dy[k]] {
            for v in block.iter() {
                out.push(',');
                push_num(&mut out, *v);
            }
        }
        out.push(',');
        push_num(&mut out, tr.ds[k]);
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(tr: &Trajectory) -> String {
    trajectory_csv_strided(tr, 1)
}

/// Per-point sidecar of a scan: `x1..xn,margin,value`. Margins are
/// normalized so that the condition holds when `margin <= tolerance`.
pub fn report_table(r: &ConditionReport) -> String {
    let n = r.grid.dim();
    let mut cols = Vec::new();
    names(&mut cols, "x", n);
    cols.push("margin".into());
    cols.push("value".into());
    let mut out = cols.join(",");
    out.push('\n');
    let margins = if r.margins.is_empty() { &r.residuals } else { &r.margins };
    for ((x, m), v) in r.sample_points.iter().zip(margins).zip(&r.values) {
        for xi in x {
            push_num(&mut out, *xi);
            out.push(',');
        }
        push_num(&mut out, *m);
        out.push(',');
        push_num(&mut out, *v);
        out.push('\n');
    }
    out
}
