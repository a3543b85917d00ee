//! JSON documents emitted by the commands. The layout is described in
//! `docs/report-schema.json`.

use diffpass_core::conditions::{ConditionKind, ConditionReport, Orientation};
use serde_json::{json, Value};

use crate::spec::grid_text;

/// Storage normalization stated in every report.
pub const STORAGE_CONVENTION: &str = "dS = 1/2 dx' M(x) dx";

/// Non-finite numbers become `null`.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| num(*x)).collect())
}

pub fn condition(name: &str, r: &ConditionReport, table: Option<&str>) -> Value {
    let (lo, hi) = r.value_range();
    json!({
        "name": name,
        "condition_id": r.condition_id,
        "kind": match r.kind {
            ConditionKind::Inequality => "inequality",
            ConditionKind::Equality => "equality",
        },
        "orientation": match r.orientation {
            Orientation::AtMost => "value <= tolerance",
            Orientation::AtLeast => "value >= -tolerance",
        },
        "tolerance": num(r.tolerance),
        "grid": {
            "spec": grid_text(&r.grid),
            "lower": nums(r.grid.lower()),
            "upper": nums(r.grid.upper()),
            "counts": r.grid.counts(),
            "u_samples": r.grid.u_samples().iter().map(|u| nums(u)).collect::<Vec<_>>(),
        },
        "n_points": r.n_points(),
        "n_failures": r.failures.len(),
        "max_margin": num(r.max_margin),
        "worst_point": nums(&r.worst_point),
        "worst_u": r.worst_u.as_deref().map(nums),
        "worst_value": num(r.worst_value),
        "min_value": num(lo),
        "max_value": num(hi),
        "verdict": r.verdict.as_str(),
        "failures": r.failures.iter().map(|(x, e)| json!({"x": nums(x), "error": e.to_string()})).collect::<Vec<_>>(),
        "table": table,
    })
}
